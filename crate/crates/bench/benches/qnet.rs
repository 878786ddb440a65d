use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use room_agent_core::dqn::{td_loss, Trainer};
use room_agent_core::memory::AgentMemory;
use room_agent_core::seed::{self, Stream};
use room_agent_core::{AgentVariant, Capacities, ExperimentConfig, TrainConfig};

const BATCH: usize = 128;

/// A trainer at the full-scale env with a replay buffer of random-action
/// transitions at capacity 32.
fn warm_trainer() -> Trainer {
    let cfg = ExperimentConfig::from_preset("desk.env").expect("preset");
    let train = TrainConfig {
        replay_capacity: 4 * BATCH,
        warm_start: 4 * BATCH,
        ..cfg.train
    };
    let mut t = Trainer::new(&cfg.env, None, AgentVariant::Scratch, Capacities::split(32), &train, 0)
        .expect("trainer");
    t.warm_start().expect("warm start");
    t
}

fn benches(c: &mut Criterion) {
    let trainer = warm_trainer();
    let mut rng = seed::rng(0, Stream::Replay, 0);
    let batch = trainer.replay().sample(BATCH, &mut rng);
    let states: Vec<&AgentMemory> = batch.iter().map(|t| &t.state).collect();
    let learner = trainer.learner();

    c.bench_function("q_forward_single", |b| {
        b.iter(|| learner.q_values(states[0]).unwrap())
    });
    c.bench_function("q_forward_batch128", |b| {
        b.iter(|| learner.online.forward(&learner.vocab, &states).unwrap())
    });
    c.bench_function("td_loss_backward_batch128", |b| {
        b.iter_batched(
            || learner.online.clone(),
            |mut online| {
                td_loss(&batch, &mut online, &learner.target, &learner.vocab, learner.gamma).unwrap()
            },
            BatchSize::LargeInput,
        )
    });
    c.bench_function("learner_update_batch128", |b| {
        b.iter_batched(
            || learner.clone(),
            |mut l| l.update(&batch).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

criterion_group! {
    name = qnet;
    config = Criterion::default().sample_size(10);
    targets = benches
}
criterion_main!(qnet);
