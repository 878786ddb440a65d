//! A two-state deterministic MDP encoded as memory states.
//!
//! The two states differ only in the short-term observation. "Forget" and
//! "store" are the two distinct actions; both store actions share the store
//! dynamics so every Q output has a defined target. From `s0`, storing pays 1
//! and stays; forgetting pays 0 and moves to `s1`. From `s1` it is reversed.

use std::sync::Arc;

use room_agent_core::dqn::{Learner, ReplayBuffer, TrainConfig, Transition};
use room_agent_core::memory::{Action, AgentMemory, Quadruple};
use room_agent_core::qnet::{QNetworkParams, Vocabulary};
use room_agent_core::seed::{self, Stream};

pub const TOLERANCE: f64 = 1e-2;

pub fn state(location: &str) -> AgentMemory {
    let mut m = AgentMemory::new(1, 1, 1);
    m.short_term
        .observe(Quadruple::new("Ann's cup", location, 0))
        .unwrap();
    m
}

fn is_store(a: Action) -> bool {
    a != Action::Forget
}

/// `(reward, next state)` for state index `s` and action `a`.
pub fn dynamics(s: usize, a: Action) -> (u32, usize) {
    match (s, is_store(a)) {
        (0, true) => (1, 0),
        (0, false) => (0, 1),
        (_, true) => (0, 1),
        (_, false) => (1, 0),
    }
}

/// Optimal Q-values by value iteration to machine precision.
pub fn analytic_q(gamma: f64) -> [[f64; 3]; 2] {
    let mut q = [[0.0; 3]; 2];
    for _ in 0..10_000 {
        let v = [
            q[0].iter().copied().fold(f64::MIN, f64::max),
            q[1].iter().copied().fold(f64::MIN, f64::max),
        ];
        let mut next = [[0.0; 3]; 2];
        for s in 0..2 {
            for a in Action::ALL {
                let (r, s2) = dynamics(s, a);
                next[s][a.index()] = f64::from(r) + gamma * v[s2];
            }
        }
        if next == q {
            break;
        }
        q = next;
    }
    q
}

pub fn transitions() -> Vec<Transition> {
    let states = [state("desk"), state("sink")];
    let mut out = Vec::new();
    for s in 0..2 {
        for a in Action::ALL {
            let (reward, s2) = dynamics(s, a);
            out.push(Transition {
                state: states[s].clone(),
                action: a,
                reward,
                next_state: states[s2].clone(),
                done: false,
            });
        }
    }
    out
}

/// Train on the MDP with the given budget (`epochs x steps_per_epoch`
/// optimizer steps of `batch_size` uniformly replayed transitions) and return
/// the learned Q-values per state.
pub fn learn(config: &TrainConfig, steps_per_epoch: usize, seed: u64) -> [[f64; 3]; 2] {
    let vocab = Arc::new(Vocabulary::new(
        vec!["Ann".into()],
        vec!["cup".into()],
        vec!["desk".into(), "sink".into()],
    ));
    let online = QNetworkParams::new(config.dims, &vocab, &mut seed::rng(seed, Stream::Init, 0));
    let mut learner = Learner::new(vocab, online, config);
    let mut replay = ReplayBuffer::new(config.replay_capacity).unwrap();
    for t in transitions() {
        replay.push(t);
    }
    let mut rng = seed::rng(seed, Stream::Replay, 0);
    for _ in 0..config.epochs * steps_per_epoch {
        let batch = replay.sample(config.batch_size, &mut rng);
        learner.update(&batch).unwrap();
    }
    [
        learner.q_values(&state("desk")).unwrap(),
        learner.q_values(&state("sink")).unwrap(),
    ]
}

pub fn max_abs_error(a: &[[f64; 3]; 2], b: &[[f64; 3]; 2]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
