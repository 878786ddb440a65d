//! Deep Q-learning of the memory-management policy.
//!
//! One optimizer step per environment step; one epoch is one episode. The
//! replay buffer persists across epochs as a FIFO ring.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::des::human_names;
use crate::env::{EnvConfig, Observation, RoomEnv};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::memory::{Action, AgentMemory, Question};
use crate::nn::{huber, Adam, AdamConfig};
use crate::policy::{
    act_and_answer, evaluate_stream, fresh_memory, AgentVariant, Capacities, GreedyQ,
};
use crate::qnet::{greedy_action, Checkpoint, QNetDims, QNetworkParams, Vocabulary, N_ACTIONS};
use crate::seed::{self, Stream};

/// `(s, a, r, s', done)` over symbolic memory snapshots. `s` is the memory
/// with the new observation in short-term; `s'` is the next such state, or
/// the post-action memory when the episode ended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: AgentMemory,
    pub action: Action,
    pub reward: u32,
    pub next_state: AgentMemory,
    pub done: bool,
}

#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Append, evicting the oldest transition when full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// `n` indices drawn uniformly with replacement.
    pub fn sample<'a>(&'a self, n: usize, rng: &mut impl Rng) -> Vec<&'a Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| &self.items[rng.gen_range(0..self.items.len())])
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub warm_start: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_last_step: usize,
    pub gamma: f64,
    pub lr: f64,
    pub sync_every: usize,
    pub eval_iterations: usize,
    pub runs: usize,
    pub dims: QNetDims,
}

impl TrainConfig {
    pub fn paper() -> Self {
        Self {
            epochs: 16,
            batch_size: 1024,
            replay_capacity: 1024 * 128,
            warm_start: 1024 * 128,
            epsilon_start: 1.0,
            epsilon_end: 0.0,
            epsilon_last_step: 128 * 16,
            gamma: 0.65,
            lr: 0.001,
            sync_every: 10,
            eval_iterations: 10,
            runs: 5,
            dims: QNetDims::paper(),
        }
    }

    /// Small enough to train in minutes on one CPU.
    pub fn desk() -> Self {
        Self {
            epochs: 4,
            batch_size: 128,
            replay_capacity: 16 * 128,
            warm_start: 16 * 128,
            epsilon_last_step: 128 * 4,
            ..Self::paper()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("replay_capacity", self.replay_capacity),
            ("warm_start", self.warm_start),
            ("epsilon_last_step", self.epsilon_last_step),
            ("sync_every", self.sync_every),
            ("eval_iterations", self.eval_iterations),
            ("runs", self.runs),
            ("d_emb", self.dims.d_emb),
            ("hidden", self.dims.hidden),
            ("lstm_layers", self.dims.lstm_layers),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.warm_start > self.replay_capacity {
            return Err(Error::Config("warm_start exceeds replay_capacity".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must lie in [0, 1]".into()));
        }
        for (name, e) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.epsilon_end > self.epsilon_start {
            return Err(Error::Config("epsilon must not increase".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config("lr must be positive".into()));
        }
        Ok(())
    }

    pub fn total_optimizer_steps(&self, episode_length: usize) -> usize {
        self.epochs * episode_length
    }

    /// Samples the optimizer sees per epoch.
    pub fn epoch_samples(&self, episode_length: usize) -> usize {
        self.batch_size * episode_length
    }
}

/// Linear decay from start to end, flat afterwards.
pub fn epsilon_at(step: usize, config: &TrainConfig) -> f64 {
    let frac = (step as f64 / config.epsilon_last_step as f64).min(1.0);
    config.epsilon_start + (config.epsilon_end - config.epsilon_start) * frac
}

/// Mean Huber TD error over `batch`; gradients accumulate into `online`.
/// Terminal transitions do not bootstrap.
pub fn td_loss(
    batch: &[&Transition],
    online: &mut QNetworkParams,
    target: &QNetworkParams,
    vocab: &Vocabulary,
    gamma: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Config("td_loss on an empty batch".into()));
    }
    let live: Vec<&AgentMemory> = batch
        .iter()
        .filter(|t| !t.done && gamma != 0.0)
        .map(|t| &t.next_state)
        .collect();
    let (q_next, _) = target.forward(vocab, &live)?;
    let mut next_rows = q_next.rows().into_iter();
    let targets: Vec<f64> = batch
        .iter()
        .map(|t| {
            let r = f64::from(t.reward);
            if t.done || gamma == 0.0 {
                return r;
            }
            let row = next_rows.next().expect("one row per live transition");
            r + gamma * row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();

    let states: Vec<&AgentMemory> = batch.iter().map(|t| &t.state).collect();
    let (q, cache) = online.forward(vocab, &states)?;
    let n = batch.len() as f64;
    let mut dq = Array2::zeros((batch.len(), N_ACTIONS));
    let mut total = 0.0;
    for (i, (t, y)) in batch.iter().zip(&targets).enumerate() {
        let a = t.action.index();
        let (l, g) = huber(q[[i, a]], *y);
        total += l;
        dq[[i, a]] = g / n;
    }
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("td loss"));
    }
    online.backward(&cache, dq.view());
    Ok(loss)
}

/// Online and target networks plus optimizer state.
#[derive(Clone, Debug)]
pub struct Learner {
    pub vocab: Arc<Vocabulary>,
    pub online: QNetworkParams,
    pub target: QNetworkParams,
    pub adam: Adam,
    pub gamma: f64,
    pub sync_every: usize,
}

impl Learner {
    pub fn new(vocab: Arc<Vocabulary>, online: QNetworkParams, config: &TrainConfig) -> Self {
        Self {
            vocab,
            target: online.clone(),
            online,
            adam: Adam::new(AdamConfig {
                lr: config.lr,
                ..AdamConfig::default()
            }),
            gamma: config.gamma,
            sync_every: config.sync_every,
        }
    }

    pub fn optimizer_steps(&self) -> u64 {
        self.adam.step_count()
    }

    /// One Adam step on the TD loss; copies online into target every
    /// `sync_every` steps. Returns the loss.
    pub fn update(&mut self, batch: &[&Transition]) -> Result<f64> {
        self.online.zero_grad();
        let loss = td_loss(batch, &mut self.online, &self.target, &self.vocab, self.gamma)?;
        self.adam.step(&mut self.online.params_mut())?;
        if self.adam.step_count() % self.sync_every as u64 == 0 {
            self.sync();
        }
        Ok(loss)
    }

    pub fn sync(&mut self) {
        self.target = self.online.clone();
    }

    pub fn q_values(&self, state: &AgentMemory) -> Result<[f64; N_ACTIONS]> {
        self.online.q_values(&self.vocab, state)
    }
}

/// An episode seen as a stream of transitions.
struct Episode {
    env: RoomEnv,
    memory: AgentMemory,
    question: Question,
    done: bool,
}

impl Episode {
    fn start(
        cfg: &EnvConfig,
        kb: Arc<KnowledgeBase>,
        variant: AgentVariant,
        caps: Capacities,
    ) -> Result<Self> {
        let mut memory = fresh_memory(&kb, variant, caps)?;
        let (env, obs, question) = RoomEnv::reset_with_kb(cfg, kb)?;
        memory.short_term.observe(obs)?;
        Ok(Self {
            env,
            memory,
            question,
            done: false,
        })
    }

    fn step(&mut self, action: Action) -> Result<Transition> {
        let state = self.memory.clone();
        let (_, answer) = act_and_answer(&mut self.memory, action, &self.question)?;
        let res = self.env.step(answer.as_deref())?;
        if !res.done {
            let obs: Observation = res.observation.expect("observation while running");
            self.memory.short_term.observe(obs)?;
            self.question = res.question.expect("question while running");
        }
        self.done = res.done;
        Ok(Transition {
            state,
            action,
            reward: res.reward,
            next_state: self.memory.clone(),
            done: res.done,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss_mean: f64,
    pub val_reward_mean: f64,
    pub val_reward_std: f64,
    pub epsilon_end: f64,
    pub wall_seconds: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str =
        "epoch,train_loss_mean,val_reward_mean,val_reward_std,epsilon_end,wall_seconds";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3}",
            self.epoch,
            self.train_loss_mean,
            self.val_reward_mean,
            self.val_reward_std,
            self.epsilon_end,
            self.wall_seconds
        )
    }
}

pub fn log_to_csv(log: &[EpochLog]) -> String {
    let mut out = format!("{}\n", EpochLog::CSV_HEADER);
    for e in log {
        out.push_str(&e.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Zero-based.
    pub best_epoch: usize,
    pub best_val_reward: f64,
    pub log: Vec<EpochLog>,
}

/// Vocabulary covering the humans of `env_config` and the objects and
/// locations of `kb`.
pub fn vocabulary_for(env_config: &EnvConfig, kb: &KnowledgeBase) -> Vocabulary {
    Vocabulary::from_kb(human_names(env_config.n_humans), kb)
}

/// A training run driven one phase at a time.
pub struct Trainer {
    env_config: EnvConfig,
    kb: Arc<KnowledgeBase>,
    variant: AgentVariant,
    caps: Capacities,
    config: TrainConfig,
    seed: u64,
    learner: Learner,
    replay: ReplayBuffer,
    explore: ChaCha8Rng,
    sampler: ChaCha8Rng,
    env_steps: usize,
    log: Vec<EpochLog>,
    best: Option<(usize, f64, QNetworkParams)>,
}

impl Trainer {
    pub fn new(
        env_config: &EnvConfig,
        kb: Option<Arc<KnowledgeBase>>,
        variant: AgentVariant,
        caps: Capacities,
        config: &TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        env_config.validate()?;
        if caps.short_term != 1 {
            return Err(Error::Config("short-term capacity is fixed at 1".into()));
        }
        let kb = match kb {
            Some(kb) => kb,
            None => Arc::new(env_config.knowledge_base()?),
        };
        let vocab = Arc::new(vocabulary_for(env_config, &kb));
        let online =
            QNetworkParams::new(config.dims, &vocab, &mut seed::rng(seed, Stream::Init, 0));
        Ok(Self {
            env_config: env_config.clone(),
            kb,
            variant,
            caps,
            config: config.clone(),
            seed,
            learner: Learner::new(vocab, online, config),
            replay: ReplayBuffer::new(config.replay_capacity)?,
            explore: seed::rng(seed, Stream::Exploration, 0),
            sampler: seed::rng(seed, Stream::Replay, 0),
            env_steps: 0,
            log: Vec::with_capacity(config.epochs),
            best: None,
        })
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn log(&self) -> &[EpochLog] {
        &self.log
    }

    /// Fill the replay buffer up to `warm_start` with uniform-random-action
    /// transitions, one fresh episode after another.
    pub fn warm_start(&mut self) -> Result<()> {
        let mut rng = seed::rng(self.seed, Stream::WarmStart, 0);
        let mut episode = 0u64;
        while self.replay.len() < self.config.warm_start {
            let seed = seed::derive(self.seed, Stream::WarmStart, episode + 1);
            let mut ep = Episode::start(
                &self.env_config.with_seed(seed),
                self.kb.clone(),
                self.variant,
                self.caps,
            )?;
            while !ep.done && self.replay.len() < self.config.warm_start {
                let a = Action::ALL[rng.gen_range(0..N_ACTIONS)];
                self.replay.push(ep.step(a)?);
            }
            episode += 1;
        }
        Ok(())
    }

    /// One training episode with an optimizer step per environment step,
    /// then validation.
    pub fn run_epoch(&mut self) -> Result<&EpochLog> {
        let epoch = self.log.len();
        let started = Instant::now();
        let cfg = self
            .env_config
            .with_seed(seed::derive(self.seed, Stream::Train, epoch as u64));
        let mut ep = Episode::start(&cfg, self.kb.clone(), self.variant, self.caps)?;
        let mut losses = Vec::with_capacity(self.env_config.episode_length);
        let mut eps = epsilon_at(self.env_steps, &self.config);
        while !ep.done {
            eps = epsilon_at(self.env_steps, &self.config);
            let action = if self.explore.gen::<f64>() < eps {
                Action::ALL[self.explore.gen_range(0..N_ACTIONS)]
            } else {
                greedy_action(&self.learner.q_values(&ep.memory)?)?
            };
            self.replay.push(ep.step(action)?);
            self.env_steps += 1;
            let batch = self.replay.sample(self.config.batch_size, &mut self.sampler);
            losses.push(self.learner.update(&batch)?);
        }

        let mut greedy = GreedyQ::new(
            Arc::new(self.learner.online.clone()),
            self.learner.vocab.clone(),
        );
        let val = evaluate_stream(
            &mut greedy,
            &self.env_config,
            self.kb.clone(),
            self.variant,
            self.caps,
            self.config.eval_iterations,
            self.seed,
            Stream::Validation,
        )?;
        if self.best.as_ref().map_or(true, |(_, v, _)| val.mean > *v) {
            self.best = Some((epoch, val.mean, self.learner.online.clone()));
        }
        self.log.push(EpochLog {
            epoch,
            train_loss_mean: losses.iter().sum::<f64>() / losses.len().max(1) as f64,
            val_reward_mean: val.mean,
            val_reward_std: val.std,
            epsilon_end: eps,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        Ok(self.log.last().expect("just pushed"))
    }

    /// The best validated parameters so far; `None` before the first epoch.
    pub fn finish(self) -> Option<TrainOutcome> {
        let (best_epoch, best_val_reward, params) = self.best?;
        Some(TrainOutcome {
            checkpoint: Checkpoint {
                vocab: (*self.learner.vocab).clone(),
                params,
            },
            best_epoch,
            best_val_reward,
            log: self.log,
        })
    }
}

/// Train a Q-network and return the epoch with the best validation reward
/// (ties keep the earlier epoch).
pub fn train(
    env_config: &EnvConfig,
    kb: Option<Arc<KnowledgeBase>>,
    variant: AgentVariant,
    caps: Capacities,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(env_config, kb, variant, caps, config, seed)?;
    trainer.warm_start()?;
    for _ in 0..config.epochs {
        trainer.run_epoch()?;
    }
    Ok(trainer.finish().expect("at least one epoch"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::Quadruple;

    fn tiny() -> (Arc<Vocabulary>, QNetworkParams) {
        let vocab = Arc::new(Vocabulary::new(
            vec!["Ann".into()],
            vec!["cup".into()],
            vec!["desk".into(), "sink".into()],
        ));
        let dims = QNetDims {
            d_emb: 2,
            hidden: 3,
            lstm_layers: 1,
        };
        let p = QNetworkParams::new(dims, &vocab, &mut seed::rng(1, Stream::Init, 0));
        (vocab, p)
    }

    fn state(loc: &str) -> AgentMemory {
        let mut m = AgentMemory::new(1, 2, 2);
        m.short_term
            .observe(Quadruple::new("Ann's cup", loc, 0))
            .unwrap();
        m
    }

    fn transition(done: bool, reward: u32) -> Transition {
        Transition {
            state: state("desk"),
            action: Action::ToEpisodic,
            reward,
            next_state: state("sink"),
            done,
        }
    }

    #[test]
    fn epsilon_schedule() {
        let c = TrainConfig::paper();
        assert_eq!(epsilon_at(0, &c), 1.0);
        assert_eq!(epsilon_at(1024, &c), 0.5);
        assert_eq!(epsilon_at(2048, &c), 0.0);
        assert_eq!(epsilon_at(10_000, &c), 0.0);
    }

    #[test]
    fn paper_step_count() {
        assert_eq!(TrainConfig::paper().total_optimizer_steps(128), 2048);
        assert_eq!(TrainConfig::paper().epoch_samples(128), 1024 * 128);
    }

    #[test]
    fn replay_is_fifo() {
        let mut r = ReplayBuffer::new(2).unwrap();
        for reward in 0..3 {
            r.push(transition(false, reward));
        }
        assert_eq!(r.len(), 2);
        assert_eq!(r.get(0).unwrap().reward, 1);
        assert_eq!(r.get(1).unwrap().reward, 2);
        assert!(ReplayBuffer::new(0).is_err());
    }

    #[test]
    fn terminal_exact_fit_has_zero_loss() {
        let (vocab, mut online) = tiny();
        let target = online.clone();
        let q = online.q_values(&vocab, &state("desk")).unwrap();
        // Shift the output bias so Q(s, to_episodic) is exactly 1.
        online.head_out.bias.values_mut()[1] += 1.0 - q[1];
        let t = transition(true, 1);
        let loss = td_loss(&[&t], &mut online, &target, &vocab, 0.65).unwrap();
        assert!(loss < 1e-20, "{loss}");
    }

    #[test]
    fn zero_gamma_ignores_next_state() {
        let (vocab, mut online) = tiny();
        let target = online.clone();
        let a = transition(false, 1);
        let mut b = a.clone();
        b.next_state = AgentMemory::new(1, 5, 5);
        let la = td_loss(&[&a], &mut online.clone(), &target, &vocab, 0.0).unwrap();
        let lb = td_loss(&[&b], &mut online, &target, &vocab, 0.0).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn hand_computed_target() {
        let (vocab, mut online) = tiny();
        let target = online.clone();
        let t = transition(false, 1);
        let q_next = target.q_values(&vocab, &t.next_state).unwrap();
        let q = online.q_values(&vocab, &t.state).unwrap();
        let y = 1.0 + 0.65 * q_next.iter().copied().fold(f64::MIN, f64::max);
        let e = q[1] - y;
        let expect = if e.abs() <= 1.0 { 0.5 * e * e } else { e.abs() - 0.5 };
        let loss = td_loss(&[&t], &mut online, &target, &vocab, 0.65).unwrap();
        assert!((loss - expect).abs() < 1e-10);
    }

    #[test]
    fn learner_syncs_on_schedule() {
        let (vocab, online) = tiny();
        let mut cfg = TrainConfig::desk();
        cfg.sync_every = 3;
        let mut l = Learner::new(vocab, online, &cfg);
        let t = transition(false, 1);
        for step in 1..=7 {
            let before = l.target.clone();
            l.update(&[&t]).unwrap();
            if step % 3 == 0 {
                assert_eq!(l.target, l.online);
            } else {
                assert_eq!(l.target, before);
                assert_ne!(l.target, l.online);
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::desk();
        assert!(c.validate().is_ok());
        c.gamma = 1.5;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::desk();
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }
}
