//! The agent loop and the memory-management policies.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Observation, RoomEnv};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::memory::{answer_of, Action, AgentMemory, Quadruple, Question};
use crate::qnet::{greedy_action, QNetworkParams, Vocabulary, N_ACTIONS};
use crate::seed::{self, Stream};
use crate::util::mean_std;

/// Whether the semantic memory starts empty or prefilled with commonsense
/// knowledge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentVariant {
    Scratch,
    Pretrained,
}

impl FromStr for AgentVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scratch" => Ok(Self::Scratch),
            "pretrained" => Ok(Self::Pretrained),
            other => Err(Error::Config(format!("unknown agent variant {other:?}"))),
        }
    }
}

impl fmt::Display for AgentVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Scratch => "scratch",
            Self::Pretrained => "pretrained",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Capacities {
    pub short_term: usize,
    pub episodic: usize,
    pub semantic: usize,
}

impl Capacities {
    pub fn new(episodic: usize, semantic: usize) -> Self {
        Self {
            short_term: 1,
            episodic,
            semantic,
        }
    }

    /// Equal split of a total long-term capacity (episodic gets the smaller
    /// half when odd).
    pub fn split(total: usize) -> Self {
        Self::new(total / 2, total - total / 2)
    }

    pub fn total(&self) -> usize {
        self.episodic + self.semantic
    }

    pub fn empty_memory(&self) -> AgentMemory {
        AgentMemory::new(self.short_term, self.episodic, self.semantic)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub action: Action,
    pub q_values: Option<[f64; N_ACTIONS]>,
}

impl From<Action> for Decision {
    fn from(action: Action) -> Self {
        Self {
            action,
            q_values: None,
        }
    }
}

/// A total rule from memory state to action.
pub trait Policy {
    fn name(&self) -> &str;
    fn decide(&mut self, memory: &AgentMemory) -> Result<Decision>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EpisodicOnly;

impl Policy for EpisodicOnly {
    fn name(&self) -> &str {
        "episodic_only"
    }

    fn decide(&mut self, _: &AgentMemory) -> Result<Decision> {
        Ok(Action::ToEpisodic.into())
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SemanticOnly;

impl Policy for SemanticOnly {
    fn name(&self) -> &str {
        "semantic_only"
    }

    fn decide(&mut self, _: &AgentMemory) -> Result<Decision> {
        Ok(Action::ToSemantic.into())
    }
}

#[derive(Clone, Debug)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: seed::rng(seed, Stream::Policy, 0),
        }
    }

    pub fn from_rng(rng: ChaCha8Rng) -> Self {
        Self { rng }
    }

    pub fn sample(&mut self) -> Action {
        Action::ALL[self.rng.gen_range(0..N_ACTIONS)]
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn decide(&mut self, _: &AgentMemory) -> Result<Decision> {
        Ok(self.sample().into())
    }
}

/// Argmax of the Q-network, reporting the Q-values it acted on.
#[derive(Clone, Debug)]
pub struct GreedyQ {
    pub params: Arc<QNetworkParams>,
    pub vocab: Arc<Vocabulary>,
}

impl GreedyQ {
    pub fn new(params: Arc<QNetworkParams>, vocab: Arc<Vocabulary>) -> Self {
        Self { params, vocab }
    }
}

impl Policy for GreedyQ {
    fn name(&self) -> &str {
        "greedy_q"
    }

    fn decide(&mut self, memory: &AgentMemory) -> Result<Decision> {
        let q = self.params.q_values(&self.vocab, memory)?;
        Ok(Decision {
            action: greedy_action(&q)?,
            q_values: Some(q),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub observation: Observation,
    pub question: Question,
    pub action: Action,
    pub q_values: Option<[f64; N_ACTIONS]>,
    pub retrieved: Option<Quadruple>,
    pub answer: Option<String>,
    pub reward: u32,
    /// Memory state the policy saw, `kind<TAB>head<TAB>relation<TAB>tail<TAB>value`
    /// lines, recorded only at the configured steps.
    pub memory: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub records: Vec<TraceRecord>,
}

impl EpisodeTrace {
    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| Error::Config(format!("trace: {e}"))))
            .collect::<Result<_>>()?;
        Ok(Self { records })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceOptions {
    pub snapshot_steps: BTreeSet<usize>,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            snapshot_steps: [2, 86].into_iter().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeOutcome {
    pub total_reward: u32,
    pub trace: Option<EpisodeTrace>,
}

/// One step of the agent loop: the observation is already in short-term
/// memory; act on it, then answer the question from long-term memory.
pub(crate) fn act_and_answer(
    memory: &mut AgentMemory,
    action: Action,
    question: &Question,
) -> Result<(Option<Quadruple>, Option<String>)> {
    memory.apply_action(action)?;
    let retrieved = memory.retrieve(question)?.cloned();
    let answer = answer_of(retrieved.as_ref()).map(str::to_string);
    Ok((retrieved, answer))
}

pub(crate) fn fresh_memory(
    kb: &KnowledgeBase,
    variant: AgentVariant,
    caps: Capacities,
) -> Result<AgentMemory> {
    let mut memory = caps.empty_memory();
    if variant == AgentVariant::Pretrained {
        memory.semantic.prefill_semantic(kb)?;
    }
    Ok(memory)
}

/// Play one episode with `policy` on `env_config` reseeded with `seed`.
pub fn run_episode(
    policy: &mut dyn Policy,
    env_config: &EnvConfig,
    kb: Option<Arc<KnowledgeBase>>,
    variant: AgentVariant,
    caps: Capacities,
    seed: u64,
    trace: Option<&TraceOptions>,
) -> Result<EpisodeOutcome> {
    if env_config.episode_length == 0 {
        return Ok(EpisodeOutcome {
            total_reward: 0,
            trace: trace.map(|_| EpisodeTrace::default()),
        });
    }
    let cfg = env_config.with_seed(seed);
    let kb = match kb {
        Some(kb) => kb,
        None => Arc::new(cfg.knowledge_base()?),
    };
    let mut memory = fresh_memory(&kb, variant, caps)?;
    let (mut env, mut obs, mut question) = RoomEnv::reset_with_kb(&cfg, kb)?;
    let mut total = 0;
    let mut records = Vec::new();
    let mut step = 0;
    loop {
        memory.short_term.observe(obs.clone())?;
        let snapshot = trace
            .filter(|t| t.snapshot_steps.contains(&step))
            .map(|_| memory.to_lines());
        let decision = policy.decide(&memory)?;
        let (retrieved, answer) = act_and_answer(&mut memory, decision.action, &question)?;
        let res = env.step(answer.as_deref())?;
        total += res.reward;
        if trace.is_some() {
            records.push(TraceRecord {
                step,
                observation: obs,
                question,
                action: decision.action,
                q_values: decision.q_values,
                retrieved,
                answer,
                reward: res.reward,
                memory: snapshot,
            });
        }
        if res.done {
            break;
        }
        obs = res.observation.expect("observation while running");
        question = res.question.expect("question while running");
        step += 1;
    }
    Ok(EpisodeOutcome {
        total_reward: total,
        trace: trace.map(|_| EpisodeTrace { records }),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalStats {
    pub mean: f64,
    pub std: f64,
    pub rewards: Vec<f64>,
}

impl EvalStats {
    pub fn from_rewards(rewards: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&rewards);
        Self { mean, std, rewards }
    }
}

/// Run `n_iterations` fresh episodes whose seeds come from `stream`.
pub fn evaluate_stream(
    policy: &mut dyn Policy,
    env_config: &EnvConfig,
    kb: Arc<KnowledgeBase>,
    variant: AgentVariant,
    caps: Capacities,
    n_iterations: usize,
    seed: u64,
    stream: Stream,
) -> Result<EvalStats> {
    if n_iterations == 0 {
        return Err(Error::Config("n_iterations must be >= 1".into()));
    }
    let rewards = (0..n_iterations as u64)
        .map(|i| {
            run_episode(
                policy,
                env_config,
                Some(kb.clone()),
                variant,
                caps,
                seed::derive(seed, stream, i),
                None,
            )
            .map(|o| f64::from(o.total_reward))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalStats::from_rewards(rewards))
}

/// Test-time evaluation: mean and population std of total episode reward.
pub fn evaluate(
    policy: &mut dyn Policy,
    env_config: &EnvConfig,
    kb: Arc<KnowledgeBase>,
    variant: AgentVariant,
    caps: Capacities,
    n_iterations: usize,
    seed: u64,
) -> Result<EvalStats> {
    evaluate_stream(
        policy,
        env_config,
        kb,
        variant,
        caps,
        n_iterations,
        seed,
        Stream::Test,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper() -> (EnvConfig, Arc<KnowledgeBase>) {
        let cfg = EnvConfig::paper();
        let kb = Arc::new(cfg.knowledge_base().unwrap());
        (cfg, kb)
    }

    #[test]
    fn constant_policies() {
        let mem = AgentMemory::new(1, 1, 1);
        assert_eq!(EpisodicOnly.decide(&mem).unwrap().action, Action::ToEpisodic);
        assert_eq!(SemanticOnly.decide(&mem).unwrap().action, Action::ToSemantic);
    }

    #[test]
    fn random_policy_is_seeded() {
        let mut a = RandomPolicy::new(4);
        let mut b = RandomPolicy::new(4);
        let xs: Vec<Action> = (0..50).map(|_| a.sample()).collect();
        let ys: Vec<Action> = (0..50).map(|_| b.sample()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn random_policy_is_uniform() {
        let mut p = RandomPolicy::new(9);
        let n = 30_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[p.sample().index()] += 1;
        }
        let expect = n as f64 / 3.0;
        let sigma = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - expect).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn episodic_only_full_capacity_is_perfect() {
        let (cfg, kb) = paper();
        let out = run_episode(
            &mut EpisodicOnly,
            &cfg,
            Some(kb),
            AgentVariant::Scratch,
            Capacities::new(64, 0),
            5,
            None,
        )
        .unwrap();
        assert_eq!(out.total_reward, 128);
    }

    #[test]
    fn trace_has_one_record_per_step_and_snapshots() {
        let (cfg, kb) = paper();
        let opts = TraceOptions::default();
        let out = run_episode(
            &mut RandomPolicy::new(1),
            &cfg,
            Some(kb.clone()),
            AgentVariant::Pretrained,
            Capacities::split(32),
            2,
            Some(&opts),
        )
        .unwrap();
        let trace = out.trace.unwrap();
        assert_eq!(trace.records.len(), 128);
        let total: u32 = trace.records.iter().map(|r| r.reward).sum();
        assert_eq!(total, out.total_reward);
        let snapped: Vec<usize> = trace
            .records
            .iter()
            .filter(|r| r.memory.is_some())
            .map(|r| r.step)
            .collect();
        assert_eq!(snapped, [2, 86]);
        assert_eq!(EpisodeTrace::from_jsonl(&trace.to_jsonl()).unwrap(), trace);
    }

    #[test]
    fn zero_length_episode() {
        let (mut cfg, kb) = paper();
        cfg.episode_length = 0;
        let out = run_episode(
            &mut EpisodicOnly,
            &cfg,
            Some(kb),
            AgentVariant::Scratch,
            Capacities::split(4),
            0,
            None,
        )
        .unwrap();
        assert_eq!(out.total_reward, 0);
    }

    #[test]
    fn single_iteration_has_zero_std() {
        let (cfg, kb) = paper();
        let s = evaluate(
            &mut SemanticOnly,
            &cfg,
            kb,
            AgentVariant::Scratch,
            Capacities::new(0, 8),
            1,
            3,
        )
        .unwrap();
        assert_eq!(s.std, 0.0);
        assert_eq!(s.rewards.len(), 1);
    }
}
