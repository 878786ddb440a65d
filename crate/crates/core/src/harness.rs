//! Config-driven commands and result aggregation.
//!
//! Every command is a pure function of its config: randomness comes from the
//! seed streams, cells run share-nothing, and aggregation happens after all
//! cells finish, in a fixed order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::config::{AgentKind, ExperimentConfig};
use crate::dqn::{log_to_csv, train};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::policy::{
    evaluate, run_episode, EpisodicOnly, GreedyQ, Policy, RandomPolicy, SemanticOnly, TraceOptions,
};
use crate::qnet::Checkpoint;
use crate::seed::{self, Stream};
use crate::util::{mean_std, write_atomic};

pub const RESULTS_HEADER: &str = "agent,capacity,seed,mean_reward,std_reward";

/// One (agent, capacity, seed) evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub agent: AgentKind,
    pub capacity: usize,
    pub seed: u64,
    /// Per-episode test rewards, or the failure message.
    pub outcome: std::result::Result<Vec<f64>, String>,
}

impl CellResult {
    pub fn csv_row(&self) -> String {
        match &self.outcome {
            Ok(r) => {
                let (m, s) = mean_std(r);
                format!("{},{},{},{m:.4},{s:.4}", self.agent, self.capacity, self.seed)
            }
            Err(_) => format!("{},{},{},error,error", self.agent, self.capacity, self.seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub cells: Vec<CellResult>,
}

impl SweepReport {
    pub fn results_csv(&self) -> String {
        let mut out = format!("{RESULTS_HEADER}\n");
        for c in &self.cells {
            out.push_str(&c.csv_row());
            out.push('\n');
        }
        out
    }

    /// Rewards pooled over seeds and evaluation episodes, per agent and
    /// capacity. Failed cells are skipped.
    pub fn pooled(&self) -> BTreeMap<(AgentKind, usize), Vec<f64>> {
        let mut pooled: BTreeMap<(AgentKind, usize), Vec<f64>> = BTreeMap::new();
        for c in &self.cells {
            let entry = pooled.entry((c.agent, c.capacity)).or_default();
            if let Ok(r) = &c.outcome {
                entry.extend(r);
            }
        }
        pooled
    }

    pub fn mean(&self, agent: AgentKind, capacity: usize) -> Option<f64> {
        self.pooled()
            .get(&(agent, capacity))
            .filter(|r| !r.is_empty())
            .map(|r| mean_std(r).0)
    }

    /// Rows are agents, columns total capacities, cells `mean ± std`.
    pub fn table_csv(&self, agents: &[AgentKind], capacities: &[usize]) -> String {
        let pooled = self.pooled();
        let mut out = String::from("agent");
        for c in capacities {
            write!(out, ",{c}").unwrap();
        }
        out.push('\n');
        for a in agents {
            out.push_str(a.name());
            for c in capacities {
                match pooled.get(&(*a, *c)).filter(|r| !r.is_empty()) {
                    Some(r) => {
                        let (m, s) = mean_std(r);
                        write!(out, ",{m:.1} ± {s:.1}").unwrap();
                    }
                    None => out.push_str(",error"),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn eval_cell(
    cfg: &ExperimentConfig,
    kb: &Arc<KnowledgeBase>,
    agent: AgentKind,
    capacity: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let caps = agent.capacities(capacity);
    let n = cfg.train.eval_iterations;
    let mut policy: Box<dyn Policy> = match agent {
        AgentKind::EpisodicOnly => Box::new(EpisodicOnly),
        AgentKind::SemanticOnly => Box::new(SemanticOnly),
        AgentKind::Random => Box::new(RandomPolicy::new(seed)),
        AgentKind::RlScratch | AgentKind::RlPretrained => {
            let out = train(&cfg.env, Some(kb.clone()), agent.variant(), caps, &cfg.train, seed)?;
            Box::new(GreedyQ::new(
                Arc::new(out.checkpoint.params),
                Arc::new(out.checkpoint.vocab),
            ))
        }
    };
    let stats = evaluate(policy.as_mut(), &cfg.env, kb.clone(), agent.variant(), caps, n, seed)?;
    Ok(stats.rewards)
}

/// Evaluate every (agent, capacity, seed) cell. Cell failures are recorded,
/// not propagated.
pub fn sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let kb = Arc::new(cfg.env.knowledge_base()?);
    let mut jobs = Vec::new();
    for &agent in &cfg.agents {
        for &capacity in &cfg.capacities {
            for &seed in &cfg.seeds {
                jobs.push((agent, capacity, seed));
            }
        }
    }
    let cells = jobs
        .into_par_iter()
        .map(|(agent, capacity, seed)| CellResult {
            agent,
            capacity,
            seed,
            outcome: eval_cell(cfg, &kb, agent, capacity, seed).map_err(|e| e.to_string()),
        })
        .collect();
    Ok(SweepReport { cells })
}

/// Run the sweep and write `results.csv` and `table.csv` into `out_dir`.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    let report = sweep(cfg)?;
    write_atomic(cfg.out_dir.join("results.csv"), report.results_csv().as_bytes())?;
    write_atomic(
        cfg.out_dir.join("table.csv"),
        report.table_csv(&cfg.agents, &cfg.capacities).as_bytes(),
    )?;
    Ok(report)
}

fn run_name(cfg: &ExperimentConfig, capacity: usize, seed: u64) -> String {
    format!("{}_cap{capacity}_seed{seed}", cfg.variant)
}

/// Train one agent per (capacity, seed); writes `<name>.ckpt` and
/// `<name>.csv` per run and returns the checkpoint paths.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let kb = Arc::new(cfg.env.knowledge_base()?);
    let mut paths = Vec::new();
    for &capacity in &cfg.capacities {
        for &seed in &cfg.seeds {
            let out = train(
                &cfg.env,
                Some(kb.clone()),
                cfg.variant,
                cfg.capacities_of(capacity),
                &cfg.train,
                seed,
            )?;
            let name = run_name(cfg, capacity, seed);
            let ckpt = cfg.out_dir.join(format!("{name}.ckpt"));
            out.checkpoint.save(&ckpt)?;
            write_atomic(cfg.out_dir.join(format!("{name}.csv")), log_to_csv(&out.log).as_bytes())?;
            paths.push(ckpt);
        }
    }
    Ok(paths)
}

/// Test-evaluate a checkpoint greedily at every configured capacity and
/// seed; writes `eval.csv`.
pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<String> {
    cfg.validate()?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let kb = Arc::new(cfg.env.knowledge_base()?);
    check_vocab(cfg, &kb, &ckpt)?;
    let mut policy = GreedyQ::new(Arc::new(ckpt.params), Arc::new(ckpt.vocab));
    let mut out = format!("{RESULTS_HEADER}\n");
    for &capacity in &cfg.capacities {
        for &seed in &cfg.seeds {
            let s = evaluate(
                &mut policy,
                &cfg.env,
                kb.clone(),
                cfg.variant,
                cfg.capacities_of(capacity),
                cfg.train.eval_iterations,
                seed,
            )?;
            writeln!(out, "greedy_q,{capacity},{seed},{:.4},{:.4}", s.mean, s.std).unwrap();
        }
    }
    write_atomic(cfg.out_dir.join("eval.csv"), out.as_bytes())?;
    Ok(out)
}

fn check_vocab(cfg: &ExperimentConfig, kb: &KnowledgeBase, ckpt: &Checkpoint) -> Result<()> {
    if crate::dqn::vocabulary_for(&cfg.env, kb) != ckpt.vocab {
        return Err(Error::Checkpoint(
            "checkpoint vocabulary does not match the configured environment".into(),
        ));
    }
    Ok(())
}

/// One traced greedy test episode at the first capacity and seed; writes
/// `trace.jsonl` and returns its path.
pub fn cmd_trace(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<PathBuf> {
    cfg.validate()?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let kb = Arc::new(cfg.env.knowledge_base()?);
    check_vocab(cfg, &kb, &ckpt)?;
    let mut policy = GreedyQ::new(Arc::new(ckpt.params), Arc::new(ckpt.vocab));
    let seed = cfg.seeds[0];
    let opts = TraceOptions {
        snapshot_steps: cfg.trace_steps.clone(),
    };
    let out = run_episode(
        &mut policy,
        &cfg.env,
        Some(kb),
        cfg.variant,
        cfg.capacities_of(cfg.capacities[0]),
        seed::derive(seed, Stream::Test, 0),
        Some(&opts),
    )?;
    let path = cfg.out_dir.join("trace.jsonl");
    write_atomic(&path, out.trace.expect("trace requested").to_jsonl().as_bytes())?;
    Ok(path)
}

/// Write a synthetic knowledge base as TSV.
pub fn cmd_gen_kb(seed: u64, n_objects: usize, n_locations: usize, out: &Path) -> Result<()> {
    let kb = KnowledgeBase::generate_synthetic(seed, n_objects, n_locations)?;
    write_atomic(out, kb.to_tsv().as_bytes())
}
