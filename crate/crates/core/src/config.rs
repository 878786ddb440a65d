//! Flat `key = value` experiment files.
//!
//! `#` starts a comment. `include NAME` splices another file in place: a path
//! relative to the including file if it exists, otherwise a built-in preset
//! (`paper.env`, `desk.env`). Later assignments override earlier ones, so a
//! file typically includes a preset and then overrides a few keys.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::des::DesParams;
use crate::dqn::TrainConfig;
use crate::env::{EnvConfig, KbSource};
use crate::error::{Error, Result};
use crate::policy::{AgentVariant, Capacities};
use crate::qnet::QNetDims;

pub const PRESETS: [(&str, &str); 2] = [
    ("paper.env", include_str!("../../../configs/paper.env")),
    ("desk.env", include_str!("../../../configs/desk.env")),
];

const MAX_INCLUDE_DEPTH: usize = 16;

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// The agents a sweep can compare.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    EpisodicOnly,
    SemanticOnly,
    Random,
    RlScratch,
    RlPretrained,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        Self::EpisodicOnly,
        Self::SemanticOnly,
        Self::Random,
        Self::RlScratch,
        Self::RlPretrained,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::EpisodicOnly => "episodic_only",
            Self::SemanticOnly => "semantic_only",
            Self::Random => "random",
            Self::RlScratch => "rl_scratch",
            Self::RlPretrained => "rl_pretrained",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Self::RlScratch | Self::RlPretrained)
    }

    /// Constant baselines get the whole capacity in their one system; the
    /// others split it equally.
    pub fn capacities(self, total: usize) -> Capacities {
        match self {
            Self::EpisodicOnly => Capacities::new(total, 0),
            Self::SemanticOnly => Capacities::new(0, total),
            _ => Capacities::split(total),
        }
    }

    /// Only the pretrained learner starts with a prefilled semantic memory.
    pub fn variant(self) -> AgentVariant {
        match self {
            Self::RlPretrained => AgentVariant::Pretrained,
            _ => AgentVariant::Scratch,
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown agent {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub variant: AgentVariant,
    pub agents: Vec<AgentKind>,
    /// Total long-term capacities; see [`AgentKind::capacities`] for how each
    /// agent allocates them.
    pub capacities: Vec<usize>,
    pub seeds: Vec<u64>,
    pub trace_steps: BTreeSet<usize>,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_preset(name: &str) -> Result<Self> {
        let text = preset(name).ok_or_else(|| Error::Config(format!("no preset {name:?}")))?;
        Self::parse(text, None)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent())
    }

    /// Parse `text`; includes resolve relative to `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut kv = BTreeMap::new();
        collect(text, base, "<config>", &mut kv, 0)?;
        Self::from_map(&kv)
    }

    pub fn capacities_of(&self, total: usize) -> Capacities {
        Capacities::split(total)
    }

    fn from_map(kv: &BTreeMap<String, String>) -> Result<Self> {
        let mut m = Fields { kv, used: BTreeSet::new() };
        let kb = match m.opt("env.kb_file") {
            Some(p) => KbSource::File(PathBuf::from(p)),
            None => KbSource::Synthetic { seed: m.num("env.kb_seed")? },
        };
        let env = EnvConfig {
            n_humans: m.num("env.n_humans")?,
            n_objects: m.num("env.n_objects")?,
            n_object_locations: m.num("env.n_object_locations")?,
            p_commonsense: m.num("env.p_commonsense")?,
            episode_length: m.num("env.episode_length")?,
            seed: 0,
            kb,
            des: DesParams {
                location_capacity: m.num("env.location_capacity")?,
                min_segments: m.num("env.min_segments")?,
                max_segments: m.num("env.max_segments")?,
                min_duration: m.num("env.min_duration")?,
                max_duration: m.num("env.max_duration")?,
            },
        };
        let train = TrainConfig {
            epochs: m.num("train.epochs")?,
            batch_size: m.num("train.batch_size")?,
            replay_capacity: m.num("train.replay_capacity")?,
            warm_start: m.num("train.warm_start")?,
            epsilon_start: m.num("train.epsilon_start")?,
            epsilon_end: m.num("train.epsilon_end")?,
            epsilon_last_step: m.num("train.epsilon_last_step")?,
            gamma: m.num("train.gamma")?,
            lr: m.num("train.lr")?,
            sync_every: m.num("train.sync_every")?,
            eval_iterations: m.num("train.eval_iterations")?,
            runs: m.num("train.runs")?,
            dims: QNetDims {
                d_emb: m.num("train.d_emb")?,
                hidden: m.num("train.hidden")?,
                lstm_layers: m.num("train.lstm_layers")?,
            },
        };
        let cfg = Self {
            env,
            train,
            variant: m.num("variant")?,
            agents: m.list("agents")?,
            capacities: m.list("capacities")?,
            seeds: m.list("seeds")?,
            trace_steps: m.list("trace_steps")?.into_iter().collect(),
            out_dir: PathBuf::from(m.req("out_dir")?),
        };
        if let Some(k) = kv.keys().find(|k| !m.used.contains(k.as_str())) {
            return Err(Error::Config(format!("unknown key {k:?}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.train.validate()?;
        if self.capacities.is_empty() {
            return Err(Error::Config("capacities must not be empty".into()));
        }
        if self.capacities.contains(&0) {
            return Err(Error::Config("capacities must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.agents.is_empty() {
            return Err(Error::Config("agents must not be empty".into()));
        }
        Ok(())
    }
}

fn collect(
    text: &str,
    base: Option<&Path>,
    origin: &str,
    kv: &mut BTreeMap<String, String>,
    depth: usize,
) -> Result<()> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(Error::Config(format!("include nesting too deep at {origin}")));
    }
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix("include ") {
            let name = name.trim();
            let local = base.map(|b| b.join(name)).filter(|p| p.is_file());
            match (local, preset(name)) {
                (Some(path), _) => {
                    let inner = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                    collect(&inner, path.parent(), name, kv, depth + 1)?;
                }
                (None, Some(inner)) => collect(inner, None, name, kv, depth + 1)?,
                (None, None) => {
                    return Err(Error::Config(format!(
                        "{origin}:{}: cannot include {name:?}",
                        n + 1
                    )))
                }
            }
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "{origin}:{}: expected key = value, got {line:?}",
                n + 1
            )));
        };
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(())
}

struct Fields<'a> {
    kv: &'a BTreeMap<String, String>,
    used: BTreeSet<&'static str>,
}

impl Fields<'_> {
    fn opt(&mut self, key: &'static str) -> Option<&str> {
        self.used.insert(key);
        self.kv.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    fn req(&mut self, key: &'static str) -> Result<&str> {
        self.opt(key)
            .ok_or_else(|| Error::Config(format!("missing key {key:?}")))
    }

    fn num<T: FromStr>(&mut self, key: &'static str) -> Result<T> {
        let v = self.req(key)?;
        v.parse()
            .map_err(|_| Error::Config(format!("bad value {v:?} for {key:?}")))
    }

    fn list<T: FromStr>(&mut self, key: &'static str) -> Result<Vec<T>> {
        let v = self.req(key)?;
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::Config(format!("bad item {s:?} in {key:?}")))
            })
            .collect()
    }
}
