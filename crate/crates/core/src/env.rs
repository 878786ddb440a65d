//! Gym-style partially observable wrapper over the room DES.
//!
//! Every step the agent observes one human (round-robin) and is asked where
//! one previously observed human's object is. Answers are graded against the
//! location recorded at that human's most recent observation.

use std::path::PathBuf;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::des::{DesParams, DesState};
use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::memory::{owner_head, Quadruple, Question};
use crate::seed::{self, Stream};

/// Where the knowledge base comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum KbSource {
    Synthetic { seed: u64 },
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub n_humans: usize,
    pub n_objects: usize,
    pub n_object_locations: usize,
    pub p_commonsense: f64,
    pub episode_length: usize,
    pub seed: u64,
    pub kb: KbSource,
    pub des: DesParams,
}

impl EnvConfig {
    /// 64 humans, 16 objects, 28 locations, p = 0.5, 128 steps.
    pub fn paper() -> Self {
        Self {
            n_humans: 64,
            n_objects: 16,
            n_object_locations: 28,
            p_commonsense: 0.5,
            episode_length: 128,
            seed: 0,
            kb: KbSource::Synthetic { seed: 7 },
            des: DesParams::default(),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episode_length == 0 {
            return Err(Error::Config("episode_length must be >= 1".into()));
        }
        if self.n_humans == 0 {
            return Err(Error::Config("n_humans must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.p_commonsense) {
            return Err(Error::Config("p_commonsense must lie in [0, 1]".into()));
        }
        self.des.validate()
    }

    /// Build or load the knowledge base and check it against the counts.
    pub fn knowledge_base(&self) -> Result<KnowledgeBase> {
        let kb = match &self.kb {
            KbSource::Synthetic { seed } => {
                KnowledgeBase::generate_synthetic(*seed, self.n_objects, self.n_object_locations)?
            }
            KbSource::File(path) => KnowledgeBase::load(path)?,
        };
        if kb.objects().len() != self.n_objects || kb.locations().len() != self.n_object_locations {
            return Err(Error::Config(format!(
                "knowledge base has {} objects / {} locations, config expects {} / {}",
                kb.objects().len(),
                kb.locations().len(),
                self.n_objects,
                self.n_object_locations
            )));
        }
        Ok(kb)
    }
}

pub type Observation = Quadruple;

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Option<Observation>,
    pub question: Option<Question>,
    pub reward: u32,
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomEnv {
    config: EnvConfig,
    kb: Arc<KnowledgeBase>,
    des: DesState,
    question_rng: ChaCha8Rng,
    /// Number of graded answers so far.
    step: usize,
    /// Location at each human's most recent observation.
    ledger: Vec<Option<String>>,
    /// Human indices in first-observation order.
    observed: Vec<usize>,
    pending: Option<(usize, Question)>,
    last_observation: Option<Observation>,
    done: bool,
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"ROOMENV\0";
const SNAPSHOT_VERSION: u32 = 1;

impl RoomEnv {
    /// Reset with a freshly built knowledge base.
    pub fn reset(config: &EnvConfig) -> Result<(Self, Observation, Question)> {
        config.validate()?;
        let kb = Arc::new(config.knowledge_base()?);
        Self::reset_with_kb(config, kb)
    }

    /// Reset reusing an already built knowledge base.
    pub fn reset_with_kb(
        config: &EnvConfig,
        kb: Arc<KnowledgeBase>,
    ) -> Result<(Self, Observation, Question)> {
        config.validate()?;
        let des = DesState::init(
            config.n_humans,
            &kb,
            config.p_commonsense,
            &config.des,
            config.seed,
        )?;
        let mut env = Self {
            config: config.clone(),
            kb,
            des,
            question_rng: seed::rng(config.seed, Stream::Questions, 0),
            step: 0,
            ledger: vec![None; config.n_humans],
            observed: Vec::new(),
            pending: None,
            last_observation: None,
            done: false,
        };
        let (obs, q) = env.advance();
        Ok((env, obs, q))
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn kb(&self) -> &Arc<KnowledgeBase> {
        &self.kb
    }

    pub fn des(&self) -> &DesState {
        &self.des
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn pending_question(&self) -> Option<&Question> {
        self.pending.as_ref().map(|(_, q)| q)
    }

    /// Location recorded for the human at its last observation.
    pub fn ledger_location(&self, human: usize) -> Option<&str> {
        self.ledger.get(human).and_then(|l| l.as_deref())
    }

    /// Tick, observe the next human, record it, and sample a question.
    fn advance(&mut self) -> (Observation, Question) {
        self.des.tick();
        let t = self.step;
        let idx = t % self.config.n_humans;
        let human = &self.des.humans()[idx];
        let location = self.des.location_of(idx).to_string();
        let obs = Quadruple::new(&owner_head(&human.name, &human.object), &location, t as u64);
        if self.ledger[idx].is_none() {
            self.observed.push(idx);
        }
        self.ledger[idx] = Some(location);
        let pick = self.observed[self.question_rng.gen_range(0..self.observed.len())];
        let asked = &self.des.humans()[pick];
        let question = Question::new(&owner_head(&asked.name, &asked.object));
        self.pending = Some((pick, question.clone()));
        self.last_observation = Some(obs.clone());
        (obs, question)
    }

    /// Grade `answer` for the pending question, then move on.
    pub fn step(&mut self, answer: Option<&str>) -> Result<StepResult> {
        if self.done {
            return Err(Error::EpisodeDone);
        }
        let (pick, _) = self.pending.take().expect("pending question while running");
        let correct = self.ledger[pick].as_deref();
        let reward = u32::from(answer.is_some() && answer == correct);
        self.step += 1;
        if self.step >= self.config.episode_length {
            self.done = true;
            return Ok(StepResult {
                observation: None,
                question: None,
                reward,
                done: true,
            });
        }
        let (obs, q) = self.advance();
        Ok(StepResult {
            observation: Some(obs),
            question: Some(q),
            reward,
            done: false,
        })
    }

    /// Opaque versioned blob: magic, version, payload length, payload,
    /// SHA-256 of the payload.
    pub fn snapshot(&self) -> Vec<u8> {
        let payload = serde_json::to_vec(self).expect("environment state serializes");
        let mut out = Vec::with_capacity(payload.len() + 48);
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out.extend_from_slice(&Sha256::digest(&payload));
        out
    }

    pub fn restore(blob: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Snapshot(m.to_string());
        if blob.len() < 20 || &blob[..8] != SNAPSHOT_MAGIC {
            return Err(bad("not an environment snapshot"));
        }
        let version = u32::from_le_bytes(blob[8..12].try_into().unwrap());
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!(
                "version mismatch: blob {version}, supported {SNAPSHOT_VERSION}"
            )));
        }
        let len = u64::from_le_bytes(blob[12..20].try_into().unwrap()) as usize;
        if blob.len() != 20 + len + 32 {
            return Err(bad("truncated or oversized blob"));
        }
        let payload = &blob[20..20 + len];
        if Sha256::digest(payload).as_slice() != &blob[20 + len..] {
            return Err(bad("checksum mismatch"));
        }
        serde_json::from_slice(payload).map_err(|e| Error::Snapshot(e.to_string()))
    }
}
