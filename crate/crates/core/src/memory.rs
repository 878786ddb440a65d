//! Bounded knowledge-graph memories: short-term, episodic and semantic.
//!
//! Each memory is an insertion-ordered list of quadruples. Episodic eviction
//! drops the oldest timestamp, semantic eviction drops the weakest strength;
//! both break ties towards the earliest-inserted entry. Retrieval prefers the
//! most recent relevant episodic entry and falls back to the strongest
//! relevant semantic entry, with ties going to the latest-inserted entry.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;

const OWNER_SEP: &str = "'s ";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    AtLocation,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("AtLocation")
    }
}

impl std::str::FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "AtLocation" => Ok(Relation::AtLocation),
            other => Err(Error::Config(format!("unknown relation {other:?}"))),
        }
    }
}

/// `(head, relation, tail, value)`. `value` is a timestamp for short-term and
/// episodic entries and a strength for semantic ones.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Quadruple {
    pub head: Arc<str>,
    pub relation: Relation,
    pub tail: Arc<str>,
    pub value: u64,
}

impl Quadruple {
    pub fn new(head: &str, tail: &str, value: u64) -> Self {
        Self {
            head: Arc::from(head),
            relation: Relation::AtLocation,
            tail: Arc::from(tail),
            value,
        }
    }
}

impl fmt::Display for Quadruple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            self.head, self.relation, self.tail, self.value
        )
    }
}

/// `"<human>'s <object>"`.
pub fn owner_head(human: &str, object: &str) -> String {
    format!("{human}{OWNER_SEP}{object}")
}

/// Split an owner-qualified head into `(human, object)`.
pub fn strip_owner(head: &str) -> Result<(&str, &str)> {
    match head.split_once(OWNER_SEP) {
        Some((human, object))
            if !human.is_empty()
                && !object.is_empty()
                && !human.contains('\'')
                && !object.contains('\'') =>
        {
            Ok((human, object))
        }
        _ => Err(Error::MalformedHead(head.to_string())),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemoryKind {
    ShortTerm,
    Episodic,
    Semantic,
}

impl MemoryKind {
    pub fn name(self) -> &'static str {
        match self {
            MemoryKind::ShortTerm => "short_term",
            MemoryKind::Episodic => "episodic",
            MemoryKind::Semantic => "semantic",
        }
    }
}

impl fmt::Display for MemoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MemoryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "short_term" => Ok(MemoryKind::ShortTerm),
            "episodic" => Ok(MemoryKind::Episodic),
            "semantic" => Ok(MemoryKind::Semantic),
            other => Err(Error::Config(format!("unknown memory kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemorySystem {
    kind: MemoryKind,
    capacity: usize,
    entries: Vec<Quadruple>,
}

impl MemorySystem {
    pub fn new(kind: MemoryKind, capacity: usize) -> Self {
        Self {
            kind,
            capacity,
            entries: Vec::with_capacity(capacity),
        }
    }

    pub fn kind(&self) -> MemoryKind {
        self.kind
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> &[Quadruple] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    /// Append an observation to short-term memory.
    pub fn observe(&mut self, obs: Quadruple) -> Result<()> {
        if self.is_full() {
            return Err(Error::MemoryOverflow {
                kind: self.kind.name(),
                capacity: self.capacity,
            });
        }
        self.entries.push(obs);
        Ok(())
    }

    fn pop_oldest(&mut self) -> Option<Quadruple> {
        if self.entries.is_empty() {
            None
        } else {
            Some(self.entries.remove(0))
        }
    }

    /// Store an owner-qualified entry, evicting the oldest timestamp first if
    /// full. With capacity 0 the entry is dropped.
    fn store_episodic(&mut self, q: Quadruple) {
        if self.capacity == 0 {
            return;
        }
        if self.is_full() {
            let oldest = argmin_first(&self.entries);
            self.entries.remove(oldest);
        }
        self.entries.push(q);
    }

    /// Store a generalized `(object, relation, location)` fact: bump the
    /// strength of a matching entry, or insert with strength 1 after
    /// evicting the weakest entry when full.
    fn store_semantic(&mut self, head: Arc<str>, relation: Relation, tail: Arc<str>) {
        if let Some(e) = self
            .entries
            .iter_mut()
            .find(|e| e.head == head && e.tail == tail)
        {
            e.value += 1;
            return;
        }
        if self.capacity == 0 {
            return;
        }
        if self.is_full() {
            let weakest = argmin_first(&self.entries);
            self.entries.remove(weakest);
        }
        self.entries.push(Quadruple {
            head,
            relation,
            tail,
            value: 1,
        });
    }

    /// Fill an empty semantic memory with one strength-1 commonsense fact per
    /// object, in knowledge-base order, until capacity.
    pub fn prefill_semantic(&mut self, kb: &KnowledgeBase) -> Result<()> {
        if self.kind != MemoryKind::Semantic || !self.entries.is_empty() {
            return Err(Error::PrefillTarget);
        }
        for object in kb.objects().iter().take(self.capacity) {
            let loc = kb.commonsense_location(object)?;
            self.entries.push(Quadruple::new(object, loc, 1));
        }
        Ok(())
    }

    /// One line per entry: `kind<TAB>head<TAB>relation<TAB>tail<TAB>value`.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                self.kind, e.head, e.relation, e.tail, e.value
            ));
        }
        out
    }
}

/// Index of the smallest value, first occurrence on ties.
fn argmin_first(entries: &[Quadruple]) -> usize {
    let mut best = 0;
    for (i, e) in entries.iter().enumerate().skip(1) {
        if e.value < entries[best].value {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Forget = 0,
    ToEpisodic = 1,
    ToSemantic = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Forget, Action::ToEpisodic, Action::ToSemantic];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Forget => "forget",
            Action::ToEpisodic => "to_episodic",
            Action::ToSemantic => "to_semantic",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The agent's full memory state `(M_o, M_e, M_s)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentMemory {
    pub short_term: MemorySystem,
    pub episodic: MemorySystem,
    pub semantic: MemorySystem,
}

impl AgentMemory {
    pub fn new(short_term: usize, episodic: usize, semantic: usize) -> Self {
        Self {
            short_term: MemorySystem::new(MemoryKind::ShortTerm, short_term),
            episodic: MemorySystem::new(MemoryKind::Episodic, episodic),
            semantic: MemorySystem::new(MemoryKind::Semantic, semantic),
        }
    }

    pub fn systems(&self) -> [&MemorySystem; 3] {
        [&self.short_term, &self.episodic, &self.semantic]
    }

    /// Move the oldest short-term entry according to `action`.
    pub fn apply_action(&mut self, action: Action) -> Result<()> {
        let q = self.short_term.pop_oldest().ok_or(Error::EmptyShortTerm)?;
        match action {
            Action::Forget => {}
            Action::ToEpisodic => self.episodic.store_episodic(q),
            Action::ToSemantic => {
                let (_, object) = strip_owner(&q.head)?;
                self.semantic
                    .store_semantic(Arc::from(object), q.relation, q.tail);
            }
        }
        Ok(())
    }

    pub fn retrieve(&self, question: &Question) -> Result<Option<&Quadruple>> {
        retrieve(question, &self.episodic, &self.semantic)
    }

    pub fn to_lines(&self) -> String {
        self.systems().iter().map(|m| m.to_lines()).collect()
    }
}

/// `(head, relation, ?)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Question {
    pub head: Arc<str>,
    pub relation: Relation,
}

impl Question {
    pub fn new(head: &str) -> Self {
        Self {
            head: Arc::from(head),
            relation: Relation::AtLocation,
        }
    }
}

impl fmt::Display for Question {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, ?)", self.head, self.relation)
    }
}

/// Most relevant memory for `question`: the most recent matching episodic
/// entry, else the strongest matching semantic entry, else `None`.
pub fn retrieve<'a>(
    question: &Question,
    episodic: &'a MemorySystem,
    semantic: &'a MemorySystem,
) -> Result<Option<&'a Quadruple>> {
    let head = &*question.head;
    if let Some(q) = latest_max(
        episodic
            .entries()
            .iter()
            .filter(|e| &*e.head == head && e.relation == question.relation),
    ) {
        return Ok(Some(q));
    }
    let (_, object) = strip_owner(head)?;
    Ok(latest_max(
        semantic
            .entries()
            .iter()
            .filter(|e| &*e.head == object && e.relation == question.relation),
    ))
}

/// Maximum value, later items winning ties.
fn latest_max<'a>(iter: impl Iterator<Item = &'a Quadruple>) -> Option<&'a Quadruple> {
    iter.fold(None, |best: Option<&Quadruple>, e| match best {
        Some(b) if b.value > e.value => Some(b),
        _ => Some(e),
    })
}

pub fn answer_of(retrieved: Option<&Quadruple>) -> Option<&str> {
    retrieved.map(|q| &*q.tail)
}
