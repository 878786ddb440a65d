//! Ground-truth room simulation.
//!
//! Humans each own one object and cycle through a fixed routine of
//! `(location, duration)` segments. Locations have a capacity; a human whose
//! next location is full falls through to later segments of its routine and
//! otherwise keeps its object where it is.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::seed::{self, Stream};

const HUMAN_NAMES: &[&str] = &[
    "Alice", "Bob", "Ann", "Frank", "Carol", "Dave", "Eve", "Grace", "Heidi", "Ivan", "Judy",
    "Karl", "Laura", "Mallory", "Nina", "Oscar", "Peggy", "Quinn", "Rupert", "Sybil", "Trent",
    "Ursula", "Victor", "Walter", "Xena", "Yusuf", "Zoe", "Aaron", "Bella", "Cyrus", "Diana",
    "Edgar", "Fiona", "Gus", "Hana", "Igor", "Jules", "Kira", "Liam", "Maya", "Noah", "Olga",
    "Pablo", "Rosa", "Sam", "Tara", "Umar", "Vera", "Wes", "Yara", "Zane", "Amir", "Beth",
    "Cleo", "Dmitri", "Elsa", "Felix", "Gina", "Hugo", "Iris", "Jonas", "Lena", "Milo", "Nora",
];

/// Deterministic human names: a fixed list, suffixed once exhausted.
pub fn human_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            let base = HUMAN_NAMES[i % HUMAN_NAMES.len()];
            match i / HUMAN_NAMES.len() {
                0 => base.to_string(),
                k => format!("{base}{}", k + 1),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub location: String,
    pub duration: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Routine {
    segments: Vec<Segment>,
    cycle_len: u32,
}

impl Routine {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() || segments.iter().any(|s| s.duration == 0) {
            return Err(Error::Config(
                "routine needs at least one segment with duration >= 1".into(),
            ));
        }
        let cycle_len = segments.iter().map(|s| s.duration).sum();
        Ok(Self {
            segments,
            cycle_len,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Segment index active at position `pos` of the cycle.
    fn segment_at(&self, pos: u32) -> usize {
        let mut pos = pos % self.cycle_len;
        for (i, s) in self.segments.iter().enumerate() {
            if pos < s.duration {
                return i;
            }
            pos -= s.duration;
        }
        unreachable!("pos reduced modulo cycle length")
    }

    /// Segment active after `ticks` ticks. Tick 1 is the first step of
    /// segment 0, and before any tick the human is also at segment 0.
    pub fn segment_after(&self, ticks: u64) -> usize {
        if ticks == 0 {
            0
        } else {
            self.segment_at(((ticks - 1) % self.cycle_len as u64) as u32)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Human {
    pub name: String,
    pub object: String,
    pub routine: Routine,
}

/// `(human, object, from, to)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub human: String,
    pub object: String,
    pub from: String,
    pub to: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesParams {
    pub location_capacity: usize,
    pub min_segments: usize,
    pub max_segments: usize,
    pub min_duration: u32,
    pub max_duration: u32,
}

impl Default for DesParams {
    fn default() -> Self {
        Self {
            location_capacity: 8,
            min_segments: 2,
            max_segments: 5,
            min_duration: 1,
            max_duration: 4,
        }
    }
}

impl DesParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_segments == 0 || self.min_segments > self.max_segments {
            return Err(Error::Config("routine segment bounds invalid".into()));
        }
        if self.min_duration == 0 || self.min_duration > self.max_duration {
            return Err(Error::Config("routine duration bounds invalid".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesState {
    humans: Vec<Human>,
    locations: Vec<String>,
    /// Index into `locations` per human.
    current: Vec<usize>,
    occupancy: Vec<usize>,
    capacity: usize,
    timestep: u64,
}

impl DesState {
    /// Sample humans and routines. Each segment lands on the object's
    /// commonsense location with probability `p_commonsense`, otherwise on a
    /// uniformly chosen other location.
    pub fn init(
        n_humans: usize,
        kb: &KnowledgeBase,
        p_commonsense: f64,
        params: &DesParams,
        seed: u64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_commonsense) {
            return Err(Error::Config(format!(
                "p_commonsense {p_commonsense} outside [0, 1]"
            )));
        }
        params.validate()?;
        let locations = kb.locations().to_vec();
        if locations.len() < 2 {
            return Err(Error::Config("need at least two locations".into()));
        }
        if n_humans > locations.len() * params.location_capacity {
            return Err(Error::Config(format!(
                "{n_humans} humans cannot fit in {} locations of capacity {}",
                locations.len(),
                params.location_capacity
            )));
        }
        let loc_index: HashMap<&str, usize> = locations
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();

        let mut rng = seed::rng(seed, Stream::Des, 0);
        let mut humans = Vec::with_capacity(n_humans);
        for name in human_names(n_humans) {
            let object = kb.objects()[rng.gen_range(0..kb.objects().len())].clone();
            let common = loc_index[kb.commonsense_location(&object)?];
            let n_seg = rng.gen_range(params.min_segments..=params.max_segments);
            let mut segments = Vec::with_capacity(n_seg);
            for _ in 0..n_seg {
                let loc = if rng.gen_bool(p_commonsense) {
                    common
                } else {
                    // Uniform over the other locations.
                    let k = rng.gen_range(0..locations.len() - 1);
                    if k >= common {
                        k + 1
                    } else {
                        k
                    }
                };
                let duration = rng.gen_range(params.min_duration..=params.max_duration);
                segments.push(Segment {
                    location: locations[loc].clone(),
                    duration,
                });
            }
            humans.push(Human {
                name,
                object,
                routine: Routine::new(segments)?,
            });
        }
        Self::from_humans(humans, locations, params.location_capacity)
    }

    /// Build from explicit humans; each starts at its first segment, or the
    /// next segment with room, or the first location with room.
    pub fn from_humans(humans: Vec<Human>, locations: Vec<String>, capacity: usize) -> Result<Self> {
        let loc_index: HashMap<&str, usize> = locations
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let mut names = std::collections::HashSet::new();
        for h in &humans {
            if h.name.contains('\'') || h.name.is_empty() || !names.insert(h.name.as_str()) {
                return Err(Error::Config(format!("invalid or duplicate human {:?}", h.name)));
            }
            for s in h.routine.segments() {
                if !loc_index.contains_key(s.location.as_str()) {
                    return Err(Error::Config(format!("unknown location {:?}", s.location)));
                }
            }
        }
        if humans.len() > locations.len() * capacity {
            return Err(Error::Config("humans exceed total location capacity".into()));
        }
        let mut occupancy = vec![0; locations.len()];
        let mut current = Vec::with_capacity(humans.len());
        for h in &humans {
            let segs = h.routine.segments();
            let loc = (0..segs.len())
                .map(|k| loc_index[segs[k].location.as_str()])
                .find(|&l| occupancy[l] < capacity)
                .or_else(|| (0..locations.len()).find(|&l| occupancy[l] < capacity))
                .expect("total capacity checked above");
            occupancy[loc] += 1;
            current.push(loc);
        }
        Ok(Self {
            humans,
            locations,
            current,
            occupancy,
            capacity,
            timestep: 0,
        })
    }

    pub fn humans(&self) -> &[Human] {
        &self.humans
    }

    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn occupancy(&self, location: &str) -> usize {
        self.locations
            .iter()
            .position(|l| l == location)
            .map_or(0, |i| self.occupancy[i])
    }

    pub fn location_of(&self, index: usize) -> &str {
        &self.locations[self.current[index]]
    }

    pub fn true_location(&self, human: &str) -> Result<&str> {
        self.humans
            .iter()
            .position(|h| h.name == human)
            .map(|i| self.location_of(i))
            .ok_or_else(|| Error::UnknownHuman(human.to_string()))
    }

    /// Advance one step. Humans move in index order, so earlier humans win
    /// contested locations.
    pub fn tick(&mut self) -> Vec<Event> {
        self.timestep += 1;
        let mut events = Vec::new();
        for i in 0..self.humans.len() {
            let routine = &self.humans[i].routine;
            let prev = routine.segment_after(self.timestep - 1);
            let seg = routine.segment_after(self.timestep);
            if seg == prev {
                continue;
            }
            let segs = routine.segments();
            let from = self.current[i];
            let target = (0..segs.len())
                .map(|k| {
                    let loc = &segs[(seg + k) % segs.len()].location;
                    self.locations
                        .iter()
                        .position(|l| l == loc)
                        .expect("routine locations validated")
                })
                .find(|&l| l == from || self.occupancy[l] < self.capacity);
            match target {
                Some(to) if to != from => {
                    self.occupancy[from] -= 1;
                    self.occupancy[to] += 1;
                    self.current[i] = to;
                    let h = &self.humans[i];
                    events.push(Event {
                        human: h.name.clone(),
                        object: h.object.clone(),
                        from: self.locations[from].clone(),
                        to: self.locations[to].clone(),
                    });
                }
                _ => {}
            }
        }
        events
    }

    /// Occupancy per location recomputed from current positions.
    pub fn recount(&self) -> Vec<usize> {
        let mut occ = vec![0; self.locations.len()];
        for &l in &self.current {
            occ[l] += 1;
        }
        occ
    }

    pub fn occupancy_counts(&self) -> &[usize] {
        &self.occupancy
    }
}
