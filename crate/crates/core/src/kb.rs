//! Object/location vocabulary and commonsense location knowledge.
//!
//! A knowledge base is a weighted bipartite graph between object names and
//! location names. The commonsense location of an object is its heaviest
//! edge. It is consumed by the DES (routine placement) and by the pretrained
//! agent (semantic prefill).

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub object: String,
    pub location: String,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    objects: Vec<String>,
    locations: Vec<String>,
    edges: Vec<Edge>,
}

const OBJECT_POOL: &[&str] = &[
    "laptop", "bowl", "train", "pill", "book", "mug", "phone", "umbrella", "keys", "glasses",
    "wallet", "towel", "pillow", "plate", "fork", "guitar", "camera", "shoe", "hat", "lamp",
    "remote", "scarf", "bottle", "candle", "clock", "comb", "notebook", "pen", "racket", "vase",
    "blanket", "backpack",
];

const LOCATION_POOL: &[&str] = &[
    "desk", "cupboard", "wardrobe", "lap", "zoo", "kitchen", "circus", "shelf", "drawer", "table",
    "sofa", "bed", "sink", "closet", "garage", "bathroom", "counter", "nightstand", "floor",
    "windowsill", "basket", "box", "bag", "pocket", "attic", "cellar", "porch", "hallway",
    "balcony", "fridge", "oven", "bench",
];

fn pool_name(pool: &[&str], i: usize) -> String {
    if i < pool.len() {
        pool[i].to_string()
    } else {
        format!("{}{}", pool[i % pool.len()], i / pool.len() + 1)
    }
}

impl KnowledgeBase {
    /// Build and validate a knowledge base from edges. Vocabulary order is
    /// first-appearance order.
    pub fn from_edges(edges: Vec<Edge>) -> Result<Self> {
        let mut objects = Vec::new();
        let mut locations = Vec::new();
        let mut seen_obj = HashSet::new();
        let mut seen_loc = HashSet::new();
        let mut pairs = HashSet::new();
        for e in &edges {
            if !(e.weight.is_finite() && e.weight > 0.0) {
                return Err(Error::Config(format!(
                    "edge ({}, {}) has non-positive weight {}",
                    e.object, e.location, e.weight
                )));
            }
            if !pairs.insert((e.object.as_str(), e.location.as_str())) {
                return Err(Error::KbDuplicate {
                    object: e.object.clone(),
                    location: e.location.clone(),
                });
            }
            if seen_obj.insert(e.object.as_str()) {
                objects.push(e.object.clone());
            }
            if seen_loc.insert(e.location.as_str()) {
                locations.push(e.location.clone());
            }
        }
        Self::new(objects, locations, edges)
    }

    /// Build from explicit vocabularies. Every name in `edges` must appear in
    /// the lists and every object needs at least one edge.
    pub fn new(objects: Vec<String>, locations: Vec<String>, edges: Vec<Edge>) -> Result<Self> {
        if objects.is_empty() {
            return Err(Error::KbEmpty);
        }
        let obj_set: HashSet<&str> = objects.iter().map(String::as_str).collect();
        let loc_set: HashSet<&str> = locations.iter().map(String::as_str).collect();
        if obj_set.len() != objects.len() || loc_set.len() != locations.len() {
            return Err(Error::Config("duplicate vocabulary entry".into()));
        }
        let mut pairs = HashSet::new();
        let mut covered = HashSet::new();
        for e in &edges {
            if !obj_set.contains(e.object.as_str()) {
                return Err(Error::KbDangling(e.object.clone()));
            }
            if !loc_set.contains(e.location.as_str()) {
                return Err(Error::KbDangling(e.location.clone()));
            }
            if !pairs.insert((e.object.as_str(), e.location.as_str())) {
                return Err(Error::KbDuplicate {
                    object: e.object.clone(),
                    location: e.location.clone(),
                });
            }
            covered.insert(e.object.as_str());
        }
        if let Some(o) = objects.iter().find(|o| !covered.contains(o.as_str())) {
            return Err(Error::KbDangling(o.clone()));
        }
        for name in objects.iter().chain(&locations) {
            if name.is_empty() || name.contains('\'') || name.contains(char::is_whitespace) {
                return Err(Error::Config(format!("invalid entity name {name:?}")));
            }
        }
        Ok(Self {
            objects,
            locations,
            edges,
        })
    }

    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn contains_object(&self, object: &str) -> bool {
        self.objects.iter().any(|o| o == object)
    }

    /// Location of the heaviest edge for `object`; equal weights resolve to
    /// the lexicographically smallest location.
    pub fn commonsense_location(&self, object: &str) -> Result<&str> {
        let mut best: Option<&Edge> = None;
        for e in self.edges.iter().filter(|e| e.object == object) {
            best = match best {
                None => Some(e),
                Some(b) if e.weight > b.weight => Some(e),
                Some(b) if e.weight == b.weight && e.location < b.location => Some(e),
                keep => keep,
            };
        }
        best.map(|e| e.location.as_str())
            .ok_or_else(|| Error::UnknownObject(object.to_string()))
    }

    /// Commonsense location for every object, keyed by object name.
    pub fn commonsense_map(&self) -> HashMap<String, String> {
        self.objects
            .iter()
            .map(|o| {
                let loc = self
                    .commonsense_location(o)
                    .expect("validated kb has an edge per object");
                (o.clone(), loc.to_string())
            })
            .collect()
    }

    /// Parse the TSV format: `object<TAB>location<TAB>weight`, `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(Error::KbParse {
                    line: line_no,
                    msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let weight: f64 = fields[2].trim().parse().map_err(|_| Error::KbParse {
                line: line_no,
                msg: format!("bad weight {:?}", fields[2]),
            })?;
            if !(weight.is_finite() && weight > 0.0) {
                return Err(Error::KbParse {
                    line: line_no,
                    msg: format!("weight must be positive, got {weight}"),
                });
            }
            edges.push(Edge {
                object: fields[0].trim().to_string(),
                location: fields[1].trim().to_string(),
                weight,
            });
        }
        Self::from_edges(edges)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("# object\tlocation\tweight\n");
        for e in &self.edges {
            let _ = writeln!(out, "{}\t{}\t{}", e.object, e.location, e.weight);
        }
        out
    }

    /// Seeded stand-in for a real commonsense graph: each object gets one
    /// heavy edge (weight in [2, 5]) and 1-3 light distractors (weight in
    /// (0, 1]).
    pub fn generate_synthetic(seed: u64, n_objects: usize, n_locations: usize) -> Result<Self> {
        if n_objects < 1 {
            return Err(Error::Config("n_objects must be >= 1".into()));
        }
        if n_locations < 2 {
            return Err(Error::Config(
                "n_locations must be >= 2 to leave room for distractors".into(),
            ));
        }
        let mut rng = seed::rng(seed, Stream::KnowledgeBase, 0);
        let objects: Vec<String> = (0..n_objects).map(|i| pool_name(OBJECT_POOL, i)).collect();
        let locations: Vec<String> = (0..n_locations)
            .map(|i| pool_name(LOCATION_POOL, i))
            .collect();
        let mut per_object: Vec<Vec<Edge>> = Vec::with_capacity(n_objects);
        let mut used = vec![false; n_locations];
        for object in &objects {
            let main = rng.gen_range(0..n_locations);
            used[main] = true;
            let weight = (rng.gen_range(2.0..=5.0_f64) * 1000.0).round() / 1000.0;
            let mut edges = vec![Edge {
                object: object.clone(),
                location: locations[main].clone(),
                weight,
            }];
            let mut others: Vec<usize> = (0..n_locations).filter(|&l| l != main).collect();
            others.shuffle(&mut rng);
            let n_distractors = rng.gen_range(1..=3).min(others.len());
            for &l in &others[..n_distractors] {
                used[l] = true;
                edges.push(Edge {
                    object: object.clone(),
                    location: locations[l].clone(),
                    weight: distractor_weight(&mut rng),
                });
            }
            per_object.push(edges);
        }
        // Every location must carry an edge, otherwise the TSV form cannot
        // represent it. Spare distractor slots absorb the leftovers.
        let mut slot = 0;
        for l in (0..n_locations).filter(|&l| !used[l]) {
            let candidate = (0..n_objects)
                .map(|k| (slot + k) % n_objects)
                .find(|&o| per_object[o].len() < 4);
            let Some(o) = candidate else { break };
            per_object[o].push(Edge {
                object: objects[o].clone(),
                location: locations[l].clone(),
                weight: distractor_weight(&mut rng),
            });
            slot = o + 1;
        }
        let edges: Vec<Edge> = per_object.into_iter().flatten().collect();
        let mut kb = Self::from_edges(edges)?;
        // Locations left without an edge (only when n_locations > 4 * n_objects)
        // still belong to the vocabulary.
        for loc in locations {
            if !kb.locations.contains(&loc) {
                kb.locations.push(loc);
            }
        }
        Ok(kb)
    }
}

fn distractor_weight(rng: &mut impl Rng) -> f64 {
    // 1 - u lies in (0, 1]; rounding keeps the TSV readable.
    ((1.0 - rng.gen::<f64>()) * 1000.0).round().max(1.0) / 1000.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_edges() {
        let kb = KnowledgeBase::parse("bowl\tcupboard\t3.0\nbowl\twardrobe\t1.0\n").unwrap();
        assert_eq!(kb.objects(), ["bowl"]);
        assert_eq!(kb.locations(), ["cupboard", "wardrobe"]);
        assert_eq!(kb.edges().len(), 2);
        assert_eq!(kb.commonsense_location("bowl").unwrap(), "cupboard");
    }

    #[test]
    fn empty_file_has_no_objects() {
        assert!(matches!(KnowledgeBase::parse(""), Err(Error::KbEmpty)));
        assert!(matches!(
            KnowledgeBase::parse("# only a comment\n"),
            Err(Error::KbEmpty)
        ));
    }

    #[test]
    fn duplicate_pair_rejected() {
        let err = KnowledgeBase::parse("bowl\tcupboard\t1\nbowl\tcupboard\t2\n").unwrap_err();
        assert!(matches!(err, Error::KbDuplicate { .. }));
    }

    #[test]
    fn parse_error_carries_line_number() {
        let err = KnowledgeBase::parse("# c\nbowl\tcupboard\tx\n").unwrap_err();
        assert!(matches!(err, Error::KbParse { line: 2, .. }), "{err}");
    }

    #[test]
    fn dangling_names_rejected() {
        let edges = vec![Edge {
            object: "bowl".into(),
            location: "attic".into(),
            weight: 1.0,
        }];
        let err = KnowledgeBase::new(vec!["bowl".into()], vec!["desk".into()], edges).unwrap_err();
        assert!(matches!(err, Error::KbDangling(_)));
    }

    #[test]
    fn single_edge_is_commonsense() {
        let kb = KnowledgeBase::parse("mug\tshelf\t0.2\n").unwrap();
        assert_eq!(kb.commonsense_location("mug").unwrap(), "shelf");
    }

    #[test]
    fn unknown_object_errors() {
        let kb = KnowledgeBase::parse("mug\tshelf\t0.2\n").unwrap();
        assert!(matches!(
            kb.commonsense_location("laptop"),
            Err(Error::UnknownObject(_))
        ));
    }

    #[test]
    fn tie_breaks_lexicographically_in_either_order() {
        let a = KnowledgeBase::parse("pen\tdeskA\t2.0\npen\tdeskB\t2.0\n").unwrap();
        let b = KnowledgeBase::parse("pen\tdeskB\t2.0\npen\tdeskA\t2.0\n").unwrap();
        assert_eq!(a.commonsense_location("pen").unwrap(), "deskA");
        assert_eq!(b.commonsense_location("pen").unwrap(), "deskA");
    }

    #[test]
    fn synthetic_kb_shape_and_determinism() {
        let kb = KnowledgeBase::generate_synthetic(7, 16, 28).unwrap();
        assert_eq!(kb.objects().len(), 16);
        assert_eq!(kb.locations().len(), 28);
        for o in kb.objects() {
            let mut w: Vec<f64> = kb
                .edges()
                .iter()
                .filter(|e| &e.object == o)
                .map(|e| e.weight)
                .collect();
            w.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert!(w.len() >= 2 && w.len() <= 4);
            assert!(w[0] > w[1], "max-weight edge must be unique for {o}");
        }
        assert_eq!(kb, KnowledgeBase::generate_synthetic(7, 16, 28).unwrap());
        assert_ne!(kb, KnowledgeBase::generate_synthetic(8, 16, 28).unwrap());
    }

    #[test]
    fn tsv_round_trip() {
        let kb = KnowledgeBase::generate_synthetic(3, 5, 6).unwrap();
        assert_eq!(KnowledgeBase::parse(&kb.to_tsv()).unwrap(), kb);
    }

    #[test]
    fn synthetic_needs_two_locations() {
        assert!(KnowledgeBase::generate_synthetic(1, 4, 1).is_err());
    }
}
