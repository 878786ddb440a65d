//! Brute-force retrieval oracle and random memory states for it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use room_agent_core::memory::{owner_head, Action, AgentMemory, Quadruple, Question};

const HUMANS: [&str; 4] = ["Ann", "Bo", "Cy", "Di"];
const OBJECTS: [&str; 3] = ["cup", "pen", "mug"];
const LOCATIONS: [&str; 4] = ["desk", "sink", "shelf", "bed"];

/// Scan every entry, keep the relevant ones with the maximum value, return
/// the one inserted last.
fn scan<'a>(entries: &'a [Quadruple], relevant: impl Fn(&Quadruple) -> bool) -> Option<&'a Quadruple> {
    let max = entries.iter().filter(|e| relevant(e)).map(|e| e.value).max()?;
    let mut winner = None;
    for e in entries {
        if relevant(e) && e.value == max {
            winner = Some(e);
        }
    }
    winner
}

pub fn retrieve_oracle<'a>(question: &Question, memory: &'a AgentMemory) -> Option<&'a Quadruple> {
    let head = &*question.head;
    let object = head.split("'s ").nth(1).expect("owner-qualified question");
    scan(memory.episodic.entries(), |e| &*e.head == head)
        .or_else(|| scan(memory.semantic.entries(), |e| &*e.head == object))
}

pub struct Case {
    pub memory: AgentMemory,
    pub question: Question,
}

/// A memory of up to `max_size` entries per long-term system, written
/// through the public agent loop without evictions. Timestamps come from a
/// narrow range so equal values are common.
pub fn random_case(rng: &mut ChaCha8Rng, max_size: usize) -> Case {
    let mut memory = AgentMemory::new(1, max_size, max_size);
    let n_ep = rng.gen_range(0..=max_size);
    let n_sem_writes = rng.gen_range(0..=2 * max_size);
    let ts_range = rng.gen_range(1..=8u64);
    let write = |memory: &mut AgentMemory, rng: &mut ChaCha8Rng, action: Action| {
        let h = HUMANS[rng.gen_range(0..HUMANS.len())];
        let o = OBJECTS[rng.gen_range(0..OBJECTS.len())];
        let l = LOCATIONS[rng.gen_range(0..LOCATIONS.len())];
        let ts = rng.gen_range(0..ts_range);
        memory
            .short_term
            .observe(Quadruple::new(&owner_head(h, o), l, ts))
            .unwrap();
        memory.apply_action(action).unwrap();
    };
    for _ in 0..n_ep {
        write(&mut memory, rng, Action::ToEpisodic);
    }
    for _ in 0..n_sem_writes {
        if memory.semantic.is_full() {
            break;
        }
        write(&mut memory, rng, Action::ToSemantic);
    }
    let h = HUMANS[rng.gen_range(0..HUMANS.len())];
    let o = OBJECTS[rng.gen_range(0..OBJECTS.len())];
    Case {
        memory,
        question: Question::new(&owner_head(h, o)),
    }
}

/// Number of disagreements between `retrieve` and the oracle over `n` cases.
pub fn disagreements(n: usize, max_size: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .filter(|_| {
            let case = random_case(&mut rng, max_size);
            let got = case.memory.retrieve(&case.question).unwrap();
            let want = retrieve_oracle(&case.question, &case.memory);
            // Pointer identity: the same stored entry, not just an equal one.
            match (got, want) {
                (Some(g), Some(w)) => !std::ptr::eq(g, w),
                (None, None) => false,
                _ => true,
            }
        })
        .count()
}
