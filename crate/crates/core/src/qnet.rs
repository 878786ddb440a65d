//! Q-network over the three memory systems.
//!
//! Each memory is turned into a sequence of quadruple embeddings (sorted
//! ascending by timestamp or strength, so the most recent or strongest entry
//! is fed last). Every system has its own LSTM and branch MLP; the three
//! branch outputs are concatenated and mapped to one Q-value per action.
//!
//! Quadruple embedding: `head ∥ relation ∥ tail`, each `d_emb` wide. For
//! owner-qualified heads the head slot is `emb(human) + emb(object)`. The
//! relation slot is always zero since only one relation exists.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::kb::KnowledgeBase;
use crate::memory::{strip_owner, Action, AgentMemory, MemoryKind, MemorySystem};
use crate::nn::{relu, relu_backward, Embedding, Linear, Lstm, LstmCache, ParamTensor};

/// Token ids for humans, objects and locations. Id 0 is the relation token,
/// whose embedding row is never read.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabNames")]
pub struct Vocabulary {
    humans: Vec<String>,
    objects: Vec<String>,
    locations: Vec<String>,
    #[serde(skip)]
    index: VocabIndex,
}

#[derive(Deserialize)]
struct VocabNames {
    humans: Vec<String>,
    objects: Vec<String>,
    locations: Vec<String>,
}

impl From<VocabNames> for Vocabulary {
    fn from(v: VocabNames) -> Self {
        Vocabulary::new(v.humans, v.objects, v.locations)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct VocabIndex {
    humans: HashMap<String, usize>,
    objects: HashMap<String, usize>,
    locations: HashMap<String, usize>,
}

impl Vocabulary {
    pub const RELATION: usize = 0;

    pub fn new(humans: Vec<String>, objects: Vec<String>, locations: Vec<String>) -> Self {
        let mut v = Self {
            humans,
            objects,
            locations,
            index: VocabIndex::default(),
        };
        v.rebuild_index();
        v
    }

    pub fn from_kb(humans: Vec<String>, kb: &KnowledgeBase) -> Self {
        Self::new(humans, kb.objects().to_vec(), kb.locations().to_vec())
    }

    fn rebuild_index(&mut self) {
        let mut next = 1;
        let mut build = |names: &[String]| {
            names
                .iter()
                .map(|n| {
                    let id = next;
                    next += 1;
                    (n.clone(), id)
                })
                .collect::<HashMap<_, _>>()
        };
        self.index = VocabIndex {
            humans: build(&self.humans),
            objects: build(&self.objects),
            locations: build(&self.locations),
        };
    }

    pub fn len(&self) -> usize {
        1 + self.humans.len() + self.objects.len() + self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn human(&self, name: &str) -> Result<usize> {
        self.index
            .humans
            .get(name)
            .copied()
            .ok_or_else(|| Error::Untokenizable(name.to_string()))
    }

    pub fn object(&self, name: &str) -> Result<usize> {
        self.index
            .objects
            .get(name)
            .copied()
            .ok_or_else(|| Error::Untokenizable(name.to_string()))
    }

    pub fn location(&self, name: &str) -> Result<usize> {
        self.index
            .locations
            .get(name)
            .copied()
            .ok_or_else(|| Error::Untokenizable(name.to_string()))
    }

    /// Head tokens (one for semantic entries, human + object otherwise) and
    /// the tail token.
    fn tokens(&self, kind: MemoryKind, head: &str, tail: &str) -> Result<RowTokens> {
        let (h1, h2) = match kind {
            MemoryKind::Semantic => (self.object(head)?, None),
            MemoryKind::ShortTerm | MemoryKind::Episodic => {
                let (human, object) =
                    strip_owner(head).map_err(|_| Error::Untokenizable(head.to_string()))?;
                (self.human(human)?, Some(self.object(object)?))
            }
        };
        Ok(RowTokens {
            head: h1,
            owner_object: h2,
            tail: self.location(tail)?,
        })
    }

    fn names(&self) -> [&[String]; 3] {
        [&self.humans, &self.objects, &self.locations]
    }
}

#[derive(Clone, Copy, Debug)]
struct RowTokens {
    head: usize,
    owner_object: Option<usize>,
    tail: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QNetDims {
    pub d_emb: usize,
    pub hidden: usize,
    pub lstm_layers: usize,
}

impl QNetDims {
    pub fn paper() -> Self {
        Self {
            d_emb: 32,
            hidden: 64,
            lstm_layers: 2,
        }
    }
}

pub const N_ACTIONS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QNetworkParams {
    pub dims: QNetDims,
    pub embedding: Embedding,
    /// Short-term, episodic, semantic.
    pub lstms: [Lstm; 3],
    pub branches: [Linear; 3],
    pub head_hidden: Linear,
    pub head_out: Linear,
}

/// Memory entries sorted ascending by value; ties keep insertion order.
pub fn sorted_entries(m: &MemorySystem) -> Vec<&crate::memory::Quadruple> {
    let mut e: Vec<_> = m.entries().iter().collect();
    e.sort_by_key(|q| q.value);
    e
}

/// Embed one memory system as a sequence of `3 * d_emb` vectors.
pub fn kge_encode(m: &MemorySystem, vocab: &Vocabulary, emb: &Embedding) -> Result<Vec<Vec<f64>>> {
    let d = emb.dim();
    sorted_entries(m)
        .into_iter()
        .map(|q| {
            let tok = vocab.tokens(m.kind(), &q.head, &q.tail)?;
            let mut v = vec![0.0; 3 * d];
            write_row(&mut v, &tok, emb, d)?;
            Ok(v)
        })
        .collect()
}

fn write_row(out: &mut [f64], tok: &RowTokens, emb: &Embedding, d: usize) -> Result<()> {
    out[..d].copy_from_slice(emb.row(tok.head)?);
    if let Some(o) = tok.owner_object {
        for (x, y) in out[..d].iter_mut().zip(emb.row(o)?) {
            *x += y;
        }
    }
    out[2 * d..3 * d].copy_from_slice(emb.row(tok.tail)?);
    Ok(())
}

/// Encoded padded batch for one branch.
struct BranchInput {
    x: Array2<f64>,
    lengths: Vec<usize>,
    /// Token ids per row (`t * batch + b`); `None` for padding.
    tokens: Vec<Option<RowTokens>>,
}

fn encode_branch(
    systems: &[&MemorySystem],
    vocab: &Vocabulary,
    emb: &Embedding,
) -> Result<BranchInput> {
    let d = emb.dim();
    let batch = systems.len();
    let lengths: Vec<usize> = systems.iter().map(|m| m.len()).collect();
    let steps = lengths.iter().copied().max().unwrap_or(0);
    let mut x = Array2::zeros((steps * batch, 3 * d));
    let mut tokens = vec![None; steps * batch];
    for (b, m) in systems.iter().enumerate() {
        for (t, q) in sorted_entries(m).into_iter().enumerate() {
            let r = t * batch + b;
            let tok = vocab.tokens(m.kind(), &q.head, &q.tail)?;
            write_row(
                x.row_mut(r).as_slice_mut().expect("standard layout"),
                &tok,
                emb,
                d,
            )?;
            tokens[r] = Some(tok);
        }
    }
    Ok(BranchInput { x, lengths, tokens })
}

struct BranchCache {
    tokens: Vec<Option<RowTokens>>,
    lstm: LstmCache,
    last: Array2<f64>,
    pre: Array2<f64>,
}

/// Everything the backward pass needs from a batched forward pass.
pub struct ForwardCache {
    branches: Vec<BranchCache>,
    concat: Array2<f64>,
    hidden_pre: Array2<f64>,
    hidden: Array2<f64>,
}

/// Intermediate activations of a single-state forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Activations {
    pub branch_last_hidden: [Vec<f64>; 3],
    pub branch_out: [Vec<f64>; 3],
    pub head_hidden: Vec<f64>,
    pub q: [f64; N_ACTIONS],
}

impl QNetworkParams {
    /// Uniform `±1/sqrt(fan_in)` initialisation.
    pub fn new(dims: QNetDims, vocab: &Vocabulary, rng: &mut impl Rng) -> Self {
        let QNetDims {
            d_emb,
            hidden,
            lstm_layers,
        } = dims;
        let mut embedding = Embedding::new(vocab.len(), d_emb, rng);
        embedding.table.values_mut()[..d_emb]
            .iter_mut()
            .for_each(|v| *v = 0.0);
        let mut lstm = || Lstm::new(3 * d_emb, hidden, lstm_layers, rng);
        let lstms = [lstm(), lstm(), lstm()];
        let branches = [
            Linear::new(hidden, hidden, rng),
            Linear::new(hidden, hidden, rng),
            Linear::new(hidden, hidden, rng),
        ];
        let head_hidden = Linear::new(3 * hidden, hidden, rng);
        let head_out = Linear::new(hidden, N_ACTIONS, rng);
        Self {
            dims,
            embedding,
            lstms,
            branches,
            head_hidden,
            head_out,
        }
    }

    /// Parameters in a fixed order, with names.
    pub fn named_params(&self) -> Vec<(String, &ParamTensor)> {
        let mut out = vec![("embedding".to_string(), &self.embedding.table)];
        for (k, name) in ["short_term", "episodic", "semantic"].iter().enumerate() {
            for (i, layer) in self.lstms[k].layers.iter().enumerate() {
                for (p, pn) in layer.params().into_iter().zip(["w_ih", "w_hh", "bias"]) {
                    out.push((format!("lstm_{name}.{i}.{pn}"), p));
                }
            }
            for (p, pn) in self.branches[k].params().into_iter().zip(["weight", "bias"]) {
                out.push((format!("mlp_{name}.{pn}"), p));
            }
        }
        for (p, pn) in self.head_hidden.params().into_iter().zip(["weight", "bias"]) {
            out.push((format!("head.0.{pn}"), p));
        }
        for (p, pn) in self.head_out.params().into_iter().zip(["weight", "bias"]) {
            out.push((format!("head.1.{pn}"), p));
        }
        out
    }

    /// Same order as [`named_params`](Self::named_params).
    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = vec![&mut self.embedding.table];
        for (lstm, branch) in self.lstms.iter_mut().zip(self.branches.iter_mut()) {
            out.extend(lstm.params_mut());
            out.extend(branch.params_mut());
        }
        out.extend(self.head_hidden.params_mut());
        out.extend(self.head_out.params_mut());
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Q-values for a batch of memory states, `batch x 3`, in action order
    /// `[forget, to_episodic, to_semantic]`.
    pub fn forward(
        &self,
        vocab: &Vocabulary,
        states: &[&AgentMemory],
    ) -> Result<(Array2<f64>, ForwardCache)> {
        let batch = states.len();
        let mut outs = Vec::with_capacity(3);
        let mut branches = Vec::with_capacity(3);
        for k in 0..3 {
            let systems: Vec<&MemorySystem> = states.iter().map(|s| s.systems()[k]).collect();
            let input = encode_branch(&systems, vocab, &self.embedding)?;
            let (last, lstm_cache) = self.lstms[k].forward(input.x, &input.lengths)?;
            let pre = self.branches[k].forward(last.view())?;
            outs.push(relu(&pre));
            branches.push(BranchCache {
                tokens: input.tokens,
                lstm: lstm_cache,
                last,
                pre,
            });
        }
        let views: Vec<ArrayView2<f64>> = outs.iter().map(|o| o.view()).collect();
        let concat = if batch == 0 {
            Array2::zeros((0, 3 * self.dims.hidden))
        } else {
            concatenate(Axis(1), &views).expect("equal row counts")
        };
        let hidden_pre = self.head_hidden.forward(concat.view())?;
        let hidden = relu(&hidden_pre);
        let q = self.head_out.forward(hidden.view())?;
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("q-values"));
        }
        Ok((
            q,
            ForwardCache {
                branches,
                concat,
                hidden_pre,
                hidden,
            },
        ))
    }

    /// Accumulate gradients of `sum(dq ⊙ q)` into every parameter.
    pub fn backward(&mut self, cache: &ForwardCache, dq: ArrayView2<f64>) {
        let d_hidden = self.head_out.backward(cache.hidden.view(), dq);
        let d_hidden_pre = relu_backward(&cache.hidden_pre, &d_hidden);
        let d_concat = self
            .head_hidden
            .backward(cache.concat.view(), d_hidden_pre.view());
        let h = self.dims.hidden;
        let d = self.dims.d_emb;
        for (k, bc) in cache.branches.iter().enumerate() {
            let d_out = d_concat.slice(s![.., k * h..(k + 1) * h]).to_owned();
            let d_pre = relu_backward(&bc.pre, &d_out);
            let d_last = self.branches[k].backward(bc.last.view(), d_pre.view());
            let dx = self.lstms[k].backward(&bc.lstm, d_last.view());
            let grad = self.embedding.table.grad_mut();
            for (r, tok) in bc.tokens.iter().enumerate() {
                let Some(tok) = tok else { continue };
                let row = dx.row(r);
                let row = row.as_slice().expect("standard layout");
                let mut add = |id: usize, src: &[f64]| {
                    for (g, v) in grad[id * d..(id + 1) * d].iter_mut().zip(src) {
                        *g += v;
                    }
                };
                add(tok.head, &row[..d]);
                if let Some(o) = tok.owner_object {
                    add(o, &row[..d]);
                }
                add(tok.tail, &row[2 * d..]);
            }
        }
    }

    pub fn q_values(&self, vocab: &Vocabulary, state: &AgentMemory) -> Result<[f64; N_ACTIONS]> {
        let (q, _) = self.forward(vocab, &[state])?;
        Ok([q[[0, 0]], q[[0, 1]], q[[0, 2]]])
    }

    /// Single-state forward exposing intermediate activations for probing.
    pub fn activations(&self, vocab: &Vocabulary, state: &AgentMemory) -> Result<Activations> {
        let (q, cache) = self.forward(vocab, &[state])?;
        let row = |a: &Array2<f64>| a.row(0).to_vec();
        let h = self.dims.hidden;
        let branch_out = |k: usize| cache.concat.slice(s![0, k * h..(k + 1) * h]).to_vec();
        Ok(Activations {
            branch_last_hidden: [
                row(&cache.branches[0].last),
                row(&cache.branches[1].last),
                row(&cache.branches[2].last),
            ],
            branch_out: [branch_out(0), branch_out(1), branch_out(2)],
            head_hidden: row(&cache.hidden),
            q: [q[[0, 0]], q[[0, 1]], q[[0, 2]]],
        })
    }

    pub fn quantize_f32(&mut self) {
        for p in self.params_mut() {
            p.quantize_f32();
        }
    }
}

/// Highest-valued action; ties go to the lowest index.
pub fn greedy_action(q: &[f64; N_ACTIONS]) -> Result<Action> {
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("q-values"));
    }
    let mut best = 0;
    for i in 1..N_ACTIONS {
        if q[i] > q[best] {
            best = i;
        }
    }
    Ok(Action::from_index(best).expect("index below action count"))
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"ROOMQNET";
const CHECKPOINT_VERSION: u32 = 1;

/// Trained network plus the vocabulary it was trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub vocab: Vocabulary,
    pub params: QNetworkParams,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Checkpoint("unexpected end of data".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid utf-8".into()))
    }
}

impl Checkpoint {
    /// Little-endian layout: magic, version, dims, vocabulary, then a
    /// manifest entry (name, rank, shape) plus raw values per tensor, and a
    /// trailing SHA-256 over everything before it.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        let QNetDims {
            d_emb,
            hidden,
            lstm_layers,
        } = self.params.dims;
        for v in [d_emb, hidden, lstm_layers] {
            put_u32(&mut out, v as u32);
        }
        for names in self.vocab.names() {
            put_u32(&mut out, names.len() as u32);
            for n in names {
                put_str(&mut out, n);
            }
        }
        let params = self.params.named_params();
        put_u32(&mut out, params.len() as u32);
        for (name, p) in params {
            put_str(&mut out, &name);
            put_u32(&mut out, p.shape().len() as u32);
            for &d in p.shape() {
                put_u32(&mut out, d as u32);
            }
            for v in p.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 44 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        let mut r = Reader { buf: &body[8..] };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "version mismatch: file {version}, supported {CHECKPOINT_VERSION}"
            )));
        }
        let dims = QNetDims {
            d_emb: r.u32()? as usize,
            hidden: r.u32()? as usize,
            lstm_layers: r.u32()? as usize,
        };
        if dims.d_emb == 0 || dims.hidden == 0 || dims.lstm_layers == 0 {
            return Err(Error::Checkpoint("zero dimension".into()));
        }
        let mut lists = Vec::new();
        for _ in 0..3 {
            let n = r.u32()? as usize;
            let names = (0..n).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
            lists.push(names);
        }
        let locations = lists.pop().unwrap();
        let objects = lists.pop().unwrap();
        let humans = lists.pop().unwrap();
        let vocab = Vocabulary::new(humans, objects, locations);

        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let mut params = QNetworkParams::new(dims, &vocab, &mut rng);
        let expected: Vec<(String, Vec<usize>)> = params
            .named_params()
            .into_iter()
            .map(|(n, p)| (n, p.shape().to_vec()))
            .collect();
        let count = r.u32()? as usize;
        if count != expected.len() {
            return Err(Error::Checkpoint(format!(
                "{count} tensors, expected {}",
                expected.len()
            )));
        }
        for ((name, shape), p) in expected.iter().zip(params.params_mut()) {
            let got = r.string()?;
            let rank = r.u32()? as usize;
            let got_shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if &got != name || &got_shape != shape {
                return Err(Error::Checkpoint(format!(
                    "manifest mismatch: {got} {got_shape:?} vs {name} {shape:?}"
                )));
            }
            for v in p.values_mut() {
                *v = r.f64()?;
            }
        }
        if !r.buf.is_empty() {
            return Err(Error::Checkpoint("trailing data".into()));
        }
        Ok(Self { vocab, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        crate::util::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::Quadruple;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vocab() -> Vocabulary {
        Vocabulary::new(
            vec!["Bob".into(), "Ann".into()],
            vec!["laptop".into(), "train".into()],
            vec!["desk".into(), "zoo".into()],
        )
    }

    fn small(v: &Vocabulary) -> QNetworkParams {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        QNetworkParams::new(
            QNetDims {
                d_emb: 4,
                hidden: 8,
                lstm_layers: 2,
            },
            v,
            &mut rng,
        )
    }

    #[test]
    fn episodic_entry_encoding() {
        let v = vocab();
        let p = small(&v);
        let mut m = MemorySystem::new(MemoryKind::Episodic, 4);
        assert!(kge_encode(&m, &v, &p.embedding).unwrap().is_empty());
        m.observe(Quadruple::new("Bob's laptop", "desk", 42)).unwrap();
        let enc = kge_encode(&m, &v, &p.embedding).unwrap();
        assert_eq!(enc.len(), 1);
        let e = |id| p.embedding.lookup(id).unwrap();
        let bob = e(v.human("Bob").unwrap());
        let laptop = e(v.object("laptop").unwrap());
        let desk = e(v.location("desk").unwrap());
        let mut expect: Vec<f64> = bob.iter().zip(&laptop).map(|(a, b)| a + b).collect();
        expect.extend([0.0; 4]);
        expect.extend(desk);
        assert_eq!(enc[0], expect);
    }

    #[test]
    fn semantic_sorted_by_strength() {
        let v = vocab();
        let p = small(&v);
        let mut m = MemorySystem::new(MemoryKind::Semantic, 4);
        // Build via the short-term path to get genuine semantic entries.
        let mut mem = AgentMemory::new(1, 0, 4);
        for (h, t) in [("Bob's laptop", "desk"), ("Ann's laptop", "desk"), ("Ann's laptop", "desk"), ("Bob's train", "zoo")] {
            mem.short_term.observe(Quadruple::new(h, t, 0)).unwrap();
            mem.apply_action(Action::ToSemantic).unwrap();
        }
        std::mem::swap(&mut m, &mut mem.semantic);
        let enc = kge_encode(&m, &v, &p.embedding).unwrap();
        let train = p.embedding.lookup(v.object("train").unwrap()).unwrap();
        let laptop = p.embedding.lookup(v.object("laptop").unwrap()).unwrap();
        assert_eq!(enc[0][..4], train[..]);
        assert_eq!(enc[1][..4], laptop[..]);
    }

    #[test]
    fn untokenizable_entity() {
        let v = vocab();
        let p = small(&v);
        let mut m = MemorySystem::new(MemoryKind::Episodic, 4);
        m.observe(Quadruple::new("Zed's laptop", "desk", 1)).unwrap();
        assert!(matches!(
            kge_encode(&m, &v, &p.embedding),
            Err(Error::Untokenizable(_))
        ));
    }

    #[test]
    fn empty_memories_give_finite_q() {
        let v = vocab();
        let p = small(&v);
        let mem = AgentMemory::new(1, 2, 2);
        let q = p.q_values(&v, &mem).unwrap();
        assert!(q.iter().all(|x| x.is_finite()));
        assert_eq!(q, p.q_values(&v, &mem).unwrap());
    }

    #[test]
    fn greedy_examples() {
        assert_eq!(greedy_action(&[0.1, 0.9, 0.3]).unwrap(), Action::ToEpisodic);
        assert_eq!(greedy_action(&[0.5, 0.5, 0.2]).unwrap(), Action::Forget);
        assert!(greedy_action(&[0.5, f64::NAN, 0.2]).is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let v = vocab();
        let p = small(&v);
        let ck = Checkpoint {
            vocab: v.clone(),
            params: p,
        };
        let bytes = ck.to_bytes();
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
        let mut bad = bytes.clone();
        bad[100] ^= 0xff;
        assert!(Checkpoint::from_bytes(&bad).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..50]).is_err());
    }

    #[test]
    fn batched_forward_matches_single() {
        let v = vocab();
        let p = small(&v);
        let mut a = AgentMemory::new(1, 3, 3);
        a.short_term.observe(Quadruple::new("Ann's train", "zoo", 5)).unwrap();
        let mut b = a.clone();
        b.apply_action(Action::ToEpisodic).unwrap();
        b.short_term.observe(Quadruple::new("Bob's laptop", "desk", 6)).unwrap();
        let (q, _) = p.forward(&v, &[&a, &b]).unwrap();
        let qa = p.q_values(&v, &a).unwrap();
        let qb = p.q_values(&v, &b).unwrap();
        for i in 0..3 {
            assert!((q[[0, i]] - qa[i]).abs() < 1e-12);
            assert!((q[[1, i]] - qb[i]).abs() < 1e-12);
        }
    }
}
