//! Central finite-difference checks of the hand-written backward passes.
//!
//! Each check builds a random instance, reduces the module output to a scalar
//! with a random weighting `L = sum(w * out)`, and compares every analytic
//! gradient with `(L(x + h) - L(x - h)) / 2h`. The returned figure is the
//! worst per-tensor relative error `|g_a - g_n| / max(|g_a|, |g_n|)` in the
//! Euclidean norm.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use room_agent_core::memory::{owner_head, Action, AgentMemory, Quadruple};
use room_agent_core::nn::{huber, relu, relu_backward, Embedding, Linear, Lstm, ParamTensor};
use room_agent_core::qnet::{QNetDims, QNetworkParams, Vocabulary};

pub const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const INSTANCES: u64 = 10;

pub fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

fn weights(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

fn weighted_sum(w: &Array2<f64>, y: &Array2<f64>) -> f64 {
    (w * y).sum()
}

/// Numeric gradient of `f` with respect to every entry of `values`.
fn numeric(values: &mut [f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..values.len())
        .map(|i| {
            let orig = values[i];
            values[i] = orig + H;
            let up = f(values);
            values[i] = orig - H;
            let down = f(values);
            values[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

/// Check every tensor of a parameterized module. `loss` evaluates the scalar
/// objective for the current parameters.
fn check_params<M: Clone>(
    module: &M,
    analytic: &[Vec<f64>],
    n_tensors: usize,
    tensor: impl Fn(&mut M, usize) -> &mut ParamTensor,
    loss: impl Fn(&M) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    for k in 0..n_tensors {
        let mut probe = module.clone();
        let mut values = tensor(&mut probe, k).values().to_vec();
        let num = numeric(&mut values, |v| {
            tensor(&mut probe, k).values_mut().copy_from_slice(v);
            loss(&probe)
        });
        worst = worst.max(rel_err(&analytic[k], &num));
    }
    worst
}

pub fn embedding(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (vocab, dim, n) = (7, 4, 12);
    let mut emb = Embedding::new(vocab, dim, &mut rng);
    let ids: Vec<usize> = (0..n).map(|_| rng.gen_range(0..vocab)).collect();
    let w = weights(&mut rng, n, dim);
    let loss = |e: &Embedding| {
        ids.iter()
            .enumerate()
            .map(|(i, &id)| {
                e.row(id)
                    .unwrap()
                    .iter()
                    .zip(w.row(i))
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .sum::<f64>()
    };
    for (i, &id) in ids.iter().enumerate() {
        emb.accumulate(id, w.row(i).as_slice().unwrap()).unwrap();
    }
    let analytic = vec![emb.table.grad().to_vec()];
    check_params(&emb, &analytic, 1, |e, _| &mut e.table, loss)
}

pub fn linear(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (batch, input, output) = (3, 5, 4);
    let mut lin = Linear::new(input, output, &mut rng);
    let x = weights(&mut rng, batch, input);
    let w = weights(&mut rng, batch, output);
    let dx = lin.backward(x.view(), w.view());
    let analytic = vec![lin.weight.grad().to_vec(), lin.bias.grad().to_vec()];
    let mut worst = check_params(
        &lin,
        &analytic,
        2,
        |l, k| if k == 0 { &mut l.weight } else { &mut l.bias },
        |l| weighted_sum(&w, &l.forward(x.view()).unwrap()),
    );
    let mut xv = x.clone().into_raw_vec_and_offset().0;
    let num = numeric(&mut xv, |v| {
        let xx = Array2::from_shape_vec((batch, input), v.to_vec()).unwrap();
        weighted_sum(&w, &lin.forward(xx.view()).unwrap())
    });
    worst = worst.max(rel_err(dx.as_slice().unwrap(), &num));
    worst
}

pub fn relu_layer(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Keep inputs away from the kink so finite differences are valid.
    let x = Array2::from_shape_fn((4, 6), |_| {
        let v: f64 = rng.gen_range(1e-3..2.0);
        if rng.gen_bool(0.5) {
            v
        } else {
            -v
        }
    });
    let w = weights(&mut rng, 4, 6);
    let analytic = relu_backward(&x, &w);
    let mut xv = x.clone().into_raw_vec_and_offset().0;
    let num = numeric(&mut xv, |v| {
        let xx = Array2::from_shape_vec((4, 6), v.to_vec()).unwrap();
        weighted_sum(&w, &relu(&xx))
    });
    rel_err(analytic.as_slice().unwrap(), &num)
}

pub fn huber_loss(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut analytic = Vec::new();
    let mut num = Vec::new();
    for _ in 0..16 {
        let target = rng.gen_range(-2.0..2.0);
        // Errors on both sides of the quadratic/linear switch, not at it.
        let mag: f64 = if rng.gen_bool(0.5) {
            rng.gen_range(0.0..0.99)
        } else {
            rng.gen_range(1.01..4.0)
        };
        let pred = target + if rng.gen_bool(0.5) { mag } else { -mag };
        analytic.push(huber(pred, target).1);
        let mut p = [pred];
        num.extend(numeric(&mut p, |v| huber(v[0], target).0));
    }
    rel_err(&analytic, &num)
}

pub fn lstm(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (input, hidden, layers) = (3, 4, 2);
    let lengths = vec![3, 1, 2, 3];
    let batch = lengths.len();
    let steps = 3;
    let mut net = Lstm::new(input, hidden, layers, &mut rng);
    let mut x = weights(&mut rng, steps * batch, input);
    // Padding rows are zero, as the encoder produces them.
    for (b, &len) in lengths.iter().enumerate() {
        for t in len..steps {
            x.row_mut(t * batch + b).fill(0.0);
        }
    }
    let w = weights(&mut rng, batch, hidden);
    let (_, cache) = net.forward(x.clone(), &lengths).unwrap();
    let dx = net.backward(&cache, w.view());
    let analytic: Vec<Vec<f64>> = net.params().iter().map(|p| p.grad().to_vec()).collect();
    let n = analytic.len();
    let mut worst = check_params(
        &net,
        &analytic,
        n,
        |m, k| m.params_mut().into_iter().nth(k).unwrap(),
        |m| weighted_sum(&w, &m.forward(x.clone(), &lengths).unwrap().0),
    );
    // Input gradient on real (non-padding) rows only.
    let mut rows = Vec::new();
    for (b, &len) in lengths.iter().enumerate() {
        for t in 0..len {
            rows.push(t * batch + b);
        }
    }
    let mut a = Vec::new();
    let mut num = Vec::new();
    for &r in &rows {
        for c in 0..input {
            a.push(dx[[r, c]]);
            let mut v = [x[[r, c]]];
            num.extend(numeric(&mut v, |v| {
                let mut xx = x.clone();
                xx[[r, c]] = v[0];
                weighted_sum(&w, &net.forward(xx, &lengths).unwrap().0)
            }));
        }
    }
    worst = worst.max(rel_err(&a, &num));
    worst
}

fn pick(rng: &mut ChaCha8Rng, v: &[String]) -> String {
    v[rng.gen_range(0..v.len())].clone()
}

/// Small vocabulary and a batch of random memory states over it.
pub fn random_states(rng: &mut ChaCha8Rng, batch: usize) -> (Vocabulary, Vec<AgentMemory>) {
    let humans = vec!["Ann".to_string(), "Bo".to_string()];
    let objects = vec!["cup".to_string(), "pen".to_string()];
    let locations = vec!["desk".to_string(), "sink".to_string(), "shelf".to_string()];
    let vocab = Vocabulary::new(humans.clone(), objects.clone(), locations.clone());
    let states = (0..batch)
        .map(|_| {
            let mut m = AgentMemory::new(1, 3, 3);
            let writes = rng.gen_range(0..=6u64);
            for t in 0..writes {
                let head = owner_head(&pick(rng, &humans), &pick(rng, &objects));
                m.short_term
                    .observe(Quadruple::new(&head, &pick(rng, &locations), t))
                    .unwrap();
                let action = if rng.gen_bool(0.5) {
                    Action::ToEpisodic
                } else {
                    Action::ToSemantic
                };
                m.apply_action(action).unwrap();
            }
            let head = owner_head(&pick(rng, &humans), &pick(rng, &objects));
            m.short_term
                .observe(Quadruple::new(&head, &pick(rng, &locations), writes))
                .unwrap();
            m
        })
        .collect();
    (vocab, states)
}

pub fn q_network(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let batch = 3;
    let (vocab, states) = random_states(&mut rng, batch);
    let dims = QNetDims {
        d_emb: 3,
        hidden: 4,
        lstm_layers: 2,
    };
    let mut net = QNetworkParams::new(dims, &vocab, &mut rng);
    let refs: Vec<&AgentMemory> = states.iter().collect();
    let w = weights(&mut rng, batch, 3);
    let (_, cache) = net.forward(&vocab, &refs).unwrap();
    net.backward(&cache, w.view());
    let named = net.named_params();
    let analytic: Vec<Vec<f64>> = named.iter().map(|(_, p)| p.grad().to_vec()).collect();
    let n = analytic.len();
    check_params(
        &net,
        &analytic,
        n,
        |m, k| m.params_mut().into_iter().nth(k).unwrap(),
        |m| weighted_sum(&w, &m.forward(&vocab, &refs).unwrap().0),
    )
}

/// Worst error of `check` over the standard number of instances.
pub fn worst_over_instances(check: fn(u64) -> f64) -> f64 {
    (0..INSTANCES).map(check).fold(0.0, f64::max)
}
