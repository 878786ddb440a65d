//! Stacked LSTM over padded batches, with backpropagation through time.
//!
//! Inputs are time-major: row `t * batch + b` holds step `t` of sample `b`.
//! Samples shorter than the longest one are zero-padded at the end; their
//! output is the top-layer hidden state at their own last step, so padded
//! steps never receive gradient. A zero-length sample yields a zero vector.
//!
//! Gate order within the `4H` pre-activation block is input, forget, cell,
//! output. Initial hidden and cell states are zero.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ParamTensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    /// `4H x D`
    pub w_ih: ParamTensor,
    /// `4H x H`
    pub w_hh: ParamTensor,
    /// `4H`
    pub bias: ParamTensor,
}

#[derive(Clone, Debug)]
struct LayerCache {
    input: Array2<f64>,
    /// Activated gates, `TB x 4H`.
    gates: Array2<f64>,
    c: Array2<f64>,
    tanh_c: Array2<f64>,
    h: Array2<f64>,
}

#[derive(Clone, Debug)]
pub struct LstmCache {
    layers: Vec<LayerCache>,
    lengths: Vec<usize>,
    steps: usize,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmLayer {
    fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        Self {
            w_ih: ParamTensor::uniform(&[4 * hidden, input], bound, rng),
            w_hh: ParamTensor::uniform(&[4 * hidden, hidden], bound, rng),
            bias: ParamTensor::uniform(&[4 * hidden], bound, rng),
        }
    }

    fn hidden(&self) -> usize {
        self.w_hh.shape()[1]
    }

    fn forward(&self, input: Array2<f64>, batch: usize, steps: usize) -> LayerCache {
        let hd = self.hidden();
        let rows = batch * steps;
        let mut gates = Array2::zeros((rows, 4 * hd));
        gates += &self.bias.vec();
        general_mat_mul(1.0, &input, &self.w_ih.mat().t(), 1.0, &mut gates);
        let mut c = Array2::<f64>::zeros((rows, hd));
        let mut tanh_c = Array2::<f64>::zeros((rows, hd));
        let mut h = Array2::<f64>::zeros((rows, hd));
        let w_hh_t = self.w_hh.mat().reversed_axes();

        for t in 0..steps {
            let (r0, r1) = (t * batch, (t + 1) * batch);
            if t > 0 {
                let (h_prev, _) = h.view().split_at(Axis(0), r0);
                let h_prev = h_prev.slice(s![r0 - batch.., ..]);
                let mut g_t = gates.slice_mut(s![r0..r1, ..]);
                general_mat_mul(1.0, &h_prev, &w_hh_t, 1.0, &mut g_t);
            }
            for r in r0..r1 {
                let g = gates.row_mut(r).into_slice().expect("standard layout");
                for v in &mut g[..2 * hd] {
                    *v = sigmoid(*v);
                }
                for v in &mut g[2 * hd..3 * hd] {
                    *v = v.tanh();
                }
                for v in &mut g[3 * hd..] {
                    *v = sigmoid(*v);
                }
                let g = gates.row(r);
                let g = g.as_slice().expect("standard layout");
                for j in 0..hd {
                    let c_prev = if t > 0 { c[[r - batch, j]] } else { 0.0 };
                    let cv = g[hd + j] * c_prev + g[j] * g[2 * hd + j];
                    let tc = cv.tanh();
                    c[[r, j]] = cv;
                    tanh_c[[r, j]] = tc;
                    h[[r, j]] = g[3 * hd + j] * tc;
                }
            }
        }
        LayerCache {
            input,
            gates,
            c,
            tanh_c,
            h,
        }
    }

    /// `dh_ext` is the gradient w.r.t. every hidden output (`TB x H`).
    /// Returns the gradient w.r.t. the layer input.
    fn backward(
        &mut self,
        cache: &LayerCache,
        dh_ext: &Array2<f64>,
        batch: usize,
        steps: usize,
    ) -> Array2<f64> {
        let hd = self.hidden();
        let rows = batch * steps;
        let mut dgates = Array2::<f64>::zeros((rows, 4 * hd));
        let mut dh_next = Array2::<f64>::zeros((batch, hd));
        let mut dc_next = Array2::<f64>::zeros((batch, hd));
        let w_hh = self.w_hh.mat();

        for t in (0..steps).rev() {
            let r0 = t * batch;
            for b in 0..batch {
                let r = r0 + b;
                let g = cache.gates.row(r);
                let g = g.as_slice().expect("standard layout");
                let mut dg_row = dgates.row_mut(r);
                let dg = dg_row.as_slice_mut().expect("standard layout");
                for j in 0..hd {
                    let (i, f, gg, o) = (g[j], g[hd + j], g[2 * hd + j], g[3 * hd + j]);
                    let tc = cache.tanh_c[[r, j]];
                    let dh = dh_ext[[r, j]] + dh_next[[b, j]];
                    let dc = dc_next[[b, j]] + dh * o * (1.0 - tc * tc);
                    let c_prev = if t > 0 { cache.c[[r - batch, j]] } else { 0.0 };
                    dg[j] = dc * gg * i * (1.0 - i);
                    dg[hd + j] = dc * c_prev * f * (1.0 - f);
                    dg[2 * hd + j] = dc * i * (1.0 - gg * gg);
                    dg[3 * hd + j] = dh * tc * o * (1.0 - o);
                    dc_next[[b, j]] = dc * f;
                }
            }
            if t > 0 {
                let dg_t = dgates.slice(s![r0..r0 + batch, ..]);
                general_mat_mul(1.0, &dg_t, &w_hh, 0.0, &mut dh_next);
            }
        }

        general_mat_mul(
            1.0,
            &dgates.t(),
            &cache.input,
            1.0,
            &mut self.w_ih.grad_mat_mut(),
        );
        if steps > 1 {
            let dg_later = dgates.slice(s![batch.., ..]);
            let h_earlier = cache.h.slice(s![..rows - batch, ..]);
            general_mat_mul(
                1.0,
                &dg_later.t(),
                &h_earlier,
                1.0,
                &mut self.w_hh.grad_mat_mut(),
            );
        }
        self.bias
            .grad_vec_mut()
            .scaled_add(1.0, &dgates.sum_axis(Axis(0)));
        dgates.dot(&self.w_ih.mat())
    }

    pub fn params(&self) -> [&ParamTensor; 3] {
        [&self.w_ih, &self.w_hh, &self.bias]
    }

    pub fn params_mut(&mut self) -> [&mut ParamTensor; 3] {
        [&mut self.w_ih, &mut self.w_hh, &mut self.bias]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub layers: Vec<LstmLayer>,
    input: usize,
    hidden: usize,
}

impl Lstm {
    pub fn new(input: usize, hidden: usize, n_layers: usize, rng: &mut impl Rng) -> Self {
        assert!(n_layers >= 1, "an LSTM needs at least one layer");
        let layers = (0..n_layers)
            .map(|k| LstmLayer::new(if k == 0 { input } else { hidden }, hidden, rng))
            .collect();
        Self {
            layers,
            input,
            hidden,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    /// Run a padded batch. `input` has `steps * lengths.len()` rows where
    /// `steps = max(lengths)`. Returns the last hidden state of every sample.
    pub fn forward(
        &self,
        input: Array2<f64>,
        lengths: &[usize],
    ) -> Result<(Array2<f64>, LstmCache)> {
        let batch = lengths.len();
        let steps = lengths.iter().copied().max().unwrap_or(0);
        if input.nrows() != batch * steps {
            return Err(Error::Shape(format!(
                "lstm input has {} rows, expected {}",
                input.nrows(),
                batch * steps
            )));
        }
        if steps > 0 && input.ncols() != self.input {
            return Err(Error::Shape(format!(
                "lstm expects width {}, got {}",
                self.input,
                input.ncols()
            )));
        }
        let mut out = Array2::zeros((batch, self.hidden));
        let mut layers = Vec::with_capacity(self.layers.len());
        if steps > 0 {
            let mut x = input;
            for layer in &self.layers {
                let cache = layer.forward(x, batch, steps);
                x = cache.h.clone();
                layers.push(cache);
            }
            let top = &layers.last().expect("at least one layer").h;
            for (b, &len) in lengths.iter().enumerate() {
                if len > 0 {
                    out.row_mut(b).assign(&top.row((len - 1) * batch + b));
                }
            }
        }
        Ok((
            out,
            LstmCache {
                layers,
                lengths: lengths.to_vec(),
                steps,
            },
        ))
    }

    /// Backpropagate `d_last` (`batch x H`) and return the input gradient.
    pub fn backward(&mut self, cache: &LstmCache, d_last: ArrayView2<f64>) -> Array2<f64> {
        let batch = cache.lengths.len();
        let steps = cache.steps;
        if steps == 0 {
            return Array2::zeros((0, self.input));
        }
        let mut dh = Array2::<f64>::zeros((batch * steps, self.hidden));
        for (b, &len) in cache.lengths.iter().enumerate() {
            if len > 0 {
                dh.row_mut((len - 1) * batch + b).assign(&d_last.row(b));
            }
        }
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers).rev() {
            dh = layer.backward(lc, &dh, batch, steps);
        }
        dh
    }

    /// Last hidden state for a single sequence.
    pub fn forward_last(&self, seq: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut input = Array2::zeros((seq.len(), self.input));
        for (t, v) in seq.iter().enumerate() {
            if v.len() != self.input {
                return Err(Error::Shape(format!(
                    "lstm expects width {}, got {}",
                    self.input,
                    v.len()
                )));
            }
            input.row_mut(t).assign(&ndarray::ArrayView1::from(v.as_slice()));
        }
        let (out, _) = self.forward(input, &[seq.len()])?;
        Ok(out.row(0).to_vec())
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }
}
