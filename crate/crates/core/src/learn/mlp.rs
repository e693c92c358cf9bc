use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::rng::Rng64;

/// Affine layer; `w` is `in x out` so a batch `X` maps to `X w + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            w: Array2::zeros((n_in, n_out)),
            b: Array1::zeros(n_out),
        }
    }
}

/// Fully connected network with ReLU between layers and a linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-layer inputs and pre-activations recorded by `forward_cached`.
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

impl Mlp {
    /// He-scaled Gaussian init; the output layer is scaled by `out_gain`.
    pub fn new(sizes: &[usize], out_gain: f64, rng: &mut Rng64) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (i, o) = (sizes[l], sizes[l + 1]);
                let sd = (2.0 / i as f64).sqrt() * if l + 1 == n { out_gain } else { 1.0 };
                let w = Array2::from_shape_fn((i, o), |_| rng.gaussian(0.0, sd));
                Dense { w, b: Array1::zeros(o) }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|d| Dense::zeros(d.w.nrows(), d.w.ncols())).collect(),
        }
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().map_or(0, |d| d.w.ncols())
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let last = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (l, d) in self.layers.iter().enumerate() {
            h = h.dot(&d.w) + &d.b;
            if l < last {
                h.mapv_inplace(relu);
            }
        }
        h
    }

    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut h = Array1::from_vec(x.to_vec());
        for (l, d) in self.layers.iter().enumerate() {
            h = h.dot(&d.w) + &d.b;
            if l < last {
                h.mapv_inplace(relu);
            }
        }
        h.to_vec()
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> (Array2<f64>, MlpCache) {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        for (l, d) in self.layers.iter().enumerate() {
            let z = h.dot(&d.w) + &d.b;
            inputs.push(h);
            h = if l < last { z.mapv(relu) } else { z.clone() };
            pre.push(z);
        }
        (h, MlpCache { inputs, pre })
    }

    /// Gradients of a scalar loss given `dL/d output`.
    pub fn backward(&self, cache: &MlpCache, d_out: &Array2<f64>) -> Mlp {
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = d_out.to_owned();
        for l in (0..self.layers.len()).rev() {
            if l < last {
                g.zip_mut_with(&cache.pre[l], |gi, &z| {
                    if z <= 0.0 {
                        *gi = 0.0
                    }
                });
            }
            let dw = cache.inputs[l].t().dot(&g);
            let db = g.sum_axis(Axis(0));
            if l > 0 {
                g = g.dot(&self.layers[l].w.t());
            }
            grads.push(Dense { w: dw, b: db });
        }
        grads.reverse();
        Mlp { layers: grads }
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|d| d.w.len() + d.b.len()).sum()
    }

    fn locate(&self, mut idx: usize) -> (usize, Option<(usize, usize)>, usize) {
        for (l, d) in self.layers.iter().enumerate() {
            if idx < d.w.len() {
                let c = d.w.ncols();
                return (l, Some((idx / c, idx % c)), 0);
            }
            idx -= d.w.len();
            if idx < d.b.len() {
                return (l, None, idx);
            }
            idx -= d.b.len();
        }
        panic!("parameter index out of range");
    }

    /// Flat parameter access: weights then bias, layer by layer.
    pub fn param(&self, idx: usize) -> f64 {
        match self.locate(idx) {
            (l, Some((r, c)), _) => self.layers[l].w[[r, c]],
            (l, None, j) => self.layers[l].b[j],
        }
    }

    pub fn param_mut(&mut self, idx: usize) -> &mut f64 {
        match self.locate(idx) {
            (l, Some((r, c)), _) => &mut self.layers[l].w[[r, c]],
            (l, None, j) => &mut self.layers[l].b[j],
        }
    }

    pub fn sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|d| d.w.iter().map(|x| x * x).sum::<f64>() + d.b.iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    pub fn scale(&mut self, s: f64) {
        for d in self.layers.iter_mut() {
            d.w.mapv_inplace(|x| x * s);
            d.b.mapv_inplace(|x| x * s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|d| d.w.iter().all(|x| x.is_finite()) && d.b.iter().all(|x| x.is_finite()))
    }
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}
