//! Small fully connected networks with SELU hidden layers, hand-written
//! reverse pass and Adam.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::scalar::Scalar;

const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
const SELU_ALPHA: f64 = 1.673_263_242_354_377_3;

#[inline]
fn selu<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        S::lit(SELU_LAMBDA) * x
    } else {
        S::lit(SELU_LAMBDA * SELU_ALPHA) * x.exp_m1()
    }
}

fn selu_in_place<S: Scalar>(z: &mut Array2<S>) {
    const CHUNK: usize = 256;
    let (l, la) = (S::lit(SELU_LAMBDA), S::lit(SELU_LAMBDA * SELU_ALPHA));
    let mut neg = [S::zero(); CHUNK];
    for block in z.as_slice_mut().expect("standard layout").chunks_mut(CHUNK) {
        let neg = &mut neg[..block.len()];
        for (e, &v) in neg.iter_mut().zip(block.iter()) {
            *e = if v < S::zero() { v } else { S::zero() };
        }
        S::exp_m1_nonpositive(neg);
        for (v, &e) in block.iter_mut().zip(neg.iter()) {
            *v = if *v > S::zero() { l * *v } else { la * e };
        }
    }
}

/// SELU derivative from the pre-activation `x` and the activation `y`;
/// for `x <= 0`, `d selu / dx = y + lambda * alpha`.
#[inline]
fn selu_grad<S: Scalar>(x: S, y: S) -> S {
    if x > S::zero() {
        S::lit(SELU_LAMBDA)
    } else {
        y + S::lit(SELU_LAMBDA * SELU_ALPHA)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear<S> {
    /// `fan_in x fan_out`, so a batch `X` maps to `X W + b`.
    pub w: Array2<S>,
    pub b: Array1<S>,
}

impl<S: Scalar> Linear<S> {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { w: Array2::zeros((fan_in, fan_out)), b: Array1::zeros(fan_out) }
    }
}

/// Multilayer perceptron: SELU after every layer but the last.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<S> {
    pub layers: Vec<Linear<S>>,
}

/// Activations kept by [`Mlp::forward_cached`] for the reverse pass.
pub struct MlpCache<S> {
    inputs: Vec<Array2<S>>,
    pre: Vec<Array2<S>>,
}

impl<S: Scalar> Mlp<S> {
    /// LeCun-normal weights, zero biases; the output layer is scaled by
    /// `out_scale`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], out_scale: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2);
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let mut std = 1.0 / (fan_in as f64).sqrt();
                if k == last {
                    std *= out_scale;
                }
                let normal = Normal::new(0.0, std).expect("positive std");
                let mut layer = Linear::zeros(fan_in, fan_out);
                layer.w.mapv_inplace(|_| S::lit(normal.sample(rng)));
                layer
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Linear::zeros(l.w.nrows(), l.w.ncols()))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| (l.w.nrows(), l.w.ncols())).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: &Array2<S>) -> Array2<S> {
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.w);
            z += &layer.b;
            if k < last {
                selu_in_place(&mut z);
            }
            h = z;
        }
        h
    }

    /// Single-input forward pass without batch overhead.
    pub fn forward_row(&self, x: &[S]) -> Vec<S> {
        debug_assert_eq!(x.len(), self.layers[0].w.nrows());
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.b.to_vec();
            for (&hi, w_row) in h.iter().zip(layer.w.rows()) {
                for (zj, &wij) in z.iter_mut().zip(w_row.iter()) {
                    *zj += hi * wij;
                }
            }
            if k < last {
                z.iter_mut().for_each(|v| *v = selu(*v));
            }
            h = z;
        }
        h
    }

    pub fn forward_cached(&self, x: &Array2<S>) -> (Array2<S>, MlpCache<S>) {
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut h = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.w);
            z += &layer.b;
            inputs.push(h);
            if k < last {
                h = z.clone();
                selu_in_place(&mut h);
                pre.push(z);
            } else {
                h = z;
            }
        }
        (h, MlpCache { inputs, pre })
    }

    /// Accumulates parameter gradients of `sum(d_out * output)` into `grad`.
    pub fn backward(&self, cache: &MlpCache<S>, d_out: &Array2<S>, grad: &mut Mlp<S>) {
        let mut delta = d_out.clone();
        for k in (0..self.layers.len()).rev() {
            let g = &mut grad.layers[k];
            g.w += &cache.inputs[k].t().dot(&delta);
            g.b += &delta.sum_axis(Axis(0));
            if k == 0 {
                break;
            }
            let mut d_in = delta.dot(&self.layers[k].w.t());
            Zip::from(&mut d_in)
                .and(&cache.pre[k - 1])
                .and(&cache.inputs[k])
                .for_each(|d, &z, &y| *d *= selu_grad(z, y));
            delta = d_in;
        }
    }

    pub fn params(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend(l.w.iter().copied());
            out.extend(l.b.iter().copied());
        }
        out
    }

    pub fn set_params(&mut self, flat: &[S]) {
        assert_eq!(flat.len(), self.n_params());
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            l.w.iter_mut().for_each(|v| *v = it.next().unwrap());
            l.b.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
    }

    pub fn from_shapes(shapes: &[(usize, usize)], flat: &[S]) -> Option<Self> {
        let mut net = Self {
            layers: shapes.iter().map(|&(i, o)| Linear::zeros(i, o)).collect(),
        };
        if net.n_params() != flat.len() || shapes.windows(2).any(|w| w[0].1 != w[1].0) {
            return None;
        }
        net.set_params(flat);
        Some(net)
    }

    pub fn cast<T: Scalar>(&self) -> Mlp<T> {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Linear { w: l.w.mapv(|v| v.cast()), b: l.b.mapv(|v| v.cast()) })
                .collect(),
        }
    }

    pub fn slices_mut(&mut self) -> impl Iterator<Item = &mut [S]> {
        self.layers.iter_mut().flat_map(|l| {
            [l.w.as_slice_mut().expect("standard layout"), l.b.as_slice_mut().expect("contiguous")]
        })
    }

    pub fn slices(&self) -> impl Iterator<Item = &[S]> {
        self.layers.iter().flat_map(|l| {
            [l.w.as_slice().expect("standard layout"), l.b.as_slice().expect("contiguous")]
        })
    }

    pub fn sq_norm(&self) -> S {
        self.slices().flat_map(|s| s.iter()).map(|&v| v * v).sum()
    }

    pub fn scale(&mut self, factor: S) {
        for s in self.slices_mut() {
            s.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().flat_map(|s| s.iter()).all(|v| v.is_finite())
    }
}

/// Adam on the parameters of one network.
#[derive(Clone, Debug)]
pub struct Adam<S> {
    m: Mlp<S>,
    v: Mlp<S>,
    step: i32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<S: Scalar> Adam<S> {
    pub fn new(net: &Mlp<S>) -> Self {
        Self { m: net.zeros_like(), v: net.zeros_like(), step: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// Descends along `grad` (a loss gradient).
    pub fn update(&mut self, net: &mut Mlp<S>, grad: &Mlp<S>, lr: f64) {
        self.step += 1;
        let (b1, b2) = (S::lit(self.beta1), S::lit(self.beta2));
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let step_size = S::lit(lr * c2.sqrt() / c1);
        let eps = S::lit(self.eps * c2.sqrt());
        let one = S::one();
        for (((p, g), m), v) in net
            .slices_mut()
            .zip(grad.slices())
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut())
        {
            for k in 0..p.len() {
                m[k] = b1 * m[k] + (one - b1) * g[k];
                v[k] = b2 * v[k] + (one - b2) * g[k] * g[k];
                p[k] -= step_size * m[k] / (v[k].sqrt() + eps);
            }
        }
    }
}
