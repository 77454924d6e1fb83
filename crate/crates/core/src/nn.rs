//! Minimal dense-network toolkit: named parameters with gradient buffers,
//! fully connected layers with cached backward passes, embedding lookups
//! and an Adam optimizer.

use std::io::{BufRead, Write};

use ndarray::{Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("tensor {name}: expected {want:?}, found {got:?}")]
    Shape { name: String, want: (usize, usize), got: (usize, usize) },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Leaky,
    Tanh,
    Sigmoid,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Leaky => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative given the pre-activation and the output.
    pub fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Leaky => {
                if pre > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - out * out,
            Activation::Sigmoid => out * (1.0 - out),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// A trainable tensor and its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

/// Uniform in `±1/sqrt(fan_in)`.
pub fn init_uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, fan_in: usize) -> Array2<f64> {
    let a = 1.0 / (fan_in.max(1) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-a..a))
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        let grad = Array2::zeros(value.raw_dim());
        self.params.push(Param { name: name.into(), value, grad });
        ParamId(self.params.len() - 1)
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Array2<f64> {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.params[id.0].grad
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn n_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.grad.iter().copied()).collect()
    }

    pub fn set_flat_values(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for p in &mut self.params {
            for v in p.value.iter_mut() {
                *v = *it.next().expect("flat length matches");
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.iter().all(|v| v.is_finite()))
    }

    /// Adds `coef/2 * Σθ²` to the loss and `coef * θ` to the gradients.
    pub fn apply_l2(&mut self, coef: f64) -> f64 {
        if coef == 0.0 {
            return 0.0;
        }
        let mut penalty = 0.0;
        for p in &mut self.params {
            penalty += p.value.iter().map(|v| v * v).sum::<f64>();
            p.grad.scaled_add(coef, &p.value);
        }
        0.5 * coef * penalty
    }

    /// Order-sensitive digest of all parameter bits.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.params.iter().flat_map(|p| p.value.iter()) {
            h ^= v.to_bits();
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        h
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<(), ParamError> {
        writeln!(w, "newsrec-params 1")?;
        writeln!(w, "{}", self.params.len())?;
        for p in &self.params {
            let (r, c) = p.value.dim();
            writeln!(w, "{} {} {}", p.name, r, c)?;
            let line: Vec<String> = p.value.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Loads values into an existing store with the same layout.
    pub fn load<R: BufRead>(&mut self, r: R) -> Result<(), ParamError> {
        let mut lines = r.lines();
        let mut next = || -> Result<String, ParamError> {
            lines.next().ok_or_else(|| ParamError::Format("truncated".into()))?.map_err(Into::into)
        };
        if next()? != "newsrec-params 1" {
            return Err(ParamError::Format("bad header".into()));
        }
        let n: usize = next()?.trim().parse().map_err(|_| ParamError::Format("count".into()))?;
        if n != self.params.len() {
            return Err(ParamError::Format(format!("{n} tensors, expected {}", self.params.len())));
        }
        for p in &mut self.params {
            let head = next()?;
            let f: Vec<&str> = head.split_whitespace().collect();
            if f.len() != 3 || f[0] != p.name {
                return Err(ParamError::Format(format!("expected tensor {}", p.name)));
            }
            let dims = (
                f[1].parse().map_err(|_| ParamError::Format("rows".into()))?,
                f[2].parse().map_err(|_| ParamError::Format("cols".into()))?,
            );
            if dims != p.value.dim() {
                return Err(ParamError::Shape { name: p.name.clone(), want: p.value.dim(), got: dims });
            }
            let body = next()?;
            let vals: Result<Vec<f64>, _> = body.split_whitespace().map(str::parse).collect();
            let vals = vals.map_err(|_| ParamError::Format(format!("values of {}", p.name)))?;
            if vals.len() != p.value.len() {
                return Err(ParamError::Format(format!("value count of {}", p.name)));
            }
            for (dst, v) in p.value.iter_mut().zip(vals) {
                *dst = v;
            }
        }
        Ok(())
    }
}

/// Fully connected layer `act(x W + b)` over row-major batches.
#[derive(Clone, Copy, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub act: Activation,
    pub n_in: usize,
    pub n_out: usize,
}

#[derive(Clone, Debug)]
pub struct DenseCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    out: Array2<f64>,
}

impl Dense {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        n_in: usize,
        n_out: usize,
        act: Activation,
        rng: &mut R,
    ) -> Self {
        let w = store.add(format!("{name}.w"), init_uniform(rng, n_in, n_out, n_in));
        let b = store.add(format!("{name}.b"), Array2::zeros((1, n_out)));
        Self { w, b, act, n_in, n_out }
    }

    fn pre(&self, store: &ParamStore, x: &Array2<f64>) -> Array2<f64> {
        x.dot(store.value(self.w)) + store.value(self.b)
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f64>) -> Array2<f64> {
        let act = self.act;
        self.pre(store, x).mapv_into(|v| act.apply(v))
    }

    pub fn forward_train(&self, store: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, DenseCache) {
        let pre = self.pre(store, x);
        let act = self.act;
        let out = pre.mapv(|v| act.apply(v));
        (out.clone(), DenseCache { x: x.clone(), pre, out })
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&self, store: &mut ParamStore, cache: &DenseCache, dy: &Array2<f64>) -> Array2<f64> {
        let mut dpre = dy.clone();
        if self.act != Activation::Linear {
            ndarray::Zip::from(&mut dpre)
                .and(&cache.pre)
                .and(&cache.out)
                .for_each(|d, &p, &o| *d *= self.act.derivative(p, o));
        }
        *store.grad_mut(self.w) += &cache.x.t().dot(&dpre);
        *store.grad_mut(self.b) += &dpre.sum_axis(Axis(0)).insert_axis(Axis(0));
        dpre.dot(&store.value(self.w).t())
    }
}

/// A stack of dense layers.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Hidden layers use `hidden_act`; the last uses `out_act`.
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        n_in: usize,
        widths: &[usize],
        hidden_act: Activation,
        out_act: Activation,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut prev = n_in;
        for (i, &w) in widths.iter().enumerate() {
            let act = if i + 1 == widths.len() { out_act } else { hidden_act };
            layers.push(Dense::new(store, &format!("{name}.{i}"), prev, w, act, rng));
            prev = w;
        }
        Self { layers }
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().map(|l| l.n_out).unwrap_or(0)
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2<f64>) -> Array2<f64> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.forward(store, &h);
        }
        h
    }

    pub fn forward_train(&self, store: &ParamStore, x: &Array2<f64>) -> (Array2<f64>, Vec<DenseCache>) {
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (o, c) = l.forward_train(store, &h);
            caches.push(c);
            h = o;
        }
        (h, caches)
    }

    pub fn backward(&self, store: &mut ParamStore, caches: &[DenseCache], dy: &Array2<f64>) -> Array2<f64> {
        let mut d = dy.clone();
        for (l, c) in self.layers.iter().zip(caches).rev() {
            d = l.backward(store, c, &d);
        }
        d
    }
}

/// Rows of an embedding table.
pub fn gather(store: &ParamStore, table: ParamId, rows: &[usize]) -> Array2<f64> {
    store.value(table).select(Axis(0), rows)
}

pub fn scatter_add(store: &mut ParamStore, table: ParamId, rows: &[usize], grad: &Array2<f64>) {
    let g = store.grad_mut(table);
    for (i, &r) in rows.iter().enumerate() {
        let mut dst = g.row_mut(r);
        dst += &grad.row(i);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    t: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Array2<f64>> =
            store.params.iter().map(|p| Array2::zeros(p.value.raw_dim())).collect();
        Self { config, t: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update from the gradients currently held in `store`.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.t += 1;
        let AdamConfig { learning_rate: lr, beta1: b1, beta2: b2, epsilon: eps } = self.config;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        if lr == 0.0 {
            return;
        }
        for ((p, m), v) in store.params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(&mut p.value).and(&p.grad).and(m).and(v).for_each(|x, &g, m, v| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *x -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        }
    }
}

/// Central finite-difference gradient of `f` at the store's current values.
pub fn numeric_grad<F: FnMut(&ParamStore) -> f64>(store: &ParamStore, eps: f64, mut f: F) -> Vec<f64> {
    let base = store.flat_values();
    let mut probe = store.clone();
    let mut out = Vec::with_capacity(base.len());
    let mut x = base.clone();
    for i in 0..base.len() {
        x[i] = base[i] + eps;
        probe.set_flat_values(&x);
        let up = f(&probe);
        x[i] = base[i] - eps;
        probe.set_flat_values(&x);
        let down = f(&probe);
        x[i] = base[i];
        out.push((up - down) / (2.0 * eps));
    }
    out
}

/// Max over coordinates of `|a-n| / max(|a|+|n|, floor)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(floor))
        .fold(0.0, f64::max)
}
