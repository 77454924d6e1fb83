//! Update-gate RNN layer with full backpropagation through time.
//!
//! ```text
//! g  = sigmoid(x W_g + h U_g + b_g)
//! c  = tanh(x W_c + h U_c + b_c)
//! h' = g * h + (1 - g) * c
//! ```
//!
//! The gate and candidate weights are stored side by side: `W` is
//! `n_in x 2u`, `U` is `u x 2u` and `b` is `1 x 2u`, gate first.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;

use crate::nn::{init_uniform, sigmoid, ParamId, ParamStore};

#[derive(Clone, Copy, Debug)]
pub struct UgrnnLayer {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub n_in: usize,
    pub units: usize,
}

#[derive(Clone, Debug)]
pub struct SeqCache {
    x: Array2<f64>,
    h_prev: Array2<f64>,
    g: Array2<f64>,
    c: Array2<f64>,
}

impl UgrnnLayer {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, n_in: usize, units: usize, rng: &mut R) -> Self {
        let w = store.add(format!("{name}.w"), init_uniform(rng, n_in, 2 * units, n_in));
        let u = store.add(format!("{name}.u"), init_uniform(rng, units, 2 * units, units));
        let b = store.add(format!("{name}.b"), Array2::zeros((1, 2 * units)));
        Self { w, u, b, n_in, units }
    }

    fn cell(&self, a: ArrayView1<'_, f64>, h: ArrayView1<'_, f64>) -> (Array1<f64>, Array1<f64>, Array1<f64>) {
        let u = self.units;
        let g = a.slice(s![..u]).mapv(sigmoid);
        let c = a.slice(s![u..]).mapv(f64::tanh);
        let next = &g * &h + &(1.0 - &g) * &c;
        (next, g, c)
    }

    /// One step from state `h` on input `x`.
    pub fn step(&self, store: &ParamStore, x: &Array1<f64>, h: &Array1<f64>) -> Array1<f64> {
        let a = x.dot(store.value(self.w)) + h.dot(store.value(self.u)) + store.value(self.b).row(0);
        self.cell(a.view(), h.view()).0
    }

    /// Runs over the rows of `xs` from a zero state; returns every state.
    pub fn forward(&self, store: &ParamStore, xs: &Array2<f64>) -> Array2<f64> {
        self.forward_train(store, xs).0
    }

    pub fn forward_train(&self, store: &ParamStore, xs: &Array2<f64>) -> (Array2<f64>, SeqCache) {
        let t_len = xs.nrows();
        let u = self.units;
        let xw = xs.dot(store.value(self.w)) + store.value(self.b);
        let uu = store.value(self.u);
        let mut hs = Array2::zeros((t_len, u));
        let mut h_prev = Array2::zeros((t_len, u));
        let mut gs = Array2::zeros((t_len, u));
        let mut cs = Array2::zeros((t_len, u));
        let mut h = Array1::zeros(u);
        for t in 0..t_len {
            let a = &xw.row(t) + &h.dot(uu);
            let (next, g, c) = self.cell(a.view(), h.view());
            h_prev.row_mut(t).assign(&h);
            gs.row_mut(t).assign(&g);
            cs.row_mut(t).assign(&c);
            hs.row_mut(t).assign(&next);
            h = next;
        }
        (hs, SeqCache { x: xs.clone(), h_prev, g: gs, c: cs })
    }

    /// `dhs` holds the loss gradient w.r.t. each emitted state. Returns the
    /// gradient w.r.t. the inputs.
    pub fn backward(&self, store: &mut ParamStore, cache: &SeqCache, dhs: &Array2<f64>) -> Array2<f64> {
        let t_len = dhs.nrows();
        let u = self.units;
        let mut da = Array2::zeros((t_len, 2 * u));
        let mut carry = Array1::<f64>::zeros(u);
        {
            let uu = store.value(self.u);
            for t in (0..t_len).rev() {
                let dh = &dhs.row(t) + &carry;
                let g = cache.g.row(t);
                let c = cache.c.row(t);
                let hp = cache.h_prev.row(t);
                let dg = &dh * &(&hp - &c);
                let dc = &dh * &(1.0 - &g);
                let dag = &dg * &(&g * &(1.0 - &g));
                let dac = &dc * &(1.0 - &(&c * &c));
                da.slice_mut(s![t, ..u]).assign(&dag);
                da.slice_mut(s![t, u..]).assign(&dac);
                carry = &dh * &g + &da.row(t).dot(&uu.t());
            }
        }
        *store.grad_mut(self.w) += &cache.x.t().dot(&da);
        *store.grad_mut(self.u) += &cache.h_prev.t().dot(&da);
        *store.grad_mut(self.b) += &da.sum_axis(Axis(0)).insert_axis(Axis(0));
        da.dot(&store.value(self.w).t())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{max_relative_error, numeric_grad};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(n_in: usize, units: usize, seed: u64) -> (ParamStore, UgrnnLayer) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let l = UgrnnLayer::new(&mut store, "r", n_in, units, &mut rng);
        (store, l)
    }

    #[test]
    fn gate_limits() {
        let (mut store, l) = layer(2, 3, 0);
        let x = Array1::from(vec![0.3, -0.7]);
        let h = Array1::from(vec![0.5, -0.2, 0.9]);
        store.value_mut(l.b).slice_mut(s![.., ..3]).fill(50.0);
        let carried = l.step(&store, &x, &h);
        assert!(carried.iter().zip(&h).all(|(a, b)| (a - b).abs() < 1e-12));

        store.value_mut(l.b).slice_mut(s![.., ..3]).fill(-50.0);
        let updated = l.step(&store, &x, &h);
        let a = x.dot(store.value(l.w)) + h.dot(store.value(l.u)) + store.value(l.b).row(0);
        let cand = a.slice(s![3..]).mapv(f64::tanh);
        assert!(updated.iter().zip(&cand).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn zero_weights_halve_the_state() {
        let (mut store, l) = layer(2, 3, 0);
        store.value_mut(l.w).fill(0.0);
        store.value_mut(l.u).fill(0.0);
        let h = Array1::from(vec![1.0, -2.0, 0.4]);
        let next = l.step(&store, &Array1::from(vec![1.0, 1.0]), &h);
        assert!(next.iter().zip(&h).all(|(a, b)| (a - 0.5 * b).abs() < 1e-15));
    }

    #[test]
    fn sequence_matches_repeated_steps() {
        let (store, l) = layer(3, 4, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs = init_uniform(&mut rng, 5, 3, 1);
        let hs = l.forward(&store, &xs);
        let mut h = Array1::zeros(4);
        for t in 0..5 {
            h = l.step(&store, &xs.row(t).to_owned(), &h);
            assert!(h.iter().zip(hs.row(t)).all(|(a, b)| (a - b).abs() < 1e-14));
        }
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let (mut store, l) = layer(3, 4, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs = init_uniform(&mut rng, 6, 3, 1);
        let target = init_uniform(&mut rng, 6, 4, 1);
        let loss = |s: &ParamStore, xs: &Array2<f64>| -> f64 {
            let hs = l.forward(s, xs);
            (&hs * &target).sum()
        };
        let (_, cache) = l.forward_train(&store, &xs);
        let dx = l.backward(&mut store, &cache, &target);
        let num = numeric_grad(&store, 1e-6, |s| loss(s, &xs));
        assert!(max_relative_error(&store.flat_grads(), &num, 1e-8) < 1e-6);
        let eps = 1e-6;
        for (i, j) in [(0, 0), (3, 2), (5, 1)] {
            let mut up = xs.clone();
            up[[i, j]] += eps;
            let mut dn = xs.clone();
            dn[[i, j]] -= eps;
            let fd = (loss(&store, &up) - loss(&store, &dn)) / (2.0 * eps);
            assert!((fd - dx[[i, j]]).abs() < 1e-7);
        }
    }
}
