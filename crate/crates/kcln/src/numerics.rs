//! Dense linear algebra, activations, losses, initialization, the Adam
//! optimizer and finite-difference gradient checking.
//!
//! Everything runs in f64. Shape mismatches are programmer errors and panic;
//! data-driven failures (non-finite inputs) surface as [`crate::Error`] from
//! the callers that own them.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Probabilities are clamped to this floor inside `log` to avoid `-inf`.
pub const PROB_CLAMP: f64 = 1e-12;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in &rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self * v`; panics on shape mismatch.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec: {}x{} * {}", self.rows, self.cols, v.len());
        let mut out = vec![0.0; self.rows];
        for (i, o) in out.iter_mut().enumerate() {
            let row = self.row(i);
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(v) {
                acc += a * b;
            }
            *o = acc;
        }
        out
    }

    /// `self^T * v`; panics on shape mismatch.
    pub fn matvec_t(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, v.len(), "matvec_t: {}x{}^T * {}", self.rows, self.cols, v.len());
        let mut out = vec![0.0; self.cols];
        for (i, &vi) in v.iter().enumerate() {
            let row = self.row(i);
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vi;
            }
        }
        out
    }

    /// Accumulate the outer product `scale * a b^T` into `self`.
    pub fn add_outer(&mut self, a: &[f64], b: &[f64], scale: f64) {
        assert_eq!(self.rows, a.len(), "add_outer rows");
        assert_eq!(self.cols, b.len(), "add_outer cols");
        for (i, &ai) in a.iter().enumerate() {
            let s = ai * scale;
            if s == 0.0 {
                continue;
            }
            let row = self.row_mut(i);
            for (r, &bj) in row.iter_mut().zip(b) {
                *r += s * bj;
            }
        }
    }
}

/// `out += scale * v`, elementwise.
pub fn axpy(out: &mut [f64], v: &[f64], scale: f64) {
    assert_eq!(out.len(), v.len(), "axpy length");
    for (o, x) in out.iter_mut().zip(v) {
        *o += scale * x;
    }
}

/// Numerically stable softmax (max subtraction). Output sums to 1 within 1e-9.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "softmax of empty vector");
    assert!(v.iter().all(|x| !x.is_nan()), "softmax of NaN input");
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = v.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= sum);
    out
}

/// `-log(probs[gold])` with the probability clamped at [`PROB_CLAMP`].
pub fn cross_entropy(probs: &[f64], gold: usize) -> f64 {
    assert!(gold < probs.len(), "label {} out of range {}", gold, probs.len());
    -probs[gold].max(PROB_CLAMP).ln()
}

/// Elementwise `max(0, x)`.
pub fn relu(v: &mut [f64]) {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Subgradient of ReLU: 1 where the pre-activation is strictly positive,
/// 0 elsewhere (including exactly 0).
#[inline]
pub fn relu_grad(pre: f64) -> f64 {
    if pre > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Glorot-uniform initialization in `±sqrt(6/(rows+cols))`, deterministic
/// for a given rng stream.
pub fn glorot_init(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    assert!(rows > 0 && cols > 0, "glorot_init with zero dimension");
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Matrix { rows, cols, data }
}

/// Convenience for tests and standalone use: a fresh seeded stream per call.
pub fn glorot_init_seeded(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    glorot_init(rows, cols, &mut rng)
}

/// Adam hyperparameters and per-parameter moment accumulators.
///
/// The accumulators are laid out as one flat buffer per parameter tensor, in
/// the order the tensors were registered at construction.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64, shapes: &[usize]) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One full-batch Adam step over every registered parameter tensor.
    /// `params` and `grads` must be aligned with the shapes given to `new`.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        assert_eq!(params.len(), self.m.len(), "adam: tensor count mismatch");
        assert_eq!(grads.len(), self.m.len(), "adam: gradient count mismatch");
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.len(), m.len(), "adam: shape mismatch");
            assert_eq!(g.len(), m.len(), "adam: gradient shape mismatch");
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

/// Max relative error between `analytic` and central finite differences of
/// `f` at `point`: `(f(x+eps) - f(x-eps)) / 2eps` componentwise.
pub fn finite_diff_check(
    mut f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    analytic: &[f64],
    eps: f64,
) -> f64 {
    assert_eq!(point.len(), analytic.len());
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let fp = f(&x);
        x[i] = orig - eps;
        let fm = f(&x);
        x[i] = orig;
        let numeric = (fp - fm) / (2.0 * eps);
        let denom = numeric.abs().max(analytic[i].abs()).max(1.0);
        worst = worst.max((numeric - analytic[i]).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn matvec_identity() {
        let m = Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(m.matvec(&[3.0, 4.0]), vec![3.0, 4.0]);
    }

    #[test]
    fn matvec_zero() {
        let m = Matrix::zeros(3, 2);
        assert_eq!(m.matvec(&[5.0, -1.0]), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn matvec_hand() {
        let m = Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        assert_eq!(m.matvec(&[1.0, 1.0]), vec![3.0, 7.0]);
    }

    #[test]
    fn matvec_t_hand() {
        let m = Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        // [1 3; 2 4] * (1, 1) = (4, 6)
        assert_eq!(m.matvec_t(&[1.0, 1.0]), vec![4.0, 6.0]);
    }

    #[test]
    fn softmax_symmetry() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_stable_at_large_inputs() {
        let p = softmax(&[1000.0, 0.0]);
        assert!(p[0] > 1.0 - 1e-12);
        assert!(p[1] < 1e-12);
        assert!(p.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn softmax_log_inputs_closed_form() {
        let p = softmax(&[1.0f64.ln(), 2.0f64.ln(), 3.0f64.ln()]);
        assert!((p[0] - 1.0 / 6.0).abs() < 1e-12);
        assert!((p[1] - 2.0 / 6.0).abs() < 1e-12);
        assert!((p[2] - 3.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_perfect_is_zero() {
        assert_eq!(cross_entropy(&[0.0, 1.0], 1), 0.0);
    }

    #[test]
    fn cross_entropy_uniform_three() {
        let v = cross_entropy(&[1.0 / 3.0; 3], 0);
        assert!((v - 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_clamps_tiny_probs() {
        let v = cross_entropy(&[1e-20, 1.0], 0);
        assert!((v - (-(1e-12f64).ln())).abs() < 1e-9);
        assert!(v.is_finite());
    }

    #[test]
    fn relu_cases() {
        let mut v = vec![-1.0, 2.0];
        relu(&mut v);
        assert_eq!(v, vec![0.0, 2.0]);
        let mut all_neg = vec![-3.0, -0.5];
        relu(&mut all_neg);
        assert_eq!(all_neg, vec![0.0, 0.0]);
    }

    #[test]
    fn relu_grad_subgradient_convention() {
        assert_eq!(relu_grad(-1.0), 0.0);
        assert_eq!(relu_grad(0.0), 0.0);
        assert_eq!(relu_grad(3.0), 1.0);
    }

    #[test]
    fn glorot_deterministic() {
        let a = glorot_init_seeded(5, 7, 42);
        let b = glorot_init_seeded(5, 7, 42);
        assert_eq!(a, b);
        let c = glorot_init_seeded(5, 7, 43);
        assert_ne!(a, c);
    }

    #[test]
    fn glorot_within_bound() {
        let m = glorot_init_seeded(8, 4, 1);
        let bound = (6.0 / 12.0f64).sqrt();
        assert!(m.data.iter().all(|x| x.abs() <= bound));
    }

    #[test]
    fn glorot_mean_near_zero() {
        let n = 100_000;
        let m = glorot_init_seeded(n / 100, 100, 7);
        let bound = (6.0 / (n / 100 + 100) as f64).sqrt();
        let mean = m.data.iter().sum::<f64>() / n as f64;
        // uniform on [-b, b]: sd = b/sqrt(3), standard error = sd/sqrt(n)
        let se = bound / 3.0f64.sqrt() / (n as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean} vs 3se {}", 3.0 * se);
    }

    #[test]
    fn adam_zero_gradient_leaves_param() {
        let mut p = vec![1.0, -2.0, 3.0];
        let g = vec![0.0; 3];
        let mut st = AdamState::new(1e-3, &[3]);
        st.step(&mut [&mut p], &[&g]);
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        // With bias correction, a first step on constant gradient g moves by
        // lr * g/|g| (up to epsilon), regardless of |g|.
        let mut p = vec![0.0];
        let g = vec![0.37];
        let mut st = AdamState::new(1e-3, &[1]);
        st.step(&mut [&mut p], &[&g]);
        assert!((p[0].abs() - 1e-3).abs() < 1e-6, "step {}", p[0]);
        assert!(p[0] < 0.0);
    }

    #[test]
    fn adam_sign_symmetric_trajectories() {
        let mut p1 = vec![0.0];
        let mut p2 = vec![0.0];
        let mut s1 = AdamState::new(1e-2, &[1]);
        let mut s2 = AdamState::new(1e-2, &[1]);
        for k in 0..10 {
            let g = 0.1 + 0.01 * k as f64;
            s1.step(&mut [&mut p1], &[&[g]]);
            s2.step(&mut [&mut p2], &[&[-g]]);
        }
        assert_eq!(p1[0], -p2[0]);
    }

    #[test]
    fn adam_deterministic() {
        let run = || {
            let mut p = vec![0.5, -0.5];
            let mut st = AdamState::new(1e-3, &[2]);
            for _ in 0..5 {
                let g = vec![p[0] * 2.0, p[1] * 2.0];
                st.step(&mut [&mut p], &[&g]);
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn finite_diff_square() {
        let err = finite_diff_check(|x| x[0] * x[0], &[3.0], &[6.0], 1e-5);
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn finite_diff_softmax_cross_entropy() {
        // d/dz CE(softmax(z), gold) = softmax(z) - onehot(gold)
        let z = vec![0.3, -1.2, 0.7];
        let gold = 2;
        let p = softmax(&z);
        let mut analytic = p.clone();
        analytic[gold] -= 1.0;
        let err = finite_diff_check(
            |x| cross_entropy(&softmax(x), gold),
            &z,
            &analytic,
            1e-6,
        );
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn finite_diff_constant() {
        let err = finite_diff_check(|_| 4.2, &[1.0, 2.0], &[0.0, 0.0], 1e-5);
        assert!(err < 1e-9);
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one(v in proptest::collection::vec(-50.0f64..50.0, 1..8)) {
            let p = softmax(&v);
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|x| *x > 0.0));
        }

        #[test]
        fn softmax_permutation_equivariant(v in proptest::collection::vec(-20.0f64..20.0, 2..6)) {
            let p = softmax(&v);
            let mut rev = v.clone();
            rev.reverse();
            let mut pr = softmax(&rev);
            pr.reverse();
            for (a, b) in p.iter().zip(&pr) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn cross_entropy_nonnegative(
            v in proptest::collection::vec(0.01f64..10.0, 2..5),
            gold_raw in 0usize..5,
        ) {
            let p = softmax(&v);
            let gold = gold_raw % p.len();
            prop_assert!(cross_entropy(&p, gold) >= 0.0);
        }

        #[test]
        fn matvec_distributes_over_addition(
            seed in 0u64..1000,
            rows in 1usize..5,
            cols in 1usize..5,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = glorot_init(rows, cols, &mut rng);
            let a: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let lhs = m.matvec(&sum);
            let mut rhs = m.matvec(&a);
            axpy(&mut rhs, &m.matvec(&b), 1.0);
            for (l, r) in lhs.iter().zip(&rhs) {
                let denom = l.abs().max(r.abs()).max(1e-9);
                prop_assert!((l - r).abs() / denom < 1e-12);
            }
        }
    }
}
