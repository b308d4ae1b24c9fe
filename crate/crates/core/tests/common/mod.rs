//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spa_control::lti::{poly, RationalTransferFunction, C64};

/// Solves `A' X + X A + C = 0` by vectorization.
pub fn lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    // vec(A' X) = (I kron A') vec X, vec(X A) = (A' kron I) vec X
    let m = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, c.iter().map(|v| -v));
    let x = m.lu().solve(&rhs).expect("nonsingular Lyapunov operator");
    let x = DMatrix::from_column_slice(n, n, x.as_slice());
    (&x + x.transpose()) * 0.5
}

/// Ackermann pole placement for a single input.
pub fn ackermann(a: &DMatrix<f64>, b: &DMatrix<f64>, poles: &[C64]) -> DMatrix<f64> {
    let n = a.nrows();
    let mut ctrb = DMatrix::zeros(n, n);
    let mut col = b.column(0).into_owned();
    for k in 0..n {
        ctrb.set_column(k, &col);
        col = a * col;
    }
    let phi = poly::from_roots(poles);
    let mut phi_a = DMatrix::<f64>::zeros(n, n);
    for c in &phi {
        phi_a = &phi_a * a + DMatrix::identity(n, n) * *c;
    }
    let inv = ctrb.try_inverse().expect("controllable pair");
    let mut en = DMatrix::zeros(1, n);
    en[(0, n - 1)] = 1.0;
    en * inv * phi_a
}

/// Kleinman's Newton iteration on the Riccati equation from a stabilizing
/// gain.
pub fn kleinman(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: f64, k0: DMatrix<f64>) -> DMatrix<f64> {
    let mut k = k0;
    let mut p = DMatrix::zeros(a.nrows(), a.nrows());
    for _ in 0..200 {
        let acl = a - b * &k;
        let rhs = q + k.transpose() * &k * r;
        let next = lyapunov(&acl, &rhs);
        let done = (&next - &p).norm() <= 1e-15 * next.norm().max(1.0);
        p = next;
        k = b.transpose() * &p / r;
        if done {
            break;
        }
    }
    p
}

/// Random controllable single-input pair of order `n`.
pub fn random_pair(rng: &mut ChaCha8Rng, n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    loop {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
        let b = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-2.0..2.0));
        let mut ctrb = DMatrix::zeros(n, n);
        let mut col = b.column(0).into_owned();
        for k in 0..n {
            ctrb.set_column(k, &col);
            col = &a * col;
        }
        let sv = ctrb.singular_values();
        if sv.min() > 1e-2 * sv.max() {
            return (a, b);
        }
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Step response of a strictly proper or biproper transfer function with
/// simple nonzero poles, by partial fractions of `G(s)/s`.
pub fn analytic_step(tf: &RationalTransferFunction, t: f64) -> f64 {
    let num = tf.numerator();
    let den = tf.denominator();
    let dden = poly::derivative(den);
    let g0 = tf.dc_gain().expect("no pole at the origin");
    let mut y = C64::new(g0, 0.0);
    for p in tf.poles().unwrap() {
        let res = poly::eval(num, p) / (poly::eval(&dden, p) * p);
        y += res * (p * t).exp();
    }
    y.re
}

/// `x(T)` of `x' = A x + b u` from `x0` with constant `u`, via the augmented
/// matrix exponential (Taylor series with scaling and squaring).
pub fn exact_state(a: &DMatrix<f64>, b: &DVector<f64>, x0: &DVector<f64>, u: f64, t: f64) -> DVector<f64> {
    let n = a.nrows();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(a);
    m.view_mut((0, n), (n, 1)).copy_from(&(b * u));
    let e = expm_taylor(&(m * t));
    let mut z = DVector::zeros(n + 1);
    z.rows_mut(0, n).copy_from(x0);
    z[n] = 1.0;
    (e * z).rows(0, n).into_owned()
}

fn expm_taylor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let norm = m.norm();
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = m / 2f64.powi(s);
    let n = m.nrows();
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}
