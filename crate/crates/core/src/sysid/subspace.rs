use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{fit_percent, ExperimentTrace};
use crate::error::{invalid_arg, Error, Result};
use crate::lti::linalg::{expm, logm, spectral_radius};
use crate::lti::{poly, StateSpaceModel};
use crate::optim::nelder_mead;

/// Singular values below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentifiedModel {
    /// Continuous-time realization.
    pub model: StateSpaceModel,
    /// Discrete-time realization at `sample_period`.
    pub discrete: StateSpaceModel,
    pub sample_period: f64,
    pub order: usize,
    /// Simulated-output fit on the identification trace, percent.
    pub fit_percent: f64,
    /// Singular values of the oblique projection.
    pub singular_values: Vec<f64>,
}

/// Knobs of [`identify_subspace_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubspaceOptions {
    pub hankel_rows: usize,
    /// Estimate a direct feedthrough `D`; otherwise `D = 0`.
    pub feedthrough: bool,
    /// Polish the state matrix by minimizing the simulated-output error,
    /// starting from the subspace estimate.
    pub refine: bool,
}

impl SubspaceOptions {
    /// Plain subspace estimate with feedthrough and no refinement.
    pub fn new(hankel_rows: usize) -> Self {
        Self {
            hankel_rows,
            feedthrough: true,
            refine: false,
        }
    }
}

/// Requested model order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelOrder {
    Fixed(usize),
    /// Largest log-gap of the singular values, at most `max`.
    Auto { max: usize },
}

/// Deterministic subspace identification (oblique projection, shift
/// invariance) of a SISO model of the given order.
///
/// `B` and `D` are least-squares fitted assuming the system starts at rest.
/// The discrete pair is mapped to continuous time with the matrix
/// logarithm, which requires no eigenvalue of `A_d` on the non-positive
/// real axis.
pub fn identify_subspace(trace: &ExperimentTrace, order: usize, hankel_rows: usize) -> Result<IdentifiedModel> {
    identify_subspace_with(trace, ModelOrder::Fixed(order), &SubspaceOptions::new(hankel_rows))
}

/// As [`identify_subspace`] with the order picked by [`select_order`].
pub fn identify_subspace_auto(trace: &ExperimentTrace, hankel_rows: usize, max_order: usize) -> Result<IdentifiedModel> {
    identify_subspace_with(trace, ModelOrder::Auto { max: max_order }, &SubspaceOptions::new(hankel_rows))
}

pub fn identify_subspace_with(trace: &ExperimentTrace, order: ModelOrder, opts: &SubspaceOptions) -> Result<IdentifiedModel> {
    let i = opts.hankel_rows;
    if let ModelOrder::Fixed(n) = order {
        if n == 0 {
            return Err(invalid_arg("order", "must be >= 1"));
        }
        if n >= i {
            return Err(invalid_arg("order", format!("must be < hankel_rows ({i})")));
        }
    }
    let (basis, sv) = projection_svd(trace, i)?;
    let rank = numerical_rank(&sv);
    let order = match order {
        ModelOrder::Fixed(n) if n > rank => return Err(Error::OrderTooHigh { requested: n, rank }),
        ModelOrder::Fixed(n) => n,
        ModelOrder::Auto { max } => match select_order(&sv, max.min(i - 1)) {
            0 => return Err(Error::OrderTooHigh { requested: 1, rank: 0 }),
            n => n,
        },
    };
    realize(trace, &basis, &sv, order, opts)
}

/// Order at the largest drop in log singular value among the first
/// `max_order + 1` values; 0 when every value is numerically zero.
pub fn select_order(singular_values: &[f64], max_order: usize) -> usize {
    let rank = numerical_rank(singular_values);
    if rank == 0 {
        return 0;
    }
    let top = singular_values[0];
    let floor = top * RANK_TOL;
    let mut best = (1, f64::NEG_INFINITY);
    for k in 0..max_order.min(singular_values.len().saturating_sub(1)) {
        let gap = singular_values[k].max(floor).ln() - singular_values[k + 1].max(floor).ln();
        if gap > best.1 {
            best = (k + 1, gap);
        }
    }
    best.0.min(rank)
}

fn numerical_rank(sv: &[f64]) -> usize {
    match sv.first() {
        Some(&top) if top > 0.0 => sv.iter().take_while(|&&s| s > RANK_TOL * top).count(),
        _ => 0,
    }
}

fn hankel(x: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |r, c| x[r + c])
}

/// Moore-Penrose pseudo-inverse with a relative singular-value cutoff.
fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = (top * 1e-12).max(f64::MIN_POSITIVE);
    svd.pseudo_inverse(eps).unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()))
}

/// Left singular vectors and singular values of the oblique projection of
/// future outputs along future inputs onto past data.
fn projection_svd(trace: &ExperimentTrace, i: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if i < 2 {
        return Err(invalid_arg("hankel_rows", "must be >= 2"));
    }
    let n = trace.len();
    if n < 4 * i {
        return Err(invalid_arg(
            "hankel_rows",
            format!("{i} block rows need at least {} samples, trace has {n}", 4 * i),
        ));
    }
    let j = n - 2 * i + 1;
    let hu = hankel(trace.input(), 2 * i, j);
    let hy = hankel(trace.output(), 2 * i, j);
    let uf = hu.rows(i, i).into_owned();
    let yf = hy.rows(i, i).into_owned();
    let mut wp = DMatrix::zeros(2 * i, j);
    wp.rows_mut(0, i).copy_from(&hu.rows(0, i));
    wp.rows_mut(i, i).copy_from(&hy.rows(0, i));

    // X / U_f-perp = X - X U_f^T (U_f U_f^T)^+ U_f
    let uf_gram_inv = pinv(&(&uf * uf.transpose()));
    let perp = |x: &DMatrix<f64>| -> DMatrix<f64> { x - (x * uf.transpose()) * &uf_gram_inv * &uf };
    let yf_perp = perp(&yf);
    let wp_perp = perp(&wp);
    let coeff = (&yf_perp * wp_perp.transpose()) * pinv(&(&wp_perp * wp_perp.transpose()));
    let oblique = coeff * wp;

    let svd = oblique.svd(true, false);
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let left = svd.u.as_ref().ok_or_else(|| Error::Numerical("SVD failed".into()))?;
    let u = DMatrix::from_fn(i, idx.len(), |r, c| left[(r, idx[c])]);
    let sv: Vec<f64> = idx.iter().map(|&k| svd.singular_values[k]).collect();
    if sv.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical("non-finite singular values in projection".into()));
    }
    Ok((u, sv))
}

fn realize(
    trace: &ExperimentTrace,
    u: &DMatrix<f64>,
    sv: &[f64],
    order: usize,
    opts: &SubspaceOptions,
) -> Result<IdentifiedModel> {
    let i = opts.hankel_rows;
    let gamma = DMatrix::from_fn(i, order, |r, c| u[(r, c)] * sv[c].sqrt());
    let mut c = gamma.row(0).transpose();
    let upper = gamma.rows(0, i - 1).into_owned();
    let lower = gamma.rows(1, i - 1).into_owned();
    let mut a = pinv(&upper) * lower;
    let (mut b, mut d, sse) = fit_input_matrices(trace, &a, &c, opts.feedthrough);
    if opts.refine {
        if let Some((ar, br, dr, sse_r)) = refine(trace, &a, opts.feedthrough) {
            if sse_r < sse {
                c = DVector::from_fn(order, |k, _| if k == 0 { 1.0 } else { 0.0 });
                (a, b, d) = (ar, br, dr);
            }
        }
    }

    let discrete = StateSpaceModel::siso(a.clone(), b.clone(), c.clone(), d)?;
    let y_model = simulate_discrete(&discrete, trace.input());
    let fit = fit_percent(trace.output(), &y_model)?;

    let ts = trace.sample_period();
    let ac = logm(&a)? / ts;
    // integral_0^T e^{A_c tau} dtau from the augmented exponential
    let mut aug = DMatrix::zeros(2 * order, 2 * order);
    aug.view_mut((0, 0), (order, order)).copy_from(&(&ac * ts));
    aug.view_mut((0, order), (order, order)).copy_from(&(DMatrix::identity(order, order) * ts));
    let integral = expm(&aug).view((0, order), (order, order)).into_owned();
    let bc = integral
        .lu()
        .solve(&DMatrix::from_column_slice(order, 1, b.as_slice()))
        .ok_or_else(|| Error::Numerical("singular input integral in continuous conversion".into()))?;
    let model = StateSpaceModel::siso(ac, bc.column(0).into_owned(), c, d)?;

    Ok(IdentifiedModel {
        model,
        discrete,
        sample_period: ts,
        order,
        fit_percent: fit,
        singular_values: sv.to_vec(),
    })
}

/// Least-squares `B` (and `D`) for fixed `(A, C)` from rest, with the
/// residual sum of squares.
fn fit_input_matrices(trace: &ExperimentTrace, a: &DMatrix<f64>, c: &DVector<f64>, feedthrough: bool) -> (DVector<f64>, f64, f64) {
    // y_k = C x_k + D u_k with x_k = sum_{l<k} A^{k-1-l} B u_l, so each
    // entry of B multiplies the running sum w_k below.
    let order = a.nrows();
    let uin = trace.input();
    let n = trace.len();
    let cols = order + usize::from(feedthrough);
    let mut reg = DMatrix::zeros(n, cols);
    let mut w = vec![0.0; order];
    let mut next = vec![0.0; order];
    for k in 0..n {
        for (col, wv) in w.iter().enumerate() {
            reg[(k, col)] = *wv;
        }
        if feedthrough {
            reg[(k, order)] = uin[k];
        }
        // w <- A' w + C u
        for (r, nv) in next.iter_mut().enumerate() {
            *nv = (0..order).map(|j| a[(j, r)] * w[j]).sum::<f64>() + c[r] * uin[k];
        }
        std::mem::swap(&mut w, &mut next);
    }
    let y = DVector::from_column_slice(trace.output());
    let theta = least_squares(&reg, &y);
    let sse = (&reg * &theta - &y).norm_squared();
    let b = DVector::from_iterator(order, theta.iter().take(order).cloned());
    let d = if feedthrough { theta[order] } else { 0.0 };
    (b, d, sse)
}

/// QR solution of a tall least-squares problem, falling back to the
/// pseudo-inverse when `R` is nearly singular.
fn least_squares(m: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let qr = m.clone().qr();
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let diag_min = r.diagonal().iter().fold(f64::INFINITY, |acc, v| acc.min(v.abs()));
    if diag_min > 1e-10 * diag_max {
        if let Some(x) = r.solve_upper_triangular(&(qr.q().transpose() * y)) {
            return x;
        }
    }
    pinv(m) * y
}

/// Observable companion form of the monic polynomial with coefficients
/// `coeffs` (leading 1 omitted); pairs with `C = e_1`.
fn companion(coeffs: &[f64]) -> DMatrix<f64> {
    let n = coeffs.len();
    DMatrix::from_fn(n, n, |r, c| {
        if c == 0 {
            -coeffs[r]
        } else if c == r + 1 {
            1.0
        } else {
            0.0
        }
    })
}

/// Output-error polish of the characteristic polynomial of `a`, keeping the
/// model Schur stable.
fn refine(trace: &ExperimentTrace, a: &DMatrix<f64>, feedthrough: bool) -> Option<(DMatrix<f64>, DVector<f64>, f64, f64)> {
    // start from the subspace poles, pulled inside the unit circle
    let eig: Vec<_> = a
        .complex_eigenvalues()
        .iter()
        .map(|z| if z.norm() > 0.999 { z * (0.999 / z.norm()) } else { *z })
        .collect();
    let start: Vec<f64> = poly::from_roots(&eig)[1..].to_vec();
    let n = a.nrows();
    let e1 = DVector::from_fn(n, |k, _| if k == 0 { 1.0 } else { 0.0 });
    let cost = |theta: &[f64]| -> f64 {
        let ac = companion(theta);
        if spectral_radius(&ac) >= 1.0 {
            return f64::MAX;
        }
        fit_input_matrices(trace, &ac, &e1, feedthrough).2
    };
    let (theta, _) = nelder_mead(cost, &start, 1e-3, 400 * n, 1e-11);
    let ar = companion(&theta);
    let (b, d, sse) = fit_input_matrices(trace, &ar, &e1, feedthrough);
    sse.is_finite().then_some((ar, b, d, sse))
}

/// Output of a discrete SISO model from rest.
pub fn simulate_discrete(sys: &StateSpaceModel, input: &[f64]) -> Vec<f64> {
    let mut x = DVector::zeros(sys.order());
    let b = sys.b().column(0).into_owned();
    let c = sys.c().row(0).into_owned();
    let d = sys.d()[(0, 0)];
    input
        .iter()
        .map(|&u| {
            let y = (&c * &x)[0] + d * u;
            x = sys.a() * &x + &b * u;
            y
        })
        .collect()
}
