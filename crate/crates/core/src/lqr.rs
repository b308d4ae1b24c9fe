//! LQR synthesis: stabilizing CARE solution through the ordered Schur form
//! of the Hamiltonian, state-feedback gain with reference pre-scaling, and a
//! Lyapunov certificate for the resulting closed loop.

use nalgebra::{linalg::Schur, Complex, DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::lti::{is_hurwitz, RationalTransferFunction, StateSpaceModel, C64};

/// Quadratic cost weights. `penalty` is the scale `p` of the default state
/// weight `p * diag(1, 0.1, 0, ...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrWeights {
    pub penalty: f64,
    q: DMatrix<f64>,
    r: f64,
}

impl LqrWeights {
    /// `Q = p diag(1, 0.1, 0, ..)` of size `n`, `R = r`.
    pub fn angle_and_rate(penalty: f64, r: f64, n: usize) -> Result<Self> {
        if !(penalty > 0.0 && penalty.is_finite()) {
            return Err(invalid_arg("p", format!("{penalty} must be > 0")));
        }
        let mut q = DMatrix::zeros(n, n);
        if n > 0 {
            q[(0, 0)] = penalty;
        }
        if n > 1 {
            q[(1, 1)] = 0.1 * penalty;
        }
        Self::with_penalty(penalty, q, r)
    }

    pub fn new(q: DMatrix<f64>, r: f64) -> Result<Self> {
        Self::with_penalty(1.0, q, r)
    }

    fn with_penalty(penalty: f64, q: DMatrix<f64>, r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(invalid_arg("R", format!("{r} must be > 0")));
        }
        check_symmetric_psd("Q", &q)?;
        Ok(Self { penalty, q, r })
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> f64 {
        self.r
    }
}

fn check_symmetric_psd(arg: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(invalid_arg(arg, "must be square"));
    }
    let scale = m.norm().max(1.0);
    if (m - m.transpose()).norm() > 1e-12 * scale {
        return Err(invalid_arg(arg, "must be symmetric"));
    }
    if m.nrows() > 0 {
        let min = m.clone().symmetric_eigenvalues().min();
        if min < -1e-12 * scale {
            return Err(invalid_arg(arg, format!("not positive semidefinite (eigenvalue {min})")));
        }
    }
    Ok(())
}

/// Stabilizing solution `Y` of `A'Y + YA - Y B R^-1 B' Y + Q = 0`.
pub fn solve_care(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || !r.is_square() || r.nrows() != b.ncols() {
        return Err(invalid_arg("A, B, Q, R", "inconsistent dimensions"));
    }
    check_symmetric_psd("Q", q)?;
    let r_inv = r
        .clone()
        .cholesky()
        .ok_or_else(|| invalid_arg("R", "must be symmetric positive definite"))?
        .inverse();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    check_stabilizable(a, b)?;

    // Scaling (Q, R) -> (Q/s, R/s) leaves the gain unchanged and Y -> Y/s;
    // pick s so the two off-diagonal Hamiltonian blocks have equal norm.
    let g = b * &r_inv * b.transpose();
    let balance = if q.norm() > 0.0 && g.norm() > 0.0 {
        (q.norm() / g.norm()).sqrt()
    } else {
        1.0
    };
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g * balance));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q / balance));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let hc = h.map(|x| Complex::new(x, 0.0));
    let schur = Schur::try_new(hc, 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical("Hamiltonian Schur decomposition did not converge".into()))?;
    let (mut u, mut t) = schur.unpack();

    let scale = h.norm().max(1.0);
    if (0..2 * n).any(|i| t[(i, i)].re.abs() <= 1e-10 * scale) {
        return Err(Error::HamiltonianBoundary);
    }
    order_stable_first(&mut t, &mut u);
    let stable = (0..2 * n).filter(|&i| t[(i, i)].re < 0.0).count();
    if stable != n {
        return Err(Error::HamiltonianBoundary);
    }

    let u11 = u.view((0, 0), (n, n)).clone_owned();
    let u21 = u.view((n, 0), (n, n)).clone_owned();
    // Y U11 = U21  <=>  U11^T Y^T = U21^T
    let yt = u11
        .transpose()
        .lu()
        .solve(&u21.transpose())
        .ok_or_else(|| Error::SynthesisInfeasible("stable invariant subspace is not a graph".into()))?;
    let yc = yt.transpose();
    if yc.iter().any(|z| !z.re.is_finite()) {
        return Err(Error::SynthesisInfeasible("stable invariant subspace is not a graph".into()));
    }
    let y = yc.map(|z| z.re) * balance;
    let y = (&y + y.transpose()) * 0.5;
    Ok(newton_polish(a, b, q, r, &r_inv, y))
}

/// Up to two Newton steps on the Riccati residual, each kept only if it
/// lowers the residual.
fn newton_polish(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    r_inv: &DMatrix<f64>,
    mut y: DMatrix<f64>,
) -> DMatrix<f64> {
    let residual = |y: &DMatrix<f64>| (a.transpose() * y + y * a - y * b * r_inv * b.transpose() * y + q).norm();
    let mut best = residual(&y);
    let target = 1e-13 * q.norm().max(1.0);
    for _ in 0..2 {
        if best <= target {
            break;
        }
        let k = r_inv * b.transpose() * &y;
        let ak = a - b * &k;
        let rhs = -(q + k.transpose() * r * &k);
        let Some(next) = solve_lyapunov(&ak, &rhs) else {
            break;
        };
        let next = (&next + next.transpose()) * 0.5;
        let res = residual(&next);
        if res < best {
            best = res;
            y = next;
        } else {
            break;
        }
    }
    y
}

/// Solves `A' X + X A = C` through the Kronecker-product linear system.
pub fn solve_lyapunov(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    // vec(A'X) = (I (x) A') vec X, vec(XA) = (A' (x) I) vec X
    let lhs = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DVector::from_column_slice(c.as_slice());
    let x = lhs.lu().solve(&rhs)?;
    Some(DMatrix::from_column_slice(n, n, x.as_slice()))
}

/// Bubbles eigenvalues with negative real part to the leading positions of
/// a complex upper-triangular Schur form, updating the Schur vectors.
fn order_stable_first(t: &mut DMatrix<C64>, u: &mut DMatrix<C64>) {
    let m = t.nrows();
    loop {
        let mut swapped = false;
        for k in 0..m.saturating_sub(1) {
            if t[(k, k)].re > 0.0 && t[(k + 1, k + 1)].re < 0.0 {
                swap_adjacent(t, u, k);
                swapped = true;
            }
        }
        if !swapped {
            break;
        }
    }
}

fn swap_adjacent(t: &mut DMatrix<C64>, u: &mut DMatrix<C64>, k: usize) {
    let m = t.nrows();
    let (t11, t22, t12) = (t[(k, k)], t[(k + 1, k + 1)], t[(k, k + 1)]);
    let (vx, vy) = (t12, t22 - t11);
    let norm = (vx.norm_sqr() + vy.norm_sqr()).sqrt();
    if norm == 0.0 {
        return;
    }
    let (c, s) = (vx / norm, vy / norm);
    // G = [[c, -conj(s)], [s, conj(c)]]; first column is the t22 eigenvector.
    let g = [[c, -s.conj()], [s, c.conj()]];
    for j in 0..m {
        let (x, y) = (t[(k, j)], t[(k + 1, j)]);
        t[(k, j)] = g[0][0].conj() * x + g[1][0].conj() * y;
        t[(k + 1, j)] = g[0][1].conj() * x + g[1][1].conj() * y;
    }
    for i in 0..m {
        let (x, y) = (t[(i, k)], t[(i, k + 1)]);
        t[(i, k)] = x * g[0][0] + y * g[1][0];
        t[(i, k + 1)] = x * g[0][1] + y * g[1][1];
        let (x, y) = (u[(i, k)], u[(i, k + 1)]);
        u[(i, k)] = x * g[0][0] + y * g[1][0];
        u[(i, k + 1)] = x * g[0][1] + y * g[1][1];
    }
    t[(k + 1, k)] = C64::new(0.0, 0.0);
}

/// PBH test on every eigenvalue in the closed right half-plane.
fn check_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    let m = b.ncols();
    let scale = a.norm().max(b.norm()).max(1.0);
    for lambda in a.complex_eigenvalues().iter() {
        if lambda.re < -1e-10 * scale {
            continue;
        }
        let pbh = DMatrix::from_fn(n, n + m, |i, j| {
            if j < n {
                let diag = if i == j { *lambda } else { C64::new(0.0, 0.0) };
                C64::new(a[(i, j)], 0.0) - diag
            } else {
                C64::new(b[(i, j - n)], 0.0)
            }
        });
        let sv = pbh.singular_values();
        let smallest = sv.iter().copied().fold(f64::INFINITY, f64::min);
        if smallest <= 1e-10 * scale {
            return Err(Error::SynthesisInfeasible(format!(
                "(A, B) is not stabilizable: mode {:+.6} {:+.6}j is uncontrollable",
                lambda.re, lambda.im
            )));
        }
    }
    Ok(())
}

/// Frobenius norm of the CARE residual.
pub fn care_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let r_inv = r.clone().try_inverse().expect("R invertible");
    (a.transpose() * y + y * a - y * b * r_inv * b.transpose() * y + q).norm()
}

/// Result of an LQR design on a SISO plant.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrSolution {
    /// Stabilizing CARE solution.
    pub riccati: DMatrix<f64>,
    /// State feedback row `K = R^-1 B' Y`; the control law is `u = -K x + N r`.
    pub gain: RowDVector<f64>,
    /// Reference pre-scaling `N` giving unit DC gain from reference to output.
    pub feedforward: f64,
    pub plant: StateSpaceModel,
    /// `(A - BK, B N, C - DK, D N)`
    pub closed_loop: StateSpaceModel,
}

impl LqrSolution {
    pub fn closed_loop_poles(&self) -> Vec<C64> {
        self.closed_loop.poles()
    }

    /// Loop transfer `K (sI - A)^-1 B` with the loop broken at the plant input.
    pub fn loop_transfer(&self) -> Result<RationalTransferFunction> {
        let p = &self.plant;
        let k = DMatrix::from_row_slice(1, self.gain.len(), self.gain.as_slice());
        StateSpaceModel::new(p.a().clone(), p.b().clone(), k, DMatrix::zeros(1, 1))?.to_transfer_function()
    }

    /// Output-feedback controller `C_eq` with `plant_tf * C_eq` equal to the
    /// state-feedback loop transfer. Requires a plant transfer function with
    /// a constant numerator, as produced by the canonical form of the full
    /// actuator system.
    pub fn equivalent_controller(&self, plant_tf: &RationalTransferFunction) -> Result<RationalTransferFunction> {
        if plant_tf.num_degree() != 0 || plant_tf.is_zero() {
            return Err(Error::UnsupportedModel(
                "equivalent output controller needs a constant plant numerator".into(),
            ));
        }
        let l = self.loop_transfer()?;
        let den_match = l
            .denominator()
            .iter()
            .zip(plant_tf.denominator())
            .all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + y.abs()))
            && l.denominator().len() == plant_tf.denominator().len();
        if !den_match {
            return Err(Error::UnsupportedModel(
                "plant transfer function does not match the synthesized plant".into(),
            ));
        }
        RationalTransferFunction::new(l.numerator().to_vec(), vec![plant_tf.numerator()[0]])
    }
}

/// LQR design for a SISO state-space plant.
pub fn lqr_gain(sys: &StateSpaceModel, w: &LqrWeights) -> Result<LqrSolution> {
    if !sys.is_siso() {
        return Err(Error::UnsupportedModel("LQR design here is single-input single-output".into()));
    }
    let n = sys.order();
    if w.q().nrows() != n {
        return Err(invalid_arg("Q", format!("is {}x{}, plant has {n} states", w.q().nrows(), w.q().ncols())));
    }
    let r = DMatrix::from_element(1, 1, w.r());
    let y = solve_care(sys.a(), sys.b(), w.q(), &r)?;
    let k_col = sys.b().transpose() * &y / w.r();
    let gain = RowDVector::from_iterator(n, k_col.iter().copied());
    let kmat = DMatrix::from_row_slice(1, n, gain.as_slice());

    let a_cl = sys.a() - sys.b() * &kmat;
    if !is_hurwitz(&a_cl) {
        return Err(Error::SynthesisInfeasible("closed loop is not Hurwitz".into()));
    }
    let c_cl = sys.c() - sys.d() * &kmat;
    let dc = {
        let x = (-&a_cl)
            .lu()
            .solve(sys.b())
            .ok_or_else(|| Error::Numerical("closed-loop A is singular".into()))?;
        (&c_cl * x)[(0, 0)] + sys.d()[(0, 0)]
    };
    if dc.abs() < 1e-14 {
        return Err(Error::Numerical("closed loop has zero DC gain; reference scaling undefined".into()));
    }
    let feedforward = 1.0 / dc;
    let closed_loop = StateSpaceModel::new(
        a_cl,
        sys.b() * feedforward,
        c_cl,
        sys.d() * feedforward,
    )?;
    Ok(LqrSolution {
        riccati: y,
        gain,
        feedforward,
        plant: sys.clone(),
        closed_loop,
    })
}

/// Quadratic Lyapunov function check `V = x'Yx` on a closed loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    pub v_posdef: bool,
    pub vdot_negdef: bool,
    pub min_eig_y: f64,
    /// Largest eigenvalue of `A_cl' Y + Y A_cl`.
    pub max_eig_vdot: f64,
}

impl LyapunovCertificate {
    pub fn is_valid(&self) -> bool {
        self.v_posdef && self.vdot_negdef
    }
}

pub fn lyapunov_certificate(sol: &LqrSolution) -> LyapunovCertificate {
    lyapunov_certificate_for(&sol.riccati, sol.closed_loop.a())
}

/// `Y > 0` through Cholesky and `A'Y + YA < 0` through its eigenvalues.
pub fn lyapunov_certificate_for(y: &DMatrix<f64>, a_cl: &DMatrix<f64>) -> LyapunovCertificate {
    let sym = (y + y.transpose()) * 0.5;
    let eig_y = sym.clone().symmetric_eigenvalues();
    let min_eig_y = eig_y.iter().copied().fold(f64::INFINITY, f64::min);
    let v_posdef = sym.clone().cholesky().is_some() && min_eig_y > 0.0;
    let vdot = a_cl.transpose() * &sym + &sym * a_cl;
    let vdot = (&vdot + vdot.transpose()) * 0.5;
    let max_eig_vdot = vdot.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    LyapunovCertificate {
        v_posdef,
        vdot_negdef: max_eig_vdot < 0.0,
        min_eig_y,
        max_eig_vdot,
    }
}

/// Closed-loop step of an `LqrSolution` evaluated directly, `x' = A_cl x + B_cl r`.
pub fn closed_loop_derivative(sol: &LqrSolution, x: &DVector<f64>, r: f64) -> DVector<f64> {
    sol.closed_loop.a() * x + sol.closed_loop.b().column(0) * r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    #[test]
    fn double_integrator_gain() {
        let a = m(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let b = m(2, 1, &[0.0, 1.0]);
        let y = solve_care(&a, &b, &DMatrix::identity(2, 2), &m(1, 1, &[1.0])).unwrap();
        let k = b.transpose() * &y;
        assert!((k[(0, 0)] - 1.0).abs() < 1e-8);
        assert!((k[(0, 1)] - 3f64.sqrt()).abs() < 1e-8);
    }

    #[test]
    fn scalar_care() {
        let y = solve_care(&m(1, 1, &[-1.0]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0])).unwrap();
        assert!((y[(0, 0)] - (2f64.sqrt() - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn zero_weight_on_stable_plant_gives_zero() {
        let a = m(2, 2, &[-1.0, 0.5, 0.0, -2.0]);
        let b = m(2, 1, &[0.0, 1.0]);
        let y = solve_care(&a, &b, &DMatrix::zeros(2, 2), &m(1, 1, &[1.0])).unwrap();
        assert!(y.norm() < 1e-12);
    }

    #[test]
    fn uncontrollable_unstable_mode_is_infeasible() {
        let a = m(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = m(2, 1, &[0.0, 1.0]);
        let r = solve_care(&a, &b, &DMatrix::identity(2, 2), &m(1, 1, &[1.0]));
        assert!(matches!(r, Err(Error::SynthesisInfeasible(_))));
    }

    #[test]
    fn undetectable_imaginary_mode_hits_boundary() {
        // marginal oscillator, unpenalized: Hamiltonian keeps +-j
        let a = m(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let b = m(2, 1, &[0.0, 1.0]);
        let r = solve_care(&a, &b, &DMatrix::zeros(2, 2), &m(1, 1, &[1.0]));
        assert_eq!(r, Err(Error::HamiltonianBoundary));
    }

    #[test]
    fn certificate_negative_case() {
        let cert = lyapunov_certificate_for(&DMatrix::identity(2, 2), &m(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        assert!(cert.v_posdef && !cert.vdot_negdef);
        let cert = lyapunov_certificate_for(&m(2, 2, &[1.0, 0.0, 0.0, 0.0]), &m(2, 2, &[-1.0, 0.0, 0.0, -1.0]));
        assert!(!cert.v_posdef);
    }

    #[test]
    fn weights_validation() {
        assert!(LqrWeights::angle_and_rate(-1.0, 1.0, 3).is_err());
        assert!(LqrWeights::angle_and_rate(1.0, 0.0, 3).is_err());
        assert!(LqrWeights::new(m(2, 2, &[1.0, 2.0, 0.0, 1.0]), 1.0).is_err());
        assert!(LqrWeights::new(m(2, 2, &[-1.0, 0.0, 0.0, 1.0]), 1.0).is_err());
        let w = LqrWeights::angle_and_rate(10.0, 1.0, 3).unwrap();
        assert_eq!(w.q().diagonal().as_slice(), &[10.0, 1.0, 0.0]);
    }
}
