//! Linear time-invariant system types and the numerics shared by every
//! other module: rational transfer functions, state-space realizations,
//! frequency responses and the H-infinity norm.

pub mod linalg;
pub mod poly;
mod state_space;
mod transfer;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use linalg::is_hurwitz;
pub use poly::C64;
pub use state_space::StateSpaceModel;
pub use transfer::RationalTransferFunction;

use crate::error::{invalid_arg, Error, Result};
use crate::optim::golden_section_min;

/// One sample of a frequency response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponsePoint {
    /// rad/s
    pub omega: f64,
    pub magnitude: f64,
    /// radians, unwrapped along the evaluated grid
    pub phase: f64,
}

/// Anything with a SISO frequency response.
pub trait FrequencyEval {
    /// Response at `s = j omega`; evaluating on a pole is an error.
    fn response_at(&self, omega: f64) -> Result<C64>;
}

impl FrequencyEval for RationalTransferFunction {
    fn response_at(&self, omega: f64) -> Result<C64> {
        let s = C64::new(0.0, omega);
        let den = poly::eval(self.denominator(), s);
        let scale: f64 = self
            .denominator()
            .iter()
            .rev()
            .enumerate()
            .map(|(k, c)| c.abs() * omega.powi(k as i32))
            .sum();
        if den.norm() <= 1e-12 * scale {
            return Err(Error::PoleOnGrid { omega });
        }
        Ok(poly::eval(self.numerator(), s) / den)
    }
}

impl FrequencyEval for StateSpaceModel {
    fn response_at(&self, omega: f64) -> Result<C64> {
        self.eval(C64::new(0.0, omega))?
            .ok_or(Error::PoleOnGrid { omega })
    }
}

/// Either representation, for heterogeneous plant families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LtiModel {
    Transfer(RationalTransferFunction),
    StateSpace(StateSpaceModel),
}

impl FrequencyEval for LtiModel {
    fn response_at(&self, omega: f64) -> Result<C64> {
        match self {
            LtiModel::Transfer(tf) => tf.response_at(omega),
            LtiModel::StateSpace(ss) => ss.response_at(omega),
        }
    }
}

impl From<RationalTransferFunction> for LtiModel {
    fn from(tf: RationalTransferFunction) -> Self {
        LtiModel::Transfer(tf)
    }
}

impl From<StateSpaceModel> for LtiModel {
    fn from(ss: StateSpaceModel) -> Self {
        LtiModel::StateSpace(ss)
    }
}

/// `n` points log-spaced over `[lo, hi]`, both ends included.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Poles of a transfer function (denominator roots, with multiplicity).
pub fn poles(tf: &RationalTransferFunction) -> Result<Vec<C64>> {
    tf.poles()
}

/// Companion-form realization with `B = e_n` and the numerator in `C`.
pub fn to_controllable_canonical(tf: &RationalTransferFunction) -> Result<StateSpaceModel> {
    if !tf.is_proper() {
        return Err(Error::UnsupportedModel(format!(
            "improper transfer function (numerator degree {} > denominator degree {})",
            tf.num_degree(),
            tf.den_degree()
        )));
    }
    let den = tf.denominator();
    let n = tf.den_degree();
    // split off the direct feedthrough for biproper input
    let mut num = vec![0.0; n + 1];
    let off = n + 1 - tf.numerator().len();
    num[off..].copy_from_slice(tf.numerator());
    let d = num[0];
    let rem: Vec<f64> = (0..=n).map(|i| num[i] - d * den[i]).collect();

    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    if n > 0 {
        for j in 0..n {
            a[(n - 1, j)] = -den[n - j];
        }
    }
    let mut b = DVector::<f64>::zeros(n);
    if n > 0 {
        b[n - 1] = 1.0;
    }
    let c = DVector::from_fn(n, |j, _| rem[n - j]);
    StateSpaceModel::siso(a, b, c, d)
}

/// Magnitude and unwrapped phase on an ascending grid of positive
/// frequencies.
pub fn frequency_response<S: FrequencyEval + ?Sized>(sys: &S, omegas: &[f64]) -> Result<Vec<FrequencyResponsePoint>> {
    validate_grid(omegas)?;
    let mut out = Vec::with_capacity(omegas.len());
    let mut prev_phase: Option<f64> = None;
    for &w in omegas {
        let h = sys.response_at(w)?;
        let mut phase = h.arg();
        if let Some(p) = prev_phase {
            let two_pi = 2.0 * std::f64::consts::PI;
            phase -= two_pi * ((phase - p) / two_pi).round();
        }
        prev_phase = Some(phase);
        out.push(FrequencyResponsePoint {
            omega: w,
            magnitude: h.norm(),
            phase,
        });
    }
    Ok(out)
}

pub(crate) fn validate_grid(omegas: &[f64]) -> Result<()> {
    if omegas.is_empty() {
        return Err(invalid_arg("omegas", "empty frequency grid"));
    }
    if omegas.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(invalid_arg("omegas", "frequencies must be finite and strictly positive"));
    }
    if omegas.windows(2).any(|p| p[1] <= p[0]) {
        return Err(invalid_arg("omegas", "frequencies must be strictly ascending"));
    }
    Ok(())
}

/// Frequency grid used by [`hinf_norm_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HinfOptions {
    pub grid_points: usize,
    pub omega_min: f64,
    pub omega_max: f64,
}

impl Default for HinfOptions {
    fn default() -> Self {
        Self {
            grid_points: 400,
            omega_min: 1e-3,
            omega_max: 1e3,
        }
    }
}

/// H-infinity norm of a stable SISO transfer function.
pub fn hinf_norm(tf: &RationalTransferFunction) -> Result<f64> {
    hinf_norm_with(tf, &HinfOptions::default())
}

/// Peak gain over a log grid, refined by golden-section search around the
/// best grid point. The grid is widened to cover every pole and zero
/// magnitude, and the DC and high-frequency limits are included.
pub fn hinf_norm_with(tf: &RationalTransferFunction, opts: &HinfOptions) -> Result<f64> {
    if !tf.is_proper() {
        return Err(Error::InfiniteNorm("improper transfer function".into()));
    }
    let poles = tf.poles()?;
    if let Some(p) = poles.iter().find(|p| p.re >= 0.0) {
        return Err(Error::InfiniteNorm(format!(
            "unstable pole at {:+.6} {:+.6}j",
            p.re, p.im
        )));
    }
    if tf.is_zero() {
        return Ok(0.0);
    }
    let mags: Vec<f64> = poles
        .iter()
        .chain(tf.zeros()?.iter())
        .map(|z| z.norm())
        .filter(|m| *m > 0.0)
        .collect();
    let lo = mags.iter().fold(opts.omega_min, |a, m| a.min(0.1 * m));
    let hi = mags.iter().fold(opts.omega_max, |a, m| a.max(10.0 * m));

    let gain = |w: f64| tf.eval(C64::new(0.0, w)).norm();
    let grid = logspace(lo, hi, opts.grid_points.max(3));
    let (best_i, best) = grid
        .iter()
        .map(|&w| gain(w))
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, g)| if g > acc.1 { (i, g) } else { acc });

    let a = grid[best_i.saturating_sub(1)].ln();
    let b = grid[(best_i + 1).min(grid.len() - 1)].ln();
    let (_, neg_peak) = golden_section_min(|x| -gain(x.exp()), a, b, 1e-10);
    let dc = tf.dc_gain().map_or(0.0, f64::abs);
    let hf = tf.high_frequency_gain().map_or(0.0, f64::abs);
    Ok(best.max(-neg_peak).max(dc).max(hf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn tf(num: &[f64], den: &[f64]) -> RationalTransferFunction {
        RationalTransferFunction::new(num.to_vec(), den.to_vec()).unwrap()
    }

    #[test]
    fn canonical_form_first_and_second_order() {
        let ss = to_controllable_canonical(&tf(&[1.0], &[1.0, 1.0])).unwrap();
        assert_eq!(ss.a()[(0, 0)], -1.0);
        assert_eq!(ss.b()[(0, 0)], 1.0);
        assert_eq!(ss.c()[(0, 0)], 1.0);

        let ss = to_controllable_canonical(&tf(&[1.0], &[1.0, 0.0, 1.0])).unwrap();
        assert_eq!(ss.a().as_slice(), DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]).as_slice());
        assert_eq!(ss.b().as_slice(), &[0.0, 1.0]);
        assert_eq!(ss.c().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn improper_input_is_unsupported() {
        let r = to_controllable_canonical(&tf(&[1.0, 0.0, 0.0], &[1.0, 1.0]));
        assert!(matches!(r, Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn biproper_feedthrough_is_split_off() {
        let g = tf(&[2.0, 3.0], &[1.0, 1.0]);
        let ss = to_controllable_canonical(&g).unwrap();
        assert_eq!(ss.d()[(0, 0)], 2.0);
        let w = 0.7;
        let a = g.response_at(w).unwrap();
        let b = ss.response_at(w).unwrap();
        assert!((a - b).norm() < 1e-14);
    }

    #[test]
    fn first_order_lag_at_corner() {
        let r = frequency_response(&tf(&[1.0], &[1.0, 1.0]), &[1.0]).unwrap();
        assert!((r[0].magnitude - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((r[0].phase + FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn integrator_at_ten() {
        let r = frequency_response(&RationalTransferFunction::integrator(1.0), &[10.0]).unwrap();
        assert!((r[0].magnitude - 0.1).abs() < 1e-15);
        assert!((r[0].phase + FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn phase_is_unwrapped_through_minus_pi() {
        let g = tf(&[1.0], &[1.0, 3.0, 3.0, 1.0]);
        let r = frequency_response(&g, &logspace(0.01, 100.0, 200)).unwrap();
        assert!(r.last().unwrap().phase < -1.4 * std::f64::consts::PI);
        assert!(r.windows(2).all(|p| p[1].phase <= p[0].phase + 1e-12));
    }

    #[test]
    fn pole_on_grid_names_frequency() {
        let g = tf(&[1.0], &[1.0, 0.0, 4.0]);
        let e = frequency_response(&g, &[1.0, 2.0, 3.0]).unwrap_err();
        assert_eq!(e, Error::PoleOnGrid { omega: 2.0 });
    }

    #[test]
    fn grid_must_be_ascending_and_positive() {
        let g = tf(&[1.0], &[1.0, 1.0]);
        assert!(frequency_response(&g, &[1.0, 0.5]).is_err());
        assert!(frequency_response(&g, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn hinf_simple_cases() {
        assert!((hinf_norm(&tf(&[1.0], &[1.0, 1.0])).unwrap() - 1.0).abs() < 1e-4);
        assert!((hinf_norm(&RationalTransferFunction::gain(0.5)).unwrap() - 0.5).abs() < 1e-12);
        let z: f64 = 0.1;
        let peak = 1.0 / (2.0 * z * (1.0 - z * z).sqrt());
        let h = hinf_norm(&tf(&[1.0], &[1.0, 2.0 * z, 1.0])).unwrap();
        assert!((h - peak).abs() / peak < 1e-4, "{h} vs {peak}");
    }

    #[test]
    fn hinf_rejects_unstable_and_marginal() {
        assert!(matches!(hinf_norm(&tf(&[1.0], &[1.0, -1.0])), Err(Error::InfiniteNorm(_))));
        assert!(matches!(hinf_norm(&RationalTransferFunction::integrator(1.0)), Err(Error::InfiniteNorm(_))));
    }

    #[test]
    fn hinf_finds_resonance_outside_default_grid() {
        let w: f64 = 5e3;
        let g = tf(&[w * w], &[1.0, 2.0 * 0.05 * w, w * w]);
        let peak = 1.0 / (2.0 * 0.05 * (1.0f64 - 0.0025).sqrt());
        assert!((hinf_norm(&g).unwrap() - peak).abs() / peak < 1e-4);
    }
}
