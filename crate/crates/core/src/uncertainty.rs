//! Multiplicative uncertainty: relative-error envelopes over a plant
//! family, overbounding weights, and the small-gain robust-stability test
//! on the complementary sensitivity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid_arg, Error, Result};
use crate::lti::{hinf_norm, logspace, poly, validate_grid, FrequencyEval, RationalTransferFunction, C64};
use crate::optim::nelder_mead;

/// Below this nominal magnitude the relative error is undefined.
const DEGENERATE_MAGNITUDE: f64 = 1e-12;
pub const DEFAULT_GRID_POINTS: usize = 200;

/// 200 log-spaced points over `[omega_n / 100, 100 omega_n]`.
pub fn default_grid(omega_n: f64) -> Vec<f64> {
    logspace(omega_n / 100.0, omega_n * 100.0, DEFAULT_GRID_POINTS)
}

/// `|G_k(jw) / G(jw) - 1|` for every member `k` (outer index) and grid
/// frequency (inner index).
pub fn relative_errors<M: FrequencyEval>(
    nominal: &RationalTransferFunction,
    family: &[M],
    omegas: &[f64],
) -> Result<Vec<Vec<f64>>> {
    if family.is_empty() {
        return Err(invalid_arg("family", "must contain at least one member"));
    }
    validate_grid(omegas)?;
    let base: Vec<C64> = omegas
        .iter()
        .map(|&w| {
            let g = nominal.response_at(w)?;
            if g.norm() < DEGENERATE_MAGNITUDE {
                return Err(Error::DivisionDegenerate { omega: w });
            }
            Ok(g)
        })
        .collect::<Result<_>>()?;
    family
        .iter()
        .map(|member| {
            omegas
                .iter()
                .zip(&base)
                .map(|(&w, g)| Ok((member.response_at(w)? / g - 1.0).norm()))
                .collect()
        })
        .collect()
}

/// Pointwise maximum of [`relative_errors`] over the family.
pub fn relative_error_envelope<M: FrequencyEval>(
    nominal: &RationalTransferFunction,
    family: &[M],
    omegas: &[f64],
) -> Result<Vec<f64>> {
    Ok(pointwise_max(&relative_errors(nominal, family, omegas)?))
}

fn pointwise_max(rows: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0f64; rows.first().map_or(0, Vec::len)];
    for row in rows {
        for (o, v) in out.iter_mut().zip(row) {
            *o = (*o).max(*v);
        }
    }
    out
}

/// Stable minimum-phase weight of order 0, 1 or 2 overbounding `envelope`
/// on `omegas`.
///
/// Order `n` has the form `g prod_i (s/z_i + 1) / (s/p_i + 1)`. Corner
/// frequencies come from a log-magnitude least-squares fit; the gain is
/// then raised until the bound holds everywhere, and the corners are
/// re-tuned to minimize the resulting overshoot.
pub fn fit_weight(envelope: &[f64], omegas: &[f64], order: usize) -> Result<RationalTransferFunction> {
    if order > 2 {
        return Err(invalid_arg("order", "weight order must be 0, 1 or 2"));
    }
    validate_grid(omegas)?;
    if envelope.len() != omegas.len() {
        return Err(invalid_arg("envelope", "length must match the frequency grid"));
    }
    if envelope.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(invalid_arg("envelope", "values must be finite and non-negative"));
    }
    let peak = envelope.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Ok(RationalTransferFunction::gain(0.0));
    }
    if order == 0 {
        return Ok(RationalTransferFunction::gain(peak));
    }

    let floor = peak * 1e-9;
    let pts: Vec<(f64, f64)> = omegas
        .iter()
        .zip(envelope)
        .filter(|(_, &e)| e > floor)
        .map(|(&w, &e)| (w, e.ln()))
        .collect();
    let (lo, hi) = (omegas[0].ln(), omegas[omegas.len() - 1].ln());
    let bounds = (lo - 3.0 * std::f64::consts::LN_10, hi + 3.0 * std::f64::consts::LN_10);

    let residuals = |theta: &[f64]| -> Vec<f64> {
        pts.iter().map(|&(w, le)| le - log_shape(theta, w)).collect()
    };
    let out_of_range = |theta: &[f64]| -> f64 {
        theta.iter().map(|t| (bounds.0 - t).max(0.0) + (t - bounds.1).max(0.0)).sum::<f64>()
    };
    let least_squares = |theta: &[f64]| -> f64 {
        let r = residuals(theta);
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() + 1e3 * out_of_range(theta)
    };
    let overshoot = |theta: &[f64]| -> f64 {
        let r = residuals(theta);
        let top = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        r.iter().map(|v| (top - v).powi(2)).sum::<f64>() + 1e3 * out_of_range(theta)
    };

    let mid = 0.5 * (lo + hi);
    let span = 0.25 * (hi - lo);
    let starts: Vec<Vec<f64>> = [(-span, span), (span, -span), (0.0, 0.0)]
        .iter()
        .map(|&(dz, dp)| (0..order).flat_map(|_| [mid + dz, mid + dp]).collect())
        .collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in &starts {
        let (ls, _) = nelder_mead(least_squares, start, 1.0, 4000, 1e-12);
        let (theta, val) = nelder_mead(overshoot, &ls, 0.5, 4000, 1e-12);
        if best.as_ref().is_none_or(|(_, b)| val < *b) {
            best = Some((theta, val));
        }
    }
    let (theta, _) = best.expect("at least one start");

    let mut num = vec![1.0];
    let mut den = vec![1.0];
    for pair in theta.chunks(2) {
        num = poly::mul(&num, &[(-pair[0]).exp(), 1.0]);
        den = poly::mul(&den, &[(-pair[1]).exp(), 1.0]);
    }
    let shape = RationalTransferFunction::new(num, den)?;
    Ok(shape.scale(overbound_ratio(&shape, envelope, omegas)?))
}

/// `ln |prod (jw/z + 1) / (jw/p + 1)|` with `theta = [ln z, ln p, ...]`.
fn log_shape(theta: &[f64], w: f64) -> f64 {
    theta
        .chunks(2)
        .map(|p| 0.5 * ((w / p[0].exp()).powi(2)).ln_1p() - 0.5 * ((w / p[1].exp()).powi(2)).ln_1p())
        .sum()
}

/// Smallest scale making `|scale * shape|` touch the envelope from above.
fn overbound_ratio(shape: &RationalTransferFunction, envelope: &[f64], omegas: &[f64]) -> Result<f64> {
    let mut ratio = 0.0f64;
    for (&w, &e) in omegas.iter().zip(envelope) {
        ratio = ratio.max(e / shape.response_at(w)?.norm());
    }
    Ok(ratio * (1.0 + 8.0 * f64::EPSILON))
}

/// True when `|W(jw)| >= envelope(w)` at every grid point.
pub fn overbounds(weight: &RationalTransferFunction, envelope: &[f64], omegas: &[f64]) -> Result<bool> {
    for (&w, &e) in omegas.iter().zip(envelope) {
        if weight.response_at(w)?.norm() < e {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Nominal plant, weight and the data the weight was fitted to.
#[derive(Debug, Clone, Serialize)]
pub struct UncertainPlant {
    pub nominal: RationalTransferFunction,
    pub weight: RationalTransferFunction,
    pub sample_omegas: Vec<f64>,
    /// One magnitude list per family member.
    pub relative_errors: Vec<Vec<f64>>,
    pub envelope: Vec<f64>,
}

impl UncertainPlant {
    pub fn from_family<M: FrequencyEval>(
        nominal: RationalTransferFunction,
        family: &[M],
        omegas: Vec<f64>,
        weight_order: usize,
    ) -> Result<Self> {
        let errors = relative_errors(&nominal, family, &omegas)?;
        let envelope = pointwise_max(&errors);
        let weight = fit_weight(&envelope, &omegas, weight_order)?;
        Ok(Self {
            nominal,
            weight,
            sample_omegas: omegas,
            relative_errors: errors,
            envelope,
        })
    }

    /// `(omega, envelope, |W(j omega)|)` rows.
    pub fn magnitude_table(&self) -> Result<Vec<(f64, f64, f64)>> {
        self.sample_omegas
            .iter()
            .zip(&self.envelope)
            .map(|(&w, &e)| Ok((w, e, self.weight.response_at(w)?.norm())))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobustnessReport {
    /// `|| W T K / (1 + T K) ||_inf`
    pub margin: f64,
    pub pass: bool,
}

/// Small-gain test for the plant family `T (1 + Delta W)`, `|Delta| <= 1`,
/// under the controller `K` in a unity negative-feedback loop.
pub fn robust_stability_check(
    nominal: &RationalTransferFunction,
    weight: &RationalTransferFunction,
    controller: &RationalTransferFunction,
) -> Result<RobustnessReport> {
    robust_stability_check_loop(weight, &(nominal * controller))
}

/// As [`robust_stability_check`] with the loop gain `L = T K` given directly.
pub fn robust_stability_check_loop(
    weight: &RationalTransferFunction,
    loop_gain: &RationalTransferFunction,
) -> Result<RobustnessReport> {
    check_nominal_stability(loop_gain)?;
    if weight.is_zero() {
        return Ok(RobustnessReport { margin: 0.0, pass: true });
    }
    let margin = hinf_norm(&(weight * &loop_gain.unity_feedback()))?;
    Ok(RobustnessReport { margin, pass: margin < 1.0 })
}

fn check_nominal_stability(loop_gain: &RationalTransferFunction) -> Result<()> {
    let roots = poly::roots(&loop_gain.closed_loop_characteristic())?;
    match roots.iter().find(|z| z.re >= 0.0) {
        Some(z) => Err(Error::NominalInstability { re: z.re, im: z.im }),
        None => Ok(()),
    }
}

/// Draws `n_samples` first-order perturbations `Delta` with
/// `|Delta|_inf <= 1` and reports whether every perturbed closed loop
/// `1 + T (1 + Delta W) K` is Hurwitz.
///
/// Only meaningful once the small-gain check passes; a failing check is
/// rejected as an argument error.
pub fn sample_family_verify(
    nominal: &RationalTransferFunction,
    weight: &RationalTransferFunction,
    controller: &RationalTransferFunction,
    n_samples: usize,
    seed: u64,
) -> Result<bool> {
    sample_family_verify_loop(weight, &(nominal * controller), n_samples, seed)
}

/// As [`sample_family_verify`] with the loop gain `L = T K` given directly.
pub fn sample_family_verify_loop(
    weight: &RationalTransferFunction,
    loop_gain: &RationalTransferFunction,
    n_samples: usize,
    seed: u64,
) -> Result<bool> {
    let report = robust_stability_check_loop(weight, loop_gain)?;
    if !report.pass {
        return Err(invalid_arg(
            "weight",
            format!("small-gain check fails (margin {:.4}); sampling is not a certificate", report.margin),
        ));
    }
    if weight.is_zero() {
        return Ok(true);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_samples {
        let delta = random_perturbation(&mut rng);
        let perturbed = loop_gain * &RationalTransferFunction::gain(1.0).add(&(&delta * weight));
        let roots = poly::roots(&perturbed.closed_loop_characteristic())?;
        if roots.iter().any(|z| z.re >= 0.0) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `gamma (a - s)/(a + s)` or `gamma a/(s + a)`, `|gamma| <= 1`, corner
/// log-uniform over `[1e-2, 1e3]` rad/s.
fn random_perturbation(rng: &mut ChaCha8Rng) -> RationalTransferFunction {
    let gamma: f64 = rng.random_range(-1.0..=1.0);
    let a = 10f64.powf(rng.random_range(-2.0..3.0));
    let tf = if rng.random_bool(0.5) {
        RationalTransferFunction::new(vec![-gamma, gamma * a], vec![1.0, a])
    } else {
        RationalTransferFunction::new(vec![gamma * a], vec![1.0, a])
    };
    tf.expect("valid first-order perturbation")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tf(n: &[f64], d: &[f64]) -> RationalTransferFunction {
        RationalTransferFunction::new(n.to_vec(), d.to_vec()).unwrap()
    }

    #[test]
    fn envelope_examples() {
        let g = tf(&[1.0], &[1.0, 1.0]);
        let w = logspace(0.01, 100.0, 50);
        assert!(relative_error_envelope(&g, std::slice::from_ref(&g), &w).unwrap().iter().all(|e| *e == 0.0));
        let env = relative_error_envelope(&g, &[g.scale(2.0)], &w).unwrap();
        assert!(env.iter().all(|e| (e - 1.0).abs() < 1e-12));
        let env = relative_error_envelope(&g, &[tf(&[1.0], &[1.0, 1.2])], &[1.0]).unwrap();
        let j = C64::new(0.0, 1.0);
        let oracle = ((1.0 + j) / (1.2 + j) - 1.0).norm();
        assert!((env[0] - oracle).abs() < 1e-14);
        assert!((env[0] - 0.128_04).abs() < 1e-5);
    }

    #[test]
    fn envelope_degenerate_nominal() {
        let g = tf(&[1.0, 0.0, 1.0], &[1.0, 2.0, 1.0]);
        let r = relative_error_envelope(&g, std::slice::from_ref(&g), &[0.5, 1.0]);
        assert_eq!(r, Err(Error::DivisionDegenerate { omega: 1.0 }));
    }

    #[test]
    fn weight_orders() {
        let w = logspace(0.01, 100.0, 200);
        let flat = vec![0.2; w.len()];
        let w0 = fit_weight(&flat, &w, 0).unwrap();
        assert_eq!(w0.dc_gain(), Some(0.2));
        assert!(fit_weight(&vec![0.0; w.len()], &w, 2).unwrap().is_zero());

        let rising: Vec<f64> = w.iter().map(|x| 0.05 * (1.0 + (x / 2.0).powi(2)).sqrt() / (1.0 + (x / 50.0).powi(2)).sqrt()).collect();
        let w1 = fit_weight(&rising, &w, 1).unwrap();
        assert!(overbounds(&w1, &rising, &w).unwrap());
        assert!(w1.is_stable().unwrap());
        let (a, b) = (-w1.zeros().unwrap()[0].re, -w1.poles().unwrap()[0].re);
        assert!(b > a && a > 0.0);
        assert!((a - 2.0).abs() < 0.05 && (b - 50.0).abs() < 1.0, "a {a} b {b}");
        let w2 = fit_weight(&rising, &w, 2).unwrap();
        assert!(overbounds(&w2, &rising, &w).unwrap());
        assert!(w2.is_stable().unwrap());
        assert!(w2.zeros().unwrap().iter().all(|z| z.re < 0.0));
    }

    #[test]
    fn small_gain_examples() {
        let t = tf(&[1.0], &[1.0, 1.0]);
        let k = RationalTransferFunction::gain(1.0);
        let r = robust_stability_check(&t, &RationalTransferFunction::gain(0.0), &k).unwrap();
        assert_eq!(r, RobustnessReport { margin: 0.0, pass: true });
        let r = robust_stability_check(&t, &RationalTransferFunction::gain(1.0), &k).unwrap();
        assert!((r.margin - 0.5).abs() < 1e-9 && r.pass);
        let r = robust_stability_check(&t, &RationalTransferFunction::gain(3.0), &k).unwrap();
        assert!((r.margin - 1.5).abs() < 1e-9 && !r.pass);
    }

    #[test]
    fn nominal_instability_reported() {
        let t = tf(&[1.0], &[1.0, -3.0]);
        let r = robust_stability_check(&t, &RationalTransferFunction::gain(0.1), &RationalTransferFunction::gain(1.0));
        assert!(matches!(r, Err(Error::NominalInstability { .. })));
    }

    #[test]
    fn sampling_corroborates_pass_and_rejects_fail() {
        let t = tf(&[1.0], &[1.0, 1.0]);
        let k = RationalTransferFunction::gain(1.0);
        assert!(sample_family_verify(&t, &RationalTransferFunction::gain(1.0), &k, 100, 3).unwrap());
        assert!(sample_family_verify(&t, &RationalTransferFunction::gain(0.0), &k, 10, 3).unwrap());
        assert!(sample_family_verify(&t, &RationalTransferFunction::gain(3.0), &k, 10, 3).is_err());
    }
}
