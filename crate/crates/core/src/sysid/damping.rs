use serde::{Deserialize, Serialize};

use super::ExperimentTrace;
use crate::error::{invalid_arg, Error, Result};
use crate::optim::golden_section_min;

const ZETA_LO: f64 = 0.01;
const ZETA_HI: f64 = 0.99;
const ZETA_TOL: f64 = 1e-5;
/// Relative tolerance on the step input level.
const STEP_LEVEL_TOL: f64 = 0.05;

/// Damping ratio and its run-to-run perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingEstimate {
    pub zeta_nominal: f64,
    /// max_k |zeta_k - zeta_nominal|
    pub zeta_delta: f64,
    pub per_trace_zetas: Vec<f64>,
    /// Fitted static gain (output per unit input) of each trace.
    pub per_trace_gains: Vec<f64>,
    /// rad, pooled over all traces
    pub residual_rms: f64,
    /// Indices of traces whose optimum sits on the search boundary.
    pub boundary_hits: Vec<usize>,
}

impl DampingEstimate {
    pub fn has_boundary_warning(&self) -> bool {
        !self.boundary_hits.is_empty()
    }
}

/// Unit step response of `wn^2 / (s^2 + 2 zeta wn s + wn^2)`, `0 < zeta < 1`.
pub fn second_order_step(t: f64, zeta: f64, omega_n: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let root = (1.0 - zeta * zeta).sqrt();
    let wd = omega_n * root;
    1.0 - (-zeta * omega_n * t).exp() * ((wd * t).cos() + zeta / root * (wd * t).sin())
}

/// Per trace, the damping ratio minimizing the squared error to the
/// analytic step response with `omega_n` fixed and the output scale
/// co-fitted in closed form; nominal is the mean over traces.
pub fn fit_damping_ratio(traces: &[ExperimentTrace], omega_n: f64, step_amplitude: f64) -> Result<DampingEstimate> {
    if traces.is_empty() {
        return Err(Error::InvalidExperiment("no traces".into()));
    }
    if !(omega_n > 0.0 && omega_n.is_finite()) {
        return Err(invalid_arg("omega_n", "must be > 0"));
    }
    if step_amplitude == 0.0 || !step_amplitude.is_finite() {
        return Err(invalid_arg("step_amplitude", "must be finite and non-zero"));
    }

    let mut zetas = Vec::with_capacity(traces.len());
    let mut gains = Vec::with_capacity(traces.len());
    let mut boundary_hits = Vec::new();
    let mut sse_total = 0.0;
    let mut count = 0usize;
    for (k, trace) in traces.iter().enumerate() {
        let (t, y) = step_window(trace, step_amplitude, k)?;
        let sse_and_scale = |zeta: f64| -> (f64, f64) {
            let (mut syy, mut syp, mut spp) = (0.0, 0.0, 0.0);
            for (&ti, &yi) in t.iter().zip(&y) {
                let p = second_order_step(ti, zeta, omega_n);
                syy += yi * yi;
                syp += yi * p;
                spp += p * p;
            }
            if spp == 0.0 {
                return (syy, 0.0);
            }
            ((syy - syp * syp / spp).max(0.0), syp / spp)
        };
        let (zeta, sse) = golden_section_min(|z| sse_and_scale(z).0, ZETA_LO, ZETA_HI, ZETA_TOL);
        if zeta - ZETA_LO < 1e-3 || ZETA_HI - zeta < 1e-3 {
            boundary_hits.push(k);
        }
        zetas.push(zeta);
        gains.push(sse_and_scale(zeta).1 / step_amplitude);
        sse_total += sse;
        count += t.len();
    }
    let zeta_nominal = zetas.iter().sum::<f64>() / zetas.len() as f64;
    let zeta_delta = zetas.iter().map(|z| (z - zeta_nominal).abs()).fold(0.0, f64::max);
    Ok(DampingEstimate {
        zeta_nominal,
        zeta_delta,
        per_trace_zetas: zetas,
        per_trace_gains: gains,
        residual_rms: (sse_total / count as f64).sqrt(),
        boundary_hits,
    })
}

/// Samples at `t >= 0`, after checking the input holds the step level.
fn step_window(trace: &ExperimentTrace, amplitude: f64, index: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut t = Vec::new();
    let mut y = Vec::new();
    for ((&ti, &ui), &yi) in trace.timestamps().iter().zip(trace.input()).zip(trace.output()) {
        if ti < 0.0 {
            continue;
        }
        if ti > 0.0 && (ui - amplitude).abs() > STEP_LEVEL_TOL * amplitude.abs() {
            return Err(Error::InvalidExperiment(format!(
                "trace {index}: input {ui} at t = {ti} s departs from the step level {amplitude}"
            )));
        }
        t.push(ti);
        y.push(yi);
    }
    if t.len() < super::MIN_TRACE_LEN {
        return Err(Error::InvalidExperiment(format!("trace {index}: too few samples after t = 0")));
    }
    Ok((t, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysid::synthetic::second_order_step_trace;

    #[test]
    fn recovers_damping_from_clean_trace() {
        let tr = second_order_step_trace(0.6, 1.812, 0.9, 0.06, 100.0, 10.0).unwrap();
        let est = fit_damping_ratio(&[tr], 1.812, 0.06).unwrap();
        assert!((est.zeta_nominal - 0.6).abs() < 1e-4);
        assert_eq!(est.zeta_delta, 0.0);
        assert!((est.per_trace_gains[0] - 0.9).abs() < 1e-4);
        assert!(!est.has_boundary_warning());
    }

    #[test]
    fn rejects_non_step_input() {
        let tr = second_order_step_trace(0.6, 1.812, 1.0, 1.0, 100.0, 10.0).unwrap();
        let mut input = tr.input().to_vec();
        input[300] = 0.2;
        let bad = ExperimentTrace::new(tr.timestamps().to_vec(), input, tr.output().to_vec()).unwrap();
        assert!(matches!(fit_damping_ratio(&[bad], 1.812, 1.0), Err(Error::InvalidExperiment(_))));
        assert!(fit_damping_ratio(&[], 1.812, 1.0).is_err());
    }

    #[test]
    fn overdamped_looking_trace_hits_boundary() {
        let t: Vec<f64> = (0..1000).map(|k| k as f64 * 0.01).collect();
        let y: Vec<f64> = t.iter().map(|t| 1.0 - (-0.05 * t).exp()).collect();
        let tr = ExperimentTrace::new(t, vec![1.0; 1000], y).unwrap();
        let est = fit_damping_ratio(&[tr], 5.0, 1.0).unwrap();
        assert!(est.has_boundary_warning());
    }
}
