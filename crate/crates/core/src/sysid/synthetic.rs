//! Synthetic experiment traces for examples, tests and dry runs of the
//! command-line workflow.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::damping::second_order_step;
use super::ExperimentTrace;
use crate::error::{invalid_arg, Result};

/// Noise-free step experiment: `input = amplitude` from `t = 0`, output
/// `gain * amplitude * step(t)` of the second-order model.
pub fn second_order_step_trace(
    zeta: f64,
    omega_n: f64,
    gain: f64,
    amplitude: f64,
    sample_rate_hz: f64,
    horizon_s: f64,
) -> Result<ExperimentTrace> {
    if !(sample_rate_hz > 0.0 && horizon_s > 0.0) {
        return Err(invalid_arg("sample_rate_hz", "sample rate and horizon must be > 0"));
    }
    let n = (horizon_s * sample_rate_hz).round() as usize + 1;
    let dt = 1.0 / sample_rate_hz;
    let t: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
    let y = t
        .iter()
        .map(|&ti| gain * amplitude * second_order_step(ti, zeta, omega_n))
        .collect();
    ExperimentTrace::new(t, vec![amplitude; n], y)
}

/// Adds white Gaussian noise with standard deviation
/// `relative_std * std(output)` using a seeded generator.
pub fn with_output_noise(trace: &ExperimentTrace, relative_std: f64, seed: u64) -> Result<ExperimentTrace> {
    let y = trace.output();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
    let normal = Normal::new(0.0, (relative_std * std).max(0.0))
        .map_err(|e| invalid_arg("relative_std", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = y.iter().map(|v| v + normal.sample(&mut rng)).collect();
    ExperimentTrace::new(trace.timestamps().to_vec(), trace.input().to_vec(), noisy)
}

/// `count` step experiments with damping ratios evenly spread over
/// `zeta +/- spread`.
pub fn damping_family(
    zeta: f64,
    spread: f64,
    omega_n: f64,
    gain: f64,
    amplitude: f64,
    count: usize,
) -> Result<Vec<ExperimentTrace>> {
    (0..count)
        .map(|k| {
            let z = if count == 1 {
                zeta
            } else {
                zeta - spread + 2.0 * spread * k as f64 / (count - 1) as f64
            };
            second_order_step_trace(z, omega_n, gain, amplitude, 100.0, 10.0)
        })
        .collect()
}
