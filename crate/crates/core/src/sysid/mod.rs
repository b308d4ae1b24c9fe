//! Identification from experiment traces: damping-ratio fitting against the
//! analytic second-order step response, deterministic subspace
//! identification, and the normalized-RMSE fit metric.

mod damping;
mod subspace;
pub mod synthetic;

use serde::{Deserialize, Serialize};

pub use damping::{fit_damping_ratio, second_order_step, DampingEstimate};
pub use subspace::{
    identify_subspace, identify_subspace_auto, identify_subspace_with, select_order, simulate_discrete, IdentifiedModel,
    ModelOrder, SubspaceOptions,
};

use crate::error::{Error, Result};

pub const MIN_TRACE_LEN: usize = 16;

/// Uniformly sampled single-input single-output record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTrace {
    timestamps: Vec<f64>,
    input: Vec<f64>,
    output: Vec<f64>,
}

impl ExperimentTrace {
    pub fn new(timestamps: Vec<f64>, input: Vec<f64>, output: Vec<f64>) -> Result<Self> {
        let n = timestamps.len();
        if input.len() != n || output.len() != n {
            return Err(Error::InvalidTrace(format!(
                "length mismatch: {} timestamps, {} inputs, {} outputs",
                n,
                input.len(),
                output.len()
            )));
        }
        if n < MIN_TRACE_LEN {
            return Err(Error::InvalidTrace(format!("{n} samples, need at least {MIN_TRACE_LEN}")));
        }
        if timestamps.iter().chain(&input).chain(&output).any(|v| !v.is_finite()) {
            return Err(Error::InvalidTrace("non-finite sample".into()));
        }
        if let Some(k) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidTrace(format!("timestamps not strictly increasing at sample {}", k + 1)));
        }
        let dt = (timestamps[n - 1] - timestamps[0]) / (n - 1) as f64;
        let tol = 1e-9 * dt.max(timestamps[n - 1].abs() * 1e-6);
        if let Some(k) = (0..n).find(|&k| (timestamps[k] - timestamps[0] - k as f64 * dt).abs() > tol) {
            return Err(Error::InvalidTrace(format!("non-uniform sampling at sample {k}")));
        }
        Ok(Self {
            timestamps,
            input,
            output,
        })
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }
    pub fn input(&self) -> &[f64] {
        &self.input
    }
    pub fn output(&self) -> &[f64] {
        &self.output
    }
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }
    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn sample_period(&self) -> f64 {
        let n = self.len();
        (self.timestamps[n - 1] - self.timestamps[0]) / (n - 1) as f64
    }

    /// Copy with the output multiplied by `k`.
    pub fn scale_output(&self, k: f64) -> Self {
        Self {
            output: self.output.iter().map(|y| y * k).collect(),
            ..self.clone()
        }
    }
}

/// `100 (1 - |y - y_model| / |y - mean(y)|)`.
pub fn fit_percent(measured: &[f64], model: &[f64]) -> Result<f64> {
    if measured.len() != model.len() || measured.len() < 2 {
        return Err(Error::InvalidTrace("fit needs two equal-length series of at least 2 samples".into()));
    }
    let mean = measured.iter().sum::<f64>() / measured.len() as f64;
    let spread = measured.iter().map(|y| (y - mean).powi(2)).sum::<f64>().sqrt();
    if spread == 0.0 {
        return Err(Error::UndefinedFit);
    }
    let err = measured.iter().zip(model).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(100.0 * (1.0 - err / spread))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_examples() {
        let y = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(fit_percent(&y, &y).unwrap(), 100.0);
        assert!(fit_percent(&y, &[1.5; 4]).unwrap().abs() < 1e-12);
        let f = fit_percent(&y, &[0.0, 1.0, 2.0, 4.0]).unwrap();
        assert!((f - 100.0 * (1.0 - 1.0 / 5f64.sqrt())).abs() < 1e-12);
        assert!((f - 55.278_640_450).abs() < 1e-8);
        assert_eq!(fit_percent(&[2.0; 4], &[2.0; 4]), Err(Error::UndefinedFit));
    }

    #[test]
    fn trace_validation() {
        let t: Vec<f64> = (0..20).map(|k| k as f64 * 0.01).collect();
        assert!(ExperimentTrace::new(t.clone(), vec![1.0; 20], vec![0.0; 20]).is_ok());
        assert!(ExperimentTrace::new(t[..10].to_vec(), vec![1.0; 10], vec![0.0; 10]).is_err());
        assert!(ExperimentTrace::new(t.clone(), vec![1.0; 19], vec![0.0; 20]).is_err());
        let mut bent = t.clone();
        bent[7] += 0.003;
        assert!(matches!(
            ExperimentTrace::new(bent, vec![1.0; 20], vec![0.0; 20]),
            Err(Error::InvalidTrace(_))
        ));
        let mut back = t;
        back[5] = back[4];
        assert!(ExperimentTrace::new(back, vec![1.0; 20], vec![0.0; 20]).is_err());
    }
}
