//! Fixed-step RK4 simulation of open and state-feedback loops, response
//! metrics, square-wave tracking and the two-finger synchronization study.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::lqr::{lqr_gain, LqrSolution, LqrWeights};
use crate::lti::{linalg, to_controllable_canonical, StateSpaceModel};
use crate::plant::{full_system_tf, ActuatorDesign, PumpConfig};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 10.0;
pub const DEFAULT_BAND: f64 = 0.02;

/// Largest accepted `dt * rho(A)`, well inside the RK4 stability region.
pub const MAX_STEP_SPECTRAL_PRODUCT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceKind {
    Step,
    /// Alternates between `amplitude` (first half period) and zero.
    Square { period: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSignal {
    pub kind: ReferenceKind,
    /// rad
    pub amplitude: f64,
    /// s
    pub horizon: f64,
}

impl ReferenceSignal {
    pub fn step(amplitude: f64, horizon: f64) -> Self {
        Self {
            kind: ReferenceKind::Step,
            amplitude,
            horizon,
        }
    }

    pub fn square(amplitude: f64, period: f64, horizon: f64) -> Self {
        Self {
            kind: ReferenceKind::Square { period },
            amplitude,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(invalid_arg("amplitude", "must be finite"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid_arg("horizon", "must be > 0"));
        }
        if let ReferenceKind::Square { period } = self.kind {
            if !(period > 0.0 && period.is_finite()) {
                return Err(invalid_arg("period", "must be > 0"));
            }
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        match self.kind {
            ReferenceKind::Step => {
                if t >= 0.0 {
                    self.amplitude
                } else {
                    0.0
                }
            }
            ReferenceKind::Square { period } => {
                let phase = (t / period).rem_euclid(1.0);
                // guard against 0.49999.. from accumulated grid rounding
                if !(0.5 - 1e-9..=1.0 - 1e-9).contains(&phase) {
                    self.amplitude
                } else {
                    0.0
                }
            }
        }
    }
}

/// What gets integrated.
#[derive(Debug, Clone, Copy)]
pub enum SimSystem<'a> {
    /// The reference drives the model input directly.
    Open(&'a StateSpaceModel),
    /// `u = sat(-K x + N r)` around a SISO plant.
    StateFeedback {
        plant: &'a StateSpaceModel,
        gain: &'a RowDVector<f64>,
        feedforward: f64,
    },
}

impl<'a> From<&'a LqrSolution> for SimSystem<'a> {
    fn from(sol: &'a LqrSolution) -> Self {
        SimSystem::StateFeedback {
            plant: &sol.plant,
            gain: &sol.gain,
            feedforward: sol.feedforward,
        }
    }
}

impl SimSystem<'_> {
    fn model(&self) -> &StateSpaceModel {
        match self {
            SimSystem::Open(m) => m,
            SimSystem::StateFeedback { plant, .. } => plant,
        }
    }

    fn effective_a(&self) -> DMatrix<f64> {
        match self {
            SimSystem::Open(m) => m.a().clone(),
            SimSystem::StateFeedback { plant, gain, .. } => {
                let k = DMatrix::from_row_slice(1, gain.len(), gain.as_slice());
                plant.a() - plant.b() * k
            }
        }
    }

    fn command(&self, x: &DVector<f64>, r: f64, sat: Option<f64>) -> f64 {
        let u = match self {
            SimSystem::Open(_) => r,
            SimSystem::StateFeedback { gain, feedforward, .. } => -gain.dot(&x.transpose()) + feedforward * r,
        };
        match sat {
            Some(limit) => u.clamp(-limit, limit),
            None => u,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    /// Symmetric bound on the plant input.
    pub saturation: Option<f64>,
    pub settling_band: f64,
    pub initial_state: Option<DVector<f64>>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            saturation: None,
            settling_band: DEFAULT_BAND,
            initial_state: None,
        }
    }
}

impl SimOptions {
    pub fn with_dt(dt: f64) -> Self {
        Self {
            dt,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    /// `None` when the response never stays inside the band.
    pub settling_time_s: Option<f64>,
    pub steady_state_error_rad: f64,
    pub overshoot_percent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub timestamps: Vec<f64>,
    pub reference: Vec<f64>,
    pub output: Vec<f64>,
    pub input_command: Vec<f64>,
    pub final_state: DVector<f64>,
    pub metrics: SimMetrics,
}

/// Integrates `sys` against `reference` with classic RK4 and a
/// zero-order-hold reference over each step.
pub fn simulate(sys: SimSystem<'_>, reference: &ReferenceSignal, opts: &SimOptions) -> Result<SimResult> {
    reference.validate()?;
    let model = sys.model();
    if !model.is_siso() {
        return Err(Error::UnsupportedModel("simulation is single-input single-output".into()));
    }
    let dt = opts.dt;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid_arg("dt", "must be > 0"));
    }
    if !(opts.settling_band > 0.0 && opts.settling_band <= 0.1) {
        return Err(invalid_arg("settling_band", "must lie in (0, 0.1]"));
    }
    let fastest = linalg::spectral_radius(&sys.effective_a());
    if dt * fastest > MAX_STEP_SPECTRAL_PRODUCT {
        return Err(Error::StepSize { dt, fastest });
    }

    let n = model.order();
    let steps = (reference.horizon / dt).round() as usize;
    let mut x = match &opts.initial_state {
        Some(x0) if x0.len() == n => x0.clone(),
        Some(x0) => return Err(invalid_arg("initial_state", format!("has {} entries, model has {n} states", x0.len()))),
        None => DVector::zeros(n),
    };
    let b = model.b().column(0).clone_owned();
    let c = model.c().row(0).clone_owned();
    let d = model.d()[(0, 0)];
    let a = model.a();
    let sat = opts.saturation;
    let f = |x: &DVector<f64>, r: f64| -> DVector<f64> { a * x + &b * sys.command(x, r, sat) };

    let mut timestamps = Vec::with_capacity(steps + 1);
    let mut refs = Vec::with_capacity(steps + 1);
    let mut output = Vec::with_capacity(steps + 1);
    let mut command = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let r = reference.value(t);
        let u = sys.command(&x, r, sat);
        timestamps.push(t);
        refs.push(r);
        command.push(u);
        output.push((&c * &x)[0] + d * u);
        if k == steps {
            break;
        }
        let k1 = f(&x, r);
        let k2 = f(&(&x + &k1 * (0.5 * dt)), r);
        let k3 = f(&(&x + &k2 * (0.5 * dt)), r);
        let k4 = f(&(&x + &k3 * dt), r);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("state diverged at t = {t}")));
        }
    }

    // the final sample drives no integration step; score against the
    // reference held over the last interval
    let target = refs[refs.len().saturating_sub(2)];
    let metrics = response_metrics(&timestamps, &output, target, opts.settling_band)?;
    Ok(SimResult {
        timestamps,
        reference: refs,
        output,
        input_command: command,
        final_state: x,
        metrics,
    })
}

/// Settling time, steady-state error over the last 10% of the record, and
/// percent overshoot relative to `target`.
pub fn response_metrics(times: &[f64], output: &[f64], target: f64, band: f64) -> Result<SimMetrics> {
    let settling_time_s = settling_time(times, output, target, band)?;
    let plateau = plateau_mean(output, 0.1);
    let peak = if target >= 0.0 {
        output.iter().copied().fold(f64::NEG_INFINITY, f64::max) - target
    } else {
        target - output.iter().copied().fold(f64::INFINITY, f64::min)
    };
    let overshoot_percent = if target != 0.0 {
        (100.0 * peak / target.abs()).max(0.0)
    } else {
        0.0
    };
    Ok(SimMetrics {
        settling_time_s,
        steady_state_error_rad: (plateau - target).abs(),
        overshoot_percent,
    })
}

fn plateau_mean(y: &[f64], fraction: f64) -> f64 {
    let count = ((y.len() as f64 * fraction).ceil() as usize).clamp(1, y.len());
    y[y.len() - count..].iter().sum::<f64>() / count as f64
}

/// Last time the response is outside `final_value +/- band*|final_value|`,
/// linearly interpolated between samples. `None` when the last sample is
/// still outside the tube.
pub fn settling_time(times: &[f64], output: &[f64], final_value: f64, band: f64) -> Result<Option<f64>> {
    if times.is_empty() || times.len() != output.len() {
        return Err(invalid_arg("series", "need equally many non-zero timestamps and samples"));
    }
    if !(band > 0.0 && band <= 0.1) {
        return Err(invalid_arg("band", format!("{band} is outside (0, 0.1]")));
    }
    let tol = band * final_value.abs();
    let err = |i: usize| (output[i] - final_value).abs();
    let Some(last_out) = (0..output.len()).rev().find(|&i| err(i) > tol) else {
        return Ok(Some(times[0]));
    };
    if last_out + 1 == output.len() {
        return Ok(None);
    }
    let (e0, e1) = (err(last_out), err(last_out + 1));
    let frac = if e0 > e1 { (e0 - tol) / (e0 - e1) } else { 0.0 };
    Ok(Some(times[last_out] + frac * (times[last_out + 1] - times[last_out])))
}

/// One reference transition of a square wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeMetrics {
    pub edge_time_s: f64,
    pub level_rad: f64,
    /// Time from the edge until the output crosses the midpoint between the
    /// previous and the new level.
    pub delay_s: Option<f64>,
    /// |mean over the last 10% of the plateau - level|
    pub plateau_error_rad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquareWaveResult {
    pub sim: SimResult,
    pub edges: Vec<EdgeMetrics>,
}

impl SquareWaveResult {
    pub fn mean_delay(&self) -> Option<f64> {
        let delays: Vec<f64> = self.edges.iter().filter_map(|e| e.delay_s).collect();
        (!delays.is_empty()).then(|| delays.iter().sum::<f64>() / delays.len() as f64)
    }
}

pub fn square_wave_response(
    sys: SimSystem<'_>,
    amplitude: f64,
    period: f64,
    horizon: f64,
    opts: &SimOptions,
) -> Result<SquareWaveResult> {
    let reference = ReferenceSignal::square(amplitude, period, horizon);
    let sim = simulate(sys, &reference, opts)?;
    let half = period / 2.0;
    let mut edges = Vec::new();
    let mut k = 0usize;
    while (k as f64) * half < horizon - 1e-12 {
        let start = k as f64 * half;
        let end = (start + half).min(horizon);
        let level = if k.is_multiple_of(2) { amplitude } else { 0.0 };
        let previous = if k.is_multiple_of(2) { 0.0 } else { amplitude };
        let idx: Vec<usize> = sim
            .timestamps
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= start - 1e-12 && t < end - 1e-12)
            .map(|(i, _)| i)
            .collect();
        if idx.is_empty() {
            break;
        }
        let mid = 0.5 * (level + previous);
        let rising = level > previous;
        let delay_s = idx
            .iter()
            .find(|&&i| if rising { sim.output[i] >= mid } else { sim.output[i] <= mid })
            .map(|&i| sim.timestamps[i] - start);
        let tail = ((idx.len() as f64 * 0.1).ceil() as usize).max(1);
        let plateau = idx[idx.len() - tail..].iter().map(|&i| sim.output[i]).sum::<f64>() / tail as f64;
        edges.push(EdgeMetrics {
            edge_time_s: start,
            level_rad: level,
            delay_s: if amplitude == 0.0 { Some(0.0) } else { delay_s },
            plateau_error_rad: (plateau - level).abs(),
        });
        k += 1;
    }
    Ok(SquareWaveResult { sim, edges })
}

/// Canonical-form plant and its LQR design for one actuator/pump pair.
pub fn design_loop(design: &ActuatorDesign, pump: &PumpConfig, weights: &LqrWeights) -> Result<LqrSolution> {
    let plant = to_controllable_canonical(&full_system_tf(design, pump))?;
    lqr_gain(&plant, weights)
}

/// Penalty `p` (with `Q = p diag(1, 0.1, 0)`) that brings the simulated
/// step response's settling time to `target_s`, found by bisection on
/// `log10 p` over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyTuning {
    pub penalty: f64,
    pub settling_time_s: f64,
}

pub fn tune_penalty(
    design: &ActuatorDesign,
    pump: &PumpConfig,
    target_s: f64,
    r: f64,
    (lo, hi): (f64, f64),
) -> Result<PenaltyTuning> {
    let settle = |p: f64| -> Result<f64> {
        let sol = design_loop(design, pump, &LqrWeights::angle_and_rate(p, r, 3)?)?;
        let res = simulate((&sol).into(), &ReferenceSignal::step(1.0, DEFAULT_HORIZON), &SimOptions::with_dt(DEFAULT_DT))?;
        Ok(res.metrics.settling_time_s.unwrap_or(f64::INFINITY))
    };
    let (mut a, mut b) = (lo.log10(), hi.log10());
    let (ta, tb) = (settle(lo)?, settle(hi)?);
    if !(ta >= target_s && tb <= target_s) {
        return Err(Error::Numerical(format!(
            "target settling time {target_s} s not bracketed: {ta} s at p={lo}, {tb} s at p={hi}"
        )));
    }
    for _ in 0..40 {
        let m = 0.5 * (a + b);
        if settle(10f64.powf(m))? > target_s {
            a = m;
        } else {
            b = m;
        }
    }
    let penalty = 10f64.powf(0.5 * (a + b));
    Ok(PenaltyTuning {
        penalty,
        settling_time_s: settle(penalty)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperSyncResult {
    /// max_t |theta_1 - theta_2| with the shared open-loop motor profile, rad
    pub open_loop_mismatch: f64,
    /// max_t |theta_1 - theta_2| with one LQR loop per finger, rad
    pub closed_loop_mismatch: f64,
    /// Reference amplitude actually commanded in this run, rad
    pub commanded_amplitude: f64,
}

/// Two fingers with damping ratios `zeta +/- zeta_spread`.
///
/// The open-loop case replays, on both fingers, the motor-speed profile that
/// the nominal closed loop produces on the nominal finger. The closed-loop
/// case runs a nominal-design LQR loop around each finger. `seed` draws the
/// commanded amplitude uniformly in `[0.5, 1] * reference.amplitude`.
pub fn gripper_sync_study(
    design: &ActuatorDesign,
    pump: &PumpConfig,
    zeta_spread: f64,
    reference: &ReferenceSignal,
    weights: &LqrWeights,
    dt: f64,
    seed: u64,
) -> Result<GripperSyncResult> {
    let spread = zeta_spread.abs();
    if spread > design.damping_perturbation() + 1e-12 {
        return Err(invalid_arg(
            "zeta_spread",
            format!("{spread} exceeds the design's damping perturbation {}", design.damping_perturbation()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale: f64 = rng.random_range(0.5..=1.0);
    let reference = ReferenceSignal {
        amplitude: reference.amplitude * scale,
        ..*reference
    };
    let opts = SimOptions::with_dt(dt);

    let nominal = design_loop(design, pump, weights)?;
    let drive = simulate((&nominal).into(), &reference, &opts)?;

    let zeta = design.damping_ratio();
    let fingers = [design.with_damping_ratio(zeta + spread)?, design.with_damping_ratio(zeta - spread)?];
    let plants: Vec<StateSpaceModel> = fingers
        .iter()
        .map(|d| to_controllable_canonical(&full_system_tf(d, pump)))
        .collect::<Result<_>>()?;

    let open: Vec<Vec<f64>> = plants.iter().map(|p| replay(p, &drive.input_command, dt)).collect();
    let closed: Vec<Vec<f64>> = plants
        .iter()
        .map(|p| {
            let sys = SimSystem::StateFeedback {
                plant: p,
                gain: &nominal.gain,
                feedforward: nominal.feedforward,
            };
            simulate(sys, &reference, &opts).map(|r| r.output)
        })
        .collect::<Result<_>>()?;

    let mismatch = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(GripperSyncResult {
        open_loop_mismatch: mismatch(&open[0], &open[1]),
        closed_loop_mismatch: mismatch(&closed[0], &closed[1]),
        commanded_amplitude: reference.amplitude,
    })
}

/// Open-loop response to a sampled input held constant over each step.
fn replay(plant: &StateSpaceModel, input: &[f64], dt: f64) -> Vec<f64> {
    let a = plant.a();
    let b = plant.b().column(0).clone_owned();
    let c = plant.c().row(0).clone_owned();
    let d = plant.d()[(0, 0)];
    let mut x = DVector::zeros(plant.order());
    let mut out = Vec::with_capacity(input.len());
    for (k, &u) in input.iter().enumerate() {
        out.push((&c * &x)[0] + d * u);
        if k + 1 == input.len() {
            break;
        }
        let f = |x: &DVector<f64>| a * x + &b * u;
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (0.5 * dt)));
        let k3 = f(&(&x + &k2 * (0.5 * dt)));
        let k4 = f(&(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    out
}
