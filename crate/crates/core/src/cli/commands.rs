use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, RowDVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{LoadedConfig, OrderSpec};
use super::traces::load_traces;
use super::{parse_angle, Cli, CliError, Command, RefKind};
use crate::lqr::{care_residual, lyapunov_certificate, LyapunovCertificate};
use crate::lti::{RationalTransferFunction, StateSpaceModel, C64};
use crate::plant::{
    actuator_tf, calibrate_force_gain, full_system_gain, full_system_tf, natural_frequency, pump_tf,
    spring_constant, ActuatorDesign, PumpConfig,
};
use crate::sim::{
    design_loop, gripper_sync_study, simulate, square_wave_response, EdgeMetrics, GripperSyncResult,
    ReferenceSignal, SimMetrics, SimOptions, SimResult, SimSystem,
};
use crate::sysid::{
    fit_damping_ratio, identify_subspace_with, DampingEstimate, ExperimentTrace, IdentifiedModel, ModelOrder, SubspaceOptions,
};
use crate::uncertainty::{
    default_grid, overbounds, robust_stability_check_loop, sample_family_verify_loop, UncertainPlant,
};

/// Runs one command and returns a one-line summary.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::validation("--config <path> is required"))?;
    let cfg = LoadedConfig::load(config_path)?;
    let out_dir = match &cli.out {
        Some(p) => p.clone(),
        None => cfg.resolve(&cfg.config.paths.out_dir),
    };
    fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::validation(format!("cannot create output directory {}: {e}", out_dir.display())))?;
    let mut ctx = Context {
        cli,
        cfg,
        out_dir,
        inputs: Vec::new(),
        outputs: Vec::new(),
    };
    ctx.record_input(file_name(config_path), ctx.cfg.raw.clone());

    let (name, result) = match &cli.command {
        Command::Model => ("model", cmd_model(&mut ctx)),
        Command::FitZeta => ("fit-zeta", cmd_fit_zeta(&mut ctx)),
        Command::Sysid => ("sysid", cmd_sysid(&mut ctx)),
        Command::Weight => ("weight", cmd_weight(&mut ctx)),
        Command::Lqr => ("lqr", cmd_lqr(&mut ctx)),
        Command::Simulate { reference, amplitude } => ("simulate", cmd_simulate(&mut ctx, *reference, amplitude)),
        Command::Robust => ("robust", cmd_robust(&mut ctx)),
        Command::Gripper => ("gripper", cmd_gripper(&mut ctx)),
    };
    if !ctx.outputs.is_empty() {
        ctx.write_manifest(name)?;
    }
    result
}

struct Context<'a> {
    cli: &'a Cli,
    cfg: LoadedConfig,
    out_dir: PathBuf,
    inputs: Vec<(String, Vec<u8>)>,
    outputs: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    strict: bool,
    inputs: Vec<&'a str>,
    inputs_sha256: String,
    outputs: &'a [String],
}

impl Context<'_> {
    fn record_input(&mut self, name: String, bytes: Vec<u8>) {
        self.inputs.push((name, bytes));
    }

    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.out_dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::numeric(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Reads an artifact produced by an earlier command.
    fn read_artifact<T: DeserializeOwned>(&mut self, name: &str, producer: &str) -> Result<T, CliError> {
        let path = self.out_dir.join(name);
        let bytes = fs::read(&path).map_err(|_| {
            CliError::dependency(format!("missing {}; run `spa-control {producer}` first", path.display()))
        })?;
        let value = serde_json::from_slice(&bytes).map_err(|e| {
            CliError::dependency(format!("{} is unreadable ({e}); rerun `spa-control {producer}`", path.display()))
        })?;
        self.record_input(name.to_string(), bytes);
        Ok(value)
    }

    fn traces(&mut self) -> Result<Vec<(String, ExperimentTrace)>, CliError> {
        let dir = self.cfg.resolve(&self.cfg.config.paths.traces_dir);
        let loaded = load_traces(&dir)?;
        Ok(loaded
            .into_iter()
            .map(|(path, bytes, trace)| {
                let name = file_name(&path);
                self.record_input(format!("traces/{name}"), bytes);
                (name, trace)
            })
            .collect())
    }

    fn write_manifest(&mut self, command: &str) -> Result<(), CliError> {
        let mut hasher = Sha256::new();
        for (name, bytes) in &self.inputs {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(bytes);
        }
        let outputs = self.outputs.clone();
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.cli.seed,
            strict: self.cli.strict,
            inputs: self.inputs.iter().map(|(n, _)| n.as_str()).collect(),
            inputs_sha256: hex::encode(hasher.finalize()),
            outputs: &outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let name = format!("{command}.manifest.json");
        let path = self.out_dir.join(&name);
        fs::write(&path, text).map_err(|e| CliError::validation(format!("cannot write {}: {e}", path.display())))
    }

    fn design(&self) -> ActuatorDesign {
        self.cfg.design
    }
    fn pump(&self) -> PumpConfig {
        self.cfg.pump
    }
}

fn file_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn complex_pairs(z: &[C64]) -> Vec<[f64; 2]> {
    z.iter().map(|c| [c.re, c.im]).collect()
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Pole at the origin counted as marginal when all others are stable.
fn stability_verdict(poles: &[C64]) -> &'static str {
    let at_origin = poles.iter().filter(|p| p.norm() < 1e-9).count();
    let rest_stable = poles.iter().filter(|p| p.norm() >= 1e-9).all(|p| p.re < 0.0);
    match (at_origin, rest_stable) {
        (0, true) => "asymptotically stable",
        (1, true) => "marginally stable",
        _ => "unstable",
    }
}

#[derive(Serialize)]
struct ModelReport {
    design: ActuatorDesign,
    pump: PumpConfig,
    spring_constant: f64,
    natural_frequency: f64,
    pump_gain: f64,
    full_system_gain: f64,
    actuator_tf: RationalTransferFunction,
    pump_tf: RationalTransferFunction,
    full_system_tf: RationalTransferFunction,
    open_loop_poles: Vec<[f64; 2]>,
    stability: &'static str,
}

fn cmd_model(ctx: &mut Context) -> Result<String, CliError> {
    let (d, p) = (ctx.design(), ctx.pump());
    let sys = full_system_tf(&d, &p);
    let poles = sys.poles()?;
    let report = ModelReport {
        design: d,
        pump: p,
        spring_constant: spring_constant(&d),
        natural_frequency: natural_frequency(&d),
        pump_gain: p.gain(),
        full_system_gain: full_system_gain(&d, &p),
        actuator_tf: actuator_tf(&d, 1.0),
        pump_tf: pump_tf(&p),
        full_system_tf: sys,
        open_loop_poles: complex_pairs(&poles),
        stability: stability_verdict(&poles),
    };
    ctx.write_json("model.json", &report)?;
    Ok(format!(
        "omega_n = {:.4} rad/s, full system {}",
        report.natural_frequency, report.stability
    ))
}

#[derive(Serialize)]
struct DampingReport {
    omega_n: f64,
    step_amplitude: f64,
    traces: Vec<String>,
    estimate: DampingEstimate,
    boundary_warning: bool,
}

fn step_amplitude(ctx: &Context, traces: &[(String, ExperimentTrace)]) -> Result<f64, CliError> {
    if let Some(a) = ctx.cfg.config.identification.step_amplitude {
        return Ok(a);
    }
    let (name, first) = &traces[0];
    first
        .timestamps()
        .iter()
        .zip(first.input())
        .find(|(t, _)| **t > 0.0)
        .map(|(_, u)| *u)
        .filter(|u| *u != 0.0)
        .ok_or_else(|| CliError::validation(format!("{name}: cannot infer a non-zero step amplitude")))
}

fn cmd_fit_zeta(ctx: &mut Context) -> Result<String, CliError> {
    let traces = ctx.traces()?;
    let amplitude = step_amplitude(ctx, &traces)?;
    let omega_n = natural_frequency(&ctx.design());
    let series: Vec<ExperimentTrace> = traces.iter().map(|(_, t)| t.clone()).collect();
    let estimate = fit_damping_ratio(&series, omega_n, amplitude)?;
    let warning = estimate.has_boundary_warning();
    let report = DampingReport {
        omega_n,
        step_amplitude: amplitude,
        traces: traces.iter().map(|(n, _)| n.clone()).collect(),
        boundary_warning: warning,
        estimate,
    };
    ctx.write_json("damping.json", &report)?;
    if warning && ctx.cli.strict {
        let names: Vec<&str> = report.estimate.boundary_hits.iter().map(|&k| report.traces[k].as_str()).collect();
        return Err(CliError::numeric(format!(
            "damping fit hit the search boundary for {}",
            names.join(", ")
        )));
    }
    Ok(format!(
        "zeta = {:.4} +/- {:.4} over {} traces{}",
        report.estimate.zeta_nominal,
        report.estimate.zeta_delta,
        report.traces.len(),
        if warning { " (boundary warning)" } else { "" }
    ))
}

#[derive(Serialize, Deserialize)]
struct SysidEntry {
    trace: String,
    identified: IdentifiedModel,
}

#[derive(Serialize, Deserialize)]
struct SysidReport {
    hankel_rows: usize,
    models: Vec<SysidEntry>,
}

fn cmd_sysid(ctx: &mut Context) -> Result<String, CliError> {
    let traces = ctx.traces()?;
    let id = ctx.cfg.config.identification.clone();
    let mut models = Vec::with_capacity(traces.len());
    for (name, trace) in traces {
        let order = match id.order {
            OrderSpec::Fixed(n) => ModelOrder::Fixed(n),
            OrderSpec::Auto(_) => ModelOrder::Auto { max: id.max_order },
        };
        let opts = SubspaceOptions {
            hankel_rows: id.hankel_rows,
            feedthrough: id.feedthrough,
            refine: id.refine,
        };
        let identified = identify_subspace_with(&trace, order, &opts).map_err(|e| {
            let base = CliError::from(e);
            CliError {
                message: format!("{name}: {}", base.message),
                ..base
            }
        })?;
        models.push(SysidEntry { trace: name, identified });
    }
    let fits: Vec<String> = models
        .iter()
        .map(|m| format!("{:.2}% (order {})", m.identified.fit_percent, m.identified.order))
        .collect();
    ctx.write_json(
        "sysid.json",
        &SysidReport {
            hankel_rows: id.hankel_rows,
            models,
        },
    )?;
    Ok(format!("identified {} models: {}", fits.len(), fits.join(", ")))
}

#[derive(Serialize, Deserialize)]
struct WeightReport {
    calibrated_pressure_to_force_gain: f64,
    nominal: RationalTransferFunction,
    weight: RationalTransferFunction,
    weight_order: usize,
    omega_min: f64,
    omega_max: f64,
    grid_points: usize,
    envelope_peak: f64,
    member_peaks: Vec<f64>,
    overbounds: bool,
}

/// Mean over the last 10% of a record.
fn plateau(v: &[f64]) -> f64 {
    let n = (v.len() / 10).max(1);
    v[v.len() - n..].iter().sum::<f64>() / n as f64
}

fn cmd_weight(ctx: &mut Context) -> Result<String, CliError> {
    let sysid: SysidReport = ctx.read_artifact("sysid.json", "sysid")?;
    let traces = ctx.traces()?;
    let design = ctx.design();
    let pressures: Vec<f64> = traces.iter().map(|(_, t)| plateau(t.input())).collect();
    let angles: Vec<f64> = traces.iter().map(|(_, t)| plateau(t.output())).collect();
    let c = calibrate_force_gain(&design, &pressures, &angles)?;
    let calibrated = design.with_pressure_to_force_gain(c)?;
    let nominal = actuator_tf(&calibrated, 1.0);
    let family: Vec<StateSpaceModel> = sysid.models.iter().map(|m| m.identified.model.clone()).collect();
    let grid = default_grid(natural_frequency(&design));
    let order = ctx.cfg.config.identification.weight_order;
    let plant = UncertainPlant::from_family(nominal, &family, grid, order)?;

    let mut csv_out = csv::Writer::from_writer(Vec::new());
    let table = plant.magnitude_table()?;
    csv_out
        .write_record(["omega", "envelope", "weight"])
        .and_then(|_| {
            table
                .iter()
                .try_for_each(|(w, e, m)| csv_out.write_record([w.to_string(), e.to_string(), m.to_string()]))
        })
        .map_err(|e| CliError::numeric(format!("writing weight.csv: {e}")))?;
    let csv_bytes = csv_out.into_inner().map_err(|e| CliError::numeric(format!("writing weight.csv: {e}")))?;

    let report = WeightReport {
        calibrated_pressure_to_force_gain: c,
        overbounds: overbounds(&plant.weight, &plant.envelope, &plant.sample_omegas)?,
        nominal: plant.nominal.clone(),
        weight: plant.weight.clone(),
        weight_order: order,
        omega_min: plant.sample_omegas[0],
        omega_max: *plant.sample_omegas.last().unwrap(),
        grid_points: plant.sample_omegas.len(),
        envelope_peak: plant.envelope.iter().cloned().fold(0.0, f64::max),
        member_peaks: plant.relative_errors.iter().map(|r| r.iter().cloned().fold(0.0, f64::max)).collect(),
    };
    ctx.write_json("weight.json", &report)?;
    ctx.write_bytes("weight.csv", &csv_bytes)?;
    Ok(format!(
        "W_T = {} (envelope peak {:.4}, c = {:.6})",
        report.weight, report.envelope_peak, c
    ))
}

#[derive(Serialize, Deserialize)]
struct LqrReport {
    p: f64,
    r: f64,
    q: Vec<Vec<f64>>,
    plant: StateSpaceModel,
    gain: Vec<f64>,
    feedforward: f64,
    riccati: Vec<Vec<f64>>,
    closed_loop_poles: Vec<[f64; 2]>,
    care_residual: f64,
    certificate: LyapunovCertificate,
}

fn cmd_lqr(ctx: &mut Context) -> Result<String, CliError> {
    let w = ctx.cfg.config.weights();
    let sol = design_loop(&ctx.design(), &ctx.pump(), &w)?;
    let cert = lyapunov_certificate(&sol);
    let r = DMatrix::from_element(1, 1, w.r());
    let report = LqrReport {
        p: w.penalty,
        r: w.r(),
        q: rows(w.q()),
        care_residual: care_residual(sol.plant.a(), sol.plant.b(), w.q(), &r, &sol.riccati),
        plant: sol.plant.clone(),
        gain: sol.gain.iter().copied().collect(),
        feedforward: sol.feedforward,
        riccati: rows(&sol.riccati),
        closed_loop_poles: complex_pairs(&sol.closed_loop_poles()),
        certificate: cert,
    };
    ctx.write_json("lqr.json", &report)?;
    Ok(format!(
        "K = {:?}, N = {:.6e}, certificate {}",
        report.gain,
        report.feedforward,
        if cert.is_valid() { "valid" } else { "INVALID" }
    ))
}

#[derive(Serialize)]
struct SimulationReport {
    reference: ReferenceSignal,
    dt: f64,
    settling_band: f64,
    saturation: Option<f64>,
    metrics: SimMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<EdgeMetrics>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_edge_delay_s: Option<f64>,
}

fn cmd_simulate(ctx: &mut Context, kind: RefKind, amplitude: &str) -> Result<String, CliError> {
    let amplitude = parse_angle(amplitude)?;
    let lqr: LqrReport = ctx.read_artifact("lqr.json", "lqr")?;
    let gain = RowDVector::from_vec(lqr.gain.clone());
    let sys = SimSystem::StateFeedback {
        plant: &lqr.plant,
        gain: &gain,
        feedforward: lqr.feedforward,
    };
    let sim_cfg = ctx.cfg.config.sim.clone();
    let max_speed = ctx.pump().max_motor_speed();
    let opts = SimOptions {
        dt: sim_cfg.dt,
        saturation: sim_cfg.saturate.then_some(max_speed),
        settling_band: ctx.cfg.config.lqr.settling_band,
        initial_state: None,
    };
    let (label, reference, result, edges, delay) = match kind {
        RefKind::Step => {
            let reference = ReferenceSignal::step(amplitude, sim_cfg.horizon);
            let res = simulate(sys, &reference, &opts)?;
            ("step", reference, res, None, None)
        }
        RefKind::Square => {
            let sq = square_wave_response(sys, amplitude, sim_cfg.square_period, sim_cfg.horizon, &opts)?;
            let reference = ReferenceSignal::square(amplitude, sim_cfg.square_period, sim_cfg.horizon);
            let delay = sq.mean_delay();
            ("square", reference, sq.sim, Some(sq.edges), delay)
        }
    };
    let csv_bytes = sim_csv(&result, max_speed)?;
    ctx.write_bytes(&format!("simulate_{label}.csv"), &csv_bytes)?;
    let report = SimulationReport {
        reference,
        dt: opts.dt,
        settling_band: opts.settling_band,
        saturation: opts.saturation,
        metrics: result.metrics,
        edges,
        mean_edge_delay_s: delay,
    };
    ctx.write_json(&format!("simulate_{label}_metrics.json"), &report)?;
    let settle = match result.metrics.settling_time_s {
        Some(t) => format!("{t:.3} s"),
        None => "not settled".to_string(),
    };
    Ok(format!(
        "{label} to {:.4} rad: settling {settle}, SSE {:.3e} rad, overshoot {:.2}%",
        amplitude, result.metrics.steady_state_error_rad, result.metrics.overshoot_percent
    ))
}

/// `t,reference,output,command` with the command normalized by the motor
/// speed limit.
fn sim_csv(res: &SimResult, max_speed: f64) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::numeric(format!("writing simulation CSV: {e}"));
    w.write_record(["t", "reference", "output", "command"]).map_err(err)?;
    for k in 0..res.timestamps.len() {
        w.write_record([
            res.timestamps[k].to_string(),
            res.reference[k].to_string(),
            res.output[k].to_string(),
            (res.input_command[k] / max_speed).to_string(),
        ])
        .map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::numeric(format!("writing simulation CSV: {e}")))
}

#[derive(Serialize)]
struct RobustReport {
    margin: f64,
    pass: bool,
    samples: usize,
    seed: u64,
    /// Present only when the small-gain check passes.
    sampled_all_stable: Option<bool>,
    weight: RationalTransferFunction,
    loop_transfer: RationalTransferFunction,
}

#[derive(Deserialize)]
struct WeightArtifact {
    weight: RationalTransferFunction,
}

fn cmd_robust(ctx: &mut Context) -> Result<String, CliError> {
    let weight: WeightArtifact = ctx.read_artifact("weight.json", "weight")?;
    let lqr: LqrReport = ctx.read_artifact("lqr.json", "lqr")?;
    let k = DMatrix::from_row_slice(1, lqr.gain.len(), &lqr.gain);
    let loop_tf = StateSpaceModel::new(lqr.plant.a().clone(), lqr.plant.b().clone(), k, DMatrix::zeros(1, 1))?
        .to_transfer_function()?;
    let check = robust_stability_check_loop(&weight.weight, &loop_tf)?;
    let samples = ctx.cfg.config.identification.robustness_samples;
    let sampled = if check.pass {
        Some(sample_family_verify_loop(&weight.weight, &loop_tf, samples, ctx.cli.seed)?)
    } else {
        None
    };
    let report = RobustReport {
        margin: check.margin,
        pass: check.pass,
        samples,
        seed: ctx.cli.seed,
        sampled_all_stable: sampled,
        weight: weight.weight,
        loop_transfer: loop_tf,
    };
    ctx.write_json("robust.json", &report)?;
    Ok(format!(
        "margin {:.4}: {}{}",
        report.margin,
        if report.pass { "PASS" } else { "FAIL" },
        match sampled {
            Some(true) => format!(", {samples} sampled perturbations stable"),
            Some(false) => ", a sampled perturbation destabilized the loop".to_string(),
            None => String::new(),
        }
    ))
}

#[derive(Serialize)]
struct GripperReport {
    zeta_spread: f64,
    seed: u64,
    reference_amplitude: f64,
    result: GripperSyncResult,
}

fn cmd_gripper(ctx: &mut Context) -> Result<String, CliError> {
    let design = ctx.design();
    let g = ctx.cfg.config.gripper.clone();
    let spread = g.zeta_spread.unwrap_or(design.damping_perturbation());
    let reference = ReferenceSignal::step(g.amplitude, ctx.cfg.config.sim.horizon);
    let result = gripper_sync_study(
        &design,
        &ctx.pump(),
        spread,
        &reference,
        &ctx.cfg.config.weights(),
        ctx.cfg.config.sim.dt,
        ctx.cli.seed,
    )?;
    let report = GripperReport {
        zeta_spread: spread,
        seed: ctx.cli.seed,
        reference_amplitude: g.amplitude,
        result,
    };
    ctx.write_json("gripper.json", &report)?;
    Ok(format!(
        "mismatch open loop {:.4} rad, closed loop {:.4} rad",
        result.open_loop_mismatch, result.closed_loop_mismatch
    ))
}
