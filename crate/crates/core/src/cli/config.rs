//! Project configuration file.
//!
//! Units: `youngs_modulus` Pa, `moment_of_inertia` m^4, `mass` kg or N (per
//! `mass_unit`), `length` m, `pressure_to_force_gain` N/Pa, `screw_lead`
//! m/rev, `syringe_area` m^2, `actuator_capacity` volume per unit pressure,
//! `max_motor_speed` rad/s, `dt`/`horizon`/`square_period` s. Damping
//! values, `p`, `r` and `settling_band` are dimensionless.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::CliError;
use crate::error::Error;
use crate::lqr::LqrWeights;
use crate::plant::{mass_from_weight, moment_of_inertia_for, ActuatorDesign, PumpConfig};
use crate::sim::{DEFAULT_BAND, DEFAULT_DT, DEFAULT_HORIZON};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub actuator: ActuatorSection,
    pub pump: PumpSection,
    #[serde(default)]
    pub lqr: LqrSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub identification: IdentificationSection,
    #[serde(default)]
    pub gripper: GripperSection,
    #[serde(default)]
    pub paths: PathsSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub enum MassUnit {
    #[serde(rename = "kg")]
    Kilogram,
    /// Weight in newtons, converted with standard gravity.
    #[serde(rename = "N")]
    Newton,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum InertiaSpec {
    Value(f64),
    Derived(FromNaturalFrequency),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FromNaturalFrequency {
    /// rad/s
    pub from_natural_frequency: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorSection {
    pub youngs_modulus: f64,
    pub moment_of_inertia: InertiaSpec,
    pub mass: f64,
    pub mass_unit: MassUnit,
    pub length: f64,
    pub damping_ratio: f64,
    pub damping_perturbation: f64,
    #[serde(default = "one")]
    pub pressure_to_force_gain: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSection {
    pub screw_lead: f64,
    pub syringe_area: f64,
    pub actuator_capacity: f64,
    pub max_motor_speed: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LqrSection {
    pub p: f64,
    #[serde(default = "one")]
    pub r: f64,
    #[serde(default = "default_band")]
    pub settling_band: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_square_period")]
    pub square_period: f64,
    /// Clamp the motor command at +/- max_motor_speed.
    #[serde(default = "yes")]
    pub saturate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum OrderSpec {
    Fixed(usize),
    Auto(AutoOrder),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoOrder {
    Auto,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentificationSection {
    /// Input level of the step experiments; inferred from the first trace
    /// when absent.
    #[serde(default)]
    pub step_amplitude: Option<f64>,
    #[serde(default = "default_hankel_rows")]
    pub hankel_rows: usize,
    #[serde(default = "default_order")]
    pub order: OrderSpec,
    #[serde(default = "default_max_order")]
    pub max_order: usize,
    /// Estimate a direct feedthrough term in identified models.
    #[serde(default)]
    pub feedthrough: bool,
    /// Output-error polish after the subspace estimate.
    #[serde(default = "yes")]
    pub refine: bool,
    #[serde(default = "one_usize")]
    pub weight_order: usize,
    /// Number of random perturbations drawn by `robust`.
    #[serde(default = "default_samples")]
    pub robustness_samples: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GripperSection {
    /// Defaults to the actuator's damping perturbation.
    #[serde(default)]
    pub zeta_spread: Option<f64>,
    /// rad
    #[serde(default = "half_pi")]
    pub amplitude: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    #[serde(default = "default_traces_dir")]
    pub traces_dir: PathBuf,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn half_pi() -> f64 {
    std::f64::consts::FRAC_PI_2
}
fn default_band() -> f64 {
    DEFAULT_BAND
}
fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_horizon() -> f64 {
    DEFAULT_HORIZON
}
fn default_square_period() -> f64 {
    4.0
}
fn default_hankel_rows() -> usize {
    20
}
fn default_order() -> OrderSpec {
    OrderSpec::Auto(AutoOrder::Auto)
}
fn default_max_order() -> usize {
    6
}
fn default_samples() -> usize {
    200
}
fn default_traces_dir() -> PathBuf {
    PathBuf::from("traces")
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for LqrSection {
    fn default() -> Self {
        Self {
            p: 100.0,
            r: 1.0,
            settling_band: DEFAULT_BAND,
        }
    }
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            horizon: DEFAULT_HORIZON,
            square_period: default_square_period(),
            saturate: true,
        }
    }
}

impl Default for IdentificationSection {
    fn default() -> Self {
        Self {
            step_amplitude: None,
            hankel_rows: default_hankel_rows(),
            order: default_order(),
            max_order: default_max_order(),
            feedthrough: false,
            refine: true,
            weight_order: 1,
            robustness_samples: default_samples(),
        }
    }
}

impl Default for GripperSection {
    fn default() -> Self {
        Self {
            zeta_spread: None,
            amplitude: half_pi(),
        }
    }
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            traces_dir: default_traces_dir(),
            out_dir: default_out_dir(),
        }
    }
}

/// A parsed and validated configuration together with the raw bytes (for
/// manifest hashing) and the directory relative paths resolve against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ProjectConfig,
    pub raw: Vec<u8>,
    pub base_dir: PathBuf,
    pub design: ActuatorDesign,
    pub pump: PumpConfig,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read(path)
            .map_err(|e| CliError::validation(format!("cannot read config {}: {e}", path.display())))?;
        let config = parse(&raw)?;
        let (design, pump) = config.validate()?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self {
            config,
            raw,
            base_dir,
            design,
            pump,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

/// Deserializes with the failing field's dotted path in the message.
pub fn parse(raw: &[u8]) -> Result<ProjectConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_slice(raw);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = e.path().to_string();
        let inner = e.inner().to_string();
        if let Some(field) = inner.strip_prefix("missing field `").and_then(|s| s.split('`').next()) {
            path = if path == "." { field.to_string() } else { format!("{path}.{field}") };
        }
        CliError::validation(format!("config {path}: {inner}"))
    })
}

impl ProjectConfig {
    /// Semantic checks beyond the schema; returns the physical models.
    pub fn validate(&self) -> Result<(ActuatorDesign, PumpConfig), CliError> {
        let a = &self.actuator;
        let at = |section: &'static str| move |e: Error| match e {
            Error::InvalidArgument { arg, reason } => CliError::validation(format!("config {section}.{arg}: {reason}")),
            other => CliError::from(other),
        };
        let mass = match a.mass_unit {
            MassUnit::Kilogram => a.mass,
            MassUnit::Newton => mass_from_weight(a.mass),
        };
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(CliError::validation(format!("config actuator.mass: {} must be finite and > 0", a.mass)));
        }
        let inertia = match a.moment_of_inertia {
            InertiaSpec::Value(i) => i,
            InertiaSpec::Derived(FromNaturalFrequency { from_natural_frequency: wn }) => {
                if !(wn > 0.0 && wn.is_finite()) {
                    return Err(CliError::validation(format!(
                        "config actuator.moment_of_inertia.from_natural_frequency: {wn} must be finite and > 0"
                    )));
                }
                if !(a.youngs_modulus > 0.0 && a.length > 0.0) {
                    return Err(CliError::validation(
                        "config actuator.moment_of_inertia: derivation needs youngs_modulus > 0 and length > 0".to_string(),
                    ));
                }
                moment_of_inertia_for(wn, mass, a.length, a.youngs_modulus)
            }
        };
        let design = ActuatorDesign::new(
            a.youngs_modulus,
            inertia,
            mass,
            a.length,
            a.damping_ratio,
            a.damping_perturbation,
            a.pressure_to_force_gain,
        )
        .map_err(at("actuator"))?;
        let p = &self.pump;
        let pump = PumpConfig::new(p.screw_lead, p.syringe_area, p.actuator_capacity, p.max_motor_speed)
            .map_err(at("pump"))?;

        LqrWeights::angle_and_rate(self.lqr.p, self.lqr.r, 3).map_err(|e| match e {
            Error::InvalidArgument { arg, reason } => {
                CliError::validation(format!("config lqr.{}: {reason}", arg.to_lowercase()))
            }
            other => CliError::from(other),
        })?;
        if !(self.lqr.settling_band > 0.0 && self.lqr.settling_band <= 0.1) {
            return Err(CliError::validation(format!(
                "config lqr.settling_band: {} is outside (0, 0.1]",
                self.lqr.settling_band
            )));
        }
        let s = &self.sim;
        for (name, v) in [("dt", s.dt), ("horizon", s.horizon), ("square_period", s.square_period)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::validation(format!("config sim.{name}: {v} must be finite and > 0")));
            }
        }
        if s.dt >= s.horizon {
            return Err(CliError::validation(format!("config sim.dt: {} must be below the horizon {}", s.dt, s.horizon)));
        }
        let id = &self.identification;
        if let Some(amp) = id.step_amplitude {
            if amp == 0.0 || !amp.is_finite() {
                return Err(CliError::validation(format!("config identification.step_amplitude: {amp} must be finite and non-zero")));
            }
        }
        if id.hankel_rows < 2 {
            return Err(CliError::validation("config identification.hankel_rows: must be >= 2".to_string()));
        }
        if let OrderSpec::Fixed(n) = id.order {
            if n == 0 || n >= id.hankel_rows {
                return Err(CliError::validation(format!(
                    "config identification.order: {n} must lie in [1, hankel_rows - 1]"
                )));
            }
        }
        if id.max_order == 0 {
            return Err(CliError::validation("config identification.max_order: must be >= 1".to_string()));
        }
        if id.weight_order > 2 {
            return Err(CliError::validation(format!(
                "config identification.weight_order: {} must be 0, 1 or 2",
                id.weight_order
            )));
        }
        if let Some(spread) = self.gripper.zeta_spread {
            if !(spread >= 0.0 && spread <= design.damping_perturbation()) {
                return Err(CliError::validation(format!(
                    "config gripper.zeta_spread: {spread} must lie in [0, damping_perturbation = {}]",
                    design.damping_perturbation()
                )));
            }
        }
        if !self.gripper.amplitude.is_finite() {
            return Err(CliError::validation("config gripper.amplitude: must be finite".to_string()));
        }
        Ok((design, pump))
    }

    pub fn weights(&self) -> LqrWeights {
        LqrWeights::angle_and_rate(self.lqr.p, self.lqr.r, 3).expect("validated")
    }
}
