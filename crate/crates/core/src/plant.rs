//! Analytical actuator, syringe-pump and full-system models derived from
//! physical parameters.
//!
//! The actuator is treated as a cantilever beam whose bending angle obeys a
//! second-order model: stiffness `K = 2EI/L^2`, natural frequency
//! `wn = sqrt(K/M)`, and an empirically fitted damping ratio. The syringe
//! pump integrates motor speed into chamber pressure, so the full plant from
//! motor speed to bending angle is third order with a pole at the origin.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::lti::RationalTransferFunction;

/// Standard gravity used to turn weights in newtons into masses.
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Physical parameters of one soft actuator, SI units throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorDesign {
    youngs_modulus: f64,
    moment_of_inertia: f64,
    mass: f64,
    length: f64,
    damping_ratio: f64,
    damping_perturbation: f64,
    pressure_to_force_gain: f64,
}

impl ActuatorDesign {
    /// Validates `E, I, M, L, c > 0`, `0 < zeta < 1`, `dzeta >= 0` and
    /// `zeta - dzeta > 0`.
    pub fn new(
        youngs_modulus: f64,
        moment_of_inertia: f64,
        mass: f64,
        length: f64,
        damping_ratio: f64,
        damping_perturbation: f64,
        pressure_to_force_gain: f64,
    ) -> Result<Self> {
        positive("youngs_modulus", youngs_modulus)?;
        positive("moment_of_inertia", moment_of_inertia)?;
        positive("mass", mass)?;
        positive("length", length)?;
        positive("pressure_to_force_gain", pressure_to_force_gain)?;
        if !(damping_ratio > 0.0 && damping_ratio < 1.0) {
            return Err(invalid_arg("damping_ratio", format!("{damping_ratio} is outside (0, 1)")));
        }
        if !(damping_perturbation >= 0.0 && damping_perturbation.is_finite()) {
            return Err(invalid_arg("damping_perturbation", format!("{damping_perturbation} must be >= 0")));
        }
        if damping_ratio - damping_perturbation <= 0.0 {
            return Err(invalid_arg(
                "damping_perturbation",
                format!("damping_ratio - damping_perturbation = {} must stay positive", damping_ratio - damping_perturbation),
            ));
        }
        Ok(Self {
            youngs_modulus,
            moment_of_inertia,
            mass,
            length,
            damping_ratio,
            damping_perturbation,
            pressure_to_force_gain,
        })
    }

    pub fn youngs_modulus(&self) -> f64 {
        self.youngs_modulus
    }
    pub fn moment_of_inertia(&self) -> f64 {
        self.moment_of_inertia
    }
    pub fn mass(&self) -> f64 {
        self.mass
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn damping_ratio(&self) -> f64 {
        self.damping_ratio
    }
    pub fn damping_perturbation(&self) -> f64 {
        self.damping_perturbation
    }
    pub fn pressure_to_force_gain(&self) -> f64 {
        self.pressure_to_force_gain
    }

    /// Same design with a different nominal damping ratio; the perturbation
    /// is clipped so the invariants still hold.
    pub fn with_damping_ratio(&self, zeta: f64) -> Result<Self> {
        let dz = self.damping_perturbation.min(zeta * 0.999_999);
        Self::new(
            self.youngs_modulus,
            self.moment_of_inertia,
            self.mass,
            self.length,
            zeta,
            dz,
            self.pressure_to_force_gain,
        )
    }

    pub fn with_pressure_to_force_gain(&self, c: f64) -> Result<Self> {
        Self::new(
            self.youngs_modulus,
            self.moment_of_inertia,
            self.mass,
            self.length,
            self.damping_ratio,
            self.damping_perturbation,
            c,
        )
    }
}

fn positive(arg: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid_arg(arg, format!("{v} must be finite and > 0")))
    }
}

/// Syringe-pump parameters.
///
/// `actuator_capacity` is volume per unit pressure; its units pass through
/// unchanged, so it must agree with whatever pressure unit the force gain
/// `c` expects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpConfig {
    screw_lead: f64,
    syringe_area: f64,
    actuator_capacity: f64,
    max_motor_speed: f64,
}

impl PumpConfig {
    pub fn new(screw_lead: f64, syringe_area: f64, actuator_capacity: f64, max_motor_speed: f64) -> Result<Self> {
        positive("screw_lead", screw_lead)?;
        positive("syringe_area", syringe_area)?;
        positive("actuator_capacity", actuator_capacity)?;
        positive("max_motor_speed", max_motor_speed)?;
        Ok(Self {
            screw_lead,
            syringe_area,
            actuator_capacity,
            max_motor_speed,
        })
    }

    pub fn screw_lead(&self) -> f64 {
        self.screw_lead
    }
    pub fn syringe_area(&self) -> f64 {
        self.syringe_area
    }
    pub fn actuator_capacity(&self) -> f64 {
        self.actuator_capacity
    }
    pub fn max_motor_speed(&self) -> f64 {
        self.max_motor_speed
    }

    /// Pressure rate per unit motor speed, `l A_s / (2 pi C_s)`.
    pub fn gain(&self) -> f64 {
        self.screw_lead * self.syringe_area / (2.0 * PI * self.actuator_capacity)
    }
}

/// Equivalent bending stiffness `2EI/L^2`.
pub fn spring_constant(d: &ActuatorDesign) -> f64 {
    2.0 * d.youngs_modulus * d.moment_of_inertia / (d.length * d.length)
}

/// `sqrt(2EI / (M L^2))` in rad/s.
pub fn natural_frequency(d: &ActuatorDesign) -> f64 {
    (spring_constant(d) / d.mass).sqrt()
}

/// Second moment of area that makes a design hit `omega_n`:
/// `I = wn^2 M L^2 / (2E)`.
pub fn moment_of_inertia_for(omega_n: f64, mass: f64, length: f64, youngs_modulus: f64) -> f64 {
    omega_n * omega_n * mass * length * length / (2.0 * youngs_modulus)
}

pub fn mass_from_weight(newtons: f64) -> f64 {
    newtons / STANDARD_GRAVITY
}

/// Pressure-to-angle model `(c g_p / M) / (s^2 + 2 zeta wn s + wn^2)`.
pub fn actuator_tf(d: &ActuatorDesign, pressure_gain: f64) -> RationalTransferFunction {
    let wn = natural_frequency(d);
    let k = d.pressure_to_force_gain * pressure_gain / d.mass;
    RationalTransferFunction::new(vec![k], vec![1.0, 2.0 * d.damping_ratio * wn, wn * wn])
        .expect("valid design yields finite coefficients")
}

/// Chamber pressure rate for a given motor speed.
pub fn pump_pressure_rate(p: &PumpConfig, motor_speed: f64) -> Result<f64> {
    if motor_speed.abs() > p.max_motor_speed {
        return Err(Error::ActuationLimit {
            speed: motor_speed,
            limit: p.max_motor_speed,
        });
    }
    Ok(p.gain() * motor_speed)
}

/// Motor speed to pressure: an integrator carrying the pump gain.
pub fn pump_tf(p: &PumpConfig) -> RationalTransferFunction {
    RationalTransferFunction::integrator(p.gain())
}

/// Motor speed to bending angle, `g / (s^3 + 2 zeta wn s^2 + wn^2 s)`.
pub fn full_system_tf(d: &ActuatorDesign, p: &PumpConfig) -> RationalTransferFunction {
    &pump_tf(p) * &actuator_tf(d, 1.0)
}

/// Numerator gain `l A_s c / (2 pi C_s M)` of [`full_system_tf`].
pub fn full_system_gain(d: &ActuatorDesign, p: &PumpConfig) -> f64 {
    p.gain() * d.pressure_to_force_gain / d.mass
}

/// Least-squares pressure-to-force gain from static `(pressure, angle)`
/// pairs, using the equilibrium `theta = c P / K`.
pub fn calibrate_force_gain(d: &ActuatorDesign, pressures: &[f64], angles: &[f64]) -> Result<f64> {
    if pressures.len() != angles.len() || pressures.is_empty() {
        return Err(invalid_arg("pressures", "need equally many pressure and angle samples"));
    }
    let spp: f64 = pressures.iter().map(|p| p * p).sum();
    if spp == 0.0 {
        return Err(invalid_arg("pressures", "all pressures are zero"));
    }
    let spt: f64 = pressures.iter().zip(angles).map(|(p, t)| p * t).sum();
    let c = spring_constant(d) * spt / spp;
    if c <= 0.0 {
        return Err(Error::Numerical(format!("calibrated force gain {c} is not positive")));
    }
    Ok(c)
}

/// One row of the published design comparison: material stiffness, weight in
/// newtons, length, and the analytically estimated natural frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceDesign {
    pub name: &'static str,
    pub youngs_modulus: f64,
    pub weight_newtons: f64,
    pub length: f64,
    pub estimated_omega_n: f64,
    pub measured_omega_n: f64,
}

/// The four prototype designs. `I` is not published and is recovered from
/// the estimated natural frequency.
pub const REFERENCE_DESIGNS: [ReferenceDesign; 4] = [
    ReferenceDesign {
        name: "Design 1",
        youngs_modulus: 0.34e6,
        weight_newtons: 0.17,
        length: 0.94,
        estimated_omega_n: 1.812,
        measured_omega_n: 1.900,
    },
    ReferenceDesign {
        name: "Design 2",
        youngs_modulus: 0.26e6,
        weight_newtons: 0.24,
        length: 0.94,
        estimated_omega_n: 1.372,
        measured_omega_n: 1.141,
    },
    ReferenceDesign {
        name: "Design 3",
        youngs_modulus: 0.34e6,
        weight_newtons: 0.20,
        length: 0.106,
        estimated_omega_n: 1.422,
        measured_omega_n: 1.523,
    },
    ReferenceDesign {
        name: "Design 4",
        youngs_modulus: 10e6,
        weight_newtons: 0.04,
        length: 0.060,
        estimated_omega_n: 8.709,
        measured_omega_n: 10.420,
    },
];

impl ReferenceDesign {
    pub fn mass(&self) -> f64 {
        mass_from_weight(self.weight_newtons)
    }

    pub fn back_derived_moment_of_inertia(&self) -> f64 {
        moment_of_inertia_for(self.estimated_omega_n, self.mass(), self.length, self.youngs_modulus)
    }

    /// Full design with `zeta = 0.6 +/- 0.1` and unit force gain.
    pub fn design(&self) -> ActuatorDesign {
        ActuatorDesign::new(
            self.youngs_modulus,
            self.back_derived_moment_of_inertia(),
            self.mass(),
            self.length,
            0.6,
            0.1,
            1.0,
        )
        .expect("reference designs are valid")
    }
}
