//! Command-line workflow: one subcommand per pipeline stage, each reading a
//! JSON project config and writing deterministic artifacts plus a run
//! manifest into the output directory.

mod commands;
pub mod config;
pub mod traces;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::Error;

pub use commands::run;

#[derive(Debug, Parser)]
#[command(name = "spa-control", version, about = "Soft pneumatic actuator modeling, identification and LQR control")]
pub struct Cli {
    /// Project configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `paths.out_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Treat warnings (e.g. boundary damping fits) as failures.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Analytic actuator, pump and full-system models.
    Model,
    /// Damping ratio and perturbation from step-response traces.
    FitZeta,
    /// Subspace identification of every trace.
    Sysid,
    /// Relative-error envelope and multiplicative uncertainty weight.
    Weight,
    /// LQR design, Riccati solution and Lyapunov certificate.
    Lqr,
    /// Closed-loop response to a step or square reference.
    Simulate {
        #[arg(long = "ref", value_enum, default_value_t = RefKind::Step)]
        reference: RefKind,
        /// Reference amplitude; radians, or degrees with a `deg` suffix.
        #[arg(long, default_value = "90deg")]
        amplitude: String,
    },
    /// Small-gain robust stability check with sampled corroboration.
    Robust,
    /// Two-finger synchronization study, open loop vs closed loop.
    Gripper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RefKind {
    Step,
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numeric,
    Dependency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Validation,
            message: message.into(),
        }
    }
    pub fn numeric(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Numeric,
            message: message.into(),
        }
    }
    pub fn dependency(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Dependency,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Validation => 2,
            ErrorKind::Numeric => 3,
            ErrorKind::Dependency => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match e {
            Error::InvalidModel(_)
            | Error::UnsupportedModel(_)
            | Error::InvalidArgument { .. }
            | Error::ActuationLimit { .. }
            | Error::InvalidExperiment(_)
            | Error::InvalidTrace(_) => ErrorKind::Validation,
            _ => ErrorKind::Numeric,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

/// Parses `90deg`, `1.5rad` or a bare number of radians.
pub fn parse_angle(text: &str) -> Result<f64, CliError> {
    let t = text.trim();
    let (num, deg) = if let Some(v) = t.strip_suffix("deg") {
        (v, true)
    } else if let Some(v) = t.strip_suffix("rad") {
        (v, false)
    } else {
        (t, false)
    };
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| CliError::validation(format!("amplitude `{text}`: expected a number with optional `deg` or `rad` suffix")))?;
    if !v.is_finite() {
        return Err(CliError::validation(format!("amplitude `{text}` is not finite")));
    }
    Ok(if deg { v.to_radians() } else { v })
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles() {
        assert!((parse_angle("90deg").unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(parse_angle("0.5").unwrap(), 0.5);
        assert_eq!(parse_angle("0.5rad").unwrap(), 0.5);
        assert!(parse_angle("90 degrees").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(Error::UndefinedFit).exit_code(), 3);
        assert_eq!(CliError::from(Error::InvalidTrace("x".into())).exit_code(), 2);
        assert_eq!(CliError::dependency("x").exit_code(), 4);
    }
}
