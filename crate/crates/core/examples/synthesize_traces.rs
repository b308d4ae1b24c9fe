//! Writes seven synthetic step experiments for the Design 1 actuator into
//! `examples/bundle/design1/traces`, one per damping ratio in 0.5..=0.7,
//! with 4% output noise.
//!
//!     cargo run --example synthesize_traces

use std::fs::{self, File};
use std::path::Path;

use spa_control::cli::traces::write_trace;
use spa_control::plant::REFERENCE_DESIGNS;
use spa_control::sysid::synthetic::{second_order_step_trace, with_output_noise};

/// Step pressure, Pa.
const PRESSURE: f64 = 20_000.0;
/// Steady bending angle the synthetic actuator reaches at that pressure, rad.
const STEADY_ANGLE: f64 = 1.0;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let design = REFERENCE_DESIGNS[0];
    let omega_n = design.estimated_omega_n;
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/bundle/design1/traces");
    fs::create_dir_all(&dir)?;
    for k in 0..7 {
        let zeta = 0.5 + 0.2 * k as f64 / 6.0;
        let clean = second_order_step_trace(zeta, omega_n, STEADY_ANGLE / PRESSURE, PRESSURE, 100.0, 10.0)?;
        let noisy = with_output_noise(&clean, 0.04, 100 + k as u64)?;
        let path = dir.join(format!("run_{}.csv", k + 1));
        write_trace(&noisy, File::create(&path)?)?;
        println!("{} zeta = {zeta:.4}", path.display());
    }
    Ok(())
}
