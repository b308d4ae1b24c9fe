//! Damping ratio and run-to-run spread from repeated step experiments.
//!
//!     cargo run --example fit_damping

use spa_control::plant::REFERENCE_DESIGNS;
use spa_control::sysid::fit_damping_ratio;
use spa_control::sysid::synthetic::{second_order_step_trace, with_output_noise};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let omega_n = REFERENCE_DESIGNS[0].estimated_omega_n;
    let traces = (0..7)
        .map(|k| {
            let zeta = 0.5 + 0.2 * k as f64 / 6.0;
            let clean = second_order_step_trace(zeta, omega_n, 5e-5, 20_000.0, 100.0, 10.0)?;
            with_output_noise(&clean, 0.04, 100 + k)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let est = fit_damping_ratio(&traces, omega_n, 20_000.0)?;
    for (k, (z, g)) in est.per_trace_zetas.iter().zip(&est.per_trace_gains).enumerate() {
        println!("run {}: zeta {z:.4}, gain {g:.4e} rad/Pa", k + 1);
    }
    println!("zeta = {:.4} +/- {:.4}, residual rms {:.3e} rad", est.zeta_nominal, est.zeta_delta, est.residual_rms);
    if est.has_boundary_warning() {
        println!("warning: a fit reached the search boundary");
    }
    Ok(())
}
