//! LQR designs on the canonical-form plant of each prototype: gain,
//! reference scaling, closed-loop poles and the Lyapunov certificate.
//!
//!     cargo run --example lqr_design [p]

use spa_control::lqr::{lyapunov_certificate, LqrWeights};
use spa_control::plant::{PumpConfig, REFERENCE_DESIGNS};
use spa_control::sim::design_loop;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p: f64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(1000.0);
    let pump = PumpConfig::new(0.002, 4.9e-4, 1e-8, 100.0)?;
    let weights = LqrWeights::angle_and_rate(p, 1.0, 3)?;
    println!("Q = {p} * diag(1, 0.1, 0), R = 1");
    for rd in REFERENCE_DESIGNS {
        let sol = design_loop(&rd.design(), &pump, &weights)?;
        let cert = lyapunov_certificate(&sol);
        let poles: Vec<String> = sol.closed_loop_poles().iter().map(|z| format!("{:.3}{:+.3}j", z.re, z.im)).collect();
        println!("{}:", rd.name);
        println!("  K = [{:.4e}, {:.4e}, {:.4e}], N = {:.4e}", sol.gain[0], sol.gain[1], sol.gain[2], sol.feedforward);
        println!("  closed-loop poles [{}]", poles.join(", "));
        println!("  Y > 0: {}, max eig(A'Y + YA) = {:.3e}", cert.v_posdef, cert.max_eig_vdot);
    }
    Ok(())
}
