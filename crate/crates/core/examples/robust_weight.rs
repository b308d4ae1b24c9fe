//! Relative-error envelope of a damping-ratio family, overbounding weights
//! of order 0 to 2, and the small-gain check for an LQR loop.
//!
//!     cargo run --example robust_weight

use spa_control::lqr::LqrWeights;
use spa_control::lti::RationalTransferFunction;
use spa_control::plant::{full_system_tf, natural_frequency, PumpConfig, REFERENCE_DESIGNS};
use spa_control::sim::design_loop;
use spa_control::uncertainty::{default_grid, robust_stability_check_loop, sample_family_verify_loop, UncertainPlant};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pump = PumpConfig::new(0.002, 4.9e-4, 1e-8, 100.0)?;
    let design = REFERENCE_DESIGNS[0].design();
    let family = (0..9)
        .map(|k| Ok(full_system_tf(&design.with_damping_ratio(0.5 + 0.2 * k as f64 / 8.0)?, &pump)))
        .collect::<spa_control::Result<Vec<RationalTransferFunction>>>()?;
    let omegas = default_grid(natural_frequency(&design));
    let nominal = full_system_tf(&design, &pump);

    let loop_tf = design_loop(&design, &pump, &LqrWeights::angle_and_rate(1000.0, 1.0, 3)?)?.loop_transfer()?;
    for order in 0..=2 {
        let up = UncertainPlant::from_family(nominal.clone(), &family, omegas.clone(), order)?;
        let peak = up.envelope.iter().cloned().fold(0.0, f64::max);
        let report = robust_stability_check_loop(&up.weight, &loop_tf)?;
        println!("order {order}: W = {}", up.weight);
        println!("         envelope peak {peak:.4}, margin {:.4} ({})", report.margin, if report.pass { "robustly stable" } else { "not certified" });
        if report.pass {
            println!("         200 sampled perturbations stable: {}", sample_family_verify_loop(&up.weight, &loop_tf, 200, 0)?);
        }
    }
    Ok(())
}
