//! Two fingers whose damping ratios differ by the design's perturbation,
//! driven open loop by one shared motor profile versus one LQR loop each.
//!
//!     cargo run --example gripper_sync

use std::f64::consts::FRAC_PI_2;

use spa_control::lqr::LqrWeights;
use spa_control::plant::{PumpConfig, REFERENCE_DESIGNS};
use spa_control::sim::{gripper_sync_study, ReferenceSignal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pump = PumpConfig::new(0.002, 4.9e-4, 1e-8, 100.0)?;
    let design = REFERENCE_DESIGNS[0].design();
    let weights = LqrWeights::angle_and_rate(1000.0, 1.0, 3)?;
    let reference = ReferenceSignal::step(FRAC_PI_2, 10.0);
    println!("{:>4} {:>12} {:>14} {:>14}", "seed", "amplitude", "open loop", "closed loop");
    for seed in 0..5 {
        let r = gripper_sync_study(&design, &pump, 0.1, &reference, &weights, 1e-3, seed)?;
        println!(
            "{seed:>4} {:>10.2} deg {:>10.3} deg {:>10.3} deg",
            r.commanded_amplitude.to_degrees(),
            r.open_loop_mismatch.to_degrees(),
            r.closed_loop_mismatch.to_degrees()
        );
    }
    Ok(())
}
