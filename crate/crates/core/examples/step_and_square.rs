//! Closed-loop step and square-wave responses of Design 1 with motor-speed
//! saturation, and the penalty sweep that shows where settling time levels
//! off.
//!
//!     cargo run --example step_and_square

use std::f64::consts::FRAC_PI_2;

use spa_control::lqr::LqrWeights;
use spa_control::plant::{PumpConfig, REFERENCE_DESIGNS};
use spa_control::sim::{design_loop, simulate, square_wave_response, ReferenceSignal, SimOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pump = PumpConfig::new(0.002, 4.9e-4, 1e-8, 100.0)?;
    let design = REFERENCE_DESIGNS[0].design();
    let sol = design_loop(&design, &pump, &LqrWeights::angle_and_rate(1000.0, 1.0, 3)?)?;
    let opts = SimOptions {
        saturation: Some(pump.max_motor_speed()),
        ..SimOptions::default()
    };

    let step = simulate((&sol).into(), &ReferenceSignal::step(FRAC_PI_2, 10.0), &opts)?;
    let m = step.metrics;
    println!(
        "step to 90 deg: settling {:.3} s, overshoot {:.2}%, steady-state error {:.2e} deg",
        m.settling_time_s.unwrap_or(f64::NAN),
        m.overshoot_percent,
        m.steady_state_error_rad.to_degrees()
    );

    let sq = square_wave_response((&sol).into(), FRAC_PI_2, 5.0, 20.0, &opts)?;
    for e in &sq.edges {
        println!(
            "edge at {:>5.2} s to {:>5.1} deg: 50% delay {:.3} s, plateau error {:.2e} deg",
            e.edge_time_s,
            e.level_rad.to_degrees(),
            e.delay_s.unwrap_or(f64::NAN),
            e.plateau_error_rad.to_degrees()
        );
    }

    println!("\npenalty sweep (unsaturated):");
    for k in 0..=10 {
        let p = 10f64.powi(k - 2);
        let sol = design_loop(&design, &pump, &LqrWeights::angle_and_rate(p, 1.0, 3)?)?;
        let rho = spa_control::lti::linalg::spectral_radius(sol.closed_loop.a());
        let r = simulate((&sol).into(), &ReferenceSignal::step(FRAC_PI_2, 10.0), &SimOptions::with_dt(1e-3f64.min(0.4 / rho)))?;
        match r.metrics.settling_time_s {
            Some(ts) => println!("  p = 1e{:<3} settling {ts:.3} s", k - 2),
            None => println!("  p = 1e{:<3} not settled within 10 s", k - 2),
        }
    }
    Ok(())
}
