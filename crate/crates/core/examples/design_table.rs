//! Natural frequencies of the four prototype designs, with the moment of
//! inertia recovered from each design's estimated frequency, and the
//! resulting open-loop models.
//!
//!     cargo run --example design_table

use spa_control::plant::{full_system_gain, full_system_tf, natural_frequency, spring_constant, PumpConfig, REFERENCE_DESIGNS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pump = PumpConfig::new(0.002, 4.9e-4, 1e-8, 100.0)?;
    println!("{:<9} {:>10} {:>7} {:>12} {:>10} {:>9} {:>9}", "design", "E (Pa)", "L (m)", "I (m^4)", "K (N/m)", "wn est", "wn meas");
    for rd in REFERENCE_DESIGNS {
        let d = rd.design();
        let wn = natural_frequency(&d);
        println!(
            "{:<9} {:>10.3e} {:>7.3} {:>12.4e} {:>10.4} {:>9.4} {:>9.3}  ({:+.1}% vs measured)",
            rd.name,
            rd.youngs_modulus,
            rd.length,
            d.moment_of_inertia(),
            spring_constant(&d),
            wn,
            rd.measured_omega_n,
            100.0 * (wn - rd.measured_omega_n) / rd.measured_omega_n
        );
    }
    println!();
    for rd in REFERENCE_DESIGNS {
        let d = rd.design();
        let g = full_system_tf(&d, &pump);
        let poles: Vec<String> = g.poles()?.iter().map(|p| format!("{:.4}{:+.4}j", p.re, p.im)).collect();
        println!("{}: gain {:.4e}, poles [{}]", rd.name, full_system_gain(&d, &pump), poles.join(", "));
    }
    Ok(())
}
