//! Subspace identification of noisy step experiments, plain and with
//! output-error refinement, plus automatic order selection.
//!
//!     cargo run --example identify_family

use spa_control::plant::REFERENCE_DESIGNS;
use spa_control::sysid::synthetic::{second_order_step_trace, with_output_noise};
use spa_control::sysid::{identify_subspace_with, ModelOrder, SubspaceOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let omega_n = REFERENCE_DESIGNS[0].estimated_omega_n;
    let plain = SubspaceOptions {
        feedthrough: false,
        ..SubspaceOptions::new(20)
    };
    let refined = SubspaceOptions { refine: true, ..plain };

    println!("{:<6} {:>6} {:>10} {:>10}  identified poles (refined)", "run", "zeta", "plain %", "refined %");
    for k in 0..7u64 {
        let zeta = 0.5 + 0.2 * k as f64 / 6.0;
        let clean = second_order_step_trace(zeta, omega_n, 5e-5, 20_000.0, 100.0, 10.0)?;
        let trace = with_output_noise(&clean, 0.04, 100 + k)?;
        let a = identify_subspace_with(&trace, ModelOrder::Fixed(2), &plain)?;
        let b = identify_subspace_with(&trace, ModelOrder::Fixed(2), &refined)?;
        let poles: Vec<String> = b.model.poles().iter().map(|p| format!("{:.3}{:+.3}j", p.re, p.im)).collect();
        println!("run_{:<2} {zeta:>6.3} {:>10.2} {:>10.2}  {}", k + 1, a.fit_percent, b.fit_percent, poles.join(", "));
    }

    let clean = second_order_step_trace(0.6, omega_n, 5e-5, 20_000.0, 100.0, 10.0)?;
    let auto = identify_subspace_with(&clean, ModelOrder::Auto { max: 6 }, &plain)?;
    let sv: Vec<String> = auto.singular_values.iter().take(5).map(|s| format!("{s:.2e}")).collect();
    println!("noise-free trace: selected order {} from singular values [{} ...]", auto.order, sv.join(", "));
    Ok(())
}
