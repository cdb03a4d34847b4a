//! Same scenario, two estimators. The memory estimator keeps learning on
//! stored data while a subsystem is switched out; the baseline freezes.
//!
//! cargo run --release --example memory_vs_baseline

use smrac::analysis::compare_runs;
use smrac::estimator::EstimatorMode;
use smrac::{default_config, run_scenario};

fn main() -> smrac::Result<()> {
    let mut cfg = default_config();
    cfg.decimate = 100;
    let memory = run_scenario(cfg.clone())?;
    cfg.mode = EstimatorMode::Baseline;
    let baseline = run_scenario(cfg)?;
    let cmp = compare_runs(&memory, &baseline)?;

    println!("subsystem   memory |phi~|   baseline |phi~|");
    for i in 0..cmp.memory_final_phi_err.len() {
        println!("{:9}   {:13.3e}   {:15.3e}", i + 1, cmp.memory_final_phi_err[i], cmp.baseline_final_phi_err[i]);
    }
    println!("tracking error energy: memory {:.3}, baseline {:.3}", cmp.memory_error_energy, cmp.baseline_error_energy);

    println!("\nfirst inactive interval of each subsystem:");
    for (i, (m, b)) in cmp.memory_inactive.iter().zip(&cmp.baseline_inactive).enumerate() {
        if let (Some(m), Some(b)) = (m.first(), b.first()) {
            println!(
                "  {} [{:.0}, {:.0}] s: memory {:.4e} -> {:.4e} ({:.1}% down), baseline {:.4e} -> {:.4e}",
                i + 1,
                m.t_start,
                m.t_end,
                m.err_start,
                m.err_end,
                100.0 * m.relative_decrease(),
                b.err_start,
                b.err_end
            );
        }
    }
    Ok(())
}
