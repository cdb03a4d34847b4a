//! Runs the bundled four-subsystem scenario and prints how each estimate
//! ended up.
//!
//! cargo run --release --example run_default

use smrac::{default_config, run_scenario};

fn main() -> smrac::Result<()> {
    let mut cfg = default_config();
    cfg.decimate = 1000;
    let out = run_scenario(cfg)?;
    let s = &out.summary;

    println!("{} steps, final |e| = {:.3e}", s.steps, s.final_e_norm);
    for (i, err) in s.final_phi_err.iter().enumerate() {
        let detected = s.detection_times[i].map_or("never".to_string(), |t| format!("t = {t:.3}"));
        println!("subsystem {}: |phi_tilde| = {err:.3e}, excited at {detected}", i + 1);
    }
    println!("\n     t  sigma       |e|          V");
    for r in out.trace.iter().step_by(10) {
        println!("{:6.1}  {:5}  {:.3e}  {:.3e}", r.t, r.sigma + 1, r.e_norm(), r.v);
    }
    Ok(())
}
