//! Builds a two-input, three-state scenario in code, saves it as TOML,
//! reloads it and runs it.
//!
//! cargo run --release --example custom_scenario

use smrac::estimator::EstimatorGains;
use smrac::numerics::{Matrix, Vector};
use smrac::scenario::{parse_scenario, scenario_to_toml};
use smrac::system::{ReferenceModel, SubsystemParams, SwitchSchedule};
use smrac::{default_config, run_scenario};

fn main() -> smrac::Result<()> {
    let a_m = Matrix::from_row_slice(3, 3, &[-2.0, 1.0, 0.0, 0.0, -3.0, 1.0, 0.5, 0.0, -4.0]);
    let b_m = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);

    // A_i = A_m − B_i K_iᵀ guarantees matching.
    let k1 = Matrix::from_row_slice(3, 2, &[0.5, -0.2, 1.0, 0.3, -0.4, 0.8]);
    let k2 = Matrix::from_row_slice(3, 2, &[-0.3, 0.6, 0.2, -0.5, 0.9, 0.1]);
    let b2 = &b_m * Matrix::from_row_slice(2, 2, &[1.2, 0.1, -0.2, 0.9]);
    let subsystems = vec![
        SubsystemParams::new(&a_m - &b_m * k1.transpose(), b_m.clone())?,
        SubsystemParams::new(&a_m - &b2 * k2.transpose(), b2)?,
    ];

    let mut cfg = default_config();
    cfg.reference = ReferenceModel::new(a_m, b_m)?;
    cfg.subsystems = subsystems;
    cfg.q_m = Matrix::identity(3, 3);
    cfg.gains = vec![EstimatorGains::uniform(6); 2];
    cfg.phi_hat0 = vec![Vector::zeros(6); 2];
    cfg.x0 = Vector::from_vec(vec![1.0, -1.0, 0.5]);
    cfg.xm0 = Vector::zeros(3);
    cfg.signal.rbar = Vector::zeros(2);
    cfg.t_end = 40.0;
    cfg.schedule = SwitchSchedule::periodic(0.0, 5.0, &[0, 1], cfg.t_end)?;
    cfg.decimate = 100;

    let text = scenario_to_toml(&cfg);
    let path = std::env::temp_dir().join("smrac_custom.toml");
    std::fs::write(&path, &text)?;
    println!("wrote {}", path.display());
    let reloaded = parse_scenario(&text)?;
    assert_eq!(reloaded, cfg);

    let out = run_scenario(reloaded)?;
    println!("final |e| = {:.3e}", out.summary.final_e_norm);
    for (i, e) in out.summary.final_phi_err.iter().enumerate() {
        println!("subsystem {}: |phi_tilde| = {e:.3e}, excited: {}", i + 1, out.summary.detection_times[i].is_some());
    }
    Ok(())
}
