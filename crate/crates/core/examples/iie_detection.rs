//! Steps the simulation by hand and watches the Gramian `Q` of the active
//! subsystem until each one passes the excitation threshold.
//!
//! cargo run --release --example iie_detection

use smrac::{default_config, Simulation};

fn main() -> smrac::Result<()> {
    let mut cfg = default_config();
    cfg.t_end = 120.0;
    cfg.schedule = smrac::system::SwitchSchedule::periodic(0.0, 30.0, &[0, 1, 2, 3], 120.0)?;
    let mut sim = Simulation::new(cfg)?;
    let eps = sim.iie().epsilon_iie;
    let mut seen = vec![false; sim.config().num_subsystems()];

    while !sim.is_finished() {
        let before = sim.sigma();
        sim.advance()?;
        let i = before;
        if !seen[i] && sim.iie().s(i) {
            seen[i] = true;
            let slot = &sim.iie().slots[i];
            println!(
                "subsystem {} excited at t = {:.3} s: lambda_min(Q_bar) = {:.4e} > {eps:e}",
                i + 1,
                slot.detected_after.unwrap(),
                slot.degree().unwrap()
            );
        }
        if sim.step_index() % 5000 == 0 {
            println!("t = {:5.1}  sigma = {}  lambda_min(Q) = {:.3e}", sim.time(), sim.sigma() + 1, sim.gramian().lambda_min());
        }
    }
    println!("T_f = {:?}", sim.iie().t_f());
    Ok(())
}
