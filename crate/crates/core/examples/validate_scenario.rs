//! Checks scenario files against the structural assumptions: full-rank
//! input matrices, a Hurwitz reference model and exact matching.
//!
//! cargo run --example validate_scenario [path.toml]

use smrac::cli::{fmt_rows, matched_gains};
use smrac::scenario::{check_scenario, DEFAULT_SCENARIO};

fn report(name: &str, src: &str) {
    println!("== {name}");
    match check_scenario(src) {
        Ok(cfg) => {
            for g in matched_gains(&cfg).expect("validated") {
                println!("subsystem {}: K_x = {}, K_r = {}", g.subsystem, fmt_rows(&g.k_x), fmt_rows(&g.k_r));
            }
        }
        Err(errs) => errs.iter().for_each(|e| println!("{e}")),
    }
}

fn main() {
    if let Some(path) = std::env::args().nth(1) {
        let src = std::fs::read_to_string(&path).expect("readable scenario");
        report(&path, &src);
        return;
    }
    report("bundled", DEFAULT_SCENARIO);

    // Subsystem 3 loses its input; subsystem 4 gains a coupling the input cannot cancel.
    let broken = DEFAULT_SCENARIO
        .replacen("A = [[0.0, 1.0], [-6.0, -7.0]]\nB = [[0.0], [1.0]]", "A = [[0.0, 1.0], [-6.0, -7.0]]\nB = [[0.0], [0.0]]", 1)
        .replacen("A = [[0.0, 1.0], [-8.0, -9.0]]", "A = [[0.0, 2.0], [-8.0, -9.0]]", 1)
        .replace("h = 0.001", "h = 0.007");
    report("broken", &broken);
}
