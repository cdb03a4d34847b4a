//! Writes a trace and plot to a directory and reads the CSV back.
//!
//! cargo run --release --example trace_roundtrip [out_dir]

use std::path::PathBuf;

use smrac::cli::write_run;
use smrac::output::load_trace_csv;
use smrac::{default_config, run_scenario};

fn main() -> smrac::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("smrac_trace"));
    let mut cfg = default_config();
    cfg.t_end = 60.0;
    cfg.schedule = smrac::system::SwitchSchedule::periodic(0.0, 30.0, &[0, 1, 2, 3], 60.0)?;
    cfg.decimate = 20;
    let out = run_scenario(cfg)?;
    write_run(&dir, &out)?;

    let back = load_trace_csv(&dir.join("trace.csv"))?;
    println!("{} rows written to {}", back.len(), dir.display());
    println!("bitwise identical after reload: {}", back == out.trace);
    Ok(())
}
