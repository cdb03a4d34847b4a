//! Common Lyapunov function diagnostics: monotonicity of V, the sandwich
//! bounds, and the exponential decay of the stacked error after T_f.
//!
//! cargo run --release --example lyapunov_diagnostics

use smrac::analysis::convergence_report;
use smrac::cli::lyapunov_context;
use smrac::{default_config, run_scenario};

fn main() -> smrac::Result<()> {
    let mut cfg = default_config();
    cfg.decimate = 10;
    let ctx = lyapunov_context(&cfg)?;
    println!("P = {:.6}", ctx.p);
    println!("lambda_m = {:.4}, lambda_M = {:.4}, gamma_1 = {:.4}", ctx.lambda_m, ctx.lambda_big_m, ctx.gamma1());

    let out = run_scenario(cfg)?;
    let rep = convergence_report(&ctx, &out);
    let mono = &rep.monotonicity;
    println!(
        "V monotone: {} (worst increment {:.2e}, budget {:.2e})",
        mono.passed,
        mono.worst_increment,
        1e-7 * mono.max_v
    );
    println!("sandwich bounds hold: {}", rep.sandwich_ok);
    if let (Some(t_f), Some(fit)) = (rep.t_f, &rep.decay) {
        println!("T_f = {t_f:.3} s, fitted decay rate {:.4} 1/s over {} samples", fit.rate, fit.samples);
        println!("|xi| went from {:.3e} to {:.3e}", fit.xi_start, fit.xi_end);
    }
    for (i, m) in rep.gain_margin.iter().enumerate() {
        println!("subsystem {} gain margin k_sw*lambda_min(S_Q_bar) - eta = {:?}", i + 1, m);
    }
    Ok(())
}
