//! Trace CSV, JSON reports and a small SVG plot.
//!
//! CSV columns: `t, sigma, x_1..x_n, xm_1..xm_n, e_norm, u_1..u_m, V,
//! lmin_Q`, then for each subsystem `i`: `phihat_i_1..phihat_i_p, phierr_i,
//! s_i`. Floats are written with 17 significant digits so a trace reloads
//! bit for bit. Subsystem ids are one-based in the file.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::engine::TraceRecord;
use crate::error::{Error, Result};

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn trace_header(n: usize, m: usize, p: usize, nsub: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "sigma".to_string()];
    h.extend((1..=n).map(|k| format!("x_{k}")));
    h.extend((1..=n).map(|k| format!("xm_{k}")));
    h.push("e_norm".into());
    h.extend((1..=m).map(|k| format!("u_{k}")));
    h.push("V".into());
    h.push("lmin_Q".into());
    for i in 1..=nsub {
        h.extend((1..=p).map(|k| format!("phihat_{i}_{k}")));
        h.push(format!("phierr_{i}"));
        h.push(format!("s_{i}"));
    }
    h
}

fn record_fields(r: &TraceRecord) -> Vec<String> {
    let nsub = r.num_subsystems();
    let mut f = Vec::with_capacity(8 + r.x.len() * 2 + r.phi_hat.len() + 2 * nsub);
    f.push(float(r.t));
    f.push((r.sigma + 1).to_string());
    f.extend(r.x.iter().map(|&v| float(v)));
    f.extend(r.x_m.iter().map(|&v| float(v)));
    f.push(float(r.e_norm()));
    f.extend(r.u.iter().map(|&v| float(v)));
    f.push(float(r.v));
    f.push(float(r.lmin_q));
    for i in 0..nsub {
        f.extend(r.phi_hat_of(i).iter().map(|&v| float(v)));
        f.push(float(r.phi_err[i]));
        f.push(if r.s[i] { "1" } else { "0" }.to_string());
    }
    f
}

pub fn write_trace<W: Write>(out: W, trace: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if let Some(first) = trace.first() {
        let nsub = first.num_subsystems();
        let p = first.phi_hat.len() / nsub.max(1);
        w.write_record(trace_header(first.x.len(), first.u.len(), p, nsub))?;
    }
    for r in trace {
        w.write_record(record_fields(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    write_trace(BufWriter::new(File::create(path)?), trace)
}

struct Columns {
    n: usize,
    m: usize,
    p: usize,
    nsub: usize,
}

fn parse_header(h: &csv::StringRecord) -> Result<Columns> {
    let count = |prefix: &str| h.iter().filter(|c| c.starts_with(prefix)).count();
    let n = count("x_");
    let m = count("u_");
    let nsub = count("s_");
    let p = count("phihat_").checked_div(nsub).unwrap_or(0);
    let cols = Columns { n, m, p, nsub };
    let expected = trace_header(n, m, p, nsub);
    if h.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Serialize("trace header does not match the expected column layout".into()));
    }
    Ok(cols)
}

fn parse_row(row: &csv::StringRecord, c: &Columns, line: usize) -> Result<TraceRecord> {
    let bad = |what: &str| Error::Serialize(format!("trace line {line}: bad {what}"));
    let mut it = row.iter();
    let mut num = |what: &str| -> Result<f64> { it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(what)) };
    let t = num("t")?;
    let sigma = num("sigma")? as usize;
    if sigma == 0 {
        return Err(bad("sigma"));
    }
    let x = (0..c.n).map(|_| num("x")).collect::<Result<Vec<_>>>()?;
    let x_m = (0..c.n).map(|_| num("xm")).collect::<Result<Vec<_>>>()?;
    num("e_norm")?;
    let u = (0..c.m).map(|_| num("u")).collect::<Result<Vec<_>>>()?;
    let v = num("V")?;
    let lmin_q = num("lmin_Q")?;
    let mut phi_hat = Vec::with_capacity(c.p * c.nsub);
    let mut phi_err = Vec::with_capacity(c.nsub);
    let mut s = Vec::with_capacity(c.nsub);
    for _ in 0..c.nsub {
        for _ in 0..c.p {
            phi_hat.push(num("phihat")?);
        }
        phi_err.push(num("phierr")?);
        s.push(num("s")? != 0.0);
    }
    Ok(TraceRecord { t, sigma: sigma - 1, x, x_m, u, v, lmin_q, phi_hat, phi_err, s })
}

pub fn read_trace<R: std::io::Read>(input: R) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let cols = parse_header(r.headers()?)?;
    r.records().enumerate().map(|(k, row)| parse_row(&row?, &cols, k + 2)).collect()
}

/// Reads a trace written by [`write_trace_csv`].
pub fn load_trace_csv(path: &Path) -> Result<Vec<TraceRecord>> {
    read_trace(File::open(path)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Serialize(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// One plot panel: a label and series sampled at common times.
struct Panel {
    label: String,
    series: Vec<Vec<f64>>,
}

fn downsample(trace: &[TraceRecord]) -> Vec<&TraceRecord> {
    const MAX_POINTS: usize = 2000;
    let stride = trace.len().div_ceil(MAX_POINTS).max(1);
    let mut pts: Vec<&TraceRecord> = trace.iter().step_by(stride).collect();
    if let Some(last) = trace.last() {
        if pts.last().is_none_or(|p| p.t != last.t) {
            pts.push(last);
        }
    }
    pts
}

fn render_panels(times: &[f64], panels: &[Panel], switches: &[f64]) -> String {
    const W: f64 = 900.0;
    const PANEL: f64 = 220.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 30.0;
    const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

    let height = TOP + panels.len() as f64 * (PANEL + 40.0);
    let (t0, t1) = match (times.first(), times.last()) {
        (Some(&a), Some(&b)) if b > a => (a, b),
        (Some(&a), _) => (a, a + 1.0),
        _ => (0.0, 1.0),
    };
    let sx = |t: f64| LEFT + (t - t0) / (t1 - t0) * (W - LEFT - RIGHT);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, panel) in panels.iter().enumerate() {
        let y0 = TOP + k as f64 * (PANEL + 40.0);
        let logs: Vec<f64> =
            panel.series.iter().flatten().filter(|v| **v > 0.0 && v.is_finite()).map(|v| v.log10()).collect();
        let lo = logs.iter().cloned().fold(f64::INFINITY, f64::min).floor();
        let hi = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil();
        let (lo, hi) = if lo.is_finite() && hi > lo { (lo.max(hi - 16.0), hi) } else { (-1.0, 1.0) };
        let sy = |v: f64| {
            let l = if v > 0.0 { v.log10().clamp(lo, hi) } else { lo };
            y0 + PANEL - (l - lo) / (hi - lo) * PANEL
        };
        let _ = writeln!(
            svg,
            r#"<rect x="{LEFT}" y="{y0}" width="{}" height="{PANEL}" fill="none" stroke="black"/>"#,
            W - LEFT - RIGHT
        );
        let _ = writeln!(svg, r#"<text x="{LEFT}" y="{}">{} (log10)</text>"#, y0 - 6.0, panel.label);
        let _ = writeln!(svg, r#"<text x="4" y="{}">1e{hi}</text>"#, y0 + 12.0);
        let _ = writeln!(svg, r#"<text x="4" y="{}">1e{lo}</text>"#, y0 + PANEL);
        for &ts in switches.iter().filter(|&&ts| ts > t0 && ts < t1) {
            let x = sx(ts);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.1}" y1="{y0}" x2="{x:.1}" y2="{}" stroke="#999" stroke-dasharray="4 3"/>"##,
                y0 + PANEL
            );
        }
        for (j, values) in panel.series.iter().enumerate() {
            let path: Vec<String> =
                times.iter().zip(values).map(|(&t, &v)| format!("{:.1},{:.1}", sx(t), sy(v))).collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
                COLORS[j % COLORS.len()],
                path.join(" ")
            );
        }
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}">t [s]</text>"#, W / 2.0, height - 8.0);
    svg.push_str("</svg>\n");
    svg
}

/// Plot of `‖e‖`, `V` and each `‖φ̃_i‖` on log scales, one panel each,
/// with dashed lines at the switching instants.
pub fn render_svg(trace: &[TraceRecord], switches: &[f64]) -> String {
    let pts = downsample(trace);
    let nsub = trace.first().map_or(0, |r| r.num_subsystems());
    let times: Vec<f64> = pts.iter().map(|r| r.t).collect();
    let panels = [
        Panel { label: "‖e‖".into(), series: vec![pts.iter().map(|r| r.e_norm()).collect()] },
        Panel { label: "V".into(), series: vec![pts.iter().map(|r| r.v).collect()] },
        Panel {
            label: "‖φ̃_i‖".into(),
            series: (0..nsub).map(|i| pts.iter().map(|r| r.phi_err[i]).collect()).collect(),
        },
    ];
    render_panels(&times, &panels, switches)
}

/// Memory (first colour) against baseline (second colour): `‖e‖`, `V` and
/// `Σ‖φ̃_i‖`. Both traces must share their sample times.
pub fn render_overlay_svg(memory: &[TraceRecord], baseline: &[TraceRecord], switches: &[f64]) -> String {
    let (a, b) = (downsample(memory), downsample(baseline));
    let times: Vec<f64> = a.iter().map(|r| r.t).collect();
    let both = |f: &dyn Fn(&TraceRecord) -> f64| vec![a.iter().map(|r| f(r)).collect(), b.iter().map(|r| f(r)).collect()];
    let panels = [
        Panel { label: "‖e‖ memory / baseline".into(), series: both(&|r| r.e_norm()) },
        Panel { label: "V memory / baseline".into(), series: both(&|r| r.v) },
        Panel { label: "Σ‖φ̃_i‖ memory / baseline".into(), series: both(&|r| r.phi_err.iter().sum()) },
    ];
    render_panels(&times, &panels, switches)
}

pub fn write_svg(path: &Path, trace: &[TraceRecord], switches: &[f64]) -> Result<()> {
    std::fs::write(path, render_svg(trace, switches))?;
    Ok(())
}

pub fn write_overlay_svg(path: &Path, memory: &[TraceRecord], baseline: &[TraceRecord], switches: &[f64]) -> Result<()> {
    std::fs::write(path, render_overlay_svg(memory, baseline, switches))?;
    Ok(())
}
