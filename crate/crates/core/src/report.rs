//! CSV metric tables and a self-contained SVG accuracy-vs-ratio chart.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::Result;
use crate::train::{AccuracyRow, EpochLog, MseRow};

pub fn write_loss_csv(w: impl Write, logs: &[EpochLog]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["stage", "epoch", "step", "l_r", "l_vae", "l_l2", "total"])?;
    for l in logs {
        out.write_record([
            l.stage.name().to_string(),
            l.epoch.to_string(),
            l.step.to_string(),
            l.loss.l_r.to_string(),
            l.loss.l_vae.to_string(),
            l.loss.l_l2.to_string(),
            l.loss.total.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_accuracy_csv(w: impl Write, rows: &[AccuracyRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["variant", "ratio", "accuracy", "n"])?;
    for r in rows {
        out.write_record([r.variant.clone(), r.ratio.to_string(), r.accuracy.to_string(), r.n.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_mse_csv(w: impl Write, rows: &[MseRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["variant", "head", "ratio", "mse", "n"])?;
    for r in rows {
        out.write_record([r.variant.clone(), r.head.to_string(), r.ratio.to_string(), r.mse.to_string(), r.n.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Writes `contents` produced by `f` to `path`.
pub fn write_file(path: impl AsRef<Path>, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Accuracy against observation ratio, one polyline per variant, in the
/// order variants first appear in `rows`.
pub fn accuracy_svg(rows: &[AccuracyRow], title: &str) -> String {
    let (w, h) = (560.0, 380.0);
    let (left, right, top, bottom) = (60.0, 150.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let x = |r: f64| left + r * pw;
    let y = |a: f64| top + (1.0 - a) * ph;

    let mut variants: Vec<&str> = Vec::new();
    for r in rows {
        if !variants.contains(&r.variant.as_str()) {
            variants.push(&r.variant);
        }
    }

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, escape(title));
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(s, r##"<line x1="{l}" y1="{yy}" x2="{r}" y2="{yy}" stroke="#ddd"/>"##, l = left, r = left + pw, yy = y(v));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.1}</text>"#, left - 6.0, y(v) + 4.0, v);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{:.1}</text>"#, x(v), top + ph + 18.0, v);
    }
    let _ = writeln!(s, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">observation ratio</text>"#, left + pw / 2.0, h - 10.0);
    let _ = writeln!(s, r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">accuracy</text>"#, top + ph / 2.0);

    for (k, v) in variants.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.variant == *v).map(|r| (r.ratio, r.accuracy)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = pts.iter().map(|&(r, a)| format!("{:.2},{:.2}", x(r), y(a))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
        for &(r, a) in &pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, x(r), y(a));
        }
        let ly = top + 10.0 + 18.0 * k as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, left + pw + 12.0, left + pw + 32.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, left + pw + 38.0, ly + 4.0, escape(v));
    }
    s.push_str("</svg>\n");
    s
}
