//! Markdown tables and static SVG plots for a [`Report`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ImportanceExample, Report, TrajectoryExample};
use crate::error::{Error, Result};

fn num(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

pub fn render_markdown(report: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Evaluation report\n");
    let _ = writeln!(s, "Distances in pixels at {}x{}.\n", report.image_width, report.image_height);
    if !report.fol.is_empty() {
        let _ = writeln!(s, "## Future object localization\n");
        let _ = writeln!(s, "| Method | N | ADE | FDE | FIOU | Missing |");
        let _ = writeln!(s, "|---|---:|---:|---:|---:|---:|");
        for r in &report.fol {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} | {} |",
                r.method,
                r.count,
                num(r.ade, 2),
                num(r.fde, 2),
                num(r.fiou, 3),
                r.missing.len()
            );
        }
        for r in &report.fol {
            if r.per_class.is_empty() {
                continue;
            }
            let _ = writeln!(s, "\n### Per class: {}\n", r.method);
            let _ = writeln!(s, "| Set | Label | N | ADE | FDE | FIOU |");
            let _ = writeln!(s, "|---|---|---:|---:|---:|---:|");
            for c in &r.per_class {
                let _ = writeln!(s, "| {} | {} | {} | {:.2} | {:.2} | {:.3} |", c.set, c.label, c.count, c.ade, c.fde, c.fiou);
            }
        }
        s.push('\n');
    }
    if !report.ego.is_empty() {
        let _ = writeln!(s, "## Ego motion\n");
        let _ = writeln!(s, "| Method | N | acc RMSE (m/s^2) | yaw RMSE (rad/s) | Missing |");
        let _ = writeln!(s, "|---|---:|---:|---:|---:|");
        for r in &report.ego {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {} | {} |",
                r.method,
                r.count,
                num(r.acc_rmse, 4),
                num(r.yaw_rmse, 4),
                r.missing.len()
            );
        }
        s.push('\n');
    }
    if let Some(a) = &report.action {
        let _ = writeln!(s, "## Action recognition\n");
        let _ = writeln!(s, "Overall per-frame mAP: {:.4}\n", a.overall);
        let _ = writeln!(s, "| Set | mAP |");
        let _ = writeln!(s, "|---|---:|");
        for h in &a.heads {
            let _ = writeln!(s, "| {} | {} |", h.set, num(h.map, 4));
        }
        s.push('\n');
    }
    let missing: Vec<String> = report
        .fol
        .iter()
        .flat_map(|r| r.missing.iter().map(move |k| format!("{} {k}", r.method)))
        .chain(report.ego.iter().flat_map(|r| r.missing.iter().map(move |k| format!("{} {k}", r.method))))
        .collect();
    if !missing.is_empty() {
        let _ = writeln!(s, "## Missing predictions\n");
        for m in missing {
            let _ = writeln!(s, "- {m}");
        }
    }
    s
}

const PALETTE: [&str; 8] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

fn polyline(points: &[(f64, f64)], color: &str, dashed: bool) -> String {
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
    let dash = if dashed { " stroke-dasharray=\"4 3\"" } else { "" };
    format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>\n",
        pts.join(" ")
    )
}

/// Observed, true and forecast center tracks, zoomed to their extent.
pub fn render_trajectory_svg(ex: &TrajectoryExample, image: (u32, u32)) -> String {
    let (w, h) = (640.0, 400.0);
    let px = |b: &[f64; 4]| (b[0] * image.0 as f64, b[1] * image.1 as f64);
    let all: Vec<(f64, f64)> = ex
        .observed
        .iter()
        .chain(&ex.truth)
        .chain(ex.predictions.iter().flat_map(|(_, p)| p))
        .map(px)
        .collect();
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for (x, y) in &all {
        x0 = x0.min(*x);
        y0 = y0.min(*y);
        x1 = x1.max(*x);
        y1 = y1.max(*y);
    }
    let span = (x1 - x0).max(y1 - y0).max(20.0) * 1.15;
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let scale = (h - 40.0) / span;
    let map = |p: (f64, f64)| (w / 2.0 + (p.0 - cx) * scale, h / 2.0 + (p.1 - cy) * scale);
    let track = |bs: &[[f64; 4]]| -> Vec<(f64, f64)> { bs.iter().map(|b| map(px(b))).collect() };
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n");
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    let _ = writeln!(
        s,
        "<text x=\"10\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">{} t={} track {} (span {:.0} px)</text>",
        ex.clip_id, ex.t_start, ex.track_id, span
    );
    let mut truth = track(&ex.observed[ex.observed.len() - 1..]);
    truth.extend(track(&ex.truth));
    s += &polyline(&track(&ex.observed), "#7f7f7f", false);
    s += &polyline(&truth, "#000000", false);
    let mut legend = vec![("observed", "#7f7f7f"), ("truth", "#000000")];
    for (i, (name, boxes)) in ex.predictions.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = track(&ex.observed[ex.observed.len() - 1..]);
        pts.extend(track(boxes));
        s += &polyline(&pts, color, true);
        legend.push((name.as_str(), color));
    }
    for (i, (name, color)) in legend.iter().enumerate() {
        let y = 36.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            "<line x1=\"10\" y1=\"{y}\" x2=\"30\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"2\"/><text x=\"36\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"12\">{name}</text>",
            y + 4.0
        );
    }
    s += "</svg>\n";
    s
}

/// Blue (0) to red (1).
fn heat(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let r = (255.0 * v).round() as u8;
    let b = (255.0 * (1.0 - v)).round() as u8;
    format!("#{r:02x}40{b:02x}")
}

/// One row per agent: per-step cells colored by `|w|` and a bar of its mean.
pub fn render_importance_svg(ex: &ImportanceExample) -> String {
    let cell = 16.0;
    let left = 210.0;
    let steps = ex.agents.iter().map(|a| a.weights.len()).max().unwrap_or(0) as f64;
    let w = left + steps * cell + 140.0;
    let h = 40.0 + ex.agents.len() as f64 * (cell + 6.0) + 10.0;
    let mut s = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n");
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    let _ = writeln!(
        s,
        "<text x=\"10\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">{} {} t={}: |w| per future step</text>",
        ex.method, ex.clip_id, ex.t_start
    );
    for (i, a) in ex.agents.iter().enumerate() {
        let y = 32.0 + i as f64 * (cell + 6.0);
        let _ = writeln!(
            s,
            "<text x=\"10\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\">#{} {}</text>",
            y + 12.0,
            a.track_id,
            a.label
        );
        for (k, wv) in a.weights.iter().enumerate() {
            let x = left + k as f64 * cell;
            let fill = wv.map_or_else(|| "#eeeeee".to_string(), heat);
            let _ = writeln!(s, "<rect x=\"{x}\" y=\"{y}\" width=\"{}\" height=\"{cell}\" fill=\"{fill}\"/>", cell - 1.0);
        }
        let present: Vec<f64> = a.weights.iter().flatten().copied().collect();
        let mean = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
        let x = left + steps * cell + 10.0;
        let _ = writeln!(
            s,
            "<rect x=\"{x}\" y=\"{y}\" width=\"{:.1}\" height=\"{cell}\" fill=\"{}\"/><text x=\"{:.1}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\">{mean:.2}</text>",
            100.0 * mean,
            heat(mean),
            x + 100.0 * mean + 4.0,
            y + 12.0
        );
    }
    s += "</svg>\n";
    s
}

/// Writes `report.md` and the SVG plots into `dir`; returns the files written.
pub fn write_report_dir(report: &Report, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = vec![(dir.join("report.md"), render_markdown(report))];
    for (i, ex) in report.trajectories.iter().enumerate() {
        files.push((
            dir.join(format!("trajectory_{i}.svg")),
            render_trajectory_svg(ex, (report.image_width, report.image_height)),
        ));
    }
    for (i, ex) in report.importance.iter().enumerate() {
        files.push((dir.join(format!("importance_{i}.svg")), render_importance_svg(ex)));
    }
    for (path, text) in &files {
        std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
