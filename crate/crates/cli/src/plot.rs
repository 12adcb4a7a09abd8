//! Deterministic SVG line plots of a run's analysis CSVs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::CliError;
use crate::study::{CLUSTERS_CSV, ISO_MIRROR_CSV, POLARIZATION_CSV, TRAJECTORIES_CSV};

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 360.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 44.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

/// One polyline.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: Option<String>,
    pub color: String,
    pub width: f64,
    pub opacity: f64,
    pub points: Vec<(f64, f64)>,
}

/// A titled chart panel.
#[derive(Debug, Clone)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn render_panel(out: &mut String, panel: &Panel, top: f64) {
    let (x0, x1) = bounds(panel.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = bounds(panel.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let left = MARGIN_LEFT;
    let right = WIDTH - MARGIN_RIGHT;
    let plot_top = top + MARGIN_TOP;
    let bottom = top + PANEL_HEIGHT - MARGIN_BOTTOM;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
    let sy = |y: f64| bottom - (y - y0) / (y1 - y0) * (bottom - plot_top);

    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="15" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        top + 22.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{left:.2}" y="{plot_top:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#444444"/>"##,
        right - left,
        bottom - plot_top
    );
    for k in 0..=4 {
        let fx = x0 + (x1 - x0) * k as f64 / 4.0;
        let fy = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="middle">{}</text>"#,
            sx(fx),
            bottom + 16.0,
            tick(fx)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{}</text>"#,
            left - 6.0,
            sy(fy) + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        bottom + 34.0,
        escape(&panel.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (plot_top + bottom) / 2.0,
        (plot_top + bottom) / 2.0,
        escape(&panel.y_label)
    );
    let mut legend_y = plot_top + 10.0;
    for s in &panel.series {
        let mut points = String::new();
        for (i, &(x, y)) in s.points.iter().enumerate() {
            if i > 0 {
                points.push(' ');
            }
            let _ = write!(points, "{:.2},{:.2}", sx(x), sy(y));
        }
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{}" stroke-width="{}" stroke-opacity="{}" points="{}"/>"#,
            s.color, s.width, s.opacity, points
        );
        if let Some(label) = &s.label {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" font-size="11" fill="{}">{}</text>"#,
                right + 10.0,
                legend_y,
                s.color,
                escape(label)
            );
            legend_y += 16.0;
        }
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".to_owned()
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// SVG 1.1 document with the panels stacked vertically.
pub fn render(panels: &[Panel]) -> String {
    let height = PANEL_HEIGHT * panels.len() as f64;
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{height}" fill="white"/>"#);
    for (k, panel) in panels.iter().enumerate() {
        render_panel(&mut out, panel, k as f64 * PANEL_HEIGHT);
    }
    out.push_str("</svg>\n");
    out
}

/// Reads a CSV into (header, rows); a file without data rows is an error.
fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| CliError::bad_data(path, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect::<Vec<_>>();
    let rows = reader
        .records()
        .map(|r| {
            r.map(|rec| rec.iter().map(str::to_owned).collect::<Vec<_>>())
                .map_err(|e| CliError::bad_data(path, e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if rows.is_empty() {
        return Err(CliError::bad_data(path, "contains no data rows"));
    }
    Ok((header, rows))
}

fn column(path: &Path, header: &[String], name: &str) -> Result<usize, CliError> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::bad_data(path, format!("missing column {name:?}")))
}

fn number(path: &Path, field: &str) -> Result<f64, CliError> {
    field
        .parse()
        .map_err(|_| CliError::bad_data(path, format!("not a number: {field:?}")))
}

/// Per-agent lines colored by class, plus one bold mean line per class.
pub fn trajectories_panel(path: &Path) -> Result<Panel, CliError> {
    let (header, rows) = read_csv(path)?;
    let (agent_col, class_col, t_col, z_col) = (
        column(path, &header, "agent")?,
        column(path, &header, "class_tag")?,
        column(path, &header, "t")?,
        column(path, &header, "z1")?,
    );
    let mut classes: Vec<String> = Vec::new();
    let mut agents: BTreeMap<usize, (usize, Vec<(f64, f64)>)> = BTreeMap::new();
    for row in &rows {
        let agent = number(path, &row[agent_col])? as usize;
        let class = &row[class_col];
        let class_idx = match classes.iter().position(|c| c == class) {
            Some(k) => k,
            None => {
                classes.push(class.clone());
                classes.len() - 1
            }
        };
        let point = (number(path, &row[t_col])?, number(path, &row[z_col])?);
        agents.entry(agent).or_insert((class_idx, Vec::new())).1.push(point);
    }
    let mut series = Vec::new();
    for (class_idx, points) in agents.values() {
        series.push(Series {
            label: None,
            color: PALETTE[class_idx % PALETTE.len()].to_owned(),
            width: 1.0,
            opacity: 0.45,
            points: points.clone(),
        });
    }
    for (k, class) in classes.iter().enumerate() {
        let mut sums: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
        for (_, points) in agents.values().filter(|(c, _)| *c == k) {
            for &(t, z) in points {
                let e = sums.entry(t.to_bits()).or_insert((t, 0.0, 0));
                e.1 += z;
                e.2 += 1;
            }
        }
        let mut mean: Vec<(f64, f64)> = sums.values().map(|&(t, s, c)| (t, s / c as f64)).collect();
        mean.sort_by(|a, b| a.0.total_cmp(&b.0));
        series.push(Series {
            label: Some(format!("{class} mean")),
            color: PALETTE[k % PALETTE.len()].to_owned(),
            width: 3.0,
            opacity: 1.0,
            points: mean,
        });
    }
    Ok(Panel {
        title: "1-d perspectives".into(),
        x_label: "t".into(),
        y_label: "perspective".into(),
        series,
    })
}

fn single_series(path: &Path, x: &str, y: &str, skip_blank: bool) -> Result<Vec<(f64, f64)>, CliError> {
    let (header, rows) = read_csv(path)?;
    let (xc, yc) = (column(path, &header, x)?, column(path, &header, y)?);
    let mut out = Vec::with_capacity(rows.len());
    for row in &rows {
        if skip_blank && row[yc].is_empty() {
            continue;
        }
        out.push((number(path, &row[xc])?, number(path, &row[yc])?));
    }
    Ok(out)
}

fn line(label: &str, points: Vec<(f64, f64)>) -> Series {
    Series {
        label: Some(label.to_owned()),
        color: PALETTE[0].to_owned(),
        width: 2.0,
        opacity: 1.0,
        points,
    }
}

fn write_svg(path: PathBuf, panels: &[Panel]) -> Result<PathBuf, CliError> {
    fs::write(&path, render(panels)).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Renders every analysis CSV present in `run_dir`. The trajectories CSV is
/// required; the others are plotted when present.
pub fn emit_plots(run_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    let traj = run_dir.join(TRAJECTORIES_CSV);
    written.push(write_svg(run_dir.join("trajectories.svg"), &[trajectories_panel(&traj)?])?);

    let pol = run_dir.join(POLARIZATION_CSV);
    if pol.exists() {
        let panel = Panel {
            title: "polarization".into(),
            x_label: "t".into(),
            y_label: "gap / gap at t=0".into(),
            series: vec![line("polarization", single_series(&pol, "t", "value", false)?)],
        };
        written.push(write_svg(run_dir.join("polarization.svg"), &[panel])?);
    }

    let clusters = run_dir.join(CLUSTERS_CSV);
    if clusters.exists() {
        let k = Panel {
            title: "estimated clusters".into(),
            x_label: "t".into(),
            y_label: "k".into(),
            series: vec![line("k", single_series(&clusters, "t", "k_hat", false)?)],
        };
        let ari = Panel {
            title: "sequential ARI".into(),
            x_label: "t".into(),
            y_label: "ARI".into(),
            series: vec![line("ARI", single_series(&clusters, "t", "ari", true)?)],
        };
        written.push(write_svg(run_dir.join("clusters.svg"), &[k, ari])?);
    }

    let iso = run_dir.join(ISO_MIRROR_CSV);
    if iso.exists() {
        let panel = Panel {
            title: "iso-mirror".into(),
            x_label: "t".into(),
            y_label: "psi".into(),
            series: vec![line("psi", single_series(&iso, "t", "psi", false)?)],
        };
        written.push(write_svg(run_dir.join("iso_mirror.svg"), &[panel])?);
    }
    Ok(written)
}
