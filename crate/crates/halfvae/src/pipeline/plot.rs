//! Plot-data CSVs and minimal SVG renderings for every pipeline stage.
//!
//! Each figure is emitted twice: a `fig_*.csv` with one column per series
//! (the stable contract for external plotting) and a `fig_*.svg` line/band
//! rendering for a quick look.

use std::path::{Path, PathBuf};

use super::commands::{METRICS_FILE, OBSERVATIONS_FILE, REPORT_FILE, SOURCES_FILE};
use super::csvio::read_labeled_matrix;
use super::report::{load_json, MetricsDocument, RunReport};
use crate::diffengine::Matrix;
use crate::eval::zscore;
use crate::{Error, Result};

const PALETTE: [&str; 8] = [
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3", "#8c8c8c",
];

/// Renders everything the artifacts in `data_dir` support; errors when a
/// required upstream file is missing, naming the command that produces it.
pub fn plot_all(data_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();

    let sources_path = require(&data_dir.join(SOURCES_FILE), "generate")?;
    let (_, sources) = read_labeled_matrix(&sources_path)?;
    written.extend(matrix_figure(out_dir, "fig_sources", "component", &sources)?);

    let obs_path = require(&data_dir.join(OBSERVATIONS_FILE), "generate")?;
    let (_, observations) = read_labeled_matrix(&obs_path)?;
    written.extend(matrix_figure(
        out_dir,
        "fig_observations",
        "channel",
        &observations,
    )?);

    let report_path = require(&data_dir.join(REPORT_FILE), "train")?;
    let report: RunReport = load_json(&report_path)?;
    written.extend(loss_figure(out_dir, &report)?);
    for &epoch in &report.snapshot_epochs {
        let snap_path = require(&data_dir.join(format!("zmu_epoch_{epoch}.csv")), "train")?;
        let (_, means) = read_labeled_matrix(&snap_path)?;
        written.extend(matrix_figure(
            out_dir,
            &format!("fig_zmu_epoch_{epoch}"),
            "component",
            &means,
        )?);
    }

    let metrics_path = require(&data_dir.join(METRICS_FILE), "evaluate")?;
    let metrics: MetricsDocument = load_json(&metrics_path)?;
    written.extend(ci_figures(out_dir, &metrics)?);
    written.extend(overlay_figures(out_dir, &metrics, &sources)?);

    Ok(written)
}

fn require(path: &Path, producer: &str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(Error::io(
            path,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("missing; run `halfvae {producer}` first"),
            ),
        ))
    }
}

/// One figure with a line per matrix row.
fn matrix_figure(
    out_dir: &Path,
    name: &str,
    series_prefix: &str,
    m: &Matrix,
) -> Result<Vec<PathBuf>> {
    let labels: Vec<String> = (0..m.rows()).map(|i| format!("{series_prefix}_{i}")).collect();
    let series: Vec<(&str, &[f64])> = labels
        .iter()
        .map(|l| l.as_str())
        .zip((0..m.rows()).map(|i| m.row(i)))
        .collect();
    let csv = out_dir.join(format!("{name}.csv"));
    write_wide_csv(&csv, &series)?;
    let svg = out_dir.join(format!("{name}.svg"));
    svg_chart(&svg, name, None, &series)?;
    Ok(vec![csv, svg])
}

fn loss_figure(out_dir: &Path, report: &RunReport) -> Result<Vec<PathBuf>> {
    let total: Vec<f64> = report.epochs.iter().map(|r| r.total).collect();
    let recon: Vec<f64> = report.epochs.iter().map(|r| r.reconstruction).collect();
    let kl: Vec<f64> = report.epochs.iter().map(|r| r.kl).collect();
    let series: Vec<(&str, &[f64])> = vec![
        ("total", &total),
        ("reconstruction", &recon),
        ("kl", &kl),
    ];
    let csv = out_dir.join("fig_loss.csv");
    write_wide_csv(&csv, &series)?;
    let svg = out_dir.join("fig_loss.svg");
    svg_chart(&svg, "fig_loss", None, &series)?;
    Ok(vec![csv, svg])
}

/// Per component: posterior mean with its 95% band.
fn ci_figures(out_dir: &Path, metrics: &MetricsDocument) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let p = &metrics.posterior;
    for i in 0..p.means.rows() {
        let name = format!("fig_ci_component_{i}");
        let series: Vec<(&str, &[f64])> = vec![
            ("lower95", p.lower95.row(i)),
            ("mean", p.means.row(i)),
            ("upper95", p.upper95.row(i)),
        ];
        let csv = out_dir.join(format!("{name}.csv"));
        write_wide_csv(&csv, &series)?;
        let svg = out_dir.join(format!("{name}.svg"));
        svg_chart(
            &svg,
            &name,
            Some((p.lower95.row(i), p.upper95.row(i))),
            &[("mean", p.means.row(i))],
        )?;
        written.push(csv);
        written.push(svg);
    }
    Ok(written)
}

/// Per truth component: z-scored truth against the aligned, sign-corrected,
/// z-scored estimate.
fn overlay_figures(
    out_dir: &Path,
    metrics: &MetricsDocument,
    sources: &Matrix,
) -> Result<Vec<PathBuf>> {
    let n = sources.rows();
    if metrics.permutation.len() != n {
        return Err(Error::Config(format!(
            "metrics cover {} components but sources.csv has {n} rows",
            metrics.permutation.len()
        )));
    }
    let mut written = Vec::new();
    for t in 0..n {
        let e = metrics
            .permutation
            .iter()
            .position(|&tt| tt == t)
            .expect("permutation is a bijection");
        let truth_z = zscore(sources.row(t))?;
        let mut est_z = zscore(metrics.posterior.means.row(e))?;
        for v in &mut est_z {
            *v *= metrics.signs[e];
        }
        let name = format!("fig_overlay_component_{t}");
        let series: Vec<(&str, &[f64])> = vec![("truth", &truth_z), ("estimate", &est_z)];
        let csv = out_dir.join(format!("{name}.csv"));
        write_wide_csv(&csv, &series)?;
        let svg = out_dir.join(format!("{name}.svg"));
        svg_chart(&svg, &name, None, &series)?;
        written.push(csv);
        written.push(svg);
    }
    Ok(written)
}

/// `t,name1,name2,...` with one row per index.
fn write_wide_csv(path: &Path, series: &[(&str, &[f64])]) -> Result<()> {
    let len = series.first().map(|(_, v)| v.len()).unwrap_or(0);
    let mut out = String::from("t");
    for (name, _) in series {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for t in 0..len {
        out.push_str(&t.to_string());
        for (_, v) in series {
            out.push(',');
            out.push_str(&format!("{}", v[t]));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Minimal line chart: optional shaded band, one polyline per series, a
/// frame, and range labels. Lines and bands only.
fn svg_chart(
    path: &Path,
    title: &str,
    band: Option<(&[f64], &[f64])>,
    series: &[(&str, &[f64])],
) -> Result<()> {
    const W: f64 = 800.0;
    const H: f64 = 280.0;
    const X0: f64 = 52.0;
    const X1: f64 = 792.0;
    const Y0: f64 = 32.0;
    const Y1: f64 = 252.0;

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut len = 0usize;
    let mut scan = |v: &[f64]| {
        len = len.max(v.len());
        for &x in v {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    };
    if let Some((l, u)) = band {
        scan(l);
        scan(u);
    }
    for (_, v) in series {
        scan(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = -1.0;
        hi = 1.0;
    }
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    let steps = len.max(2) - 1;
    let sx = |i: usize| X0 + (X1 - X0) * i as f64 / steps as f64;
    let sy = |v: f64| Y1 - (Y1 - Y0) * (v - lo) / (hi - lo);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    svg.push_str(&format!("<text x=\"8\" y=\"18\">{title}</text>\n"));

    if let Some((lower, upper)) = band {
        let mut points = String::new();
        for (i, &v) in upper.iter().enumerate() {
            points.push_str(&format!("{:.2},{:.2} ", sx(i), sy(v)));
        }
        for (i, &v) in lower.iter().enumerate().rev() {
            points.push_str(&format!("{:.2},{:.2} ", sx(i), sy(v)));
        }
        svg.push_str(&format!(
            "<polygon points=\"{}\" fill=\"#bbbbbb\" opacity=\"0.5\"/>\n",
            points.trim_end()
        ));
    }

    for (s, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[s % PALETTE.len()];
        let mut points = String::new();
        for (i, &v) in values.iter().enumerate() {
            points.push_str(&format!("{:.2},{:.2} ", sx(i), sy(v)));
        }
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\"/>\n",
            points.trim_end()
        ));
        svg.push_str(&format!(
            "<text x=\"{:.0}\" y=\"18\" fill=\"{color}\">{name}</text>\n",
            X0 + 120.0 * s as f64 + 80.0
        ));
    }

    svg.push_str(&format!(
        "<rect x=\"{X0}\" y=\"{Y0}\" width=\"{:.0}\" height=\"{:.0}\" fill=\"none\" \
         stroke=\"#333333\" stroke-width=\"0.8\"/>\n",
        X1 - X0,
        Y1 - Y0
    ));
    svg.push_str(&format!(
        "<text x=\"4\" y=\"{:.0}\">{hi:.3}</text>\n<text x=\"4\" y=\"{Y1}\">{lo:.3}</text>\n",
        Y0 + 10.0
    ));
    svg.push_str(&format!(
        "<text x=\"{X0}\" y=\"{:.0}\">0</text>\n<text x=\"{:.0}\" y=\"{:.0}\">{steps}</text>\n",
        Y1 + 14.0,
        X1 - 30.0,
        Y1 + 14.0
    ));
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
