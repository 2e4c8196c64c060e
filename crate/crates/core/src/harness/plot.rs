//! Static SVG line charts of a metrics file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::metrics::{read_table, MetricsTable};
use crate::error::Result;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: (f64, f64, f64, f64) = (70.0, 160.0, 40.0, 50.0); // left, right, top, bottom
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub type Series = (String, Vec<(f64, f64)>);

/// The four chart groups: evaluation return, value distance, NSRR, estimator slopes.
const CHARTS: [(&str, &str, &str); 4] = [
    ("eval_return", "Evaluation return", "eval_return"),
    ("value_distance", "Value distance", "value_dist_"),
    ("nsrr", "Neutral state rejection ratio", "nsrr_"),
    ("targets", "Transformation targets (slopes)", "m_"),
];

fn keep_column(name: &str, prefix: &str) -> Option<String> {
    if !name.starts_with(prefix) || name.starts_with("m_err") {
        return None;
    }
    // aggregated files: plot the mean, skip spread and counts
    if name.ends_with("_std") || name.ends_with("_n") {
        return None;
    }
    Some(name.trim_end_matches("_mean").to_string())
}

/// Series of `table` whose column names start with `prefix`.
pub fn select_series(table: &MetricsTable, prefix: &str) -> Vec<Series> {
    table
        .header
        .iter()
        .filter_map(|h| keep_column(h, prefix).map(|label| (label, table.series(h))))
        .filter(|(_, pts)| !pts.is_empty())
        .collect()
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if !(hi > lo) {
        let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// One chart with a line and legend entry per series.
pub fn line_chart_svg(title: &str, x_label: &str, series: &[Series]) -> String {
    let pts = series.iter().flat_map(|s| s.1.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let (x0, x1) = nice_range(x0, x1);
    let (y0, y1) = nice_range(y0, y1);
    let (ml, mr, mt, mb) = MARGIN;
    let pw = WIDTH - ml - mr;
    let ph = HEIGHT - mt - mb;
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" font-size="14" text-anchor="middle">{}</text>"#, ml + pw / 2.0, escape(title));
    let _ = writeln!(s, r##"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(s, r##"<line x1="{px:.1}" y1="{mt}" x2="{px:.1}" y2="{}" stroke="#ddd"/>"##, mt + ph);
        let _ = writeln!(s, r##"<line x1="{ml}" y1="{py:.1}" x2="{}" y2="{py:.1}" stroke="#ddd"/>"##, ml + pw);
        let _ = writeln!(s, r#"<text x="{px:.1}" y="{}" text-anchor="middle">{}</text>"#, mt + ph + 16.0, tick_label(xv));
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, ml - 6.0, py + 4.0, tick_label(yv));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, ml + pw / 2.0, HEIGHT - 10.0, escape(x_label));
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        let ly = mt + 12.0 + i as f64 * 16.0;
        let lx = ml + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 24.0, ly + 4.0, escape(label));
    }
    s.push_str("</svg>\n");
    s
}

/// Writes one SVG per chart group present in `csv`; returns the written files.
pub fn plot_metrics(csv: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let table = read_table(csv)?;
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (file, title, prefix) in CHARTS {
        let series = select_series(&table, prefix);
        if series.is_empty() {
            continue;
        }
        let path = out_dir.join(format!("{file}.svg"));
        std::fs::write(&path, line_chart_svg(title, "time step", &series))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_has_a_line_per_series() {
        let series = vec![
            ("a".to_string(), vec![(0.0, 1.0), (10.0, 2.0)]),
            ("b<c".to_string(), vec![(0.0, -1.0), (10.0, 3.0)]),
        ];
        let svg = line_chart_svg("t", "x", &series);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b&lt;c"));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn flat_and_empty_series_do_not_divide_by_zero() {
        let svg = line_chart_svg("t", "x", &[("a".into(), vec![(5.0, 2.0)])]);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
        let svg = line_chart_svg("t", "x", &[]);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn groups_follow_the_columns() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("m.csv");
        std::fs::write(
            &csv,
            "iteration,timestep,eval_return,value_dist_xz,m_0_2,m_err_0_2\n0,0,1,,,\n5,50,2,0.1,1.0,0.2\n",
        )
        .unwrap();
        let files = plot_metrics(&csv, &dir.path().join("plots")).unwrap();
        let names: Vec<String> = files.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
        assert_eq!(names, vec!["eval_return.svg", "value_distance.svg", "targets.svg"]);
        let targets = std::fs::read_to_string(&files[2]).unwrap();
        assert!(!targets.contains("m_err"));
    }

    #[test]
    fn aggregated_columns_plot_the_mean() {
        let t = MetricsTable {
            header: vec!["timestep".into(), "eval_return_mean".into(), "eval_return_std".into(), "eval_return_n".into()],
            rows: vec![vec![Some(0.0), Some(1.0), Some(0.5), Some(3.0)]],
        };
        let s = select_series(&t, "eval_return");
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].0, "eval_return");
    }
}
