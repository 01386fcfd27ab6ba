//! Self-contained SVG log-log plots with fitted-slope labels and reference
//! guide lines; the raw data table travels inside the file as an XML comment
//! so a figure can be audited without re-running anything.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

pub struct Series {
    pub label: String,
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: Option<f64>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

/// Render log2-log2 series with slope annotations and guide lines whose
/// slopes are given in `guide_slopes`.
pub fn render_loglog_svg(
    path: &Path,
    title: &str,
    series: &[Series],
    guide_slopes: &[f64],
) -> Result<()> {
    if series.is_empty() || series.iter().all(|s| s.taus.is_empty()) {
        return Err(Error::EmptyInput("no series to plot".to_string()));
    }
    for s in series {
        if s.taus.len() != s.values.len() {
            return Err(Error::InvalidConfig(format!(
                "series {} has {} taus and {} values",
                s.label,
                s.taus.len(),
                s.values.len()
            )));
        }
        if s.taus.iter().chain(&s.values).any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "series {} has nonpositive data; log plot impossible",
                s.label
            )));
        }
    }

    let xs: Vec<f64> = series.iter().flat_map(|s| s.taus.iter().map(|t| t.log2())).collect();
    let ys: Vec<f64> = series.iter().flat_map(|s| s.values.iter().map(|v| v.log2())).collect();
    let (x_min, x_max) = padded_range(&xs);
    let (y_min, y_max) = padded_range(&ys);

    let to_px = |x: f64, y: f64| -> (f64, f64) {
        let px = MARGIN_L + (x - x_min) / (x_max - x_min) * (WIDTH - MARGIN_L - MARGIN_R);
        let py = HEIGHT - MARGIN_B - (y - y_min) / (y_max - y_min) * (HEIGHT - MARGIN_T - MARGIN_B);
        (px, py)
    };

    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    )
    .unwrap();

    // embedded data table
    writeln!(svg, "<!-- data (tau, value) per series").unwrap();
    for s in series {
        writeln!(svg, "series,{}", s.label).unwrap();
        for (t, v) in s.taus.iter().zip(&s.values) {
            writeln!(svg, "{t:.17e},{v:.17e}").unwrap();
        }
    }
    writeln!(svg, "-->").unwrap();

    writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();

    // axes box
    let (x0, y0) = (MARGIN_L, HEIGHT - MARGIN_B);
    let (x1, y1) = (WIDTH - MARGIN_R, MARGIN_T);
    writeln!(
        svg,
        r##"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
        x1 - x0,
        y0 - y1
    )
    .unwrap();

    // integer log2 ticks
    for xt in (x_min.ceil() as i64)..=(x_max.floor() as i64) {
        let (px, _) = to_px(xt as f64, y_min);
        writeln!(
            svg,
            r##"<line x1="{px}" y1="{y0}" x2="{px}" y2="{}" stroke="#999" stroke-dasharray="2,4"/>"##,
            y1
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{px}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">2^{xt}</text>"#,
            y0 + 18.0
        )
        .unwrap();
    }
    for yt in (y_min.ceil() as i64)..=(y_max.floor() as i64) {
        let (_, py) = to_px(x_min, yt as f64);
        writeln!(
            svg,
            r##"<line x1="{x0}" y1="{py}" x2="{x1}" y2="{py}" stroke="#999" stroke-dasharray="2,4"/>"##
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">2^{yt}</text>"#,
            x0 - 6.0,
            py + 4.0
        )
        .unwrap();
    }
    writeln!(
        svg,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">time step</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0
    )
    .unwrap();

    // guide lines anchored below the data cloud
    let anchor_x = x_max - 0.5;
    let anchor_y = y_min + 0.25 * (y_max - y_min);
    for (gi, &slope) in guide_slopes.iter().enumerate() {
        let dx = (x_max - x_min).min(2.5);
        let p0 = to_px(anchor_x - dx, anchor_y - slope * dx - 0.4 * gi as f64);
        let p1 = to_px(anchor_x, anchor_y - 0.4 * gi as f64);
        writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#666" stroke-width="1"/>"##,
            p0.0, p0.1, p1.0, p1.1
        )
        .unwrap();
        writeln!(
            svg,
            r##"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="#666">slope {slope}</text>"##,
            p1.0 + 4.0,
            p1.1
        )
        .unwrap();
    }

    // series
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut points = String::new();
        for (t, v) in s.taus.iter().zip(&s.values) {
            let (px, py) = to_px(t.log2(), v.log2());
            write!(points, "{px:.1},{py:.1} ").unwrap();
        }
        writeln!(
            svg,
            r#"<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
        )
        .unwrap();
        for (t, v) in s.taus.iter().zip(&s.values) {
            let (px, py) = to_px(t.log2(), v.log2());
            writeln!(svg, r#"<circle cx="{px:.1}" cy="{py:.1}" r="3" fill="{color}"/>"#).unwrap();
        }
        let legend_label = match s.slope {
            Some(m) => format!("{}: slope {m:.2}", s.label),
            None => s.label.clone(),
        };
        writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{color}">{}</text>"#,
            x0 + 10.0,
            y1 + 18.0 + 16.0 * i as f64,
            escape(&legend_label)
        )
        .unwrap();
    }

    writeln!(svg, "</svg>").unwrap();
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(svg.as_bytes())?;
    Ok(())
}

fn padded_range(values: &[f64]) -> (f64, f64) {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = (max - min).max(1.0);
    (min - 0.08 * span, max + 0.08 * span)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_slope_label_and_data_table() {
        let dir = std::env::temp_dir().join("tspl_plot_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("plot.svg");
        let taus: Vec<f64> = (3..8).map(|m| 2f64.powi(-m)).collect();
        let values: Vec<f64> = taus.iter().map(|t| 2.0 * t * t).collect();
        let series = vec![Series {
            label: "bias l2".into(),
            taus,
            values,
            slope: Some(2.0),
        }];
        render_loglog_svg(&path, "bias", &series, &[1.5, 2.0]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("slope 2.00"));
        assert!(text.contains("<!-- data"));
        assert!(text.contains("series,bias l2"));
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn empty_input_is_an_error() {
        let path = std::env::temp_dir().join("tspl_plot_empty.svg");
        assert!(matches!(
            render_loglog_svg(&path, "t", &[], &[]),
            Err(Error::EmptyInput(_))
        ));
    }
}
