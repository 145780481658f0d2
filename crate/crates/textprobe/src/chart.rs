//! Static SVG charts: bar, grouped bar, line (with an optional right axis),
//! and heatmap. Output is plain text assembled with fixed-precision
//! formatting, so identical inputs always produce identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("chart series must be non-empty")]
    EmptySeries,
    #[error("series {series} contains a non-finite value")]
    NonFinite { series: String },
    #[error("failed to write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartKind {
    Bar,
    GroupedBar,
    /// Polyline per series; with exactly two series the second gets its own
    /// right-hand axis (mean vs. high-count style figures).
    Line,
    Heatmap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    /// (category label, value) pairs; categories must align across series.
    pub points: Vec<(String, f64)>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 80.0;
const MARGIN_TOP: f64 = 50.0;
const MARGIN_BOTTOM: f64 = 70.0;

const PALETTE: [&str; 6] = [
    "#c0392b", "#2980b9", "#27ae60", "#8e44ad", "#f39c12", "#16a085",
];

fn plot_w() -> f64 {
    WIDTH - MARGIN_LEFT - MARGIN_RIGHT
}

fn plot_h() -> f64 {
    HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
}

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn validate(series: &[Series]) -> Result<(), ChartError> {
    if series.is_empty() || series.iter().any(|s| s.points.is_empty()) {
        return Err(ChartError::EmptySeries);
    }
    for s in series {
        if s.points.iter().any(|(_, v)| !v.is_finite()) {
            return Err(ChartError::NonFinite {
                series: s.label.clone(),
            });
        }
    }
    Ok(())
}

/// Upper bound for an axis: a touch above the data maximum, never zero.
fn axis_max(values: impl Iterator<Item = f64>) -> f64 {
    let max = values.fold(0.0f64, f64::max);
    if max <= 0.0 {
        1.0
    } else {
        max * 1.05
    }
}

pub fn render_chart(series: &[Series], kind: ChartKind, title: &str) -> Result<String, ChartError> {
    validate(series)?;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    let _ = writeln!(svg, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        svg,
        "<text x=\"{}\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">{}</text>",
        fmt(WIDTH / 2.0),
        esc(title)
    );
    match kind {
        ChartKind::Bar | ChartKind::GroupedBar => bars(&mut svg, series),
        ChartKind::Line => lines(&mut svg, series),
        ChartKind::Heatmap => heatmap(&mut svg, series),
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_chart(
    series: &[Series],
    kind: ChartKind,
    title: &str,
    path: &Path,
) -> Result<(), ChartError> {
    let svg = render_chart(series, kind, title)?;
    std::fs::write(path, svg).map_err(|source| ChartError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn left_axis(svg: &mut String, max: f64) {
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + plot_h();
    let _ = writeln!(
        svg,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        fmt(x0), fmt(MARGIN_TOP), fmt(x0), fmt(y0)
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        fmt(x0), fmt(y0), fmt(MARGIN_LEFT + plot_w()), fmt(y0)
    );
    for i in 0..=5 {
        let value = max * i as f64 / 5.0;
        let y = y0 - plot_h() * i as f64 / 5.0;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>",
            fmt(x0 - 6.0), fmt(y + 4.0), fmt(value)
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>",
            fmt(x0), fmt(y), fmt(MARGIN_LEFT + plot_w()), fmt(y)
        );
    }
}

fn category_labels(svg: &mut String, labels: &[String]) {
    let n = labels.len() as f64;
    let slot = plot_w() / n;
    for (i, label) in labels.iter().enumerate() {
        let x = MARGIN_LEFT + slot * (i as f64 + 0.5);
        let y = MARGIN_TOP + plot_h() + 18.0;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{}</text>",
            fmt(x), fmt(y), esc(label)
        );
    }
}

fn legend(svg: &mut String, series: &[Series]) {
    for (i, s) in series.iter().enumerate() {
        let x = MARGIN_LEFT + plot_w() + 8.0;
        let y = MARGIN_TOP + 16.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            svg,
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/>",
            fmt(x), fmt(y), color
        );
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            fmt(x + 14.0), fmt(y + 9.0), esc(&s.label)
        );
    }
}

fn bars(svg: &mut String, series: &[Series]) {
    let max = axis_max(series.iter().flat_map(|s| s.points.iter().map(|(_, v)| *v)));
    left_axis(svg, max);
    let labels: Vec<String> = series[0].points.iter().map(|(l, _)| l.clone()).collect();
    category_labels(svg, &labels);
    let n = labels.len() as f64;
    let k = series.len() as f64;
    let slot = plot_w() / n;
    let bar_w = slot * 0.8 / k;
    for (si, s) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        for (i, (_, v)) in s.points.iter().enumerate() {
            let h = plot_h() * v / max;
            let x = MARGIN_LEFT + slot * i as f64 + slot * 0.1 + bar_w * si as f64;
            let y = MARGIN_TOP + plot_h() - h;
            let _ = writeln!(
                svg,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{}\"/>",
                fmt(x), fmt(y), fmt(bar_w), fmt(h), color
            );
        }
    }
    legend(svg, series);
}

fn lines(svg: &mut String, series: &[Series]) {
    let dual = series.len() == 2;
    let left_max = axis_max(series[0].points.iter().map(|(_, v)| *v));
    left_axis(svg, left_max);
    let labels: Vec<String> = series[0].points.iter().map(|(l, _)| l.clone()).collect();
    category_labels(svg, &labels);
    let n = labels.len() as f64;
    let slot = plot_w() / n;

    for (si, s) in series.iter().enumerate() {
        let max = if dual && si == 1 {
            axis_max(s.points.iter().map(|(_, v)| *v))
        } else {
            left_max
        };
        if dual && si == 1 {
            // right-hand axis ticks for the second series
            let x = MARGIN_LEFT + plot_w();
            for i in 0..=5 {
                let value = max * i as f64 / 5.0;
                let y = MARGIN_TOP + plot_h() * (1.0 - i as f64 / 5.0);
                let _ = writeln!(
                    svg,
                    "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"start\" fill=\"{}\">{}</text>",
                    fmt(x + 6.0), fmt(y + 4.0), PALETTE[1], fmt(value)
                );
            }
        }
        let color = PALETTE[si % PALETTE.len()];
        let points: Vec<String> = s
            .points
            .iter()
            .enumerate()
            .map(|(i, (_, v))| {
                let x = MARGIN_LEFT + slot * (i as f64 + 0.5);
                let y = MARGIN_TOP + plot_h() * (1.0 - v / max);
                format!("{},{}", fmt(x), fmt(y))
            })
            .collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>",
            color,
            points.join(" ")
        );
        for p in &points {
            let mut coords = p.split(',');
            let (x, y) = (coords.next().unwrap(), coords.next().unwrap());
            let _ = writeln!(svg, "<circle cx=\"{x}\" cy=\"{y}\" r=\"3\" fill=\"{color}\"/>");
        }
    }
    legend(svg, series);
}

fn heatmap(svg: &mut String, series: &[Series]) {
    // rows are series, columns the shared category labels
    let labels: Vec<String> = series[0].points.iter().map(|(l, _)| l.clone()).collect();
    category_labels(svg, &labels);
    let lo = series
        .iter()
        .flat_map(|s| s.points.iter().map(|(_, v)| *v))
        .fold(f64::INFINITY, f64::min);
    let hi = series
        .iter()
        .flat_map(|s| s.points.iter().map(|(_, v)| *v))
        .fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let cell_w = plot_w() / labels.len() as f64;
    let cell_h = plot_h() / series.len() as f64;
    for (ri, s) in series.iter().enumerate() {
        let y = MARGIN_TOP + cell_h * ri as f64;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{}</text>",
            fmt(MARGIN_LEFT - 6.0), fmt(y + cell_h / 2.0 + 4.0), esc(&s.label)
        );
        for (ci, (_, v)) in s.points.iter().enumerate() {
            let t = (v - lo) / span;
            // blue (low) to red (high)
            let r = (40.0 + 200.0 * t).round() as u8;
            let b = (240.0 - 200.0 * t).round() as u8;
            let x = MARGIN_LEFT + cell_w * ci as f64;
            let _ = writeln!(
                svg,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"rgb({},80,{})\" stroke=\"white\"/>",
                fmt(x), fmt(y), fmt(cell_w), fmt(cell_h), r, b
            );
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\" fill=\"white\">{}</text>",
                fmt(x + cell_w / 2.0), fmt(y + cell_h / 2.0 + 4.0), fmt(*v)
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(label: &str, values: &[f64]) -> Series {
        Series {
            label: label.into(),
            points: values
                .iter()
                .enumerate()
                .map(|(i, v)| (format!("c{i}"), *v))
                .collect(),
        }
    }

    #[test]
    fn bar_chart_has_one_rect_per_value() {
        let svg = render_chart(&[series("s", &[1.0, 2.0, 3.0])], ChartKind::Bar, "t").unwrap();
        // 3 bars + 1 background + 1 legend swatch
        assert_eq!(svg.matches("<rect").count(), 5);
        assert!(svg.contains("</svg>"));
    }

    #[test]
    fn dual_axis_line_renders_both_series() {
        let svg = render_chart(
            &[series("mean", &[0.3, 0.2]), series("high", &[60.0, 10.0])],
            ChartKind::Line,
            "t",
        )
        .unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn heatmap_has_one_cell_per_entry() {
        let svg = render_chart(
            &[series("a", &[0.1, 0.2, 0.3]), series("b", &[0.3, 0.2, 0.1])],
            ChartKind::Heatmap,
            "t",
        )
        .unwrap();
        // 6 cells + background
        assert_eq!(svg.matches("<rect").count(), 7);
    }

    #[test]
    fn deterministic_output() {
        let s = [series("s", &[0.5, 0.25, 0.125])];
        let a = render_chart(&s, ChartKind::Bar, "same").unwrap();
        let b = render_chart(&s, ChartKind::Bar, "same").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            render_chart(&[], ChartKind::Bar, "t"),
            Err(ChartError::EmptySeries)
        ));
        assert!(matches!(
            render_chart(&[series("s", &[])], ChartKind::Bar, "t"),
            Err(ChartError::EmptySeries)
        ));
        assert!(matches!(
            render_chart(&[series("s", &[f64::NAN])], ChartKind::Bar, "t"),
            Err(ChartError::NonFinite { .. })
        ));
    }
}
