//! Minimal SVG line charts of per-step metrics averaged over episodes.

use std::fmt::Write as _;

use trackgym_core::experiment::{EpisodeRecord, StepRecord};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

pub type Metric = fn(&StepRecord) -> Option<f64>;

pub const METRICS: [(&str, Metric); 6] = [
    ("gospa_distance", |s| Some(s.gospa_distance)),
    ("cov_norm_sum", |s| Some(s.cov_norm_sum)),
    ("t2t", |s| s.t2t),
    ("reward", |s| Some(s.reward)),
    ("n_tracks", |s| Some(s.n_tracks as f64)),
    ("n_detections", |s| Some(s.n_detections as f64)),
];

/// Per-step mean of `metric` over episodes, skipping undefined values.
pub fn mean_series(records: &[EpisodeRecord], metric: Metric) -> Vec<(f64, f64)> {
    let len = records.iter().map(|r| r.steps.len()).max().unwrap_or(0);
    (0..len)
        .filter_map(|k| {
            let values: Vec<f64> = records.iter().filter_map(|r| r.steps.get(k).and_then(metric)).collect();
            let time = records.iter().find_map(|r| r.steps.get(k)).map(|s| s.time)?;
            (!values.is_empty()).then(|| (time, values.iter().sum::<f64>() / values.len() as f64))
        })
        .collect()
}

pub fn line_chart_svg(title: &str, points: &[(f64, f64)]) -> String {
    let (x0, x1) = bounds(points.iter().map(|p| p.0));
    let (y0, y1) = bounds(points.iter().map(|p| p.1));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle">{title}</text>"#,
        WIDTH / 2.0
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{m} {t} V{b} H{r}" stroke="black" fill="none"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    for (y, v) in [(HEIGHT - MARGIN, y0), (MARGIN, y1)] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{y}" text-anchor="end">{v:.3}</text>"#,
            MARGIN - 4.0
        );
    }
    for (x, v) in [(MARGIN, x0), (WIDTH - MARGIN, x1)] {
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{}" text-anchor="middle">{v:.2} s</text>"#,
            HEIGHT - MARGIN + 16.0
        );
    }
    let path: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline points="{}" stroke="steelblue" stroke-width="1.5" fill="none"/>"#,
        path.join(" ")
    );
    svg.push_str("</svg>\n");
    svg
}

/// Range of the values, widened when degenerate so scaling stays finite.
fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
