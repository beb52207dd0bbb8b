//! Static SVG line plots of the per-epoch metric series.
//!
//! The output is self-contained XML (no external resources): one panel per
//! metric, each with a single polyline over the epoch axis.

use transeval::analysis::MetricSeries;

const PANEL_W: f64 = 440.0;
const PANEL_H: f64 = 280.0;
const MARGIN_L: f64 = 56.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 36.0;

struct Panel {
    title: &'static str,
    points: Vec<(f64, f64)>,
}

fn axis_label(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 0.01 && v.abs() < 10000.0 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn render_panel(panel: &Panel, out: &mut String, ox: f64, oy: f64) {
    let xs: Vec<f64> = panel.points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = panel.points.iter().map(|p| p.1).collect();
    let (x_min, x_max) = bounds(&xs);
    let (mut y_min, mut y_max) = bounds(&ys);
    if y_max - y_min == 0.0 {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let plot_w = PANEL_W - MARGIN_L - MARGIN_R;
    let plot_h = PANEL_H - MARGIN_T - MARGIN_B;
    let sx = |x: f64| {
        if x_max > x_min {
            MARGIN_L + (x - x_min) / (x_max - x_min) * plot_w
        } else {
            MARGIN_L + plot_w / 2.0
        }
    };
    let sy = |y: f64| MARGIN_T + (1.0 - (y - y_min) / (y_max - y_min)) * plot_h;

    out.push_str(&format!("<g transform=\"translate({ox:.1},{oy:.1})\">\n"));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        PANEL_W / 2.0,
        panel.title
    ));
    out.push_str(&format!(
        "<rect x=\"{MARGIN_L:.1}\" y=\"{MARGIN_T:.1}\" width=\"{plot_w:.1}\" height=\"{plot_h:.1}\" fill=\"none\" stroke=\"#888\" stroke-width=\"1\"/>\n"
    ));
    let mut coords = String::new();
    for (x, y) in &panel.points {
        if !coords.is_empty() {
            coords.push(' ');
        }
        coords.push_str(&format!("{:.2},{:.2}", sx(*x), sy(*y)));
    }
    out.push_str(&format!(
        "<polyline points=\"{coords}\" fill=\"none\" stroke=\"#1f6fb4\" stroke-width=\"1.5\"/>\n"
    ));
    for (x, y) in &panel.points {
        out.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.2\" fill=\"#1f6fb4\"/>\n",
            sx(*x),
            sy(*y)
        ));
    }
    // Axis extents.
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"10\">{}</text>\n",
        MARGIN_L - 4.0,
        MARGIN_T + 10.0,
        axis_label(y_max)
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"10\">{}</text>\n",
        MARGIN_L - 4.0,
        MARGIN_T + plot_h,
        axis_label(y_min)
    ));
    out.push_str(&format!(
        "<text x=\"{MARGIN_L:.1}\" y=\"{:.1}\" font-size=\"10\">{}</text>\n",
        PANEL_H - 14.0,
        axis_label(x_min)
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\" font-size=\"10\">{}</text>\n",
        MARGIN_L + plot_w,
        PANEL_H - 14.0,
        axis_label(x_max)
    ));
    out.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"11\">epoch</text>\n",
        MARGIN_L + plot_w / 2.0,
        PANEL_H - 4.0
    ));
    out.push_str("</g>\n");
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

/// Render the metric series as a grid of line-plot panels.
pub fn metric_series_chart(series: &MetricSeries) -> String {
    let epochs: Vec<f64> = series.records.iter().map(|r| r.epoch as f64).collect();
    let mut panels = Vec::new();
    if series.records.iter().all(|r| r.fid.is_some()) {
        panels.push(Panel {
            title: "Frechet distance (FID features)",
            points: epochs
                .iter()
                .zip(series.records.iter().map(|r| r.fid.unwrap()))
                .map(|(&x, y)| (x, y))
                .collect(),
        });
    }
    panels.push(Panel {
        title: "Frechet distance (embedder features)",
        points: epochs
            .iter()
            .zip(series.records.iter().map(|r| r.frd))
            .map(|(&x, y)| (x, y))
            .collect(),
    });
    panels.push(Panel {
        title: "Cosine embedding distance",
        points: epochs
            .iter()
            .zip(series.records.iter().map(|r| r.crd_distance))
            .map(|(&x, y)| (x, y))
            .collect(),
    });
    panels.push(Panel {
        title: "RF classifier log loss",
        points: epochs
            .iter()
            .zip(series.records.iter().map(|r| r.rf_mean_logloss))
            .map(|(&x, y)| (x, y))
            .collect(),
    });

    let cols = 2usize;
    let rows = panels.len().div_ceil(cols);
    let width = PANEL_W * cols as f64;
    let height = PANEL_H * rows as f64;
    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\">\n"
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{width:.0}\" height=\"{height:.0}\" fill=\"#ffffff\"/>\n"
    ));
    for (i, panel) in panels.iter().enumerate() {
        let ox = (i % cols) as f64 * PANEL_W;
        let oy = (i / cols) as f64 * PANEL_H;
        render_panel(panel, &mut out, ox, oy);
    }
    out.push_str("</svg>\n");
    out
}
