//! Native SVG line plots: time series and phase portraits rendered as
//! polylines with axes, ticks, and a legend. The figures are line plots of
//! at most a few thousand points, so a small hand-rolled renderer keeps the
//! tool free of graphics dependencies. Output is deterministic: identical
//! input produces identical bytes.

use std::fmt::Write as _;

use crate::fluid::Trajectory;
use crate::numerics::format_g9;

/// Canvas width in pixels.
pub const PLOT_WIDTH: u32 = 800;
/// Canvas height in pixels.
pub const PLOT_HEIGHT: u32 = 500;

const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 42.0;
const MARGIN_BOTTOM: f64 = 54.0;

/// Default series palette (colorblind-safe ordering).
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// One named polyline.
struct Series {
    label: String,
    color: String,
    points: Vec<(f64, f64)>,
}

/// A single-panel line plot under construction.
pub struct LinePlot {
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<Series>,
}

impl LinePlot {
    /// Start an empty plot with the given title and axis labels.
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.to_string(),
            x_label: x_label.to_string(),
            y_label: y_label.to_string(),
            series: Vec::new(),
        }
    }

    /// Add a polyline. Non-finite points are dropped. Colors cycle through
    /// a fixed palette.
    pub fn series(mut self, label: &str, points: &[(f64, f64)]) -> Self {
        let color = PALETTE[self.series.len() % PALETTE.len()].to_string();
        self.series.push(Series {
            label: label.to_string(),
            color,
            points: points
                .iter()
                .copied()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect(),
        });
        self
    }

    /// Render the plot as a standalone SVG document.
    pub fn render(&self) -> String {
        let (x_lo, x_hi) = padded_range(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
        let (y_lo, y_hi) = padded_range(self.series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));

        let plot_w = f64::from(PLOT_WIDTH) - MARGIN_LEFT - MARGIN_RIGHT;
        let plot_h = f64::from(PLOT_HEIGHT) - MARGIN_TOP - MARGIN_BOTTOM;
        let to_px = |x: f64, y: f64| {
            let px = MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
            let py = MARGIN_TOP + (y_hi - y) / (y_hi - y_lo) * plot_h;
            (px, py)
        };

        let mut out = String::new();
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{PLOT_WIDTH}\" height=\"{PLOT_HEIGHT}\" viewBox=\"0 0 {PLOT_WIDTH} {PLOT_HEIGHT}\">"
        );
        let _ = writeln!(out, "<rect width=\"{PLOT_WIDTH}\" height=\"{PLOT_HEIGHT}\" fill=\"white\"/>");

        // Grid and ticks.
        for x in nice_ticks(x_lo, x_hi) {
            let (px, _) = to_px(x, y_lo);
            let _ = writeln!(
                out,
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\" stroke-width=\"1\"/>",
                fmt_px(px),
                fmt_px(MARGIN_TOP),
                fmt_px(px),
                fmt_px(MARGIN_TOP + plot_h)
            );
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
                fmt_px(px),
                fmt_px(MARGIN_TOP + plot_h + 18.0),
                tick_label(x)
            );
        }
        for y in nice_ticks(y_lo, y_hi) {
            let (_, py) = to_px(x_lo, y);
            let _ = writeln!(
                out,
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\" stroke-width=\"1\"/>",
                fmt_px(MARGIN_LEFT),
                fmt_px(py),
                fmt_px(MARGIN_LEFT + plot_w),
                fmt_px(py)
            );
            let _ = writeln!(
                out,
                "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">{}</text>",
                fmt_px(MARGIN_LEFT - 8.0),
                fmt_px(py + 4.0),
                tick_label(y)
            );
        }

        // Frame.
        let _ = writeln!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>",
            fmt_px(MARGIN_LEFT),
            fmt_px(MARGIN_TOP),
            fmt_px(plot_w),
            fmt_px(plot_h)
        );

        // Series.
        for s in &self.series {
            if s.points.is_empty() {
                continue;
            }
            let mut path = String::new();
            for (x, y) in &s.points {
                let (px, py) = to_px(*x, *y);
                if !path.is_empty() {
                    path.push(' ');
                }
                let _ = write!(path, "{},{}", fmt_px(px), fmt_px(py));
            }
            let _ = writeln!(
                out,
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.3\" points=\"{}\"/>",
                s.color, path
            );
        }

        // Legend (only when there is more than one series).
        if self.series.len() > 1 {
            let mut ly = MARGIN_TOP + 10.0;
            for s in &self.series {
                let lx = MARGIN_LEFT + plot_w - 130.0;
                let _ = writeln!(
                    out,
                    "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"2\"/>",
                    fmt_px(lx),
                    fmt_px(ly),
                    fmt_px(lx + 24.0),
                    fmt_px(ly),
                    s.color
                );
                let _ = writeln!(
                    out,
                    "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
                    fmt_px(lx + 30.0),
                    fmt_px(ly + 4.0),
                    escape(&s.label)
                );
                ly += 18.0;
            }
        }

        // Labels.
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{}</text>",
            fmt_px(MARGIN_LEFT + plot_w / 2.0),
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">{}</text>",
            fmt_px(MARGIN_LEFT + plot_w / 2.0),
            fmt_px(f64::from(PLOT_HEIGHT) - 12.0),
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            "<text x=\"18\" y=\"{}\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>",
            fmt_px(MARGIN_TOP + plot_h / 2.0),
            fmt_px(MARGIN_TOP + plot_h / 2.0),
            escape(&self.y_label)
        );
        out.push_str("</svg>\n");
        out
    }
}

/// Pixel coordinates with two decimals: deterministic and compact.
fn fmt_px(v: f64) -> String {
    format!("{v:.2}")
}

/// Tick label: 9-significant-digit formatting, which trims trailing zeros.
fn tick_label(v: f64) -> String {
    // Snap values that are ticks of a decimal step to a short form.
    format_g9(if v.abs() < 1e-12 { 0.0 } else { v })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Data range padded by 5% on each side; degenerate or empty input falls
/// back to a unit box so the renderer never divides by zero.
fn padded_range<I: Iterator<Item = f64>>(values: I) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

/// About five round-valued ticks covering `[lo, hi]`: step 1, 2, or 5 times
/// a power of ten.
fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    } * mag;
    let first = (lo / step).ceil();
    let mut ticks = Vec::new();
    let mut k = first;
    while k * step <= hi + 1e-9 * span {
        ticks.push(k * step);
        k += 1.0;
    }
    ticks
}

// ---------------------------------------------------------------------------
// Trajectory convenience plots
// ---------------------------------------------------------------------------

/// Queue-difference time plot `Δ(t)`.
pub fn delta_time_plot(traj: &Trajectory, title: &str) -> String {
    let pts: Vec<(f64, f64)> = traj.samples.iter().map(|s| (s.t, s.delta)).collect();
    LinePlot::new(title, "t", "queue difference").series("delta", &pts).render()
}

/// Phase portrait of the sharing cycle: shared content `z21` against the
/// queue difference.
pub fn phase_portrait(traj: &Trajectory, title: &str) -> String {
    let pts: Vec<(f64, f64)> = traj.samples.iter().map(|s| (s.state.z21, s.delta)).collect();
    LinePlot::new(title, "z21", "queue difference").series("orbit", &pts).render()
}

/// Queue-length time plot with both queues.
pub fn queues_time_plot(traj: &Trajectory, title: &str) -> String {
    let q1: Vec<(f64, f64)> = traj.samples.iter().map(|s| (s.t, s.state.q1)).collect();
    let q2: Vec<(f64, f64)> = traj.samples.iter().map(|s| (s.t, s.state.q2)).collect();
    LinePlot::new(title, "t", "queue length")
        .series("q1", &q1)
        .series("q2", &q2)
        .render()
}

/// Shared-content time plot with both cross-contents.
pub fn sharing_time_plot(traj: &Trajectory, title: &str) -> String {
    let z21: Vec<(f64, f64)> = traj.samples.iter().map(|s| (s.t, s.state.z21)).collect();
    let z12: Vec<(f64, f64)> = traj.samples.iter().map(|s| (s.t, s.state.z12)).collect();
    LinePlot::new(title, "t", "shared content")
        .series("z21", &z21)
        .series("z12", &z12)
        .render()
}

// ---------------------------------------------------------------------------
