//! Static SVG rendering of a stability series.
//!
//! A line of mean alpha against the series axis, a shaded confidence band,
//! and a dashed horizontal rule at the acceptability threshold.

use crate::stability::{Axis, StabilitySeries};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 50.0;

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(1e-9);
        MARGIN_LEFT + (x - self.x_min) / span * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(1e-9);
        HEIGHT - MARGIN_BOTTOM - (y - self.y_min) / span * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }
}

/// Renders the series as a standalone SVG document.
pub fn render_svg(series: &StabilitySeries, threshold: f64) -> String {
    let xs: Vec<f64> = series.points.iter().map(|p| p.x).collect();
    let lows: Vec<f64> = series.points.iter().map(|p| p.estimate.ci_lower).collect();
    let highs: Vec<f64> = series.points.iter().map(|p| p.estimate.ci_upper).collect();

    let x_min = xs.first().copied().unwrap_or(0.0);
    let x_max = xs.last().copied().unwrap_or(1.0);
    let mut y_min = lows.iter().copied().fold(threshold, f64::min) - 0.05;
    let mut y_max = highs.iter().copied().fold(1.0, f64::max) + 0.05;
    if !y_min.is_finite() || !y_max.is_finite() || y_min >= y_max {
        y_min = 0.0;
        y_max = 1.05;
    }
    let frame = Frame {
        x_min,
        x_max,
        y_min,
        y_max,
    };

    let axis_label = match series.axis {
        Axis::Iteration => "iteration",
        Axis::Temperature => "temperature",
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    // Confidence band.
    if series.points.len() >= 2 {
        let mut d = String::from("M");
        for p in &series.points {
            d.push_str(&format!(" {:.2},{:.2}", frame.px(p.x), frame.py(p.estimate.ci_upper)));
        }
        for p in series.points.iter().rev() {
            d.push_str(&format!(" {:.2},{:.2}", frame.px(p.x), frame.py(p.estimate.ci_lower)));
        }
        d.push_str(" Z");
        svg.push_str(&format!(
            "<path d=\"{d}\" fill=\"#4878cf\" fill-opacity=\"0.2\" stroke=\"none\"/>\n"
        ));
    }

    // Threshold rule.
    if threshold >= y_min && threshold <= y_max {
        let y = frame.py(threshold);
        svg.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#999\" \
             stroke-dasharray=\"6 4\"/>\n",
            frame.px(x_min),
            frame.px(x_max)
        ));
    }

    // Mean line and markers.
    if !series.points.is_empty() {
        let pts: Vec<String> = series
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", frame.px(p.x), frame.py(p.estimate.mean_alpha)))
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#2b5597\" stroke-width=\"2\"/>\n",
            pts.join(" ")
        ));
        for p in &series.points {
            svg.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#2b5597\"/>\n",
                frame.px(p.x),
                frame.py(p.estimate.mean_alpha)
            ));
        }
    }

    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{l:.2}\" y1=\"{b:.2}\" x2=\"{r:.2}\" y2=\"{b:.2}\" stroke=\"black\"/>\n\
         <line x1=\"{l:.2}\" y1=\"{t:.2}\" x2=\"{l:.2}\" y2=\"{b:.2}\" stroke=\"black\"/>\n",
        l = MARGIN_LEFT,
        r = WIDTH - MARGIN_RIGHT,
        t = MARGIN_TOP,
        b = HEIGHT - MARGIN_BOTTOM
    ));
    for p in &series.points {
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            frame.px(p.x),
            HEIGHT - MARGIN_BOTTOM + 16.0,
            trim_number(p.x)
        ));
    }
    for tick in [y_min, (y_min + y_max) / 2.0, y_max] {
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"end\">{:.2}</text>\n",
            MARGIN_LEFT - 6.0,
            frame.py(tick) + 4.0,
            tick
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\">{axis_label}</text>\n\
         <text x=\"16\" y=\"{mid:.2}\" font-size=\"13\" text-anchor=\"middle\" \
         transform=\"rotate(-90 16 {mid:.2})\">alpha</text>\n",
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        HEIGHT - 12.0,
        mid = (MARGIN_TOP + HEIGHT - MARGIN_BOTTOM) / 2.0
    ));
    svg.push_str("</svg>\n");
    svg
}

fn trim_number(x: f64) -> String {
    if x == x.trunc() {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}
