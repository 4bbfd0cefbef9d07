//! Static SVG charts. Every chart is drawn from data that is also written
//! to CSV next to it.

use std::fmt::Write;

use wardcast_core::explain::Waterfall;

const FONT: &str = "font-family=\"sans-serif\" font-size=\"11\"";
const TITLE_FONT: &str = "font-family=\"sans-serif\" font-size=\"13\"";
pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#7f7f7f"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Tick step of roughly `span / 5` rounded to 1, 2 or 5 times a power of ten.
fn nice_step(span: f64) -> f64 {
    if span.is_nan() || span <= 0.0 {
        return 1.0;
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let m = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    format!("{v:.decimals$}")
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

#[derive(Debug, Clone)]
pub struct Line {
    pub label: String,
    pub color: &'static str,
    pub values: Vec<f64>,
    pub dashed: bool,
}

#[derive(Debug, Clone)]
pub struct LineChart {
    pub title: String,
    /// One label per point; a subset is drawn as ticks.
    pub x_labels: Vec<String>,
    pub lines: Vec<Line>,
    /// Inclusive index range drawn as a shaded band.
    pub shade: Option<(usize, usize)>,
    pub y_label: String,
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
}

fn draw_chart(out: &mut String, c: &LineChart, f: &Frame) {
    let n = c.x_labels.len().max(c.lines.iter().map(|l| l.values.len()).max().unwrap_or(0)).max(2);
    let finite = c.lines.iter().flat_map(|l| l.values.iter().copied()).filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let step = nice_step(hi - lo);
    lo = (lo / step).floor() * step;
    hi = ((hi / step).ceil() * step).max(lo + step);
    let (pl, pr, pt, pb) = (52.0, 12.0, 28.0, 36.0);
    let (px, py, pw, ph) = (f.x0 + pl, f.y0 + pt, f.w - pl - pr, f.h - pt - pb);
    let sx = |i: usize| px + pw * i as f64 / (n - 1) as f64;
    let sy = |v: f64| py + ph * (1.0 - (v - lo) / (hi - lo));

    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" {TITLE_FONT} text-anchor=\"middle\">{}</text>",
        px + pw / 2.0,
        f.y0 + 17.0,
        esc(&c.title)
    );
    if let Some((a, b)) = c.shade {
        let (xa, xb) = (sx(a.min(n - 1)), sx(b.min(n - 1)));
        let _ =
            writeln!(out, "<rect x=\"{xa:.2}\" y=\"{py:.2}\" width=\"{:.2}\" height=\"{ph:.2}\" fill=\"#eeeeee\"/>", (xb - xa).max(1.0));
    }
    let mut v = lo;
    while v <= hi + step * 1e-9 {
        let y = sy(v);
        let _ = writeln!(out, "<line x1=\"{px:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/>", px + pw);
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" {FONT} text-anchor=\"end\">{}</text>", px - 4.0, y + 4.0, fmt_tick(v, step));
        v += step;
    }
    let _ = writeln!(out, "<rect x=\"{px:.2}\" y=\"{py:.2}\" width=\"{pw:.2}\" height=\"{ph:.2}\" fill=\"none\" stroke=\"#333333\"/>");
    if !c.x_labels.is_empty() {
        let every = (c.x_labels.len() / 6).max(1);
        for (i, label) in c.x_labels.iter().enumerate().step_by(every) {
            let x = sx(i);
            let _ = writeln!(out, "<text x=\"{x:.2}\" y=\"{:.2}\" {FONT} text-anchor=\"middle\">{}</text>", py + ph + 14.0, esc(label));
        }
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" {FONT} text-anchor=\"middle\" transform=\"rotate(-90 {:.2} {:.2})\">{}</text>",
        f.x0 + 12.0,
        py + ph / 2.0,
        f.x0 + 12.0,
        py + ph / 2.0,
        esc(&c.y_label)
    );
    for line in &c.lines {
        let mut pts = String::new();
        for (i, v) in line.values.iter().enumerate().filter(|(_, v)| v.is_finite()) {
            let _ = write!(pts, "{:.2},{:.2} ", sx(i), sy(*v));
        }
        let dash = if line.dashed { " stroke-dasharray=\"4 3\"" } else { "" };
        let _ =
            writeln!(out, "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.2\"{dash}/>", pts.trim_end(), line.color);
    }
    for (k, line) in c.lines.iter().enumerate() {
        let (x, y) = (px + 8.0 + 130.0 * k as f64, py + ph + 30.0);
        let _ = writeln!(
            out,
            "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{}\" stroke-width=\"2\"/>",
            y - 4.0,
            x + 18.0,
            y - 4.0,
            line.color
        );
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{y:.2}\" {FONT}>{}</text>", x + 22.0, esc(&line.label));
    }
}

pub fn line_chart(c: &LineChart, width: f64, height: f64) -> String {
    let mut out = svg_open(width, height);
    draw_chart(&mut out, c, &Frame { x0: 0.0, y0: 0.0, w: width, h: height });
    out.push_str("</svg>\n");
    out
}

/// Charts placed side by side.
pub fn panels(charts: &[LineChart], panel_width: f64, height: f64) -> String {
    let mut out = svg_open(panel_width * charts.len() as f64, height);
    for (i, c) in charts.iter().enumerate() {
        draw_chart(&mut out, c, &Frame { x0: panel_width * i as f64, y0: 0.0, w: panel_width, h: height });
    }
    out.push_str("</svg>\n");
    out
}

/// Horizontal bars sorted as given.
pub fn bar_chart(title: &str, items: &[(String, f64)], width: f64) -> String {
    let row = 18.0;
    let (label_w, top) = (190.0, 34.0);
    let height = top + row * items.len() as f64 + 20.0;
    let max = items.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    let scale = if max > 0.0 { (width - label_w - 80.0) / max } else { 0.0 };
    let mut out = svg_open(width, height);
    let _ = writeln!(out, "<text x=\"{:.2}\" y=\"20\" {TITLE_FONT} text-anchor=\"middle\">{}</text>", width / 2.0, esc(title));
    for (i, (name, v)) in items.iter().enumerate() {
        let y = top + row * i as f64;
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" {FONT} text-anchor=\"end\">{}</text>", label_w - 6.0, y + 12.0, esc(name));
        let _ = writeln!(
            out,
            "<rect x=\"{label_w:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
            y + 2.0,
            v.abs() * scale,
            row - 4.0,
            PALETTE[0]
        );
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" {FONT}>{v:.4}</text>", label_w + v.abs() * scale + 4.0, y + 12.0);
    }
    out.push_str("</svg>\n");
    out
}

/// Waterfall from the base value through each contribution to the
/// prediction. Positive steps are red, negative steps blue.
pub fn waterfall_chart(title: &str, w: &Waterfall, width: f64) -> String {
    let mut steps: Vec<(String, f64)> = w.steps.iter().map(|s| (s.feature.clone(), s.contribution)).collect();
    if let Some(r) = w.remainder {
        steps.push((crate::io::REMAINDER_LABEL.to_string(), r));
    }
    let mut level = w.base;
    let mut lo = w.base.min(w.prediction);
    let mut hi = w.base.max(w.prediction);
    for (_, c) in &steps {
        level += c;
        lo = lo.min(level);
        hi = hi.max(level);
    }
    if hi - lo < 1e-12 {
        lo -= 1.0;
        hi += 1.0;
    }
    let row = 18.0;
    let (label_w, top, right) = (190.0, 34.0, 70.0);
    let height = top + row * (steps.len() + 2) as f64 + 20.0;
    let sx = |v: f64| label_w + (width - label_w - right) * (v - lo) / (hi - lo);
    let mut out = svg_open(width, height);
    let _ = writeln!(out, "<text x=\"{:.2}\" y=\"20\" {TITLE_FONT} text-anchor=\"middle\">{}</text>", width / 2.0, esc(title));
    let marker = |out: &mut String, i: usize, name: &str, v: f64| {
        let y = top + row * i as f64;
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" {FONT} text-anchor=\"end\">{}</text>", label_w - 6.0, y + 12.0, esc(name));
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#333333\" stroke-width=\"2\"/>",
            sx(v),
            y + 1.0,
            sx(v),
            y + row - 1.0
        );
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" {FONT}>{v:.3}</text>", sx(v) + 4.0, y + 12.0);
    };
    marker(&mut out, 0, "base value", w.base);
    let mut level = w.base;
    for (i, (name, c)) in steps.iter().enumerate() {
        let y = top + row * (i + 1) as f64;
        let (a, b) = (level, level + c);
        let color = if *c >= 0.0 { "#d62728" } else { "#1f77b4" };
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" {FONT} text-anchor=\"end\">{}</text>", label_w - 6.0, y + 12.0, esc(name));
        let _ = writeln!(
            out,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{color}\"/>",
            sx(a.min(b)),
            y + 2.0,
            (sx(a.max(b)) - sx(a.min(b))).max(0.5),
            row - 4.0
        );
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" {FONT}>{c:+.3}</text>", sx(a.max(b)) + 4.0, y + 12.0);
        level = b;
    }
    marker(&mut out, steps.len() + 1, "prediction", w.prediction);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn steps_are_round() {
        assert_eq!(nice_step(10.0), 2.0);
        assert_eq!(nice_step(100.0), 20.0);
        assert_eq!(nice_step(0.3), 0.05);
        assert_eq!(nice_step(0.0), 1.0);
    }

    #[test]
    fn chart_is_well_formed_and_escaped() {
        let c = LineChart {
            title: "a < b".into(),
            x_labels: vec!["x".into(); 3],
            lines: vec![Line { label: "y".into(), color: PALETTE[0], values: vec![1.0, f64::NAN, 3.0], dashed: false }],
            shade: Some((0, 1)),
            y_label: "count".into(),
        };
        let s = line_chart(&c, 400.0, 200.0);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a &lt; b"));
        assert!(!s.contains("NaN"));
        assert_unique_attributes(&s);
    }

    fn assert_unique_attributes(svg: &str) {
        for tag in svg.split('<').skip(1) {
            let head = tag.split('>').next().unwrap();
            let mut names: Vec<&str> = head.split_whitespace().skip(1).filter_map(|a| a.split_once('=').map(|(n, _)| n)).collect();
            let n = names.len();
            names.sort_unstable();
            names.dedup();
            assert_eq!(names.len(), n, "duplicate attribute in <{head}>");
        }
    }

    #[test]
    fn bar_and_waterfall_charts_are_well_formed() {
        use wardcast_core::explain::WaterfallStep;
        let w = Waterfall {
            base: 1.0,
            steps: vec![WaterfallStep { feature: "lag_1".into(), contribution: 2.0 }],
            remainder: Some(-0.5),
            prediction: 2.5,
        };
        assert_unique_attributes(&waterfall_chart("w", &w, 600.0));
        assert_unique_attributes(&bar_chart("b", &[("a".into(), 0.7), ("b".into(), 0.3)], 600.0));
    }
}
