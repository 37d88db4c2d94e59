//! Minimal line plots written as standalone SVG.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#7f7f7f",
];

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
            dashed: false,
        }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Horizontal guide lines with labels.
    pub guides: Vec<(f64, String)>,
    /// Same scale on both axes.
    pub equal_aspect: bool,
    /// Optional clamp of the y range.
    pub y_limits: Option<(f64, f64)>,
}

impl Plot {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Self::default()
        }
    }

    pub fn series(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    pub fn guide(mut self, y: f64, label: &str) -> Self {
        self.guides.push((y, label.into()));
        self
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let finite = |p: &&(f64, f64)| p.0.is_finite() && p.1.is_finite();
        let pts = self.series.iter().flat_map(|s| s.points.iter().filter(finite));
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        for (g, _) in &self.guides {
            y0 = y0.min(*g);
            y1 = y1.max(*g);
        }
        if let Some((lo, hi)) = self.y_limits {
            y0 = y0.max(lo);
            y1 = y1.min(hi);
        }
        if !x0.is_finite() || !x1.is_finite() {
            (x0, x1) = (0.0, 1.0);
        }
        if !y0.is_finite() || !y1.is_finite() || y0 > y1 {
            (y0, y1) = (0.0, 1.0);
        }
        let pad = |a: f64, b: f64| {
            let d = (b - a).max(1e-9 * a.abs().max(1.0));
            (a - 0.05 * d, b + 0.05 * d)
        };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        if self.equal_aspect {
            let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
            let scale = ((x1 - x0) / pw).max((y1 - y0) / ph);
            let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
            return (
                cx - 0.5 * scale * pw,
                cx + 0.5 * scale * pw,
                cy - 0.5 * scale * ph,
                cy + 0.5 * scale * ph,
            );
        }
        (x0, x1, y0, y1)
    }

    pub fn render(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
        let py = |y: f64| H - BOTTOM - (y.clamp(y0, y1) - y0) / (y1 - y0) * (H - TOP - BOTTOM);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            (W - RIGHT + LEFT) / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - LEFT - RIGHT,
            H - TOP - BOTTOM
        );
        for k in 0..=5 {
            let f = k as f64 / 5.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let _ = writeln!(
                s,
                r#"<line x1="{0:.1}" y1="{1}" x2="{0:.1}" y2="{2}" stroke="black"/>"#,
                px(xv),
                H - BOTTOM,
                H - BOTTOM + 5.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
                px(xv),
                H - BOTTOM + 18.0,
                tick(xv)
            );
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{1:.1}" x2="{LEFT}" y2="{1:.1}" stroke="black"/>"#,
                LEFT - 5.0,
                py(yv)
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
                LEFT - 8.0,
                py(yv) + 4.0,
                tick(yv)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            (W - RIGHT + LEFT) / 2.0,
            H - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
            (H - BOTTOM + TOP) / 2.0,
            escape(&self.y_label)
        );
        for (g, label) in &self.guides {
            let y = py(*g);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#444" stroke-dasharray="2,3"/><text x="{}" y="{:.1}" fill="#444">{}</text>"##,
                W - RIGHT,
                W - RIGHT - 4.0,
                y - 4.0,
                escape(label)
            );
        }
        for (k, ser) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let dash = if ser.dashed { r#" stroke-dasharray="6,4""# } else { "" };
            // Non-finite values break the line into segments.
            for seg in ser.points.split(|p| !(p.0.is_finite() && p.1.is_finite())) {
                if seg.is_empty() {
                    continue;
                }
                let pts: Vec<String> = seg.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#,
                    pts.join(" ")
                );
            }
            let ly = TOP + 10.0 + 18.0 * k as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{0}" y1="{ly}" x2="{1}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/><text x="{2}" y="{3}">{4}</text>"#,
                W - RIGHT + 10.0,
                W - RIGHT + 34.0,
                W - RIGHT + 40.0,
                ly + 4.0,
                escape(&ser.label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_one_polyline_per_finite_segment() {
        let pts = vec![(0.0, 1.0), (1.0, 2.0), (2.0, f64::INFINITY), (3.0, 1.5), (4.0, 1.0)];
        let svg = Plot::new("t", "x", "y").series(Series::new("a", pts)).guide(1.1, "1.10").render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("1.10"));
    }

    #[test]
    fn empty_plot_still_renders() {
        let svg = Plot::new("empty", "x", "y").render();
        assert!(svg.contains("empty"));
        assert_eq!(svg.matches("<polyline").count(), 0);
    }
}
