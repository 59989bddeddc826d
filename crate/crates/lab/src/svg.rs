//! Self-contained SVG plots (no scripts, fonts or external references).

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];
/// Polylines are thinned to at most this many vertices.
const MAX_VERTICES: usize = 1500;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let pad = |(a, b): (f64, f64)| {
            if !(a.is_finite() && b.is_finite()) {
                (0.0, 1.0)
            } else if b - a < 1e-12 {
                (a - 0.5, b + 0.5)
            } else {
                (a, b)
            }
        };
        Self { x: pad(x), y: pad(y) }
    }

    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

fn open(title: &str, frame: &Frame, xlabel: &str, ylabel: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>");
    let _ = writeln!(s, "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>", W / 2.0, escape(title));
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = writeln!(s, "<rect x=\"{x0}\" y=\"{y0}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>", x1 - x0, y1 - y0);
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let xv = frame.x.0 + f * (frame.x.1 - frame.x.0);
        let yv = frame.y.0 + f * (frame.y.1 - frame.y.0);
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", frame.px(xv), y1 + 16.0, tick(xv));
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>", x0 - 6.0, frame.py(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", (x0 + x1) / 2.0, H - 12.0, escape(xlabel));
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
    s
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn legend(s: &mut String, labels: &[&str]) {
    for (i, l) in labels.iter().enumerate().take(12) {
        let y = TOP + 14.0 + 14.0 * i as f64;
        let c = PALETTE[i % PALETTE.len()];
        let _ = writeln!(s, "<line x1=\"{}\" y1=\"{y:.2}\" x2=\"{}\" y2=\"{y:.2}\" stroke=\"{c}\" stroke-width=\"2\"/>", W - RIGHT - 80.0, W - RIGHT - 64.0);
        let _ = writeln!(s, "<text x=\"{}\" y=\"{:.2}\">{}</text>", W - RIGHT - 60.0, y + 4.0, escape(l));
    }
}

fn thin(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let stride = points.len().div_ceil(MAX_VERTICES).max(1);
    points.iter().copied().step_by(stride).collect()
}

/// Curves in `[0,1) × p`, broken where the base coordinate wraps.
pub fn phase_portrait(title: &str, curves: &[(String, Vec<(f64, f64)>)]) -> String {
    let (lo, hi) = curves
        .iter()
        .flat_map(|(_, c)| c.iter().map(|x| x.1))
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let pad = 0.05 * (hi - lo).max(1e-6);
    let frame = Frame::new((0.0, 1.0), (lo - pad, hi + pad));
    let mut s = open(title, &frame, "q", "p");
    for (i, (_, c)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts = thin(c);
        let mut path = String::new();
        let mut prev: Option<f64> = None;
        for &(q, p) in pts.iter().chain(pts.first()) {
            let cmd = match prev {
                Some(pq) if (q - pq).abs() <= 0.5 => 'L',
                _ => 'M',
            };
            let _ = write!(path, "{cmd}{:.2} {:.2} ", frame.px(q), frame.py(p));
            prev = Some(q);
        }
        let _ = writeln!(s, "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1\"/>", path.trim_end());
    }
    let labels: Vec<&str> = curves.iter().map(|(l, _)| l.as_str()).collect();
    legend(&mut s, &labels);
    s.push_str("</svg>\n");
    s
}

/// Line plot of one or more series; `log_y` plots `log10` of positive values.
pub fn series_plot(title: &str, ylabel: &str, tracks: &[(String, Vec<(f64, f64)>)], log_y: bool) -> String {
    let tf = |v: f64| if log_y { v.max(1e-16).log10() } else { v };
    let pts = || tracks.iter().flat_map(|(_, t)| t.iter().copied());
    let (x0, x1) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (x, _)| (a.min(x), b.max(x)));
    let (y0, y1) = pts()
        .map(|(_, y)| tf(y))
        .filter(|y| y.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| (a.min(y), b.max(y)));
    let frame = Frame::new((x0, x1), (y0, y1));
    let label = if log_y { format!("log10 {ylabel}") } else { ylabel.to_string() };
    let mut s = open(title, &frame, "n", &label);
    for (i, (_, t)) in tracks.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = String::new();
        for (k, &(x, y)) in t.iter().enumerate() {
            let _ = write!(path, "{}{:.2} {:.2} ", if k == 0 { 'M' } else { 'L' }, frame.px(x), frame.py(tf(y)));
        }
        let _ = writeln!(s, "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>", path.trim_end());
        for &(x, y) in t {
            let _ = writeln!(s, "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"{color}\"/>", frame.px(x), frame.py(tf(y)));
        }
    }
    let labels: Vec<&str> = tracks.iter().map(|(l, _)| l.as_str()).collect();
    legend(&mut s, &labels);
    s.push_str("</svg>\n");
    s
}

pub fn histogram(title: &str, xlabel: &str, values: &[f64], bins: usize) -> String {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let (lo, hi) = finite.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let bins = bins.max(1);
    let (lo, hi) = if finite.is_empty() { (0.0, 1.0) } else if hi - lo < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in &finite {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let frame = Frame::new((lo, hi), (0.0, top));
    let mut s = open(title, &frame, xlabel, "count");
    for (k, &c) in counts.iter().enumerate() {
        let a = frame.px(lo + k as f64 * width);
        let b = frame.px(lo + (k + 1) as f64 * width);
        let y = frame.py(c as f64);
        let _ = writeln!(
            s,
            "<rect x=\"{a:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\" stroke=\"white\"/>",
            b - a,
            frame.py(0.0) - y,
            PALETTE[0]
        );
    }
    s.push_str("</svg>\n");
    s
}
