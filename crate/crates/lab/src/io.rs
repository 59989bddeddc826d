//! Plain-text serialisation: `,`-separated CSV with a mandatory header,
//! `.` decimals, LF line endings. Floats are written in shortest
//! round-trip form so that reading back is lossless.

use std::fmt::Write as _;
use std::path::Path;

use birkhoff_core::curve::LagrangianCurve;
use birkhoff_core::grid::GridFunction;
use birkhoff_core::lax_oleinik::PotentialMatrix;
use birkhoff_core::spectral::{Base, FiberAxis, SampledFqi};
use serde::{Deserialize, Serialize};

use crate::error::LabError;

pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn parse_f64(s: &str, what: &'static str, line: usize) -> Result<f64, LabError> {
    s.trim().parse().map_err(|_| LabError::Parse {
        what,
        line,
        msg: format!("not a number: {s:?}"),
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), LabError> {
    std::fs::write(path, text).map_err(|e| LabError::io(path, e))
}

fn read_text(path: &Path) -> Result<String, LabError> {
    std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))
}

/// Data rows of a CSV with the given header; `(line number, fields)`.
fn csv_rows<'a>(text: &'a str, header: &str, what: &'static str) -> Result<Vec<(usize, Vec<&'a str>)>, LabError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == header => {}
        _ => {
            return Err(LabError::Parse {
                what,
                line: 1,
                msg: format!("expected header {header:?}"),
            })
        }
    }
    let width = header.split(',').count();
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != width {
            return Err(LabError::Parse {
                what,
                line: i + 1,
                msg: format!("expected {width} fields, got {}", f.len()),
            });
        }
        out.push((i + 1, f));
    }
    Ok(out)
}

pub const CURVE_HEADER: &str = "index,q,p,h";

pub fn curve_csv(curve: &LagrangianCurve) -> String {
    let mut s = String::with_capacity(curve.len() * 48);
    s.push_str(CURVE_HEADER);
    s.push('\n');
    let h = curve.primitive();
    for (i, x) in curve.nodes().iter().enumerate() {
        let hv = h.map(|h| fmt_f64(h[i])).unwrap_or_default();
        let _ = writeln!(s, "{i},{},{},{hv}", fmt_f64(x.q), fmt_f64(x.p));
    }
    s
}

/// Reads a curve CSV. Base coordinates are unwrapped by taking the shortest
/// step between consecutive nodes, which is exact whenever consecutive
/// nodes are less than half a period apart.
pub fn parse_curve_csv(text: &str) -> Result<LagrangianCurve, LabError> {
    let rows = csv_rows(text, CURVE_HEADER, "curve csv")?;
    let mut lifts: Vec<f64> = Vec::with_capacity(rows.len());
    let mut p = Vec::with_capacity(rows.len());
    let mut h = Vec::with_capacity(rows.len());
    let mut has_h = true;
    for (line, f) in &rows {
        let q = parse_f64(f[1], "curve csv", *line)?;
        let lift = match lifts.last() {
            None => q,
            Some(&prev) => prev + shortest_step(prev, q),
        };
        lifts.push(lift);
        p.push(parse_f64(f[2], "curve csv", *line)?);
        if f[3].trim().is_empty() {
            has_h = false;
        } else {
            h.push(parse_f64(f[3], "curve csv", *line)?);
        }
    }
    let winding = match (lifts.first(), lifts.last()) {
        (Some(&a), Some(&b)) => ((b + shortest_step(b, a) - a).round()) as i32,
        _ => 0,
    };
    Ok(LagrangianCurve::new(lifts, p, has_h.then_some(h), winding)?)
}

fn shortest_step(from: f64, to_wrapped: f64) -> f64 {
    let d = (to_wrapped - from).rem_euclid(1.0);
    if d > 0.5 {
        d - 1.0
    } else {
        d
    }
}

pub fn read_curve_csv(path: &Path) -> Result<LagrangianCurve, LabError> {
    parse_curve_csv(&read_text(path)?)
}

pub fn grid_csv(u: &GridFunction) -> String {
    let mut s = String::new();
    if u.dim() == 1 {
        s.push_str("index,q,value\n");
        for (i, v) in u.values().iter().enumerate() {
            let _ = writeln!(s, "{i},{},{}", fmt_f64(u.coord(i)), fmt_f64(*v));
        }
    } else {
        s.push_str("index,q,q2,value\n");
        let n = u.resolution();
        for (k, v) in u.values().iter().enumerate() {
            let _ = writeln!(s, "{k},{},{},{}", fmt_f64(u.coord(k / n)), fmt_f64(u.coord(k % n)), fmt_f64(*v));
        }
    }
    s
}

pub fn parse_grid_csv(text: &str) -> Result<GridFunction, LabError> {
    let two_d = text.lines().next().is_some_and(|h| h.trim_end() == "index,q,q2,value");
    let (header, col) = if two_d { ("index,q,q2,value", 3) } else { ("index,q,value", 2) };
    let rows = csv_rows(text, header, "grid csv")?;
    let values = rows
        .iter()
        .map(|(line, f)| parse_f64(f[col], "grid csv", *line))
        .collect::<Result<Vec<_>, _>>()?;
    if two_d {
        let n = (values.len() as f64).sqrt().round() as usize;
        Ok(GridFunction::new(2, n, values)?)
    } else {
        Ok(GridFunction::new_1d(values)?)
    }
}

/// Rows are sources `y`, columns targets `x`.
pub fn potential_csv(m: &PotentialMatrix) -> String {
    let n = m.resolution();
    let mut s = String::from("source");
    for x in 0..n {
        let _ = write!(s, ",{x}");
    }
    s.push('\n');
    for y in 0..n {
        let _ = write!(s, "{y}");
        for x in 0..n {
            let _ = write!(s, ",{}", fmt_f64(m.get(y, x)));
        }
        s.push('\n');
    }
    s
}

/// Grid description stored next to a sampled generating function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FqiHeader {
    /// Fiber half-widths `R`, one per axis.
    #[serde(rename = "box")]
    pub half_widths: Vec<f64>,
    /// Base resolution (1 for a point base) followed by fiber resolutions.
    pub resolution: Vec<usize>,
    pub signature: String,
    pub c: f64,
}

/// `(csv, sidecar json)` for a sampled generating function.
pub fn fqi_files(s: &SampledFqi) -> Result<(String, String), LabError> {
    let d = s.fiber_dims();
    let mut csv = String::from(if d == 1 { "q_index,xi1_index,value\n" } else { "q_index,xi1_index,xi2_index,value\n" });
    for (k, v) in s.values().iter().enumerate() {
        let (b, idx) = s.coordinates(k);
        let _ = write!(csv, "{b}");
        for i in idx {
            let _ = write!(csv, ",{i}");
        }
        let _ = writeln!(csv, ",{}", fmt_f64(*v));
    }
    let base_len = match s.base() {
        Base::Point => 1,
        Base::Circle(n) => n,
    };
    let mut resolution = vec![base_len];
    resolution.extend(s.axes().iter().map(|a| a.resolution));
    let header = FqiHeader {
        half_widths: s.axes().iter().map(|a| a.half_width).collect(),
        resolution,
        signature: crate::config::signature_text(&s.axes().iter().map(|a| a.sign).collect::<Vec<_>>()),
        c: s.constant(),
    };
    let mut json = serde_json::to_string_pretty(&header)?;
    json.push('\n');
    Ok((csv, json))
}

/// Inverse of [`fqi_files`]; `circle_base` distinguishes a one-point circle
/// grid from a point base.
pub fn parse_fqi(csv: &str, sidecar: &str, circle_base: bool) -> Result<SampledFqi, LabError> {
    let header: FqiHeader = serde_json::from_str(sidecar)?;
    let signs: Vec<i8> = header.signature.split(',').map(|s| if s.trim() == "-" { -1 } else { 1 }).collect();
    let d = signs.len();
    if header.half_widths.len() != d || header.resolution.len() != d + 1 {
        return Err(LabError::Parse {
            what: "fqi header",
            line: 1,
            msg: "box, resolution and signature disagree".into(),
        });
    }
    let head = if d == 1 { "q_index,xi1_index,value" } else { "q_index,xi1_index,xi2_index,value" };
    let rows = csv_rows(csv, head, "fqi csv")?;
    let values = rows
        .iter()
        .map(|(line, f)| parse_f64(f[d + 1], "fqi csv", *line))
        .collect::<Result<Vec<_>, _>>()?;
    let axes = (0..d)
        .map(|i| FiberAxis::with_grid(signs[i], header.half_widths[i], header.resolution[i + 1]))
        .collect();
    let base = if circle_base || header.resolution[0] > 1 { Base::Circle(header.resolution[0]) } else { Base::Point };
    Ok(SampledFqi::new(base, axes, header.c, values)?)
}

pub fn json_text<T: Serialize>(value: &T) -> Result<String, LabError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
