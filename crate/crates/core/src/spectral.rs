//! Spectral invariants and graph selectors of sampled functions quadratic at
//! infinity over a point or a circle, with at most two fiber axes.
//!
//! Supported classes: index 0 (minimum), top index (maximum, by duality) and
//! index 1 (sublevel percolation between the two ends of the negative axis).

use crate::grid::{GridError, GridFunction};
use rayon::prelude::*;
use std::cmp::Ordering;

/// Relative extent of the outer shell that must equal `c + Q`.
pub const SHELL_FRACTION: f64 = 0.1;
pub const SHELL_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_HALF_WIDTH: f64 = 4.0;
pub const DEFAULT_FIBER_RESOLUTION: usize = 129;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error("unsupported index {index} for {fiber_dims} fiber axes")]
    UnsupportedIndex { index: usize, fiber_dims: usize },
    #[error("at most two fiber axes are supported, got {0}")]
    TooManyFiberAxes(usize),
    #[error("fiber resolution {0} must be odd and at least 3")]
    EvenResolution(usize),
    #[error("signature entries must be ±1")]
    BadSignature,
    #[error("expected {expected} samples, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("function is not quadratic at infinity (shell deviation {0:e})")]
    NotQuadraticAtInfinity(f64),
    #[error("base or fiber grids differ")]
    BaseMismatch,
    #[error("operation needs a circle base")]
    NeedsCircleBase,
    #[error("base index {0} out of range")]
    BaseIndex(usize),
    #[error("non-finite sample")]
    NonFinite,
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Base {
    Point,
    /// Uniform periodic grid with `n` samples on the unit circle.
    Circle(usize),
}

impl Base {
    pub fn len(self) -> usize {
        match self {
            Base::Point => 1,
            Base::Circle(n) => n,
        }
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    pub fn coord(self, i: usize) -> f64 {
        match self {
            Base::Point => 0.0,
            Base::Circle(n) => i as f64 / n as f64,
        }
    }
}

/// One fiber axis: samples `−R + 2R·i/(M−1)`, `i = 0..M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberAxis {
    pub half_width: f64,
    pub resolution: usize,
    /// `+1` or `−1` in the quadratic form at infinity.
    pub sign: i8,
}

impl FiberAxis {
    pub fn new(sign: i8) -> Self {
        Self {
            half_width: DEFAULT_HALF_WIDTH,
            resolution: DEFAULT_FIBER_RESOLUTION,
            sign,
        }
    }

    pub fn with_grid(sign: i8, half_width: f64, resolution: usize) -> Self {
        Self {
            half_width,
            resolution,
            sign,
        }
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / (self.resolution - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.step()
    }

    fn in_shell(&self, i: usize) -> bool {
        self.coord(i).abs() >= (1.0 - SHELL_FRACTION) * self.half_width - 1e-12
    }

    fn negated(self) -> Self {
        Self { sign: -self.sign, ..self }
    }
}

/// Function quadratic at infinity sampled on base × fiber box.
///
/// Layout: base index outermost, then fiber axes in order (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFqi {
    base: Base,
    axes: Vec<FiberAxis>,
    constant: f64,
    values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certificate {
    GlobalMin,
    GlobalMax,
    PercolationThreshold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralValue {
    pub value: f64,
    pub certificate: Certificate,
    /// Flat sample index realising the value.
    pub witness: usize,
}

impl SampledFqi {
    fn check_axes(axes: &[FiberAxis]) -> Result<(), SpectralError> {
        if axes.len() > 2 {
            return Err(SpectralError::TooManyFiberAxes(axes.len()));
        }
        for a in axes {
            if a.resolution < 3 || a.resolution % 2 == 0 {
                return Err(SpectralError::EvenResolution(a.resolution));
            }
            if a.sign != 1 && a.sign != -1 {
                return Err(SpectralError::BadSignature);
            }
        }
        Ok(())
    }

    /// Wraps raw samples, validating the outer shell against `c + Q`.
    pub fn new(base: Base, axes: Vec<FiberAxis>, constant: f64, values: Vec<f64>) -> Result<Self, SpectralError> {
        Self::check_axes(&axes)?;
        let s = Self {
            base,
            axes,
            constant,
            values,
        };
        if s.values.len() != s.total_len() {
            return Err(SpectralError::ShapeMismatch {
                expected: s.total_len(),
                got: s.values.len(),
            });
        }
        if s.values.iter().any(|v| !v.is_finite()) {
            return Err(SpectralError::NonFinite);
        }
        let dev = s.shell_deviation();
        if dev > SHELL_TOLERANCE {
            return Err(SpectralError::NotQuadraticAtInfinity(dev));
        }
        Ok(s)
    }

    /// Samples `f(q, ξ)` and overwrites the outer shell with `c + Q(ξ)`.
    pub fn from_fn(
        base: Base,
        axes: Vec<FiberAxis>,
        constant: f64,
        f: impl Fn(f64, &[f64]) -> f64 + Sync,
    ) -> Result<Self, SpectralError> {
        Self::check_axes(&axes)?;
        let mut s = Self {
            base,
            axes,
            constant,
            values: Vec::new(),
        };
        let total = s.total_len();
        let values: Vec<f64> = (0..total)
            .into_par_iter()
            .map(|k| {
                let (b, idx) = s.split(k);
                let xi: Vec<f64> = idx.iter().zip(&s.axes).map(|(&i, a)| a.coord(i)).collect();
                if s.in_shell(&idx) {
                    s.at_infinity(&xi)
                } else {
                    f(s.base.coord(b), &xi)
                }
            })
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SpectralError::NonFinite);
        }
        s.values = values;
        Ok(s)
    }

    pub fn base(&self) -> Base {
        self.base
    }

    pub fn axes(&self) -> &[FiberAxis] {
        &self.axes
    }

    pub fn fiber_dims(&self) -> usize {
        self.axes.len()
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of negative entries of the quadratic form.
    pub fn index(&self) -> usize {
        self.axes.iter().filter(|a| a.sign < 0).count()
    }

    pub fn fiber_len(&self) -> usize {
        self.axes.iter().map(|a| a.resolution).product()
    }

    fn total_len(&self) -> usize {
        self.base.len() * self.fiber_len()
    }

    /// Largest sample spacing in the base and fiber directions.
    pub fn grid_step(&self) -> f64 {
        let b = match self.base {
            Base::Point => 0.0,
            Base::Circle(n) => 1.0 / n as f64,
        };
        self.axes.iter().map(FiberAxis::step).fold(b, f64::max)
    }

    fn split(&self, k: usize) -> (usize, Vec<usize>) {
        let fl = self.fiber_len();
        let (b, mut r) = (k / fl, k % fl);
        let mut idx = vec![0; self.axes.len()];
        for (j, a) in self.axes.iter().enumerate().rev() {
            idx[j] = r % a.resolution;
            r /= a.resolution;
        }
        (b, idx)
    }

    /// Base index and fiber indices of a flat sample index.
    pub fn coordinates(&self, k: usize) -> (usize, Vec<usize>) {
        self.split(k)
    }

    fn in_shell(&self, idx: &[usize]) -> bool {
        idx.iter().zip(&self.axes).any(|(&i, a)| a.in_shell(i))
    }

    fn at_infinity(&self, xi: &[f64]) -> f64 {
        self.constant + xi.iter().zip(&self.axes).map(|(x, a)| a.sign as f64 * x * x).sum::<f64>()
    }

    /// `max |S − (c + Q)|` over the outer shell.
    pub fn shell_deviation(&self) -> f64 {
        (0..self.values.len())
            .filter_map(|k| {
                let (_, idx) = self.split(k);
                if !self.in_shell(&idx) {
                    return None;
                }
                let xi: Vec<f64> = idx.iter().zip(&self.axes).map(|(&i, a)| a.coord(i)).collect();
                Some((self.values[k] - self.at_infinity(&xi)).abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn negated(&self) -> Self {
        Self {
            base: self.base,
            axes: self.axes.iter().map(|a| a.negated()).collect(),
            constant: -self.constant,
            values: self.values.iter().map(|v| -v).collect(),
        }
    }

    /// `S + δ` with the perturbation sampled at every point (shell included).
    pub fn perturbed(&self, delta: &[f64]) -> Result<Self, SpectralError> {
        if delta.len() != self.values.len() {
            return Err(SpectralError::ShapeMismatch {
                expected: self.values.len(),
                got: delta.len(),
            });
        }
        let mut s = self.clone();
        for (v, d) in s.values.iter_mut().zip(delta) {
            *v += d;
        }
        Ok(s)
    }

    /// `S₁ ⊕ S₂ (q, ξ, η) = S₁(q, ξ) + S₂(q, η)` on the product fiber.
    pub fn direct_sum(&self, other: &SampledFqi) -> Result<Self, SpectralError> {
        if self.base != other.base {
            return Err(SpectralError::BaseMismatch);
        }
        let mut axes = self.axes.clone();
        axes.extend(other.axes.iter().copied());
        Self::check_axes(&axes)?;
        let (f1, f2) = (self.fiber_len(), other.fiber_len());
        let mut values = Vec::with_capacity(self.base.len() * f1 * f2);
        for b in 0..self.base.len() {
            for i in 0..f1 {
                let a = self.values[b * f1 + i];
                values.extend(other.values[b * f2..(b + 1) * f2].iter().map(|v| a + v));
            }
        }
        Ok(Self {
            base: self.base,
            axes,
            constant: self.constant + other.constant,
            values,
        })
    }

    /// `S₁ ⊖ S₂ = S₁ ⊕ (−S₂)`.
    pub fn difference(&self, other: &SampledFqi) -> Result<Self, SpectralError> {
        self.direct_sum(&other.negated())
    }

    /// Restriction to the fiber over base index `b` (a point-based function).
    pub fn fiber(&self, b: usize) -> Result<Self, SpectralError> {
        if b >= self.base.len() {
            return Err(SpectralError::BaseIndex(b));
        }
        let fl = self.fiber_len();
        Ok(Self {
            base: Base::Point,
            axes: self.axes.clone(),
            constant: self.constant,
            values: self.values[b * fl..(b + 1) * fl].to_vec(),
        })
    }

    fn shape(&self) -> (Vec<usize>, Vec<bool>) {
        let mut dims = Vec::with_capacity(3);
        let mut periodic = Vec::with_capacity(3);
        if let Base::Circle(n) = self.base {
            dims.push(n);
            periodic.push(true);
        }
        for a in &self.axes {
            dims.push(a.resolution);
            periodic.push(false);
        }
        (dims, periodic)
    }

    /// Axis-neighbour flat indices of `k`.
    fn neighbours(dims: &[usize], periodic: &[bool], k: usize, out: &mut Vec<usize>) {
        out.clear();
        let mut stride = 1;
        for ax in (0..dims.len()).rev() {
            let m = dims[ax];
            let i = (k / stride) % m;
            if i + 1 < m {
                out.push(k + stride);
            } else if periodic[ax] && m > 1 {
                out.push(k + stride - m * stride);
            }
            if i > 0 {
                out.push(k - stride);
            } else if periodic[ax] && m > 1 {
                out.push(k + (m - 1) * stride);
            }
            stride *= m;
        }
    }

    /// Grid-local critical values: samples that are extremal (or flat) along
    /// every axis.
    pub fn grid_critical_values(&self) -> Vec<f64> {
        let (dims, periodic) = self.shape();
        (0..self.values.len())
            .filter(|&k| grid_critical_kind(&self.values, &dims, &periodic, k).is_some())
            .map(|k| self.values[k])
            .collect()
    }

    /// Oscillation of `S` over its grid-critical locus.
    pub fn critical_oscillation(&self) -> f64 {
        let c = self.grid_critical_values();
        let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
        if c.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }

    /// Whether the witness of `v` is a grid-local critical point of the
    /// kind its certificate claims.
    pub fn witness_is_critical(&self, v: &SpectralValue) -> bool {
        let (dims, periodic) = self.shape();
        let Some(signs) = grid_critical_kind(&self.values, &dims, &periodic, v.witness) else {
            return false;
        };
        match v.certificate {
            Certificate::GlobalMin => signs.iter().all(|&s| s >= 0),
            Certificate::GlobalMax => signs.iter().all(|&s| s <= 0),
            Certificate::PercolationThreshold => true,
        }
    }
}

/// Per-axis classification at `k`: `1` local min, `−1` local max, `0` flat
/// or one-sided; `None` if some axis is strictly monotone through `k`.
fn grid_critical_kind(values: &[f64], dims: &[usize], periodic: &[bool], k: usize) -> Option<Vec<i8>> {
    let mut stride = 1;
    let mut out = Vec::with_capacity(dims.len());
    let v = values[k];
    for ax in (0..dims.len()).rev() {
        let m = dims[ax];
        let i = (k / stride) % m;
        let up = if i + 1 < m {
            Some(values[k + stride])
        } else if periodic[ax] {
            Some(values[k + stride - m * stride])
        } else {
            None
        };
        let down = if i > 0 {
            Some(values[k - stride])
        } else if periodic[ax] {
            Some(values[k + (m - 1) * stride])
        } else {
            None
        };
        let kind = match (down, up) {
            (Some(d), Some(u)) => {
                if d >= v && u >= v {
                    1
                } else if d <= v && u <= v {
                    -1
                } else {
                    return None;
                }
            }
            // boundary of the fiber box: not a critical point of an fqi
            _ => return None,
        };
        out.push(kind);
        stride *= m;
    }
    out.reverse();
    Some(out)
}

struct DisjointSets {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] as usize != x {
            let p = self.parent[x] as usize;
            self.parent[x] = self.parent[p];
            x = p;
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        match self.rank[a].cmp(&self.rank[b]) {
            Ordering::Less => self.parent[a] = b as u32,
            Ordering::Greater => self.parent[b] = a as u32,
            Ordering::Equal => {
                self.parent[b] = a as u32;
                self.rank[a] += 1;
            }
        }
    }
}

fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Smallest sampled level whose sublevel joins the two ends of the negative
/// axis; cells are inserted in (value, index) order.
fn percolation(s: &SampledFqi) -> SpectralValue {
    let (dims, periodic) = s.shape();
    let neg = s.axes.iter().position(|a| a.sign < 0).expect("index-1 function");
    let neg_axis = s.axes[neg];
    let stride: usize = s.axes[neg + 1..].iter().map(|a| a.resolution).product();
    let n = s.values.len();
    let (low, high) = (n, n + 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s.values[a].total_cmp(&s.values[b]).then(a.cmp(&b)));
    let mut sets = DisjointSets::new(n + 2);
    let mut active = vec![false; n];
    let mut nb = Vec::with_capacity(6);
    for &k in &order {
        active[k] = true;
        let i = (k / stride) % neg_axis.resolution;
        if neg_axis.in_shell(i) {
            sets.union(k, if neg_axis.coord(i) < 0.0 { low } else { high });
        }
        SampledFqi::neighbours(&dims, &periodic, k, &mut nb);
        for &j in &nb {
            if active[j] {
                sets.union(k, j);
            }
        }
        if sets.find(low) == sets.find(high) {
            return SpectralValue {
                value: s.values[k],
                certificate: Certificate::PercolationThreshold,
                witness: k,
            };
        }
    }
    unreachable!("the full grid connects both ends")
}

/// `c(1, S)`: minimum for index 0, percolation threshold for index 1.
pub fn spectral_unit(s: &SampledFqi) -> Result<SpectralValue, SpectralError> {
    match s.index() {
        0 => {
            let k = argmin(&s.values);
            Ok(SpectralValue {
                value: s.values[k],
                certificate: Certificate::GlobalMin,
                witness: k,
            })
        }
        1 => Ok(percolation(s)),
        m => Err(SpectralError::UnsupportedIndex {
            index: m,
            fiber_dims: s.fiber_dims(),
        }),
    }
}

/// `c(μ, S) = −c(1, −S)`.
pub fn spectral_top(s: &SampledFqi) -> Result<SpectralValue, SpectralError> {
    let v = spectral_unit(&s.negated())?;
    Ok(SpectralValue {
        value: -v.value,
        certificate: match v.certificate {
            Certificate::GlobalMin => Certificate::GlobalMax,
            c => c,
        },
        witness: v.witness,
    })
}

/// `u_S(q) = c(α_q, S_q)` on the fiber over base index `b`.
///
/// Mixed signatures in two fiber axes percolate along the second axis when
/// it is the negative one, and otherwise go through `−S`, so that
/// `u_{−S} = −u_S` holds bitwise.
pub fn fiber_selector(s: &SampledFqi, b: usize) -> Result<f64, SpectralError> {
    let f = s.fiber(b)?;
    let d = f.fiber_dims();
    let m = f.index();
    if m == 0 {
        return Ok(f.values.iter().copied().fold(f64::INFINITY, f64::min));
    }
    if m == d {
        return Ok(f.values.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    if d == 2 && m == 1 {
        return Ok(if f.axes[1].sign < 0 {
            percolation(&f).value
        } else {
            -percolation(&f.negated()).value
        });
    }
    Err(SpectralError::UnsupportedIndex { index: m, fiber_dims: d })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectorFunction {
    pub values: GridFunction,
    /// `max |u(i+1) − u(i)| / step` over the periodic base grid.
    pub lipschitz: f64,
    pub unit: f64,
    pub top: f64,
    /// `c(1, S) ≤ u_S ≤ c(μ, S)` within two grid steps.
    pub bounds_hold: bool,
}

pub fn selector_function(s: &SampledFqi) -> Result<SelectorFunction, SpectralError> {
    let Base::Circle(n) = s.base else {
        return Err(SpectralError::NeedsCircleBase);
    };
    let vals = (0..n)
        .into_par_iter()
        .map(|b| fiber_selector(s, b))
        .collect::<Result<Vec<_>, _>>()?;
    let lipschitz = (0..n)
        .map(|i| (vals[(i + 1) % n] - vals[i]).abs() * n as f64)
        .fold(0.0, f64::max);
    let unit = spectral_unit(s)?.value;
    let top = spectral_top(s)?.value;
    let tol = 2.0 * s.grid_step();
    let bounds_hold = vals.iter().all(|&u| unit <= u + tol && u <= top + tol);
    Ok(SelectorFunction {
        values: GridFunction::new_1d(vals)?,
        lipschitz,
        unit,
        top,
        bounds_hold,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdditivityReport {
    pub sum_selector: f64,
    pub first: f64,
    pub second: f64,
    /// `|u_{S₁⊕S₂} − u_{S₁} − u_{S₂}|`.
    pub defect: f64,
    pub tolerance: f64,
    pub holds: bool,
}

pub fn sum_additivity_check(s1: &SampledFqi, s2: &SampledFqi, b: usize) -> Result<AdditivityReport, SpectralError> {
    let sum = s1.fiber(b)?.direct_sum(&s2.fiber(b)?)?;
    let sum_selector = fiber_selector(&sum, 0)?;
    let first = fiber_selector(s1, b)?;
    let second = fiber_selector(s2, b)?;
    let defect = (sum_selector - first - second).abs();
    let tolerance = 2.0 * sum.grid_step();
    Ok(AdditivityReport {
        sum_selector,
        first,
        second,
        defect,
        tolerance,
        holds: defect <= tolerance,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceBoundsReport {
    pub unit: f64,
    pub top: f64,
    pub min_difference: f64,
    pub max_difference: f64,
    /// `min(u₁ − u₂) − c(1, S₁ ⊖ S₂)`; nonnegative when the bound holds.
    pub lower_slack: f64,
    /// `c(μ, S₁ ⊖ S₂) − max(u₁ − u₂)`.
    pub upper_slack: f64,
    pub tolerance: f64,
    pub holds: bool,
}

pub fn selector_difference_bounds(s1: &SampledFqi, s2: &SampledFqi) -> Result<DifferenceBoundsReport, SpectralError> {
    let u1 = selector_function(s1)?.values;
    let u2 = selector_function(s2)?.values;
    let diff = u1.zip_with(&u2, |a, b| a - b)?;
    let d = s1.difference(s2)?;
    let unit = spectral_unit(&d)?.value;
    let top = spectral_top(&d)?.value;
    let tolerance = 2.0 * d.grid_step();
    let lower_slack = diff.min() - unit;
    let upper_slack = top - diff.max();
    Ok(DifferenceBoundsReport {
        unit,
        top,
        min_difference: diff.min(),
        max_difference: diff.max(),
        lower_slack,
        upper_slack,
        tolerance,
        holds: lower_slack >= -tolerance && upper_slack >= -tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(signs: &[i8]) -> SampledFqi {
        let axes = signs.iter().map(|&s| FiberAxis::with_grid(s, 4.0, 33)).collect();
        SampledFqi::from_fn(Base::Point, axes, 0.0, |_, xi| {
            xi.iter().zip(signs).map(|(x, &s)| s as f64 * x * x).sum()
        })
        .unwrap()
    }

    #[test]
    fn pure_quadratics_are_zero() {
        assert_eq!(spectral_unit(&quad(&[1])).unwrap().value, 0.0);
        assert_eq!(spectral_unit(&quad(&[1, -1])).unwrap().value, 0.0);
        assert_eq!(spectral_top(&quad(&[-1])).unwrap().value, 0.0);
        assert_eq!(spectral_top(&quad(&[1, -1])).unwrap().value, 0.0);
    }

    #[test]
    fn unsupported_indices() {
        assert!(matches!(
            spectral_unit(&quad(&[-1, -1])),
            Err(SpectralError::UnsupportedIndex { index: 2, .. })
        ));
        assert!(matches!(
            spectral_top(&quad(&[1, 1])),
            Err(SpectralError::UnsupportedIndex { .. })
        ));
    }

    #[test]
    fn raw_samples_are_validated() {
        let axes = vec![FiberAxis::with_grid(1, 1.0, 5)];
        let bad = SampledFqi::new(Base::Point, axes.clone(), 0.0, vec![0.0; 5]);
        assert!(matches!(bad, Err(SpectralError::NotQuadraticAtInfinity(_))));
        let good = SampledFqi::new(Base::Point, axes, 0.0, vec![1.0, 0.25, 0.0, 0.25, 1.0]).unwrap();
        assert_eq!(spectral_unit(&good).unwrap().witness, 2);
        let even = SampledFqi::new(Base::Point, vec![FiberAxis::with_grid(1, 1.0, 4)], 0.0, vec![0.0; 4]);
        assert!(matches!(even, Err(SpectralError::EvenResolution(4))));
    }

    #[test]
    fn coordinates_round_trip() {
        let s = SampledFqi::from_fn(
            Base::Circle(4),
            vec![FiberAxis::with_grid(1, 1.0, 3), FiberAxis::with_grid(-1, 1.0, 5)],
            0.0,
            |_, _| 0.0,
        )
        .unwrap();
        assert_eq!(s.coordinates(0), (0, vec![0, 0]));
        assert_eq!(s.coordinates(15 + 7), (1, vec![1, 2]));
    }
}
