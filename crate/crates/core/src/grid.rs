//! Scalar functions sampled on uniform periodic grids of the unit torus.
//!
//! One-dimensional grids carry two interpolants: a trigonometric one (exact
//! for band-limited samples) and a periodic cubic spline for everything else.

use crate::trig::reduce;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::TAU;

pub const DEFAULT_RESOLUTION_1D: usize = 256;
pub const DEFAULT_RESOLUTION_2D: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("grid resolution {0} is not a power of two (minimum 4)")]
    NotPowerOfTwo(usize),
    #[error("non-finite grid value at flat index {0}")]
    NonFinite(usize),
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("unsupported grid dimension {0}")]
    BadDimension(usize),
    #[error("grids differ in shape ({0}^{1} vs {2}^{3})")]
    GridMismatch(usize, usize, usize, usize),
}

/// Values over the uniform grid `{i/N}` (dim 1) or `{(i/N, j/N)}` (dim 2,
/// row-major with `i` the first coordinate).
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    dim: usize,
    n: usize,
    values: Vec<f64>,
}

fn check_resolution(n: usize) -> Result<(), GridError> {
    if n < 4 || !n.is_power_of_two() {
        return Err(GridError::NotPowerOfTwo(n));
    }
    Ok(())
}

impl GridFunction {
    pub fn new(dim: usize, n: usize, values: Vec<f64>) -> Result<Self, GridError> {
        if dim != 1 && dim != 2 {
            return Err(GridError::BadDimension(dim));
        }
        check_resolution(n)?;
        let expected = n.pow(dim as u32);
        if values.len() != expected {
            return Err(GridError::LengthMismatch {
                expected,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Self { dim, n, values })
    }

    pub fn new_1d(values: Vec<f64>) -> Result<Self, GridError> {
        let n = values.len();
        Self::new(1, n, values)
    }

    pub fn sample_1d(n: usize, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        check_resolution(n)?;
        Self::new(1, n, (0..n).map(|i| f(i as f64 / n as f64)).collect())
    }

    pub fn sample_2d(n: usize, f: impl Fn(f64, f64) -> f64) -> Result<Self, GridError> {
        check_resolution(n)?;
        let h = 1.0 / n as f64;
        let mut values = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                values.push(f(i as f64 * h, j as f64 * h));
            }
        }
        Self::new(2, n, values)
    }

    pub fn constant(dim: usize, n: usize, c: f64) -> Result<Self, GridError> {
        Self::new(dim, n, vec![c; n.pow(dim as u32)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    pub fn same_shape(&self, other: &GridFunction) -> Result<(), GridError> {
        if self.dim != other.dim || self.n != other.n {
            return Err(GridError::GridMismatch(self.n, self.dim, other.n, other.dim));
        }
        Ok(())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Smallest flat index attaining the minimum.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v < self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64, GridError> {
        self.same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            dim: self.dim,
            n: self.n,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn shifted(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    pub fn negated(&self) -> Self {
        self.map(|v| -v)
    }

    pub fn zip_with(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Result<Self, GridError> {
        self.same_shape(other)?;
        Ok(Self {
            dim: self.dim,
            n: self.n,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Normalised discrete Fourier coefficients (1D only), index = harmonic.
    fn spectrum(&self) -> Vec<Complex<f64>> {
        debug_assert_eq!(self.dim, 1);
        let n = self.n;
        let mut buf: Vec<Complex<f64>> = self.values.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        for c in &mut buf {
            *c /= n as f64;
        }
        buf
    }

    /// True when every harmonic at or above `N/4` is negligible; such samples
    /// are reproduced exactly by their trigonometric interpolant.
    pub fn is_band_limited(&self) -> bool {
        if self.dim != 1 {
            return false;
        }
        let c = self.spectrum();
        let n = self.n;
        let low = (1..n / 4).map(|k| c[k].norm()).fold(0.0, f64::max);
        let high = (n / 4..=n / 2).map(|k| c[k].norm()).fold(0.0, f64::max);
        high <= 1e-11 * low + 1e-14 * (1.0 + c[0].norm())
    }

    /// Trigonometric interpolant if band-limited, periodic cubic spline otherwise.
    pub fn interpolant(&self) -> Result<PeriodicInterpolant, GridError> {
        if self.dim != 1 {
            return Err(GridError::BadDimension(self.dim));
        }
        Ok(if self.is_band_limited() {
            PeriodicInterpolant::Trig(TrigInterpolant::new(self)?)
        } else {
            PeriodicInterpolant::Spline(CubicSpline::new(self)?)
        })
    }

    /// Second central difference `u(i+1) − 2u(i) + u(i−1)` (1D, periodic).
    pub fn second_differences(&self) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| self.values[(i + 1) % n] - 2.0 * self.values[i] + self.values[(i + n - 1) % n])
            .collect()
    }
}

/// Trigonometric interpolation through 1D periodic samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigInterpolant {
    mean: f64,
    /// `(k, a_k, b_k)` for `a_k cos(2πkq) + b_k sin(2πkq)`.
    modes: Vec<(f64, f64, f64)>,
}

impl TrigInterpolant {
    pub fn new(u: &GridFunction) -> Result<Self, GridError> {
        if u.dim != 1 {
            return Err(GridError::BadDimension(u.dim));
        }
        let c = u.spectrum();
        let n = u.n;
        let mut modes = Vec::with_capacity(n / 2);
        for (k, ck) in c.iter().enumerate().take(n / 2).skip(1) {
            // c_k e^{2πikq} + conj: 2 Re(c_k) cos − 2 Im(c_k) sin
            let (a, b) = (2.0 * ck.re, -2.0 * ck.im);
            if a != 0.0 || b != 0.0 {
                modes.push((k as f64, a, b));
            }
        }
        let nyq = c[n / 2].re;
        if nyq != 0.0 {
            modes.push(((n / 2) as f64, nyq, 0.0));
        }
        Ok(Self { mean: c[0].re, modes })
    }

    /// Value and first two derivatives at `q`.
    pub fn eval(&self, q: f64) -> (f64, f64, f64) {
        let qr = reduce(q);
        let (mut v, mut d, mut dd) = (self.mean, 0.0, 0.0);
        for &(k, a, b) in &self.modes {
            let w = TAU * k;
            let (s, c) = (TAU * reduce(k * qr)).sin_cos();
            v += a * c + b * s;
            d += w * (-a * s + b * c);
            dd -= w * w * (a * c + b * s);
        }
        (v, d, dd)
    }
}

/// Periodic cubic spline through 1D samples.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    values: Vec<f64>,
    /// Second derivatives at the knots.
    moments: Vec<f64>,
}

impl CubicSpline {
    pub fn new(u: &GridFunction) -> Result<Self, GridError> {
        if u.dim != 1 {
            return Err(GridError::BadDimension(u.dim));
        }
        let n = u.n;
        let h = u.step();
        // M_{i-1} + 4 M_i + M_{i+1} = 6/h² (y_{i+1} − 2y_i + y_{i−1}) is circulant;
        // its eigenvalues are 4 + 2cos(2πk/N) and never vanish.
        let rhs = u.second_differences();
        let mut buf: Vec<Complex<f64>> = rhs.iter().map(|&r| Complex::new(6.0 * r / (h * h), 0.0)).collect();
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(n).process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            *c /= 4.0 + 2.0 * (TAU * k as f64 / n as f64).cos();
        }
        planner.plan_fft_inverse(n).process(&mut buf);
        let moments = buf.iter().map(|c| c.re / n as f64).collect();
        Ok(Self {
            values: u.values.clone(),
            moments,
        })
    }

    /// Value and first two derivatives at `q`.
    pub fn eval(&self, q: f64) -> (f64, f64, f64) {
        let n = self.values.len();
        let h = 1.0 / n as f64;
        let x = reduce(q) * n as f64;
        let i = (x.floor() as usize).min(n - 1);
        let j = (i + 1) % n;
        let t = x - i as f64;
        let (a, b) = (1.0 - t, t);
        let (yi, yj, mi, mj) = (self.values[i], self.values[j], self.moments[i], self.moments[j]);
        let v = a * yi + b * yj + ((a * a * a - a) * mi + (b * b * b - b) * mj) * h * h / 6.0;
        let d = (yj - yi) / h + ((1.0 - 3.0 * a * a) * mi + (3.0 * b * b - 1.0) * mj) * h / 6.0;
        let dd = a * mi + b * mj;
        (v, d, dd)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PeriodicInterpolant {
    Trig(TrigInterpolant),
    Spline(CubicSpline),
}

impl PeriodicInterpolant {
    pub fn eval(&self, q: f64) -> (f64, f64, f64) {
        match self {
            Self::Trig(t) => t.eval(q),
            Self::Spline(s) => s.eval(q),
        }
    }

    pub fn value(&self, q: f64) -> f64 {
        self.eval(q).0
    }

    pub fn derivative(&self, q: f64) -> f64 {
        self.eval(q).1
    }

    pub fn is_spectral(&self) -> bool {
        matches!(self, Self::Trig(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert_eq!(GridFunction::new_1d(vec![0.0; 12]), Err(GridError::NotPowerOfTwo(12)));
        assert!(matches!(
            GridFunction::new(2, 8, vec![0.0; 8]),
            Err(GridError::LengthMismatch { expected: 64, got: 8 })
        ));
        assert_eq!(GridFunction::new_1d(vec![0.0, 1.0, f64::NAN, 2.0]), Err(GridError::NonFinite(2)));
    }

    #[test]
    fn trig_interpolant_is_exact_for_band_limited_samples() {
        let f = |q: f64| 0.3 + (TAU * q).sin() - 0.2 * (3.0 * TAU * q).cos();
        let u = GridFunction::sample_1d(64, f).unwrap();
        assert!(u.is_band_limited());
        let it = u.interpolant().unwrap();
        assert!(it.is_spectral());
        for k in 0..50 {
            let q = k as f64 * 0.0173 + 0.004;
            let (v, d, dd) = it.eval(q);
            assert!((v - f(q)).abs() < 1e-13);
            let d_exact = TAU * (TAU * q).cos() + 0.6 * TAU * (3.0 * TAU * q).sin();
            assert!((d - d_exact).abs() < 1e-11);
            let dd_exact = -TAU * TAU * (TAU * q).sin() + 1.8 * TAU * TAU * (3.0 * TAU * q).cos();
            assert!((dd - dd_exact).abs() < 1e-9);
        }
    }

    #[test]
    fn spline_interpolates_and_converges() {
        let f = |q: f64| (TAU * q).sin().abs();
        let u = GridFunction::sample_1d(128, f).unwrap();
        assert!(!u.is_band_limited());
        let it = u.interpolant().unwrap();
        for i in 0..128 {
            assert!((it.value(i as f64 / 128.0) - u.values()[i]).abs() < 1e-14);
        }
        let g = |q: f64| (TAU * q).sin().exp();
        let mut errs = Vec::new();
        for n in [32usize, 64] {
            let s = CubicSpline::new(&GridFunction::sample_1d(n, g).unwrap()).unwrap();
            let e = (0..997)
                .map(|k| {
                    let q = k as f64 / 997.0;
                    (s.eval(q).0 - g(q)).abs()
                })
                .fold(0.0, f64::max);
            errs.push(e);
        }
        // fourth order
        assert!(errs[1] < errs[0] / 12.0, "{errs:?}");
    }

    #[test]
    fn spline_derivative_is_continuous_across_knots() {
        let u = GridFunction::sample_1d(16, |q| (q * 7.0).sin()).unwrap();
        let s = CubicSpline::new(&u).unwrap();
        for i in 0..16 {
            let q = i as f64 / 16.0;
            let l = s.eval(q - 1e-12).1;
            let r = s.eval(q + 1e-12).1;
            assert!((l - r).abs() < 1e-6);
        }
    }
}
