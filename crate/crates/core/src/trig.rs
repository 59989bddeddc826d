//! Finite trigonometric polynomials on the (time × space) torus.
//!
//! A [`TrigSeries`] is a finite sum
//! `Σ a·cos(2π(j·t + k·q)) + b·sin(2π(j·t + k·q))`
//! and is exactly 1-periodic in both arguments. Arguments are reduced to
//! `[0, 1)` before the phase is formed, so that dyadic shifts by whole
//! periods evaluate to identical bits.

use std::f64::consts::TAU;

/// Default maximal harmonic accepted in either direction.
pub const DEFAULT_MAX_HARMONIC: i32 = 8;

/// One harmonic `a·cos(2π(j t + k q)) + b·sin(2π(j t + k q))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrigTerm {
    pub time_harmonic: i32,
    pub space_harmonic: i32,
    pub cos: f64,
    pub sin: f64,
}

impl TrigTerm {
    pub fn new(time_harmonic: i32, space_harmonic: i32, cos: f64, sin: f64) -> Self {
        Self {
            time_harmonic,
            space_harmonic,
            cos,
            sin,
        }
    }

    /// Time-independent harmonic in `q`.
    pub fn spatial(space_harmonic: i32, cos: f64, sin: f64) -> Self {
        Self::new(0, space_harmonic, cos, sin)
    }
}

/// Value and derivatives up to second order of a series at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub dt: f64,
    pub dq: f64,
    pub dtt: f64,
    pub dtq: f64,
    pub dqq: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrigSeries {
    terms: Vec<TrigTerm>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrigError {
    #[error("harmonic ({0}, {1}) exceeds the declared maximum {2}")]
    HarmonicTooLarge(i32, i32, i32),
    #[error("non-finite coefficient in harmonic ({0}, {1})")]
    NonFinite(i32, i32),
}

#[inline]
pub(crate) fn reduce(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid may round up to exactly 1.0 for tiny negative inputs
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl TrigSeries {
    pub fn zero() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn new(terms: Vec<TrigTerm>) -> Result<Self, TrigError> {
        Self::with_max_harmonic(terms, DEFAULT_MAX_HARMONIC)
    }

    pub fn with_max_harmonic(terms: Vec<TrigTerm>, max_harmonic: i32) -> Result<Self, TrigError> {
        for t in &terms {
            if t.time_harmonic.abs() > max_harmonic || t.space_harmonic.abs() > max_harmonic {
                return Err(TrigError::HarmonicTooLarge(
                    t.time_harmonic,
                    t.space_harmonic,
                    max_harmonic,
                ));
            }
            if !t.cos.is_finite() || !t.sin.is_finite() {
                return Err(TrigError::NonFinite(t.time_harmonic, t.space_harmonic));
            }
        }
        Ok(Self { terms })
    }

    /// Series in `q` only, from cosine and sine coefficient lists starting
    /// at harmonic 1 (`cos[0]` multiplies `cos(2πq)`).
    pub fn spatial(constant: f64, cos: &[f64], sin: &[f64]) -> Result<Self, TrigError> {
        let n = cos.len().max(sin.len());
        let mut terms = Vec::with_capacity(n + 1);
        if constant != 0.0 {
            terms.push(TrigTerm::spatial(0, constant, 0.0));
        }
        for k in 0..n {
            let a = cos.get(k).copied().unwrap_or(0.0);
            let b = sin.get(k).copied().unwrap_or(0.0);
            if a != 0.0 || b != 0.0 {
                terms.push(TrigTerm::spatial(k as i32 + 1, a, b));
            }
        }
        Self::with_max_harmonic(terms, i32::MAX)
    }

    pub fn terms(&self) -> &[TrigTerm] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.cos == 0.0 && t.sin == 0.0)
    }

    pub fn is_time_independent(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.time_harmonic == 0 || (t.cos == 0.0 && t.sin == 0.0))
    }

    pub fn is_space_independent(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.space_harmonic == 0 || (t.cos == 0.0 && t.sin == 0.0))
    }

    pub fn max_space_harmonic(&self) -> i32 {
        self.terms
            .iter()
            .map(|t| t.space_harmonic.abs())
            .max()
            .unwrap_or(0)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| TrigTerm {
                    cos: t.cos * factor,
                    sin: t.sin * factor,
                    ..*t
                })
                .collect(),
        }
    }

    pub fn plus(&self, other: &TrigSeries) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Self { terms }
    }

    /// Freeze the time argument, giving a series in `q` only.
    pub fn at_time(&self, t: f64) -> Self {
        let tr = reduce(t);
        let terms = self
            .terms
            .iter()
            .map(|term| {
                let (s, c) = (TAU * reduce(term.time_harmonic as f64 * tr)).sin_cos();
                // a cos(x+y) + b sin(x+y) with x = 2π j t
                let a = term.cos * c + term.sin * s;
                let b = term.sin * c - term.cos * s;
                TrigTerm::new(0, term.space_harmonic, a, b)
            })
            .collect();
        Self { terms }
    }

    #[inline]
    fn phase(term: &TrigTerm, tr: f64, qr: f64) -> f64 {
        let arg = term.time_harmonic as f64 * tr + term.space_harmonic as f64 * qr;
        TAU * reduce(arg)
    }

    pub fn value(&self, t: f64, q: f64) -> f64 {
        let (tr, qr) = (reduce(t), reduce(q));
        self.terms
            .iter()
            .map(|term| {
                let (s, c) = Self::phase(term, tr, qr).sin_cos();
                term.cos * c + term.sin * s
            })
            .sum()
    }

    /// Mixed partial derivative of order `a` in `t` and `b` in `q`.
    pub fn derivative(&self, t: f64, q: f64, a: u32, b: u32) -> f64 {
        let (tr, qr) = (reduce(t), reduce(q));
        let n = (a + b) % 4;
        self.terms
            .iter()
            .map(|term| {
                let factor = (TAU * term.time_harmonic as f64).powi(a as i32)
                    * (TAU * term.space_harmonic as f64).powi(b as i32);
                if factor == 0.0 {
                    return 0.0;
                }
                let (s, c) = Self::phase(term, tr, qr).sin_cos();
                // d^n/dθ^n of (A cos θ + B sin θ)
                let v = match n {
                    0 => term.cos * c + term.sin * s,
                    1 => -term.cos * s + term.sin * c,
                    2 => -term.cos * c - term.sin * s,
                    _ => term.cos * s - term.sin * c,
                };
                factor * v
            })
            .sum()
    }

    pub fn jet(&self, t: f64, q: f64) -> Jet {
        let (tr, qr) = (reduce(t), reduce(q));
        let mut j = Jet::default();
        for term in &self.terms {
            let (s, c) = Self::phase(term, tr, qr).sin_cos();
            let wt = TAU * term.time_harmonic as f64;
            let wq = TAU * term.space_harmonic as f64;
            let v0 = term.cos * c + term.sin * s;
            let v1 = -term.cos * s + term.sin * c;
            j.value += v0;
            j.dt += wt * v1;
            j.dq += wq * v1;
            j.dtt -= wt * wt * v0;
            j.dtq -= wt * wq * v0;
            j.dqq -= wq * wq * v0;
        }
        j
    }

    /// Maximum absolute value bound `Σ |a| + |b|`.
    pub fn sup_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.cos.abs() + t.sin.abs()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TrigSeries {
        TrigSeries::new(vec![
            TrigTerm::new(0, 0, 0.3, 0.0),
            TrigTerm::new(1, 1, 0.2, -0.1),
            TrigTerm::new(0, 2, 0.05, 0.4),
            TrigTerm::new(-2, 1, 0.0, 0.07),
        ])
        .unwrap()
    }

    #[test]
    fn periodic_bitwise_on_dyadic_points() {
        let s = sample();
        for i in 0..32 {
            for j in 0..32 {
                let t = i as f64 / 32.0;
                let q = j as f64 / 64.0;
                let v = s.value(t, q);
                assert_eq!(v.to_bits(), s.value(t + 1.0, q).to_bits());
                assert_eq!(v.to_bits(), s.value(t, q + 1.0).to_bits());
                assert_eq!(v.to_bits(), s.value(t - 3.0, q - 2.0).to_bits());
            }
        }
    }

    #[test]
    fn jet_matches_finite_differences() {
        let s = sample();
        let (t, q) = (0.37, 0.81);
        let j = s.jet(t, q);
        let e = 1e-5;
        let fd_t = (s.value(t + e, q) - s.value(t - e, q)) / (2.0 * e);
        let fd_q = (s.value(t, q + e) - s.value(t, q - e)) / (2.0 * e);
        assert!((j.dt - fd_t).abs() < 1e-7);
        assert!((j.dq - fd_q).abs() < 1e-7);
        assert!((j.dqq - s.derivative(t, q, 0, 2)).abs() < 1e-12);
        assert!((j.dtq - s.derivative(t, q, 1, 1)).abs() < 1e-12);
        assert!((j.dtt - s.derivative(t, q, 2, 0)).abs() < 1e-12);
        assert!((j.value - s.value(t, q)).abs() < 1e-15);
    }

    #[test]
    fn freezing_time_preserves_values() {
        let s = sample();
        let frozen = s.at_time(0.23);
        for k in 0..10 {
            let q = k as f64 * 0.1 + 0.01;
            assert!((frozen.value(0.9, q) - s.value(0.23, q)).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_large_harmonics() {
        let r = TrigSeries::new(vec![TrigTerm::spatial(9, 1.0, 0.0)]);
        assert!(matches!(r, Err(TrigError::HarmonicTooLarge(0, 9, 8))));
    }
}
