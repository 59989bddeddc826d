//! Time-periodic Tonelli Hamiltonians on `T*T¹` and their Lagrangians.
//!
//! Three families are supported:
//!
//! * `Mechanical`: `H = ½·k·p² + V(t,q) + c`.
//! * `ShiftedQuadratic`: with `P = p − ∂_q u*(t,q)`,
//!   `H = ½P² + ω·P − ∂_t u*(t,q) + c`. The profile `u*` solves
//!   `∂_t u + H(t, q, ∂_q u) = c` exactly, which makes this family the
//!   source of manufactured invariant graphs.
//! * `Custom`: any smooth closure, strictly convex in `p`, with a declared
//!   momentum search box. Derivatives are taken by finite differences.

use std::fmt;
use std::sync::Arc;

use crate::trig::TrigSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Mechanical,
    ShiftedQuadratic,
    Custom,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Mechanical => "mechanical",
            Family::ShiftedQuadratic => "shifted_quadratic",
            Family::Custom => "custom",
        }
    }
}

type HamFn = dyn Fn(f64, f64, f64) -> f64 + Send + Sync;

/// User-supplied Hamiltonian. Must be smooth and strictly convex in `p`.
#[derive(Clone)]
pub struct CustomHamiltonian {
    name: String,
    func: Arc<HamFn>,
    momentum_box: (f64, f64),
    autonomous: bool,
}

impl CustomHamiltonian {
    pub fn new<F>(name: impl Into<String>, momentum_box: (f64, f64), func: F) -> Self
    where
        F: Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            func: Arc::new(func),
            momentum_box,
            autonomous: false,
        }
    }

    /// Declare that the closure does not depend on `t`.
    pub fn autonomous(mut self) -> Self {
        self.autonomous = true;
        self
    }
}

impl fmt::Debug for CustomHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomHamiltonian")
            .field("name", &self.name)
            .field("momentum_box", &self.momentum_box)
            .field("autonomous", &self.autonomous)
            .finish()
    }
}

#[derive(Debug, Clone)]
enum Model {
    Mechanical { kinetic: f64, potential: TrigSeries },
    Shifted { shift: TrigSeries, drift: f64 },
    Custom(CustomHamiltonian),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HamiltonianError {
    #[error("kinetic coefficient must be positive and finite, got {0}")]
    BadKinetic(f64),
    #[error("Legendre maximizer not found at (t={t}, q={q}, v={v})")]
    MaximizerNotFound { t: f64, q: f64, v: f64 },
    #[error("convexity violated: d²H/dp² = {value} at (t={t}, q={q}, p={p})")]
    ConvexityViolation { t: f64, q: f64, p: f64, value: f64 },
    #[error("invalid momentum box [{0}, {1}]")]
    BadMomentumBox(f64, f64),
}

#[derive(Debug, Clone)]
pub struct TonelliHamiltonian {
    model: Model,
    offset: f64,
}

/// First-order data of `H` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials {
    pub value: f64,
    pub dp: f64,
    pub dq: f64,
    pub dt: f64,
}

/// Value of `L(t,q,v) = sup_p (p·v − H)` together with its maximizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LagrangianFnValue {
    pub value: f64,
    pub optimal_momentum: f64,
}

const NEWTON_BUDGET: usize = 50;
const NEWTON_TOL: f64 = 1e-12;

impl TonelliHamiltonian {
    pub fn mechanical(kinetic: f64, potential: TrigSeries, offset: f64) -> Result<Self, HamiltonianError> {
        if !(kinetic > 0.0 && kinetic.is_finite()) {
            return Err(HamiltonianError::BadKinetic(kinetic));
        }
        Ok(Self {
            model: Model::Mechanical { kinetic, potential },
            offset,
        })
    }

    pub fn shifted_quadratic(shift: TrigSeries, drift: f64, offset: f64) -> Self {
        Self {
            model: Model::Shifted { shift, drift },
            offset,
        }
    }

    pub fn custom(custom: CustomHamiltonian) -> Result<Self, HamiltonianError> {
        let (lo, hi) = custom.momentum_box;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(HamiltonianError::BadMomentumBox(lo, hi));
        }
        Ok(Self {
            model: Model::Custom(custom),
            offset: 0.0,
        })
    }

    /// `H = ½p²`.
    pub fn free() -> Self {
        Self::mechanical(1.0, TrigSeries::zero(), 0.0).expect("unit kinetic")
    }

    /// `H = ½p² + cos(2πq)`.
    pub fn pendulum() -> Self {
        let v = TrigSeries::spatial(0.0, &[1.0], &[]).expect("harmonic 1");
        Self::mechanical(1.0, v, 0.0).expect("unit kinetic")
    }

    /// Same Hamiltonian plus a constant.
    pub fn shifted_by(&self, c: f64) -> Self {
        let mut out = self.clone();
        match &mut out.model {
            Model::Custom(custom) => {
                let f = custom.func.clone();
                custom.func = Arc::new(move |t, q, p| f(t, q, p) + c);
            }
            _ => out.offset += c,
        }
        out
    }

    pub fn family(&self) -> Family {
        match self.model {
            Model::Mechanical { .. } => Family::Mechanical,
            Model::Shifted { .. } => Family::ShiftedQuadratic,
            Model::Custom(_) => Family::Custom,
        }
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn kinetic(&self) -> Option<f64> {
        match self.model {
            Model::Mechanical { kinetic, .. } => Some(kinetic),
            _ => None,
        }
    }

    pub fn potential(&self) -> Option<&TrigSeries> {
        match &self.model {
            Model::Mechanical { potential, .. } => Some(potential),
            _ => None,
        }
    }

    /// The manufactured solution `u*` of a shifted-quadratic family.
    pub fn shift_profile(&self) -> Option<&TrigSeries> {
        match &self.model {
            Model::Shifted { shift, .. } => Some(shift),
            _ => None,
        }
    }

    pub fn drift(&self) -> Option<f64> {
        match self.model {
            Model::Shifted { drift, .. } => Some(drift),
            _ => None,
        }
    }

    pub fn is_autonomous(&self) -> bool {
        match &self.model {
            Model::Mechanical { potential, .. } => potential.is_time_independent(),
            Model::Shifted { shift, .. } => shift.is_time_independent(),
            Model::Custom(c) => c.autonomous,
        }
    }

    /// Kinetic/potential split `H = K(p) + V(t,q)` available.
    pub fn is_separable(&self) -> bool {
        match &self.model {
            Model::Mechanical { .. } => true,
            Model::Shifted { shift, .. } => shift.is_space_independent(),
            Model::Custom(_) => false,
        }
    }

    /// `L` depends on the velocity only, so straight segments are exact
    /// action minimizers for any duration and their action is exact.
    pub fn lagrangian_is_velocity_only(&self) -> bool {
        match &self.model {
            Model::Mechanical { potential, .. } => potential.is_zero(),
            Model::Shifted { shift, .. } => shift.is_zero(),
            Model::Custom(_) => false,
        }
    }

    /// Maximum of `V` for mechanical families, estimated on a fine grid.
    /// This is the critical value of a mechanical Lagrangian.
    pub fn mechanical_critical_value(&self) -> Option<f64> {
        let potential = self.potential()?;
        let n = 1024;
        let mut best = f64::NEG_INFINITY;
        for i in 0..n {
            for j in 0..if potential.is_time_independent() { 1 } else { 64 } {
                let t = j as f64 / 64.0;
                best = best.max(potential.value(t, i as f64 / n as f64));
            }
        }
        Some(best + self.offset)
    }

    pub fn value(&self, t: f64, q: f64, p: f64) -> f64 {
        match &self.model {
            Model::Mechanical { kinetic, potential } => {
                0.5 * kinetic * p * p + potential.value(t, q) + self.offset
            }
            Model::Shifted { shift, drift } => {
                let j = shift.jet(t, q);
                let big_p = p - j.dq;
                0.5 * big_p * big_p + drift * big_p - j.dt + self.offset
            }
            Model::Custom(c) => (c.func)(t, q, p),
        }
    }

    pub fn partials(&self, t: f64, q: f64, p: f64) -> Partials {
        match &self.model {
            Model::Mechanical { kinetic, potential } => {
                let v = potential.value(t, q);
                Partials {
                    value: 0.5 * kinetic * p * p + v + self.offset,
                    dp: kinetic * p,
                    dq: potential.derivative(t, q, 0, 1),
                    dt: potential.derivative(t, q, 1, 0),
                }
            }
            Model::Shifted { shift, drift } => {
                let j = shift.jet(t, q);
                let big_p = p - j.dq;
                let vel = big_p + drift;
                Partials {
                    value: 0.5 * big_p * big_p + drift * big_p - j.dt + self.offset,
                    dp: vel,
                    dq: -vel * j.dqq - j.dtq,
                    dt: -vel * j.dtq - j.dtt,
                }
            }
            Model::Custom(c) => {
                let f = &c.func;
                Partials {
                    value: f(t, q, p),
                    dp: diff4(|x| f(t, q, x), p),
                    dq: diff4(|x| f(t, x, p), q),
                    dt: if c.autonomous { 0.0 } else { diff4(|x| f(x, q, p), t) },
                }
            }
        }
    }

    /// `∂_p H`, the velocity `q̇`.
    pub fn dp(&self, t: f64, q: f64, p: f64) -> f64 {
        match &self.model {
            Model::Mechanical { kinetic, .. } => kinetic * p,
            Model::Shifted { shift, drift } => p - shift.derivative(t, q, 0, 1) + drift,
            Model::Custom(c) => diff4(|x| (c.func)(t, q, x), p),
        }
    }

    pub fn dpp(&self, t: f64, q: f64, p: f64) -> f64 {
        match &self.model {
            Model::Mechanical { kinetic, .. } => *kinetic,
            Model::Shifted { .. } => 1.0,
            Model::Custom(c) => {
                let e = 1e-3 * (1.0 + p.abs());
                let f = |x: f64| (c.func)(t, q, x);
                (-f(p + 2.0 * e) + 16.0 * f(p + e) - 30.0 * f(p) + 16.0 * f(p - e) - f(p - 2.0 * e))
                    / (12.0 * e * e)
            }
        }
    }

    /// Legendre transform `L(t,q,v) = sup_p (p·v − H(t,q,p))`.
    pub fn legendre(&self, t: f64, q: f64, v: f64) -> Result<LagrangianFnValue, HamiltonianError> {
        match &self.model {
            Model::Mechanical { kinetic, potential } => Ok(LagrangianFnValue {
                value: v * v / (2.0 * kinetic) - potential.value(t, q) - self.offset,
                optimal_momentum: v / kinetic,
            }),
            Model::Shifted { shift, drift } => {
                let j = shift.jet(t, q);
                let w = v - drift;
                Ok(LagrangianFnValue {
                    value: 0.5 * w * w + j.dq * v + j.dt - self.offset,
                    optimal_momentum: w + j.dq,
                })
            }
            Model::Custom(c) => custom_legendre(c, t, q, v),
        }
    }

    /// Lagrangian value only; panics never, falls back to NaN on failure.
    #[inline]
    pub fn lagrangian(&self, t: f64, q: f64, v: f64) -> f64 {
        self.legendre(t, q, v).map(|l| l.value).unwrap_or(f64::NAN)
    }

    /// `H(t,q,p) + L(t,q,v) − p·v ≥ 0`.
    pub fn fenchel_gap(&self, t: f64, q: f64, v: f64, p: f64) -> Result<f64, HamiltonianError> {
        let l = self.legendre(t, q, v)?;
        Ok(self.value(t, q, p) + l.value - p * v)
    }

    /// Extended autonomous Hamiltonian `E + H(τ, q, p)` on `T*(ℝ × T¹)`.
    pub fn extended(&self, tau: f64, energy: f64, q: f64, p: f64) -> f64 {
        energy + self.value(tau, q, p)
    }

    /// Sampled Tonelli certificate: convexity floor and superlinear growth.
    pub fn tonelli_report(&self, spec: &SampleSpec) -> Result<TonelliReport, HamiltonianError> {
        let ladder: Vec<f64> = (0..spec.ladder_len)
            .map(|k| spec.ladder_base * 2f64.powi(k as i32))
            .collect();
        let mut min_dpp = f64::INFINITY;
        let mut ratios_pos = vec![f64::INFINITY; ladder.len()];
        let mut ratios_neg = vec![f64::INFINITY; ladder.len()];
        for it in 0..spec.time_samples {
            let t = it as f64 / spec.time_samples as f64;
            for iq in 0..spec.space_samples {
                let q = iq as f64 / spec.space_samples as f64;
                let momenta = std::iter::once(0.0)
                    .chain(ladder.iter().copied())
                    .chain(ladder.iter().map(|p| -p));
                for p in momenta {
                    let e = 1e-3 * (1.0 + p.abs());
                    let d2 = (self.value(t, q, p + e) - 2.0 * self.value(t, q, p)
                        + self.value(t, q, p - e))
                        / (e * e);
                    if d2 <= 0.0 {
                        return Err(HamiltonianError::ConvexityViolation { t, q, p, value: d2 });
                    }
                    min_dpp = min_dpp.min(d2);
                }
                for (k, &p) in ladder.iter().enumerate() {
                    ratios_pos[k] = ratios_pos[k].min(self.value(t, q, p) / p);
                    ratios_neg[k] = ratios_neg[k].min(self.value(t, q, -p) / p);
                }
            }
        }
        let increasing = |r: &[f64]| r.windows(2).all(|w| w[1] > w[0]);
        let superlinear = increasing(&ratios_pos) && increasing(&ratios_neg);
        Ok(TonelliReport {
            min_dpp,
            ladder,
            ratios_pos,
            ratios_neg,
            superlinear,
        })
    }
}

/// Sampling plan for [`TonelliHamiltonian::tonelli_report`].
#[derive(Debug, Clone)]
pub struct SampleSpec {
    pub time_samples: usize,
    pub space_samples: usize,
    pub ladder_base: f64,
    pub ladder_len: usize,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            time_samples: 8,
            space_samples: 32,
            ladder_base: 4.0,
            ladder_len: 6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TonelliReport {
    pub min_dpp: f64,
    pub ladder: Vec<f64>,
    /// `min_{t,q} H(t,q,P)/P` for each rung `P` of the ladder.
    pub ratios_pos: Vec<f64>,
    /// `min_{t,q} H(t,q,−P)/P`.
    pub ratios_neg: Vec<f64>,
    pub superlinear: bool,
}

fn diff4(f: impl Fn(f64) -> f64, x: f64) -> f64 {
    let e = 1e-3 * (1.0 + x.abs());
    (-f(x + 2.0 * e) + 8.0 * f(x + e) - 8.0 * f(x - e) + f(x - 2.0 * e)) / (12.0 * e)
}

fn custom_legendre(c: &CustomHamiltonian, t: f64, q: f64, v: f64) -> Result<LagrangianFnValue, HamiltonianError> {
    let not_found = HamiltonianError::MaximizerNotFound { t, q, v };
    let objective = |p: f64| p * v - (c.func)(t, q, p);
    let (mut lo, mut hi) = c.momentum_box;
    let (full_lo, full_hi) = c.momentum_box;

    // golden section on the concave objective
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = objective(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = objective(x1);
        }
    }
    let mut p = 0.5 * (lo + hi);

    // Newton on v − ∂_p H(p) = 0
    let h = TonelliHamiltonian {
        model: Model::Custom(c.clone()),
        offset: 0.0,
    };
    let mut converged = false;
    for _ in 0..NEWTON_BUDGET {
        let grad = v - h.dp(t, q, p);
        let curv = h.dpp(t, q, p);
        if !(curv > 0.0) || !grad.is_finite() {
            return Err(not_found);
        }
        let step = grad / curv;
        p += step;
        if step.abs() <= NEWTON_TOL * p.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    let width = full_hi - full_lo;
    if !converged || p <= full_lo + 1e-9 * width || p >= full_hi - 1e-9 * width {
        return Err(not_found);
    }
    Ok(LagrangianFnValue {
        value: objective(p),
        optimal_momentum: p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trig::TrigTerm;

    fn half_p2_custom() -> TonelliHamiltonian {
        TonelliHamiltonian::custom(CustomHamiltonian::new("half-p2", (-10.0, 10.0), |_, _, p| 0.5 * p * p).autonomous())
            .unwrap()
    }

    fn shifted() -> TonelliHamiltonian {
        let u = TrigSeries::new(vec![
            TrigTerm::new(1, 1, 0.0, 0.08),
            TrigTerm::new(0, 2, 0.03, 0.0),
        ])
        .unwrap();
        TonelliHamiltonian::shifted_quadratic(u, 0.3, 0.25)
    }

    #[test]
    fn evaluation_examples() {
        let free = TonelliHamiltonian::free();
        assert_eq!(free.value(0.0, 0.0, 2.0), 2.0);
        assert_eq!(TonelliHamiltonian::pendulum().value(0.0, 0.0, 0.0), 1.0);
        let trivial = TonelliHamiltonian::shifted_quadratic(TrigSeries::zero(), 0.0, 0.0);
        assert_eq!(trivial.value(0.0, 0.3, 1.0), 0.5);
    }

    #[test]
    fn legendre_examples() {
        let l = TonelliHamiltonian::free().legendre(0.0, 0.0, 1.0).unwrap();
        assert_eq!((l.value, l.optimal_momentum), (0.5, 1.0));
        let l = TonelliHamiltonian::pendulum().legendre(0.0, 0.0, 0.0).unwrap();
        assert_eq!(l.value, -1.0);
        // dense-grid oracle for sup_p (0.7 p − p²/2) over [−10, 10]
        let oracle = (0..=2_000_000)
            .map(|i| -10.0 + 20.0 * i as f64 / 2_000_000.0)
            .map(|p| 0.7 * p - 0.5 * p * p)
            .fold(f64::NEG_INFINITY, f64::max);
        let l = half_p2_custom().legendre(0.0, 0.0, 0.7).unwrap();
        assert!((l.value - oracle).abs() < 1e-10);
        assert!((l.value - 0.245).abs() < 1e-10);
    }

    #[test]
    fn maximizer_outside_box_is_reported() {
        let h = TonelliHamiltonian::custom(CustomHamiltonian::new("narrow", (-1.0, 1.0), |_, _, p| 0.5 * p * p)).unwrap();
        assert!(matches!(h.legendre(0.0, 0.0, 5.0), Err(HamiltonianError::MaximizerNotFound { .. })));
    }

    #[test]
    fn fenchel_examples() {
        let h = TonelliHamiltonian::free();
        assert_eq!(h.fenchel_gap(0.0, 0.0, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(h.fenchel_gap(0.0, 0.0, 1.0, 0.0).unwrap(), 0.5);
    }

    #[test]
    fn extended_examples() {
        let free = TonelliHamiltonian::free();
        assert_eq!(free.extended(0.0, 1.0, 0.0, 0.0), 1.0);
        let h = TonelliHamiltonian::pendulum();
        assert!((h.extended(0.0, -1.5, 0.5, 1.0) - (-2.0)).abs() < 1e-15);
        let (tau, q, p) = (0.3, 0.7, -1.2);
        let sq = shifted();
        assert_eq!(sq.extended(tau, -sq.value(tau, q, p), q, p), 0.0);
    }

    #[test]
    fn tonelli_reports() {
        let spec = SampleSpec::default();
        let r = TonelliHamiltonian::free().tonelli_report(&spec).unwrap();
        assert!((r.min_dpp - 1.0).abs() < 1e-6);
        assert!(r.superlinear);
        let r = shifted().tonelli_report(&spec).unwrap();
        assert!((r.min_dpp - 1.0).abs() < 1e-6);
        assert!(r.superlinear);
        let concave =
            TonelliHamiltonian::custom(CustomHamiltonian::new("concave", (-10.0, 10.0), |_, _, p| -0.5 * p * p)).unwrap();
        assert!(matches!(
            concave.tonelli_report(&spec),
            Err(HamiltonianError::ConvexityViolation { .. })
        ));
    }

    #[test]
    fn manufactured_profile_solves_hamilton_jacobi() {
        let h = shifted();
        let u = h.shift_profile().unwrap().clone();
        for i in 0..40 {
            for j in 0..40 {
                let (t, q) = (i as f64 / 40.0, j as f64 / 40.0 + 0.003);
                let residual = u.derivative(t, q, 1, 0) + h.value(t, q, u.derivative(t, q, 0, 1)) - h.offset();
                assert!(residual.abs() < 1e-10, "{residual}");
            }
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let h = shifted();
        let (t, q, p) = (0.41, 0.17, 0.9);
        let d = h.partials(t, q, p);
        let e = 1e-6;
        let fd = |f: &dyn Fn(f64) -> f64, x: f64| (f(x + e) - f(x - e)) / (2.0 * e);
        assert!((d.dp - fd(&|x| h.value(t, q, x), p)).abs() < 1e-7);
        assert!((d.dq - fd(&|x| h.value(t, x, p), q)).abs() < 1e-7);
        assert!((d.dt - fd(&|x| h.value(x, q, p), t)).abs() < 1e-7);
        assert_eq!(d.dp, h.dp(t, q, p));
    }

    #[test]
    fn mechanical_legendre_is_an_involution() {
        let v = TrigSeries::new(vec![TrigTerm::new(1, 1, 0.4, 0.1), TrigTerm::spatial(3, 0.0, 0.2)]).unwrap();
        let h = TonelliHamiltonian::mechanical(1.7, v, 0.3).unwrap();
        for i in 0..20 {
            let (t, q, p) = (i as f64 * 0.05, i as f64 * 0.037, -2.0 + i as f64 * 0.2);
            // H(p) = sup_v (p v − L(v)), attained at v = ∂_p H
            let v_star = h.dp(t, q, p);
            let back = p * v_star - h.lagrangian(t, q, v_star);
            assert!((back - h.value(t, q, p)).abs() < 1e-9);
            for dv in [-0.3, -0.01, 0.02, 0.5] {
                assert!(p * (v_star + dv) - h.lagrangian(t, q, v_star + dv) <= back + 1e-12);
            }
        }
    }
}
