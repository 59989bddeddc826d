//! Calibration defects, domination sweeps and calibrated curves of candidate
//! solutions `u(t, q)` of `∂_t u + H(t, q, ∂_q u) = α₀`.

use crate::flow::{trajectory, FlowError, FlowSettings, PhasePoint, Trajectory};
use crate::grid::{CubicSpline, GridError, GridFunction};
use crate::hamiltonian::TonelliHamiltonian;
use crate::lax_oleinik::{LaxError, LaxOleinik, MinimizerChain, Normalization};
use crate::trig::TrigSeries;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::f64::consts::TAU;

/// Second differences above this multiple of their median mark a kink.
pub const KINK_FACTOR: f64 = 50.0;
pub const KINK_FLOOR: f64 = 1e-10;
pub const DOMINATION_TOLERANCE: f64 = 5e-3;
/// Relative change of the speed bound accepted as a plateau.
pub const PLATEAU_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("time {t} outside the domain [{lo}, {hi}]")]
    DomainExceeded { t: f64, lo: f64, hi: f64 },
    #[error("{0} is not a sample time of the curve")]
    NotASampleTime(f64),
    #[error("kink detected at the seed (t = {t}, q = {q})")]
    KinkAtSeed { t: f64, q: f64 },
    #[error("knot times must be strictly increasing and match the slices")]
    BadKnots,
    #[error("knot slices differ in resolution or dimension")]
    SliceMismatch,
    #[error("consecutive knots differ by {jump:e}, above the budget {budget:e}")]
    ContinuityBudget { jump: f64, budget: f64 },
    #[error("Lagrangian undefined along the curve at t = {0}")]
    LagrangianUndefined(f64),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Lax(#[from] LaxError),
}

/// Candidate solution on `[t₀, t₁] × T¹`.
#[derive(Debug, Clone, PartialEq)]
pub enum SpaceTimeFunction {
    /// Closed form, defined for all times.
    Analytic(TrigSeries),
    /// Time-independent grid function.
    Stationary { slice: GridFunction, spline: CubicSpline },
    /// Knots in time, linear in time and cubic periodic in space.
    Sampled {
        knots: Vec<f64>,
        slices: Vec<GridFunction>,
        splines: Vec<CubicSpline>,
    },
}

/// `(u, ∂_t u, ∂_q u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeJet {
    pub value: f64,
    pub dt: f64,
    pub dq: f64,
}

impl SpaceTimeFunction {
    pub fn analytic(series: TrigSeries) -> Self {
        Self::Analytic(series)
    }

    pub fn stationary(slice: GridFunction) -> Result<Self, CalibrationError> {
        let spline = CubicSpline::new(&slice)?;
        Ok(Self::Stationary { slice, spline })
    }

    pub fn sampled(knots: Vec<f64>, slices: Vec<GridFunction>) -> Result<Self, CalibrationError> {
        if knots.len() < 2 || knots.len() != slices.len() || knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(CalibrationError::BadKnots);
        }
        let n = slices[0].resolution();
        if slices.iter().any(|s| s.dim() != 1 || s.resolution() != n) {
            return Err(CalibrationError::SliceMismatch);
        }
        let splines = slices.iter().map(CubicSpline::new).collect::<Result<Vec<_>, _>>()?;
        Ok(Self::Sampled { knots, slices, splines })
    }

    /// `u(t_k) = T_-^{t₀, t_k} u₀` (full normalisation), each knot computed
    /// from `u₀` directly.
    pub fn from_lax_evolution(
        engine: &LaxOleinik<'_>,
        u0: &GridFunction,
        alpha0: f64,
        knots: Vec<f64>,
    ) -> Result<Self, CalibrationError> {
        if knots.len() < 2 {
            return Err(CalibrationError::BadKnots);
        }
        let t0 = knots[0];
        let mut slices = vec![u0.clone()];
        for &t in &knots[1..] {
            slices.push(engine.negative(u0, t0, t, Normalization::Full(alpha0))?.values);
        }
        Self::sampled(knots, slices)
    }

    pub fn domain(&self) -> (f64, f64) {
        match self {
            Self::Sampled { knots, .. } => (knots[0], *knots.last().expect("two knots")),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Largest sup-norm jump between consecutive knots.
    pub fn max_knot_jump(&self) -> f64 {
        match self {
            Self::Sampled { slices, .. } => slices
                .windows(2)
                .map(|w| w[0].sup_distance(&w[1]).unwrap_or(f64::INFINITY))
                .fold(0.0, f64::max),
            _ => 0.0,
        }
    }

    pub fn check_continuity(&self, budget: f64) -> Result<(), CalibrationError> {
        let jump = self.max_knot_jump();
        if jump > budget {
            return Err(CalibrationError::ContinuityBudget { jump, budget });
        }
        Ok(())
    }

    fn bracket(knots: &[f64], t: f64) -> Result<usize, CalibrationError> {
        let (lo, hi) = (knots[0], *knots.last().expect("two knots"));
        let slack = 1e-12 * (1.0 + hi.abs());
        if t < lo - slack || t > hi + slack {
            return Err(CalibrationError::DomainExceeded { t, lo, hi });
        }
        Ok(knots[1..].partition_point(|&k| k < t).min(knots.len() - 2))
    }

    pub fn jet(&self, t: f64, q: f64) -> Result<SpaceTimeJet, CalibrationError> {
        Ok(match self {
            Self::Analytic(s) => {
                let j = s.jet(t, q);
                SpaceTimeJet {
                    value: j.value,
                    dt: j.dt,
                    dq: j.dq,
                }
            }
            Self::Stationary { spline, .. } => {
                let (v, d, _) = spline.eval(q);
                SpaceTimeJet { value: v, dt: 0.0, dq: d }
            }
            Self::Sampled { knots, splines, .. } => {
                let k = Self::bracket(knots, t)?;
                let dt = knots[k + 1] - knots[k];
                let w = ((t - knots[k]) / dt).clamp(0.0, 1.0);
                let (a, da, _) = splines[k].eval(q);
                let (b, db, _) = splines[k + 1].eval(q);
                SpaceTimeJet {
                    value: (1.0 - w) * a + w * b,
                    dt: (b - a) / dt,
                    dq: (1.0 - w) * da + w * db,
                }
            }
        })
    }

    pub fn value(&self, t: f64, q: f64) -> Result<f64, CalibrationError> {
        Ok(self.jet(t, q)?.value)
    }

    /// Whether a second difference near `q` (at the knots bracketing `t`)
    /// exceeds `KINK_FACTOR ×` its median.
    pub fn kink_at(&self, t: f64, q: f64) -> Result<bool, CalibrationError> {
        let slices: Vec<&GridFunction> = match self {
            Self::Analytic(_) => return Ok(false),
            Self::Stationary { slice, .. } => vec![slice],
            Self::Sampled { knots, slices, .. } => {
                let k = Self::bracket(knots, t)?;
                vec![&slices[k], &slices[k + 1]]
            }
        };
        for s in slices {
            let mask = kink_mask(s);
            let n = mask.len();
            let i = (crate::trig::reduce(q) * n as f64).floor() as usize;
            if [n - 1, 0, 1, 2].iter().any(|off| mask[(i + off) % n]) {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Grid points whose second difference exceeds `KINK_FACTOR ×` the median.
pub fn kink_mask(u: &GridFunction) -> Vec<bool> {
    let d2: Vec<f64> = u.second_differences().iter().map(|d| d.abs()).collect();
    let mut sorted = d2.clone();
    sorted.sort_by(f64::total_cmp);
    let threshold = KINK_FACTOR * sorted[sorted.len() / 2] + KINK_FLOOR;
    d2.iter().map(|&d| d > threshold).collect()
}

fn sample_index(times: &[f64], t: f64) -> Result<usize, CalibrationError> {
    let i = times.partition_point(|&s| s < t - 1e-9);
    if i < times.len() && (times[i] - t).abs() <= 1e-9 {
        Ok(i)
    } else {
        Err(CalibrationError::NotASampleTime(t))
    }
}

/// Simpson rule on `[tᵢ, tᵢ₊₁]` with the midpoint from cubic Hermite
/// interpolation of positions and velocities.
fn interval_action(h: &TonelliHamiltonian, g: &Trajectory, i: usize) -> Result<f64, CalibrationError> {
    let (t0, t1) = (g.times[i], g.times[i + 1]);
    let tau = t1 - t0;
    let (q0, q1) = (g.lifts[i], g.lifts[i + 1]);
    let (v0, v1) = (g.velocities[i], g.velocities[i + 1]);
    let qm = 0.5 * (q0 + q1) + tau * (v0 - v1) / 8.0;
    let vm = 1.5 * (q1 - q0) / tau - 0.25 * (v0 + v1);
    let l0 = h.lagrangian(t0, q0, v0);
    let lm = h.lagrangian(t0 + 0.5 * tau, qm, vm);
    let l1 = h.lagrangian(t1, q1, v1);
    let s = tau / 6.0 * (l0 + 4.0 * lm + l1);
    if !s.is_finite() {
        return Err(CalibrationError::LagrangianUndefined(t0));
    }
    Ok(s)
}

/// `∫_a^b (L + α₀) − u(b, γ(b)) + u(a, γ(a))`; `a`, `b` must be sample
/// times of `γ`.
pub fn calibration_defect(
    u: &SpaceTimeFunction,
    h: &TonelliHamiltonian,
    alpha0: f64,
    gamma: &Trajectory,
    a: f64,
    b: f64,
) -> Result<f64, CalibrationError> {
    let (ia, ib) = (sample_index(&gamma.times, a)?, sample_index(&gamma.times, b)?);
    let mut action = 0.0;
    for i in ia..ib {
        action += interval_action(h, gamma, i)?;
    }
    let (ta, tb) = (gamma.times[ia], gamma.times[ib]);
    let ua = u.value(ta, gamma.lifts[ia])?;
    let ub = u.value(tb, gamma.lifts[ib])?;
    Ok(action + alpha0 * (tb - ta) - ub + ua)
}

/// Random C¹ test curves `q₀ + Σ_{k≤degree} aₖ cos(2πks) + bₖ sin(2πks)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSampler {
    pub time_range: (f64, f64),
    pub degree: usize,
    /// Bound on `Σ |aₖ| + |bₖ|`.
    pub amplitude: f64,
    pub min_duration: f64,
    pub samples_per_unit: usize,
}

impl CurveSampler {
    pub fn new(time_range: (f64, f64)) -> Self {
        Self {
            time_range,
            degree: 4,
            amplitude: 0.5,
            min_duration: 0.1,
            samples_per_unit: 128,
        }
    }

    /// Test curve number `index`, deterministic in `(seed, index)`.
    pub fn curve(&self, h: &TonelliHamiltonian, seed: u64, index: u64) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let q0 = rng.gen_range(0.0..1.0);
        let mut coeffs: Vec<(f64, f64)> = (0..self.degree)
            .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let total: f64 = coeffs.iter().map(|(a, b)| a.abs() + b.abs()).sum();
        let scale = rng.gen_range(0.0..=self.amplitude) / total.max(1e-300);
        for c in &mut coeffs {
            c.0 *= scale;
            c.1 *= scale;
        }
        let (lo, hi) = self.time_range;
        let span = (hi - lo).max(self.min_duration);
        let duration = rng.gen_range(self.min_duration.min(span)..=span);
        let a = lo + rng.gen_range(0.0..=(span - duration));
        let steps = ((duration * self.samples_per_unit as f64).ceil() as usize).max(2);
        let shape = |s: f64| -> (f64, f64) {
            coeffs.iter().enumerate().fold((0.0, 0.0), |(q, v), (k, (ca, cb))| {
                let w = TAU * (k + 1) as f64;
                let (sn, cs) = (w * s).sin_cos();
                (q + ca * cs + cb * sn, v + w * (cb * cs - ca * sn))
            })
        };
        let base = shape(a).0;
        let mut g = Trajectory {
            times: Vec::with_capacity(steps + 1),
            points: Vec::with_capacity(steps + 1),
            lifts: Vec::with_capacity(steps + 1),
            velocities: Vec::with_capacity(steps + 1),
            action_increments: Vec::with_capacity(steps),
            energy_samples: Vec::with_capacity(steps + 1),
        };
        for k in 0..=steps {
            let t = if k == steps { a + duration } else { a + duration * k as f64 / steps as f64 };
            let (q, v) = shape(t);
            let lift = q0 + q - base;
            let p = h.legendre(t, lift, v).map(|l| l.optimal_momentum).unwrap_or(f64::NAN);
            g.times.push(t);
            g.points.push(PhasePoint::new(lift, p));
            g.lifts.push(lift);
            g.velocities.push(v);
            g.energy_samples.push(-h.value(t, lift, p));
        }
        for i in 0..steps {
            g.action_increments.push(interval_action(h, &g, i).unwrap_or(f64::NAN));
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominationReport {
    pub min_defect: f64,
    /// Index of the curve realising the minimum (smallest on ties).
    pub witness: u64,
    pub count: u64,
    pub tolerance: f64,
    pub passes: bool,
}

/// Minimum defect of `u` over `count` random test curves.
pub fn domination_check(
    u: &SpaceTimeFunction,
    h: &TonelliHamiltonian,
    alpha0: f64,
    sampler: &CurveSampler,
    count: u64,
    seed: u64,
) -> Result<DominationReport, CalibrationError> {
    let defects = (0..count)
        .into_par_iter()
        .map(|i| {
            let g = sampler.curve(h, seed, i);
            let (a, b) = (g.times[0], *g.times.last().expect("curve has samples"));
            calibration_defect(u, h, alpha0, &g, a, b)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (witness, min_defect) = defects
        .iter()
        .enumerate()
        .fold((0usize, f64::INFINITY), |(wi, wv), (i, &d)| if d < wv { (i, d) } else { (wi, wv) });
    Ok(DominationReport {
        min_defect,
        witness: witness as u64,
        count,
        tolerance: DOMINATION_TOLERANCE,
        passes: min_defect >= -DOMINATION_TOLERANCE,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedCurveReport {
    pub curve: Trajectory,
    /// `sup |∂_q u − ∂_v L|` along the curve.
    pub max_momentum_residual: f64,
    /// `sup |∂_t u + H(t, q, ∂_q u) − α₀|`.
    pub max_hj_residual: f64,
    /// `sup` of the Fenchel gap at `(q, q̇, ∂_q u)`.
    pub max_fenchel_gap: f64,
    pub defect: f64,
    pub seed_t: f64,
    pub seed_q: f64,
}

/// Flows forward from `(q₀, ∂_q u(t₀, q₀))` and measures how well the curve
/// is calibrated by `u`.
pub fn calibrated_curve(
    u: &SpaceTimeFunction,
    h: &TonelliHamiltonian,
    alpha0: f64,
    t0: f64,
    q0: f64,
    horizon: f64,
    settings: &FlowSettings,
) -> Result<CalibratedCurveReport, CalibrationError> {
    if u.kink_at(t0, q0)? {
        return Err(CalibrationError::KinkAtSeed { t: t0, q: q0 });
    }
    let (lo, hi) = u.domain();
    if t0 + horizon > hi || t0 < lo {
        return Err(CalibrationError::DomainExceeded {
            t: t0 + horizon,
            lo,
            hi,
        });
    }
    let p0 = u.jet(t0, q0)?.dq;
    let curve = trajectory(h, PhasePoint::new(q0, p0), t0, t0 + horizon, settings)?;
    let (mut mom, mut hj, mut gap) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..curve.times.len() {
        let (t, q, v) = (curve.times[i], curve.lifts[i], curve.velocities[i]);
        let j = u.jet(t, q)?;
        mom = mom.max((j.dq - curve.points[i].p).abs());
        hj = hj.max((j.dt + h.value(t, q, j.dq) - alpha0).abs());
        if let Ok(g) = h.fenchel_gap(t, q, v, j.dq) {
            gap = gap.max(g);
        }
    }
    let defect = calibration_defect(u, h, alpha0, &curve, t0, *curve.times.last().expect("samples"))?;
    Ok(CalibratedCurveReport {
        curve,
        max_momentum_residual: mom,
        max_hj_residual: hj,
        max_fenchel_gap: gap,
        defect,
        seed_t: t0,
        seed_q: q0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AprioriReport {
    pub coarse_bound: f64,
    pub fine_bound: f64,
    pub relative_change: f64,
    /// The bound moved by less than `PLATEAU_TOLERANCE` under refinement.
    pub plateau: bool,
}

/// Largest step speed over chains lasting at least `epsilon`.
pub fn max_chain_speed(chains: &[MinimizerChain], epsilon: f64) -> f64 {
    chains
        .iter()
        .filter(|c| c.times.last().copied().unwrap_or(0.0) - c.times[0] >= epsilon)
        .flat_map(|c| c.speeds())
        .fold(0.0, f64::max)
}

/// Speed bound over an endpoint sweep and its 2× refinement.
pub fn apriori_bound_report(coarse: &[MinimizerChain], fine: &[MinimizerChain], epsilon: f64) -> AprioriReport {
    let coarse_bound = max_chain_speed(coarse, epsilon);
    let fine_bound = max_chain_speed(fine, epsilon);
    let relative_change = if coarse_bound == 0.0 && fine_bound == 0.0 {
        0.0
    } else {
        (fine_bound - coarse_bound).abs() / coarse_bound.max(fine_bound)
    };
    AprioriReport {
        coarse_bound,
        fine_bound,
        relative_change,
        plateau: relative_change < PLATEAU_TOLERANCE,
    }
}
