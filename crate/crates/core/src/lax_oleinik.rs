//! Action potentials and Lax-Oleinik operators on periodic value grids.
//!
//! Single-step potentials minimise the action of straight segments (with a
//! small window of windings) between grid points; longer durations are
//! min-plus products of single steps taken on the absolute time lattice
//! `Δ·ℤ`, so operators over lattice-aligned intervals compose exactly and
//! inherit the time periodicity of `L` entrywise.

use crate::flow::lattice_nodes;
use crate::grid::{GridError, GridFunction};
use crate::hamiltonian::TonelliHamiltonian;
use crate::trig::reduce;
use rayon::prelude::*;
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

pub const DEFAULT_MACRO_STEP: f64 = 0.25;
pub const DEFAULT_WINDING_WINDOW: i32 = 2;
pub const DEFAULT_QUADRATURE: usize = 8;
/// Running-minimum change (per period, sup norm) accepted as converged.
pub const BARRIER_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LaxError {
    #[error("duration must be positive (s = {s}, t = {t})")]
    NonpositiveDuration { s: f64, t: f64 },
    #[error("grid function does not match the operator grid: {0}")]
    GridMismatch(String),
    #[error("invalid horizon: {0}")]
    BadHorizon(String),
    #[error("value-iteration increments are not Cauchy (spread {spread:e} over the fitted window)")]
    DivergenceDetected { spread: f64 },
    #[error("Peierls barrier running minimum has not converged")]
    BarrierNotConverged,
    #[error("no stored argmin for this evolution")]
    NoStoredArgmin,
    #[error("Lagrangian is not finite at (t={t}, q={q}, v={v})")]
    LagrangianUndefined { t: f64, q: f64, v: f64 },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Discretisation of single-step potentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialSettings {
    /// Longest single step `Δ`; a divisor of 1 keeps the lattice periodic.
    pub macro_step: f64,
    pub winding_window: i32,
    pub quadrature_nodes: usize,
    pub path: PathModel,
}

/// Paths admitted inside one elementary step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathModel {
    /// Constant-velocity segment, midpoint quadrature.
    Straight,
    /// Polygon with this many sub-segments whose interior vertices are
    /// relaxed by Newton's method (one midpoint node per sub-segment).
    Relaxed { segments: usize },
}

impl Default for PotentialSettings {
    fn default() -> Self {
        Self {
            macro_step: DEFAULT_MACRO_STEP,
            winding_window: DEFAULT_WINDING_WINDOW,
            quadrature_nodes: DEFAULT_QUADRATURE,
            path: PathModel::Straight,
        }
    }
}

impl PotentialSettings {
    /// Defaults, except that velocity-only Lagrangians (whose minimisers are
    /// exactly straight) use a single step per period.
    pub fn for_hamiltonian(h: &TonelliHamiltonian) -> Self {
        let mut s = Self::default();
        if h.lagrangian_is_velocity_only() {
            s.macro_step = 1.0;
        }
        s
    }

    fn validate(&self) -> Result<(), LaxError> {
        let per_unit = 1.0 / self.macro_step;
        if !(self.macro_step > 0.0 && self.macro_step <= 1.0) || (per_unit - per_unit.round()).abs() > 1e-12 {
            return Err(LaxError::BadHorizon(format!(
                "macro step {} must divide 1",
                self.macro_step
            )));
        }
        if let PathModel::Relaxed { segments } = self.path {
            if segments < 2 {
                return Err(LaxError::BadHorizon("relaxed paths need at least two segments".into()));
            }
        }
        if self.winding_window < 0 || self.quadrature_nodes == 0 {
            return Err(LaxError::BadHorizon("winding window and quadrature must be positive".into()));
        }
        Ok(())
    }
}

/// `entries[y·N + x] ≈ h₀^{s,t}(y/N, x/N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialMatrix {
    pub s: f64,
    pub t: f64,
    n: usize,
    entries: Vec<f64>,
    /// Minimising winding per entry (single steps only).
    windings: Option<Vec<i8>>,
    /// Some minimiser used the outermost winding of the window.
    pub boundary_winding_active: bool,
}

impl PotentialMatrix {
    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.entries[y * self.n + x]
    }

    pub fn winding(&self, y: usize, x: usize) -> Option<i8> {
        self.windings.as_ref().map(|w| w[y * self.n + x])
    }

    pub fn min(&self) -> f64 {
        self.entries.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `(self ⊗ other)(y, x) = min_z self(y, z) + other(z, x)`, reduced row by row.
    pub fn compose(&self, other: &PotentialMatrix) -> Result<PotentialMatrix, LaxError> {
        if self.n != other.n {
            return Err(LaxError::GridMismatch(format!("{} vs {}", self.n, other.n)));
        }
        let n = self.n;
        let mut entries = vec![0.0; n * n];
        entries.par_chunks_mut(n).enumerate().for_each(|(y, row)| {
            row.fill(f64::INFINITY);
            let a = &self.entries[y * n..(y + 1) * n];
            for (z, &ayz) in a.iter().enumerate() {
                let b = &other.entries[z * n..(z + 1) * n];
                for (r, &bzx) in row.iter_mut().zip(b) {
                    let v = ayz + bzx;
                    if v < *r {
                        *r = v;
                    }
                }
            }
        });
        Ok(PotentialMatrix {
            s: self.s,
            t: other.t,
            n,
            entries,
            windings: None,
            boundary_winding_active: self.boundary_winding_active || other.boundary_winding_active,
        })
    }

    pub fn shifted(&self, c: f64) -> PotentialMatrix {
        let mut out = self.clone();
        for e in &mut out.entries {
            *e += c;
        }
        out
    }

    pub fn sup_distance(&self, other: &PotentialMatrix) -> f64 {
        self.entries
            .iter()
            .zip(&other.entries)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Column `y ↦ self(·, y)` is `row` of the transpose; returns `self(x, y)` over `x`.
    pub fn column(&self, y: usize) -> Vec<f64> {
        (0..self.n).map(|x| self.get(x, y)).collect()
    }
}

/// Normalisation of the Lax-Oleinik operators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Normalization {
    /// `T_{±,0}`: plain potentials.
    Reduced,
    /// `T_±`: shifted by `±α₀·(t − s)`.
    Full(f64),
}

impl Normalization {
    fn rate(self) -> f64 {
        match self {
            Self::Reduced => 0.0,
            Self::Full(a) => a,
        }
    }
}

/// Argmin of one elementary step at an output point: source index and winding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepArgmin {
    pub source: u32,
    pub winding: i8,
}

/// Output of an operator application with per-step argmins.
#[derive(Debug, Clone, PartialEq)]
pub struct LaxResult {
    pub values: GridFunction,
    /// Step boundaries in the order they were applied.
    pub times: Vec<f64>,
    /// `argmins[k][x]` realises step `k` at output point `x`.
    pub argmins: Vec<Vec<StepArgmin>>,
}

/// Lax-Oleinik calculus for one Hamiltonian on one grid, caching the
/// elementary potentials by reduced start time and duration.
pub struct LaxOleinik<'a> {
    h: &'a TonelliHamiltonian,
    n: usize,
    settings: PotentialSettings,
    cache: Mutex<HashMap<(u64, u64), Arc<PotentialMatrix>>>,
}

impl<'a> LaxOleinik<'a> {
    pub fn new(h: &'a TonelliHamiltonian, n: usize) -> Result<Self, LaxError> {
        Self::with_settings(h, n, PotentialSettings::for_hamiltonian(h))
    }

    pub fn with_settings(h: &'a TonelliHamiltonian, n: usize, settings: PotentialSettings) -> Result<Self, LaxError> {
        GridFunction::constant(1, n, 0.0)?;
        settings.validate()?;
        Ok(Self {
            h,
            n,
            settings,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn settings(&self) -> &PotentialSettings {
        &self.settings
    }

    pub fn hamiltonian(&self) -> &TonelliHamiltonian {
        self.h
    }

    fn check(&self, u: &GridFunction) -> Result<(), LaxError> {
        if u.dim() != 1 || u.resolution() != self.n {
            return Err(LaxError::GridMismatch(format!(
                "operator grid {} vs function {}^{}",
                self.n,
                u.resolution(),
                u.dim()
            )));
        }
        Ok(())
    }

    /// Lattice-aligned step boundaries from `s` to `t`.
    pub fn step_times(&self, s: f64, t: f64) -> Vec<f64> {
        lattice_nodes(s, t, self.settings.macro_step)
    }

    /// Potential of a single step `[s, s + tau]`, `tau ≤ Δ`.
    pub fn elementary(&self, s: f64, tau: f64) -> Result<Arc<PotentialMatrix>, LaxError> {
        // autonomous Lagrangians share one matrix per duration
        let s_key = if self.h.is_autonomous() { 0.0 } else { reduce(s) };
        let key = (s_key.to_bits(), tau.to_bits());
        if let Some(m) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(m.clone());
        }
        let built = Arc::new(self.build_elementary(reduce(s), tau)?);
        let mut cache = self.cache.lock().expect("cache lock");
        Ok(cache.entry(key).or_insert(built).clone())
    }

    fn build_elementary(&self, s: f64, tau: f64) -> Result<PotentialMatrix, LaxError> {
        let n = self.n;
        let w_max = self.settings.winding_window;
        let grid = 1.0 / n as f64;
        let windows = (2 * w_max + 1) as usize;
        let rows: Vec<Result<(Vec<f64>, Vec<i8>, bool), LaxError>> = (0..n)
            .into_par_iter()
            .map(|y| {
                let qy = y as f64 * grid;
                let mut vals = vec![0.0; n];
                let mut wins = vec![0i8; n];
                let mut boundary = false;
                let mut straight = vec![0.0; windows];
                for x in 0..n {
                    for (slot, w) in (-w_max..=w_max).enumerate() {
                        let target = x as f64 * grid + w as f64;
                        straight[slot] = self.straight_action(s, tau, qy, target)?;
                    }
                    let (mut best, mut best_slot) = (f64::INFINITY, 0usize);
                    let (mut second, mut second_slot) = (f64::INFINITY, None);
                    for (slot, &a) in straight.iter().enumerate() {
                        if a < best {
                            second = best;
                            second_slot = Some(best_slot).filter(|_| best.is_finite());
                            best = a;
                            best_slot = slot;
                        } else if a < second {
                            second = a;
                            second_slot = Some(slot);
                        }
                    }
                    if let PathModel::Relaxed { segments } = self.settings.path {
                        // relax the two most promising windings
                        let target = |slot: usize| x as f64 * grid + (slot as i32 - w_max) as f64;
                        let a = self.relaxed_action(s, tau, qy, target(best_slot), segments)?;
                        best = a;
                        if let Some(slot) = second_slot {
                            let b = self.relaxed_action(s, tau, qy, target(slot), segments)?;
                            if b < best {
                                best = b;
                                best_slot = slot;
                            }
                        }
                    }
                    let best_w = best_slot as i32 - w_max;
                    boundary |= w_max > 0 && best_w.abs() == w_max;
                    vals[x] = best;
                    wins[x] = best_w as i8;
                }
                Ok((vals, wins, boundary))
            })
            .collect();
        let mut entries = Vec::with_capacity(n * n);
        let mut windings = Vec::with_capacity(n * n);
        let mut boundary = false;
        for r in rows {
            let (v, w, b) = r?;
            entries.extend(v);
            windings.extend(w);
            boundary |= b;
        }
        Ok(PotentialMatrix {
            s,
            t: s + tau,
            n,
            entries,
            windings: Some(windings),
            boundary_winding_active: boundary,
        })
    }

    fn lagrangian(&self, t: f64, q: f64, v: f64) -> Result<f64, LaxError> {
        let l = self.h.lagrangian(t, q, v);
        if l.is_finite() {
            Ok(l)
        } else {
            Err(LaxError::LagrangianUndefined { t, q, v })
        }
    }

    fn straight_action(&self, s: f64, tau: f64, from: f64, to: f64) -> Result<f64, LaxError> {
        let m = self.settings.quadrature_nodes;
        let d = to - from;
        let v = d / tau;
        let mut acc = 0.0;
        for k in 0..m {
            let frac = (k as f64 + 0.5) / m as f64;
            acc += self.lagrangian(s + frac * tau, from + frac * d, v)?;
        }
        Ok(acc * tau / m as f64)
    }

    /// `(L, L_q, L_v, L_qq, L_qv, L_vv)` from the Hamiltonian at the Legendre
    /// momentum; second `q`-derivatives of `H` by central differences.
    fn lagrangian_jet(&self, t: f64, q: f64, v: f64) -> Result<[f64; 6], LaxError> {
        let h = self.h;
        let leg = h.legendre(t, q, v).map_err(|_| LaxError::LagrangianUndefined { t, q, v })?;
        let p = leg.optimal_momentum;
        let c = h.partials(t, q, p);
        let eps = 1e-5;
        let (hi, lo) = (h.partials(t, q + eps, p), h.partials(t, q - eps, p));
        let hpq = (hi.dp - lo.dp) / (2.0 * eps);
        let hqq = (hi.dq - lo.dq) / (2.0 * eps);
        let hpp = h.dpp(t, q, p);
        Ok([leg.value, -c.dq, p, -hqq + hpq * hpq / hpp, -hpq / hpp, 1.0 / hpp])
    }

    fn polygon_action(&self, s: f64, sigma: f64, q: &[f64]) -> Result<f64, LaxError> {
        let mut a = 0.0;
        for j in 0..q.len() - 1 {
            let t = s + (j as f64 + 0.5) * sigma;
            a += sigma * self.lagrangian(t, 0.5 * (q[j] + q[j + 1]), (q[j + 1] - q[j]) / sigma)?;
        }
        Ok(a)
    }

    /// Minimal discrete action over polygons with fixed ends, by damped
    /// Newton iteration on the interior vertices (tridiagonal Hessian).
    fn relaxed_action(&self, s: f64, tau: f64, from: f64, to: f64, k: usize) -> Result<f64, LaxError> {
        let sigma = tau / k as f64;
        let mut q: Vec<f64> = (0..=k).map(|j| from + (to - from) * j as f64 / k as f64).collect();
        let mut action = self.polygon_action(s, sigma, &q)?;
        let mut grad = vec![0.0; k + 1];
        let mut diag = vec![0.0; k + 1];
        let mut off = vec![0.0; k + 1];
        for _ in 0..30 {
            grad.fill(0.0);
            diag.fill(0.0);
            off.fill(0.0);
            for j in 0..k {
                let t = s + (j as f64 + 0.5) * sigma;
                let [_, lq, lv, lqq, lqv, lvv] =
                    self.lagrangian_jet(t, 0.5 * (q[j] + q[j + 1]), (q[j + 1] - q[j]) / sigma)?;
                // f = σ L((a+b)/2, (b−a)/σ) for the segment (a, b) = (q_j, q_{j+1})
                grad[j] += 0.5 * sigma * lq - lv;
                grad[j + 1] += 0.5 * sigma * lq + lv;
                diag[j] += 0.25 * sigma * lqq - lqv + lvv / sigma;
                diag[j + 1] += 0.25 * sigma * lqq + lqv + lvv / sigma;
                off[j] = 0.25 * sigma * lqq - lvv / sigma;
            }
            // Thomas algorithm on interior vertices 1..k−1
            let m = k - 1;
            let mut c = vec![0.0; m];
            let mut d = vec![0.0; m];
            for i in 0..m {
                let (a_i, b_i, r_i) = (if i > 0 { off[i] } else { 0.0 }, diag[i + 1], -grad[i + 1]);
                let denom = b_i - a_i * if i > 0 { c[i - 1] } else { 0.0 };
                c[i] = off[i + 1] / denom;
                d[i] = (r_i - a_i * if i > 0 { d[i - 1] } else { 0.0 }) / denom;
            }
            let mut step = vec![0.0; m];
            for i in (0..m).rev() {
                step[i] = d[i] - if i + 1 < m { c[i] * step[i + 1] } else { 0.0 };
            }
            let size = step.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if !size.is_finite() {
                break;
            }
            let mut scale = 1.0;
            let mut improved = false;
            for _ in 0..20 {
                let trial: Vec<f64> = (0..=k)
                    .map(|j| if j == 0 || j == k { q[j] } else { q[j] + scale * step[j - 1] })
                    .collect();
                let a = self.polygon_action(s, sigma, &trial)?;
                if a <= action {
                    improved = a < action;
                    q = trial;
                    action = a;
                    break;
                }
                scale *= 0.5;
            }
            if !improved || size * scale < 1e-13 {
                break;
            }
        }
        Ok(action)
    }

    /// `h₀^{s,t}` by recursive halving over the lattice steps.
    pub fn potential(&self, s: f64, t: f64) -> Result<PotentialMatrix, LaxError> {
        if !(t > s) {
            return Err(LaxError::NonpositiveDuration { s, t });
        }
        let times = self.step_times(s, t);
        let mut m = self.potential_over(&times)?;
        m.s = s;
        m.t = t;
        Ok(m)
    }

    fn potential_over(&self, times: &[f64]) -> Result<PotentialMatrix, LaxError> {
        if times.len() == 2 {
            let mut m = (*self.elementary(times[0], times[1] - times[0])?).clone();
            m.s = times[0];
            m.t = times[1];
            return Ok(m);
        }
        let mid = times.len() / 2;
        let left = self.potential_over(&times[..=mid])?;
        let right = self.potential_over(&times[mid..])?;
        left.compose(&right)
    }

    /// Potential over one full period starting at an integer time.
    pub fn period_matrix(&self) -> Result<PotentialMatrix, LaxError> {
        self.potential(0.0, 1.0)
    }

    /// `T_-^{s,t} u`, applied step by step with recorded argmins.
    pub fn negative(&self, u: &GridFunction, s: f64, t: f64, norm: Normalization) -> Result<LaxResult, LaxError> {
        self.check(u)?;
        if !(t > s) {
            return Err(LaxError::NonpositiveDuration { s, t });
        }
        let times = self.step_times(s, t);
        let mut cur = u.values().to_vec();
        let mut argmins = Vec::with_capacity(times.len() - 1);
        for w in times.windows(2) {
            let tau = w[1] - w[0];
            let e = self.elementary(w[0], tau)?;
            let (next, arg) = negative_step(&cur, &e, norm.rate() * tau);
            cur = next;
            argmins.push(arg);
        }
        Ok(LaxResult {
            values: GridFunction::new_1d(cur)?,
            times,
            argmins,
        })
    }

    /// `T_+^{t,s} u` (`s < t`): data given at the later time `t`.
    pub fn positive(&self, u: &GridFunction, t: f64, s: f64, norm: Normalization) -> Result<GridFunction, LaxError> {
        self.check(u)?;
        if !(t > s) {
            return Err(LaxError::NonpositiveDuration { s, t });
        }
        let times = self.step_times(s, t);
        let mut cur = u.values().to_vec();
        for w in times.windows(2).rev() {
            let tau = w[1] - w[0];
            let e = self.elementary(w[0], tau)?;
            cur = positive_step(&cur, &e, norm.rate() * tau);
        }
        Ok(GridFunction::new_1d(cur)?)
    }

    /// `v ↦ min_z P(·, z) + v(z)` for the one-period matrix `P`, applied to a column.
    fn column_step(p: &PotentialMatrix, v: &[f64]) -> Vec<f64> {
        let n = p.n;
        (0..n)
            .into_par_iter()
            .map(|x| {
                let row = &p.entries[x * n..(x + 1) * n];
                row.iter().zip(v).fold(f64::INFINITY, |m, (a, b)| m.min(a + b))
            })
            .collect()
    }
}

fn negative_step(u: &[f64], e: &PotentialMatrix, shift: f64) -> (Vec<f64>, Vec<StepArgmin>) {
    let n = e.n;
    let out: Vec<(f64, StepArgmin)> = (0..n)
        .into_par_iter()
        .map(|x| {
            let mut best = f64::INFINITY;
            let mut arg = 0usize;
            for (y, &uy) in u.iter().enumerate() {
                let v = uy + e.entries[y * n + x];
                if v < best {
                    best = v;
                    arg = y;
                }
            }
            let winding = e.winding(arg, x).unwrap_or(0);
            (
                best + shift,
                StepArgmin {
                    source: arg as u32,
                    winding,
                },
            )
        })
        .collect();
    out.into_iter().unzip()
}

fn positive_step(u: &[f64], e: &PotentialMatrix, shift: f64) -> Vec<f64> {
    let n = e.n;
    (0..n)
        .into_par_iter()
        .map(|x| {
            let row = &e.entries[x * n..(x + 1) * n];
            let best = u
                .iter()
                .zip(row)
                .fold(f64::NEG_INFINITY, |m, (uy, exy)| m.max(uy - exy));
            best - shift
        })
        .collect()
}

pub fn potential(h: &TonelliHamiltonian, s: f64, t: f64, n: usize) -> Result<PotentialMatrix, LaxError> {
    LaxOleinik::new(h, n)?.potential(s, t)
}

pub fn lax_negative(
    u: &GridFunction,
    h: &TonelliHamiltonian,
    s: f64,
    t: f64,
    norm: Normalization,
) -> Result<LaxResult, LaxError> {
    LaxOleinik::new(h, u.resolution())?.negative(u, s, t, norm)
}

pub fn lax_positive(
    u: &GridFunction,
    h: &TonelliHamiltonian,
    t: f64,
    s: f64,
    norm: Normalization,
) -> Result<GridFunction, LaxError> {
    LaxOleinik::new(h, u.resolution())?.positive(u, t, s, norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalValueEstimate {
    pub alpha0: f64,
    pub half_width: f64,
    pub horizon_used: usize,
    /// `min_x (T_{-,0}^{0,k} 0)(x)` for `k = 0..=horizon`.
    pub minima: Vec<f64>,
}

/// α₀ as minus the asymptotic slope of the minimum of reduced value iteration.
pub fn mane_critical_value(engine: &LaxOleinik<'_>, n_max: usize) -> Result<CriticalValueEstimate, LaxError> {
    if n_max < 8 {
        return Err(LaxError::BadHorizon(format!("n_max = {n_max} < 8")));
    }
    let p = engine.period_matrix()?;
    let mut w = vec![0.0; engine.n];
    let mut minima = vec![0.0];
    let n = engine.n;
    for _ in 0..n_max {
        w = (0..n)
            .into_par_iter()
            .map(|x| (0..n).fold(f64::INFINITY, |m, y| m.min(w[y] + p.entries[y * n + x])))
            .collect();
        minima.push(w.iter().copied().fold(f64::INFINITY, f64::min));
    }
    let lo = n_max / 2;
    let ks: Vec<f64> = (lo..=n_max).map(|k| k as f64).collect();
    let ys = &minima[lo..=n_max];
    let m = ks.len() as f64;
    let kbar = ks.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxy: f64 = ks.iter().zip(ys).map(|(k, y)| (k - kbar) * (y - ybar)).sum();
    let sxx: f64 = ks.iter().map(|k| (k - kbar) * (k - kbar)).sum();
    let slope = sxy / sxx;
    let half_width = ks
        .iter()
        .zip(ys)
        .map(|(k, y)| (y - (ybar + slope * (k - kbar))).abs())
        .fold(0.0, f64::max);
    let incs: Vec<f64> = ys.windows(2).map(|w| w[1] - w[0]).collect();
    let spread = incs.iter().copied().fold(f64::NEG_INFINITY, f64::max) - incs.iter().copied().fold(f64::INFINITY, f64::min);
    if spread > 0.1 * (1.0 + slope.abs()) {
        return Err(LaxError::DivergenceDetected { spread });
    }
    Ok(CriticalValueEstimate {
        alpha0: -slope,
        half_width,
        horizon_used: n_max,
        minima,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierEstimate {
    pub barrier: PotentialMatrix,
    pub converged: bool,
    /// Largest per-period change of the running minimum over the last
    /// quarter of the window.
    pub last_change: f64,
}

fn check_window(n_min: usize, n_max: usize) -> Result<(), LaxError> {
    if n_min < 4 || n_max <= n_min {
        return Err(LaxError::BadHorizon(format!("need n_max > n_min ≥ 4, got [{n_min}, {n_max}]")));
    }
    Ok(())
}

fn quarter_start(n_min: usize, n_max: usize) -> usize {
    n_max - (n_max - n_min) / 4
}

/// Entrywise running minimum of `h_{α₀}^{s, n+t}` over `n ∈ [n_min, n_max]`
/// (`s, t ∈ [0, 1)`).
pub fn peierls_barrier(
    engine: &LaxOleinik<'_>,
    alpha0: f64,
    s: f64,
    t: f64,
    n_min: usize,
    n_max: usize,
) -> Result<BarrierEstimate, LaxError> {
    check_window(n_min, n_max)?;
    let (s, t) = (reduce(s), reduce(t));
    let p = engine.period_matrix()?;
    let head = if s == 0.0 { p.clone() } else { engine.potential(s, 1.0)? };
    let tail = if t == 0.0 { None } else { Some(engine.potential(0.0, t)?) };
    // c = h^{s, k} for integer k ≥ 1
    let mut c = head;
    let mut running: Option<PotentialMatrix> = None;
    let mut last_change: f64 = 0.0;
    let q_start = quarter_start(n_min, n_max);
    for k in 1..=n_max {
        if k > 1 {
            c = c.compose(&p)?;
        }
        if k < n_min {
            continue;
        }
        let m = match &tail {
            Some(b) => c.compose(b)?,
            None => c.clone(),
        };
        let m = m.shifted(alpha0 * (k as f64 + t - s));
        running = Some(match running {
            None => m,
            Some(mut r) => {
                let mut change: f64 = 0.0;
                for (a, b) in r.entries.iter_mut().zip(&m.entries) {
                    if *b < *a {
                        change = change.max(*a - *b);
                        *a = *b;
                    }
                }
                if k > q_start {
                    last_change = last_change.max(change);
                }
                r
            }
        });
    }
    let mut barrier = running.expect("window is nonempty");
    barrier.s = s;
    barrier.t = t;
    barrier.windings = None;
    Ok(BarrierEstimate {
        barrier,
        converged: last_change < BARRIER_TOLERANCE,
        last_change,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakKamSolution {
    /// `u(t, ·)`.
    pub values: GridFunction,
    /// `u(0, ·)`, used for the one-period fixed-point residual.
    pub at_zero: GridFunction,
    /// `‖T_+^{0,−1} u(0,·) − u(0,·)‖∞`.
    pub fixed_point_residual: f64,
    pub converged: bool,
}

/// Running minimum over `k ∈ [n_min, n_max]` of `h_{α₀}^{t, k}(·, y)`.
fn barrier_column(
    engine: &LaxOleinik<'_>,
    p: &PotentialMatrix,
    alpha0: f64,
    t: f64,
    anchor: usize,
    n_min: usize,
    n_max: usize,
) -> Result<(Vec<f64>, f64), LaxError> {
    let head = if t == 0.0 { None } else { Some(engine.potential(t, 1.0)?) };
    // col = h^{0, k−1}(·, y) for k−1 ≥ 1; k = 1 handled by the head alone
    let mut col = p.column(anchor);
    let mut running: Option<Vec<f64>> = None;
    let mut last_change: f64 = 0.0;
    let q_start = quarter_start(n_min, n_max);
    for k in 1..=n_max {
        let v: Vec<f64> = match (&head, k) {
            (None, _) => {
                if k > 1 {
                    col = LaxOleinik::column_step(p, &col);
                }
                col.clone()
            }
            (Some(a), 1) => a.column(anchor),
            (Some(a), _) => {
                if k > 2 {
                    col = LaxOleinik::column_step(p, &col);
                }
                LaxOleinik::column_step(a, &col)
            }
        };
        if k < n_min {
            continue;
        }
        let shift = alpha0 * (k as f64 - t);
        running = Some(match running {
            None => v.iter().map(|x| x + shift).collect(),
            Some(mut r) => {
                let mut change: f64 = 0.0;
                for (a, b) in r.iter_mut().zip(&v) {
                    let b = b + shift;
                    if b < *a {
                        change = change.max(*a - b);
                        *a = b;
                    }
                }
                if k > q_start {
                    last_change = last_change.max(change);
                }
                r
            }
        });
    }
    Ok((running.expect("window is nonempty"), last_change))
}

/// Positive weak-KAM solution `u(t, ·) = −h^{t,∞}(·, y)` anchored at grid
/// index `anchor`, with its one-period fixed-point residual.
///
/// The barrier is already normalised by α₀, so no further `α₀·t` term is
/// added: with it, the one-period identity would be off by exactly α₀.
pub fn positive_weak_kam(
    engine: &LaxOleinik<'_>,
    alpha0: f64,
    anchor: usize,
    t: f64,
    n_min: usize,
    n_max: usize,
) -> Result<WeakKamSolution, LaxError> {
    check_window(n_min, n_max)?;
    if anchor >= engine.n {
        return Err(LaxError::BadHorizon(format!("anchor {anchor} outside grid")));
    }
    let p = engine.period_matrix()?;
    let (b0, change0) = barrier_column(engine, &p, alpha0, 0.0, anchor, n_min, n_max)?;
    let t = reduce(t);
    let (bt, change_t) = if t == 0.0 {
        (b0.clone(), change0)
    } else {
        barrier_column(engine, &p, alpha0, t, anchor, n_min, n_max)?
    };
    let converged = change0.max(change_t) < BARRIER_TOLERANCE;
    if !converged {
        return Err(LaxError::BarrierNotConverged);
    }
    let u0 = GridFunction::new_1d(b0.iter().map(|v| -v).collect())?;
    let ut = GridFunction::new_1d(bt.iter().map(|v| -v).collect())?;
    let back = engine.positive(&u0, 0.0, -1.0, Normalization::Full(alpha0))?;
    let residual = back.sup_distance(&u0)?;
    Ok(WeakKamSolution {
        values: ut,
        at_zero: u0,
        fixed_point_residual: residual,
        converged,
    })
}

/// Backward minimiser chain of `T_-^{t−k, t} u` ending at grid point `x`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizerChain {
    pub times: Vec<f64>,
    pub indices: Vec<usize>,
    /// Positions on the universal cover, ending at `x/N`.
    pub lifts: Vec<f64>,
    /// `(L + α₀)`-action of each step.
    pub increments: Vec<f64>,
    /// `(T_-^{t−k,t} u)(x)`.
    pub end_value: f64,
    /// `u(y₀)` at the chain start.
    pub start_value: f64,
}

impl MinimizerChain {
    pub fn speeds(&self) -> Vec<f64> {
        self.lifts
            .windows(2)
            .zip(self.times.windows(2))
            .map(|(q, t)| ((q[1] - q[0]) / (t[1] - t[0])).abs())
            .collect()
    }

    pub fn action(&self) -> f64 {
        self.increments.iter().sum()
    }
}

/// Backtracks stored argmins of `T_-^{t−k,t} u` (full normalisation).
pub fn backward_minimizer(
    engine: &LaxOleinik<'_>,
    u: &GridFunction,
    alpha0: f64,
    t: f64,
    x: usize,
    k: usize,
) -> Result<MinimizerChain, LaxError> {
    if k == 0 {
        return Err(LaxError::BadHorizon("horizon must be ≥ 1".into()));
    }
    let res = engine.negative(u, t - k as f64, t, Normalization::Full(alpha0))?;
    chain_from(engine, u, &res, x, alpha0)
}

/// Backtracks the argmins stored in `res` from output point `x`.
pub fn chain_from(
    engine: &LaxOleinik<'_>,
    u: &GridFunction,
    res: &LaxResult,
    x: usize,
    alpha0: f64,
) -> Result<MinimizerChain, LaxError> {
    let n = engine.n;
    if res.argmins.is_empty() || x >= n {
        return Err(LaxError::NoStoredArgmin);
    }
    let steps = res.argmins.len();
    let mut indices = vec![0usize; steps + 1];
    let mut lifts = vec![0.0; steps + 1];
    let mut increments = vec![0.0; steps];
    indices[steps] = x;
    lifts[steps] = x as f64 / n as f64;
    for k in (0..steps).rev() {
        let out = indices[k + 1];
        let arg = res.argmins[k][out];
        let y = arg.source as usize;
        let tau = res.times[k + 1] - res.times[k];
        let e = engine.elementary(res.times[k], tau)?;
        indices[k] = y;
        let d = out as f64 / n as f64 + arg.winding as f64 - y as f64 / n as f64;
        lifts[k] = lifts[k + 1] - d;
        increments[k] = e.get(y, out) + alpha0 * tau;
    }
    Ok(MinimizerChain {
        times: res.times.clone(),
        start_value: u.values()[indices[0]],
        end_value: res.values.values()[x],
        indices,
        lifts,
        increments,
    })
}

/// Running maximum of `‖T_+^{t, t−k} u‖∞` for `k = 1..=k_max` (full operator).
pub fn positive_orbit_bounds(
    engine: &LaxOleinik<'_>,
    u: &GridFunction,
    alpha0: f64,
    t: f64,
    k_max: usize,
) -> Result<Vec<f64>, LaxError> {
    let mut cur = u.clone();
    let mut out = Vec::with_capacity(k_max);
    let mut running: f64 = 0.0;
    for k in 1..=k_max {
        let hi = t - (k - 1) as f64;
        cur = engine.positive(&cur, hi, hi - 1.0, Normalization::Full(alpha0))?;
        running = running.max(cur.sup_norm());
        out.push(running);
    }
    Ok(out)
}
