//! Hamiltonian flow `φ_H^{s,t}` on `T*T¹` with action bookkeeping.
//!
//! Integration runs on an absolute time lattice: macro nodes sit at integer
//! multiples of the macro step, with partial steps only at the endpoints.
//! Each macro interval is split into `substeps_per_macro` equal substeps,
//! and the action integrand `p·∂_pH − H` is integrated by composite Simpson
//! on exactly those samples. Because every macro interval is advanced by a
//! deterministic function of its start state, flowing `s → m → t` through a
//! lattice time `m` reproduces `s → t` bit for bit.
//!
//! Positions are integrated on the universal cover; [`PhasePoint`] carries
//! the canonical representative in `[0, 1)`.

use crate::hamiltonian::{Family, TonelliHamiltonian};
use crate::trig::reduce;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub q: f64,
    pub p: f64,
}

impl PhasePoint {
    pub fn new(q: f64, p: f64) -> Self {
        Self { q: reduce(q), p }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// Kick-drift-kick splitting; separable families only.
    StrangSplit,
    /// Classical Runge-Kutta with step-halving error control.
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSettings {
    pub macro_step: f64,
    pub integrator: Integrator,
    pub substeps_per_macro: usize,
    /// Absolute per-substep error target for RK4 (scaled by `1 + |y|`).
    pub tolerance: f64,
}

impl Default for FlowSettings {
    fn default() -> Self {
        Self {
            macro_step: 1e-2,
            integrator: Integrator::Rk4,
            substeps_per_macro: 4,
            tolerance: 1e-13,
        }
    }
}

impl FlowSettings {
    pub fn strang() -> Self {
        Self {
            integrator: Integrator::StrangSplit,
            ..Self::default()
        }
    }

    fn validate(&self, h: &TonelliHamiltonian) -> Result<(), FlowError> {
        if !(self.macro_step > 0.0 && self.macro_step <= 0.1) {
            return Err(FlowError::InvalidSettings(format!(
                "macro_step must lie in (0, 0.1], got {}",
                self.macro_step
            )));
        }
        if self.substeps_per_macro < 2 || self.substeps_per_macro % 2 != 0 {
            return Err(FlowError::InvalidSettings(format!(
                "substeps_per_macro must be even and at least 2, got {}",
                self.substeps_per_macro
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(FlowError::InvalidSettings("tolerance must be positive".into()));
        }
        if self.integrator == Integrator::StrangSplit && !h.is_separable() {
            return Err(FlowError::NotSeparable(h.family()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("adaptive step fell below 1e-9 near t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("splitting integrator needs a separable Hamiltonian, family {0:?} is not")]
    NotSeparable(Family),
    #[error("invalid flow settings: {0}")]
    InvalidSettings(String),
}

const MIN_STEP: f64 = 1e-9;

/// Solution samples at macro nodes together with action bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub points: Vec<PhasePoint>,
    /// Positions on the universal cover, aligned with `points`.
    pub lifts: Vec<f64>,
    /// `q̇ = ∂_p H` at each node.
    pub velocities: Vec<f64>,
    /// Entry `i` approximates `∫_{tᵢ}^{tᵢ₊₁} (p·q̇ − H) dτ`.
    pub action_increments: Vec<f64>,
    /// `E(τ) = −H(τ, γ(τ))`.
    pub energy_samples: Vec<f64>,
}

impl Trajectory {
    pub fn total_action(&self) -> f64 {
        self.action_increments.iter().sum()
    }

    pub fn end(&self) -> PhasePoint {
        *self.points.last().expect("trajectory has at least one point")
    }

    pub fn end_lift(&self) -> f64 {
        *self.lifts.last().expect("trajectory has at least one point")
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Trajectory of the extended autonomous flow on the level `{E + H = 0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedTrajectory {
    pub trajectory: Trajectory,
    /// `max |E(τ) + H(τ, γ(τ))|`, zero by construction.
    pub level_residual: f64,
    /// `max |dE/dτ + ∂_t H|` from fourth-order differences on substeps.
    pub energy_rate_residual: f64,
    /// `max |E(τ) − E(t₀)|`.
    pub energy_drift: f64,
}

#[derive(Clone, Copy)]
struct State {
    q: f64,
    p: f64,
}

/// Macro nodes between `s` and `t` on the absolute lattice.
pub(crate) fn lattice_nodes(s: f64, t: f64, step: f64) -> Vec<f64> {
    let per_unit = (1.0 / step).round();
    let exact = (per_unit * step - 1.0).abs() < 1e-12;
    let at = |k: i64| if exact { k as f64 / per_unit } else { k as f64 * step };
    let (lo, hi, forward) = if s <= t { (s, t, true) } else { (t, s, false) };
    let snap = 1e-9 * step;
    let k_lo = ((lo + snap) / step).floor() as i64 + 1;
    let k_hi = ((hi - snap) / step).ceil() as i64 - 1;
    let mut nodes = Vec::with_capacity((k_hi - k_lo + 3).max(2) as usize);
    nodes.push(lo);
    for k in k_lo..=k_hi {
        let x = at(k);
        if x > lo + snap && x < hi - snap {
            nodes.push(x);
        }
    }
    nodes.push(hi);
    if !forward {
        nodes.reverse();
    }
    nodes
}

fn rk4_step(h: &TonelliHamiltonian, y: State, tau: f64, dt: f64) -> State {
    let f = |tau: f64, y: State| {
        let d = h.partials(tau, y.q, y.p);
        (d.dp, -d.dq)
    };
    let (k1q, k1p) = f(tau, y);
    let (k2q, k2p) = f(tau + 0.5 * dt, State { q: y.q + 0.5 * dt * k1q, p: y.p + 0.5 * dt * k1p });
    let (k3q, k3p) = f(tau + 0.5 * dt, State { q: y.q + 0.5 * dt * k2q, p: y.p + 0.5 * dt * k2p });
    let (k4q, k4p) = f(tau + dt, State { q: y.q + dt * k3q, p: y.p + dt * k3p });
    State {
        q: y.q + dt / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
        p: y.p + dt / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
    }
}

fn rk4_adaptive(h: &TonelliHamiltonian, y: State, a: f64, b: f64, tol: f64) -> Result<State, FlowError> {
    let dt = b - a;
    if dt.abs() < MIN_STEP {
        return Err(FlowError::StepSizeUnderflow { t: a });
    }
    let full = rk4_step(h, y, a, dt);
    let mid = a + 0.5 * dt;
    let half = rk4_step(h, rk4_step(h, y, a, 0.5 * dt), mid, 0.5 * dt);
    let err = (half.q - full.q).abs().max((half.p - full.p).abs()) / 15.0;
    if !err.is_finite() {
        return Err(FlowError::StepSizeUnderflow { t: a });
    }
    if err <= tol * (1.0 + half.p.abs()) {
        return Ok(half);
    }
    let y_mid = rk4_adaptive(h, y, a, mid, tol)?;
    rk4_adaptive(h, y_mid, mid, b, tol)
}

fn strang_step(h: &TonelliHamiltonian, y: State, tau: f64, dt: f64) -> State {
    let p_half = y.p - 0.5 * dt * h.partials(tau, y.q, y.p).dq;
    let q_new = y.q + dt * h.dp(tau, y.q, p_half);
    let p_new = p_half - 0.5 * dt * h.partials(tau + dt, q_new, p_half).dq;
    State { q: q_new, p: p_new }
}

struct Integration {
    traj: Trajectory,
    /// Substep samples `(τ, q_lift, p)` including macro nodes, when requested.
    dense: Option<Vec<(f64, f64, f64)>>,
}

fn integrate(
    h: &TonelliHamiltonian,
    q_lift: f64,
    p: f64,
    s: f64,
    t: f64,
    settings: &FlowSettings,
    want_dense: bool,
) -> Result<Integration, FlowError> {
    settings.validate(h)?;
    let nodes = if s == t { vec![s] } else { lattice_nodes(s, t, settings.macro_step) };
    let m = settings.substeps_per_macro;
    let mut y = State { q: q_lift, p };
    let n = nodes.len();
    let mut traj = Trajectory {
        times: Vec::with_capacity(n),
        points: Vec::with_capacity(n),
        lifts: Vec::with_capacity(n),
        velocities: Vec::with_capacity(n),
        action_increments: Vec::with_capacity(n.saturating_sub(1)),
        energy_samples: Vec::with_capacity(n),
    };
    let mut dense = want_dense.then(Vec::new);

    let record = |traj: &mut Trajectory, tau: f64, y: State| {
        let d = h.partials(tau, y.q, y.p);
        traj.times.push(tau);
        traj.points.push(PhasePoint::new(y.q, y.p));
        traj.lifts.push(y.q);
        traj.velocities.push(d.dp);
        traj.energy_samples.push(-d.value);
    };
    record(&mut traj, nodes[0], y);
    if let Some(d) = dense.as_mut() {
        d.push((nodes[0], y.q, y.p));
    }

    let mut integrand = vec![0.0; m + 1];
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let dt = (b - a) / m as f64;
        let action_density = |tau: f64, y: State| {
            let d = h.partials(tau, y.q, y.p);
            y.p * d.dp - d.value
        };
        integrand[0] = action_density(a, y);
        for j in 0..m {
            let ta = a + dt * j as f64;
            let tb = if j + 1 == m { b } else { a + dt * (j + 1) as f64 };
            y = match settings.integrator {
                Integrator::Rk4 => rk4_adaptive(h, y, ta, tb, settings.tolerance)?,
                Integrator::StrangSplit => strang_step(h, y, ta, tb - ta),
            };
            if !(y.q.is_finite() && y.p.is_finite()) {
                return Err(FlowError::StepSizeUnderflow { t: tb });
            }
            integrand[j + 1] = action_density(tb, y);
            if let Some(d) = dense.as_mut() {
                d.push((tb, y.q, y.p));
            }
        }
        // composite Simpson over the m substeps
        let mut acc = integrand[0] + integrand[m];
        for (j, f) in integrand.iter().enumerate().take(m).skip(1) {
            acc += if j % 2 == 1 { 4.0 * f } else { 2.0 * f };
        }
        traj.action_increments.push(acc * dt / 3.0);
        record(&mut traj, b, y);
    }
    Ok(Integration { traj, dense })
}

/// `φ_H^{s,t}(x)`; flows backward when `t < s`.
pub fn flow_map(
    h: &TonelliHamiltonian,
    x: PhasePoint,
    s: f64,
    t: f64,
    settings: &FlowSettings,
) -> Result<PhasePoint, FlowError> {
    let (q, p) = flow_lifted(h, x.q, x.p, s, t, settings)?;
    Ok(PhasePoint::new(q, p))
}

/// Same as [`flow_map`] on the universal cover.
pub fn flow_lifted(
    h: &TonelliHamiltonian,
    q_lift: f64,
    p: f64,
    s: f64,
    t: f64,
    settings: &FlowSettings,
) -> Result<(f64, f64), FlowError> {
    let run = integrate(h, q_lift, p, s, t, settings, false)?;
    Ok((run.traj.end_lift(), run.traj.end().p))
}

pub fn trajectory(
    h: &TonelliHamiltonian,
    x: PhasePoint,
    s: f64,
    t: f64,
    settings: &FlowSettings,
) -> Result<Trajectory, FlowError> {
    trajectory_lifted(h, x.q, x.p, s, t, settings)
}

pub fn trajectory_lifted(
    h: &TonelliHamiltonian,
    q_lift: f64,
    p: f64,
    s: f64,
    t: f64,
    settings: &FlowSettings,
) -> Result<Trajectory, FlowError> {
    Ok(integrate(h, q_lift, p, s, t, settings, false)?.traj)
}

pub fn extended_trajectory(
    h: &TonelliHamiltonian,
    x: PhasePoint,
    s: f64,
    t: f64,
    settings: &FlowSettings,
) -> Result<ExtendedTrajectory, FlowError> {
    let run = integrate(h, x.q, x.p, s, t, settings, true)?;
    let traj = run.traj;
    let dense = run.dense.unwrap_or_default();

    let level_residual = traj
        .times
        .iter()
        .zip(&traj.lifts)
        .zip(traj.points.iter().zip(&traj.energy_samples))
        .map(|((&tau, &q), (pt, &e))| h.extended(tau, e, q, pt.p).abs())
        .fold(0.0, f64::max);
    let e0 = traj.energy_samples[0];
    let energy_drift = traj
        .energy_samples
        .iter()
        .map(|e| (e - e0).abs())
        .fold(0.0, f64::max);

    let energy: Vec<f64> = dense.iter().map(|&(tau, q, p)| -h.value(tau, q, p)).collect();
    let mut energy_rate_residual: f64 = 0.0;
    for i in 2..dense.len().saturating_sub(2) {
        let dt = dense[i + 1].0 - dense[i].0;
        let uniform = (-2..2).all(|k: isize| {
            let j = (i as isize + k) as usize;
            ((dense[j + 1].0 - dense[j].0) - dt).abs() <= 1e-9 * dt.abs()
        });
        if !uniform || dt == 0.0 {
            continue;
        }
        let rate = (energy[i - 2] - 8.0 * energy[i - 1] + 8.0 * energy[i + 1] - energy[i + 2]) / (12.0 * dt);
        let (tau, q, p) = dense[i];
        energy_rate_residual = energy_rate_residual.max((rate + h.partials(tau, q, p).dt).abs());
    }
    Ok(ExtendedTrajectory {
        trajectory: traj,
        level_residual,
        energy_rate_residual,
        energy_drift,
    })
}

/// Signed area of the triangle with the three phase points as vertices
/// (positions on the universal cover).
pub fn signed_area(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    0.5 * ((b.0 - a.0) * (c.1 - a.1) - (c.0 - a.0) * (b.1 - a.1))
}

/// Signed area enclosed by the flowed boundary of the triangle `abc`.
///
/// Each edge is sampled at `per_edge` points and transported with the lifted
/// flow; the image polygon's shoelace area then differs from the true image
/// area only by the chord error of the (now curved) edges.
pub fn transported_triangle_area(
    h: &TonelliHamiltonian,
    tri: [(f64, f64); 3],
    s: f64,
    t: f64,
    per_edge: usize,
    settings: &FlowSettings,
) -> Result<f64, FlowError> {
    let n = per_edge.max(1);
    let mut image = Vec::with_capacity(3 * n);
    for e in 0..3 {
        let (a, b) = (tri[e], tri[(e + 1) % 3]);
        for k in 0..n {
            let lam = k as f64 / n as f64;
            let q = a.0 + lam * (b.0 - a.0);
            let p = a.1 + lam * (b.1 - a.1);
            image.push(flow_lifted(h, q, p, s, t, settings)?);
        }
    }
    let (q0, p0) = image[0];
    let mut area = 0.0;
    for i in 0..image.len() {
        let (x1, y1) = image[i];
        let (x2, y2) = image[(i + 1) % image.len()];
        area += (x1 - q0) * (y2 - p0) - (x2 - q0) * (y1 - p0);
    }
    Ok(0.5 * area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trig::{TrigSeries, TrigTerm};

    #[test]
    fn lattice_nodes_include_endpoints() {
        let n = lattice_nodes(0.0, 1.0, 0.25);
        assert_eq!(n, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let n = lattice_nodes(0.1, 0.3, 0.25);
        assert_eq!(n, vec![0.1, 0.25, 0.3]);
        let n = lattice_nodes(1.0, 0.5, 0.25);
        assert_eq!(n, vec![1.0, 0.75, 0.5]);
        let n = lattice_nodes(0.0, 2.0, 0.01);
        assert_eq!(n.len(), 201);
        assert_eq!(n[100], 1.0);
    }

    #[test]
    fn free_flow_is_exact() {
        let h = TonelliHamiltonian::free();
        let x = flow_map(&h, PhasePoint::new(0.2, 0.5), 0.0, 1.0, &FlowSettings::default()).unwrap();
        assert!((x.q - 0.7).abs() < 1e-12 && (x.p - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pendulum_equilibrium_is_fixed() {
        let h = TonelliHamiltonian::pendulum();
        for t in [0.3, 1.0, 7.5] {
            let x = flow_map(&h, PhasePoint::new(0.5, 0.0), 0.0, t, &FlowSettings::default()).unwrap();
            assert!((x.q - 0.5).abs() < 1e-14 && x.p.abs() < 1e-13);
        }
    }

    #[test]
    fn action_examples() {
        let h = TonelliHamiltonian::free();
        let tr = trajectory(&h, PhasePoint::new(0.3, 0.0), 0.0, 2.0, &FlowSettings::default()).unwrap();
        assert!(tr.action_increments.iter().all(|&a| a == 0.0));
        let c = 1.3;
        let tr = trajectory(&h, PhasePoint::new(0.0, c), 0.0, 2.5, &FlowSettings::default()).unwrap();
        assert!((tr.total_action() - 2.5 * c * c / 2.0).abs() < 1e-12);
        let tr = trajectory(&TonelliHamiltonian::pendulum(), PhasePoint::new(0.0, 0.0), 0.0, 3.0, &FlowSettings::default())
            .unwrap();
        assert!((tr.total_action() + 3.0).abs() < 1e-12);
        assert_eq!(tr.len(), tr.action_increments.len() + 1);
    }

    #[test]
    fn extended_energy_examples() {
        let h = TonelliHamiltonian::free();
        let ext = extended_trajectory(&h, PhasePoint::new(0.0, 1.0), 0.0, 3.0, &FlowSettings::default()).unwrap();
        assert!(ext.trajectory.energy_samples.iter().all(|&e| e == -0.5));
        let u = TrigSeries::new(vec![TrigTerm::new(1, 1, 0.0, 0.1), TrigTerm::new(0, 2, 0.04, 0.0)]).unwrap();
        let sq = TonelliHamiltonian::shifted_quadratic(u, 0.0, 0.0);
        let ext = extended_trajectory(&sq, PhasePoint::new(0.2, 0.4), 0.0, 2.0, &FlowSettings::default()).unwrap();
        assert!(ext.energy_rate_residual <= 1e-6, "{}", ext.energy_rate_residual);
        assert_eq!(ext.level_residual, 0.0);
    }

    #[test]
    fn strang_rejects_non_separable() {
        let u = TrigSeries::new(vec![TrigTerm::spatial(1, 0.1, 0.0)]).unwrap();
        let sq = TonelliHamiltonian::shifted_quadratic(u, 0.0, 0.0);
        let r = flow_map(&sq, PhasePoint::new(0.0, 0.0), 0.0, 1.0, &FlowSettings::strang());
        assert!(matches!(r, Err(FlowError::NotSeparable(_))));
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let h = TonelliHamiltonian::free();
        let s = FlowSettings { macro_step: 0.5, ..FlowSettings::default() };
        assert!(matches!(flow_map(&h, PhasePoint::new(0.0, 0.0), 0.0, 1.0, &s), Err(FlowError::InvalidSettings(_))));
        let s = FlowSettings { substeps_per_macro: 3, ..FlowSettings::default() };
        assert!(matches!(flow_map(&h, PhasePoint::new(0.0, 0.0), 0.0, 1.0, &s), Err(FlowError::InvalidSettings(_))));
    }

    #[test]
    fn divergence_surfaces_as_underflow() {
        // ∂_q H = −p² gives ṗ = p², which blows up at t = 1 from p = 1
        let blow = crate::hamiltonian::CustomHamiltonian::new("blow-up", (-50.0, 50.0), |_, q, p| 0.5 * p * p - q * p * p);
        let h = TonelliHamiltonian::custom(blow).unwrap();
        let r = flow_map(&h, PhasePoint::new(0.0, 1.0), 0.0, 2.0, &FlowSettings::default());
        assert!(matches!(r, Err(FlowError::StepSizeUnderflow { .. })), "{r:?}");
    }
}
