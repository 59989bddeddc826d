//! Exact Lagrangian curves in `T*T¹` as closed polylines with Liouville
//! primitives.
//!
//! Nodes are stored both wrapped (`PhasePoint`) and with their base
//! coordinate lifted to the universal cover, so winding and folds are read
//! off directly. Every node also carries a *seed*: its parameter in the
//! curve's source (the initial condition it was flowed from). Resampling
//! interpolates seeds and re-flows from the source, never interpolates
//! phase points at the current time.

use crate::flow::{trajectory_lifted, FlowError, FlowSettings, PhasePoint};
use crate::grid::{GridError, GridFunction, PeriodicInterpolant};
use crate::hamiltonian::TonelliHamiltonian;
use crate::trig::{reduce, TrigSeries};
use rayon::prelude::*;
use std::sync::Arc;

pub const MIN_NODES: usize = 16;
pub const DEFAULT_SPACING: f64 = 0.02;
pub const DEFAULT_NODE_CAP: usize = 1 << 16;
pub const DEFAULT_SAG: f64 = 2.5e-7;
/// Relative factor in the discrete exactness bound.
pub const EXACTNESS_FACTOR: f64 = 1e-6;
const MERGE_PARAM: f64 = 1e-9;
const MIN_ANGLE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CurveError {
    #[error("curve needs at least {MIN_NODES} nodes, got {0}")]
    TooFewSamples(usize),
    #[error("curve has no Liouville primitive")]
    MissingPrimitive,
    #[error("resampling would exceed the node cap {0} (extreme stretching)")]
    ResamplingBudgetExceeded(usize),
    #[error("base winding is {0}, expected 1")]
    WindingMismatch(i32),
    #[error("curve is not a graph over the base")]
    NotAGraph,
    #[error("near-tangential intersection (sin angle {0:e}); action gaps unreliable")]
    TangencyDetected(f64),
    #[error("empty input")]
    EmptyInput,
    #[error("inconsistent curve data: {0}")]
    Invalid(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, PartialEq)]
enum SourceKind {
    /// Graph of `du`, parameter = base point.
    Graph(PeriodicInterpolant),
    /// Graph of `d_q S(t₀, ·)` for an explicit series, parameter = base point.
    Trig(TrigSeries),
    /// Piecewise-linear in the seed parameter; `h` integrates `p dq` exactly
    /// along each segment.
    Polyline {
        seeds: Vec<f64>,
        lifts: Vec<f64>,
        p: Vec<f64>,
        h: Vec<f64>,
        winding: i32,
    },
}

/// Initial conditions from which nodes are (re-)flowed.
#[derive(Debug, Clone, PartialEq)]
struct CurveSource {
    time: f64,
    kind: SourceKind,
    negate: bool,
}

impl CurveSource {
    /// `(q_lift, p, h)` at parameter `sigma`.
    fn initial(&self, sigma: f64) -> (f64, f64, f64) {
        let (q, p, h) = match &self.kind {
            SourceKind::Graph(u) => {
                let (v, d, _) = u.eval(sigma);
                (sigma, d, v)
            }
            SourceKind::Trig(s) => (sigma, s.derivative(self.time, sigma, 0, 1), s.value(self.time, sigma)),
            SourceKind::Polyline {
                seeds,
                lifts,
                p,
                h,
                winding,
            } => {
                let n = seeds.len();
                let base = seeds[0];
                let wraps = ((sigma - base).div_euclid(1.0)) as i64;
                let local = sigma - wraps as f64;
                let i = seeds.partition_point(|&s| s <= local).saturating_sub(1);
                let j = (i + 1) % n;
                let (sj, lj) = if j == 0 {
                    (seeds[0] + 1.0, lifts[0] + *winding as f64)
                } else {
                    (seeds[j], lifts[j])
                };
                let lam = if sj > seeds[i] { (local - seeds[i]) / (sj - seeds[i]) } else { 0.0 };
                let dq = lj - lifts[i];
                let pi = p[i];
                let pj = p[j];
                let q = lifts[i] + lam * dq + (wraps * *winding as i64) as f64;
                let pv = pi + lam * (pj - pi);
                let hv = h[i] + lam * dq * (pi + 0.5 * lam * (pj - pi));
                (q, pv, hv)
            }
        };
        if self.negate {
            (q, -p, -h)
        } else {
            (q, p, h)
        }
    }
}

/// Closed polyline in `T*T¹` with optional Liouville primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianCurve {
    nodes: Vec<PhasePoint>,
    lifts: Vec<f64>,
    primitive: Option<Vec<f64>>,
    q_winding: i32,
    seeds: Vec<f64>,
    source: Option<Arc<CurveSource>>,
    time: f64,
}

/// Fold diagnostics of the base projection.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    pub is_graph: bool,
    /// Node indices where the base coordinate reverses direction.
    pub fold_parameters: Vec<usize>,
    /// Minimum forward difference of the lifted base coordinate.
    pub min_projection_jacobian: f64,
}

/// Knobs for [`evolve`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveSettings {
    pub flow: FlowSettings,
    /// Maximal phase-space distance between consecutive nodes.
    pub spacing: f64,
    /// Maximal estimated chord sag of a segment.
    pub sag: f64,
    pub node_cap: usize,
}

impl Default for EvolveSettings {
    fn default() -> Self {
        Self {
            flow: FlowSettings::default(),
            spacing: DEFAULT_SPACING,
            sag: DEFAULT_SAG,
            node_cap: DEFAULT_NODE_CAP,
        }
    }
}

pub fn oscillation(values: &[f64]) -> Result<f64, CurveError> {
    if values.is_empty() {
        return Err(CurveError::EmptyInput);
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(hi - lo)
}

impl LagrangianCurve {
    /// Curve through explicit lifted nodes; seeds default to `i/N`.
    pub fn new(lifts: Vec<f64>, p: Vec<f64>, primitive: Option<Vec<f64>>, q_winding: i32) -> Result<Self, CurveError> {
        let n = lifts.len();
        if n < MIN_NODES {
            return Err(CurveError::TooFewSamples(n));
        }
        if p.len() != n || primitive.as_ref().is_some_and(|h| h.len() != n) {
            return Err(CurveError::Invalid("column lengths differ".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&lifts) || !finite(&p) || !primitive.as_deref().map_or(true, finite) {
            return Err(CurveError::Invalid("non-finite node".into()));
        }
        let nodes = lifts.iter().zip(&p).map(|(&q, &p)| PhasePoint::new(q, p)).collect();
        let seeds = (0..n).map(|i| i as f64 / n as f64).collect();
        Ok(Self {
            nodes,
            lifts,
            primitive,
            q_winding,
            seeds,
            source: None,
            time: 0.0,
        })
    }

    /// Graph of `du` with primitive `u`, at time 0.
    pub fn from_potential(u: &GridFunction) -> Result<Self, CurveError> {
        if u.dim() != 1 {
            return Err(GridError::BadDimension(u.dim()).into());
        }
        if u.len() < MIN_NODES {
            return Err(CurveError::TooFewSamples(u.len()));
        }
        let interp = u.interpolant()?;
        Ok(Self::from_source(
            u.resolution(),
            CurveSource {
                time: 0.0,
                kind: SourceKind::Graph(interp),
                negate: false,
            },
        ))
    }

    /// Graph of `d_q S(t, ·)` sampled at `n` equispaced base points.
    pub fn from_trig(series: &TrigSeries, t: f64, n: usize) -> Result<Self, CurveError> {
        if n < MIN_NODES {
            return Err(CurveError::TooFewSamples(n));
        }
        Ok(Self::from_source(
            n,
            CurveSource {
                time: t,
                kind: SourceKind::Trig(series.clone()),
                negate: false,
            },
        ))
    }

    fn from_source(n: usize, source: CurveSource) -> Self {
        let seeds: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let mut lifts = Vec::with_capacity(n);
        let mut nodes = Vec::with_capacity(n);
        let mut h = Vec::with_capacity(n);
        for &s in &seeds {
            let (q, p, hv) = source.initial(s);
            lifts.push(q);
            nodes.push(PhasePoint::new(q, p));
            h.push(hv);
        }
        Self {
            nodes,
            lifts,
            primitive: Some(h),
            q_winding: 1,
            seeds,
            time: source.time,
            source: Some(Arc::new(source)),
        }
    }

    pub fn zero_section(n: usize) -> Result<Self, CurveError> {
        Self::from_trig(&TrigSeries::zero(), 0.0, n)
    }

    /// Declares the time at which the nodes live (default 0 for grid
    /// potentials). Re-seeding is only possible when evolution starts here.
    pub fn at_time(mut self, t: f64) -> Self {
        if let Some(src) = &self.source {
            if src.time != t {
                self.source = None;
            }
        }
        self.time = t;
        self
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn nodes(&self) -> &[PhasePoint] {
        &self.nodes
    }

    pub fn lifts(&self) -> &[f64] {
        &self.lifts
    }

    pub fn momenta(&self) -> Vec<f64> {
        self.nodes.iter().map(|x| x.p).collect()
    }

    pub fn primitive(&self) -> Option<&[f64]> {
        self.primitive.as_deref()
    }

    pub fn q_winding(&self) -> i32 {
        self.q_winding
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Replaces the primitive (e.g. after a constant renormalisation).
    pub fn with_primitive(mut self, h: Option<Vec<f64>>) -> Result<Self, CurveError> {
        if h.as_ref().is_some_and(|h| h.len() != self.len()) {
            return Err(CurveError::Invalid("primitive length differs from node count".into()));
        }
        self.primitive = h;
        // the source no longer reproduces these primitive values
        self.source = None;
        Ok(self)
    }

    /// Lifted base coordinate of node `i + 1`, closing the loop with the winding.
    fn next_lift(&self, i: usize) -> f64 {
        let n = self.len();
        if i + 1 == n {
            self.lifts[0] + self.q_winding as f64
        } else {
            self.lifts[i + 1]
        }
    }

    fn segment(&self, i: usize) -> ((f64, f64), (f64, f64)) {
        let j = (i + 1) % self.len();
        ((self.lifts[i], self.nodes[i].p), (self.next_lift(i), self.nodes[j].p))
    }

    /// Trapezoidal `∮ p dq` around the closed polyline.
    pub fn loop_integral(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let ((q0, p0), (q1, p1)) = self.segment(i);
                0.5 * (p0 + p1) * (q1 - q0)
            })
            .sum()
    }

    /// Euclidean length in the lifted chart.
    pub fn length(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let ((q0, p0), (q1, p1)) = self.segment(i);
                (q1 - q0).hypot(p1 - p0)
            })
            .sum()
    }

    pub fn is_exact(&self) -> bool {
        self.loop_integral().abs() <= EXACTNESS_FACTOR * self.length()
    }

    /// Per-segment `h_{i+1} − h_i − ½(p_i + p_{i+1})Δq_i`.
    pub fn primitive_residuals(&self) -> Result<Vec<f64>, CurveError> {
        let h = self.primitive.as_ref().ok_or(CurveError::MissingPrimitive)?;
        let n = self.len();
        Ok((0..n)
            .map(|i| {
                let ((q0, p0), (q1, p1)) = self.segment(i);
                h[(i + 1) % n] - h[i] - 0.5 * (p0 + p1) * (q1 - q0)
            })
            .collect())
    }

    /// `EXACTNESS_FACTOR · (1 + max|p|) · max Δq`.
    pub fn exactness_bound(&self) -> f64 {
        let max_p = self.nodes.iter().fold(0.0, |m: f64, x| m.max(x.p.abs()));
        let max_dq = (0..self.len()).fold(0.0, |m: f64, i| m.max((self.next_lift(i) - self.lifts[i]).abs()));
        EXACTNESS_FACTOR * (1.0 + max_p) * max_dq
    }

    pub fn max_primitive_residual(&self) -> Result<f64, CurveError> {
        Ok(self.primitive_residuals()?.iter().fold(0.0, |m, r| m.max(r.abs())))
    }

    pub fn satisfies_discrete_exactness(&self) -> Result<bool, CurveError> {
        Ok(self.max_primitive_residual()? <= self.exactness_bound())
    }

    pub fn primitive_oscillation(&self) -> Result<f64, CurveError> {
        oscillation(self.primitive.as_ref().ok_or(CurveError::MissingPrimitive)?)
    }

    fn as_polyline_source(&self) -> Result<CurveSource, CurveError> {
        let h = self.primitive.clone().ok_or(CurveError::MissingPrimitive)?;
        Ok(CurveSource {
            time: self.time,
            kind: SourceKind::Polyline {
                seeds: self.seeds.clone(),
                lifts: self.lifts.clone(),
                p: self.momenta(),
                h,
                winding: self.q_winding,
            },
            negate: false,
        })
    }
}

/// Node state after flowing: `(q_lift, p, h)`.
type NodeState = (f64, f64, f64);

fn flow_node(
    h: &TonelliHamiltonian,
    state: NodeState,
    s: f64,
    t: f64,
    settings: &FlowSettings,
) -> Result<NodeState, FlowError> {
    let traj = trajectory_lifted(h, state.0, state.1, s, t, settings)?;
    Ok((traj.end_lift(), traj.end().p, state.2 + traj.total_action()))
}

/// Transport `curve` (living at time `s`) to time `t`, advancing the
/// primitive by the action of each node and resampling so that node spacing
/// stays below `settings.spacing` and discrete exactness holds.
pub fn evolve(
    h: &TonelliHamiltonian,
    curve: &LagrangianCurve,
    s: f64,
    t: f64,
    settings: &EvolveSettings,
) -> Result<LagrangianCurve, CurveError> {
    let prim = curve.primitive.as_ref().ok_or(CurveError::MissingPrimitive)?;
    let source = match &curve.source {
        Some(src) if curve.time == s => src.clone(),
        _ => Arc::new(curve.at_time_unchecked(s).as_polyline_source()?),
    };
    let start: Vec<NodeState> = (0..curve.len())
        .map(|i| (curve.lifts[i], curve.nodes[i].p, prim[i]))
        .collect();
    let flowed: Vec<NodeState> = start
        .par_iter()
        .map(|&x| flow_node(h, x, s, t, &settings.flow))
        .collect::<Result<_, _>>()?;
    let mut states = flowed;
    let mut seeds = curve.seeds.clone();
    let winding = curve.q_winding as f64;

    loop {
        let marks = refinement_marks(&states, winding, settings.spacing, settings.sag);
        if marks.is_empty() {
            break;
        }
        if states.len() + marks.len() > settings.node_cap {
            return Err(CurveError::ResamplingBudgetExceeded(settings.node_cap));
        }
        let n = states.len();
        let mids: Vec<f64> = marks
            .iter()
            .map(|&i| {
                let next = if i + 1 == n { seeds[0] + 1.0 } else { seeds[i + 1] };
                0.5 * (seeds[i] + next)
            })
            .collect();
        for (&i, &m) in marks.iter().zip(&mids) {
            let next = if i + 1 == n { seeds[0] + 1.0 } else { seeds[i + 1] };
            if !(m > seeds[i] && m < next) {
                // seed parameters exhausted: stretching beyond f64 resolution
                return Err(CurveError::ResamplingBudgetExceeded(settings.node_cap));
            }
        }
        let fresh: Vec<NodeState> = mids
            .par_iter()
            .map(|&sigma| flow_node(h, source.initial(sigma), source.time, t, &settings.flow))
            .collect::<Result<_, _>>()?;
        let mut merged_states = Vec::with_capacity(n + marks.len());
        let mut merged_seeds = Vec::with_capacity(n + marks.len());
        let mut k = 0;
        for i in 0..n {
            merged_states.push(states[i]);
            merged_seeds.push(seeds[i]);
            if k < marks.len() && marks[k] == i {
                merged_states.push(fresh[k]);
                merged_seeds.push(mids[k]);
                k += 1;
            }
        }
        states = merged_states;
        seeds = merged_seeds;
    }
    coarsen(&mut states, &mut seeds, winding, settings.spacing, settings.sag);

    let lifts: Vec<f64> = states.iter().map(|x| x.0).collect();
    let nodes = states.iter().map(|x| PhasePoint::new(x.0, x.1)).collect();
    let primitive = states.iter().map(|x| x.2).collect();
    Ok(LagrangianCurve {
        nodes,
        lifts,
        primitive: Some(primitive),
        q_winding: curve.q_winding,
        seeds,
        source: Some(source),
        time: t,
    })
}

/// Resamples a curve in place (no flow) until the spacing, sag and
/// exactness criteria of [`evolve`] hold.
pub fn refine(curve: &LagrangianCurve, settings: &EvolveSettings) -> Result<LagrangianCurve, CurveError> {
    let t = curve.time;
    evolve(&TonelliHamiltonian::free(), curve, t, t, settings)
}

impl LagrangianCurve {
    fn at_time_unchecked(&self, t: f64) -> LagrangianCurve {
        let mut c = self.clone();
        c.time = t;
        c
    }
}

fn segment_stats(states: &[NodeState], winding: f64, i: usize) -> (f64, f64, f64) {
    let n = states.len();
    let a = states[i];
    let b = states[(i + 1) % n];
    let qb = if i + 1 == n { b.0 + winding } else { b.0 };
    let dq = qb - a.0;
    let dp = b.1 - a.1;
    let residual = b.2 - a.2 - 0.5 * (a.1 + b.1) * dq;
    (dq, dq.hypot(dp), residual)
}

fn exactness_target(states: &[NodeState], winding: f64) -> f64 {
    let max_p = states.iter().fold(0.0, |m: f64, x| m.max(x.1.abs()));
    let max_dq = (0..states.len()).fold(0.0, |m: f64, i| m.max(segment_stats(states, winding, i).0.abs()));
    // half the admissible bound, so that the check after evolution has slack
    0.5 * EXACTNESS_FACTOR * (1.0 + max_p) * max_dq
}

/// Segments to split, found by a sequential scan.
fn refinement_marks(states: &[NodeState], winding: f64, spacing: f64, sag: f64) -> Vec<usize> {
    let n = states.len();
    let target = exactness_target(states, winding);
    let mut marks = vec![false; n];
    for (i, m) in marks.iter_mut().enumerate() {
        let (_, len, res) = segment_stats(states, winding, i);
        *m = len > spacing || res.abs() > target;
    }
    // a node's distance to its neighbours' chord is about four times the
    // sag of each adjacent segment
    let lifted = |k: isize| {
        let j = k.rem_euclid(n as isize) as usize;
        let wraps = k.div_euclid(n as isize) as f64;
        (states[j].0 + wraps * winding, states[j].1)
    };
    for i in 0..n {
        let a = lifted(i as isize - 1);
        let b = lifted(i as isize);
        let c = lifted(i as isize + 1);
        let (dx, dy) = (c.0 - a.0, c.1 - a.1);
        let chord = dx.hypot(dy);
        if chord == 0.0 {
            continue;
        }
        let dist = ((b.0 - a.0) * dy - (b.1 - a.1) * dx).abs() / chord;
        if 0.25 * dist > sag {
            marks[(i + n - 1) % n] = true;
            marks[i] = true;
        }
    }
    (0..n).filter(|&i| marks[i]).collect()
}

/// Drops nodes whose neighbours are closer than a third of the spacing when
/// the merged segment stays short, exact and flat.
fn coarsen(states: &mut Vec<NodeState>, seeds: &mut Vec<f64>, winding: f64, spacing: f64, sag: f64) {
    if states.len() <= 2 * MIN_NODES {
        return;
    }
    let target = 0.25 * exactness_target(states, winding);
    let mut keep = vec![true; states.len()];
    let n = states.len();
    let mut i = 1;
    let mut removed = 0;
    while i + 1 < n && n - removed > 2 * MIN_NODES {
        let prev = states[i - 1];
        let cur = states[i];
        let next = states[i + 1];
        let short = (cur.0 - prev.0).hypot(cur.1 - prev.1) < spacing / 3.0
            || (next.0 - cur.0).hypot(next.1 - cur.1) < spacing / 3.0;
        let dq = next.0 - prev.0;
        let merged_len = dq.hypot(next.1 - prev.1);
        let merged_res = next.2 - prev.2 - 0.5 * (prev.1 + next.1) * dq;
        let off_chord = if merged_len > 0.0 {
            ((cur.0 - prev.0) * (next.1 - prev.1) - (cur.1 - prev.1) * dq).abs() / merged_len
        } else {
            0.0
        };
        if short && merged_len <= spacing && merged_res.abs() <= target && off_chord <= sag {
            keep[i] = false;
            removed += 1;
            i += 2;
        } else {
            i += 1;
        }
    }
    if removed == 0 {
        return;
    }
    let mut k = 0;
    states.retain(|_| {
        k += 1;
        keep[k - 1]
    });
    let mut k = 0;
    seeds.retain(|_| {
        k += 1;
        keep[k - 1]
    });
}

/// Distance from `(q, p)` (any lift) to the segment `a → b` in the lifted
/// chart, minimised over the integer translates of the point.
fn point_segment_distance(q: f64, p: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let mid = 0.5 * (a.0 + b.0);
    let base = q + (mid - q).round();
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let mut best = f64::INFINITY;
    for shift in [-1.0, 0.0, 1.0] {
        let x = base + shift;
        let lam = if len2 > 0.0 {
            (((x - a.0) * dx + (p - a.1) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let d = (x - a.0 - lam * dx).hypot(p - a.1 - lam * dy);
        best = best.min(d);
    }
    best
}

fn directed_hausdorff(a: &LagrangianCurve, b: &LagrangianCurve) -> f64 {
    let segs: Vec<_> = (0..b.len()).map(|j| b.segment(j)).collect();
    a.nodes
        .par_iter()
        .map(|x| {
            segs.iter()
                .map(|&(s0, s1)| point_segment_distance(x.q, x.p, s0, s1))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| 0.0, f64::max)
}

/// Symmetric Hausdorff distance between the node sets and the opposite
/// polylines (torus distance in `q`, Euclidean in `p`).
pub fn hausdorff_distance(a: &LagrangianCurve, b: &LagrangianCurve) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

pub fn graph_check(curve: &LagrangianCurve) -> Result<FoldReport, CurveError> {
    if curve.q_winding != 1 {
        return Err(CurveError::WindingMismatch(curve.q_winding));
    }
    let n = curve.len();
    let diffs: Vec<f64> = (0..n).map(|i| curve.next_lift(i) - curve.lifts[i]).collect();
    let min_jac = diffs.iter().copied().fold(f64::INFINITY, f64::min);
    let mut folds = Vec::new();
    for i in 0..n {
        let before = diffs[(i + n - 1) % n] > 0.0;
        let after = diffs[i] > 0.0;
        if before != after {
            folds.push(i);
        }
    }
    if folds.is_empty() && min_jac <= 0.0 {
        // every step non-forward cannot happen with winding 1; keep the
        // invariant is_graph ⇔ min_jac > 0 regardless
        folds.push(0);
    }
    Ok(FoldReport {
        is_graph: folds.is_empty(),
        fold_parameters: folds,
        min_projection_jacobian: min_jac,
    })
}

/// `(q, p) ↦ (q, −p)`, primitive negated.
pub fn invert(curve: &LagrangianCurve) -> LagrangianCurve {
    let mut out = curve.clone();
    for x in &mut out.nodes {
        x.p = -x.p;
    }
    if let Some(h) = out.primitive.as_mut() {
        for v in h.iter_mut() {
            *v = -*v;
        }
    }
    out.source = curve.source.as_ref().map(|src| {
        let mut s = (**src).clone();
        s.negate = !s.negate;
        Arc::new(s)
    });
    out
}

impl LagrangianCurve {
    /// `(p, h)` above base point `q` for a graph curve: `p` linear along
    /// segments, `h` its exact integral. `None` when the curve folds.
    pub fn sample_graph(&self, q: f64) -> Option<(f64, Option<f64>)> {
        if !graph_check(self).ok()?.is_graph {
            return None;
        }
        Some(graph_sample(self, q))
    }
}

fn graph_sample(curve: &LagrangianCurve, q: f64) -> (f64, Option<f64>) {
    let q0 = curve.lifts[0];
    let x = q0 + reduce(q - q0);
    let i = curve.lifts.partition_point(|&l| l <= x).saturating_sub(1);
    let ((a, pa), (b, pb)) = curve.segment(i);
    let lam = if b > a { ((x - a) / (b - a)).clamp(0.0, 1.0) } else { 0.0 };
    let p = pa + lam * (pb - pa);
    let h = curve.primitive.as_ref().map(|h| {
        let d = x - a;
        h[i] + d * (pa + 0.5 * lam * (pb - pa))
    });
    (p, h)
}

/// `{(q, p_a + p_b)}` over the union of both base samplings.
pub fn fibred_sum(a: &LagrangianCurve, b: &LagrangianCurve) -> Result<LagrangianCurve, CurveError> {
    if !graph_check(a)?.is_graph || !graph_check(b)?.is_graph {
        return Err(CurveError::NotAGraph);
    }
    let mut qs: Vec<f64> = a.nodes.iter().chain(&b.nodes).map(|x| reduce(x.q)).collect();
    qs.sort_by(f64::total_cmp);
    qs.dedup_by(|x, y| (*x - *y).abs() <= 1e-12);
    if qs.len() > 1 && (qs[0] + 1.0 - qs[qs.len() - 1]) <= 1e-12 {
        qs.pop();
    }
    let with_h = a.primitive.is_some() && b.primitive.is_some();
    let mut p = Vec::with_capacity(qs.len());
    let mut h = Vec::with_capacity(qs.len());
    for &q in &qs {
        let (pa, ha) = graph_sample(a, q);
        let (pb, hb) = graph_sample(b, q);
        p.push(pa + pb);
        if with_h {
            h.push(ha.unwrap_or(0.0) + hb.unwrap_or(0.0));
        }
    }
    let out = LagrangianCurve::new(qs, p, with_h.then_some(h), 1)?;
    Ok(out.at_time(a.time))
}

/// `Osc_i(h_i − u(q_i))`: the reduced-complexity gauge against the graph of `du`.
pub fn reduced_complexity_gauge(curve: &LagrangianCurve, limit: &GridFunction) -> Result<f64, CurveError> {
    let h = curve.primitive.as_ref().ok_or(CurveError::MissingPrimitive)?;
    let u = limit.interpolant()?;
    let diffs: Vec<f64> = curve.nodes.iter().zip(h).map(|(x, hv)| hv - u.value(x.q)).collect();
    oscillation(&diffs)
}

/// Primitive at fraction `s` of a segment: the exact integral of the linear
/// `p dq`, with the (tiny) discrete residual spread linearly so that both
/// endpoint values are reproduced.
fn segment_primitive(h0: f64, h1: f64, a: (f64, f64), b: (f64, f64), s: f64) -> f64 {
    let dq = b.0 - a.0;
    let dp = b.1 - a.1;
    let residual = h1 - h0 - 0.5 * (a.1 + b.1) * dq;
    h0 + s * dq * (a.1 + 0.5 * s * dp) + s * residual
}

/// `h_a − h_b` at the transverse intersections of two curves, sorted.
pub fn intersection_action_gap(a: &LagrangianCurve, b: &LagrangianCurve) -> Result<Vec<f64>, CurveError> {
    let ha = a.primitive.as_ref().ok_or(CurveError::MissingPrimitive)?;
    let hb = b.primitive.as_ref().ok_or(CurveError::MissingPrimitive)?;
    let (na, nb) = (a.len(), b.len());
    let segs_b: Vec<_> = (0..nb).map(|j| b.segment(j)).collect();
    let per_segment: Vec<Result<Vec<(f64, f64)>, CurveError>> = (0..na)
        .into_par_iter()
        .map(|i| {
            let ((ax0, ay0), (ax1, ay1)) = a.segment(i);
            let (dx, dy) = (ax1 - ax0, ay1 - ay0);
            let la = dx.hypot(dy);
            let (plo, phi) = (ay0.min(ay1), ay0.max(ay1));
            let gap_a = |s: f64| segment_primitive(ha[i], ha[(i + 1) % na], (ax0, ay0), (ax1, ay1), s);
            let mut hits = Vec::new();
            for (j, &((bx0, by0), (bx1, by1))) in segs_b.iter().enumerate() {
                if by0.max(by1) < plo - 1e-12 || by0.min(by1) > phi + 1e-12 {
                    continue;
                }
                let (ex, ey) = (bx1 - bx0, by1 - by0);
                let lb = ex.hypot(ey);
                if la == 0.0 || lb == 0.0 {
                    continue;
                }
                let gap_b = |r: f64| segment_primitive(hb[j], hb[(j + 1) % nb], (bx0, by0), (bx1, by1), r);
                let shift0 = (0.5 * (ax0 + ax1) - 0.5 * (bx0 + bx1)).round();
                for k in [-1.0, 0.0, 1.0] {
                    let (cx, cy) = (bx0 + shift0 + k, by0);
                    let (wx, wy) = (cx - ax0, cy - ay0);
                    let cross = dx * ey - dy * ex;
                    let sin = cross.abs() / (la * lb);
                    let scale = 1e-12 * (1.0 + la + lb);
                    if sin < MIN_ANGLE {
                        // collinear overlap counts as contact at the overlap ends
                        let off_line = (dx * wy - dy * wx).abs() / la;
                        if off_line > scale {
                            if sin > 0.0 {
                                // nearly parallel: only a problem if they actually cross
                                let s = (wx * ey - wy * ex) / cross;
                                let r = (wx * dy - wy * dx) / cross;
                                if (-1e-12..=1.0 + 1e-12).contains(&s) && (-1e-12..=1.0 + 1e-12).contains(&r) {
                                    return Err(CurveError::TangencyDetected(sin));
                                }
                            }
                            continue;
                        }
                        let proj = |x: f64, y: f64| ((x - ax0) * dx + (y - ay0) * dy) / (la * la);
                        let r0 = proj(cx, cy);
                        let r1 = proj(cx + ex, cy + ey);
                        for (sa, rb) in [(r0, 0.0), (r1, 1.0)] {
                            if (-1e-12..=1.0 + 1e-12).contains(&sa) {
                                let sa = sa.clamp(0.0, 1.0);
                                hits.push((i as f64 + sa, gap_a(sa) - gap_b(rb)));
                            }
                        }
                        for sa in [0.0, 1.0] {
                            let x = ax0 + sa * dx;
                            let y = ay0 + sa * dy;
                            let rb = ((x - cx) * ex + (y - cy) * ey) / (lb * lb);
                            if (-1e-12..=1.0 + 1e-12).contains(&rb) {
                                hits.push((i as f64 + sa, gap_a(sa) - gap_b(rb.clamp(0.0, 1.0))));
                            }
                        }
                        continue;
                    }
                    let s = (wx * ey - wy * ex) / cross;
                    let r = (wx * dy - wy * dx) / cross;
                    if (-1e-12..=1.0 + 1e-12).contains(&s) && (-1e-12..=1.0 + 1e-12).contains(&r) {
                        let (s, r) = (s.clamp(0.0, 1.0), r.clamp(0.0, 1.0));
                        hits.push((i as f64 + s, gap_a(s) - gap_b(r)));
                    }
                }
            }
            Ok(hits)
        })
        .collect();
    let mut hits = Vec::new();
    for seg in per_segment {
        hits.extend(seg?);
    }
    hits.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(hits.len());
    for (param, gap) in hits {
        match merged.last() {
            Some(&(last, _)) if param - last <= MERGE_PARAM => {}
            _ => merged.push((param, gap)),
        }
    }
    if merged.len() > 1 {
        let first = merged[0].0;
        let last = merged[merged.len() - 1].0;
        if first + na as f64 - last <= MERGE_PARAM {
            merged.pop();
        }
    }
    let mut gaps: Vec<f64> = merged.into_iter().map(|x| x.1).collect();
    gaps.sort_by(f64::total_cmp);
    Ok(gaps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    fn sine_potential(a: f64, n: usize) -> GridFunction {
        GridFunction::sample_1d(n, |q| a * (TAU * q).sin()).unwrap()
    }

    #[test]
    fn oscillation_examples() {
        assert_eq!(oscillation(&[2.0; 5]).unwrap(), 0.0);
        assert_eq!(oscillation(&[-1.0, 3.0, 0.5]).unwrap(), 4.0);
        assert_eq!(oscillation(&[]), Err(CurveError::EmptyInput));
        let u = sine_potential(1.0, 64);
        assert!((oscillation(u.values()).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn from_potential_of_sine() {
        let a = 0.3;
        let c = LagrangianCurve::from_potential(&sine_potential(a, 64)).unwrap();
        assert_eq!(c.len(), 64);
        for (i, x) in c.nodes().iter().enumerate() {
            let q = i as f64 / 64.0;
            assert!((x.p - TAU * a * (TAU * q).cos()).abs() < 1e-12);
        }
        assert!(c.loop_integral().abs() <= 1e-10);
        assert!(graph_check(&c).unwrap().is_graph);
        assert_eq!(
            LagrangianCurve::from_potential(&sine_potential(1.0, 8)),
            Err(CurveError::TooFewSamples(8))
        );
    }

    #[test]
    fn zero_section_is_fixed_by_free_flow() {
        let z = LagrangianCurve::zero_section(32).unwrap();
        let e = evolve(&TonelliHamiltonian::free(), &z, 0.0, 1.0, &EvolveSettings::default()).unwrap();
        assert!(hausdorff_distance(&z, &e) == 0.0);
        assert!(e.primitive().unwrap().iter().all(|&h| h == 0.0));
    }

    #[test]
    fn hausdorff_of_vertical_translate() {
        let z = LagrangianCurve::zero_section(32).unwrap();
        let eps = 0.125;
        let shifted = LagrangianCurve::new(
            z.lifts().to_vec(),
            vec![eps; 32],
            None,
            1,
        )
        .unwrap();
        assert!((hausdorff_distance(&z, &shifted) - eps).abs() < 1e-15);
        assert_eq!(hausdorff_distance(&z, &z), 0.0);
    }

    #[test]
    fn inversion_is_an_involution() {
        let c = LagrangianCurve::from_potential(&sine_potential(0.2, 32)).unwrap();
        let back = invert(&invert(&c));
        for (x, y) in c.nodes().iter().zip(back.nodes()) {
            assert_eq!(x.p.to_bits(), y.p.to_bits());
        }
        let neg = invert(&c);
        let direct = LagrangianCurve::from_potential(&sine_potential(-0.2, 32)).unwrap();
        assert!(hausdorff_distance(&neg, &direct) < 1e-12);
    }

    #[test]
    fn fibred_sum_cancels_inverse() {
        let c = LagrangianCurve::from_potential(&sine_potential(0.2, 32)).unwrap();
        let s = fibred_sum(&c, &invert(&c)).unwrap();
        let z = LagrangianCurve::zero_section(32).unwrap();
        assert!(hausdorff_distance(&s, &z) < 1e-12);
        assert!(s.primitive().unwrap().iter().all(|h| h.abs() < 1e-12));
    }

    #[test]
    fn gauge_ignores_constants() {
        let u = sine_potential(0.4, 64);
        let c = LagrangianCurve::from_potential(&u).unwrap();
        assert!(reduced_complexity_gauge(&c, &u).unwrap() < 1e-13);
        let h17: Vec<f64> = c.primitive().unwrap().iter().map(|h| h + 17.0).collect();
        let c17 = c.clone().with_primitive(Some(h17)).unwrap();
        assert!(reduced_complexity_gauge(&c17, &u).unwrap() < 1e-12);
    }

    #[test]
    fn gaps_of_two_graphs_are_critical_values() {
        // u − v = 0.1 sin(2πq): critical values ±0.1
        let u = GridFunction::sample_1d(128, |q| 0.3 * (TAU * q).cos() + 0.1 * (TAU * q).sin()).unwrap();
        let v = GridFunction::sample_1d(128, |q| 0.3 * (TAU * q).cos()).unwrap();
        let gaps = intersection_action_gap(
            &LagrangianCurve::from_potential(&u).unwrap(),
            &LagrangianCurve::from_potential(&v).unwrap(),
        )
        .unwrap();
        assert_eq!(gaps.len(), 2, "{gaps:?}");
        assert!((gaps[0] + 0.1).abs() < 1e-3 && (gaps[1] - 0.1).abs() < 1e-3, "{gaps:?}");
    }

    #[test]
    fn gaps_of_identical_curves_are_constant() {
        let c = LagrangianCurve::from_potential(&sine_potential(0.2, 32)).unwrap();
        let gaps = intersection_action_gap(&c, &c).unwrap();
        assert!(!gaps.is_empty());
        assert!(gaps.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn shock_produces_fold() {
        let u0 = GridFunction::sample_1d(256, |q| (TAU * q).sin() / (2.0 * PI * PI)).unwrap();
        let c = LagrangianCurve::from_potential(&u0).unwrap();
        let free = TonelliHamiltonian::free();
        let before = evolve(&free, &c, 0.0, 0.25, &EvolveSettings::default()).unwrap();
        assert!(graph_check(&before).unwrap().is_graph);
        let after = evolve(&free, &c, 0.0, 1.0, &EvolveSettings::default()).unwrap();
        let rep = graph_check(&after).unwrap();
        assert!(!rep.is_graph);
        assert_eq!(rep.fold_parameters.len(), 2);
        assert!(after.satisfies_discrete_exactness().unwrap());
    }
}
