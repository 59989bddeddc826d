//! Command-line entry points. Every subcommand builds a [`ReportBundle`]
//! which is then emitted to the output directory.

use std::path::PathBuf;

use birkhoff_core::calibration::{
    calibrated_curve, calibration_defect, CurveSampler, SpaceTimeFunction, DOMINATION_TOLERANCE,
};
use birkhoff_core::flow::{flow_lifted, trajectory, FlowSettings, PhasePoint};
use birkhoff_core::grid::GridFunction;
use birkhoff_core::lax_oleinik::{
    mane_critical_value, peierls_barrier, positive_weak_kam, LaxError, LaxOleinik, Normalization,
};
use birkhoff_core::spectral::{selector_function, Base, FiberAxis, SampledFqi};
use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::{parse_terms, CalibrationSource, ExperimentConfig, FamilyName};
use crate::error::LabError;
use crate::experiments::{run_autonomous_invariance, run_iteration_experiment, run_recurrence_experiment};
use crate::io::{fmt_f64, fqi_files, grid_csv, json_text, potential_csv};
use crate::report::{emit_reports, ReportBundle, Verdict};

/// Flow round-trip residual accepted by `flow`.
pub const GROUP_LAW_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Parser)]
#[command(name = "birkhoff-lab", version, about = "Weak-KAM and Birkhoff-recurrence experiments on the circle")]
pub struct Cli {
    /// INI experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides [output] dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Grid resolution N (overrides [experiment] resolution).
    #[arg(long, global = true)]
    pub resolution: Option<usize>,
    /// Suppress the summary line.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Integrate one trajectory and check the flow group law.
    Flow,
    /// Action potential matrix between two times.
    Potential,
    /// Negative and positive Lax-Oleinik evolution of the initial potential.
    Lax,
    /// Mañé critical value from the growth of the potentials.
    Mane,
    /// Peierls barrier and a positive weak-KAM solution.
    Barrier,
    /// Spectral invariants and graph selector of a sampled generating function.
    Spectral,
    /// Calibrated curve and domination sweep.
    Calibrate,
    /// Curve iteration with the reduced-complexity recurrence detector.
    Birkhoff,
    /// Value-function recurrence under the Lax-Oleinik operators.
    Recurrence,
    /// Invariance of graph(du) for an autonomous fixed point.
    Invariance,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Flow => "flow",
            Command::Potential => "potential",
            Command::Lax => "lax",
            Command::Mane => "mane",
            Command::Barrier => "barrier",
            Command::Spectral => "spectral",
            Command::Calibrate => "calibrate",
            Command::Birkhoff => "birkhoff",
            Command::Recurrence => "recurrence",
            Command::Invariance => "invariance",
        }
    }
}

pub fn run_command(command: Command, cfg: &ExperimentConfig) -> Result<ReportBundle, LabError> {
    match command {
        Command::Flow => run_flow(cfg),
        Command::Potential => run_potential(cfg),
        Command::Lax => run_lax(cfg),
        Command::Mane => run_mane(cfg),
        Command::Barrier => run_barrier(cfg),
        Command::Spectral => run_spectral(cfg),
        Command::Calibrate => run_calibrate(cfg),
        Command::Birkhoff => run_iteration_experiment(cfg),
        Command::Recurrence => run_recurrence_experiment(cfg),
        Command::Invariance => run_autonomous_invariance(cfg),
    }
}

/// Parses arguments, runs, emits, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 10 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok((verdict, dir)) => {
            if !cli.quiet {
                println!("{} {} -> {}", cli.command.name(), verdict.as_str(), dir.display());
            }
            verdict.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<(Verdict, PathBuf), LabError> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let cfg = cfg.with_overrides(cli.seed, cli.resolution, cli.out.clone())?;
    let bundle = run_command(cli.command, &cfg)?;
    emit_reports(&bundle, &cfg.output_dir)?;
    Ok((bundle.verdict, cfg.output_dir.clone()))
}

fn run_flow(cfg: &ExperimentConfig) -> Result<ReportBundle, LabError> {
    let h = cfg.hamiltonian.build()?;
    let f = &cfg.flow;
    let settings = FlowSettings::default();
    let tr = trajectory(&h, PhasePoint::new(f.q0, f.p0), f.t0, f.t1, &settings)?;
    let (q_back, p_back) = flow_lifted(&h, tr.end_lift(), tr.end().p, f.t1, f.t0, &settings)?;
    let group = (q_back - f.q0.rem_euclid(1.0)).abs().max((p_back - f.p0).abs());
    let mut bundle = ReportBundle::empty("flow", cfg.echo(), cfg.seed);
    let mut csv = String::from("index,t,q,p,action\n");
    let mut action = 0.0;
    for i in 0..tr.len() {
        if i > 0 {
            action += tr.action_increments[i - 1];
        }
        let x = tr.points[i];
        csv.push_str(&format!(
            "{i},{},{},{},{}\n",
            fmt_f64(tr.times[i]),
            fmt_f64(x.q),
            fmt_f64(x.p),
            fmt_f64(action)
        ));
    }
    if h.is_autonomous() {
        let e0 = tr.energy_samples[0];
        let drift = tr.energy_samples.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max);
        bundle.set("energy_drift", drift);
    }
    bundle.set("end_q", tr.end().q);
    bundle.set("end_p", tr.end().p);
    bundle.set("action", tr.total_action());
    bundle.set("group_law_residual", group);
    bundle.verdict = if group <= GROUP_LAW_TOLERANCE { Verdict::Pass } else { Verdict::Fail };
    bundle.curves.push(("trajectory".into(), tr.points.iter().map(|x| (x.q, x.p)).collect()));
    bundle.files.push(("trajectory.csv".into(), csv));
    Ok(bundle)
}

fn engine_for<'a>(cfg: &ExperimentConfig, h: &'a birkhoff_core::hamiltonian::TonelliHamiltonian) -> Result<LaxOleinik<'a>, LabError> {
    Ok(LaxOleinik::with_settings(h, cfg.resolution, cfg.potential_settings(h))?)
}

fn run_potential(cfg: &ExperimentConfig) -> Result<ReportBundle, LabError> {
    let h = cfg.hamiltonian.build()?;
    let e = engine_for(cfg, &h)?;
    let m = e.potential(cfg.potential_s, cfg.potential_t)?;
    let mut bundle = ReportBundle::empty("potential", cfg.echo(), cfg.seed);
    bundle.set("min", m.min());
    bundle.set("max", m.entries().iter().copied().fold(f64::NEG_INFINITY, f64::max));
    bundle.set("boundary_winding_active", m.boundary_winding_active);
    if m.boundary_winding_active {
        bundle.note("some minimisers use the outermost winding: widen the winding window");
        bundle.verdict = Verdict::Inconclusive;
    } else {
        bundle.verdict = Verdict::Pass;
    }
    bundle.files.push(("potential.csv".into(), potential_csv(&m)));
    Ok(bundle)
}

fn run_lax(cfg: &ExperimentConfig) -> Result<ReportBundle, LabError> {
    let h = cfg.hamiltonian.build()?;
    let e = engine_for(cfg, &h)?;
    let alpha0 = cfg.critical_value(&h, &e)?;
    let v = cfg.initial_series()?;
    let u0 = GridFunction::sample_1d(cfg.resolution, |q| v.value(0.0, q))?;
    let t = cfg.lax_horizon;
    let neg = e.negative(&u0, 0.0, t, Normalization::Full(alpha0))?.values;
    let pos = e.positive(&u0, 0.0, -t, Normalization::Full(alpha0))?;
    let mut bundle = ReportBundle::empty("lax", cfg.echo(), cfg.seed);
    bundle.set("alpha0", alpha0);
    bundle.set("negative_oscillation", neg.oscillation());
    bundle.set("positive_oscillation", pos.oscillation());
    // T_+ T_- u ≤ u ≤ T_- T_+ u
    let back = e.positive(&neg, t, 0.0, Normalization::Full(alpha0))?;
    let fwd = e.negative(&pos, -t, 0.0, Normalization::Full(alpha0))?.values;
    let below = back.zip_with(&u0, |a, b| a - b)?.max();
    let above = u0.zip_with(&fwd, |a, b| a - b)?.max();
    bundle.set("duality_excess", below.max(above));
    bundle.verdict = if below.max(above) <= 1e-12 { Verdict::Pass } else { Verdict::Fail };
    bundle.files.push(("lax_negative.csv".into(), grid_csv(&neg)));
    bundle.files.push(("lax_positive.csv".into(), grid_csv(&pos)));
    Ok(bundle)
}

fn exact_critical_value(cfg: &ExperimentConfig, h: &birkhoff_core::hamiltonian::TonelliHamiltonian) -> Option<f64> {
    match cfg.hamiltonian.family {
        FamilyName::ShiftedQuadratic => Some(cfg.hamiltonian.offset),
        FamilyName::Mechanical if h.is_autonomous() => h.mechanical_critical_value(),
        FamilyName::Mechanical => None,
    }
}

fn run_mane(cfg: &ExperimentConfig) -> Result<ReportBundle, LabError> {
    let h = cfg.hamiltonian.build()?;
    let e = engine_for(cfg, &h)?;
    let mut bundle = ReportBundle::empty("mane", cfg.echo(), cfg.seed);
    match mane_critical_value(&e, cfg.mane_horizon) {
        Ok(est) => {
            bundle.set("alpha0", est.alpha0);
            bundle.set("half_width", est.half_width);
            bundle.set("horizon_used", est.horizon_used);
            bundle.set("minima", est.minima.clone());
            if let Some(x) = exact_critical_value(cfg, &h) {
                bundle.set("closed_form", x);
            }
            bundle.verdict = Verdict::Pass;
            let pts = est.minima.iter().enumerate().map(|(k, &m)| ((k + 1) as f64, m.abs().max(1e-16))).collect();
            bundle.series.push(("|min h^{0,n}|".into(), pts));
        }
        Err(LaxError::DivergenceDetected { spread }) => {
            bundle.set("increment_spread", spread);
            bundle.note("normalised potentials did not settle into linear growth");
            bundle.verdict = Verdict::Inconclusive;
        }
        Err(e) => return Err(e.into()),
    }
    Ok(bundle)
}

fn run_barrier(cfg: &ExperimentConfig) -> Result<ReportBundle, LabError> {
    let h = cfg.hamiltonian.build()?;
    let e = engine_for(cfg, &h)?;
    let alpha0 = cfg.critical_value(&h, &e)?;
    let b = peierls_barrier(&e, alpha0, cfg.barrier_s, cfg.barrier_t, cfg.barrier_n_min, cfg.barrier_n_max)?;
    let mut bundle = ReportBundle::empty("barrier", cfg.echo(), cfg.seed);
    bundle.set("alpha0", alpha0);
    bundle.set("converged", b.converged);
    bundle.set("last_change", b.last_change);
    bundle.set("barrier_min", b.barrier.min());
    bundle.set("barrier_00", b.barrier.get(0, 0));
    bundle.files.push(("barrier.csv".into(), potential_csv(&b.barrier)));
    bundle.verdict = if b.converged { Verdict::Pass } else { Verdict::Inconclusive };
    if cfg.barrier_s == cfg.barrier_t {
        let n = e.resolution();
        let anchor = (0..n).fold(0, |best, i| if b.barrier.get(i, i) < b.barrier.get(best, best) { i } else { best });
        match positive_weak_kam(&e, alpha0, anchor, cfg.barrier_t, cfg.barrier_n_min, cfg.barrier_n_max) {
            Ok(w) => {
                bundle.set("anchor_q", anchor as f64 / n as f64);
                bundle.set("weak_kam_residual", w.fixed_point_residual);
                bundle.set("weak_kam_converged", w.converged);
                bundle.files.push(("weak_kam.csv".into(), grid_csv(&w.values)));
            }
            Err(LaxError::BarrierNotConverged) => {
                bundle.note("barrier did not converge: weak-KAM solution skipped");
                bundle.verdict = Verdict::Inconclusive;
            }
            Err(err) => return Err(err.into()),
        }
    }
    Ok(bundle)
}

/// `S(q, ξ) = c + Q(ξ) + (w(q) + bump)·exp(−|ξ|²)`.
pub fn configured_fqi(cfg: &ExperimentConfig) -> Result<SampledFqi, LabError> {
    let s = &cfg.spectral;
    let w = parse_terms(&s.coeffs)?;
    let axes: Vec<FiberAxis> = s
        .signature
        .iter()
        .map(|&sign| FiberAxis::with_grid(sign, s.half_width, s.fiber_resolution))
        .collect();
    let signs: Vec<f64> = s.signature.iter().map(|&x| x as f64).collect();
    let (c, bump) = (s.constant, s.bump);
    Ok(SampledFqi::from_fn(Base::Circle(s.base_resolution), axes, c, move |q, xi| {
        let r2: f64 = xi.iter().map(|x| x * x).sum();
        let quad: f64 = xi.iter().zip(&signs).map(|(x, g)| g * x * x).sum();
        c + quad + (w.value(0.0, q) + bump) * (-r2).exp()
    })?)
}

fn run_spectral(cfg: &ExperimentConfig) -> Result<ReportBundle, LabError> {
    let s = configured_fqi(cfg)?;
    let sel = selector_function(&s)?;
    let mut bundle = ReportBundle::empty("spectral", cfg.echo(), cfg.seed);
    bundle.set("unit", sel.unit);
    bundle.set("top", sel.top);
    bundle.set("lipschitz", sel.lipschitz);
    bundle.set("bounds_hold", sel.bounds_hold);
    bundle.set("grid_step", s.grid_step());
    bundle.set("critical_oscillation", s.critical_oscillation());
    bundle.set("selector_oscillation", sel.values.oscillation());
    bundle.verdict = if sel.bounds_hold { Verdict::Pass } else { Verdict::Fail };
    let (csv, sidecar) = fqi_files(&s)?;
    bundle.files.push(("sampled_fqi.csv".into(), csv));
    bundle.files.push(("sampled_fqi.json".into(), sidecar));
    bundle.files.push(("selector.csv".into(), grid_csv(&sel.values)));
    Ok(bundle)
}

fn run_calibrate(cfg: &ExperimentConfig) -> Result<ReportBundle, LabError> {
    let h = cfg.hamiltonian.build()?;
    let c = &cfg.calibration;
    let mut bundle = ReportBundle::empty("calibrate", cfg.echo(), cfg.seed);
    let (u, alpha0, range) = match c.source {
        CalibrationSource::Analytic => {
            if cfg.hamiltonian.family != FamilyName::ShiftedQuadratic {
                return Err(LabError::Config("source = analytic needs family = shifted_quadratic".into()));
            }
            let u = SpaceTimeFunction::analytic(parse_terms(&cfg.hamiltonian.shift_coeffs)?);
            (u, cfg.hamiltonian.offset, (0.0, c.t_max))
        }
        CalibrationSource::WeakKam => {
            let e = engine_for(cfg, &h)?;
            let alpha0 = cfg.critical_value(&h, &e)?;
            let b = peierls_barrier(&e, alpha0, 0.0, 0.0, cfg.barrier_n_min, cfg.barrier_n_max)?;
            let n = e.resolution();
            let anchor = (0..n).fold(0, |best, i| if b.barrier.get(i, i) < b.barrier.get(best, best) { i } else { best });
            let w = positive_weak_kam(&e, alpha0, anchor, 0.0, cfg.barrier_n_min, cfg.barrier_n_max)?;
            (SpaceTimeFunction::stationary(w.at_zero)?, alpha0, (0.0, c.t_max))
        }
        CalibrationSource::Lax => {
            let e = engine_for(cfg, &h)?;
            let alpha0 = cfg.critical_value(&h, &e)?;
            let v = cfg.initial_series()?;
            let u0 = GridFunction::sample_1d(cfg.resolution, |q| v.value(0.0, q))?;
            let steps = (c.t_max * 32.0).round().max(2.0) as usize;
            let knots: Vec<f64> = (0..=steps).map(|k| k as f64 / 32.0).collect();
            let hi = *knots.last().expect("knots");
            (SpaceTimeFunction::from_lax_evolution(&e, &u0, alpha0, knots)?, alpha0, (0.0, hi))
        }
    };
    bundle.set("alpha0", alpha0);

    if c.source != CalibrationSource::Lax {
        let r = calibrated_curve(&u, &h, alpha0, c.t0, c.q0, c.horizon, &FlowSettings::default())?;
        let doc = json!({
            "defect": r.defect,
            "momentum_residual": r.max_momentum_residual,
            "hj_residual": r.max_hj_residual,
            "seed_t": r.seed_t,
            "seed_q": r.seed_q,
        });
        bundle.files.push(("calibration.json".into(), json_text(&doc)?));
        bundle.set("calibrated", doc);
        bundle.curves.push(("calibrated curve".into(), r.curve.points.iter().map(|x| (x.q, x.p)).collect()));
    }

    let sampler = CurveSampler::new(range);
    let mut defects = Vec::with_capacity(c.count as usize);
    for i in 0..c.count {
        let g = sampler.curve(&h, cfg.seed, i);
        let (a, b) = (g.times[0], *g.times.last().expect("curve has samples"));
        defects.push(calibration_defect(&u, &h, alpha0, &g, a, b)?);
    }
    let (witness, min) = defects
        .iter()
        .enumerate()
        .fold((0usize, f64::INFINITY), |(wi, wv), (i, &d)| if d < wv { (i, d) } else { (wi, wv) });
    bundle.set("min_defect", min);
    bundle.set("domination_tolerance", DOMINATION_TOLERANCE);
    bundle.set("curves", c.count);
    bundle.verdict = if defects.is_empty() {
        Verdict::NoData
    } else if min >= -DOMINATION_TOLERANCE {
        Verdict::Pass
    } else {
        bundle.witness = Some(witness as i64);
        Verdict::Fail
    };
    bundle.defects = defects;
    Ok(bundle)
}
