use birkhoff_core::calibration::*;
use birkhoff_core::flow::FlowSettings;
use birkhoff_core::grid::GridFunction;
use birkhoff_core::hamiltonian::TonelliHamiltonian;
use birkhoff_core::lax_oleinik::*;
use birkhoff_core::trig::{TrigSeries, TrigTerm};
use std::f64::consts::TAU;

fn manufactured_shift() -> TrigSeries {
    TrigSeries::new(vec![
        TrigTerm::new(0, 1, 0.0, 0.05),
        TrigTerm::new(1, 1, 0.03, 0.0),
        TrigTerm::new(1, 2, 0.0, 0.01),
    ])
    .unwrap()
}

#[test]
fn manufactured_curves_are_calibrated() {
    let shift = manufactured_shift();
    let h = TonelliHamiltonian::shifted_quadratic(shift.clone(), 0.7, 0.3);
    let u = SpaceTimeFunction::analytic(shift);
    for k in 0..10 {
        let r = calibrated_curve(&u, &h, 0.3, 0.0, k as f64 / 10.0, 2.0, &FlowSettings::default()).unwrap();
        assert!(r.defect.abs() <= 1e-5, "{}", r.defect);
        assert!(r.max_momentum_residual <= 1e-4 && r.max_hj_residual <= 1e-4);
        assert!(r.max_fenchel_gap <= r.max_momentum_residual.max(1e-12));
    }
    let d = domination_check(&u, &h, 0.3, &CurveSampler::new((0.0, 2.0)), 1000, 11).unwrap();
    assert!(d.min_defect >= -1e-4);
}

#[test]
fn free_zero_solution_calibrates_constant_curves() {
    let h = TonelliHamiltonian::free();
    let u = SpaceTimeFunction::stationary(GridFunction::constant(1, 64, 0.0).unwrap()).unwrap();
    let r = calibrated_curve(&u, &h, 0.0, 0.0, 0.3, 1.0, &FlowSettings::default()).unwrap();
    assert!(r.curve.lifts.iter().all(|&q| q == 0.3));
    assert_eq!((r.defect, r.max_momentum_residual, r.max_hj_residual), (0.0, 0.0, 0.0));
}

#[test]
fn non_solutions_are_not_dominated() {
    let h = TonelliHamiltonian::pendulum();
    let u = SpaceTimeFunction::stationary(GridFunction::sample_1d(256, |q| 10.0 * (TAU * q).sin()).unwrap()).unwrap();
    let d = domination_check(&u, &h, 1.0, &CurveSampler::new((0.0, 2.0)), 1000, 3).unwrap();
    assert!(d.min_defect < -1.0);
    assert!(!d.passes);
}

fn lax_domination(n: usize) -> f64 {
    let h = TonelliHamiltonian::pendulum();
    let e = LaxOleinik::new(&h, n).unwrap();
    let u0 = GridFunction::sample_1d(n, |q| 0.3 * (TAU * q).cos()).unwrap();
    let knots = (0..=64).map(|k| k as f64 / 32.0).collect();
    let u = SpaceTimeFunction::from_lax_evolution(&e, &u0, 1.0, knots).unwrap();
    domination_check(&u, &h, 1.0, &CurveSampler::new((0.0, 2.0)), 1000, 7).unwrap().min_defect
}

#[test]
fn lax_evolved_solutions_are_dominated() {
    let coarse = lax_domination(128);
    let fine = lax_domination(256);
    assert!(fine >= -5e-3, "{fine:e}");
    // violation size max(0, −min) halves with resolution
    assert!((-fine).max(0.0) <= 0.5 * (-coarse).max(0.0) + 1e-12);
}

#[test]
fn pendulum_weak_kam_calibrates_away_from_the_kink() {
    let h = TonelliHamiltonian::pendulum();
    let settings = PotentialSettings {
        path: PathModel::Relaxed { segments: 8 },
        ..PotentialSettings::default()
    };
    let e = LaxOleinik::with_settings(&h, 256, settings).unwrap();
    let w = positive_weak_kam(&e, 1.0, 0, 0.0, 16, 64).unwrap();
    let u = SpaceTimeFunction::stationary(w.at_zero.clone()).unwrap();
    assert!(u.kink_at(0.0, 0.5).unwrap());
    for q in [0.1, 0.25, 0.4, 0.6, 0.8] {
        let r = calibrated_curve(&u, &h, 1.0, 0.0, q, 0.25, &FlowSettings::default()).unwrap();
        assert!(r.defect.abs() <= 1e-2, "{q}: {}", r.defect);
        assert!(r.max_momentum_residual <= 5e-2 && r.max_hj_residual <= 5e-2, "{q}: {r:?}");
        assert!(r.max_fenchel_gap <= r.max_momentum_residual);
    }
}

#[test]
fn calibrated_curves_minimise_action() {
    let shift = manufactured_shift();
    let h = TonelliHamiltonian::shifted_quadratic(shift.clone(), 0.0, 0.3);
    let u = SpaceTimeFunction::analytic(shift);
    let e = LaxOleinik::new(&h, 64).unwrap();
    let pot = e.potential(0.0, 1.0).unwrap();
    for x in [0usize, 13, 40] {
        let q = x as f64 / 64.0;
        let r = calibrated_curve(&u, &h, 0.3, 0.0, q, 1.0, &FlowSettings::default()).unwrap();
        let tol = r.defect.abs().max(1e-9);
        let action: f64 = r.curve.action_increments.iter().sum::<f64>() + 0.3;
        let end = (r.curve.lifts.last().unwrap().rem_euclid(1.0) * 64.0).round() as usize % 64;
        assert_eq!(end, x, "stationary curve");
        assert!(action <= pot.get(x, end) + 0.3 + 2.0 * tol + 1e-9);
    }
}

fn chains(e: &LaxOleinik<'_>, u: &GridFunction, every: usize) -> Vec<MinimizerChain> {
    (0..e.resolution())
        .step_by(every)
        .map(|x| backward_minimizer(e, u, e.hamiltonian().mechanical_critical_value().unwrap_or(0.0), 0.0, x, 1).unwrap())
        .collect()
}

#[test]
fn apriori_speed_bounds() {
    let free = TonelliHamiltonian::free();
    let e = LaxOleinik::new(&free, 64).unwrap();
    let zero = GridFunction::constant(1, 64, 0.0).unwrap();
    let r = apriori_bound_report(&chains(&e, &zero, 8), &chains(&e, &zero, 4), 1.0);
    assert_eq!(r.fine_bound, 0.0);
    assert!(r.plateau);

    let h = TonelliHamiltonian::pendulum();
    let e = LaxOleinik::new(&h, 256).unwrap();
    let start = GridFunction::constant(1, 256, 0.0).unwrap();
    let u = e.negative(&start, -16.0, 0.0, Normalization::Full(1.0)).unwrap().values;
    let r = apriori_bound_report(&chains(&e, &u, 16), &chains(&e, &u, 8), 1.0);
    let slack = 1.0 / (256.0 * 0.25);
    assert!(r.fine_bound <= 2.0 * (2.0f64 * 2.0).sqrt() + slack, "{r:?}");
    assert!(r.plateau, "{r:?}");
}
