use birkhoff_core::curve::{
    evolve, graph_check, hausdorff_distance, intersection_action_gap, refine, EvolveSettings,
    LagrangianCurve,
};
use birkhoff_core::grid::GridFunction;
use birkhoff_core::hamiltonian::TonelliHamiltonian;
use birkhoff_core::trig::{TrigSeries, TrigTerm};
use proptest::prelude::*;
use std::f64::consts::TAU;

fn torus_dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dq = (a.0 - b.0).rem_euclid(1.0);
    dq.min(1.0 - dq).hypot(a.1 - b.1)
}

fn brute_hausdorff(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let directed = |x: &[(f64, f64)], y: &[(f64, f64)]| {
        x.iter()
            .map(|&p| y.iter().map(|&q| torus_dist(p, q)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

fn manufactured() -> TrigSeries {
    TrigSeries::new(vec![
        TrigTerm::new(0, 1, 0.0, 0.05),
        TrigTerm::new(1, 1, 0.03, 0.0),
        TrigTerm::new(1, 2, 0.0, 0.01),
    ])
    .unwrap()
}

#[test]
fn hausdorff_matches_dense_sampling() {
    let z = LagrangianCurve::zero_section(64).unwrap();
    let g = GridFunction::sample_1d(64, |q| 0.1 * (TAU * q).sin()).unwrap();
    let c = LagrangianCurve::from_potential(&g).unwrap();
    let d = hausdorff_distance(&z, &c);
    let dense_z: Vec<_> = (0..10_000).map(|i| (i as f64 / 1e4, 0.0)).collect();
    let dense_c: Vec<_> = (0..10_000)
        .map(|i| {
            let q = i as f64 / 1e4;
            (q, 0.2 * std::f64::consts::PI * (TAU * q).cos())
        })
        .collect();
    let oracle = brute_hausdorff(&dense_z, &dense_c);
    assert!((d - oracle).abs() < 1e-6, "{d} vs {oracle}");
    assert!((d - 0.2 * std::f64::consts::PI).abs() < 1e-6);
}

#[test]
fn free_flow_follows_characteristics() {
    let a = 0.02;
    let u0 = GridFunction::sample_1d(128, |q| a * (TAU * q).sin()).unwrap();
    let t = 0.9 / (4.0 * std::f64::consts::PI.powi(2) * a);
    let c = evolve(
        &TonelliHamiltonian::free(),
        &LagrangianCurve::from_potential(&u0).unwrap(),
        0.0,
        t,
        &EvolveSettings::default(),
    )
    .unwrap();
    assert!(graph_check(&c).unwrap().is_graph);
    // q ↦ q + t u0'(q) with momentum u0'(q)
    let m = 8192;
    let lifts: Vec<f64> = (0..m)
        .map(|i| {
            let q = i as f64 / m as f64;
            q + t * TAU * a * (TAU * q).cos()
        })
        .collect();
    let p: Vec<f64> = (0..m).map(|i| TAU * a * (TAU * i as f64 / m as f64).cos()).collect();
    let oracle = LagrangianCurve::new(lifts, p, None, 1).unwrap();
    let d = hausdorff_distance(&c, &oracle);
    assert!(d < 1e-6, "{d:e}");
    assert!(c.satisfies_discrete_exactness().unwrap());
}

#[test]
fn manufactured_graph_is_periodic() {
    let u = manufactured();
    let h = TonelliHamiltonian::shifted_quadratic(u.clone(), 0.0, 0.0);
    let c = refine(&LagrangianCurve::from_trig(&u, 0.0, 128).unwrap(), &EvolveSettings::default()).unwrap();
    let one = evolve(&h, &c, 0.0, 1.0, &EvolveSettings::default()).unwrap();
    let d = hausdorff_distance(&one, &c);
    assert!(d <= 1e-6, "{d:e}");
    assert!(one.satisfies_discrete_exactness().unwrap());
}

#[test]
fn evolution_is_consistent_across_split_times() {
    let h = TonelliHamiltonian::pendulum();
    let u0 = GridFunction::sample_1d(64, |q| 0.03 * (TAU * q).cos() + 0.02 * (2.0 * TAU * q).sin()).unwrap();
    let c = LagrangianCurve::from_potential(&u0).unwrap();
    let set = EvolveSettings::default();
    let direct = evolve(&h, &c, 0.0, 0.3, &set).unwrap();
    let mid = evolve(&h, &c, 0.0, 0.13, &set).unwrap();
    let split = evolve(&h, &mid, 0.13, 0.3, &set).unwrap();
    assert!(hausdorff_distance(&direct, &split) <= 1e-6);
    if graph_check(&direct).unwrap().is_graph && graph_check(&split).unwrap().is_graph {
        let mut worst: f64 = 0.0;
        for (x, h1) in split.nodes().iter().zip(split.primitive().unwrap()) {
            let (_, h0) = direct.sample_graph(x.q).unwrap();
            worst = worst.max((h0.unwrap() - h1).abs());
        }
        assert!(worst <= 1e-6, "{worst:e}");
    }
}

#[test]
fn extremal_gaps_are_flow_invariant() {
    let h = TonelliHamiltonian::pendulum();
    let u = GridFunction::sample_1d(128, |q| 0.04 * (TAU * q).sin()).unwrap();
    let v = GridFunction::sample_1d(128, |q| 0.03 * (TAU * q).cos() - 0.01 * (2.0 * TAU * q).sin()).unwrap();
    let a = LagrangianCurve::from_potential(&u).unwrap();
    let b = LagrangianCurve::from_potential(&v).unwrap();
    let g0 = intersection_action_gap(&a, &b).unwrap();
    let set = EvolveSettings::default();
    let at = evolve(&h, &a, 0.0, 0.4, &set).unwrap();
    let bt = evolve(&h, &b, 0.0, 0.4, &set).unwrap();
    let g1 = intersection_action_gap(&at, &bt).unwrap();
    let (min0, max0) = (g0[0], g0[g0.len() - 1]);
    let (min1, max1) = (g1[0], g1[g1.len() - 1]);
    assert!((min0 - min1).abs() <= 1e-5 && (max0 - max1).abs() <= 1e-5, "{g0:?} {g1:?}");
}

fn random_graph(c: [f64; 4], n: usize) -> LagrangianCurve {
    let u = GridFunction::sample_1d(n, |q| {
        c[0] * (TAU * q).sin() + c[1] * (TAU * q).cos() + c[2] * (2.0 * TAU * q).sin() + c[3] * (3.0 * TAU * q).cos()
    })
    .unwrap();
    LagrangianCurve::from_potential(&u).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn hausdorff_is_a_metric(a in prop::array::uniform4(-0.1..0.1f64),
                             b in prop::array::uniform4(-0.1..0.1f64),
                             c in prop::array::uniform4(-0.1..0.1f64)) {
        let (x, y, z) = (random_graph(a, 64), random_graph(b, 128), random_graph(c, 32));
        let xy = hausdorff_distance(&x, &y);
        prop_assert_eq!(xy.to_bits(), hausdorff_distance(&y, &x).to_bits());
        let xz = hausdorff_distance(&x, &z);
        let yz = hausdorff_distance(&y, &z);
        prop_assert!(xz <= xy + yz + 1e-9);
        prop_assert!(xy <= xz + yz + 1e-9);
        prop_assert!(yz <= xy + xz + 1e-9);
    }
}
