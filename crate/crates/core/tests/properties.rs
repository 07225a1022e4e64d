use nalgebra::DMatrix;
use proptest::prelude::*;
use sphereflow_core::dynamics::{evolve, step_circle_density, CircleKernelTable};
use sphereflow_core::ensemble::{make_example_2_1, make_example_2_4};
use sphereflow_core::fields::{velocity, velocity_field_batch};
use sphereflow_core::kernel::eigen_decomposition;
use sphereflow_core::observables::{w2_circle, xi_cutoff};
use sphereflow_core::sphere::{geodesic_distance, project_tangent};
use sphereflow_core::vecops::{dot, norm, normalized};
use sphereflow_core::{
    CircleDensity, CircleSolverConfig, FlowState, GnomonicChart, IntegratorConfig, KernelSpec, Limiter,
    ParticleEnsemble, SpherePoint, VelocityLaw,
};

fn unit(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, d)
        .prop_filter("away from the origin", |v| norm(v) > 0.1)
        .prop_map(|v| normalized(&v))
}

fn ensemble(d: usize, max_n: usize) -> impl Strategy<Value = ParticleEnsemble> {
    prop::collection::vec((unit(d), 0.1f64..1.0), 1..=max_n).prop_map(|atoms| {
        let total: f64 = atoms.iter().map(|(_, w)| w).sum();
        let (pts, ws): (Vec<_>, Vec<_>) = atoms.into_iter().map(|(p, w)| (p, w / total)).unzip();
        ParticleEnsemble::new(pts, ws).unwrap()
    })
}

fn circle_atoms(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    prop::collection::vec((0.0f64..std::f64::consts::TAU, 0.1f64..1.0), n).prop_map(|atoms| {
        let total: f64 = atoms.iter().map(|(_, w)| w).sum();
        atoms.into_iter().map(|(a, w)| (a, w / total)).unzip()
    })
}

fn random_rotation(d: usize, entries: &[f64]) -> DMatrix<f64> {
    let m = DMatrix::from_column_slice(d, d, &entries[..d * d]);
    m.qr().q()
}

fn apply(q: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (q * nalgebra::DVector::from_column_slice(x)).as_slice().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn projection_annihilates_the_base_point(x in unit(5)) {
        prop_assert!(norm(&project_tangent(&x, &x)) <= 1e-15);
    }

    #[test]
    fn projection_is_tangent_and_idempotent(x in unit(4), y in prop::collection::vec(-3.0f64..3.0, 4)) {
        let p = project_tangent(&x, &y);
        prop_assert!(dot(&p, &x).abs() <= 1e-12 * (1.0 + norm(&y)));
        let pp = project_tangent(&x, &p);
        prop_assert!(norm(&sphereflow_core::vecops::sub(&p, &pp)) <= 1e-12 * (1.0 + norm(&y)));
    }

    #[test]
    fn gnomonic_round_trips(pole in unit(3), x in unit(3), u in prop::collection::vec(-20.0f64..20.0, 2)) {
        let chart = GnomonicChart::new(SpherePoint::new(pole.clone()).unwrap());
        let back = chart.inverse(&u);
        let u2 = chart.forward(back.as_slice()).unwrap();
        let scale = 1.0 + norm(&u);
        for (a, b) in u.iter().zip(&u2) {
            prop_assert!((a - b).abs() <= 1e-12 * scale * scale);
        }
        prop_assume!(dot(&x, &pole) > 1e-3);
        let v = chart.forward(&x).unwrap();
        let x2 = chart.inverse(&v);
        for (a, b) in x.iter().zip(x2.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn geodesic_distance_is_a_metric(x in unit(3), y in unit(3), z in unit(3)) {
        let (xy, yx) = (geodesic_distance(&x, &y), geodesic_distance(&y, &x));
        prop_assert_eq!(xy, yx);
        prop_assert!(geodesic_distance(&x, &x) <= 1e-7);
        prop_assert!((0.0..=std::f64::consts::PI).contains(&xy));
        prop_assert!(xy <= geodesic_distance(&x, &z) + geodesic_distance(&z, &y) + 1e-12);
    }

    #[test]
    fn attention_epsilon_is_monotone_in_beta(b1 in 0.0f64..5.0, db in 1e-3f64..2.0) {
        let e1 = KernelSpec::simple_attention(3, b1).epsilon_phi();
        let e2 = KernelSpec::simple_attention(3, b1 + db).epsilon_phi();
        prop_assert!(e1 < e2);
    }

    #[test]
    fn eigendecomposition_reconstructs(entries in prop::collection::vec(-2.0f64..2.0, 16)) {
        let m = DMatrix::from_column_slice(4, 4, &entries);
        let a = (&m + m.transpose()) * 0.5;
        let eig = eigen_decomposition(&a).unwrap();
        let mut rebuilt = DMatrix::zeros(4, 4);
        for (l, e) in eig.values.iter().zip(&eig.vectors) {
            let v = nalgebra::DVector::from_column_slice(e);
            rebuilt += *l * &v * v.transpose();
        }
        prop_assert!((rebuilt - &a).norm() <= 1e-9 * a.norm().max(1e-300));
        prop_assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn velocity_fields_are_tangent(mu in ensemble(3, 12), x in unit(3), beta in 0.0f64..10.0) {
        let spec = KernelSpec::simple_attention(3, beta);
        for law in [VelocityLaw::General, VelocityLaw::Gradient] {
            let v = velocity(law, &mu, &spec, &x);
            prop_assert!(dot(&v, &x).abs() <= 1e-12 * (1.0 + norm(&v)));
        }
    }

    #[test]
    fn batch_field_matches_pointwise(mu in ensemble(3, 10), beta in 0.0f64..4.0) {
        let spec = KernelSpec::simple_attention(3, beta);
        let targets: Vec<f64> = mu.coords().to_vec();
        let batch = velocity_field_batch(&mu, &spec, VelocityLaw::General, &targets);
        for (i, x) in mu.points().enumerate() {
            let v = velocity(VelocityLaw::General, &mu, &spec, x);
            prop_assert_eq!(&batch[3 * i..3 * i + 3], v.as_slice());
        }
    }

    #[test]
    fn w2_circle_is_a_metric(a in circle_atoms(4), b in circle_atoms(4), c in circle_atoms(4)) {
        let ab = w2_circle(&a.0, &a.1, &b.0, &b.1);
        let ba = w2_circle(&b.0, &b.1, &a.0, &a.1);
        prop_assert!((ab - ba).abs() <= 1e-8);
        prop_assert!(w2_circle(&a.0, &a.1, &a.0, &a.1) <= 1e-8);
        let ac = w2_circle(&a.0, &a.1, &c.0, &c.1);
        let cb = w2_circle(&c.0, &c.1, &b.0, &b.1);
        prop_assert!(ab <= ac + cb + 1e-8);
    }

    #[test]
    fn cutoff_is_a_monotone_transition(a in -1.0f64..1.0, da in 0.0f64..0.5, a1 in 0.05f64..1.0, gap in 0.05f64..1.0) {
        let a2 = a1 + gap;
        let (lo, hi) = (xi_cutoff(a, a1, a2), xi_cutoff((a + da).min(1.0), a1, a2));
        prop_assert!((0.0..=1.0).contains(&lo));
        prop_assert!(lo <= hi + 1e-15);
    }

    #[test]
    fn json_round_trip_preserves_ensembles(mu in ensemble(4, 8)) {
        let back = ParticleEnsemble::from_json(&mu.to_json()).unwrap();
        prop_assert_eq!(back, mu);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn evolution_keeps_weights_and_unit_norm(mu in ensemble(3, 16), beta in 0.0f64..3.0) {
        let spec = KernelSpec::simple_attention(3, beta);
        let cfg = IntegratorConfig { dt: 0.05, t_end: 1.0, ..IntegratorConfig::default() };
        let last = evolve(FlowState::new(mu.clone()), &spec, &cfg, 0.5, &mut |_: &FlowState| Ok(())).unwrap();
        prop_assert_eq!(last.ensemble.weights(), mu.weights());
        for p in last.ensemble.points() {
            prop_assert!((norm(p) - 1.0).abs() <= 1e-14);
        }
    }

    #[test]
    fn rotations_commute_with_the_flow(
        mu in ensemble(3, 8),
        entries in prop::collection::vec(-1.0f64..1.0, 9),
        beta in 0.0f64..2.0,
    ) {
        let q = random_rotation(3, &entries);
        prop_assume!(q.determinant().abs() > 0.5);
        let spec = KernelSpec::simple_attention(3, beta);
        let cfg = IntegratorConfig { dt: 0.05, t_end: 1.0, ..IntegratorConfig::default() };
        let rotated = ParticleEnsemble::new(mu.points().map(|p| apply(&q, p)).collect(), mu.weights().to_vec()).unwrap();
        let run = |m: ParticleEnsemble| evolve(FlowState::new(m), &spec, &cfg, 1.0, &mut |_: &FlowState| Ok(())).unwrap();
        let a = run(mu);
        let b = run(rotated);
        for (p, r) in a.ensemble.points().zip(b.ensemble.points()) {
            let qp = apply(&q, p);
            for (x, y) in qp.iter().zip(r) {
                prop_assert!((x - y).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn density_step_is_positive_and_conservative(
        f in prop::collection::vec(0.05f64..2.0, 64),
        beta in 0.0f64..5.0,
        minmod in any::<bool>(),
    ) {
        let m: f64 = f.iter().sum::<f64>() * std::f64::consts::TAU / 64.0;
        let f = CircleDensity::new(f.into_iter().map(|x| x / m).collect()).unwrap();
        let limiter = if minmod { Limiter::Minmod } else { Limiter::None };
        let cfg = CircleSolverConfig { n: 64, limiter, ..CircleSolverConfig::default() };
        let table = CircleKernelTable::new(64, beta);
        let (f1, _) = step_circle_density(&f, &table, &cfg, 0.01).unwrap();
        prop_assert!(f1.values().iter().all(|v| *v >= 0.0));
        prop_assert!((f1.total_mass() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn example_constructors_are_bit_reproducible() {
    for eps in [0.5, 0.1, 0.01] {
        assert_eq!(make_example_2_1(eps).unwrap(), make_example_2_1(eps).unwrap());
    }
    let a = make_example_2_4(0.005).unwrap();
    assert_eq!(a, make_example_2_4(0.005).unwrap());
    assert_eq!(a.weights(), &[1.0 / 50.0, 49.0 / 100.0, 49.0 / 100.0]);
}
