use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use refcond::condensation::{
    average_reference, condense, control_error_bound, control_mismatch, unweighted_map, weighted_map,
};
use refcond::linalg::{repeat_vector, spectral_radius, stacked_identity};
use refcond::lq_batch::{build_batch_operators, open_loop_sequence, tracking_gains, LtiSystem, TrackingGains, TrackingWeights};
use refcond::qp::{solve, DenseQp, QpSettings, QpStatus};
use refcond::verify::{box_qp_oracle, random_box_qp};

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, rows * cols).prop_map(move |v| DMatrix::from_row_slice(rows, cols, &v))
}

/// Random system with spectral radius at most 0.98 and its tracking gains.
fn problem() -> impl Strategy<Value = (LtiSystem, TrackingGains)> {
    (1usize..=3, 1usize..=2, 1usize..=2, 1usize..=10)
        .prop_flat_map(|(nx, nu, nr, n)| (matrix(nx, nx), matrix(nx, nu), matrix(nr, nx), 0.05f64..2.0, Just(n)))
        .prop_filter_map("usable system", |(mut a, b, c, rw, n)| {
            let radius = spectral_radius(&a);
            if radius > 0.98 {
                a *= 0.98 / radius;
            }
            let sys = LtiSystem::new(a, b, c, 0.1).ok()?;
            let w = TrackingWeights::new(DMatrix::identity(sys.nr(), sys.nr()), DMatrix::identity(sys.nu(), sys.nu()) * rw).ok()?;
            let g = tracking_gains(&build_batch_operators(&sys, &w, n).ok()?).ok()?;
            let s = unweighted_map(&g).ok()?;
            s.rank_ok.then_some((sys, g))
        })
}

fn reference(g: &TrackingGains, seed: u64) -> DVector<f64> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(g.horizon * g.nr, |_, _| rng.random_range(-2.0..2.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn maps_reproduce_constant_windows((_sys, g) in problem(), rho in 0.5f64..1e4) {
        let id = stacked_identity(g.nr, g.horizon);
        for m in [unweighted_map(&g).unwrap(), weighted_map(&g, rho).unwrap()] {
            let err = (&m.s * &id - DMatrix::<f64>::identity(g.nr, g.nr)).amax();
            prop_assert!(err < 1e-8, "S I - I = {err} for {:?}", m.kind);
        }
    }

    #[test]
    fn condensation_error_is_bounded((_sys, g) in problem(), seed in any::<u64>()) {
        let r = reference(&g, seed);
        let s = unweighted_map(&g).unwrap();
        let actual = control_mismatch(&g, &s, &r).unwrap().norm();
        let bound = control_error_bound(&g, &r).unwrap();
        prop_assert!(actual <= bound * (1.0 + 1e-10) + 1e-12, "{actual} > {bound}");
        // the average is one admissible setpoint, so S does at least as well
        let avg = repeat_vector(&average_reference(&r, g.nr), g.horizon);
        prop_assert!(actual <= (&g.fr * (&r - avg)).norm() * (1.0 + 1e-10) + 1e-12);
    }

    #[test]
    fn control_gap_ignores_initial_state((_sys, g) in problem(), seed in any::<u64>(), x in prop::collection::vec(-3.0f64..3.0, 3)) {
        let r = reference(&g, seed);
        let s = unweighted_map(&g).unwrap();
        let rc = repeat_vector(&condense(&s, &r).unwrap(), g.horizon);
        let x0 = DVector::from_iterator(g.nx, x.into_iter().take(g.nx));
        let gap = |x0: &DVector<f64>| open_loop_sequence(&g, x0, &r).unwrap() - open_loop_sequence(&g, x0, &rc).unwrap();
        let diff = (gap(&x0) - gap(&DVector::zeros(g.nx))).amax();
        prop_assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn box_qp_matches_exhaustive_oracle(seed in any::<u64>()) {
        let qp = random_box_qp(&mut ChaCha8Rng::seed_from_u64(seed));
        let sol = solve(&qp, &QpSettings::default()).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        let z = box_qp_oracle(&qp.h, &qp.f, &qp.lb, &qp.ub).unwrap();
        prop_assert!((&sol.z - z).amax() < 1e-7);
    }

    #[test]
    fn general_qp_solutions_satisfy_kkt(n in 1usize..6, m in 0usize..8, seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = a.transpose() * &a + DMatrix::identity(n, n) * 0.2;
        let f = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let g_mat = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        // z = 0 is strictly feasible
        let g_vec = DVector::from_fn(m, |_, _| rng.random_range(0.1..1.0));
        let lb = DVector::from_element(n, -2.0);
        let ub = DVector::from_element(n, 2.0);
        let qp = DenseQp::new(h.clone(), f.clone()).with_bounds(lb.clone(), ub.clone()).with_inequalities(g_mat.clone(), g_vec.clone());
        let sol = solve(&qp, &QpSettings::default()).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        let z = &sol.z;
        let d = &sol.duals;
        let station = &h * z + &f - &d.lower + &d.upper + g_mat.transpose() * &d.general;
        prop_assert!(station.amax() < 1e-8, "stationarity {}", station.amax());
        prop_assert!((&g_mat * z - &g_vec).iter().all(|&v| v < 1e-9));
        prop_assert!(z.iter().zip(lb.iter()).all(|(z, l)| *z >= l - 1e-9));
        prop_assert!(z.iter().zip(ub.iter()).all(|(z, u)| *z <= u + 1e-9));
        prop_assert!(d.lower.iter().chain(d.upper.iter()).chain(d.general.iter()).all(|&l| l >= -1e-12));
        let slack = &g_vec - &g_mat * z;
        prop_assert!(d.general.iter().zip(slack.iter()).all(|(l, s)| (l * s).abs() < 1e-8));
        prop_assert!(sol.kkt_residual <= 1e-8);
    }

    #[test]
    fn average_of_repeated_block_is_the_block(v in prop::collection::vec(-5.0f64..5.0, 1..4), n in 1usize..20) {
        let block = DVector::from_vec(v);
        let avg = average_reference(&repeat_vector(&block, n), block.len());
        prop_assert!((avg - block).amax() < 1e-12);
    }
}
