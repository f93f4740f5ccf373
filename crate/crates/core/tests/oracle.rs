//! Batch gains and condensation maps against a backward dynamic-programming
//! solution of the same finite-horizon tracking problem.

use nalgebra::{DMatrix, DVector};
use refcond::condensation::{unweighted_map, weighted_map};
use refcond::lq_batch::{build_batch_operators, open_loop_sequence, tracking_gains, LtiSystem, TrackingWeights};

/// Optimal open-loop controls for
/// `sum_{k=1}^N |C x_k - r_k|_Q^2 + sum_{k=0}^{N-1} |u_k|_R^2`
/// via the value function `V_k(x) = x'P_k x - 2 x'q_k + const`.
fn dp_controls(sys: &LtiSystem, w: &TrackingWeights, x0: &DVector<f64>, r: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let n = r.len();
    let ctqc = sys.c.transpose() * &w.q * &sys.c;
    let mut p = ctqc.clone();
    let mut q = sys.c.transpose() * &w.q * &r[n - 1];
    // feedback K_k and feedforward v_k with u_k = -K_k x_k + v_k
    let mut laws = vec![(DMatrix::zeros(0, 0), DVector::zeros(0)); n];
    for k in (0..n).rev() {
        let m = &w.r + sys.b.transpose() * &p * &sys.b;
        let m_inv = m.try_inverse().unwrap();
        let gain = &m_inv * sys.b.transpose() * &p * &sys.a;
        let ff = &m_inv * sys.b.transpose() * &q;
        let a_cl = &sys.a - &sys.b * &gain;
        let p_next = sys.a.transpose() * &p * &a_cl;
        let q_next = a_cl.transpose() * &q;
        laws[k] = (gain, ff);
        if k > 0 {
            p = p_next + &ctqc;
            p = (&p + p.transpose()) * 0.5;
            q = q_next + sys.c.transpose() * &w.q * &r[k - 1];
        }
    }
    let mut x = x0.clone();
    laws.iter()
        .map(|(gain, ff)| {
            let u = -gain * &x + ff;
            x = sys.step(&x, &u);
            u
        })
        .collect()
}

fn stack(v: &[DVector<f64>]) -> DVector<f64> {
    DVector::from_iterator(v.iter().map(|b| b.len()).sum(), v.iter().flat_map(|b| b.iter().copied()))
}

fn mimo() -> (LtiSystem, TrackingWeights) {
    let a = DMatrix::from_row_slice(3, 3, &[0.9, 0.2, 0.0, -0.1, 0.8, 0.3, 0.05, 0.0, 0.7]);
    let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.2, 0.5, 0.0, 1.0]);
    let c = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 0.5, 1.0]);
    let w = TrackingWeights::new(
        DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.2]),
    )
    .unwrap();
    (LtiSystem::new(a, b, c, 0.1).unwrap(), w)
}

#[test]
fn batch_sequence_matches_dynamic_programming_double_integrator() {
    let sys = LtiSystem::double_integrator(0.1);
    let w = TrackingWeights::identity(1, 1);
    let n = 30;
    let g = tracking_gains(&build_batch_operators(&sys, &w, n).unwrap()).unwrap();
    let x0 = DVector::from_vec(vec![0.3, -0.7]);
    let r: Vec<DVector<f64>> = (1..=n).map(|k| DVector::from_element(1, (0.3 * k as f64).sin())).collect();
    let expected = stack(&dp_controls(&sys, &w, &x0, &r));
    let got = open_loop_sequence(&g, &x0, &stack(&r)).unwrap();
    assert!((got - expected).amax() < 1e-10);
}

#[test]
fn batch_sequence_matches_dynamic_programming_mimo() {
    let (sys, w) = mimo();
    let n = 12;
    let g = tracking_gains(&build_batch_operators(&sys, &w, n).unwrap()).unwrap();
    let x0 = DVector::from_vec(vec![1.0, -0.5, 0.25]);
    let r: Vec<DVector<f64>> = (0..n).map(|k| DVector::from_vec(vec![k as f64 * 0.1, 1.0 - 0.05 * k as f64])).collect();
    let expected = stack(&dp_controls(&sys, &w, &x0, &r));
    let got = open_loop_sequence(&g, &x0, &stack(&r)).unwrap();
    assert!((got - expected).amax() < 1e-10);
}

/// Columns of `Fr` from unit-reference DP solves, then `S` from the scalar
/// projection formula `S = (Fr 1)' Fr / |Fr 1|^2`.
#[test]
fn unweighted_map_matches_projection_of_dp_gains() {
    let sys = LtiSystem::double_integrator(0.1);
    let w = TrackingWeights::identity(1, 1);
    let n = 20;
    let zero = DVector::zeros(2);
    let mut fr = DMatrix::zeros(n, n);
    for j in 0..n {
        let r: Vec<DVector<f64>> = (0..n).map(|k| DVector::from_element(1, if k == j { 1.0 } else { 0.0 })).collect();
        fr.set_column(j, &stack(&dp_controls(&sys, &w, &zero, &r)));
    }
    let fr1 = fr.column_sum();
    let s_oracle = (fr1.transpose() * &fr) / fr1.norm_squared();

    let g = tracking_gains(&build_batch_operators(&sys, &w, n).unwrap()).unwrap();
    assert!((&g.fr - &fr).amax() < 1e-10);
    let s = unweighted_map(&g).unwrap();
    assert!((s.s - &s_oracle).amax() < 1e-9);

    // weighted: first residual scaled by rho
    let rho = 10.0;
    let mut wdiag = DVector::from_element(n, 1.0);
    wdiag[0] = rho * rho;
    let weighted_fr1 = fr1.component_mul(&wdiag);
    let sw_oracle = (weighted_fr1.transpose() * &fr) / weighted_fr1.dot(&fr1);
    let sw = weighted_map(&g, rho).unwrap();
    assert!((sw.s - sw_oracle).amax() < 1e-9);
}
