//! Self-check suite: the structural properties of the condensation maps, the
//! error bounds, and the QP solver against an exhaustive oracle.
//!
//! All randomness comes from one seed, so two runs print identical reports.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::condensation::{
    closed_loop_bound, condensation_residual, constant_reference_response, control_error_bound, control_mismatch,
    unweighted_map, weighted_map, CondensationMap,
};
use crate::controllers::{ControllerKind, ReferenceSignal};
use crate::error::Result;
use crate::experiments::{simulate_closed_loop, ReferenceSchedule, SimConfig};
use crate::linalg::{repeat_vector, spectral_norm, spectral_radius, stacked_identity};
use crate::lq_batch::{build_batch_operators, open_loop_sequence, tracking_gains, LtiSystem, TrackingGains, TrackingWeights};
use crate::qp::{solve, DenseQp, QpSettings, QpStatus, DEFAULT_TOL_KKT};

pub const ROW_SUM_TOL: f64 = 1e-9;
pub const RECOVERY_TOL: f64 = 1e-9;
pub const X0_INDEPENDENCE_TOL: f64 = 1e-12;
pub const ORTHOGONALITY_TOL: f64 = 1e-8;
pub const ORACLE_TOL: f64 = 1e-7;
pub const RANDOM_REFERENCES: usize = 200;
pub const ORACLE_PROBLEMS: usize = 100;

/// Deliberate corruption used to check that the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Adds `1e-3` to the first entry of every condensation map.
    CorruptRowSum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub seed: u64,
    pub outcomes: Vec<PropertyOutcome>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.outcomes.iter().filter(|o| !o.passed).map(|o| o.name).collect()
    }

    pub fn outcome(&self, name: &str) -> Option<&PropertyOutcome> {
        self.outcomes.iter().find(|o| o.name == name)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for o in &self.outcomes {
            writeln!(f, "{} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail)?;
        }
        Ok(())
    }
}

/// A tracking problem together with its gains and maps.
struct Fixture {
    label: &'static str,
    sys: LtiSystem,
    gains: TrackingGains,
    maps: Vec<CondensationMap>,
}

impl Fixture {
    fn new(label: &'static str, sys: LtiSystem, weights: TrackingWeights, horizon: usize, fault: Option<Fault>) -> Result<Self> {
        let gains = tracking_gains(&build_batch_operators(&sys, &weights, horizon)?)?;
        let mut maps = vec![unweighted_map(&gains)?, weighted_map(&gains, 1e2)?, weighted_map(&gains, 1e6)?];
        if fault == Some(Fault::CorruptRowSum) {
            for m in &mut maps {
                m.s[(0, 0)] += 1e-3;
            }
        }
        Ok(Self { label, sys, gains, maps })
    }

    fn nr(&self) -> usize {
        self.gains.nr
    }

    fn horizon(&self) -> usize {
        self.gains.horizon
    }

    fn random_reference(&self, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(self.horizon() * self.nr(), |_, _| rng.random_range(-1.0..1.0))
    }
}

/// Random 3-state, 2-input, 2-output system with spectral radius 0.95.
fn random_mimo(rng: &mut ChaCha8Rng) -> LtiSystem {
    let mut a = DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
    let radius = spectral_radius(&a);
    if radius > 0.0 {
        a *= 0.95 / radius;
    }
    let b = DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
    let c = DMatrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
    LtiSystem::new(a, b, c, 0.1).expect("well-formed random system")
}

pub fn run_property_suite(seed: u64, fault: Option<Fault>) -> Result<VerifyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mimo_weights = TrackingWeights::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2) * 0.1)?;
    let fixtures = vec![
        Fixture::new(
            "double integrator N=50",
            LtiSystem::double_integrator(0.1),
            TrackingWeights::identity(1, 1),
            50,
            fault,
        )?,
        Fixture::new("random 3x2x2 N=8", random_mimo(&mut rng), mimo_weights, 8, fault)?,
    ];
    let mut worst_kkt: f64 = 0.0;
    let mut kkt_solves = 0usize;

    let outcomes = vec![
        row_sums(&fixtures),
        exact_recovery(&fixtures, &mut rng)?,
        x0_independence(&fixtures, &mut rng)?,
        orthogonality(&fixtures, &mut rng)?,
        control_bound(&fixtures, &mut rng)?,
        closed_loop_bound_property(&fixtures[0])?,
        qp_oracle(&mut rng, &mut worst_kkt, &mut kkt_solves)?,
        {
            closed_loop_kkt(&mut worst_kkt, &mut kkt_solves)?;
            PropertyOutcome {
                name: "qp_kkt_residual",
                passed: worst_kkt <= DEFAULT_TOL_KKT,
                detail: format!("worst residual {worst_kkt:.3e} over {kkt_solves} solves (tol {DEFAULT_TOL_KKT:e})"),
            }
        },
    ];
    Ok(VerifyReport { seed, outcomes })
}

/// `S I = I`: each output's weights sum to one.
fn row_sums(fixtures: &[Fixture]) -> PropertyOutcome {
    let mut worst: f64 = 0.0;
    for fx in fixtures {
        let id = stacked_identity(fx.nr(), fx.horizon());
        for m in &fx.maps {
            let err = (&m.s * &id - DMatrix::<f64>::identity(fx.nr(), fx.nr())).amax();
            worst = worst.max(err);
        }
    }
    PropertyOutcome {
        name: "row_sums",
        passed: worst <= ROW_SUM_TOL,
        detail: format!("max |S I - I| = {worst:.3e} (tol {ROW_SUM_TOL:e})"),
    }
}

/// Constant windows condense to themselves and cause no control error.
fn exact_recovery(fixtures: &[Fixture], rng: &mut ChaCha8Rng) -> Result<PropertyOutcome> {
    let mut worst: f64 = 0.0;
    for fx in fixtures {
        for _ in 0..20 {
            let c = DVector::from_fn(fx.nr(), |_, _| rng.random_range(-1.0..1.0));
            let r = repeat_vector(&c, fx.horizon());
            for m in &fx.maps {
                worst = worst.max(condensation_residual(m, &r)?.amax());
                worst = worst.max(control_mismatch(&fx.gains, m, &r)?.amax());
            }
        }
    }
    Ok(PropertyOutcome {
        name: "exact_recovery",
        passed: worst <= RECOVERY_TOL,
        detail: format!("max residual on constant windows {worst:.3e} (tol {RECOVERY_TOL:e})"),
    })
}

/// `u*(x0, r) - u*(x0, I S r)` does not depend on `x0`.
fn x0_independence(fixtures: &[Fixture], rng: &mut ChaCha8Rng) -> Result<PropertyOutcome> {
    let mut worst: f64 = 0.0;
    for fx in fixtures {
        let r = fx.random_reference(rng);
        for m in &fx.maps {
            let condensed = repeat_vector(&(&m.s * &r), fx.horizon());
            let diff = |x0: &DVector<f64>| -> Result<DVector<f64>> {
                Ok(open_loop_sequence(&fx.gains, x0, &r)? - open_loop_sequence(&fx.gains, x0, &condensed)?)
            };
            let reference = diff(&DVector::zeros(fx.gains.nx))?;
            for _ in 0..10 {
                let x0 = DVector::from_fn(fx.gains.nx, |_, _| rng.random_range(-1.0..1.0));
                worst = worst.max((diff(&x0)? - &reference).amax());
            }
        }
    }
    Ok(PropertyOutcome {
        name: "x0_independence",
        passed: worst <= X0_INDEPENDENCE_TOL,
        detail: format!("max variation across initial states {worst:.3e} (tol {X0_INDEPENDENCE_TOL:e})"),
    })
}

/// The control mismatch is orthogonal to the range of `Fr I` in the map's inner product.
fn orthogonality(fixtures: &[Fixture], rng: &mut ChaCha8Rng) -> Result<PropertyOutcome> {
    let mut worst: f64 = 0.0;
    for fx in fixtures {
        let fri = constant_reference_response(&fx.gains);
        let n = fx.horizon() * fx.gains.nu;
        for (i, m) in fx.maps.iter().enumerate() {
            // W^(1/2) for S, S_W(1e2), S_W(1e6)
            let first = [1.0, 1e2, 1e6][i];
            let sqrt_w = DMatrix::from_fn(n, n, |a, b| match (a == b, a < fx.gains.nu) {
                (true, true) => first,
                (true, false) => 1.0,
                _ => 0.0,
            });
            let basis = &sqrt_w * &fri;
            for _ in 0..20 {
                let r = fx.random_reference(rng);
                let e = &sqrt_w * control_mismatch(&fx.gains, m, &r)?;
                let scale = spectral_norm(&basis) * (&sqrt_w * (&fx.gains.fr * &r)).norm();
                if scale > 0.0 {
                    worst = worst.max((basis.transpose() * e).amax() / scale);
                }
            }
        }
    }
    Ok(PropertyOutcome {
        name: "projection_orthogonality",
        passed: worst <= ORTHOGONALITY_TOL,
        detail: format!("max relative inner product {worst:.3e} (tol {ORTHOGONALITY_TOL:e})"),
    })
}

/// `|Fr (r - I S r)| <= sigma_max(Fr) |r - I r_avg|` for the unweighted map.
fn control_bound(fixtures: &[Fixture], rng: &mut ChaCha8Rng) -> Result<PropertyOutcome> {
    let mut violations = 0usize;
    let mut tightest = f64::INFINITY;
    let mut checked = 0usize;
    for fx in fixtures {
        let s = &fx.maps[0];
        for _ in 0..RANDOM_REFERENCES {
            let r = fx.random_reference(rng);
            let actual = control_mismatch(&fx.gains, s, &r)?.norm();
            let bound = control_error_bound(&fx.gains, &r)?;
            if actual > bound * (1.0 + 1e-12) {
                violations += 1;
            }
            if bound > 0.0 {
                tightest = tightest.min(bound / actual.max(f64::MIN_POSITIVE));
            }
            checked += 1;
        }
    }
    Ok(PropertyOutcome {
        name: "control_error_bound",
        passed: violations == 0,
        detail: format!("{violations} violations in {checked} random references (min bound/actual {tightest:.3})"),
    })
}

/// Unconstrained receding-horizon runs with preview and with `S`: the state
/// gap stays below the input-to-state bound.
fn closed_loop_bound_property(fx: &Fixture) -> Result<PropertyOutcome> {
    let s = &fx.maps[0];
    let (kx, kr) = (fx.gains.first_fx(), fx.gains.first_fr());
    let fri1 = constant_reference_response(&fx.gains).rows(0, fx.gains.nu).into_owned();
    let steps = 200;
    let mut details = Vec::new();
    let mut passed = true;
    for (name, signal) in [
        ("step", ReferenceSignal::scalar_step(5.0, 0.0, 1.0)),
        ("sinusoid", ReferenceSignal::scalar_sinusoid(1.0, 0.5)),
    ] {
        let schedule = ReferenceSchedule::new(&signal, fx.sys.ts, steps, fx.horizon());
        let windows: Vec<DVector<f64>> = (0..steps).map(|k| schedule.window(k)).collect();
        let mut x_prev = DVector::zeros(fx.gains.nx);
        let mut x_cond = x_prev.clone();
        let mut gap: f64 = 0.0;
        for w in &windows {
            let u_prev = &kx * &x_prev + &kr * w;
            let u_cond = &kx * &x_cond + &fri1 * (&s.s * w);
            x_prev = fx.sys.step(&x_prev, &u_prev);
            x_cond = fx.sys.step(&x_cond, &u_cond);
            gap = gap.max((&x_prev - &x_cond).norm());
        }
        let bound = closed_loop_bound(&fx.gains, &fx.sys, s, &windows)?;
        passed &= gap <= bound;
        details.push(format!("{name} max |dx| {gap:.3e} <= {bound:.3e}"));
    }
    Ok(PropertyOutcome {
        name: "closed_loop_bound",
        passed,
        detail: format!("{}: {}", fx.label, details.join(", ")),
    })
}

/// Minimiser of a strictly convex box-constrained QP by enumerating every
/// assignment of each variable to free, lower or upper.
///
/// Returns `None` if `h` is not positive definite on some free subspace or the
/// bounds are inconsistent.
pub fn box_qp_oracle(h: &DMatrix<f64>, f: &DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>) -> Option<DVector<f64>> {
    let n = f.len();
    if lb.iter().zip(ub.iter()).any(|(l, u)| l > u) {
        return None;
    }
    let tol = 1e-9 * (1.0 + h.amax() + f.amax());
    let mut best: Option<(f64, DVector<f64>)> = None;
    for code in 0..3usize.pow(n as u32) {
        // 0 free, 1 at lower, 2 at upper
        let mut state = vec![0u8; n];
        let mut c = code;
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let mut z = DVector::zeros(n);
        let mut ok = true;
        for i in 0..n {
            match state[i] {
                1 if lb[i].is_finite() => z[i] = lb[i],
                2 if ub[i].is_finite() => z[i] = ub[i],
                0 => {}
                _ => ok = false,
            }
        }
        if !ok {
            continue;
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();
        if !free.is_empty() {
            let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let rhs = DVector::from_fn(free.len(), |a, _| {
                -(f[free[a]] + (0..n).filter(|j| state[*j] != 0).map(|j| h[(free[a], j)] * z[j]).sum::<f64>())
            });
            let zf = hff.cholesky()?.solve(&rhs);
            for (a, &i) in free.iter().enumerate() {
                z[i] = zf[a];
            }
        }
        let feasible = (0..n).all(|i| z[i] >= lb[i] - tol && z[i] <= ub[i] + tol);
        if !feasible {
            continue;
        }
        let grad = h * &z + f;
        let optimal = (0..n).all(|i| match state[i] {
            1 => grad[i] >= -tol,
            2 => grad[i] <= tol,
            _ => true,
        });
        if optimal {
            let obj = 0.5 * z.dot(&(h * &z)) + f.dot(&z);
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, z));
            }
        }
    }
    best.map(|(_, z)| z)
}

/// Random strictly convex box QP with `1 <= n <= 8`; some bounds are infinite.
pub fn random_box_qp(rng: &mut ChaCha8Rng) -> DenseQp {
    let n = rng.random_range(1..=8);
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = m.transpose() * &m + DMatrix::identity(n, n) * 0.1;
    let f = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let lb = DVector::from_fn(n, |_, _| {
        if rng.random_bool(0.1) {
            f64::NEG_INFINITY
        } else {
            rng.random_range(-1.0..0.0)
        }
    });
    let ub = DVector::from_fn(n, |_, _| {
        if rng.random_bool(0.1) {
            f64::INFINITY
        } else {
            rng.random_range(0.0..1.0)
        }
    });
    DenseQp::new(h, f).with_bounds(lb, ub)
}

fn qp_oracle(rng: &mut ChaCha8Rng, worst_kkt: &mut f64, solves: &mut usize) -> Result<PropertyOutcome> {
    let mut worst: f64 = 0.0;
    let mut failures = 0usize;
    for _ in 0..ORACLE_PROBLEMS {
        let qp = random_box_qp(rng);
        let sol = solve(&qp, &QpSettings::default())?;
        *solves += 1;
        *worst_kkt = worst_kkt.max(sol.kkt_residual);
        match (sol.status, box_qp_oracle(&qp.h, &qp.f, &qp.lb, &qp.ub)) {
            (QpStatus::Optimal, Some(z)) => worst = worst.max((&sol.z - z).amax()),
            _ => failures += 1,
        }
    }
    Ok(PropertyOutcome {
        name: "qp_oracle",
        passed: failures == 0 && worst <= ORACLE_TOL,
        detail: format!(
            "{ORACLE_PROBLEMS} random box QPs, max |z - z_oracle| {worst:.3e} (tol {ORACLE_TOL:e}), {failures} status mismatches"
        ),
    })
}

/// Constrained closed-loop runs; every solve must certify.
fn closed_loop_kkt(worst_kkt: &mut f64, solves: &mut usize) -> Result<()> {
    for kind in [ControllerKind::ref_cond(1e6), ControllerKind::FullPreview, ControllerKind::NoPreview] {
        for signal in [ReferenceSignal::scalar_step(5.0, 0.0, 1.0), ReferenceSignal::scalar_sinusoid(1.0, 0.5)] {
            let res = simulate_closed_loop(&SimConfig::double_integrator(50, kind, signal, 20.0))?;
            *worst_kkt = worst_kkt.max(res.worst_kkt_residual);
            *solves += res.steps();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_solves_one_dimensional_clip() {
        let h = DMatrix::from_element(1, 1, 1.0);
        let z = box_qp_oracle(&h, &DVector::from_element(1, -5.0), &DVector::from_element(1, -1.0), &DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(z[0], 1.0);
        let z = box_qp_oracle(&h, &DVector::from_element(1, 0.5), &DVector::from_element(1, -1.0), &DVector::from_element(1, 1.0)).unwrap();
        assert_eq!(z[0], -0.5);
    }

    #[test]
    fn oracle_rejects_crossed_bounds() {
        let h = DMatrix::identity(1, 1);
        assert!(box_qp_oracle(&h, &DVector::zeros(1), &DVector::from_element(1, 1.0), &DVector::from_element(1, 0.0)).is_none());
    }
}
