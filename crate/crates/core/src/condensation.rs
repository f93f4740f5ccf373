//! Reference condensation: a linear map `S` from a stacked preview window
//! `(r_1, ..., r_N)` to one setpoint `r_bar = S r`, chosen so that the
//! constant-reference control sequence `Fr I r_bar` is the (weighted)
//! least-squares projection of the preview control sequence `Fr r`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{block_mean, repeat_vector, spectral_norm, spectral_radius, stacked_identity};
use crate::lq_batch::{LtiSystem, TrackingGains};

/// Default number of matrix powers checked when fitting decay constants.
pub const DEFAULT_DECAY_HORIZON: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    /// `W = diag(rho^2 I_{n_u}, I, ..., I)`: the first control block's
    /// residual is scaled by `rho`.
    FirstBlock { rho: f64 },
    /// Arbitrary symmetric positive definite `W` of size `N n_u`.
    General(DMatrix<f64>),
}

impl WeightSpec {
    fn matrix(&self, horizon: usize, nu: usize) -> Result<DMatrix<f64>> {
        let n = horizon * nu;
        match self {
            WeightSpec::FirstBlock { rho } => {
                if !(*rho > 0.0) || !rho.is_finite() {
                    return Err(Error::InvalidArgument(format!("weight rho must be positive, got {rho}")));
                }
                let mut w = DMatrix::identity(n, n);
                for i in 0..nu {
                    w[(i, i)] = rho * rho;
                }
                Ok(w)
            }
            WeightSpec::General(w) => {
                if w.shape() != (n, n) {
                    return Err(Error::dim("W", format!("{n}x{n}"), format!("{}x{}", w.nrows(), w.ncols())));
                }
                Ok(w.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapKind {
    Unweighted,
    Weighted(WeightSpec),
}

#[derive(Debug, Clone)]
pub struct CondensationMap {
    /// `n_r x N n_r`.
    pub s: DMatrix<f64>,
    pub kind: MapKind,
    /// `Fr I` had full column rank when the map was built.
    pub rank_ok: bool,
    pub horizon: usize,
    pub nr: usize,
}

impl CondensationMap {
    /// Row sums of `S`.
    pub fn row_sums(&self) -> DVector<f64> {
        DVector::from_fn(self.s.nrows(), |i, _| self.s.row(i).sum())
    }

    fn zero(g: &TrackingGains, kind: MapKind) -> Self {
        Self {
            s: DMatrix::zeros(g.nr, g.horizon * g.nr),
            kind,
            rank_ok: false,
            horizon: g.horizon,
            nr: g.nr,
        }
    }
}

/// `Fr * I`: the control sequence induced by a unit constant reference.
pub fn constant_reference_response(g: &TrackingGains) -> DMatrix<f64> {
    &g.fr * stacked_identity(g.nr, g.horizon)
}

struct RankInfo {
    sigma_max: f64,
    sigma_min: f64,
    tolerance: f64,
}

impl RankInfo {
    fn of(fri: &DMatrix<f64>) -> Self {
        let sv = fri.clone().svd(false, false).singular_values;
        let sigma_max = sv.iter().cloned().fold(0.0, f64::max);
        // fewer rows than columns means some singular values are structurally zero
        let sigma_min = if fri.nrows() < fri.ncols() {
            0.0
        } else {
            sv.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        let tolerance = fri.nrows().max(fri.ncols()) as f64 * f64::EPSILON * sigma_max;
        Self { sigma_max, sigma_min, tolerance }
    }

    fn full_rank(&self) -> bool {
        self.sigma_max > 0.0 && self.sigma_min > self.tolerance
    }
}

/// `S = pinv(Fr I) Fr`, the minimum-norm least-squares condensation.
///
/// When `Fr I` vanishes (e.g. `Q = 0`) the map is all zeros and `rank_ok` is false.
pub fn unweighted_map(g: &TrackingGains) -> Result<CondensationMap> {
    let fri = constant_reference_response(g);
    let rank = RankInfo::of(&fri);
    if rank.sigma_max == 0.0 {
        return Ok(CondensationMap::zero(g, MapKind::Unweighted));
    }
    let pinv = fri
        .svd(true, true)
        .pseudo_inverse(rank.tolerance)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(CondensationMap {
        s: pinv * &g.fr,
        kind: MapKind::Unweighted,
        rank_ok: rank.full_rank(),
        horizon: g.horizon,
        nr: g.nr,
    })
}

/// Weighted condensation with the first-block weight `rho`.
pub fn weighted_map(g: &TrackingGains, rho: f64) -> Result<CondensationMap> {
    weighted_map_with(g, WeightSpec::FirstBlock { rho })
}

/// `S_W = (I' Fr' W Fr I)^-1 I' Fr' W Fr`.
pub fn weighted_map_with(g: &TrackingGains, spec: WeightSpec) -> Result<CondensationMap> {
    let w = spec.matrix(g.horizon, g.nu)?;
    let fri = constant_reference_response(g);
    let rank = RankInfo::of(&fri);
    if rank.sigma_max == 0.0 {
        return Ok(CondensationMap::zero(g, MapKind::Weighted(spec)));
    }
    if !rank.full_rank() {
        return Err(Error::RankDeficient {
            sigma_min: rank.sigma_min,
            tolerance: rank.tolerance,
        });
    }
    // Whitened least squares |L'(Fr I r_bar - Fr r)| with W = L L', solved by
    // Householder QR. The heavily weighted first block leads the rows, which
    // keeps QR accurate for large weights; normal equations would square the
    // conditioning.
    let lt = w
        .cholesky()
        .ok_or(Error::NotPositiveDefinite {
            name: "W",
            min_eigenvalue: f64::NAN,
            tolerance: 0.0,
        })?
        .l()
        .transpose();
    let qr = (&lt * &fri).qr();
    let rhs = qr.q().transpose() * (&lt * &g.fr);
    let s = qr.r().solve_upper_triangular(&rhs).ok_or(Error::RankDeficient {
        sigma_min: rank.sigma_min,
        tolerance: rank.tolerance,
    })?;
    Ok(CondensationMap {
        s,
        kind: MapKind::Weighted(spec),
        rank_ok: true,
        horizon: g.horizon,
        nr: g.nr,
    })
}

pub fn condense(m: &CondensationMap, r: &DVector<f64>) -> Result<DVector<f64>> {
    if r.len() != m.s.ncols() {
        return Err(Error::dim("stacked reference", m.s.ncols(), r.len()));
    }
    Ok(&m.s * r)
}

/// Arithmetic mean of the `N` reference blocks of size `nr`.
///
/// Panics if `r` is empty or its length is not a multiple of `nr`.
pub fn average_reference(r: &DVector<f64>, nr: usize) -> DVector<f64> {
    assert!(nr > 0 && !r.is_empty() && r.len() % nr == 0, "stacked reference length {} not a multiple of {nr}", r.len());
    block_mean(r, nr)
}

/// The part of the window a single setpoint cannot represent: `r - I S r`.
pub fn condensation_residual(m: &CondensationMap, r: &DVector<f64>) -> Result<DVector<f64>> {
    let rbar = condense(m, r)?;
    Ok(r - repeat_vector(&rbar, m.horizon))
}

/// `Fr r - Fr I S r`, the control-sequence error caused by condensing.
pub fn control_mismatch(g: &TrackingGains, m: &CondensationMap, r: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(&g.fr * condensation_residual(m, r)?)
}

/// Upper bound `sigma_max(Fr) |r - I r_avg|` on the control-sequence error.
pub fn control_error_bound(g: &TrackingGains, r: &DVector<f64>) -> Result<f64> {
    if r.len() != g.horizon * g.nr {
        return Err(Error::dim("stacked reference", g.horizon * g.nr, r.len()));
    }
    let avg = average_reference(r, g.nr);
    let deviation = r - repeat_vector(&avg, g.horizon);
    Ok(g.fr_spectral_norm() * deviation.norm())
}

/// Constants with `|A_cl^i|_2 <= c lambda^i` for `i < horizon_checked`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayEstimate {
    pub c: f64,
    pub lambda: f64,
    pub horizon_checked: usize,
}

/// Fixes `lambda = (rho(A_cl) + 1) / 2` and fits `c` over the checked powers.
pub fn estimate_decay(a_cl: &DMatrix<f64>, horizon_checked: usize) -> Result<DecayEstimate> {
    if !a_cl.is_square() {
        return Err(Error::dim("A_cl", "square", format!("{}x{}", a_cl.nrows(), a_cl.ncols())));
    }
    let radius = spectral_radius(a_cl);
    if !(radius < 1.0) {
        return Err(Error::Unstable { spectral_radius: radius });
    }
    let lambda = 0.5 * (radius + 1.0);
    let ln_lambda = lambda.ln();
    let mut c: f64 = 1.0;
    let mut power = DMatrix::identity(a_cl.nrows(), a_cl.nrows());
    for i in 0..horizon_checked {
        let norm = spectral_norm(&power);
        if norm > 0.0 {
            // log domain so lambda^i cannot underflow
            c = c.max((norm.ln() - i as f64 * ln_lambda).exp());
        }
        power = &power * a_cl;
    }
    Ok(DecayEstimate { c, lambda, horizon_checked })
}

/// `A + B [Fx]_1`, the closed loop under the first-step unconstrained feedback.
pub fn closed_loop_matrix(g: &TrackingGains, sys: &LtiSystem) -> DMatrix<f64> {
    &sys.a + &sys.b * g.first_fx()
}

/// Bound on `|x_k^prev - x_k^cond|` over a receding-horizon run whose preview
/// windows are `windows`: `c |B [Fr]_1| / (1 - lambda) * max_j |e_j|`.
pub fn closed_loop_bound(
    g: &TrackingGains,
    sys: &LtiSystem,
    m: &CondensationMap,
    windows: &[DVector<f64>],
) -> Result<f64> {
    let decay = estimate_decay(&closed_loop_matrix(g, sys), DEFAULT_DECAY_HORIZON)?;
    closed_loop_bound_with(&decay, g, sys, m, windows)
}

pub fn closed_loop_bound_with(
    decay: &DecayEstimate,
    g: &TrackingGains,
    sys: &LtiSystem,
    m: &CondensationMap,
    windows: &[DVector<f64>],
) -> Result<f64> {
    let mut max_residual: f64 = 0.0;
    for w in windows {
        max_residual = max_residual.max(condensation_residual(m, w)?.norm());
    }
    let input_gain = spectral_norm(&(&sys.b * g.first_fr()));
    Ok(decay.c * input_gain / (1.0 - decay.lambda) * max_residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lq_batch::{build_batch_operators, tracking_gains, TrackingWeights};

    fn gains(n: usize) -> TrackingGains {
        let sys = LtiSystem::double_integrator(0.1);
        tracking_gains(&build_batch_operators(&sys, &TrackingWeights::identity(1, 1), n).unwrap()).unwrap()
    }

    #[test]
    fn single_step_horizon_gives_identity() {
        let m = unweighted_map(&gains(1)).unwrap();
        assert!(m.rank_ok);
        assert!((m.s[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_weight_recovers_unweighted_map() {
        let g = gains(30);
        let s = unweighted_map(&g).unwrap();
        let sw = weighted_map(&g, 1.0).unwrap();
        assert!((&s.s - &sw.s).amax() < 1e-9);
    }

    #[test]
    fn average_reference_examples() {
        let r = DVector::from_vec(vec![0.0, 1.0]);
        assert_eq!(average_reference(&r, 1)[0], 0.5);
        let r = DVector::from_vec(vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(average_reference(&r, 2), DVector::from_vec(vec![0.5, 0.5]));
        let c = DVector::from_element(7, -0.3);
        assert!((average_reference(&c, 1)[0] + 0.3).abs() < 1e-15);
    }

    #[test]
    fn error_bound_with_identity_fr() {
        let g = TrackingGains::from_parts(DMatrix::zeros(2, 1), DMatrix::identity(2, 2), 1, 1, 1).unwrap();
        let b = control_error_bound(&g, &DVector::from_vec(vec![0.0, 2.0])).unwrap();
        assert!((b - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(control_error_bound(&g, &DVector::from_vec(vec![3.0, 3.0])).unwrap(), 0.0);
    }

    #[test]
    fn decay_of_trivial_matrices() {
        let d = estimate_decay(&DMatrix::zeros(2, 2), 50).unwrap();
        assert_eq!((d.c, d.lambda), (1.0, 0.5));
        let d = estimate_decay(&(DMatrix::identity(3, 3) * 0.5), 200).unwrap();
        assert!((d.lambda - 0.75).abs() < 1e-15);
        assert!((d.c - 1.0).abs() < 1e-12);
        assert!(matches!(
            estimate_decay(&DMatrix::identity(2, 2), 10),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn degenerate_tracking_weight_gives_zero_maps() {
        let sys = LtiSystem::double_integrator(0.1);
        let w = TrackingWeights::new(DMatrix::zeros(1, 1), DMatrix::identity(1, 1)).unwrap();
        let g = tracking_gains(&build_batch_operators(&sys, &w, 5).unwrap()).unwrap();
        let m = unweighted_map(&g).unwrap();
        assert!(!m.rank_ok);
        assert_eq!(m.s.amax(), 0.0);
        let mw = weighted_map(&g, 1e6).unwrap();
        assert!(!mw.rank_ok);
    }

    #[test]
    fn rejects_nonpositive_rho_and_bad_windows() {
        let g = gains(5);
        assert!(weighted_map(&g, 0.0).is_err());
        assert!(weighted_map(&g, -1.0).is_err());
        let m = unweighted_map(&g).unwrap();
        assert!(condense(&m, &DVector::zeros(4)).is_err());
    }

    #[test]
    fn rank_deficient_weighted_map_errors() {
        // two outputs tracking the same state: Fr I has two identical columns
        let sys = LtiSystem::new(
            DMatrix::from_element(1, 1, 0.9),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            0.1,
        )
        .unwrap();
        let w = TrackingWeights::identity(2, 1);
        let g = tracking_gains(&build_batch_operators(&sys, &w, 4).unwrap()).unwrap();
        assert!(!unweighted_map(&g).unwrap().rank_ok);
        assert!(matches!(weighted_map(&g, 10.0), Err(Error::RankDeficient { .. })));
    }
}
