//! The four receding-horizon controllers compared in the studies. They share
//! one constrained MPC problem and differ only in the reference they feed it:
//!
//! - `NoPreview`: the current sample `r(t_k)` held over the horizon,
//! - `AverageRef`: the mean of the preview window,
//! - `RefCond`: the condensed setpoint `S r` (or `S_W r`),
//! - `FullPreview`: the whole window.

mod signal;

pub use signal::{preview_window, random_piecewise_constant, ReferenceSignal};

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::condensation::{average_reference, condense, unweighted_map, weighted_map, CondensationMap};
use crate::error::{Error, Result};
use crate::linalg::repeat_vector;
use crate::lq_batch::{build_batch_operators, tracking_gains, BatchOperators, LtiSystem, TrackingGains, TrackingWeights};
use crate::qp::{
    build_mpc_qp, solve_factored, ActiveSet, DenseQp, HessianFactor, InputBounds, QpSettings, QpStatus, StatePolyhedron,
};

/// Default first-block weight for closed-loop studies.
pub const DEFAULT_RHO: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Condensation {
    Unweighted,
    Weighted { rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerKind {
    NoPreview,
    AverageRef,
    RefCond(Condensation),
    FullPreview,
}

impl ControllerKind {
    pub fn ref_cond(rho: f64) -> Self {
        ControllerKind::RefCond(Condensation::Weighted { rho })
    }

    /// The four controllers in table order, with the given condensation.
    pub fn table(cond: Condensation) -> [ControllerKind; 4] {
        [
            ControllerKind::NoPreview,
            ControllerKind::AverageRef,
            ControllerKind::RefCond(cond),
            ControllerKind::FullPreview,
        ]
    }

    pub fn short_name(&self) -> &'static str {
        match self {
            ControllerKind::NoPreview => "no_preview",
            ControllerKind::AverageRef => "average_ref",
            ControllerKind::RefCond(_) => "ref_cond",
            ControllerKind::FullPreview => "preview",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControllerKind::NoPreview => write!(f, "No preview"),
            ControllerKind::AverageRef => write!(f, "Average ref."),
            ControllerKind::RefCond(Condensation::Unweighted) => write!(f, "Ref. cond. (unweighted)"),
            ControllerKind::RefCond(Condensation::Weighted { rho }) => write!(f, "Ref. cond. (rho={rho:e})"),
            ControllerKind::FullPreview => write!(f, "Preview"),
        }
    }
}

/// Number of online parameters the control law depends on.
pub fn parameter_dimension(kind: ControllerKind, nx: usize, nr: usize, horizon: usize) -> usize {
    match kind {
        ControllerKind::FullPreview => nx + horizon * nr,
        _ => nx + nr,
    }
}

/// First `n_u` rows of `Fx` and `Fr`: the applied unconstrained feedback.
pub fn unconstrained_feedback(g: &TrackingGains) -> (DMatrix<f64>, DMatrix<f64>) {
    (g.first_fx(), g.first_fr())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlDiagnostics {
    /// Constant setpoint used, for the setpoint-based kinds.
    pub setpoint: Option<DVector<f64>>,
    pub qp_iterations: usize,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone)]
pub struct MpcController {
    sys: LtiSystem,
    weights: TrackingWeights,
    horizon: usize,
    kind: ControllerKind,
    input_bounds: InputBounds,
    state_constraints: Option<StatePolyhedron>,
    ops: BatchOperators,
    gains: TrackingGains,
    map: Option<CondensationMap>,
    factor: HessianFactor,
    settings: QpSettings,
    warm: Option<ActiveSet>,
    calls: usize,
}

impl MpcController {
    pub fn new(
        sys: LtiSystem,
        weights: TrackingWeights,
        horizon: usize,
        kind: ControllerKind,
        input_bounds: InputBounds,
        state_constraints: Option<StatePolyhedron>,
    ) -> Result<Self> {
        let ops = build_batch_operators(&sys, &weights, horizon)?;
        let gains = tracking_gains(&ops)?;
        let map = match kind {
            ControllerKind::RefCond(Condensation::Unweighted) => Some(unweighted_map(&gains)?),
            ControllerKind::RefCond(Condensation::Weighted { rho }) => Some(weighted_map(&gains, rho)?),
            _ => None,
        };
        if input_bounds.lb.len() != sys.nu() || input_bounds.ub.len() != sys.nu() {
            return Err(Error::dim("input bounds", sys.nu(), input_bounds.lb.len()));
        }
        let factor = HessianFactor::from_cholesky(ops.h_chol.clone());
        Ok(Self {
            sys,
            weights,
            horizon,
            kind,
            input_bounds,
            state_constraints,
            ops,
            gains,
            map,
            factor,
            settings: QpSettings::default(),
            warm: None,
            calls: 0,
        })
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn system(&self) -> &LtiSystem {
        &self.sys
    }

    pub fn weights(&self) -> &TrackingWeights {
        &self.weights
    }

    pub fn operators(&self) -> &BatchOperators {
        &self.ops
    }

    pub fn gains(&self) -> &TrackingGains {
        &self.gains
    }

    pub fn condensation_map(&self) -> Option<&CondensationMap> {
        self.map.as_ref()
    }

    pub fn parameter_dimension(&self) -> usize {
        parameter_dimension(self.kind, self.sys.nx(), self.sys.nr(), self.horizon)
    }

    /// Forget the warm-start working set.
    pub fn reset(&mut self) {
        self.warm = None;
        self.calls = 0;
    }

    /// The constant setpoint this controller would track, if it uses one.
    pub fn setpoint(&self, current: &DVector<f64>, window: &DVector<f64>) -> Result<Option<DVector<f64>>> {
        let nr = self.sys.nr();
        if window.len() != self.horizon * nr {
            return Err(Error::dim("preview window", self.horizon * nr, window.len()));
        }
        if current.len() != nr {
            return Err(Error::dim("current reference", nr, current.len()));
        }
        Ok(match self.kind {
            ControllerKind::NoPreview => Some(current.clone()),
            ControllerKind::AverageRef => Some(average_reference(window, nr)),
            ControllerKind::RefCond(_) => Some(condense(self.map.as_ref().expect("map built for RefCond"), window)?),
            ControllerKind::FullPreview => None,
        })
    }

    /// The MPC QP this controller solves at state `x`.
    pub fn qp(&self, x: &DVector<f64>, current: &DVector<f64>, window: &DVector<f64>) -> Result<DenseQp> {
        let stacked = match self.setpoint(current, window)? {
            Some(sp) => repeat_vector(&sp, self.horizon),
            None => window.clone(),
        };
        build_mpc_qp(&self.ops, x, &stacked, &self.input_bounds, self.state_constraints.as_ref())
    }

    /// Solve the MPC problem and return the first control `u_0`.
    pub fn control_action(
        &mut self,
        x: &DVector<f64>,
        current: &DVector<f64>,
        window: &DVector<f64>,
    ) -> Result<(DVector<f64>, ControlDiagnostics)> {
        let step = self.calls;
        self.calls += 1;
        let setpoint = self.setpoint(current, window)?;
        let qp = self.qp(x, current, window)?;
        let settings = QpSettings {
            warm_start: self.warm.clone(),
            ..self.settings.clone()
        };
        let sol = solve_factored(&qp, &self.factor, &settings)?;
        match sol.status {
            QpStatus::Optimal => {}
            QpStatus::Infeasible => {
                return Err(Error::Infeasible {
                    step,
                    detail: format!("constraints inconsistent at x = {:?}", x.as_slice()),
                })
            }
            QpStatus::MaxIterations => {
                return Err(Error::QpNotConverged {
                    step,
                    iterations: sol.iterations,
                })
            }
        }
        if sol.kkt_residual > settings.tol_kkt {
            return Err(Error::KktCertification {
                residual: sol.kkt_residual,
                tolerance: settings.tol_kkt,
            });
        }
        self.warm = Some(sol.active_set.clone());
        let u0 = sol.z.rows(0, self.sys.nu()).into_owned();
        Ok((
            u0,
            ControlDiagnostics {
                setpoint,
                qp_iterations: sol.iterations,
                kkt_residual: sol.kkt_residual,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn controller(kind: ControllerKind, bounds: InputBounds) -> MpcController {
        MpcController::new(
            LtiSystem::double_integrator(0.1),
            TrackingWeights::identity(1, 1),
            50,
            kind,
            bounds,
            None,
        )
        .unwrap()
    }

    #[test]
    fn parameter_dimensions() {
        assert_eq!(parameter_dimension(ControllerKind::FullPreview, 2, 1, 50), 52);
        assert_eq!(parameter_dimension(ControllerKind::ref_cond(1e6), 2, 1, 50), 3);
        assert_eq!(parameter_dimension(ControllerKind::NoPreview, 2, 1, 50), 3);
        assert_eq!(parameter_dimension(ControllerKind::FullPreview, 4, 2, 1), 6);
        assert_eq!(parameter_dimension(ControllerKind::AverageRef, 4, 2, 1), 6);
    }

    #[test]
    fn scalar_feedback() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let sys = LtiSystem::new(one.clone(), one.clone(), one.clone(), 1.0).unwrap();
        let g = tracking_gains(&build_batch_operators(&sys, &TrackingWeights::identity(1, 1), 1).unwrap()).unwrap();
        let (kx, kr) = unconstrained_feedback(&g);
        assert!((kx[(0, 0)] + 0.5).abs() < 1e-15);
        assert!((kr[(0, 0)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn anticipates_step_inside_window() {
        let sig = ReferenceSignal::scalar_step(5.0, 0.0, 1.0);
        let bounds = InputBounds::symmetric(1, 1.0);
        let k = 30; // t = 3 s, step 2 s ahead
        let window = preview_window(&sig, k, 50, 0.1);
        let current = sig.eval(k as f64 * 0.1);
        let x = DVector::zeros(2);
        let (u_cond, _) = controller(ControllerKind::ref_cond(1e6), bounds.clone())
            .control_action(&x, &current, &window)
            .unwrap();
        let (u_none, _) = controller(ControllerKind::NoPreview, bounds).control_action(&x, &current, &window).unwrap();
        assert!(u_cond[0] > 0.0);
        assert_eq!(u_none[0], 0.0);
    }

    #[test]
    fn rejects_wrong_window_length() {
        let mut c = controller(ControllerKind::FullPreview, InputBounds::unbounded(1));
        let err = c.control_action(&DVector::zeros(2), &DVector::zeros(1), &DVector::zeros(49));
        assert!(matches!(err, Err(Error::Dimension { .. })));
    }
}
