//! Dense strictly convex QP solver and the MPC QP assembly.
//!
//! Problems have the form
//!
//! ```text
//!     minimize    1/2 z' H z + f' z
//!     subject to  lb <= z <= ub
//!                 G z <= g
//! ```
//!
//! with `H` positive definite. The solver is a dual active-set method in the
//! style of Goldfarb and Idnani: it starts from the unconstrained minimizer
//! (or from a warm-start working set made dual feasible), repeatedly picks
//! the most violated constraint, and moves along the dual direction until
//! either that constraint becomes active or a working-set multiplier hits
//! zero. The working set is kept linearly independent, so every iterate is
//! the minimizer over its working set and the method terminates with an
//! exact (to rounding) KKT point or a Farkas certificate of infeasibility.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::lq_batch::BatchOperators;

pub const DEFAULT_TOL_KKT: f64 = 1e-8;

/// A constraint is added only when violated by more than this fraction of `tol_kkt`.
const ADD_FRACTION: f64 = 1e-3;
/// Relative size below which a constraint normal counts as dependent on the working set.
const DEPENDENCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseQp {
    pub h: DMatrix<f64>,
    pub f: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
    pub g_mat: DMatrix<f64>,
    pub g_vec: DVector<f64>,
}

impl DenseQp {
    /// Unconstrained problem; add bounds and inequalities with the builder methods.
    pub fn new(h: DMatrix<f64>, f: DVector<f64>) -> Self {
        let n = f.len();
        Self {
            h,
            f,
            lb: DVector::from_element(n, f64::NEG_INFINITY),
            ub: DVector::from_element(n, f64::INFINITY),
            g_mat: DMatrix::zeros(0, n),
            g_vec: DVector::zeros(0),
        }
    }

    pub fn with_bounds(mut self, lb: DVector<f64>, ub: DVector<f64>) -> Self {
        self.lb = lb;
        self.ub = ub;
        self
    }

    pub fn with_inequalities(mut self, g_mat: DMatrix<f64>, g_vec: DVector<f64>) -> Self {
        self.g_mat = g_mat;
        self.g_vec = g_vec;
        self
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn m(&self) -> usize {
        self.g_vec.len()
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.f.dot(z)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.h.shape() != (n, n) {
            return Err(Error::dim("QP Hessian", format!("{n}x{n}"), format!("{}x{}", self.h.nrows(), self.h.ncols())));
        }
        if self.lb.len() != n || self.ub.len() != n {
            return Err(Error::dim("QP bounds", n, format!("{}/{}", self.lb.len(), self.ub.len())));
        }
        if self.g_mat.ncols() != n || self.g_mat.nrows() != self.g_vec.len() {
            return Err(Error::dim(
                "QP inequalities",
                format!("{}x{n}", self.g_vec.len()),
                format!("{}x{}", self.g_mat.nrows(), self.g_mat.ncols()),
            ));
        }
        if self.h.iter().chain(self.f.iter()).chain(self.g_mat.iter()).any(|v| !v.is_finite())
            || self.g_vec.iter().chain(self.lb.iter()).chain(self.ub.iter()).any(|v| v.is_nan())
        {
            return Err(Error::InvalidArgument("QP data contains NaN or infinite coefficients".into()));
        }
        let scale = self.h.amax().max(f64::MIN_POSITIVE);
        if (&self.h - self.h.transpose()).amax() > 1e-10 * scale {
            return Err(Error::InvalidArgument("QP Hessian is not symmetric".into()));
        }
        if let Some(i) = (0..n).find(|&i| self.lb[i] > self.ub[i]) {
            return Err(Error::InvalidArgument(format!(
                "inconsistent bounds on z[{i}]: lb = {} > ub = {}",
                self.lb[i], self.ub[i]
            )));
        }
        Ok(())
    }
}

/// Identifies one inequality of a [`DenseQp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintId {
    Lower(usize),
    Upper(usize),
    General(usize),
}

/// Working set carried between receding-horizon solves.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActiveSet(pub Vec<ConstraintId>);

#[derive(Debug, Clone)]
pub struct QpSettings {
    pub tol_kkt: f64,
    /// Defaults to `10 (n + m)` when unset.
    pub max_iterations: Option<usize>,
    pub warm_start: Option<ActiveSet>,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol_kkt: DEFAULT_TOL_KKT,
            max_iterations: None,
            warm_start: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Duals {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub general: DVector<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KktResidual {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

/// Nonnegative multipliers `y` with `sum y_j n_j = 0` and `sum y_j d_j < 0`,
/// where constraint `j` reads `n_j' z <= d_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityCertificate {
    pub multipliers: Vec<(ConstraintId, f64)>,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub status: QpStatus,
    pub duals: Duals,
    pub active_set: ActiveSet,
    pub iterations: usize,
    pub kkt: KktResidual,
    /// `kkt.max()`, kept as a field for reporting.
    pub kkt_residual: f64,
    pub certificate: Option<InfeasibilityCertificate>,
}

/// Cholesky factor `H = L L'` with `L^-1` kept explicitly; reused across
/// solves that share a Hessian.
#[derive(Debug, Clone)]
pub struct HessianFactor {
    chol: Cholesky<f64, Dyn>,
    l_inv: DMatrix<f64>,
}

impl HessianFactor {
    pub fn new(h: &DMatrix<f64>) -> Result<Self> {
        let chol = Cholesky::new(h.clone()).ok_or(Error::NotPositiveDefinite {
            name: "QP Hessian",
            min_eigenvalue: f64::NAN,
            tolerance: 0.0,
        })?;
        Ok(Self::from_cholesky(chol))
    }

    pub fn from_cholesky(chol: Cholesky<f64, Dyn>) -> Self {
        let n = chol.l_dirty().nrows();
        let l = chol.l();
        let l_inv = l
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("Cholesky factor has a positive diagonal");
        Self { chol, l_inv }
    }

    pub fn dim(&self) -> usize {
        self.l_inv.nrows()
    }
}

pub fn solve(qp: &DenseQp, settings: &QpSettings) -> Result<QpSolution> {
    qp.validate()?;
    let factor = HessianFactor::new(&qp.h)?;
    solve_validated(qp, &factor, settings)
}

/// Solve with a precomputed factorization of `qp.h`.
pub fn solve_factored(qp: &DenseQp, factor: &HessianFactor, settings: &QpSettings) -> Result<QpSolution> {
    qp.validate()?;
    if factor.dim() != qp.n() {
        return Err(Error::dim("Hessian factor", qp.n(), factor.dim()));
    }
    solve_validated(qp, factor, settings)
}

fn solve_validated(qp: &DenseQp, factor: &HessianFactor, settings: &QpSettings) -> Result<QpSolution> {
    let mut solver = DualActiveSet::new(qp, factor, settings);
    solver.run()
}

struct DualActiveSet<'a> {
    qp: &'a DenseQp,
    factor: &'a HessianFactor,
    tol: f64,
    max_iterations: usize,
    warm: Option<&'a ActiveSet>,
    /// `L^-1 G'`, one column per general row.
    v_general: DMatrix<f64>,
    general_norm: Vec<f64>,
    z_unc: DVector<f64>,
    z: DVector<f64>,
    active: Vec<ConstraintId>,
    lambda: Vec<f64>,
    iterations: usize,
}

impl<'a> DualActiveSet<'a> {
    fn new(qp: &'a DenseQp, factor: &'a HessianFactor, settings: &'a QpSettings) -> Self {
        let z_unc = factor.chol.solve(&(-&qp.f));
        let v_general = &factor.l_inv * qp.g_mat.transpose();
        let general_norm = (0..qp.m()).map(|j| qp.g_mat.row(j).norm()).collect();
        Self {
            qp,
            factor,
            tol: settings.tol_kkt,
            max_iterations: settings.max_iterations.unwrap_or(10 * (qp.n() + qp.m())),
            warm: settings.warm_start.as_ref(),
            v_general,
            general_norm,
            z: z_unc.clone(),
            z_unc,
            active: Vec::new(),
            lambda: Vec::new(),
            iterations: 0,
        }
    }

    /// Constraints in a fixed order: lower bounds, upper bounds, general rows.
    fn candidates(&self) -> impl Iterator<Item = ConstraintId> + '_ {
        let n = self.qp.n();
        (0..n)
            .filter(|&i| self.qp.lb[i].is_finite())
            .map(ConstraintId::Lower)
            .chain((0..n).filter(|&i| self.qp.ub[i].is_finite()).map(ConstraintId::Upper))
            .chain((0..self.qp.m()).filter(|&j| self.general_norm[j] > 0.0).map(ConstraintId::General))
    }

    fn is_valid(&self, c: ConstraintId) -> bool {
        match c {
            ConstraintId::Lower(i) => i < self.qp.n() && self.qp.lb[i].is_finite(),
            ConstraintId::Upper(i) => i < self.qp.n() && self.qp.ub[i].is_finite(),
            ConstraintId::General(j) => j < self.qp.m() && self.general_norm[j] > 0.0 && self.qp.g_vec[j].is_finite(),
        }
    }

    fn rhs(&self, c: ConstraintId) -> f64 {
        match c {
            ConstraintId::Lower(i) => -self.qp.lb[i],
            ConstraintId::Upper(i) => self.qp.ub[i],
            ConstraintId::General(j) => self.qp.g_vec[j],
        }
    }

    fn value(&self, c: ConstraintId, z: &DVector<f64>) -> f64 {
        match c {
            ConstraintId::Lower(i) => -z[i],
            ConstraintId::Upper(i) => z[i],
            ConstraintId::General(j) => self.qp.g_mat.row(j).transpose().dot(z),
        }
    }

    /// `L^-1 n_c`.
    fn v(&self, c: ConstraintId) -> DVector<f64> {
        match c {
            ConstraintId::Lower(i) => -self.factor.l_inv.column(i),
            ConstraintId::Upper(i) => self.factor.l_inv.column(i).into_owned(),
            ConstraintId::General(j) => self.v_general.column(j).into_owned(),
        }
    }

    /// Adds `n_c` scaled by `scale` into `acc`.
    fn add_normal(&self, c: ConstraintId, scale: f64, acc: &mut DVector<f64>) {
        match c {
            ConstraintId::Lower(i) => acc[i] -= scale,
            ConstraintId::Upper(i) => acc[i] += scale,
            ConstraintId::General(j) => acc.axpy(scale, &self.qp.g_mat.row(j).transpose(), 1.0),
        }
    }

    fn v_matrix(&self, set: &[ConstraintId]) -> DMatrix<f64> {
        let mut v = DMatrix::zeros(self.qp.n(), set.len());
        for (k, &c) in set.iter().enumerate() {
            v.set_column(k, &self.v(c));
        }
        v
    }

    fn gram_cholesky(v: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
        let gram = v.tr_mul(v);
        Cholesky::new((&gram + gram.transpose()) * 0.5)
    }

    /// Minimizer and multipliers with `set` held as equalities.
    fn solve_on(&self, set: &[ConstraintId]) -> Option<(DVector<f64>, Vec<f64>)> {
        if set.is_empty() {
            return Some((self.z_unc.clone(), Vec::new()));
        }
        let v = self.v_matrix(set);
        let chol = Self::gram_cholesky(&v)?;
        let rhs = DVector::from_iterator(
            set.len(),
            set.iter().map(|&c| self.value(c, &self.z_unc) - self.rhs(c)),
        );
        let lambda = chol.solve(&rhs);
        let z = &self.z_unc - self.factor.l_inv.tr_mul(&(&v * &lambda));
        Some((z, lambda.iter().cloned().collect()))
    }

    /// Component of `v_c` orthogonal to the span of the working set, and the
    /// coefficients `d_lambda` with `w = v_c + V d_lambda`.
    fn project_out(&self, v: &DMatrix<f64>, chol: Option<&Cholesky<f64, Dyn>>, vc: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        match chol {
            None => (vc.clone(), DVector::zeros(0)),
            Some(chol) => {
                let d_lambda = -chol.solve(&v.tr_mul(vc));
                let w = vc + v * &d_lambda;
                (w, d_lambda)
            }
        }
    }

    fn initialize_from_warm_start(&mut self) {
        let Some(warm) = self.warm else { return };
        let mut set: Vec<ConstraintId> = Vec::new();
        for &c in &warm.0 {
            if !self.is_valid(c) || set.contains(&c) {
                continue;
            }
            let v = self.v_matrix(&set);
            let chol = if set.is_empty() { None } else { Self::gram_cholesky(&v) };
            let vc = self.v(c);
            let (w, _) = self.project_out(&v, chol.as_ref(), &vc);
            if w.norm() > DEPENDENCE_TOL * vc.norm() {
                set.push(c);
            }
        }
        // drop negative multipliers until the working set is dual feasible
        loop {
            let Some((z, lambda)) = self.solve_on(&set) else {
                set.clear();
                break;
            };
            let worst = lambda
                .iter()
                .enumerate()
                .filter(|(_, &l)| l < 0.0)
                .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)));
            match worst {
                Some((k, _)) => {
                    set.remove(k);
                }
                None => {
                    self.z = z;
                    self.active = set;
                    self.lambda = lambda;
                    return;
                }
            }
        }
        self.z = self.z_unc.clone();
        self.active.clear();
        self.lambda.clear();
    }

    /// Most violated inactive constraint; lowest index wins exact ties.
    fn most_violated(&self) -> Option<(ConstraintId, f64)> {
        let mut best: Option<(ConstraintId, f64)> = None;
        for c in self.candidates() {
            if self.active.contains(&c) {
                continue;
            }
            let viol = self.value(c, &self.z) - self.rhs(c);
            let threshold = ADD_FRACTION * self.tol * (1.0 + self.rhs(c).abs());
            if viol > threshold && best.map_or(true, |(_, b)| viol > b) {
                best = Some((c, viol));
            }
        }
        best
    }

    fn run(&mut self) -> Result<QpSolution> {
        // all-zero general rows: vacuous if g >= 0, otherwise trivially infeasible
        for j in 0..self.qp.m() {
            if self.general_norm[j] == 0.0 && self.qp.g_vec[j] < 0.0 {
                let cert = InfeasibilityCertificate {
                    multipliers: vec![(ConstraintId::General(j), 1.0)],
                };
                return Ok(self.finish(QpStatus::Infeasible, Some(cert)));
            }
        }

        self.initialize_from_warm_start();

        while let Some((p, _)) = self.most_violated() {
            let mut lambda_p = 0.0;
            let vp = self.v(p);
            let vp_norm = vp.norm();
            loop {
                if self.iterations >= self.max_iterations {
                    return Ok(self.finish(QpStatus::MaxIterations, None));
                }
                self.iterations += 1;

                let v = self.v_matrix(&self.active);
                let chol = if self.active.is_empty() { None } else { Self::gram_cholesky(&v) };
                let (w, d_lambda) = self.project_out(&v, chol.as_ref(), &vp);
                let w_norm = w.norm();

                let viol = self.value(p, &self.z) - self.rhs(p);
                let full_step = if w_norm > DEPENDENCE_TOL * vp_norm {
                    viol / (w_norm * w_norm)
                } else {
                    f64::INFINITY
                };
                let mut partial_step = f64::INFINITY;
                let mut blocking = None;
                for (k, &dl) in d_lambda.iter().enumerate() {
                    if dl < 0.0 {
                        let t = self.lambda[k] / -dl;
                        if t < partial_step {
                            partial_step = t;
                            blocking = Some(k);
                        }
                    }
                }

                if full_step.is_infinite() && blocking.is_none() {
                    let mut multipliers = vec![(p, 1.0)];
                    multipliers.extend(self.active.iter().zip(d_lambda.iter()).map(|(&c, &dl)| (c, dl.max(0.0))));
                    return Ok(self.finish(QpStatus::Infeasible, Some(InfeasibilityCertificate { multipliers })));
                }

                let t = full_step.min(partial_step);
                if t.is_finite() && w_norm > 0.0 {
                    // dz = -L^-T w
                    let dz = -self.factor.l_inv.tr_mul(&w);
                    self.z.axpy(t, &dz, 1.0);
                }
                for (l, dl) in self.lambda.iter_mut().zip(d_lambda.iter()) {
                    *l += t * dl;
                }
                lambda_p += t;

                if full_step <= partial_step {
                    self.active.push(p);
                    self.lambda.push(lambda_p);
                    break;
                }
                let k = blocking.expect("partial step has a blocking constraint");
                self.active.remove(k);
                self.lambda.remove(k);
            }
        }

        // recompute the final iterate from scratch on the working set
        if let Some((z, lambda)) = self.solve_on(&self.active) {
            self.z = z;
            self.lambda = lambda;
        }
        Ok(self.finish(QpStatus::Optimal, None))
    }

    fn finish(&self, status: QpStatus, certificate: Option<InfeasibilityCertificate>) -> QpSolution {
        let n = self.qp.n();
        let mut duals = Duals {
            lower: DVector::zeros(n),
            upper: DVector::zeros(n),
            general: DVector::zeros(self.qp.m()),
        };
        for (&c, &l) in self.active.iter().zip(self.lambda.iter()) {
            match c {
                ConstraintId::Lower(i) => duals.lower[i] = l,
                ConstraintId::Upper(i) => duals.upper[i] = l,
                ConstraintId::General(j) => duals.general[j] = l,
            }
        }
        let kkt = self.kkt(&self.z);
        QpSolution {
            z: self.z.clone(),
            status,
            duals,
            active_set: ActiveSet(self.active.clone()),
            iterations: self.iterations,
            kkt_residual: kkt.max(),
            kkt,
            certificate,
        }
    }

    fn kkt(&self, z: &DVector<f64>) -> KktResidual {
        let mut grad = &self.qp.h * z + &self.qp.f;
        let mut res = KktResidual::default();
        for (&c, &l) in self.active.iter().zip(self.lambda.iter()) {
            self.add_normal(c, l, &mut grad);
            res.dual = res.dual.max(-l);
            res.complementarity = res.complementarity.max((l * (self.value(c, z) - self.rhs(c))).abs());
        }
        res.stationarity = grad.amax();
        for c in self.candidates() {
            res.primal = res.primal.max(self.value(c, z) - self.rhs(c));
        }
        res
    }
}

/// Per-step input box `lb <= u_k <= ub`; entries may be infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBounds {
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl InputBounds {
    pub fn unbounded(nu: usize) -> Self {
        Self {
            lb: DVector::from_element(nu, f64::NEG_INFINITY),
            ub: DVector::from_element(nu, f64::INFINITY),
        }
    }

    pub fn symmetric(nu: usize, limit: f64) -> Self {
        Self {
            lb: DVector::from_element(nu, -limit),
            ub: DVector::from_element(nu, limit),
        }
    }
}

/// State polyhedron `F x_k <= h`, imposed on every predicted state `x_1..x_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePolyhedron {
    pub f: DMatrix<f64>,
    pub h: DVector<f64>,
}

/// Condensed constrained MPC QP for state `x` and stacked reference `r`.
///
/// Only `f` depends on the reference; `H`, the bounds and `(G, g)` are
/// identical for every reference at a fixed state.
pub fn build_mpc_qp(
    ops: &BatchOperators,
    x: &DVector<f64>,
    r_stacked: &DVector<f64>,
    input_bounds: &InputBounds,
    state_constraints: Option<&StatePolyhedron>,
) -> Result<DenseQp> {
    let (n, nx, nu) = (ops.horizon, ops.nx, ops.nu);
    if input_bounds.lb.len() != nu || input_bounds.ub.len() != nu {
        return Err(Error::dim("input bounds", nu, input_bounds.lb.len().max(input_bounds.ub.len())));
    }
    let f = ops.linear_term(x, r_stacked)?;
    let lb = DVector::from_fn(n * nu, |i, _| input_bounds.lb[i % nu]);
    let ub = DVector::from_fn(n * nu, |i, _| input_bounds.ub[i % nu]);
    let mut qp = DenseQp::new(ops.h.clone(), f).with_bounds(lb, ub);

    if let Some(poly) = state_constraints {
        let p = poly.f.nrows();
        if poly.f.ncols() != nx || poly.h.len() != p {
            return Err(Error::dim(
                "state constraints",
                format!("{p}x{nx} with {p} rhs"),
                format!("{}x{} with {} rhs", poly.f.nrows(), poly.f.ncols(), poly.h.len()),
            ));
        }
        let mut g_mat = DMatrix::zeros(n * p, n * nu);
        let mut g_vec = DVector::zeros(n * p);
        for k in 0..n {
            let b_rows = ops.b_bold.rows(k * nx, nx);
            let a_rows = ops.a_bold.rows(k * nx, nx);
            g_mat.view_mut((k * p, 0), (p, n * nu)).copy_from(&(&poly.f * b_rows));
            g_vec.rows_mut(k * p, p).copy_from(&(&poly.h - &poly.f * (a_rows * x)));
        }
        qp = qp.with_inequalities(g_mat, g_vec);
    }
    Ok(qp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(f: f64) -> DenseQp {
        DenseQp::new(DMatrix::identity(1, 1), DVector::from_element(1, f))
    }

    #[test]
    fn unconstrained_minimum() {
        let sol = solve(&one_d(-2.0), &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.z[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn clipped_minimum_with_multiplier() {
        let qp = one_d(-2.0).with_bounds(DVector::from_element(1, f64::NEG_INFINITY), DVector::from_element(1, 1.0));
        let sol = solve(&qp, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.z[0] - 1.0).abs() < 1e-15);
        assert!((sol.duals.upper[0] - 1.0).abs() < 1e-15);
        assert_eq!(sol.active_set.0, vec![ConstraintId::Upper(0)]);
    }

    #[test]
    fn detects_infeasible_general_constraints() {
        // z <= -1 and -z <= -1 (z >= 1)
        let qp = DenseQp::new(DMatrix::identity(1, 1), DVector::zeros(1))
            .with_inequalities(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]), DVector::from_vec(vec![-1.0, -1.0]));
        let sol = solve(&qp, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
        let cert = sol.certificate.unwrap();
        let mut combo = 0.0;
        let mut rhs = 0.0;
        for (c, y) in cert.multipliers {
            assert!(y >= 0.0);
            let ConstraintId::General(j) = c else { panic!("unexpected {c:?}") };
            combo += y * qp.g_mat[(j, 0)];
            rhs += y * qp.g_vec[j];
        }
        assert!(combo.abs() < 1e-12);
        assert!(rhs < 0.0);
    }

    #[test]
    fn zero_rows_are_dropped_or_infeasible() {
        let base = DenseQp::new(DMatrix::identity(2, 2), DVector::from_vec(vec![-1.0, -1.0]));
        let ok = base.clone().with_inequalities(DMatrix::zeros(1, 2), DVector::from_element(1, 0.0));
        let sol = solve(&ok, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.z[0] - 1.0).abs() < 1e-15);
        let bad = base.with_inequalities(DMatrix::zeros(1, 2), DVector::from_element(1, -1.0));
        assert_eq!(solve(&bad, &QpSettings::default()).unwrap().status, QpStatus::Infeasible);
    }

    #[test]
    fn rejects_invalid_problems() {
        let qp = one_d(0.0).with_bounds(DVector::from_element(1, 1.0), DVector::from_element(1, 0.0));
        assert!(matches!(solve(&qp, &QpSettings::default()), Err(Error::InvalidArgument(_))));
        let qp = DenseQp::new(DMatrix::from_element(1, 1, -1.0), DVector::zeros(1));
        assert!(matches!(solve(&qp, &QpSettings::default()), Err(Error::NotPositiveDefinite { .. })));
        let qp = DenseQp::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 2.0]), DVector::zeros(2));
        assert!(solve(&qp, &QpSettings::default()).is_err());
    }

    #[test]
    fn equal_bounds_pin_the_variable() {
        let qp = DenseQp::new(DMatrix::identity(2, 2), DVector::from_vec(vec![-3.0, 4.0]))
            .with_bounds(DVector::from_vec(vec![0.5, -1.0]), DVector::from_vec(vec![0.5, 1.0]));
        let sol = solve(&qp, &QpSettings::default()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.z[0] - 0.5).abs() < 1e-15);
        assert!((sol.z[1] + 1.0).abs() < 1e-15);
        assert!(sol.kkt_residual <= 1e-12);
    }

    #[test]
    fn max_iterations_is_reported() {
        let qp = DenseQp::new(DMatrix::identity(3, 3), DVector::from_element(3, -5.0))
            .with_bounds(DVector::from_element(3, -1.0), DVector::from_element(3, 1.0));
        let settings = QpSettings {
            max_iterations: Some(1),
            ..Default::default()
        };
        assert_eq!(solve(&qp, &settings).unwrap().status, QpStatus::MaxIterations);
    }

    #[test]
    fn dependent_warm_start_entries_are_ignored() {
        let qp = DenseQp::new(DMatrix::identity(2, 2), DVector::from_vec(vec![-3.0, 0.0]))
            .with_bounds(DVector::from_element(2, -1.0), DVector::from_element(2, 1.0))
            .with_inequalities(DMatrix::from_row_slice(1, 2, &[2.0, 0.0]), DVector::from_element(1, 2.0));
        let cold = solve(&qp, &QpSettings::default()).unwrap();
        let warm = solve(
            &qp,
            &QpSettings {
                warm_start: Some(ActiveSet(vec![
                    ConstraintId::Upper(0),
                    ConstraintId::General(0),
                    ConstraintId::Lower(1),
                    ConstraintId::Upper(7),
                ])),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(warm.status, QpStatus::Optimal);
        assert!((&warm.z - &cold.z).amax() < 1e-12);
        assert!(warm.kkt_residual < 1e-12);
    }
}
