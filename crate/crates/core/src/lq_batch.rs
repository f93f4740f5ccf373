//! Batch (condensed-in-time) form of the finite-horizon LQ tracking problem.
//!
//! The dynamics `x_{k+1} = A x_k + B u_k` are rolled out over `N` steps so the
//! stacked states are `Abold x0 + Bbold u`. The cost
//!
//! ```text
//!     J(u; x0, r) = sum_{k=1..N} |C x_k - r_k|_Q^2 + sum_{k=0..N-1} |u_k|_R^2
//! ```
//!
//! then becomes a quadratic in `u` with Hessian
//! `H = Bbold' Cbold' Qbold Cbold Bbold + Rbold`, and the unconstrained
//! minimizer is the affine policy `u* = Fx x0 + Fr r`.

use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::linalg::{block_diagonal, spectral_norm, symmetric_eigen_range};

/// Condition estimates above this are treated as numerically singular.
const MAX_CONDITION: f64 = 1e14;

/// Discrete-time plant `x+ = A x + B u` with tracked output `C x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// Sampling time in seconds. Only used to time-stamp trajectories.
    pub ts: f64,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, ts: f64) -> Result<Self> {
        let nx = a.nrows();
        if a.ncols() != nx {
            return Err(Error::dim("A", format!("{nx}x{nx}"), format!("{}x{}", nx, a.ncols())));
        }
        if nx == 0 {
            return Err(Error::InvalidArgument("state dimension must be positive".into()));
        }
        if b.nrows() != nx || b.ncols() == 0 {
            return Err(Error::dim("B", format!("{nx}xn_u"), format!("{}x{}", b.nrows(), b.ncols())));
        }
        if c.ncols() != nx || c.nrows() == 0 {
            return Err(Error::dim("C", format!("n_rx{nx}"), format!("{}x{}", c.nrows(), c.ncols())));
        }
        if !(ts > 0.0) || !ts.is_finite() {
            return Err(Error::InvalidArgument(format!("sampling time must be positive, got {ts}")));
        }
        Ok(Self { a, b, c, ts })
    }

    /// Zero-order-hold double integrator `p'' = u` with position output.
    pub fn double_integrator(ts: f64) -> Self {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, ts, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.5 * ts * ts, ts]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        Self { a, b, c, ts }
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn nr(&self) -> usize {
        self.c.nrows()
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b * u
    }
}

/// Output-tracking weight `Q` (PSD) and input weight `R` (PD).
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl TrackingWeights {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::dim("Q", "square", format!("{}x{}", q.nrows(), q.ncols())));
        }
        if !r.is_square() || r.nrows() == 0 {
            return Err(Error::dim("R", "square", format!("{}x{}", r.nrows(), r.ncols())));
        }
        check_symmetric("Q", &q)?;
        check_symmetric("R", &r)?;

        let tol_psd = 1e-9 * spectral_norm(&q);
        let (q_min, _) = symmetric_eigen_range(&q);
        if q_min < -tol_psd {
            return Err(Error::NotPositiveSemidefinite { name: "Q", min_eigenvalue: q_min });
        }
        let tol_pd = 1e-12 * spectral_norm(&r);
        let (r_min, _) = symmetric_eigen_range(&r);
        if !(r_min > tol_pd) {
            return Err(Error::NotPositiveDefinite {
                name: "R",
                min_eigenvalue: r_min,
                tolerance: tol_pd,
            });
        }
        Ok(Self { q, r })
    }

    pub fn identity(nr: usize, nu: usize) -> Self {
        Self {
            q: DMatrix::identity(nr, nr),
            r: DMatrix::identity(nu, nu),
        }
    }
}

fn check_symmetric(name: &'static str, m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-10 * scale {
        return Err(Error::InvalidArgument(format!("{name} must be symmetric")));
    }
    Ok(())
}

/// Stacked rollout matrices and the batch Hessian for one `(system, weights, N)`.
#[derive(Debug, Clone)]
pub struct BatchOperators {
    pub horizon: usize,
    pub nx: usize,
    pub nu: usize,
    pub nr: usize,
    /// `(A, A^2, ..., A^N)` stacked, `N n_x x n_x`.
    pub a_bold: DMatrix<f64>,
    /// Lower block-triangular impulse matrix, block `(i, j) = A^(i-j) B`.
    pub b_bold: DMatrix<f64>,
    pub c_bold: DMatrix<f64>,
    pub q_bold: DMatrix<f64>,
    pub r_bold: DMatrix<f64>,
    pub h: DMatrix<f64>,
    /// `Bbold' Cbold' Qbold`, the reference-to-gradient map.
    pub(crate) ref_gradient: DMatrix<f64>,
    /// `Bbold' Cbold' Qbold Cbold Abold`, the state-to-gradient map.
    pub(crate) state_gradient: DMatrix<f64>,
    pub(crate) h_chol: Cholesky<f64, Dyn>,
    pub(crate) h_condition: f64,
}

pub fn build_batch_operators(
    sys: &LtiSystem,
    weights: &TrackingWeights,
    horizon: usize,
) -> Result<BatchOperators> {
    let (nx, nu, nr) = (sys.nx(), sys.nu(), sys.nr());
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon N must be at least 1".into()));
    }
    if weights.q.nrows() != nr {
        return Err(Error::dim("Q", format!("{nr}x{nr}"), format!("{}x{}", weights.q.nrows(), weights.q.ncols())));
    }
    if weights.r.nrows() != nu {
        return Err(Error::dim("R", format!("{nu}x{nu}"), format!("{}x{}", weights.r.nrows(), weights.r.ncols())));
    }

    // powers[k] = A^k for k = 0..N
    let mut powers = Vec::with_capacity(horizon + 1);
    powers.push(DMatrix::<f64>::identity(nx, nx));
    for k in 1..=horizon {
        let next = &sys.a * &powers[k - 1];
        powers.push(next);
    }

    let mut a_bold = DMatrix::zeros(horizon * nx, nx);
    for i in 0..horizon {
        a_bold.view_mut((i * nx, 0), (nx, nx)).copy_from(&powers[i + 1]);
    }

    let impulse: Vec<DMatrix<f64>> = powers[..horizon].iter().map(|p| p * &sys.b).collect();
    let mut b_bold = DMatrix::zeros(horizon * nx, horizon * nu);
    for i in 0..horizon {
        for j in 0..=i {
            b_bold
                .view_mut((i * nx, j * nu), (nx, nu))
                .copy_from(&impulse[i - j]);
        }
    }

    let c_bold = block_diagonal(&sys.c, horizon);
    let q_bold = block_diagonal(&weights.q, horizon);
    let r_bold = block_diagonal(&weights.r, horizon);

    let cb = &c_bold * &b_bold;
    let ref_gradient = cb.transpose() * &q_bold;
    let mut h = &ref_gradient * &cb + &r_bold;
    // symmetrize away rounding so the factorization sees an exactly symmetric matrix
    h = (&h + h.transpose()) * 0.5;
    let state_gradient = &ref_gradient * (&c_bold * &a_bold);

    let (h_min, h_max) = symmetric_eigen_range(&h);
    let tol = 1e-12 * h_max.abs().max(f64::MIN_POSITIVE);
    if !(h_min > tol) {
        return Err(Error::NotPositiveDefinite {
            name: "H",
            min_eigenvalue: h_min,
            tolerance: tol,
        });
    }
    let h_chol = Cholesky::new(h.clone()).ok_or(Error::NotPositiveDefinite {
        name: "H",
        min_eigenvalue: h_min,
        tolerance: tol,
    })?;

    Ok(BatchOperators {
        horizon,
        nx,
        nu,
        nr,
        a_bold,
        b_bold,
        c_bold,
        q_bold,
        r_bold,
        h,
        ref_gradient,
        state_gradient,
        h_chol,
        h_condition: h_max / h_min,
    })
}

impl BatchOperators {
    pub fn h_condition(&self) -> f64 {
        self.h_condition
    }

    /// Linear term `Bbold' Cbold' Qbold (Cbold Abold x0 - r)` of the batch QP.
    pub fn linear_term(&self, x0: &DVector<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_x0(x0)?;
        self.check_ref(r)?;
        Ok(&self.state_gradient * x0 - &self.ref_gradient * r)
    }

    /// `J(u; x0, r)` evaluated directly from the stacked rollout.
    pub fn cost(&self, x0: &DVector<f64>, r: &DVector<f64>, u: &DVector<f64>) -> Result<f64> {
        self.check_x0(x0)?;
        self.check_ref(r)?;
        self.check_u(u)?;
        let err = &self.c_bold * (&self.a_bold * x0 + &self.b_bold * u) - r;
        Ok(err.dot(&(&self.q_bold * &err)) + u.dot(&(&self.r_bold * u)))
    }

    /// Gradient of `J` with respect to `u`.
    pub fn cost_gradient(&self, x0: &DVector<f64>, r: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_u(u)?;
        let lin = self.linear_term(x0, r)?;
        Ok((&self.h * u + lin) * 2.0)
    }

    pub(crate) fn check_x0(&self, x0: &DVector<f64>) -> Result<()> {
        if x0.len() != self.nx {
            return Err(Error::dim("state", self.nx, x0.len()));
        }
        Ok(())
    }

    pub(crate) fn check_ref(&self, r: &DVector<f64>) -> Result<()> {
        if r.len() != self.horizon * self.nr {
            return Err(Error::dim("stacked reference", self.horizon * self.nr, r.len()));
        }
        Ok(())
    }

    pub(crate) fn check_u(&self, u: &DVector<f64>) -> Result<()> {
        if u.len() != self.horizon * self.nu {
            return Err(Error::dim("stacked control", self.horizon * self.nu, u.len()));
        }
        Ok(())
    }
}

/// Matrices of the affine optimal unconstrained policy `u* = Fx x0 + Fr r`.
#[derive(Debug, Clone)]
pub struct TrackingGains {
    pub horizon: usize,
    pub nx: usize,
    pub nu: usize,
    pub nr: usize,
    pub fx: DMatrix<f64>,
    pub fr: DMatrix<f64>,
    fr_norm: OnceLock<f64>,
}

impl TrackingGains {
    pub fn from_parts(fx: DMatrix<f64>, fr: DMatrix<f64>, nx: usize, nu: usize, nr: usize) -> Result<Self> {
        if nu == 0 || fx.nrows() % nu != 0 {
            return Err(Error::dim("Fx rows", "multiple of n_u", fx.nrows()));
        }
        let horizon = fx.nrows() / nu;
        if fx.ncols() != nx || fr.nrows() != fx.nrows() || fr.ncols() != horizon * nr {
            return Err(Error::dim(
                "gains",
                format!("Fx {}x{nx}, Fr {}x{}", fx.nrows(), fx.nrows(), horizon * nr),
                format!("Fx {}x{}, Fr {}x{}", fx.nrows(), fx.ncols(), fr.nrows(), fr.ncols()),
            ));
        }
        Ok(Self {
            horizon,
            nx,
            nu,
            nr,
            fx,
            fr,
            fr_norm: OnceLock::new(),
        })
    }

    /// Largest singular value of `Fr`, computed on first use.
    pub fn fr_spectral_norm(&self) -> f64 {
        *self.fr_norm.get_or_init(|| spectral_norm(&self.fr))
    }

    /// First `n_u` rows of `Fx`.
    pub fn first_fx(&self) -> DMatrix<f64> {
        self.fx.rows(0, self.nu).into_owned()
    }

    /// First `n_u` rows of `Fr`.
    pub fn first_fr(&self) -> DMatrix<f64> {
        self.fr.rows(0, self.nu).into_owned()
    }
}

pub fn tracking_gains(ops: &BatchOperators) -> Result<TrackingGains> {
    if !(ops.h_condition < MAX_CONDITION) {
        return Err(Error::IllConditioned { condition: ops.h_condition });
    }
    let fr = ops.h_chol.solve(&ops.ref_gradient);
    let fx = -ops.h_chol.solve(&ops.state_gradient);
    TrackingGains::from_parts(fx, fr, ops.nx, ops.nu, ops.nr)
}

/// `Fx x0 + Fr r`.
pub fn open_loop_sequence(g: &TrackingGains, x0: &DVector<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
    if x0.len() != g.nx {
        return Err(Error::dim("state", g.nx, x0.len()));
    }
    if r.len() != g.horizon * g.nr {
        return Err(Error::dim("stacked reference", g.horizon * g.nr, r.len()));
    }
    Ok(&g.fx * x0 + &g.fr * r)
}

/// Applies the dynamics step by step; returns `(x_1, ..., x_N)` stacked.
pub fn rollout(sys: &LtiSystem, x0: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    let (nx, nu) = (sys.nx(), sys.nu());
    if x0.len() != nx {
        return Err(Error::dim("state", nx, x0.len()));
    }
    if u.len() % nu != 0 {
        return Err(Error::dim("stacked control", "multiple of n_u", u.len()));
    }
    let steps = u.len() / nu;
    let mut out = DVector::zeros(steps * nx);
    let mut x = x0.clone();
    for k in 0..steps {
        x = &sys.a * &x + &sys.b * u.rows(k * nu, nu);
        out.rows_mut(k * nx, nx).copy_from(&x);
    }
    Ok(out)
}
