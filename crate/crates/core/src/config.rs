//! TOML problem description shared by the command-line front end, the custom
//! study and the FFI layer.
//!
//! ```toml
//! horizon = 50
//!
//! [system]
//! A = [[1.0, 0.1], [0.0, 1.0]]
//! B = [[0.005], [0.1]]
//! C = [[1.0, 0.0]]
//! Ts = 0.1
//!
//! [weights]
//! Q = 1.0            # scalar means a multiple of the identity
//! R = [[1.0]]
//!
//! [constraints]
//! u_min = [-1.0]
//! u_max = [1.0]
//!
//! [signal]
//! kind = "step"
//! t_step = 5.0
//! after = [1.0]
//!
//! [controller]
//! kind = "ref_cond"  # no_preview | average_ref | ref_cond | preview
//! rho = 1e6          # omit `rho` and set `weighted = false` for the unweighted map
//!
//! [simulation]
//! T_final = 20.0
//! ```

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::controllers::{random_piecewise_constant, Condensation, ControllerKind, ReferenceSignal, DEFAULT_RHO};
use crate::error::{Error, Result};
use crate::experiments::SimConfig;
use crate::lq_batch::{LtiSystem, TrackingWeights};
use crate::qp::{InputBounds, StatePolyhedron};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    horizon: usize,
    system: RawSystem,
    weights: RawWeights,
    #[serde(default)]
    constraints: RawConstraints,
    signal: Option<RawSignal>,
    #[serde(default)]
    controller: RawController,
    #[serde(default)]
    simulation: RawSimulation,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "Ts")]
    ts: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum MatrixValue {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWeights {
    #[serde(rename = "Q")]
    q: MatrixValue,
    #[serde(rename = "R")]
    r: MatrixValue,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraints {
    u_min: Option<Vec<f64>>,
    u_max: Option<Vec<f64>>,
    /// Rows of `F` in `F x_{k} <= h`, k = 1..N.
    state_rows: Option<Vec<Vec<f64>>>,
    state_rhs: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawSignal {
    Constant {
        value: Vec<f64>,
    },
    Step {
        t_step: f64,
        before: Option<Vec<f64>>,
        after: Vec<f64>,
    },
    Sinusoid {
        amplitude: Vec<f64>,
        omega: f64,
    },
    SquareWave {
        amplitude: Vec<f64>,
        switch_times: Vec<f64>,
    },
    PiecewiseConstant {
        levels: Vec<Vec<f64>>,
        dwell_times: Vec<f64>,
    },
    /// Scalar random piecewise-constant reference drawn from the simulation seed.
    RandomPiecewise {
        duration: f64,
    },
    Tabulated {
        period: f64,
        samples: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawController {
    #[serde(default = "default_kind")]
    kind: String,
    rho: Option<f64>,
    #[serde(default = "default_true")]
    weighted: bool,
}

impl Default for RawController {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            rho: None,
            weighted: true,
        }
    }
}

fn default_kind() -> String {
    "ref_cond".into()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimulation {
    #[serde(rename = "T_final")]
    t_final: Option<f64>,
    x0: Option<Vec<f64>>,
    seed: Option<u64>,
}

/// A validated problem description.
#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub sys: LtiSystem,
    pub weights: TrackingWeights,
    pub horizon: usize,
    pub input_bounds: InputBounds,
    pub state_constraints: Option<StatePolyhedron>,
    pub signal: Option<ReferenceSignal>,
    pub kind: ControllerKind,
    /// First-block weight used for `S_W`; defaults to `1e6`.
    pub rho: f64,
    pub t_final: Option<f64>,
    /// Defaults to the zero state.
    pub x0: DVector<f64>,
    pub seed: u64,
}

fn matrix(section: &str, name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 {
        return Err(Error::config(section, format!("{name} must be a non-empty nested array")));
    }
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(Error::config(
            section,
            format!("{name} is not rectangular: row {i} has {} entries, row 0 has {ncols}", row.len()),
        ));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.iter().flatten().copied()))
}

fn square(section: &str, name: &str, value: &MatrixValue, n: usize) -> Result<DMatrix<f64>> {
    match value {
        MatrixValue::Scalar(s) => Ok(DMatrix::identity(n, n) * *s),
        MatrixValue::Rows(rows) => matrix(section, name, rows),
    }
}

fn vector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

impl ProblemConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_str_seeded(text, None)
    }

    /// Like [`from_toml_str`](Self::from_toml_str), with `seed` replacing the
    /// config's own seed before any random signal is drawn.
    pub fn from_toml_str_seeded(text: &str, seed: Option<u64>) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::config("parse", e.to_string().trim_end()))?;
        Self::from_raw(raw, seed)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_path_seeded(path, None)
    }

    pub fn from_path_seeded(path: &Path, seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str_seeded(&text, seed)
    }

    fn from_raw(raw: RawConfig, seed_override: Option<u64>) -> Result<Self> {
        let s = &raw.system;
        let sys = LtiSystem::new(
            matrix("system", "A", &s.a)?,
            matrix("system", "B", &s.b)?,
            matrix("system", "C", &s.c)?,
            s.ts,
        )
        .map_err(|e| Error::config("system", e.to_string()))?;
        let (nx, nu, nr) = (sys.nx(), sys.nu(), sys.nr());

        let weights = TrackingWeights::new(
            square("weights", "Q", &raw.weights.q, nr)?,
            square("weights", "R", &raw.weights.r, nu)?,
        )
        .map_err(|e| Error::config("weights", e.to_string()))?;

        if raw.horizon == 0 {
            return Err(Error::config("horizon", "horizon must be at least 1"));
        }

        let c = &raw.constraints;
        let lb = c.u_min.as_deref().map_or_else(|| DVector::from_element(nu, f64::NEG_INFINITY), vector);
        let ub = c.u_max.as_deref().map_or_else(|| DVector::from_element(nu, f64::INFINITY), vector);
        if lb.len() != nu || ub.len() != nu {
            return Err(Error::config("constraints", format!("u_min and u_max need {nu} entries")));
        }
        if lb.iter().zip(ub.iter()).any(|(l, u)| !(l <= u)) {
            return Err(Error::config("constraints", "u_min must not exceed u_max"));
        }
        let state_constraints = match (&c.state_rows, &c.state_rhs) {
            (None, None) => None,
            (Some(rows), Some(rhs)) => {
                let f = matrix("constraints", "state_rows", rows)?;
                if f.ncols() != nx || rhs.len() != f.nrows() {
                    return Err(Error::config(
                        "constraints",
                        format!("state_rows must have {nx} columns and one state_rhs entry per row"),
                    ));
                }
                Some(StatePolyhedron { f, h: vector(rhs) })
            }
            _ => return Err(Error::config("constraints", "state_rows and state_rhs must be given together")),
        };

        let seed = seed_override.or(raw.simulation.seed).unwrap_or(0);
        let signal = raw.signal.map(|s| build_signal(s, nr, seed)).transpose()?;
        if let Some(sig) = &signal {
            sig.validate().map_err(|e| Error::config("signal", e.to_string()))?;
            if sig.dim() != nr {
                return Err(Error::config("signal", format!("signal has {} components, system has {nr} outputs", sig.dim())));
            }
        }

        let rho = raw.controller.rho.unwrap_or(DEFAULT_RHO);
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::config("controller", "rho must be positive and finite"));
        }
        let cond = if raw.controller.weighted {
            Condensation::Weighted { rho }
        } else {
            Condensation::Unweighted
        };
        let kind = match raw.controller.kind.as_str() {
            "no_preview" => ControllerKind::NoPreview,
            "average_ref" => ControllerKind::AverageRef,
            "ref_cond" => ControllerKind::RefCond(cond),
            "preview" | "full_preview" => ControllerKind::FullPreview,
            other => {
                return Err(Error::config(
                    "controller",
                    format!("unknown kind `{other}` (expected no_preview, average_ref, ref_cond or preview)"),
                ))
            }
        };

        let x0 = raw.simulation.x0.as_deref().map_or_else(|| DVector::zeros(nx), vector);
        if x0.len() != nx {
            return Err(Error::config("simulation", format!("x0 needs {nx} entries")));
        }
        if let Some(t) = raw.simulation.t_final {
            if !(t > 0.0) {
                return Err(Error::config("simulation", "T_final must be positive"));
            }
        }

        Ok(Self {
            sys,
            weights,
            horizon: raw.horizon,
            input_bounds: InputBounds { lb, ub },
            state_constraints,
            signal,
            kind,
            rho,
            t_final: raw.simulation.t_final,
            x0,
            seed,
        })
    }

    /// Simulation setup for `kind`, with `default_t_final` used when the
    /// config does not fix the duration.
    pub fn sim_config(&self, kind: ControllerKind, default_t_final: f64) -> Result<SimConfig> {
        let signal = self
            .signal
            .clone()
            .ok_or_else(|| Error::config("signal", "a [signal] section is required to simulate"))?;
        Ok(SimConfig {
            sys: self.sys.clone(),
            weights: self.weights.clone(),
            horizon: self.horizon,
            t_final: self.t_final.unwrap_or(default_t_final),
            x0: self.x0.clone(),
            kind,
            signal,
            input_bounds: self.input_bounds.clone(),
            state_constraints: self.state_constraints.clone(),
        })
    }
}

fn build_signal(raw: RawSignal, nr: usize, seed: u64) -> Result<ReferenceSignal> {
    Ok(match raw {
        RawSignal::Constant { value } => ReferenceSignal::Constant(vector(&value)),
        RawSignal::Step { t_step, before, after } => ReferenceSignal::Step {
            t_step,
            before: before.as_deref().map_or_else(|| DVector::zeros(after.len()), vector),
            after: vector(&after),
        },
        RawSignal::Sinusoid { amplitude, omega } => ReferenceSignal::Sinusoid {
            amplitude: vector(&amplitude),
            angular_frequency: omega,
        },
        RawSignal::SquareWave { amplitude, switch_times } => ReferenceSignal::SquareWave {
            amplitude: vector(&amplitude),
            switch_times,
        },
        RawSignal::PiecewiseConstant { levels, dwell_times } => ReferenceSignal::PiecewiseConstant {
            levels: levels.iter().map(|l| vector(l)).collect(),
            dwell_times,
        },
        RawSignal::RandomPiecewise { duration } => {
            if nr != 1 {
                return Err(Error::config("signal", "random_piecewise is only defined for a single output"));
            }
            if !(duration > 0.0) {
                return Err(Error::config("signal", "duration must be positive"));
            }
            random_piecewise_constant(&mut ChaCha8Rng::seed_from_u64(seed), duration)
        }
        RawSignal::Tabulated { period, samples } => ReferenceSignal::Tabulated {
            period,
            samples: samples.iter().map(|s| vector(s)).collect(),
        },
    })
}
