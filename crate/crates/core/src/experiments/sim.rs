use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::controllers::{preview_window, ControllerKind, MpcController, ReferenceSignal};
use crate::error::{Error, Result};
use crate::lq_batch::{LtiSystem, TrackingWeights};
use crate::qp::{InputBounds, StatePolyhedron};

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub sys: LtiSystem,
    pub weights: TrackingWeights,
    pub horizon: usize,
    pub t_final: f64,
    pub x0: DVector<f64>,
    pub kind: ControllerKind,
    pub signal: ReferenceSignal,
    pub input_bounds: InputBounds,
    pub state_constraints: Option<StatePolyhedron>,
}

impl SimConfig {
    /// Double integrator at `Ts = 0.1`, `Q = R = 1`, `|u| <= 1`, starting at rest.
    pub fn double_integrator(horizon: usize, kind: ControllerKind, signal: ReferenceSignal, t_final: f64) -> Self {
        Self {
            sys: LtiSystem::double_integrator(0.1),
            weights: TrackingWeights::identity(1, 1),
            horizon,
            t_final,
            x0: DVector::zeros(2),
            kind,
            signal,
            input_bounds: InputBounds::symmetric(1, 1.0),
            state_constraints: None,
        }
    }

    /// Number of control steps `T_final / Ts`.
    pub fn steps(&self) -> Result<usize> {
        let ratio = self.t_final / self.sys.ts;
        let steps = ratio.round();
        if !(self.t_final > 0.0) || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) || steps < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "T_final = {} must be a positive integer multiple of Ts = {}",
                self.t_final, self.sys.ts
            )));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self) -> Result<usize> {
        let steps = self.steps()?;
        if self.x0.len() != self.sys.nx() {
            return Err(Error::dim("x0", self.sys.nx(), self.x0.len()));
        }
        self.signal.validate()?;
        if self.signal.dim() != self.sys.nr() {
            return Err(Error::dim("reference signal", self.sys.nr(), self.signal.dim()));
        }
        Ok(steps)
    }

    pub fn controller(&self) -> Result<MpcController> {
        MpcController::new(
            self.sys.clone(),
            self.weights.clone(),
            self.horizon,
            self.kind,
            self.input_bounds.clone(),
            self.state_constraints.clone(),
        )
    }
}

/// Reference samples seen by the controller over a run of `steps` steps.
///
/// The signal is tabulated on `t_0 .. t_{K-1}`; preview windows reaching past
/// the simulated span hold the last tabulated sample.
#[derive(Debug, Clone)]
pub struct ReferenceSchedule {
    signal: ReferenceSignal,
    table: ReferenceSignal,
    ts: f64,
    horizon: usize,
}

impl ReferenceSchedule {
    pub fn new(signal: &ReferenceSignal, ts: f64, steps: usize, horizon: usize) -> Self {
        Self {
            table: signal.tabulate(ts, steps),
            signal: signal.clone(),
            ts,
            horizon,
        }
    }

    pub fn current(&self, k: usize) -> DVector<f64> {
        self.signal.eval(k as f64 * self.ts)
    }

    pub fn window(&self, k: usize) -> DVector<f64> {
        preview_window(&self.table, k, self.horizon, self.ts)
    }
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub ts: f64,
    /// Output map used for the tracking error.
    pub c: DMatrix<f64>,
    /// `t_0 .. t_K`.
    pub times: Vec<f64>,
    /// `x_0 .. x_K`.
    pub states: Vec<DVector<f64>>,
    /// `u_0 .. u_{K-1}`.
    pub controls: Vec<DVector<f64>>,
    /// `r(t_0) .. r(t_K)`.
    pub references: Vec<DVector<f64>>,
    /// Setpoint fed to the QP at each step, for the setpoint-based controllers.
    pub setpoints: Vec<Option<DVector<f64>>>,
    pub ise: f64,
    pub qp_iterations: usize,
    pub max_qp_iterations: usize,
    pub worst_kkt_residual: f64,
}

impl SimResult {
    pub fn steps(&self) -> usize {
        self.controls.len()
    }

    /// Position-style first output `C x_k` for each sample.
    pub fn outputs(&self) -> Vec<DVector<f64>> {
        self.states.iter().map(|x| &self.c * x).collect()
    }
}

/// Left-rectangle ISE `Ts * sum_{k<K} |C x_k - r_k|^2` over trajectories of
/// `K + 1` samples (the final sample closes the interval and is not summed).
pub fn ise(c: &DMatrix<f64>, states: &[DVector<f64>], references: &[DVector<f64>], ts: f64) -> f64 {
    let samples = states.len().min(references.len()).saturating_sub(1);
    ts * (0..samples)
        .map(|k| (c * &states[k] - &references[k]).norm_squared())
        .sum::<f64>()
}

pub fn simulate_closed_loop(cfg: &SimConfig) -> Result<SimResult> {
    let steps = cfg.validate()?;
    let mut ctrl = cfg.controller()?;
    let ts = cfg.sys.ts;
    let schedule = ReferenceSchedule::new(&cfg.signal, ts, steps, cfg.horizon);

    let mut x = cfg.x0.clone();
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps);
    let mut setpoints = Vec::with_capacity(steps);
    let (mut total_iters, mut max_iters, mut worst_kkt) = (0usize, 0usize, 0.0f64);

    for k in 0..steps {
        states.push(x.clone());
        let (u, diag) = ctrl
            .control_action(&x, &schedule.current(k), &schedule.window(k))
            .map_err(|e| match e {
                Error::Infeasible { .. } => Error::Infeasible {
                    step: k,
                    detail: format!("state {:?}", x.as_slice()),
                },
                Error::QpNotConverged { iterations, .. } => Error::QpNotConverged { step: k, iterations },
                other => other,
            })?;
        total_iters += diag.qp_iterations;
        max_iters = max_iters.max(diag.qp_iterations);
        worst_kkt = worst_kkt.max(diag.kkt_residual);
        setpoints.push(diag.setpoint);
        x = cfg.sys.step(&x, &u);
        controls.push(u);
    }
    states.push(x);

    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * ts).collect();
    let references: Vec<DVector<f64>> = times.iter().map(|&t| cfg.signal.eval(t)).collect();
    let ise = ise(&cfg.sys.c, &states, &references, ts);
    Ok(SimResult {
        ts,
        c: cfg.sys.c.clone(),
        times,
        states,
        controls,
        references,
        setpoints,
        ise,
        qp_iterations: total_iters,
        max_qp_iterations: max_iters,
        worst_kkt_residual: worst_kkt,
    })
}

/// Whitespace-delimited trajectory table; header `t x1.. u1.. r1..`.
pub fn format_trajectories(result: &SimResult) -> String {
    let nx = result.states.first().map_or(0, |x| x.len());
    let nu = result.controls.first().map_or(0, |u| u.len());
    let nr = result.references.first().map_or(0, |r| r.len());
    let mut out = String::from("t");
    for (prefix, n) in [("x", nx), ("u", nu), ("r", nr)] {
        for i in 1..=n {
            write!(out, " {prefix}{i}").unwrap();
        }
    }
    out.push('\n');
    for (k, t) in result.times.iter().enumerate() {
        write!(out, "{}", fmt_f64(*t)).unwrap();
        for v in result.states[k].iter() {
            write!(out, " {}", fmt_f64(*v)).unwrap();
        }
        for i in 0..nu {
            // no control is applied at the final sample
            let v = result.controls.get(k).map_or(f64::NAN, |u| u[i]);
            write!(out, " {}", fmt_f64(v)).unwrap();
        }
        for v in result.references[k].iter() {
            write!(out, " {}", fmt_f64(*v)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// 17 significant digits: round-trips every finite double.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.16e}")
    }
}

pub fn export_trajectories(result: &SimResult, path: &Path) -> Result<()> {
    std::fs::write(path, format_trajectories(result)).map_err(|e| Error::io(path, e))
}

/// A parsed trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TrajectoryTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let columns: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::InvalidArgument("empty trajectory file".into()))?
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = line
                .split_whitespace()
                .map(|tok| tok.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidArgument(format!("trajectory row {}: {e}", i + 1)))?;
            if row.len() != columns.len() {
                return Err(Error::InvalidArgument(format!(
                    "trajectory row {} has {} fields, header has {}",
                    i + 1,
                    row.len(),
                    columns.len()
                )));
            }
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn prefixed(&self, prefix: char) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.starts_with(prefix) && c[1..].parse::<usize>().is_ok())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// ISE recomputed from the stored state and reference columns.
    pub fn ise(&self, c: &DMatrix<f64>, ts: f64) -> f64 {
        let xs = self.prefixed('x');
        let rs = self.prefixed('r');
        let states: Vec<DVector<f64>> = self.rows.iter().map(|row| DVector::from_iterator(xs.len(), xs.iter().map(|&i| row[i]))).collect();
        let refs: Vec<DVector<f64>> = self.rows.iter().map(|row| DVector::from_iterator(rs.len(), rs.iter().map(|&i| row[i]))).collect();
        ise(c, &states, &refs, ts)
    }
}
