use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::sim::{fmt_f64, format_trajectories, simulate_closed_loop, ReferenceSchedule, SimConfig, SimResult};
use crate::condensation::{unweighted_map, weighted_map};
use crate::config::ProblemConfig;
use crate::controllers::{random_piecewise_constant, Condensation, ControllerKind, ReferenceSignal, DEFAULT_RHO};
use crate::error::{Error, Result};
use crate::qp::DEFAULT_TOL_KKT;

/// Duration of the step, sinusoid and horizon studies.
pub const TABLE_T_FINAL: f64 = 20.0;
/// Duration of each random reference in the weighted study.
pub const WEIGHTED_T_FINAL: f64 = 15.0;
/// Duration of custom runs whose config leaves it open.
pub const CUSTOM_T_FINAL: f64 = 30.0;

pub const STEP_SINUSOID_HORIZON: usize = 50;
pub const HORIZONS: [usize; 6] = [5, 10, 20, 50, 75, 100];
pub const WEIGHTED_HORIZON: usize = 30;
pub const WEIGHTED_TRAJECTORIES: usize = 40;
pub const WEIGHTED_RHOS: [f64; 3] = [1.0, 1e2, 1e6];

#[derive(Debug, Clone, PartialEq)]
pub enum StudySelector {
    StepSinusoid,
    Horizon,
    Weighted,
    Custom(PathBuf),
}

impl StudySelector {
    /// `custom` needs a config path; the other selectors ignore it.
    pub fn parse(name: &str, config: Option<&Path>) -> Result<Self> {
        match name {
            "custom" => config
                .map(|p| StudySelector::Custom(p.to_path_buf()))
                .ok_or_else(|| Error::InvalidArgument("the custom study needs a config file".into())),
            other => other.parse(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            StudySelector::StepSinusoid => "step_sinusoid",
            StudySelector::Horizon => "horizon",
            StudySelector::Weighted => "weighted",
            StudySelector::Custom(_) => "custom",
        }
    }
}

impl FromStr for StudySelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step_sinusoid" => Ok(StudySelector::StepSinusoid),
            "horizon" => Ok(StudySelector::Horizon),
            "weighted" => Ok(StudySelector::Weighted),
            _ => match s.strip_prefix("custom:") {
                Some(path) if !path.is_empty() => Ok(StudySelector::Custom(PathBuf::from(path))),
                _ => Err(Error::InvalidArgument(format!(
                    "unknown study `{s}` (expected step_sinusoid, horizon, weighted or custom:<config>)"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub config_id: String,
    pub metric: String,
    pub value: f64,
}

/// Outcome of one study. Contains no wall-clock data, so equal inputs give
/// byte-identical files.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub study: String,
    pub seed: u64,
    pub tolerances: Vec<(String, f64)>,
    pub metrics: Vec<Metric>,
    /// Human-readable table.
    pub table: String,
    /// Figure data: `(file name, contents)`.
    pub data_files: Vec<(String, String)>,
}

impl StudyReport {
    fn new(study: &str, seed: u64) -> Self {
        Self {
            study: study.into(),
            seed,
            tolerances: vec![("tol_kkt".into(), DEFAULT_TOL_KKT)],
            metrics: Vec::new(),
            table: String::new(),
            data_files: Vec::new(),
        }
    }

    fn push(&mut self, config_id: impl Into<String>, metric: &str, value: f64) {
        self.metrics.push(Metric {
            config_id: config_id.into(),
            metric: metric.into(),
            value,
        });
    }

    pub fn metric(&self, config_id: &str, metric: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.config_id == config_id && m.metric == metric)
            .map(|m| m.value)
    }

    /// One `study config_id metric value seed` line per metric.
    pub fn key_values(&self) -> String {
        let mut out = String::new();
        for m in &self.metrics {
            writeln!(out, "{} {} {} {} {}", self.study, m.config_id, m.metric, fmt_f64(m.value), self.seed).unwrap();
        }
        out
    }

    pub fn text(&self) -> String {
        let mut out = format!("study: {}\nseed: {}\n", self.study, self.seed);
        for (name, tol) in &self.tolerances {
            writeln!(out, "{name}: {tol:e}").unwrap();
        }
        out.push('\n');
        out.push_str(&self.table);
        out
    }

    /// Writes `<study>.txt`, `<study>.kv` and the data files into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = vec![
            (format!("{}.txt", self.study), self.text()),
            (format!("{}.kv", self.study), self.key_values()),
        ];
        files.extend(self.data_files.iter().cloned());
        let mut written = Vec::with_capacity(files.len());
        for (name, contents) in files {
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn render_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                write!(s, "{cell:<w$}").unwrap();
            } else {
                write!(s, "  {cell:>w$}").unwrap();
            }
        }
        s.push('\n');
        s
    };
    let mut out = line(header);
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
    }
    out
}

fn controller_header(first: &str, kinds: &[ControllerKind]) -> Vec<String> {
    std::iter::once(first.to_string()).chain(kinds.iter().map(|k| k.to_string())).collect()
}

fn run_all(configs: &[SimConfig]) -> Result<Vec<SimResult>> {
    configs.par_iter().map(simulate_closed_loop).collect()
}

pub fn run_table_studies(selector: &StudySelector, seed: u64) -> Result<StudyReport> {
    match selector {
        StudySelector::StepSinusoid => step_sinusoid_study(seed),
        StudySelector::Horizon => horizon_study(seed),
        StudySelector::Weighted => weighted_study(seed),
        StudySelector::Custom(path) => custom_study(&ProblemConfig::from_path(path)?, seed),
    }
}

/// Unit step at 5 s and `sin(0.5 t)`, N = 50, all four controllers.
pub fn step_sinusoid_study(seed: u64) -> Result<StudyReport> {
    let kinds = ControllerKind::table(Condensation::Weighted { rho: DEFAULT_RHO });
    let signals = [
        ("step", ReferenceSignal::scalar_step(5.0, 0.0, 1.0)),
        ("sinusoid", ReferenceSignal::scalar_sinusoid(1.0, 0.5)),
    ];
    let configs: Vec<SimConfig> = signals
        .iter()
        .flat_map(|(_, sig)| {
            kinds
                .iter()
                .map(|&k| SimConfig::double_integrator(STEP_SINUSOID_HORIZON, k, sig.clone(), TABLE_T_FINAL))
        })
        .collect();
    let results = run_all(&configs)?;

    let mut report = StudyReport::new("step_sinusoid", seed);
    let mut rows = Vec::new();
    for (i, (name, _)) in signals.iter().enumerate() {
        let mut row = vec![name.to_string()];
        for (j, kind) in kinds.iter().enumerate() {
            let res = &results[i * kinds.len() + j];
            report.push(format!("{name}/{}", kind.short_name()), "ise", res.ise);
            report.push(format!("{name}/{}", kind.short_name()), "worst_kkt", res.worst_kkt_residual);
            row.push(format!("{:.4}", res.ise));
            report
                .data_files
                .push((format!("{name}_{}.dat", kind.short_name()), format_trajectories(res)));
        }
        rows.push(row);
    }
    report.table = render_table(&controller_header("Reference", &kinds), &rows);
    report.data_files.push(("condensation_weights.dat".into(), condensation_weights(STEP_SINUSOID_HORIZON)?));
    Ok(report)
}

/// `k  S_k  S_W,k` for the double integrator, one row per preview sample.
pub fn condensation_weights(horizon: usize) -> Result<String> {
    let probe = SimConfig::double_integrator(horizon, ControllerKind::NoPreview, ReferenceSignal::scalar_constant(0.0), 1.0);
    let ctrl = probe.controller()?;
    let s = unweighted_map(ctrl.gains())?;
    let sw = weighted_map(ctrl.gains(), DEFAULT_RHO)?;
    let mut out = String::from("k s s_w\n");
    for k in 0..horizon {
        writeln!(out, "{} {} {}", k + 1, fmt_f64(s.s[(0, k)]), fmt_f64(sw.s[(0, k)])).unwrap();
    }
    Ok(out)
}

/// Step reference over the horizons in [`HORIZONS`].
pub fn horizon_study(seed: u64) -> Result<StudyReport> {
    let kinds = ControllerKind::table(Condensation::Weighted { rho: DEFAULT_RHO });
    let step = ReferenceSignal::scalar_step(5.0, 0.0, 1.0);
    let configs: Vec<SimConfig> = HORIZONS
        .iter()
        .flat_map(|&n| {
            let step = step.clone();
            kinds
                .iter()
                .map(move |&k| SimConfig::double_integrator(n, k, step.clone(), TABLE_T_FINAL))
        })
        .collect();
    let results = run_all(&configs)?;

    let mut report = StudyReport::new("horizon", seed);
    let mut rows = Vec::new();
    for (i, n) in HORIZONS.iter().enumerate() {
        let mut row = vec![n.to_string()];
        for (j, kind) in kinds.iter().enumerate() {
            let res = &results[i * kinds.len() + j];
            report.push(format!("N={n}/{}", kind.short_name()), "ise", res.ise);
            row.push(format!("{:.4}", res.ise));
        }
        rows.push(row);
    }
    report.table = render_table(&controller_header("N", &kinds), &rows);
    Ok(report)
}

#[derive(Debug, Clone)]
struct TrajectoryOutcome {
    preview_ise: f64,
    cond_ise: Vec<f64>,
    mismatch_sum: Vec<f64>,
    steps: usize,
}

/// The random reference used for trajectory `index` of the weighted study.
pub fn weighted_study_reference(seed: u64, index: usize) -> ReferenceSignal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    random_piecewise_constant(&mut rng, WEIGHTED_T_FINAL)
}

fn weighted_trajectory(signal: ReferenceSignal) -> Result<TrajectoryOutcome> {
    let base = SimConfig::double_integrator(WEIGHTED_HORIZON, ControllerKind::FullPreview, signal, WEIGHTED_T_FINAL);
    let steps = base.validate()?;
    let schedule = ReferenceSchedule::new(&base.signal, base.sys.ts, steps, base.horizon);

    // Preview closed loop, with each condensed law evaluated at the same states.
    let mut preview = base.controller()?;
    let mut shadows = WEIGHTED_RHOS
        .iter()
        .map(|&rho| SimConfig { kind: ControllerKind::ref_cond(rho), ..base.clone() }.controller())
        .collect::<Result<Vec<_>>>()?;
    let mut mismatch_sum = vec![0.0; shadows.len()];
    let mut x = base.x0.clone();
    let mut states = Vec::with_capacity(steps + 1);
    for k in 0..steps {
        states.push(x.clone());
        let (current, window) = (schedule.current(k), schedule.window(k));
        let (u, _) = preview.control_action(&x, &current, &window)?;
        for (sum, shadow) in mismatch_sum.iter_mut().zip(shadows.iter_mut()) {
            let (u_cond, _) = shadow.control_action(&x, &current, &window)?;
            *sum += (u_cond - &u).norm();
        }
        x = base.sys.step(&x, &u);
    }
    states.push(x);
    let references: Vec<DVector<f64>> = (0..=steps).map(|k| base.signal.eval(k as f64 * base.sys.ts)).collect();
    let preview_ise = super::sim::ise(&base.sys.c, &states, &references, base.sys.ts);

    let cond_ise = WEIGHTED_RHOS
        .iter()
        .map(|&rho| simulate_closed_loop(&SimConfig { kind: ControllerKind::ref_cond(rho), ..base.clone() }).map(|r| r.ise))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryOutcome {
        preview_ise,
        cond_ise,
        mismatch_sum,
        steps,
    })
}

/// Forty seeded random piecewise-constant references, N = 30, for each
/// first-block weight in [`WEIGHTED_RHOS`].
pub fn weighted_study(seed: u64) -> Result<StudyReport> {
    let outcomes = (0..WEIGHTED_TRAJECTORIES)
        .into_par_iter()
        .map(|i| weighted_trajectory(weighted_study_reference(seed, i)))
        .collect::<Result<Vec<_>>>()?;

    let count = outcomes.len() as f64;
    let total_steps: usize = outcomes.iter().map(|o| o.steps).sum();
    let mut report = StudyReport::new("weighted", seed);
    report.push("preview", "mean_ise", outcomes.iter().map(|o| o.preview_ise).sum::<f64>() / count);
    let mut rows = Vec::new();
    for (j, rho) in WEIGHTED_RHOS.iter().enumerate() {
        let ratio = outcomes.iter().map(|o| o.cond_ise[j] / o.preview_ise).sum::<f64>() / count;
        let mismatch = outcomes.iter().map(|o| o.mismatch_sum[j]).sum::<f64>() / total_steps as f64;
        let id = format!("rho={rho:e}");
        report.push(&id, "mean_ise_ratio", ratio);
        report.push(&id, "mean_first_control_mismatch", mismatch);
        rows.push(vec![format!("{rho:e}"), format!("{ratio:.4}"), format!("{mismatch:.3e}")]);
    }
    report.table = render_table(
        &["rho".to_string(), "Mean ISE / Preview".to_string(), "Mean |u0 mismatch|".to_string()],
        &rows,
    );
    Ok(report)
}

/// All four controllers on a user-supplied model and reference.
pub fn custom_study(cfg: &ProblemConfig, seed: u64) -> Result<StudyReport> {
    let cond = match cfg.kind {
        ControllerKind::RefCond(c) => c,
        _ => Condensation::Weighted { rho: cfg.rho },
    };
    let kinds = ControllerKind::table(cond);
    let configs = kinds
        .iter()
        .map(|&k| cfg.sim_config(k, CUSTOM_T_FINAL))
        .collect::<Result<Vec<_>>>()?;
    let results = run_all(&configs)?;

    let mut report = StudyReport::new("custom", seed);
    let mut row = vec!["ISE".to_string()];
    for (kind, res) in kinds.iter().zip(&results) {
        report.push(format!("custom/{}", kind.short_name()), "ise", res.ise);
        row.push(format!("{:.4}", res.ise));
        report
            .data_files
            .push((format!("custom_{}.dat", kind.short_name()), format_trajectories(res)));
    }
    report.table = render_table(&controller_header("Metric", &kinds), &[row]);
    Ok(report)
}
