//! Command-line front end. Exit codes: 0 success, 1 usage or input error,
//! 2 numerical failure, 3 property-suite failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::condensation::{closed_loop_matrix, unweighted_map, weighted_map};
use crate::config::ProblemConfig;
use crate::controllers::{Condensation, ControllerKind};
use crate::error::{Error, Result};
use crate::experiments::{export_trajectories, fmt_f64, run_table_studies, simulate_closed_loop, StudySelector, TABLE_T_FINAL};
use crate::linalg::spectral_radius;
use crate::lq_batch::{build_batch_operators, tracking_gains};
use crate::verify::{run_property_suite, Fault};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_PROPERTY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "refcond", version, about = "Linear MPC with reference condensation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute Fx, Fr, S and S_W for a problem.
    Gains {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// First-block weight for S_W (overrides the config).
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Run one closed-loop simulation.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Seed for random references (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        rho: Option<f64>,
    },
    /// Reproduce a comparison study.
    Study {
        /// step_sinusoid, horizon, weighted or custom.
        #[arg(long)]
        selector: String,
        /// Problem description for the custom study.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the property suite.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt the condensation maps to exercise the failure path.
        #[arg(long, value_enum)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FaultArg {
    RowSum,
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(stderr, "{}", e.render())
            } else {
                write!(stdout, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_USAGE
            }
        }
    }
}

fn dispatch(cmd: Command, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> Result<i32> {
    match cmd {
        Command::Gains { config, out, rho } => cmd_gains(&config, &out, rho, stdout, stderr),
        Command::Simulate { config, out, seed, rho } => cmd_simulate(&config, &out, seed, rho, stdout),
        Command::Study {
            selector,
            config,
            out,
            seed,
        } => cmd_study(&selector, config.as_deref(), &out, seed, stdout),
        Command::Verify { seed, inject_fault } => {
            let fault = inject_fault.map(|f| match f {
                FaultArg::RowSum => Fault::CorruptRowSum,
            });
            cmd_verify(seed, fault, stdout)
        }
    }
}

fn load(path: &Path, rho: Option<f64>, seed: Option<u64>) -> Result<ProblemConfig> {
    let mut cfg = ProblemConfig::from_path_seeded(path, seed)?;
    if let Some(rho) = rho {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidArgument(format!("--rho must be positive, got {rho}")));
        }
        cfg.rho = rho;
        if let ControllerKind::RefCond(Condensation::Weighted { .. }) = cfg.kind {
            cfg.kind = ControllerKind::ref_cond(rho);
        }
    }
    Ok(cfg)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// One matrix row per line, 17 significant digits.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        out.push_str(&cells.join(" "));
        out.push('\n');
    }
    out
}

pub fn cmd_gains(
    config: &Path,
    out: &Path,
    rho: Option<f64>,
    stdout: &mut dyn std::io::Write,
    stderr: &mut dyn std::io::Write,
) -> Result<i32> {
    let cfg = load(config, rho, None)?;
    let ops = build_batch_operators(&cfg.sys, &cfg.weights, cfg.horizon)?;
    let g = tracking_gains(&ops)?;
    let s = unweighted_map(&g)?;
    let sw = weighted_map(&g, cfg.rho);

    write_file(out, "fx.txt", &format_matrix(&g.fx))?;
    write_file(out, "fr.txt", &format_matrix(&g.fr))?;
    write_file(out, "s.txt", &format_matrix(&s.s))?;
    let mut summary = String::new();
    writeln!(summary, "nx {}", g.nx).unwrap();
    writeln!(summary, "nu {}", g.nu).unwrap();
    writeln!(summary, "nr {}", g.nr).unwrap();
    writeln!(summary, "horizon {}", g.horizon).unwrap();
    writeln!(summary, "rho {}", fmt_f64(cfg.rho)).unwrap();
    writeln!(summary, "fr_spectral_norm {}", fmt_f64(g.fr_spectral_norm())).unwrap();
    writeln!(summary, "rank_ok {}", s.rank_ok).unwrap();
    let sums: Vec<String> = s.row_sums().iter().map(|v| fmt_f64(*v)).collect();
    writeln!(summary, "s_row_sums {}", sums.join(" ")).unwrap();
    writeln!(
        summary,
        "closed_loop_spectral_radius {}",
        fmt_f64(spectral_radius(&closed_loop_matrix(&g, &cfg.sys)))
    )
    .unwrap();
    match &sw {
        Ok(sw) => {
            write_file(out, "s_w.txt", &format_matrix(&sw.s))?;
        }
        Err(e) => writeln!(stderr, "warning: S_W not written: {e}").unwrap(),
    }
    let warning = !s.rank_ok;
    writeln!(summary, "warning {}", if warning { "rank_deficient" } else { "none" }).unwrap();
    if warning {
        writeln!(stderr, "warning: Fr*I is rank deficient; condensation maps are not unique").unwrap();
    }
    write_file(out, "summary.txt", &summary)?;
    write!(stdout, "{summary}").unwrap();
    Ok(EXIT_OK)
}

pub fn cmd_simulate(
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    rho: Option<f64>,
    stdout: &mut dyn std::io::Write,
) -> Result<i32> {
    let cfg = load(config, rho, seed)?;
    let sim = cfg.sim_config(cfg.kind, TABLE_T_FINAL)?;
    let res = simulate_closed_loop(&sim)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    export_trajectories(&res, &out.join("trajectory.dat"))?;
    let mut metrics = String::new();
    writeln!(metrics, "controller {}", cfg.kind.short_name()).unwrap();
    writeln!(metrics, "steps {}", res.steps()).unwrap();
    writeln!(metrics, "ise {}", fmt_f64(res.ise)).unwrap();
    writeln!(metrics, "qp_iterations_total {}", res.qp_iterations).unwrap();
    writeln!(metrics, "qp_iterations_max {}", res.max_qp_iterations).unwrap();
    writeln!(metrics, "worst_kkt_residual {}", fmt_f64(res.worst_kkt_residual)).unwrap();
    write_file(out, "metrics.txt", &metrics)?;
    write!(stdout, "{metrics}").unwrap();
    Ok(EXIT_OK)
}

pub fn cmd_study(
    selector: &str,
    config: Option<&Path>,
    out: &Path,
    seed: u64,
    stdout: &mut dyn std::io::Write,
) -> Result<i32> {
    let selector = StudySelector::parse(selector, config)?;
    let report = run_table_studies(&selector, seed)?;
    report.write_to(out)?;
    write!(stdout, "{}", report.text()).unwrap();
    Ok(EXIT_OK)
}

pub fn cmd_verify(seed: u64, fault: Option<Fault>, stdout: &mut dyn std::io::Write) -> Result<i32> {
    let report = run_property_suite(seed, fault)?;
    write!(stdout, "{report}").unwrap();
    if report.all_passed() {
        writeln!(stdout, "all properties hold").unwrap();
        Ok(EXIT_OK)
    } else {
        writeln!(stdout, "failed: {}", report.failures().join(", ")).unwrap();
        Ok(EXIT_PROPERTY)
    }
}
