//! Closed-loop simulation, tracking metrics and the comparison studies.

mod sim;
mod studies;

pub use sim::{
    export_trajectories, fmt_f64, format_trajectories, ise, simulate_closed_loop, ReferenceSchedule, SimConfig,
    SimResult, TrajectoryTable,
};
pub use studies::{
    condensation_weights, custom_study, horizon_study, run_table_studies, step_sinusoid_study, weighted_study,
    weighted_study_reference, Metric, StudyReport, StudySelector, CUSTOM_T_FINAL, HORIZONS, STEP_SINUSOID_HORIZON,
    TABLE_T_FINAL, WEIGHTED_HORIZON, WEIGHTED_RHOS, WEIGHTED_T_FINAL, WEIGHTED_TRAJECTORIES,
};
