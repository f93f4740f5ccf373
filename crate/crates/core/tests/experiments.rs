use nalgebra::DVector;
use refcond::controllers::{Condensation, ControllerKind, ReferenceSignal};
use refcond::experiments::{
    export_trajectories, run_table_studies, simulate_closed_loop, SimConfig, StudySelector, TrajectoryTable,
};
use tempfile::TempDir;

fn run(kind: ControllerKind, signal: ReferenceSignal) -> refcond::experiments::SimResult {
    simulate_closed_loop(&SimConfig::double_integrator(50, kind, signal, 20.0)).unwrap()
}

#[test]
fn zero_reference_keeps_everything_at_rest() {
    let res = run(ControllerKind::ref_cond(1e6), ReferenceSignal::scalar_constant(0.0));
    assert!(res.states.iter().all(|x| x.iter().all(|&v| v == 0.0)));
    assert!(res.controls.iter().all(|u| u[0] == 0.0));
    assert_eq!(res.ise, 0.0);
    assert_eq!(res.states.len(), res.controls.len() + 1);
    assert_eq!(res.times.len(), 201);
}

#[test]
fn step_study_values() {
    let none = run(ControllerKind::NoPreview, ReferenceSignal::scalar_step(5.0, 0.0, 1.0)).ise;
    let cond = run(ControllerKind::ref_cond(1e6), ReferenceSignal::scalar_step(5.0, 0.0, 1.0)).ise;
    let prev = run(ControllerKind::FullPreview, ReferenceSignal::scalar_step(5.0, 0.0, 1.0)).ise;
    assert!((none - 1.114).abs() / 1.114 < 0.02, "{none}");
    assert!((cond - 0.259).abs() / 0.259 < 0.02, "{cond}");
    assert!((cond - prev).abs() < 1e-3);
    let ratio = none / prev;
    assert!((ratio - 1.114 / 0.259).abs() < 0.1, "{ratio}");
}

#[test]
fn weighted_condensation_tracks_preview_states() {
    for signal in [ReferenceSignal::scalar_step(5.0, 0.0, 1.0), ReferenceSignal::scalar_sinusoid(1.0, 0.5)] {
        let cond = run(ControllerKind::ref_cond(1e6), signal.clone());
        let prev = run(ControllerKind::FullPreview, signal);
        let gap = cond
            .states
            .iter()
            .zip(&prev.states)
            .map(|(a, b)| (a - b).amax())
            .fold(0.0, f64::max);
        assert!(gap < 1e-6, "{gap}");
    }
}

#[test]
fn unweighted_condensation_also_runs() {
    let res = run(ControllerKind::RefCond(Condensation::Unweighted), ReferenceSignal::scalar_step(5.0, 0.0, 1.0));
    assert!(res.ise > 0.0 && res.ise < 1.114);
    assert!(res.setpoints.iter().all(Option::is_some));
}

#[test]
fn condensation_anticipates_the_step() {
    let res = run(ControllerKind::ref_cond(1e6), ReferenceSignal::scalar_step(5.0, 0.0, 1.0));
    let before: Vec<f64> = res.times.iter().zip(&res.states).filter(|(t, _)| **t < 5.0).map(|(_, x)| x[0]).collect();
    assert!(before.last().unwrap() > &0.05);
    let none = run(ControllerKind::NoPreview, ReferenceSignal::scalar_step(5.0, 0.0, 1.0));
    assert!(none.states[49][0].abs() < 1e-12);
}

#[test]
fn export_round_trips_and_reproduces_ise() {
    let dir = TempDir::new().unwrap();
    for signal in [ReferenceSignal::scalar_constant(0.0), ReferenceSignal::scalar_sinusoid(1.0, 0.5)] {
        let res = run(ControllerKind::AverageRef, signal);
        let path = dir.path().join("traj.dat");
        export_trajectories(&res, &path).unwrap();
        let table = TrajectoryTable::read(&path).unwrap();
        assert_eq!(table.columns, ["t", "x1", "x2", "u1", "r1"]);
        assert_eq!(table.rows.len(), 201);
        let x1 = table.column("x1").unwrap();
        assert!(x1.iter().zip(&res.states).all(|(a, x)| a.to_bits() == x[0].to_bits()));
        let u1 = table.column("u1").unwrap();
        assert!(u1[..200].iter().zip(&res.controls).all(|(a, u)| a.to_bits() == u[0].to_bits()));
        assert!(u1[200].is_nan());
        assert!((table.ise(&res.c, res.ts) - res.ise).abs() <= 1e-12);
    }
}

#[test]
fn reports_are_deterministic() {
    let a = run_table_studies(&StudySelector::Weighted, 3).unwrap();
    let b = run_table_studies(&StudySelector::Weighted, 3).unwrap();
    assert_eq!(a, b);
    let c = run_table_studies(&StudySelector::Weighted, 4).unwrap();
    assert_ne!(a.metrics, c.metrics);
}

#[test]
fn multi_output_ise_sums_outputs() {
    let c = nalgebra::DMatrix::identity(2, 2);
    let states = vec![DVector::from_vec(vec![1.0, 2.0]); 3];
    let refs = vec![DVector::zeros(2); 3];
    assert!((refcond::experiments::ise(&c, &states, &refs, 0.5) - 5.0).abs() < 1e-15);
}
