use std::path::PathBuf;

use planshape::artifact::{ArtifactKind, PlanningArtifact};
use planshape::planner::{PlannerCommand, SubprocessPlanner};
use planshape::validate::{sample_states, validate_artifact, validate_planner, PlannerSource};
use planshape_core::env::{LbfConfig, MpeConfig};
use planshape_core::{plan_reference, EnvConfig, EnvId, PlanError};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name).to_string_lossy().into_owned()
}

fn python(name: &str) -> PlannerCommand {
    PlannerCommand::new("python3", &[&fixture(name)])
}

fn lbf() -> EnvConfig {
    EnvConfig::Lbf(LbfConfig::default())
}

fn external(source: &str) -> PlanningArtifact {
    PlanningArtifact {
        kind: ArtifactKind::External,
        env_id: EnvId::Lbf,
        source_text: source.into(),
        strategy_text: None,
        prompt_hash: Some("0".repeat(64)),
        created_at: 0,
        model_id: Some("fixture".into()),
        runtime: vec!["python3".into()],
    }
}

#[test]
fn served_reference_matches_in_process() {
    let bin = PlannerCommand::new(env!("CARGO_BIN_EXE_planshape"), &["serve-planner"]);
    for cfg in [lbf(), EnvConfig::MpeSpread(MpeConfig::default()), EnvConfig::MpeSpread(MpeConfig { n_agents: 4, ..Default::default() })] {
        let spec = cfg.spec();
        let mut remote = SubprocessPlanner::spawn(&bin, &spec, 5_000).unwrap();
        for state in sample_states(&cfg, 1000, 31) {
            assert_eq!(remote.request(&state).unwrap(), plan_reference(&state, &spec));
        }
    }
}

#[test]
fn label_outside_the_environment_is_invalid_but_recoverable() {
    let spec = lbf().spec();
    let mut p = SubprocessPlanner::spawn(&python("wrong_env_label.py"), &spec, 5_000).unwrap();
    let states = sample_states(&lbf(), 2, 0);
    for s in &states {
        assert!(matches!(p.request(s), Err(PlanError::InvalidLabel { .. })));
    }
    assert!(!p.is_broken());
}

#[test]
fn seq_mismatch_is_a_protocol_error() {
    let spec = lbf().spec();
    let mut p = SubprocessPlanner::spawn(&python("bad_seq.py"), &spec, 5_000).unwrap();
    let state = &sample_states(&lbf(), 1, 0)[0];
    assert!(matches!(p.request(state), Err(PlanError::Protocol(m)) if m.contains("seq")));
    assert!(p.is_broken());
    assert!(matches!(p.request(state), Err(PlanError::Protocol(_))));
}

#[test]
fn slow_planner_times_out() {
    let spec = lbf().spec();
    let mut p = SubprocessPlanner::spawn(&python("slow.py"), &spec, 200).unwrap();
    let state = &sample_states(&lbf(), 1, 0)[0];
    let start = std::time::Instant::now();
    assert_eq!(p.request(state), Err(PlanError::Timeout(200)));
    assert!(start.elapsed().as_millis() < 1_500);
}

#[test]
fn exiting_planner_is_reported_as_a_crash() {
    let spec = lbf().spec();
    let mut p = SubprocessPlanner::spawn(&python("exits_early.py"), &spec, 5_000).unwrap();
    let state = &sample_states(&lbf(), 1, 0)[0];
    assert!(matches!(p.request(state), Err(PlanError::Crashed(_))));
}

#[test]
fn missing_program_cannot_start() {
    let spec = lbf().spec();
    let cmd = PlannerCommand::new("/nonexistent/planner", &[]);
    assert!(matches!(SubprocessPlanner::spawn(&cmd, &spec, 100), Err(PlanError::Crashed(_))));
}

#[test]
fn broken_planner_fails_validation_with_exact_count() {
    let dir = tempfile::tempdir().unwrap();
    let art = external(include_str!("fixtures/every_third_bad.py"));
    let report = validate_artifact(&art, &lbf(), 100, 0, dir.path()).unwrap();
    // Requests 0, 3, ..., 99 carry an out-of-range food.
    assert_eq!(report.invalid_labels, 34, "{}", report.summary());
    assert_eq!(report.failures(), 34);
    assert!(!report.passed());
}

#[test]
fn working_external_planner_passes() {
    let dir = tempfile::tempdir().unwrap();
    let report = validate_artifact(&external(include_str!("fixtures/first_food.py")), &lbf(), 100, 0, dir.path()).unwrap();
    assert!(report.passed(), "{}", report.summary());
}

#[test]
fn reference_passes_validation() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in [lbf(), EnvConfig::MpeSpread(MpeConfig::default())] {
        let art = PlanningArtifact::reference(cfg.env_id());
        let report = validate_artifact(&art, &cfg, 100, 0, dir.path()).unwrap();
        assert_eq!(report.failures(), 0);
    }
}

#[test]
fn every_timeout_is_counted_after_restarts() {
    let source = PlannerSource::Process { command: python("slow.py"), timeout_ms: 100 };
    let report = validate_planner(&source, &lbf(), 3, 0);
    assert_eq!((report.timeouts, report.exceptions, report.invalid_labels), (3, 0, 0));
}
