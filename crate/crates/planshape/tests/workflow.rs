use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use planshape::artifact::{ArtifactKind, ArtifactStore, PlanningArtifact};
use planshape::harness::compare::compare;
use planshape::harness::config::RunConfig;
use planshape::harness::run::{read_manifest, RunStatus};
use planshape::harness::{metrics, Session, EXIT_CONFIG, EXIT_GENERATE, EXIT_TRAIN};
use planshape::llmgen::RefusingTransport;
use planshape_core::EnvId;

const BIN: &str = env!("CARGO_BIN_EXE_planshape");

fn config_text(out: &Path, planner: &str, shaped: bool, artifact_dir: &Path) -> String {
    format!(
        r#"seeds = [0, 1]
total_steps = 2000
eval_interval = 1000
eval_episodes = 5
output_dir = "{}"
planner = "{planner}"
artifact_dir = "{}"
jobs = 2

[env]
kind = "lbf"

[algorithm]
name = "mappo"
rollout_len = 64
n_envs = 4

[shaping]
enabled = {shaped}
"#,
        out.display(),
        artifact_dir.display()
    )
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn planshape(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn external(source: &str) -> PlanningArtifact {
    PlanningArtifact {
        kind: ArtifactKind::External,
        env_id: EnvId::Lbf,
        source_text: source.into(),
        strategy_text: Some("fixture".into()),
        prompt_hash: Some("ab".repeat(32)),
        created_at: 0,
        model_id: Some("fixture".into()),
        runtime: vec!["python3".into()],
    }
}

#[test]
fn offline_train_and_eval_make_no_requests() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_toml(&config_text(&dir.path().join("runs"), "reference", true, &dir.path().join("a")), Path::new("inline"))
        .unwrap();
    let mut refusing = RefusingTransport::default();
    let mut session = Session { transport: &mut refusing, offline: true };
    let runs = session.cmd_train(&cfg).unwrap();
    assert_eq!(runs.len(), 2);
    for (run, status) in &runs {
        assert_eq!(*status, RunStatus::Trained);
        let manifest = read_manifest(run).unwrap();
        assert!(manifest.shaping_enabled);
        assert_eq!(metrics::read(&run.join("metrics.csv")).unwrap().len(), 2);
        let r = session.cmd_eval(run, 5, 1).unwrap();
        assert!((0.0..=1.0).contains(&r.mean));
    }
    assert_eq!(refusing.attempts, 0);
}

#[test]
fn training_from_a_stored_external_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let store = ArtifactStore::new(dir.path().join("artifacts"));
    let hash = store.put(&external(include_str!("fixtures/first_food.py"))).unwrap();
    let text = config_text(&dir.path().join("runs"), &format!("artifact:{hash}"), true, store.root());
    let cfg = write_config(dir.path(), "run.toml", &text);
    let out = planshape(&["--offline", "train", "--config", cfg.to_str().unwrap(), "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let provenance = fs::read_to_string(dir.path().join("runs/seed_3/planner.json")).unwrap();
    let stored: PlanningArtifact = serde_json::from_str(&provenance).unwrap();
    assert_eq!(stored.prompt_hash.as_deref(), Some(hash.as_str()));
    assert_eq!(stored.kind, ArtifactKind::External);
}

#[test]
fn runs_are_reproducible_and_never_overwritten() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let cfg = write_config(dir.path(), "c.toml", &config_text(out, "reference", true, &dir.path().join("x")));
        let o = planshape(&["train", "--config", cfg.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for seed in ["seed_0", "seed_1"] {
        for file in ["metrics.csv", "policy.json"] {
            assert_eq!(fs::read(a.join(seed).join(file)).unwrap(), fs::read(b.join(seed).join(file)).unwrap());
        }
    }
    let before = fs::read(a.join("seed_0/policy.json")).unwrap();
    let cfg = write_config(dir.path(), "c.toml", &config_text(&a, "reference", true, &dir.path().join("x")));
    let o = planshape(&["train", "--config", cfg.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("skipped"));
    assert_eq!(fs::read(a.join("seed_0/policy.json")).unwrap(), before);

    fs::create_dir_all(a.join("seed_5")).unwrap();
    fs::write(a.join("seed_5/metrics.csv"), "partial").unwrap();
    let o = planshape(&["train", "--config", cfg.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn comparison_of_baseline_and_shaped_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut session_t = RefusingTransport::default();
    let mut session = Session { transport: &mut session_t, offline: true };
    for (name, planner, shaped) in [("base", "none", false), ("shaped", "reference", true)] {
        let text = config_text(&dir.path().join(name), planner, shaped, &dir.path().join("x"));
        session.cmd_train(&RunConfig::from_toml(&text, Path::new("inline")).unwrap()).unwrap();
    }
    let report = compare(&[dir.path().join("base")], &[dir.path().join("shaped")], &[]).unwrap();
    assert_eq!(report.checkpoints, vec![1000, 2000]);
    assert_eq!(report.baseline.len(), 2);
    assert!(report.table().contains("2000"));
    assert!(report.svg().starts_with("<svg"));

    let out = dir.path().join("report");
    let o = planshape(&[
        "compare",
        "--baseline",
        dir.path().join("base").to_str().unwrap(),
        "--shaped",
        dir.path().join("shaped").to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("lbf_mappo.csv").exists() && out.join("lbf_mappo.svg").exists());
}

#[test]
fn exit_codes_name_the_failing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.toml", "seeds = [0]\nnot_a_field = 1\n");
    assert_eq!(planshape(&["train", "--config", bad.to_str().unwrap()]).status.code(), Some(EXIT_CONFIG));

    let no_planner = write_config(
        dir.path(),
        "np.toml",
        &config_text(&dir.path().join("r"), "none", true, &dir.path().join("x")),
    );
    assert_eq!(planshape(&["train", "--config", no_planner.to_str().unwrap()]).status.code(), Some(EXIT_CONFIG));

    let store = ArtifactStore::new(dir.path().join("artifacts"));
    let hash = store.put(&external(include_str!("fixtures/exits_early.py"))).unwrap();
    let crashing = write_config(
        dir.path(),
        "crash.toml",
        &config_text(&dir.path().join("crash"), &format!("artifact:{hash}"), true, store.root()),
    );
    let o = planshape(&["train", "--config", crashing.to_str().unwrap(), "--seed", "0"]);
    assert_eq!(o.status.code(), Some(EXIT_TRAIN), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("crash/seed_0/run.json").exists());

    let o = planshape(&["--offline", "generate", "--env", "lbf", "--artifact-dir", dir.path().join("empty").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_GENERATE));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no cached"));
}

#[test]
fn generate_with_canned_completions_then_hits_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let strategy = write_config(dir.path(), "s.txt", "Both agents go to the first food and load together.");
    let code = write_config(
        dir.path(),
        "p.txt",
        &format!("```python\n{}```\n", include_str!("fixtures/first_food.py")),
    );
    let artifacts = dir.path().join("artifacts");
    let args = ["generate", "--env", "lbf", "--artifact-dir", artifacts.to_str().unwrap()];
    let mut first = args.to_vec();
    first.extend(["--stub", strategy.to_str().unwrap(), code.to_str().unwrap()]);
    let o = planshape(&first);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let hash = String::from_utf8(o.stdout).unwrap().trim().to_string();
    assert_eq!(hash.len(), 64);

    let mut offline = vec!["--offline"];
    offline.extend(args);
    let o = planshape(&offline);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), hash);
    assert!(String::from_utf8_lossy(&o.stderr).contains("cache hit"));
}

#[test]
fn gradient_check_command() {
    let ok = planshape(&["gradcheck"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stdout));
    let flipped = planshape(&["gradcheck", "--nets", "5", "--inject-sign-flip"]);
    assert_eq!(flipped.status.code(), Some(1));
}

#[test]
fn state_layout_doc_is_current() {
    let doc = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/state-layouts.md");
    assert_eq!(fs::read_to_string(doc).unwrap(), planshape::layouts::state_layouts_markdown());
}

#[test]
fn example_configs_parse() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 4);
}

#[test]
fn core_crate_stays_free_of_io_dependencies() {
    let manifest = fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/Cargo.toml")).unwrap();
    let deps: toml::Table = toml::from_str(&manifest).unwrap();
    let names: Vec<&String> = deps["dependencies"].as_table().unwrap().keys().collect();
    for forbidden in ["planshape", "ureq", "serde_json", "sha2"] {
        assert!(!names.iter().any(|n| *n == forbidden), "core depends on {forbidden}");
    }
    let lib = fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/src/lib.rs")).unwrap();
    assert!(lib.contains("#![no_std]"));
}
