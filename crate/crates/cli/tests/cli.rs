use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"
[data]
number_instances = 8
gender_instances = 8
lm_sentences = 30
probe_examples = 30

[models.recurrent]
embed_dim = 4
hidden = 4
layers = 2

[models.attention]
embed_dim = 4
heads = 1
layers = 1
ffn = 4

[train]
epochs = 1

[probe]
epochs = 2

[distill]
epochs = 1

[saliency]
sg_samples = 2
ig_steps = 3
"#;

fn salbench(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_salbench"));
    cmd.args(args).env("RUST_LOG", "warn").env_remove("SALBENCH_RESULTS_DIR");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn invalid_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[run]\nseed = 1\n\n[saliency]\nig_stepz = 3\n");
    let out = salbench(&["evaluate", "--config", &cfg], &[]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 5") && err.contains("ig_stepz"), "{err}");
}

#[test]
fn missing_checkpoints_fail_with_hint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    assert!(salbench(&["generate-data", "--config", &cfg], &[]).status.success());
    let out = salbench(&["probe", "--config", &cfg], &[]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("recurrent.lm.ckpt") && err.contains("salbench train"), "{err}");
    assert!(!dir.path().join("checkpoints").exists());
}

#[test]
fn all_then_up_to_date_with_results_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let results = dir.path().join("elsewhere");
    let env = [("SALBENCH_RESULTS_DIR", results.as_path())];
    let out = salbench(&["all", "--config", &cfg, "--threads", "2", "--seed", "5"], &env);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(results.join("report.json").exists());
    assert!(!dir.path().join("results").exists());
    let report = std::fs::read(results.join("report.json")).unwrap();

    let out = salbench(&["all", "--config", &cfg, "--seed", "5"], &env);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches("up to date").count(), 6, "{stdout}");

    let out = salbench(&["evaluate", "--config", &cfg, "--seed", "5", "--force", "--threads", "1"], &env);
    assert!(out.status.success());
    assert_eq!(std::fs::read(results.join("report.json")).unwrap(), report);
}

#[test]
fn unknown_subcommand_fails() {
    assert!(!salbench(&["fly", "--config", "x.toml"], &[]).status.success());
}
