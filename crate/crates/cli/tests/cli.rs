use std::path::Path;
use std::process::{Command, Output};

fn treebandit(args: &[&str], output_root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_treebandit"));
    cmd.args(args).env_remove("TREEBANDIT_OUTPUT_ROOT");
    if let Some(root) = output_root {
        cmd.env("TREEBANDIT_OUTPUT_ROOT", root);
    }
    cmd.output().unwrap()
}

const SCHEMA: &str = "label = \"y\"\nmissing = []\n\
[[columns]]\nname = \"a\"\nkind = \"numeric\"\n\
[[columns]]\nname = \"c\"\nkind = \"categorical\"\n\
[[columns]]\nname = \"y\"\nkind = \"label\"\n";

fn fixture(dir: &Path, horizon: u64) -> String {
    let mut csv = String::from("a,c,y\n");
    for i in 0..100 {
        let a = (i * 7 % 10) as f64;
        let c = if i % 2 == 0 { "x" } else { "z" };
        let y = if a > 4.0 { "p" } else { "n" };
        csv.push_str(&format!("{a},{c},{y}\n"));
    }
    std::fs::write(dir.join("toy.csv"), csv).unwrap();
    std::fs::write(dir.join("toy.schema.toml"), SCHEMA).unwrap();
    let config = format!(
        "name = \"toy\"\nhorizon = {horizon}\nrepetitions = 2\n\
         [environment]\nkind = \"classification\"\ndataset = \"toy.csv\"\n\
         [[agents]]\nkind = \"tree_ensemble\"\nname = \"TEUCB\"\nensemble = {{ n_trees = 3, max_depth = 2 }}\n\
         [[agents]]\nkind = \"linear\"\nname = \"LinUCB\"\nrule = \"lin_ucb\"\n"
    );
    let path = dir.join("toy.toml");
    std::fs::write(&path, config).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_summarize_and_plotdata() {
    let dir = tempfile::tempdir().unwrap();
    let root = tempfile::tempdir().unwrap();
    let config = fixture(dir.path(), 40);

    let out = treebandit(&["run", &config], Some(root.path()));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = root.path().join("toy");
    let summary = std::fs::read_to_string(run_dir.join("summary.json")).unwrap();
    assert!(run_dir.join("traces/TEUCB/seed_1.csv").exists());
    assert!(!dir.path().join("toy").exists());

    let out = treebandit(&["summarize", run_dir.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8(out.stdout).unwrap(), summary);

    let out = treebandit(&["plotdata", run_dir.to_str().unwrap(), "-o", "-"], None);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    assert!(csv.starts_with("step,agent,mean,sd\n"));
    assert_eq!(csv.lines().count(), 1 + 2 * 40);

    let out = treebandit(&["plotdata", run_dir.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(run_dir.join("plot.csv")).unwrap(), csv);
}

#[test]
fn explicit_output_root_flag() {
    let dir = tempfile::tempdir().unwrap();
    let root = tempfile::tempdir().unwrap();
    let config = fixture(dir.path(), 20);
    let out = treebandit(&["run", &config, "--output-root", root.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(0));
    assert!(root.path().join("toy/summary.json").exists());
}

#[test]
fn validate_prints_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path(), 20);
    let out = treebandit(&["validate", &config], Some(dir.path()));
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("feedback_batch_size = 1"), "{text}");
    assert!(text.contains("initial_rounds = 20"), "{text}");
}

#[test]
fn validation_failures_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture(dir.path(), 500);
    for verb in ["validate", "run"] {
        let out = treebandit(&[verb, &config], Some(dir.path()));
        assert_eq!(out.status.code(), Some(2), "{verb}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(err.contains("horizon:"), "{err}");
    }
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\nhorizon = 0\n").unwrap();
    let out = treebandit(&["validate", bad.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.toml");
    let out = treebandit(&["run", missing.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(1));
    let config = fixture(dir.path(), 20);
    std::fs::remove_file(dir.path().join("toy.csv")).unwrap();
    let out = treebandit(&["run", &config], Some(dir.path()));
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}
