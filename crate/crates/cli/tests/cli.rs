use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const CASES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/cases");

fn gridrl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridrl"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_prints_summary() {
    let tmp = TempDir::new().unwrap();
    let out = gridrl(&["solve", &format!("{CASES}/case14.json")], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("converged in"), "{text}");
    assert!(text.contains("losses"));
}

#[test]
fn usage_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(gridrl(&["frobnicate"], tmp.path()).status.code(), Some(1));
    assert_eq!(gridrl(&["solve"], tmp.path()).status.code(), Some(1));
    assert_eq!(gridrl(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn bad_input_exits_two() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("broken.json"), "{ \"buses\": [").unwrap();
    assert_eq!(gridrl(&["solve", "broken.json"], tmp.path()).status.code(), Some(2));
    assert_eq!(gridrl(&["solve", "missing.json"], tmp.path()).status.code(), Some(2));
    fs::write(tmp.path().join("run.toml"), "replication = \"three\"\n").unwrap();
    assert_eq!(gridrl(&["train", "run.toml"], tmp.path()).status.code(), Some(2));
}

#[test]
fn non_convergence_exits_three() {
    let tmp = TempDir::new().unwrap();
    let out = gridrl(
        &["solve", &format!("{CASES}/case14.json"), "--max-iterations", "1"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn pipeline_from_config_files() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::copy(format!("{CASES}/micro3.json"), dir.join("micro3.json")).unwrap();
    fs::create_dir(dir.join("conf")).unwrap();
    // paths in configs are relative to the config file
    fs::write(
        dir.join("conf/gen.toml"),
        "base_case = \"../micro3.json\"\noutput_dir = \"../snaps\"\nn_snapshots = 20\nseed = 4\n",
    )
    .unwrap();
    let out = gridrl(&["generate-snapshots", "conf/gen.toml"], dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_dir(dir.join("snaps")).unwrap().count(), 20);

    let sac = "batch_size = 16\nstart_steps = 16\nmax_episode_steps = 5\nhidden_width = 16\n";
    let campaign = format!(
        "output_dir = \"../campaign\"\n\n\
         [[runs]]\nrun_id = \"r1\"\nsnapshot_dir = \"../snaps\"\n[runs.sac]\n{sac}\n\
         [[runs]]\nrun_id = \"r2\"\nsnapshot_dir = \"../snaps\"\n[runs.sac]\n{sac}random_seed = 11\n"
    );
    fs::write(dir.join("conf/campaign.toml"), campaign).unwrap();
    let out = gridrl(&["campaign", "conf/campaign.toml"], dir);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("best r"), "{text}");
    let registry = dir.join("campaign/registry.json");
    assert!(registry.exists());

    let ck = dir.join("campaign/runs/r1/final.json");
    assert!(ck.exists());
    let out = gridrl(
        &["evaluate", ck.to_str().unwrap(), "snaps", "--output", "report.json"],
        dir,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("solved fraction"));
    assert!(fs::read_to_string(dir.join("report.json")).unwrap().contains("\"outcomes\""));

    let out = gridrl(
        &["retrain", registry.to_str().unwrap(), "snaps", "--max-episodes", "0"],
        dir,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("registry unchanged"));
}
