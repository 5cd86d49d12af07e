use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const HEADER: &str = "step,time,gospa_distance,gospa_loc,gospa_missed,gospa_false,cov_norm_sum,t2t,reward,reward_cov,reward_ssv,n_tracks,n_detections";

fn trackgym(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trackgym"))
        .args(args)
        .current_dir(dir)
        .env_remove("TRACKGYM_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

#[test]
fn run_writes_metrics_summary_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = trackgym(
        &[
            "run",
            "--policy",
            "random",
            "--episodes",
            "3",
            "--set",
            "environment.horizon=40",
            "-o",
            "out",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let base = dir.path().join("out/random");
    for i in 0..3 {
        let csv = read(base.join(format!("metrics/episode_{i:04}.csv")));
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(HEADER));
        assert_eq!(lines.count(), 40);
    }
    let summary = read(base.join("summary.jsonl"));
    let seeds: Vec<u64> = summary
        .lines()
        .map(|l| {
            serde_json::from_str::<serde_json::Value>(l).unwrap()["seed"]
                .as_u64()
                .unwrap()
        })
        .collect();
    assert_eq!(seeds, [0, 1, 2]);
    let table = stdout(&out);
    assert!(table.starts_with("Policy"));
    assert!(table.contains("random"));
    assert!(table.contains(" ± "));
}

/// The printed mean T2T and pooled covariance statistics are recomputable
/// from the per-step files alone.
#[test]
fn summary_is_recomputable_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = trackgym(
        &[
            "run",
            "--policy",
            "coverage",
            "--episodes",
            "2",
            "--set",
            "environment.horizon=100",
            "-o",
            "o",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let mut t2t_means = Vec::new();
    let mut cov = Vec::new();
    for i in 0..2 {
        let mut r = csv_rows(&dir.path().join(format!("o/coverage/metrics/episode_{i:04}.csv")));
        let t2t: Vec<f64> = r.iter_mut().filter_map(|row| row[7].parse().ok()).collect();
        t2t_means.push(t2t.iter().sum::<f64>() / t2t.len() as f64);
        cov.extend(r.iter().map(|row| row[6].parse::<f64>().unwrap()));
    }
    let mean_t2t = t2t_means.iter().sum::<f64>() / 2.0;
    let m = cov.iter().sum::<f64>() / cov.len() as f64;
    let sd = (cov.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (cov.len() - 1) as f64).sqrt();
    let row = stdout(&out)
        .lines()
        .find(|l| l.starts_with("coverage"))
        .unwrap()
        .to_string();
    assert!(row.contains(&format!("{mean_t2t:.3}")), "{row} vs {mean_t2t}");
    assert!(row.contains(&format!("{m:.2} ± {sd:.2}")), "{row} vs {m} {sd}");
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    read(path)
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn repeated_runs_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    for (name, threads) in [("a", "1"), ("b", "3")] {
        let out = trackgym(
            &[
                "run",
                "--policy",
                "random",
                "--episodes",
                "4",
                "--seed",
                "9",
                "--threads",
                threads,
                "--set",
                "environment.horizon=60",
                "-o",
                name,
            ],
            dir.path(),
        );
        assert!(out.status.success());
    }
    for i in 0..4 {
        let f = format!("random/metrics/episode_{i:04}.csv");
        assert_eq!(read(dir.path().join("a").join(&f)), read(dir.path().join("b").join(&f)));
    }
    assert_eq!(
        read(dir.path().join("a/random/summary.jsonl")),
        read(dir.path().join("b/random/summary.jsonl"))
    );
}

#[test]
fn seed_precedence_file_env_flag() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "[run]\nbase_seed = 100\nepisodes = 1\n[environment]\nhorizon = 5\n",
    )
    .unwrap();
    let seed_of = |extra: &[&str], env: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_trackgym"));
        cmd.args(["run", "-c", "c.toml", "-o", "s"])
            .args(extra)
            .current_dir(dir.path());
        match env {
            Some(v) => cmd.env("TRACKGYM_SEED", v),
            None => cmd.env_remove("TRACKGYM_SEED"),
        };
        assert!(cmd.output().unwrap().status.success());
        let line = read(dir.path().join("s/coverage/summary.jsonl"));
        serde_json::from_str::<serde_json::Value>(line.trim()).unwrap()["seed"]
            .as_u64()
            .unwrap()
    };
    assert_eq!(seed_of(&[], None), 100);
    assert_eq!(seed_of(&[], Some("7")), 7);
    assert_eq!(seed_of(&["--seed", "3"], Some("7")), 3);
}

#[test]
fn zero_episodes_succeeds_with_empty_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = trackgym(&["run", "--episodes", "0", "-o", "z"], dir.path());
    assert!(out.status.success());
    assert_eq!(read(dir.path().join("z/coverage/summary.jsonl")), "");
}

#[test]
fn validate_reports_nearest_key_and_ranges() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("good.toml"), "").unwrap();
    fs::write(dir.path().join("typo.toml"), "[tracker]\ndelter_threshold = 10\n").unwrap();
    fs::write(dir.path().join("range.toml"), "[tracker]\ndeleter_threshold = -1\n").unwrap();
    fs::write(dir.path().join("syntax.toml"), "[tracker\n").unwrap();

    assert!(trackgym(&["validate", "good.toml"], dir.path()).status.success());

    let typo = trackgym(&["validate", "typo.toml"], dir.path());
    assert_eq!(typo.status.code(), Some(1));
    let msg = stdout(&typo);
    assert!(
        msg.contains("line 2") && msg.contains("delter_threshold") && msg.contains("deleter_threshold"),
        "{msg}"
    );

    let range = trackgym(&["validate", "range.toml"], dir.path());
    assert_eq!(range.status.code(), Some(1));
    assert!(stdout(&range).contains("deleter_threshold"));

    let syntax = trackgym(&["validate", "syntax.toml"], dir.path());
    assert_eq!(syntax.status.code(), Some(1));
    assert!(stdout(&syntax).contains("line 1"));

    assert_eq!(
        trackgym(&["validate", "missing.toml"], dir.path()).status.code(),
        Some(1)
    );
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["run", "--set", "tracker.nope=1"][..],
        &["run", "--set", "no-equals-sign"][..],
        &["run", "--set", "scenario.detection_probability=1.5"][..],
        &["run", "-c", "absent.toml"][..],
    ] {
        let out = trackgym(args, dir.path());
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
    let bad_env = Command::new(env!("CARGO_BIN_EXE_trackgym"))
        .args(["run", "--episodes", "0", "-o", "x"])
        .env("TRACKGYM_SEED", "not-a-number")
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(1));
}

#[test]
fn unusable_output_directory_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("blocker"), "").unwrap();
    let out = trackgym(
        &[
            "run",
            "--episodes",
            "1",
            "--set",
            "environment.horizon=2",
            "-o",
            "blocker",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("blocker"));
}

#[test]
fn log_states_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let out = trackgym(
        &[
            "run",
            "--policy",
            "random",
            "--episodes",
            "1",
            "--set",
            "environment.horizon=30",
            "--log-states",
            "--plots",
            "-o",
            "o",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let base = dir.path().join("o/random");
    let truth = read(base.join("states/truth_0000.csv"));
    assert_eq!(truth.lines().next(), Some("step,target_id,x,y,z,vx,vy,vz"));
    assert_eq!(truth.lines().count(), 1 + 30 * 5);
    let tracks = read(base.join("states/tracks_0000.csv"));
    assert_eq!(tracks.lines().next().unwrap().split(',').count(), 2 + 6 + 21);
    for metric in ["gospa_distance", "cov_norm_sum", "t2t", "reward"] {
        assert!(read(base.join(format!("plots/{metric}.svg"))).starts_with("<svg"));
    }
}

#[test]
fn sweep_emits_one_summary_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = trackgym(
        &[
            "sweep",
            "--param",
            "scenario.target_count",
            "--values",
            "1,3",
            "--policy",
            "static,coverage",
            "--episodes",
            "2",
            "--set",
            "environment.horizon=20",
            "-o",
            "sw",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = read(dir.path().join("sw/sweep.jsonl"));
    let parsed: Vec<serde_json::Value> = lines.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(parsed.len(), 4);
    assert_eq!(parsed[0]["value"], "1");
    assert_eq!(parsed[3]["policy"], "coverage");
    assert!(dir
        .path()
        .join("sw/scenario.target_count=3/static/summary.jsonl")
        .exists());

    let bad = trackgym(
        &[
            "sweep",
            "--param",
            "scenario.target_count",
            "--values",
            "1,x",
            "-o",
            "b",
        ],
        dir.path(),
    );
    assert_eq!(bad.status.code(), Some(1));
    assert!(!dir.path().join("b").exists());
}
