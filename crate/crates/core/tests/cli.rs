use std::path::Path;
use std::process::{Command, Output};

fn sdld(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdld"))
        .args(args)
        .current_dir(cwd)
        .env("SDLD_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn last_stderr_line(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().expect("stderr has a line"))
        .expect("machine-readable line")
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

fn data_rows(csv: &[u8]) -> usize {
    String::from_utf8_lossy(csv)
        .lines()
        .filter(|l| !l.starts_with('#'))
        .count()
        - 1
}

#[test]
fn simulate_writes_requested_subjects_with_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = sdld(
        &["simulate", "--n", "12000", "--seed", "1", "--out", "d.csv"],
        dir.path(),
    );
    ok(&out);
    let csv = read(dir.path().join("d.csv"));
    assert_eq!(data_rows(&csv), 12_000);
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("# sdld"));
    assert!(text.lines().any(|l| l.starts_with("# config: {")));
    let schema = std::fs::read_to_string(dir.path().join("d.schema.toml")).unwrap();
    assert!(schema.contains("horizon = 1"));

    ok(&sdld(
        &[
            "simulate",
            "--n",
            "12000",
            "--seed",
            "1",
            "--out",
            "again.csv",
        ],
        dir.path(),
    ));
    assert_eq!(
        read(dir.path().join("d.csv")),
        read(dir.path().join("again.csv"))
    );
}

#[test]
fn discover_is_byte_deterministic_and_estimate_reads_its_tree() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&sdld(
        &["simulate", "--n", "4000", "--seed", "3", "--out", "d.csv"],
        p,
    ));
    let args = |out: &'static str| {
        vec![
            "discover",
            "--data",
            "d.csv",
            "--out",
            out,
            "--bootstrap",
            "8",
            "--keep-draws",
            "--seed",
            "9",
        ]
    };
    ok(&sdld(&args("a"), p));
    ok(&sdld(&args("b"), p));
    for f in [
        "tree.json",
        "report.json",
        "report.csv",
        "partition.csv",
        "draws.csv",
        "config.toml",
    ] {
        assert_eq!(
            read(p.join("a").join(f)),
            read(p.join("b").join(f)),
            "{f} differs"
        );
    }
    let report: serde_json::Value = serde_json::from_slice(&read(p.join("a/report.json"))).unwrap();
    assert_eq!(report["config"]["seed"], 9);
    let shares: f64 = report["report"]["leaves"]
        .as_array()
        .unwrap()
        .iter()
        .map(|l| l["share"].as_f64().unwrap())
        .sum();
    assert!((shares - 1.0).abs() < 1e-9);

    // the resolved configuration written by discover can be fed back in
    ok(&sdld(
        &[
            "discover",
            "--data",
            "d.csv",
            "--out",
            "c",
            "--config",
            "a/config.toml",
            "--keep-draws",
        ],
        p,
    ));
    assert_eq!(read(p.join("a/report.csv")), read(p.join("c/report.csv")));

    let est = sdld(
        &[
            "estimate",
            "--data",
            "d.csv",
            "--tree",
            "a/tree.json",
            "--interim-outcome",
            "y1",
            "--out",
            "e.csv",
        ],
        p,
    );
    ok(&est);
    let text = std::fs::read_to_string(p.join("e.csv")).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    let leaves = report["report"]["leaves"].as_array().unwrap().len();
    assert_eq!(rows.len(), 1 + 2 * (1 + leaves));
    assert!(rows[1].starts_with("0,,all,4000,"));
}

#[test]
fn invalid_flags_exit_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&sdld(&["simulate", "--n", "300", "--out", "d.csv"], p));
    for bad in [
        vec![
            "discover", "--data", "d.csv", "--out", "o", "--level", "1.5",
        ],
        vec![
            "discover",
            "--data",
            "d.csv",
            "--out",
            "o",
            "--fractions",
            "0.5,0.5,0.5",
        ],
        vec![
            "discover",
            "--data",
            "d.csv",
            "--out",
            "o",
            "--estimator",
            "magic",
        ],
        vec!["replicate", "--out", "o", "--reps", "0"],
        vec!["simulate", "--n", "0", "--out", "o/x.csv"],
        vec!["bogus"],
    ] {
        let out = sdld(&bad, p);
        assert_eq!(out.status.code(), Some(2), "{bad:?}");
        assert_eq!(last_stderr_line(&out)["error"], "usage");
        assert!(!p.join("o").exists(), "{bad:?} left output behind");
    }
    std::fs::write(p.join("c.toml"), "lambda = 2.0\nnot_a_key = 1\n").unwrap();
    let out = sdld(
        &[
            "discover", "--data", "d.csv", "--out", "o", "--config", "c.toml",
        ],
        p,
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!p.join("o").exists());
}

#[test]
fn data_and_estimation_failures_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = sdld(&["discover", "--data", "missing.csv", "--out", "o"], p);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(last_stderr_line(&out)["exit_code"], 3);

    // nobody is ever treated, so the always-treated mean cannot be estimated
    std::fs::write(
        p.join("u.schema.toml"),
        "horizon = 0\nbaseline = [\"x\"]\ntime_varying = [[]]\n",
    )
    .unwrap();
    let mut csv = String::from("subject_id,l0_x,a_0,c_0,y\n");
    for i in 0..20 {
        csv.push_str(&format!("{i},{},0,0,{}\n", i % 3, i % 5));
    }
    std::fs::write(p.join("u.csv"), csv).unwrap();
    let out = sdld(&["estimate", "--data", "u.csv", "--out", "e.csv"], p);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(last_stderr_line(&out)["error"], "estimation");
    assert!(!p.join("e.csv").exists());

    std::fs::write(p.join("u.csv"), "subject_id,l0_x,a_0,c_0,y\n1,abc,0,0,1\n").unwrap();
    let out = sdld(&["estimate", "--data", "u.csv", "--out", "e.csv"], p);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn replicate_log_is_deterministic_unless_timed() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let args = |out: &'static str, timing: bool| {
        let mut a = vec![
            "replicate",
            "--reps",
            "2",
            "--n-build",
            "1500",
            "--n-validate",
            "500",
            "--eval-size",
            "100",
            "--seed",
            "4",
            "--out",
            out,
        ];
        if timing {
            a.push("--timing");
        }
        a
    };
    ok(&sdld(&args("a", false), p));
    ok(&sdld(&args("b", false), p));
    assert_eq!(
        read(p.join("a/replicates.csv")),
        read(p.join("b/replicates.csv"))
    );
    assert_eq!(
        read(p.join("a/metrics.json")),
        read(p.join("b/metrics.json"))
    );
    let log = std::fs::read_to_string(p.join("a/replicates.csv")).unwrap();
    let rows: Vec<&str> = log.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(
        rows[0],
        "replicate,seed,correct,size,noise,first_split,similarity,runtime_ms,error"
    );
    assert_eq!(rows.len(), 3);

    ok(&sdld(&args("t", true), p));
    let timed = std::fs::read_to_string(p.join("t/replicates.csv")).unwrap();
    let row: Vec<&str> = timed
        .lines()
        .filter(|l| !l.starts_with('#'))
        .nth(1)
        .unwrap()
        .split(',')
        .collect();
    assert!(row[7].parse::<u64>().is_ok());
    let metrics: serde_json::Value =
        serde_json::from_slice(&read(p.join("a/metrics.json"))).unwrap();
    assert_eq!(
        metrics["metrics"]["replicates"].as_u64().unwrap()
            + metrics["metrics"]["failed"].as_u64().unwrap(),
        2
    );
}

#[test]
fn thread_flag_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    ok(&sdld(
        &["--threads", "2", "simulate", "--n", "10", "--out", "d.csv"],
        dir.path(),
    ));
    let out = sdld(
        &["--threads", "0", "simulate", "--n", "10", "--out", "z.csv"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("z.csv").exists());
}
