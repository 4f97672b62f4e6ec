use std::path::Path;
use std::process::{Command, Output};

fn longsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_longsynth")).args(args).output().unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn csv_rows(path: &str) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn bound_prints_reference_values() {
    let out = longsynth(&["bound", "--T", "12", "--k", "3", "--rho", "0.005", "--beta-target", "0.01"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success());
    assert!(text.contains("n_pad = 135"), "{text}");
    assert!(text.contains("additive_bound = 123.39"), "{text}");
    assert!(text.contains("epsilon = 0.5306"), "{text}");
}

#[test]
fn noiseless_window_release_matches_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "run");
    let status = longsynth(&[
        "synth-window", "--simulate", "bernoulli:0.4", "--n", "400", "--T", "6", "--k", "2",
        "--reps", "3", "--seed", "4", "--noiseless", "--n-pad", "5", "--out", &out,
    ]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    for row in csv_rows(&format!("{out}/summary.csv")) {
        let truth: f64 = row[2].parse().unwrap();
        let mean: f64 = row[3].parse().unwrap();
        assert!((truth - mean).abs() < 1e-12, "{row:?}");
    }
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(format!("{out}/metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["schema"], 1);
    assert_eq!(meta["calibration"]["n_pad"], 5);
    assert_eq!(meta["manifest"]["k"], 2);
    assert_eq!(meta["horizon"], 6);
    assert_eq!(meta["manifest"]["rho"], 0.005);
    assert_eq!(meta["manifest"]["seed"], 4);
    let synthetic = std::fs::read_to_string(format!("{out}/synthetic.csv")).unwrap();
    assert_eq!(synthetic.lines().count(), 400 + 4 * 5);
}

#[test]
fn csv_input_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "data.csv");
    std::fs::write(&data, "m1,m2,m3\n0.5,1.5,0.2\n1.1,0.9,,\n2,2,2\n").unwrap();
    let queries = p(dir.path(), "q.json");
    std::fs::write(&queries, r#"[{"kind":"cum","b":1},{"kind":"window","s":"1","t":1}]"#).unwrap();
    // the second data row has four cells: not rectangular
    let out = longsynth(&["eval", "--input", &data, "--header", "--threshold", "1", "--queries", &queries]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(&data, "m1,m2,m3\n0.5,1.5,0.2\n1.1,,0.3\n2,2,2\n").unwrap();
    let out = longsynth(&["eval", "--input", &data, "--header", "--threshold", "1", "--queries", &queries]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "query,t,value,supported");
    assert_eq!(lines[1], "cum:1,1,0.5,true");
    assert_eq!(lines[3], "cum:1,3,0.5,true");
    assert_eq!(lines[4], "window:1,1,0.5,true");
    assert!(String::from_utf8(out.stderr).unwrap().contains("dropped 1 rows"));
}

#[test]
fn eval_refuses_long_windows_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "data.csv");
    std::fs::write(&data, "1,0,1,1\n0,0,1,1\n").unwrap();
    let queries = p(dir.path(), "q.json");
    std::fs::write(&queries, r#"[{"kind":"window","s":"011","t":4}]"#).unwrap();
    let out = longsynth(&["eval", "--input", &data, "--queries", &queries, "--k", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("unsupported window"));
    let out = longsynth(&["eval", "--input", &data, "--queries", &queries, "--k", "2", "--force-window"]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("window:011,4,1,false"));
}

#[test]
fn forced_queries_are_tagged_in_summary() {
    let dir = tempfile::tempdir().unwrap();
    let queries = p(dir.path(), "q.json");
    std::fs::write(&queries, r#"[{"kind":"window","s":"0110","t":6},{"kind":"window","s":"10","t":6}]"#).unwrap();
    let out = p(dir.path(), "run");
    let status = longsynth(&[
        "synth-window", "--simulate", "bernoulli:0.5", "--n", "300", "--T", "6", "--k", "3",
        "--rho", "1", "--queries", &queries, "--force-window", "--out", &out,
    ]);
    assert!(status.status.success());
    let rows = csv_rows(&format!("{out}/summary.csv"));
    assert_eq!(&rows[0][10], "false");
    assert_eq!(&rows[1][10], "true");
}

#[test]
fn all_failed_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "run");
    let status = longsynth(&[
        "synth-window", "--simulate", "all-ones", "--n", "50", "--T", "6", "--k", "3",
        "--rho", "0.001", "--n-pad", "0", "--reps", "5", "--out", &out,
    ]);
    assert_eq!(status.status.code(), Some(3));
    assert_eq!(csv_rows(&format!("{out}/failures.csv")).len(), 5);
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "run");
    let missing = p(dir.path(), "missing.csv");
    for args in [
        vec!["synth-window", "--input", missing.as_str(), "--out", out.as_str()],
        vec!["synth-window", "--simulate", "zipf", "--out", out.as_str()],
        vec!["synth-window", "--simulate", "all-ones", "--n", "10", "--T", "4", "--k", "5", "--out", out.as_str()],
        vec!["synth-cumulative", "--out", out.as_str()],
    ] {
        assert_eq!(longsynth(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn cumulative_release_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "run");
    let status = longsynth(&[
        "synth-cumulative", "--simulate", "markov", "--n", "600", "--T", "5", "--rho", "0.1",
        "--reps", "4", "--seed", "2", "--out", &out,
    ]);
    assert!(status.status.success());
    let answers = csv_rows(&format!("{out}/answers.csv"));
    assert_eq!(answers.len(), 4 * 15);
    let errors = csv_rows(&format!("{out}/errors.csv"));
    assert!(errors.iter().any(|r| &r[1] == "max_error" && r[2].is_empty()));
    assert!(Path::new(&format!("{out}/timing.json")).exists());
}
