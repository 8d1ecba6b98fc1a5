use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn fcfnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fcfnn"))
        .args(args)
        .env_remove("FCFNN_SCHEMA")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = fcfnn(&["generate", "--rows", "936", "--seed", "7", "--out", p(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    assert_eq!(String::from_utf8(bytes).unwrap().lines().count(), 937);
}

#[test]
fn missing_required_flags_are_usage_errors() {
    let o = fcfnn(&["train", "--seed", "1", "--out", "m.json"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("--data"), "{err}");
    assert!(err.contains("Usage"), "{err}");

    let o = fcfnn(&["generate", "--out", "x.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--seed"));

    let o = fcfnn(&[]);
    assert_eq!(o.status.code(), Some(1));
    let o = fcfnn(&["bogus"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_and_version_exit_zero() {
    for args in [&["--help"][..], &["train", "--help"], &["--version"]] {
        let o = fcfnn(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}");
        assert!(!o.stdout.is_empty());
    }
    let help = stdout(&fcfnn(&["train", "--help"]));
    for flag in ["--vs", "--bs", "--epochs", "--optimizer", "--activation-preset", "--resume", "FCFNN_SCHEMA"] {
        assert!(help.contains(flag), "missing {flag}");
    }
}

#[test]
fn bad_values_and_bad_files_use_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let model = dir.path().join("m.json");
    assert!(fcfnn(&["generate", "--seed", "1", "--rows", "120", "--out", p(&data)]).status.success());

    let o = fcfnn(&["train", "--data", p(&data), "--seed", "1", "--out", p(&model), "--vs", "1.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: kind=usage message=\""));

    let o = fcfnn(&["train", "--data", p(&dir.path().join("none.csv")), "--seed", "1", "--out", p(&model)]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error: kind=io message="), "{err}");

    std::fs::write(&model, "{\"format_version\": 9, \"checksum\": \"\", \"body\": {}}").unwrap();
    let o = fcfnn(&["inspect", "--model", p(&model)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kind=unsupported_version"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "Age,F01\n20,1\n").unwrap();
    let o = fcfnn(&["train", "--data", p(&bad), "--seed", "1", "--out", p(&model)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("kind=missing_columns"));
}

#[test]
fn schema_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let schema = dir.path().join("s.json");
    let model = dir.path().join("m.json");
    let o = fcfnn(&[
        "generate", "--seed", "3", "--rows", "60", "--classes", "3", "--features", "4", "--out", p(&data),
        "--schema-out", p(&schema),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = Command::new(env!("CARGO_BIN_EXE_fcfnn"))
        .args(["train", "--data", p(&data), "--seed", "3", "--out", p(&model), "--hidden", "8", "--epochs", "3", "--quiet"])
        .env("FCFNN_SCHEMA", &schema)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let info = stdout(&fcfnn(&["inspect", "--model", p(&model)]));
    assert!(info.contains("architecture: 4-8-3"), "{info}");
}

#[test]
fn end_to_end_smoke_under_a_minute() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("synth.csv");
    let model = dir.path().join("model.json");
    let hist = dir.path().join("hist.csv");
    let out = dir.path().join("ranked.csv");

    let o = fcfnn(&["generate", "--rows", "936", "--seed", "42", "--out", p(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = fcfnn(&[
        "train", "--data", p(&data), "--vs", "0.1", "--bs", "20", "--epochs", "50", "--seed", "42", "--preset",
        "compact", "--out", p(&model), "--history", p(&hist),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let progress = stdout(&o);
    assert_eq!(progress.lines().count(), 50);
    assert!(progress.lines().last().unwrap().starts_with("epoch=50 train_acc="));
    assert_eq!(std::fs::read_to_string(&hist).unwrap().lines().count(), 51);

    let o = fcfnn(&["evaluate", "--model", p(&model), "--data", p(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = stdout(&o);
    let acc: f64 = line.split_whitespace().next().unwrap().trim_start_matches("accuracy=").parse().unwrap();
    assert!(acc > 0.9, "{line}");

    let o = fcfnn(&["predict", "--model", p(&model), "--data", p(&data), "--out", p(&out), "--report"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ranked = std::fs::read_to_string(&out).unwrap();
    assert_eq!(ranked.lines().count(), 937);
    assert!(ranked.lines().next().unwrap().ends_with("rank3_code,rank3_prob"));
    let report = stdout(&o);
    assert_eq!(report.lines().count(), 936);
    assert!(report.starts_with("1: "));
    assert!(report.lines().next().unwrap().matches('%').count() == 3);

    let o = fcfnn(&["inspect", "--model", p(&model), "--probe", p(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let info = stdout(&o);
    assert!(info.contains("architecture: 35-64-29"));
    assert!(info.contains("parameters: 4189"));
    assert!(info.contains("epochs_trained: 50"));
    assert!(info.contains("dead_relu total: "));

    assert!(started.elapsed() < Duration::from_secs(60), "{:?}", started.elapsed());
}

#[test]
fn resumed_runs_append_history_and_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    assert!(fcfnn(&["generate", "--seed", "5", "--rows", "200", "--out", p(&data)]).status.success());
    let train = |extra: &[&str], model: &Path, hist: &Path| {
        let mut args = vec![
            "train", "--data", p(&data), "--seed", "5", "--hidden", "16", "--bs", "10", "--no-wall-time", "--quiet",
            "--out", p(model), "--history", p(hist),
        ];
        args.extend_from_slice(extra);
        let o = fcfnn(&args);
        assert!(o.status.success(), "{}", stderr(&o));
    };
    let m = dir.path().join("m.json");
    let h = dir.path().join("h.csv");
    train(&["--epochs", "3"], &m, &h);
    train(&["--epochs", "2", "--resume", p(&m)], &m, &h);
    let text = std::fs::read_to_string(&h).unwrap();
    let epochs: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(epochs, ["1", "2", "3", "4", "5"]);
    assert!(stdout(&fcfnn(&["inspect", "--model", p(&m)])).contains("epochs_trained: 5"));

    // Same command twice, including thread mode, gives the same bytes.
    let m2 = dir.path().join("m2.json");
    let h2 = dir.path().join("h2.csv");
    let m3 = dir.path().join("m3.json");
    let h3 = dir.path().join("h3.csv");
    train(&["--epochs", "3"], &m2, &h2);
    train(&["--epochs", "3", "--sequential"], &m3, &h3);
    assert_eq!(std::fs::read(&m2).unwrap(), std::fs::read(&m3).unwrap());
    assert_eq!(std::fs::read(&h2).unwrap(), std::fs::read(&h3).unwrap());
}
