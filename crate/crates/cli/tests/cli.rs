use std::path::Path;
use std::process::{Command, Output};

fn ted(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ted")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn simulate(dir: &Path, name: &str, seed: &str) {
    let o = ted(dir, &["simulate", "--p", "8", "--n-all", "800", "--seed", seed, "--out", name, "--truth", &format!("truth_{name}")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_writes_panel_and_truth() {
    let dir = tempfile::tempdir().unwrap();
    let o = ted(dir.path(), &["simulate", "--p", "5", "--n-all", "400", "--n", "200", "--out", "panel.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let panel = std::fs::read_to_string(dir.path().join("panel.csv")).unwrap();
    let mut lines = panel.lines();
    assert_eq!(lines.next().unwrap(), "time,Y,X1,X2,X3,X4,X5");
    assert_eq!(lines.count(), 201);
    let truth = std::fs::read_to_string(dir.path().join("truth.csv")).unwrap();
    assert!(truth.starts_with("coordinate,integrated_beta\nX1,"));
    assert_eq!(truth.lines().count(), 6);
}

#[test]
fn estimate_is_deterministic_for_every_method() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "panel.csv", "9");
    for method in ["ted", "akx", "akx-six", "lasso"] {
        let run = |out: &str| {
            let o = ted(dir.path(), &["estimate", "--input", "panel.csv", "--method", method, "--output", out]);
            assert_eq!(code(&o), 0, "{method}: {}", String::from_utf8_lossy(&o.stderr));
            std::fs::read(dir.path().join(out)).unwrap()
        };
        let a = run("a.csv");
        assert_eq!(a, run("b.csv"), "{method}");
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("coordinate,raw,thresholded\n"));
        assert_eq!(text.lines().count(), if method == "akx-six" { 7 } else { 9 });
    }
}

#[test]
fn same_seed_same_panel() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "a.csv", "5");
    simulate(dir.path(), "b.csv", "5");
    simulate(dir.path(), "c.csv", "6");
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_ne!(read("a.csv"), read("c.csv"));
}

#[test]
fn exit_codes_follow_error_kind() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "panel.csv", "1");
    assert_eq!(code(&ted(dir.path(), &["--help"])), 0);
    assert_eq!(code(&ted(dir.path(), &["--version"])), 0);
    assert_eq!(code(&ted(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&ted(dir.path(), &["estimate", "--input", "panel.csv", "--output", "o.csv", "--c-tau", "-1"])), 1);
    assert_eq!(code(&ted(dir.path(), &["estimate", "--input", "panel.csv", "--output", "o.csv", "--method", "ols"])), 1);
    assert_eq!(code(&ted(dir.path(), &["estimate", "--input", "missing.csv", "--output", "o.csv"])), 2);
    std::fs::write(dir.path().join("bad.csv"), "time,Y,X1\n0,0,0\n1,0.1,oops\n").unwrap();
    assert_eq!(code(&ted(dir.path(), &["estimate", "--input", "bad.csv", "--output", "o.csv"])), 2);
    std::fs::write(dir.path().join("bad.toml"), "[tuning]\nc_lamda = 1\n").unwrap();
    assert_eq!(code(&ted(dir.path(), &["--config", "bad.toml", "estimate", "--input", "panel.csv", "--output", "o.csv"])), 1);
    assert_eq!(code(&ted(dir.path(), &["estimate", "--input", "panel.csv", "--output", "no/such/dir/o.csv"])), 2);
    assert!(!dir.path().join("o.csv").exists());
}

#[test]
fn command_line_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "panel.csv", "2");
    std::fs::write(dir.path().join("cfg.toml"), "[tuning]\nc_lambda = 0.5\nc_tau = 0.5\nc_h = 0.0\n").unwrap();
    let est = |args: &[&str], out: &str| {
        let mut all = vec!["estimate", "--input", "panel.csv", "--output", out];
        all.extend_from_slice(args);
        let o = ted(dir.path(), &all);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(dir.path().join(out)).unwrap()
    };
    let from_file = est(&["--config", "cfg.toml"], "f.csv");
    let explicit = est(&["--c-lambda", "0.5", "--c-tau", "0.5", "--c-h", "0"], "e.csv");
    let overridden = est(&["--config", "cfg.toml", "--c-lambda", "2"], "o.csv");
    let explicit2 = est(&["--c-lambda", "2", "--c-tau", "0.5", "--c-h", "0"], "e2.csv");
    assert_eq!(from_file, explicit);
    assert_eq!(overridden, explicit2);
    assert_ne!(from_file, overridden);
}

#[test]
fn tune_writes_selection_tables() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path(), "p1.csv", "3");
    simulate(dir.path(), "p2.csv", "4");
    let o = ted(dir.path(), &["tune", "--input", "p1.csv", "p2.csv", "--output", "tune.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("tune.csv")).unwrap();
    assert!(text.starts_with("period,parameter,candidate,loss,selected\n"));
    for (period, param) in [("1", "c_lambda"), ("1", "c_tau"), ("2", "c_lambda"), ("2", "c_tau"), ("all", "c_h")] {
        let chosen = text.lines().filter(|l| l.starts_with(&format!("{period},{param},")) && l.ends_with(",true")).count();
        assert_eq!(chosen, 1, "{period} {param}");
    }
    // A grid for c_h with one period cannot be resolved.
    let o = ted(dir.path(), &["tune", "--input", "p1.csv", "--c-h", "0,0.5", "--output", "t1.csv"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn benchmark_and_report_do_not_depend_on_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), "[dgp]\np = 6\nn_all = 400\n").unwrap();
    let run = |jobs: &str, out: &str| {
        let o = ted(
            dir.path(),
            &[
                "--config", "small.toml", "--jobs", jobs, "--seed", "17", "benchmark", "--reps", "2", "--n-values", "100,200",
                "--mspe-periods", "2", "--c-h", "0,0.3", "--output", out, "--records", &format!("rec_{out}"),
            ],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        (std::fs::read(dir.path().join(out)).unwrap(), std::fs::read(dir.path().join(format!("rec_{out}"))).unwrap())
    };
    let one = run("1", "r1.csv");
    let eight = run("8", "r8.csv");
    assert_eq!(one, eight);
    let report = String::from_utf8(one.0).unwrap();
    assert!(report.starts_with("method,regime,n,reps,failures,max_mean,"));
    assert_eq!(report.lines().count(), 1 + 3 * 2 * 2);

    let o = ted(dir.path(), &["report", "--input", "r1.csv", "--output", "plot.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let plot = std::fs::read_to_string(dir.path().join("plot.csv")).unwrap();
    assert_eq!(plot.lines().count(), 1 + 3 * 2 * 2 * 3);
}
