use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_yearslost"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .env_remove("YEARSLOST_THREADS")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_object(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("stderr is not a JSON error: {text}"))
}

fn workspace() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &[
            "simulate",
            "--dataset",
            "400",
            "--seed",
            "7",
            "--out",
            "d.csv",
        ],
    );
    let data = dir.path().join("d.csv");
    (dir, data)
}

fn csv_body(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn ate_writes_one_report_with_provenance() {
    let (dir, _) = workspace();
    let stdout = ok(
        dir.path(),
        &[
            "ate", "--data", "d.csv", "--j", "1", "--tstar", "30", "--k", "2", "--out", "r.json",
        ],
    );
    assert!(stdout.is_empty());
    let v: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(v["command"], "ate");
    assert_eq!(v["seed"], 1);
    assert_eq!(v["config"]["estimator"]["k"], 2);
    let r = &v["result"];
    assert_eq!(r["estimand"], "ATE");
    assert_eq!(r["cause"], 1);
    assert_eq!(r["if_values"].as_array().unwrap().len(), 400);
    let (p, lo, hi) = (
        r["point"].as_f64().unwrap(),
        r["ci_lower"].as_f64().unwrap(),
        r["ci_upper"].as_f64().unwrap(),
    );
    assert!(lo < p && p < hi && r["se"].as_f64().unwrap() > 0.0);
}

#[test]
fn identical_invocations_are_byte_identical() {
    let (dir, _) = workspace();
    let args = |out: &'static str| {
        [
            "ate", "--data", "d.csv", "--k", "3", "--seed", "11", "--out", out,
        ]
    };
    ok(dir.path(), &args("a.json"));
    ok(dir.path(), &args("b.json"));
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
    ok(
        dir.path(),
        &[
            "simulate",
            "--dataset",
            "400",
            "--seed",
            "7",
            "--out",
            "d2.csv",
        ],
    );
    assert_eq!(
        std::fs::read(dir.path().join("d.csv")).unwrap(),
        std::fs::read(dir.path().join("d2.csv")).unwrap()
    );
}

#[test]
fn rank_is_ordered_and_matches_vim() {
    let (dir, _) = workspace();
    let table = csv_body(&ok(dir.path(), &["rank", "--data", "d.csv", "--k", "3"]));
    assert_eq!(table[0][..4], ["rank", "l", "covariate", "omega"]);
    let p_col = table[0].iter().position(|h| h == "p_value").unwrap();
    let rows = &table[1..];
    assert_eq!(rows.len(), 4);
    let p: Vec<f64> = rows.iter().map(|r| r[p_col].parse().unwrap()).collect();
    assert!(p.windows(2).all(|w| w[0] <= w[1]), "{p:?}");
    for row in rows {
        let single = csv_body(&ok(
            dir.path(),
            &[
                "vim", "--data", "d.csv", "--k", "3", "--l", &row[1], "--format", "csv",
            ],
        ));
        assert_eq!(single[1][1..], row[1..], "covariate {}", row[1]);
    }
}

#[test]
fn precedence_is_cli_over_file_over_defaults() {
    let (dir, _) = workspace();
    std::fs::write(
        dir.path().join("cfg.toml"),
        "seed = 5\n[estimator]\nk = 3\ntstar = 20.0\n",
    )
    .unwrap();
    let v: Value = serde_json::from_str(&ok(
        dir.path(),
        &[
            "ate", "--data", "d.csv", "--config", "cfg.toml", "--seed", "9",
        ],
    ))
    .unwrap();
    let e = &v["config"]["estimator"];
    assert_eq!(v["seed"], 9);
    assert_eq!(e["seed"], 9);
    assert_eq!(e["k"], 3);
    assert_eq!(e["tstar"], 20.0);
    assert_eq!(e["eta"], 0.01);
    assert_eq!(v["result"]["tstar"], 20.0);
}

#[test]
fn usage_errors_exit_2_without_writing() {
    let (dir, _) = workspace();
    let cases: Vec<Vec<&str>> = vec![
        vec!["ate"],
        vec!["vim", "--data", "d.csv", "--l", "9", "--out", "x.json"],
        vec!["ate", "--data", "d.csv", "--k", "0", "--out", "x.json"],
        vec!["ate", "--data", "d.csv", "--j", "3", "--out", "x.json"],
        vec![
            "ate", "--data", "d.csv", "--config", "bad.toml", "--out", "x.json",
        ],
        vec!["frobnicate"],
    ];
    std::fs::write(dir.path().join("bad.toml"), "[estimator]\nfolds = 3\n").unwrap();
    for args in cases {
        let out = run(dir.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let e = error_object(&out);
        assert_eq!(e["error"]["kind"], "usage", "{args:?}");
        assert_eq!(e["error"]["code"], 2);
        assert!(out.stdout.is_empty());
    }
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn input_errors_exit_3() {
    let (dir, _) = workspace();
    std::fs::write(
        dir.path().join("bad.csv"),
        "time,event,treatment,x\n1.0,7,0,0.5\n2.0,1,1,0.1\n",
    )
    .unwrap();
    for args in [
        vec!["ate", "--data", "missing.csv"],
        vec!["rank", "--data", "bad.csv"],
        vec!["ate", "--data", "d.csv", "--config", "none.toml"],
    ] {
        let out = run(dir.path(), &args);
        assert_eq!(out.status.code(), Some(3), "{args:?}");
        assert_eq!(error_object(&out)["error"]["kind"], "input");
    }
}

#[test]
fn compute_errors_exit_4_and_leave_no_file() {
    let (dir, _) = workspace();
    // Continuous covariates leave the plug-in cells empty.
    let out = run(
        dir.path(),
        &[
            "fd-check", "--data", "d.csv", "--row", "1", "--out", "fd.json",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_object(&out)["error"]["kind"], "compute");
    assert!(!dir.path().join("fd.json").exists());
}

#[test]
fn fd_check_on_discrete_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("time,event,treatment,x\n");
    for i in 0..240u32 {
        let x = i % 2;
        let a = (i / 2) % 2;
        let t = 1 + (i * 7) % 5 + a + x;
        let event = [0, 1, 1, 2, 1][(i % 5) as usize];
        csv.push_str(&format!("{t},{event},{a},{x}\n"));
    }
    std::fs::write(dir.path().join("disc.csv"), csv).unwrap();
    let v: Value = serde_json::from_str(&ok(
        dir.path(),
        &[
            "fd-check",
            "--data",
            "disc.csv",
            "--row",
            "5",
            "--tstar",
            "5",
            "--epsilon",
            "1e-5",
        ],
    ))
    .unwrap();
    let r = &v["result"];
    let (fd, eif, gap) = (
        r["fd"].as_f64().unwrap(),
        r["eif"].as_f64().unwrap(),
        r["gap"].as_f64().unwrap(),
    );
    assert!((fd - eif).abs() - gap <= 1e-12);
    assert!(gap <= 1e-2 * (1.0 + eif.abs()), "{r}");
}

#[test]
fn oracle_reports_psi_with_mc_error() {
    let dir = tempfile::tempdir().unwrap();
    let v: Value = serde_json::from_str(&ok(
        dir.path(),
        &["oracle", "--tstar", "30", "--draws", "4000", "--seed", "3"],
    ))
    .unwrap();
    let r = &v["result"];
    let psi = r["psi"][0].as_f64().unwrap();
    let se = r["psi_se"][0].as_f64().unwrap();
    assert!(se > 0.0 && se < 0.1);
    assert!((psi + 9.64).abs() <= 5.0 * se + 0.01, "{psi} ± {se}");
    assert_eq!(r["omega"].as_array().unwrap().len(), 4);
}

#[test]
fn simulate_study_as_csv() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("sim.toml"),
        "[simulate]\nmethods = [\"cor\", \"corCF\"]\nfolds = 2\nn_grid = [300]\nreps = 3\nvim_covariates = [1]\n\
         truth = { psi = -9.64, omega = [4.95, 3.14, 0.74, 0.0] }\n",
    )
    .unwrap();
    let text = ok(
        dir.path(),
        &[
            "simulate",
            "--config",
            "sim.toml",
            "--format",
            "csv",
            "--threads",
            "1",
        ],
    );
    assert!(text.starts_with("# yearslost simulate seed=1 config="));
    let t = csv_body(&text);
    assert_eq!(t[0][..3], ["method", "n", "reps"]);
    assert!(t[0].contains(&"reject_X1".to_string()));
    let methods: Vec<&str> = t[1..].iter().map(|r| r[0].as_str()).collect();
    assert_eq!(methods, ["cor", "corCF"]);
    assert!(t[1..].iter().all(|r| r[1] == "300" && r[2] == "3"));
}

#[test]
fn threads_from_env_and_flag() {
    let (dir, _) = workspace();
    let a = bin()
        .current_dir(dir.path())
        .args(["ate", "--data", "d.csv", "--k", "2"])
        .env("YEARSLOST_THREADS", "1")
        .output()
        .unwrap();
    assert!(a.status.success());
    let b = ok(
        dir.path(),
        &["ate", "--data", "d.csv", "--k", "2", "--threads", "2"],
    );
    assert_eq!(String::from_utf8(a.stdout).unwrap(), b);
    assert_eq!(
        run(dir.path(), &["ate", "--data", "d.csv", "--threads", "0"])
            .status
            .code(),
        Some(2)
    );
}
