//! Command-line behaviour: outputs, exit codes, configuration precedence and determinism.

use percgame::cli::{run, EXIT_NON_CONVERGENCE, EXIT_OK, EXIT_VALIDATION};
use serde_json::Value;
use std::fs;

struct Outcome {
    code: i32,
    stdout: String,
    stderr: String,
}

fn invoke(args: &[&str], env_seed: Option<&str>) -> Outcome {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let mut full = vec!["percgame"];
    full.extend_from_slice(args);
    let code = run(full, env_seed, &mut out, &mut err);
    Outcome {
        code,
        stdout: String::from_utf8(out).unwrap(),
        stderr: String::from_utf8(err).unwrap(),
    }
}

fn json(args: &[&str]) -> Value {
    let o = invoke(args, None);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    serde_json::from_str(&o.stdout).unwrap()
}

fn schema() -> jsonschema::Validator {
    let text = include_str!("../schema/output.schema.json");
    jsonschema::validator_for(&serde_json::from_str(text).unwrap()).unwrap()
}

const BINARY_TREE: [&str; 10] = [
    "--family", "dirac", "--m", "2", "--kappa", "3", "--p0", "0.9", "--p1", "0.05",
];

#[test]
fn solve_reports_table_values() {
    let mut args = vec!["solve"];
    args.extend(BINARY_TREE);
    let v = json(&args);
    let d = &v["D"];
    let want = [[0.985521946, 0.953909988], [0.827344951, 0.865247284]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((d[i][j].as_f64().unwrap() - want[i][j]).abs() < 1e-9);
            assert_eq!(v["verdicts"][i][j], "POSITIVE");
        }
    }
    assert_eq!(v["converged"], true);
}

#[test]
fn solve_csv_has_one_row_per_pair() {
    let mut args = vec!["solve", "--format", "csv"];
    args.extend(BINARY_TREE);
    let o = invoke(&args, None);
    assert_eq!(o.code, EXIT_OK);
    let lines: Vec<&str> = o.stdout.lines().collect();
    assert_eq!(lines[0], "i,j,l,w,d,verdict");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("1,1,"));
    assert!(lines[1].contains(",0.985521946,"));
    assert!(lines[3].contains("3.210265356e-6"));
}

#[test]
fn every_command_matches_schema() {
    let validator = schema();
    let runs: Vec<Vec<&str>> = vec![
        [vec!["solve"], BINARY_TREE.to_vec()].concat(),
        [vec!["fixed-points"], BINARY_TREE.to_vec()].concat(),
        vec![
            "check-kappa2",
            "--family",
            "poisson",
            "--lambda",
            "3",
            "--kappa",
            "2",
            "--p0",
            "0.5",
            "--p1",
            "0.2",
        ],
        vec![
            "check-kappa3",
            "--family",
            "poisson",
            "--lambda",
            "5",
            "--p0",
            "0.3",
            "--p1",
            "0.35",
        ],
        vec![
            "check-kappa3",
            "--family",
            "poisson",
            "--lambda",
            "5",
            "--p0",
            "0.3",
            "--p1",
            "0.35",
            "--count-fixed-points",
        ],
        vec![
            "check-special",
            "--family",
            "dirac",
            "--m",
            "2",
            "--alpha",
            "3",
        ],
        vec![
            "check-special",
            "--family",
            "poisson",
            "--lambda",
            "2",
            "--p0",
            "0",
            "--p1",
            "0.4",
        ],
        vec![
            "duration", "--family", "poisson", "--lambda", "50", "--kappa", "3", "--p0", "0.3",
            "--p1", "0.3",
        ],
        vec![
            "simulate",
            "--family",
            "dirac",
            "--m",
            "2",
            "--kappa",
            "2",
            "--p0",
            "0.8",
            "--p1",
            "0.1",
            "--horizon",
            "3",
            "--samples",
            "500",
        ],
        vec![
            "sweep",
            "--family",
            "poisson",
            "--values",
            "2,5",
            "--kappa",
            "3",
            "--grid",
            "0.9:0.05,0.5:0.25",
            "--sweep-command",
            "solve",
            "--format",
            "json",
        ],
        vec![
            "sweep",
            "--family",
            "binomial",
            "--pi",
            "0.5",
            "--values",
            "5",
            "--kappa",
            "2",
            "--grid",
            "0.5:0.2",
            "--sweep-command",
            "check-kappa2",
            "--format",
            "json",
        ],
        vec![
            "sweep",
            "--family",
            "dirac",
            "--values",
            "5",
            "--grid",
            "0.3:0.35",
            "--sweep-command",
            "check-kappa3",
            "--format",
            "json",
        ],
    ];
    for args in runs {
        let v = json(&args);
        let errors: Vec<String> = validator.iter_errors(&v).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{args:?}: {errors:?}");
    }
}

#[test]
fn validation_errors_exit_two() {
    let bad: Vec<Vec<&str>> = vec![
        vec![
            "solve", "--family", "dirac", "--m", "2", "--kappa", "3", "--p0", "0.9", "--p1", "0.2",
        ],
        vec![
            "solve", "--family", "dirac", "--m", "2", "--kappa", "1", "--p0", "0.5", "--p1", "0.2",
        ],
        vec!["solve", "--kappa", "3", "--p0", "0.5", "--p1", "0.2"],
        vec![
            "solve", "--family", "poisson", "--kappa", "3", "--p0", "0.5", "--p1", "0.2",
        ],
        vec![
            "solve", "--family", "dirac", "--m", "0", "--kappa", "3", "--p0", "0.5", "--p1", "0.2",
        ],
        vec![
            "solve", "--family", "cauchy", "--kappa", "3", "--p0", "0.5", "--p1", "0.2",
        ],
        vec![
            "check-kappa2",
            "--family",
            "uniform_range",
            "--m",
            "3",
            "--kappa",
            "2",
            "--p0",
            "0.5",
            "--p1",
            "0.2",
        ],
        vec![
            "check-special",
            "--family",
            "poisson",
            "--lambda",
            "2",
            "--alpha",
            "2",
        ],
        vec![
            "duration", "--family", "dirac", "--m", "2", "--kappa", "3", "--p0", "0.5", "--p1",
            "0.5",
        ],
        vec![
            "sweep", "--family", "dirac", "--m", "2", "--kappa", "3", "--grid", "0.9:0.3",
        ],
        vec!["solve", "--bogus-flag"],
    ];
    for args in bad {
        let o = invoke(&args, None);
        assert_eq!(o.code, EXIT_VALIDATION, "{args:?}: {}", o.stderr);
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn iteration_budget_exhaustion_exits_three() {
    let mut args = vec!["solve", "--max-iter", "3"];
    args.extend(BINARY_TREE);
    let o = invoke(&args, None);
    assert_eq!(o.code, EXIT_NON_CONVERGENCE);
    let v: Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(v["converged"], false);
    assert!(v["verdicts"].is_null());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    fs::write(
        &path,
        r#"{"dist": {"family": "dirac", "params": {"m": 2}}, "kappa": 3, "p0": 0.8, "p1": 0.1}"#,
    )
    .unwrap();
    let p = path.to_str().unwrap();
    let from_file = json(&["solve", "--config", p]);
    let overridden = json(&["solve", "--config", p, "--p0", "0.9", "--p1", "0.05"]);
    let direct = json(&[&["solve"][..], &BINARY_TREE[..]].concat());
    assert_eq!(overridden, direct);
    assert_ne!(from_file, direct);
    assert_eq!(from_file["spec"]["law"]["p_0"], 0.8);
}

#[test]
fn config_file_rejects_unknown_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    fs::write(&path, r#"{"kappa": 3, "colour": "red"}"#).unwrap();
    let o = invoke(&["solve", "--config", path.to_str().unwrap()], None);
    assert_eq!(o.code, EXIT_VALIDATION);
}

#[test]
fn seed_precedence_is_flag_then_file_then_environment() {
    let base = [
        "simulate",
        "--family",
        "poisson",
        "--lambda",
        "2",
        "--kappa",
        "3",
        "--p0",
        "0.5",
        "--p1",
        "0.25",
        "--horizon",
        "4",
        "--samples",
        "2000",
    ];
    let with_flag = |s: &str| {
        let mut a = base.to_vec();
        a.extend(["--seed", s]);
        invoke(&a, None).stdout
    };
    let env7 = invoke(&base, Some("7"));
    assert_eq!(env7.code, EXIT_OK);
    assert_eq!(env7.stdout, with_flag("7"));
    assert_ne!(env7.stdout, with_flag("8"));
    let mut a = base.to_vec();
    a.extend(["--seed", "8"]);
    assert_eq!(invoke(&a, Some("7")).stdout, with_flag("8"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("seed.json");
    fs::write(&path, r#"{"seed": 8}"#).unwrap();
    let mut a = base.to_vec();
    a.extend(["--config", path.to_str().unwrap()]);
    assert_eq!(invoke(&a, Some("7")).stdout, with_flag("8"));

    assert_eq!(invoke(&base, Some("seven")).code, EXIT_VALIDATION);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let sweep = |jobs: &str| {
        invoke(
            &[
                "sweep",
                "--family",
                "poisson",
                "--values",
                "2,5",
                "--kappa",
                "3",
                "--grid",
                "0.9:0.05,0.8:0.1,0.5:0.25",
                "--sweep-command",
                "solve",
                "--jobs",
                jobs,
            ],
            None,
        )
    };
    let a = sweep("1");
    let b = sweep("4");
    assert_eq!(a.code, EXIT_OK);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, sweep("2").stdout);
    let lines: Vec<&str> = a.stdout.lines().collect();
    assert_eq!(
        lines[0],
        "distribution,p0,p1,d11,d12,d21,d22,d12_ge_d21,converged"
    );
    assert_eq!(lines.len(), 7);
    assert!(lines[1].starts_with("poisson(2),0.900000000,0.050000000,"));
    assert!(lines[4].starts_with("poisson(5),0.900000000,0.050000000,"));

    let sim = &[
        "simulate",
        "--family",
        "dirac",
        "--m",
        "2",
        "--kappa",
        "2",
        "--p0",
        "0.8",
        "--p1",
        "0.1",
        "--horizon",
        "5",
        "--samples",
        "3000",
        "--seed",
        "3",
        "--format",
        "csv",
    ];
    assert_eq!(invoke(sim, None).stdout, invoke(sim, None).stdout);
}

#[test]
fn sweep_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.json");
    fs::write(
        &path,
        r#"{"kappa": 2, "sweep": {"command": "check-kappa2", "grid": [[0.5, 0.2], [0.9, 0.05]],
            "dists": [{"family": "poisson", "params": {"lambda": 3.0}},
                      {"family": "geometric", "params": {"pi": 0.5}}]}}"#,
    )
    .unwrap();
    let o = invoke(&["sweep", "--config", path.to_str().unwrap()], None);
    assert_eq!(o.code, EXIT_OK, "{}", o.stderr);
    let lines: Vec<&str> = o.stdout.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("poisson(3),"));
    assert!(lines[3].starts_with("neg_binomial(1;0.5),"));
}

#[test]
fn output_file_receives_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let mut args = vec![
        "solve",
        "--format",
        "csv",
        "--output",
        path.to_str().unwrap(),
    ];
    args.extend(BINARY_TREE);
    let o = invoke(&args, None);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.is_empty());
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("i,j,l,w,d,verdict\n"));
}

#[test]
fn check_kappa3_tables() {
    let o = invoke(
        &[
            "check-kappa3",
            "--family",
            "dirac",
            "--m",
            "15",
            "--p0",
            "0.3",
            "--p1",
            "0.35",
            "--format",
            "csv",
        ],
        None,
    );
    assert_eq!(o.code, EXIT_OK);
    let lines: Vec<&str> = o.stdout.lines().collect();
    assert_eq!(lines[0], "distribution,p1,p_minus1,p0,E11,E12,E21,E22");
    let o = invoke(
        &[
            "check-kappa3",
            "--family",
            "poisson",
            "--lambda",
            "5",
            "--p0",
            "0.875",
            "--p1",
            "0.025",
            "--count-fixed-points",
            "--format",
            "csv",
        ],
        None,
    );
    let lines: Vec<&str> = o.stdout.lines().collect();
    assert_eq!(
        lines[0],
        "distribution,p1,p_minus1,p0,maxE,fixed_point_count"
    );
    assert!(lines[1].ends_with(",6"), "{}", lines[1]);
}

#[test]
fn help_and_version_exit_zero() {
    let o = invoke(&["--help"], None);
    assert_eq!(o.code, EXIT_OK);
    assert!(o.stdout.contains("solve"));
    assert_eq!(invoke(&["--version"], None).code, EXIT_OK);
}

#[test]
fn binary_reads_seed_from_environment() {
    let exe = env!("CARGO_BIN_EXE_percgame");
    let args = [
        "simulate",
        "--family",
        "dirac",
        "--m",
        "2",
        "--kappa",
        "2",
        "--p0",
        "0.8",
        "--p1",
        "0.1",
        "--horizon",
        "3",
        "--samples",
        "1000",
    ];
    let out = std::process::Command::new(exe)
        .args(args)
        .env(percgame::cli::SEED_ENV, "9")
        .output()
        .unwrap();
    assert!(out.status.success());
    let mut with_flag = args.to_vec();
    with_flag.extend(["--seed", "9"]);
    assert_eq!(
        String::from_utf8(out.stdout).unwrap(),
        invoke(&with_flag, None).stdout
    );
    let bad = std::process::Command::new(exe)
        .args(["solve", "--kappa", "3"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(EXIT_VALIDATION));
}
