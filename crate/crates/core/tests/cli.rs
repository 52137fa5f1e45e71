//! End-to-end checks of the `stiefel-dec` binary.

use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_stiefel-dec");
const SCHEMA: &str = "k,consensus_err_sq,linf_err,grad_norm_sq,f_bar,ds_oracle,beta_k,elapsed_ms";
const SMALL: &[&str] = &["--n", "4", "--problem", "synthetic(10, 2, 20, 0.8)", "--seed", "3"];

fn stiefel_dec(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env("STIEFEL_DEC_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8(bytes.to_vec()).unwrap()
}

/// Splits a log into `#` header lines, the column line and data rows.
fn parse_log(log: &str) -> (Vec<&str>, &str, Vec<Vec<&str>>) {
    let header: Vec<&str> = log.lines().take_while(|l| l.starts_with('#')).collect();
    let mut rest = log.lines().skip(header.len());
    let columns = rest.next().expect("column line");
    let rows = rest.map(|l| l.split(',').collect()).collect();
    (header, columns, rows)
}

/// Completed its budget: converged (0) or stopped short of a tolerance (5).
fn finished(out: &Output) -> bool {
    matches!(out.status.code(), Some(0 | 5))
}

fn run_to(path: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--out", path.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    stiefel_dec(&args)
}

#[test]
fn run_writes_the_declared_schema() {
    let out = stiefel_dec(&[&["run"], SMALL, &["--algorithm", "drgta", "--max-iters", "25"]].concat());
    assert!(finished(&out), "{}", text(&out.stderr));
    let log = text(&out.stdout);
    let (header, columns, rows) = parse_log(&log);
    assert_eq!(columns, SCHEMA);
    assert_eq!(header[1], "# [config]");
    assert!(header.contains(&"# [derived]"));
    assert_eq!(rows.len(), 26);
    for (k, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), 8);
        assert_eq!(row[0], k.to_string());
        assert_eq!(row[7], "");
        for cell in &row[1..7] {
            assert!(cell.parse::<f64>().unwrap().is_finite());
        }
    }
    assert!(text(&out.stderr).contains("drgta"));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let logs: Vec<Vec<u8>> = ["1", "3"]
        .iter()
        .enumerate()
        .map(|(i, threads)| {
            let path = dir.path().join(format!("run{i}.csv"));
            let out = Command::new(BIN)
                .args(["run", "--out", path.to_str().unwrap(), "--algorithm", "drsgd", "--max-epochs", "3"])
                .args(SMALL)
                .env("STIEFEL_DEC_THREADS", threads)
                .output()
                .unwrap();
            assert!(finished(&out));
            std::fs::read(path).unwrap()
        })
        .collect();
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn echoed_config_reproduces_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.csv");
    assert!(finished(&run_to(&first, &["--algorithm", "drdgd", "--max-iters", "40", "--graph", "er(0.6)"])));
    let log = std::fs::read_to_string(&first).unwrap();
    let (header, _, _) = parse_log(&log);
    let config: String = header
        .iter()
        .skip_while(|l| **l != "# [config]")
        .skip(1)
        .take_while(|l| **l != "# [derived]")
        .map(|l| format!("{}\n", l.trim_start_matches('#').trim_start()))
        .collect();
    let cfg_path = dir.path().join("echo.toml");
    std::fs::write(&cfg_path, config).unwrap();
    let second = dir.path().join("second.csv");
    let out = stiefel_dec(&["run", "--config", cfg_path.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(finished(&out), "{}", text(&out.stderr));
    assert_eq!(log, std::fs::read_to_string(second).unwrap());
}

#[test]
fn spectral_reports_ring_constants() {
    let out = stiefel_dec(&["spectral", "--graph", "ring", "--n", "4", "--t", "0"]);
    assert!(out.status.success());
    let report = text(&out.stdout);
    assert!(report.contains("sigma2 = 0.333333333333\n"), "{report}");
    assert!(report.contains("t_min = 2\n"), "{report}");
    assert!(report.contains("edges = 4\n"));
}

#[test]
fn consensus_error_decreases() {
    let out = stiefel_dec(&[&["consensus"], SMALL, &["--max-iters", "30", "--t", "2"]].concat());
    assert!(out.status.success(), "{}", text(&out.stderr));
    let log = text(&out.stdout);
    let (_, _, rows) = parse_log(&log);
    let errs: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(errs[0] > 0.0);
    for pair in errs.windows(2) {
        assert!(pair[1] <= pair[0] || pair[1] < 1e-24, "{pair:?}");
    }
    assert!(errs.last().unwrap() < &(1e-6 * errs[0]));
}

#[test]
fn oracle_saves_the_solution() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.csv");
    let out = stiefel_dec(&[&["oracle", "--out", path.to_str().unwrap()], SMALL].concat());
    assert!(out.status.success());
    assert!(text(&out.stdout).contains("leading_eigenvalues = "));
    let saved = std::fs::read_to_string(path).unwrap();
    let rows: Vec<Vec<f64>> = saved
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!((rows.len(), rows[0].len()), (10, 2));
    let gram: f64 = rows.iter().map(|r| r[0] * r[1]).sum();
    assert!(gram.abs() < 1e-12);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(stiefel_dec(&["run", "--graph", "star"]).status.code(), Some(2));
    assert_eq!(stiefel_dec(&["run", "--n", "0"]).status.code(), Some(2));
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "agents = 4\n").unwrap();
    assert_eq!(stiefel_dec(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(2));

    let missing = dir.path().join("missing.csv");
    let problem = format!("dsv({}, 2, 1)", missing.display());
    assert_eq!(stiefel_dec(&["run", "--problem", &problem]).status.code(), Some(3));
    let garbled = dir.path().join("garbled.csv");
    std::fs::write(&garbled, "1,2,3\n4,x,6\n").unwrap();
    let problem = format!("dsv({}, 1, 1)", garbled.display());
    assert_eq!(stiefel_dec(&["run", "--n", "2", "--problem", &problem]).status.code(), Some(3));

    let log = dir.path().join("short.csv");
    let out = run_to(&log, &["--algorithm", "drgta", "--max-iters", "3", "--tol-ds", "1e-12"]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(parse_log(&std::fs::read_to_string(log).unwrap()).2.len(), 4);
}
