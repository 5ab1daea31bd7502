use std::path::PathBuf;
use std::process::{Command, Output};

use wiretap_cli::commands::CSV_HEADER;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str], file: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wiretap-opt")).args(args).arg(fixture(file)).output().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn value(text: &str, key: &str) -> f64 {
    let line =
        text.lines().find_map(|l| l.strip_prefix(&format!("{key}="))).unwrap_or_else(|| panic!("no {key} in {text}"));
    line.split_whitespace().next().unwrap().parse().unwrap()
}

#[test]
fn siso_solve_reports_the_closed_form_in_nats_and_bits() {
    let out = run(&["solve"], "siso.toml");
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("rate_nats=0.5725"), "{text}");
    assert!(text.contains("status=optimal"));
    let bits = stdout(&run(&["--bits", "solve"], "siso.toml"));
    assert!(bits.contains("rate_bits=0.8260"), "{bits}");
    assert!((value(&bits, "rate_bits") - 0.5 * (11.0f64 / 3.5).log2()).abs() < 1e-6);
}

#[test]
fn infeasible_file_exits_with_two() {
    let out = run(&["solve"], "siso_infeasible.toml");
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("status=infeasible"));
}

#[test]
fn parse_errors_name_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "H = [[1.0]]\nG = [[0.5], [0.2, 0.1]]\nP = 10.0\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_wiretap-opt")).arg("solve").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("`G` (line 2)"), "{err}");
}

#[test]
fn sweep_past_the_edge_leaves_trailing_rows_empty() {
    let out = run(&["sweep", "--grid", "1:5:5", "--scheme", "all"], "siso.toml");
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(!text.contains('\r'));
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], CSV_HEADER);
    assert_eq!(rows.len(), 1 + 5 * 3);
    let expected = 0.5 * (11.0f64 / 3.5).ln();
    for row in &rows[1..] {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols.len(), 8, "{row}");
        let level: f64 = cols[0].parse().unwrap();
        if level <= 3.5 {
            // The eavesdropper already receives 3.5 without the constraint.
            assert_eq!(cols[5], "optimal", "{row}");
            assert!((cols[2].parse::<f64>().unwrap() - expected).abs() < 1e-9, "{row}");
        } else {
            assert_eq!(cols[5], "infeasible", "{row}");
            assert!(cols[2].is_empty() && cols[3].is_empty() && cols[4].is_empty(), "{row}");
        }
    }
    let schemes: Vec<&str> = rows[1..4].iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(schemes, ["mean", "an", "plain"]);
}

#[test]
fn sweep_writes_the_same_bytes_to_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let args = ["sweep", "--grid", "1:3:3", "--out", path.to_str().unwrap()];
    assert_eq!(run(&args, "siso.toml").status.code(), Some(0));
    let piped = run(&["sweep", "--grid", "1:3:3"], "siso.toml");
    assert_eq!(std::fs::read(&path).unwrap(), piped.stdout);
}

#[test]
fn bad_grid_and_scheme_are_errors() {
    assert_eq!(run(&["sweep", "--grid", "1:3:1"], "siso.toml").status.code(), Some(1));
    assert_eq!(run(&["sweep", "--scheme", "dpc"], "siso.toml").status.code(), Some(1));
}

#[test]
fn verify_exit_codes() {
    let ok = run(&["verify"], "aligned_2x2.toml");
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    let text = stdout(&ok);
    let checks: Vec<&str> = text.lines().filter(|l| l.starts_with("CHECK ")).collect();
    assert!(!checks.is_empty() && checks.iter().all(|l| l.ends_with(" PASS")), "{text}");

    let bad = run(&["verify"], "corrupted_replay.toml");
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).lines().any(|l| l.starts_with("CHECK ") && l.ends_with(" FAIL")));

    let rect = run(&["verify"], "rectangular.toml");
    assert_eq!(rect.status.code(), Some(3));
    assert!(stdout(&rect).contains("alignment unavailable"));
}

#[test]
fn oracle_reports_a_small_gap() {
    let out = run(&["oracle", "--resolution", "100"], "oracle_miso.toml");
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let (oracle, solver, gap) = (value(&text, "oracle_rate"), value(&text, "solver_rate"), value(&text, "gap"));
    assert!(solver >= oracle - 1e-9, "{text}");
    assert!(gap <= 2e-2 && (gap - (solver - oracle).abs()).abs() < 1e-6, "{text}");
}

#[test]
fn miso_sweep_mean_and_an_columns_agree() {
    let out = run(&["sweep", "--grid", "1:29:5", "--scheme", "all"], "miso_411.toml");
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|r| r.split(',').collect()).collect();
    for point in rows.chunks(3) {
        let rate = |k: usize| point[k][2].parse::<f64>().unwrap();
        assert_eq!((point[0][1], point[1][1]), ("mean", "an"));
        assert!((rate(0) - rate(1)).abs() <= 1e-3, "{point:?}");
        assert!(rate(2) <= rate(0) + 1e-6, "{point:?}");
    }
}
