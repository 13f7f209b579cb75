use std::path::PathBuf;
use std::process::Command;

use dtmsteps_cli::{execute, EXIT_COMPARE, EXIT_ENGINE, EXIT_INVALID, EXIT_OK, EXIT_PARSE};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = execute(
        std::iter::once("dtmsteps").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

fn row<'a>(csv: &'a str, name: &str) -> Vec<&'a str> {
    csv.lines()
        .find(|l| l.split(',').next() == Some(name))
        .unwrap_or_else(|| panic!("no row {name} in\n{csv}"))
        .split(',')
        .skip(1)
        .collect()
}

#[test]
fn info_reports_derived_quantities() {
    let (code, out, _) = run(&["info", &fixture("example2.fde")]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("t_star = -2\n"));
    assert!(out.contains("t_alpha = 1\n"));
    assert!(out.contains("neutral = no\n"));
    assert!(out.contains("compatibility: pass\n"));

    let (code, out, _) = run(&["info", &fixture("example3.fde")]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("neutral = yes\n"));
    assert!(out.contains("m = 3\n"));
    assert!(out.contains("t_alpha = 0.351733711249"));

    let (code, out, _) = run(&["info", &fixture("example1.fde")]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("t_star = 0\n"));
    assert!(out.contains("t_alpha = inf\n"));
}

#[test]
fn solve_csv_rows() {
    let (code, out, _) = run(&["solve", &fixture("example1.fde"), "--order", "5"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("var,k0,k1,k2,k3,k4,k5\n"));
    assert_eq!(row(&out, "u3"), ["0", "1", "3", "4.5", "4.5", "3.375"]);
    assert!(out.contains("# validity,t_star=0,t_alpha=inf,upper=1\n"));

    let (code, out, _) = run(&["solve", &fixture("example2.fde"), "--csv"]);
    assert_eq!(code, EXIT_OK);
    let u1: Vec<f64> = row(&out, "u1").iter().map(|x| x.parse().unwrap()).collect();
    assert_eq!(u1.len(), 11);
    for (k, x) in u1.iter().enumerate() {
        assert!((x - if k == 2 { 2.0 } else { 0.0 }).abs() <= 1e-12);
    }
}

#[test]
fn solve_json_schema() {
    let (code, out, _) = run(&["solve", &fixture("example1.fde"), "--json"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["variables"][2]["name"], "u3");
    assert_eq!(
        v["variables"][0]["coefficients"].as_array().unwrap().len(),
        9
    );
    assert_eq!(v["validity"]["t_star"], 0.0);
    assert!(v["validity"]["t_alpha"].is_null());
    assert_eq!(v["validity"]["upper"], 1.0);
    assert_eq!(v["error_estimate"]["N"], 8);
    assert!(v["error_estimate"]["bound"].is_number());
    assert!(v["pivot_log"].as_array().unwrap().is_empty());

    let (_, out, _) = run(&["solve", &fixture("neutral_scalar.fde"), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["pivot_log"][0]["equation"], "u");
    assert_eq!(v["pivot_log"][0]["pivot"], 0.5);
}

#[test]
fn output_is_deterministic() {
    for flag in ["--csv", "--json"] {
        let a = run(&["solve", &fixture("example2.fde"), flag]);
        let b = run(&["solve", &fixture("example2.fde"), flag]);
        assert_eq!(a, b);
    }
}

#[test]
fn zero_pivot_exits_with_partial_table() {
    let (code, out, err) = run(&["solve", &fixture("example3.fde")]);
    assert_eq!(code, EXIT_ENGINE);
    assert_eq!(row(&out, "u2"), ["0", "0", "1"]);
    assert!(err.contains("equation u2, k = 0"), "{err}");
    assert!(err.contains("zero pivot 0 "), "{err}");
    assert!(err.contains("residual -2"), "{err}");
}

#[test]
fn eval_respects_validity() {
    let (code, out, _) = run(&["eval", &fixture("example2.fde"), "--at", "0.5"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out, "t,u1,u2\n0.5,0.5,0.25\n");

    let (code, _, err) = run(&["eval", &fixture("example2.fde"), "--at", "1.5"]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("validity"), "{err}");

    let (code, _, _) = run(&[
        "eval",
        &fixture("example2.fde"),
        "--at",
        "1.5",
        "--unchecked",
    ]);
    assert_eq!(code, EXIT_OK);

    let (code, out, _) = run(&["eval", &fixture("example1.fde"), "--at", "0"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out, "t,u1,u2,u3\n0,1,1,0\n");
}

fn max_errors(out: &str) -> Vec<f64> {
    out.lines()
        .skip(1)
        .filter(|l| l.starts_with('u'))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn compare_against_reference() {
    let (code, out, _) = run(&[
        "compare",
        &fixture("example1.fde"),
        "--order",
        "12",
        "--h",
        "1e-3",
        "--interval",
        "0,0.3",
    ]);
    assert_eq!(code, EXIT_OK, "{out}");
    let errs = max_errors(&out);
    assert_eq!(errs.len(), 3);
    assert!(errs.iter().all(|e| *e <= 1e-8), "{out}");

    let (code, out, _) = run(&["compare", &fixture("example2.fde"), "--interval", "0,1"]);
    assert_eq!(code, EXIT_OK);
    assert!(max_errors(&out).iter().all(|e| *e <= 1e-9));
    assert!(out.contains("0 (exact)"));
}

#[test]
fn compare_refuses_neutral_terms() {
    let (code, _, err) = run(&["compare", &fixture("example3.fde")]);
    assert_eq!(code, EXIT_INVALID);
    assert!(err.contains("u2'''@a_half"), "{err}");
}

#[test]
fn compare_detects_a_wrong_solution() {
    // cosine: U(3) = 0, so the estimate from the first dropped coefficient
    // is 0 while the true error is about t^4/24
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cos.fde");
    std::fs::write(
        &path,
        "order = 2\nvars = u\neq u'' = -u\ninit u = [1, 0]\nhorizon = 1\ntaylor_order = 2\n",
    )
    .unwrap();
    let (code, out, _) = run(&["compare", path.to_str().unwrap(), "--interval", "0,0.5"]);
    assert_eq!(code, EXIT_COMPARE, "{out}");
    assert!(out.contains("result: fail"));
}

#[test]
fn parse_and_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.fde");
    std::fs::write(
        &bad,
        "order = 1\nvars = u\neq u' = u +* 2\ninit u = [1]\nhorizon = 1\ntaylor_order = 4\n",
    )
    .unwrap();
    let (code, _, err) = run(&["info", bad.to_str().unwrap()]);
    assert_eq!(code, EXIT_PARSE);
    assert!(err.contains("line 3, column"), "{err}");

    let (code, _, _) = run(&["info", "/nonexistent/file.fde"]);
    assert_eq!(code, EXIT_PARSE);

    let (code, _, _) = run(&["solve"]);
    assert_eq!(code, EXIT_PARSE);

    let invalid = dir.path().join("invalid.fde");
    std::fs::write(
        &invalid,
        "order = 1\nvars = u\ndelay a = proportional(1.5)\neq u' = u@a\ninit u = [1]\nhorizon = 1\ntaylor_order = 4\n",
    )
    .unwrap();
    let (code, _, err) = run(&["solve", invalid.to_str().unwrap()]);
    assert_eq!(code, EXIT_INVALID, "{err}");

    let incompatible = dir.path().join("incompatible.fde");
    std::fs::write(
        &incompatible,
        "order = 1\nvars = u\ndelay a = constant(1)\neq u' = u@a\nphi u = exp(t)\ninit u = [2]\nhorizon = 1\ntaylor_order = 4\n",
    )
    .unwrap();
    let path = incompatible.to_str().unwrap();
    let (code, _, _) = run(&["info", path]);
    assert_eq!(code, EXIT_INVALID);
    let (code, _, err) = run(&["solve", path]);
    assert_eq!(code, EXIT_OK);
    assert!(err.starts_with("warning:"), "{err}");
    let (code, _, _) = run(&["solve", path, "--strict"]);
    assert_eq!(code, EXIT_INVALID);
}

#[test]
fn batch_mode_is_sorted_and_takes_worst_code() {
    let (code, out, _) = run(&["solve", "--all", &fixture("")]);
    assert_eq!(code, EXIT_ENGINE);
    let headers: Vec<&str> = out.lines().filter(|l| l.starts_with("==")).collect();
    assert_eq!(
        headers,
        [
            "== example1.fde ==",
            "== example2.fde ==",
            "== example3.fde ==",
            "== example3_u1.fde ==",
            "== neutral_scalar.fde ==",
        ]
    );
    assert_eq!(run(&["solve", "--all", &fixture("")]).1, out);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("u.csv");
    let (code, out, _) = run(&[
        "solve",
        &fixture("example1.fde"),
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.is_empty());
    assert!(std::fs::read_to_string(target)
        .unwrap()
        .starts_with("var,k0"));
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_dtmsteps");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(status(&["info", &fixture("example1.fde")]), Some(EXIT_OK));
    assert_eq!(
        status(&["solve", &fixture("example3.fde")]),
        Some(EXIT_ENGINE)
    );
    assert_eq!(
        status(&["eval", &fixture("example2.fde"), "--at", "1.5"]),
        Some(EXIT_INVALID)
    );
    assert_eq!(status(&["bogus"]), Some(EXIT_PARSE));
}
