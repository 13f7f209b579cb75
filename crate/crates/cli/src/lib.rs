//! Command-line front end: `info`, `solve`, `eval` and `compare` over
//! problem files.
//!
//! Exit codes: 0 success, 1 parse error, 2 validation or domain error,
//! 3 engine error, 4 comparison failure.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use dtmsteps::engine::{estimate_error, evaluate_solution, EngineError};
use dtmsteps::expr::analyze;
use dtmsteps::oracle::{compare, integrate_reference, OracleError};
use dtmsteps::problem::{check_compatibility, check_h2, compute_validity, DelayKind};
use dtmsteps::{parse_problem, solve, solve_reduced, substitute_history, CauchyProblem, Symbols};

pub mod output;

use output::{real, JsonFailure};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_ENGINE: i32 = 3;
pub const EXIT_COMPARE: i32 = 4;

/// Slack added to the comparison bound for round-off.
const COMPARE_SLACK: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(
    name = "dtmsteps",
    version,
    about = "Taylor-coefficient solver for delay differential systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Input {
    /// Problem file, or a directory of `.fde` files with --all
    path: PathBuf,
    /// Process every `.fde` file in the directory
    #[arg(long)]
    all: bool,
    /// Override the truncation order N
    #[arg(long)]
    order: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Report structure, validity interval and hypothesis checks
    Info {
        #[command(flatten)]
        input: Input,
    },
    /// Compute the Taylor coefficients
    Solve {
        #[command(flatten)]
        input: Input,
        /// Print JSON instead of a CSV table
        #[arg(long, conflicts_with = "csv")]
        json: bool,
        /// Print a CSV table (the default)
        #[arg(long)]
        csv: bool,
        /// Write the table to a file instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
        /// Treat compatibility failures as errors
        #[arg(long)]
        strict: bool,
    },
    /// Evaluate the Taylor polynomials at given times
    Eval {
        #[command(flatten)]
        input: Input,
        /// Comma-separated evaluation times
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_negative_numbers = true
        )]
        at: Vec<f64>,
        /// Allow times outside the validity interval
        #[arg(long)]
        unchecked: bool,
    },
    /// Compare against the RK4 reference
    Compare {
        #[command(flatten)]
        input: Input,
        /// RK4 step size
        #[arg(long, default_value_t = 1e-3)]
        h: f64,
        /// Number of evenly spaced sample points
        #[arg(long, default_value_t = 101)]
        samples: usize,
        /// Comparison interval `a,b`; defaults to the validity interval
        #[arg(long, value_parser = parse_interval, allow_hyphen_values = true)]
        interval: Option<(f64, f64)>,
    },
}

fn parse_interval(text: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = text.split(',').collect();
    let [a, b] = parts.as_slice() else {
        return Err("expected two numbers a,b".into());
    };
    let num = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("'{s}': {e}"));
    Ok((num(a)?, num(b)?))
}

/// Output and exit code of one command on one file.
struct Report {
    out: String,
    err: String,
    code: i32,
}

impl Report {
    fn new() -> Self {
        Report {
            out: String::new(),
            err: String::new(),
            code: EXIT_OK,
        }
    }

    fn fail(mut self, code: i32, msg: impl std::fmt::Display) -> Self {
        let _ = writeln!(self.err, "error: {msg}");
        self.code = code;
        self
    }
}

fn engine_code(e: &EngineError) -> i32 {
    match e {
        EngineError::ZeroPivotInconsistent { .. }
        | EngineError::ZeroPivotUnderdetermined { .. }
        | EngineError::Eval { .. } => EXIT_ENGINE,
        _ => EXIT_INVALID,
    }
}

fn load(path: &Path, order: Option<usize>) -> Result<CauchyProblem, Report> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Report::new().fail(EXIT_PARSE, format_args!("{}: {e}", path.display())))?;
    let mut problem = parse_problem(&text)
        .map_err(|e| Report::new().fail(EXIT_PARSE, format_args!("{}: {e}", path.display())))?;
    if let Some(n) = order {
        problem.trunc_order = n;
    }
    problem
        .validate()
        .map_err(|e| Report::new().fail(EXIT_INVALID, e))?;
    Ok(problem)
}

fn delay_text(kind: &DelayKind) -> String {
    match kind {
        DelayKind::Constant(tau) => format!("constant({})", real(*tau)),
        DelayKind::Proportional(q) => format!("proportional({})", real(*q)),
        DelayKind::TimeDependent(e) => format!("vary({})", e.display(&Symbols::time_only())),
    }
}

fn cmd_info(problem: &CauchyProblem) -> Report {
    let mut r = Report::new();
    let structure = match analyze(
        &problem.equations,
        problem.order,
        problem.dimension(),
        &problem.delays,
    ) {
        Ok(s) => s,
        Err(e) => return r.fail(EXIT_INVALID, e),
    };
    let validity = match compute_validity(problem) {
        Ok(v) => v,
        Err(e) => return r.fail(EXIT_INVALID, e),
    };
    let o = &mut r.out;
    let _ = writeln!(o, "n = {}", problem.order);
    let _ = writeln!(o, "p = {}", problem.dimension());
    let _ = writeln!(o, "r = {}", problem.delays.len());
    for (d, usage) in problem.delays.iter().zip(&structure.per_delay) {
        let _ = writeln!(
            o,
            "delay {} = {}: m = {}, uses = {}",
            d.name,
            delay_text(&d.kind),
            usage.max_deriv,
            usage.uses
        );
    }
    let _ = writeln!(o, "omega = {}", structure.omega);
    let _ = writeln!(o, "m = {}", structure.m);
    let _ = writeln!(
        o,
        "neutral = {}",
        if structure.neutral { "yes" } else { "no" }
    );
    let _ = writeln!(o, "t_star = {}", real(validity.t_star));
    let _ = writeln!(o, "t_alpha = {}", real(validity.t_alpha));
    let _ = writeln!(o, "upper = {}", real(validity.upper));

    let sy = Symbols::new(
        problem.vars.clone(),
        problem.delays.iter().map(|d| d.name.clone()).collect(),
        problem.order,
    );
    let h2 = check_h2(&structure);
    if h2.pass() {
        let _ = writeln!(o, "H2: pass");
    } else {
        for v in &h2.violations {
            let term = sy.ref_name(&dtmsteps::StateRef {
                var: v.var,
                deriv: problem.order,
                delay: Some(v.delay),
            });
            let _ = writeln!(
                o,
                "H2: fail (equation {} references {term})",
                problem.vars[v.equation]
            );
        }
    }
    let compat = check_compatibility(problem);
    if !compat.checked {
        let _ = writeln!(o, "compatibility: not applicable");
    } else if compat.pass() {
        let _ = writeln!(o, "compatibility: pass");
    } else {
        for (var, msg) in &compat.failures {
            let _ = writeln!(o, "compatibility: fail ({}: {msg})", problem.vars[*var]);
        }
        for e in compat.entries.iter().filter(|e| !e.pass) {
            let _ = writeln!(
                o,
                "compatibility: fail ({} derivative {}: init {} vs phi {})",
                problem.vars[e.var],
                e.k,
                real(e.expected),
                real(e.phi_value)
            );
        }
    }
    if !h2.pass() || !compat.pass() {
        r.code = EXIT_INVALID;
    }
    r
}

fn compatibility_gate(problem: &CauchyProblem, strict: bool, r: &mut Report) -> bool {
    let compat = check_compatibility(problem);
    if compat.pass() {
        return true;
    }
    let what = match compat.first_failure() {
        Some(e) => format!(
            "initial data of {} derivative {} is {} but the initial function gives {}",
            problem.vars[e.var],
            e.k,
            real(e.expected),
            real(e.phi_value)
        ),
        None => format!(
            "initial function of {} cannot be expanded at 0",
            problem.vars[compat.failures[0].0]
        ),
    };
    if strict {
        let _ = writeln!(r.err, "error: {what}");
        r.code = EXIT_INVALID;
        false
    } else {
        let _ = writeln!(r.err, "warning: {what}");
        true
    }
}

fn cmd_solve(problem: &CauchyProblem, json: bool, strict: bool) -> Report {
    let mut r = Report::new();
    if !compatibility_gate(problem, strict, &mut r) {
        return r;
    }
    match solve(problem) {
        Ok(sol) => {
            r.out = if json {
                output::solution_json(&sol)
            } else {
                output::solution_csv(&sol)
            };
            r
        }
        Err(f) => {
            let code = engine_code(&f.error);
            if !f.partial.is_empty() {
                r.out = if json {
                    output::partial_json(
                        &f.vars,
                        &f.partial,
                        JsonFailure {
                            message: f.error.to_string(),
                            k: f.error.step(),
                        },
                    )
                } else {
                    output::csv_table(&f.vars, &f.partial)
                };
            }
            r.fail(code, f.error)
        }
    }
}

fn cmd_eval(problem: &CauchyProblem, at: &[f64], unchecked: bool) -> Report {
    let r = Report::new();
    let sol = match solve(problem) {
        Ok(s) => s,
        Err(f) => return r.fail(engine_code(&f.error), f.error),
    };
    let mut out = format!("t,{}\n", sol.vars.join(","));
    for &t in at {
        match evaluate_solution(&sol, t, !unchecked) {
            Ok(values) => {
                out.push_str(&real(t));
                for v in values {
                    out.push(',');
                    out.push_str(&real(v));
                }
                out.push('\n');
            }
            Err(e) => return r.fail(EXIT_INVALID, e),
        }
    }
    Report { out, ..r }
}

fn cmd_compare(
    problem: &CauchyProblem,
    h: f64,
    samples: usize,
    interval: Option<(f64, f64)>,
) -> Report {
    let r = Report::new();
    let reduced = match substitute_history(problem) {
        Ok(red) => red,
        Err(e) => return r.fail(EXIT_INVALID, e),
    };
    let sy = Symbols::new(
        reduced.vars.clone(),
        reduced.delays.iter().map(|d| d.name.clone()).collect(),
        reduced.order,
    );
    for j in 0..reduced.dimension() {
        if let Some(n) = reduced.neutral_refs(j).first() {
            return r.fail(
                EXIT_INVALID,
                OracleError::NeutralTerm {
                    term: sy.ref_name(n),
                },
            );
        }
    }
    let upper = reduced.validity.upper;
    let (a, b) = interval.unwrap_or((0.0, upper));
    if !(0.0 <= a && a < b && b <= upper) {
        return r.fail(
            EXIT_INVALID,
            format_args!(
                "interval [{}, {}] must lie inside [0, {}]",
                real(a),
                real(b),
                real(upper)
            ),
        );
    }
    let sol = match solve_reduced(&reduced) {
        Ok(s) => s,
        Err(f) => return r.fail(engine_code(&f.error), f.error),
    };
    let reference = integrate_reference(&reduced, h, b).and_then(|fine| {
        let coarse = integrate_reference(&reduced, 2.0 * h, b)?;
        Ok((fine, coarse))
    });
    let (fine, coarse) = match reference {
        Ok(t) => t,
        Err(e) => return r.fail(EXIT_INVALID, e),
    };
    let measured = compare(&sol, &fine, (a, b), samples);
    let oracle_err = (0..samples.max(2))
        .map(|i| a + (b - a) * i as f64 / (samples.max(2) - 1) as f64)
        .map(|t| -> Result<Vec<f64>, OracleError> {
            let (x, y) = (fine.sample(t.min(b), 0)?, coarse.sample(t.min(b), 0)?);
            // RK4 error of the fine run is about 1/15 of the difference
            Ok(x.iter()
                .zip(&y)
                .map(|(x, y)| (x - y).abs() / 15.0)
                .collect())
        })
        .try_fold(vec![0.0f64; reduced.dimension()], |acc, e| {
            e.map(|e| acc.iter().zip(e).map(|(a, e)| a.max(e)).collect())
        });
    let (measured, oracle_err) = match (measured, oracle_err) {
        (Ok(m), Ok(o)) => (m, o),
        (Err(e), _) | (_, Err(e)) => return r.fail(EXIT_INVALID, e),
    };
    let estimate = estimate_error(&sol, b)
        .ok()
        .filter(|_| sol.next_coeffs.is_some());

    let mut out = String::from("var,max_error,bound,oracle_error\n");
    let mut pass = true;
    for (j, name) in sol.vars.iter().enumerate() {
        let bound = estimate.as_ref().map(|e| e.per_variable[j].bound);
        let bound_text = match bound {
            None => "none".to_string(),
            Some(0.0) => "0 (exact)".to_string(),
            Some(b) => real(b),
        };
        if let Some(bound) = bound {
            if measured[j] > bound + oracle_err[j] + COMPARE_SLACK {
                pass = false;
            }
        }
        let _ = writeln!(
            out,
            "{name},{},{bound_text},{}",
            real(measured[j]),
            real(oracle_err[j])
        );
    }
    let _ = writeln!(
        out,
        "# interval=[{},{}],N={},h={},samples={}",
        real(a),
        real(b),
        sol.trunc_order(),
        real(fine.h),
        samples.max(2)
    );
    let _ = writeln!(out, "result: {}", if pass { "pass" } else { "fail" });
    Report {
        out,
        code: if pass { EXIT_OK } else { EXIT_COMPARE },
        ..r
    }
}

fn run_file(command: &Command, path: &Path) -> Report {
    let input = match command {
        Command::Info { input }
        | Command::Solve { input, .. }
        | Command::Eval { input, .. }
        | Command::Compare { input, .. } => input,
    };
    let problem = match load(path, input.order) {
        Ok(p) => p,
        Err(r) => return r,
    };
    match command {
        Command::Info { .. } => cmd_info(&problem),
        Command::Solve {
            json, csv, strict, ..
        } => cmd_solve(&problem, *json && !*csv, *strict),
        Command::Eval { at, unchecked, .. } => cmd_eval(&problem, at, *unchecked),
        Command::Compare {
            h,
            samples,
            interval,
            ..
        } => cmd_compare(&problem, *h, *samples, *interval),
    }
}

fn problem_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "fde"))
        .collect();
    files.sort();
    Ok(files)
}

fn run(command: &Command) -> Report {
    let input = match command {
        Command::Info { input }
        | Command::Solve { input, .. }
        | Command::Eval { input, .. }
        | Command::Compare { input, .. } => input,
    };
    if !input.all {
        return run_file(command, &input.path);
    }
    let files = match problem_files(&input.path) {
        Ok(f) => f,
        Err(e) => {
            return Report::new().fail(EXIT_PARSE, format_args!("{}: {e}", input.path.display()))
        }
    };
    let reports: Vec<Report> = std::thread::scope(|s| {
        let handles: Vec<_> = files
            .iter()
            .map(|f| s.spawn(move || run_file(command, f)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut all = Report::new();
    for (file, r) in files.iter().zip(reports) {
        let name = file
            .file_name()
            .map(|n| n.to_string_lossy())
            .unwrap_or_default();
        let _ = writeln!(all.out, "== {name} ==");
        all.out.push_str(&r.out);
        if !r.err.is_empty() {
            let _ = writeln!(all.err, "== {name} ==");
            all.err.push_str(&r.err);
        }
        all.code = all.code.max(r.code);
    }
    all
}

/// Runs the command line `args` (including the program name), writing to
/// `out` and `err`, and returns the exit code.
pub fn execute<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let report = run(&cli.command);
    let destination = match &cli.command {
        Command::Solve {
            out: Some(path), ..
        } => Some(path),
        _ => None,
    };
    let mut code = report.code;
    match destination {
        Some(path) if !report.out.is_empty() => {
            if let Err(e) = std::fs::write(path, &report.out) {
                let _ = writeln!(err, "error: {}: {e}", path.display());
                code = code.max(EXIT_INVALID);
            }
        }
        _ => {
            let _ = out.write_all(report.out.as_bytes());
        }
    }
    let _ = err.write_all(report.err.as_bytes());
    code
}
