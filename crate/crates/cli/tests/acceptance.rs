//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

#![allow(clippy::type_complexity, clippy::needless_range_loop)]

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dtmsteps::engine::{estimate_error, residual, EngineError};
use dtmsteps::oracle::{compare, integrate_reference};
use dtmsteps::{
    parse_problem, solve, solve_reduced, substitute_history, CauchyProblem, Elementary, Expr,
    Series,
};

fn fixture_path(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn fixture(name: &str) -> CauchyProblem {
    parse_problem(&std::fs::read_to_string(fixture_path(name)).unwrap()).unwrap()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Outcome of one criterion.
struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn check(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

fn max_dev(pairs: impl IntoIterator<Item = (f64, f64)>) -> f64 {
    pairs
        .into_iter()
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let sol = match solve(&fixture("example1.fde")) {
        Ok(s) => s,
        Err(e) => return Outcome::check(false, format!("solve failed: {e}")),
    };
    let dev = max_dev((0..=8).flat_map(|k| {
        let u3 = if k == 0 {
            0.0
        } else {
            3f64.powi(k as i32 - 1) / factorial(k - 1)
        };
        [
            (sol.series[0].coeff(k), 1.0 / factorial(k)),
            (sol.series[1].coeff(k), 0.5f64.powi(k as i32) / factorial(k)),
            (sol.series[2].coeff(k), u3),
        ]
    }));
    let u35 = sol.series[2].coeff(5);
    Outcome::check(
        dev <= 1e-12 && sol.trunc_order() == 8,
        format!(
            "N=8, max coefficient deviation {dev:.2e}, U3(5)={u35} (81/24={})",
            81.0 / 24.0
        ),
    )
}

fn run_cli(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = dtmsteps_cli::execute(
        std::iter::once("dtmsteps").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (code, String::from_utf8_lossy(&out).into_owned())
}

fn criterion_2() -> Outcome {
    let sol = match solve(&fixture("example2.fde")) {
        Ok(s) => s,
        Err(e) => return Outcome::check(false, format!("solve failed: {e}")),
    };
    let dev = max_dev((0..=10).flat_map(|k| {
        let (a, b) = if k == 2 { (2.0, 1.0) } else { (0.0, 0.0) };
        [(sol.series[0].coeff(k), a), (sol.series[1].coeff(k), b)]
    }));
    let path = fixture_path("example2.fde");
    let (code, out) = run_cli(&["compare", &path, "--order", "10", "--interval", "0,1"]);
    let errors: Vec<f64> = out
        .lines()
        .skip(1)
        .filter(|l| l.starts_with('u'))
        .filter_map(|l| l.split(',').nth(1)?.parse().ok())
        .collect();
    let worst = errors.iter().copied().fold(0.0, f64::max);
    Outcome::check(
        dev <= 1e-12 && code == 0 && errors.len() == 2 && worst <= 1e-9,
        format!("max coefficient deviation {dev:.2e}; compare exit {code}, max error {worst:.2e} on [0,1]"),
    )
}

fn criterion_3() -> Outcome {
    let p = fixture("example3_u1.fde");
    let e2 = (-2.0f64).exp();
    let part_a = (|| -> Result<(f64, f64), String> {
        let reduced = substitute_history(&p).map_err(|e| e.to_string())?;
        let sol = solve_reduced(&reduced).map_err(|e| e.to_string())?;
        let traj = integrate_reference(&reduced, 1e-4, 0.3).map_err(|e| e.to_string())?;
        let err = compare(&sol, &traj, (0.0, 0.3), 301).map_err(|e| e.to_string())?;
        Ok((sol.series[0].coeff(3), err[0]))
    })();
    let (u3, oracle_err) = match part_a {
        Ok(v) => v,
        Err(e) => return Outcome::check(false, format!("(a) failed: {e}")),
    };
    let a_pass = (u3 - e2 / 6.0).abs() <= 1e-12 && oracle_err <= 1e-6 && p.trunc_order == 14;
    let b = match solve(&fixture("example3.fde")) {
        Err(f) => match f.error {
            EngineError::ZeroPivotInconsistent {
                equation,
                k,
                residual,
                ..
            } => Some((equation, k, residual)),
            _ => None,
        },
        Ok(_) => None,
    };
    let b_pass = matches!(&b, Some((eq, 0, r)) if eq == "u2" && (r + 2.0).abs() <= 1e-12);
    Outcome::check(
        a_pass && b_pass,
        format!(
            "(a) U1(3)={u3:.15} = e^-2/6 (printed value (2+e^-2)/6={:.15} not reproduced), \
             max error vs RK4 h=1e-4 on [0,0.3] at N=14: {oracle_err:.2e}; (b) {}",
            (2.0 + e2) / 6.0,
            match &b {
                Some((eq, k, r)) =>
                    format!("ZeroPivotInconsistent at equation {eq}, k={k}, residual {r}"),
                None => "no ZeroPivotInconsistent".into(),
            }
        ),
    )
}

fn exact(got: &Series, expect: &[f64]) -> bool {
    got.coeffs().len() == expect.len() && got.coeffs().iter().zip(expect).all(|(a, b)| a == b)
}

fn criterion_4() -> Outcome {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };
    // monomial t^m ↦ δ(k - m)
    check(
        "monomial",
        exact(&Series::monomial(3, 5), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]),
    );
    // e^{λt} ↦ λ^k / k!
    let e = Series::exp_linear(2.0, 5);
    check(
        "exponential",
        (0..=5).all(|k| {
            (e.coeff(k) - 2f64.powi(k as i32) / factorial(k)).abs() <= 1e-15 * e.coeff(k).abs()
        }),
    );
    // u^{(m)} ↦ (k+m)!/k! U(k+m)
    let u = Series::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    check(
        "derivative shift",
        exact(&u.differentiate(2).unwrap(), &[6.0, 24.0, 60.0, 120.0]),
    );
    // Cauchy product
    let a = Series::new(vec![1.0, 2.0, 0.0, 1.0]).unwrap();
    let b = Series::new(vec![3.0, -1.0, 4.0, 0.0]).unwrap();
    check(
        "convolution",
        exact(&a.mul(&b).unwrap(), &[3.0, 5.0, 2.0, 11.0]),
    );
    // u(qt) ↦ q^k U(k)
    check(
        "q^k scaling",
        exact(
            &u.scale_arg(0.5).unwrap(),
            &[1.0, 1.0, 0.75, 0.5, 0.3125, 0.1875],
        ),
    );
    // u(q1 t) v(q2 t) ↦ Σ q1^l q2^{k-l} U(l) V(k-l)
    let prod = a
        .scale_arg(0.5)
        .unwrap()
        .mul(&b.scale_arg(0.25).unwrap())
        .unwrap();
    let expect: Vec<f64> = (0..=3)
        .map(|k| {
            (0..=k)
                .map(|l| {
                    0.5f64.powi(l as i32)
                        * a.coeff(l)
                        * 0.25f64.powi((k - l) as i32)
                        * b.coeff(k - l)
                })
                .sum()
        })
        .collect();
    check("proportional product", exact(&prod, &expect));
    // u^{(m)}(qt) ↦ (k+m)!/k! q^k U(k+m)
    let dq = u.differentiate(1).unwrap().scale_arg(0.5).unwrap();
    check(
        "derivative under proportional delay",
        exact(&dq, &[2.0, 3.0, 3.0, 2.5, 1.875]),
    );
    Outcome::check(
        failures.is_empty(),
        if failures.is_empty() {
            "4 ordinary and 3 proportional transform rules coefficient-exact".to_string()
        } else {
            format!("failed rules: {}", failures.join(", "))
        },
    )
}

fn fd_components(f: &dyn Fn(f64) -> f64, u: [f64; 4]) -> [f64; 4] {
    let x = u[0];
    let h1 = 1e-3;
    let f1 = (-f(x + 2.0 * h1) + 8.0 * f(x + h1) - 8.0 * f(x - h1) + f(x - 2.0 * h1)) / (12.0 * h1);
    let h = 1e-2;
    let f2 = (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h))
        / (12.0 * h * h);
    let f3 = (-f(x + 3.0 * h) + 8.0 * f(x + 2.0 * h) - 13.0 * f(x + h) + 13.0 * f(x - h)
        - 8.0 * f(x - 2.0 * h)
        + f(x - 3.0 * h))
        / (8.0 * h * h * h);
    [
        f(x),
        u[1] * f1,
        u[2] * f1 + u[1] * u[1] / 2.0 * f2,
        u[3] * f1 + u[1] * u[2] * f2 + u[1].powi(3) / 6.0 * f3,
    ]
}

fn criterion_5() -> Outcome {
    let cases: [(Elementary, Box<dyn Fn(f64) -> f64>); 3] = [
        (Elementary::Exp, Box::new(f64::exp)),
        (
            Elementary::Pow(2.0 / 3.0),
            Box::new(|x: f64| x.powf(2.0 / 3.0)),
        ),
        (Elementary::Sin, Box::new(f64::sin)),
    ];
    let inputs = [
        [1.0, 1.0, 0.5, 1.0 / 6.0],
        [0.7, -0.3, 1.2, 0.4],
        [2.0, 0.5, -0.25, 2.0],
    ];
    let mut fd_dev = 0.0f64;
    for (elem, f) in &cases {
        for u in inputs {
            let s = Series::new(u.to_vec())
                .unwrap()
                .compose_elementary(*elem)
                .unwrap();
            let expect = fd_components(f.as_ref(), u);
            fd_dev = fd_dev.max(max_dev((0..4).map(|k| (s.coeff(k), expect[k]))));
        }
    }
    // initial data of the neutral example: U1 = 1, 1, 1/2
    let f1 = Series::new(vec![1.0, 1.0, 0.5])
        .unwrap()
        .compose_elementary(Elementary::Pow(2.0 / 3.0))
        .unwrap();
    let first = (f1.coeff(1) - 2.0 / 3.0).abs();
    let second = (f1.coeff(2) - 5.0 / 9.0).abs();
    Outcome::check(
        fd_dev <= 1e-7 && first <= 1e-12 && second <= 1e-12,
        format!(
            "finite-difference components max deviation {fd_dev:.2e}; F1(1)={} (2/3, dev {first:.1e}); \
             F1(2)={} vs printed 5/9 (dev {second:.3}); with U1(2)=1/2 the chain rule gives \
             1/2*2/3 + 1/2*(-2/9) = 2/9, the printed value corresponds to U1(2)=1",
            f1.coeff(1),
            f1.coeff(2)
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rows = Vec::new();
    for n in [4usize, 6, 8] {
        let mut p = fixture("example1.fde");
        p.trunc_order = n;
        let sol = match solve(&p) {
            Ok(s) => s,
            Err(e) => return Outcome::check(false, format!("N={n}: {e}")),
        };
        let bound = match estimate_error(&sol, 0.5) {
            Ok(e) => e.per_variable[0].bound,
            Err(e) => return Outcome::check(false, format!("N={n}: {e}")),
        };
        let measured = (0..=1000)
            .map(|i| {
                let t = 0.5 * i as f64 / 1000.0;
                (t.exp() - sol.series[0].evaluate(t)).abs()
            })
            .fold(0.0, f64::max);
        rows.push((n, measured, bound));
    }
    let covered = rows.iter().all(|(_, m, b)| m <= b);
    let decays = rows
        .windows(2)
        .all(|w| w[0].1 / w[1].1 >= 50.0 && w[0].2 / w[1].2 >= 50.0);
    let text: Vec<String> = rows
        .iter()
        .map(|(n, m, b)| format!("N={n}: error {m:.3e} <= bound {b:.3e}"))
        .collect();
    Outcome::check(covered && decays, text.join("; "))
}

/// Random non-neutral system in problem-file syntax.
fn random_system(rng: &mut ChaCha8Rng, trunc: usize) -> String {
    let dim = rng.gen_range(1..=2);
    let order = rng.gen_range(1..=2);
    let vars: Vec<String> = (1..=dim).map(|j| format!("u{j}")).collect();
    let coef = |rng: &mut ChaCha8Rng| format!("({:.3})", rng.gen_range(-1.0..1.0));
    let mut text = format!(
        "order = {order}\nvars = {}\ndelay q1 = proportional({:.3})\ndelay q2 = proportional({:.3})\n\
         delay c = constant(1)\nhorizon = 1\ntaylor_order = {trunc}\n",
        vars.join(", "),
        rng.gen_range(0.1..0.9),
        rng.gen_range(0.1..0.9)
    );
    for (j, v) in vars.iter().enumerate() {
        let mut terms = Vec::new();
        for _ in 0..rng.gen_range(1..=4) {
            let w = &vars[rng.gen_range(0..dim)];
            let primes = "'".repeat(rng.gen_range(0..order));
            let q = if rng.gen_bool(0.5) { "q1" } else { "q2" };
            let c = coef(rng);
            terms.push(match rng.gen_range(0..7) {
                0 => c,
                1 => format!("{c}*{w}{primes}"),
                2 => format!("{c}*{w}{primes}@{q}"),
                3 => format!("{c}*exp({:.3}*t)*{w}{primes}", rng.gen_range(-2.0..2.0)),
                4 => format!("{c}*sin({w}{primes})"),
                5 => format!("{c}*{w}{primes}*{w}@{q}"),
                _ => format!("{c}*{w}{}@c", "'".repeat(rng.gen_range(0..=order))),
            });
        }
        let init: Vec<String> = (0..order)
            .map(|_| format!("{:.3}", rng.gen_range(-1.0..1.0)))
            .collect();
        text.push_str(&format!(
            "eq {v}{} = {}\ninit {v} = [{}]\nphi {v} = cos(t) + {}*t\n",
            "'".repeat(order),
            terms.join(" + "),
            init.join(", "),
            j + 1
        ));
    }
    text
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut notes = Vec::new();
    let mut pass = true;

    // convolution vs schoolbook
    let mut conv_fail = 0;
    for _ in 0..500 {
        let a: Vec<f64> = (0..rng.gen_range(1..=9))
            .map(|_| rng.gen_range(-20..=20) as f64)
            .collect();
        let b: Vec<f64> = (0..rng.gen_range(1..=9))
            .map(|_| rng.gen_range(-20..=20) as f64)
            .collect();
        let mut school = vec![0.0; a.len() + b.len() - 1];
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                school[i + j] += x * y;
            }
        }
        let pad = |c: &[f64]| {
            let mut v = c.to_vec();
            v.resize(17, 0.0);
            Series::new(v).unwrap()
        };
        let prod = pad(&a).mul(&pad(&b)).unwrap();
        if (0..=16).any(|k| prod.coeff(k) != school.get(k).copied().unwrap_or(0.0)) {
            conv_fail += 1;
        }
    }
    pass &= conv_fail == 0;
    notes.push(format!("convolution 500 pairs, {conv_fail} mismatches"));

    // residual on generated systems
    let mut worst = 0.0f64;
    let mut failed = 0;
    for _ in 0..20 {
        let text = random_system(&mut rng, 10);
        let outcome = parse_problem(&text)
            .map_err(|e| e.to_string())
            .and_then(|p| {
                let sol = solve(&p).map_err(|e| e.to_string())?;
                let reduced = substitute_history(&p).map_err(|e| e.to_string())?;
                residual(&reduced, &sol).map_err(|e| e.to_string())
            });
        match outcome {
            Ok(series) => {
                for s in series {
                    worst = s.coeffs().iter().fold(worst, |m, c| m.max(c.abs()));
                }
            }
            Err(_) => failed += 1,
        }
    }
    pass &= failed == 0 && worst <= 1e-10;
    notes.push(format!(
        "residual on 20 systems max {worst:.2e} ({failed} failed)"
    ));

    // prefix stability
    let mut unstable = 0;
    for _ in 0..20 {
        let n = rng.gen_range(4..12);
        let text = random_system(&mut rng, n);
        let longer = text.replace(
            &format!("taylor_order = {n}\n"),
            &format!("taylor_order = {}\n", n + 4),
        );
        let solve_text = |t: &str| parse_problem(t).ok().and_then(|p| solve(&p).ok());
        match (solve_text(&text), solve_text(&longer)) {
            (Some(a), Some(b)) => {
                if a.series
                    .iter()
                    .zip(&b.series)
                    .any(|(x, y)| x.coeffs() != &y.coeffs()[..=n])
                {
                    unstable += 1;
                }
            }
            _ => unstable += 1,
        }
    }
    pass &= unstable == 0;
    notes.push(format!(
        "prefix stability N vs N+4 on 20 systems, {unstable} differ"
    ));

    // RK4 order
    let exp_problem = |h: f64| -> f64 {
        let p = CauchyProblem {
            order: 1,
            vars: vec!["u".into()],
            equations: vec![Expr::state(0, 0, None)],
            delays: vec![],
            phi: None,
            init: vec![vec![1.0]],
            horizon: 1.0,
            trunc_order: 4,
        };
        let r = substitute_history(&p).unwrap();
        let traj = integrate_reference(&r, h, 1.0).unwrap();
        (traj.sample(1.0, 0).unwrap()[0] - 1f64.exp()).abs()
    };
    let ratio = exp_problem(0.02) / exp_problem(0.01);
    pass &= (12.0..=20.0).contains(&ratio);
    notes.push(format!("RK4 halving ratio {ratio:.2}"));

    Outcome::check(pass, notes.join("; "))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 7] = [
        (
            "1 pantograph system coefficients",
            criterion_1,
            Duration::from_secs(1),
        ),
        (
            "2 second-order polynomial system",
            criterion_2,
            Duration::from_secs(1),
        ),
        (
            "3 neutral system adjudication",
            criterion_3,
            Duration::from_secs(5),
        ),
        ("4 transform rules", criterion_4, Duration::from_secs(60)),
        (
            "5 nonlinear components",
            criterion_5,
            Duration::from_secs(60),
        ),
        ("6 error bound", criterion_6, Duration::from_secs(60)),
        ("7 property suites", criterion_7, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let pass = outcome.pass && elapsed < limit;
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.1} ms, limit {} s]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64() * 1e3,
            limit.as_secs()
        );
    }
    println!("{} of 7 criteria passed", 7 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
