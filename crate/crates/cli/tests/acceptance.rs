//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use fuzzfix::distances::{builtin_altering, make_integral_altering, BuiltinAltering, Density};
use fuzzfix::dp::{
    apply_bellman_operator, solve_system, sup_metric, DpProblem, DpSpec, ValueFunction,
};
use fuzzfix::expr::{parse, Binding, Function};
use fuzzfix::implicit::{
    make_psi, verify_psi, ConditionStatus, ConditionVariant, Gauge, Gauge3, PsiSpec,
};
use fuzzfix::metric::{verify_fm_axioms, Axiom, Carrier, FuzzyMetric, SamplingPlan, TNorm};
use fuzzfix::pairs::{MapQuadruple, SelfMap};
use fuzzfix::verifier::{
    contraction_margin, verify_integral_contraction, verify_main_contraction, ContractionSpec,
    VerificationPlan, DEFAULT_T_GRID,
};
use serde_json::Value;

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fuzzfix")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

/// Runs the binary and returns its exit code and the report bytes.
fn run(args: &[&str], out: &Path) -> (i32, Vec<u8>) {
    let status = Command::new(bin())
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .expect("binary runs");
    (
        status.code().unwrap_or(-1),
        std::fs::read(out).unwrap_or_default(),
    )
}

fn example6_quad(n: usize) -> MapQuadruple {
    let c = Carrier::unit(n).unwrap();
    let m = |l: &str, e: &str| SelfMap::from_expr(c, l, e).unwrap();
    MapQuadruple::new(
        m("A", "x/2"),
        m("B", "x/4"),
        m("F", "x"),
        m("G", "0"),
        FuzzyMetric::standard_abs(c, TNorm::Product),
    )
    .unwrap()
}

fn criterion1() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let start = Instant::now();
    let (code, bytes) = run(&["reproduce-example6"], &out);
    let elapsed = start.elapsed();
    check(code == 0, format!("exit code {code}"))?;
    let v: Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
    let r = &v["result"]["report"];
    for h in [
        "a_property_ea",
        "b_containment",
        "c_closedness",
        "d_contraction",
    ] {
        check(
            r["hypotheses"][h]["status"] == "pass",
            format!("hypothesis {h} not certified"),
        )?;
    }
    check(
        r["containment"]["inner"] == "G" && r["containment"]["outer"] == "A",
        "containment is not G(X) in A(X)",
    )?;
    let samples = r["contraction"]["samples"].as_u64().unwrap_or(0);
    let worst = r["contraction"]["worst_margin"]
        .as_f64()
        .unwrap_or(f64::NEG_INFINITY);
    check(
        samples >= 10_000,
        format!("only {samples} contraction samples"),
    )?;
    check(worst >= -1e-9, format!("worst margin {worst}"))?;
    check(
        r["contraction"]["form"] == "main_411",
        "wrong contractive form",
    )?;
    let z = r["conclusion"].as_f64().ok_or("no conclusion")?;
    check(z.abs() < 1e-9, format!("fixed point {z}"))?;
    let certs = r["uniqueness"]["found"]["certificates"]
        .as_array()
        .ok_or("no certificates")?;
    check(
        certs.len() == 1,
        format!("{} common fixed points", certs.len()),
    )?;
    let res = certs[0]["max_residual"].as_f64().unwrap_or(f64::INFINITY);
    check(res < 1e-9, format!("residual {res}"))?;
    check(
        elapsed < Duration::from_secs(60),
        format!("runtime {elapsed:?}"),
    )?;
    Ok(format!(
        "{samples} samples, worst margin {worst}, z = {z}, residual {res}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn criterion2() -> Outcome {
    let quad = example6_quad(101);
    let spec = ContractionSpec::main(
        make_psi(PsiSpec::Ex2_2 { k: 0.5 }).unwrap(),
        builtin_altering(BuiltinAltering::Linear),
    );
    let got = contraction_margin(&quad, &spec, 1.0, 1.0, 1.0).map_err(|e| e.to_string())?;
    // direct evaluation: A1 = 1/2, B1 = 1/4, F1 = 1, G1 = 0 at t = 1
    let m = |a: f64, b: f64| 1.0 / (1.0 + (a - b).abs());
    let phi = |s: f64| 1.0 - s;
    let lhs = phi(m(1.0, 0.0));
    let rhs = 0.5
        * phi(m(0.5, 0.25))
            .min(phi(m(0.5, 1.0)))
            .min(phi(m(0.25, 0.0)));
    check((lhs - 0.5).abs() < 1e-15, format!("oracle LHS {lhs}"))?;
    check((rhs - 0.1).abs() < 1e-15, format!("oracle k*min {rhs}"))?;
    check((got - 0.4).abs() <= 1e-9, format!("margin {got}"))?;
    check(
        (got - (lhs - rhs)).abs() <= 1e-12,
        format!("margin {got} vs oracle {}", lhs - rhs),
    )?;
    Ok(format!("margin {got} (LHS {lhs}, k*min {rhs})"))
}

fn criterion3() -> Outcome {
    let c = Carrier::unit(101).unwrap();
    let t_grid = DEFAULT_T_GRID.to_vec();
    let plan = SamplingPlan::random(&c, t_grid.clone(), 1000, 0);
    check(
        plan.triples.len() == 1000,
        "plan does not hold 1000 triples",
    )?;
    let fm = FuzzyMetric::standard_abs(c, TNorm::Product);
    let report = verify_fm_axioms(&fm, &plan).map_err(|e| e.to_string())?;
    let wanted = [
        Axiom::Fm1,
        Axiom::Fm2,
        Axiom::Fm3,
        Axiom::Fm4,
        Axiom::Fm5,
        Axiom::Monotone,
    ];
    for a in wanted {
        let chk = report.check(a);
        check(
            chk.status.passed(),
            format!("{a:?} failed at {:?}", chk.witness),
        )?;
        check(
            chk.worst_margin >= -1e-12,
            format!("{a:?} worst margin {}", chk.worst_margin),
        )?;
    }
    // independent triangle-law oracle on the same triples
    let m = |x: f64, y: f64, t: f64| t / (t + (x - y).abs());
    let mut worst = f64::INFINITY;
    for &(x, y, z) in &plan.triples {
        for &t in &t_grid {
            for &s in &t_grid {
                worst = worst.min(m(x, z, t + s) - m(x, y, t) * m(y, z, s));
            }
        }
    }
    check(worst >= -1e-12, format!("oracle triangle margin {worst}"))?;

    let constant = FuzzyMetric::from_membership(c, TNorm::Product, "0.5", |_, _, _| 0.5);
    let bad = verify_fm_axioms(&constant, &plan).map_err(|e| e.to_string())?;
    let fm2 = bad.check(Axiom::Fm2);
    check(!fm2.status.passed(), "M = 0.5 passes FM-2")?;
    let w = fm2.witness.ok_or("FM-2 failure without a witness")?;
    check(
        w.x == w.y,
        format!("FM-2 witness is off the diagonal: {w:?}"),
    )?;
    Ok(format!(
        "standard metric passes on 1000 triples (oracle triangle margin {worst:.3e}); M = 0.5 fails FM-2 at x = y = {}",
        w.x
    ))
}

fn criterion4() -> Outcome {
    let lin = builtin_altering(BuiltinAltering::Linear);
    let int = make_integral_altering(&Density::constant(1.0), 1e-10).map_err(|e| e.to_string())?;
    let mut gauge_gap = 0.0f64;
    for i in 0..=100 {
        let s = i as f64 / 100.0;
        gauge_gap = gauge_gap.max((lin.eval(s).unwrap() - int.eval(s).unwrap()).abs());
    }
    check(gauge_gap <= 1e-9, format!("gauges differ by {gauge_gap}"))?;

    let quad = example6_quad(51);
    let psi = make_psi(PsiSpec::Ex2_2 { k: 0.5 }).unwrap();
    let plan = VerificationPlan::new(51, DEFAULT_T_GRID.to_vec()).unwrap();
    let l = verify_main_contraction(&quad, &psi, &lin, &plan).map_err(|e| e.to_string())?;
    let i = verify_integral_contraction(&quad, &psi, &Density::constant(1.0), &plan, 1e-10)
        .map_err(|e| e.to_string())?;
    check(l.status == i.status, "verdicts differ")?;
    check(l.samples == i.samples, "sample counts differ")?;
    let worst_gap = (l.worst_margin - i.worst_margin).abs();
    check(
        worst_gap <= 1e-9,
        format!("worst margins differ by {worst_gap}"),
    )?;
    let main_spec = ContractionSpec::main(psi.clone(), lin);
    let int_spec = ContractionSpec::integral(psi, Density::constant(1.0), 1e-10);
    let mut margin_gap = 0.0f64;
    for x in Carrier::unit(21).unwrap().points() {
        for y in Carrier::unit(21).unwrap().points() {
            for &t in &DEFAULT_T_GRID {
                let a = contraction_margin(&quad, &main_spec, x, y, t).unwrap();
                let b = contraction_margin(&quad, &int_spec, x, y, t).unwrap();
                margin_gap = margin_gap.max((a - b).abs());
            }
        }
    }
    check(
        margin_gap <= 1e-9,
        format!("pointwise margins differ by {margin_gap}"),
    )?;
    Ok(format!(
        "gauge gap {gauge_gap:.1e}, both {:?} on {} samples, worst-margin gap {worst_gap:.1e}, pointwise gap {margin_gap:.1e}",
        l.status, l.samples
    ))
}

fn criterion5() -> Outcome {
    let density = || Density::constant(1.0);
    let half = || Gauge::new("u/2", |u| u / 2.0);
    let specs = [
        ("ex2_1", PsiSpec::Ex2_1 { delta: half() }),
        ("ex2_2", PsiSpec::Ex2_2 { k: 0.5 }),
        (
            "ex2_3",
            PsiSpec::Ex2_3 {
                delta: Gauge3::new("max/2", |a, b, c| a.max(b).max(c) / 2.0),
            },
        ),
        ("ex2_4", PsiSpec::Ex2_4 { k: 0.5 }),
        (
            "ex2_5",
            PsiSpec::Ex2_5 {
                a: 0.5,
                density: density(),
                quad_tol: 1e-10,
            },
        ),
        (
            "ex2_6",
            PsiSpec::Ex2_6 {
                delta: half(),
                density: density(),
                quad_tol: 1e-10,
            },
        ),
    ];
    let mut failures = Vec::new();
    for (name, spec) in specs {
        let psi = make_psi(spec).map_err(|e| e.to_string())?;
        let r = verify_psi(&psi, ConditionVariant::AsPrinted, 11).map_err(|e| e.to_string())?;
        if r.psi1.status != ConditionStatus::Holds {
            failures.push(format!(
                "{name} psi1 {:?} at {:?} (step {:?})",
                r.psi1.status, r.psi1.witness, r.psi1.value
            ));
        }
        for (c, cond) in [("psi2", &r.psi2), ("psi3", &r.psi3), ("psi4", &r.psi4)] {
            if cond.status != ConditionStatus::HoldsVacuously {
                failures.push(format!("{name} {c} {:?}", cond.status));
            }
        }
    }

    // truth table for the strict psi3 consequent on ex2_2, k = 1/2:
    // psi(u,0,0,u) = u - k*min{0,0,u} = u, which is >= 0 with u > 0 first at u = 0.1
    let psi = make_psi(PsiSpec::Ex2_2 { k: 0.5 }).unwrap();
    let strict = verify_psi(&psi, ConditionVariant::Strict, 11).map_err(|e| e.to_string())?;
    let grid: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
    let first = grid
        .iter()
        .copied()
        .find(|&u| u > 0.0 && u - 0.5 * 0.0f64.min(u) >= 0.0)
        .unwrap();
    if strict.psi3.status != ConditionStatus::Fails
        || strict.psi3.witness != Some([first, 0.0, 0.0, first])
        || strict.psi3.value != Some(first)
    {
        failures.push(format!(
            "strict psi3 on ex2_2: {:?} witness {:?} value {:?}, expected witness [{first}, 0, 0, {first}]",
            strict.psi3.status, strict.psi3.witness, strict.psi3.value
        ));
    }
    if failures.is_empty() {
        Ok(format!(
            "psi1 holds for all six on 11^4 grids; as printed psi2-psi4 hold vacuously; strict psi3 fails at [{first}, 0, 0, {first}]"
        ))
    } else {
        Err(failures.join("; "))
    }
}

fn criterion6() -> Outcome {
    let f = |t: &str, v: &[&str]| Function::parse(t, v).unwrap();
    let w = Carrier::unit(201).unwrap();
    let start = Instant::now();
    let prob = DpProblem::new(DpSpec {
        w,
        decisions: (0..=10).map(|i| i as f64 / 10.0).collect(),
        q: f("x*y", &["x", "y"]),
        payoffs: ["z/2"; 4].map(|p| f(p, &["x", "y", "z"])),
        tau: f("x*y", &["x", "y"]),
        lambda: 1.0,
        beta: 0.5,
    })
    .map_err(|e| e.to_string())?;
    let tol = 1e-7;
    let sys = solve_system(&prob, tol, 40).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let exact = ValueFunction::from_fn(&w, |x| 2.0 * x);
    let mut worst_err = 0.0f64;
    let mut worst_iter = 0;
    for s in &sys.solutions {
        let err = sup_metric(&s.value, &exact).unwrap();
        worst_err = worst_err.max(err);
        worst_iter = worst_iter.max(s.iterations);
        check(
            s.iterations <= 40,
            format!("{:?} took {} iterations", s.operator, s.iterations),
        )?;
        check(
            s.envelope.holds,
            format!(
                "{:?} envelope flagged {}",
                s.operator, s.envelope.worst_excess
            ),
        )?;
        // recheck the envelope from the raw trace
        let r0 = s.trace[0];
        for (k, r) in s.trace.iter().enumerate() {
            let bound = 0.5f64.powi(k as i32) * r0;
            check(
                *r <= bound + 1e-9,
                format!(
                    "{:?} residual {r} above envelope {bound} at k = {k}",
                    s.operator
                ),
            )?;
        }
        // and one extra application from the reported solution
        let again = apply_bellman_operator(&prob, s.operator, &s.value).unwrap();
        check(
            sup_metric(&again, &s.value).unwrap() <= 2.0 * tol,
            format!("{:?} is not a fixed point", s.operator),
        )?;
    }
    check(worst_err < 1e-6, format!("error against 2x is {worst_err}"))?;
    check(
        sys.max_disagreement <= 2.0 * tol,
        format!("solutions disagree by {}", sys.max_disagreement),
    )?;
    check(
        sys.common_solution_certified,
        "common solution not certified",
    )?;
    check(
        elapsed < Duration::from_secs(5),
        format!("runtime {elapsed:?}"),
    )?;
    Ok(format!(
        "error {worst_err:.1e} in at most {worst_iter} iterations, disagreement {:.1e}, {:.3}s",
        sys.max_disagreement,
        elapsed.as_secs_f64()
    ))
}

fn criterion7() -> Outcome {
    let (x, y, z) = (0.3f64, 2.0f64, -1.5f64);
    let corpus: [(&str, f64); 50] = [
        ("1", 1.0),
        ("2.5", 2.5),
        ("1e3", 1000.0),
        ("2.5E-2", 0.025),
        (".5", 0.5),
        ("x", x),
        ("-x", -x),
        ("--x", x),
        ("x + y", x + y),
        ("x - y - z", (x - y) - z),
        ("x*y", x * y),
        ("x/y", x / y),
        ("x/y/4", (x / y) / 4.0),
        ("1 + 2*3", 7.0),
        ("(1 + 2)*3", 9.0),
        ("2^3", 8.0),
        ("2^3^2", 512.0),
        ("-2^2", -4.0),
        ("(-2)^2", 4.0),
        ("2^-1", 0.5),
        ("y^0.5", 2.0f64.sqrt()),
        ("x^2 + y^2", 0.09 + 4.0),
        ("1 - x", 0.7),
        ("x/2", 0.15),
        ("x/4", 0.075),
        ("1/(1 + x)", 1.0 / 1.3),
        ("y/(y + abs(x - z))", 2.0 / 3.8),
        ("abs(z)", 1.5),
        ("abs(x - y)", 1.7),
        ("sqrt(y*8)", 4.0),
        ("sqrt(x*x)", x),
        ("exp(0)", 1.0),
        ("exp(1)", std::f64::consts::E),
        ("exp(-y)", (-2.0f64).exp()),
        ("min(x, y)", x),
        ("max(x, y)", y),
        ("min(x, y, z)", z),
        ("max(x, y, z, 7)", 7.0),
        ("min(x)", x),
        ("max(min(x, y), z)", x),
        ("min(1, max(0, z))", 0.0),
        ("0.5*min(y, abs(z), x)", 0.15),
        ("x*y + y*z", 0.6 - 3.0),
        ("x - -y", x + y),
        ("2*x + exp(-y)", 0.6 + (-2.0f64).exp()),
        ("(x + y)*(x - y)", x * x - y * y),
        ("((((x))))", x),
        ("3*x^2/2", 0.135),
        ("y^x", 2.0f64.powf(0.3)),
        ("  x\t+\n1  ", 1.3),
    ];
    let bind = Binding::new().with("x", x).with("y", y).with("z", z);
    let mut worst = 0.0f64;
    for (text, want) in corpus {
        let got = parse(text)
            .map_err(|e| format!("`{text}`: {e}"))?
            .eval(&bind)
            .map_err(|e| format!("`{text}`: {e}"))?;
        let err = (got - want).abs();
        check(
            err <= 1e-12,
            format!("`{text}` gave {got}, expected {want}"),
        )?;
        worst = worst.max(err);
    }
    // offsets: end of input after a dangling operator, an unclosed paren
    // at end of input, and a stray character at its byte position
    let malformed = [("x +", 3), ("2*(x", 4), ("3 $ 4", 2)];
    for (text, offset) in malformed {
        match parse(text) {
            Ok(_) => return Err(format!("`{text}` parsed")),
            Err(e) => check(
                e.offset == offset,
                format!("`{text}` error at {} not {offset}: {e}", e.offset),
            )?,
        }
    }
    Ok(format!(
        "50 expressions within {worst:.1e}; 3 malformed inputs positioned"
    ))
}

fn criterion8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs();
    let path = |f: &str| cfg.join(f).display().to_string();
    let (standard, example6, dp) = (
        path("standard_metric.toml"),
        path("example6.toml"),
        path("dp_linear.toml"),
    );
    let cases: [(&str, Option<&str>); 8] = [
        ("axioms", Some(&standard)),
        ("psi-check", Some(&example6)),
        ("verify", Some(&example6)),
        ("pairs", Some(&example6)),
        ("fixpoint", Some(&example6)),
        ("theorem", Some(&example6)),
        ("dp-solve", Some(&dp)),
        ("reproduce-example6", None),
    ];
    for (cmd, config) in cases {
        let mut reports = Vec::new();
        for jobs in ["1", "4"] {
            let mut args = vec![cmd, "--seed", "7", "--jobs", jobs];
            if let Some(c) = config {
                args.extend(["--config", c]);
            }
            let out = dir.path().join(format!("{cmd}-{jobs}.json"));
            let (code, bytes) = run(&args, &out);
            check(
                code == 0 || code == 1,
                format!("{cmd} --jobs {jobs} exited {code}"),
            )?;
            check(!bytes.is_empty(), format!("{cmd} wrote no report"))?;
            reports.push(bytes);
        }
        check(
            reports[0] == reports[1],
            format!("{cmd} reports differ between --jobs 1 and 4"),
        )?;
    }
    Ok("8 commands byte-identical at --jobs 1 and 4 with --seed 7".into())
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 8] = [
        (1, criterion1),
        (2, criterion2),
        (3, criterion3),
        (4, criterion4),
        (5, criterion5),
        (6, criterion6),
        (7, criterion7),
        (8, criterion8),
    ];
    let mut failed = 0;
    for (n, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS criterion {n}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {n}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 8 criteria failed");
        std::process::exit(1);
    }
}
