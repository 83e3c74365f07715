//! One function per subcommand. Each returns a verdict and a JSON result
//! body; the envelope around it is built in `main`.

use std::fmt::Write as _;
use std::path::Path;

use fuzzfix::dp::{check_theorem53, solve_system, Operator, SystemReport, Theorem53Report};
use fuzzfix::implicit::{verify_psi, PsiReport};
use fuzzfix::metric::{remark3_search, verify_fm_axioms, AxiomReport, SamplingPlan};
use fuzzfix::pairs::{
    check_common_property_ea, check_commutation_variant, check_compatibility_on_sequence,
    check_family_commuting, check_property_ea, check_range_closed, check_range_containment,
    find_coincidence_points, ClosednessReport, ClosednessStatus, CompatibilityReport,
    CompatibilityStatus, ContainmentReport, FamilyCommutingReport, DEFAULT_MONOTONE_BREAKS,
};
use fuzzfix::solver::{
    find_common_fixed_points, run_theorem_pipeline, ClosedTarget, CoincidenceStage,
    CommutationOutcome, ContainmentDirection, EaHypothesis, EaPair, EaStage, FixedPointSet,
    TheoremConfig, TheoremReport,
};
use fuzzfix::verifier::{contraction_margin, VerificationReport};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, EaChoice, RunConfig};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(Box<ConfigError>),
    #[error(transparent)]
    Core(#[from] fuzzfix::Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        CommandError::Config(Box::new(e))
    }
}

pub struct Outcome {
    pub pass: bool,
    pub result: serde_json::Value,
}

fn outcome(pass: bool, result: impl Serialize) -> Result<Outcome, CommandError> {
    Ok(Outcome {
        pass,
        result: serde_json::to_value(result).expect("reports serialize"),
    })
}

#[derive(Serialize)]
struct Sampling {
    mode: &'static str,
    triples: usize,
    seed: Option<u64>,
    t_grid: Vec<f64>,
}

#[derive(Serialize)]
struct Remark3 {
    r: f64,
    /// An off-diagonal pair with `M(x, y, r t) >= M(x, y, t)` at every sampled `t`.
    witness: Option<(f64, f64)>,
}

#[derive(Serialize)]
struct AxiomsResult {
    sampling: Sampling,
    report: AxiomReport,
    remark3: Remark3,
}

pub fn axioms(cfg: &RunConfig, seed: u64) -> Result<Outcome, CommandError> {
    let c = cfg.require_carrier()?;
    let m = cfg.require_metric()?;
    let (plan, sampling) = if m.samples == 0 {
        let plan = SamplingPlan::grid(c, m.t_grid.clone());
        let n = plan.triples.len();
        (
            plan,
            Sampling {
                mode: "grid",
                triples: n,
                seed: None,
                t_grid: m.t_grid.clone(),
            },
        )
    } else {
        let plan = SamplingPlan::random(c, m.t_grid.clone(), m.samples, seed);
        (
            plan,
            Sampling {
                mode: "random",
                triples: m.samples,
                seed: Some(seed),
                t_grid: m.t_grid.clone(),
            },
        )
    };
    let report = verify_fm_axioms(&m.fm, &plan)?;
    let witness = remark3_search(&m.fm, m.remark3_r, &plan)?;
    let pass = report.status.passed() && witness.is_none();
    outcome(
        pass,
        AxiomsResult {
            sampling,
            report,
            remark3: Remark3 {
                r: m.remark3_r,
                witness,
            },
        },
    )
}

#[derive(Serialize)]
struct PsiResult {
    report: PsiReport,
}

pub fn psi_check(cfg: &RunConfig) -> Result<Outcome, CommandError> {
    let p = cfg.require_psi()?;
    let report = verify_psi(&p.psi, p.variant, p.grid)?;
    outcome(report.all_hold(), PsiResult { report })
}

#[derive(Serialize)]
struct VerifyResult {
    report: VerificationReport,
}

pub fn verify(cfg: &RunConfig) -> Result<Outcome, CommandError> {
    let maps = cfg.require_maps()?;
    let c = cfg.require_contraction()?;
    let report = fuzzfix::verifier::verify_contraction(&maps.quad, &c.spec, &c.plan)?;
    outcome(report.status.passed(), VerifyResult { report })
}

#[derive(Serialize)]
struct PairsResult {
    coincidence: CoincidenceStage,
    commutation: Vec<CommutationOutcome>,
    property_ea: Option<EaStage>,
    compatibility: Vec<CompatibilityReport>,
    containment: ContainmentReport,
    closedness: ClosednessReport,
    family_commuting: Option<FamilyCommutingReport>,
}

/// Every pairwise predicate on the configured quadruple. Inconclusive
/// compatibility verdicts are reported but do not count as violations.
pub fn pairs(cfg: &RunConfig) -> Result<Outcome, CommandError> {
    let maps = cfg.require_maps()?;
    let t_grid = &cfg.require_metric()?.t_grid;
    let q = &maps.quad;
    let tol = cfg.tolerances;
    let th = cfg.theorem;

    let coincidence = CoincidenceStage {
        af: find_coincidence_points(&q.a, &q.f, tol.coincidence)?,
        bg: find_coincidence_points(&q.b, &q.g, tol.coincidence)?,
    };
    let mut commutation = Vec::new();
    for ((s, t), coin) in [
        ((&q.a, &q.f), &coincidence.af),
        ((&q.b, &q.g), &coincidence.bg),
    ] {
        let points = if th.commutation == fuzzfix::pairs::CommutationVariant::WeaklyCompatible {
            coin.points(q.carrier())
        } else {
            q.carrier().points()
        };
        if points.is_empty() {
            commutation.push(CommutationOutcome::Vacuous {
                pair: (s.label().to_string(), t.label().to_string()),
            });
            continue;
        }
        let report = check_commutation_variant(s, t, &q.fm, th.commutation, th.r, &points, t_grid)?;
        commutation.push(CommutationOutcome::Checked { report });
    }

    let mut property_ea = None;
    let mut compatibility = Vec::new();
    if let Some(seqs) = &cfg.sequences {
        property_ea = Some(match seqs.ea {
            EaChoice::Pair(p) => {
                let (s, t, seq) = match p {
                    EaPair::Af => (&q.a, &q.f, seqs.af.as_ref()),
                    EaPair::Bg => (&q.b, &q.g, seqs.bg.as_ref()),
                };
                let seq = seq.expect("validated when the config was loaded");
                EaStage {
                    pairs: vec![p],
                    report: check_property_ea(s, t, seq, tol.tail)?,
                }
            }
            EaChoice::Common => {
                let (af, bg) = (seqs.af.as_ref().unwrap(), seqs.bg.as_ref().unwrap());
                EaStage {
                    pairs: vec![EaPair::Af, EaPair::Bg],
                    report: check_common_property_ea((&q.a, &q.f), af, (&q.b, &q.g), bg, tol.tail)?,
                }
            }
        });
        if let Some(seq) = &seqs.af {
            compatibility.push(check_compatibility_on_sequence(
                &q.a, &q.f, &q.fm, seq, t_grid, tol.tail,
            )?);
        }
        if let Some(seq) = &seqs.bg {
            compatibility.push(check_compatibility_on_sequence(
                &q.b, &q.g, &q.fm, seq, t_grid, tol.tail,
            )?);
        }
    }

    let (inner, outer) = match th.containment {
        ContainmentDirection::BInF => (&q.b, &q.f),
        ContainmentDirection::GInA => (&q.g, &q.a),
        ContainmentDirection::FInB => (&q.f, &q.b),
    };
    let containment = check_range_containment(inner, outer, tol.containment, th.containment_mode)?;
    let closed_map = match th.closed_target {
        ClosedTarget::A => &q.a,
        ClosedTarget::B => &q.b,
    };
    let closedness = check_range_closed(closed_map, tol.containment, DEFAULT_MONOTONE_BREAKS)?;
    let family_commuting = maps
        .families
        .as_ref()
        .map(check_family_commuting)
        .transpose()?;

    let pass = commutation.iter().all(|c| match c {
        CommutationOutcome::Checked { report } => report.status.passed(),
        CommutationOutcome::Vacuous { .. } => true,
    }) && property_ea
        .as_ref()
        .is_none_or(|e| e.report.status.passed())
        && compatibility
            .iter()
            .all(|c| c.status != CompatibilityStatus::Noncompatible)
        && containment.status.passed()
        && closedness.status == ClosednessStatus::Closed
        && family_commuting.as_ref().is_none_or(|f| f.status.passed());
    outcome(
        pass,
        PairsResult {
            coincidence,
            commutation,
            property_ea,
            compatibility,
            containment,
            closedness,
            family_commuting,
        },
    )
}

#[derive(Serialize)]
struct FixpointResult {
    tol: f64,
    grid_n: usize,
    fixed_points: FixedPointSet,
}

/// Fails when the scan certifies no common fixed point.
pub fn fixpoint(cfg: &RunConfig) -> Result<Outcome, CommandError> {
    let q = &cfg.require_maps()?.quad;
    let tol = cfg.tolerances.fixed_point;
    let fixed_points = find_common_fixed_points(q, tol)?;
    let pass = match &fixed_points {
        FixedPointSet::AllPointsFixed { .. } => true,
        FixedPointSet::Certificates { certificates } => !certificates.is_empty(),
    };
    outcome(
        pass,
        FixpointResult {
            tol,
            grid_n: q.carrier().grid_n(),
            fixed_points,
        },
    )
}

fn theorem_config(cfg: &RunConfig) -> Result<TheoremConfig, CommandError> {
    let maps = cfg.require_maps()?;
    let contraction = cfg.require_contraction()?;
    let seqs = cfg.require_sequences()?;
    let ea = match seqs.ea {
        EaChoice::Pair(p) => {
            let seq = match p {
                EaPair::Af => &seqs.af,
                EaPair::Bg => &seqs.bg,
            };
            EaHypothesis::Pair(
                p,
                seq.clone().expect("validated when the config was loaded"),
            )
        }
        EaChoice::Common => EaHypothesis::Common {
            af: seqs.af.clone().unwrap(),
            bg: seqs.bg.clone().unwrap(),
        },
    };
    let mut t = TheoremConfig::new(maps.quad.clone(), contraction.spec.clone(), ea);
    t.plan = contraction.plan.clone();
    t.containment = cfg.theorem.containment;
    t.containment_mode = cfg.theorem.containment_mode;
    t.closed_target = cfg.theorem.closed_target;
    t.commutation = cfg.theorem.commutation;
    t.r = cfg.theorem.r;
    t.tolerances = cfg.tolerances;
    if let Some(f) = &maps.families {
        t = t.with_families(f.clone())?;
    }
    Ok(t)
}

#[derive(Serialize)]
struct TheoremResult {
    report: TheoremReport,
}

/// Passes only when every hypothesis holds and the uniqueness scan
/// certifies exactly one common fixed point.
pub fn theorem(cfg: &RunConfig) -> Result<Outcome, CommandError> {
    let report = run_theorem_pipeline(&theorem_config(cfg)?)?;
    outcome(
        report.hypotheses.all_pass() && report.conclusion.is_some(),
        TheoremResult { report },
    )
}

const EXPECTED_FIXED_POINT: f64 = 0.0;
const REPRODUCTION_TOL: f64 = 1e-9;
const MIN_CONTRACTION_SAMPLES: usize = 10_000;

#[derive(Serialize)]
struct SpotCheck {
    x: f64,
    y: f64,
    t: f64,
    margin: f64,
}

#[derive(Serialize)]
struct Expected {
    fixed_point: f64,
    min_contraction_samples: usize,
    tol: f64,
}

#[derive(Serialize)]
struct ReproduceResult {
    report: TheoremReport,
    spot_check: SpotCheck,
    expected: Expected,
    reproduced: bool,
}

/// The theorem pipeline on the bundled worked example, compared against
/// its known outcome: every hypothesis holds and `0` is the only common
/// fixed point.
pub fn reproduce_example6(cfg: &RunConfig) -> Result<Outcome, CommandError> {
    let tc = theorem_config(cfg)?;
    let report = run_theorem_pipeline(&tc)?;
    let margin = contraction_margin(&tc.quad, &tc.contraction, 1.0, 1.0, 1.0)?;
    let reproduced = report.hypotheses.all_pass()
        && report.contraction.samples >= MIN_CONTRACTION_SAMPLES
        && report.contraction.worst_margin >= -REPRODUCTION_TOL
        && matches!(report.conclusion, Some(z) if (z - EXPECTED_FIXED_POINT).abs() < REPRODUCTION_TOL)
        && report
            .uniqueness
            .found
            .certificates()
            .iter()
            .all(|c| c.max_residual < REPRODUCTION_TOL);
    outcome(
        reproduced,
        ReproduceResult {
            report,
            spot_check: SpotCheck {
                x: 1.0,
                y: 1.0,
                t: 1.0,
                margin,
            },
            expected: Expected {
                fixed_point: EXPECTED_FIXED_POINT,
                min_contraction_samples: MIN_CONTRACTION_SAMPLES,
                tol: REPRODUCTION_TOL,
            },
            reproduced,
        },
    )
}

#[derive(Serialize)]
struct ProblemSummary {
    lo: f64,
    hi: f64,
    grid_n: usize,
    decisions: usize,
    lambda: f64,
    beta: f64,
    max_iter: usize,
}

#[derive(Serialize)]
struct DpResult {
    problem: ProblemSummary,
    system: SystemReport,
    theorem53: Option<Theorem53Report>,
}

/// Solves all four equations; optionally writes the solutions as CSV with
/// one row per state.
pub fn dp_solve(cfg: &RunConfig, csv: Option<&Path>) -> Result<Outcome, CommandError> {
    let dp = cfg.require_dp()?;
    let prob = &dp.problem;
    let system = solve_system(prob, dp.tol, dp.max_iter)?;
    let theorem53 = dp
        .theorem53
        .as_ref()
        .map(|t| check_theorem53(prob, &t.r_seq, &t.p_seq, &t.lambda, t.tol))
        .transpose()?;
    if let Some(path) = csv {
        std::fs::write(path, solutions_csv(&system)).map_err(|source| CommandError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    let pass = system.common_solution_certified
        && system.payoff_bound.holds
        && system.solutions.iter().all(|s| s.envelope.holds)
        && theorem53.as_ref().is_none_or(|t| t.all_hold);
    let spec = prob.spec();
    outcome(
        pass,
        DpResult {
            problem: ProblemSummary {
                lo: spec.w.lo(),
                hi: spec.w.hi(),
                grid_n: spec.w.grid_n(),
                decisions: spec.decisions.len(),
                lambda: spec.lambda,
                beta: spec.beta,
                max_iter: dp.max_iter,
            },
            system,
            theorem53,
        },
    )
}

fn solutions_csv(system: &SystemReport) -> String {
    let mut out = String::from("x,U1,U2,V1,V2\n");
    let cols: Vec<&[f64]> = Operator::ALL
        .iter()
        .map(|&op| system.solution(op).value.values.as_slice())
        .collect();
    let xs = system.solution(Operator::U1).value.points();
    for (i, x) in xs.iter().enumerate() {
        write!(out, "{x}").unwrap();
        for c in &cols {
            write!(out, ",{}", c[i]).unwrap();
        }
        out.push('\n');
    }
    out
}
