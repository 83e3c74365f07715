//! T-norms, interval carriers, fuzzy metrics and sampled axiom checks.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{input, Result};
use crate::report::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TNormKind {
    Minimum,
    Product,
    Lukasiewicz,
    Custom,
}

type Binary = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A t-norm on the unit square.
#[derive(Clone)]
pub enum TNorm {
    Minimum,
    Product,
    Lukasiewicz,
    Custom(Binary),
}

impl fmt::Debug for TNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TNorm::{:?}", self.kind())
    }
}

impl TNorm {
    pub fn custom(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        TNorm::Custom(Arc::new(f))
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "minimum" | "min" => Ok(TNorm::Minimum),
            "product" | "prod" => Ok(TNorm::Product),
            "lukasiewicz" => Ok(TNorm::Lukasiewicz),
            other => input(format!("unknown t-norm `{other}`")),
        }
    }

    pub fn kind(&self) -> TNormKind {
        match self {
            TNorm::Minimum => TNormKind::Minimum,
            TNorm::Product => TNormKind::Product,
            TNorm::Lukasiewicz => TNormKind::Lukasiewicz,
            TNorm::Custom(_) => TNormKind::Custom,
        }
    }

    /// Unchecked evaluation, for callers that already validated the inputs.
    pub(crate) fn apply(&self, a: f64, b: f64) -> f64 {
        match self {
            TNorm::Minimum => a.min(b),
            TNorm::Product => a * b,
            TNorm::Lukasiewicz => {
                // ordered so that T(a, 1) = a and T(a, b) = T(b, a) bit for bit
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                (lo - (1.0 - hi)).max(0.0)
            }
            TNorm::Custom(f) => f(a, b),
        }
    }

    pub fn eval(&self, a: f64, b: f64) -> Result<f64> {
        tnorm_eval(self, a, b)
    }

    /// Samples the t-norm laws on a uniform `grid_n`-point grid of the unit
    /// interval and returns every violated law with a witness.
    pub fn check_laws(&self, grid_n: usize) -> Result<Vec<LawViolation>> {
        if grid_n < 2 {
            return input("t-norm law grid needs at least 2 points");
        }
        let g: Vec<f64> = (0..grid_n)
            .map(|i| i as f64 / (grid_n - 1) as f64)
            .collect();
        let mut out = Vec::new();
        let mut record = |law: &'static str, point: Vec<f64>| {
            if !out.iter().any(|v: &LawViolation| v.law == law) {
                out.push(LawViolation { law, point });
            }
        };
        for &a in &g {
            let t = self.apply(a, 1.0);
            if t != a {
                record("identity", vec![a]);
            }
            for &b in &g {
                let ab = self.apply(a, b);
                if !(0.0..=1.0).contains(&ab) {
                    record("range", vec![a, b]);
                }
                if ab != self.apply(b, a) {
                    record("commutative", vec![a, b]);
                }
                for &c in &g {
                    let lhs = self.apply(ab, c);
                    let rhs = self.apply(a, self.apply(b, c));
                    if (lhs - rhs).abs() > 1e-12 {
                        record("associative", vec![a, b, c]);
                    }
                    // monotone in the first argument; commutativity covers the second
                    if a <= b && self.apply(a, c) > self.apply(b, c) + 1e-12 {
                        record("monotone", vec![a, b, c]);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawViolation {
    pub law: &'static str,
    pub point: Vec<f64>,
}

/// Evaluates `tnorm` on `(a, b)` after range validation.
pub fn tnorm_eval(tnorm: &TNorm, a: f64, b: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
        return input(format!(
            "t-norm arguments must lie in [0,1], got ({a}, {b})"
        ));
    }
    let v = tnorm.apply(a, b);
    if !(0.0..=1.0).contains(&v) {
        return input(format!("t-norm returned {v} outside [0,1] at ({a}, {b})"));
    }
    Ok(v)
}

/// A compact interval `[lo, hi]` sampled on a uniform grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Carrier {
    lo: f64,
    hi: f64,
    grid_n: usize,
}

impl Carrier {
    pub fn new(lo: f64, hi: f64, grid_n: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return input(format!("carrier needs finite lo < hi, got [{lo}, {hi}]"));
        }
        if grid_n < 2 {
            return input(format!(
                "carrier grid needs at least 2 points, got {grid_n}"
            ));
        }
        Ok(Self { lo, hi, grid_n })
    }

    pub fn unit(grid_n: usize) -> Result<Self> {
        Self::new(0.0, 1.0, grid_n)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.grid_n - 1) as f64
    }

    /// Grid point `i`; the last point is exactly `hi`.
    pub fn point(&self, i: usize) -> f64 {
        if i + 1 == self.grid_n {
            self.hi
        } else {
            self.lo + i as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.grid_n).map(|i| self.point(i)).collect()
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    /// Same interval with half the grid spacing.
    pub fn refined(&self) -> Self {
        Self {
            grid_n: 2 * self.grid_n - 1,
            ..*self
        }
    }

    pub fn with_grid(&self, grid_n: usize) -> Result<Self> {
        Self::new(self.lo, self.hi, grid_n)
    }
}

type Membership = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// A fuzzy metric `M(x, y, t)` with its t-norm on an interval carrier.
///
/// Membership is defined for `t >= 0`; every constructor in this module
/// pins `M(x, y, 0) = 0`, but custom memberships are taken as given so the
/// axiom checker can catch violations.
#[derive(Clone)]
pub struct FuzzyMetric {
    carrier: Carrier,
    membership: Membership,
    tnorm: TNorm,
    label: String,
}

impl fmt::Debug for FuzzyMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FuzzyMetric")
            .field("carrier", &self.carrier)
            .field("tnorm", &self.tnorm)
            .field("label", &self.label)
            .finish()
    }
}

impl FuzzyMetric {
    pub fn from_membership(
        carrier: Carrier,
        tnorm: TNorm,
        label: impl Into<String>,
        membership: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            carrier,
            membership: Arc::new(membership),
            tnorm,
            label: label.into(),
        }
    }

    /// The metric `t / (t + |x - y|)` on `carrier`.
    pub fn standard_abs(carrier: Carrier, tnorm: TNorm) -> Self {
        Self::from_membership(carrier, tnorm, "t/(t+|x-y|)", |x, y, t| {
            if t <= 0.0 {
                0.0
            } else {
                t / (t + (x - y).abs())
            }
        })
    }

    pub fn carrier(&self) -> &Carrier {
        &self.carrier
    }

    /// The same membership on a different grid of the same interval.
    pub fn with_carrier(&self, carrier: Carrier) -> Result<Self> {
        if carrier.lo() != self.carrier.lo() || carrier.hi() != self.carrier.hi() {
            return input("with_carrier only changes the grid, not the interval");
        }
        Ok(Self {
            carrier,
            ..self.clone()
        })
    }

    pub fn tnorm(&self) -> &TNorm {
        &self.tnorm
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn m(&self, x: f64, y: f64, t: f64) -> f64 {
        (self.membership)(x, y, t)
    }
}

/// Builds `M(x,y,t) = t / (t + d(x,y))` from a crisp metric `d`, after
/// checking nonnegativity, symmetry and `d(x,x) = 0` on the carrier grid.
pub fn standard_fuzzy_metric(
    carrier: Carrier,
    d: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    tnorm: TNorm,
    label: impl Into<String>,
) -> Result<FuzzyMetric> {
    let pts = carrier.points();
    for &x in &pts {
        let dxx = d(x, x);
        if dxx != 0.0 {
            return input(format!("crisp metric has d({x},{x}) = {dxx}, expected 0"));
        }
        for &y in &pts {
            let dxy = d(x, y);
            if !dxy.is_finite() || dxy < 0.0 {
                return input(format!(
                    "crisp metric has negative or non-finite d({x},{y}) = {dxy}"
                ));
            }
            if dxy != d(y, x) {
                return input(format!("crisp metric is not symmetric at ({x},{y})"));
            }
        }
    }
    Ok(FuzzyMetric::from_membership(
        carrier,
        tnorm,
        label,
        move |x, y, t| {
            if t <= 0.0 {
                0.0
            } else {
                t / (t + d(x, y))
            }
        },
    ))
}

/// Sample points for the axiom checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingPlan {
    /// Positive scales `t` (and `s` for the triangle law).
    pub t_grid: Vec<f64>,
    /// Points scanned for pairwise searches.
    pub points: Vec<f64>,
    /// `(x, y, z)` triples for the axiom checks.
    pub triples: Vec<(f64, f64, f64)>,
}

impl SamplingPlan {
    /// Every triple of carrier grid points.
    pub fn grid(carrier: &Carrier, t_grid: Vec<f64>) -> Self {
        let pts = carrier.points();
        let mut triples = Vec::with_capacity(pts.len().pow(3));
        for &x in &pts {
            for &y in &pts {
                for &z in &pts {
                    triples.push((x, y, z));
                }
            }
        }
        Self {
            t_grid,
            points: pts,
            triples,
        }
    }

    /// `count` uniform random triples drawn from a seeded ChaCha stream.
    /// Every third triple repeats `x` as `y` so the diagonal is exercised.
    pub fn random(carrier: &Carrier, t_grid: Vec<f64>, count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo, hi) = (carrier.lo(), carrier.hi());
        let triples = (0..count)
            .map(|i| {
                let x = rng.gen_range(lo..=hi);
                let y = rng.gen_range(lo..=hi);
                let z = rng.gen_range(lo..=hi);
                if i % 3 == 2 {
                    (x, x, z)
                } else {
                    (x, y, z)
                }
            })
            .collect();
        Self {
            t_grid,
            points: carrier.points(),
            triples,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.t_grid.is_empty() || self.triples.is_empty() {
            return input("sampling plan needs a nonempty t-grid and at least one triple");
        }
        if let Some(t) = self.t_grid.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return input(format!("t-grid entries must be positive, got {t}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Axiom {
    #[serde(rename = "range")]
    Range,
    #[serde(rename = "FM-1")]
    Fm1,
    #[serde(rename = "FM-2")]
    Fm2,
    #[serde(rename = "FM-3")]
    Fm3,
    #[serde(rename = "FM-4")]
    Fm4,
    #[serde(rename = "FM-5")]
    Fm5,
    #[serde(rename = "nondecreasing_in_t")]
    Monotone,
}

const AXIOMS: [Axiom; 7] = [
    Axiom::Range,
    Axiom::Fm1,
    Axiom::Fm2,
    Axiom::Fm3,
    Axiom::Fm4,
    Axiom::Fm5,
    Axiom::Monotone,
];

/// The sample where an axiom failed. `z` and `s` are set only for the
/// triangle law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AxiomWitness {
    pub x: f64,
    pub y: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
    pub t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomCheck {
    pub axiom: Axiom,
    pub status: Verdict,
    /// Smallest margin seen; a check fails when its margin drops below zero.
    pub worst_margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<AxiomWitness>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxiomReport {
    pub metric: String,
    pub tnorm: TNormKind,
    pub status: Verdict,
    pub checks: Vec<AxiomCheck>,
}

impl AxiomReport {
    pub fn check(&self, axiom: Axiom) -> &AxiomCheck {
        self.checks
            .iter()
            .find(|c| c.axiom == axiom)
            .expect("all axioms are reported")
    }
}

const FM2_TOL: f64 = 1e-12;
const FM4_TOL: f64 = 1e-12;
const MONO_TOL: f64 = 1e-12;
const FM5_STEP: f64 = 1e-6;
const FM5_BOUND: f64 = 1e-3;

#[derive(Clone, Copy)]
struct Acc {
    worst: f64,
    witness: Option<AxiomWitness>,
    samples: usize,
}

impl Acc {
    fn new() -> Self {
        Self {
            worst: f64::INFINITY,
            witness: None,
            samples: 0,
        }
    }

    fn push(&mut self, margin: f64, failed: bool, w: AxiomWitness) {
        self.samples += 1;
        if margin < self.worst || margin.is_nan() {
            self.worst = margin;
        }
        if failed && self.witness.is_none() {
            self.witness = Some(w);
        }
    }

    fn merge(mut self, other: &Acc) -> Self {
        self.samples += other.samples;
        if other.worst < self.worst || other.worst.is_nan() {
            self.worst = other.worst;
        }
        if self.witness.is_none() {
            self.witness = other.witness;
        }
        self
    }
}

fn w(x: f64, y: f64, t: f64) -> AxiomWitness {
    AxiomWitness {
        x,
        y,
        z: None,
        t,
        s: None,
    }
}

fn check_triple(fm: &FuzzyMetric, ts: &[f64], (x, y, z): (f64, f64, f64)) -> [Acc; 7] {
    let mut acc = [Acc::new(); 7];
    let [range, fm1, fm2, fm3, fm4, fm5, mono] = &mut acc;
    let m0 = fm.m(x, y, 0.0);
    fm1.push(-m0.abs(), m0 != 0.0, w(x, y, 0.0));

    let mut max_gap = 0.0_f64;
    for (ti, &t) in ts.iter().enumerate() {
        let mxy = fm.m(x, y, t);
        range.push(mxy.min(1.0 - mxy), !(0.0..=1.0).contains(&mxy), w(x, y, t));

        let mxx = fm.m(x, x, t);
        let fwd = FM2_TOL - (mxx - 1.0).abs();
        fm2.push(fwd, fwd < 0.0, w(x, x, t));
        max_gap = max_gap.max((1.0 - mxy).abs());

        let myx = fm.m(y, x, t);
        fm3.push(-(mxy - myx).abs(), mxy != myx, w(x, y, t));

        for &s in ts {
            let lhs = fm.m(x, z, t + s);
            let rhs = fm.tnorm.apply(mxy, fm.m(y, z, s));
            let margin = lhs - rhs;
            fm4.push(
                margin,
                margin < -FM4_TOL,
                AxiomWitness {
                    x,
                    y,
                    z: Some(z),
                    t,
                    s: Some(s),
                },
            );
        }

        let h = FM5_STEP * t;
        let mh = fm.m(x, y, t + h);
        let jump = (mh - mxy).abs();
        fm5.push(FM5_BOUND - jump, jump > FM5_BOUND, w(x, y, t));

        let fd = mh - mxy;
        mono.push(fd, fd < -MONO_TOL, w(x, y, t));
        if let Some(&t_next) = ts.get(ti + 1) {
            let d = fm.m(x, y, t_next) - mxy;
            mono.push(d, d < -MONO_TOL, w(x, y, t_next));
        }
    }
    // Reverse FM-2: M(x,y,t) = 1 for every sampled t must force x = y.
    if x != y {
        let margin = max_gap - FM2_TOL;
        fm2.push(margin, margin <= 0.0, w(x, y, ts[0]));
    }
    acc
}

/// Checks FM-1 through FM-5, the range of `M`, and monotonicity in `t` on
/// every sample of `plan`.
///
/// FM-5 is checked through a sampled modulus of continuity
/// `|M(x,y,t+h) - M(x,y,t)| <= 1e-3` with `h = 1e-6 t`. The reverse
/// direction of FM-2 is only exercised on sampled pairs, so a pass there is
/// sound for the samples but not complete.
pub fn verify_fm_axioms(fm: &FuzzyMetric, plan: &SamplingPlan) -> Result<AxiomReport> {
    plan.validate()?;
    let mut ts = plan.t_grid.clone();
    ts.sort_by(f64::total_cmp);
    ts.dedup();

    let per_triple: Vec<[Acc; 7]> = plan
        .triples
        .par_iter()
        .map(|&tr| check_triple(fm, &ts, tr))
        .collect();
    let merged = per_triple.iter().fold([Acc::new(); 7], |mut acc, item| {
        for (a, b) in acc.iter_mut().zip(item) {
            *a = a.merge(b);
        }
        acc
    });

    let checks: Vec<AxiomCheck> = AXIOMS
        .iter()
        .zip(merged.iter())
        .map(|(&axiom, acc)| AxiomCheck {
            axiom,
            status: Verdict::from_pass(acc.witness.is_none()),
            worst_margin: acc.worst,
            witness: acc.witness,
            samples: acc.samples,
        })
        .collect();
    Ok(AxiomReport {
        metric: fm.label.clone(),
        tnorm: fm.tnorm.kind(),
        status: Verdict::from_pass(checks.iter().all(|c| c.status.passed())),
        checks,
    })
}

/// Searches for an off-diagonal pair with `M(x,y,rt) >= M(x,y,t)` for every
/// sampled `t`. In a genuine fuzzy metric such a pair cannot exist, so a
/// returned pair is a counterexample.
pub fn remark3_search(fm: &FuzzyMetric, r: f64, plan: &SamplingPlan) -> Result<Option<(f64, f64)>> {
    if !(r > 0.0 && r < 1.0) {
        return input(format!("r must lie in (0,1), got {r}"));
    }
    if plan.t_grid.is_empty() || plan.points.is_empty() {
        return input("sampling plan needs a nonempty t-grid and point set");
    }
    let pts = &plan.points;
    let hits: Vec<Option<(f64, f64)>> = pts
        .par_iter()
        .map(|&x| {
            pts.iter().find_map(|&y| {
                let witness = x != y
                    && plan
                        .t_grid
                        .iter()
                        .all(|&t| fm.m(x, y, r * t) >= fm.m(x, y, t));
                witness.then_some((x, y))
            })
        })
        .collect();
    Ok(hits.into_iter().flatten().next())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Carrier {
        Carrier::unit(11).unwrap()
    }

    #[test]
    fn tnorm_examples() {
        assert_eq!(tnorm_eval(&TNorm::Minimum, 0.3, 1.0).unwrap(), 0.3);
        assert!((tnorm_eval(&TNorm::Lukasiewicz, 0.7, 0.6).unwrap() - 0.3).abs() < 1e-15);
        assert!((tnorm_eval(&TNorm::Product, 0.5, 0.4).unwrap() - 0.2).abs() < 1e-15);
        assert!(tnorm_eval(&TNorm::Product, 1.2, 0.4).is_err());
        assert!(tnorm_eval(&TNorm::Product, 0.5, -0.1).is_err());
    }

    #[test]
    fn builtin_tnorms_satisfy_laws() {
        for t in [TNorm::Minimum, TNorm::Product, TNorm::Lukasiewicz] {
            assert!(t.check_laws(21).unwrap().is_empty(), "{t:?}");
        }
        let bad = TNorm::custom(|a, b| (a + b) / 2.0);
        let laws: Vec<_> = bad
            .check_laws(5)
            .unwrap()
            .into_iter()
            .map(|v| v.law)
            .collect();
        assert!(laws.contains(&"identity"));
    }

    #[test]
    fn carrier_validation() {
        assert!(Carrier::new(1.0, 0.0, 5).is_err());
        assert!(Carrier::new(0.0, 1.0, 1).is_err());
        let c = Carrier::new(0.0, 1.0, 5).unwrap();
        assert_eq!(c.points(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(c.refined().grid_n(), 9);
    }

    #[test]
    fn standard_metric_values() {
        let fm =
            standard_fuzzy_metric(unit(), |x, y| (x - y).abs(), TNorm::Product, "abs").unwrap();
        assert_eq!(fm.m(1.0, 0.0, 1.0), 0.5);
        assert_eq!(fm.m(0.4, 0.4, 3.0), 1.0);
        assert_eq!(fm.m(0.2, 0.9, 0.0), 0.0);
        assert!(standard_fuzzy_metric(unit(), |x, y| x - y, TNorm::Product, "bad").is_err());
    }

    #[test]
    fn standard_metric_passes_grid_plan() {
        let fm = FuzzyMetric::standard_abs(unit(), TNorm::Product);
        let plan = SamplingPlan::grid(&Carrier::unit(6).unwrap(), vec![0.1, 0.5, 1.0, 2.0, 10.0]);
        let report = verify_fm_axioms(&fm, &plan).unwrap();
        assert_eq!(report.status, Verdict::Pass, "{report:#?}");
    }

    #[test]
    fn constant_membership_fails_fm2_on_diagonal() {
        let fm = FuzzyMetric::from_membership(unit(), TNorm::Product, "0.5", |_, _, _| 0.5);
        let plan = SamplingPlan::grid(&Carrier::unit(3).unwrap(), vec![1.0]);
        let report = verify_fm_axioms(&fm, &plan).unwrap();
        let fm2 = report.check(Axiom::Fm2);
        assert_eq!(fm2.status, Verdict::Fail);
        let wit = fm2.witness.unwrap();
        assert_eq!(wit.x, wit.y);
        assert_eq!(report.check(Axiom::Fm1).status, Verdict::Fail);
    }

    #[test]
    fn decreasing_membership_fails_monotonicity() {
        let fm = FuzzyMetric::from_membership(unit(), TNorm::Minimum, "dec", |x, y, t| {
            if t <= 0.0 {
                0.0
            } else if x == y {
                1.0
            } else {
                1.0 / (1.0 + t)
            }
        });
        let plan = SamplingPlan::grid(&Carrier::unit(3).unwrap(), vec![0.5, 1.0, 2.0]);
        let report = verify_fm_axioms(&fm, &plan).unwrap();
        let mono = report.check(Axiom::Monotone);
        assert_eq!(mono.status, Verdict::Fail);
        let wit = mono.witness.unwrap();
        assert_ne!(wit.x, wit.y);
    }

    #[test]
    fn empty_plan_rejected() {
        let fm = FuzzyMetric::standard_abs(unit(), TNorm::Product);
        let mut plan = SamplingPlan::grid(&Carrier::unit(2).unwrap(), vec![]);
        assert!(verify_fm_axioms(&fm, &plan).is_err());
        plan.t_grid = vec![1.0];
        plan.triples.clear();
        assert!(verify_fm_axioms(&fm, &plan).is_err());
        plan.triples.push((0.0, 0.0, 0.0));
        plan.t_grid = vec![0.0];
        assert!(verify_fm_axioms(&fm, &plan).is_err());
    }

    #[test]
    fn remark3_examples() {
        let plan = SamplingPlan::grid(&unit(), vec![0.1, 1.0, 10.0]);
        let fm = FuzzyMetric::standard_abs(unit(), TNorm::Product);
        assert_eq!(remark3_search(&fm, 0.5, &plan).unwrap(), None);
        assert!(remark3_search(&fm, 1.0, &plan).is_err());
        assert!(remark3_search(&fm, 0.0, &plan).is_err());

        let flat = FuzzyMetric::from_membership(unit(), TNorm::Product, "flat", |x, y, _| {
            if x == y {
                1.0
            } else {
                0.5
            }
        });
        assert_eq!(remark3_search(&flat, 0.5, &plan).unwrap(), Some((0.0, 0.1)));

        // Diagonal-only grid: no off-diagonal pair exists at all.
        let single = SamplingPlan {
            t_grid: vec![1.0],
            points: vec![0.3],
            triples: vec![(0.3, 0.3, 0.3)],
        };
        assert_eq!(remark3_search(&flat, 0.5, &single).unwrap(), None);
    }
}
