//! Common fixed points of a quadruple and the end-to-end theorem pipeline:
//! hypothesis checks, coincidence and commutation stages, fixed-point
//! search and a uniqueness scan on a refined grid.

use serde::Serialize;

use crate::error::{input, Error, Result};
use crate::pairs::{
    check_common_property_ea, check_commutation_variant, check_family_commuting, check_property_ea,
    check_range_closed, check_range_containment, compose_family, find_coincidence_points,
    ClosednessReport, ClosednessStatus, Coincidence, CommutationReport, CommutationVariant,
    ContainmentReport, EaReport, Family, FamilyCommutingReport, MapQuadruple, RangeMode, SelfMap,
    SequenceSpec, DEFAULT_MONOTONE_BREAKS,
};
use crate::report::Verdict;
use crate::verifier::{verify_contraction, ContractionSpec, VerificationPlan, VerificationReport};

pub const DEFAULT_FIXED_POINT_TOL: f64 = 1e-9;
pub const MAX_REFINE_ITERATIONS: usize = 200;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// `|Az - z|`, `|Bz - z|`, `|Fz - z|`, `|Gz - z|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    pub a: f64,
    pub b: f64,
    pub f: f64,
    pub g: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.a.max(self.b).max(self.f).max(self.g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPointCertificate {
    pub z: f64,
    pub residuals: Residuals,
    pub max_residual: f64,
}

/// Residuals of the four maps at `x`. Images that leave the carrier are
/// errors: the maps were only validated on grid points.
pub fn residuals(quad: &MapQuadruple, x: f64) -> Result<Residuals> {
    let c = quad.carrier();
    let mut r = [0.0; 4];
    for (slot, m) in r.iter_mut().zip(quad.maps()) {
        let y = m.apply(x)?;
        if !c.contains(y, crate::pairs::IMAGE_TOL) {
            return input(format!(
                "map {} sends {x} to {y}, outside the carrier",
                m.label()
            ));
        }
        *slot = (y - x).abs();
    }
    Ok(Residuals {
        a: r[0],
        b: r[1],
        f: r[2],
        g: r[3],
    })
}

fn max_residual(quad: &MapQuadruple, x: f64) -> Result<f64> {
    Ok(residuals(quad, x)?.max())
}

fn certificate(quad: &MapQuadruple, z: f64) -> Result<FixedPointCertificate> {
    let residuals = residuals(quad, z)?;
    Ok(FixedPointCertificate {
        z,
        residuals,
        max_residual: residuals.max(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixedPointSet {
    /// Every grid point is a common fixed point.
    AllPointsFixed { grid_points: usize },
    Certificates {
        certificates: Vec<FixedPointCertificate>,
    },
}

impl FixedPointSet {
    pub fn certificates(&self) -> &[FixedPointCertificate] {
        match self {
            FixedPointSet::AllPointsFixed { .. } => &[],
            FixedPointSet::Certificates { certificates } => certificates,
        }
    }
}

/// Golden-section minimisation of `f` on `[a, b]`; returns the best of the
/// final point and the two bracket ends.
fn golden_min(
    f: &dyn Fn(f64) -> Result<f64>,
    mut a: f64,
    mut b: f64,
    max_iter: usize,
) -> Result<(f64, f64, usize)> {
    let (a0, b0) = (a, b);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    let mut iters = 0;
    while iters < max_iter && b - a > f64::EPSILON * (1.0 + a.abs().max(b.abs())) {
        iters += 1;
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
        }
    }
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    for x in [a0, b0, a, b] {
        let v = f(x)?;
        if v < best.1 {
            best = (x, v);
        }
    }
    Ok((best.0, best.1, iters))
}

/// Grid scan of `r(x) = max(|Ax-x|, |Bx-x|, |Fx-x|, |Gx-x|)`, golden-section
/// refinement around each local minimum, and certificates for minima with
/// `r < tol`. Certificates closer than one grid spacing are merged.
pub fn find_common_fixed_points(quad: &MapQuadruple, tol: f64) -> Result<FixedPointSet> {
    if !(tol > 0.0) {
        return input(format!("fixed-point tolerance must be positive, got {tol}"));
    }
    let c = quad.carrier();
    let pts = c.points();
    let r = pts
        .iter()
        .map(|&x| max_residual(quad, x))
        .collect::<Result<Vec<_>>>()?;
    if r.iter().all(|v| *v < tol) {
        return Ok(FixedPointSet::AllPointsFixed {
            grid_points: pts.len(),
        });
    }
    let n = pts.len();
    let mut found: Vec<FixedPointCertificate> = Vec::new();
    for i in 0..n {
        let left = if i == 0 { f64::INFINITY } else { r[i - 1] };
        let right = if i + 1 == n { f64::INFINITY } else { r[i + 1] };
        if !(r[i] <= left && r[i] <= right) {
            continue;
        }
        let lo = pts[i.saturating_sub(1)];
        let hi = pts[(i + 1).min(n - 1)];
        let (x, v, _) = golden_min(&|x| max_residual(quad, x), lo, hi, MAX_REFINE_ITERATIONS)?;
        let z = if r[i] <= v { pts[i] } else { x };
        let cert = certificate(quad, z)?;
        if cert.max_residual < tol {
            found.push(cert);
        }
    }
    found.sort_by(|p, q| p.z.total_cmp(&q.z));
    let mut merged: Vec<FixedPointCertificate> = Vec::new();
    let mut cluster_start = f64::NEG_INFINITY;
    for cert in found {
        match merged.last_mut() {
            Some(best) if cert.z - cluster_start <= c.spacing() => {
                if cert.max_residual < best.max_residual {
                    *best = cert;
                }
            }
            _ => {
                cluster_start = cert.z;
                merged.push(cert);
            }
        }
    }
    Ok(FixedPointSet::Certificates {
        certificates: merged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RefineOutcome {
    Certified {
        certificate: FixedPointCertificate,
        iterations: usize,
    },
    NoConvergence {
        best_x: f64,
        best_residual: f64,
        iterations: usize,
    },
}

/// Local minimisation of the residual from `x0`: downhill bracket
/// expansion from one grid spacing, then golden section inside the
/// bracket, with at most [`MAX_REFINE_ITERATIONS`] steps in total.
pub fn refine_fixed_point(quad: &MapQuadruple, x0: f64, tol: f64) -> Result<RefineOutcome> {
    if !(tol > 0.0) {
        return input(format!("fixed-point tolerance must be positive, got {tol}"));
    }
    let c = *quad.carrier();
    if !c.contains(x0, 0.0) {
        return input(format!(
            "start point {x0} lies outside [{}, {}]",
            c.lo(),
            c.hi()
        ));
    }
    let r = |x: f64| max_residual(quad, x);
    let r0 = r(x0)?;
    if r0 < tol {
        return Ok(RefineOutcome::Certified {
            certificate: certificate(quad, x0)?,
            iterations: 0,
        });
    }
    let h = c.spacing();
    let (rl, rr) = (r(c.clamp(x0 - h))?, r(c.clamp(x0 + h))?);
    let mut iterations = 0;
    let (lo, hi) = if rl >= r0 && rr >= r0 {
        (c.clamp(x0 - h), c.clamp(x0 + h))
    } else {
        let dir = if rl < rr { -1.0 } else { 1.0 };
        let (mut prev, mut cur, mut r_cur) = (x0, x0, r0);
        let mut step = h;
        loop {
            iterations += 1;
            let next = c.clamp(cur + dir * step);
            let r_next = r(next)?;
            if r_next >= r_cur || next == cur || iterations >= MAX_REFINE_ITERATIONS / 2 {
                let (a, b) = (prev.min(next), prev.max(next));
                break (a, b);
            }
            prev = cur;
            cur = next;
            r_cur = r_next;
            step *= 2.0;
        }
    };
    let (x, v, iters) = golden_min(&r, lo, hi, MAX_REFINE_ITERATIONS - iterations)?;
    iterations += iters;
    if v < tol {
        Ok(RefineOutcome::Certified {
            certificate: certificate(quad, x)?,
            iterations,
        })
    } else {
        Ok(RefineOutcome::NoConvergence {
            best_x: x,
            best_residual: v,
            iterations,
        })
    }
}

/// Which range inclusion hypothesis (b) asserts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ContainmentDirection {
    /// `B(X) ⊂ F(X)`.
    BInF,
    /// `G(X) ⊂ A(X)`.
    GInA,
    /// `F(X) ⊂ B(X)`, the inclusion the proof uses.
    FInB,
}

impl ContainmentDirection {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "B_in_F" | "b_in_f" => Ok(Self::BInF),
            "G_in_A" | "g_in_a" => Ok(Self::GInA),
            "F_in_B" | "f_in_b" => Ok(Self::FInB),
            other => input(format!("unknown containment direction `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClosedTarget {
    A,
    B,
}

/// The map pair whose (E.A.) sequence is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EaPair {
    #[serde(rename = "AF")]
    Af,
    #[serde(rename = "BG")]
    Bg,
}

#[derive(Debug, Clone)]
pub enum EaHypothesis {
    /// Property (E.A.) for one pair.
    Pair(EaPair, SequenceSpec),
    /// Common property (E.A.) for both pairs.
    Common { af: SequenceSpec, bg: SequenceSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub coincidence: f64,
    pub fixed_point: f64,
    pub tail: f64,
    pub containment: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            coincidence: 1e-9,
            fixed_point: DEFAULT_FIXED_POINT_TOL,
            tail: 1e-6,
            containment: 1e-9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TheoremConfig {
    pub quad: MapQuadruple,
    pub contraction: ContractionSpec,
    pub plan: VerificationPlan,
    pub ea: EaHypothesis,
    pub containment: ContainmentDirection,
    pub containment_mode: RangeMode,
    pub closed_target: ClosedTarget,
    /// Commutation stage; weak compatibility unless a stronger variant
    /// is requested.
    pub commutation: CommutationVariant,
    pub r: Option<f64>,
    pub tolerances: Tolerances,
    /// Families `[A, B, F, G]` whose compositions form `quad`.
    pub families: Option<[Family; 4]>,
}

impl TheoremConfig {
    pub fn new(quad: MapQuadruple, contraction: ContractionSpec, ea: EaHypothesis) -> Self {
        Self {
            quad,
            contraction,
            plan: VerificationPlan::default(),
            ea,
            containment: ContainmentDirection::GInA,
            containment_mode: RangeMode::Plain,
            closed_target: ClosedTarget::A,
            commutation: CommutationVariant::WeaklyCompatible,
            r: None,
            tolerances: Tolerances::default(),
            families: None,
        }
    }

    /// Composes each family and uses the compositions as the quadruple.
    pub fn with_families(mut self, families: [Family; 4]) -> Result<Self> {
        let [a, b, f, g] = families.each_ref().map(compose_family);
        self.quad = MapQuadruple::new(a?, b?, f?, g?, self.quad.fm.clone())?;
        self.families = Some(families);
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisStatus {
    pub status: Verdict,
    pub note: String,
}

impl HypothesisStatus {
    fn new(pass: bool, note: impl Into<String>) -> Self {
        Self {
            status: Verdict::from_pass(pass),
            note: note.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hypotheses {
    pub a_property_ea: HypothesisStatus,
    pub b_containment: HypothesisStatus,
    pub c_closedness: HypothesisStatus,
    pub d_contraction: HypothesisStatus,
    pub commutation: HypothesisStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family_commuting: Option<HypothesisStatus>,
}

impl Hypotheses {
    pub fn all_pass(&self) -> bool {
        [
            &self.a_property_ea,
            &self.b_containment,
            &self.c_closedness,
            &self.d_contraction,
            &self.commutation,
        ]
        .into_iter()
        .chain(self.family_commuting.as_ref())
        .all(|h| h.status.passed())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EaStage {
    pub pairs: Vec<EaPair>,
    pub report: EaReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoincidenceStage {
    pub af: Coincidence,
    pub bg: Coincidence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommutationOutcome {
    Checked {
        report: CommutationReport,
    },
    /// No coincidence points: weak compatibility holds vacuously.
    Vacuous {
        pair: (String, String),
    },
}

impl CommutationOutcome {
    fn passed(&self) -> bool {
        match self {
            CommutationOutcome::Checked { report } => report.status.passed(),
            CommutationOutcome::Vacuous { .. } => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UniquenessStatus {
    /// Exactly one certificate on the refined grid.
    UniqueOnScannedGrid,
    NotUnique,
    NoneFound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub status: UniquenessStatus,
    pub grid_n: usize,
    pub found: FixedPointSet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoremReport {
    pub hypotheses: Hypotheses,
    pub property_ea: EaStage,
    pub containment: ContainmentReport,
    pub closedness: ClosednessReport,
    pub contraction: VerificationReport,
    pub coincidence: CoincidenceStage,
    pub commutation: Vec<CommutationOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub family_commuting: Option<FamilyCommutingReport>,
    pub fixed_points: FixedPointSet,
    pub uniqueness: UniquenessReport,
    /// The unique common fixed point when every hypothesis passed and the
    /// uniqueness scan found exactly one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conclusion: Option<f64>,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Input(m) => Error::Input(format!("stage {name}: {m}")),
        Error::Numerical(m) => Error::Numerical(format!("stage {name}: {m}")),
        other => Error::Input(format!("stage {name}: {other}")),
    })
}

fn pair_of(quad: &MapQuadruple, p: EaPair) -> (&SelfMap, &SelfMap) {
    match p {
        EaPair::Af => (&quad.a, &quad.f),
        EaPair::Bg => (&quad.b, &quad.g),
    }
}

/// Runs every stage in order. Each verdict is recorded as computed; an
/// input or numerical error aborts the run naming the stage.
pub fn run_theorem_pipeline(cfg: &TheoremConfig) -> Result<TheoremReport> {
    let q = &cfg.quad;
    let tol = cfg.tolerances;
    stage("config", cfg.contraction.validate())?;

    let property_ea = stage("property_ea", {
        match &cfg.ea {
            EaHypothesis::Pair(p, seq) => {
                let (s, t) = pair_of(q, *p);
                check_property_ea(s, t, seq, tol.tail).map(|report| EaStage {
                    pairs: vec![*p],
                    report,
                })
            }
            EaHypothesis::Common { af, bg } => {
                check_common_property_ea((&q.a, &q.f), af, (&q.b, &q.g), bg, tol.tail).map(
                    |report| EaStage {
                        pairs: vec![EaPair::Af, EaPair::Bg],
                        report,
                    },
                )
            }
        }
    })?;

    let (inner, outer) = match cfg.containment {
        ContainmentDirection::BInF => (&q.b, &q.f),
        ContainmentDirection::GInA => (&q.g, &q.a),
        ContainmentDirection::FInB => (&q.f, &q.b),
    };
    let containment = stage(
        "containment",
        check_range_containment(inner, outer, tol.containment, cfg.containment_mode),
    )?;

    let closed_map = match cfg.closed_target {
        ClosedTarget::A => &q.a,
        ClosedTarget::B => &q.b,
    };
    let closedness = stage(
        "closedness",
        check_range_closed(closed_map, tol.containment, DEFAULT_MONOTONE_BREAKS),
    )?;

    let contraction = stage(
        "contraction",
        verify_contraction(q, &cfg.contraction, &cfg.plan),
    )?;

    let coincidence = stage(
        "coincidence",
        (|| {
            Ok(CoincidenceStage {
                af: find_coincidence_points(&q.a, &q.f, tol.coincidence)?,
                bg: find_coincidence_points(&q.b, &q.g, tol.coincidence)?,
            })
        })(),
    )?;

    let commutation = stage(
        "commutation",
        (|| {
            let mut out = Vec::new();
            for ((s, t), coin) in [
                ((&q.a, &q.f), &coincidence.af),
                ((&q.b, &q.g), &coincidence.bg),
            ] {
                let points = if cfg.commutation == CommutationVariant::WeaklyCompatible {
                    coin.points(q.carrier())
                } else {
                    q.carrier().points()
                };
                if points.is_empty() {
                    out.push(CommutationOutcome::Vacuous {
                        pair: (s.label().to_string(), t.label().to_string()),
                    });
                    continue;
                }
                let report = check_commutation_variant(
                    s,
                    t,
                    &q.fm,
                    cfg.commutation,
                    cfg.r,
                    &points,
                    &cfg.plan.t_grid,
                )?;
                out.push(CommutationOutcome::Checked { report });
            }
            Ok(out)
        })(),
    )?;

    let family_commuting = match &cfg.families {
        Some(f) => Some(stage("family_commuting", check_family_commuting(f))?),
        None => None,
    };

    let fixed_points = stage("fixed_points", find_common_fixed_points(q, tol.fixed_point))?;

    let uniqueness = stage(
        "uniqueness",
        (|| {
            let refined = q.with_carrier(q.carrier().refined())?;
            let found = find_common_fixed_points(&refined, tol.fixed_point)?;
            let status = match &found {
                FixedPointSet::AllPointsFixed { .. } => UniquenessStatus::NotUnique,
                FixedPointSet::Certificates { certificates } => match certificates.len() {
                    0 => UniquenessStatus::NoneFound,
                    1 => UniquenessStatus::UniqueOnScannedGrid,
                    _ => UniquenessStatus::NotUnique,
                },
            };
            Ok(UniquenessReport {
                status,
                grid_n: refined.carrier().grid_n(),
                found,
            })
        })(),
    )?;

    let ea_note = match &property_ea.report.limit {
        Some(l) => format!("{}; limit {l}", property_ea.report.note),
        None => property_ea.report.note.clone(),
    };
    let hypotheses = Hypotheses {
        a_property_ea: HypothesisStatus::new(property_ea.report.status.passed(), ea_note),
        b_containment: HypothesisStatus::new(
            containment.status.passed(),
            format!(
                "{}(X) hull [{}, {}] inside {}(X) hull [{}, {}]",
                containment.inner,
                containment.inner_hull.lo,
                containment.inner_hull.hi,
                containment.outer,
                containment.outer_hull.lo,
                containment.outer_hull.hi
            ),
        ),
        c_closedness: HypothesisStatus::new(
            closedness.status == ClosednessStatus::Closed,
            format!("{}(X): {}", closedness.map, closedness.note),
        ),
        d_contraction: HypothesisStatus::new(
            contraction.status.passed(),
            format!(
                "{} on {} samples, worst margin {:e}",
                contraction.form.name(),
                contraction.samples,
                contraction.worst_margin
            ),
        ),
        commutation: HypothesisStatus::new(
            commutation.iter().all(CommutationOutcome::passed),
            format!("{:?} for (A, F) and (B, G)", cfg.commutation),
        ),
        family_commuting: family_commuting.as_ref().map(|r| {
            HypothesisStatus::new(
                r.status.passed(),
                format!("{} identities", r.identities_checked),
            )
        }),
    };
    let conclusion = match (&uniqueness.status, uniqueness.found.certificates()) {
        (UniquenessStatus::UniqueOnScannedGrid, [c]) if hypotheses.all_pass() => Some(c.z),
        _ => None,
    };
    Ok(TheoremReport {
        hypotheses,
        property_ea,
        containment,
        closedness,
        contraction,
        coincidence,
        commutation,
        family_commuting,
        fixed_points,
        uniqueness,
        conclusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::{builtin_altering, BuiltinAltering};
    use crate::implicit::{make_psi, PsiSpec};
    use crate::metric::{Carrier, FuzzyMetric, TNorm};

    fn quad(n: usize, a: &str, b: &str, f: &str, g: &str) -> MapQuadruple {
        let c = Carrier::unit(n).unwrap();
        let m = |l: &str, e: &str| SelfMap::from_expr(c, l, e).unwrap();
        MapQuadruple::new(
            m("A", a),
            m("B", b),
            m("F", f),
            m("G", g),
            FuzzyMetric::standard_abs(c, TNorm::Product),
        )
        .unwrap()
    }

    fn example6() -> MapQuadruple {
        quad(101, "x/2", "x/4", "x", "0")
    }

    fn example6_config() -> TheoremConfig {
        let spec = ContractionSpec::main(
            make_psi(PsiSpec::Ex2_2 { k: 0.5 }).unwrap(),
            builtin_altering(BuiltinAltering::Linear),
        );
        let seq = SequenceSpec::parse("1/n", 1_000_000, 20).unwrap();
        TheoremConfig::new(example6(), spec, EaHypothesis::Pair(EaPair::Af, seq))
    }

    #[test]
    fn example6_fixed_point_is_zero() {
        let s = find_common_fixed_points(&example6(), 1e-9).unwrap();
        let certs = s.certificates();
        assert_eq!(certs.len(), 1);
        assert_eq!(certs[0].z, 0.0);
        assert_eq!(certs[0].max_residual, 0.0);
    }

    #[test]
    fn identity_and_halving() {
        let id = quad(11, "x", "x", "x", "x");
        assert_eq!(
            find_common_fixed_points(&id, 1e-9).unwrap(),
            FixedPointSet::AllPointsFixed { grid_points: 11 }
        );
        let half = quad(11, "x/2", "x/2", "x/2", "x/2");
        let s = find_common_fixed_points(&half, 1e-9).unwrap();
        assert_eq!(
            s.certificates().iter().map(|c| c.z).collect::<Vec<_>>(),
            vec![0.0]
        );
    }

    #[test]
    fn off_grid_fixed_point_is_refined() {
        // F(x) = (1 + x)/3 fixes 0.5 on grid 8, where 0.5 is not a node
        let q = quad(8, "x", "x", "(1 + x)/3", "x");
        let certs = find_common_fixed_points(&q, 1e-9).unwrap();
        let certs = certs.certificates();
        assert_eq!(certs.len(), 1);
        assert!((certs[0].z - 0.5).abs() < 1e-9);
        // re-evaluated independently
        let z = certs[0].z;
        assert!(((1.0 + z) / 3.0 - z).abs() < 1e-9);
    }

    #[test]
    fn refine_examples() {
        let q = example6();
        match refine_fixed_point(&q, 0.3, 1e-9).unwrap() {
            RefineOutcome::Certified {
                certificate,
                iterations,
            } => {
                assert_eq!(certificate.z, 0.0);
                assert!(iterations <= MAX_REFINE_ITERATIONS);
            }
            other => panic!("{other:?}"),
        }
        match refine_fixed_point(&q, 0.0, 1e-9).unwrap() {
            RefineOutcome::Certified {
                certificate,
                iterations,
            } => {
                assert_eq!(
                    (certificate.z, certificate.max_residual, iterations),
                    (0.0, 0.0, 0)
                );
            }
            other => panic!("{other:?}"),
        }
        assert!(refine_fixed_point(&q, 1.5, 1e-9).is_err());
    }

    #[test]
    fn quadruple_without_common_fixed_point() {
        // r(x) = max(x/2, |(1 + x)/2 - x|) >= 1/4 on [0, 1]
        let q = quad(101, "x/2", "x", "(1 + x)/2", "x");
        let refined = q.with_carrier(q.carrier().refined()).unwrap();
        assert!(find_common_fixed_points(&refined, 1e-9)
            .unwrap()
            .certificates()
            .is_empty());
        let brute = (0..=10_000)
            .map(|i| {
                let x = i as f64 / 10_000.0;
                (x / 2.0).max(((1.0 + x) / 2.0 - x).abs())
            })
            .fold(f64::INFINITY, f64::min);
        assert!(brute >= 0.25 - 1e-12);
        match refine_fixed_point(&q, 0.3, 1e-9).unwrap() {
            RefineOutcome::NoConvergence { best_residual, .. } => {
                assert!(best_residual >= 0.25 - 1e-9)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn example6_pipeline_passes() {
        let r = run_theorem_pipeline(&example6_config()).unwrap();
        assert!(r.hypotheses.all_pass(), "{:#?}", r.hypotheses);
        assert_eq!(r.uniqueness.status, UniquenessStatus::UniqueOnScannedGrid);
        assert_eq!(r.conclusion, Some(0.0));
        assert_eq!(r.coincidence.af, Coincidence::Points { points: vec![0.0] });
        assert_eq!(r.coincidence.bg, Coincidence::Points { points: vec![0.0] });
    }

    #[test]
    fn proof_direction_containment_fails_but_fixed_point_remains() {
        let mut cfg = example6_config();
        cfg.containment = ContainmentDirection::FInB;
        let r = run_theorem_pipeline(&cfg).unwrap();
        assert_eq!(r.hypotheses.b_containment.status, Verdict::Fail);
        assert!(r.containment.witness.is_some());
        assert_eq!(r.fixed_points.certificates()[0].z, 0.0);
        assert_eq!(r.conclusion, None);
    }

    #[test]
    fn identity_pipeline_is_not_unique() {
        let mut cfg = example6_config();
        cfg.quad = quad(21, "x", "x", "x", "x");
        cfg.plan = VerificationPlan::new(21, vec![0.5, 1.0]).unwrap();
        let r = run_theorem_pipeline(&cfg).unwrap();
        assert_eq!(r.hypotheses.d_contraction.status, Verdict::Pass);
        assert_eq!(r.uniqueness.status, UniquenessStatus::NotUnique);
        assert_eq!(r.conclusion, None);
    }

    #[test]
    fn stage_errors_name_the_stage() {
        let mut cfg = example6_config();
        cfg.commutation = CommutationVariant::RWeak;
        let err = run_theorem_pipeline(&cfg).unwrap_err();
        assert!(err.to_string().contains("stage commutation"), "{err}");
    }

    #[test]
    fn families_compose_into_the_quadruple() {
        let c = Carrier::unit(101).unwrap();
        let m = |l: &str, e: &str| SelfMap::from_expr(c, l, e).unwrap();
        let fams = [
            Family::new("A", vec![m("A1", "x/2")]).unwrap(),
            Family::new("B", vec![m("B1", "x/2"), m("B2", "x/2")]).unwrap(),
            Family::new("F", vec![m("F1", "x")]).unwrap(),
            Family::new("G", vec![m("G1", "0")]).unwrap(),
        ];
        let cfg = example6_config().with_families(fams).unwrap();
        assert_eq!(cfg.quad.b.apply(1.0).unwrap(), 0.25);
        let r = run_theorem_pipeline(&cfg).unwrap();
        assert_eq!(r.family_commuting.as_ref().unwrap().status, Verdict::Pass);
        assert_eq!(r.conclusion, Some(0.0));
    }
}
