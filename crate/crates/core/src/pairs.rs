//! Self-maps of a carrier and the predicates relating pairs of them:
//! coincidence points, commutativity variants, compatibility along a
//! sequence, property (E.A.), range containment and closedness, and
//! composition of finite families.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{input, Error, Result};
use crate::expr::Function;
use crate::metric::{Carrier, FuzzyMetric};
use crate::report::Verdict;

/// Images must land within this distance of the carrier.
pub const IMAGE_TOL: f64 = 1e-9;
/// Tolerance on commutation inequalities and composition identities.
pub const COMMUTE_TOL: f64 = 1e-9;
const BISECTION_STEPS: usize = 60;
/// Default bound on direction changes accepted by [`check_range_closed`].
pub const DEFAULT_MONOTONE_BREAKS: usize = 8;

enum MapRule {
    Expr(Function),
    Native(Box<dyn Fn(f64) -> f64 + Send + Sync>),
    /// `maps[0] ∘ maps[1] ∘ …`: the last map is applied first.
    Compose(Vec<SelfMap>),
}

/// A self-map of an interval carrier.
#[derive(Clone)]
pub struct SelfMap {
    carrier: Carrier,
    rule: Arc<MapRule>,
    label: String,
}

impl fmt::Debug for SelfMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SelfMap({}: {})", self.label, self.rule_text())
    }
}

impl SelfMap {
    fn validated(carrier: Carrier, rule: MapRule, label: String) -> Result<Self> {
        let map = Self {
            carrier,
            rule: Arc::new(rule),
            label,
        };
        for x in carrier.points() {
            let y = map.apply(x).map_err(|e| {
                Error::Input(format!("map {} cannot be evaluated at {x}: {e}", map.label))
            })?;
            if !carrier.contains(y, IMAGE_TOL) {
                return input(format!(
                    "map {} sends {x} to {y}, outside [{}, {}]",
                    map.label,
                    carrier.lo(),
                    carrier.hi()
                ));
            }
        }
        Ok(map)
    }

    /// A map given by an expression in `x`.
    pub fn from_expr(carrier: Carrier, label: impl Into<String>, text: &str) -> Result<Self> {
        let f = Function::parse(text, &["x"])?;
        Self::validated(carrier, MapRule::Expr(f), label.into())
    }

    pub fn native(
        carrier: Carrier,
        label: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::validated(carrier, MapRule::Native(Box::new(f)), label.into())
    }

    pub fn identity(carrier: Carrier) -> Self {
        Self::native(carrier, "id", |x| x).expect("identity maps the carrier into itself")
    }

    pub fn carrier(&self) -> &Carrier {
        &self.carrier
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rule_text(&self) -> String {
        match &*self.rule {
            MapRule::Expr(f) => f.source().to_string(),
            MapRule::Native(_) => "<native>".to_string(),
            MapRule::Compose(ms) => ms
                .iter()
                .map(|m| m.label.as_str())
                .collect::<Vec<_>>()
                .join("∘"),
        }
    }

    pub fn apply(&self, x: f64) -> Result<f64> {
        match &*self.rule {
            MapRule::Expr(f) => Ok(f.call(&[x])?),
            MapRule::Native(f) => {
                let y = f(x);
                if y.is_finite() {
                    Ok(y)
                } else {
                    Err(Error::Numerical(format!(
                        "map {} is not finite at {x}",
                        self.label
                    )))
                }
            }
            MapRule::Compose(ms) => ms.iter().rev().try_fold(x, |acc, m| m.apply(acc)),
        }
    }

    /// The same rule on a different grid of the same interval.
    pub fn with_carrier(&self, carrier: Carrier) -> Result<Self> {
        if carrier.lo() != self.carrier.lo() || carrier.hi() != self.carrier.hi() {
            return input("with_carrier only changes the grid, not the interval");
        }
        Ok(Self {
            carrier,
            rule: self.rule.clone(),
            label: self.label.clone(),
        })
    }

    fn images(&self) -> Result<Vec<(f64, f64)>> {
        self.carrier
            .points()
            .into_iter()
            .map(|x| Ok((x, self.apply(x)?)))
            .collect()
    }
}

fn same_carrier(a: &Carrier, b: &Carrier) -> bool {
    a == b
}

/// The four maps `A, B, F, G` with their fuzzy metric.
#[derive(Clone, Debug)]
pub struct MapQuadruple {
    pub a: SelfMap,
    pub b: SelfMap,
    pub f: SelfMap,
    pub g: SelfMap,
    pub fm: FuzzyMetric,
}

impl MapQuadruple {
    pub fn new(a: SelfMap, b: SelfMap, f: SelfMap, g: SelfMap, fm: FuzzyMetric) -> Result<Self> {
        let c = fm.carrier();
        for m in [&a, &b, &f, &g] {
            if !same_carrier(m.carrier(), c) {
                return input(format!(
                    "map {} does not share the metric's carrier",
                    m.label
                ));
            }
        }
        Ok(Self { a, b, f, g, fm })
    }

    pub fn carrier(&self) -> &Carrier {
        self.fm.carrier()
    }

    pub fn maps(&self) -> [&SelfMap; 4] {
        [&self.a, &self.b, &self.f, &self.g]
    }

    /// All four maps and the metric moved to a different grid.
    pub fn with_carrier(&self, carrier: Carrier) -> Result<Self> {
        let fm = self.fm.with_carrier(carrier)?;
        Self::new(
            self.a.with_carrier(carrier)?,
            self.b.with_carrier(carrier)?,
            self.f.with_carrier(carrier)?,
            self.g.with_carrier(carrier)?,
            fm,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coincidence {
    /// `|f - g| < tol` at every grid point.
    Everywhere {
        grid_points: usize,
    },
    Points {
        points: Vec<f64>,
    },
}

impl Coincidence {
    /// Concrete points: the whole grid for [`Coincidence::Everywhere`].
    pub fn points(&self, carrier: &Carrier) -> Vec<f64> {
        match self {
            Coincidence::Everywhere { .. } => carrier.points(),
            Coincidence::Points { points } => points.clone(),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Coincidence::Points { points } if points.is_empty())
    }
}

fn check_shared(f: &SelfMap, g: &SelfMap) -> Result<()> {
    if !same_carrier(f.carrier(), g.carrier()) {
        return input(format!(
            "maps {} and {} live on different carriers",
            f.label, g.label
        ));
    }
    Ok(())
}

/// Points where `f` and `g` agree: grid points with `|f - g| < tol` plus
/// bisection-refined sign changes of `f - g`, merged within one grid spacing.
pub fn find_coincidence_points(f: &SelfMap, g: &SelfMap, tol: f64) -> Result<Coincidence> {
    check_shared(f, g)?;
    if !(tol > 0.0) {
        return input(format!("coincidence tolerance must be positive, got {tol}"));
    }
    let carrier = f.carrier();
    let h = |x: f64| -> Result<f64> { Ok(f.apply(x)? - g.apply(x)?) };
    let pts = carrier.points();
    let hs = pts.iter().map(|&x| h(x)).collect::<Result<Vec<_>>>()?;
    if hs.iter().all(|v| v.abs() < tol) {
        return Ok(Coincidence::Everywhere {
            grid_points: pts.len(),
        });
    }

    let mut candidates: Vec<(f64, f64)> = pts
        .iter()
        .zip(&hs)
        .filter(|(_, v)| v.abs() < tol)
        .map(|(&x, &v)| (x, v.abs()))
        .collect();
    for i in 0..pts.len() - 1 {
        if hs[i] * hs[i + 1] < 0.0 {
            let (mut lo, mut hi, mut h_lo) = (pts[i], pts[i + 1], hs[i]);
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                let hm = h(mid)?;
                if hm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (hm < 0.0) == (h_lo < 0.0) {
                    lo = mid;
                    h_lo = hm;
                } else {
                    hi = mid;
                }
            }
            let root = 0.5 * (lo + hi);
            let r = h(root)?.abs();
            if r < tol {
                candidates.push((root, r));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));

    let radius = carrier.spacing();
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let mut cluster_start = f64::NEG_INFINITY;
    for (x, r) in candidates {
        match merged.last_mut() {
            Some(best) if x - cluster_start <= radius => {
                if r < best.1 {
                    *best = (x, r);
                }
            }
            _ => {
                merged.push((x, r));
                cluster_start = x;
            }
        }
    }
    Ok(Coincidence::Points {
        points: merged.into_iter().map(|p| p.0).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CommutationVariant {
    /// `M(ABx, BAx, t) = 1`.
    Commuting,
    /// `M(ABx, BAx, t) >= M(Ax, Bx, t)`.
    WeaklyCommuting,
    /// `M(ABx, BAx, t) >= M(Ax, Bx, t/R)`.
    RWeak,
    /// `M(BAx, AAx, t) >= M(Ax, Bx, t/R)`.
    RWeakAg,
    /// `M(ABx, BBx, t) >= M(Ax, Bx, t/R)`.
    RWeakAf,
    /// `M(AAx, BBx, t) >= M(Ax, Bx, t/R)`.
    RWeakP,
    /// `ABu = BAu` at coincidence points `u`.
    WeaklyCompatible,
}

impl CommutationVariant {
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "commuting" => Self::Commuting,
            "weakly_commuting" => Self::WeaklyCommuting,
            "r_weak" => Self::RWeak,
            "r_weak_Ag" | "r_weak_ag" => Self::RWeakAg,
            "r_weak_Af" | "r_weak_af" => Self::RWeakAf,
            "r_weak_P" | "r_weak_p" => Self::RWeakP,
            "weakly_compatible" => Self::WeaklyCompatible,
            other => return input(format!("unknown commutation variant `{other}`")),
        })
    }

    pub fn needs_r(self) -> bool {
        matches!(
            self,
            Self::RWeak | Self::RWeakAg | Self::RWeakAf | Self::RWeakP
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointWitness {
    pub x: f64,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommutationReport {
    pub pair: (String, String),
    pub variant: CommutationVariant,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    pub status: Verdict,
    pub worst_margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<PointWitness>,
    pub samples: usize,
}

/// Checks the defining inequality of `variant` for the pair `(first,
/// second)` at every `(point, t)`, rewritten as `margin >= -1e-9`.
pub fn check_commutation_variant(
    first: &SelfMap,
    second: &SelfMap,
    fm: &FuzzyMetric,
    variant: CommutationVariant,
    r: Option<f64>,
    points: &[f64],
    t_grid: &[f64],
) -> Result<CommutationReport> {
    check_shared(first, second)?;
    if points.is_empty() {
        return input(format!("{variant:?} check needs at least one point"));
    }
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t > 0.0)) {
        return input("t-grid must be nonempty and positive");
    }
    let r_val = if variant.needs_r() {
        match r {
            Some(r) if r > 0.0 => r,
            _ => return input(format!("{variant:?} needs R > 0, got {r:?}")),
        }
    } else {
        1.0
    };

    let mut worst = f64::INFINITY;
    let mut witness = None;
    let mut samples = 0;
    for &x in points {
        let (ax, bx) = (first.apply(x)?, second.apply(x)?);
        let (abx, bax) = (first.apply(bx)?, second.apply(ax)?);
        for &t in t_grid {
            let margin = match variant {
                CommutationVariant::Commuting | CommutationVariant::WeaklyCompatible => {
                    fm.m(abx, bax, t) - 1.0
                }
                CommutationVariant::WeaklyCommuting => fm.m(abx, bax, t) - fm.m(ax, bx, t),
                CommutationVariant::RWeak => fm.m(abx, bax, t) - fm.m(ax, bx, t / r_val),
                CommutationVariant::RWeakAg => {
                    fm.m(bax, first.apply(ax)?, t) - fm.m(ax, bx, t / r_val)
                }
                CommutationVariant::RWeakAf => {
                    fm.m(abx, second.apply(bx)?, t) - fm.m(ax, bx, t / r_val)
                }
                CommutationVariant::RWeakP => {
                    fm.m(first.apply(ax)?, second.apply(bx)?, t) - fm.m(ax, bx, t / r_val)
                }
            };
            samples += 1;
            worst = worst.min(margin);
            if margin < -COMMUTE_TOL && witness.is_none() {
                witness = Some(PointWitness { x, t });
            }
        }
    }
    Ok(CommutationReport {
        pair: (first.label.clone(), second.label.clone()),
        variant,
        r: variant.needs_r().then_some(r_val),
        status: Verdict::from_pass(witness.is_none()),
        worst_margin: worst,
        witness,
        samples,
    })
}

/// A sequence `x_n` given by an expression in `n`, observed on the tail
/// `n = tail_start, …, tail_start + tail_len - 1`.
#[derive(Debug, Clone)]
pub struct SequenceSpec {
    generator: Function,
    tail_start: u64,
    tail_len: usize,
}

pub const MIN_TAIL_LEN: usize = 10;

impl SequenceSpec {
    pub fn new(generator: Function, tail_start: u64, tail_len: usize) -> Result<Self> {
        if tail_len < MIN_TAIL_LEN {
            return input(format!(
                "sequence tail needs at least {MIN_TAIL_LEN} terms, got {tail_len}"
            ));
        }
        if tail_start == 0 {
            return input("sequence tail must start at n >= 1");
        }
        if generator.params().len() != 1 {
            return input("sequence generator must be an expression in n alone");
        }
        Ok(Self {
            generator,
            tail_start,
            tail_len,
        })
    }

    pub fn parse(text: &str, tail_start: u64, tail_len: usize) -> Result<Self> {
        Self::new(Function::parse(text, &["n"])?, tail_start, tail_len)
    }

    pub fn source(&self) -> &str {
        self.generator.source()
    }

    pub fn tail_indices(&self) -> impl Iterator<Item = u64> {
        self.tail_start..self.tail_start + self.tail_len as u64
    }

    pub fn tail(&self) -> Result<Vec<f64>> {
        self.tail_indices()
            .map(|n| Ok(self.generator.call(&[n as f64])?))
            .collect()
    }

    fn tail_in(&self, carrier: &Carrier) -> Result<Vec<f64>> {
        let xs = self.tail()?;
        if let Some(x) = xs.iter().find(|x| !carrier.contains(**x, IMAGE_TOL)) {
            return input(format!(
                "sequence `{}` leaves the carrier ({x})",
                self.source()
            ));
        }
        Ok(xs.into_iter().map(|x| carrier.clamp(x)).collect())
    }
}

/// Cauchy summary of a finite tail of reals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailSummary {
    pub label: String,
    /// Last observed term, used as the limit estimate.
    pub limit: f64,
    /// Largest pairwise distance among the tail terms.
    pub spread: f64,
}

impl TailSummary {
    fn of(label: impl Into<String>, vals: &[f64]) -> Self {
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            label: label.into(),
            limit: *vals.last().expect("tails are nonempty"),
            spread: hi - lo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CompatibilityStatus {
    Compatible,
    Noncompatible,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatibilityReport {
    pub pair: (String, String),
    pub status: CompatibilityStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub common_limit: Option<f64>,
    pub image_tails: Vec<TailSummary>,
    /// One summary of `M(ABx_n, BAx_n, t)` per sampled `t`.
    pub membership_tails: Vec<(f64, TailSummary)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness_t: Option<f64>,
    pub note: String,
}

/// Compatibility along a single sequence: when `Ax_n` and `Bx_n` share a
/// limit, `M(ABx_n, BAx_n, t)` must tend to one for every sampled `t`.
/// Limits are certified by Cauchy tails, not proved.
pub fn check_compatibility_on_sequence(
    first: &SelfMap,
    second: &SelfMap,
    fm: &FuzzyMetric,
    seq: &SequenceSpec,
    t_grid: &[f64],
    tol: f64,
) -> Result<CompatibilityReport> {
    check_shared(first, second)?;
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t > 0.0)) {
        return input("t-grid must be nonempty and positive");
    }
    let xs = seq.tail_in(first.carrier())?;
    let ax = xs
        .iter()
        .map(|&x| first.apply(x))
        .collect::<Result<Vec<_>>>()?;
    let bx = xs
        .iter()
        .map(|&x| second.apply(x))
        .collect::<Result<Vec<_>>>()?;
    let image_tails = vec![
        TailSummary::of(format!("{}x_n", first.label), &ax),
        TailSummary::of(format!("{}x_n", second.label), &bx),
    ];
    let mut report = CompatibilityReport {
        pair: (first.label.clone(), second.label.clone()),
        status: CompatibilityStatus::Inconclusive,
        common_limit: None,
        image_tails,
        membership_tails: Vec::new(),
        witness_t: None,
        note: String::new(),
    };
    let (ta, tb) = (&report.image_tails[0], &report.image_tails[1]);
    if ta.spread >= tol || tb.spread >= tol {
        report.note = format!(
            "image tails are not Cauchy within {tol:e} (spreads {:e}, {:e})",
            ta.spread, tb.spread
        );
        return Ok(report);
    }
    if (ta.limit - tb.limit).abs() >= tol {
        report.note = format!(
            "image tails converge to different limits {} and {}; the hypothesis of compatibility is not met",
            ta.limit, tb.limit
        );
        return Ok(report);
    }
    let u = 0.5 * (ta.limit + tb.limit);
    report.common_limit = Some(u);

    let abx = bx
        .iter()
        .map(|&y| first.apply(y))
        .collect::<Result<Vec<_>>>()?;
    let bax = ax
        .iter()
        .map(|&y| second.apply(y))
        .collect::<Result<Vec<_>>>()?;
    let mut status = CompatibilityStatus::Compatible;
    for &t in t_grid {
        let ms: Vec<f64> = abx.iter().zip(&bax).map(|(&p, &q)| fm.m(p, q, t)).collect();
        let summary = TailSummary::of(format!("M(ABx_n, BAx_n, {t})"), &ms);
        if report.witness_t.is_none() {
            if summary.spread >= tol {
                status = CompatibilityStatus::Inconclusive;
                report.witness_t = Some(t);
                report.note = format!("membership tail at t = {t} is not Cauchy within {tol:e}");
            } else if (1.0 - summary.limit).abs() >= tol {
                status = CompatibilityStatus::Noncompatible;
                report.witness_t = Some(t);
                report.note = format!(
                    "M(ABx_n, BAx_n, {t}) tends to {} instead of 1",
                    summary.limit
                );
            }
        }
        report.membership_tails.push((t, summary));
    }
    if status == CompatibilityStatus::Compatible {
        report.note = "membership tails tend to 1 at every sampled t".to_string();
    }
    report.status = status;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EaReport {
    pub status: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<f64>,
    pub tails: Vec<TailSummary>,
    pub note: String,
}

fn ea_from_tails(tails: Vec<TailSummary>, carrier: &Carrier, tol: f64) -> EaReport {
    if let Some(t) = tails.iter().find(|t| t.spread >= tol) {
        return EaReport {
            status: Verdict::Fail,
            limit: None,
            note: format!(
                "tail of {} is not Cauchy within {tol:e} (spread {:e})",
                t.label, t.spread
            ),
            tails,
        };
    }
    let lo = tails.iter().map(|t| t.limit).fold(f64::INFINITY, f64::min);
    let hi = tails
        .iter()
        .map(|t| t.limit)
        .fold(f64::NEG_INFINITY, f64::max);
    if hi - lo >= tol {
        return EaReport {
            status: Verdict::Fail,
            limit: None,
            note: format!("tails converge to different limits in [{lo}, {hi}]"),
            tails,
        };
    }
    let limit = tails.iter().map(|t| t.limit).sum::<f64>() / tails.len() as f64;
    if !carrier.contains(limit, tol) {
        return EaReport {
            status: Verdict::Fail,
            limit: Some(limit),
            note: "common limit lies outside the carrier".to_string(),
            tails,
        };
    }
    EaReport {
        status: Verdict::Pass,
        limit: Some(limit),
        note: "all tails agree on a common limit".to_string(),
        tails,
    }
}

fn pair_tails(first: &SelfMap, second: &SelfMap, seq: &SequenceSpec) -> Result<Vec<TailSummary>> {
    check_shared(first, second)?;
    let xs = seq.tail_in(first.carrier())?;
    let a = xs
        .iter()
        .map(|&x| first.apply(x))
        .collect::<Result<Vec<_>>>()?;
    let b = xs
        .iter()
        .map(|&x| second.apply(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(vec![
        TailSummary::of(format!("{}x_n", first.label), &a),
        TailSummary::of(format!("{}x_n", second.label), &b),
    ])
}

/// Property (E.A.) for one pair: `Ax_n` and `Fx_n` share a limit in the
/// carrier.
pub fn check_property_ea(
    first: &SelfMap,
    second: &SelfMap,
    seq: &SequenceSpec,
    tol: f64,
) -> Result<EaReport> {
    let tails = pair_tails(first, second, seq)?;
    Ok(ea_from_tails(tails, first.carrier(), tol))
}

/// Common property (E.A.) for two pairs: all four tails share one limit.
pub fn check_common_property_ea(
    pair1: (&SelfMap, &SelfMap),
    seq1: &SequenceSpec,
    pair2: (&SelfMap, &SelfMap),
    seq2: &SequenceSpec,
    tol: f64,
) -> Result<EaReport> {
    check_shared(pair1.0, pair2.0)?;
    let mut tails = pair_tails(pair1.0, pair1.1, seq1)?;
    let mut second = pair_tails(pair2.0, pair2.1, seq2)?;
    for t in &mut second {
        t.label.push_str(" (y_n)");
    }
    tails.extend(second);
    Ok(ea_from_tails(tails, pair1.0.carrier(), tol))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hull {
    pub lo: f64,
    pub hi: f64,
}

impl Hull {
    fn of(values: impl IntoIterator<Item = f64>) -> Self {
        values.into_iter().fold(
            Hull {
                lo: f64::INFINITY,
                hi: f64::NEG_INFINITY,
            },
            |h, v| Hull {
                lo: h.lo.min(v),
                hi: h.hi.max(v),
            },
        )
    }
}

/// Interval hull of the grid images of `map`.
pub fn range_hull(map: &SelfMap) -> Result<Hull> {
    Ok(Hull::of(map.images()?.into_iter().map(|p| p.1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeMode {
    Plain,
    /// Compare against the closure of the outer range.
    Closure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImageWitness {
    pub x: f64,
    pub image: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContainmentReport {
    pub inner: String,
    pub outer: String,
    pub mode: RangeMode,
    pub status: Verdict,
    pub inner_hull: Hull,
    pub outer_hull: Hull,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<ImageWitness>,
}

/// Checks `inner(X) ⊂ outer(X)` by comparing grid-image hulls. The hull of
/// finitely many images is already closed, so both modes compare against
/// the same interval; the mode is carried into the report.
pub fn check_range_containment(
    inner: &SelfMap,
    outer: &SelfMap,
    tol: f64,
    mode: RangeMode,
) -> Result<ContainmentReport> {
    check_shared(inner, outer)?;
    let outer_hull = range_hull(outer)?;
    let images = inner.images()?;
    let inner_hull = Hull::of(images.iter().map(|p| p.1));
    let witness = images
        .iter()
        .find(|(_, y)| *y < outer_hull.lo - tol || *y > outer_hull.hi + tol)
        .map(|&(x, image)| ImageWitness { x, image });
    Ok(ContainmentReport {
        inner: inner.label.clone(),
        outer: outer.label.clone(),
        mode,
        status: Verdict::from_pass(witness.is_none()),
        inner_hull,
        outer_hull,
        witness,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosednessStatus {
    Closed,
    NotVerifiable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosednessReport {
    pub map: String,
    pub status: ClosednessStatus,
    pub hull: Hull,
    pub refined_hull: Hull,
    pub monotone_breaks: usize,
    pub note: String,
}

/// Decides whether the range of `f` is closed: the map must be piecewise
/// monotone on the grid (at most `max_breaks` direction changes) and the
/// hull endpoints must be attained by grid images and stay put under a
/// twofold refinement of the grid.
pub fn check_range_closed(f: &SelfMap, tol: f64, max_breaks: usize) -> Result<ClosednessReport> {
    let images = f.images()?;
    let hull = Hull::of(images.iter().map(|p| p.1));
    let refined_hull = range_hull(&f.with_carrier(f.carrier().refined())?)?;

    let mut breaks = 0;
    let mut last_dir = 0i8;
    for w in images.windows(2) {
        let d = w[1].1 - w[0].1;
        let dir = if d > tol {
            1
        } else if d < -tol {
            -1
        } else {
            0
        };
        if dir != 0 {
            if last_dir != 0 && dir != last_dir {
                breaks += 1;
            }
            last_dir = dir;
        }
    }

    let attained = |v: f64| images.iter().any(|p| (p.1 - v).abs() <= tol);
    let stable =
        (refined_hull.lo - hull.lo).abs() <= tol && (refined_hull.hi - hull.hi).abs() <= tol;
    let (status, note) = if breaks > max_breaks {
        (
            ClosednessStatus::NotVerifiable,
            format!("{breaks} direction changes exceed the bound of {max_breaks}"),
        )
    } else if !(attained(hull.lo) && attained(hull.hi)) {
        (
            ClosednessStatus::NotVerifiable,
            "hull endpoints are not attained".to_string(),
        )
    } else if !stable {
        (
            ClosednessStatus::NotVerifiable,
            "hull endpoints move under grid refinement".to_string(),
        )
    } else {
        (
            ClosednessStatus::Closed,
            "hull endpoints are attained and stable under refinement".to_string(),
        )
    };
    Ok(ClosednessReport {
        map: f.label.clone(),
        status,
        hull,
        refined_hull,
        monotone_breaks: breaks,
        note,
    })
}

/// An ordered finite family of self-maps on one carrier.
#[derive(Debug, Clone)]
pub struct Family {
    label: String,
    maps: Vec<SelfMap>,
}

impl Family {
    pub fn new(label: impl Into<String>, maps: Vec<SelfMap>) -> Result<Self> {
        let label = label.into();
        let Some(first) = maps.first() else {
            return input(format!("family {label} is empty"));
        };
        if maps
            .iter()
            .any(|m| !same_carrier(m.carrier(), first.carrier()))
        {
            return input(format!("family {label} mixes carriers"));
        }
        Ok(Self { label, maps })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn maps(&self) -> &[SelfMap] {
        &self.maps
    }
}

/// The composition `M_1 ∘ M_2 ∘ … ∘ M_l` of a family.
pub fn compose_family(fam: &Family) -> Result<SelfMap> {
    if fam.maps.len() == 1 {
        let mut m = fam.maps[0].clone();
        m.label = fam.label.clone();
        return Ok(m);
    }
    let carrier = *fam.maps[0].carrier();
    SelfMap::validated(
        carrier,
        MapRule::Compose(fam.maps.clone()),
        fam.label.clone(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityFailure {
    pub left: String,
    pub right: String,
    pub x: f64,
    pub difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyCommutingReport {
    pub status: Verdict,
    pub identities_checked: usize,
    pub failures: Vec<IdentityFailure>,
}

fn commute_on_grid(p: &SelfMap, q: &SelfMap) -> Result<Option<IdentityFailure>> {
    for x in p.carrier().points() {
        let pq = p.apply(q.apply(x)?)?;
        let qp = q.apply(p.apply(x)?)?;
        if (pq - qp).abs() > COMMUTE_TOL {
            return Ok(Some(IdentityFailure {
                left: format!("{}{}", p.label, q.label),
                right: format!("{}{}", q.label, p.label),
                x,
                difference: pq - qp,
            }));
        }
    }
    Ok(None)
}

/// Checks the pairwise commutation identities between the members of the
/// families `[A, B, F, G]`: within each family, and across `A`–`F` and
/// `B`–`G`.
pub fn check_family_commuting(fams: &[Family; 4]) -> Result<FamilyCommutingReport> {
    let carrier = *fams[0].maps[0].carrier();
    if fams
        .iter()
        .any(|f| !same_carrier(f.maps[0].carrier(), &carrier))
    {
        return input("families live on different carriers");
    }
    let mut pairs: Vec<(&SelfMap, &SelfMap)> = Vec::new();
    for fam in fams {
        for (i, p) in fam.maps.iter().enumerate() {
            for q in &fam.maps[i + 1..] {
                pairs.push((p, q));
            }
        }
    }
    for (x, y) in [(0, 2), (1, 3)] {
        for p in &fams[x].maps {
            for q in &fams[y].maps {
                pairs.push((p, q));
            }
        }
    }
    let mut failures = Vec::new();
    for (p, q) in &pairs {
        if let Some(f) = commute_on_grid(p, q)? {
            failures.push(f);
        }
    }
    Ok(FamilyCommutingReport {
        status: Verdict::from_pass(failures.is_empty()),
        identities_checked: pairs.len(),
        failures,
    })
}
