//! Implicit relations `ψ: [0,1]⁴ → ℝ`, the six stock constructions, and a
//! sampled checker for the side conditions ψ₁–ψ₄.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::distances::{check_phi_class, integrate_density, Density};
use crate::error::{input, Result};
use crate::expr::Function;

/// Grid used to validate gauge constraints such as `δ(u) < u`.
const GAUGE_GRID: usize = 101;
const PSI1_TOL: f64 = 1e-12;

/// A one-argument gauge `δ`.
#[derive(Clone)]
pub struct Gauge {
    f: Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>,
    description: String,
}

impl fmt::Debug for Gauge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gauge({})", self.description)
    }
}

impl Gauge {
    pub fn new(
        description: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(move |u| Ok(f(u))),
            description: description.into(),
        }
    }

    /// Expression in `u`.
    pub fn from_function(f: Function) -> Self {
        let description = f.source().to_string();
        Self {
            f: Arc::new(move |u| Ok(f.call(&[u])?)),
            description,
        }
    }

    pub fn eval(&self, u: f64) -> Result<f64> {
        (self.f)(u)
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// First grid point `u ∈ (0, upper]` where `δ(u) < u` or `δ(u) >= 0`
    /// fails; `unit_range` also requires `δ(u) <= 1`.
    fn first_violation(&self, upper: f64, unit_range: bool) -> Result<Option<f64>> {
        for i in 0..GAUGE_GRID {
            let u = upper * i as f64 / (GAUGE_GRID - 1) as f64;
            let d = self.eval(u)?;
            let in_range = d >= 0.0 && (!unit_range || d <= 1.0);
            if !in_range || (u > 0.0 && !(d < u)) {
                return Ok(Some(u));
            }
        }
        Ok(None)
    }
}

/// A three-argument gauge `δ(v2, v3, v4)`.
#[derive(Clone)]
pub struct Gauge3 {
    f: Arc<dyn Fn(f64, f64, f64) -> Result<f64> + Send + Sync>,
    description: String,
}

impl fmt::Debug for Gauge3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Gauge3({})", self.description)
    }
}

impl Gauge3 {
    pub fn new(
        description: impl Into<String>,
        f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            f: Arc::new(move |a, b, c| Ok(f(a, b, c))),
            description: description.into(),
        }
    }

    /// Expression in `u2`, `u3`, `u4`.
    pub fn from_function(f: Function) -> Self {
        let description = f.source().to_string();
        Self {
            f: Arc::new(move |a, b, c| Ok(f.call(&[a, b, c])?)),
            description,
        }
    }

    pub fn eval(&self, a: f64, b: f64, c: f64) -> Result<f64> {
        (self.f)(a, b, c)
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PsiExample {
    #[serde(rename = "ex2_1")]
    Ex2_1,
    #[serde(rename = "ex2_2")]
    Ex2_2,
    #[serde(rename = "ex2_3")]
    Ex2_3,
    #[serde(rename = "ex2_4")]
    Ex2_4,
    #[serde(rename = "ex2_5")]
    Ex2_5,
    #[serde(rename = "ex2_6")]
    Ex2_6,
    #[serde(rename = "custom")]
    Custom,
}

impl PsiExample {
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "ex2_1" => Self::Ex2_1,
            "ex2_2" => Self::Ex2_2,
            "ex2_3" => Self::Ex2_3,
            "ex2_4" => Self::Ex2_4,
            "ex2_5" => Self::Ex2_5,
            "ex2_6" => Self::Ex2_6,
            "custom" => Self::Custom,
            other => return input(format!("unknown implicit relation `{other}`")),
        })
    }

    pub const STOCK: [PsiExample; 6] = [
        Self::Ex2_1,
        Self::Ex2_2,
        Self::Ex2_3,
        Self::Ex2_4,
        Self::Ex2_5,
        Self::Ex2_6,
    ];
}

/// Construction recipe for an implicit relation.
#[derive(Clone)]
pub enum PsiSpec {
    /// `u1 - δ(max{u2, u3, u4})`, `δ: [0,1] → [0,1]`, `δ(u) < u` for `u > 0`.
    Ex2_1 { delta: Gauge },
    /// `u1 - k·min{u2, u3, u4}`, `0 < k < 1`.
    Ex2_2 { k: f64 },
    /// `u1 - δ(u2, u3, u4)` with `δ < u` on the three coordinate axes.
    Ex2_3 { delta: Gauge3 },
    /// `u1 - k·u2 - min{u3, u4}`, `0 < k < 1`.
    Ex2_4 { k: f64 },
    /// `I(u1) - a·max{I(u2), I(u3), I(u4)}` with `I(u) = ∫_0^{1-u} density`,
    /// `0 <= a < 1`.
    Ex2_5 {
        a: f64,
        density: Density,
        quad_tol: f64,
    },
    /// `I(u1) - δ(max{I(u2), I(u3), I(u4)})`, `δ: ℝ₊ → ℝ₊`, `δ(u) < u`.
    Ex2_6 {
        delta: Gauge,
        density: Density,
        quad_tol: f64,
    },
    /// Expression in `u1..u4`.
    Custom(Function),
}

impl fmt::Debug for PsiSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", PsiParams::of(self))
    }
}

/// Serializable summary of a relation's parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiParams {
    pub example: PsiExample,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
}

impl PsiParams {
    fn of(spec: &PsiSpec) -> Self {
        let mut p = PsiParams {
            example: PsiExample::Custom,
            k: None,
            a: None,
            delta: None,
            density: None,
            expression: None,
        };
        match spec {
            PsiSpec::Ex2_1 { delta } => {
                p.example = PsiExample::Ex2_1;
                p.delta = Some(delta.description.clone());
            }
            PsiSpec::Ex2_2 { k } => {
                p.example = PsiExample::Ex2_2;
                p.k = Some(*k);
            }
            PsiSpec::Ex2_3 { delta } => {
                p.example = PsiExample::Ex2_3;
                p.delta = Some(delta.description.clone());
            }
            PsiSpec::Ex2_4 { k } => {
                p.example = PsiExample::Ex2_4;
                p.k = Some(*k);
            }
            PsiSpec::Ex2_5 { a, density, .. } => {
                p.example = PsiExample::Ex2_5;
                p.a = Some(*a);
                p.density = Some(density.description().to_string());
            }
            PsiSpec::Ex2_6 { delta, density, .. } => {
                p.example = PsiExample::Ex2_6;
                p.delta = Some(delta.description.clone());
                p.density = Some(density.description().to_string());
            }
            PsiSpec::Custom(f) => p.expression = Some(f.source().to_string()),
        }
        p
    }
}

/// A validated implicit relation.
#[derive(Clone, Debug)]
pub struct PsiFunction {
    spec: PsiSpec,
}

fn check_unit_k(name: &str, k: f64) -> Result<()> {
    if !(k > 0.0 && k < 1.0) {
        return input(format!("{name} requires 0 < k < 1, got {k}"));
    }
    Ok(())
}

/// Validates the parameters of `spec` and wraps it.
pub fn make_psi(spec: PsiSpec) -> Result<PsiFunction> {
    match &spec {
        PsiSpec::Ex2_1 { delta } => {
            if let Some(u) = delta.first_violation(1.0, true)? {
                return input(format!(
                    "ex2_1 gauge `{}` violates 0 <= δ(u) <= 1, δ(u) < u at u = {u}",
                    delta.description
                ));
            }
        }
        PsiSpec::Ex2_2 { k } => check_unit_k("ex2_2", *k)?,
        PsiSpec::Ex2_3 { delta } => {
            for i in 0..GAUGE_GRID {
                let u = i as f64 / (GAUGE_GRID - 1) as f64;
                let axes = [
                    delta.eval(0.0, u, 0.0)?,
                    delta.eval(0.0, 0.0, u)?,
                    delta.eval(u, 0.0, 0.0)?,
                ];
                let worst = axes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if u > 0.0 && !(worst < u) {
                    return input(format!(
                        "ex2_3 gauge `{}` has an axis value {worst} >= u at u = {u}",
                        delta.description
                    ));
                }
            }
            let g: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
            for &a in &g {
                for &b in &g {
                    for &c in &g {
                        let d = delta.eval(a, b, c)?;
                        if !(0.0..=1.0).contains(&d) {
                            return input(format!(
                                "ex2_3 gauge `{}` leaves [0,1] at ({a}, {b}, {c})",
                                delta.description
                            ));
                        }
                    }
                }
            }
        }
        PsiSpec::Ex2_4 { k } => check_unit_k("ex2_4", *k)?,
        PsiSpec::Ex2_5 {
            a,
            density,
            quad_tol,
        } => {
            if !(*a >= 0.0 && *a < 1.0) {
                return input(format!("ex2_5 requires 0 <= a < 1, got {a}"));
            }
            check_phi_class(density, *quad_tol)?;
        }
        PsiSpec::Ex2_6 {
            delta,
            density,
            quad_tol,
        } => {
            let mass = check_phi_class(density, *quad_tol)?.total_mass;
            if let Some(u) = delta.first_violation(mass, false)? {
                return input(format!(
                    "ex2_6 gauge `{}` violates 0 <= δ(u) < u at u = {u}",
                    delta.description
                ));
            }
        }
        PsiSpec::Custom(f) => {
            if f.params().len() != 4 {
                return input("custom implicit relation must take exactly u1, u2, u3, u4");
            }
        }
    }
    Ok(PsiFunction { spec })
}

fn integral(density: &Density, u: f64, tol: f64) -> Result<f64> {
    integrate_density(density, 0.0, (1.0 - u).clamp(0.0, 1.0), tol)
}

impl PsiFunction {
    pub fn example(&self) -> PsiExample {
        PsiParams::of(&self.spec).example
    }

    pub fn params(&self) -> PsiParams {
        PsiParams::of(&self.spec)
    }

    pub fn spec(&self) -> &PsiSpec {
        &self.spec
    }

    /// Evaluation without the domain check; `u` must lie in `[0,1]⁴`.
    pub(crate) fn eval_unchecked(&self, u: [f64; 4]) -> Result<f64> {
        let [u1, u2, u3, u4] = u;
        match &self.spec {
            PsiSpec::Ex2_1 { delta } => Ok(u1 - delta.eval(u2.max(u3).max(u4))?),
            PsiSpec::Ex2_2 { k } => Ok(u1 - k * u2.min(u3).min(u4)),
            PsiSpec::Ex2_3 { delta } => Ok(u1 - delta.eval(u2, u3, u4)?),
            PsiSpec::Ex2_4 { k } => Ok(u1 - k * u2 - u3.min(u4)),
            PsiSpec::Ex2_5 {
                a,
                density,
                quad_tol,
            } => {
                let i1 = integral(density, u1, *quad_tol)?;
                let rest = [u2, u3, u4]
                    .iter()
                    .map(|&u| integral(density, u, *quad_tol))
                    .collect::<Result<Vec<_>>>()?;
                Ok(i1 - a * rest.into_iter().fold(f64::NEG_INFINITY, f64::max))
            }
            PsiSpec::Ex2_6 {
                delta,
                density,
                quad_tol,
            } => {
                let i1 = integral(density, u1, *quad_tol)?;
                let rest = [u2, u3, u4]
                    .iter()
                    .map(|&u| integral(density, u, *quad_tol))
                    .collect::<Result<Vec<_>>>()?;
                Ok(i1 - delta.eval(rest.into_iter().fold(f64::NEG_INFINITY, f64::max))?)
            }
            PsiSpec::Custom(f) => Ok(f.call(&u)?),
        }
    }

    pub fn eval(&self, u1: f64, u2: f64, u3: f64, u4: f64) -> Result<f64> {
        psi_eval(self, u1, u2, u3, u4)
    }
}

/// Evaluates `psi` at a point of `[0,1]⁴`.
pub fn psi_eval(psi: &PsiFunction, u1: f64, u2: f64, u3: f64, u4: f64) -> Result<f64> {
    let u = [u1, u2, u3, u4];
    if let Some(v) = u.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return input(format!(
            "implicit relation arguments must lie in [0,1], got {v}"
        ));
    }
    let v = psi.eval_unchecked(u)?;
    if !v.is_finite() {
        return Err(crate::Error::Numerical(format!(
            "implicit relation not finite at {u:?}"
        )));
    }
    Ok(v)
}

/// Which consequent the ψ₂–ψ₄ implications are tested with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionVariant {
    /// Consequent `u >= 0`, which every `u ∈ [0,1]` satisfies.
    AsPrinted,
    /// Consequent `u <= 0`: `ψ(...) >= 0` must force `u = 0`.
    Strict,
}

impl ConditionVariant {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "as_printed" => Ok(Self::AsPrinted),
            "strict" => Ok(Self::Strict),
            other => input(format!("unknown condition variant `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionStatus {
    Holds,
    HoldsVacuously,
    Fails,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionResult {
    pub status: ConditionStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<[f64; 4]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiReport {
    pub params: PsiParams,
    pub variant: ConditionVariant,
    pub grid_n: usize,
    pub psi1: ConditionResult,
    pub psi2: ConditionResult,
    pub psi3: ConditionResult,
    pub psi4: ConditionResult,
}

impl PsiReport {
    pub fn all_hold(&self) -> bool {
        [&self.psi1, &self.psi2, &self.psi3, &self.psi4]
            .iter()
            .all(|c| c.status != ConditionStatus::Fails)
    }
}

fn unit_grid(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                1.0
            } else {
                i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// A failing sample and the drop in `ψ` that exposed it.
type Psi1Hit = ([f64; 4], f64);

fn check_psi1(psi: &PsiFunction, g: &[f64]) -> Result<ConditionResult> {
    let n = g.len();
    let rows: Vec<Result<Option<Psi1Hit>>> = (0..n * n * n)
        .into_par_iter()
        .map(|idx| {
            let (u2, u3, u4) = (g[idx / (n * n)], g[(idx / n) % n], g[idx % n]);
            let mut prev = psi.eval_unchecked([g[0], u2, u3, u4])?;
            for &u1 in &g[1..] {
                let cur = psi.eval_unchecked([u1, u2, u3, u4])?;
                if cur < prev - PSI1_TOL {
                    return Ok(Some(([u1, u2, u3, u4], cur - prev)));
                }
                prev = cur;
            }
            Ok(None)
        })
        .collect();
    let mut first = None;
    for row in rows {
        if let (None, Some(hit)) = (&first, row?) {
            first = Some(hit);
        }
    }
    Ok(ConditionResult {
        status: if first.is_some() {
            ConditionStatus::Fails
        } else {
            ConditionStatus::Holds
        },
        witness: first.map(|h| h.0),
        value: first.map(|h| h.1),
        samples: n.pow(4),
    })
}

fn check_implication(
    psi: &PsiFunction,
    variant: ConditionVariant,
    g: &[f64],
    pattern: fn(f64) -> [f64; 4],
) -> Result<ConditionResult> {
    let mut fail = None;
    for &u in g {
        let point = pattern(u);
        let v = psi.eval_unchecked(point)?;
        // as printed the consequent is u >= 0, true for every u on the grid
        if variant == ConditionVariant::Strict && v >= 0.0 && u > 0.0 && fail.is_none() {
            fail = Some((point, v));
        }
    }
    let status = match (variant, fail) {
        (ConditionVariant::AsPrinted, _) => ConditionStatus::HoldsVacuously,
        (ConditionVariant::Strict, None) => ConditionStatus::Holds,
        (ConditionVariant::Strict, Some(_)) => ConditionStatus::Fails,
    };
    Ok(ConditionResult {
        status,
        witness: fail.map(|f| f.0),
        value: fail.map(|f| f.1),
        samples: g.len(),
    })
}

/// Checks ψ₁ (nondecreasing in `u1`, by a sweep over a full `grid_n⁴`
/// grid) and the implications ψ₂–ψ₄ under `variant`.
pub fn verify_psi(
    psi: &PsiFunction,
    variant: ConditionVariant,
    grid_n: usize,
) -> Result<PsiReport> {
    if grid_n < 3 {
        return input(format!(
            "implicit relation grid needs at least 3 points, got {grid_n}"
        ));
    }
    let g = unit_grid(grid_n);
    Ok(PsiReport {
        params: psi.params(),
        variant,
        grid_n,
        psi1: check_psi1(psi, &g)?,
        psi2: check_implication(psi, variant, &g, |u| [u, 0.0, u, 0.0])?,
        psi3: check_implication(psi, variant, &g, |u| [u, 0.0, 0.0, u])?,
        psi4: check_implication(psi, variant, &g, |u| [u, u, 0.0, 0.0])?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distances::DEFAULT_QUAD_TOL;

    fn half() -> Gauge {
        Gauge::new("u/2", |u| u / 2.0)
    }

    #[test]
    fn make_psi_examples() {
        let p = make_psi(PsiSpec::Ex2_2 { k: 0.5 }).unwrap();
        assert!((p.eval(0.8, 0.2, 0.3, 0.4).unwrap() - 0.7).abs() < 1e-15);
        let p = make_psi(PsiSpec::Ex2_4 { k: 0.5 }).unwrap();
        assert_eq!(p.eval(0.37, 0.0, 0.0, 0.0).unwrap(), 0.37);
        let p = make_psi(PsiSpec::Ex2_5 {
            a: 0.5,
            density: Density::constant(1.0),
            quad_tol: DEFAULT_QUAD_TOL,
        })
        .unwrap();
        assert!((p.eval(0.5, 0.5, 0.5, 0.5).unwrap() - 0.25).abs() < 1e-10);
    }

    #[test]
    fn psi_eval_examples() {
        let p = make_psi(PsiSpec::Ex2_2 { k: 0.5 }).unwrap();
        assert_eq!(p.eval(0.0, 0.0, 0.0, 0.0).unwrap(), 0.0);
        let p = make_psi(PsiSpec::Ex2_1 { delta: half() }).unwrap();
        assert!((p.eval(0.6, 0.4, 0.2, 0.2).unwrap() - 0.4).abs() < 1e-15);
        // ∫_0^1 1 = 1 and the three trailing integrals run over [0, 0]
        let p = make_psi(PsiSpec::Ex2_6 {
            delta: half(),
            density: Density::constant(1.0),
            quad_tol: DEFAULT_QUAD_TOL,
        })
        .unwrap();
        assert!((p.eval(0.0, 1.0, 1.0, 1.0).unwrap() - 1.0).abs() < 1e-10);
        assert!((p.eval(0.0, 0.0, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-10);
        assert!(p.eval(1.1, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(make_psi(PsiSpec::Ex2_2 { k: 1.5 }).is_err());
        assert!(make_psi(PsiSpec::Ex2_4 { k: 0.0 }).is_err());
        assert!(make_psi(PsiSpec::Ex2_1 {
            delta: Gauge::new("u", |u| u)
        })
        .is_err());
        assert!(make_psi(PsiSpec::Ex2_3 {
            delta: Gauge3::new("max", |a, b, c| a.max(b).max(c))
        })
        .is_err());
        assert!(make_psi(PsiSpec::Ex2_5 {
            a: 1.0,
            density: Density::constant(1.0),
            quad_tol: DEFAULT_QUAD_TOL
        })
        .is_err());
        assert!(make_psi(PsiSpec::Ex2_6 {
            delta: half(),
            density: Density::constant(0.0),
            quad_tol: DEFAULT_QUAD_TOL
        })
        .is_err());
    }

    #[test]
    fn as_printed_is_vacuous_and_strict_psi3_fails_for_ex2_2() {
        let p = make_psi(PsiSpec::Ex2_2 { k: 0.5 }).unwrap();
        let r = verify_psi(&p, ConditionVariant::AsPrinted, 5).unwrap();
        assert_eq!(r.psi1.status, ConditionStatus::Holds);
        for c in [&r.psi2, &r.psi3, &r.psi4] {
            assert_eq!(c.status, ConditionStatus::HoldsVacuously);
        }
        let r = verify_psi(&p, ConditionVariant::Strict, 3).unwrap();
        assert_eq!(r.psi3.status, ConditionStatus::Fails);
        assert_eq!(r.psi3.witness, Some([0.5, 0.0, 0.0, 0.5]));
        assert_eq!(r.psi3.value, Some(0.5));
    }

    #[test]
    fn strict_scan_holds_for_a_genuine_relation() {
        // ψ = -u1 is negative at every u > 0 in all three patterns
        let f = Function::parse("-u1", &["u1", "u2", "u3", "u4"]).unwrap();
        let p = make_psi(PsiSpec::Custom(f)).unwrap();
        let r = verify_psi(&p, ConditionVariant::Strict, 5).unwrap();
        assert_eq!(r.psi2.status, ConditionStatus::Holds);
        assert_eq!(r.psi3.status, ConditionStatus::Holds);
        assert_eq!(r.psi4.status, ConditionStatus::Holds);
        assert_eq!(r.psi1.status, ConditionStatus::Fails);
    }

    #[test]
    fn ex2_4_strict_psi4_by_brute_force() {
        let k = 0.5;
        let p = make_psi(PsiSpec::Ex2_4 { k }).unwrap();
        let r = verify_psi(&p, ConditionVariant::Strict, 11).unwrap();
        // oracle: ψ(u,u,0,0) = u - k u - min{0,0} on the grid, first u > 0 with value >= 0
        let g: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let expected = g.iter().copied().find(|&u| u > 0.0 && u - k * u >= 0.0);
        assert_eq!(r.psi4.witness.map(|w| w[0]), expected);
        assert_eq!(r.psi4.status, ConditionStatus::Fails);
    }

    #[test]
    fn grid_too_small() {
        let p = make_psi(PsiSpec::Ex2_2 { k: 0.5 }).unwrap();
        assert!(verify_psi(&p, ConditionVariant::Strict, 2).is_err());
    }
}
