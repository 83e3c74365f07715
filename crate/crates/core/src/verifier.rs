//! Grid verification of the contractive conditions on a quadruple of maps.
//!
//! Every condition is rewritten as `margin >= 0`. Samples run over
//! `(x, y, t)` with `x`, `y` on the carrier grid and `t` on a finite
//! t-grid; a pass is re-checked on the grid with half the spacing before
//! it is reported.

use rayon::prelude::*;
use serde::Serialize;

use crate::distances::{
    check_phi_class, integrate_density, AlteringDistance, Density, DEFAULT_QUAD_TOL,
};
use crate::error::{input, Error, Result};
use crate::implicit::{make_psi, Gauge, Gauge3, PsiFunction, PsiParams, PsiSpec};
use crate::metric::FuzzyMetric;
use crate::pairs::MapQuadruple;
use crate::report::{MarginSummary, Verdict};

/// Margins above `-MARGIN_TOL` count as satisfied.
pub const MARGIN_TOL: f64 = 1e-9;
pub const DEFAULT_T_GRID: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 10.0];
/// 51 × 51 × 5 = 13 005 samples.
pub const DEFAULT_VERIFY_GRID: usize = 51;
const PHI_VERIFY_GRID: usize = 101;
/// Slack allowed when a gauge value lands a hair outside `[0, 1]`.
const UNIT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ContractionForm {
    #[serde(rename = "main_411")]
    Main411,
    #[serde(rename = "cor43_A")]
    Cor43A,
    #[serde(rename = "cor43_B")]
    Cor43B,
    #[serde(rename = "cor43_C")]
    Cor43C,
    #[serde(rename = "cor43_D")]
    Cor43D,
    #[serde(rename = "integral_511")]
    Integral511,
    #[serde(rename = "cor51_A")]
    Cor51A,
    #[serde(rename = "cor51_B")]
    Cor51B,
}

impl ContractionForm {
    pub const ALL: [ContractionForm; 8] = [
        Self::Main411,
        Self::Cor43A,
        Self::Cor43B,
        Self::Cor43C,
        Self::Cor43D,
        Self::Integral511,
        Self::Cor51A,
        Self::Cor51B,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Main411 => "main_411",
            Self::Cor43A => "cor43_A",
            Self::Cor43B => "cor43_B",
            Self::Cor43C => "cor43_C",
            Self::Cor43D => "cor43_D",
            Self::Integral511 => "integral_511",
            Self::Cor51A => "cor51_A",
            Self::Cor51B => "cor51_B",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Input(format!("unknown contraction form `{name}`")))
    }

    /// Forms stated through integrals of a density.
    pub fn is_integral(self) -> bool {
        matches!(self, Self::Integral511 | Self::Cor51A | Self::Cor51B)
    }
}

/// The condition to verify and the components it needs. Which fields are
/// required depends on `form`; [`ContractionSpec::validate`] checks them.
#[derive(Debug, Clone)]
pub struct ContractionSpec {
    pub form: ContractionForm,
    pub psi: Option<PsiFunction>,
    pub phi: Option<AlteringDistance>,
    pub density: Option<Density>,
    pub k: Option<f64>,
    pub a: Option<f64>,
    pub delta: Option<Gauge>,
    pub delta3: Option<Gauge3>,
    pub quad_tol: f64,
}

impl ContractionSpec {
    pub fn new(form: ContractionForm) -> Self {
        Self {
            form,
            psi: None,
            phi: None,
            density: None,
            k: None,
            a: None,
            delta: None,
            delta3: None,
            quad_tol: DEFAULT_QUAD_TOL,
        }
    }

    pub fn main(psi: PsiFunction, phi: AlteringDistance) -> Self {
        Self {
            psi: Some(psi),
            phi: Some(phi),
            ..Self::new(ContractionForm::Main411)
        }
    }

    pub fn integral(psi: PsiFunction, density: Density, quad_tol: f64) -> Self {
        Self {
            psi: Some(psi),
            density: Some(density),
            quad_tol,
            ..Self::new(ContractionForm::Integral511)
        }
    }

    /// Checks that the components required by `form` are present and valid.
    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    fn resolve(&self) -> Result<Condition> {
        let form = self.form.name();
        let need = |what: &str| Error::Input(format!("{form} needs {what}"));
        let phi = || -> Result<AlteringDistance> {
            let phi = self
                .phi
                .clone()
                .ok_or_else(|| need("an altering distance"))?;
            let report = phi.verify(PHI_VERIFY_GRID)?;
            if !report.status.passed() {
                return input(format!(
                    "altering distance {:?} fails its checks: {report:?}",
                    phi.provenance()
                ));
            }
            Ok(phi)
        };
        let density = || -> Result<Density> {
            if !(self.quad_tol > 0.0) {
                return input(format!(
                    "quadrature tolerance must be positive, got {}",
                    self.quad_tol
                ));
            }
            self.density.clone().ok_or_else(|| need("a density"))
        };
        // Parameter ranges are those of the matching stock relation.
        Ok(match self.form {
            ContractionForm::Main411 => Condition::Main {
                psi: self
                    .psi
                    .clone()
                    .ok_or_else(|| need("an implicit relation"))?,
                phi: phi()?,
            },
            ContractionForm::Cor43A => {
                let delta = self.delta.clone().ok_or_else(|| need("a gauge δ"))?;
                make_psi(PsiSpec::Ex2_1 {
                    delta: delta.clone(),
                })?;
                Condition::Cor43A { phi: phi()?, delta }
            }
            ContractionForm::Cor43B => {
                let k = self.k.ok_or_else(|| need("k"))?;
                make_psi(PsiSpec::Ex2_2 { k })?;
                Condition::Cor43B { phi: phi()?, k }
            }
            ContractionForm::Cor43C => {
                let delta = self
                    .delta3
                    .clone()
                    .ok_or_else(|| need("a three-argument gauge δ"))?;
                make_psi(PsiSpec::Ex2_3 {
                    delta: delta.clone(),
                })?;
                Condition::Cor43C { phi: phi()?, delta }
            }
            ContractionForm::Cor43D => {
                let k = self.k.ok_or_else(|| need("k"))?;
                make_psi(PsiSpec::Ex2_4 { k })?;
                Condition::Cor43D { phi: phi()?, k }
            }
            ContractionForm::Integral511 => {
                let psi = self
                    .psi
                    .clone()
                    .ok_or_else(|| need("an implicit relation"))?;
                let density = density()?;
                let mass = check_phi_class(&density, self.quad_tol)?.total_mass;
                if mass > 1.0 + self.quad_tol {
                    return input(format!(
                        "density `{}` has mass {mass} > 1, so the integrals leave the domain [0,1] of the implicit relation",
                        density.description()
                    ));
                }
                Condition::Integral {
                    psi,
                    density,
                    tol: self.quad_tol,
                }
            }
            ContractionForm::Cor51A => {
                let a = self.a.ok_or_else(|| need("a"))?;
                let density = density()?;
                make_psi(PsiSpec::Ex2_5 {
                    a,
                    density: density.clone(),
                    quad_tol: self.quad_tol,
                })?;
                Condition::Cor51A {
                    a,
                    density,
                    tol: self.quad_tol,
                }
            }
            ContractionForm::Cor51B => {
                let delta = self.delta.clone().ok_or_else(|| need("a gauge δ"))?;
                let density = density()?;
                make_psi(PsiSpec::Ex2_6 {
                    delta: delta.clone(),
                    density: density.clone(),
                    quad_tol: self.quad_tol,
                })?;
                Condition::Cor51B {
                    delta,
                    density,
                    tol: self.quad_tol,
                }
            }
        })
    }

    fn describe(&self) -> SpecSummary {
        SpecSummary {
            psi: self.psi.as_ref().map(|p| p.params()),
            phi: self.phi.as_ref().map(|p| format!("{:?}", p.provenance())),
            density: self.density.as_ref().map(|d| d.description().to_string()),
            k: self.k,
            a: self.a,
            delta: self
                .delta
                .as_ref()
                .map(|d| d.description().to_string())
                .or_else(|| self.delta3.as_ref().map(|d| d.description().to_string())),
        }
    }
}

/// Resolved condition, one variant per form.
enum Condition {
    Main {
        psi: PsiFunction,
        phi: AlteringDistance,
    },
    Cor43A {
        phi: AlteringDistance,
        delta: Gauge,
    },
    Cor43B {
        phi: AlteringDistance,
        k: f64,
    },
    Cor43C {
        phi: AlteringDistance,
        delta: Gauge3,
    },
    Cor43D {
        phi: AlteringDistance,
        k: f64,
    },
    Integral {
        psi: PsiFunction,
        density: Density,
        tol: f64,
    },
    Cor51A {
        a: f64,
        density: Density,
        tol: f64,
    },
    Cor51B {
        delta: Gauge,
        density: Density,
        tol: f64,
    },
}

fn unit_clamp(v: f64) -> Result<f64> {
    if !(-UNIT_SLACK..=1.0 + UNIT_SLACK).contains(&v) {
        return input(format!("gauge value {v} outside [0,1]"));
    }
    Ok(v.clamp(0.0, 1.0))
}

fn max3(a: f64, b: f64, c: f64) -> f64 {
    a.max(b).max(c)
}

fn min3(a: f64, b: f64, c: f64) -> f64 {
    a.min(b).min(c)
}

impl Condition {
    /// Margin given the memberships
    /// `[M(Fx,Gy,t), M(Ax,By,t), M(Ax,Fx,t), M(By,Gy,t)]`.
    fn margin(&self, m: [f64; 4]) -> Result<f64> {
        let gauges = |phi: &AlteringDistance| -> Result<[f64; 4]> {
            let mut out = [0.0; 4];
            for (o, v) in out.iter_mut().zip(m) {
                *o = unit_clamp(phi.eval(v)?)?;
            }
            Ok(out)
        };
        let integrals = |d: &Density, tol: f64| -> Result<[f64; 4]> {
            let mut out = [0.0; 4];
            for (o, v) in out.iter_mut().zip(m) {
                *o = integrate_density(d, 0.0, (1.0 - v).clamp(0.0, 1.0), tol)?;
            }
            Ok(out)
        };
        match self {
            Condition::Main { psi, phi } => {
                let [p1, p2, p3, p4] = gauges(phi)?;
                psi.eval(p1, p2, p3, p4)
            }
            Condition::Cor43A { phi, delta } => {
                let [p1, p2, p3, p4] = gauges(phi)?;
                Ok(p1 - delta.eval(max3(p2, p3, p4))?)
            }
            Condition::Cor43B { phi, k } => {
                let [p1, p2, p3, p4] = gauges(phi)?;
                Ok(p1 - k * min3(p2, p3, p4))
            }
            Condition::Cor43C { phi, delta } => {
                let [p1, p2, p3, p4] = gauges(phi)?;
                Ok(p1 - delta.eval(p2, p3, p4)?)
            }
            Condition::Cor43D { phi, k } => {
                let [p1, p2, p3, p4] = gauges(phi)?;
                Ok(p1 - (k * p2 - p3.min(p4)))
            }
            Condition::Integral { psi, density, tol } => {
                let [i1, i2, i3, i4] = integrals(density, *tol)?;
                psi.eval(
                    unit_clamp(i1)?,
                    unit_clamp(i2)?,
                    unit_clamp(i3)?,
                    unit_clamp(i4)?,
                )
            }
            Condition::Cor51A { a, density, tol } => {
                let [i1, i2, i3, i4] = integrals(density, *tol)?;
                Ok(i1 - a * max3(i2, i3, i4))
            }
            Condition::Cor51B {
                delta,
                density,
                tol,
            } => {
                let [i1, i2, i3, i4] = integrals(density, *tol)?;
                Ok(i1 - delta.eval(max3(i2, i3, i4))?)
            }
        }
    }
}

/// Grid resolution and t-values for a verification run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationPlan {
    pub grid_n: usize,
    pub t_grid: Vec<f64>,
}

impl Default for VerificationPlan {
    fn default() -> Self {
        Self {
            grid_n: DEFAULT_VERIFY_GRID,
            t_grid: DEFAULT_T_GRID.to_vec(),
        }
    }
}

impl VerificationPlan {
    pub fn new(grid_n: usize, t_grid: Vec<f64>) -> Result<Self> {
        let plan = Self { grid_n, t_grid };
        plan.check()?;
        Ok(plan)
    }

    fn check(&self) -> Result<()> {
        if self.grid_n < 2 {
            return input(format!(
                "verification grid needs at least 2 points, got {}",
                self.grid_n
            ));
        }
        if self.t_grid.is_empty() {
            return input("verification plan has an empty t-grid");
        }
        if let Some(t) = self.t_grid.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return input(format!(
                "t-grid values must be positive and finite, got {t}"
            ));
        }
        Ok(())
    }

    pub fn samples(&self) -> usize {
        self.grid_n * self.grid_n * self.t_grid.len()
    }

    /// Same t-grid, grid spacing halved.
    pub fn refined(&self) -> Self {
        Self {
            grid_n: 2 * self.grid_n - 1,
            t_grid: self.t_grid.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleWitness {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

/// Parameters of the verified condition, for the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi: Option<PsiParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<String>,
}

/// Result of one grid scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanResult {
    pub grid_n: usize,
    pub status: Verdict,
    pub worst_margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<SampleWitness>,
    pub samples: usize,
    pub margins: MarginSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub form: ContractionForm,
    pub params: SpecSummary,
    pub status: Verdict,
    pub worst_margin: f64,
    /// First violating sample in `(x, y, t)` scan order.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<SampleWitness>,
    pub samples: usize,
    pub t_grid: Vec<f64>,
    pub margins: MarginSummary,
    pub scan: ScanResult,
    /// Present when the first scan passed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refinement: Option<ScanResult>,
}

fn memberships(quad: &MapQuadruple, x: f64, y: f64, t: f64) -> Result<[f64; 4]> {
    let fm: &FuzzyMetric = &quad.fm;
    let (ax, by, fx, gy) = (
        quad.a.apply(x)?,
        quad.b.apply(y)?,
        quad.f.apply(x)?,
        quad.g.apply(y)?,
    );
    Ok([
        fm.m(fx, gy, t),
        fm.m(ax, by, t),
        fm.m(ax, fx, t),
        fm.m(by, gy, t),
    ])
}

fn at_point(e: Error, x: f64, y: f64, t: f64) -> Error {
    let at = format!("at (x, y, t) = ({x}, {y}, {t})");
    match e {
        Error::Input(m) => Error::Input(format!("{m} {at}")),
        Error::Numerical(m) => Error::Numerical(format!("{m} {at}")),
        other => Error::Numerical(format!("{other} {at}")),
    }
}

fn scan(
    quad: &MapQuadruple,
    cond: &Condition,
    grid_n: usize,
    t_grid: &[f64],
) -> Result<ScanResult> {
    let carrier = quad.carrier().with_grid(grid_n)?;
    let quad = quad.with_carrier(carrier)?;
    let pts = carrier.points();
    // Rows are computed in parallel and merged in scan order, so the
    // witness and the summary do not depend on the worker count.
    let rows: Vec<Vec<f64>> = pts
        .par_iter()
        .map(|&x| {
            let mut row = Vec::with_capacity(pts.len() * t_grid.len());
            for &y in &pts {
                for &t in t_grid {
                    let m = memberships(&quad, x, y, t).map_err(|e| at_point(e, x, y, t))?;
                    let margin = cond.margin(m).map_err(|e| at_point(e, x, y, t))?;
                    if !margin.is_finite() {
                        return Err(at_point(
                            Error::Numerical("margin is not finite".into()),
                            x,
                            y,
                            t,
                        ));
                    }
                    row.push(margin);
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut worst = f64::INFINITY;
    let mut witness = None;
    let per_x = pts.len() * t_grid.len();
    for (i, row) in rows.iter().enumerate() {
        for (j, &margin) in row.iter().enumerate() {
            worst = worst.min(margin);
            if witness.is_none() && margin < -MARGIN_TOL {
                witness = Some(SampleWitness {
                    x: pts[i],
                    y: pts[j / t_grid.len()],
                    t: t_grid[j % t_grid.len()],
                });
            }
        }
        debug_assert_eq!(row.len(), per_x);
    }
    let all: Vec<f64> = rows.concat();
    Ok(ScanResult {
        grid_n,
        status: Verdict::from_pass(witness.is_none()),
        worst_margin: worst,
        witness,
        samples: all.len(),
        margins: MarginSummary::from_margins(&all).expect("plans are nonempty"),
    })
}

/// Verifies `spec` on `quad` over `plan`, re-checking a pass at twice the
/// resolution.
pub fn verify_contraction(
    quad: &MapQuadruple,
    spec: &ContractionSpec,
    plan: &VerificationPlan,
) -> Result<VerificationReport> {
    plan.check()?;
    let cond = spec.resolve()?;
    let first = scan(quad, &cond, plan.grid_n, &plan.t_grid)?;
    let refinement = if first.status.passed() {
        Some(scan(quad, &cond, plan.refined().grid_n, &plan.t_grid)?)
    } else {
        None
    };
    let decisive = refinement.as_ref().unwrap_or(&first);
    Ok(VerificationReport {
        form: spec.form,
        params: spec.describe(),
        status: decisive.status,
        worst_margin: first.worst_margin.min(decisive.worst_margin),
        witness: decisive.witness,
        samples: first.samples,
        t_grid: plan.t_grid.clone(),
        margins: first.margins,
        scan: first.clone(),
        refinement,
    })
}

/// The main contractive condition with implicit relation `psi` and altering
/// distance `phi`.
pub fn verify_main_contraction(
    quad: &MapQuadruple,
    psi: &PsiFunction,
    phi: &AlteringDistance,
    plan: &VerificationPlan,
) -> Result<VerificationReport> {
    verify_contraction(quad, &ContractionSpec::main(psi.clone(), phi.clone()), plan)
}

/// Parameters of the four alternative conditions with an altering distance.
#[derive(Debug, Clone)]
pub enum CorollaryParams {
    /// `φ(M(Fx,Gy,t)) >= δ(max{…})`.
    A(Gauge),
    /// `φ(M(Fx,Gy,t)) >= k·min{…}`.
    B(f64),
    /// `φ(M(Fx,Gy,t)) >= δ(φ(M(Ax,By,t)), φ(M(Ax,Fx,t)), φ(M(By,Gy,t)))`.
    C(Gauge3),
    /// `φ(M(Fx,Gy,t)) >= k·φ(M(Ax,By,t)) - min{φ(M(Ax,Fx,t)), φ(M(By,Gy,t))}`.
    D(f64),
}

pub fn verify_corollary_condition(
    quad: &MapQuadruple,
    params: CorollaryParams,
    phi: &AlteringDistance,
    plan: &VerificationPlan,
) -> Result<VerificationReport> {
    let mut spec;
    match params {
        CorollaryParams::A(d) => {
            spec = ContractionSpec::new(ContractionForm::Cor43A);
            spec.delta = Some(d);
        }
        CorollaryParams::B(k) => {
            spec = ContractionSpec::new(ContractionForm::Cor43B);
            spec.k = Some(k);
        }
        CorollaryParams::C(d) => {
            spec = ContractionSpec::new(ContractionForm::Cor43C);
            spec.delta3 = Some(d);
        }
        CorollaryParams::D(k) => {
            spec = ContractionSpec::new(ContractionForm::Cor43D);
            spec.k = Some(k);
        }
    }
    spec.phi = Some(phi.clone());
    verify_contraction(quad, &spec, plan)
}

/// Integral condition with implicit relation `psi` and density `density`.
pub fn verify_integral_contraction(
    quad: &MapQuadruple,
    psi: &PsiFunction,
    density: &Density,
    plan: &VerificationPlan,
    quad_tol: f64,
) -> Result<VerificationReport> {
    verify_contraction(
        quad,
        &ContractionSpec::integral(psi.clone(), density.clone(), quad_tol),
        plan,
    )
}

/// Margin of `spec` at a single `(x, y, t)`.
pub fn contraction_margin(
    quad: &MapQuadruple,
    spec: &ContractionSpec,
    x: f64,
    y: f64,
    t: f64,
) -> Result<f64> {
    if !(t > 0.0) {
        return input(format!("t must be positive, got {t}"));
    }
    let c = quad.carrier();
    if !c.contains(x, 0.0) || !c.contains(y, 0.0) {
        return input(format!("({x}, {y}) lies outside the carrier"));
    }
    let cond = spec.resolve()?;
    let m = memberships(quad, x, y, t)?;
    cond.margin(m).map_err(|e| at_point(e, x, y, t))
}
