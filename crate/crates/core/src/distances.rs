//! Densities, adaptive Simpson quadrature and altering distance functions.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{input, Error, Result};
use crate::expr::Function;
use crate::report::Verdict;

pub const DEFAULT_QUAD_TOL: f64 = 1e-10;
pub const MAX_QUAD_DEPTH: u32 = 40;

/// Upper limits used by the density-class check.
pub const PHI_CLASS_EPSILONS: [f64; 4] = [1e-3, 1e-2, 1e-1, 1.0];
const PHI_CLASS_THRESHOLD: f64 = 1e-14;

type Fallible1 = Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>;

/// A nonnegative integrand on `[0, 1]`.
#[derive(Clone)]
pub struct Density {
    eval: Fallible1,
    description: String,
}

impl fmt::Debug for Density {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Density({})", self.description)
    }
}

impl Density {
    pub fn new(
        description: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(move |x| Ok(f(x))),
            description: description.into(),
        }
    }

    /// A density given as an expression in `x`.
    pub fn from_function(f: Function) -> Self {
        let description = f.source().to_string();
        Self {
            eval: Arc::new(move |x| Ok(f.call(&[x])?)),
            description,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c}"), move |_| c)
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    /// Density value; negative or non-finite values are errors.
    pub fn value(&self, x: f64) -> Result<f64> {
        let v = (self.eval)(x)?;
        if !v.is_finite() {
            return Err(Error::Numerical(format!(
                "density `{}` is not finite at {x}",
                self.description
            )));
        }
        if v < 0.0 {
            return input(format!(
                "density `{}` is negative ({v}) at {x}",
                self.description
            ));
        }
        Ok(v)
    }

    /// `∫_0^upper` with the default tolerance.
    pub fn integral_to(&self, upper: f64, tol: f64) -> Result<f64> {
        integrate_density(self, 0.0, upper, tol)
    }
}

struct Segment {
    a: f64,
    fa: f64,
    m: f64,
    fm: f64,
    b: f64,
    fb: f64,
    whole: f64,
}

fn simpson_step(
    f: &dyn Fn(f64) -> Result<f64>,
    seg: Segment,
    tol: f64,
    global_tol: f64,
    depth: u32,
) -> Result<f64> {
    let Segment {
        a,
        fa,
        m,
        fm,
        b,
        fb,
        whole,
    } = seg;
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm)?;
    let frm = f(rm)?;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    let collapsed = lm <= a || rm >= b || m <= lm || m >= rm;
    if depth == 0 || collapsed {
        // Jumps in piecewise densities end up here; a leaf this narrow is
        // accepted when its error estimate fits the overall budget.
        if delta.abs() / 15.0 <= global_tol {
            return Ok(left + right + delta / 15.0);
        }
        return Err(Error::Numerical(format!(
            "adaptive Simpson did not converge on [{a}, {b}] (error estimate {:e})",
            delta.abs() / 15.0
        )));
    }
    let l = simpson_step(
        f,
        Segment {
            a,
            fa,
            m: lm,
            fm: flm,
            b: m,
            fb: fm,
            whole: left,
        },
        0.5 * tol,
        global_tol,
        depth - 1,
    )?;
    let r = simpson_step(
        f,
        Segment {
            a: m,
            fa: fm,
            m: rm,
            fm: frm,
            b,
            fb,
            whole: right,
        },
        0.5 * tol,
        global_tol,
        depth - 1,
    )?;
    Ok(l + r)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return input(format!("quadrature tolerance must be positive, got {tol}"));
    }
    if a > b {
        return input(format!("integration bounds out of order: {a} > {b}"));
    }
    if a == b {
        return Ok(0.0);
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a)?, f(m)?, f(b)?);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(
        f,
        Segment {
            a,
            fa,
            m,
            fm,
            b,
            fb,
            whole,
        },
        tol,
        tol,
        MAX_QUAD_DEPTH,
    )
}

/// `∫_a^b density` for `0 <= a <= b <= 1`.
pub fn integrate_density(density: &Density, a: f64, b: f64, tol: f64) -> Result<f64> {
    if a > b {
        return input(format!("integration bounds out of order: {a} > {b}"));
    }
    if a < 0.0 || b > 1.0 {
        return input(format!("integration bounds [{a}, {b}] leave [0, 1]"));
    }
    adaptive_simpson(&|x| density.value(x), a, b, tol)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiClassReport {
    pub density: String,
    /// `(epsilon, ∫_0^epsilon)` for each checked upper limit.
    pub integrals: Vec<(f64, f64)>,
    pub total_mass: f64,
}

/// Checks that the density is nonnegative on a 201-point grid and that
/// `∫_0^ε density > 0` for every ε in [`PHI_CLASS_EPSILONS`].
pub fn check_phi_class(density: &Density, tol: f64) -> Result<PhiClassReport> {
    for i in 0..=200 {
        density.value(i as f64 / 200.0)?;
    }
    let mut integrals = Vec::with_capacity(PHI_CLASS_EPSILONS.len());
    for eps in PHI_CLASS_EPSILONS {
        let v = integrate_density(density, 0.0, eps, tol)?;
        if !(v > PHI_CLASS_THRESHOLD) {
            return input(format!(
                "density `{}` fails the class condition: integral over [0, {eps}] is {v:e}",
                density.description
            ));
        }
        integrals.push((eps, v));
    }
    let total_mass = integrals.last().map(|p| p.1).unwrap_or(0.0);
    Ok(PhiClassReport {
        density: density.description.clone(),
        integrals,
        total_mass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlteringProvenance {
    BuiltinLinear,
    BuiltinQuadratic,
    /// `scale · ∫_0^{1-s} density`; `scale < 1` when the density's total
    /// mass exceeded one and was normalised.
    Integral {
        density: String,
        scale: f64,
    },
    Custom {
        description: String,
    },
}

/// Monotone gauge `φ: [0,1] → [0,1]` with `φ(1) = 0`.
#[derive(Clone)]
pub struct AlteringDistance {
    eval: Fallible1,
    provenance: AlteringProvenance,
}

impl fmt::Debug for AlteringDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "AlteringDistance({:?})", self.provenance)
    }
}

const UNIT_SLACK: f64 = 1e-12;

impl AlteringDistance {
    pub fn custom(
        description: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(move |x| Ok(f(x))),
            provenance: AlteringProvenance::Custom {
                description: description.into(),
            },
        }
    }

    /// A gauge given as an expression in `s`. Callers should run
    /// [`verify_altering`] before relying on it.
    pub fn from_function(f: Function) -> Self {
        let description = f.source().to_string();
        Self {
            eval: Arc::new(move |x| Ok(f.call(&[x])?)),
            provenance: AlteringProvenance::Custom { description },
        }
    }

    pub fn provenance(&self) -> &AlteringProvenance {
        &self.provenance
    }

    pub fn eval(&self, lambda: f64) -> Result<f64> {
        if !(-UNIT_SLACK..=1.0 + UNIT_SLACK).contains(&lambda) {
            return input(format!("altering distance argument {lambda} outside [0,1]"));
        }
        (self.eval)(lambda.clamp(0.0, 1.0))
    }

    /// Runs [`verify_altering`] on this gauge.
    pub fn verify(&self, grid_n: usize) -> Result<AlteringReport> {
        verify_altering(|l| self.eval(l), grid_n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinAltering {
    Linear,
    Quadratic,
}

impl BuiltinAltering {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "linear" => Ok(Self::Linear),
            "quadratic" => Ok(Self::Quadratic),
            other => input(format!("unknown altering distance kind `{other}`")),
        }
    }
}

/// `linear`: `φ(λ) = 1 - λ`; `quadratic`: `φ(λ) = (1 - λ)²`.
pub fn builtin_altering(kind: BuiltinAltering) -> AlteringDistance {
    match kind {
        BuiltinAltering::Linear => AlteringDistance {
            eval: Arc::new(|l| Ok(1.0 - l)),
            provenance: AlteringProvenance::BuiltinLinear,
        },
        BuiltinAltering::Quadratic => AlteringDistance {
            eval: Arc::new(|l| Ok((1.0 - l) * (1.0 - l))),
            provenance: AlteringProvenance::BuiltinQuadratic,
        },
    }
}

/// Grid used to validate integral altering distances.
pub const ALTERING_VERIFY_GRID: usize = 101;

/// `φ(s) = ∫_0^{1-s} density`, normalised by the total mass when it
/// exceeds one so that `φ` stays inside `[0, 1]`.
pub fn make_integral_altering(density: &Density, tol: f64) -> Result<AlteringDistance> {
    let phi_class = check_phi_class(density, tol)?;
    let mass = integrate_density(density, 0.0, 1.0, tol)?;
    let scale = if mass > 1.0 { 1.0 / mass } else { 1.0 };
    let d = density.clone();
    let phi = AlteringDistance {
        eval: Arc::new(move |s| {
            let upper = (1.0 - s).clamp(0.0, 1.0);
            Ok(scale * integrate_density(&d, 0.0, upper, tol)?)
        }),
        provenance: AlteringProvenance::Integral {
            density: phi_class.density,
            scale,
        },
    };
    let report = phi.verify(ALTERING_VERIFY_GRID)?;
    if !report.status.passed() {
        return input(format!(
            "integral altering distance for `{}` is not strictly decreasing with a single zero at 1: {report:?}",
            density.description
        ));
    }
    Ok(phi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaugeCheck {
    pub status: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<f64>,
}

impl GaugeCheck {
    fn from_witness(witness: Option<f64>) -> Self {
        Self {
            status: Verdict::from_pass(witness.is_none()),
            witness,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlteringReport {
    pub status: Verdict,
    /// Values stay inside `[0, 1]`.
    pub range: GaugeCheck,
    /// Strictly decreasing between consecutive grid points.
    pub ad1: GaugeCheck,
    /// `φ(1) = 0` within `1e-12` and `φ(λ) > 0` for grid `λ < 1`.
    pub ad2: GaugeCheck,
    pub grid_n: usize,
}

/// Checks the altering-distance conditions on a uniform grid of `[0, 1]`.
/// Witnesses are the first offending grid point.
pub fn verify_altering(
    candidate: impl Fn(f64) -> Result<f64>,
    grid_n: usize,
) -> Result<AlteringReport> {
    if grid_n < 3 {
        return input(format!(
            "altering distance grid needs at least 3 points, got {grid_n}"
        ));
    }
    let grid: Vec<f64> = (0..grid_n)
        .map(|i| {
            if i + 1 == grid_n {
                1.0
            } else {
                i as f64 / (grid_n - 1) as f64
            }
        })
        .collect();
    let values = grid
        .iter()
        .map(|&l| candidate(l))
        .collect::<Result<Vec<_>>>()?;

    let range = grid
        .iter()
        .zip(&values)
        .find(|(_, v)| !(**v >= -UNIT_SLACK && **v <= 1.0 + UNIT_SLACK))
        .map(|(l, _)| *l);
    let ad1 = values
        .windows(2)
        .position(|p| !(p[1] < p[0]))
        .map(|i| grid[i + 1]);
    let ad2 = grid
        .iter()
        .zip(&values)
        .find(|(l, v)| {
            if **l < 1.0 {
                !(**v > 0.0)
            } else {
                !(v.abs() <= 1e-12)
            }
        })
        .map(|(l, _)| *l);

    let (range, ad1, ad2) = (
        GaugeCheck::from_witness(range),
        GaugeCheck::from_witness(ad1),
        GaugeCheck::from_witness(ad2),
    );
    Ok(AlteringReport {
        status: Verdict::from_pass(
            range.status.passed() && ad1.status.passed() && ad2.status.passed(),
        ),
        range,
        ad1,
        ad2,
        grid_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = DEFAULT_QUAD_TOL;

    #[test]
    fn integrate_examples() {
        let one = Density::constant(1.0);
        assert!((integrate_density(&one, 0.0, 0.75, TOL).unwrap() - 0.75).abs() < TOL);
        let lin = Density::new("2x", |x| 2.0 * x);
        assert!((integrate_density(&lin, 0.0, 0.5, TOL).unwrap() - 0.25).abs() < TOL);
        assert_eq!(integrate_density(&lin, 0.3, 0.3, TOL).unwrap(), 0.0);
        assert!(matches!(
            integrate_density(&lin, 0.6, 0.3, TOL),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn smooth_and_piecewise_integrands() {
        // closed forms: ∫_0^1 e^x = e - 1, ∫_0^1 step(x > 1/3) = 2/3
        let e = Density::new("exp", f64::exp);
        let v = integrate_density(&e, 0.0, 1.0, TOL).unwrap();
        assert!((v - (std::f64::consts::E - 1.0)).abs() < TOL);
        let step = Density::new("step", |x| if x > 1.0 / 3.0 { 1.0 } else { 0.0 });
        let v = integrate_density(&step, 0.0, 1.0, TOL).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn non_finite_density_is_a_numerical_error() {
        let bad = Density::new("1/x", |x| 1.0 / x);
        assert!(matches!(
            integrate_density(&bad, 0.0, 1.0, TOL),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn integral_altering_examples() {
        let phi = make_integral_altering(&Density::constant(1.0), TOL).unwrap();
        assert!((phi.eval(0.25).unwrap() - 0.75).abs() < TOL);
        assert_eq!(phi.eval(1.0).unwrap(), 0.0);
        let phi2 = make_integral_altering(&Density::new("2x", |x| 2.0 * x), TOL).unwrap();
        assert!((phi2.eval(0.5).unwrap() - 0.25).abs() < TOL);
        assert_eq!(phi2.eval(1.0).unwrap(), 0.0);
    }

    #[test]
    fn heavy_density_is_normalised() {
        let phi = make_integral_altering(&Density::constant(3.0), TOL).unwrap();
        match phi.provenance() {
            AlteringProvenance::Integral { scale, .. } => assert!((scale - 1.0 / 3.0).abs() < 1e-9),
            other => panic!("unexpected provenance {other:?}"),
        }
        assert!((phi.eval(0.0).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn inadmissible_densities_rejected() {
        assert!(make_integral_altering(&Density::constant(0.0), TOL).is_err());
        // vanishes near zero, so ∫_0^ε is zero for small ε
        let late = Density::new("late", |x| if x > 0.5 { 1.0 } else { 0.0 });
        assert!(make_integral_altering(&late, TOL).is_err());
        assert!(make_integral_altering(&Density::new("neg", |x| x - 0.5), TOL).is_err());
    }

    #[test]
    fn builtin_examples() {
        let lin = builtin_altering(BuiltinAltering::Linear);
        assert_eq!(lin.eval(0.5).unwrap(), 0.5);
        assert_eq!(lin.eval(1.0).unwrap(), 0.0);
        assert_eq!(lin.eval(0.0).unwrap(), 1.0);
        assert!(BuiltinAltering::from_name("cubic").is_err());
        assert!(lin.eval(1.5).is_err());
    }

    #[test]
    fn verify_altering_examples() {
        let r = verify_altering(|l| Ok(1.0 - l), 11).unwrap();
        assert_eq!(r.status, Verdict::Pass);
        let r = verify_altering(|l| Ok((1.0 - l) * (1.0 - l)), 11).unwrap();
        assert_eq!(r.status, Verdict::Pass);
        let r = verify_altering(|_| Ok(0.0), 11).unwrap();
        assert_eq!(r.status, Verdict::Fail);
        assert_eq!(r.ad2.witness, Some(0.0));
        assert!(verify_altering(|l| Ok(1.0 - l), 2).is_err());
    }

    #[test]
    fn integral_of_unit_density_matches_linear() {
        let phi = make_integral_altering(&Density::constant(1.0), TOL).unwrap();
        let lin = builtin_altering(BuiltinAltering::Linear);
        for i in 0..=100 {
            let l = i as f64 / 100.0;
            assert!((phi.eval(l).unwrap() - lin.eval(l).unwrap()).abs() < 1e-9);
        }
    }
}
