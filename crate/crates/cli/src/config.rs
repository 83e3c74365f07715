//! Run configuration.
//!
//! A config is a TOML document with the sections `[carrier]`, `[metric]`,
//! `[maps]`, `[psi]`, `[phi]`, `[contraction]`, `[sequences]`, `[dp]`,
//! `[tolerances]` and `[theorem]`. Unknown keys are rejected. Loading parses
//! every expression and builds every component whose section is present, so
//! a bad expression anywhere fails the run before any computation starts.
//!
//! Precedence: command-line flags, passed in as [`Overrides`], replace file
//! values before anything is built; file values replace built-in defaults.

use std::fmt;
use std::ops::Range;
use std::path::Path;

use fuzzfix::distances::{
    builtin_altering, make_integral_altering, AlteringDistance, BuiltinAltering, Density,
};
use fuzzfix::dp::{DpProblem, DpSpec, ValueSequence};
use fuzzfix::expr::{Function, FunctionError, ParseError};
use fuzzfix::implicit::{
    make_psi, ConditionVariant, Gauge, Gauge3, PsiExample, PsiFunction, PsiSpec,
};
use fuzzfix::metric::{Carrier, FuzzyMetric, TNorm};
use fuzzfix::pairs::{
    compose_family, CommutationVariant, Family, MapQuadruple, RangeMode, SelfMap, SequenceSpec,
};
use fuzzfix::solver::{ClosedTarget, ContainmentDirection, EaPair, Tolerances};
use fuzzfix::verifier::{
    ContractionForm, ContractionSpec, VerificationPlan, DEFAULT_T_GRID, DEFAULT_VERIFY_GRID,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

const DEFAULT_CARRIER_GRID: usize = 101;
const DEFAULT_AXIOM_SAMPLES: usize = 1000;
const DEFAULT_REMARK3_R: f64 = 0.5;
const DEFAULT_PSI_GRID: usize = 11;
const DEFAULT_QUAD_TOL: f64 = 1e-10;
const DEFAULT_TAIL_START: u64 = 1_000_000;
const DEFAULT_TAIL_LEN: usize = 20;
const DEFAULT_DP_GRID: usize = 201;
const DEFAULT_DP_TOL: f64 = 1e-7;
const DEFAULT_DP_MAX_ITER: usize = 200;
const DEFAULT_T53_TAIL_START: u64 = 40;
const DEFAULT_T53_TAIL_LEN: usize = 10;
const DEFAULT_T53_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Location {
    pub file: String,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{file}: cannot read config: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{location}: {message}")]
    Syntax { location: Location, message: String },
    #[error("{file}: missing section [{section}]")]
    MissingSection { file: String, section: &'static str },
    #[error("{location}: [{section}] is missing `{key}`")]
    MissingKey {
        location: Location,
        section: &'static str,
        key: &'static str,
    },
    #[error("{location}: {key}: {source}")]
    Expression {
        location: Location,
        key: String,
        #[source]
        source: FunctionError,
    },
    #[error("{location}: {key}: {source}")]
    Invalid {
        location: Location,
        key: String,
        #[source]
        source: fuzzfix::Error,
    },
}

impl ConfigError {
    pub fn location(&self) -> Option<&Location> {
        match self {
            ConfigError::Syntax { location, .. }
            | ConfigError::MissingKey { location, .. }
            | ConfigError::Expression { location, .. }
            | ConfigError::Invalid { location, .. } => Some(location),
            ConfigError::Io { .. } | ConfigError::MissingSection { .. } => None,
        }
    }

    /// The expression syntax error, when that is what went wrong.
    pub fn parse_error(&self) -> Option<&ParseError> {
        match self {
            ConfigError::Expression {
                source: FunctionError::Parse(p),
                ..
            }
            | ConfigError::Invalid {
                source: fuzzfix::Error::Parse(p),
                ..
            } => Some(p),
            _ => None,
        }
    }
}

type Text = Spanned<String>;

fn d_lo() -> f64 {
    0.0
}

fn d_hi() -> f64 {
    1.0
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    carrier: Option<Spanned<CarrierSection>>,
    metric: Option<Spanned<MetricSection>>,
    maps: Option<Spanned<MapsSection>>,
    psi: Option<Spanned<PsiSection>>,
    phi: Option<Spanned<PhiSection>>,
    contraction: Option<Spanned<ContractionSection>>,
    sequences: Option<Spanned<SequencesSection>>,
    dp: Option<Spanned<DpSection>>,
    tolerances: Option<Spanned<TolerancesSection>>,
    theorem: Option<Spanned<TheoremSection>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CarrierSection {
    #[serde(default = "d_lo")]
    lo: f64,
    #[serde(default = "d_hi")]
    hi: f64,
    grid: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricSection {
    /// Expression in `x`, `y`, `t`; the standard metric when absent.
    membership: Option<Text>,
    tnorm: Option<Text>,
    /// Expression in `a`, `b` for `tnorm = "custom"`.
    tnorm_expression: Option<Text>,
    t_grid: Option<Spanned<Vec<f64>>>,
    /// Random triples for the axiom check; 0 scans every grid triple.
    samples: Option<usize>,
    remark3_r: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum MapDef {
    One(String),
    /// Applied right to left, like a composition.
    Family(Vec<String>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapsSection {
    #[serde(rename = "A")]
    a: Option<Spanned<MapDef>>,
    #[serde(rename = "B")]
    b: Option<Spanned<MapDef>>,
    #[serde(rename = "F")]
    f: Option<Spanned<MapDef>>,
    #[serde(rename = "G")]
    g: Option<Spanned<MapDef>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PsiSection {
    kind: Option<Text>,
    k: Option<f64>,
    a: Option<f64>,
    delta: Option<Text>,
    density: Option<Text>,
    expression: Option<Text>,
    variant: Option<Text>,
    grid: Option<usize>,
    quad_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhiSection {
    kind: Option<Text>,
    density: Option<Text>,
    expression: Option<Text>,
    quad_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ContractionSection {
    form: Option<Text>,
    k: Option<f64>,
    a: Option<f64>,
    delta: Option<Text>,
    delta3: Option<Text>,
    density: Option<Text>,
    grid: Option<usize>,
    t_grid: Option<Spanned<Vec<f64>>>,
    quad_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequencesSection {
    ea: Option<Text>,
    af: Option<Text>,
    bg: Option<Text>,
    tail_start: Option<u64>,
    tail_len: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TolerancesSection {
    coincidence: Option<f64>,
    fixed_point: Option<f64>,
    tail: Option<f64>,
    containment: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TheoremSection {
    containment: Option<Text>,
    containment_mode: Option<Text>,
    closed_target: Option<Text>,
    commutation: Option<Text>,
    r: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum DecisionDef {
    List(Vec<f64>),
    Range(DecisionRange),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecisionRange {
    lo: f64,
    hi: f64,
    n: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DpSection {
    #[serde(default = "d_lo")]
    lo: f64,
    #[serde(default = "d_hi")]
    hi: f64,
    grid: Option<usize>,
    decisions: Option<Spanned<DecisionDef>>,
    q: Option<Text>,
    /// Default for any of `L1`, `L2`, `N1`, `N2` left out.
    payoff: Option<Text>,
    #[serde(rename = "L1")]
    l1: Option<Text>,
    #[serde(rename = "L2")]
    l2: Option<Text>,
    #[serde(rename = "N1")]
    n1: Option<Text>,
    #[serde(rename = "N2")]
    n2: Option<Text>,
    tau: Option<Text>,
    lambda: Option<f64>,
    beta: Option<f64>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    theorem53: Option<Spanned<Theorem53Section>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Theorem53Section {
    r_seq: Option<Text>,
    p_seq: Option<Text>,
    lambda: Option<Text>,
    tail_start: Option<u64>,
    tail_len: Option<usize>,
    tol: Option<f64>,
}

/// Flag values that replace file values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub carrier_grid: Option<usize>,
    pub contraction_grid: Option<usize>,
    pub psi_grid: Option<usize>,
    pub dp_grid: Option<usize>,
    pub metric_t_grid: Option<Vec<f64>>,
    pub contraction_t_grid: Option<Vec<f64>>,
    pub tail_tol: Option<f64>,
    pub fixed_point_tol: Option<f64>,
    pub dp_tol: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MetricSetup {
    pub fm: FuzzyMetric,
    pub t_grid: Vec<f64>,
    pub samples: usize,
    pub remark3_r: f64,
}

#[derive(Debug, Clone)]
pub struct MapsSetup {
    pub quad: MapQuadruple,
    /// Set when any map is given as a list of factors.
    pub families: Option<[Family; 4]>,
}

#[derive(Debug, Clone)]
pub struct PsiSetup {
    pub psi: PsiFunction,
    pub variant: ConditionVariant,
    pub grid: usize,
}

#[derive(Debug, Clone)]
pub struct ContractionSetup {
    pub spec: ContractionSpec,
    pub plan: VerificationPlan,
}

/// Which (E.A.) hypothesis `[sequences]` asserts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EaChoice {
    Pair(EaPair),
    Common,
}

#[derive(Debug, Clone)]
pub struct SequencesSetup {
    pub ea: EaChoice,
    pub af: Option<SequenceSpec>,
    pub bg: Option<SequenceSpec>,
}

#[derive(Debug, Clone, Copy)]
pub struct TheoremSetup {
    pub containment: ContainmentDirection,
    pub containment_mode: RangeMode,
    pub closed_target: ClosedTarget,
    pub commutation: CommutationVariant,
    pub r: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Theorem53Setup {
    pub r_seq: ValueSequence,
    pub p_seq: ValueSequence,
    pub lambda: Gauge,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct DpSetup {
    pub problem: DpProblem,
    pub tol: f64,
    pub max_iter: usize,
    pub theorem53: Option<Theorem53Setup>,
}

/// A fully built configuration. Sections absent from the file are `None`;
/// commands ask for what they need through the `require_*` accessors.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub file: String,
    pub carrier: Option<Carrier>,
    pub metric: Option<MetricSetup>,
    pub maps: Option<MapsSetup>,
    pub psi: Option<PsiSetup>,
    pub contraction: Option<ContractionSetup>,
    pub sequences: Option<SequencesSetup>,
    pub tolerances: Tolerances,
    pub theorem: TheoremSetup,
    pub dp: Option<DpSetup>,
}

macro_rules! require {
    ($name:ident, $field:ident, $ty:ty, $section:literal) => {
        pub fn $name(&self) -> Result<&$ty, ConfigError> {
            self.$field
                .as_ref()
                .ok_or_else(|| ConfigError::MissingSection {
                    file: self.file.clone(),
                    section: $section,
                })
        }
    };
}

impl RunConfig {
    require!(require_carrier, carrier, Carrier, "carrier");
    require!(require_metric, metric, MetricSetup, "metric");
    require!(require_maps, maps, MapsSetup, "maps");
    require!(require_psi, psi, PsiSetup, "psi");
    require!(
        require_contraction,
        contraction,
        ContractionSetup,
        "contraction"
    );
    require!(require_sequences, sequences, SequencesSetup, "sequences");
    require!(require_dp, dp, DpSetup, "dp");
}

/// Reads and builds the config at `path`.
pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        file: file.clone(),
        source,
    })?;
    parse_config(&text, &file, overrides)
}

/// Builds a config from `text`; `file` labels diagnostics.
pub fn parse_config(
    text: &str,
    file: &str,
    overrides: &Overrides,
) -> Result<RunConfig, ConfigError> {
    let b = Builder { text, file };
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax {
        location: b.loc(e.span().unwrap_or(0..0)),
        message: e.message().trim_end().to_string(),
    })?;
    b.build(raw, overrides)
}

struct Builder<'a> {
    text: &'a str,
    file: &'a str,
}

impl Builder<'_> {
    fn loc(&self, span: Range<usize>) -> Location {
        let start = span.start.min(self.text.len());
        let before = &self.text[..start];
        let line_start = before.rfind('\n').map_or(0, |i| i + 1);
        Location {
            file: self.file.to_string(),
            line: before.matches('\n').count() + 1,
            column: before[line_start..].chars().count() + 1,
        }
    }

    fn invalid(&self, span: Range<usize>, key: &str, source: fuzzfix::Error) -> ConfigError {
        ConfigError::Invalid {
            location: self.loc(span),
            key: key.to_string(),
            source,
        }
    }

    fn check<T>(
        &self,
        span: Range<usize>,
        key: &str,
        r: fuzzfix::Result<T>,
    ) -> Result<T, ConfigError> {
        r.map_err(|e| self.invalid(span, key, e))
    }

    fn missing<T>(
        &self,
        span: Range<usize>,
        section: &'static str,
        key: &'static str,
    ) -> Result<T, ConfigError> {
        Err(ConfigError::MissingKey {
            location: self.loc(span),
            section,
            key,
        })
    }

    fn function(&self, t: &Text, key: &str, params: &[&str]) -> Result<Function, ConfigError> {
        Function::parse(t.get_ref(), params).map_err(|source| ConfigError::Expression {
            location: self.loc(t.span()),
            key: key.to_string(),
            source,
        })
    }

    fn name<T>(
        &self,
        t: &Text,
        key: &str,
        parse: impl Fn(&str) -> fuzzfix::Result<T>,
    ) -> Result<T, ConfigError> {
        self.check(t.span(), key, parse(t.get_ref()))
    }

    fn positive(&self, span: Range<usize>, key: &str, v: f64) -> Result<f64, ConfigError> {
        if !(v > 0.0 && v.is_finite()) {
            return Err(self.invalid(
                span,
                key,
                fuzzfix::Error::Input(format!("must be positive and finite, got {v}")),
            ));
        }
        Ok(v)
    }

    fn build(&self, raw: RawConfig, ov: &Overrides) -> Result<RunConfig, ConfigError> {
        let missing_section = |section| ConfigError::MissingSection {
            file: self.file.to_string(),
            section,
        };

        let carrier = match &raw.carrier {
            Some(s) => {
                let grid = ov
                    .carrier_grid
                    .or(s.get_ref().grid)
                    .unwrap_or(DEFAULT_CARRIER_GRID);
                Some(self.check(
                    s.span(),
                    "[carrier]",
                    Carrier::new(s.get_ref().lo, s.get_ref().hi, grid),
                )?)
            }
            None => None,
        };

        let metric = match &raw.metric {
            Some(s) => {
                let c = carrier.ok_or_else(|| missing_section("carrier"))?;
                Some(self.metric(s, c, ov)?)
            }
            None => None,
        };

        let maps = match &raw.maps {
            Some(s) => {
                let c = carrier.ok_or_else(|| missing_section("carrier"))?;
                let m = metric.as_ref().ok_or_else(|| missing_section("metric"))?;
                Some(self.maps(s, c, &m.fm)?)
            }
            None => None,
        };

        let psi = raw.psi.as_ref().map(|s| self.psi(s, ov)).transpose()?;
        let phi = raw.phi.as_ref().map(|s| self.phi(s)).transpose()?;

        let contraction = match &raw.contraction {
            Some(s) => Some(self.contraction(s, psi.as_ref(), phi.as_ref(), ov)?),
            None => None,
        };

        let sequences = raw
            .sequences
            .as_ref()
            .map(|s| self.sequences(s))
            .transpose()?;

        let mut tolerances = Tolerances::default();
        if let Some(s) = &raw.tolerances {
            let span = s.span();
            let t = s.get_ref();
            for (slot, value, key) in [
                (&mut tolerances.coincidence, t.coincidence, "coincidence"),
                (&mut tolerances.fixed_point, t.fixed_point, "fixed_point"),
                (&mut tolerances.tail, t.tail, "tail"),
                (&mut tolerances.containment, t.containment, "containment"),
            ] {
                if let Some(v) = value {
                    *slot = self.positive(span.clone(), &format!("[tolerances] {key}"), v)?;
                }
            }
        }
        if let Some(v) = ov.tail_tol {
            tolerances.tail = v;
        }
        if let Some(v) = ov.fixed_point_tol {
            tolerances.fixed_point = v;
        }

        let theorem = self.theorem(raw.theorem.as_ref())?;
        let dp = raw.dp.as_ref().map(|s| self.dp(s, ov)).transpose()?;

        Ok(RunConfig {
            file: self.file.to_string(),
            carrier,
            metric,
            maps,
            psi,
            contraction,
            sequences,
            tolerances,
            theorem,
            dp,
        })
    }

    fn t_grid(
        &self,
        key: &str,
        file: &Option<Spanned<Vec<f64>>>,
        flag: &Option<Vec<f64>>,
        default: &[f64],
    ) -> Result<Vec<f64>, ConfigError> {
        let (grid, span) = match (flag, file) {
            (Some(g), _) => (g.clone(), 0..0),
            (None, Some(g)) => (g.get_ref().clone(), g.span()),
            (None, None) => return Ok(default.to_vec()),
        };
        if grid.is_empty() {
            return Err(self.invalid(span, key, fuzzfix::Error::Input("t-grid is empty".into())));
        }
        for &t in &grid {
            self.positive(span.clone(), key, t)?;
        }
        Ok(grid)
    }

    fn metric(
        &self,
        s: &Spanned<MetricSection>,
        c: Carrier,
        ov: &Overrides,
    ) -> Result<MetricSetup, ConfigError> {
        let m = s.get_ref();
        let tnorm = match &m.tnorm {
            None => TNorm::Product,
            Some(t) if t.get_ref() == "custom" => {
                let Some(e) = &m.tnorm_expression else {
                    return self.missing(s.span(), "metric", "tnorm_expression");
                };
                let f = self.function(e, "[metric] tnorm_expression", &["a", "b"])?;
                TNorm::custom(move |a, b| f.call(&[a, b]).unwrap_or(f64::NAN))
            }
            Some(t) => self.name(t, "[metric] tnorm", TNorm::from_name)?,
        };
        let fm = match &m.membership {
            None => FuzzyMetric::standard_abs(c, tnorm),
            Some(e) => {
                let f = self.function(e, "[metric] membership", &["x", "y", "t"])?;
                let label = f.source().to_string();
                // The expression covers t > 0; M(x, y, 0) = 0 as for the built-in
                // metrics. Evaluation failures become NaN, which the range check reports.
                FuzzyMetric::from_membership(c, tnorm, label, move |x, y, t| {
                    if t <= 0.0 {
                        0.0
                    } else {
                        f.call(&[x, y, t]).unwrap_or(f64::NAN)
                    }
                })
            }
        };
        let remark3_r = m.remark3_r.unwrap_or(DEFAULT_REMARK3_R);
        if !(remark3_r > 0.0 && remark3_r < 1.0) {
            return Err(self.invalid(
                s.span(),
                "[metric] remark3_r",
                fuzzfix::Error::Input(format!("must lie in (0, 1), got {remark3_r}")),
            ));
        }
        Ok(MetricSetup {
            fm,
            t_grid: self.t_grid(
                "[metric] t_grid",
                &m.t_grid,
                &ov.metric_t_grid,
                &DEFAULT_T_GRID,
            )?,
            samples: m.samples.unwrap_or(DEFAULT_AXIOM_SAMPLES),
            remark3_r,
        })
    }

    fn maps(
        &self,
        s: &Spanned<MapsSection>,
        c: Carrier,
        fm: &FuzzyMetric,
    ) -> Result<MapsSetup, ConfigError> {
        let m = s.get_ref();
        let mut families = Vec::with_capacity(4);
        let mut any_family = false;
        for (label, def) in [("A", &m.a), ("B", &m.b), ("F", &m.f), ("G", &m.g)] {
            let Some(def) = def else {
                return self.missing(s.span(), "maps", label);
            };
            let key = format!("[maps] {label}");
            let texts: Vec<&str> = match def.get_ref() {
                MapDef::One(t) => vec![t.as_str()],
                MapDef::Family(ts) => {
                    any_family = true;
                    ts.iter().map(String::as_str).collect()
                }
            };
            let mut factors = Vec::with_capacity(texts.len());
            for (i, t) in texts.iter().enumerate() {
                let name = if texts.len() == 1 {
                    label.to_string()
                } else {
                    format!("{label}{}", i + 1)
                };
                Function::parse(t, &["x"]).map_err(|source| ConfigError::Expression {
                    location: self.loc(def.span()),
                    key: key.clone(),
                    source,
                })?;
                factors.push(self.check(def.span(), &key, SelfMap::from_expr(c, name, t))?);
            }
            families.push(self.check(def.span(), &key, Family::new(label, factors))?);
        }
        let composed = families
            .iter()
            .map(|f| self.check(s.span(), "[maps]", compose_family(f)))
            .collect::<Result<Vec<_>, _>>()?;
        let [a, b, f, g]: [SelfMap; 4] = composed.try_into().expect("four maps");
        let quad = self.check(
            s.span(),
            "[maps]",
            MapQuadruple::new(a, b, f, g, fm.clone()),
        )?;
        let families: [Family; 4] = families.try_into().expect("four families");
        Ok(MapsSetup {
            quad,
            families: any_family.then_some(families),
        })
    }

    fn density(&self, t: &Text, key: &str) -> Result<Density, ConfigError> {
        Ok(Density::from_function(self.function(t, key, &["x"])?))
    }

    fn psi(&self, s: &Spanned<PsiSection>, ov: &Overrides) -> Result<PsiSetup, ConfigError> {
        let p = s.get_ref();
        let Some(kind) = &p.kind else {
            return self.missing(s.span(), "psi", "kind");
        };
        let example = self.name(kind, "[psi] kind", PsiExample::from_name)?;
        let quad_tol = p.quad_tol.unwrap_or(DEFAULT_QUAD_TOL);
        let k = || p.k.map_or_else(|| self.missing(s.span(), "psi", "k"), Ok);
        let a = || p.a.map_or_else(|| self.missing(s.span(), "psi", "a"), Ok);
        let text = |key: &'static str| -> Result<&Text, ConfigError> {
            let v = match key {
                "delta" => &p.delta,
                "density" => &p.density,
                _ => &p.expression,
            };
            v.as_ref()
                .map_or_else(|| self.missing(s.span(), "psi", key), Ok)
        };
        let gauge = |key: &'static str| -> Result<Gauge, ConfigError> {
            Ok(Gauge::from_function(self.function(
                text(key)?,
                "[psi] delta",
                &["u"],
            )?))
        };
        let density = || self.density(text("density")?, "[psi] density");
        let spec = match example {
            PsiExample::Ex2_1 => PsiSpec::Ex2_1 {
                delta: gauge("delta")?,
            },
            PsiExample::Ex2_2 => PsiSpec::Ex2_2 { k: k()? },
            PsiExample::Ex2_3 => PsiSpec::Ex2_3 {
                delta: Gauge3::from_function(self.function(
                    text("delta")?,
                    "[psi] delta",
                    &["u2", "u3", "u4"],
                )?),
            },
            PsiExample::Ex2_4 => PsiSpec::Ex2_4 { k: k()? },
            PsiExample::Ex2_5 => PsiSpec::Ex2_5 {
                a: a()?,
                density: density()?,
                quad_tol,
            },
            PsiExample::Ex2_6 => PsiSpec::Ex2_6 {
                delta: gauge("delta")?,
                density: density()?,
                quad_tol,
            },
            PsiExample::Custom => PsiSpec::Custom(self.function(
                text("expression")?,
                "[psi] expression",
                &["u1", "u2", "u3", "u4"],
            )?),
        };
        let psi = self.check(s.span(), "[psi]", make_psi(spec))?;
        let variant = match &p.variant {
            Some(v) => self.name(v, "[psi] variant", ConditionVariant::from_name)?,
            None => ConditionVariant::AsPrinted,
        };
        Ok(PsiSetup {
            psi,
            variant,
            grid: ov.psi_grid.or(p.grid).unwrap_or(DEFAULT_PSI_GRID),
        })
    }

    fn phi(&self, s: &Spanned<PhiSection>) -> Result<AlteringDistance, ConfigError> {
        let p = s.get_ref();
        let Some(kind) = &p.kind else {
            return self.missing(s.span(), "phi", "kind");
        };
        let quad_tol = p.quad_tol.unwrap_or(DEFAULT_QUAD_TOL);
        match kind.get_ref().as_str() {
            "integral" => {
                let Some(d) = &p.density else {
                    return self.missing(s.span(), "phi", "density");
                };
                let density = self.density(d, "[phi] density")?;
                self.check(
                    d.span(),
                    "[phi] density",
                    make_integral_altering(&density, quad_tol),
                )
            }
            "expression" => {
                let Some(e) = &p.expression else {
                    return self.missing(s.span(), "phi", "expression");
                };
                let phi = AlteringDistance::from_function(self.function(
                    e,
                    "[phi] expression",
                    &["s"],
                )?);
                let report = self.check(e.span(), "[phi] expression", phi.verify(101))?;
                if !report.status.passed() {
                    return Err(self.invalid(
                        e.span(),
                        "[phi] expression",
                        fuzzfix::Error::Input(format!("not an altering distance: {report:?}")),
                    ));
                }
                Ok(phi)
            }
            _ => Ok(builtin_altering(self.name(
                kind,
                "[phi] kind",
                BuiltinAltering::from_name,
            )?)),
        }
    }

    fn contraction(
        &self,
        s: &Spanned<ContractionSection>,
        psi: Option<&PsiSetup>,
        phi: Option<&AlteringDistance>,
        ov: &Overrides,
    ) -> Result<ContractionSetup, ConfigError> {
        let c = s.get_ref();
        let form = match &c.form {
            Some(f) => self.name(f, "[contraction] form", ContractionForm::from_name)?,
            None => ContractionForm::Main411,
        };
        let mut spec = ContractionSpec::new(form);
        spec.k = c.k;
        spec.a = c.a;
        if let Some(q) = c.quad_tol {
            spec.quad_tol = q;
        }
        if let Some(d) = &c.delta {
            spec.delta = Some(Gauge::from_function(self.function(
                d,
                "[contraction] delta",
                &["u"],
            )?));
        }
        if let Some(d) = &c.delta3 {
            spec.delta3 = Some(Gauge3::from_function(self.function(
                d,
                "[contraction] delta3",
                &["u2", "u3", "u4"],
            )?));
        }
        if let Some(d) = &c.density {
            spec.density = Some(self.density(d, "[contraction] density")?);
        }
        let needs_psi = matches!(
            form,
            ContractionForm::Main411 | ContractionForm::Integral511
        );
        let needs_phi = !form.is_integral();
        let missing_section = |section| ConfigError::MissingSection {
            file: self.file.to_string(),
            section,
        };
        if needs_psi {
            spec.psi = Some(psi.ok_or_else(|| missing_section("psi"))?.psi.clone());
        }
        if needs_phi {
            spec.phi = Some(phi.ok_or_else(|| missing_section("phi"))?.clone());
        }
        self.check(s.span(), "[contraction]", spec.validate())?;
        let grid = ov
            .contraction_grid
            .or(c.grid)
            .unwrap_or(DEFAULT_VERIFY_GRID);
        let t_grid = self.t_grid(
            "[contraction] t_grid",
            &c.t_grid,
            &ov.contraction_t_grid,
            &DEFAULT_T_GRID,
        )?;
        let plan = self.check(
            s.span(),
            "[contraction]",
            VerificationPlan::new(grid, t_grid),
        )?;
        Ok(ContractionSetup { spec, plan })
    }

    fn sequences(&self, s: &Spanned<SequencesSection>) -> Result<SequencesSetup, ConfigError> {
        let q = s.get_ref();
        let ea = match &q.ea {
            None => EaChoice::Pair(EaPair::Af),
            Some(t) => match t.get_ref().as_str() {
                "AF" | "af" => EaChoice::Pair(EaPair::Af),
                "BG" | "bg" => EaChoice::Pair(EaPair::Bg),
                "common" => EaChoice::Common,
                other => {
                    return Err(self.invalid(
                        t.span(),
                        "[sequences] ea",
                        fuzzfix::Error::Input(format!("expected AF, BG or common, got `{other}`")),
                    ))
                }
            },
        };
        let start = q.tail_start.unwrap_or(DEFAULT_TAIL_START);
        let len = q.tail_len.unwrap_or(DEFAULT_TAIL_LEN);
        let seq = |t: &Option<Text>, key: &str| -> Result<Option<SequenceSpec>, ConfigError> {
            t.as_ref()
                .map(|t| {
                    let f = self.function(t, key, &["n"])?;
                    self.check(t.span(), key, SequenceSpec::new(f, start, len))
                })
                .transpose()
        };
        let af = seq(&q.af, "[sequences] af")?;
        let bg = seq(&q.bg, "[sequences] bg")?;
        match ea {
            EaChoice::Pair(EaPair::Af) | EaChoice::Common if af.is_none() => {
                return self.missing(s.span(), "sequences", "af")
            }
            EaChoice::Pair(EaPair::Bg) | EaChoice::Common if bg.is_none() => {
                return self.missing(s.span(), "sequences", "bg")
            }
            _ => {}
        }
        Ok(SequencesSetup { ea, af, bg })
    }

    fn theorem(&self, s: Option<&Spanned<TheoremSection>>) -> Result<TheoremSetup, ConfigError> {
        let mut out = TheoremSetup {
            containment: ContainmentDirection::GInA,
            containment_mode: RangeMode::Plain,
            closed_target: ClosedTarget::A,
            commutation: CommutationVariant::WeaklyCompatible,
            r: None,
        };
        let Some(s) = s else {
            return Ok(out);
        };
        let t = s.get_ref();
        if let Some(v) = &t.containment {
            out.containment =
                self.name(v, "[theorem] containment", ContainmentDirection::from_name)?;
        }
        if let Some(v) = &t.containment_mode {
            out.containment_mode = self.name(v, "[theorem] containment_mode", |n| match n {
                "plain" => Ok(RangeMode::Plain),
                "closure" => Ok(RangeMode::Closure),
                other => Err(fuzzfix::Error::Input(format!(
                    "expected plain or closure, got `{other}`"
                ))),
            })?;
        }
        if let Some(v) = &t.closed_target {
            out.closed_target = self.name(v, "[theorem] closed_target", |n| match n {
                "A" => Ok(ClosedTarget::A),
                "B" => Ok(ClosedTarget::B),
                other => Err(fuzzfix::Error::Input(format!(
                    "expected A or B, got `{other}`"
                ))),
            })?;
        }
        if let Some(v) = &t.commutation {
            out.commutation =
                self.name(v, "[theorem] commutation", CommutationVariant::from_name)?;
        }
        out.r = t.r;
        if out.commutation.needs_r() && out.r.is_none() {
            return self.missing(s.span(), "theorem", "r");
        }
        Ok(out)
    }

    fn dp(&self, s: &Spanned<DpSection>, ov: &Overrides) -> Result<DpSetup, ConfigError> {
        let d = s.get_ref();
        let span = s.span();
        let grid = ov.dp_grid.or(d.grid).unwrap_or(DEFAULT_DP_GRID);
        let w = self.check(span.clone(), "[dp]", Carrier::new(d.lo, d.hi, grid))?;
        let decisions = match &d.decisions {
            None => return self.missing(span, "dp", "decisions"),
            Some(def) => match def.get_ref() {
                DecisionDef::List(v) => v.clone(),
                DecisionDef::Range(r) => {
                    let c =
                        self.check(def.span(), "[dp] decisions", Carrier::new(r.lo, r.hi, r.n))?;
                    c.points()
                }
            },
        };
        let xy = |t: &Option<Text>, key: &'static str| -> Result<Function, ConfigError> {
            match t {
                Some(t) => self.function(t, &format!("[dp] {key}"), &["x", "y"]),
                None => self.missing(span.clone(), "dp", key),
            }
        };
        let q = xy(&d.q, "q")?;
        let tau = xy(&d.tau, "tau")?;
        let payoff = |t: &Option<Text>, key: &'static str| -> Result<Function, ConfigError> {
            match t.as_ref().or(d.payoff.as_ref()) {
                Some(t) => self.function(t, &format!("[dp] {key}"), &["x", "y", "z"]),
                None => self.missing(span.clone(), "dp", key),
            }
        };
        let payoffs = [
            payoff(&d.l1, "L1")?,
            payoff(&d.l2, "L2")?,
            payoff(&d.n1, "N1")?,
            payoff(&d.n2, "N2")?,
        ];
        let Some(lambda) = d.lambda else {
            return self.missing(span, "dp", "lambda");
        };
        let Some(beta) = d.beta else {
            return self.missing(span, "dp", "beta");
        };
        let theorem53 = d
            .theorem53
            .as_ref()
            .map(|t| self.theorem53(t))
            .transpose()?;
        let problem = self.check(
            span.clone(),
            "[dp]",
            DpProblem::new(DpSpec {
                w,
                decisions,
                q,
                payoffs,
                tau,
                lambda,
                beta,
            }),
        )?;
        let tol = self.positive(
            span,
            "[dp] tol",
            ov.dp_tol.or(d.tol).unwrap_or(DEFAULT_DP_TOL),
        )?;
        Ok(DpSetup {
            problem,
            tol,
            max_iter: d.max_iter.unwrap_or(DEFAULT_DP_MAX_ITER),
            theorem53,
        })
    }

    fn theorem53(&self, s: &Spanned<Theorem53Section>) -> Result<Theorem53Setup, ConfigError> {
        let t = s.get_ref();
        let start = t.tail_start.unwrap_or(DEFAULT_T53_TAIL_START);
        let len = t.tail_len.unwrap_or(DEFAULT_T53_TAIL_LEN);
        let seq = |v: &Option<Text>, key: &'static str| -> Result<ValueSequence, ConfigError> {
            let Some(v) = v else {
                return self.missing(s.span(), "dp.theorem53", key);
            };
            let name = format!("[dp.theorem53] {key}");
            let f = self.function(v, &name, &["x", "n"])?;
            self.check(v.span(), &name, ValueSequence::new(f, start, len))
        };
        let r_seq = seq(&t.r_seq, "r_seq")?;
        let p_seq = seq(&t.p_seq, "p_seq")?;
        let Some(l) = &t.lambda else {
            return self.missing(s.span(), "dp.theorem53", "lambda");
        };
        let lambda = Gauge::from_function(self.function(l, "[dp.theorem53] lambda", &["u"])?);
        let tol = self.positive(
            s.span(),
            "[dp.theorem53] tol",
            t.tol.unwrap_or(DEFAULT_T53_TOL),
        )?;
        Ok(Theorem53Setup {
            r_seq,
            p_seq,
            lambda,
            tol,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        parse_config(text, "test.toml", &Overrides::default())
    }

    const EXAMPLE6: &str = include_str!("../configs/example6.toml");

    #[test]
    fn bundled_example_loads() {
        let cfg = parse(EXAMPLE6).unwrap();
        let maps = cfg.require_maps().unwrap();
        assert_eq!(maps.quad.a.rule_text(), "x/2");
        assert_eq!(maps.quad.b.rule_text(), "x/4");
        assert_eq!(maps.quad.f.rule_text(), "x");
        assert_eq!(maps.quad.g.rule_text(), "0");
        assert!(maps.families.is_none());
        assert_eq!(cfg.require_psi().unwrap().psi.example(), PsiExample::Ex2_2);
        assert_eq!(
            cfg.require_contraction()
                .unwrap()
                .spec
                .phi
                .as_ref()
                .unwrap()
                .provenance(),
            &fuzzfix::distances::AlteringProvenance::BuiltinLinear
        );
    }

    #[test]
    fn empty_file_has_no_sections() {
        let cfg = parse("").unwrap();
        assert!(matches!(
            cfg.require_maps(),
            Err(ConfigError::MissingSection {
                section: "maps",
                ..
            })
        ));
        assert!(cfg.require_dp().is_err());
    }

    #[test]
    fn dangling_operator_is_located() {
        let text = "[carrier]\n[metric]\n[maps]\nA = \"x +\"\nB = \"x\"\nF = \"x\"\nG = \"x\"\n";
        let err = parse(text).unwrap_err();
        let loc = err.location().unwrap();
        assert_eq!((loc.line, loc.column), (4, 5));
        assert_eq!(err.parse_error().unwrap().offset, 3);
        assert!(
            err.to_string().starts_with("test.toml:4:5: [maps] A: "),
            "{err}"
        );
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = parse("[carrier]\nlo = 0\nwidth = 3\n").unwrap_err();
        match &err {
            ConfigError::Syntax { location, message } => {
                assert_eq!(location.line, 3);
                assert!(message.contains("width"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_type_is_rejected() {
        assert!(matches!(
            parse("[carrier]\ngrid = \"many\"\n"),
            Err(ConfigError::Syntax { .. })
        ));
    }

    #[test]
    fn out_of_range_k_is_invalid() {
        let err = parse("[psi]\nkind = \"ex2_2\"\nk = 1.5\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { .. }), "{err:?}");
        assert!(err.to_string().contains("0 < k < 1"), "{err}");
    }

    #[test]
    fn overrides_beat_file_values() {
        let ov = Overrides {
            contraction_grid: Some(7),
            contraction_t_grid: Some(vec![3.0]),
            ..Overrides::default()
        };
        let cfg = parse_config(EXAMPLE6, "e6", &ov).unwrap();
        let plan = &cfg.require_contraction().unwrap().plan;
        assert_eq!(plan.grid_n, 7);
        assert_eq!(plan.t_grid, vec![3.0]);
    }

    #[test]
    fn families_compose_right_to_left() {
        let text = "[carrier]\ngrid = 11\n[metric]\n[maps]\nA = [\"x/2\", \"x^2\"]\nB = \"x\"\nF = \"x\"\nG = \"x\"\n";
        let cfg = parse(text).unwrap();
        let maps = cfg.require_maps().unwrap();
        assert!(maps.families.is_some());
        assert!((maps.quad.a.apply(0.6).unwrap() - 0.18).abs() < 1e-15);
    }

    #[test]
    fn maps_without_metric_section_fail() {
        let err = parse("[carrier]\n[maps]\nA = \"x\"\n").unwrap_err();
        assert!(matches!(
            err,
            ConfigError::MissingSection {
                section: "metric",
                ..
            }
        ));
    }

    #[test]
    fn missing_map_is_reported() {
        let err = parse("[carrier]\n[metric]\n[maps]\nA = \"x\"\n").unwrap_err();
        assert!(
            matches!(err, ConfigError::MissingKey { key: "B", .. }),
            "{err:?}"
        );
    }

    #[test]
    fn dp_section_builds() {
        let text = r#"
[dp]
grid = 21
decisions = { lo = 0, hi = 1, n = 11 }
q = "x*y"
payoff = "z/2"
tau = "x*y"
lambda = 1
beta = 0.5
"#;
        let cfg = parse(text).unwrap();
        let dp = cfg.require_dp().unwrap();
        assert_eq!(dp.problem.carrier().grid_n(), 21);
        assert_eq!(dp.tol, DEFAULT_DP_TOL);
    }
}
