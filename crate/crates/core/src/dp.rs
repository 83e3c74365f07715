//! Sup-type Bellman operators on a discretised state space, value
//! iteration, and sampled checks of the conditions that make the system
//!
//! ```text
//! P_i(x) = sup_y { q(x,y) + L_i(x, y, P_i(τ(x,y))) }
//! Q_i(x) = sup_y { q(x,y) + N_i(x, y, Q_i(τ(x,y))) }
//! ```
//!
//! have a unique common bounded solution.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{input, Error, Result};
use crate::expr::Function;
use crate::implicit::Gauge;
use crate::metric::Carrier;

/// τ images may leave `W` by at most this much.
pub const TAU_TOL: f64 = 1e-9;
const BOUND_Z_SAMPLES: usize = 21;
const BOUND_X_SAMPLES: usize = 51;
const LIPSCHITZ_SLACK: f64 = 1e-9;
const ENVELOPE_TOL: f64 = 1e-9;
const LAMBDA_GRID: usize = 301;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Operator {
    U1,
    U2,
    V1,
    V2,
}

impl Operator {
    pub const ALL: [Operator; 4] = [Operator::U1, Operator::U2, Operator::V1, Operator::V2];

    fn index(self) -> usize {
        self as usize
    }
}

/// Declarative description of a problem; [`DpProblem::new`] validates it.
#[derive(Debug, Clone)]
pub struct DpSpec {
    pub w: Carrier,
    pub decisions: Vec<f64>,
    /// Expression in `x`, `y`.
    pub q: Function,
    /// `[L1, L2, N1, N2]`, expressions in `x`, `y`, `z`.
    pub payoffs: [Function; 4],
    /// Expression in `x`, `y`.
    pub tau: Function,
    pub lambda: f64,
    pub beta: f64,
}

/// Location of `τ(x, y)` on the state grid: `v(τ) = (1-w)·v[i] + w·v[i+1]`.
#[derive(Debug, Clone, Copy)]
struct Slot {
    i: usize,
    w: f64,
}

/// A validated problem with `q` and `τ` tabulated on `W × D`.
#[derive(Debug, Clone)]
pub struct DpProblem {
    spec: DpSpec,
    q_table: Vec<f64>,
    tau_slots: Vec<Slot>,
    tau_table: Vec<f64>,
    q_sup: f64,
    bound_check: BoundCheck,
}

/// Sampled check of `|L_i|, |N_i| <= Λ` for `|z| <= Λ/(1-β)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub holds: bool,
    /// Largest sampled `|L_i|` or `|N_i|`.
    pub sup_payoff: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<PayoffWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PayoffWitness {
    pub payoff: String,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub value: f64,
}

fn locate(c: &Carrier, x: f64) -> Slot {
    let n = c.grid_n();
    let s = ((x - c.lo()) / c.spacing()).clamp(0.0, (n - 1) as f64);
    let i = (s.floor() as usize).min(n - 2);
    Slot { i, w: s - i as f64 }
}

impl DpProblem {
    pub fn new(spec: DpSpec) -> Result<Self> {
        if !(spec.beta >= 0.0 && spec.beta < 1.0) {
            return input(format!("beta must lie in [0, 1), got {}", spec.beta));
        }
        if !(spec.lambda > 0.0 && spec.lambda.is_finite()) {
            return input(format!("Lambda must be positive, got {}", spec.lambda));
        }
        if spec.decisions.is_empty() || spec.decisions.iter().any(|d| !d.is_finite()) {
            return input("decision grid must be nonempty and finite");
        }
        for (name, f, arity) in [("q", &spec.q, 2), ("tau", &spec.tau, 2)] {
            if f.params().len() != arity {
                return input(format!("{name} must be an expression in x, y"));
            }
        }
        if spec.payoffs.iter().any(|f| f.params().len() != 3) {
            return input("payoffs must be expressions in x, y, z");
        }

        let w = spec.w;
        let xs = w.points();
        let mut q_table = Vec::with_capacity(xs.len() * spec.decisions.len());
        let mut tau_table = Vec::with_capacity(q_table.capacity());
        let mut tau_slots = Vec::with_capacity(q_table.capacity());
        for &x in &xs {
            for &y in &spec.decisions {
                q_table.push(spec.q.call(&[x, y])?);
                let t = spec.tau.call(&[x, y])?;
                if !w.contains(t, TAU_TOL) {
                    return input(format!(
                        "tau({x}, {y}) = {t} lies outside W = [{}, {}]",
                        w.lo(),
                        w.hi()
                    ));
                }
                let t = w.clamp(t);
                tau_table.push(t);
                tau_slots.push(locate(&w, t));
            }
        }
        let q_sup = q_table.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let bound_check = check_payoffs(&spec)?;
        Ok(Self {
            spec,
            q_table,
            tau_slots,
            tau_table,
            q_sup,
            bound_check,
        })
    }
}

/// Samples `(x, y, z)` with `|z| <= Λ/(1-β)`. Rejects payoffs whose slope in
/// `z` exceeds `β`; the bound `|L_i|, |N_i| <= Λ` is only recorded.
fn check_payoffs(s: &DpSpec) -> Result<BoundCheck> {
    let zmax = s.lambda / (1.0 - s.beta);
    let zs: Vec<f64> = (0..BOUND_Z_SAMPLES)
        .map(|i| -zmax + 2.0 * zmax * i as f64 / (BOUND_Z_SAMPLES - 1) as f64)
        .collect();
    let xs = s.w.with_grid(BOUND_X_SAMPLES.min(s.w.grid_n()))?.points();
    let names = ["L1", "L2", "N1", "N2"];
    let mut sup = 0.0f64;
    let mut witness = None;
    for (f, name) in s.payoffs.iter().zip(names) {
        for &x in &xs {
            for &y in &s.decisions {
                let vals = zs
                    .iter()
                    .map(|&z| f.call(&[x, y, z]))
                    .collect::<Result<Vec<_>, _>>()?;
                for (&z, &v) in zs.iter().zip(&vals) {
                    sup = sup.max(v.abs());
                    if witness.is_none() && v.abs() > s.lambda * (1.0 + 1e-12) {
                        witness = Some(PayoffWitness {
                            payoff: name.to_string(),
                            x,
                            y,
                            z,
                            value: v,
                        });
                    }
                }
                for k in 1..zs.len() {
                    let slope = (vals[k] - vals[k - 1]).abs() / (zs[k] - zs[k - 1]);
                    if slope > s.beta + LIPSCHITZ_SLACK {
                        return input(format!(
                            "{name} has slope {slope} in z near ({x}, {y}, {}), above beta = {}",
                            zs[k], s.beta
                        ));
                    }
                }
            }
        }
    }
    Ok(BoundCheck {
        holds: witness.is_none(),
        sup_payoff: sup,
        witness,
    })
}

impl DpProblem {
    pub fn spec(&self) -> &DpSpec {
        &self.spec
    }

    pub fn carrier(&self) -> &Carrier {
        &self.spec.w
    }

    /// The declared payoff bound, as sampled. Only the Lipschitz bound is
    /// enforced: value iteration needs `β < 1`, not `Λ`.
    pub fn bound_check(&self) -> &BoundCheck {
        &self.bound_check
    }

    pub fn beta(&self) -> f64 {
        self.spec.beta
    }

    /// `(sup|q| + Λ) / (1 - β)`, a bound on every fixed point.
    pub fn value_bound(&self) -> f64 {
        (self.q_sup + self.spec.lambda) / (1.0 - self.spec.beta)
    }

    fn payoff(&self, op: Operator) -> &Function {
        &self.spec.payoffs[op.index()]
    }

    fn check_grid(&self, v: &ValueFunction) -> Result<()> {
        let c = self.carrier();
        if v.lo != c.lo() || v.hi != c.hi() || v.values.len() != c.grid_n() {
            return input("value function is not on the problem's state grid");
        }
        Ok(())
    }
}

/// Values on a uniform grid of `[lo, hi]`, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueFunction {
    pub lo: f64,
    pub hi: f64,
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn from_fn(c: &Carrier, f: impl Fn(f64) -> f64) -> Self {
        Self {
            lo: c.lo(),
            hi: c.hi(),
            values: c.points().into_iter().map(f).collect(),
        }
    }

    pub fn zero(c: &Carrier) -> Self {
        Self::from_fn(c, |_| 0.0)
    }

    pub fn carrier(&self) -> Result<Carrier> {
        Carrier::new(self.lo, self.hi, self.values.len())
    }

    pub fn points(&self) -> Vec<f64> {
        self.carrier().map(|c| c.points()).unwrap_or_default()
    }

    /// Linear interpolation; `x` is clamped to `[lo, hi]`.
    pub fn eval(&self, x: f64) -> f64 {
        let c = Carrier::new(self.lo, self.hi, self.values.len())
            .expect("value functions have valid grids");
        let s = locate(&c, c.clamp(x));
        self.at(s)
    }

    fn at(&self, s: Slot) -> f64 {
        if s.w == 0.0 {
            self.values[s.i]
        } else {
            (1.0 - s.w) * self.values[s.i] + s.w * self.values[s.i + 1]
        }
    }

    /// `max |Δ²v| / 8`, the interpolation error bound for a function whose
    /// second differences are those of the grid values.
    pub fn interpolation_error_bound(&self) -> f64 {
        self.values
            .windows(3)
            .map(|w| (w[2] - 2.0 * w[1] + w[0]).abs())
            .fold(0.0, f64::max)
            / 8.0
    }
}

/// `sup_x |r(x) - p(x)|` over the shared grid.
pub fn sup_metric(r: &ValueFunction, p: &ValueFunction) -> Result<f64> {
    if r.lo != p.lo || r.hi != p.hi || r.values.len() != p.values.len() {
        return input("sup metric needs value functions on the same grid");
    }
    Ok(r.values
        .iter()
        .zip(&p.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// `out(x) = max_{y ∈ D} q(x,y) + K(x, y, v(τ(x,y)))` with `K` the payoff
/// of `op`.
pub fn apply_bellman_operator(
    prob: &DpProblem,
    op: Operator,
    v: &ValueFunction,
) -> Result<ValueFunction> {
    prob.check_grid(v)?;
    let xs = prob.carrier().points();
    let nd = prob.spec.decisions.len();
    let k = prob.payoff(op);
    let values = xs
        .par_iter()
        .enumerate()
        .map(|(i, &x)| {
            let mut best = f64::NEG_INFINITY;
            for (j, &y) in prob.spec.decisions.iter().enumerate() {
                let idx = i * nd + j;
                let z = v.at(prob.tau_slots[idx]);
                let val = prob.q_table[idx] + k.call(&[x, y, z])?;
                if val > best {
                    best = val;
                }
            }
            if !best.is_finite() {
                return Err(Error::Numerical(format!(
                    "{op:?} produced a non-finite value at x = {x}"
                )));
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ValueFunction {
        lo: v.lo,
        hi: v.hi,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeCheck {
    pub holds: bool,
    /// Largest `trace[k] - β^k·trace[0]`.
    pub worst_excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationResult {
    pub operator: Operator,
    pub value: ValueFunction,
    pub iterations: usize,
    pub final_residual: f64,
    /// `d(v_{k+1}, v_k)` for each application.
    pub trace: Vec<f64>,
    pub envelope: EnvelopeCheck,
}

fn envelope(trace: &[f64], beta: f64) -> EnvelopeCheck {
    let r0 = trace.first().copied().unwrap_or(0.0);
    let mut worst = f64::NEG_INFINITY;
    let mut bk = 1.0;
    for &r in trace {
        worst = worst.max(r - bk * r0);
        bk *= beta;
    }
    EnvelopeCheck {
        holds: worst <= ENVELOPE_TOL,
        worst_excess: worst,
    }
}

/// Applies `op` until `d(v_{k+1}, v_k) < tol`.
pub fn value_iterate(
    prob: &DpProblem,
    op: Operator,
    init: &ValueFunction,
    tol: f64,
    max_iter: usize,
) -> Result<IterationResult> {
    if !(tol > 0.0) {
        return input(format!("tolerance must be positive, got {tol}"));
    }
    prob.check_grid(init)?;
    let mut v = init.clone();
    let mut trace = Vec::new();
    while trace.len() < max_iter {
        let next = apply_bellman_operator(prob, op, &v)?;
        let res = sup_metric(&next, &v)?;
        trace.push(res);
        v = next;
        if res < tol {
            return Ok(IterationResult {
                operator: op,
                value: v,
                iterations: trace.len(),
                final_residual: res,
                envelope: envelope(&trace, prob.beta()),
                trace,
            });
        }
    }
    let tail: Vec<String> = trace
        .iter()
        .rev()
        .take(5)
        .rev()
        .map(|r| format!("{r:e}"))
        .collect();
    Err(Error::Numerical(format!(
        "{op:?} did not reach residual {tol:e} in {max_iter} iterations; last residuals [{}]",
        tail.join(", ")
    )))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorSolution {
    pub operator: Operator,
    pub iterations: usize,
    pub final_residual: f64,
    pub envelope: EnvelopeCheck,
    pub interpolation_error_bound: f64,
    pub within_value_bound: bool,
    pub trace: Vec<f64>,
    pub value: ValueFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemReport {
    pub tol: f64,
    pub value_bound: f64,
    pub payoff_bound: BoundCheck,
    pub solutions: Vec<OperatorSolution>,
    /// `max_{i,j} d(P_i, P_j)` over the four solutions.
    pub max_disagreement: f64,
    /// `d(T P, P)` for each operator `T`, with `P` the `U1` solution.
    pub cross_residuals: Vec<(Operator, f64)>,
    /// Solutions agree and every cross-residual is within `2·tol`.
    pub common_solution_certified: bool,
}

impl SystemReport {
    pub fn solution(&self, op: Operator) -> &OperatorSolution {
        &self.solutions[op.index()]
    }
}

/// Value iteration from zero for each of `U1, U2, V1, V2`.
pub fn solve_system(prob: &DpProblem, tol: f64, max_iter: usize) -> Result<SystemReport> {
    let zero = ValueFunction::zero(prob.carrier());
    let bound = prob.value_bound();
    let mut solutions = Vec::new();
    for op in Operator::ALL {
        let r = value_iterate(prob, op, &zero, tol, max_iter)?;
        solutions.push(OperatorSolution {
            operator: op,
            iterations: r.iterations,
            final_residual: r.final_residual,
            envelope: r.envelope,
            interpolation_error_bound: r.value.interpolation_error_bound(),
            within_value_bound: r
                .value
                .values
                .iter()
                .all(|v| v.abs() <= bound * (1.0 + 1e-12)),
            trace: r.trace,
            value: r.value,
        });
    }
    let mut max_disagreement = 0.0f64;
    for i in 0..4 {
        for j in i + 1..4 {
            max_disagreement =
                max_disagreement.max(sup_metric(&solutions[i].value, &solutions[j].value)?);
        }
    }
    let p = &solutions[0].value;
    let cross_residuals = Operator::ALL
        .into_iter()
        .map(|op| Ok((op, sup_metric(&apply_bellman_operator(prob, op, p)?, p)?)))
        .collect::<Result<Vec<_>>>()?;
    let common_solution_certified =
        max_disagreement <= 2.0 * tol && cross_residuals.iter().all(|(_, r)| *r <= 2.0 * tol);
    Ok(SystemReport {
        tol,
        value_bound: bound,
        payoff_bound: prob.bound_check().clone(),
        solutions,
        max_disagreement,
        cross_residuals,
        common_solution_certified,
    })
}

/// A sequence of value functions given by an expression in `x` and `n`.
#[derive(Debug, Clone)]
pub struct ValueSequence {
    generator: Function,
    tail_start: u64,
    tail_len: usize,
}

impl ValueSequence {
    pub fn new(generator: Function, tail_start: u64, tail_len: usize) -> Result<Self> {
        if generator.params().len() != 2 {
            return input("value sequence must be an expression in x and n");
        }
        if tail_len < crate::pairs::MIN_TAIL_LEN || tail_start == 0 {
            return input(format!(
                "value sequence tail needs n >= 1 and at least {} terms",
                crate::pairs::MIN_TAIL_LEN
            ));
        }
        Ok(Self {
            generator,
            tail_start,
            tail_len,
        })
    }

    pub fn parse(text: &str, tail_start: u64, tail_len: usize) -> Result<Self> {
        Self::new(Function::parse(text, &["x", "n"])?, tail_start, tail_len)
    }

    pub fn source(&self) -> &str {
        self.generator.source()
    }

    fn tail(&self, c: &Carrier) -> Result<Vec<ValueFunction>> {
        (self.tail_start..self.tail_start + self.tail_len as u64)
            .map(|n| {
                let values = c
                    .points()
                    .into_iter()
                    .map(|x| self.generator.call(&[x, n as f64]))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(ValueFunction {
                    lo: c.lo(),
                    hi: c.hi(),
                    values,
                })
            })
            .collect()
    }
}

/// Tail diagnostics for conditions (i) and (ii).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceCondition {
    pub status: bool,
    pub sequence: String,
    /// Largest sup-distance between tail terms of `T1 r_n`.
    pub spread_first: f64,
    /// Same for `T2 r_n`.
    pub spread_second: f64,
    /// `d(T1 r_N, T2 r_N)` at the last tail term.
    pub limit_gap: f64,
    /// `sup |T1 T2 r_N - T2 T1 r_N|` at the last tail term.
    pub commutator: f64,
    pub note: String,
}

fn spread(vs: &[ValueFunction]) -> Result<f64> {
    let mut m = 0.0f64;
    for i in 0..vs.len() {
        for j in i + 1..vs.len() {
            m = m.max(sup_metric(&vs[i], &vs[j])?);
        }
    }
    Ok(m)
}

fn sequence_condition(
    prob: &DpProblem,
    ops: (Operator, Operator),
    seq: &ValueSequence,
    symbol: &str,
    tol: f64,
) -> Result<SequenceCondition> {
    let tail = seq.tail(prob.carrier())?;
    let first = tail
        .iter()
        .map(|r| apply_bellman_operator(prob, ops.0, r))
        .collect::<Result<Vec<_>>>()?;
    let second = tail
        .iter()
        .map(|r| apply_bellman_operator(prob, ops.1, r))
        .collect::<Result<Vec<_>>>()?;
    let (s1, s2) = (spread(&first)?, spread(&second)?);
    let last = first.len() - 1;
    let gap = sup_metric(&first[last], &second[last])?;
    let t12 = apply_bellman_operator(prob, ops.0, &second[last])?;
    let t21 = apply_bellman_operator(prob, ops.1, &first[last])?;
    let commutator = sup_metric(&t12, &t21)?;
    let status = s1 < tol && s2 < tol && gap < tol && commutator < tol;
    let note = if status {
        format!(
            "{:?} {symbol} and {:?} {symbol} share a limit and commute asymptotically",
            ops.0, ops.1
        )
    } else if s1 >= tol || s2 >= tol {
        format!("operator images of the tail are not Cauchy within {tol:e}")
    } else if gap >= tol {
        format!("limits differ by {gap:e}")
    } else {
        format!("commutator {commutator:e} does not vanish")
    };
    Ok(SequenceCondition {
        status,
        sequence: seq.source().to_string(),
        spread_first: s1,
        spread_second: s2,
        limit_gap: gap,
        commutator,
        note,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaCheck {
    pub description: String,
    pub range: (f64, f64),
    /// `λ(u) >= u` on the sampled range.
    pub weak: bool,
    /// `λ(u) > u` on the sampled range.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaWitness {
    /// Probe indices of `r` and `p`.
    pub pair: (usize, usize),
    pub x: f64,
    pub y: f64,
    pub lhs: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaCondition {
    pub status: bool,
    pub pairs_checked: usize,
    /// Smallest `Θ(r,p) - |L1 - N1|` over all samples.
    pub worst_margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<ThetaWitness>,
    pub probes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem53Report {
    pub lambda: LambdaCheck,
    pub condition_i: SequenceCondition,
    pub condition_ii: SequenceCondition,
    pub condition_iii: ThetaCondition,
    pub all_hold: bool,
}

/// The gauge `φ(t) = t - 1` used inside `Θ`.
pub fn phi_dp(t: f64) -> f64 {
    t - 1.0
}

fn check_lambda(lambda: &Gauge, upper: f64) -> Result<LambdaCheck> {
    let (lo, hi) = (-1.0, upper.max(2.0));
    let (mut weak, mut strict) = (true, true);
    for i in 0..LAMBDA_GRID {
        let u = lo + (hi - lo) * i as f64 / (LAMBDA_GRID - 1) as f64;
        let l = lambda.eval(u)?;
        weak &= l >= u;
        strict &= l > u;
    }
    Ok(LambdaCheck {
        description: lambda.description().to_string(),
        range: (lo, hi),
        weak,
        strict,
    })
}

/// Sampled check of conditions (i)–(iii). Condition (iii) is scanned over
/// all ordered pairs of probe functions: the tails of both sequences plus
/// `0`, `1`, `x`, `2x` and `1 - x` mapped onto `W`.
pub fn check_theorem53(
    prob: &DpProblem,
    r_seq: &ValueSequence,
    p_seq: &ValueSequence,
    lambda: &Gauge,
    tol: f64,
) -> Result<Theorem53Report> {
    if !(tol > 0.0) {
        return input(format!("tolerance must be positive, got {tol}"));
    }
    let condition_i = sequence_condition(prob, (Operator::U1, Operator::U2), r_seq, "r_n", tol)?;
    let condition_ii = sequence_condition(prob, (Operator::V1, Operator::V2), p_seq, "p_n", tol)?;

    let c = prob.carrier();
    let mut probes: Vec<(String, ValueFunction)> = Vec::new();
    for (seq, name) in [(r_seq, "r"), (p_seq, "p")] {
        for (k, v) in seq.tail(c)?.into_iter().enumerate() {
            probes.push((format!("{name}_{}", seq.tail_start + k as u64), v));
        }
    }
    let (lo, hi) = (c.lo(), c.hi());
    let unit = move |x: f64| (x - lo) / (hi - lo);
    probes.push(("0".into(), ValueFunction::zero(c)));
    probes.push(("1".into(), ValueFunction::from_fn(c, |_| 1.0)));
    probes.push(("x".into(), ValueFunction::from_fn(c, unit)));
    probes.push((
        "2x".into(),
        ValueFunction::from_fn(c, move |x| 2.0 * unit(x)),
    ));
    probes.push((
        "1-x".into(),
        ValueFunction::from_fn(c, move |x| 1.0 - unit(x)),
    ));

    let images = probes
        .iter()
        .map(|(_, v)| {
            Operator::ALL
                .into_iter()
                .map(|op| apply_bellman_operator(prob, op, v))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let xs = c.points();
    let d = &prob.spec.decisions;
    let nd = d.len();
    let (l1, n1) = (prob.payoff(Operator::U1), prob.payoff(Operator::V1));
    // L1(x, y, r(τ)) and N1(x, y, p(τ)) per probe, over the W × D table
    let tabulate = |f: &Function, v: &ValueFunction| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(xs.len() * nd);
        for (i, &x) in xs.iter().enumerate() {
            for (j, &y) in d.iter().enumerate() {
                out.push(f.call(&[x, y, v.at(prob.tau_slots[i * nd + j])])?);
            }
        }
        Ok(out)
    };
    let l_tabs = probes
        .iter()
        .map(|(_, v)| tabulate(l1, v))
        .collect::<Result<Vec<_>>>()?;
    let n_tabs = probes
        .iter()
        .map(|(_, v)| tabulate(n1, v))
        .collect::<Result<Vec<_>>>()?;

    let (u1, u2, v1, v2) = (0, 1, 2, 3);
    let mut thetas = Vec::with_capacity(probes.len() * probes.len());
    let mut max_arg = f64::NEG_INFINITY;
    for ri in 0..probes.len() {
        for pi in 0..probes.len() {
            let arg = phi_dp(sup_metric(&images[ri][u2], &images[pi][v2])?)
                .max(phi_dp(sup_metric(&images[ri][u2], &images[ri][u1])?))
                .max(phi_dp(sup_metric(&images[pi][v2], &images[pi][v1])?));
            max_arg = max_arg.max(arg);
            thetas.push(((ri, pi), lambda.eval(arg)?));
        }
    }
    let lambda_check = check_lambda(lambda, max_arg)?;
    if !lambda_check.weak {
        return input(format!(
            "gauge `{}` does not satisfy λ(u) >= u on [{}, {}]",
            lambda.description(),
            lambda_check.range.0,
            lambda_check.range.1
        ));
    }

    let mut worst = f64::INFINITY;
    let mut witness = None;
    for &((ri, pi), theta) in &thetas {
        for (idx, (a, b)) in l_tabs[ri].iter().zip(&n_tabs[pi]).enumerate() {
            let lhs = (a - b).abs();
            let margin = theta - lhs;
            worst = worst.min(margin);
            if witness.is_none() && margin < -tol {
                witness = Some(ThetaWitness {
                    pair: (ri, pi),
                    x: xs[idx / nd],
                    y: d[idx % nd],
                    lhs,
                    theta,
                });
            }
        }
    }
    let condition_iii = ThetaCondition {
        status: witness.is_none(),
        pairs_checked: thetas.len(),
        worst_margin: worst,
        witness,
        probes: probes.into_iter().map(|p| p.0).collect(),
    };
    let all_hold = condition_i.status && condition_ii.status && condition_iii.status;
    Ok(Theorem53Report {
        lambda: lambda_check,
        condition_i,
        condition_ii,
        condition_iii,
        all_hold,
    })
}

impl DpProblem {
    /// `τ(x, y)` for state index `i` and decision index `j`.
    pub fn tau_at(&self, i: usize, j: usize) -> f64 {
        self.tau_table[i * self.spec.decisions.len() + j]
    }
}
