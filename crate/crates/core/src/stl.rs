//! STL fragment, predicates and robustness.
//!
//! Formulas are a top-level conjunction of `F`/`G` nodes over predicate-level
//! formulas (predicates, negated predicates, and their conjunctions or
//! disjunctions), plus bare predicates. Time intervals map to sample indices
//! `ceil(t_a/dt)..=floor(t_b/dt)`.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::real::Real;

/// Tolerance used when turning interval endpoints into sample indices.
const INDEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StlError {
    #[error("trajectory too short: need sample {needed}, have {available}")]
    TrajectoryTooShort { needed: usize, available: usize },
    #[error("conjunction of an empty list")]
    EmptyConjunction,
    #[error("malformed formula: {0}")]
    Malformed(&'static str),
}

/// Convex gauge `σ` measuring distance from a predicate center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gauge {
    Euclidean,
    /// `((z1/a)^4 + (z2/b)^4)^(1/4)`.
    Superellipse { a: f64, b: f64 },
}

/// Value, gradient and Hessian of a gauge at one point.
#[derive(Debug, Clone, Copy)]
pub struct GaugeJet<R> {
    pub value: R,
    pub grad: [R; 2],
    pub hess: [[R; 2]; 2],
}

impl Gauge {
    pub fn eval<R: Real>(&self, z: [R; 2]) -> R {
        match *self {
            Gauge::Euclidean => (z[0].square() + z[1].square()).sqrt(),
            Gauge::Superellipse { a, b } => {
                let s = (z[0] / a).square().square() + (z[1] / b).square().square();
                s.powf(0.25)
            }
        }
    }

    pub fn eval_f64(&self, z: [f64; 2]) -> f64 {
        self.eval::<f64>(z)
    }

    /// Value with first and second derivatives.
    ///
    /// The gauges are not differentiable at the origin; the caller is expected
    /// to keep `z` away from it (see [`Predicate::position_offset`]).
    pub fn jet<R: Real>(&self, z: [R; 2]) -> GaugeJet<R> {
        match *self {
            Gauge::Euclidean => {
                let r = (z[0].square() + z[1].square()).sqrt();
                let n = [z[0] / r, z[1] / r];
                let ir = r.recip();
                let h00 = (n[0].square()).rsub(1.0) * ir;
                let h11 = (n[1].square()).rsub(1.0) * ir;
                let h01 = -(n[0] * n[1]) * ir;
                GaugeJet {
                    value: r,
                    grad: n,
                    hess: [[h00, h01], [h01, h11]],
                }
            }
            Gauge::Superellipse { a, b } => {
                let (a4, b4) = (a * a * a * a, b * b * b * b);
                let z1sq = z[0].square();
                let z2sq = z[1].square();
                let s = z1sq.square() / a4 + z2sq.square() / b4;
                let s34 = s.powf(0.75);
                let s74 = s34 * s;
                let z1c = z1sq * z[0];
                let z2c = z2sq * z[1];
                let g0 = z1c / (s34 * a4);
                let g1 = z2c / (s34 * b4);
                let h00 = z1sq * 3.0 / (s34 * a4) - z1c.square() * 3.0 / (s74 * (a4 * a4));
                let h11 = z2sq * 3.0 / (s34 * b4) - z2c.square() * 3.0 / (s74 * (b4 * b4));
                let h01 = -(z1c * z2c) * 3.0 / (s74 * (a4 * b4));
                GaugeJet {
                    value: s.powf(0.25),
                    grad: [g0, g1],
                    hess: [[h00, h01], [h01, h11]],
                }
            }
        }
    }

    /// Size along each axis, used for geometric sanity checks.
    pub fn extent(&self, radius: f64) -> [f64; 2] {
        match *self {
            Gauge::Euclidean => [radius, radius],
            Gauge::Superellipse { a, b } => [radius * a, radius * b],
        }
    }
}

/// Predicate `h(x) = s (R - σ(l(x) - o)) >= 0`.
///
/// `s = +1` describes a region to reach, `s = -1` a region to avoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub name: String,
    pub sign: f64,
    pub radius: f64,
    pub center: [f64; 2],
    pub gauge: Gauge,
    /// State components forming `l(x)`.
    #[serde(default = "default_output")]
    pub output: [usize; 2],
}

fn default_output() -> [usize; 2] {
    [0, 1]
}

impl Predicate {
    pub fn reach(name: &str, center: [f64; 2], radius: f64, gauge: Gauge) -> Self {
        Self {
            name: name.into(),
            sign: 1.0,
            radius,
            center,
            gauge,
            output: default_output(),
        }
    }

    pub fn avoid(name: &str, center: [f64; 2], radius: f64, gauge: Gauge) -> Self {
        Self {
            sign: -1.0,
            ..Self::reach(name, center, radius, gauge)
        }
    }

    pub fn is_reach(&self) -> bool {
        self.sign > 0.0
    }

    /// The predicate with its sign flipped, i.e. `¬μ`.
    pub fn negated(&self) -> Self {
        Self {
            sign: -self.sign,
            ..self.clone()
        }
    }

    /// `l(x) - o`.
    pub fn offset<R: Real>(&self, x: &[R]) -> [R; 2] {
        [x[self.output[0]] - self.center[0], x[self.output[1]] - self.center[1]]
    }

    /// `l(x) - o`, nudged off the gauge singularity at the center.
    pub fn position_offset<R: Real>(&self, x: &[R]) -> [R; 2] {
        let z = self.offset(x);
        if z[0].value().abs() < 1e-9 && z[1].value().abs() < 1e-9 {
            log::debug!("{}: state at gauge center, offsetting", self.name);
            [z[0] + 1e-9, z[1]]
        } else {
            z
        }
    }

    pub fn eval<R: Real>(&self, x: &[R]) -> R {
        let sigma = self.gauge.eval(self.offset(x));
        sigma.rsub(self.radius) * self.sign
    }

    pub fn eval_f64(&self, x: &[f64]) -> f64 {
        self.eval::<f64>(x)
    }

    /// Largest value `h` can take over the whole plane, `None` if unbounded.
    pub fn sup(&self) -> Option<f64> {
        self.is_reach().then_some(self.radius)
    }
}

/// A formula of the supported fragment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Formula {
    Pred { pred: Predicate },
    NegPred { pred: Predicate },
    And { args: Vec<Formula> },
    Or { args: Vec<Formula> },
    F { a: f64, b: f64, arg: Box<Formula> },
    G { a: f64, b: f64, arg: Box<Formula> },
    TopAnd { args: Vec<Formula> },
}

impl Formula {
    pub fn pred(p: Predicate) -> Self {
        Formula::Pred { pred: p }
    }

    pub fn not(p: Predicate) -> Self {
        Formula::NegPred { pred: p }
    }

    pub fn eventually(a: f64, b: f64, arg: Formula) -> Self {
        Formula::F {
            a,
            b,
            arg: Box::new(arg),
        }
    }

    pub fn always(a: f64, b: f64, arg: Formula) -> Self {
        Formula::G {
            a,
            b,
            arg: Box::new(arg),
        }
    }

    /// Latest time referenced by the formula.
    ///
    /// The fragment has no nested temporal operators, so this is the largest
    /// interval end; bare predicates contribute zero.
    pub fn horizon(&self) -> f64 {
        match self {
            Formula::Pred { .. } | Formula::NegPred { .. } => 0.0,
            Formula::F { b, .. } | Formula::G { b, .. } => *b,
            Formula::And { args } | Formula::Or { args } | Formula::TopAnd { args } => {
                args.iter().map(Formula::horizon).fold(0.0, f64::max)
            }
        }
    }

    fn is_state_level(&self) -> bool {
        match self {
            Formula::Pred { .. } | Formula::NegPred { .. } => true,
            Formula::And { args } | Formula::Or { args } => {
                !args.is_empty() && args.iter().all(Formula::is_state_level)
            }
            _ => false,
        }
    }

    /// Check membership in the fragment.
    pub fn validate(&self) -> Result<(), StlError> {
        match self {
            Formula::Pred { pred } | Formula::NegPred { pred } => check_pred(pred),
            Formula::And { args } | Formula::Or { args } => {
                if args.is_empty() {
                    return Err(StlError::EmptyConjunction);
                }
                if !self.is_state_level() {
                    return Err(StlError::Malformed("temporal operator inside a boolean node"));
                }
                args.iter().try_for_each(Formula::validate)
            }
            Formula::F { a, b, arg } | Formula::G { a, b, arg } => {
                if !(a.is_finite() && b.is_finite() && *a >= 0.0 && a < b) {
                    return Err(StlError::Malformed("interval must satisfy 0 <= a < b"));
                }
                if !arg.is_state_level() {
                    return Err(StlError::Malformed("nested temporal operator"));
                }
                arg.validate()
            }
            Formula::TopAnd { args } => {
                if args.is_empty() {
                    return Err(StlError::EmptyConjunction);
                }
                for f in args {
                    match f {
                        Formula::TopAnd { .. } | Formula::Or { .. } => {
                            return Err(StlError::Malformed(
                                "top level admits only temporal nodes and predicates",
                            ))
                        }
                        _ => f.validate()?,
                    }
                }
                Ok(())
            }
        }
    }
}

fn check_pred(p: &Predicate) -> Result<(), StlError> {
    let ok_gauge = match p.gauge {
        Gauge::Euclidean => true,
        Gauge::Superellipse { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
    };
    if !(p.radius > 0.0 && p.radius.is_finite()) {
        return Err(StlError::Malformed("predicate radius must be positive"));
    }
    if !(p.sign == 1.0 || p.sign == -1.0) {
        return Err(StlError::Malformed("predicate sign must be +1 or -1"));
    }
    if !ok_gauge || !p.center.iter().all(|c| c.is_finite()) {
        return Err(StlError::Malformed("bad gauge or center"));
    }
    Ok(())
}

/// Sampled states at spacing `dt`, with the inputs applied between samples.
#[derive(Debug, Clone)]
pub struct Trajectory<T = f64> {
    pub dt: f64,
    pub states: Vec<Vec<T>>,
    pub inputs: Vec<Vec<T>>,
}

impl<T: Copy> Trajectory<T> {
    pub fn new(dt: f64, states: Vec<Vec<T>>) -> Self {
        Self {
            dt,
            states,
            inputs: Vec::new(),
        }
    }

    /// Index of the last sample.
    pub fn last_index(&self) -> usize {
        self.states.len().saturating_sub(1)
    }
}

/// Sample indices covered by `[t + a, t + b]`.
pub fn window(k0: usize, a: f64, b: f64, dt: f64) -> (usize, usize) {
    let lo = math::ceil(a / dt - INDEX_TOL) as usize;
    let hi = math::floor(b / dt + INDEX_TOL) as usize;
    (k0 + lo, k0 + hi)
}

/// Sample index of time `t`.
pub fn time_index(t: f64, dt: f64) -> usize {
    math::round(t / dt) as usize
}

fn need<T>(traj: &Trajectory<T>, k: usize) -> Result<(), StlError> {
    if k >= traj.states.len() {
        Err(StlError::TrajectoryTooShort {
            needed: k,
            available: traj.states.len(),
        })
    } else {
        Ok(())
    }
}

/// Min/max robustness at time `t`.
pub fn robustness_classical<R: Real>(f: &Formula, traj: &Trajectory<R>, t: f64) -> Result<R, StlError> {
    classical_at(f, traj, time_index(t, traj.dt))
}

fn classical_at<R: Real>(f: &Formula, traj: &Trajectory<R>, k: usize) -> Result<R, StlError> {
    match f {
        Formula::Pred { pred } => {
            need(traj, k)?;
            Ok(pred.eval(&traj.states[k]))
        }
        Formula::NegPred { pred } => {
            need(traj, k)?;
            Ok(-pred.eval(&traj.states[k]))
        }
        Formula::And { args } | Formula::TopAnd { args } => fold(args, |g| classical_at(g, traj, k), R::min),
        Formula::Or { args } => fold(args, |g| classical_at(g, traj, k), R::max),
        Formula::F { a, b, arg } => {
            let (lo, hi) = window(k, *a, *b, traj.dt);
            need(traj, hi)?;
            fold_range(lo, hi, |i| classical_at(arg, traj, i), R::max)
        }
        Formula::G { a, b, arg } => {
            let (lo, hi) = window(k, *a, *b, traj.dt);
            need(traj, hi)?;
            fold_range(lo, hi, |i| classical_at(arg, traj, i), R::min)
        }
    }
}

fn fold<R: Real>(
    args: &[Formula],
    mut eval: impl FnMut(&Formula) -> Result<R, StlError>,
    op: fn(R, R) -> R,
) -> Result<R, StlError> {
    let mut it = args.iter();
    let mut acc = eval(it.next().ok_or(StlError::EmptyConjunction)?)?;
    for g in it {
        acc = op(acc, eval(g)?);
    }
    Ok(acc)
}

fn fold_range<R: Real>(
    lo: usize,
    hi: usize,
    mut eval: impl FnMut(usize) -> Result<R, StlError>,
    op: fn(R, R) -> R,
) -> Result<R, StlError> {
    if lo > hi {
        return Err(StlError::Malformed("empty sample window"));
    }
    let mut acc = eval(lo)?;
    for i in lo + 1..=hi {
        acc = op(acc, eval(i)?);
    }
    Ok(acc)
}

/// Exponential (smooth) conjunction.
///
/// With `ρ_min` the smallest value (first on ties) each entry is mapped to
/// an effective value
///
/// * `ρ_min · exp((ρ_i - ρ_min)/ρ_min)` when `ρ_min < 0`,
/// * `ρ_min · (2 - exp((ρ_min - ρ_i)/ρ_min))` when `ρ_min > 0`,
/// * `0` when `ρ_min = 0`,
///
/// and the result is `β ρ_min + (1-β) mean(effective)`. Its sign is the sign
/// of `ρ_min`.
pub fn conj_exp<R: Real>(values: &[R], beta: f64) -> Result<R, StlError> {
    let first = *values.first().ok_or(StlError::EmptyConjunction)?;
    let rmin = values[1..].iter().fold(first, |m, &v| m.min(v));
    let mv = rmin.value();
    if beta == 1.0 {
        return Ok(rmin);
    }
    let n = values.len() as f64;
    let mut acc = rmin * 0.0;
    if mv < 0.0 {
        for &v in values {
            let e = ((v - rmin) / rmin).clamp_value(-700.0, 0.0).exp();
            acc = acc + rmin * e;
        }
    } else if mv > 0.0 {
        for &v in values {
            let e = ((rmin - v) / rmin).clamp_value(-700.0, 0.0).exp();
            acc = acc + rmin * e.rsub(2.0);
        }
    }
    Ok(rmin * beta + acc * ((1.0 - beta) / n))
}

/// Exponential disjunction, `-conj_exp(-ρ)`.
pub fn disj_exp<R: Real>(values: &[R], beta: f64) -> Result<R, StlError> {
    let neg: Vec<R> = values.iter().map(|&v| -v).collect();
    Ok(-conj_exp(&neg, beta)?)
}

/// Smooth robustness at time `t` using [`conj_exp`] for every aggregation.
pub fn robustness_exp<R: Real>(f: &Formula, traj: &Trajectory<R>, t: f64, beta: f64) -> Result<R, StlError> {
    exp_at(f, traj, time_index(t, traj.dt), beta)
}

fn exp_at<R: Real>(f: &Formula, traj: &Trajectory<R>, k: usize, beta: f64) -> Result<R, StlError> {
    match f {
        Formula::Pred { pred } => {
            need(traj, k)?;
            Ok(pred.eval(&traj.states[k]))
        }
        Formula::NegPred { pred } => {
            need(traj, k)?;
            Ok(-pred.eval(&traj.states[k]))
        }
        Formula::And { args } | Formula::TopAnd { args } => {
            let vals = args
                .iter()
                .map(|g| exp_at(g, traj, k, beta))
                .collect::<Result<Vec<_>, _>>()?;
            conj_exp(&vals, beta)
        }
        Formula::Or { args } => {
            let vals = args
                .iter()
                .map(|g| exp_at(g, traj, k, beta))
                .collect::<Result<Vec<_>, _>>()?;
            disj_exp(&vals, beta)
        }
        Formula::F { a, b, arg } | Formula::G { a, b, arg } => {
            let (lo, hi) = window(k, *a, *b, traj.dt);
            need(traj, hi)?;
            if lo > hi {
                return Err(StlError::Malformed("empty sample window"));
            }
            let vals = (lo..=hi)
                .map(|i| exp_at(arg, traj, i, beta))
                .collect::<Result<Vec<_>, _>>()?;
            if matches!(f, Formula::F { .. }) {
                disj_exp(&vals, beta)
            } else {
                conj_exp(&vals, beta)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn unit_disk() -> Predicate {
        Predicate::reach("r", [0.0, 0.0], 1.0, Gauge::Euclidean)
    }

    /// Trajectory whose first state coordinate is `h + 0` for a predicate
    /// `h = R - |x - o|` with the center far to the left, so `h = x0 - c`.
    fn scalar_traj(hs: &[f64]) -> (Predicate, Trajectory) {
        // Center at (-100, 0), radius 100: h(x) = 100 - (x + 100) = -x for x > -100.
        let p = Predicate::reach("h", [-100.0, 0.0], 100.0, Gauge::Euclidean);
        let states = hs.iter().map(|&h| vec![-h, 0.0]).collect();
        (p, Trajectory::new(0.5, states))
    }

    #[test]
    fn horizon_examples() {
        let reg = unit_disk();
        assert_eq!(Formula::eventually(0.0, 2.0, Formula::pred(reg.clone())).horizon(), 2.0);
        let task = Formula::TopAnd {
            args: vec![
                Formula::eventually(0.0, 2.0, Formula::pred(reg.clone())),
                Formula::eventually(2.0, 5.0, Formula::pred(reg.clone())),
                Formula::always(
                    0.0,
                    5.0,
                    Formula::And {
                        args: vec![Formula::not(reg.clone()), Formula::not(reg.clone())],
                    },
                ),
            ],
        };
        assert_eq!(task.horizon(), 5.0);
        task.validate().unwrap();
        assert_eq!(Formula::pred(reg).horizon(), 0.0);
    }

    #[test]
    fn predicate_examples() {
        assert_eq!(unit_disk().eval_f64(&[0.0, 0.0]), 1.0);
        assert_eq!(unit_disk().negated().eval_f64(&[2.0, 0.0]), 1.0);
        let obs = Predicate::avoid("o", [0.0, 0.0], 1.0, Gauge::Superellipse { a: 1.0, b: 1.0 });
        let expected = -(1.0 - 2f64.powf(0.25));
        assert_abs_diff_eq!(obs.eval_f64(&[1.0, 1.0]), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 0.1892, epsilon = 1e-4);
    }

    #[test]
    fn classical_examples() {
        let (p, tr) = scalar_traj(&[0.5, 0.3, 0.2]);
        let g = Formula::always(0.0, 1.0, Formula::pred(p.clone()));
        assert_abs_diff_eq!(robustness_classical(&g, &tr, 0.0).unwrap(), 0.2, epsilon = 1e-12);
        let (p2, tr2) = scalar_traj(&[-1.0, -0.5, 0.4]);
        let f = Formula::eventually(0.0, 1.0, Formula::pred(p2));
        assert_abs_diff_eq!(robustness_classical(&f, &tr2, 0.0).unwrap(), 0.4, epsilon = 1e-12);
        let (p3, tr3) = scalar_traj(&[0.7]);
        let n = Formula::not(p3);
        assert_abs_diff_eq!(robustness_classical(&n, &tr3, 0.0).unwrap(), -0.7, epsilon = 1e-12);
        let too_long = Formula::always(0.0, 2.0, Formula::pred(p));
        assert!(matches!(
            robustness_classical(&too_long, &tr, 0.0),
            Err(StlError::TrajectoryTooShort { .. })
        ));
    }

    #[test]
    fn conj_exp_examples() {
        let e1 = 0.5 * 1.0 + 0.5 * (1.0 + (2.0 - (-1f64).exp())) / 2.0;
        assert_abs_diff_eq!(conj_exp(&[1.0, 2.0], 0.5).unwrap(), e1, epsilon = 1e-14);
        assert_abs_diff_eq!(e1, 1.1581, epsilon = 1e-4);
        let e2 = 0.5 * -1.0 + 0.5 * (-1.0 - (-3f64).exp()) / 2.0;
        assert_abs_diff_eq!(conj_exp(&[-1.0, 2.0], 0.5).unwrap(), e2, epsilon = 1e-14);
        assert_abs_diff_eq!(e2, -0.7624, epsilon = 1e-4);
        for beta in [0.0, 0.3, 1.0] {
            assert_eq!(conj_exp(&[0.0, 5.0], beta).unwrap(), 0.0);
        }
        assert_eq!(conj_exp::<f64>(&[], 0.5), Err(StlError::EmptyConjunction));
    }

    #[test]
    fn exp_examples() {
        let (p, tr) = scalar_traj(&[0.5, 0.3, 0.2]);
        assert_eq!(robustness_exp(&Formula::pred(p.clone()), &tr, 0.0, 0.5).unwrap(), p.eval_f64(&tr.states[0]));
        let g = Formula::always(0.0, 1.0, Formula::pred(p));
        assert_abs_diff_eq!(robustness_exp(&g, &tr, 0.0, 1.0).unwrap(), 0.2, epsilon = 1e-12);
        let (p2, tr2) = scalar_traj(&[-1.0, -0.5, 0.4]);
        let f = Formula::eventually(0.0, 1.0, Formula::pred(p2));
        assert_abs_diff_eq!(robustness_exp(&f, &tr2, 0.0, 1.0).unwrap(), 0.4, epsilon = 1e-12);
    }

    #[test]
    fn window_handles_float_noise() {
        // 0.3 / 0.1 is 2.9999999999999996 in binary.
        assert_eq!(window(0, 0.3, 0.7, 0.1), (3, 7));
        assert_eq!(window(4, 0.0, 2.0, 0.1), (4, 24));
    }

    #[test]
    fn validation_rejects_nesting() {
        let p = unit_disk();
        let nested = Formula::eventually(0.0, 1.0, Formula::always(0.0, 1.0, Formula::pred(p.clone())));
        assert!(nested.validate().is_err());
        let bad = Formula::eventually(2.0, 1.0, Formula::pred(p));
        assert!(bad.validate().is_err());
    }
}
