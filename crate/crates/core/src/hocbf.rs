//! Time-varying HOCBFs built from an STL formula.
//!
//! Every predicate under a temporal operator becomes a *slot*. At the start of
//! a rollout each slot gets a category from the initial state:
//!
//! * **I**: already satisfied and the obligation starts at time zero; `γ ≡ 0`.
//! * **II**: under `F`, not in I; `γ(t) = ω1 + ω2 t` with `ω1 > 0 > ω2`.
//! * **III**: under `G`, not in I; `γ(t) = ω1 e^{-ω2 t} - c`.
//!
//! `b(x,t) = h(x) + γ(t)` is then kept nonnegative by the relative-degree-two
//! chain `ψ0 = b`, `ψ1 = ḃ + p1 ψ0`, `ψ2 = ψ̇1 + p2 ψ1 >= 0`, which is affine
//! in the input.
//!
//! The `ω` of each slot must satisfy linear conditions that make the barrier
//! imply the STL obligation, plus pairwise conditions that keep obligations
//! ending at the same time compatible. Slots are processed in order of their
//! interval end, so every pairwise condition only involves slots already
//! resolved and reduces to a bound on the slot at hand.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::nn::bounded_head;
use crate::real::Real;
use crate::stl::{Formula, Predicate};
use crate::systems::{BarrierDerivs, TimeJet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HocbfError {
    #[error("slot {slot} ({name}): G obligation from time zero is violated at the initial state")]
    InfeasibleSpec { slot: usize, name: alloc::string::String },
    #[error("slot {slot}: empty parameter box ({reason})")]
    EmptyBox { slot: usize, reason: &'static str },
    #[error("unsupported formula for barrier construction: {0}")]
    Unsupported(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Temporal {
    Eventually,
    Always,
    /// A predicate directly under the top-level conjunction.
    Bare,
}

/// One predicate obligation with its interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub pred: Predicate,
    pub temporal: Temporal,
    pub ta: f64,
    pub tb: f64,
    /// Slots of one `F` over a conjunction share a group id and are deleted together.
    pub group: usize,
}

impl Slot {
    pub fn is_eventually(&self) -> bool {
        self.temporal == Temporal::Eventually
    }

    /// Whether this slot carries trainable `γ` parameters for some initial state.
    pub fn is_temporal(&self) -> bool {
        self.temporal != Temporal::Bare
    }
}

/// Flatten a validated formula into slots sorted by interval end.
///
/// The sort is stable, so slots with equal end times keep formula order.
pub fn extract_slots(f: &Formula) -> Result<Vec<Slot>, HocbfError> {
    let tops: Vec<&Formula> = match f {
        Formula::TopAnd { args } => args.iter().collect(),
        other => vec![other],
    };
    let mut slots = Vec::new();
    let mut group = 0;
    for top in tops {
        match top {
            Formula::Pred { pred } | Formula::NegPred { pred } => {
                let pred = if matches!(top, Formula::NegPred { .. }) { pred.negated() } else { pred.clone() };
                slots.push(Slot {
                    pred,
                    temporal: Temporal::Bare,
                    ta: 0.0,
                    tb: 0.0,
                    group,
                });
                group += 1;
            }
            Formula::F { a, b, arg } | Formula::G { a, b, arg } => {
                let temporal = if matches!(top, Formula::F { .. }) { Temporal::Eventually } else { Temporal::Always };
                let mut preds = Vec::new();
                collect_conjuncts(arg, &mut preds)?;
                for pred in preds {
                    slots.push(Slot {
                        pred,
                        temporal,
                        ta: *a,
                        tb: *b,
                        group,
                    });
                    if temporal == Temporal::Always {
                        group += 1;
                    }
                }
                if temporal == Temporal::Eventually {
                    group += 1;
                }
            }
            Formula::And { .. } => {
                let mut preds = Vec::new();
                collect_conjuncts(top, &mut preds)?;
                for pred in preds {
                    slots.push(Slot {
                        pred,
                        temporal: Temporal::Bare,
                        ta: 0.0,
                        tb: 0.0,
                        group,
                    });
                    group += 1;
                }
            }
            Formula::Or { .. } => return Err(HocbfError::Unsupported("disjunction")),
            Formula::TopAnd { .. } => return Err(HocbfError::Unsupported("nested top-level conjunction")),
        }
    }
    slots.sort_by(|x, y| x.tb.partial_cmp(&y.tb).unwrap_or(core::cmp::Ordering::Equal));
    Ok(slots)
}

fn collect_conjuncts(f: &Formula, out: &mut Vec<Predicate>) -> Result<(), HocbfError> {
    match f {
        Formula::Pred { pred } => out.push(pred.clone()),
        Formula::NegPred { pred } => out.push(pred.negated()),
        Formula::And { args } => {
            for a in args {
                collect_conjuncts(a, out)?;
            }
        }
        Formula::Or { .. } => return Err(HocbfError::Unsupported("disjunction under a temporal operator")),
        _ => return Err(HocbfError::Unsupported("nested temporal operator")),
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Category {
    I,
    II,
    III,
}

/// Category of every slot for initial state `x0`.
pub fn categorize(slots: &[Slot], x0: &[f64]) -> Result<Vec<Category>, HocbfError> {
    slots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let h0 = s.pred.eval_f64(x0);
            let starts_now = s.temporal == Temporal::Bare || s.ta == 0.0;
            if h0 >= 0.0 && starts_now {
                return Ok(Category::I);
            }
            match s.temporal {
                Temporal::Eventually => Ok(Category::II),
                Temporal::Always if s.ta > 0.0 => Ok(Category::III),
                _ => Err(HocbfError::InfeasibleSpec {
                    slot: i,
                    name: s.pred.name.clone(),
                }),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaKind {
    Zero,
    Linear,
    Exponential,
}

/// `γ(t)` with its parameters.
#[derive(Debug, Clone, Copy)]
pub struct Gamma<R> {
    pub kind: GammaKind,
    pub w1: R,
    pub w2: R,
    /// Offset of the exponential form.
    pub c: f64,
}

impl<R: Real> Gamma<R> {
    pub fn zero(like: R) -> Self {
        let z = like.lift(0.0);
        Self {
            kind: GammaKind::Zero,
            w1: z,
            w2: z,
            c: 0.0,
        }
    }

    pub fn value(&self, t: f64) -> R {
        self.jet(t).value
    }

    /// `γ`, `γ̇`, `γ̈` at time `t`.
    pub fn jet(&self, t: f64) -> TimeJet<R> {
        match self.kind {
            GammaKind::Zero => TimeJet::zero(self.w1),
            GammaKind::Linear => TimeJet {
                value: self.w1 + self.w2 * t,
                d1: self.w2,
                d2: self.w2 * 0.0,
            },
            GammaKind::Exponential => {
                let e = (-(self.w2 * t)).exp();
                let a = self.w1 * e;
                TimeJet {
                    value: a - self.c,
                    d1: -(a * self.w2),
                    d2: a * self.w2.square(),
                }
            }
        }
    }

    pub fn to_f64(&self) -> Gamma<f64> {
        Gamma {
            kind: self.kind,
            w1: self.w1.value(),
            w2: self.w2.value(),
            c: self.c,
        }
    }
}

/// Constants of the parameter boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxSettings {
    /// Slack that turns strict inequalities into closed ones.
    pub eps: f64,
    /// Offset `c` of the exponential `γ`.
    pub c: f64,
}

impl Default for BoxSettings {
    fn default() -> Self {
        Self { eps: 1e-3, c: 0.05 }
    }
}

/// Right-hand side of the pairwise condition between slots `j` and `k`:
/// `γ_j(t_b^k) + γ_k(t_b^k) >= s_j s_k σ_j(o_j - o_k) - s_k R_k - s_j R_j`.
///
/// `None` when both are avoid predicates (no condition).
pub fn pair_bound(j: &Predicate, k: &Predicate) -> Option<f64> {
    if !j.is_reach() && !k.is_reach() {
        return None;
    }
    let z = [j.center[0] - k.center[0], j.center[1] - k.center[1]];
    Some(j.sign * k.sign * j.gauge.eval_f64(z) - k.sign * k.radius - j.sign * j.radius)
}

/// Bounds on the resolved parameters of one slot, for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoxReport {
    /// Bounds on `ω1` (linear) or `ln ω1` (exponential).
    pub v1: (Option<f64>, Option<f64>),
    /// Bounds on `ω2` at the chosen first coordinate.
    pub w2: (Option<f64>, Option<f64>),
}

/// Collected constraints `ω2 >= a + b v1` / `ω2 <= a + b v1` and constant
/// bounds on `v1`.
struct Lines<R> {
    v1_lo: Vec<R>,
    v1_hi: Vec<R>,
    w2_lo: Vec<(R, f64)>,
    w2_hi: Vec<(R, f64)>,
}

impl<R: Real> Lines<R> {
    fn new() -> Self {
        Self {
            v1_lo: Vec::new(),
            v1_hi: Vec::new(),
            w2_lo: Vec::new(),
            w2_hi: Vec::new(),
        }
    }

    /// `γ(t) >= l`.
    fn gamma_at_least(&mut self, kind: GammaKind, t: f64, l: R, c: f64) {
        match kind {
            GammaKind::Zero => unreachable!(),
            GammaKind::Linear => {
                if t == 0.0 {
                    self.v1_lo.push(l);
                } else {
                    self.w2_lo.push((l / t, -1.0 / t));
                }
            }
            GammaKind::Exponential => {
                // γ > -c always, so nothing to impose when l <= -c.
                if l.value() + c <= 0.0 {
                    return;
                }
                let ll = (l + c).ln();
                if t == 0.0 {
                    self.v1_lo.push(ll);
                } else {
                    self.w2_hi.push((-ll / t, 1.0 / t));
                }
            }
        }
    }

    /// `γ(t) <= u`.
    fn gamma_at_most(&mut self, kind: GammaKind, t: f64, u: R, c: f64, slot: usize) -> Result<(), HocbfError> {
        match kind {
            GammaKind::Zero => unreachable!(),
            GammaKind::Linear => {
                if t == 0.0 {
                    self.v1_hi.push(u);
                } else {
                    self.w2_hi.push((u / t, -1.0 / t));
                }
            }
            GammaKind::Exponential => {
                if u.value() + c <= 0.0 {
                    return Err(HocbfError::EmptyBox {
                        slot,
                        reason: "upper bound below the exponential floor",
                    });
                }
                let lu = (u + c).ln();
                if t == 0.0 {
                    self.v1_hi.push(lu);
                } else {
                    self.w2_lo.push((-lu / t, 1.0 / t));
                }
            }
        }
        Ok(())
    }

    /// Pick `v1` and `ω2` from raw network outputs through bounded heads.
    fn resolve(mut self, raw: [R; 2], margin: f64, slot: usize) -> Result<(R, R, BoxReport), HocbfError> {
        // Every lower line must stay below every upper line at the chosen v1.
        let mut extra_lo = Vec::new();
        let mut extra_hi = Vec::new();
        for &(al, bl) in &self.w2_lo {
            for &(au, bu) in &self.w2_hi {
                let db = bl - bu;
                let rhs = au - al - margin;
                if db == 0.0 {
                    if rhs.value() < 0.0 {
                        return Err(HocbfError::EmptyBox {
                            slot,
                            reason: "parallel bounds on the second parameter cross",
                        });
                    }
                } else if db > 0.0 {
                    extra_hi.push(rhs / db);
                } else {
                    extra_lo.push(rhs / db);
                }
            }
        }
        self.v1_lo.extend(extra_lo);
        self.v1_hi.extend(extra_hi);
        let lo1 = self.v1_lo.iter().copied().reduce(R::max);
        let hi1 = self.v1_hi.iter().copied().reduce(R::min);
        if let (Some(a), Some(b)) = (lo1, hi1) {
            if a.value() > b.value() {
                return Err(HocbfError::EmptyBox {
                    slot,
                    reason: "no admissible first parameter",
                });
            }
        }
        let v1 = bounded_head(raw[0], lo1, hi1);
        let lo2 = self.w2_lo.iter().map(|&(a, b)| a + v1 * b).reduce(R::max);
        let hi2 = self.w2_hi.iter().map(|&(a, b)| a + v1 * b).reduce(R::min);
        if let (Some(a), Some(b)) = (lo2, hi2) {
            if a.value() > b.value() {
                return Err(HocbfError::EmptyBox {
                    slot,
                    reason: "no admissible second parameter",
                });
            }
        }
        let w2 = bounded_head(raw[1], lo2, hi2);
        let report = BoxReport {
            v1: (lo1.map(Real::value), hi1.map(Real::value)),
            w2: (lo2.map(Real::value), hi2.map(Real::value)),
        };
        Ok((v1, w2, report))
    }
}

/// Resolve every slot's `γ` from raw network outputs (two per slot), in slot
/// order, so that the resulting parameters satisfy all box conditions.
///
/// `h0` holds `h_j(x0)` per slot.
pub fn resolve_gammas<R: Real>(
    slots: &[Slot],
    cats: &[Category],
    h0: &[R],
    raw: &[[R; 2]],
    settings: &BoxSettings,
) -> Result<(Vec<Gamma<R>>, Vec<BoxReport>), HocbfError> {
    let eps = settings.eps;
    let c = settings.c;
    let like = h0[0];
    let mut gammas: Vec<Gamma<R>> = Vec::with_capacity(slots.len());
    let mut reports = Vec::with_capacity(slots.len());
    for (j, sj) in slots.iter().enumerate() {
        let kind = match cats[j] {
            Category::I => GammaKind::Zero,
            Category::II => GammaKind::Linear,
            Category::III => GammaKind::Exponential,
        };
        if kind == GammaKind::Zero {
            for (k, sk) in slots[..j].iter().enumerate() {
                if cats[k] == Category::I {
                    if let Some(d) = pair_bound(&sj.pred, &sk.pred) {
                        if d > 0.0 {
                            return Err(HocbfError::EmptyBox {
                                slot: j,
                                reason: "incompatible satisfied predicates",
                            });
                        }
                    }
                }
            }
            gammas.push(Gamma::zero(like));
            reports.push(BoxReport::default());
            continue;
        }
        let mut lines = Lines::new();
        lines.gamma_at_least(kind, 0.0, -h0[j] + eps, c);
        match kind {
            GammaKind::Linear => {
                lines.gamma_at_most(kind, sj.tb, like.lift(-eps), c, j)?;
                if let Some(sup) = sj.pred.sup() {
                    lines.gamma_at_least(kind, sj.ta, like.lift(-sup + eps), c);
                }
                lines.v1_lo.push(like.lift(eps));
                lines.w2_hi.push((like.lift(-eps), 0.0));
            }
            GammaKind::Exponential => {
                lines.gamma_at_most(kind, sj.ta, like.lift(-eps), c, j)?;
                lines.v1_lo.push(like.lift(crate::math::ln(eps)));
                lines.w2_lo.push((like.lift(eps), 0.0));
            }
            GammaKind::Zero => unreachable!(),
        }
        // Conditions against earlier slots.
        for (k, sk) in slots[..j].iter().enumerate() {
            if let Some(d) = pair_bound(&sj.pred, &sk.pred) {
                let gk = gammas[k].value(sk.tb);
                lines.gamma_at_least(kind, sk.tb, gk.rsub(d) + eps, c);
            }
        }
        // Later slots whose offset is identically zero constrain this one alone.
        for (l, sl) in slots.iter().enumerate().skip(j + 1) {
            if cats[l] == Category::I {
                if let Some(d) = pair_bound(&sl.pred, &sj.pred) {
                    lines.gamma_at_least(kind, sj.tb, like.lift(d + eps), c);
                }
            }
        }
        let (v1, w2, report) = lines.resolve(raw[j], eps, j)?;
        let w1 = if kind == GammaKind::Exponential { v1.exp() } else { v1 };
        gammas.push(Gamma { kind, w1, w2, c });
        reports.push(report);
    }
    Ok((gammas, reports))
}

/// Lower bound on `p1` that makes `ψ1(x0, 0) > 0`:
/// `max(-ḃ/b, 0) + ε`, with `b` floored at `1e-9`.
pub fn p1_lower<R: Real>(b: R, b_dot: R, eps: f64) -> R {
    let bb = b.max(b.lift(1e-9));
    (-(b_dot / bb)).max(b.lift(0.0)) + eps
}

/// `ψ0`, `ψ1` and the input-affine `ψ2 = a·u + c`.
#[derive(Debug, Clone)]
pub struct PsiRow<R> {
    pub psi0: R,
    pub psi1: R,
    pub a: Vec<R>,
    pub c: R,
}

/// Multiplier-augmented chain with linear class-κ functions and `p` held
/// constant over the step.
pub fn psi_row<R: Real>(d: &BarrierDerivs<R>, p1: R, p2: R) -> PsiRow<R> {
    let psi1 = d.b_dot + p1 * d.b;
    let c = d.b_ddot_drift + (p1 + p2) * d.b_dot + p1 * p2 * d.b;
    PsiRow {
        psi0: d.b,
        psi1,
        a: d.gain.clone(),
        c,
    }
}

/// `ψ1`, the quantity whose positivity keeps the QP feasible.
pub fn feasibility_margin<R: Real>(d: &BarrierDerivs<R>, p1: R) -> R {
    d.b_dot + p1 * d.b
}

/// Deletion bookkeeping of one rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Deletions {
    /// Deletion time per slot; never reset once set.
    pub at: Vec<Option<f64>>,
}

impl Deletions {
    pub fn new(n: usize) -> Self {
        Self { at: vec![None; n] }
    }

    pub fn is_active(&self, slot: usize) -> bool {
        self.at[slot].is_none()
    }

    /// Apply the deletion rules at sample time `t` with `h[j] = h_j(x(t))`.
    ///
    /// * `F` slots go once `t >= t_a` and every slot of the group has `h >= 0`,
    ///   with deletion time `t`.
    /// * Other slots go once `t > t_b`, with deletion time `t_b`.
    pub fn update(&mut self, slots: &[Slot], h: &[f64], t: f64) {
        const TOL: f64 = 1e-9;
        for (j, s) in slots.iter().enumerate() {
            if self.at[j].is_some() {
                continue;
            }
            if s.is_eventually() {
                if t + TOL >= s.ta {
                    let done = slots
                        .iter()
                        .zip(h)
                        .filter(|(o, _)| o.group == s.group && o.is_eventually())
                        .all(|(_, &hv)| hv >= 0.0);
                    if done {
                        self.at[j] = Some(t);
                    }
                }
            } else if t > s.tb + TOL {
                self.at[j] = Some(s.tb);
            }
        }
    }
}
