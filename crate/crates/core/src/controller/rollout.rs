use alloc::vec;
use alloc::vec::Vec;

use super::policy::{MultiplierMode, Policy, RefNet};
use crate::diffqp::{qp_layer, QpError, QpStatus};
use crate::hocbf::{self, BoxReport, Category, Deletions, Gamma, HocbfError};
use crate::nn::{bounded_head, LstmState, Var};
use crate::real::Real;
use crate::scenario::{QMode, Scenario};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RolloutError {
    #[error(transparent)]
    Hocbf(#[from] HocbfError),
    #[error(transparent)]
    Qp(#[from] QpError),
}

impl RolloutError {
    /// Whether a different initial state might succeed.
    pub fn is_resamplable(&self) -> bool {
        matches!(self, RolloutError::Hocbf(_))
    }
}

/// QP layer that reports a diverged rollout as `None` instead of an error.
///
/// Once the state has blown up the problem data overflow and the KKT system
/// turns singular; that rollout then scores NaN and is left out of the update
/// rather than aborting training.
fn layer_or_breakdown<'t>(
    q: &[Var<'t>],
    f: &[Var<'t>],
    g: &[Var<'t>],
    h: &[Var<'t>],
) -> Result<Option<(Vec<Var<'t>>, crate::diffqp::LayerInfo)>, QpError> {
    if q.iter().chain(f).chain(g).chain(h).any(|v| !v.value().is_finite()) {
        return Ok(None);
    }
    match qp_layer(q, f, g, h) {
        Ok(r) => Ok(Some(r)),
        Err(QpError::Singular) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Offset keeping multipliers strictly positive.
pub const MULT_FLOOR: f64 = 1e-3;

/// Everything a rollout produced, still attached to its tape.
#[derive(Debug, Clone)]
pub struct TapeRollout<'t> {
    pub x0: Vec<f64>,
    /// `K + 1` states.
    pub states: Vec<Vec<Var<'t>>>,
    /// `K` inputs.
    pub inputs: Vec<Vec<Var<'t>>>,
    /// Per step and slot, `None` while the slot is inactive.
    pub psi0: Vec<Vec<Option<Var<'t>>>>,
    pub psi1: Vec<Vec<Option<Var<'t>>>>,
    pub multipliers: Vec<Vec<Option<[f64; 2]>>>,
    /// `c + a·u` of each active row for the applied input; negative means violated.
    pub residuals: Vec<Vec<Option<Var<'t>>>>,
    pub status: Vec<QpStatus>,
    pub rows: Vec<usize>,
    pub deletions: Deletions,
    pub categories: Vec<Category>,
    pub gammas: Vec<Gamma<f64>>,
    pub p_init: Vec<[f64; 2]>,
    pub boxes: Vec<BoxReport>,
}

impl TapeRollout<'_> {
    pub fn infeasible_steps(&self) -> usize {
        self.status.iter().filter(|s| **s != QpStatus::Optimal).count()
    }
}

/// Output of the initial-condition network after the box heads.
#[derive(Debug, Clone)]
pub struct InitOutput<'t> {
    pub categories: Vec<Category>,
    pub gammas: Vec<Gamma<Var<'t>>>,
    pub p_init: Vec<[Var<'t>; 2]>,
    pub boxes: Vec<BoxReport>,
}

/// Run InitNet at `x0` and map its outputs into the admissible sets.
pub fn initnet_forward<'t>(policy: &Policy, scenario: &Scenario, params: &[Var<'t>], x0: &[Var<'t>]) -> Result<InitOutput<'t>, RolloutError> {
    let slots = &scenario.slots;
    let s = slots.len();
    let x0v: Vec<f64> = x0.iter().map(|v| v.value()).collect();
    let categories = hocbf::categorize(slots, &x0v)?;
    let out = policy.initnet.forward(params, x0);
    let raws: Vec<[Var<'t>; 2]> = (0..s).map(|j| [out[2 * j], out[2 * j + 1]]).collect();
    let h0: Vec<Var<'t>> = slots.iter().map(|sl| sl.pred.eval(x0)).collect();
    let (gammas, boxes) = hocbf::resolve_gammas(slots, &categories, &h0, &raws, &scenario.boxes)?;
    let eps = scenario.boxes.eps;
    let p_init = (0..s)
        .map(|j| {
            let d = scenario
                .model
                .barrier_derivatives(&slots[j].pred, &gammas[j].jet(0.0), x0);
            let lo = hocbf::p1_lower(d.b, d.b_dot, eps);
            let p1 = bounded_head(out[2 * s + 2 * j], Some(lo), None);
            let p2 = bounded_head(out[2 * s + 2 * j + 1], Some(d.b.lift(eps)), None);
            [p1, p2]
        })
        .collect();
    Ok(InitOutput {
        categories,
        gammas,
        p_init,
        boxes,
    })
}

/// `softplus(net(l(x))) + floor` for every multiplier head.
fn mult_scales<'t>(policy: &Policy, params: &[Var<'t>], x: &[Var<'t>]) -> Vec<Var<'t>> {
    let pos = [x[0], x[1]];
    policy
        .multnet
        .forward(params, &pos)
        .into_iter()
        .map(|v| v.softplus() + MULT_FLOOR)
        .collect()
}

/// Time-varying multipliers anchored so that `p(x0) = P_inip`.
pub fn multiplier_forward<'t>(policy: &Policy, params: &[Var<'t>], x: &[Var<'t>], base: &[Var<'t>], p_init: &[[Var<'t>; 2]]) -> Vec<[Var<'t>; 2]> {
    match policy.config.multipliers {
        MultiplierMode::Fixed => p_init.to_vec(),
        MultiplierMode::TimeVarying => {
            let sc = mult_scales(policy, params, x);
            p_init
                .iter()
                .enumerate()
                .map(|(j, p)| [p[0] * (sc[2 * j] / base[2 * j]), p[1] * (sc[2 * j + 1] / base[2 * j + 1])])
                .collect()
        }
    }
}

enum RefState<'t> {
    None,
    Lstm(LstmState<'t>),
}

/// Reference cost `(Q, F)` at the current state; `Q` is row-major.
fn refnet_step<'t>(policy: &Policy, params: &[Var<'t>], x: &[Var<'t>], state: &mut RefState<'t>) -> (Vec<Var<'t>>, Vec<Var<'t>>) {
    let q = policy.q;
    let out = match (&policy.refnet, state) {
        (RefNet::Feedforward(m), _) => m.forward(params, x),
        (RefNet::Memory(l), st) => {
            let prev = match st {
                RefState::Lstm(s) => s.clone(),
                RefState::None => l.zero_state(x[0]),
            };
            let (next, y) = l.step(params, &prev, x);
            *st = RefState::Lstm(next);
            y
        }
    };
    let tape = x[0].tape();
    let f = out[..q].to_vec();
    let qm = match policy.config.q_mode {
        QMode::Identity => (0..q * q)
            .map(|i| tape.constant(if i / q == i % q { 1.0 } else { 0.0 }))
            .collect(),
        QMode::Trainable => {
            let zero = tape.constant(0.0);
            let mut l = vec![zero; q * q];
            let mut k = q;
            for r in 0..q {
                for c in 0..=r {
                    l[r * q + c] = out[k];
                    k += 1;
                }
            }
            let mut m = Vec::with_capacity(q * q);
            for r in 0..q {
                for c in 0..q {
                    let mut acc = if r == c { tape.constant(1e-6) } else { zero };
                    for k in 0..=r.min(c) {
                        acc = acc + l[r * q + k] * l[c * q + k];
                    }
                    m.push(acc);
                }
            }
            m
        }
    };
    (qm, f)
}

/// Closed-loop rollout over the scenario horizon, recorded on the tape of `params`.
pub fn rollout<'t>(policy: &Policy, scenario: &Scenario, params: &[Var<'t>], x0: &[f64]) -> Result<TapeRollout<'t>, RolloutError> {
    let tape = params[0].tape();
    let model = scenario.model;
    let slots = &scenario.slots;
    let s = slots.len();
    let q = policy.q;
    let k_steps = scenario.steps;
    let uses_qp = policy.config.uses_qp();
    let x0v = tape.vars(x0);

    let (init, base) = if uses_qp {
        let init = initnet_forward(policy, scenario, params, &x0v)?;
        let base = match policy.config.multipliers {
            MultiplierMode::TimeVarying => mult_scales(policy, params, &x0v),
            MultiplierMode::Fixed => Vec::new(),
        };
        (Some(init), base)
    } else {
        (None, Vec::new())
    };

    let mut states = Vec::with_capacity(k_steps + 1);
    states.push(x0v);
    let mut inputs = Vec::with_capacity(k_steps);
    let mut psi0 = Vec::with_capacity(k_steps);
    let mut psi1 = Vec::with_capacity(k_steps);
    let mut multipliers = Vec::with_capacity(k_steps);
    let mut residuals = Vec::with_capacity(k_steps);
    let mut status = Vec::with_capacity(k_steps);
    let mut rows_per_step = Vec::with_capacity(k_steps);
    let mut deletions = Deletions::new(s);
    let mut ref_state = RefState::None;

    for k in 0..k_steps {
        let t = k as f64 * scenario.dt;
        let x = states[k].clone();
        let mut g_rows: Vec<Var<'t>> = Vec::new();
        let mut h_rows: Vec<Var<'t>> = Vec::new();
        let mut step_psi0 = vec![None; s];
        let mut step_psi1 = vec![None; s];
        let mut step_mult = vec![None; s];
        let mut row_slot = Vec::new();
        if let Some(init) = &init {
            let xv: Vec<f64> = x.iter().map(|v| v.value()).collect();
            let h_now: Vec<f64> = slots.iter().map(|sl| sl.pred.eval_f64(&xv)).collect();
            deletions.update(slots, &h_now, t);
            let active: Vec<usize> = (0..s).filter(|&j| deletions.is_active(j)).collect();
            if !active.is_empty() {
                let ps = multiplier_forward(policy, params, &x, &base, &init.p_init);
                for &j in &active {
                    let d = model.barrier_derivatives(&slots[j].pred, &init.gammas[j].jet(t), &x);
                    let row = hocbf::psi_row(&d, ps[j][0], ps[j][1]);
                    for a in &row.a {
                        g_rows.push(-*a);
                    }
                    h_rows.push(row.c);
                    row_slot.push(j);
                    step_psi0[j] = Some(row.psi0);
                    step_psi1[j] = Some(row.psi1);
                    step_mult[j] = Some([ps[j][0].value(), ps[j][1].value()]);
                }
            }
        }
        let n_rows = h_rows.len();
        let (qm, f) = refnet_step(policy, params, &x, &mut ref_state);
        if uses_qp && policy.config.qp_bounds {
            let b = &scenario.bounds;
            for i in 0..q {
                for c in 0..q {
                    g_rows.push(tape.constant(if c == i { 1.0 } else { 0.0 }));
                }
                h_rows.push(tape.constant(b.u_max[i]));
                for c in 0..q {
                    g_rows.push(tape.constant(if c == i { -1.0 } else { 0.0 }));
                }
                h_rows.push(tape.constant(-b.u_min[i]));
            }
        }
        let (u, st) = match layer_or_breakdown(&qm, &f, &g_rows, &h_rows)? {
            Some((u, info)) => (u, info.status),
            None => {
                log::debug!("t={t:.2}: numerical breakdown, input set to NaN");
                ((0..q).map(|_| tape.constant(f64::NAN)).collect(), QpStatus::Breakdown)
            }
        };
        if st != QpStatus::Optimal && st != QpStatus::Breakdown {
            log::debug!("t={t:.2}: QP {st:?}, applying least-violation input");
            for (r, h) in h_rows.iter().enumerate() {
                let g: Vec<f64> = g_rows[r * q..(r + 1) * q].iter().map(|v| v.value()).collect();
                log::debug!("  row {r}: {g:.4?} u <= {:.4}", h.value());
            }
        }
        let mut step_res = vec![None; s];
        for (r, &j) in row_slot.iter().enumerate() {
            let mut acc = h_rows[r];
            for (c, &ui) in u.iter().enumerate() {
                acc = acc - g_rows[r * q + c] * ui;
            }
            step_res[j] = Some(acc);
        }
        residuals.push(step_res);
        let next = model.step(&x, &u, scenario.dt);
        states.push(next);
        inputs.push(u);
        psi0.push(step_psi0);
        psi1.push(step_psi1);
        multipliers.push(step_mult);
        status.push(st);
        rows_per_step.push(n_rows);
    }

    let (categories, gammas, p_init, boxes) = match init {
        Some(i) => (
            i.categories,
            i.gammas.iter().map(Gamma::to_f64).collect(),
            i.p_init.iter().map(|p| [p[0].value(), p[1].value()]).collect(),
            i.boxes,
        ),
        None => (Vec::new(), Vec::new(), Vec::new(), Vec::new()),
    };
    Ok(TapeRollout {
        x0: x0.to_vec(),
        states,
        inputs,
        psi0,
        psi1,
        multipliers,
        residuals,
        status,
        rows: rows_per_step,
        deletions,
        categories,
        gammas,
        p_init,
        boxes,
    })
}
