use alloc::vec::Vec;

use super::policy::Policy;
use super::rollout::TapeRollout;
use crate::diffqp::QpStatus;
use crate::nn::Var;
use crate::real::Real;
use crate::scenario::Scenario;
use crate::stl::{conj_exp, disj_exp, robustness_exp, window, StlError, Trajectory};

/// Terms of the training objective for one rollout.
#[derive(Debug, Clone)]
pub struct ObjectiveTerms<'t> {
    /// Smooth robustness of the task.
    pub task: Var<'t>,
    /// Smooth robustness of "inputs stay within bounds at every step".
    pub bounds: Var<'t>,
    /// Feasibility subformula per slot, `None` when it has no samples.
    pub feasibility: Vec<Option<Var<'t>>>,
    /// Conjunction of all of the above that the policy variant uses.
    pub unified: Var<'t>,
    /// `w Σ ‖u_k‖² Δt`.
    pub cost: Var<'t>,
    /// `unified - cost`.
    pub value: Var<'t>,
}

/// Smooth robustness of `G (u_min <= u <= u_max)` over the applied inputs.
pub fn bounds_robustness<'t>(scenario: &Scenario, inputs: &[Vec<Var<'t>>]) -> Result<Var<'t>, StlError> {
    let b = &scenario.bounds;
    let per_step = inputs
        .iter()
        .map(|u| {
            let mut vals = Vec::with_capacity(2 * u.len());
            for (i, &ui) in u.iter().enumerate() {
                vals.push(ui - b.u_min[i]);
                vals.push(ui.rsub(b.u_max[i]));
            }
            conj_exp(&vals, scenario.beta)
        })
        .collect::<Result<Vec<_>, _>>()?;
    conj_exp(&per_step, scenario.beta)
}

/// Feasibility subformula of slot `j`: the margin `ψ1` must stay positive
/// until deletion, and an `F` obligation must actually be met in its window.
///
/// Margin samples are capped at `margin_cap` so that a comfortable barrier
/// cannot lift the smooth conjunction above the task term; a `G` slot, which
/// is deleted unconditionally at the end of its window, contributes the cap
/// as its reach part.
///
/// A positive margin only makes each row satisfiable on its own. When rows
/// conflict the QP fails anyway, so at a step without an optimal solution a
/// violated row contributes its (negative) residual instead of its margin.
pub fn feasibility_robustness<'t>(scenario: &Scenario, r: &TapeRollout<'t>, j: usize) -> Result<Option<Var<'t>>, StlError> {
    let beta = scenario.beta;
    let cap = scenario.config.policy.margin_cap;
    let t_del = r.deletions.at[j].unwrap_or(f64::INFINITY);
    let margins: Vec<Var<'t>> = r
        .psi1
        .iter()
        .enumerate()
        .filter(|(k, _)| (*k as f64) * scenario.dt < t_del - 1e-9)
        .filter_map(|(k, m)| {
            let m = m[j]?;
            match r.residuals[k][j] {
                Some(res) if r.status[k] != QpStatus::Optimal && res.value() < 0.0 => Some(res),
                _ if m.value() > cap => Some(m.tape().constant(cap)),
                _ => Some(m),
            }
        })
        .collect();
    let slot = &scenario.slots[j];
    if margins.is_empty() && !slot.is_eventually() {
        return Ok(None);
    }
    let reach = if slot.is_eventually() {
        let members: Vec<usize> = scenario
            .slots
            .iter()
            .enumerate()
            .filter(|(_, o)| o.group == slot.group && o.is_eventually())
            .map(|(i, _)| i)
            .collect();
        let (lo, hi) = window(0, slot.ta, slot.tb, scenario.dt);
        if hi >= r.states.len() {
            return Err(StlError::TrajectoryTooShort {
                needed: hi,
                available: r.states.len(),
            });
        }
        let samples = (lo..=hi)
            .map(|k| {
                let hs: Vec<Var<'t>> = members.iter().map(|&i| scenario.slots[i].pred.eval(&r.states[k])).collect();
                conj_exp(&hs, beta)
            })
            .collect::<Result<Vec<_>, _>>()?;
        disj_exp(&samples, beta)?
    } else {
        r.states[0][0].tape().constant(cap)
    };
    if margins.is_empty() {
        return Ok(Some(reach));
    }
    conj_exp(&[reach, conj_exp(&margins, beta)?], beta).map(Some)
}

/// Evaluate the objective terms of a finished rollout.
pub fn objective_terms<'t>(policy: &Policy, scenario: &Scenario, r: &TapeRollout<'t>) -> Result<ObjectiveTerms<'t>, StlError> {
    let beta = scenario.beta;
    let traj = Trajectory::new(scenario.dt, r.states.clone());
    let task = robustness_exp(&scenario.formula, &traj, 0.0, beta)?;
    let bounds = bounds_robustness(scenario, &r.inputs)?;
    let feasibility = if policy.config.uses_qp() {
        (0..scenario.slots.len())
            .map(|j| feasibility_robustness(scenario, r, j))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    let mut terms = alloc::vec![task, bounds];
    if policy.config.feasibility {
        terms.extend(feasibility.iter().flatten().copied());
    }
    let unified = conj_exp(&terms, beta)?;
    let mut sq = task * 0.0;
    for u in &r.inputs {
        for &ui in u {
            sq = sq + ui.square();
        }
    }
    let cost = sq * (policy.config.cost_weight * scenario.dt);
    Ok(ObjectiveTerms {
        task,
        bounds,
        feasibility,
        unified,
        cost,
        value: unified - cost,
    })
}
