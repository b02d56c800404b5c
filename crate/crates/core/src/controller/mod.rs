//! Closed-loop policy: InitNet, RefNet and the multiplier network feeding the
//! QP layer, rollouts, the feasibility-aware objective and the training loop.

mod objective;
mod policy;
mod rollout;

pub use objective::{bounds_robustness, feasibility_robustness, objective_terms, ObjectiveTerms};
pub use policy::{tri_len, MultiplierMode, Policy, PolicyConfig, RefNet};
pub use rollout::{initnet_forward, multiplier_forward, rollout, InitOutput, RolloutError, TapeRollout, MULT_FLOOR};

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffqp::QpStatus;
use crate::hocbf::{BoxReport, Category, GammaKind};
use crate::nn::{adam_step, AdamConfig, Tape};
use crate::math;
use crate::real::Real;
use crate::scenario::Scenario;
use crate::stl::{robustness_classical, StlError, Trajectory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControllerError {
    #[error(transparent)]
    Rollout(#[from] RolloutError),
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error("no admissible initial state after {0} draws")]
    NoFeasibleSample(usize),
}

/// Plain-number copy of a rollout and its scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub dt: f64,
    pub x0: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub slot_names: Vec<String>,
    pub psi0: Vec<Vec<Option<f64>>>,
    pub psi1: Vec<Vec<Option<f64>>>,
    pub multipliers: Vec<Vec<Option<[f64; 2]>>>,
    pub status: Vec<QpStatus>,
    pub rows: Vec<usize>,
    pub deletion: Vec<Option<f64>>,
    pub categories: Vec<Category>,
    pub gammas: Vec<(GammaKind, f64, f64)>,
    pub p_init: Vec<[f64; 2]>,
    pub boxes: Vec<BoxReport>,
    /// Min/max robustness of the task.
    pub rho_classical: f64,
    pub rho_task: f64,
    pub rho_bounds: f64,
    pub rho_feasibility: Vec<Option<f64>>,
    pub rho_uni: f64,
    pub cost: f64,
    pub objective: f64,
}

impl RolloutRecord {
    pub fn infeasible_steps(&self) -> usize {
        self.status.iter().filter(|s| **s != QpStatus::Optimal).count()
    }

    pub fn all_optimal(&self) -> bool {
        self.infeasible_steps() == 0
    }
}

fn record_of(policy: &Policy, scenario: &Scenario, r: &TapeRollout<'_>, terms: &ObjectiveTerms<'_>) -> Result<RolloutRecord, StlError> {
    let vals = |v: &Vec<Vec<crate::nn::Var<'_>>>| -> Vec<Vec<f64>> {
        v.iter().map(|x| x.iter().map(|e| e.value()).collect()).collect()
    };
    let opt = |v: &Vec<Vec<Option<crate::nn::Var<'_>>>>| -> Vec<Vec<Option<f64>>> {
        v.iter().map(|x| x.iter().map(|e| e.map(|e| e.value())).collect()).collect()
    };
    let states = vals(&r.states);
    let traj = Trajectory::new(scenario.dt, states.clone());
    let rho_classical = robustness_classical(&scenario.formula, &traj, 0.0)?;
    let _ = policy;
    Ok(RolloutRecord {
        dt: scenario.dt,
        x0: r.x0.clone(),
        states,
        inputs: vals(&r.inputs),
        slot_names: scenario.slots.iter().map(|s| s.pred.name.clone()).collect(),
        psi0: opt(&r.psi0),
        psi1: opt(&r.psi1),
        multipliers: r.multipliers.clone(),
        status: r.status.clone(),
        rows: r.rows.clone(),
        deletion: r.deletions.at.clone(),
        categories: r.categories.clone(),
        gammas: r.gammas.iter().map(|g| (g.kind, g.w1, g.w2)).collect(),
        p_init: r.p_init.clone(),
        boxes: r.boxes.clone(),
        rho_classical,
        rho_task: terms.task.value(),
        rho_bounds: terms.bounds.value(),
        rho_feasibility: terms.feasibility.iter().map(|v| v.map(|v| v.value())).collect(),
        rho_uni: terms.unified.value(),
        cost: terms.cost.value(),
        objective: terms.value.value(),
    })
}

/// Roll out from `x0` and score the result without keeping gradients.
pub fn run_record(policy: &Policy, scenario: &Scenario, x0: &[f64]) -> Result<RolloutRecord, ControllerError> {
    let tape = Tape::new();
    let params = policy.store.bind(&tape);
    let r = rollout(policy, scenario, &params, x0)?;
    let terms = objective_terms(policy, scenario, &r)?;
    Ok(record_of(policy, scenario, &r, &terms)?)
}

/// Objective value of one rollout from `x0`.
pub fn rollout_objective(policy: &Policy, scenario: &Scenario, x0: &[f64]) -> Result<f64, ControllerError> {
    Ok(run_record(policy, scenario, x0)?.objective)
}

/// Roll out from `x0` and return `∂ objective / ∂ θ` with the record.
pub fn rollout_gradient(policy: &Policy, scenario: &Scenario, x0: &[f64]) -> Result<(Vec<f64>, RolloutRecord), ControllerError> {
    let tape = Tape::new();
    let params = policy.store.bind(&tape);
    let r = rollout(policy, scenario, &params, x0)?;
    let terms = objective_terms(policy, scenario, &r)?;
    let record = record_of(policy, scenario, &r, &terms)?;
    let grad = tape.gradient(terms.value);
    Ok((grad.wrt_slice(&params), record))
}

/// Runs independent jobs; results must come back in index order.
pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs jobs one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Maximum initial-state draws per rollout before giving up.
pub const MAX_DRAWS: usize = 100;

/// Random stream of rollout `index` under `seed`.
pub fn rollout_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw initial states until `job` accepts one; returns the job result and
/// the number of rejected draws.
pub fn with_admissible_x0<T>(
    scenario: &Scenario,
    seed: u64,
    stream: u64,
    mut job: impl FnMut(&[f64]) -> Result<T, ControllerError>,
) -> Result<(T, usize), ControllerError> {
    let mut rng = rollout_rng(seed, stream);
    for draw in 0..MAX_DRAWS {
        let x0 = scenario.sample_x0(&mut rng);
        match job(&x0) {
            Ok(v) => return Ok((v, draw)),
            Err(ControllerError::Rollout(e)) if e.is_resamplable() => {
                log::debug!("rejected initial state {x0:?}: {e}");
            }
            Err(e) => return Err(e),
        }
    }
    Err(ControllerError::NoFeasibleSample(MAX_DRAWS))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub iters: usize,
    pub rollouts: usize,
    pub adam: AdamConfig,
    /// Per-rollout gradient norm cap, 0 for none.
    pub grad_clip: f64,
    /// Iterations run with the input box inside the QP before it is lifted.
    #[serde(default)]
    pub warmup_iters: usize,
    pub seed: u64,
}

impl TrainOptions {
    pub fn from_scenario(s: &Scenario) -> Self {
        let t = &s.config.training;
        Self {
            iters: t.iters,
            rollouts: t.rollouts,
            adam: t.adam(),
            grad_clip: t.grad_clip,
            warmup_iters: t.warmup_iters,
            seed: t.seed,
        }
    }
}

/// One row of the learning curves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub iter: usize,
    pub mean_rho_uni: f64,
    pub mean_rho_task: f64,
    pub mean_objective: f64,
    pub infeasible_qp: usize,
    pub resampled: usize,
    /// Rollouts left out of the update because their gradient was not finite.
    pub dropped: usize,
    /// The update was skipped altogether.
    pub skipped: bool,
}

/// Stream offset separating evaluation draws from training draws.
pub const EVAL_STREAM: u64 = 1 << 40;

/// Gradient ascent on the mean objective over `V` fresh initial states per
/// iteration.
///
/// Per-rollout gradients are summed in index order, so the trace does not
/// depend on how `exec` schedules the work.
pub fn train<E: Executor>(
    policy: &mut Policy,
    scenario: &Scenario,
    opts: &TrainOptions,
    exec: &E,
    mut on_iter: impl FnMut(&CurveRow),
) -> Result<Vec<CurveRow>, ControllerError> {
    let mut curves = Vec::with_capacity(opts.iters);
    if !policy.config.is_trainable() {
        log::info!("{} is not trained", policy.config.ablation.name());
        return Ok(curves);
    }
    let v = opts.rollouts.max(1);
    let bounded = policy.config.qp_bounds;
    for iter in 0..opts.iters {
        // An untrained controller without the box tends to diverge on every
        // rollout, which leaves nothing to learn from.
        policy.config.qp_bounds = bounded || iter < opts.warmup_iters;
        let snapshot: &Policy = policy;
        let results = exec.map(v, |i| {
            let stream = (iter * v + i) as u64;
            with_admissible_x0(scenario, opts.seed, stream, |x0| rollout_gradient(snapshot, scenario, x0))
        });
        let mut grad = alloc::vec![0.0; policy.store.len()];
        let (mut su, mut st, mut so) = (0.0, 0.0, 0.0);
        let mut infeasible = 0;
        let mut resampled = 0;
        let mut dropped = 0;
        for r in results {
            let ((g, rec), draws) = match r {
                Ok(v) => v,
                Err(e) => {
                    policy.config.qp_bounds = bounded;
                    return Err(e);
                }
            };
            let scale = clip_scale(&g, opts.grad_clip) / v as f64;
            if g.iter().all(|x| x.is_finite()) && scale > 0.0 {
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a -= b * scale;
                }
            } else {
                dropped += 1;
            }
            su += rec.rho_uni;
            st += rec.rho_classical;
            so += rec.objective;
            infeasible += rec.infeasible_steps();
            resampled += draws;
        }
        let skipped = dropped == v || adam_step(&mut policy.store, &grad, &opts.adam).is_err();
        let row = CurveRow {
            iter,
            mean_rho_uni: su / v as f64,
            mean_rho_task: st / v as f64,
            mean_objective: so / v as f64,
            infeasible_qp: infeasible,
            resampled,
            dropped,
            skipped,
        };
        on_iter(&row);
        curves.push(row);
    }
    policy.config.qp_bounds = bounded;
    Ok(curves)
}

/// Factor bringing `g` down to norm `cap`; 1 when it is already within it.
///
/// A rollout that leaves the barriers' region of validity can return
/// gradients many orders of magnitude larger than the rest, which would
/// swamp the batch and Adam's second moment for hundreds of steps.
fn clip_scale(g: &[f64], cap: f64) -> f64 {
    let norm = math::sqrt(g.iter().map(|x| x * x).sum::<f64>());
    if cap > 0.0 && norm > cap {
        cap / norm
    } else {
        1.0
    }
}

/// `n` evaluation rollouts from fresh admissible initial states.
pub fn evaluate<E: Executor>(policy: &Policy, scenario: &Scenario, n: usize, seed: u64, exec: &E) -> Result<Vec<RolloutRecord>, ControllerError> {
    exec.map(n, |i| {
        with_admissible_x0(scenario, seed, EVAL_STREAM + i as u64, |x0| run_record(policy, scenario, x0)).map(|(r, _)| r)
    })
    .into_iter()
    .collect()
}

/// Aggregate numbers over evaluation rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n: usize,
    // Diverged rollouts make these NaN, which JSON stores as null.
    #[serde(deserialize_with = "null_as_nan")]
    pub mean_rho_classical: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub min_rho_classical: f64,
    #[serde(deserialize_with = "null_as_nan")]
    pub mean_rho_uni: f64,
    pub satisfied: usize,
    pub infeasible_qp: usize,
}

fn null_as_nan<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

pub fn summarize(records: &[RolloutRecord]) -> EvalSummary {
    let n = records.len();
    if n == 0 {
        return EvalSummary {
            n: 0,
            mean_rho_classical: 0.0,
            min_rho_classical: 0.0,
            mean_rho_uni: 0.0,
            satisfied: 0,
            infeasible_qp: 0,
        };
    }
    let mean = |f: fn(&RolloutRecord) -> f64| records.iter().map(f).sum::<f64>() / n as f64;
    EvalSummary {
        n,
        mean_rho_classical: mean(|r| r.rho_classical),
        min_rho_classical: records.iter().map(|r| r.rho_classical).fold(f64::INFINITY, f64::min),
        mean_rho_uni: mean(|r| r.rho_uni),
        satisfied: records.iter().filter(|r| r.rho_classical > 0.0).count(),
        infeasible_qp: records.iter().map(RolloutRecord::infeasible_steps).sum(),
    }
}
