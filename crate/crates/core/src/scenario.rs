//! Scenario configuration: environment, task, bounds and training settings.
//!
//! The schema is plain serde so the std crate can read it from TOML. Lengths
//! are in meters, times in seconds (fields carry an `_s` suffix).

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::hocbf::{self, BoxSettings, Slot};
use crate::nn::AdamConfig;
use crate::stl::{Formula, Gauge, Predicate};
use crate::systems::{InputBounds, SystemModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Reach,
    Avoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaugeKind {
    Euclidean,
    Superellipse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TemporalOp {
    F,
    G,
    #[serde(rename = "none")]
    None,
}

/// One region and the obligation attached to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredicateConfig {
    pub name: String,
    pub role: Role,
    pub gauge: GaugeKind,
    pub center: [f64; 2],
    #[serde(default = "one")]
    pub radius: f64,
    /// Superellipse semi-axes `(a, b)`.
    #[serde(default)]
    pub axes: Option<[f64; 2]>,
    pub op: TemporalOp,
    #[serde(default)]
    pub interval_s: Option<[f64; 2]>,
    /// Entries sharing a group (and operator and interval) form one
    /// conjunction under the operator.
    #[serde(default)]
    pub group: Option<String>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    /// Non-position state components at `t = 0` (velocity or heading/speed).
    #[serde(default)]
    pub rest: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    BnFixedp,
    BnVarp,
    FeasibnVarp,
    Fcnet,
    HocbfBaseline,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::BnFixedp,
        Ablation::BnVarp,
        Ablation::FeasibnVarp,
        Ablation::Fcnet,
        Ablation::HocbfBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::BnFixedp => "bn-fixedp",
            Ablation::BnVarp => "bn-varp",
            Ablation::FeasibnVarp => "feasibn-varp",
            Ablation::Fcnet => "fcnet",
            Ablation::HocbfBaseline => "hocbf-baseline",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QMode {
    Identity,
    Trainable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    #[serde(default = "default_ablation")]
    pub ablation: Ablation,
    #[serde(default)]
    pub memory: bool,
    #[serde(default = "default_q_mode")]
    pub q_mode: QMode,
    #[serde(default = "default_cost_weight")]
    pub cost_weight: f64,
    /// Ceiling on each feasibility margin sample, and the value of the reach
    /// part for `G` slots.
    #[serde(default = "default_margin_cap")]
    pub margin_cap: f64,
}

fn default_ablation() -> Ablation {
    Ablation::FeasibnVarp
}
fn default_q_mode() -> QMode {
    QMode::Identity
}
fn default_cost_weight() -> f64 {
    0.003
}
fn default_margin_cap() -> f64 {
    1.0
}

impl Default for PolicySection {
    fn default() -> Self {
        Self {
            ablation: default_ablation(),
            memory: false,
            q_mode: default_q_mode(),
            cost_weight: default_cost_weight(),
            margin_cap: default_margin_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default = "default_rollouts")]
    pub rollouts: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    /// L2 cap on each rollout's gradient before averaging; 0 disables it.
    #[serde(default = "default_grad_clip")]
    pub grad_clip: f64,
    /// Leading iterations that keep the input box inside the QP.
    #[serde(default)]
    pub warmup_iters: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_width")]
    pub hidden: usize,
    #[serde(default = "default_width")]
    pub lstm_hidden: usize,
    #[serde(default = "default_lstm_layers")]
    pub lstm_layers: usize,
}

fn default_iters() -> usize {
    500
}
fn default_rollouts() -> usize {
    10
}
fn default_lr() -> f64 {
    1e-3
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_grad_clip() -> f64 {
    10.0
}
fn default_width() -> usize {
    64
}
fn default_lstm_layers() -> usize {
    2
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            iters: default_iters(),
            rollouts: default_rollouts(),
            lr: default_lr(),
            beta1: default_beta1(),
            beta2: default_beta2(),
            adam_eps: default_adam_eps(),
            grad_clip: default_grad_clip(),
            warmup_iters: 0,
            seed: 0,
            hidden: default_width(),
            lstm_hidden: default_width(),
            lstm_layers: default_lstm_layers(),
        }
    }
}

impl TrainingSection {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub system: SystemModel,
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    pub horizon_s: f64,
    pub init: InitConfig,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_c")]
    pub gamma_c: f64,
    #[serde(default = "default_eps")]
    pub box_eps: f64,
    pub predicates: Vec<PredicateConfig>,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub training: TrainingSection,
}

fn default_dt() -> f64 {
    0.1
}
fn default_beta() -> f64 {
    0.5
}
fn default_c() -> f64 {
    0.05
}
fn default_eps() -> f64 {
    1e-3
}

/// A validated, compiled scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: SystemModel,
    pub dt: f64,
    pub horizon: f64,
    /// Number of control steps, `horizon / dt`.
    pub steps: usize,
    pub bounds: InputBounds,
    pub beta: f64,
    pub boxes: BoxSettings,
    pub formula: Formula,
    pub slots: Vec<Slot>,
}

impl PredicateConfig {
    fn predicate(&self) -> Result<Predicate, ConfigError> {
        let gauge = match (self.gauge, self.axes) {
            (GaugeKind::Euclidean, None) => Gauge::Euclidean,
            (GaugeKind::Euclidean, Some(_)) => return invalid(format_name(&self.name, "euclidean gauge takes no axes")),
            (GaugeKind::Superellipse, Some([a, b])) => Gauge::Superellipse { a, b },
            (GaugeKind::Superellipse, None) => return invalid(format_name(&self.name, "superellipse needs axes")),
        };
        // Regions are stored as "inside" predicates; avoidance is a negation.
        Ok(Predicate::reach(&self.name, self.center, self.radius, gauge))
    }
}

fn format_name(name: &str, msg: &str) -> String {
    let mut s = String::from(name);
    s.push_str(": ");
    s.push_str(msg);
    s
}

impl ScenarioConfig {
    /// Schema-level checks and compilation into a [`Scenario`].
    pub fn compile(&self) -> Result<Scenario, ConfigError> {
        let c = self;
        if !(c.dt_s > 0.0 && c.dt_s.is_finite()) {
            return invalid("dt_s must be positive");
        }
        if !(c.horizon_s > 0.0 && c.horizon_s.is_finite()) {
            return invalid("horizon_s must be positive");
        }
        let steps_f = c.horizon_s / c.dt_s;
        let steps = crate::math::round(steps_f) as usize;
        if (steps_f - steps as f64).abs() > 1e-6 {
            return invalid("horizon_s must be a multiple of dt_s");
        }
        let q = c.system.input_dim();
        let bounds = InputBounds {
            u_min: c.u_min.clone(),
            u_max: c.u_max.clone(),
        };
        if bounds.u_min.len() != q || !bounds.is_valid() {
            return invalid("input bounds must have one finite entry per input with u_min < u_max");
        }
        if !(0.0..=1.0).contains(&c.beta) {
            return invalid("beta must lie in [0, 1]");
        }
        if !(c.box_eps > 0.0 && c.gamma_c > c.box_eps) {
            return invalid("need 0 < box_eps < gamma_c");
        }
        if !(c.init.lo[0] <= c.init.hi[0] && c.init.lo[1] <= c.init.hi[1]) {
            return invalid("init box lo must not exceed hi");
        }
        if c.predicates.is_empty() {
            return invalid("at least one predicate is required");
        }
        let t = &c.training;
        if t.rollouts == 0 || t.hidden == 0 || t.lstm_hidden == 0 || t.lstm_layers == 0 {
            return invalid("training sizes must be positive");
        }
        if !(t.lr > 0.0 && (0.0..1.0).contains(&t.beta1) && (0.0..1.0).contains(&t.beta2) && t.adam_eps > 0.0) {
            return invalid("bad optimizer settings");
        }
        if !(t.grad_clip >= 0.0 && t.grad_clip.is_finite()) {
            return invalid("grad_clip must be finite and nonnegative");
        }
        if c.policy.cost_weight < 0.0 {
            return invalid("cost_weight must be nonnegative");
        }
        if !(c.policy.margin_cap > 0.0 && c.policy.margin_cap.is_finite()) {
            return invalid("margin_cap must be positive and finite");
        }

        // Group predicates: (op, interval, group) identifies one temporal node.
        let mut nodes: Vec<(TemporalOp, [f64; 2], Option<String>, Vec<Formula>)> = Vec::new();
        let mut names: Vec<&str> = Vec::new();
        for p in &c.predicates {
            if names.contains(&p.name.as_str()) {
                return invalid(format_name(&p.name, "duplicate predicate name"));
            }
            names.push(&p.name);
            let pred = p.predicate()?;
            let atom = match p.role {
                Role::Reach => Formula::pred(pred),
                Role::Avoid => Formula::not(pred),
            };
            let interval = match (p.op, p.interval_s) {
                (TemporalOp::None, None) => [0.0, 0.0],
                (TemporalOp::None, Some(_)) => return invalid(format_name(&p.name, "bare predicate takes no interval")),
                (_, Some(iv)) => iv,
                (_, None) => return invalid(format_name(&p.name, "temporal operator needs interval_s")),
            };
            let existing = p.group.as_ref().and_then(|g| {
                nodes
                    .iter_mut()
                    .find(|(op, iv, grp, _)| *op == p.op && *iv == interval && grp.as_deref() == Some(g.as_str()))
            });
            match existing {
                Some(node) => node.3.push(atom),
                None => nodes.push((p.op, interval, p.group.clone(), vec![atom])),
            }
        }
        let args: Vec<Formula> = nodes
            .into_iter()
            .flat_map(|(op, iv, _, mut atoms)| {
                let body = if atoms.len() == 1 { atoms.pop().unwrap() } else { Formula::And { args: atoms } };
                match op {
                    TemporalOp::F => vec![Formula::eventually(iv[0], iv[1], body)],
                    TemporalOp::G => vec![Formula::always(iv[0], iv[1], body)],
                    TemporalOp::None => match body {
                        Formula::And { args } => args,
                        b => vec![b],
                    },
                }
            })
            .collect();
        let formula = Formula::TopAnd { args };
        formula.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if formula.horizon() > c.horizon_s + 1e-9 {
            return invalid("horizon_s is shorter than the formula horizon");
        }
        let slots = hocbf::extract_slots(&formula).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(Scenario {
            config: c.clone(),
            model: c.system,
            dt: c.dt_s,
            horizon: c.horizon_s,
            steps,
            bounds,
            beta: c.beta,
            boxes: BoxSettings {
                eps: c.box_eps,
                c: c.gamma_c,
            },
            formula,
            slots,
        })
    }
}

impl Scenario {
    /// Uniform position in the init box with the configured rest components.
    pub fn sample_x0<G: Rng>(&self, rng: &mut G) -> Vec<f64> {
        let i = &self.config.init;
        let mut x = Vec::with_capacity(4);
        for d in 0..2 {
            let v = if i.hi[d] > i.lo[d] { rng.gen_range(i.lo[d]..i.hi[d]) } else { i.lo[d] };
            x.push(v);
        }
        x.extend_from_slice(&i.rest);
        x
    }

    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.model.input_dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ScenarioConfig {
        ScenarioConfig {
            name: "t".into(),
            system: SystemModel::DoubleIntegrator,
            dt_s: 0.1,
            horizon_s: 5.0,
            init: InitConfig {
                lo: [0.0, 0.0],
                hi: [1.0, 1.0],
                rest: [0.0, 0.0],
            },
            u_min: vec![-10.0, -10.0],
            u_max: vec![10.0, 10.0],
            beta: 0.5,
            gamma_c: 0.05,
            box_eps: 1e-3,
            predicates: vec![
                PredicateConfig {
                    name: "Reg1".into(),
                    role: Role::Reach,
                    gauge: GaugeKind::Euclidean,
                    center: [3.0, 3.0],
                    radius: 1.0,
                    axes: None,
                    op: TemporalOp::F,
                    interval_s: Some([0.0, 2.0]),
                    group: None,
                },
                PredicateConfig {
                    name: "Obs".into(),
                    role: Role::Avoid,
                    gauge: GaugeKind::Superellipse,
                    center: [5.0, 2.0],
                    radius: 1.0,
                    axes: Some([0.8, 0.8]),
                    op: TemporalOp::G,
                    interval_s: Some([0.0, 5.0]),
                    group: Some("obs".into()),
                },
                PredicateConfig {
                    name: "Obs2".into(),
                    role: Role::Avoid,
                    gauge: GaugeKind::Superellipse,
                    center: [2.0, 0.0],
                    radius: 1.0,
                    axes: Some([0.5, 0.5]),
                    op: TemporalOp::G,
                    interval_s: Some([0.0, 5.0]),
                    group: Some("obs".into()),
                },
            ],
            policy: PolicySection::default(),
            training: TrainingSection::default(),
        }
    }

    #[test]
    fn compiles_and_groups() {
        let s = base().compile().unwrap();
        assert_eq!(s.steps, 50);
        assert_eq!(s.formula.horizon(), 5.0);
        match &s.formula {
            Formula::TopAnd { args } => assert_eq!(args.len(), 2),
            _ => panic!(),
        }
        assert_eq!(s.slots.len(), 3);
        assert_eq!(s.slots[0].pred.name, "Reg1");
        assert!(s.slots[1].pred.sign < 0.0);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = base();
        c.horizon_s = 4.0;
        assert!(c.compile().is_err());
        let mut c = base();
        c.u_min = vec![10.0, -10.0];
        assert!(c.compile().is_err());
        let mut c = base();
        c.predicates[0].interval_s = Some([3.0, 2.0]);
        assert!(c.compile().is_err());
        let mut c = base();
        c.predicates[1].axes = None;
        assert!(c.compile().is_err());
    }
}
