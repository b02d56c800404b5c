use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Activation, Lstm, Mlp, ParamStore};
use crate::scenario::{Ablation, QMode, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierMode {
    /// `p = P_inip` for the whole rollout.
    Fixed,
    /// `p(x) = P_inip · s(net(l(x))) / s(net(l(x0)))`.
    TimeVarying,
}

/// Switches that distinguish the controller variants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub ablation: Ablation,
    pub memory: bool,
    pub multipliers: MultiplierMode,
    /// Include the feasibility subformulas in the training robustness.
    pub feasibility: bool,
    pub q_mode: QMode,
    pub cost_weight: f64,
    /// Put the input box inside the QP.
    pub qp_bounds: bool,
}

impl PolicyConfig {
    pub fn new(ablation: Ablation, memory: bool, q_mode: QMode, cost_weight: f64) -> Self {
        let (multipliers, feasibility, qp_bounds) = match ablation {
            Ablation::BnFixedp => (MultiplierMode::Fixed, false, false),
            Ablation::BnVarp => (MultiplierMode::TimeVarying, false, false),
            Ablation::FeasibnVarp => (MultiplierMode::TimeVarying, true, false),
            Ablation::Fcnet => (MultiplierMode::Fixed, false, false),
            Ablation::HocbfBaseline => (MultiplierMode::Fixed, false, true),
        };
        Self {
            ablation,
            memory,
            multipliers,
            feasibility,
            q_mode,
            cost_weight,
            qp_bounds,
        }
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        let p = &s.config.policy;
        Self::new(p.ablation, p.memory, p.q_mode, p.cost_weight)
    }

    /// The fully connected baseline skips the QP and the barriers.
    pub fn uses_qp(&self) -> bool {
        self.ablation != Ablation::Fcnet
    }

    /// The untrained barrier baseline keeps its random initialization.
    pub fn is_trainable(&self) -> bool {
        self.ablation != Ablation::HocbfBaseline
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RefNet {
    Feedforward(Mlp),
    Memory(Lstm),
}

/// Network weights and layout of one controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub config: PolicyConfig,
    pub store: ParamStore,
    /// `x0 ↦ (2 γ raws, 2 multiplier raws)` per slot.
    pub initnet: Mlp,
    /// State (or state history) to reference cost `F` and optionally `L` of `Q = LLᵀ + 1e-6 I`.
    pub refnet: RefNet,
    /// `l(x) ↦` one raw value per multiplier.
    pub multnet: Mlp,
    pub n_slots: usize,
    pub n: usize,
    pub q: usize,
}

/// Distance from the lower bound at which untrained InitNet heads start.
pub const HEAD_MARGIN: f64 = 2.0;
/// Scale applied to the initial InitNet readout weights.
pub const HEAD_WEIGHT_SCALE: f64 = 0.1;

/// Scale applied to the initial RefNet readout weights.
pub const REF_WEIGHT_SCALE: f64 = 0.1;

fn softplus_inv(y: f64) -> f64 {
    libm::log(libm::expm1(y))
}

/// Entries of the lower-triangular factor of a `q × q` matrix.
pub fn tri_len(q: usize) -> usize {
    q * (q + 1) / 2
}

impl Policy {
    pub fn new(scenario: &Scenario, config: PolicyConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = scenario.state_dim();
        let q = scenario.input_dim();
        let s = scenario.slots.len();
        let t = &scenario.config.training;
        let h = t.hidden;
        let mut store = ParamStore::new();
        let init_out = 4 * s;
        let initnet = Mlp::new(
            &mut store,
            "initnet",
            &[n, h, h, init_out.max(1)],
            Activation::Relu,
            Activation::Identity,
            &mut rng,
        );
        let ref_out = q + if config.q_mode == QMode::Trainable { tri_len(q) } else { 0 };
        let refnet = if config.memory {
            RefNet::Memory(Lstm::new(&mut store, "refnet", n, t.lstm_hidden, t.lstm_layers, ref_out, &mut rng))
        } else {
            RefNet::Feedforward(Mlp::new(
                &mut store,
                "refnet",
                &[n, h, h, ref_out],
                Activation::Relu,
                Activation::Identity,
                &mut rng,
            ))
        };
        let multnet = Mlp::new(
            &mut store,
            "multnet",
            &[2, h, h, (2 * s).max(1)],
            Activation::Relu,
            Activation::Identity,
            &mut rng,
        );
        if config.ablation == Ablation::HocbfBaseline {
            // F = 0 and a constant factor in Q.
            store.zero_prefix("refnet");
        }
        let mut p = Self {
            config,
            store,
            initnet,
            refnet,
            multnet,
            n_slots: s,
            n,
            q,
        };
        p.init_initnet_heads();
        p.shrink_refnet_readout();
        if config.q_mode == QMode::Trainable {
            p.init_q_bias();
        }
        p
    }

    /// Shrink the InitNet readout and shift its bias so an untrained network
    /// places one-sided heads [`HEAD_MARGIN`] above their lower bound.
    ///
    /// With raw outputs near zero the heads sit right at their lower bounds:
    /// tiny multipliers make distant obstacles block almost all acceleration
    /// and a barely positive initial barrier forces a huge first multiplier,
    /// so the first rollouts run through infeasible QPs.
    fn init_initnet_heads(&mut self) {
        let (w, b, inputs, outputs) = self.initnet.last_layer();
        let margin = softplus_inv(HEAD_MARGIN);
        let gamma_raws = 2 * self.n_slots;
        for o in 0..outputs {
            for i in 0..inputs {
                self.store.values[w + o * inputs + i] *= HEAD_WEIGHT_SCALE;
            }
            // The second γ head is usually two-sided; zero puts it mid-box.
            let two_sided = o < gamma_raws && o % 2 == 1;
            self.store.values[b + o] = if two_sided { 0.0 } else { margin };
        }
    }

    /// Scale the RefNet readout by [`REF_WEIGHT_SCALE`] and zero its bias so
    /// an untrained controller starts close to the minimum-norm input.
    fn shrink_refnet_readout(&mut self) {
        let (w, b, inputs, outputs) = self.refnet_readout();
        for o in 0..outputs {
            for i in 0..inputs {
                self.store.values[w + o * inputs + i] *= REF_WEIGHT_SCALE;
            }
            self.store.values[b + o] = 0.0;
        }
    }

    fn refnet_readout(&self) -> (usize, usize, usize, usize) {
        match &self.refnet {
            RefNet::Feedforward(m) => m.last_layer(),
            RefNet::Memory(l) => {
                let t = self.store.tensor("refnet.readout.l0.w").expect("readout").offset;
                let bt = self.store.tensor("refnet.readout.l0.b").expect("readout").offset;
                (t, bt, l.hidden, l.output_dim())
            }
        }
    }

    /// Start the trainable `Q` at the identity: zero readout weights for the
    /// factor entries and unit diagonal bias.
    fn init_q_bias(&mut self) {
        let (w, b, inputs, outputs) = self.refnet_readout();
        let q = self.q;
        let mut k = 0;
        for r in 0..q {
            for c in 0..=r {
                let row = q + k;
                debug_assert!(row < outputs);
                for i in 0..inputs {
                    self.store.values[w + row * inputs + i] = 0.0;
                }
                self.store.values[b + row] = if r == c { 1.0 } else { 0.0 };
                k += 1;
            }
        }
    }

    pub fn num_params(&self) -> usize {
        self.store.len()
    }

    /// Offsets of parameters that influence rollouts under this configuration.
    pub fn live_parameters(&self) -> Vec<usize> {
        let mut prefixes: Vec<&str> = alloc::vec!["refnet"];
        if self.config.uses_qp() {
            prefixes.push("initnet");
            if self.config.multipliers == MultiplierMode::TimeVarying {
                prefixes.push("multnet");
            }
        }
        self.store
            .tensors
            .iter()
            .filter(|t| prefixes.iter().any(|p| t.name.starts_with(p)))
            .flat_map(|t| t.range())
            .collect()
    }
}
