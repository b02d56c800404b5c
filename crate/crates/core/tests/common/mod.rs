//! Helpers shared by the integration tests.
#![allow(dead_code)]

pub mod qp;
pub mod stl;

use stlcbf_core::hocbf::{pair_bound, BoxSettings, Category, Gamma, GammaKind, Slot};
use stlcbf_core::scenario::{Scenario, ScenarioConfig};

const TOL: f64 = 1e-9;

pub fn config(name: &str) -> ScenarioConfig {
    let text = match name {
        "I1" => include_str!("../../../stlcbf/scenarios/double_integrator_I1.toml"),
        "I2" => include_str!("../../../stlcbf/scenarios/double_integrator_I2_memory.toml"),
        "II" => include_str!("../../../stlcbf/scenarios/unicycle_II.toml"),
        _ => panic!("unknown scenario {name}"),
    };
    toml::from_str(text).expect("bundled scenario parses")
}

pub fn scenario(name: &str) -> Scenario {
    config(name).compile().expect("bundled scenario compiles")
}

/// Every condition the resolved `γ` must meet, re-evaluated from scratch.
pub fn check_boxes(slots: &[Slot], cats: &[Category], h0: &[f64], gammas: &[Gamma<f64>], s: &BoxSettings) -> Result<(), String> {
    let eps = s.eps;
    for (j, sj) in slots.iter().enumerate() {
        let g = &gammas[j];
        match cats[j] {
            Category::I => {
                if g.kind != GammaKind::Zero || h0[j] < 0.0 {
                    return Err(format!("slot {j}: category I"));
                }
                continue;
            }
            Category::II => {
                if g.kind != GammaKind::Linear || g.w1 < eps - TOL || g.w2 > -eps + TOL {
                    return Err(format!("slot {j}: linear signs {} {}", g.w1, g.w2));
                }
                if g.value(sj.tb) > -eps + TOL {
                    return Err(format!("slot {j}: γ(tb) = {}", g.value(sj.tb)));
                }
                if let Some(sup) = sj.pred.sup() {
                    if g.value(sj.ta) < -sup + eps - TOL {
                        return Err(format!("slot {j}: γ(ta) below -sup"));
                    }
                }
            }
            Category::III => {
                if g.kind != GammaKind::Exponential || g.w2 < eps - TOL || g.w1 <= 0.0 {
                    return Err(format!("slot {j}: exponential signs"));
                }
                if g.value(sj.ta) > -eps + TOL {
                    return Err(format!("slot {j}: γ(ta) = {}", g.value(sj.ta)));
                }
            }
        }
        if h0[j] + g.value(0.0) < eps - TOL {
            return Err(format!("slot {j}: b(x0, 0) = {}", h0[j] + g.value(0.0)));
        }
        for (k, sk) in slots[..j].iter().enumerate() {
            if let Some(d) = pair_bound(&sj.pred, &sk.pred) {
                let lhs = g.value(sk.tb) + gammas[k].value(sk.tb);
                if lhs < d + eps - 1e-7 {
                    return Err(format!("pair ({k}, {j}): {lhs} < {d}"));
                }
            }
        }
    }
    Ok(())
}

