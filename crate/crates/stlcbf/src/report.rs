//! Human-readable summary of how the barrier instances were built.

use std::fmt::Write;

use stlcbf_core::controller::RolloutRecord;
use stlcbf_core::hocbf::Temporal;
use stlcbf_core::scenario::Scenario;

fn bound(b: Option<f64>) -> String {
    b.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

/// Category table and parameter boxes, as seen from the rollouts' initial states.
pub fn construction_report(scenario: &Scenario, env_hash: &str, records: &[RolloutRecord]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario  {}", scenario.config.name);
    let _ = writeln!(s, "system    {}", scenario.model.name());
    let _ = writeln!(s, "env hash  {env_hash}");
    let _ = writeln!(s, "steps     {} x {} s", scenario.steps, scenario.dt);
    let _ = writeln!(s, "formula   {:?}", scenario.formula);
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<4} {:<10} {:<4} {:>6} {:>6} {:>5} {:>6}", "slot", "name", "op", "ta", "tb", "group", "sign");
    for (j, sl) in scenario.slots.iter().enumerate() {
        let op = match sl.temporal {
            Temporal::Eventually => "F",
            Temporal::Always => "G",
            Temporal::Bare => "-",
        };
        let _ = writeln!(
            s,
            "{j:<4} {:<10} {op:<4} {:>6.2} {:>6.2} {:>5} {:>6}",
            sl.pred.name, sl.ta, sl.tb, sl.group, sl.pred.sign
        );
    }
    for (i, r) in records.iter().enumerate() {
        let _ = writeln!(s);
        let _ = writeln!(s, "x0[{i}] = {:?}", r.x0);
        if r.gammas.is_empty() {
            let _ = writeln!(s, "no barrier instances (policy does not use the QP)");
            continue;
        }
        let _ = writeln!(
            s,
            "{:<10} {:<4} {:<12} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>8}",
            "name", "cat", "gamma", "w1", "w2", "v1_lo", "v1_hi", "w2_lo", "w2_hi", "p1", "p2", "t_del"
        );
        for (j, name) in r.slot_names.iter().enumerate() {
            let (kind, w1, w2) = r.gammas[j];
            let b = &r.boxes[j];
            let _ = writeln!(
                s,
                "{name:<10} {:<4} {:<12} {w1:>10.4} {w2:>10.4} {:>10} {:>10} {:>10} {:>10} {:>10.4} {:>10.4} {:>8}",
                format!("{:?}", r.categories[j]),
                format!("{kind:?}"),
                bound(b.v1.0),
                bound(b.v1.1),
                bound(b.w2.0),
                bound(b.w2.1),
                r.p_init[j][0],
                r.p_init[j][1],
                r.deletion[j].map(|t| format!("{t:.2}")).unwrap_or_else(|| "-".into()),
            );
        }
    }
    s
}
