//! Delimited-text and JSON artifacts.
//!
//! File names and column headers are fixed so downstream plotting scripts can
//! rely on them:
//!
//! * `curves.csv`: `iter,mean_rho_uni,mean_rho_task,mean_objective,infeasible_qp,resampled,dropped,skipped`
//! * `rollout_NNN.csv`: `t`, state columns, `u1,u2`, then per slot
//!   `<slot>.psi0,<slot>.psi1,<slot>.active,<slot>.p1,<slot>.p2`, then `status`.
//!   The last row holds the final state; its input and barrier fields are empty.
//! * `summary.csv`: one row per rollout with robustness, cost and deletion times.
//! * `meta.json`: scenario name, system, step, input bounds and slot names.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stlcbf_core::controller::{CurveRow, EvalSummary, RolloutRecord};
use stlcbf_core::diffqp::QpStatus;
use stlcbf_core::scenario::Scenario;
use stlcbf_core::systems::SystemModel;

use crate::error::CliError;

pub const CURVES: &str = "curves.csv";
pub const SUMMARY: &str = "summary.csv";
pub const META: &str = "meta.json";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const REPORT: &str = "construction_report.txt";

pub fn state_columns(system: SystemModel) -> [&'static str; 4] {
    match system {
        SystemModel::DoubleIntegrator => ["x", "y", "vx", "vy"],
        SystemModel::Unicycle => ["x", "y", "theta", "v"],
    }
}

pub fn rollout_file(i: usize) -> String {
    format!("rollout_{i:03}.csv")
}

pub fn status_name(s: QpStatus) -> &'static str {
    match s {
        QpStatus::Optimal => "optimal",
        QpStatus::Infeasible => "infeasible",
        QpStatus::MaxIter => "max_iter",
        QpStatus::Breakdown => "breakdown",
    }
}

fn writer(path: &Path) -> Result<csv::Writer<File>, CliError> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

pub fn write_curves(path: &Path, rows: &[CurveRow]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["iter", "mean_rho_uni", "mean_rho_task", "mean_objective", "infeasible_qp", "resampled", "dropped", "skipped"])?;
    for r in rows {
        w.write_record([
            r.iter.to_string(),
            fmt(r.mean_rho_uni),
            fmt(r.mean_rho_task),
            fmt(r.mean_objective),
            r.infeasible_qp.to_string(),
            r.resampled.to_string(),
            r.dropped.to_string(),
            u8::from(r.skipped).to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_rollout(path: &Path, system: SystemModel, rec: &RolloutRecord) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = vec!["t".into()];
    header.extend(state_columns(system).iter().map(|s| s.to_string()));
    header.extend(["u1".into(), "u2".into()]);
    for name in &rec.slot_names {
        for col in ["psi0", "psi1", "active", "p1", "p2"] {
            header.push(format!("{name}.{col}"));
        }
    }
    header.push("status".into());
    w.write_record(&header)?;
    let steps = rec.inputs.len();
    for k in 0..=steps {
        let mut row: Vec<String> = vec![fmt(k as f64 * rec.dt)];
        row.extend(rec.states[k].iter().map(|&v| fmt(v)));
        if k < steps {
            row.extend(rec.inputs[k].iter().map(|&v| fmt(v)));
            for j in 0..rec.slot_names.len() {
                let p = rec.multipliers[k][j];
                row.push(opt(rec.psi0[k][j]));
                row.push(opt(rec.psi1[k][j]));
                row.push(u8::from(p.is_some()).to_string());
                row.push(opt(p.map(|p| p[0])));
                row.push(opt(p.map(|p| p[1])));
            }
            row.push(status_name(rec.status[k]).into());
        } else {
            row.resize(header.len(), String::new());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_summary(path: &Path, records: &[RolloutRecord], slot_names: &[String]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    let mut header: Vec<String> = [
        "rollout",
        "x0",
        "y0",
        "rho_classical",
        "rho_exp",
        "rho_bounds",
        "rho_uni",
        "cost",
        "objective",
        "infeasible_steps",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(slot_names.iter().map(|n| format!("{n}.t_del")));
    w.write_record(&header)?;
    for (i, r) in records.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            fmt(r.x0[0]),
            fmt(r.x0[1]),
            fmt(r.rho_classical),
            fmt(r.rho_task),
            fmt(r.rho_bounds),
            fmt(r.rho_uni),
            fmt(r.cost),
            fmt(r.objective),
            r.infeasible_steps().to_string(),
        ];
        row.extend((0..slot_names.len()).map(|j| opt(r.deletion.get(j).copied().flatten())));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Description of a rollout directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub scenario: String,
    pub system: SystemModel,
    pub env_hash: String,
    pub ablation: String,
    pub dt_s: f64,
    pub horizon_s: f64,
    pub u_min: Vec<f64>,
    pub u_max: Vec<f64>,
    pub slots: Vec<String>,
    pub rollouts: usize,
    pub seed: u64,
    pub summary: EvalSummary,
}

impl Meta {
    pub fn new(scenario: &Scenario, env_hash: String, ablation: &str, rollouts: usize, seed: u64, summary: EvalSummary) -> Self {
        Self {
            scenario: scenario.config.name.clone(),
            system: scenario.model,
            env_hash,
            ablation: ablation.into(),
            dt_s: scenario.dt,
            horizon_s: scenario.horizon,
            u_min: scenario.bounds.u_min.clone(),
            u_max: scenario.bounds.u_max.clone(),
            slots: scenario.slots.iter().map(|s| s.pred.name.clone()).collect(),
            rollouts,
            seed,
            summary,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Other(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|_| CliError::MissingData(format!("{} not found", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::MissingData(format!("{}: {e}", path.display())))
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Rollout files present in `dir`, in index order.
pub fn rollout_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for i in 0.. {
        let p = dir.join(rollout_file(i));
        if !p.is_file() {
            break;
        }
        out.push(p);
    }
    Ok(out)
}
