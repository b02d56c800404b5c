//! Reshape rollout directories into one file per figure type.

use std::path::{Path, PathBuf};

use clap::ValueEnum;

use crate::error::CliError;
use crate::output::{self, Meta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    /// Positions over time: `rollout,t,x,y`.
    Traj,
    /// Inputs over time plus `u_min` / `u_max` reference rows: `rollout,t,u1,u2`.
    Inputs,
    /// Multipliers of active instances only: `rollout,slot,t,p1,p2`.
    Multipliers,
    /// The training curve file, copied unchanged.
    Curves,
}

impl PlotKind {
    pub fn file_name(self) -> &'static str {
        match self {
            PlotKind::Traj => "plot_traj.csv",
            PlotKind::Inputs => "plot_inputs.csv",
            PlotKind::Multipliers => "plot_multipliers.csv",
            PlotKind::Curves => "plot_curves.csv",
        }
    }
}

struct Table {
    path: PathBuf,
    headers: csv::StringRecord,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self, CliError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| CliError::MissingData(format!("{}: {e}", path.display())))?;
        let headers = r.headers()?.clone();
        let rows = r.records().collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    fn col(&self, name: &str) -> Result<usize, CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::MissingData(format!("{}: no column {name:?}", self.path.display())))
    }
}

fn rollouts(dir: &Path) -> Result<Vec<Table>, CliError> {
    let files = output::rollout_files(dir)?;
    if files.is_empty() {
        return Err(CliError::MissingData(format!("no rollout files in {}", dir.display())));
    }
    files.iter().map(|p| Table::read(p)).collect()
}

/// Write the `kind` file for rollout directory `dir` into `out`; returns its path.
pub fn plot_data(dir: &Path, kind: PlotKind, out: &Path, slot: Option<&str>) -> Result<PathBuf, CliError> {
    output::ensure_dir(out)?;
    let dest = out.join(kind.file_name());
    if kind == PlotKind::Curves {
        let src = dir.join(output::CURVES);
        if !src.is_file() {
            return Err(CliError::MissingData(format!("{} not found", src.display())));
        }
        std::fs::copy(&src, &dest).map_err(|e| CliError::io(&dest, e))?;
        return Ok(dest);
    }
    let tables = rollouts(dir)?;
    let mut w = csv::Writer::from_path(&dest).map_err(|e| CliError::Other(format!("{}: {e}", dest.display())))?;
    match kind {
        PlotKind::Traj => {
            w.write_record(["rollout", "t", "x", "y"])?;
            for (i, t) in tables.iter().enumerate() {
                let c = [t.col("t")?, t.col("x")?, t.col("y")?];
                for r in &t.rows {
                    w.write_record([&i.to_string(), &r[c[0]], &r[c[1]], &r[c[2]]])?;
                }
            }
        }
        PlotKind::Inputs => {
            let meta = Meta::load(&dir.join(output::META))?;
            w.write_record(["rollout", "t", "u1", "u2"])?;
            for (i, t) in tables.iter().enumerate() {
                let c = [t.col("t")?, t.col("u1")?, t.col("u2")?];
                for r in t.rows.iter().filter(|r| !r[c[1]].is_empty()) {
                    w.write_record([&i.to_string(), &r[c[0]], &r[c[1]], &r[c[2]]])?;
                }
            }
            for (label, b) in [("u_min", &meta.u_min), ("u_max", &meta.u_max)] {
                for t in [0.0, meta.horizon_s] {
                    w.write_record([label.to_string(), t.to_string(), b[0].to_string(), b[1].to_string()])?;
                }
            }
        }
        PlotKind::Multipliers => {
            let meta = Meta::load(&dir.join(output::META))?;
            let names: Vec<&str> = match slot {
                Some(s) if meta.slots.iter().any(|n| n == s) => vec![s],
                Some(s) => return Err(CliError::MissingData(format!("no slot named {s:?}"))),
                None => meta.slots.iter().map(String::as_str).collect(),
            };
            w.write_record(["rollout", "slot", "t", "p1", "p2"])?;
            for (i, t) in tables.iter().enumerate() {
                let tc = t.col("t")?;
                for name in &names {
                    let c = [
                        t.col(&format!("{name}.active"))?,
                        t.col(&format!("{name}.p1"))?,
                        t.col(&format!("{name}.p2"))?,
                    ];
                    for r in t.rows.iter().filter(|r| &r[c[0]] == "1") {
                        w.write_record([&i.to_string(), *name, &r[tc], &r[c[1]], &r[c[2]]])?;
                    }
                }
            }
        }
        PlotKind::Curves => unreachable!(),
    }
    w.flush().map_err(|e| CliError::io(&dest, e))?;
    Ok(dest)
}
