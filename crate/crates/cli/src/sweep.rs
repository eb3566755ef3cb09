//! Parameter sweeps: each point runs in its own subdirectory, at most
//! `parallelism` at a time, and a failed point never stops the others.

use std::path::Path;

use nematicon::analysis::{emit_plot_data, CsvTable, PlotData};
use nematicon::groundstate::{minimize_charge, ChargeMinimum, FlowOptions, GroundState};
use nematicon::io::{sha256_hex, RunManifest, TaskState, TaskStatus};
use nematicon::nehari::{minimize_nehari, NehariOptions};
use nematicon::{MediumParams, RadialGrid};
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::{save_ground, write_json, CODE_VERSION};
use crate::config::{SweepConfig, SweepKind};
use crate::CliError;

/// Everything that determines one point's result.
#[derive(Clone, Debug, Serialize)]
pub struct Point {
    pub kind: SweepKind,
    pub value: f64,
    pub r_max: f64,
    pub n: usize,
    pub lambda: f64,
    pub q: f64,
}

impl Point {
    /// `NNN-hhhhhhhh`: zero-padded index and a hash of the point parameters.
    pub fn dir_name(&self, index: usize, width: usize) -> String {
        let json = serde_json::to_vec(self).expect("point serializes");
        format!("{index:0width$}-{}", &sha256_hex(&json)[..8])
    }

    fn solve(&self) -> Result<GroundState, String> {
        let grid = RadialGrid::new(self.r_max, self.n).map_err(|e| e.to_string())?;
        let p = MediumParams::new(self.lambda, self.q).map_err(|e| e.to_string())?;
        match self.kind {
            SweepKind::Charge => match minimize_charge(&grid, self.value, &p, &FlowOptions::default()) {
                Ok(ChargeMinimum::Ground(gs)) => Ok(gs),
                Ok(ChargeMinimum::NoGroundState(d)) => Err(format!("no ground state: {:?}", d.reason)),
                Err(e) => Err(e.to_string()),
            },
            SweepKind::Sigma => minimize_nehari(&grid, self.value, &p, &NehariOptions::default()).map_err(|e| e.to_string()),
        }
    }
}

fn run_point(point: &Point, dir: &Path) -> (TaskStatus, Option<GroundState>) {
    let name = dir.file_name().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
    let result = std::fs::create_dir_all(dir)
        .map_err(|e| e.to_string())
        .and_then(|_| write_json(&dir.join("point.json"), point).map_err(|e| e.to_string()))
        .and_then(|_| point.solve())
        .and_then(|gs| save_ground(dir, &gs).map(|_| gs).map_err(|e| e.to_string()));
    match result {
        Ok(gs) => (
            TaskStatus {
                name,
                state: TaskState::Ok,
                message: None,
            },
            Some(gs),
        ),
        Err(message) => (
            TaskStatus {
                name,
                state: TaskState::Failed,
                message: Some(message),
            },
            None,
        ),
    }
}

/// Run every point of `cfg` under `out` and write the manifest.
pub fn orchestrate(cfg: &SweepConfig, out: &Path) -> Result<RunManifest, CliError> {
    let started = nematicon::io::unix_now();
    let points: Vec<Point> = cfg
        .values
        .iter()
        .map(|&value| Point {
            kind: cfg.kind,
            value,
            r_max: cfg.r_max,
            n: cfg.n,
            lambda: cfg.lambda,
            q: cfg.q,
        })
        .collect();
    let width = points.len().to_string().len().max(3);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {} workers: {e}", cfg.parallelism)))?;
    let outcomes: Vec<(TaskStatus, Option<GroundState>)> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(i, p)| run_point(p, &out.join(p.dir_name(i, width))))
            .collect()
    });

    let mut table = CsvTable::new(["index", "value", "a", "sigma", "energy", "action", "residual"]);
    let mut plot = PlotData::default();
    for (i, ((_, gs), p)) in outcomes.iter().zip(&points).enumerate() {
        let row = match gs {
            Some(g) => vec![i as f64, p.value, g.a, g.sigma, g.energy(), g.report.action, g.residual],
            None => vec![i as f64, p.value, f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN],
        };
        table.push(row)?;
        let (a, s, j, c) = gs
            .as_ref()
            .map(|g| (g.a, g.sigma, g.energy(), g.report.action))
            .unwrap_or((f64::NAN, f64::NAN, f64::NAN, f64::NAN));
        match cfg.kind {
            SweepKind::Charge => plot.charge_curve.push((p.value, j, s)),
            SweepKind::Sigma => plot.frequency_curve.push((p.value, c, a)),
        }
    }
    table.write(&out.join("sweep.csv"))?;
    emit_plot_data(out, &plot)?;

    let manifest = RunManifest {
        config: serde_json::to_value(cfg).map_err(nematicon::Error::from)?,
        code_version: CODE_VERSION.to_string(),
        started,
        finished: started,
        tasks: outcomes.into_iter().map(|(t, _)| t).collect(),
        files: Vec::new(),
    };
    Ok(manifest.finalize(out)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_names_are_padded_and_parameter_dependent() {
        let p = Point {
            kind: SweepKind::Sigma,
            value: 0.3,
            r_max: 40.0,
            n: 512,
            lambda: 1.0,
            q: 1.0,
        };
        let a = p.dir_name(7, 3);
        assert!(a.starts_with("007-") && a.len() == 12);
        assert_eq!(a, p.dir_name(7, 3));
        let q = Point { value: 0.31, ..p.clone() };
        assert_ne!(a[4..], q.dir_name(7, 3)[4..]);
    }
}
