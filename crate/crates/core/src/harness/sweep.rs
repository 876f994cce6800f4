use std::path::Path;

use super::config::RunConfig;
use super::runner::{mean_std, run_experiment};
use crate::error::{Error, Result};
use crate::fl::ServerStrategy;

/// Support vectors of class 1 at the checkpoint round, per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub embedding_dim: usize,
    pub clients_per_round: usize,
    pub round: usize,
    pub seeds: Vec<u64>,
    pub sv_counts: Vec<usize>,
    pub f1: Vec<f64>,
    pub failed_seeds: usize,
}

impl SweepCell {
    pub fn mean_sv_count(&self) -> Option<f64> {
        let v: Vec<f64> = self.sv_counts.iter().map(|&c| c as f64).collect();
        mean_std(&v).map(|(m, _)| m)
    }

    pub fn mean_f1(&self) -> Option<f64> {
        mean_std(&self.f1).map(|(m, _)| m)
    }
}

/// Class whose support vectors are reported.
pub const SWEEP_CLASS: usize = 1;

/// Grid over embedding sizes and clients per round. Each cell is a full run
/// written to `output_dir/d{d}-c{C}/`; the grid goes to `sweep.csv` (means
/// over seeds) and `sweep_runs.csv` (one row per seed).
pub fn sv_sweep(base: &RunConfig, dims: &[usize], clients: &[usize], output_dir: &Path) -> Result<Vec<SweepCell>> {
    if !matches!(base.strategy.server, ServerStrategy::TurboSvm { .. }) {
        return Err(Error::config("strategy.name", "the support-vector sweep needs `turbosvm`"));
    }
    if dims.is_empty() || clients.is_empty() {
        return Err(Error::config("sweep", "need at least one embedding size and one client count"));
    }
    std::fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let mut cells = Vec::new();
    for &d in dims {
        for &c in clients {
            let mut config = base.clone();
            config.model.embedding_dim = d;
            config.clients_per_round = c;
            config.output_dir = output_dir.join(format!("d{d}-c{c}"));
            let report = run_experiment(&config)?;
            let round = config.sv_round;
            let mut cell = SweepCell {
                embedding_dim: d,
                clients_per_round: c,
                round,
                seeds: Vec::new(),
                sv_counts: Vec::new(),
                f1: Vec::new(),
                failed_seeds: report.failures.len(),
            };
            for run in &report.runs {
                let count = run.records[round - 1]
                    .sv_counts
                    .as_ref()
                    .and_then(|v| v.get(SWEEP_CLASS).copied())
                    .ok_or_else(|| Error::invalid("turbosvm round without support-vector counts"))?;
                cell.seeds.push(run.seed);
                cell.sv_counts.push(count);
                if let Some(f1) = run.final_record().f1 {
                    cell.f1.push(f1);
                }
            }
            cells.push(cell);
        }
    }

    let path = output_dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["d", "C", "round", "sv_count", "f1"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for cell in &cells {
        w.write_record([
            cell.embedding_dim.to_string(),
            cell.clients_per_round.to_string(),
            cell.round.to_string(),
            opt(cell.mean_sv_count()),
            opt(cell.mean_f1()),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = output_dir.join("sweep_runs.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["seed", "d", "C", "round", "sv_count", "f1"])?;
    for cell in &cells {
        for (i, (&seed, &count)) in cell.seeds.iter().zip(&cell.sv_counts).enumerate() {
            w.write_record([
                seed.to_string(),
                cell.embedding_dim.to_string(),
                cell.clients_per_round.to_string(),
                cell.round.to_string(),
                count.to_string(),
                opt(cell.f1.get(i).copied()),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(cells)
}
