use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::config::RunConfig;
use super::runner::{mean_std, rounds_cell, run_experiment, ExperimentReport};
use crate::data::RoundsToTarget;
use crate::error::{Error, Result};

/// One strategy's line in the comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub label: String,
    pub rounds_to_target: Vec<RoundsToTarget>,
    pub accuracy: Vec<f64>,
    pub f1: Vec<f64>,
    pub mcc: Vec<f64>,
    pub failed_seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareTable {
    pub rounds: usize,
    pub target_accuracy: f64,
    pub rows: Vec<CompareRow>,
}

pub const COMPARE_HEADER: [&str; 10] = [
    "strategy",
    "rounds_to_target_mean",
    "rounds_to_target_std",
    "accuracy_mean",
    "accuracy_std",
    "f1_mean",
    "f1_std",
    "mcc_mean",
    "mcc_std",
    "failed_seeds",
];

fn stat(values: &[f64]) -> (String, String) {
    mean_std(values).map_or((String::new(), String::new()), |(m, s)| (m.to_string(), s.to_string()))
}

impl CompareRow {
    fn from_report(label: String, report: &ExperimentReport) -> Self {
        Self {
            label,
            rounds_to_target: report.rounds_to_target(),
            accuracy: report.final_accuracy(),
            f1: report.final_f1(),
            mcc: report.final_mcc(),
            failed_seeds: report.failures.len(),
        }
    }

    pub fn csv_fields(&self, total_rounds: usize) -> [String; 10] {
        let (rm, rs) = rounds_cell(&self.rounds_to_target, total_rounds);
        let (am, asd) = stat(&self.accuracy);
        let (fm, fs) = stat(&self.f1);
        let (mm, ms) = stat(&self.mcc);
        [
            self.label.clone(),
            rm,
            rs,
            am,
            asd,
            fm,
            fs,
            mm,
            ms,
            self.failed_seeds.to_string(),
        ]
    }
}

impl CompareTable {
    pub fn row(&self, label: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(COMPARE_HEADER)?;
        for row in &self.rows {
            w.write_record(row.csv_fields(self.rounds))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Aligned text table with `mean±std` cells.
    pub fn render_text(&self) -> String {
        let pm = |v: &[f64]| mean_std(v).map_or_else(|| "-".into(), |(m, s)| format!("{m:.4}±{s:.4}"));
        let mut lines: Vec<[String; 5]> = vec![[
            "strategy".into(),
            format!("rounds to {}", self.target_accuracy),
            "accuracy".into(),
            "f1".into(),
            "mcc".into(),
        ]];
        for row in &self.rows {
            let (m, s) = rounds_cell(&row.rounds_to_target, self.rounds);
            let rounds = match s.parse::<f64>() {
                Ok(s) => format!("{:.1}±{s:.1}", m.parse::<f64>().unwrap_or(0.0)),
                Err(_) => m,
            };
            lines.push([row.label.clone(), rounds, pm(&row.accuracy), pm(&row.f1), pm(&row.mcc)]);
        }
        let widths: Vec<usize> = (0..5)
            .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (cell, &w))| {
                    let pad = w - cell.chars().count();
                    if i == 0 {
                        format!("{cell}{}", " ".repeat(pad))
                    } else {
                        format!("{}{cell}", " ".repeat(pad))
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}

/// Fields that must agree across compared configs; the strategy section and
/// client learning rates may differ.
fn check_comparable(configs: &[RunConfig]) -> Result<()> {
    let first = configs
        .first()
        .ok_or_else(|| Error::config("compare", "no configs given"))?;
    for (i, c) in configs.iter().enumerate().skip(1) {
        let mismatch = if c.dataset != first.dataset {
            Some("dataset")
        } else if c.seeds != first.seeds {
            Some("run.seeds")
        } else if c.rounds != first.rounds {
            Some("run.rounds")
        } else if c.clients_per_round != first.clients_per_round {
            Some("run.clients_per_round")
        } else if c.target_accuracy != first.target_accuracy {
            Some("run.target_accuracy")
        } else if c.eval_stride != first.eval_stride {
            Some("run.eval_stride")
        } else if c.model != first.model {
            Some("model")
        } else {
            None
        };
        if let Some(field) = mismatch {
            return Err(Error::config(
                field,
                format!("config {} differs from config 0; compared runs must share it", i),
            ));
        }
    }
    Ok(())
}

/// Run each config into `output_dir/<strategy>/` and tabulate rounds-to-target
/// and final-round metrics. Writes `compare.csv` and `compare.txt`.
pub fn compare_strategies(configs: &[RunConfig], output_dir: &Path) -> Result<(CompareTable, Vec<ExperimentReport>)> {
    check_comparable(configs)?;
    std::fs::create_dir_all(output_dir).map_err(|e| Error::io(output_dir, e))?;
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for config in configs {
        let name = config.strategy.name.as_str();
        let n = seen.entry(name).or_insert(0);
        *n += 1;
        let label = if *n == 1 { name.to_string() } else { format!("{name}-{n}") };
        let mut c = config.clone();
        c.output_dir = output_dir.join(&label);
        let report = run_experiment(&c)?;
        rows.push(CompareRow::from_report(label, &report));
        reports.push(report);
    }
    let table = CompareTable {
        rounds: configs[0].rounds,
        target_accuracy: configs[0].target_accuracy,
        rows,
    };
    table.write_csv(&output_dir.join("compare.csv"))?;
    let txt = output_dir.join("compare.txt");
    std::fs::write(&txt, table.render_text()).map_err(|e| Error::io(&txt, e))?;
    Ok((table, reports))
}
