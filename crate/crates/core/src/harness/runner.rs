use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;
use std::time::Instant;

use log::{error, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{DatasetConfig, RunConfig};
use crate::data::{
    accuracy, confusion, generate_synthetic, load_dataset, load_idx, macro_f1, mcc, partition_by_client,
    FederatedDataset, RoundsToTarget,
};
use crate::error::{Error, Result};
use crate::fl::Federation;
use crate::model::Model;

/// Column order of `rounds.csv`.
pub const ROUNDS_HEADER: [&str; 10] = [
    "seed", "round", "strategy", "loss", "accuracy", "f1", "mcc", "lambda", "sv_counts", "ms",
];

/// One row of `rounds.csv`. Metrics are absent on rounds skipped by the
/// evaluation stride and when the federation has no held-out clients.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub seed: u64,
    /// 1-based.
    pub round: usize,
    pub strategy: String,
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub mcc: Option<f64>,
    pub lambda: Option<f64>,
    pub sv_counts: Option<Vec<usize>>,
    pub ms: Option<f64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RoundRecord {
    pub fn csv_fields(&self) -> [String; 10] {
        [
            self.seed.to_string(),
            self.round.to_string(),
            self.strategy.clone(),
            self.loss.to_string(),
            opt(self.accuracy),
            opt(self.f1),
            opt(self.mcc),
            opt(self.lambda),
            self.sv_counts
                .as_ref()
                .map(|v| v.iter().map(usize::to_string).collect::<Vec<_>>().join(";"))
                .unwrap_or_default(),
            opt(self.ms),
        ]
    }
}

/// Everything one seed produced.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<RoundRecord>,
    pub final_model: Model,
}

impl SeedRun {
    /// First evaluated round whose accuracy reaches `target`.
    pub fn rounds_to_target(&self, target: f64) -> RoundsToTarget {
        self.records
            .iter()
            .find(|r| r.accuracy.is_some_and(|a| a >= target))
            .map_or(RoundsToTarget::NotReached, |r| RoundsToTarget::Reached(r.round))
    }

    pub fn final_record(&self) -> &RoundRecord {
        self.records.last().expect("a run has at least one round")
    }
}

pub fn build_dataset(config: &RunConfig, seed: u64) -> Result<FederatedDataset> {
    if let Some(spec) = config.dataset.synthetic_spec(seed) {
        return generate_synthetic(&spec);
    }
    let ds = match &config.dataset {
        DatasetConfig::Idx {
            images,
            labels,
            num_clients,
            dirichlet_alpha,
            seed: ds_seed,
        } => partition_by_client(
            &load_idx(images, labels)?,
            *num_clients,
            *dirichlet_alpha,
            ds_seed.unwrap_or(seed),
        )?,
        DatasetConfig::File { path } => load_dataset(path)?.0,
        DatasetConfig::Synthetic { .. } => unreachable!("handled above"),
    };
    if config.clients_per_round > ds.train_clients().len() {
        return Err(Error::config(
            "run.clients_per_round",
            format!(
                "{} exceeds the {} training clients of the dataset",
                config.clients_per_round,
                ds.train_clients().len()
            ),
        ));
    }
    Ok(ds)
}

/// Model initialization and client sampling draw from separate streams of
/// the run seed, so every strategy sees the same start and the same clients.
fn seed_streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut init = ChaCha8Rng::seed_from_u64(seed);
    init.set_stream(1);
    let mut rounds = ChaCha8Rng::seed_from_u64(seed);
    rounds.set_stream(2);
    (init, rounds)
}

/// Train one seed for `config.rounds` rounds, handing every record to `sink`
/// as soon as it exists.
pub fn run_seed(config: &RunConfig, seed: u64, sink: &mut dyn FnMut(&RoundRecord) -> Result<()>) -> Result<SeedRun> {
    let dataset = build_dataset(config, seed)?;
    let (mut init_rng, mut round_rng) = seed_streams(seed);
    let model = Model::init(
        dataset.feature_dim(),
        &config.model.hidden,
        config.model.embedding_dim,
        dataset.num_classes(),
        &mut init_rng,
    )?;
    let mut fed = Federation::new(model, config.strategy.server, config.client, dataset.num_clients())?;
    let evaluate = !dataset.heldout_clients().is_empty();
    let mut records = Vec::with_capacity(config.rounds);

    for t in 0..config.rounds {
        let started = Instant::now();
        let outcome = fed.run_round(
            t,
            dataset.clients(),
            dataset.train_clients(),
            config.clients_per_round,
            &mut round_rng,
        )?;
        let round = t + 1;
        let due = round % config.eval_stride == 0 || round == config.rounds;
        let (acc, f1, m) = if evaluate && due {
            let cm = confusion(fed.global(), &dataset)?;
            (Some(accuracy(&cm)?), Some(macro_f1(&cm)?), Some(mcc(&cm)?))
        } else {
            (None, None, None)
        };
        let record = RoundRecord {
            seed,
            round,
            strategy: config.strategy.name.to_string(),
            loss: outcome.train_loss,
            accuracy: acc,
            f1,
            mcc: m,
            lambda: outcome.lambda,
            sv_counts: outcome.sv_counts,
            ms: config
                .record_wall_clock
                .then(|| started.elapsed().as_secs_f64() * 1e3),
        };
        sink(&record)?;
        records.push(record);
    }
    Ok(SeedRun {
        seed,
        records,
        final_model: fed.into_global(),
    })
}

#[derive(Debug)]
pub struct ExperimentReport {
    pub config: RunConfig,
    pub runs: Vec<SeedRun>,
    /// Seeds that aborted, with the error message.
    pub failures: Vec<(u64, String)>,
}

impl ExperimentReport {
    pub fn rounds_to_target(&self) -> Vec<RoundsToTarget> {
        self.runs
            .iter()
            .map(|r| r.rounds_to_target(self.config.target_accuracy))
            .collect()
    }

    fn final_metric(&self, f: impl Fn(&RoundRecord) -> Option<f64>) -> Vec<f64> {
        self.runs.iter().filter_map(|r| f(r.final_record())).collect()
    }

    pub fn final_accuracy(&self) -> Vec<f64> {
        self.final_metric(|r| r.accuracy)
    }

    pub fn final_f1(&self) -> Vec<f64> {
        self.final_metric(|r| r.f1)
    }

    pub fn final_mcc(&self) -> Vec<f64> {
        self.final_metric(|r| r.mcc)
    }

    pub fn final_loss(&self) -> Vec<f64> {
        self.final_metric(|r| Some(r.loss))
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

/// Lower median, with "not reached" ordered after every reached count.
pub fn median_rounds(values: &[RoundsToTarget]) -> Option<RoundsToTarget> {
    let mut v = values.to_vec();
    v.sort_unstable();
    v.get(v.len().saturating_sub(1) / 2).copied()
}

/// Rounds-to-target over seeds: `(mean, std)` text, or `">T"` if any seed missed.
pub fn rounds_cell(values: &[RoundsToTarget], total_rounds: usize) -> (String, String) {
    let reached: Option<Vec<f64>> = values.iter().map(|r| r.reached().map(|v| v as f64)).collect();
    match reached.as_deref().and_then(mean_std) {
        Some((m, s)) => (format!("{m}"), format!("{s}")),
        None => (RoundsToTarget::NotReached.display(total_rounds).to_string(), String::new()),
    }
}

fn stat_cells(values: &[f64]) -> (String, String) {
    mean_std(values).map_or((String::new(), String::new()), |(m, s)| (m.to_string(), s.to_string()))
}

fn pm(values: &[f64]) -> String {
    mean_std(values).map_or_else(|| "-".into(), |(m, s)| format!("{m:.4}±{s:.4}"))
}

/// Run every seed of `config`, streaming `rounds.csv` and writing
/// `summary.csv` / `summary.txt` into the output directory. A failing seed is
/// logged and recorded; the remaining seeds still run.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let dir = &config.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let rounds_path = dir.join("rounds.csv");
    let file = File::create(&rounds_path).map_err(|e| Error::io(&rounds_path, e))?;
    let mut csv = csv::Writer::from_writer(file);
    csv.write_record(ROUNDS_HEADER)?;
    csv.flush().map_err(|e| Error::io(&rounds_path, e))?;

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for &seed in &config.seeds {
        info!("{}: seed {seed}", config.strategy.name);
        let mut sink = |r: &RoundRecord| -> Result<()> {
            csv.write_record(r.csv_fields())?;
            csv.flush().map_err(|e| Error::io(&rounds_path, e))
        };
        match run_seed(config, seed, &mut sink) {
            Ok(run) => runs.push(run),
            Err(e @ (Error::Io { .. } | Error::Csv(_))) => return Err(e),
            Err(e) => {
                error!("{}: seed {seed} failed: {e}", config.strategy.name);
                failures.push((seed, e.to_string()));
            }
        }
    }
    let report = ExperimentReport {
        config: config.clone(),
        runs,
        failures,
    };
    write_summary(&report, dir)?;
    Ok(report)
}

fn write_summary(report: &ExperimentReport, dir: &Path) -> Result<()> {
    let t = report.config.rounds;
    let target = report.config.target_accuracy;
    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["seed", "rounds_to_target", "loss", "accuracy", "f1", "mcc"])?;
    for run in &report.runs {
        let last = run.final_record();
        w.write_record([
            run.seed.to_string(),
            run.rounds_to_target(target).display(t).to_string(),
            last.loss.to_string(),
            opt(last.accuracy),
            opt(last.f1),
            opt(last.mcc),
        ])?;
    }
    let rtt = report.rounds_to_target();
    let cols = [
        rounds_cell(&rtt, t),
        stat_cells(&report.final_loss()),
        stat_cells(&report.final_accuracy()),
        stat_cells(&report.final_f1()),
        stat_cells(&report.final_mcc()),
    ];
    let mut mean = vec!["mean".to_string()];
    let mut std = vec!["std".to_string()];
    for (m, s) in cols {
        mean.push(m);
        std.push(s);
    }
    w.write_record(&mean)?;
    w.write_record(&std)?;
    w.flush().map_err(|e| Error::io(&path, e))?;

    let mut text = String::new();
    let _ = writeln!(
        text,
        "strategy {}  rounds {t}  target accuracy {target}  seeds {}",
        report.config.strategy.name,
        report.runs.len()
    );
    let _ = writeln!(text, "{:>8}  {:>8}  {:>10}  {:>8}  {:>8}  {:>8}", "seed", "rounds", "loss", "acc", "f1", "mcc");
    for run in &report.runs {
        let last = run.final_record();
        let f = |v: Option<f64>| v.map_or_else(|| "-".into(), |x| format!("{x:.4}"));
        let _ = writeln!(
            text,
            "{:>8}  {:>8}  {:>10.4}  {:>8}  {:>8}  {:>8}",
            run.seed,
            run.rounds_to_target(target).display(t).to_string(),
            last.loss,
            f(last.accuracy),
            f(last.f1),
            f(last.mcc)
        );
    }
    let (rm, rs) = rounds_cell(&rtt, t);
    let rounds = if rs.is_empty() {
        rm
    } else {
        format!("{:.1}±{:.1}", rm.parse::<f64>().unwrap_or(0.0), rs.parse::<f64>().unwrap_or(0.0))
    };
    let _ = writeln!(
        text,
        "mean±std  rounds {rounds}  acc {}  f1 {}  mcc {}",
        pm(&report.final_accuracy()),
        pm(&report.final_f1()),
        pm(&report.final_mcc())
    );
    for (seed, err) in &report.failures {
        let _ = writeln!(text, "seed {seed} failed: {err}");
    }
    let path = dir.join("summary.txt");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
