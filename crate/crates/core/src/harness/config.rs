use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{heldout_count, SyntheticSpec};
use crate::error::{Error, Result};
use crate::fl::{ClientConfig, ClientVariant, LambdaDirection, LambdaSchedule, ServerStrategy};
use crate::optim::OptimizerKind;

/// Where a run's federation comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        num_clients: usize,
        num_classes: usize,
        feature_dim: usize,
        samples_mean: usize,
        #[serde(default)]
        samples_spread: usize,
        dirichlet_alpha: f64,
        class_separation: f64,
        noise_sigma: f64,
        /// Fixed dataset seed; when absent each run seed builds its own dataset.
        seed: Option<u64>,
    },
    /// IDX image/label pair split over clients with label skew.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        num_clients: usize,
        dirichlet_alpha: f64,
        seed: Option<u64>,
    },
    /// A dataset container written by `save_dataset`.
    File { path: PathBuf },
}

impl DatasetConfig {
    pub fn synthetic_spec(&self, run_seed: u64) -> Option<SyntheticSpec> {
        match *self {
            DatasetConfig::Synthetic {
                num_clients,
                num_classes,
                feature_dim,
                samples_mean,
                samples_spread,
                dirichlet_alpha,
                class_separation,
                noise_sigma,
                seed,
            } => Some(SyntheticSpec {
                num_clients,
                num_classes,
                feature_dim,
                samples_mean,
                samples_spread,
                dirichlet_alpha,
                class_separation,
                noise_sigma,
                seed: seed.unwrap_or(run_seed),
            }),
            _ => None,
        }
    }

    /// Client count when it is known without loading anything.
    fn num_clients(&self) -> Option<usize> {
        match *self {
            DatasetConfig::Synthetic { num_clients, .. } | DatasetConfig::Idx { num_clients, .. } => Some(num_clients),
            DatasetConfig::File { .. } => None,
        }
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            DatasetConfig::Synthetic { .. } => {}
            DatasetConfig::Idx { images, labels, .. } => {
                fix(images);
                fix(labels);
            }
            DatasetConfig::File { path } => fix(path),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyName {
    #[serde(rename = "fedavg")]
    FedAvg,
    #[serde(rename = "fedadam")]
    FedAdam,
    #[serde(rename = "fedams")]
    FedAms,
    #[serde(rename = "fedopt-sgd")]
    FedOptSgd,
    #[serde(rename = "fedprox")]
    FedProx,
    #[serde(rename = "moon")]
    Moon,
    #[serde(rename = "fedaws")]
    FedAws,
    #[serde(rename = "turbosvm")]
    TurboSvm,
}

impl StrategyName {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyName::FedAvg => "fedavg",
            StrategyName::FedAdam => "fedadam",
            StrategyName::FedAms => "fedams",
            StrategyName::FedOptSgd => "fedopt-sgd",
            StrategyName::FedProx => "fedprox",
            StrategyName::Moon => "moon",
            StrategyName::FedAws => "fedaws",
            StrategyName::TurboSvm => "turbosvm",
        }
    }

    fn default_server_lr(self) -> Option<f64> {
        match self {
            StrategyName::FedAdam | StrategyName::FedAms => Some(1e-3),
            StrategyName::FedOptSgd => Some(1.0),
            StrategyName::FedAws | StrategyName::TurboSvm => Some(1e-2),
            StrategyName::FedAvg | StrategyName::FedProx | StrategyName::Moon => None,
        }
    }
}

impl fmt::Display for StrategyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrategySection {
    name: Option<StrategyName>,
    server_lr: Option<f64>,
    optimizer: Option<OptimizerKind>,
    mu: Option<f64>,
    moon_coeff: Option<f64>,
    moon_temperature: Option<f64>,
    lambda_initial: Option<f64>,
    lambda_floor: Option<f64>,
    lambda_direction: Option<LambdaDirection>,
    reg_steps: Option<usize>,
    reset_state: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    #[serde(default = "default_hidden")]
    hidden: Vec<usize>,
    #[serde(default = "default_width")]
    embedding_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            embedding_dim: default_width(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClientSection {
    #[serde(default = "one")]
    epochs: usize,
    #[serde(default = "default_batch")]
    batch_size: usize,
    #[serde(default = "default_client_lr")]
    learning_rate: f64,
}

impl Default for ClientSection {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: default_batch(),
            learning_rate: default_client_lr(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    rounds: usize,
    #[serde(default = "default_clients")]
    clients_per_round: usize,
    target_accuracy: f64,
    seeds: Vec<u64>,
    #[serde(default = "default_output")]
    output_dir: PathBuf,
    #[serde(default = "one")]
    eval_stride: usize,
    #[serde(default)]
    record_wall_clock: bool,
    sv_round: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    dataset: DatasetConfig,
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    strategy: StrategySection,
    #[serde(default)]
    client: ClientSection,
    run: RunSection,
}

fn default_hidden() -> Vec<usize> {
    vec![64]
}
fn default_width() -> usize {
    64
}
fn one() -> usize {
    1
}
fn default_batch() -> usize {
    64
}
fn default_client_lr() -> f64 {
    0.1
}
fn default_clients() -> usize {
    8
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
}

/// Resolved strategy: the server rule plus the client objective it pairs with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategySpec {
    pub name: StrategyName,
    pub server: ServerStrategy,
    pub variant: ClientVariant,
}

/// A validated experiment description with every default filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub strategy: StrategySpec,
    pub client: ClientConfig,
    pub rounds: usize,
    pub clients_per_round: usize,
    pub target_accuracy: f64,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub eval_stride: usize,
    pub record_wall_clock: bool,
    /// Round whose support-vector counts the sweep reports; default `min(T, 200)`.
    pub sv_round: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::config("run.rounds", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("run.seeds", "at least one seed is required"));
        }
        if self.clients_per_round == 0 {
            return Err(Error::config("run.clients_per_round", "must be at least 1"));
        }
        if !(self.target_accuracy > 0.0 && self.target_accuracy < 1.0) {
            return Err(Error::config(
                "run.target_accuracy",
                format!("{} is outside (0, 1)", self.target_accuracy),
            ));
        }
        if self.eval_stride == 0 {
            return Err(Error::config("run.eval_stride", "must be at least 1"));
        }
        if self.sv_round == 0 || self.sv_round > self.rounds {
            return Err(Error::config(
                "run.sv_round",
                format!("{} is outside 1..={}", self.sv_round, self.rounds),
            ));
        }
        if self.model.embedding_dim == 0 || self.model.hidden.contains(&0) {
            return Err(Error::config("model", "layer widths must be positive"));
        }
        if let Some(n) = self.dataset.num_clients() {
            let train = n - heldout_count(n);
            if self.clients_per_round > train {
                return Err(Error::config(
                    "run.clients_per_round",
                    format!(
                        "{} exceeds the {train} training clients left by dataset.num_clients = {n}",
                        self.clients_per_round
                    ),
                ));
            }
        }
        if let Some(spec) = self.dataset.synthetic_spec(0) {
            spec.validate()?;
        }
        if let DatasetConfig::Idx {
            num_clients,
            dirichlet_alpha,
            ..
        } = self.dataset
        {
            if num_clients == 0 {
                return Err(Error::config("dataset.num_clients", "must be at least 1"));
            }
            if !(dirichlet_alpha > 0.0 && dirichlet_alpha.is_finite()) {
                return Err(Error::config("dataset.dirichlet_alpha", "must be positive"));
            }
        }
        self.client
            .validate()
            .map_err(|e| Error::config("client", e.to_string()))?;
        self.strategy
            .server
            .validate()
            .map_err(|e| Error::config("strategy", e.to_string()))
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_str(&text, base)
}

/// Parse TOML text; relative paths are taken relative to `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<RunConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::config("<config>", e.to_string().trim_end().to_string()))?;
    let mut dataset = file.dataset;
    dataset.resolve_paths(base);
    let output_dir = if file.run.output_dir.is_relative() {
        base.join(&file.run.output_dir)
    } else {
        file.run.output_dir.clone()
    };
    let strategy = resolve_strategy(&file.strategy, file.run.rounds)?;
    let config = RunConfig {
        dataset,
        model: ModelConfig {
            hidden: file.model.hidden,
            embedding_dim: file.model.embedding_dim,
        },
        strategy,
        client: ClientConfig {
            epochs: file.client.epochs,
            batch_size: file.client.batch_size,
            learning_rate: file.client.learning_rate,
            variant: strategy.variant,
        },
        rounds: file.run.rounds,
        clients_per_round: file.run.clients_per_round,
        target_accuracy: file.run.target_accuracy,
        seeds: file.run.seeds,
        output_dir,
        eval_stride: file.run.eval_stride,
        record_wall_clock: file.run.record_wall_clock,
        sv_round: file.run.sv_round.unwrap_or(file.run.rounds.min(200)),
    };
    config.validate()?;
    Ok(config)
}

fn resolve_strategy(s: &StrategySection, rounds: usize) -> Result<StrategySpec> {
    let name = s
        .name
        .ok_or_else(|| Error::config("strategy.name", "missing strategy name"))?;
    let set: [(&str, bool); 10] = [
        ("server_lr", s.server_lr.is_some()),
        ("optimizer", s.optimizer.is_some()),
        ("mu", s.mu.is_some()),
        ("moon_coeff", s.moon_coeff.is_some()),
        ("moon_temperature", s.moon_temperature.is_some()),
        ("lambda_initial", s.lambda_initial.is_some()),
        ("lambda_floor", s.lambda_floor.is_some()),
        ("lambda_direction", s.lambda_direction.is_some()),
        ("reg_steps", s.reg_steps.is_some()),
        ("reset_state", s.reset_state.is_some()),
    ];
    let allowed: &[&str] = match name {
        StrategyName::FedAvg => &[],
        StrategyName::FedAdam | StrategyName::FedAms | StrategyName::FedOptSgd => &["server_lr"],
        StrategyName::FedProx => &["mu"],
        StrategyName::Moon => &["moon_coeff", "moon_temperature"],
        StrategyName::FedAws => &["server_lr", "optimizer"],
        StrategyName::TurboSvm => &[
            "server_lr",
            "optimizer",
            "lambda_initial",
            "lambda_floor",
            "lambda_direction",
            "reg_steps",
            "reset_state",
        ],
    };
    if let Some((key, _)) = set.iter().find(|(k, present)| *present && !allowed.contains(k)) {
        return Err(Error::config(
            format!("strategy.{key}"),
            format!("not used by strategy `{name}`"),
        ));
    }

    let server_lr = s.server_lr.or(name.default_server_lr()).unwrap_or(0.0);
    let optimizer = s.optimizer.unwrap_or(OptimizerKind::Adam);
    let server = match name {
        StrategyName::FedAvg | StrategyName::FedProx | StrategyName::Moon => ServerStrategy::FedAvg,
        StrategyName::FedAdam => ServerStrategy::FedOpt {
            optimizer: OptimizerKind::Adam,
            server_lr,
        },
        StrategyName::FedAms => ServerStrategy::FedOpt {
            optimizer: OptimizerKind::AmsGrad,
            server_lr,
        },
        StrategyName::FedOptSgd => ServerStrategy::FedOpt {
            optimizer: OptimizerKind::Sgd,
            server_lr,
        },
        StrategyName::FedAws => ServerStrategy::FedAws { optimizer, server_lr },
        StrategyName::TurboSvm => ServerStrategy::TurboSvm {
            optimizer,
            server_lr,
            lambda: LambdaSchedule {
                initial: s.lambda_initial.unwrap_or(1.0),
                floor: s.lambda_floor.unwrap_or(0.01),
                total_rounds: rounds.max(1),
                direction: s.lambda_direction.unwrap_or_default(),
            },
            reg_steps: s.reg_steps.unwrap_or(1),
            reset_state: s.reset_state.unwrap_or(false),
        },
    };
    let variant = match name {
        StrategyName::FedProx => ClientVariant::Prox {
            mu: s.mu.unwrap_or(0.01),
        },
        StrategyName::Moon => ClientVariant::Moon {
            coeff: s.moon_coeff.unwrap_or(1.0),
            temperature: s.moon_temperature.unwrap_or(0.5),
        },
        _ => ClientVariant::Vanilla,
    };
    Ok(StrategySpec { name, server, variant })
}
