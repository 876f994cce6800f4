use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::aggregate::{fedavg_aggregate, fedopt_step, pseudo_gradient};
use super::client::{client_update, ClientConfig, ClientVariant, LocalUpdate};
use super::fedaws::fedaws_regularize;
use super::turbosvm::{
    class_samples_from_models, lambda_value, turbosvm_maxmargin_regularize, turbosvm_selective_aggregate,
    LambdaSchedule,
};
use crate::data::ClientData;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::optim::{OptimizerKind, OptimizerState};
use crate::svm::fit_ovo;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ServerStrategy {
    /// Weighted average of the participating client models.
    FedAvg,
    /// Server optimizer on the pseudo-gradient (Adam: FedAdam, AMSGrad: FedAMS).
    FedOpt { optimizer: OptimizerKind, server_lr: f64 },
    /// Averaging followed by one optimizer step on the cosine spread penalty.
    FedAws { optimizer: OptimizerKind, server_lr: f64 },
    /// Averaged encoder; logit matrix from support-vector aggregation plus
    /// `reg_steps` optimizer steps on the projected spread loss.
    TurboSvm {
        optimizer: OptimizerKind,
        server_lr: f64,
        lambda: LambdaSchedule,
        reg_steps: usize,
        /// Fresh optimizer moments every round instead of persistent ones.
        reset_state: bool,
    },
}

impl ServerStrategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ServerStrategy::FedAvg => Ok(()),
            ServerStrategy::FedOpt { server_lr, .. } | ServerStrategy::FedAws { server_lr, .. } => positive_lr(server_lr),
            ServerStrategy::TurboSvm { server_lr, lambda, .. } => {
                positive_lr(server_lr)?;
                lambda.validate()
            }
        }
    }
}

fn positive_lr(lr: f64) -> Result<()> {
    if lr > 0.0 && lr.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("server learning rate {lr} must be positive")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub round: usize,
    /// Sampled client ids, ascending.
    pub participants: Vec<usize>,
    /// Mean over participants of their mean local objective.
    pub train_loss: f64,
    pub lambda: Option<f64>,
    pub sv_counts: Option<Vec<usize>>,
    pub spread_trace: Option<Vec<f64>>,
    pub svm_diagnostics: Option<String>,
}

/// `c` distinct ids drawn uniformly from `pool`, returned ascending.
pub fn sample_clients<R: Rng + ?Sized>(pool: &[usize], c: usize, rng: &mut R) -> Result<Vec<usize>> {
    if c == 0 || c > pool.len() {
        return Err(Error::invalid(format!(
            "cannot sample {c} clients from {} available",
            pool.len()
        )));
    }
    let mut picked: Vec<usize> = index::sample(rng, pool.len(), c).into_iter().map(|i| pool[i]).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Server-side state carried across rounds: the global model, the server
/// optimizer, and each client's last local model (for MOON).
#[derive(Debug, Clone)]
pub struct Federation {
    global: Model,
    strategy: ServerStrategy,
    client_config: ClientConfig,
    server_state: Option<OptimizerState>,
    previous: Vec<Option<Model>>,
}

impl Federation {
    pub fn new(global: Model, strategy: ServerStrategy, client_config: ClientConfig, num_clients: usize) -> Result<Self> {
        strategy.validate()?;
        client_config.validate()?;
        let server_state = match strategy {
            ServerStrategy::FedAvg => None,
            ServerStrategy::FedOpt { optimizer, server_lr } => {
                Some(OptimizerState::new(optimizer, server_lr, &[global.param_count()])?)
            }
            ServerStrategy::FedAws { optimizer, server_lr } | ServerStrategy::TurboSvm { optimizer, server_lr, .. } => {
                Some(OptimizerState::new(optimizer, server_lr, global.logit_matrix().shape())?)
            }
        };
        Ok(Self {
            global,
            strategy,
            client_config,
            server_state,
            previous: vec![None; num_clients],
        })
    }

    pub fn global(&self) -> &Model {
        &self.global
    }

    pub fn into_global(self) -> Model {
        self.global
    }

    pub fn strategy(&self) -> &ServerStrategy {
        &self.strategy
    }

    pub fn server_state(&self) -> Option<&OptimizerState> {
        self.server_state.as_ref()
    }

    /// One round: sample `clients_per_round` ids from `pool`, train them in
    /// parallel from the current global model, aggregate in id order.
    pub fn run_round<R: Rng + ?Sized>(
        &mut self,
        round: usize,
        clients: &[ClientData],
        pool: &[usize],
        clients_per_round: usize,
        rng: &mut R,
    ) -> Result<RoundOutcome> {
        self.round_inner(round, clients, pool, clients_per_round, rng)
            .map_err(|e| Error::Round {
                round,
                source: Box::new(e),
            })
    }

    fn round_inner<R: Rng + ?Sized>(
        &mut self,
        round: usize,
        clients: &[ClientData],
        pool: &[usize],
        clients_per_round: usize,
        rng: &mut R,
    ) -> Result<RoundOutcome> {
        if let Some(&bad) = pool.iter().find(|&&id| id >= clients.len()) {
            return Err(Error::invalid(format!("client id {bad} out of range")));
        }
        if self.previous.len() < clients.len() {
            self.previous.resize(clients.len(), None);
        }
        let participants = sample_clients(pool, clients_per_round, rng)?;
        let seeds: Vec<u64> = participants.iter().map(|_| rng.gen()).collect();

        let global = &self.global;
        let config = &self.client_config;
        let previous = &self.previous;
        let updates: Vec<Result<LocalUpdate>> = participants
            .par_iter()
            .zip(&seeds)
            .map(|(&id, &seed)| {
                let mut client_rng = ChaCha8Rng::seed_from_u64(seed);
                client_update(global, &clients[id], config, previous[id].as_ref(), &mut client_rng).map_err(|e| {
                    Error::Client {
                        client: id,
                        source: Box::new(e),
                    }
                })
            })
            .collect();
        let updates: Vec<LocalUpdate> = updates.into_iter().collect::<Result<_>>()?;

        let sizes: Vec<f64> = participants.iter().map(|&id| clients[id].len() as f64).collect();
        let train_loss = updates.iter().map(|u| u.mean_loss).sum::<f64>() / updates.len() as f64;
        let models: Vec<Model> = updates.into_iter().map(|u| u.model).collect();

        let averaged = fedavg_aggregate(&models, &sizes)?;
        let delta = pseudo_gradient(&self.global, &averaged)?;
        let mut outcome = RoundOutcome {
            round,
            participants: participants.clone(),
            train_loss,
            lambda: None,
            sv_counts: None,
            spread_trace: None,
            svm_diagnostics: None,
        };

        let next = match self.strategy {
            ServerStrategy::FedAvg => apply_delta(&self.global, &delta)?,
            ServerStrategy::FedOpt { .. } => {
                let state = self.server_state.as_mut().expect("fedopt state");
                fedopt_step(&self.global, &delta, state)?
            }
            ServerStrategy::FedAws { .. } => {
                let mut next = apply_delta(&self.global, &delta)?;
                let state = self.server_state.as_mut().expect("fedaws state");
                let w = fedaws_regularize(next.logit_matrix(), state)?;
                next.set_logit_matrix(w)?;
                next
            }
            ServerStrategy::TurboSvm {
                lambda,
                reg_steps,
                reset_state,
                ..
            } => {
                let mut next = apply_delta(&self.global, &delta)?;
                let lam = lambda_value(&lambda, round)?;
                let svm = fit_ovo(class_samples_from_models(&models, &sizes)?, lam)?;
                let selected = turbosvm_selective_aggregate(&svm)?;
                let state = self.server_state.as_mut().expect("turbosvm state");
                if reset_state {
                    state.reset();
                }
                let (w, trace) = turbosvm_maxmargin_regularize(&selected, &svm, state, reg_steps)?;
                next.set_logit_matrix(w)?;
                outcome.lambda = Some(lam);
                outcome.sv_counts = Some(svm.support_vector_counts()?);
                outcome.spread_trace = Some(trace);
                outcome.svm_diagnostics = Some(svm.diagnostics_table());
                next
            }
        };

        if matches!(self.client_config.variant, ClientVariant::Moon { .. }) {
            for (&id, m) in participants.iter().zip(models) {
                self.previous[id] = Some(m);
            }
        }
        self.global = next;
        Ok(outcome)
    }
}

/// `θ_G + Δ`, the averaging update written in pseudo-gradient form so that
/// it coincides bit for bit with a unit-rate SGD server step on `−Δ`.
fn apply_delta(global: &Model, delta: &crate::tensor::Tensor) -> Result<Model> {
    let next = global.flatten_params().add(delta)?;
    Model::unflatten_params(global, &next)
}
