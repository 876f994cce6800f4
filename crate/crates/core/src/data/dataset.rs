use rand::seq::SliceRandom;
use rand::Rng;

use super::client::ClientData;
use crate::error::{Error, Result};
use crate::model::Batch;
use crate::tensor::Tensor;

/// Clients plus a client-level train/held-out split.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedDataset {
    clients: Vec<ClientData>,
    num_classes: usize,
    feature_dim: usize,
    train: Vec<usize>,
    heldout: Vec<usize>,
}

impl FederatedDataset {
    pub fn new(
        clients: Vec<ClientData>,
        num_classes: usize,
        feature_dim: usize,
        mut train: Vec<usize>,
        mut heldout: Vec<usize>,
    ) -> Result<Self> {
        if clients.is_empty() || num_classes == 0 || feature_dim == 0 {
            return Err(Error::invalid("dataset needs clients, classes and features"));
        }
        train.sort_unstable();
        heldout.sort_unstable();
        let mut seen = vec![false; clients.len()];
        for &id in train.iter().chain(&heldout) {
            match seen.get_mut(id) {
                Some(s) if !*s => *s = true,
                Some(_) => return Err(Error::invalid(format!("client {id} listed twice"))),
                None => return Err(Error::invalid(format!("client id {id} out of range"))),
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("client {missing} is neither train nor held-out")));
        }
        for (id, c) in clients.iter().enumerate() {
            if !c.is_empty() && c.feature_dim() != feature_dim {
                return Err(Error::ShapeMismatch {
                    expected: vec![feature_dim],
                    found: vec![c.feature_dim()],
                });
            }
            if let Some(&bad) = c.labels().iter().find(|&&y| y >= num_classes) {
                return Err(Error::invalid(format!("client {id}: label {bad} >= {num_classes}")));
            }
        }
        if let Some(&empty) = train.iter().find(|&&id| clients[id].is_empty()) {
            return Err(Error::invalid(format!("train client {empty} has no samples")));
        }
        Ok(Self {
            clients,
            num_classes,
            feature_dim,
            train,
            heldout,
        })
    }

    pub fn clients(&self) -> &[ClientData] {
        &self.clients
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn train_clients(&self) -> &[usize] {
        &self.train
    }

    pub fn heldout_clients(&self) -> &[usize] {
        &self.heldout
    }

    pub fn num_samples(&self) -> usize {
        self.clients.iter().map(ClientData::len).sum()
    }

    /// All held-out samples stacked in client order.
    pub fn heldout_pool(&self) -> Result<Batch> {
        pool(&self.clients, &self.heldout, self.feature_dim)
    }

    /// All training-client samples stacked in client order.
    pub fn train_pool(&self) -> Result<Batch> {
        pool(&self.clients, &self.train, self.feature_dim)
    }
}

fn pool(clients: &[ClientData], ids: &[usize], p: usize) -> Result<Batch> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for &id in ids {
        data.extend_from_slice(clients[id].features().data());
        labels.extend_from_slice(clients[id].labels());
    }
    if labels.is_empty() {
        return Err(Error::invalid("empty sample pool"));
    }
    Batch::new(Tensor::matrix(labels.len(), p, data)?, labels)
}

/// Held-out clients for a federation of `n`: 10% rounded, at least one and
/// leaving at least one for training. A single client is all train.
pub fn heldout_count(n: usize) -> usize {
    if n < 2 {
        return 0;
    }
    ((n as f64 * 0.1).round() as usize).clamp(1, n - 1)
}

/// Seeded shuffle of `0..n` into (train, held-out), both ascending.
pub fn split_clients<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let h = heldout_count(n);
    let mut heldout = ids[..h].to_vec();
    let mut train = ids[h..].to_vec();
    heldout.sort_unstable();
    train.sort_unstable();
    (train, heldout)
}
