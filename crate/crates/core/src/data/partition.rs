use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::client::ClientData;
use super::dataset::{split_clients, FederatedDataset};
use super::synthetic::sample_dirichlet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Label-skewed split of a flat sample list over `num_clients` clients.
///
/// Each class is shuffled and cut according to its own Dirichlet(α) draw
/// over clients. Clients left empty take one sample from the currently
/// largest client, so every sample is used exactly once.
pub fn partition_by_client(
    samples: &[(Tensor, usize)],
    num_clients: usize,
    dirichlet_alpha: f64,
    seed: u64,
) -> Result<FederatedDataset> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples to partition"));
    }
    if num_clients == 0 || samples.len() < num_clients {
        return Err(Error::invalid(format!(
            "{} samples cannot fill {num_clients} clients",
            samples.len()
        )));
    }
    let p = samples[0].0.len();
    if let Some((t, _)) = samples.iter().find(|(t, _)| t.len() != p || t.shape().len() != 1) {
        return Err(Error::ShapeMismatch {
            expected: vec![p],
            found: t.shape().to_vec(),
        });
    }
    let k = samples.iter().map(|s| s.1).max().expect("nonempty") + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut owned: Vec<Vec<usize>> = vec![Vec::new(); num_clients];
    for class in 0..k {
        let mut idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].1 == class).collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let share = sample_dirichlet(dirichlet_alpha, num_clients, &mut rng)?;
        let n = idx.len();
        let mut cum = 0.0;
        let mut start = 0;
        for (c, s) in share.iter().enumerate() {
            cum += s;
            let end = if c + 1 == num_clients { n } else { ((cum * n as f64).floor() as usize).min(n) };
            owned[c].extend_from_slice(&idx[start..end.max(start)]);
            start = end.max(start);
        }
    }
    while let Some(empty) = owned.iter().position(Vec::is_empty) {
        let largest = (0..num_clients)
            .max_by_key(|&c| (owned[c].len(), std::cmp::Reverse(c)))
            .expect("at least one client");
        let moved = owned[largest].pop().expect("largest client has more than one sample");
        owned[empty].push(moved);
    }

    let clients = owned
        .into_iter()
        .map(|ids| {
            let mut feats = Vec::with_capacity(ids.len() * p);
            let mut labels = Vec::with_capacity(ids.len());
            for i in ids {
                feats.extend_from_slice(samples[i].0.data());
                labels.push(samples[i].1);
            }
            ClientData::new(Tensor::matrix(labels.len(), p, feats)?, labels)
        })
        .collect::<Result<Vec<_>>>()?;
    let (train, heldout) = split_clients(num_clients, &mut rng);
    FederatedDataset::new(clients, k, p, train, heldout)
}
