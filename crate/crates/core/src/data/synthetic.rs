use rand::distributions::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use super::client::ClientData;
use super::dataset::{split_clients, FederatedDataset};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Gaussian-mixture federation with Dirichlet label skew per client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_clients: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub samples_mean: usize,
    /// Client sizes are uniform in `samples_mean ± samples_spread`.
    #[serde(default)]
    pub samples_spread: usize,
    pub dirichlet_alpha: f64,
    pub class_separation: f64,
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |field: &str, message: String| Err(Error::config(format!("dataset.{field}"), message));
        if self.num_clients == 0 {
            return fail("num_clients", "must be at least 1".into());
        }
        if self.num_classes < 2 {
            return fail("num_classes", "must be at least 2".into());
        }
        if self.feature_dim == 0 {
            return fail("feature_dim", "must be at least 1".into());
        }
        if self.samples_mean == 0 || self.samples_spread >= self.samples_mean {
            return fail(
                "samples_spread",
                format!(
                    "samples_mean {} minus spread {} leaves clients without samples",
                    self.samples_mean, self.samples_spread
                ),
            );
        }
        for (name, v) in [
            ("dirichlet_alpha", self.dirichlet_alpha),
            ("class_separation", self.class_separation),
            ("noise_sigma", self.noise_sigma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(name, format!("must be positive, got {v}"));
            }
        }
        Ok(())
    }

    /// One-line description stored alongside exported datasets.
    pub fn echo(&self) -> String {
        format!(
            "synthetic N={} K={} P={} n={}±{} alpha={} sep={} sigma={} seed={}",
            self.num_clients,
            self.num_classes,
            self.feature_dim,
            self.samples_mean,
            self.samples_spread,
            self.dirichlet_alpha,
            self.class_separation,
            self.noise_sigma,
            self.seed
        )
    }
}

/// Draw from Dirichlet(α·1_k) via normalized Gamma variates. When every
/// variate underflows to zero (tiny α) the mass goes to one uniformly chosen
/// coordinate, which is the α → 0 limit.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: f64, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::invalid(format!("dirichlet alpha {alpha}: {e}")))?;
    let mut p: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let sum: f64 = p.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        p.iter_mut().for_each(|v| *v /= sum);
    } else {
        p = vec![0.0; k];
        p[rng.gen_range(0..k)] = 1.0;
    }
    Ok(p)
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<FederatedDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (k, p) = (spec.num_classes, spec.feature_dim);

    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let mut v: Vec<f64> = loop {
                let v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
                if crate::tensor::norm(&v) > 1e-12 {
                    break v;
                }
            };
            let scale = spec.class_separation / crate::tensor::norm(&v);
            v.iter_mut().for_each(|x| *x *= scale);
            v
        })
        .collect();

    let lo = spec.samples_mean - spec.samples_spread;
    let hi = spec.samples_mean + spec.samples_spread;
    let mut clients = Vec::with_capacity(spec.num_clients);
    for _ in 0..spec.num_clients {
        let mix = sample_dirichlet(spec.dirichlet_alpha, k, &mut rng)?;
        let pick = WeightedIndex::new(&mix).map_err(|e| Error::invalid(format!("label mixture: {e}")))?;
        let n = rng.gen_range(lo..=hi);
        let mut feats = Vec::with_capacity(n * p);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let y = pick.sample(&mut rng);
            for &m in &means[y] {
                let z: f64 = rng.sample(StandardNormal);
                feats.push(m + spec.noise_sigma * z);
            }
            labels.push(y);
        }
        clients.push(ClientData::new(Tensor::matrix(n, p, feats)?, labels)?);
    }

    let (train, heldout) = split_clients(spec.num_clients, &mut rng);
    FederatedDataset::new(clients, k, p, train, heldout)
}
