//! Fixtures shared by the benchmarks.

use fedsvm_core::data::{generate_synthetic, FederatedDataset, SyntheticSpec};
use fedsvm_core::svm::SvmProblem;
use fedsvm_core::Tensor;

/// Two overlapping clusters in `d` dimensions, `m / 2` points each, laid out on a
/// fixed deterministic lattice so the benches need no RNG.
pub fn blob_problem(m: usize, d: usize, lambda: f64) -> SvmProblem {
    let mut data = Vec::with_capacity(m * d);
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let y = if i % 2 == 0 { 1.0 } else { -1.0 };
        for j in 0..d {
            let jitter = ((i * 31 + j * 17) % 13) as f64 / 13.0 - 0.5;
            data.push(y * 0.8 + jitter);
        }
        labels.push(y);
    }
    let samples = Tensor::matrix(m, d, data).expect("finite lattice");
    SvmProblem::unweighted(samples, labels, lambda).expect("valid problem")
}

/// The standard 40-client, 8-class fixture.
pub fn standard_fixture(seed: u64) -> FederatedDataset {
    generate_synthetic(&SyntheticSpec {
        num_clients: 40,
        num_classes: 8,
        feature_dim: 32,
        samples_mean: 50,
        samples_spread: 10,
        dirichlet_alpha: 0.1,
        class_separation: 4.0,
        noise_sigma: 1.0,
        seed,
    })
    .expect("valid spec")
}
