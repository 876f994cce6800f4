use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;
use rayon::prelude::*;

use super::binary::{fit_binary, BinarySvmModel, SvmProblem, ALPHA_TOL, DEFAULT_GAP_TOL};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One point of the class-level SVM problem: client `client`'s embedding
/// for a class, weighted by that client's dataset size.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSample {
    pub client: usize,
    pub embedding: Tensor,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupportVector {
    pub client: usize,
    pub embedding: Tensor,
    pub weight: f64,
}

/// One-vs-one SVM over `K` classes. The pair `(k, k′)` with `k < k′` labels
/// class `k` as `+1` and stacks its samples before those of `k′`.
#[derive(Debug, Clone)]
pub struct OvoSvm {
    num_classes: usize,
    models: BTreeMap<(usize, usize), BinarySvmModel>,
    class_samples: Vec<Vec<ClassSample>>,
}

/// Fits `K(K−1)/2` binary problems. Pair fits run in parallel and are merged
/// in pair order.
pub fn fit_ovo(class_samples: Vec<Vec<ClassSample>>, lambda: f64) -> Result<OvoSvm> {
    let k = class_samples.len();
    if k < 2 {
        return Err(Error::invalid("one-vs-one needs at least two classes"));
    }
    if let Some(empty) = class_samples.iter().position(Vec::is_empty) {
        return Err(Error::invalid(format!("class {empty} has no embeddings")));
    }
    let d = class_samples[0][0].embedding.len();
    if class_samples
        .iter()
        .flatten()
        .any(|s| s.embedding.len() != d)
    {
        return Err(Error::invalid("embeddings differ in dimension"));
    }

    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|a| ((a + 1)..k).map(move |b| (a, b)))
        .collect();
    let fitted: Vec<Result<BinarySvmModel>> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let problem = pair_problem(&class_samples[a], &class_samples[b], d, lambda)?;
            fit_binary(&problem, 0, DEFAULT_GAP_TOL)
        })
        .collect();

    let mut models = BTreeMap::new();
    for (&(a, b), res) in pairs.iter().zip(fitted) {
        let model = res.map_err(|e| Error::SvmPair(a, b, Box::new(e)))?;
        if !model.converged {
            warn!("svm pair ({a}, {b}) stopped with relative gap {:.3e}", model.duality_gap);
        }
        models.insert((a, b), model);
    }
    Ok(OvoSvm {
        num_classes: k,
        models,
        class_samples,
    })
}

fn pair_problem(pos: &[ClassSample], neg: &[ClassSample], d: usize, lambda: f64) -> Result<SvmProblem> {
    let m = pos.len() + neg.len();
    let mut data = Vec::with_capacity(m * d);
    let mut labels = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for (samples, y) in [(pos, 1.0), (neg, -1.0)] {
        for s in samples {
            data.extend_from_slice(s.embedding.data());
            labels.push(y);
            weights.push(s.weight);
        }
    }
    SvmProblem::new(Tensor::matrix(m, d, data)?, labels, weights, lambda)
}

impl OvoSvm {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn models(&self) -> &BTreeMap<(usize, usize), BinarySvmModel> {
        &self.models
    }

    pub fn pair(&self, a: usize, b: usize) -> Option<&BinarySvmModel> {
        self.models.get(&(a.min(b), a.max(b)))
    }

    pub fn class_samples(&self, k: usize) -> &[ClassSample] {
        &self.class_samples[k]
    }

    /// Class-`k` samples that are support vectors of any pair problem
    /// involving `k`, one entry per client, ordered by client index.
    pub fn support_vectors_of_class(&self, k: usize) -> Result<Vec<SupportVector>> {
        if k >= self.num_classes {
            return Err(Error::invalid(format!("class {k} out of range")));
        }
        let mut by_client: BTreeMap<usize, usize> = BTreeMap::new();
        for other in (0..self.num_classes).filter(|&o| o != k) {
            let model = self.pair(k, other).ok_or_else(|| Error::invalid("unfitted pair"))?;
            // class k occupies the first block when it is the smaller index
            let n_first = self.class_samples[k.min(other)].len();
            let offset = if k < other { 0 } else { n_first };
            let n_k = self.class_samples[k].len();
            for local in 0..n_k {
                if model.alphas[offset + local] > ALPHA_TOL {
                    let client = self.class_samples[k][local].client;
                    by_client.entry(client).or_insert(local);
                }
            }
        }
        Ok(by_client
            .into_iter()
            .map(|(client, local)| {
                let s = &self.class_samples[k][local];
                SupportVector {
                    client,
                    embedding: s.embedding.clone(),
                    weight: s.weight,
                }
            })
            .collect())
    }

    /// Hyperplane between `a` and `b`, oriented so that `a` is the positive side.
    pub fn hyperplane(&self, a: usize, b: usize) -> Result<(Tensor, f64)> {
        if a == b {
            return Err(Error::invalid("hyperplane needs two distinct classes"));
        }
        let model = self
            .pair(a, b)
            .ok_or_else(|| Error::invalid(format!("no fitted pair ({a}, {b})")))?;
        if a < b {
            Ok((model.normal.clone(), model.bias))
        } else {
            Ok((model.normal.scale(-1.0)?, -model.bias))
        }
    }

    /// Per-class support-vector counts after client de-duplication.
    pub fn support_vector_counts(&self) -> Result<Vec<usize>> {
        (0..self.num_classes)
            .map(|k| self.support_vectors_of_class(k).map(|v| v.len()))
            .collect()
    }

    /// Text table of `pair, #SVs, relative duality gap, ‖normal‖`.
    pub fn diagnostics_table(&self) -> String {
        let mut out = String::from("pair\tsv\tgap\tnormal_norm\n");
        for (&(a, b), m) in &self.models {
            let _ = writeln!(
                out,
                "{a}-{b}\t{}\t{:.3e}\t{:.6}",
                m.num_support_vectors(),
                m.duality_gap,
                m.normal.norm()
            );
        }
        out
    }
}
