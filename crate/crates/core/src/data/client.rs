use crate::error::{Error, Result};
use crate::model::Batch;
use crate::tensor::Tensor;

/// One client's labeled samples, features stored row-major `n × P`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientData {
    features: Tensor,
    labels: Vec<usize>,
}

impl ClientData {
    pub fn new(features: Tensor, labels: Vec<usize>) -> Result<Self> {
        if features.shape().len() != 2 || features.rows() != labels.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![labels.len()],
                found: features.shape().to_vec(),
            });
        }
        Ok(Self { features, labels })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn sample(&self, i: usize) -> (&[f64], usize) {
        (self.features.row(i), self.labels[i])
    }

    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        if indices.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let p = self.feature_dim();
        let mut data = Vec::with_capacity(indices.len() * p);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.features.row(i));
            labels.push(self.labels[i]);
        }
        Batch::new(Tensor::matrix(indices.len(), p, data)?, labels)
    }

    pub fn all(&self) -> Result<Batch> {
        Batch::new(self.features.clone(), self.labels.clone())
    }
}
