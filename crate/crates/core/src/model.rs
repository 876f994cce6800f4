//! Embedding classifier `f(x) = W · g(x)`: a ReLU MLP encoder `g` followed by
//! a bias-free logit layer whose rows are the class embeddings.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{check_finite, dot, Tensor};

/// One dense encoder layer, `relu(W x + b)` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn new(weights: Tensor, bias: Tensor) -> Result<Self> {
        if weights.shape().len() != 2 || bias.shape() != [weights.rows()] {
            return Err(Error::ShapeMismatch {
                expected: vec![weights.rows()],
                found: bias.shape().to_vec(),
            });
        }
        Ok(Self { weights, bias })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    encoder: Vec<Dense>,
    logit_matrix: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Tensor, labels: Vec<usize>) -> Result<Self> {
        if inputs.shape().len() != 2 || inputs.rows() != labels.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![labels.len()],
                found: inputs.shape().to_vec(),
            });
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Glorot-uniform initialization bound.
fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn uniform_tensor<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, bound: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::matrix(rows, cols, data).expect("finite uniform draws")
}

impl Model {
    pub fn new(encoder: Vec<Dense>, logit_matrix: Tensor) -> Result<Self> {
        if encoder.is_empty() {
            return Err(Error::invalid("encoder needs at least one layer"));
        }
        for pair in encoder.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::ShapeMismatch {
                    expected: vec![pair[0].output_dim()],
                    found: vec![pair[1].input_dim()],
                });
            }
        }
        let d = encoder.last().map(Dense::output_dim).unwrap_or(0);
        if logit_matrix.shape().len() != 2 || logit_matrix.cols() != d {
            return Err(Error::ShapeMismatch {
                expected: vec![logit_matrix.rows(), d],
                found: logit_matrix.shape().to_vec(),
            });
        }
        if logit_matrix.rows() < 2 {
            return Err(Error::invalid("a classifier needs K >= 2 classes"));
        }
        Ok(Self {
            encoder,
            logit_matrix,
        })
    }

    /// Encoder `input_dim → hidden[0] → … → embedding_dim`, every layer
    /// followed by ReLU, plus a `num_classes × embedding_dim` logit matrix.
    /// Weights are Glorot-uniform, encoder biases start at zero.
    pub fn init<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        embedding_dim: usize,
        num_classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || embedding_dim == 0 || hidden.contains(&0) {
            return Err(Error::invalid("layer widths must be positive"));
        }
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(embedding_dim);
        let mut encoder = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            encoder.push(Dense {
                weights: uniform_tensor(rng, fan_out, fan_in, glorot(fan_in, fan_out)),
                bias: Tensor::zeros(&[fan_out]),
            });
        }
        let logit_matrix = uniform_tensor(
            rng,
            num_classes,
            embedding_dim,
            glorot(embedding_dim, num_classes),
        );
        Self::new(encoder, logit_matrix)
    }

    pub fn encoder(&self) -> &[Dense] {
        &self.encoder
    }

    pub fn logit_matrix(&self) -> &Tensor {
        &self.logit_matrix
    }

    pub fn set_logit_matrix(&mut self, w: Tensor) -> Result<()> {
        self.logit_matrix.same_shape(&w)?;
        self.logit_matrix = w;
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.logit_matrix.rows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.logit_matrix.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder[0].input_dim()
    }

    pub fn param_count(&self) -> usize {
        self.encoder
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum::<usize>()
            + self.logit_matrix.len()
    }

    /// Number of leading entries of [`Model::flatten_params`] that belong to
    /// the encoder; the logit matrix follows.
    pub fn encoder_param_count(&self) -> usize {
        self.param_count() - self.logit_matrix.len()
    }

    pub fn is_compatible(&self, other: &Model) -> bool {
        self.logit_matrix.shape() == other.logit_matrix.shape()
            && self.encoder.len() == other.encoder.len()
            && self
                .encoder
                .iter()
                .zip(&other.encoder)
                .all(|(a, b)| a.weights.shape() == b.weights.shape() && a.bias.shape() == b.bias.shape())
    }

    pub fn check_compatible(&self, other: &Model) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: self.shape_manifest(),
                found: other.shape_manifest(),
            })
        }
    }

    /// `[in_0, out_0, in_1, out_1, …, K, d]`
    pub fn shape_manifest(&self) -> Vec<usize> {
        let mut m = Vec::new();
        for l in &self.encoder {
            m.push(l.input_dim());
            m.push(l.output_dim());
        }
        m.push(self.num_classes());
        m.push(self.embedding_dim());
        m
    }

    /// Parameters as one vector: each encoder layer's weights (row-major)
    /// then its bias, in layer order, followed by the logit matrix row-major.
    pub fn flatten_params(&self) -> Tensor {
        let mut flat = Vec::with_capacity(self.param_count());
        for l in &self.encoder {
            flat.extend_from_slice(l.weights.data());
            flat.extend_from_slice(l.bias.data());
        }
        flat.extend_from_slice(self.logit_matrix.data());
        Tensor::vector(flat).expect("model parameters are finite")
    }

    pub fn unflatten_params(template: &Model, flat: &Tensor) -> Result<Model> {
        Self::from_flat_slice(template, flat.data())
    }

    pub(crate) fn from_flat_slice(template: &Model, flat: &[f64]) -> Result<Model> {
        if flat.len() != template.param_count() {
            return Err(Error::ShapeMismatch {
                expected: vec![template.param_count()],
                found: vec![flat.len()],
            });
        }
        let mut at = 0;
        let mut take = |shape: &[usize]| {
            let n: usize = shape.iter().product();
            let t = Tensor::new(shape.to_vec(), flat[at..at + n].to_vec());
            at += n;
            t
        };
        let mut encoder = Vec::with_capacity(template.encoder.len());
        for l in &template.encoder {
            let weights = take(l.weights.shape())?;
            let bias = take(l.bias.shape())?;
            encoder.push(Dense { weights, bias });
        }
        let logit_matrix = take(template.logit_matrix.shape())?;
        Ok(Model {
            encoder,
            logit_matrix,
        })
    }

    fn check_inputs(&self, inputs: &Tensor) -> Result<()> {
        if inputs.shape().len() != 2 || inputs.cols() != self.input_dim() {
            return Err(Error::ShapeMismatch {
                expected: vec![inputs.rows(), self.input_dim()],
                found: inputs.shape().to_vec(),
            });
        }
        Ok(())
    }

    fn forward(&self, inputs: &Tensor) -> Result<Forward> {
        self.check_inputs(inputs)?;
        let b = inputs.rows();
        let mut activations = vec![inputs.data().to_vec()];
        let mut masks = Vec::with_capacity(self.encoder.len());
        for layer in &self.encoder {
            let (n_in, n_out) = (layer.input_dim(), layer.output_dim());
            let x = activations.last().expect("input present");
            let mut out = vec![0.0; b * n_out];
            let mut mask = vec![false; b * n_out];
            for s in 0..b {
                let xs = &x[s * n_in..(s + 1) * n_in];
                for o in 0..n_out {
                    let pre = dot(layer.weights.row(o), xs) + layer.bias.data()[o];
                    if pre > 0.0 {
                        out[s * n_out + o] = pre;
                        mask[s * n_out + o] = true;
                    }
                }
            }
            check_finite(&out, "encoder activation")?;
            activations.push(out);
            masks.push(mask);
        }
        Ok(Forward {
            batch: b,
            activations,
            masks,
        })
    }

    /// Embeddings `g(x)`, one row per input row.
    pub fn encode(&self, inputs: &Tensor) -> Result<Tensor> {
        let fw = self.forward(inputs)?;
        Tensor::matrix(fw.batch, self.embedding_dim(), fw.embeddings().to_vec())
    }

    pub fn logits(&self, inputs: &Tensor) -> Result<Tensor> {
        let emb = self.encode(inputs)?;
        Tensor::matrix(emb.rows(), self.num_classes(), logits_of(&self.logit_matrix, emb.data()))
    }

    /// Class with the largest inner product `w_kᵀ g(x)`; ties go to the lowest index.
    pub fn predict(&self, inputs: &Tensor) -> Result<Vec<usize>> {
        let logits = self.logits(inputs)?;
        Ok((0..logits.rows()).map(|i| argmax(logits.row(i))).collect())
    }

    /// Mean softmax cross-entropy over the batch and its gradient.
    pub fn loss_and_gradient(&self, batch: &Batch) -> Result<(f64, Model)> {
        self.objective_and_gradient(batch, None)
    }

    /// Cross-entropy plus an optional extra loss term that depends on the
    /// batch embeddings. The term receives the `B × d` embedding block and
    /// returns its value and its gradient with respect to that block; the
    /// gradient is then backpropagated through the encoder together with the
    /// cross-entropy gradient.
    pub fn objective_and_gradient(
        &self,
        batch: &Batch,
        embedding_term: Option<&dyn Fn(&[f64], usize) -> Result<(f64, Vec<f64>)>>,
    ) -> Result<(f64, Model)> {
        let k = self.num_classes();
        let d = self.embedding_dim();
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        if let Some(&bad) = batch.labels.iter().find(|&&y| y >= k) {
            return Err(Error::invalid(format!("label {bad} out of range for {k} classes")));
        }
        let fw = self.forward(&batch.inputs)?;
        let b = fw.batch;
        let emb = fw.embeddings();
        let logits = logits_of(&self.logit_matrix, emb);
        let inv_b = 1.0 / b as f64;

        let mut loss = 0.0;
        let mut dlogits = vec![0.0; b * k];
        for s in 0..b {
            let row = &logits[s * k..(s + 1) * k];
            let (probs, lse) = softmax_with_lse(row);
            loss += lse - row[batch.labels[s]];
            for c in 0..k {
                let target = if c == batch.labels[s] { 1.0 } else { 0.0 };
                dlogits[s * k + c] = (probs[c] - target) * inv_b;
            }
        }
        loss *= inv_b;
        if !loss.is_finite() {
            return Err(Error::NonFinite("cross-entropy loss".into()));
        }

        let mut grad_w = vec![0.0; k * d];
        let mut d_emb = vec![0.0; b * d];
        for s in 0..b {
            let e = &emb[s * d..(s + 1) * d];
            for c in 0..k {
                let g = dlogits[s * k + c];
                if g == 0.0 {
                    continue;
                }
                let wrow = self.logit_matrix.row(c);
                for j in 0..d {
                    grad_w[c * d + j] += g * e[j];
                    d_emb[s * d + j] += g * wrow[j];
                }
            }
        }

        if let Some(term) = embedding_term {
            let (extra, d_extra) = term(emb, b)?;
            if d_extra.len() != d_emb.len() {
                return Err(Error::ShapeMismatch {
                    expected: vec![b, d],
                    found: vec![d_extra.len()],
                });
            }
            loss += extra;
            for (a, x) in d_emb.iter_mut().zip(&d_extra) {
                *a += x;
            }
            if !loss.is_finite() {
                return Err(Error::NonFinite("client objective".into()));
            }
        }

        let encoder = self.backward(&fw, d_emb)?;
        let grads = Model {
            encoder,
            logit_matrix: Tensor::matrix(k, d, grad_w)?,
        };
        Ok((loss, grads))
    }

    fn backward(&self, fw: &Forward, d_out: Vec<f64>) -> Result<Vec<Dense>> {
        let b = fw.batch;
        let mut grads = Vec::with_capacity(self.encoder.len());
        let mut upstream = d_out;
        for (li, layer) in self.encoder.iter().enumerate().rev() {
            let (n_in, n_out) = (layer.input_dim(), layer.output_dim());
            let x = &fw.activations[li];
            let mask = &fw.masks[li];
            let mut gw = vec![0.0; n_out * n_in];
            let mut gb = vec![0.0; n_out];
            let mut down = vec![0.0; b * n_in];
            for s in 0..b {
                let xs = &x[s * n_in..(s + 1) * n_in];
                for o in 0..n_out {
                    if !mask[s * n_out + o] {
                        continue;
                    }
                    let g = upstream[s * n_out + o];
                    if g == 0.0 {
                        continue;
                    }
                    gb[o] += g;
                    let wrow = layer.weights.row(o);
                    for i in 0..n_in {
                        gw[o * n_in + i] += g * xs[i];
                        down[s * n_in + i] += g * wrow[i];
                    }
                }
            }
            grads.push(Dense {
                weights: Tensor::matrix(n_out, n_in, gw)?,
                bias: Tensor::vector(gb)?,
            });
            upstream = down;
        }
        grads.reverse();
        Ok(grads)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_checkpoint_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Model> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }

    /// `"FSVM"`, version `u32`, layer count `u32`, `(out, in)` per layer as
    /// `u32` pairs, `K` and `d` as `u32`, then [`Model::flatten_params`] as
    /// little-endian `f64`. All integers little-endian.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 8 * self.encoder.len() + 8 * self.param_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.encoder.len() as u32).to_le_bytes());
        for l in &self.encoder {
            out.extend_from_slice(&(l.output_dim() as u32).to_le_bytes());
            out.extend_from_slice(&(l.input_dim() as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.num_classes() as u32).to_le_bytes());
        out.extend_from_slice(&(self.embedding_dim() as u32).to_le_bytes());
        for v in self.flatten_params().data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Model> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a model checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let layers = r.u32()? as usize;
        let mut encoder = Vec::with_capacity(layers);
        for _ in 0..layers {
            let out = r.u32()? as usize;
            let inp = r.u32()? as usize;
            encoder.push(Dense {
                weights: Tensor::zeros(&[out, inp]),
                bias: Tensor::zeros(&[out]),
            });
        }
        let k = r.u32()? as usize;
        let d = r.u32()? as usize;
        let template = Model::new(encoder, Tensor::zeros(&[k, d]))?;
        let mut flat = Vec::with_capacity(template.param_count());
        for _ in 0..template.param_count() {
            flat.push(r.f64()?);
        }
        if !r.is_done() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Model::from_flat_slice(&template, &flat)
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"FSVM";
const CHECKPOINT_VERSION: u32 = 1;

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, at: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(Error::Format(format!(
                "truncated: wanted {n} bytes at offset {}",
                self.at
            )));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn is_done(&self) -> bool {
        self.at == self.bytes.len()
    }
}

struct Forward {
    batch: usize,
    /// Input followed by each layer's post-ReLU output.
    activations: Vec<Vec<f64>>,
    masks: Vec<Vec<bool>>,
}

impl Forward {
    fn embeddings(&self) -> &[f64] {
        self.activations.last().expect("at least one layer")
    }
}

fn logits_of(w: &Tensor, emb: &[f64]) -> Vec<f64> {
    let (k, d) = (w.rows(), w.cols());
    let b = emb.len() / d;
    let mut out = Vec::with_capacity(b * k);
    for s in 0..b {
        let e = &emb[s * d..(s + 1) * d];
        for c in 0..k {
            out.push(dot(w.row(c), e));
        }
    }
    out
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    softmax_with_lse(logits).0
}

fn softmax_with_lse(logits: &[f64]) -> (Vec<f64>, f64) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let probs = exps.iter().map(|e| e / sum).collect();
    (probs, max + sum.ln())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::gradcheck::{finite_difference_gradient, relative_error};

    fn single_layer(weights: Tensor, bias: Vec<f64>, w: Tensor) -> Model {
        Model::new(
            vec![Dense::new(weights, Tensor::vector(bias).unwrap()).unwrap()],
            w,
        )
        .unwrap()
    }

    #[test]
    fn identity_encoder_passes_nonnegative_input() {
        let m = single_layer(
            Tensor::matrix(3, 3, vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]).unwrap(),
            vec![0.0; 3],
            Tensor::zeros(&[2, 3]),
        );
        let x = Tensor::matrix(2, 3, vec![0.5, 0.0, 2.0, 1.0, 3.0, 0.25]).unwrap();
        assert_eq!(m.encode(&x).unwrap(), x);
    }

    #[test]
    fn zero_weights_zero_embeddings() {
        let m = single_layer(Tensor::zeros(&[4, 2]), vec![0.0; 4], Tensor::zeros(&[3, 4]));
        let x = Tensor::matrix(1, 2, vec![-1.0, 5.0]).unwrap();
        assert!(m.encode(&x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hand_arithmetic_relu() {
        let m = single_layer(
            Tensor::matrix(1, 2, vec![1.0, -1.0]).unwrap(),
            vec![0.0],
            Tensor::matrix(2, 1, vec![1.0, -1.0]).unwrap(),
        );
        let x = Tensor::matrix(1, 2, vec![2.0, 1.0]).unwrap();
        assert_eq!(m.encode(&x).unwrap().data(), &[1.0]);
    }

    fn embedding_passthrough(w: Vec<f64>) -> Model {
        single_layer(
            Tensor::matrix(2, 2, vec![1., 0., 0., 1.]).unwrap(),
            vec![0.0; 2],
            Tensor::matrix(2, 2, w).unwrap(),
        )
    }

    #[test]
    fn predict_nearest_by_inner_product() {
        let m = embedding_passthrough(vec![1.0, 0.0, 0.0, 1.0]);
        let x = Tensor::matrix(1, 2, vec![0.9, 0.1]).unwrap();
        assert_eq!(m.predict(&x).unwrap(), vec![0]);
        let x = Tensor::matrix(1, 2, vec![0.1, 0.9]).unwrap();
        assert_eq!(m.predict(&x).unwrap(), vec![1]);
    }

    #[test]
    fn predict_zero_embedding_ties_to_lowest() {
        let m = embedding_passthrough(vec![1.0, 0.0, 0.0, 1.0]);
        let x = Tensor::matrix(1, 2, vec![-1.0, -2.0]).unwrap();
        assert_eq!(m.predict(&x).unwrap(), vec![0]);
    }

    #[test]
    fn predict_invariant_under_shared_positive_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Model::init(5, &[7], 4, 6, &mut rng).unwrap();
        let x = uniform_tensor(&mut rng, 30, 5, 2.0);
        let mut scaled = m.clone();
        scaled
            .set_logit_matrix(m.logit_matrix().scale(3.7).unwrap())
            .unwrap();
        assert_eq!(m.predict(&x).unwrap(), scaled.predict(&x).unwrap());
    }

    #[test]
    fn uniform_logits_give_ln2() {
        let m = single_layer(Tensor::zeros(&[1, 2]), vec![0.0], Tensor::zeros(&[2, 1]));
        let batch = Batch::new(Tensor::matrix(3, 2, vec![1.0; 6]).unwrap(), vec![0, 1, 1]).unwrap();
        let (loss, _) = m.loss_and_gradient(&batch).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn loss_vanishes_with_margin() {
        let mut prev = f64::INFINITY;
        for margin in [1.0, 10.0, 100.0, 1000.0] {
            let m = embedding_passthrough(vec![margin, 0.0, 0.0, 0.0]);
            let batch = Batch::new(Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap(), vec![0]).unwrap();
            let (loss, _) = m.loss_and_gradient(&batch).unwrap();
            assert!(loss >= 0.0 && loss <= prev);
            prev = loss;
        }
        assert!(prev < 1e-12);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let m = embedding_passthrough(vec![1e6, 0.0, -1e6, 0.0]);
        let batch = Batch::new(Tensor::matrix(1, 2, vec![800.0, 0.0]).unwrap(), vec![1]).unwrap();
        let (loss, _) = m.loss_and_gradient(&batch).unwrap();
        assert!(loss.is_finite() && loss > 1e8);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let row: Vec<f64> = (0..7).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let s: f64 = softmax(&row).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let m = Model::init(4, &[6], 3, 4, &mut rng).unwrap();
            let x = uniform_tensor(&mut rng, 5, 4, 1.5);
            let labels = (0..5).map(|_| rng.gen_range(0..4)).collect();
            let batch = Batch::new(x, labels).unwrap();
            let (_, grads) = m.loss_and_gradient(&batch).unwrap();
            let fd = finite_difference_gradient(
                |flat| Ok(Model::unflatten_params(&m, flat)?.loss_and_gradient(&batch)?.0),
                &m.flatten_params(),
                1e-5,
            )
            .unwrap();
            assert!(relative_error(&grads.flatten_params(), &fd, 1e-12) < 1e-5);
        }
    }

    #[test]
    fn flatten_round_trip_and_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Model::init(3, &[4], 2, 3, &mut rng).unwrap();
        let flat = m.flatten_params();
        assert_eq!(Model::unflatten_params(&m, &flat).unwrap(), m);
        assert_eq!(flat.len(), 3 * 4 + 4 + 4 * 2 + 2 + 3 * 2);
        // first layer weight (1,2), then first bias entry, then logit (2,1)
        assert_eq!(flat.data()[5], m.encoder()[0].weights.get(&[1, 2]));
        assert_eq!(flat.data()[12], m.encoder()[0].bias.data()[0]);
        assert_eq!(flat.data()[flat.len() - 1], m.logit_matrix().get(&[2, 1]));
        assert_eq!(m.encoder_param_count(), flat.len() - 6);

        let zero = Model::unflatten_params(&m, &Tensor::zeros(&[flat.len()])).unwrap();
        assert!(zero.flatten_params().data().iter().all(|&v| v == 0.0));
        assert!(Model::unflatten_params(&m, &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn compatibility() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Model::init(3, &[4], 2, 3, &mut rng).unwrap();
        let b = Model::init(3, &[4], 2, 3, &mut rng).unwrap();
        let c = Model::init(3, &[5], 2, 3, &mut rng).unwrap();
        assert!(a.is_compatible(&b) && b.is_compatible(&a) && a.is_compatible(&a));
        assert!(!a.is_compatible(&c));
        assert!(a.check_compatible(&c).is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = Model::init(3, &[4], 2, 3, &mut rng).unwrap();
        let bytes = m.to_checkpoint_bytes();
        assert_eq!(&bytes[..4], b"FSVM");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(Model::from_checkpoint_bytes(&bytes).unwrap(), m);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.fsvm");
        m.save_checkpoint(&path).unwrap();
        assert_eq!(Model::load_checkpoint(&path).unwrap(), m);

        assert!(Model::from_checkpoint_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Model::from_checkpoint_bytes(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_bad_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = Model::init(3, &[4], 2, 3, &mut rng).unwrap();
        assert!(m.encode(&Tensor::zeros(&[2, 4])).is_err());
        let batch = Batch::new(Tensor::zeros(&[1, 3]), vec![3]).unwrap();
        assert!(m.loss_and_gradient(&batch).is_err());
        assert!(Model::new(
            vec![Dense::new(Tensor::zeros(&[2, 2]), Tensor::zeros(&[2])).unwrap()],
            Tensor::zeros(&[1, 2])
        )
        .is_err());
    }
}
