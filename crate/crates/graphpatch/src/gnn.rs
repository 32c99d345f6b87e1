//! The frozen target classifier: a two-layer symmetric-normalized GCN with
//! softmax output, its supervised training, gradients with respect to input
//! features (parameters stay frozen), and checkpoint I/O.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::checkpoint::{read_checkpoint, write_checkpoint};
use crate::graph::{EgoGraph, Graph};
use crate::nn::{cross_entropy, dropout_mask, optimizer_step, DenseLayer, OptimizerState};
use crate::rng::RngStream;
use crate::tensor::{matmul_a_bt, relu, relu_backward, softmax_backward, softmax_rows, Matrix};
use crate::{Error, Result};

/// Anything a GCN can run on: a normalized propagation operator plus node
/// features.
pub trait GcnInput {
    fn coefficients(&self) -> Vec<(u32, u32, f32)>;
    fn input_features(&self) -> &Matrix;
}

impl GcnInput for Graph {
    fn coefficients(&self) -> Vec<(u32, u32, f32)> {
        self.normalized_adjacency()
    }
    fn input_features(&self) -> &Matrix {
        self.features()
    }
}

impl GcnInput for EgoGraph {
    fn coefficients(&self) -> Vec<(u32, u32, f32)> {
        self.normalized_adjacency()
    }
    fn input_features(&self) -> &Matrix {
        self.features()
    }
}

/// y[u] += c · x[v] for every (u, v, c); f64 row accumulation.
pub(crate) fn propagate(coeffs: &[(u32, u32, f32)], x: &Matrix) -> Matrix {
    let mut acc = vec![0.0f64; x.rows() * x.cols()];
    let cols = x.cols();
    for &(u, v, c) in coeffs {
        let row = x.row(v as usize);
        let out = &mut acc[u as usize * cols..(u as usize + 1) * cols];
        let c = c as f64;
        for (o, &xi) in out.iter_mut().zip(row) {
            *o += c * xi as f64;
        }
    }
    Matrix::from_vec(x.rows(), x.cols(), acc.into_iter().map(|v| v as f32).collect())
}

/// Adjoint of [`propagate`]: y[v] += c · x[u] for every (u, v, c).
pub(crate) fn propagate_transpose(coeffs: &[(u32, u32, f32)], x: &Matrix) -> Matrix {
    let mut acc = vec![0.0f64; x.rows() * x.cols()];
    let cols = x.cols();
    for &(u, v, c) in coeffs {
        let row = x.row(u as usize);
        let out = &mut acc[v as usize * cols..(v as usize + 1) * cols];
        let c = c as f64;
        for (o, &xi) in out.iter_mut().zip(row) {
            *o += c * xi as f64;
        }
    }
    Matrix::from_vec(x.rows(), x.cols(), acc.into_iter().map(|v| v as f32).collect())
}

/// Two-layer GCN: H₁ = relu(Â X W₁ + b₁), Z = softmax(Â H₁ W₂ + b₂).
#[derive(Debug, Clone, PartialEq)]
pub struct GCNModel {
    pub layer1: DenseLayer,
    pub layer2: DenseLayer,
}

/// Fixed backbone depth; ego-graph extraction radius must match it.
pub const GCN_LAYERS: usize = 2;

impl GCNModel {
    pub fn new(feature_dim: usize, hidden: usize, num_classes: usize, init: RngStream) -> Self {
        let mut rng = init.rng();
        GCNModel {
            layer1: DenseLayer::glorot(feature_dim, hidden, &mut rng),
            layer2: DenseLayer::glorot(hidden, num_classes, &mut rng),
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.layer1.d_in()
    }

    pub fn hidden(&self) -> usize {
        self.layer1.d_out()
    }

    pub fn num_classes(&self) -> usize {
        self.layer2.d_out()
    }

    fn param_tensors(&self) -> Vec<(&'static str, &Matrix)> {
        vec![
            ("layer1.weight", &self.layer1.weight),
            ("layer1.bias", &self.layer1.bias),
            ("layer2.weight", &self.layer2.weight),
            ("layer2.bias", &self.layer2.bias),
        ]
    }

    /// SHA-256 over the little-endian parameter bytes in manifest order;
    /// used to assert the model stays frozen.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for (_, m) in self.param_tensors() {
            for &v in m.data() {
                hasher.update(v.to_le_bytes());
            }
        }
        format!("{:x}", hasher.finalize())
    }
}

pub(crate) struct GcnForwardCache {
    pub coeffs: Vec<(u32, u32, f32)>,
    pub pre1: Matrix,
    pub z: Matrix,
}

pub(crate) fn gcn_forward_cached(model: &GCNModel, input: &impl GcnInput) -> GcnForwardCache {
    let coeffs = input.coefficients();
    let x = input.input_features();
    assert_eq!(
        x.cols(),
        model.feature_dim(),
        "input feature width {} vs model width {}",
        x.cols(),
        model.feature_dim()
    );
    let ax = propagate(&coeffs, x);
    let pre1 = model.layer1.forward(&ax);
    let h1 = relu(&pre1);
    let ah1 = propagate(&coeffs, &h1);
    let logits = model.layer2.forward(&ah1);
    let z = softmax_rows(&logits);
    GcnForwardCache { coeffs, pre1, z }
}

/// Per-node class distributions; each row sums to 1.
pub fn gcn_forward(model: &GCNModel, input: &impl GcnInput) -> Matrix {
    gcn_forward_cached(model, input).z
}

/// Exact reverse-mode gradient of a scalar loss with respect to the input
/// features, given the loss gradient w.r.t. the anchor's class distribution.
/// Parameters are frozen: no parameter gradients are produced.
pub fn input_feature_grad(model: &GCNModel, ego: &EgoGraph, upstream: &[f32]) -> Matrix {
    assert_eq!(
        upstream.len(),
        model.num_classes(),
        "upstream width {} vs {} classes",
        upstream.len(),
        model.num_classes()
    );
    let cache = gcn_forward_cached(model, ego);
    input_feature_grad_from_cache(model, &cache, ego.anchor() as usize, upstream)
}

pub(crate) fn input_feature_grad_from_cache(
    model: &GCNModel,
    cache: &GcnForwardCache,
    anchor: usize,
    upstream: &[f32],
) -> Matrix {
    let n = cache.z.rows();
    let mut dz = Matrix::zeros(n, cache.z.cols());
    dz.row_mut(anchor).copy_from_slice(upstream);
    let dlogits = softmax_backward(&cache.z, &dz);
    let dah1 = matmul_a_bt(&dlogits, &model.layer2.weight);
    let dh1 = propagate_transpose(&cache.coeffs, &dah1);
    let dpre1 = relu_backward(&cache.pre1, &dh1);
    let dax = matmul_a_bt(&dpre1, &model.layer1.weight);
    propagate_transpose(&cache.coeffs, &dax)
}

/// GCN training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub learning_rate: f32,
    pub weight_decay: f32,
    pub epochs: usize,
    pub patience: usize,
    pub dropout: f32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 128,
            learning_rate: 1e-2,
            weight_decay: 5e-4,
            epochs: 200,
            patience: 20,
            dropout: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight decay must be nonnegative".into()));
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

// Stream ids carving up the seed space; disjoint from the patcher's.
const STREAM_GNN_INIT: u64 = 1;
const STREAM_GNN_DROPOUT: u64 = 2;

/// One epoch's training and validation cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f32,
    pub valid_loss: f32,
}

/// Full-batch supervised training with AdamW, dropout on the hidden layer,
/// and best-validation-epoch parameter selection. Deterministic per seed.
/// Returns the model and its loss curve.
pub fn train_gnn(g: &Graph, cfg: &TrainConfig) -> Result<(GCNModel, Vec<EpochLoss>)> {
    cfg.validate()?;
    let train = &g.splits().train;
    if train.is_empty() {
        return Err(Error::InvalidArg("empty train split".into()));
    }
    for (name, ids) in [("train", train), ("valid", &g.splits().valid)] {
        if let Some(&v) = ids.iter().find(|&&v| g.label(v) == crate::graph::UNLABELED) {
            return Err(Error::InvalidArg(format!("{name} node {v} is unlabeled")));
        }
    }
    let num_classes = g.num_classes();
    if num_classes < 2 {
        return Err(Error::InvalidArg(format!("{num_classes} classes; need at least 2")));
    }
    {
        let first = g.label(train[0]);
        if train.iter().all(|&v| g.label(v) == first) {
            eprintln!("warning: all training labels are class {first}; proceeding anyway");
        }
    }

    let stream = RngStream::new(cfg.seed, STREAM_GNN_INIT);
    let mut model = GCNModel::new(g.feature_dim(), cfg.hidden, num_classes, stream);
    if cfg.epochs == 0 {
        return Ok((model, Vec::new()));
    }

    let coeffs = g.normalized_adjacency();
    let x = g.features();
    let train_labels: Vec<usize> = train.iter().map(|&v| g.label(v) as usize).collect();
    let valid = &g.splits().valid;
    let valid_labels: Vec<usize> = valid.iter().map(|&v| g.label(v) as usize).collect();

    let param_lens = [
        model.layer1.weight.data().len(),
        model.layer1.bias.data().len(),
        model.layer2.weight.data().len(),
        model.layer2.bias.data().len(),
    ];
    let mut opt = OptimizerState::new(cfg.learning_rate, cfg.weight_decay, &param_lens);
    let dropout_stream = RngStream::new(cfg.seed, STREAM_GNN_DROPOUT);

    let subset_ce = |z_logits: &Matrix, ids: &[u32], labels: &[usize]| -> (f32, Matrix) {
        let mut sub = Matrix::zeros(0, z_logits.cols());
        for &v in ids {
            sub.push_row(z_logits.row(v as usize));
        }
        cross_entropy(&sub, labels)
    };

    let mut best: Option<(f32, GCNModel)> = None;
    let mut best_epoch = 0usize;
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        // Training-mode forward: dropout after the hidden nonlinearity.
        let ax = propagate(&coeffs, x);
        let pre1 = model.layer1.forward(&ax);
        let mut h1 = relu(&pre1);
        let mask = if cfg.dropout > 0.0 {
            let mut rng = dropout_stream.child(epoch as u64).rng();
            let m = dropout_mask(&mut rng, h1.data().len(), cfg.dropout);
            for (v, &k) in h1.data_mut().iter_mut().zip(&m) {
                *v *= k;
            }
            Some(m)
        } else {
            None
        };
        let ah1 = propagate(&coeffs, &h1);
        let logits = model.layer2.forward(&ah1);

        let (train_loss, sub_grad) = subset_ce(&logits, train, &train_labels);
        if !train_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite training loss at epoch {epoch}")));
        }
        let mut dlogits = Matrix::zeros(logits.rows(), logits.cols());
        for (i, &v) in train.iter().enumerate() {
            dlogits.row_mut(v as usize).copy_from_slice(sub_grad.row(i));
        }

        model.layer1.zero_grad();
        model.layer2.zero_grad();
        let dah1 = model.layer2.backward(&ah1, &dlogits);
        let mut dh1 = propagate_transpose(&coeffs, &dah1);
        if let Some(m) = &mask {
            for (v, &k) in dh1.data_mut().iter_mut().zip(m) {
                *v *= k;
            }
        }
        let dpre1 = relu_backward(&pre1, &dh1);
        model.layer1.backward(&ax, &dpre1);

        let g1w = model.layer1.grad_weight.clone();
        let g1b = model.layer1.grad_bias.clone();
        let g2w = model.layer2.grad_weight.clone();
        let g2b = model.layer2.grad_bias.clone();
        optimizer_step(
            &mut opt,
            &mut [
                model.layer1.weight.data_mut(),
                model.layer1.bias.data_mut(),
                model.layer2.weight.data_mut(),
                model.layer2.bias.data_mut(),
            ],
            &[g1w.data(), g1b.data(), g2w.data(), g2b.data()],
        );

        // Validation in inference mode (no dropout), on the updated
        // parameters. Falls back to the train split when no validation
        // split exists.
        let inference_logits = {
            let ax = propagate(&coeffs, x);
            let h1 = relu(&model.layer1.forward(&ax));
            let ah1 = propagate(&coeffs, &h1);
            model.layer2.forward(&ah1)
        };
        let valid_loss = if valid.is_empty() {
            subset_ce(&inference_logits, train, &train_labels).0
        } else {
            subset_ce(&inference_logits, valid, &valid_labels).0
        };
        if !valid_loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite validation loss at epoch {epoch}")));
        }
        curve.push(EpochLoss {
            epoch,
            train_loss,
            valid_loss,
        });
        let improved = best.as_ref().map_or(true, |(b, _)| valid_loss < *b);
        if improved {
            best = Some((valid_loss, model.clone()));
            best_epoch = epoch;
        } else if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    Ok((best.map(|(_, m)| m).unwrap_or(model), curve))
}

/// Writes the model in the GPCK container with model_kind "gcn".
pub fn save_checkpoint(model: &GCNModel, path: &Path) -> Result<()> {
    write_checkpoint(path, "gcn", &model.param_tensors())
}

/// Loads and shape-checks a GCN checkpoint.
pub fn load_checkpoint(path: &Path) -> Result<GCNModel> {
    let (manifest, tensors) = read_checkpoint(path)?;
    if manifest.model_kind != "gcn" {
        return Err(Error::Format(format!(
            "{}: model_kind {:?}, expected \"gcn\"",
            path.display(),
            manifest.model_kind
        )));
    }
    let expected = ["layer1.weight", "layer1.bias", "layer2.weight", "layer2.bias"];
    let names: Vec<&str> = manifest.tensors.iter().map(|t| t.name.as_str()).collect();
    if names != expected {
        return Err(Error::Format(format!(
            "{}: manifest tensors {names:?}, expected {expected:?}",
            path.display()
        )));
    }
    let [w1, b1, w2, b2]: [Matrix; 4] = tensors.try_into().expect("tensor count checked above");
    let (d, h, c) = (w1.rows(), w1.cols(), w2.cols());
    if w2.rows() != h || b1.cols() != h || b2.cols() != c || b1.rows() != 1 || b2.rows() != 1 {
        return Err(Error::Format(format!(
            "{}: layer shapes do not chain: {d}->{h} then {}x{} with biases {}x{}, {}x{}",
            path.display(),
            w2.rows(),
            c,
            b1.rows(),
            b1.cols(),
            b2.rows(),
            b2.cols()
        )));
    }
    Ok(GCNModel {
        layer1: DenseLayer {
            weight: w1,
            grad_weight: Matrix::zeros(d, h),
            bias: b1,
            grad_bias: Matrix::zeros(1, h),
        },
        layer2: DenseLayer {
            weight: w2,
            grad_weight: Matrix::zeros(h, c),
            bias: b2,
            grad_bias: Matrix::zeros(1, c),
        },
    })
}
