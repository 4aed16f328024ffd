//! Dense feed-forward network with ReLU hidden layers and a
//! softmax-cross-entropy head, in 64-bit arithmetic throughout.

extern crate blas_src;

use ndarray::{Array1, Array2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Layer sizes `[D, h1, ..., C]`. Hidden activation is ReLU, the output
/// head is softmax-cross-entropy; neither is configurable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    layer_sizes: Vec<usize>,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least input and output sizes, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidSpec(format!("zero-width layer in {layer_sizes:?}")));
        }
        Ok(NetworkSpec { layer_sizes })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of weight layers.
    pub fn depth(&self) -> usize {
        self.layer_sizes.len() - 1
    }
}

/// One dense layer: `W` is `out x in`, bias is `out`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// Ordered dense layers; the last layer is the pre-softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
}

impl Network {
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidSpec("network needs at least one layer".into()));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].input_dim() != pair[0].output_dim() {
                return Err(Error::InvalidSpec(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    l,
                    pair[0].output_dim(),
                    l + 1,
                    pair[1].input_dim()
                )));
            }
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.output_dim() {
                return Err(Error::InvalidSpec(format!(
                    "layer {l} bias length {} vs {} outputs",
                    layer.bias.len(),
                    layer.output_dim()
                )));
            }
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn spec(&self) -> NetworkSpec {
        let mut sizes = vec![self.layers[0].input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.output_dim()));
        NetworkSpec { layer_sizes: sizes }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }
}

/// Per-layer `dW`/`db` mirroring a network's shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Gradients {
        Gradients {
            layers: net
                .layers()
                .iter()
                .map(|l| (Array2::zeros(l.weights.dim()), Array1::zeros(l.bias.len())))
                .collect(),
        }
    }
}

/// Glorot-uniform weights, zero biases, drawn from a seeded ChaCha8
/// stream layer by layer (weights row-major, then the next layer).
/// Identical `(spec, seed)` gives bitwise-identical parameters.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sizes = spec.layer_sizes();
    let layers = sizes
        .windows(2)
        .map(|pair| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            let weights =
                Array2::from_shape_simple_fn((fan_out, fan_in), || dist.sample(&mut rng));
            DenseLayer {
                weights,
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Network { layers }
}

/// Activations recorded by [`forward`], sufficient for [`backward`]:
/// the input to every layer (`a[0]` is the batch itself).
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layer_inputs: Vec<Array2<f64>>,
}

/// Forward pass over a `B x D` batch; returns pre-softmax logits.
pub fn forward(net: &Network, batch: &Array2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
    if batch.ncols() != net.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "batch has {} columns, network expects {}",
            batch.ncols(),
            net.input_dim()
        )));
    }
    let depth = net.layers().len();
    let mut layer_inputs = Vec::with_capacity(depth);
    let mut a = batch.clone();
    for (l, layer) in net.layers().iter().enumerate() {
        let mut z = a.dot(&layer.weights.t());
        z += &layer.bias;
        layer_inputs.push(a);
        if l + 1 < depth {
            z.mapv_inplace(|v| v.max(0.0));
        }
        a = z;
    }
    Ok((a, ForwardCache { layer_inputs }))
}

/// Mean softmax-cross-entropy loss and its logit gradient
/// `(softmax - onehot) / B`, computed with max-subtraction.
pub fn softmax_xent(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let batch = logits.nrows();
    assert_eq!(batch, labels.len(), "one label per logits row");
    let mut dlogits = logits.clone();
    let mut loss = 0.0;
    for (mut row, &label) in dlogits.rows_mut().into_iter().zip(labels) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        loss -= (row[label] / sum).ln();
        row.mapv_inplace(|v| v / sum);
        row[label] -= 1.0;
    }
    let scale = 1.0 / batch as f64;
    dlogits *= scale;
    (loss * scale, dlogits)
}

/// Exact backprop through the cached forward pass. ReLU subgradient at 0
/// is taken as 0.
pub fn backward(net: &Network, cache: &ForwardCache, dlogits: &Array2<f64>) -> Result<Gradients> {
    let depth = net.layers().len();
    if cache.layer_inputs.len() != depth {
        return Err(Error::ShapeMismatch(format!(
            "cache has {} layers, network has {depth}",
            cache.layer_inputs.len()
        )));
    }
    for (l, (input, layer)) in cache.layer_inputs.iter().zip(net.layers()).enumerate() {
        if input.ncols() != layer.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "cache layer {l} input width {} vs network {}",
                input.ncols(),
                layer.input_dim()
            )));
        }
    }
    if dlogits.ncols() != net.output_dim() || dlogits.nrows() != cache.layer_inputs[0].nrows() {
        return Err(Error::ShapeMismatch(format!(
            "dlogits {:?} vs batch {} x {} outputs",
            dlogits.dim(),
            cache.layer_inputs[0].nrows(),
            net.output_dim()
        )));
    }
    let mut grads = Vec::with_capacity(depth);
    let mut delta = dlogits.clone();
    for l in (0..depth).rev() {
        let a = &cache.layer_inputs[l];
        let dw = delta.t().dot(a);
        let db = delta.sum_axis(Axis(0));
        if l > 0 {
            let mut da = delta.dot(&net.layers()[l].weights);
            // a is post-ReLU, so a > 0 iff the pre-activation was > 0
            da.zip_mut_with(a, |d, &act| {
                if act <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = da;
        }
        grads.push((dw, db));
    }
    grads.reverse();
    Ok(Gradients { layers: grads })
}

/// Accuracy, mean loss, and a `C x C` confusion matrix (rows = true
/// class, columns = argmax prediction, ties to the lowest index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub confusion: Vec<Vec<u64>>,
}

const EVAL_CHUNK: usize = 1024;

pub fn evaluate(net: &Network, d: &Dataset) -> Result<EvalReport> {
    if d.feature_dim() != net.input_dim() {
        return Err(Error::ShapeMismatch(format!(
            "dataset dim {} vs network input {}",
            d.feature_dim(),
            net.input_dim()
        )));
    }
    if d.class_count() != net.output_dim() {
        return Err(Error::ShapeMismatch(format!(
            "dataset has {} classes, network outputs {}",
            d.class_count(),
            net.output_dim()
        )));
    }
    let classes = d.class_count();
    let mut confusion = vec![vec![0u64; classes]; classes];
    let mut correct = 0u64;
    let mut loss_sum = 0.0;
    let n = d.len();
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let batch = d.features().slice(ndarray::s![start..end, ..]).to_owned();
        let labels = &d.labels()[start..end];
        let (logits, _) = forward(net, &batch)?;
        let (loss, _) = softmax_xent(&logits, labels);
        loss_sum += loss * (end - start) as f64;
        for (row, &label) in logits.rows().into_iter().zip(labels) {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            confusion[label][best] += 1;
            if best == label {
                correct += 1;
            }
        }
        start = end;
    }
    Ok(EvalReport {
        accuracy: correct as f64 / n as f64,
        mean_loss: loss_sum / n as f64,
        confusion,
    })
}
