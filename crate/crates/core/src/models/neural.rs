//! Fully-connected network with a single sigmoid output, trained by
//! backpropagation on binary cross-entropy.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagespace::BinaryImage;
use crate::models::{check_dataset, LabeledImage};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Sigmoid => sigmoid(z),
        }
    }

    /// Derivative with respect to the pre-activation, given both values.
    fn derivative<T: Scalar>(self, z: T, a: T) -> T {
        match self {
            Activation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => a * (T::one() - a),
        }
    }
}

fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// Dense layer; `weights` is `outputs x inputs`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<T>,
    pub biases: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> DenseLayer<T> {
    fn pre_activation(&self, input: &[T]) -> Vec<T> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.biases)
            .map(|(row, &b)| row.iter().zip(input).fold(b, |acc, (&w, &x)| acc + w * x))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralModel<T> {
    pub width: usize,
    pub height: usize,
    pub layers: Vec<DenseLayer<T>>,
}

/// Gradient-descent schedule. `batch_size: None` means full batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeuralTraining {
    /// Layer sizes from input to output, e.g. `[64, 16, 1]`.
    pub architecture: Vec<usize>,
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub batch_size: Option<usize>,
}

/// Per-layer gradients, shaped like the layers themselves.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradient<T> {
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

struct Trace<T> {
    pre: Vec<Vec<T>>,
    post: Vec<Vec<T>>,
}

impl<T: Scalar> NeuralModel<T> {
    /// Random initialization, uniform in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn initialize(width: usize, height: usize, architecture: &[usize], seed: u64) -> Result<Self> {
        validate_architecture(architecture, width * height)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = architecture.len() - 2;
        let layers = architecture
            .windows(2)
            .enumerate()
            .map(|(i, pair)| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
                DenseLayer {
                    inputs: fan_in,
                    outputs: fan_out,
                    weights: (0..fan_in * fan_out).map(|_| T::of(rng.gen_range(-r..=r))).collect(),
                    biases: vec![T::zero(); fan_out],
                    activation: if i == last { Activation::Sigmoid } else { Activation::Relu },
                }
            })
            .collect();
        Ok(Self { width, height, layers })
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("neural model has no layers".into()));
        }
        let mut expected = self.width * self.height;
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.inputs != expected {
                return Err(Error::InvalidConfig(format!(
                    "layer {i} takes {} inputs, previous layer produces {expected}",
                    layer.inputs
                )));
            }
            if layer.weights.len() != layer.inputs * layer.outputs || layer.biases.len() != layer.outputs {
                return Err(Error::InvalidConfig(format!("layer {i} parameter shapes are inconsistent")));
            }
            if layer.weights.iter().chain(&layer.biases).any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("layer {i} has non-finite parameters")));
            }
            expected = layer.outputs;
        }
        let out = self.layers.last().expect("checked non-empty");
        if out.outputs != 1 || out.activation != Activation::Sigmoid {
            return Err(Error::InvalidConfig(
                "neural model must end in a single sigmoid output".into(),
            ));
        }
        Ok(())
    }

    fn input(image: &BinaryImage) -> Vec<T> {
        image.bits().map(|b| if b { T::one() } else { T::zero() }).collect()
    }

    fn forward(&self, input: Vec<T>) -> Trace<T> {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len() + 1);
        post.push(input);
        for layer in &self.layers {
            let z = layer.pre_activation(post.last().expect("input pushed"));
            post.push(z.iter().map(|&v| layer.activation.apply(v)).collect());
            pre.push(z);
        }
        Trace { pre, post }
    }

    /// Output probability of label 1.
    pub fn probability(&self, image: &BinaryImage) -> T {
        let mut x = Self::input(image);
        for layer in &self.layers {
            x = layer
                .pre_activation(&x)
                .into_iter()
                .map(|z| layer.activation.apply(z))
                .collect();
        }
        x[0]
    }

    /// 1 iff the output probability is strictly above one half.
    pub fn label(&self, image: &BinaryImage) -> bool {
        self.probability(image) > T::of(0.5)
    }

    /// Mean binary cross-entropy (natural log) over `dataset`.
    pub fn loss(&self, dataset: &[LabeledImage]) -> T {
        let total = dataset.iter().fold(T::zero(), |acc, sample| {
            let trace = self.forward(Self::input(&sample.image));
            acc + logit_bce(trace.pre.last().expect("has layers")[0], sample.label)
        });
        total / T::of_count(dataset.len() as u64)
    }

    /// Mean loss and its gradient over `batch`, by backpropagation.
    pub fn loss_and_gradient(&self, batch: &[LabeledImage]) -> (T, Vec<LayerGradient<T>>) {
        let mut grads: Vec<LayerGradient<T>> = self
            .layers
            .iter()
            .map(|l| LayerGradient {
                weights: vec![T::zero(); l.weights.len()],
                biases: vec![T::zero(); l.biases.len()],
            })
            .collect();
        let mut total = T::zero();
        for sample in batch {
            let trace = self.forward(Self::input(&sample.image));
            let logit = trace.pre.last().expect("has layers")[0];
            total = total + logit_bce(logit, sample.label);
            let y = if sample.label { T::one() } else { T::zero() };
            // Sigmoid output with cross-entropy: dL/dz = p - y.
            let mut delta = vec![trace.post.last().expect("has output")[0] - y];
            for (li, layer) in self.layers.iter().enumerate().rev() {
                let input = &trace.post[li];
                let grad = &mut grads[li];
                for (o, &d) in delta.iter().enumerate() {
                    grad.biases[o] = grad.biases[o] + d;
                    let row = &mut grad.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (g, &x) in row.iter_mut().zip(input) {
                        *g = *g + d * x;
                    }
                }
                if li == 0 {
                    break;
                }
                let below = &self.layers[li - 1];
                delta = (0..layer.inputs)
                    .map(|j| {
                        let upstream = delta
                            .iter()
                            .enumerate()
                            .fold(T::zero(), |acc, (o, &d)| acc + d * layer.weights[o * layer.inputs + j]);
                        upstream * below.activation.derivative(trace.pre[li - 1][j], trace.post[li][j])
                    })
                    .collect();
            }
        }
        let n = T::of_count(batch.len() as u64);
        for g in &mut grads {
            g.weights.iter_mut().chain(g.biases.iter_mut()).for_each(|v| *v = *v / n);
        }
        (total / n, grads)
    }

    /// All parameters flattened: per layer, weights then biases.
    pub fn parameters(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_parameters(&mut self, values: &[T]) {
        assert_eq!(values.len(), self.parameter_count(), "parameter count mismatch");
        let mut it = values.iter().copied();
        for l in &mut self.layers {
            for v in l.weights.iter_mut().chain(l.biases.iter_mut()) {
                *v = it.next().expect("length checked");
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn descend(&mut self, grads: &[LayerGradient<T>], rate: T) {
        for (layer, grad) in self.layers.iter_mut().zip(grads) {
            for (w, g) in layer.weights.iter_mut().zip(&grad.weights) {
                *w = *w - rate * *g;
            }
            for (b, g) in layer.biases.iter_mut().zip(&grad.biases) {
                *b = *b - rate * *g;
            }
        }
    }
}

/// Cross-entropy of a sigmoid output written in terms of the logit:
/// `softplus(z) - y z`.
fn logit_bce<T: Scalar>(z: T, label: bool) -> T {
    let softplus = z.max(T::zero()) + (-z.abs()).exp().ln_1p();
    if label {
        softplus - z
    } else {
        softplus
    }
}

fn validate_architecture(architecture: &[usize], pixels: usize) -> Result<()> {
    if architecture.len() < 2 {
        return Err(Error::InvalidConfig(
            "architecture needs an input and an output size".into(),
        ));
    }
    if architecture[0] != pixels {
        return Err(Error::InvalidConfig(format!(
            "architecture input size {} does not match {pixels} pixels",
            architecture[0]
        )));
    }
    if *architecture.last().expect("len checked") != 1 {
        return Err(Error::InvalidConfig("architecture must end in a single output".into()));
    }
    if architecture.contains(&0) {
        return Err(Error::InvalidConfig("architecture has an empty layer".into()));
    }
    Ok(())
}

/// Gradient descent on binary cross-entropy from a seeded initialization.
pub fn train_neural<T: Scalar>(
    dataset: &[LabeledImage],
    schedule: &NeuralTraining,
    seed: u64,
) -> Result<NeuralModel<T>> {
    let (width, height) = check_dataset(dataset)?;
    if !schedule.learning_rate.is_finite() || schedule.learning_rate <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "learning rate must be positive and finite, got {}",
            schedule.learning_rate
        )));
    }
    if schedule.batch_size == Some(0) {
        return Err(Error::InvalidConfig("batch size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = NeuralModel::initialize(width, height, &schedule.architecture, rng.gen())?;
    let rate = T::of(schedule.learning_rate);
    let batch_size = schedule.batch_size.unwrap_or(dataset.len()).min(dataset.len());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut batch = Vec::with_capacity(batch_size);
    for _ in 0..schedule.epochs {
        if batch_size < dataset.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| dataset[i].clone()));
            let (_, grads) = model.loss_and_gradient(&batch);
            model.descend(&grads, rate);
        }
    }
    Ok(model)
}
