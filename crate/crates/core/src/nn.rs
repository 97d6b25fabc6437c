//! Dense feed-forward regression network.
//!
//! A [`ModelWeights`] is a stack of fully connected layers. Hidden layers use
//! ReLU and the output layer is linear, so the network can regress unbounded
//! coordinates. Training minimizes the per-coordinate mean absolute error and
//! gradients are computed analytically by backpropagation.
//!
//! Parameters have a canonical flat order: layer by layer, the weight matrix
//! in row-major order (`out_dim × in_dim`) followed by the bias vector. The
//! optimizer, the federated average and the wire codec all rely on it.

use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Hidden widths used for localization models.
pub const DEFAULT_HIDDEN: [usize; 4] = [20, 10, 10, 10];

/// Labels are planar coordinates.
pub const LABEL_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Activation::Linear => z,
        }
    }

    /// Derivative, with the subgradient at the ReLU kink taken as 0.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// Shape descriptor for a [`ModelWeights`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpArch {
    /// ReLU hidden layers and a linear output.
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden_dims,
            output_dim,
            hidden_activation: Activation::Relu,
            output_activation: Activation::Linear,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Localization network: `input_dim` access points to a 2-D position.
    pub fn localization(input_dim: usize, hidden_dims: Vec<usize>) -> Result<Self> {
        Self::new(input_dim, hidden_dims, LABEL_DIM)
    }

    /// The 20 x 10 x 10 x 10 localization network.
    pub fn default_for(input_dim: usize) -> Result<Self> {
        Self::localization(input_dim, DEFAULT_HIDDEN.to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(invalid("input_dim must be at least 1"));
        }
        if self.output_dim == 0 {
            return Err(invalid("output_dim must be at least 1"));
        }
        if let Some(pos) = self.hidden_dims.iter().position(|&d| d == 0) {
            return Err(invalid(format!("hidden layer {pos} has width 0")));
        }
        Ok(())
    }

    /// `(in_dim, out_dim)` for every layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_dims);
        dims.push(self.output_dim);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes()
            .iter()
            .map(|&(i, o)| i * o + o)
            .sum()
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer == self.hidden_dims.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }
}

/// One fully connected layer. `weights[o * in_dim + i]` connects input `i`
/// to output `o`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    #[inline]
    pub fn weight(&self, out: usize, input: usize) -> f64 {
        self.weights[out * self.in_dim + input]
    }
}

fn layers_zeroed(arch: &MlpArch) -> Vec<Layer> {
    arch.layer_shapes()
        .into_iter()
        .map(|(i, o)| Layer::zeros(i, o))
        .collect()
}

fn flat_iter(layers: &[Layer]) -> impl Iterator<Item = &f64> {
    layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
}

fn flat_iter_mut(layers: &mut [Layer]) -> impl Iterator<Item = &mut f64> {
    layers
        .iter_mut()
        .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
}

fn same_shape(a: &[Layer], b: &[Layer]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.in_dim == y.in_dim && x.out_dim == y.out_dim)
}

/// The full parameter set of a network together with its architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    arch: MlpArch,
    layers: Vec<Layer>,
}

impl ModelWeights {
    pub fn zeros(arch: &MlpArch) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            layers: layers_zeroed(arch),
            arch: arch.clone(),
        })
    }

    /// Builds a model from explicit layers, checking that they chain.
    pub fn from_layers(arch: MlpArch, layers: Vec<Layer>) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(invalid(format!(
                "architecture has {} layers, got {}",
                shapes.len(),
                layers.len()
            )));
        }
        for (idx, ((i, o), layer)) in shapes.iter().zip(&layers).enumerate() {
            if layer.in_dim != *i
                || layer.out_dim != *o
                || layer.weights.len() != i * o
                || layer.bias.len() != *o
            {
                return Err(invalid(format!("layer {idx} does not match {i}->{o}")));
            }
        }
        let model = Self { arch, layers };
        if !model.is_finite() {
            return Err(invalid("model contains non-finite parameters"));
        }
        Ok(model)
    }

    /// Rebuilds a model from its canonical flat parameter order.
    pub fn from_flat(arch: &MlpArch, flat: &[f64]) -> Result<Self> {
        arch.validate()?;
        if flat.len() != arch.param_count() {
            return Err(invalid(format!(
                "expected {} parameters, got {}",
                arch.param_count(),
                flat.len()
            )));
        }
        let mut model = Self::zeros(arch)?;
        for (dst, src) in model.params_mut().zip(flat) {
            *dst = *src;
        }
        if !model.is_finite() {
            return Err(invalid("model contains non-finite parameters"));
        }
        Ok(model)
    }

    pub fn arch(&self) -> &MlpArch {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        flat_iter(&self.layers)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        flat_iter_mut(&mut self.layers)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.params().copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    pub fn same_shape(&self, other: &ModelWeights) -> bool {
        self.arch == other.arch && same_shape(&self.layers, &other.layers)
    }

    pub fn gradients_match(&self, grads: &Gradients) -> bool {
        same_shape(&self.layers, &grads.layers)
    }
}

/// One partial derivative per model parameter, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(model: &ModelWeights) -> Self {
        Self {
            layers: layers_zeroed(&model.arch),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        flat_iter(&self.layers)
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        flat_iter_mut(&mut self.layers)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Glorot-uniform weights and zero biases, deterministic in `seed`.
pub fn init_weights(arch: &MlpArch, seed: u64) -> Result<ModelWeights> {
    let mut model = ModelWeights::zeros(arch)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut model.layers {
        let limit = glorot_limit(layer.in_dim, layer.out_dim);
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite positive limit");
        for w in &mut layer.weights {
            *w = dist.sample(&mut rng);
        }
    }
    Ok(model)
}

/// `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Reusable activation buffers for one forward pass.
#[derive(Debug, Clone)]
pub struct Scratch {
    // pre[l] and post[l] are the pre- and post-activation outputs of layer l.
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Scratch {
    pub fn new(arch: &MlpArch) -> Self {
        let shapes = arch.layer_shapes();
        Self {
            pre: shapes.iter().map(|&(_, o)| vec![0.0; o]).collect(),
            post: shapes.iter().map(|&(_, o)| vec![0.0; o]).collect(),
        }
    }

    fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

// The input layer skips zero features: normalized fingerprints are mostly
// zeros (undetected access points), and those terms contribute nothing.
fn forward_into(model: &ModelWeights, input: &[f64], scratch: &mut Scratch) {
    let n_layers = model.layers.len();
    for l in 0..n_layers {
        let layer = &model.layers[l];
        let act = model.arch.activation_of(l);
        let (prev_post, rest_post) = scratch.post.split_at_mut(l);
        let source: &[f64] = if l == 0 { input } else { &prev_post[l - 1] };
        let pre = &mut scratch.pre[l];
        pre.copy_from_slice(&layer.bias);
        if l == 0 {
            for (i, &x) in source.iter().enumerate() {
                if x != 0.0 {
                    for (o, z) in pre.iter_mut().enumerate() {
                        *z += layer.weights[o * layer.in_dim + i] * x;
                    }
                }
            }
        } else {
            for (o, z) in pre.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                *z += row.iter().zip(source).map(|(w, a)| w * a).sum::<f64>();
            }
        }
        for (a, &z) in rest_post[0].iter_mut().zip(pre.iter()) {
            *a = act.apply(z);
        }
    }
}

fn check_input(model: &ModelWeights, input: &[f64]) -> Result<()> {
    if input.len() != model.arch.input_dim {
        return Err(invalid(format!(
            "input has {} features, model expects {}",
            input.len(),
            model.arch.input_dim
        )));
    }
    if input.iter().any(|x| !x.is_finite()) {
        return Err(invalid("input contains non-finite values"));
    }
    Ok(())
}

/// Network output for one input vector.
pub fn forward(model: &ModelWeights, input: &[f64]) -> Result<Vec<f64>> {
    check_input(model, input)?;
    let mut scratch = Scratch::new(&model.arch);
    forward_into(model, input, &mut scratch);
    Ok(scratch.output().to_vec())
}

/// Allocation-free variant of [`forward`] for evaluation loops.
pub fn forward_with<'s>(
    model: &ModelWeights,
    input: &[f64],
    scratch: &'s mut Scratch,
) -> Result<&'s [f64]> {
    check_input(model, input)?;
    forward_into(model, input, scratch);
    Ok(scratch.output())
}

/// Mean of `|prediction - label|` over every sample and every coordinate.
pub fn loss_mae<P: AsRef<[f64]>, L: AsRef<[f64]>>(predictions: &[P], labels: &[L]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(invalid("loss over an empty batch"));
    }
    if predictions.len() != labels.len() {
        return Err(invalid(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut sum = 0.0;
    let mut terms = 0usize;
    for (p, y) in predictions.iter().zip(labels) {
        let (p, y) = (p.as_ref(), y.as_ref());
        if p.len() != y.len() {
            return Err(invalid("prediction and label widths differ"));
        }
        sum += p.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<f64>();
        terms += p.len();
    }
    Ok(sum / terms as f64)
}

#[inline]
fn sign(r: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Gradient of the batch-mean [`loss_mae`] with respect to every parameter,
/// together with the loss itself.
pub fn backward<X: AsRef<[f64]>, Y: AsRef<[f64]>>(
    model: &ModelWeights,
    inputs: &[X],
    labels: &[Y],
) -> Result<(Gradients, f64)> {
    if inputs.is_empty() {
        return Err(invalid("backward over an empty batch"));
    }
    if inputs.len() != labels.len() {
        return Err(invalid(format!(
            "{} inputs vs {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    let arch = &model.arch;
    let n_layers = model.layers.len();
    let mut grads = Gradients::zeros_like(model);
    let mut scratch = Scratch::new(arch);
    let mut deltas: Vec<Vec<f64>> = arch
        .layer_shapes()
        .iter()
        .map(|&(_, o)| vec![0.0; o])
        .collect();
    let mut abs_sum = 0.0;

    for (x, y) in inputs.iter().zip(labels) {
        let (x, y) = (x.as_ref(), y.as_ref());
        check_input(model, x)?;
        if y.len() != arch.output_dim {
            return Err(invalid(format!(
                "label has {} coordinates, model outputs {}",
                y.len(),
                arch.output_dim
            )));
        }
        forward_into(model, x, &mut scratch);

        let out = n_layers - 1;
        let out_act = arch.activation_of(out);
        for c in 0..arch.output_dim {
            let r = scratch.post[out][c] - y[c];
            abs_sum += r.abs();
            deltas[out][c] = sign(r) * out_act.derivative(scratch.pre[out][c]);
        }

        for l in (0..n_layers).rev() {
            let layer = &model.layers[l];
            let glayer = &mut grads.layers[l];
            let source: &[f64] = if l == 0 { x } else { &scratch.post[l - 1] };
            for (o, &d) in deltas[l].iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                glayer.bias[o] += d;
                let row = &mut glayer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, &a) in row.iter_mut().zip(source) {
                    if a != 0.0 {
                        *g += d * a;
                    }
                }
            }
            if l > 0 {
                let act = arch.activation_of(l - 1);
                let (lower, upper) = deltas.split_at_mut(l);
                let below = &mut lower[l - 1];
                for (i, db) in below.iter_mut().enumerate() {
                    let deriv = act.derivative(scratch.pre[l - 1][i]);
                    if deriv == 0.0 {
                        *db = 0.0;
                        continue;
                    }
                    let mut acc = 0.0;
                    for (o, &d) in upper[0].iter().enumerate() {
                        acc += layer.weights[o * layer.in_dim + i] * d;
                    }
                    *db = acc * deriv;
                }
            }
        }
    }

    let terms = (inputs.len() * arch.output_dim) as f64;
    for g in grads.values_mut() {
        *g /= terms;
    }
    Ok((grads, abs_sum / terms))
}
