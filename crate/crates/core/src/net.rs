//! The embedding network: a fully connected MLP with ReLU hidden layers
//! and a linear output, trained with manually derived backpropagation and
//! Adam. The reference architecture is [d-100-50-50-2] with a
//! two-dimensional embedding, but layer sizes are configuration.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub enum NetError {
    DimensionMismatch { expected: usize, got: usize },
    ShapeMismatch,
    NonFinite,
}

impl fmt::Display for NetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DimensionMismatch { expected, got } => {
                write!(f, "input has {got} features, network expects {expected}")
            }
            Self::ShapeMismatch => write!(f, "parameter/gradient shapes do not agree"),
            Self::NonFinite => write!(f, "non-finite value in network computation"),
        }
    }
}

impl core::error::Error for NetError {}

/// Hidden-layer nonlinearity. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
}

/// Weights and biases of the embedding MLP. Layer `l` maps
/// `layer_sizes[l] -> layer_sizes[l+1]` via `z = a·W + b` with `W` stored
/// `in x out` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    pub activation: Activation,
}

/// Per-layer gradients, same shapes as [`MlpParams`].
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Pre-activations and post-activations retained by the forward pass for
/// the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input batch; `activations[l+1]` the output
    /// of layer `l` after its nonlinearity.
    activations: Vec<Matrix>,
    /// `pre_activations[l]` is `z` of layer `l` before the nonlinearity.
    pre_activations: Vec<Matrix>,
}

impl ForwardCache {
    /// Smallest |pre-activation| over the hidden layers; the distance to
    /// the nearest ReLU kink. Finite-difference checks resample instances
    /// where this is tiny.
    pub fn min_abs_hidden_preactivation(&self) -> f64 {
        let mut min = f64::INFINITY;
        for z in &self.pre_activations[..self.pre_activations.len().saturating_sub(1)] {
            for v in z.as_slice() {
                min = min.min(v.abs());
            }
        }
        min
    }
}

impl MlpParams {
    /// Random initialization: weights uniform in
    /// `±sqrt(6/(fan_in+fan_out))`, biases zero.
    pub fn init<R: Rng>(layer_sizes: &[usize], rng: &mut R) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output sizes");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(Matrix::from_fn(fan_in, fan_out, |_, _| {
                rng.gen_range(-bound..=bound)
            }));
            biases.push(vec![0.0; fan_out]);
        }
        Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation: Activation::Relu,
        }
    }

    /// All-zero parameters with the given layout.
    pub fn zeros(layer_sizes: &[usize]) -> Self {
        assert!(layer_sizes.len() >= 2);
        let weights = layer_sizes
            .windows(2)
            .map(|w| Matrix::zeros(w[0], w[1]))
            .collect();
        let biases = layer_sizes.windows(2).map(|w| vec![0.0; w[1]]).collect();
        Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            activation: Activation::Relu,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn param_count(&self) -> usize {
        self.weights
            .iter()
            .map(|w| w.rows() * w.cols())
            .sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Flattens to a single vector: per layer, weights row-major then
    /// bias. The checkpoint format and the optimizers use this order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }

    /// Writes a flat vector (in [`flatten`](Self::flatten) order) back
    /// into the structured parameters.
    pub fn assign_from_flat(&mut self, flat: &[f64]) -> Result<(), NetError> {
        if flat.len() != self.param_count() {
            return Err(NetError::ShapeMismatch);
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let n = w.rows() * w.cols();
            w.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
            let nb = b.len();
            b.copy_from_slice(&flat[off..off + nb]);
            off += nb;
        }
        Ok(())
    }
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            weights: params
                .weights
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.add_assign(b);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// Same layout as [`MlpParams::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            out.extend_from_slice(b);
        }
        out
    }
}

/// Runs the batch through the network. Returns the embedding
/// (`batch x output_dim`) and the cache consumed by [`mlp_backward`].
pub fn mlp_forward(params: &MlpParams, x: &Matrix) -> Result<(Matrix, ForwardCache), NetError> {
    if x.cols() != params.input_dim() {
        return Err(NetError::DimensionMismatch {
            expected: params.input_dim(),
            got: x.cols(),
        });
    }
    let n_layers = params.num_layers();
    let mut activations = Vec::with_capacity(n_layers + 1);
    let mut pre_activations = Vec::with_capacity(n_layers);
    activations.push(x.clone());
    for l in 0..n_layers {
        let a = &activations[l];
        let mut z = a.matmul(&params.weights[l]);
        for i in 0..z.rows() {
            let row = z.row_mut(i);
            for (v, b) in row.iter_mut().zip(&params.biases[l]) {
                *v += b;
            }
        }
        let out = if l + 1 < n_layers {
            let mut h = z.clone();
            for v in h.as_mut_slice() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            h
        } else {
            z.clone()
        };
        pre_activations.push(z);
        activations.push(out);
    }
    let embedding = activations.last().unwrap().clone();
    if !embedding.is_finite() {
        return Err(NetError::NonFinite);
    }
    Ok((embedding, ForwardCache { activations, pre_activations }))
}

/// Reverse-mode pass: given the cotangent of the embedding, returns exact
/// gradients with respect to every parameter and to the input batch.
pub fn mlp_backward(
    params: &MlpParams,
    cache: &ForwardCache,
    d_embedding: &Matrix,
) -> Result<(MlpGrads, Matrix), NetError> {
    let n_layers = params.num_layers();
    if cache.activations.len() != n_layers + 1 || cache.pre_activations.len() != n_layers {
        return Err(NetError::ShapeMismatch);
    }
    let out = cache.activations.last().unwrap();
    if d_embedding.rows() != out.rows() || d_embedding.cols() != out.cols() {
        return Err(NetError::ShapeMismatch);
    }

    let mut grads = MlpGrads::zeros_like(params);
    let mut g = d_embedding.clone(); // d loss / d a_{l+1}
    for l in (0..n_layers).rev() {
        // d loss / d z_{l+1}: hidden layers gate through the ReLU mask
        let dz = if l + 1 < n_layers {
            let z = &cache.pre_activations[l];
            Matrix::from_fn(g.rows(), g.cols(), |i, j| {
                if z.get(i, j) > 0.0 {
                    g.get(i, j)
                } else {
                    0.0
                }
            })
        } else {
            g.clone()
        };
        let a = &cache.activations[l];
        grads.weights[l] = a.transpose().matmul(&dz);
        for j in 0..dz.cols() {
            grads.biases[l][j] = (0..dz.rows()).map(|i| dz.get(i, j)).sum();
        }
        g = dz.matmul(&params.weights[l].transpose());
    }
    Ok((grads, g))
}

/// Adam state for one flat parameter group. Weight decay enters as an
/// extra `decay·param` gradient term before the moment update.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

impl AdamState {
    pub fn new(n_params: usize, learning_rate: f64, weight_decay: f64) -> Self {
        Self {
            step: 0,
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
            weight_decay,
        }
    }
}

/// One Adam update with bias correction, in place.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [f64],
    grads: &[f64],
) -> Result<(), NetError> {
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(NetError::ShapeMismatch);
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i] + state.weight_decay * params[i];
        let m = &mut state.first_moment[i];
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        let v = &mut state.second_moment[i];
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        params[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}
