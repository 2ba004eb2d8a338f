//! Multilayer perceptron over [`Real`] scalars, parameterized by a flat
//! vector so optimizers and checkpoints treat every network identically.

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::error::{domain, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Softplus,
}

/// Network shape: layer sizes from input to output plus the hidden-layer
/// nonlinearity. The output layer is linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub sizes: Vec<usize>,
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(sizes: Vec<usize>, activation: Activation) -> Self {
        MlpSpec { sizes, activation }
    }

    /// Flat parameter count: sum over layers of (fan_in + 1) * fan_out.
    pub fn param_len(&self) -> usize {
        self.sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }
}

/// Xavier-uniform initialization, deterministic under seed.
pub fn init_params(spec: &MlpSpec, seed: u64) -> Vec<f64> {
    let mut rng = Rng::new(seed);
    let mut params = Vec::with_capacity(spec.param_len());
    for w in spec.sizes.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            params.push(rng.range(-bound, bound));
        }
        // biases start at zero
        params.extend(std::iter::repeat_n(0.0, fan_out));
    }
    params
}

fn activate<S: Real>(x: S, a: Activation) -> S {
    match a {
        Activation::Tanh => x.tanh(),
        Activation::Relu => x.relu(),
        Activation::Softplus => x.softplus(),
    }
}

/// Forward pass. `params` is the flat vector laid out per layer as row-major
/// weights `[out][in]` followed by biases `[out]`.
pub fn mlp_forward<S: Real>(spec: &MlpSpec, params: &[S], input: &[S]) -> Result<Vec<S>> {
    if input.len() != spec.input_len() {
        return Err(domain(format!(
            "mlp input has {} features, expected {}",
            input.len(),
            spec.input_len()
        )));
    }
    if params.len() != spec.param_len() {
        return Err(domain(format!(
            "mlp params have {} entries, expected {}",
            params.len(),
            spec.param_len()
        )));
    }
    let mut current: Vec<S> = input.to_vec();
    let mut offset = 0;
    let layers = spec.sizes.len() - 1;
    for (layer, w) in spec.sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let weights = &params[offset..offset + fan_in * fan_out];
        let biases = &params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
        offset += (fan_in + 1) * fan_out;

        let mut next = Vec::with_capacity(fan_out);
        for o in 0..fan_out {
            let row = &weights[o * fan_in..(o + 1) * fan_in];
            let mut acc = row[0] * current[0];
            for i in 1..fan_in {
                acc = acc + row[i] * current[i];
            }
            acc = acc + biases[o];
            if layer + 1 < layers {
                acc = activate(acc, spec.activation);
            }
            next.push(acc);
        }
        current = next;
    }
    Ok(current)
}
