use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Activation;
use crate::error::{ensure_len, Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasMode {
    /// Biases realized as an appended constant-1 input to every layer,
    /// drawn with the same scale as the weights.
    #[default]
    Matched,
    None,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parametrization {
    /// Weights ~ N(0, σ_w²/fan_in), no forward scaling.
    #[default]
    Standard,
    /// Weights ~ N(0, σ_w²); the output of hidden layer `l` is multiplied by
    /// `1/√N_l` before entering the next layer. The input layer is unscaled.
    Ntk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub bias_mode: BiasMode,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub parametrization: Parametrization,
}

fn default_init_scale() -> f64 {
    1.0
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, activation: Activation) -> Self {
        Self {
            input_dim,
            hidden,
            activation,
            bias_mode: BiasMode::Matched,
            init_scale: 1.0,
            parametrization: Parametrization::Standard,
        }
    }

    pub fn with_bias(mut self, bias_mode: BiasMode) -> Self {
        self.bias_mode = bias_mode;
        self
    }

    pub fn with_parametrization(mut self, p: Parametrization) -> Self {
        self.parametrization = p;
        self
    }

    pub fn with_init_scale(mut self, s: f64) -> Self {
        self.init_scale = s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::invalid("input_dim must be at least 1"));
        }
        if self.hidden.is_empty() {
            return Err(Error::invalid("at least one hidden layer is required"));
        }
        if let Some(w) = self.hidden.iter().position(|&w| w == 0) {
            return Err(Error::invalid(format!("hidden layer {w} has width 0")));
        }
        if !(self.init_scale > 0.0) || !self.init_scale.is_finite() {
            return Err(Error::invalid(format!("init_scale must be positive, got {}", self.init_scale)));
        }
        Ok(())
    }

    #[inline]
    fn bias(&self) -> usize {
        match self.bias_mode {
            BiasMode::Matched => 1,
            BiasMode::None => 0,
        }
    }

    pub fn depth(&self) -> usize {
        self.hidden.len()
    }

    /// `(fan_out, fan_in)` of weight block `l`, bias column included.
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        let fan_in = if l == 0 { self.input_dim } else { self.hidden[l - 1] } + self.bias();
        let fan_out = if l == self.hidden.len() { 1 } else { self.hidden[l] };
        (fan_out, fan_in)
    }

    pub fn layer_offsets(&self) -> Vec<usize> {
        let mut off = vec![0];
        for l in 0..=self.hidden.len() {
            let (o, i) = self.layer_shape(l);
            off.push(off[l] + o * i);
        }
        off
    }

    pub fn n_params(&self) -> usize {
        *self.layer_offsets().last().unwrap()
    }

    /// Number of last-layer features (readout fan-in).
    pub fn n_features(&self) -> usize {
        self.layer_shape(self.hidden.len()).1
    }

    /// Forward multiplier applied to the activations entering block `l`.
    pub fn forward_scale(&self, l: usize) -> f64 {
        match self.parametrization {
            Parametrization::Standard => 1.0,
            Parametrization::Ntk if l == 0 => 1.0,
            Parametrization::Ntk => 1.0 / (self.hidden[l - 1] as f64).sqrt(),
        }
    }

    /// Gaussian initialization from a seed.
    pub fn init_params(&self, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(self.n_params());
        for l in 0..=self.hidden.len() {
            let (o, i) = self.layer_shape(l);
            let std = match self.parametrization {
                Parametrization::Standard => self.init_scale / (i as f64).sqrt(),
                Parametrization::Ntk => self.init_scale,
            };
            let normal = Normal::new(0.0, std).map_err(|e| Error::invalid(e.to_string()))?;
            params.extend((0..o * i).map(|_| normal.sample(&mut rng)));
        }
        Ok(params)
    }
}

/// Activations recorded during a forward pass.
pub(crate) struct Trace {
    /// Scaled (and bias-augmented) inputs to every block, `0..=L`.
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activations of the hidden layers, `0..L`.
    pub pre: Vec<Vec<f64>>,
    pub output: f64,
}

pub(crate) fn forward(arch: &MlpArchitecture, params: &[f64], x: &[f64]) -> Result<Trace> {
    ensure_len("mlp input", arch.input_dim, x.len())?;
    ensure_len("mlp parameters", arch.n_params(), params.len())?;
    let act = arch.activation;
    let bias = arch.bias();
    let offsets = arch.layer_offsets();
    let depth = arch.hidden.len();
    let mut inputs = Vec::with_capacity(depth + 1);
    let mut pre = Vec::with_capacity(depth);
    let mut current: Vec<f64> = x.to_vec();
    if bias == 1 {
        current.push(1.0);
    }
    let mut output = 0.0;
    for l in 0..=depth {
        let (o, i) = arch.layer_shape(l);
        let w = &params[offsets[l]..offsets[l + 1]];
        let z: Vec<f64> = (0..o)
            .map(|r| w[r * i..(r + 1) * i].iter().zip(&current).map(|(a, b)| a * b).sum())
            .collect();
        inputs.push(std::mem::take(&mut current));
        if l == depth {
            output = z[0];
            break;
        }
        let s = arch.forward_scale(l + 1);
        current = z.iter().map(|&v| s * act.eval(v)).collect();
        if bias == 1 {
            current.push(1.0);
        }
        pre.push(z);
    }
    Ok(Trace { inputs, pre, output })
}

/// Gradients of the scalar output with respect to parameters and input.
pub(crate) fn backward(arch: &MlpArchitecture, params: &[f64], trace: &Trace, want_params: bool) -> (Vec<f64>, Vec<f64>) {
    let act = arch.activation;
    let offsets = arch.layer_offsets();
    let depth = arch.hidden.len();
    let mut grad = if want_params { vec![0.0; params.len()] } else { Vec::new() };
    // d output / d z for the block being processed; starts at the readout.
    let mut delta = vec![1.0];
    for l in (0..=depth).rev() {
        let (o, i) = arch.layer_shape(l);
        let w = &params[offsets[l]..offsets[l + 1]];
        let input = &trace.inputs[l];
        if want_params {
            let g = &mut grad[offsets[l]..offsets[l + 1]];
            for r in 0..o {
                for c in 0..i {
                    g[r * i + c] = delta[r] * input[c];
                }
            }
        }
        let mut d_in = vec![0.0; i];
        for r in 0..o {
            for c in 0..i {
                d_in[c] += w[r * i + c] * delta[r];
            }
        }
        let s = arch.forward_scale(l);
        if l == 0 {
            let dx = d_in[..arch.input_dim].iter().map(|v| v * s).collect();
            return (grad, dx);
        }
        let z = &trace.pre[l - 1];
        delta = z.iter().enumerate().map(|(k, &zk)| d_in[k] * s * act.derivative(zk)).collect();
    }
    unreachable!("block 0 always returns")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_layout() {
        let a = MlpArchitecture::new(3, vec![4, 2], Activation::Tanh);
        assert_eq!(a.layer_shape(0), (4, 4));
        assert_eq!(a.layer_shape(1), (2, 5));
        assert_eq!(a.layer_shape(2), (1, 3));
        assert_eq!(a.n_params(), 16 + 10 + 3);
        assert_eq!(a.init_params(1).unwrap().len(), 29);
    }

    #[test]
    fn validation() {
        assert!(MlpArchitecture::new(1, vec![], Activation::Silu).validate().is_err());
        assert!(MlpArchitecture::new(1, vec![0], Activation::Silu).validate().is_err());
        assert!(MlpArchitecture::new(1, vec![3], Activation::Silu).with_init_scale(0.0).validate().is_err());
    }

    #[test]
    fn init_is_seeded() {
        let a = MlpArchitecture::new(2, vec![5], Activation::Silu);
        assert_eq!(a.init_params(7).unwrap(), a.init_params(7).unwrap());
        assert_ne!(a.init_params(7).unwrap(), a.init_params(8).unwrap());
    }
}
