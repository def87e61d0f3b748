//! Single fully connected layer with an elementwise activation, mapping the
//! two-channel initial estimate to a permittivity map.

mod checkpoint;
mod glow;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::em::PermittivityMap;
use crate::error::{Error, Result};
use crate::par;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use glow::{glow, glow_param_grads, glow_prime, GlowParams};

/// Sign applied to the imaginary output channel: positive activations mean
/// loss, i.e. negative Im ε under e^{+jωt}.
pub const IMAG_SIGN: f64 = -1.0;

const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Glow,
    Relu,
    LeakyRelu,
    Tanh,
    Softsign,
}

impl Activation {
    pub const ALL: [Activation; 5] = [
        Activation::Glow,
        Activation::Relu,
        Activation::LeakyRelu,
        Activation::Tanh,
        Activation::Softsign,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Glow => "glow",
            Activation::Relu => "relu",
            Activation::LeakyRelu => "leaky-relu",
            Activation::Tanh => "tanh",
            Activation::Softsign => "softsign",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Glow => 0,
            Activation::Relu => 1,
            Activation::LeakyRelu => 2,
            Activation::Tanh => 3,
            Activation::Softsign => 4,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.code() == code)
    }

    /// φ(x). `glow` is only read by [`Activation::Glow`].
    #[inline]
    pub fn apply(self, x: f64, glow: &GlowParams) -> f64 {
        match self {
            Activation::Glow => glow::glow(x, glow),
            _ => alt_activation(self, x),
        }
    }

    /// φ'(x).
    #[inline]
    pub fn derivative(self, x: f64, glow: &GlowParams) -> f64 {
        match self {
            Activation::Glow => glow::glow_prime(x, glow),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Softsign => 1.0 / (1.0 + x.abs()).powi(2),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        match key.as_str() {
            "glow" => Ok(Activation::Glow),
            "relu" => Ok(Activation::Relu),
            "leaky-relu" | "leakyrelu" => Ok(Activation::LeakyRelu),
            "tanh" => Ok(Activation::Tanh),
            "softsign" => Ok(Activation::Softsign),
            _ => Err(Error::Config(format!(
                "unknown activation '{s}' (expected glow, relu, leaky-relu, tanh or softsign)"
            ))),
        }
    }
}

/// Standard activations used for comparison runs. GLOW needs its parameters
/// and goes through [`Activation::apply`]; here it falls back to c = σ = 1.
pub fn alt_activation(kind: Activation, x: f64) -> f64 {
    match kind {
        Activation::Glow => glow::glow(x, &GlowParams::default()),
        Activation::Relu => x.max(0.0),
        Activation::LeakyRelu => {
            if x > 0.0 {
                x
            } else {
                LEAKY_SLOPE * x
            }
        }
        Activation::Tanh => x.tanh(),
        Activation::Softsign => x / (1.0 + x.abs()),
    }
}

/// Weights of the layer. `weight` is the row-major 2N×2N matrix acting on
/// `[Re ε⁽⁰⁾; Im ε⁽⁰⁾]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub n_side: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub glow: GlowParams,
}

/// Pre-activations `z = W x + b` and outputs `φ(z)` of one forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
    pub out: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(n_side: usize) -> Self {
        let d = 2 * n_side * n_side;
        Self {
            n_side,
            weight: vec![0.0; d * d],
            bias: vec![0.0; d],
            glow: GlowParams::default(),
        }
    }

    /// Width 2N of the layer.
    pub fn width(&self) -> usize {
        self.bias.len()
    }

    /// Number of scalar parameters: weights, biases, log c and log σ.
    pub fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len() + 2
    }

    pub fn validate(&self) -> Result<()> {
        let d = 2 * self.n_side * self.n_side;
        if self.weight.len() != d * d || self.bias.len() != d {
            return Err(Error::Shape(format!(
                "network for a {0}x{0} grid needs {1} weights and {2} biases, got {3} and {4}",
                self.n_side,
                d * d,
                d,
                self.weight.len(),
                self.bias.len()
            )));
        }
        if !self.is_finite() {
            return Err(Error::Config("network parameters contain non-finite values".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(&self.bias).all(|v| v.is_finite())
            && self.glow.log_c.is_finite()
            && self.glow.log_sigma.is_finite()
    }

    /// Parameter `k` in the flat order weights, biases, log c, log σ.
    pub fn get(&self, k: usize) -> f64 {
        let (w, b) = (self.weight.len(), self.bias.len());
        match k {
            _ if k < w => self.weight[k],
            _ if k < w + b => self.bias[k - w],
            _ if k == w + b => self.glow.log_c,
            _ if k == w + b + 1 => self.glow.log_sigma,
            _ => panic!("parameter index {k} out of range"),
        }
    }

    pub fn set(&mut self, k: usize, v: f64) {
        let (w, b) = (self.weight.len(), self.bias.len());
        match k {
            _ if k < w => self.weight[k] = v,
            _ if k < w + b => self.bias[k - w] = v,
            _ if k == w + b => self.glow.log_c = v,
            _ if k == w + b + 1 => self.glow.log_sigma = v,
            _ => panic!("parameter index {k} out of range"),
        }
    }
}

/// Seeded initialisation: weights uniform in ±1/√(2N), zero bias, c = σ = 1.
pub fn net_init(seed: u64, n_side: usize) -> NetworkParams {
    let mut p = NetworkParams::zeros(n_side);
    let bound = 1.0 / (p.width() as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for w in &mut p.weight {
        *w = rng.random_range(-bound..=bound);
    }
    p
}

/// Two-channel input vector `[Re; Im]` of a map, row-major per channel,
/// scaled to unit Euclidean norm.
///
/// Adam moves every weight by about `lr` per step, so a pre-activation moves
/// by about `lr · ‖x‖₁`. Unit scaling keeps that step independent of the grid
/// size and of the magnitude of the initial estimate.
pub fn to_channels(map: &PermittivityMap) -> Vec<f64> {
    let n = map.n_cells();
    let mut x = vec![0.0; 2 * n];
    for (k, v) in map.values.iter().enumerate() {
        x[k] = v.re;
        x[n + k] = v.im;
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    x
}

/// Reassembles network outputs into ε = 1 + out_re + j·s·out_im.
pub fn from_channels(n_side: usize, out: &[f64]) -> Result<PermittivityMap> {
    let n = n_side * n_side;
    if out.len() != 2 * n {
        return Err(Error::Shape(format!("expected {} outputs, got {}", 2 * n, out.len())));
    }
    let flat = (0..n)
        .map(|k| Complex64::new(1.0 + out[k], IMAG_SIGN * out[n + k]))
        .collect();
    PermittivityMap::from_flat(n_side, flat)
}

/// Forward pass keeping the intermediate values needed for backpropagation.
pub fn forward_detailed(params: &NetworkParams, activation: Activation, input: &PermittivityMap) -> Result<Activations> {
    params.validate()?;
    input.check_n_side(params.n_side)?;
    let x = to_channels(input);
    let d = params.width();
    let glow = params.glow;
    let pre: Vec<f64> = par::map_indexed(d, |i| {
        let row = &params.weight[i * d..(i + 1) * d];
        params.bias[i] + row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>()
    });
    let out = pre.iter().map(|&z| activation.apply(z, &glow)).collect();
    Ok(Activations { input: x, pre, out })
}

/// ε̂ = φ(W [Re ε⁽⁰⁾; Im ε⁽⁰⁾] + b) reassembled as a complex map.
pub fn net_forward(params: &NetworkParams, activation: Activation, input: &PermittivityMap) -> Result<PermittivityMap> {
    let a = forward_detailed(params, activation, input)?;
    from_channels(params.n_side, &a.out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_input(n_side: usize) -> PermittivityMap {
        let flat = (0..n_side * n_side)
            .map(|k| Complex64::new(1.0 + 0.01 * k as f64, -0.005 * (k % 3) as f64))
            .collect();
        PermittivityMap::from_flat(n_side, flat).unwrap()
    }

    #[test]
    fn zero_network_gives_background() {
        let p = NetworkParams::zeros(4);
        for a in Activation::ALL {
            let out = net_forward(&p, a, &small_input(4)).unwrap();
            assert_eq!(out, PermittivityMap::background(4));
        }
    }

    #[test]
    fn init_is_seeded() {
        let a = net_init(5, 4);
        assert_eq!(a, net_init(5, 4));
        assert_ne!(a.weight, net_init(6, 4).weight);
        assert_eq!(a.glow.c(), 1.0);
        assert_eq!(a.glow.sigma(), 1.0);
        assert!(a.bias.iter().all(|&b| b == 0.0));
        let bound = 1.0 / 32f64.sqrt();
        assert!(a.weight.iter().all(|w| w.abs() <= bound));
        assert_eq!(a.weight.len(), 32 * 32);
    }

    #[test]
    fn forward_is_deterministic() {
        let p = net_init(1, 5);
        let x = small_input(5);
        let a = net_forward(&p, Activation::Glow, &x).unwrap();
        let b = net_forward(&p, Activation::Glow, &x).unwrap();
        for (u, v) in a.values.iter().zip(b.values.iter()) {
            assert_eq!(u.re.to_bits(), v.re.to_bits());
            assert_eq!(u.im.to_bits(), v.im.to_bits());
        }
    }

    #[test]
    fn output_varies_smoothly_with_weight_scale() {
        let base = net_init(3, 4);
        let x = small_input(4);
        let at = |s: f64| {
            let mut p = base.clone();
            p.weight.iter_mut().for_each(|w| *w *= s);
            net_forward(&p, Activation::Glow, &x).unwrap()
        };
        let mut prev = at(1.0);
        for k in 1..=400 {
            let cur = at(1.0 + k as f64 / 400.0);
            let jump = cur
                .values
                .iter()
                .zip(prev.values.iter())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(jump < 0.02, "jump {jump} at step {k}");
            prev = cur;
        }
    }

    #[test]
    fn imaginary_channel_sign() {
        let mut p = NetworkParams::zeros(1);
        p.bias = vec![0.0, 0.5];
        let out = net_forward(&p, Activation::Glow, &PermittivityMap::background(1)).unwrap();
        assert_eq!(out.values[[0, 0]], Complex64::new(1.0, -0.125));
    }

    #[test]
    fn flat_access_round_trips() {
        let mut p = net_init(2, 2);
        let n = p.n_params();
        assert_eq!(n, 64 + 8 + 2);
        for k in 0..n {
            p.set(k, k as f64);
        }
        assert_eq!(p.weight[10], 10.0);
        assert_eq!(p.bias[0], 64.0);
        assert_eq!(p.glow.log_c, 72.0);
        assert_eq!(p.get(73), 73.0);
    }

    #[test]
    fn alternative_activations() {
        assert_eq!(alt_activation(Activation::Relu, -1.0), 0.0);
        assert_eq!(alt_activation(Activation::Softsign, 1.0), 0.5);
        assert_eq!(alt_activation(Activation::LeakyRelu, -2.0), -0.02);
        let g = GlowParams::default();
        let h = 1e-5;
        for a in Activation::ALL {
            for &x in &[-2.3, -0.4, 0.3, 1.7] {
                let fd = (a.apply(x + h, &g) - a.apply(x - h, &g)) / (2.0 * h);
                assert!((fd - a.derivative(x, &g)).abs() < 1e-8, "{a} at {x}");
            }
        }
    }

    #[test]
    fn activation_names_parse() {
        for a in Activation::ALL {
            assert_eq!(a.name().parse::<Activation>().unwrap(), a);
        }
        assert_eq!("LeakyReLU".parse::<Activation>().unwrap(), Activation::LeakyRelu);
        assert!("swish".parse::<Activation>().is_err());
    }
}
