//! Feed-forward networks: GELU MLPs, Glorot initialization, inverted
//! dropout, and the feed-forward autoencoder used for latent dynamics.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::diffcore::{dot, Real, StoreBuilder};

/// GELU in its exact error-function form: `0.5 x (1 + erf(x / sqrt(2)))`.
/// Smooth everywhere, with clean closed-form derivatives at every nesting
/// depth, which the differentiation engine relies on.
pub fn gelu<T: Real>(x: T) -> T {
    let half = T::constant(0.5);
    let arg = x.scale(std::f64::consts::FRAC_1_SQRT_2);
    half * x * (T::one() + arg.erf())
}

/// Shape of one MLP: affine/GELU chain with a final affine layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub hidden_layers: usize,
    pub output_dim: usize,
}

impl MlpSpec {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        MlpSpec {
            input_dim,
            hidden_dim: 30,
            hidden_layers: 3,
            output_dim,
        }
    }

    pub fn with_hidden(mut self, hidden_dim: usize, hidden_layers: usize) -> Self {
        self.hidden_dim = hidden_dim;
        self.hidden_layers = hidden_layers;
        self
    }

    /// (fan_in, fan_out) per affine layer, in order.
    fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 1);
        let mut prev = self.input_dim;
        for _ in 0..self.hidden_layers {
            dims.push((prev, self.hidden_dim));
            prev = self.hidden_dim;
        }
        dims.push((prev, self.output_dim));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(i, o)| i * o + o)
            .sum()
    }

    pub fn hidden_unit_count(&self) -> usize {
        self.hidden_layers * self.hidden_dim
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Layer {
    w_off: usize,
    b_off: usize,
    rows: usize,
    cols: usize,
}

/// An MLP wired to named slices of a parameter store.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub spec: MlpSpec,
    layers: Vec<Layer>,
}

impl Mlp {
    /// Reserve Glorot-uniform weights and zero biases in `builder` under
    /// `prefix`, drawing from `rng`.
    pub fn init(spec: MlpSpec, prefix: &str, builder: &mut StoreBuilder, rng: &mut StdRng) -> Self {
        let mut layers = Vec::new();
        for (li, (fan_in, fan_out)) in spec.layer_dims().into_iter().enumerate() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            let w_off = builder.push(format!("{prefix}.w{li}"), &[fan_out, fan_in], &w);
            let b_off = builder.push(format!("{prefix}.b{li}"), &[fan_out], &vec![0.0; fan_out]);
            layers.push(Layer {
                w_off,
                b_off,
                rows: fan_out,
                cols: fan_in,
            });
        }
        Mlp { spec, layers }
    }

    /// Forward pass. `mask`, when given, scales the hidden activations
    /// (inverted-dropout values, one per hidden unit across all layers).
    pub fn forward_masked<T: Real>(&self, params: &[T], x: &[T], mask: Option<&[f64]>) -> Vec<T> {
        debug_assert_eq!(x.len(), self.spec.input_dim);
        let mut cur: Vec<T> = x.to_vec();
        let mut unit = 0;
        let last = self.layers.len() - 1;
        for (li, layer) in self.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.rows);
            for i in 0..layer.rows {
                let row = &params[layer.w_off + i * layer.cols..layer.w_off + (i + 1) * layer.cols];
                let mut y = params[layer.b_off + i] + dot(row, &cur);
                if li != last {
                    y = gelu(y);
                    if let Some(m) = mask {
                        y = y.scale(m[unit]);
                    }
                    unit += 1;
                }
                next.push(y);
            }
            cur = next;
        }
        cur
    }

    pub fn forward<T: Real>(&self, params: &[T], x: &[T]) -> Vec<T> {
        self.forward_masked(params, x, None)
    }

    /// Forward pass of a single-output network.
    pub fn forward_scalar<T: Real>(&self, params: &[T], x: &[T]) -> T {
        debug_assert_eq!(self.spec.output_dim, 1);
        self.forward(params, x)[0]
    }
}

/// Inverted-dropout state. Masks are drawn only in training mode and are
/// scaled by `1/(1-rate)` so the expected output equals the input.
#[derive(Clone, Debug)]
pub struct DropoutState {
    pub rate: f64,
    pub training: bool,
    rng: StdRng,
}

impl DropoutState {
    pub fn new(rate: f64, seed: u64, training: bool) -> Self {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0,1)");
        DropoutState {
            rate,
            training,
            rng: StdRng::seed_from_u64(seed),
        }
    }

    /// Draw one mask value per unit: 0 with probability `rate`, else
    /// `1/(1-rate)`. Identity in evaluation mode or at rate 0.
    pub fn draw_mask(&mut self, units: usize) -> Vec<f64> {
        if !self.training || self.rate == 0.0 {
            return vec![1.0; units];
        }
        let keep = 1.0 / (1.0 - self.rate);
        (0..units)
            .map(|_| {
                if self.rng.gen::<f64>() < self.rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect()
    }
}

/// Mask values for a fixed (seed, epoch, window) key, independent of
/// evaluation order. Used by the trainer so that chunked parallel loss
/// evaluation stays deterministic.
pub fn dropout_mask_keyed(rate: f64, units: usize, key: u64) -> Vec<f64> {
    if rate == 0.0 {
        return vec![1.0; units];
    }
    let keep = 1.0 / (1.0 - rate);
    let mut state = key;
    (0..units)
        .map(|_| {
            state = splitmix64(state);
            let u = (state >> 11) as f64 / (1u64 << 53) as f64;
            if u < rate {
                0.0
            } else {
                keep
            }
        })
        .collect()
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Apply dropout to an activation vector.
pub fn dropout_forward<T: Real>(h: &[T], state: &mut DropoutState) -> Vec<T> {
    let mask = state.draw_mask(h.len());
    h.iter()
        .zip(mask)
        .map(|(&v, m)| v.scale(m))
        .collect()
}

/// Feed-forward autoencoder shape: encoder `d -> l`, decoder `l -> d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    pub data_dim: usize,
    pub latent_dim: usize,
    pub encoder: MlpSpec,
    pub decoder: MlpSpec,
}

impl AutoencoderSpec {
    pub fn new(data_dim: usize, latent_dim: usize, hidden_dim: usize, hidden_layers: usize) -> Self {
        assert!(latent_dim <= data_dim, "latent dim must not exceed data dim");
        AutoencoderSpec {
            data_dim,
            latent_dim,
            encoder: MlpSpec::new(data_dim, latent_dim).with_hidden(hidden_dim, hidden_layers),
            decoder: MlpSpec::new(latent_dim, data_dim).with_hidden(hidden_dim, hidden_layers),
        }
    }
}

/// Autoencoder wired into a parameter store.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub spec: AutoencoderSpec,
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl Autoencoder {
    pub fn init(
        spec: AutoencoderSpec,
        prefix: &str,
        builder: &mut StoreBuilder,
        rng: &mut StdRng,
    ) -> Self {
        let encoder = Mlp::init(spec.encoder.clone(), &format!("{prefix}.enc"), builder, rng);
        let decoder = Mlp::init(spec.decoder.clone(), &format!("{prefix}.dec"), builder, rng);
        Autoencoder {
            spec,
            encoder,
            decoder,
        }
    }

    pub fn encode<T: Real>(&self, params: &[T], q: &[T]) -> Vec<T> {
        self.encoder.forward(params, q)
    }

    pub fn decode<T: Real>(&self, params: &[T], z: &[T]) -> Vec<T> {
        self.decoder.forward(params, z)
    }
}
