//! Fully connected policy network with LeakyReLU hidden layers and a scaled
//! tanh output. All parameters live in one flat vector: for each layer the
//! row-major `out x in` weight matrix followed by the `out` biases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, DriveError, Result};

pub const LEAKY_SLOPE: f64 = 0.01;
pub const OUTPUT_SCALE: f64 = 9.81;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpPolicy {
    sizes: Vec<usize>,
    params: Vec<f64>,
    /// Raw inputs are divided elementwise by these before the first layer.
    input_scale: Vec<f64>,
    output_scale: f64,
    leaky_slope: f64,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct ForwardCache {
    /// `acts[0]` is the scaled input, `acts[k]` the output of layer `k`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

impl MlpPolicy {
    /// Uniform fan-in initialization: every weight and bias of a layer with
    /// fan-in `m` is drawn from U(-1/sqrt(m), 1/sqrt(m)).
    pub fn init(sizes: &[usize], input_scale: Vec<f64>, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes, input_scale)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut off = 0;
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            let len = w[1] * (w[0] + 1);
            for x in &mut net.params[off..off + len] {
                *x = rng.gen_range(-bound..bound);
            }
            off += len;
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], input_scale: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(invalid(format!("invalid layer sizes {sizes:?}")));
        }
        if input_scale.len() != sizes[0] {
            return Err(invalid(format!("{} input scales for input width {}", input_scale.len(), sizes[0])));
        }
        if input_scale.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(invalid("input scales must be positive and finite"));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; param_count(sizes)],
            input_scale,
            output_scale: OUTPUT_SCALE,
            leaky_slope: LEAKY_SLOPE,
        })
    }

    pub fn from_parts(sizes: &[usize], params: Vec<f64>, input_scale: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes, input_scale)?;
        net.set_params(params)?;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_scale(&self) -> &[f64] {
        &self.input_scale
    }

    pub fn output_scale(&self) -> f64 {
        self.output_scale
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(DriveError::ShapeMismatch(format!(
                "{} parameters for layer sizes {:?} (need {})",
                params.len(),
                self.sizes,
                self.params.len()
            )));
        }
        if params.iter().any(|x| !x.is_finite()) {
            return Err(invalid("non-finite parameter"));
        }
        self.params = params;
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut cache = ForwardCache::default();
        self.forward_cached(input, &mut cache)
    }

    pub fn forward_cached(&self, input: &[f64], cache: &mut ForwardCache) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(invalid(format!("input of length {} for width {}", input.len(), self.input_dim())));
        }
        if let Some(k) = input.iter().position(|x| !x.is_finite()) {
            return Err(invalid(format!("non-finite network input at index {k}")));
        }
        cache.acts.clear();
        cache.pre.clear();
        cache.acts.push(input.iter().zip(&self.input_scale).map(|(x, s)| x / s).collect());
        let layers = self.sizes.len() - 1;
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_out * n_in];
            let b = &self.params[off + n_out * n_in..off + n_out * (n_in + 1)];
            off += n_out * (n_in + 1);
            let x = cache.acts.last().unwrap();
            let z: Vec<f64> = (0..n_out)
                .map(|r| b[r] + w[r * n_in..(r + 1) * n_in].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            let y = if l + 1 == layers {
                z.iter().map(|z| z.tanh()).collect()
            } else {
                z.iter().map(|&z| leaky(z, self.leaky_slope)).collect()
            };
            cache.pre.push(z);
            cache.acts.push(y);
        }
        Ok(cache.acts.last().unwrap().iter().map(|y| y * self.output_scale).collect())
    }

    /// Reverse pass for `grad_out = dL/d(output)`. Adds `dL/dparams` into
    /// `grad_params` and returns `dL/d(raw input)`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64], grad_params: &mut [f64]) -> Vec<f64> {
        assert_eq!(grad_params.len(), self.params.len());
        assert_eq!(grad_out.len(), self.output_dim());
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += w[1] * (w[0] + 1);
        }
        let mut delta: Vec<f64> = grad_out
            .iter()
            .zip(&cache.acts[layers])
            .map(|(g, y)| g * self.output_scale * (1.0 - y * y))
            .collect();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let x = &cache.acts[l];
            let w = &self.params[off..off + n_out * n_in];
            {
                let (gw, gb) = grad_params[off..off + n_out * (n_in + 1)].split_at_mut(n_out * n_in);
                for r in 0..n_out {
                    let d = delta[r];
                    if d != 0.0 {
                        for (g, xi) in gw[r * n_in..(r + 1) * n_in].iter_mut().zip(x) {
                            *g += d * xi;
                        }
                    }
                    gb[r] += d;
                }
            }
            let mut gx = vec![0.0; n_in];
            for r in 0..n_out {
                let d = delta[r];
                if d != 0.0 {
                    for (g, wi) in gx.iter_mut().zip(&w[r * n_in..(r + 1) * n_in]) {
                        *g += d * wi;
                    }
                }
            }
            if l > 0 {
                let slope = self.leaky_slope;
                delta = gx.iter().zip(&cache.pre[l - 1]).map(|(g, &z)| if z > 0.0 { *g } else { g * slope }).collect();
            } else {
                delta = gx;
            }
        }
        delta.iter().zip(&self.input_scale).map(|(g, s)| g / s).collect()
    }
}
