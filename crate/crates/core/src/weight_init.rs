//! Gaussian weight initialisation scaled by input spike density, link
//! density and firing threshold, plus a Kaiming-style fallback.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::SpikeTensor;
use crate::error::{Error, Result};
use crate::sparse::SparseLayer;

/// `sqrt(pi) / (sqrt(2) * exp(-1/2))`, the step-function gain factor.
pub fn step_gain() -> f64 {
    std::f64::consts::PI.sqrt() / (std::f64::consts::SQRT_2 * (-0.5f64).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SswiParams {
    /// Fraction of input slots carrying a spike, in `(0, 1]`.
    pub s_t: f64,
    pub threshold: f64,
    /// Input width of each layer, first to last.
    pub fan_in: Vec<usize>,
    /// Structural sparsity of each layer; the last entry is ignored.
    pub sparsity: Vec<f64>,
}

impl SswiParams {
    pub fn layers(&self) -> usize {
        self.fan_in.len()
    }

    fn validate(&self) -> Result<()> {
        if !(self.s_t > 0.0 && self.s_t <= 1.0) {
            return Err(Error::invalid(format!("S_t must lie in (0, 1], got {}", self.s_t)));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::invalid(format!("threshold must be > 0, got {}", self.threshold)));
        }
        if self.fan_in.is_empty() || self.fan_in.len() != self.sparsity.len() {
            return Err(Error::DimensionMismatch {
                context: "per-layer sparsity",
                expected: self.fan_in.len(),
                actual: self.sparsity.len(),
            });
        }
        if self.fan_in.contains(&0) {
            return Err(Error::invalid("layer input width must be >= 1"));
        }
        Ok(())
    }
}

/// Variance for layer `l` (1-based) of an `L`-layer network.
pub fn sswi_sigma2(l: usize, p: &SswiParams) -> Result<f64> {
    p.validate()?;
    let layers = p.layers();
    if l == 0 || l > layers {
        return Err(Error::invalid(format!("layer index {l} outside 1..={layers}")));
    }
    let n = p.fan_in[l - 1] as f64;
    let density = 1.0 - p.sparsity[l - 1];
    let theta2 = p.threshold * p.threshold;
    if l == layers && l > 1 {
        return Ok(step_gain() * theta2 / n);
    }
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::invalid(format!(
            "layer {l} sparsity {} leaves no links",
            p.sparsity[l - 1]
        )));
    }
    if l == 1 {
        Ok(p.s_t / (n * density))
    } else {
        Ok(step_gain() * theta2 / (n * density))
    }
}

/// Fills every present link with an independent `N(0, sigma2)` draw.
pub fn fill_normal(layer: &mut SparseLayer, sigma2: f64, seed: u64) -> Result<()> {
    let normal = Normal::new(0.0, sigma2.sqrt())
        .map_err(|e| Error::invalid(format!("bad variance {sigma2}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for w in layer.weights_mut() {
        *w = normal.sample(&mut rng);
    }
    Ok(())
}

pub fn sswi_init(layer: &mut SparseLayer, l: usize, p: &SswiParams, seed: u64) -> Result<()> {
    let sigma2 = sswi_sigma2(l, p)?;
    fill_normal(layer, sigma2, seed)
}

/// `N(0, 2 / fan_in)` over the dense input width.
pub fn kaiming_init(layer: &mut SparseLayer, seed: u64) -> Result<()> {
    let sigma2 = 2.0 / layer.cols().max(1) as f64;
    fill_normal(layer, sigma2, seed)
}

/// Fraction of ones in the tensor, floored at `1e-4`.
pub fn estimate_st(encoded: &SpikeTensor) -> Result<f64> {
    if encoded.is_empty() {
        return Err(Error::invalid("cannot estimate spike density of an empty tensor"));
    }
    let ones = encoded.count_ones() as f64;
    let total = encoded.as_slice().len() as f64;
    Ok((ones / total).clamp(1e-4, 1.0))
}
