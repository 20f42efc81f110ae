//! Leaky integrate-and-fire dynamics and surrogate gradients.
//!
//! One step of the membrane update is
//!
//! ```text
//! v'[j] = (1 - z_prev[j]) * alpha * v[j] + sum_i W[j, i] * x[i]
//! z[j]  = U(v'[j] - theta)
//! ```
//!
//! so the reset to zero after a spike happens through the `(1 - z_prev)` factor
//! on the following step. `U(0) = 1`: a neuron exactly at threshold fires.

use crate::error::{Error, Result};
use crate::sparse::SparseLayer;

/// Membrane potentials and last emitted spikes of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LifState {
    pub v: Vec<f64>,
    pub z_prev: Vec<f64>,
}

impl LifState {
    pub fn zeros(width: usize) -> Self {
        Self {
            v: vec![0.0; width],
            z_prev: vec![0.0; width],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateKind {
    /// Boxcar of half-width `width` around the threshold.
    Rectangular,
    /// Sigmoid with slope `1 / width`. Also replaces the step function in the
    /// forward pass so that finite differences see the same function the
    /// analytic gradient differentiates.
    SmoothTest,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateSpec {
    pub kind: SurrogateKind,
    pub width: f64,
}

impl SurrogateSpec {
    pub fn new(kind: SurrogateKind, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::invalid(format!("surrogate width must be > 0, got {width}")));
        }
        Ok(Self { kind, width })
    }

    /// Rectangular window of width `0.5 * threshold`.
    pub fn rectangular_for(threshold: f64) -> Self {
        Self {
            kind: SurrogateKind::Rectangular,
            width: 0.5 * threshold,
        }
    }

    /// Forward activation used when training with this surrogate.
    #[inline]
    pub fn activate(&self, v: f64, threshold: f64) -> f64 {
        match self.kind {
            SurrogateKind::Rectangular => heaviside(v - threshold),
            SurrogateKind::SmoothTest => sigmoid((v - threshold) / self.width),
        }
    }
}

#[inline]
pub fn heaviside(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Pseudo-derivative of the spike function at membrane potential `v`.
#[inline]
pub fn surrogate_grad(v: f64, threshold: f64, spec: &SurrogateSpec) -> f64 {
    match spec.kind {
        SurrogateKind::Rectangular => {
            if (v - threshold).abs() <= spec.width {
                1.0 / (2.0 * spec.width)
            } else {
                0.0
            }
        }
        SurrogateKind::SmoothTest => {
            let s = sigmoid((v - threshold) / spec.width);
            s * (1.0 - s) / spec.width
        }
    }
}

/// Advances one spiking layer by one time step and returns the emitted spikes
/// together with the new state.
pub fn lif_step(layer: &SparseLayer, x_t: &[f64], state: &LifState) -> Result<(Vec<f64>, LifState)> {
    if state.v.len() != layer.rows() || state.z_prev.len() != layer.rows() {
        return Err(Error::DimensionMismatch {
            context: "lif_step state",
            expected: layer.rows(),
            actual: state.v.len().max(state.z_prev.len()),
        });
    }
    let drive = layer.masked_matvec(x_t)?;
    let alpha = layer.decay();
    let theta = layer.threshold();
    let v: Vec<f64> = state
        .v
        .iter()
        .zip(&state.z_prev)
        .zip(&drive)
        .map(|((&v, &z), &i)| (1.0 - z) * alpha * v + i)
        .collect();
    let z: Vec<f64> = v.iter().map(|&v| heaviside(v - theta)).collect();
    Ok((z.clone(), LifState { v, z_prev: z }))
}
