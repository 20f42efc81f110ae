//! Spike, synaptic-operation and energy accounting.
//!
//! A synaptic operation (SOP) is one spike delivered over one present link,
//! so each spike costs the out-degree of its neuron in the next layer. Input
//! spikes count, and feed the first layer.

use serde::{Deserialize, Serialize};

use crate::data::SpikeTensor;
use crate::error::{Error, Result};
use crate::network::{argmax, ForwardTrace, SnnNetwork};

/// Energy per synaptic operation on the reference neuromorphic chip, in pJ.
pub const DEFAULT_PJ_PER_SOP: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub spike_count: u64,
    pub sops: u64,
    pub firing_rate: f64,
    pub link_sparsity: f64,
    pub node_sparsity: f64,
    pub energy_joules: f64,
}

impl EnergyReport {
    pub const CSV_HEADER: &'static str = "spike_count,sops,firing_rate,link_sparsity,node_sparsity,energy_joules";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6},{:.6e}",
            self.spike_count, self.sops, self.firing_rate, self.link_sparsity, self.node_sparsity, self.energy_joules
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct serialises")
    }
}

/// Total spikes (input and hidden) and SOPs recorded in one trace.
pub fn count_sops(trace: &ForwardTrace, net: &SnnNetwork) -> Result<(u64, u64)> {
    let hidden = net.layers().len() - 1;
    if trace.spikes.len() != hidden || trace.timesteps() != net.timesteps() {
        return Err(Error::Incompatible(format!(
            "trace has {} hidden layers over {} steps, network has {hidden} over {}",
            trace.spikes.len(),
            trace.timesteps(),
            net.timesteps()
        )));
    }
    let mut spikes = 0u64;
    let mut sops = 0u64;
    for l in 0..=hidden {
        let pre = trace.presynaptic(l);
        let layer = net.layer(l);
        for frame in pre {
            if frame.len() != layer.cols() {
                return Err(Error::Incompatible(format!(
                    "trace width {} does not match layer {l} input width {}",
                    frame.len(),
                    layer.cols()
                )));
            }
            for (i, &s) in frame.iter().enumerate() {
                if s != 0.0 {
                    spikes += 1;
                    sops += layer.column(i).0.len() as u64;
                }
            }
        }
    }
    Ok((spikes, sops))
}

/// `sops * pj_per_sop * 1e-12` joules.
pub fn energy(sops: f64, pj_per_sop: f64) -> Result<f64> {
    if sops < 0.0 || pj_per_sop < 0.0 || !pj_per_sop.is_finite() {
        return Err(Error::invalid(format!(
            "energy needs non-negative inputs, got {sops} SOPs at {pj_per_sop} pJ"
        )));
    }
    Ok(sops * pj_per_sop * 1e-12)
}

/// Neuron-timestep slots of the input and every hidden population.
fn slots(trace: &ForwardTrace) -> u64 {
    let per_step: usize = trace.input.first().map_or(0, Vec::len)
        + trace.spikes.iter().map(|l| l.first().map_or(0, Vec::len)).sum::<usize>();
    (per_step * trace.timesteps()) as u64
}

/// Spikes per neuron-timestep slot over the input and hidden populations.
pub fn firing_rate(trace: &ForwardTrace) -> Result<f64> {
    let total = slots(trace);
    if total == 0 {
        return Err(Error::invalid("firing rate of an empty trace"));
    }
    let spikes: u64 = trace.spike_counts.iter().sum();
    Ok(spikes as f64 / total as f64)
}

/// Fraction of allocated hidden neurons that are inactive.
pub fn node_sparsity(net: &SnnNetwork) -> f64 {
    let hidden = &net.layers()[..net.layers().len() - 1];
    let allocated: usize = hidden.iter().map(|l| l.rows()).sum();
    if allocated == 0 {
        return 0.0;
    }
    let inactive: usize = hidden
        .iter()
        .map(|l| l.row_active().iter().filter(|&&a| !a).count())
        .sum();
    inactive as f64 / allocated as f64
}

/// Link sparsity over the sparsified (non-output) layers.
pub fn link_sparsity(net: &SnnNetwork) -> f64 {
    sparsity_of(&net.layers()[..net.layers().len() - 1])
}

/// Link sparsity over every layer, the output layer included.
pub fn overall_link_sparsity(net: &SnnNetwork) -> f64 {
    sparsity_of(net.layers())
}

fn sparsity_of(layers: &[crate::sparse::SparseLayer]) -> f64 {
    let allocated: usize = layers.iter().map(|l| l.rows() * l.cols()).sum();
    if allocated == 0 {
        return 0.0;
    }
    let present: usize = layers.iter().map(|l| l.num_links()).sum();
    1.0 - present as f64 / allocated as f64
}

/// Accuracy and energy accounting over a whole encoded dataset.
pub fn assess(net: &SnnNetwork, input: &SpikeTensor, labels: &[usize], pj_per_sop: f64) -> Result<(f64, EnergyReport)> {
    if labels.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty dataset"));
    }
    if labels.len() != input.samples() {
        return Err(Error::DimensionMismatch {
            context: "evaluation labels",
            expected: input.samples(),
            actual: labels.len(),
        });
    }
    let (mut correct, mut spikes, mut sops, mut total_slots) = (0usize, 0u64, 0u64, 0u64);
    for (s, &y) in labels.iter().enumerate() {
        let (logits, trace) = net.forward(input, s)?;
        if argmax(&logits) == y {
            correct += 1;
        }
        let (sp, op) = count_sops(&trace, net)?;
        spikes += sp;
        sops += op;
        total_slots += slots(&trace);
    }
    let report = EnergyReport {
        spike_count: spikes,
        sops,
        firing_rate: spikes as f64 / total_slots.max(1) as f64,
        link_sparsity: link_sparsity(net),
        node_sparsity: node_sparsity(net),
        energy_joules: energy(sops as f64, pj_per_sop)?,
    };
    Ok((correct as f64 / labels.len() as f64, report))
}
