//! End-to-end runs: build the initial sparse network, train it epoch by
//! epoch with topology evolution in between, and write plot-ready logs.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{RunConfig, TopologyInit, WeightInit};
use crate::data::{bernoulli_encode, load_idx, LabeledDataset, SpikeTensor};
use crate::error::{Error, Result};
use crate::evolution::{evolve_epoch, zeta_schedule, EvolutionReport};
use crate::metrics::{assess, overall_link_sparsity, EnergyReport};
use crate::network::{Gradients, SnnNetwork};
use crate::sparse::{SparseLayer, SparseMask};
use crate::topology::{balanced_random_mask, phi_matrix, sscti_mask};
use crate::weight_init::{estimate_st, fill_normal, sswi_sigma2, SswiParams};

pub const METRICS_HEADER: &str = "epoch,loss,accuracy,sparsity,node_sparsity,spikes,sops,energy";

/// Mixes a base seed with a stream tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_TEST: u64 = 0x7e57;
const TAG_SHUFFLE: u64 = 0x5_0000;
const TAG_LAYER: u64 = 0x1_0000;

/// Spike encoding of the training set used in `epoch`.
pub fn encode_train(ds: &LabeledDataset, cfg: &RunConfig, epoch: usize) -> Result<SpikeTensor> {
    bernoulli_encode(ds, cfg.timesteps, derive_seed(cfg.seed_encode, epoch as u64))
}

/// Spike encoding of the test set; fixed for a given encoder seed.
pub fn encode_test(ds: &LabeledDataset, timesteps: usize, seed_encode: u64) -> Result<SpikeTensor> {
    bernoulli_encode(ds, timesteps, derive_seed(seed_encode, TAG_TEST))
}

/// A freshly initialised network together with what evolution needs later.
#[derive(Debug, Clone)]
pub struct InitialNetwork {
    pub net: SnnNetwork,
    /// Variance for new weights in each non-output layer.
    pub regrow_sigma2: Vec<f64>,
    pub s_t: f64,
}

/// Stages one and two: connectivity, then weights.
pub fn build_network(cfg: &RunConfig, train_enc: &SpikeTensor, classes: usize) -> Result<InitialNetwork> {
    let m = train_enc.features();
    let mut widths = vec![m, cfg.beta * m];
    widths.extend(&cfg.extra_hidden);
    widths.push(classes);
    let n_layers = widths.len() - 1;

    let mut masks = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let (rows, cols) = (widths[l + 1], widths[l]);
        let mask = if l + 1 == n_layers || cfg.topology_init == TopologyInit::Dense {
            SparseMask::full(rows, cols)
        } else if l == 0 && cfg.topology_init == TopologyInit::Sscti {
            let n = cfg.phi_samples.min(train_enc.samples());
            let subset: Vec<usize> = (0..n).collect();
            let phi = phi_matrix(&train_enc.select(&subset), cfg.correlation)?;
            sscti_mask(&phi, cfg.beta, cfg.sparsity)?
        } else {
            balanced_random_mask(rows, cols, cfg.sparsity, derive_seed(cfg.seed_init, TAG_LAYER + l as u64))?
        };
        masks.push(mask);
    }

    let s_t = estimate_st(train_enc)?;
    let layer_sparsity: Vec<f64> = (0..n_layers)
        .map(|l| {
            if l + 1 == n_layers || cfg.topology_init == TopologyInit::Dense {
                0.0
            } else {
                cfg.sparsity
            }
        })
        .collect();
    let params = SswiParams {
        s_t,
        threshold: cfg.threshold,
        fan_in: widths[..n_layers].to_vec(),
        sparsity: layer_sparsity,
    };

    let mut layers = Vec::with_capacity(n_layers);
    let mut sigma2 = Vec::with_capacity(n_layers);
    for (l, mask) in masks.into_iter().enumerate() {
        let mut layer = SparseLayer::new(mask, cfg.threshold, cfg.decay, l + 1 == n_layers)?;
        let var = match cfg.weight_init {
            WeightInit::Sswi => sswi_sigma2(l + 1, &params)?,
            WeightInit::Kaiming => 2.0 / widths[l] as f64,
        };
        fill_normal(&mut layer, var, derive_seed(cfg.seed_init, l as u64))?;
        sigma2.push(var);
        layers.push(layer);
    }
    sigma2.pop();
    let mut expansion = vec![cfg.beta];
    expansion.extend(cfg.extra_hidden.iter().map(|_| 1));
    let net = SnnNetwork::new(layers, cfg.timesteps, expansion)?;
    Ok(InitialNetwork {
        net,
        regrow_sigma2: sigma2,
        s_t,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub zeta: f64,
    pub energy: EnergyReport,
}

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.4},{:.6},{:.6},{},{},{:.6e}",
            self.epoch,
            self.loss,
            self.accuracy,
            self.energy.link_sparsity,
            self.energy.node_sparsity,
            self.energy.spike_count,
            self.energy.sops,
            self.energy.energy_joules
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub input_spike_density: f64,
    pub accuracy: f64,
    pub loss: f64,
    /// Link sparsity over the sparsified layers.
    pub link_sparsity: f64,
    /// Link sparsity over all layers, output layer included.
    pub overall_link_sparsity: f64,
    pub node_sparsity: f64,
    pub parameters: usize,
    pub energy: EnergyReport,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: SnnNetwork,
    pub epochs: Vec<EpochRecord>,
    pub evolution: Vec<(usize, EvolutionReport)>,
    pub summary: TrainSummary,
}

impl TrainOutcome {
    pub fn metrics_csv(&self) -> String {
        let mut out = format!("{METRICS_HEADER}\n");
        for e in &self.epochs {
            out.push_str(&e.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn evolution_csv(&self) -> String {
        let mut out = format!("{}\n", EvolutionReport::CSV_HEADER);
        for (epoch, report) in &self.evolution {
            for row in report.csv_rows(*epoch) {
                out.push_str(&row);
                out.push('\n');
            }
        }
        out
    }
}

/// One optimiser step, with heavy-ball momentum when `velocity` is given.
fn sgd_step(
    net: &mut SnnNetwork,
    batch: &SpikeTensor,
    labels: &[usize],
    cfg: &RunConfig,
    velocity: &mut Option<Gradients>,
) -> Result<f64> {
    if cfg.momentum == 0.0 {
        return net.train_step(batch, labels, cfg.lr, &cfg.surrogate_spec());
    }
    net.check_trainable()?;
    let (loss, grads) = net.loss_and_gradients(batch, labels, &cfg.surrogate_spec())?;
    let v = velocity.get_or_insert_with(|| Gradients::zeros_like(net));
    v.accumulate(cfg.momentum, &grads)?;
    net.apply_gradients(v, cfg.lr);
    Ok(loss)
}

/// Trains on in-memory datasets. `progress` sees each finished epoch.
pub fn train_on(
    cfg: &RunConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("training and test sets must be non-empty"));
    }
    if train.features() != test.features() {
        return Err(Error::Incompatible(format!(
            "train has {} features, test has {}",
            train.features(),
            test.features()
        )));
    }
    let classes = train.classes().max(test.classes());
    let mut train_enc = encode_train(train, cfg, 0)?;
    let test_enc = encode_test(test, cfg.timesteps, cfg.seed_encode)?;
    let InitialNetwork {
        mut net,
        regrow_sigma2,
        s_t,
    } = build_network(cfg, &train_enc, classes)?;
    let evolving = cfg.evolve && cfg.topology_init != TopologyInit::Dense;

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut evolution = Vec::new();
    let mut velocity = None;
    let n = train.len();
    for epoch in 0..cfg.epochs {
        if epoch > 0 {
            train_enc = encode_train(train, cfg, epoch)?;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed_init, TAG_SHUFFLE + epoch as u64)));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train_enc.select(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| train.labels()[i]).collect();
            loss_sum += sgd_step(&mut net, &batch, &labels, cfg, &mut velocity)? * chunk.len() as f64;
        }

        let mut zeta = 0.0;
        if evolving {
            zeta = zeta_schedule(cfg.zeta0, epoch, cfg.epochs);
            let report = evolve_epoch(
                &mut net,
                zeta,
                &regrow_sigma2,
                cfg.removal_weighting,
                derive_seed(cfg.seed_evolve, epoch as u64),
            )?;
            evolution.push((epoch + 1, report));
            velocity = None;
        }

        let (accuracy, energy) = assess(&net, &test_enc, test.labels(), cfg.pj_per_sop)?;
        let record = EpochRecord {
            epoch: epoch + 1,
            loss: loss_sum / n as f64,
            accuracy,
            zeta,
            energy,
        };
        progress(&record);
        epochs.push(record);
    }

    let last = epochs.last().expect("at least one epoch").clone();
    let summary = TrainSummary {
        epochs: cfg.epochs,
        train_samples: train.len(),
        test_samples: test.len(),
        input_spike_density: s_t,
        accuracy: last.accuracy,
        loss: last.loss,
        link_sparsity: last.energy.link_sparsity,
        overall_link_sparsity: overall_link_sparsity(&net),
        node_sparsity: last.energy.node_sparsity,
        parameters: net.num_links(),
        energy: last.energy,
    };
    Ok(TrainOutcome {
        net,
        epochs,
        evolution,
        summary,
    })
}

pub fn load_dataset(images: &Path, labels: &Path, limit: usize) -> Result<LabeledDataset> {
    let ds = load_idx(images, labels)?;
    Ok(if limit > 0 { ds.truncate(limit) } else { ds })
}

/// Files written by [`run_train`].
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub metrics: PathBuf,
    pub evolution: PathBuf,
    pub checkpoint: PathBuf,
    pub summary: PathBuf,
    pub config: PathBuf,
}

impl RunArtifacts {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            metrics: dir.join("metrics.csv"),
            evolution: dir.join("evolution.csv"),
            checkpoint: dir.join("checkpoint.bin"),
            summary: dir.join("summary.json"),
            config: dir.join("config.txt"),
        }
    }
}

/// Loads data, trains, and writes every artifact into `cfg.output_dir`.
pub fn run_train(cfg: &RunConfig, progress: impl FnMut(&EpochRecord)) -> Result<(TrainOutcome, RunArtifacts)> {
    cfg.validate()?;
    let train = load_dataset(&cfg.train_images, &cfg.train_labels, cfg.train_limit)?;
    let test = load_dataset(&cfg.test_images, &cfg.test_labels, cfg.test_limit)?;
    let outcome = train_on(cfg, &train, &test, progress)?;

    fs::create_dir_all(&cfg.output_dir)?;
    let files = RunArtifacts::in_dir(&cfg.output_dir);
    fs::write(&files.metrics, outcome.metrics_csv())?;
    fs::write(&files.evolution, outcome.evolution_csv())?;
    fs::write(&files.config, cfg.to_text())?;
    fs::write(
        &files.summary,
        serde_json::to_string_pretty(&outcome.summary).expect("plain struct serialises") + "\n",
    )?;
    save_checkpoint(&outcome.net, &files.checkpoint)?;
    Ok((outcome, files))
}

pub fn save_checkpoint(net: &SnnNetwork, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    net.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<SnnNetwork> {
    let mut r = BufReader::new(fs::File::open(path)?);
    SnnNetwork::read_from(&mut r)
}

/// Accuracy and energy of a network on an encoded test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub link_sparsity: f64,
    pub overall_link_sparsity: f64,
    pub energy: EnergyReport,
}

pub fn evaluate_network(net: &SnnNetwork, test: &LabeledDataset, seed_encode: u64, pj_per_sop: f64) -> Result<Evaluation> {
    if test.features() != net.inputs() {
        return Err(Error::Incompatible(format!(
            "network expects {} inputs, dataset has {} features",
            net.inputs(),
            test.features()
        )));
    }
    let enc = encode_test(test, net.timesteps(), seed_encode)?;
    let (accuracy, energy) = assess(net, &enc, test.labels(), pj_per_sop)?;
    Ok(Evaluation {
        accuracy,
        link_sparsity: energy.link_sparsity,
        overall_link_sparsity: overall_link_sparsity(net),
        energy,
    })
}

/// Side-by-side evaluation of two checkpoints on the same data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparison {
    pub a: Evaluation,
    pub b: Evaluation,
    /// Energy of `a` divided by energy of `b`.
    pub energy_ratio: f64,
    pub sop_ratio: f64,
}

impl Comparison {
    pub const CSV_HEADER: &'static str = "metric,a,b,ratio";

    pub fn rows(&self) -> Vec<(&'static str, f64, f64)> {
        let (a, b) = (&self.a, &self.b);
        vec![
            ("accuracy", a.accuracy, b.accuracy),
            ("link_sparsity", a.link_sparsity, b.link_sparsity),
            ("node_sparsity", a.energy.node_sparsity, b.energy.node_sparsity),
            ("firing_rate", a.energy.firing_rate, b.energy.firing_rate),
            ("spikes", a.energy.spike_count as f64, b.energy.spike_count as f64),
            ("sops", a.energy.sops as f64, b.energy.sops as f64),
            ("energy_joules", a.energy.energy_joules, b.energy.energy_joules),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for (name, a, b) in self.rows() {
            out.push_str(&format!("{name},{a},{b},{}\n", ratio(a, b)));
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<14} {:>14} {:>14} {:>10}\n", "metric", "a", "b", "a/b");
        for (name, a, b) in self.rows() {
            out.push_str(&format!("{name:<14} {a:>14.6} {b:>14.6} {:>10.4}\n", ratio(a, b)));
        }
        out
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        a / b
    }
}

pub fn compare_networks(
    a: &SnnNetwork,
    b: &SnnNetwork,
    test: &LabeledDataset,
    seed_encode: u64,
    pj_per_sop: f64,
) -> Result<Comparison> {
    if a.inputs() != b.inputs() || a.classes() != b.classes() || a.timesteps() != b.timesteps() {
        return Err(Error::Incompatible(format!(
            "architectures differ: {} inputs / {} classes / T={} vs {} / {} / T={}",
            a.inputs(),
            a.classes(),
            a.timesteps(),
            b.inputs(),
            b.classes(),
            b.timesteps()
        )));
    }
    let ea = evaluate_network(a, test, seed_encode, pj_per_sop)?;
    let eb = evaluate_network(b, test, seed_encode, pj_per_sop)?;
    Ok(Comparison {
        a: ea,
        b: eb,
        energy_ratio: ratio(ea.energy.energy_joules, eb.energy.energy_joules),
        sop_ratio: ratio(ea.energy.sops as f64, eb.energy.sops as f64),
    })
}
