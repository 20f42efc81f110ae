//! Topology evolution between training epochs: score-based pruning, removal
//! of neurons left without inputs or outputs, and regrowth ranked by
//! length-3 paths (CH3-L3).

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::network::SnnNetwork;
use crate::sparse::{SparseLayer, SparseMask};

/// Floor added to sampling weights so that every candidate stays reachable.
pub const SAMPLING_EPS: f64 = 1e-8;

/// `zeta0 / 2 * (1 + cos(pi * epoch / total))`.
pub fn zeta_schedule(zeta0: f64, epoch: usize, total_epochs: usize) -> f64 {
    let total = total_epochs.max(1) as f64;
    let frac = (epoch as f64 / total).min(1.0);
    zeta0 / 2.0 * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// Removal scores of every present link, in row-major link order.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkScoreTable {
    pub links: Vec<(usize, usize)>,
    pub scores: Vec<f64>,
}

impl LinkScoreTable {
    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }
}

/// `|w| / (1 + S_row) + |w| / (1 + S_col)` where `S_row` sums `|W|` over the
/// links entering the output neuron and `S_col` over the links leaving the
/// input neuron.
pub fn lrs_scores(layer: &SparseLayer) -> Result<LinkScoreTable> {
    if layer.num_links() == 0 {
        return Err(Error::invalid("cannot score links of an empty layer"));
    }
    let mut row_sum = vec![0.0; layer.rows()];
    let mut col_sum = vec![0.0; layer.cols()];
    for (r, c, w) in layer.links() {
        row_sum[r] += w.abs();
        col_sum[c] += w.abs();
    }
    let (links, scores) = layer
        .links()
        .map(|(r, c, w)| ((r, c), w.abs() / (1.0 + row_sum[r]) + w.abs() / (1.0 + col_sum[c])))
        .unzip();
    Ok(LinkScoreTable { links, scores })
}

/// How removal probability depends on the removal score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RemovalWeighting {
    /// Proportional to `max - score + eps`.
    #[default]
    Complement,
    /// Proportional to `1 / (score + eps)`.
    Inverse,
}

impl std::str::FromStr for RemovalWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complement" => Ok(Self::Complement),
            "inverse" => Ok(Self::Inverse),
            other => Err(Error::Config(format!("unknown removal weighting {other:?}"))),
        }
    }
}

impl std::fmt::Display for RemovalWeighting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Complement => "complement",
            Self::Inverse => "inverse",
        })
    }
}

/// Weighted sampling of `k` indices without replacement (exponential keys):
/// each candidate gets `ln(u) / w` and the `k` largest keys win. Returned in
/// ascending index order.
pub fn weighted_sample(weights: &[f64], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    if k == 0 {
        return Vec::new();
    }
    if k >= weights.len() {
        return (0..weights.len()).collect();
    }
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u = 1.0 - rng.random::<f64>();
            (u.ln() / w, i)
        })
        .collect();
    let by_key = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    keyed.select_nth_unstable_by(k - 1, by_key);
    let mut picked: Vec<usize> = keyed[..k].iter().map(|&(_, i)| i).collect();
    picked.sort_unstable();
    picked
}

/// Draws `round(zeta * |links|)` links to prune, favouring low scores.
pub fn sample_removals(
    scores: &LinkScoreTable,
    zeta: f64,
    weighting: RemovalWeighting,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::invalid(format!("pruning ratio must lie in [0, 1], got {zeta}")));
    }
    let k = (zeta * scores.len() as f64).round() as usize;
    let max = scores.scores.iter().cloned().fold(0.0, f64::max);
    let weights: Vec<f64> = scores
        .scores
        .iter()
        .map(|&s| match weighting {
            RemovalWeighting::Complement => max - s + SAMPLING_EPS,
            RemovalWeighting::Inverse => 1.0 / (s + SAMPLING_EPS),
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(weighted_sample(&weights, k, &mut rng)
        .into_iter()
        .map(|i| scores.links[i])
        .collect())
}

/// Neurons and links removed by [`chain_removal`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainRemoval {
    /// Deactivated neurons of each hidden population, ascending.
    pub neurons: Vec<Vec<usize>>,
    /// Links dropped from each weight layer.
    pub links_lost: Vec<usize>,
}

impl ChainRemoval {
    pub fn total_neurons(&self) -> usize {
        self.neurons.iter().map(Vec::len).sum()
    }
}

/// Deactivates hidden neurons that have no incoming or no outgoing links,
/// repeating until nothing changes. Inputs and outputs are never touched.
pub fn chain_removal(net: &mut SnnNetwork) -> ChainRemoval {
    let n_layers = net.layers().len();
    let layers = net.layers_mut();
    let mut report = ChainRemoval {
        neurons: (0..n_layers - 1).map(|_| Vec::new()).collect(),
        links_lost: vec![0; n_layers],
    };
    // Hidden population h sits between weight layers h and h + 1.
    let mut work: Vec<(usize, usize)> = (0..n_layers - 1)
        .flat_map(|h| (0..layers[h].rows()).map(move |j| (h, j)))
        .collect();
    while let Some((h, j)) = work.pop() {
        if !layers[h].row_active()[j] {
            continue;
        }
        let inputs = layers[h].mask().row(j).to_vec();
        let outputs = layers[h + 1].mask().col(j).to_vec();
        if !inputs.is_empty() && !outputs.is_empty() {
            continue;
        }
        report.links_lost[h] += layers[h].deactivate_row(j);
        report.links_lost[h + 1] += layers[h + 1].deactivate_col(j);
        report.neurons[h].push(j);
        if h > 0 {
            work.extend(inputs.into_iter().map(|i| (h - 1, i)));
        }
        if h + 1 < n_layers - 1 {
            work.extend(outputs.into_iter().map(|k| (h + 1, k)));
        }
    }
    for list in &mut report.neurons {
        list.sort_unstable();
    }
    report
}

/// CH3-L3 scores for every absent link between active neurons of a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RegrowthScoreTable {
    /// Candidate `(row, col)` pairs in column-major order.
    pub pairs: Vec<(usize, usize)>,
    pub scores: Vec<f64>,
}

impl RegrowthScoreTable {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn score(&self, row: usize, col: usize) -> Option<f64> {
        self.pairs.iter().position(|&p| p == (row, col)).map(|i| self.scores[i])
    }
}

/// Scores each absent pair `(v, u)` (output `v`, input `u`) by summing
/// `1 / sqrt((1 + de1) (1 + de2))` over the paths `u - z1 - z2 - v`, where
/// `de` counts a path node's links leaving the pair's local community.
///
/// The community holds `u`, `v` and every node on one of their paths, which
/// gives `1 + de1 = deg(z1) - |N(z1) & N(v)|` and
/// `1 + de2 = deg(z2) - |N(z2) & N(u)|`.
#[allow(clippy::needless_range_loop)]
pub fn ch3l3_scores(mask: &SparseMask, row_active: &[bool], col_active: &[bool]) -> RegrowthScoreTable {
    let (rows, cols) = (mask.rows(), mask.cols());
    let (row_deg, col_deg) = mask.degrees();

    // Shared inputs between two outputs.
    let mut common_out = vec![0u32; rows * rows];
    for c in 0..cols {
        let adj = mask.col(c);
        for &a in adj {
            for &b in adj {
                common_out[a * rows + b] += 1;
            }
        }
    }

    let mut pairs = Vec::new();
    let mut scores = Vec::new();
    let mut shared = vec![0u32; cols];
    let mut acc = vec![0.0f64; rows];
    let mut linked = vec![false; rows];
    for u in 0..cols {
        if !col_active[u] {
            continue;
        }
        let nu = mask.col(u);
        for &z1 in nu {
            linked[z1] = true;
            for &z2 in mask.row(z1) {
                shared[z2] += 1;
            }
        }
        for &z1 in nu {
            for &z2 in mask.row(z1) {
                if z2 == u {
                    continue;
                }
                let d2 = (col_deg[z2] - shared[z2] as usize) as f64;
                for &v in mask.col(z2) {
                    if linked[v] {
                        continue;
                    }
                    let d1 = (row_deg[z1] - common_out[z1 * rows + v] as usize) as f64;
                    acc[v] += 1.0 / (d1 * d2).sqrt();
                }
            }
        }
        for v in 0..rows {
            if row_active[v] && !linked[v] {
                pairs.push((v, u));
                scores.push(acc[v]);
            }
            acc[v] = 0.0;
        }
        for &z1 in nu {
            linked[z1] = false;
            for &z2 in mask.row(z1) {
                shared[z2] = 0;
            }
        }
    }
    RegrowthScoreTable { pairs, scores }
}

/// Draws `k` candidates without replacement with probability proportional to
/// `score + eps`.
pub fn sample_regrowth(scores: &RegrowthScoreTable, k: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if k > scores.len() {
        return Err(Error::RegrowthExhausted {
            requested: k,
            available: scores.len(),
        });
    }
    let weights: Vec<f64> = scores.scores.iter().map(|&s| s + SAMPLING_EPS).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(weighted_sample(&weights, k, &mut rng)
        .into_iter()
        .map(|i| scores.pairs[i])
        .collect())
}

/// Bookkeeping for one weight layer in one evolution step.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerEvolution {
    pub layer: usize,
    pub links_before: usize,
    pub links_pruned: usize,
    pub links_lost_to_chain_removal: usize,
    pub links_regrown: usize,
    /// Output-side neurons of this layer deactivated by chain removal.
    pub neurons_removed: usize,
    /// Input-side neurons of this layer deactivated by chain removal.
    pub inputs_removed: usize,
    pub links_after: usize,
    pub sparsity_after: f64,
    /// Links pruned by score, row-major.
    pub pruned: Vec<(usize, usize)>,
    /// Links regrown, row-major.
    pub regrown: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionReport {
    pub zeta: f64,
    pub layers: Vec<LayerEvolution>,
}

impl EvolutionReport {
    pub const CSV_HEADER: &'static str = "epoch,layer,pruned,regrown,neurons_removed,sparsity";

    pub fn csv_rows(&self, epoch: usize) -> Vec<String> {
        self.layers
            .iter()
            .map(|l| {
                format!(
                    "{epoch},{},{},{},{},{:.6}",
                    l.layer, l.links_pruned, l.links_regrown, l.neurons_removed, l.sparsity_after
                )
            })
            .collect()
    }
}

/// One prune / chain-removal / regrow cycle. `regrow_sigma2[l]` is the
/// variance of fresh weights in sparse layer `l`; the output layer is only
/// affected through chain removal.
#[allow(clippy::needless_range_loop)]
pub fn evolve_epoch(
    net: &mut SnnNetwork,
    zeta: f64,
    regrow_sigma2: &[f64],
    weighting: RemovalWeighting,
    seed: u64,
) -> Result<EvolutionReport> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::invalid(format!("pruning ratio must lie in [0, 1], got {zeta}")));
    }
    let n_layers = net.layers().len();
    let sparse_layers = n_layers - 1;
    if regrow_sigma2.len() != sparse_layers {
        return Err(Error::DimensionMismatch {
            context: "regrowth variances",
            expected: sparse_layers,
            actual: regrow_sigma2.len(),
        });
    }
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let links_before: Vec<usize> = net.layers().iter().map(SparseLayer::num_links).collect();

    let mut pruned: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_layers];
    for l in 0..sparse_layers {
        let layer_seed = seeds.random::<u64>();
        if net.layer(l).num_links() == 0 {
            continue;
        }
        let scores = lrs_scores(net.layer(l))?;
        let removals = sample_removals(&scores, zeta, weighting, layer_seed)?;
        let layer = &mut net.layers_mut()[l];
        for &(r, c) in &removals {
            layer.remove_link(r, c)?;
        }
        pruned[l] = removals;
    }

    let chain = chain_removal(net);

    let mut regrown: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_layers];
    for l in 0..sparse_layers {
        let layer_seed = seeds.random::<u64>();
        if pruned[l].is_empty() {
            continue;
        }
        let layer = net.layer(l);
        let mut scores = ch3l3_scores(layer.mask(), layer.row_active(), layer.col_active());
        // A link pruned in this step is not eligible to come straight back.
        let just_pruned: HashSet<(usize, usize)> = pruned[l].iter().copied().collect();
        let (pairs, values) = scores
            .pairs
            .iter()
            .zip(&scores.scores)
            .filter(|(p, _)| !just_pruned.contains(p))
            .unzip();
        scores = RegrowthScoreTable { pairs, scores: values };
        let mut picks = sample_regrowth(&scores, pruned[l].len(), layer_seed)?;
        let normal = Normal::new(0.0, regrow_sigma2[l].sqrt())
            .map_err(|e| Error::invalid(format!("bad regrowth variance: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(layer_seed ^ 0x5eed);
        let layer = &mut net.layers_mut()[l];
        for &(r, c) in &picks {
            layer.insert_link(r, c, normal.sample(&mut rng))?;
        }
        picks.sort_unstable();
        regrown[l] = picks;
    }

    let layers = (0..n_layers)
        .map(|l| {
            let layer = net.layer(l);
            LayerEvolution {
                layer: l,
                links_before: links_before[l],
                links_pruned: pruned[l].len(),
                links_lost_to_chain_removal: chain.links_lost[l],
                links_regrown: regrown[l].len(),
                neurons_removed: chain.neurons.get(l).map_or(0, Vec::len),
                inputs_removed: if l == 0 { 0 } else { chain.neurons[l - 1].len() },
                links_after: layer.num_links(),
                sparsity_after: layer.mask().link_sparsity(),
                pruned: std::mem::take(&mut pruned[l]),
                regrown: std::mem::take(&mut regrown[l]),
            }
        })
        .collect();
    Ok(EvolutionReport { zeta, layers })
}
