//! Initial connectivity: correlation-ranked masks for the input layer and
//! degree-balanced random masks for every other sparse layer.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::SpikeTensor;
use crate::error::{Error, Result};
use crate::sparse::SparseMask;

/// How pairwise association between binary input features is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorrelationMode {
    /// Phi coefficient from the 2x2 contingency table of two features.
    #[default]
    PearsonPhi,
    /// `sqrt((sum (x_i-E_i)^2/E_i + sum (x_j-E_j)^2/E_j) / 2NT)`, evaluated as
    /// written. It depends on the two means only.
    MarginalChi2,
}

impl std::str::FromStr for CorrelationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pearson-phi" => Ok(Self::PearsonPhi),
            "marginal-chi2" => Ok(Self::MarginalChi2),
            other => Err(Error::Config(format!("unknown correlation mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for CorrelationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::PearsonPhi => "pearson-phi",
            Self::MarginalChi2 => "marginal-chi2",
        })
    }
}

/// Symmetric `M x M` matrix of feature correlations, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    m: usize,
    values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn from_fn(m: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::invalid(format!("need at least 2 features, got {m}")));
        }
        let mut values = vec![0.0; m * m];
        for i in 0..m {
            for j in i..m {
                let v = f(i, j);
                if !v.is_finite() {
                    return Err(Error::invalid(format!("correlation ({i}, {j}) is not finite")));
                }
                values[i * m + j] = v;
                values[j * m + i] = v;
            }
        }
        Ok(Self { m, values })
    }

    pub fn size(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.m + j]
    }
}

/// Correlation between every pair of input features, treating each
/// `(time step, sample)` slot as one observation.
pub fn phi_matrix(data: &SpikeTensor, mode: CorrelationMode) -> Result<CorrelationMatrix> {
    let m = data.features();
    if m < 2 {
        return Err(Error::invalid(format!("need at least 2 features, got {m}")));
    }
    let obs = data.timesteps() * data.samples();
    if obs < 2 {
        return Err(Error::invalid(format!("need at least 2 observations, got {obs}")));
    }
    // SpikeTensor guarantees binary storage, so every frame is a valid observation.
    let mut ones = vec![0u64; m];
    let mut co = match mode {
        CorrelationMode::PearsonPhi => vec![0u32; m * m],
        CorrelationMode::MarginalChi2 => Vec::new(),
    };
    let mut active = Vec::with_capacity(m);
    for frame in data.as_slice().chunks_exact(m) {
        active.clear();
        active.extend(frame.iter().enumerate().filter(|(_, &b)| b == 1).map(|(i, _)| i));
        for &i in &active {
            ones[i] += 1;
        }
        if mode == CorrelationMode::PearsonPhi {
            for (a, &i) in active.iter().enumerate() {
                for &j in &active[a + 1..] {
                    co[i * m + j] += 1;
                }
            }
        }
    }
    let n = obs as f64;
    match mode {
        CorrelationMode::PearsonPhi => CorrelationMatrix::from_fn(m, |i, j| {
            if i == j {
                return if ones[i] == 0 || ones[i] == obs as u64 { 0.0 } else { 1.0 };
            }
            let n11 = f64::from(co[i * m + j]);
            let (ci, cj) = (ones[i] as f64, ones[j] as f64);
            contingency_phi(n11, ci - n11, cj - n11, n - ci - cj + n11)
        }),
        CorrelationMode::MarginalChi2 => {
            let means: Vec<f64> = ones.iter().map(|&c| c as f64 / n).collect();
            // sum_t (x - E)^2 / E = NT (1 - E) for a binary column with mean E.
            let term = |e: f64| if e > 0.0 { 1.0 - e } else { 0.0 };
            CorrelationMatrix::from_fn(m, |i, j| ((term(means[i]) + term(means[j])) / 2.0).sqrt())
        }
    }
}

/// Phi coefficient of a 2x2 table; zero when any marginal is empty.
pub fn contingency_phi(n11: f64, n10: f64, n01: f64, n00: f64) -> f64 {
    let denom = (n11 + n10) * (n01 + n00) * (n11 + n01) * (n10 + n00);
    if denom <= 0.0 {
        return 0.0;
    }
    (n11 * n00 - n10 * n01) / denom.sqrt()
}

fn check_sparsity(sparsity: f64) -> Result<()> {
    if !(0.0..1.0).contains(&sparsity) {
        return Err(Error::invalid(format!("sparsity must lie in [0, 1), got {sparsity}")));
    }
    Ok(())
}

/// Ordered feature pairs `(i, j)` sorted by correlation, strongest first.
/// Ties go to the lexicographically smaller pair and self-pairs rank last.
pub fn ranked_pairs(phi: &CorrelationMatrix) -> Vec<(usize, usize)> {
    let m = phi.size();
    let mut pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    pairs.sort_by(|&(a, b), &(c, d)| phi.get(c, d).total_cmp(&phi.get(a, b)).then((a, b).cmp(&(c, d))));
    pairs.extend((0..m).map(|i| (i, i)));
    pairs
}

/// Number of feature pairs kept at structural sparsity `sparsity`, rounded
/// down (with a little slack for representation error).
pub fn kept_pairs(m: usize, sparsity: f64) -> usize {
    let total = (m * m) as f64;
    (((1.0 - sparsity) * total + 1e-9).floor().max(0.0) as usize).min(m * m)
}

/// First-layer mask from correlation ranking. Hidden neuron `j * beta + k`
/// receives input `i` whenever the pair `(i, j)` survives.
pub fn sscti_mask(phi: &CorrelationMatrix, beta: usize, sparsity: f64) -> Result<SparseMask> {
    if beta == 0 {
        return Err(Error::invalid("expansion factor must be >= 1"));
    }
    check_sparsity(sparsity)?;
    let m = phi.size();
    let keep = kept_pairs(m, sparsity);
    if keep == 0 {
        return Err(Error::IsolatedNodes(sparsity));
    }
    let edges = ranked_pairs(phi)
        .into_iter()
        .take(keep)
        .flat_map(|(i, j)| (0..beta).map(move |k| (j * beta + k, i)));
    SparseMask::from_edges(beta * m, m, edges)
}

/// Random mask where each row holds `round((1 - sparsity) * cols)` links and
/// columns are filled least-loaded first.
pub fn balanced_random_mask(rows: usize, cols: usize, sparsity: f64, seed: u64) -> Result<SparseMask> {
    check_sparsity(sparsity)?;
    let k = ((1.0 - sparsity) * cols as f64).round() as usize;
    if k == 0 || rows == 0 {
        return Err(Error::IsolatedNodes(sparsity));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut load = vec![0usize; cols];
    let mut order: Vec<usize> = (0..cols).collect();
    let mut edges = Vec::with_capacity(rows * k);
    for r in 0..rows {
        order.shuffle(&mut rng);
        order.sort_by_key(|&c| load[c]);
        for &c in &order[..k] {
            load[c] += 1;
            edges.push((r, c));
        }
    }
    SparseMask::from_edges(rows, cols, edges)
}
