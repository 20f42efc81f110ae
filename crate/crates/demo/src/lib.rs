//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each export wraps a plain Rust function so the logic can be tested
//! natively; errors only cross into JavaScript at the boundary.

use chsnn::data::{synthetic_correlated_spikes, BlockStructure};
use chsnn::evolution::{ch3l3_scores, evolve_epoch, zeta_schedule, RemovalWeighting};
use chsnn::topology::{phi_matrix, sscti_mask, CorrelationMode};
use chsnn::weight_init::fill_normal;
use chsnn::{SnnNetwork, SparseLayer, SparseMask};
use wasm_bindgen::prelude::*;

fn js_err(e: chsnn::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Row-major 0/1 image of a mask.
fn dense_bits(mask: &SparseMask) -> Vec<u8> {
    let mut out = vec![0u8; mask.rows() * mask.cols()];
    for (r, c) in mask.edges() {
        out[r * mask.cols() + c] = 1;
    }
    out
}

/// Pruning ratio for epochs `0..=epochs`.
#[wasm_bindgen]
pub fn zeta_curve(zeta0: f64, epochs: usize) -> Vec<f64> {
    (0..=epochs).map(|e| zeta_schedule(zeta0, e, epochs.max(1))).collect()
}

/// First-layer mask built from correlated synthetic spikes.
#[wasm_bindgen]
pub struct SsctiView {
    rows: usize,
    cols: usize,
    phi: Vec<f64>,
    mask: Vec<u8>,
    links: usize,
    within_block: f64,
}

#[wasm_bindgen]
impl SsctiView {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Correlation matrix, `cols x cols`, row-major.
    pub fn phi(&self) -> Vec<f64> {
        self.phi.clone()
    }

    /// Mask bits, `rows x cols`, row-major.
    pub fn mask(&self) -> Vec<u8> {
        self.mask.clone()
    }

    pub fn links(&self) -> usize {
        self.links
    }

    /// Fraction of links joining features of the same block.
    pub fn within_block(&self) -> f64 {
        self.within_block
    }
}

pub fn build_sscti(blocks: &[usize], rho: f64, beta: usize, sparsity: f64, seed: u64) -> chsnn::Result<SsctiView> {
    let structure = BlockStructure::contiguous(blocks, rho)?;
    let m = structure.features();
    let spikes = synthetic_correlated_spikes(m, 400, 4, &structure, seed)?;
    let phi = phi_matrix(&spikes, CorrelationMode::PearsonPhi)?;
    let mask = sscti_mask(&phi, beta, sparsity)?;
    let inside = mask
        .edges()
        .filter(|&(r, c)| structure.block_of(r / beta) == structure.block_of(c))
        .count();
    Ok(SsctiView {
        rows: mask.rows(),
        cols: mask.cols(),
        phi: (0..m * m).map(|k| phi.get(k / m, k % m)).collect(),
        links: mask.len(),
        within_block: inside as f64 / mask.len().max(1) as f64,
        mask: dense_bits(&mask),
    })
}

/// `blocks` lists block sizes; features of a block share a latent driver.
#[wasm_bindgen]
pub fn sscti_demo(blocks: Vec<u32>, rho: f64, beta: usize, sparsity: f64, seed: u64) -> Result<SsctiView, JsError> {
    let sizes: Vec<usize> = blocks.into_iter().map(|b| b as usize).collect();
    build_sscti(&sizes, rho, beta, sparsity, seed).map_err(js_err)
}

/// A small two-layer network whose hidden layer is evolved step by step.
#[wasm_bindgen]
pub struct Evolver {
    net: SnnNetwork,
    sigma2: f64,
    seed: u64,
    steps: u64,
    last_pruned: usize,
    last_removed: usize,
}

impl Evolver {
    pub fn create(inputs: usize, hidden: usize, sparsity: f64, seed: u64) -> chsnn::Result<Self> {
        let mask = chsnn::topology::balanced_random_mask(hidden, inputs, sparsity, seed)?;
        let mut layer = SparseLayer::new(mask, 1.0, 0.5, false)?;
        let sigma2 = 2.0 / (inputs as f64 * (1.0 - sparsity));
        fill_normal(&mut layer, sigma2, seed ^ 1)?;
        let mut readout = SparseLayer::new(SparseMask::full(4, hidden), 1.0, 0.5, true)?;
        fill_normal(&mut readout, 2.0 / hidden as f64, seed ^ 2)?;
        let net = SnnNetwork::new(vec![layer, readout], 4, vec![1])?;
        Ok(Self {
            net,
            sigma2,
            seed,
            steps: 0,
            last_pruned: 0,
            last_removed: 0,
        })
    }

    pub fn advance(&mut self, zeta: f64) -> chsnn::Result<()> {
        let report = evolve_epoch(
            &mut self.net,
            zeta,
            &[self.sigma2],
            RemovalWeighting::Complement,
            self.seed.wrapping_add(self.steps),
        )?;
        self.steps += 1;
        self.last_pruned = report.layers[0].links_pruned;
        self.last_removed = report.layers[0].neurons_removed;
        Ok(())
    }

    fn layer(&self) -> &SparseLayer {
        self.net.layer(0)
    }
}

#[wasm_bindgen]
impl Evolver {
    #[wasm_bindgen(constructor)]
    pub fn new(inputs: usize, hidden: usize, sparsity: f64, seed: u64) -> Result<Evolver, JsError> {
        Self::create(inputs, hidden, sparsity, seed).map_err(js_err)
    }

    /// One prune, chain-removal and regrowth cycle at pruning ratio `zeta`.
    pub fn step(&mut self, zeta: f64) -> Result<(), JsError> {
        self.advance(zeta).map_err(js_err)
    }

    pub fn rows(&self) -> usize {
        self.layer().rows()
    }

    pub fn cols(&self) -> usize {
        self.layer().cols()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn links(&self) -> usize {
        self.layer().num_links()
    }

    pub fn sparsity(&self) -> f64 {
        self.layer().mask().link_sparsity()
    }

    pub fn active_hidden(&self) -> usize {
        self.layer().row_active().iter().filter(|&&a| a).count()
    }

    pub fn last_pruned(&self) -> usize {
        self.last_pruned
    }

    pub fn last_removed(&self) -> usize {
        self.last_removed
    }

    pub fn mask(&self) -> Vec<u8> {
        dense_bits(self.layer().mask())
    }

    /// CH3-L3 score of every absent link, 0 elsewhere; row-major.
    pub fn scores(&self) -> Vec<f64> {
        let layer = self.layer();
        let table = ch3l3_scores(layer.mask(), layer.row_active(), layer.col_active());
        let mut out = vec![0.0; layer.rows() * layer.cols()];
        for (&(r, c), &s) in table.pairs.iter().zip(&table.scores) {
            out[r * layer.cols() + c] = s;
        }
        out
    }
}
