//! Connectivity masks and masked weight matrices.
//!
//! A layer maps `cols` input neurons onto `rows` output neurons. Link `(row, col)`
//! carries the weight from input `col` to output `row`. Adjacency is kept in
//! both orientations so row and column iteration are O(degree); weights are
//! stored alongside the column lists, which is the orientation the
//! event-driven forward and backward passes walk.

use std::io::{self, Read, Write};

use crate::codec::{get_array, get_f64, get_u32, get_u64, put_f64, put_u32, put_u64};
use crate::error::{Error, Result};

const LAYER_MAGIC: &[u8; 4] = b"SLYR";
const LAYER_VERSION: u32 = 1;
const MAX_DIM: usize = 1 << 24;

/// Binary connectivity matrix of one linear layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseMask {
    rows: usize,
    cols: usize,
    row_adj: Vec<Vec<usize>>,
    col_adj: Vec<Vec<usize>>,
    nnz: usize,
}

impl SparseMask {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_adj: vec![Vec::new(); rows],
            col_adj: vec![Vec::new(); cols],
            nnz: 0,
        }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_adj: vec![(0..cols).collect(); rows],
            col_adj: vec![(0..rows).collect(); cols],
            nnz: rows * cols,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut mask = Self::empty(n, n);
        for i in 0..n {
            mask.row_adj[i].push(i);
            mask.col_adj[i].push(i);
        }
        mask.nnz = n;
        mask
    }

    /// Builds a mask from `(row, col)` pairs, rejecting duplicates and
    /// out-of-range indices.
    pub fn from_edges(
        rows: usize,
        cols: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut mask = Self::empty(rows, cols);
        for (r, c) in edges {
            if !mask.insert(r, c)? {
                return Err(Error::DuplicateLink { row: r, col: c });
            }
        }
        Ok(mask)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of present links.
    pub fn len(&self) -> usize {
        self.nnz
    }

    pub fn is_empty(&self) -> bool {
        self.nnz == 0
    }

    /// Sorted input indices linked to output `row`.
    pub fn row(&self, row: usize) -> &[usize] {
        &self.row_adj[row]
    }

    /// Sorted output indices linked from input `col`.
    pub fn col(&self, col: usize) -> &[usize] {
        &self.col_adj[col]
    }

    fn check(&self, row: usize, col: usize) -> Result<()> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::IndexOutOfRange {
                row,
                col,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(())
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.rows && col < self.cols && self.col_adj[col].binary_search(&row).is_ok()
    }

    /// Inserts a link; returns `false` if it was already present.
    pub fn insert(&mut self, row: usize, col: usize) -> Result<bool> {
        self.insert_at(row, col).map(|pos| pos.is_some())
    }

    /// Inserts a link and returns its position within column `col`.
    fn insert_at(&mut self, row: usize, col: usize) -> Result<Option<usize>> {
        self.check(row, col)?;
        let pos = match self.col_adj[col].binary_search(&row) {
            Ok(_) => return Ok(None),
            Err(p) => p,
        };
        self.col_adj[col].insert(pos, row);
        let rpos = self.row_adj[row].binary_search(&col).unwrap_err();
        self.row_adj[row].insert(rpos, col);
        self.nnz += 1;
        Ok(Some(pos))
    }

    /// Removes a link; returns `false` if it was absent.
    pub fn remove(&mut self, row: usize, col: usize) -> Result<bool> {
        self.remove_at(row, col).map(|pos| pos.is_some())
    }

    fn remove_at(&mut self, row: usize, col: usize) -> Result<Option<usize>> {
        self.check(row, col)?;
        let pos = match self.col_adj[col].binary_search(&row) {
            Ok(p) => p,
            Err(_) => return Ok(None),
        };
        self.col_adj[col].remove(pos);
        let rpos = self.row_adj[row].binary_search(&col).expect("row/col adjacency out of sync");
        self.row_adj[row].remove(rpos);
        self.nnz -= 1;
        Ok(Some(pos))
    }

    /// Present links in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_adj
            .iter()
            .enumerate()
            .flat_map(|(r, cols)| cols.iter().map(move |&c| (r, c)))
    }

    pub fn degrees(&self) -> (Vec<usize>, Vec<usize>) {
        degrees(self)
    }

    /// `1 - |links| / (rows * cols)`; an empty shape counts as fully sparse.
    pub fn link_sparsity(&self) -> f64 {
        let dense = self.rows * self.cols;
        if dense == 0 {
            return 1.0;
        }
        1.0 - self.nnz as f64 / dense as f64
    }

    /// One `row col` pair per line, sorted row-major.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::with_capacity(self.nnz * 8);
        for (r, c) in self.edges() {
            out.push_str(&format!("{r} {c}\n"));
        }
        out
    }

    /// Parses the format written by [`SparseMask::to_edge_list`].
    pub fn from_edge_list(rows: usize, cols: usize, text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(r)), Some(Ok(c)), None) => edges.push((r, c)),
                _ => {
                    return Err(Error::invalid(format!(
                        "edge list line {}: expected `row col`, got {line:?}",
                        lineno + 1
                    )))
                }
            }
        }
        Self::from_edges(rows, cols, edges)
    }
}

/// Row (output) and column (input) degrees of a mask.
pub fn degrees(mask: &SparseMask) -> (Vec<usize>, Vec<usize>) {
    (
        mask.row_adj.iter().map(Vec::len).collect(),
        mask.col_adj.iter().map(Vec::len).collect(),
    )
}

/// Mask, weights on present links, LIF parameters and per-neuron activity flags.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLayer {
    mask: SparseMask,
    // Parallel to `mask.col_adj`.
    weights: Vec<Vec<f64>>,
    threshold: f64,
    decay: f64,
    row_active: Vec<bool>,
    col_active: Vec<bool>,
    is_output: bool,
}

impl SparseLayer {
    /// Creates a layer with all weights zero and every neuron active.
    pub fn new(mask: SparseMask, threshold: f64, decay: f64, is_output: bool) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(Error::invalid(format!("threshold must be > 0, got {threshold}")));
        }
        if !(0.0..=1.0).contains(&decay) {
            return Err(Error::invalid(format!("decay must lie in [0, 1], got {decay}")));
        }
        let weights = mask.col_adj.iter().map(|c| vec![0.0; c.len()]).collect();
        Ok(Self {
            row_active: vec![true; mask.rows],
            col_active: vec![true; mask.cols],
            mask,
            weights,
            threshold,
            decay,
            is_output,
        })
    }

    pub fn mask(&self) -> &SparseMask {
        &self.mask
    }

    pub fn rows(&self) -> usize {
        self.mask.rows
    }

    pub fn cols(&self) -> usize {
        self.mask.cols
    }

    pub fn num_links(&self) -> usize {
        self.mask.nnz
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn is_output_layer(&self) -> bool {
        self.is_output
    }

    pub fn row_active(&self) -> &[bool] {
        &self.row_active
    }

    pub fn col_active(&self) -> &[bool] {
        &self.col_active
    }

    pub fn weight(&self, row: usize, col: usize) -> Option<f64> {
        let rows = self.mask.col_adj.get(col)?;
        rows.binary_search(&row).ok().map(|p| self.weights[col][p])
    }

    pub fn set_weight(&mut self, row: usize, col: usize, w: f64) -> Result<()> {
        self.mask.check(row, col)?;
        match self.mask.col_adj[col].binary_search(&row) {
            Ok(p) => {
                self.weights[col][p] = w;
                Ok(())
            }
            Err(_) => Err(Error::invalid(format!("no link ({row}, {col}) to set"))),
        }
    }

    /// Output rows and their weights for input column `col`.
    #[inline]
    pub fn column(&self, col: usize) -> (&[usize], &[f64]) {
        (&self.mask.col_adj[col], &self.weights[col])
    }

    pub(crate) fn column_weights_mut(&mut self, col: usize) -> &mut [f64] {
        &mut self.weights[col]
    }

    /// Weights in storage (column-major) order.
    pub fn weights_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().flatten()
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().flatten().copied()
    }

    /// `(row, col, weight)` triples in row-major order.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.mask
            .edges()
            .map(|(r, c)| (r, c, self.weight(r, c).expect("mask/weight storage out of sync")))
    }

    /// Adds a link between two active neurons; fails if it already exists.
    pub fn insert_link(&mut self, row: usize, col: usize, w: f64) -> Result<()> {
        self.mask.check(row, col)?;
        if !self.row_active[row] || !self.col_active[col] {
            return Err(Error::invalid(format!(
                "cannot link ({row}, {col}): endpoint is inactive"
            )));
        }
        match self.mask.insert_at(row, col)? {
            Some(pos) => {
                self.weights[col].insert(pos, w);
                Ok(())
            }
            None => Err(Error::DuplicateLink { row, col }),
        }
    }

    /// Removes a link and returns its weight, or `None` if absent.
    pub fn remove_link(&mut self, row: usize, col: usize) -> Result<Option<f64>> {
        Ok(self
            .mask
            .remove_at(row, col)?
            .map(|pos| self.weights[col].remove(pos)))
    }

    /// Marks output neuron `row` inactive and drops its links; returns the
    /// number of links removed.
    pub fn deactivate_row(&mut self, row: usize) -> usize {
        self.row_active[row] = false;
        let cols = self.mask.row_adj[row].clone();
        for &c in &cols {
            self.remove_link(row, c).expect("index in range");
        }
        cols.len()
    }

    /// Marks input neuron `col` inactive and drops its links.
    pub fn deactivate_col(&mut self, col: usize) -> usize {
        self.col_active[col] = false;
        let rows = self.mask.col_adj[col].clone();
        for &r in &rows {
            self.remove_link(r, col).expect("index in range");
        }
        rows.len()
    }

    /// `y[j] = sum over links (j, i) of W[j, i] * x[i]`.
    pub fn masked_matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols() {
            return Err(Error::DimensionMismatch {
                context: "masked_matvec input",
                expected: self.cols(),
                actual: x.len(),
            });
        }
        let mut y = vec![0.0; self.rows()];
        for (col, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let (rows, ws) = self.column(col);
            for (&r, &w) in rows.iter().zip(ws) {
                y[r] += w * xi;
            }
        }
        Ok(y)
    }

    /// Checks the structural invariants: inactive neurons carry no links and an
    /// output layer is fully connected over its active neurons.
    pub fn validate(&self) -> Result<()> {
        for (r, &active) in self.row_active.iter().enumerate() {
            if !active && !self.mask.row_adj[r].is_empty() {
                return Err(Error::invalid(format!("inactive output {r} still has links")));
            }
        }
        for (c, &active) in self.col_active.iter().enumerate() {
            if !active && !self.mask.col_adj[c].is_empty() {
                return Err(Error::invalid(format!("inactive input {c} still has links")));
            }
        }
        if self.is_output {
            let active_cols = self.col_active.iter().filter(|&&a| a).count();
            for (r, &active) in self.row_active.iter().enumerate() {
                if active && self.mask.row_adj[r].len() != active_cols {
                    return Err(Error::invalid(format!(
                        "output layer row {r} is not fully connected over active inputs"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Writes the layer checkpoint: magic, version, `m`, `n`, threshold,
    /// decay, flags, activity bytes, entry count, then `(row, col, weight)`
    /// triples in row-major order. All integers little-endian; weights as raw
    /// IEEE-754 bits.
    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(LAYER_MAGIC)?;
        put_u32(w, LAYER_VERSION)?;
        put_u32(w, self.rows() as u32)?;
        put_u32(w, self.cols() as u32)?;
        put_f64(w, self.threshold)?;
        put_f64(w, self.decay)?;
        put_u32(w, u32::from(self.is_output))?;
        let flags: Vec<u8> = self
            .row_active
            .iter()
            .chain(&self.col_active)
            .map(|&a| u8::from(a))
            .collect();
        w.write_all(&flags)?;
        put_u64(w, self.num_links() as u64)?;
        for (r, c, weight) in self.links() {
            put_u32(w, r as u32)?;
            put_u32(w, c as u32)?;
            put_f64(w, weight)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let corrupt = |e: io::Error| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::CorruptCheckpoint("truncated layer record".into()),
            _ => Error::Io(e),
        };
        let magic = get_array::<4>(r).map_err(corrupt)?;
        if &magic != LAYER_MAGIC {
            return Err(Error::CorruptCheckpoint("bad layer magic".into()));
        }
        let version = get_u32(r).map_err(corrupt)?;
        if version != LAYER_VERSION {
            return Err(Error::CorruptCheckpoint(format!("unsupported layer version {version}")));
        }
        let rows = get_u32(r).map_err(corrupt)? as usize;
        let cols = get_u32(r).map_err(corrupt)? as usize;
        let threshold = get_f64(r).map_err(corrupt)?;
        let decay = get_f64(r).map_err(corrupt)?;
        if rows > MAX_DIM || cols > MAX_DIM {
            return Err(Error::CorruptCheckpoint(format!("implausible layer shape {rows}x{cols}")));
        }
        let flags = get_u32(r).map_err(corrupt)?;
        if flags > 1 {
            return Err(Error::CorruptCheckpoint(format!("unknown layer flags {flags:#x}")));
        }
        let mut active = vec![0u8; rows + cols];
        r.read_exact(&mut active).map_err(corrupt)?;
        if active.iter().any(|&b| b > 1) {
            return Err(Error::CorruptCheckpoint("activity flag is not 0/1".into()));
        }
        let count = get_u64(r).map_err(corrupt)?;
        if count > (rows as u64) * (cols as u64) {
            return Err(Error::CorruptCheckpoint(format!(
                "{count} links cannot fit a {rows}x{cols} layer"
            )));
        }
        let mut triples = Vec::with_capacity(count.min(1 << 20) as usize);
        let mut prev: Option<(usize, usize)> = None;
        for _ in 0..count {
            let row = get_u32(r).map_err(corrupt)? as usize;
            let col = get_u32(r).map_err(corrupt)? as usize;
            let weight = get_f64(r).map_err(corrupt)?;
            if row >= rows || col >= cols {
                return Err(Error::CorruptCheckpoint(format!("link ({row}, {col}) out of range")));
            }
            if prev.is_some_and(|p| p >= (row, col)) {
                return Err(Error::CorruptCheckpoint("links not in strict row-major order".into()));
            }
            prev = Some((row, col));
            triples.push((row, col, weight));
        }
        let mask = SparseMask::from_edges(rows, cols, triples.iter().map(|&(r, c, _)| (r, c)))
            .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        let mut layer = SparseLayer::new(mask, threshold, decay, flags == 1)
            .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        for (r, c, w) in triples {
            layer.set_weight(r, c, w)?;
        }
        layer.row_active = active[..rows].iter().map(|&b| b == 1).collect();
        layer.col_active = active[rows..].iter().map(|&b| b == 1).collect();
        layer
            .validate()
            .map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        Ok(layer)
    }
}
