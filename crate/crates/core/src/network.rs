//! Feed-forward spiking network over sparse layers: temporal forward pass,
//! backpropagation through time with surrogate gradients, and checkpoints.
//!
//! Hidden layers are LIF populations. The output layer is a leaky integrator
//! that never spikes or resets, `u(t) = alpha * u(t-1) + I(t)`, and the logits
//! are the time-mean of `u`. Training minimises softmax cross-entropy with
//! plain SGD; gradients only exist on present links, so the topology is
//! untouched by a weight update.

use std::io::{self, Read, Write};

use crate::codec::{get_array, get_u32, put_u32};
use crate::data::SpikeTensor;
use crate::error::{Error, Result};
use crate::neuron::{heaviside, surrogate_grad, SurrogateSpec};
use crate::sparse::SparseLayer;

const NET_MAGIC: &[u8; 4] = b"CHSN";
const NET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SnnNetwork {
    layers: Vec<SparseLayer>,
    timesteps: usize,
    expansion: Vec<usize>,
}

/// Everything recorded during one sample's forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Input spikes, `[t][feature]`.
    pub input: Vec<Vec<f64>>,
    /// Hidden-layer spikes, `[hidden layer][t][neuron]`.
    pub spikes: Vec<Vec<Vec<f64>>>,
    /// Membrane potentials of every layer (readout included), `[layer][t][neuron]`.
    pub potentials: Vec<Vec<Vec<f64>>>,
    /// Spike totals for the input followed by each hidden layer.
    pub spike_counts: Vec<u64>,
}

impl ForwardTrace {
    pub fn timesteps(&self) -> usize {
        self.input.len()
    }

    /// Spike trains presynaptic to layer `l` (layer 0 sees the input).
    pub fn presynaptic(&self, l: usize) -> &[Vec<f64>] {
        if l == 0 {
            &self.input
        } else {
            &self.spikes[l - 1]
        }
    }
}

/// Per-link gradient buffers laid out like the layers' weight storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<Vec<Vec<f64>>>,
}

impl Gradients {
    pub fn zeros_like(net: &SnnNetwork) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| (0..l.cols()).map(|c| vec![0.0; l.column(c).0.len()]).collect())
            .collect();
        Self { layers }
    }

    /// Gradient for link `(row, col)` of layer `layer`, if the link exists.
    pub fn get(&self, net: &SnnNetwork, layer: usize, row: usize, col: usize) -> Option<f64> {
        let (rows, _) = net.layers.get(layer)?.column(col);
        rows.binary_search(&row).ok().map(|p| self.layers[layer][col][p])
    }

    /// `self <- momentum * self + grads`, for heavy-ball SGD. Both buffers
    /// must come from the same topology.
    pub fn accumulate(&mut self, momentum: f64, grads: &Gradients) -> Result<()> {
        let shapes_match = self.layers.len() == grads.layers.len()
            && self.layers.iter().zip(&grads.layers).all(|(a, b)| {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.len() == y.len())
            });
        if !shapes_match {
            return Err(Error::Incompatible("gradient buffers from different topologies".into()));
        }
        for (v, g) in self.layers.iter_mut().flatten().flatten().zip(grads.layers.iter().flatten().flatten()) {
            *v = momentum * *v + g;
        }
        Ok(())
    }

    fn scale(&mut self, k: f64) {
        self.layers.iter_mut().flatten().flatten().for_each(|g| *g *= k);
    }
}

fn dims_error(context: &'static str, expected: usize, actual: usize) -> Error {
    Error::DimensionMismatch {
        context,
        expected,
        actual,
    }
}

impl SnnNetwork {
    /// `expansion` holds one factor per hidden layer.
    pub fn new(layers: Vec<SparseLayer>, timesteps: usize, expansion: Vec<usize>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        if timesteps == 0 {
            return Err(Error::invalid("network needs at least one time step"));
        }
        if expansion.len() != layers.len() - 1 {
            return Err(dims_error("expansion factors", layers.len() - 1, expansion.len()));
        }
        if expansion.contains(&0) {
            return Err(Error::invalid("expansion factors must be >= 1"));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[0].rows() != pair[1].cols() {
                return Err(dims_error("layer chaining", pair[0].rows(), pair[1].cols()));
            }
            if pair[0].is_output_layer() {
                return Err(Error::invalid(format!("layer {l} is flagged as output but is not last")));
            }
            if pair[0].row_active() != pair[1].col_active() {
                return Err(Error::invalid(format!("activity flags disagree between layers {l} and {}", l + 1)));
            }
        }
        if !layers.last().unwrap().is_output_layer() {
            return Err(Error::invalid("last layer must be flagged as output"));
        }
        for layer in &layers {
            layer.validate()?;
        }
        Ok(Self {
            layers,
            timesteps,
            expansion,
        })
    }

    pub fn layers(&self) -> &[SparseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [SparseLayer] {
        &mut self.layers
    }

    pub fn layer(&self, l: usize) -> &SparseLayer {
        &self.layers[l]
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn expansion(&self) -> &[usize] {
        &self.expansion
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].cols()
    }

    pub fn classes(&self) -> usize {
        self.layers.last().unwrap().rows()
    }

    pub fn num_links(&self) -> usize {
        self.layers.iter().map(SparseLayer::num_links).sum()
    }

    /// Errors if a non-output layer has lost every link.
    pub fn check_trainable(&self) -> Result<()> {
        let hidden = &self.layers[..self.layers.len() - 1];
        if hidden.iter().any(|l| l.num_links() == 0) || self.num_links() == 0 {
            return Err(Error::Percolated);
        }
        Ok(())
    }

    fn sample_frames(&self, input: &SpikeTensor, sample: usize) -> Result<Vec<Vec<f64>>> {
        if input.timesteps() != self.timesteps {
            return Err(dims_error("input time steps", self.timesteps, input.timesteps()));
        }
        if input.features() != self.inputs() {
            return Err(dims_error("input features", self.inputs(), input.features()));
        }
        if sample >= input.samples() {
            return Err(dims_error("sample index", input.samples(), sample));
        }
        Ok((0..self.timesteps)
            .map(|t| input.frame(t, sample).iter().map(|&b| f64::from(b)).collect())
            .collect())
    }

    /// Runs sample `sample` of `input` through the network.
    pub fn forward(&self, input: &SpikeTensor, sample: usize) -> Result<(Vec<f64>, ForwardTrace)> {
        let frames = self.sample_frames(input, sample)?;
        Ok(self.run(frames, None))
    }

    /// Forward pass over explicit input frames (`[t][feature]`). With a
    /// smooth-test surrogate, the sigmoid replaces the step function.
    pub fn forward_frames(
        &self,
        frames: Vec<Vec<f64>>,
        spec: Option<&SurrogateSpec>,
    ) -> Result<(Vec<f64>, ForwardTrace)> {
        if frames.len() != self.timesteps {
            return Err(dims_error("input time steps", self.timesteps, frames.len()));
        }
        if let Some(bad) = frames.iter().find(|f| f.len() != self.inputs()) {
            return Err(dims_error("input features", self.inputs(), bad.len()));
        }
        Ok(self.run(frames, spec))
    }

    fn run(&self, input: Vec<Vec<f64>>, spec: Option<&SurrogateSpec>) -> (Vec<f64>, ForwardTrace) {
        let t_max = self.timesteps;
        let n_layers = self.layers.len();
        let mut spikes: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n_layers - 1);
        let mut potentials: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n_layers);
        let mut spike_counts = vec![count(&input)];

        for (l, layer) in self.layers.iter().enumerate() {
            let pre = if l == 0 { &input } else { &spikes[l - 1] };
            let alpha = layer.decay();
            let theta = layer.threshold();
            let mut v = vec![0.0; layer.rows()];
            let mut z = vec![0.0; layer.rows()];
            let mut vs = Vec::with_capacity(t_max);
            let mut zs = Vec::with_capacity(t_max);
            for x in pre.iter() {
                let drive = drive(layer, x);
                if layer.is_output_layer() {
                    for (vj, ij) in v.iter_mut().zip(&drive) {
                        *vj = alpha * *vj + ij;
                    }
                } else {
                    for j in 0..v.len() {
                        v[j] = (1.0 - z[j]) * alpha * v[j] + drive[j];
                        z[j] = match spec {
                            Some(s) => s.activate(v[j], theta),
                            None => heaviside(v[j] - theta),
                        };
                    }
                    zs.push(z.clone());
                }
                vs.push(v.clone());
            }
            potentials.push(vs);
            if !layer.is_output_layer() {
                spike_counts.push(count(&zs));
                spikes.push(zs);
            }
        }

        let readout = potentials.last().unwrap();
        let mut logits = vec![0.0; self.classes()];
        for u in readout {
            for (o, &uj) in logits.iter_mut().zip(u) {
                *o += uj;
            }
        }
        logits.iter_mut().for_each(|o| *o /= t_max as f64);
        (
            logits,
            ForwardTrace {
                input,
                spikes,
                potentials,
                spike_counts,
            },
        )
    }

    /// Accumulates `dL/dW` for one sample into `grads` given `dL/dlogits`.
    fn backward(&self, trace: &ForwardTrace, dlogits: &[f64], spec: &SurrogateSpec, grads: &mut Gradients) {
        let t_max = self.timesteps;
        let last = self.layers.len() - 1;

        // dL/dI(t) of the layer being processed, [t][neuron].
        let mut d_drive: Vec<Vec<f64>> = {
            let alpha = self.layers[last].decay();
            let mut out = vec![vec![0.0; dlogits.len()]; t_max];
            let mut carry = vec![0.0; dlogits.len()];
            for t in (0..t_max).rev() {
                for j in 0..dlogits.len() {
                    carry[j] = dlogits[j] / t_max as f64 + alpha * carry[j];
                    out[t][j] = carry[j];
                }
            }
            out
        };

        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let pre = trace.presynaptic(l);
            let g = &mut grads.layers[l];
            for t in 0..t_max {
                let dt = &d_drive[t];
                for (col, &xi) in pre[t].iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    let (rows, _) = layer.column(col);
                    for (gk, &r) in g[col].iter_mut().zip(rows) {
                        *gk += dt[r] * xi;
                    }
                }
            }
            if l == 0 {
                break;
            }

            // Spikes of layer l-1 feed layer l: eps(t) = W^T dI(t).
            let below = &self.layers[l - 1];
            let width = below.rows();
            let mut eps = vec![vec![0.0; width]; t_max];
            for t in 0..t_max {
                for (col, e) in eps[t].iter_mut().enumerate() {
                    let (rows, ws) = layer.column(col);
                    *e = rows.iter().zip(ws).map(|(&r, &w)| w * d_drive[t][r]).sum();
                }
            }

            let alpha = below.decay();
            let theta = below.threshold();
            let vs = &trace.potentials[l - 1];
            let zs = &trace.spikes[l - 1];
            let mut next = vec![vec![0.0; width]; t_max];
            let mut dv_next = vec![0.0; width];
            for t in (0..t_max).rev() {
                for j in 0..width {
                    let v = vs[t][j];
                    let z = zs[t][j];
                    // v(t+1) = (1 - z(t)) * alpha * v(t) + I(t+1)
                    let dz = eps[t][j] - dv_next[j] * alpha * v;
                    let dv = dz * surrogate_grad(v, theta, spec) + dv_next[j] * (1.0 - z) * alpha;
                    next[t][j] = dv;
                    dv_next[j] = dv;
                }
            }
            d_drive = next;
        }
    }

    /// Mean cross-entropy over the batch and its gradient on every present link.
    pub fn loss_and_gradients(
        &self,
        batch: &SpikeTensor,
        labels: &[usize],
        spec: &SurrogateSpec,
    ) -> Result<(f64, Gradients)> {
        if batch.samples() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if labels.len() != batch.samples() {
            return Err(dims_error("batch labels", batch.samples(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.classes()) {
            return Err(Error::invalid(format!("label {bad} outside {} classes", self.classes())));
        }
        let smooth = matches!(spec.kind, crate::neuron::SurrogateKind::SmoothTest);
        let mut grads = Gradients::zeros_like(self);
        let mut loss = 0.0;
        for (s, &y) in labels.iter().enumerate() {
            let frames = self.sample_frames(batch, s)?;
            let (logits, trace) = self.run(frames, smooth.then_some(spec));
            let (l, dlogits) = cross_entropy(&logits, y);
            loss += l;
            self.backward(&trace, &dlogits, spec, &mut grads);
        }
        let b = labels.len() as f64;
        grads.scale(1.0 / b);
        Ok((loss / b, grads))
    }

    /// `W <- W - lr * grad` on every present link.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (col, gc) in g.iter().enumerate() {
                for (w, &d) in layer.column_weights_mut(col).iter_mut().zip(gc) {
                    *w -= lr * d;
                }
            }
        }
    }

    /// One SGD step on a batch; returns the batch loss before the update.
    pub fn train_step(
        &mut self,
        batch: &SpikeTensor,
        labels: &[usize],
        lr: f64,
        spec: &SurrogateSpec,
    ) -> Result<f64> {
        self.check_trainable()?;
        let (loss, grads) = self.loss_and_gradients(batch, labels, spec)?;
        if lr != 0.0 {
            self.apply_gradients(&grads, lr);
        }
        Ok(loss)
    }

    /// Index of the largest logit (lowest index on ties).
    pub fn predict(&self, input: &SpikeTensor, sample: usize) -> Result<usize> {
        let (logits, _) = self.forward(input, sample)?;
        Ok(argmax(&logits))
    }

    /// Fraction of samples whose argmax logit matches the label.
    pub fn evaluate(&self, input: &SpikeTensor, labels: &[usize]) -> Result<f64> {
        if labels.is_empty() {
            return Err(Error::invalid("cannot evaluate on an empty dataset"));
        }
        if labels.len() != input.samples() {
            return Err(dims_error("evaluation labels", input.samples(), labels.len()));
        }
        let mut correct = 0usize;
        for (s, &y) in labels.iter().enumerate() {
            if self.predict(input, s)? == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / labels.len() as f64)
    }

    /// Network checkpoint: `CHSN`, version, T, layer count, hidden-layer count
    /// and expansion factors (little-endian u32), then each layer record.
    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(NET_MAGIC)?;
        put_u32(w, NET_VERSION)?;
        put_u32(w, self.timesteps as u32)?;
        put_u32(w, self.layers.len() as u32)?;
        put_u32(w, self.expansion.len() as u32)?;
        for &b in &self.expansion {
            put_u32(w, b as u32)?;
        }
        for layer in &self.layers {
            layer.write_to(w)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let corrupt = |e: io::Error| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::CorruptCheckpoint("truncated network header".into()),
            _ => Error::Io(e),
        };
        let magic = get_array::<4>(r).map_err(corrupt)?;
        if &magic != NET_MAGIC {
            return Err(Error::CorruptCheckpoint("bad network magic".into()));
        }
        let version = get_u32(r).map_err(corrupt)?;
        if version != NET_VERSION {
            return Err(Error::CorruptCheckpoint(format!("unsupported network version {version}")));
        }
        let timesteps = get_u32(r).map_err(corrupt)? as usize;
        let n_layers = get_u32(r).map_err(corrupt)? as usize;
        let n_expansion = get_u32(r).map_err(corrupt)? as usize;
        if n_layers == 0 || n_layers > 1024 || n_expansion + 1 != n_layers {
            return Err(Error::CorruptCheckpoint(format!(
                "inconsistent layer count {n_layers} / {n_expansion} expansion factors"
            )));
        }
        let expansion = (0..n_expansion)
            .map(|_| get_u32(r).map(|b| b as usize).map_err(corrupt))
            .collect::<Result<Vec<_>>>()?;
        let layers = (0..n_layers)
            .map(|_| SparseLayer::read_from(r))
            .collect::<Result<Vec<_>>>()?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::CorruptCheckpoint("trailing bytes after last layer".into()));
        }
        SnnNetwork::new(layers, timesteps, expansion).map_err(|e| Error::CorruptCheckpoint(e.to_string()))
    }
}

fn count(frames: &[Vec<f64>]) -> u64 {
    frames.iter().flatten().filter(|&&s| s != 0.0).count() as u64
}

/// Synaptic drive `I = (C . W) x`, skipping silent inputs.
#[inline]
fn drive(layer: &SparseLayer, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; layer.rows()];
    for (col, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let (rows, ws) = layer.column(col);
        if xi == 1.0 {
            for (&r, &w) in rows.iter().zip(ws) {
                out[r] += w;
            }
        } else {
            for (&r, &w) in rows.iter().zip(ws) {
                out[r] += w * xi;
            }
        }
    }
    out
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: &[f64], label: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|&e| e / sum).collect();
    grad[label] -= 1.0;
    (loss, grad)
}
