//! Run configuration as a flat `key = value` text file.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected so that typos do not silently fall back to defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::evolution::RemovalWeighting;
use crate::neuron::{SurrogateKind, SurrogateSpec};
use crate::topology::CorrelationMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyInit {
    /// Correlation-ranked first layer, balanced random elsewhere.
    Sscti,
    /// Balanced random masks everywhere.
    Random,
    /// Fully connected, the dense baseline.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightInit {
    Sswi,
    Kaiming,
}

macro_rules! keyword_enum {
    ($ty:ident { $($name:literal => $variant:ident),+ $(,)? }) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(Self::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($ty), " {:?}"), other
                    ))),
                }
            }
        }
        impl std::fmt::Display for $ty {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                f.write_str(match self { $(Self::$variant => $name,)+ })
            }
        }
    };
}

keyword_enum!(TopologyInit { "sscti" => Sscti, "random" => Random, "dense" => Dense });
keyword_enum!(WeightInit { "sswi" => Sswi, "kaiming" => Kaiming });

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// Use only the first `n` training samples (0 = all).
    pub train_limit: usize,
    pub test_limit: usize,
    /// First hidden layer width is `beta * input width`.
    pub beta: usize,
    /// Widths of any further hidden layers.
    pub extra_hidden: Vec<usize>,
    pub timesteps: usize,
    pub sparsity: f64,
    pub zeta0: f64,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub threshold: f64,
    pub decay: f64,
    pub seed_encode: u64,
    pub seed_init: u64,
    pub seed_evolve: u64,
    pub correlation: CorrelationMode,
    pub surrogate: SurrogateKind,
    /// Surrogate half-width; `None` means half the threshold.
    pub surrogate_width: Option<f64>,
    pub output_dir: PathBuf,
    pub topology_init: TopologyInit,
    pub weight_init: WeightInit,
    pub evolve: bool,
    /// Training samples used to estimate input correlations.
    pub phi_samples: usize,
    pub removal_weighting: RemovalWeighting,
    pub pj_per_sop: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let data = PathBuf::from("data/mnist");
        Self {
            train_images: data.join("train-images-idx3-ubyte"),
            train_labels: data.join("train-labels-idx1-ubyte"),
            test_images: data.join("t10k-images-idx3-ubyte"),
            test_labels: data.join("t10k-labels-idx1-ubyte"),
            train_limit: 0,
            test_limit: 0,
            beta: 2,
            extra_hidden: Vec::new(),
            timesteps: 4,
            sparsity: 0.95,
            zeta0: 0.35,
            epochs: 10,
            lr: 1.0,
            momentum: 0.0,
            batch_size: 100,
            threshold: 1.0,
            decay: 0.5,
            seed_encode: 1,
            seed_init: 2,
            seed_evolve: 3,
            correlation: CorrelationMode::PearsonPhi,
            surrogate: SurrogateKind::Rectangular,
            surrogate_width: None,
            output_dir: PathBuf::from("runs/default"),
            topology_init: TopologyInit::Sscti,
            weight_init: WeightInit::Sswi,
            evolve: true,
            phi_samples: 2048,
            removal_weighting: RemovalWeighting::Complement,
            pj_per_sop: crate::metrics::DEFAULT_PJ_PER_SOP,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

fn parse_surrogate(value: &str) -> Result<SurrogateKind> {
    match value {
        "rectangular" => Ok(SurrogateKind::Rectangular),
        "smooth-test" => Ok(SurrogateKind::SmoothTest),
        other => Err(Error::Config(format!("unknown surrogate {other:?}"))),
    }
}

fn surrogate_name(kind: SurrogateKind) -> &'static str {
    match kind {
        SurrogateKind::Rectangular => "rectangular",
        SurrogateKind::SmoothTest => "smooth-test",
    }
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "train_images",
        "train_labels",
        "test_images",
        "test_labels",
        "train_limit",
        "test_limit",
        "beta",
        "extra_hidden",
        "timesteps",
        "sparsity",
        "zeta0",
        "epochs",
        "lr",
        "momentum",
        "batch_size",
        "threshold",
        "decay",
        "seed_encode",
        "seed_init",
        "seed_evolve",
        "correlation",
        "surrogate",
        "surrogate_width",
        "output_dir",
        "topology_init",
        "weight_init",
        "evolve",
        "phi_samples",
        "removal_weighting",
        "pj_per_sop",
    ];

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "train_images" => self.train_images = value.into(),
            "train_labels" => self.train_labels = value.into(),
            "test_images" => self.test_images = value.into(),
            "test_labels" => self.test_labels = value.into(),
            "train_limit" => self.train_limit = parse(key, value)?,
            "test_limit" => self.test_limit = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "extra_hidden" => {
                self.extra_hidden = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_>>()?
            }
            "timesteps" => self.timesteps = parse(key, value)?,
            "sparsity" => self.sparsity = parse(key, value)?,
            "zeta0" => self.zeta0 = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "momentum" => self.momentum = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "decay" => self.decay = parse(key, value)?,
            "seed_encode" => self.seed_encode = parse(key, value)?,
            "seed_init" => self.seed_init = parse(key, value)?,
            "seed_evolve" => self.seed_evolve = parse(key, value)?,
            "correlation" => self.correlation = value.parse()?,
            "surrogate" => self.surrogate = parse_surrogate(value)?,
            "surrogate_width" => {
                self.surrogate_width = match value {
                    "auto" | "" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "output_dir" => self.output_dir = value.into(),
            "topology_init" => self.topology_init = value.parse()?,
            "weight_init" => self.weight_init = value.parse()?,
            "evolve" => self.evolve = parse_bool(key, value)?,
            "phi_samples" => self.phi_samples = parse(key, value)?,
            "removal_weighting" => self.removal_weighting = value.parse()?,
            "pj_per_sop" => self.pj_per_sop = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the defaults and validates.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key = value` lines without validating.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, strip_config(e))))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.beta == 0 {
            return fail("beta must be >= 1".into());
        }
        if self.extra_hidden.contains(&0) {
            return fail("extra_hidden widths must be >= 1".into());
        }
        if self.timesteps == 0 {
            return fail("timesteps must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return fail(format!("sparsity must lie in [0, 1), got {}", self.sparsity));
        }
        if !(0.0..=1.0).contains(&self.zeta0) {
            return fail(format!("zeta0 must lie in [0, 1], got {}", self.zeta0));
        }
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be a non-negative number, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1".into());
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return fail(format!("threshold must be > 0, got {}", self.threshold));
        }
        if !(0.0..=1.0).contains(&self.decay) {
            return fail(format!("decay must lie in [0, 1], got {}", self.decay));
        }
        if let Some(w) = self.surrogate_width {
            if !(w > 0.0 && w.is_finite()) {
                return fail(format!("surrogate_width must be > 0, got {w}"));
            }
        }
        if self.phi_samples == 0 {
            return fail("phi_samples must be >= 1".into());
        }
        if !(self.pj_per_sop >= 0.0 && self.pj_per_sop.is_finite()) {
            return fail(format!("pj_per_sop must be >= 0, got {}", self.pj_per_sop));
        }
        Ok(())
    }

    pub fn surrogate_spec(&self) -> SurrogateSpec {
        SurrogateSpec {
            kind: self.surrogate,
            width: self.surrogate_width.unwrap_or(0.5 * self.threshold),
        }
    }

    /// Canonical text form; parsing it yields the same configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("train_images", self.train_images.display().to_string());
        put("train_labels", self.train_labels.display().to_string());
        put("test_images", self.test_images.display().to_string());
        put("test_labels", self.test_labels.display().to_string());
        put("train_limit", self.train_limit.to_string());
        put("test_limit", self.test_limit.to_string());
        put("beta", self.beta.to_string());
        put(
            "extra_hidden",
            self.extra_hidden.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
        );
        put("timesteps", self.timesteps.to_string());
        put("sparsity", self.sparsity.to_string());
        put("zeta0", self.zeta0.to_string());
        put("epochs", self.epochs.to_string());
        put("lr", self.lr.to_string());
        put("momentum", self.momentum.to_string());
        put("batch_size", self.batch_size.to_string());
        put("threshold", self.threshold.to_string());
        put("decay", self.decay.to_string());
        put("seed_encode", self.seed_encode.to_string());
        put("seed_init", self.seed_init.to_string());
        put("seed_evolve", self.seed_evolve.to_string());
        put("correlation", self.correlation.to_string());
        put("surrogate", surrogate_name(self.surrogate).into());
        put(
            "surrogate_width",
            self.surrogate_width.map_or("auto".into(), |w| w.to_string()),
        );
        put("output_dir", self.output_dir.display().to_string());
        put("topology_init", self.topology_init.to_string());
        put("weight_init", self.weight_init.to_string());
        put("evolve", self.evolve.to_string());
        put("phi_samples", self.phi_samples.to_string());
        put("removal_weighting", self.removal_weighting.to_string());
        put("pj_per_sop", self.pj_per_sop.to_string());
        out
    }
}

fn strip_config(e: Error) -> String {
    match e {
        Error::Config(msg) => msg,
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::parse_str(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn every_key_is_settable() {
        let cfg = RunConfig::default();
        let text = cfg.to_text();
        let keys: Vec<&str> = text.lines().map(|l| l.split('=').next().unwrap().trim()).collect();
        assert_eq!(keys, RunConfig::KEYS);
    }

    #[test]
    fn parses_overrides_and_comments() {
        let cfg = RunConfig::parse_str(
            "# a run\n\nsparsity = 0.9\nextra_hidden = 300, 100\nevolve = false\nsurrogate_width = 0.3\n",
        )
        .unwrap();
        assert_eq!(cfg.sparsity, 0.9);
        assert_eq!(cfg.extra_hidden, vec![300, 100]);
        assert!(!cfg.evolve);
        assert_eq!(cfg.surrogate_spec().width, 0.3);
        assert_eq!(RunConfig::default().surrogate_spec().width, 0.5);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "sparisty = 0.9",
            "sparsity = 1.0",
            "sparsity 0.9",
            "epochs = -1",
            "beta = 0",
            "evolve = maybe",
            "correlation = spearman",
            "threshold = 0",
            "topology_init = grid",
        ] {
            let err = RunConfig::parse_str(text).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}: {err}");
        }
    }
}
