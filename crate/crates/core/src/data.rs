//! Dataset ingestion, spike encoding and synthetic spike generators.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{get_array, get_u32, put_u32};
use crate::error::{Error, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const SPKT_MAGIC: &[u8; 4] = b"SPKT";
const SPKT_VERSION: u32 = 1;

/// Binary spike train indexed `(time step, sample, feature)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTensor {
    timesteps: usize,
    samples: usize,
    features: usize,
    data: Vec<u8>,
}

impl SpikeTensor {
    pub fn zeros(timesteps: usize, samples: usize, features: usize) -> Self {
        Self {
            timesteps,
            samples,
            features,
            data: vec![0; timesteps * samples * features],
        }
    }

    pub fn from_vec(timesteps: usize, samples: usize, features: usize, data: Vec<u8>) -> Result<Self> {
        let expected = timesteps * samples * features;
        if data.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "spike tensor data",
                expected,
                actual: data.len(),
            });
        }
        if let Some(&bad) = data.iter().find(|&&b| b > 1) {
            return Err(Error::NonBinary(bad));
        }
        Ok(Self {
            timesteps,
            samples,
            features,
            data,
        })
    }

    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    fn offset(&self, t: usize, s: usize) -> usize {
        (t * self.samples + s) * self.features
    }

    #[inline]
    pub fn get(&self, t: usize, s: usize, i: usize) -> u8 {
        self.data[self.offset(t, s) + i]
    }

    pub fn set(&mut self, t: usize, s: usize, i: usize, spike: bool) {
        let o = self.offset(t, s) + i;
        self.data[o] = u8::from(spike);
    }

    /// Feature vector of sample `s` at step `t`.
    #[inline]
    pub fn frame(&self, t: usize, s: usize) -> &[u8] {
        let o = self.offset(t, s);
        &self.data[o..o + self.features]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn count_ones(&self) -> u64 {
        self.data.iter().map(|&b| u64::from(b)).sum()
    }

    /// New tensor holding the listed samples, in the given order.
    pub fn select(&self, samples: &[usize]) -> SpikeTensor {
        let mut data = Vec::with_capacity(self.timesteps * samples.len() * self.features);
        for t in 0..self.timesteps {
            for &s in samples {
                data.extend_from_slice(self.frame(t, s));
            }
        }
        SpikeTensor {
            timesteps: self.timesteps,
            samples: samples.len(),
            features: self.features,
            data,
        }
    }

    /// Portable file form: `SPKT`, version, T, samples, features (little-endian
    /// u32), then the spikes bit-packed in `(t, sample, feature)` order, least
    /// significant bit first, final byte zero-padded.
    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(SPKT_MAGIC)?;
        put_u32(w, SPKT_VERSION)?;
        put_u32(w, self.timesteps as u32)?;
        put_u32(w, self.samples as u32)?;
        put_u32(w, self.features as u32)?;
        let mut packed = vec![0u8; self.data.len().div_ceil(8)];
        for (k, &b) in self.data.iter().enumerate() {
            packed[k / 8] |= b << (k % 8);
        }
        w.write_all(&packed)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let eof = |e: io::Error| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::Truncated {
                file: "spike tensor".into(),
                expected: 0,
                found: 0,
            },
            _ => Error::Io(e),
        };
        let magic = get_array::<4>(r).map_err(eof)?;
        if &magic != SPKT_MAGIC {
            return Err(Error::BadMagic {
                file: "spike tensor".into(),
                expected: u32::from_be_bytes(*SPKT_MAGIC),
                found: u32::from_be_bytes(magic),
            });
        }
        let version = get_u32(r).map_err(eof)?;
        if version != SPKT_VERSION {
            return Err(Error::invalid(format!("unsupported spike tensor version {version}")));
        }
        let t = get_u32(r).map_err(eof)? as usize;
        let s = get_u32(r).map_err(eof)? as usize;
        let f = get_u32(r).map_err(eof)? as usize;
        let n = t
            .checked_mul(s)
            .and_then(|x| x.checked_mul(f))
            .ok_or_else(|| Error::invalid("spike tensor shape overflows"))?;
        let mut packed = Vec::new();
        r.read_to_end(&mut packed)?;
        let need = n.div_ceil(8);
        if packed.len() != need {
            return Err(Error::Truncated {
                file: "spike tensor".into(),
                expected: need as u64,
                found: packed.len() as u64,
            });
        }
        let data = (0..n).map(|k| (packed[k / 8] >> (k % 8)) & 1).collect();
        Ok(Self {
            timesteps: t,
            samples: s,
            features: f,
            data,
        })
    }
}

/// Images scaled to `[0, 1]` with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: usize,
    classes: usize,
    images: Vec<f32>,
    labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(features: usize, classes: usize, images: Vec<f32>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != features * labels.len() {
            return Err(Error::CountMismatch {
                images: images.len().checked_div(features).unwrap_or(0),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(format!("label {bad} outside {classes} classes")));
        }
        if let Some(bad) = images.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("pixel {bad} outside [0, 1]")));
        }
        Ok(Self {
            features,
            classes,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn image(&self, s: usize) -> &[f32] {
        &self.images[s * self.features..(s + 1) * self.features]
    }

    pub fn mean_intensity(&self) -> f64 {
        self.images.iter().map(|&p| f64::from(p)).sum::<f64>() / self.images.len().max(1) as f64
    }

    /// First `n` samples (or all of them if fewer).
    pub fn truncate(mut self, n: usize) -> Self {
        let n = n.min(self.len());
        self.labels.truncate(n);
        self.images.truncate(n * self.features);
        self
    }

    pub fn head(&self, n: usize) -> Self {
        self.clone().truncate(n)
    }
}

fn read_be_u32(bytes: &[u8], at: usize, file: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Truncated {
            file: file.to_string(),
            expected: (at + 4) as u64,
            found: bytes.len() as u64,
        })
}

fn check_magic(bytes: &[u8], expected: u32, file: &str) -> Result<()> {
    let found = read_be_u32(bytes, 0, file)?;
    if found != expected {
        return Err(Error::BadMagic {
            file: file.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}

/// Parses an IDX image/label file pair (big-endian headers, `u8` payload).
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<LabeledDataset> {
    check_magic(images, IDX_IMAGES_MAGIC, "images")?;
    check_magic(labels, IDX_LABELS_MAGIC, "labels")?;
    let n_images = read_be_u32(images, 4, "images")? as usize;
    let rows = read_be_u32(images, 8, "images")? as usize;
    let cols = read_be_u32(images, 12, "images")? as usize;
    let n_labels = read_be_u32(labels, 4, "labels")? as usize;
    let features = rows * cols;
    let image_bytes = 16 + n_images * features;
    if images.len() < image_bytes {
        return Err(Error::Truncated {
            file: "images".into(),
            expected: image_bytes as u64,
            found: images.len() as u64,
        });
    }
    if labels.len() < 8 + n_labels {
        return Err(Error::Truncated {
            file: "labels".into(),
            expected: (8 + n_labels) as u64,
            found: labels.len() as u64,
        });
    }
    if n_images != n_labels {
        return Err(Error::CountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }
    let pixels = images[16..image_bytes].iter().map(|&b| f32::from(b) / 255.0).collect();
    let labels: Vec<usize> = labels[8..8 + n_labels].iter().map(|&b| usize::from(b)).collect();
    let classes = labels.iter().max().map_or(0, |&m| m + 1).max(10);
    LabeledDataset::new(features, classes, pixels, labels)
}

/// Loads an IDX image/label file pair such as the MNIST distribution files.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;
    parse_idx(&images, &labels)
}

/// Rate-codes pixel intensities: `spike[t, s, i] ~ Bernoulli(pixel[s, i])`,
/// independent across steps.
pub fn bernoulli_encode(ds: &LabeledDataset, timesteps: usize, seed: u64) -> Result<SpikeTensor> {
    if timesteps == 0 {
        return Err(Error::invalid("encoding needs at least one time step"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SpikeTensor::zeros(timesteps, ds.len(), ds.features());
    let mut pos = 0;
    for _t in 0..timesteps {
        for s in 0..ds.len() {
            for &p in ds.image(s) {
                out.data[pos] = u8::from(rng.random::<f64>() < f64::from(p));
                pos += 1;
            }
        }
    }
    Ok(out)
}

/// Feature groups sharing a latent driver, and the mixing strength.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStructure {
    block_of: Vec<usize>,
    blocks: usize,
    /// Probability that a feature copies its block's latent spike.
    pub rho: f64,
    /// Marginal firing probability of every feature.
    pub rate: f64,
}

impl BlockStructure {
    /// Consecutive blocks of the given sizes.
    pub fn contiguous(sizes: &[usize], rho: f64) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::invalid("blocks must be non-empty"));
        }
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::invalid(format!("rho must lie in [0, 1], got {rho}")));
        }
        let block_of = sizes
            .iter()
            .enumerate()
            .flat_map(|(b, &n)| std::iter::repeat_n(b, n))
            .collect();
        Ok(Self {
            block_of,
            blocks: sizes.len(),
            rho,
            rate: 0.5,
        })
    }

    pub fn features(&self) -> usize {
        self.block_of.len()
    }

    pub fn block_of(&self, feature: usize) -> usize {
        self.block_of[feature]
    }
}

/// Spikes where each feature copies its block's latent Bernoulli driver with
/// probability `rho` and otherwise fires independently at the same rate, so
/// same-block features have phi = rho^2 in expectation and cross-block
/// features phi = 0.
pub fn synthetic_correlated_spikes(
    features: usize,
    samples: usize,
    timesteps: usize,
    blocks: &BlockStructure,
    seed: u64,
) -> Result<SpikeTensor> {
    if blocks.features() != features {
        return Err(Error::invalid(format!(
            "block structure covers {} features, expected {features}",
            blocks.features()
        )));
    }
    if !(0.0..=1.0).contains(&blocks.rate) {
        return Err(Error::invalid(format!("rate must lie in [0, 1], got {}", blocks.rate)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SpikeTensor::zeros(timesteps, samples, features);
    let mut latent = vec![false; blocks.blocks];
    for t in 0..timesteps {
        for s in 0..samples {
            for l in latent.iter_mut() {
                *l = rng.random::<f64>() < blocks.rate;
            }
            for i in 0..features {
                let spike = if rng.random::<f64>() < blocks.rho {
                    latent[blocks.block_of[i]]
                } else {
                    rng.random::<f64>() < blocks.rate
                };
                out.set(t, s, i, spike);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IDX_IMAGES_MAGIC, n, rows, cols] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend_from_slice(pixels);
        v
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        v.extend_from_slice(labels);
        v
    }

    #[test]
    fn parses_two_image_fixture() {
        let images = idx_images(2, 2, 2, &[0, 255, 51, 102, 255, 0, 0, 17]);
        let ds = parse_idx(&images, &idx_labels(&[3, 7])).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.features(), 4);
        assert_eq!(ds.labels(), &[3, 7]);
        assert_eq!(ds.image(0), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(ds.image(1), &[1.0, 0.0, 0.0, 17.0 / 255.0]);
    }

    #[test]
    fn labels_with_image_magic_is_bad_magic() {
        let images = idx_images(1, 1, 1, &[0]);
        let mut labels = idx_labels(&[1]);
        labels[..4].copy_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        let err = parse_idx(&images, &labels).unwrap_err();
        assert!(matches!(err, Error::BadMagic { found: 0x803, .. }));
        assert!(err.to_string().contains("bad magic"));
    }

    #[test]
    fn truncated_and_mismatched_files() {
        let images = idx_images(2, 2, 2, &[0; 7]);
        assert!(matches!(
            parse_idx(&images, &idx_labels(&[0, 1])),
            Err(Error::Truncated { .. })
        ));
        let images = idx_images(2, 1, 1, &[0, 0]);
        assert!(matches!(
            parse_idx(&images, &idx_labels(&[0, 1, 2])),
            Err(Error::CountMismatch { images: 2, labels: 3 })
        ));
        assert!(matches!(parse_idx(&[0, 0], &[]), Err(Error::Truncated { .. })));
    }

    fn constant_dataset(p: f32, features: usize, samples: usize) -> LabeledDataset {
        LabeledDataset::new(features, 10, vec![p; features * samples], vec![0; samples]).unwrap()
    }

    #[test]
    fn encoding_extremes() {
        let zero = bernoulli_encode(&constant_dataset(0.0, 5, 3), 20, 1).unwrap();
        assert_eq!(zero.count_ones(), 0);
        let one = bernoulli_encode(&constant_dataset(1.0, 5, 3), 20, 1).unwrap();
        assert_eq!(one.count_ones(), 300);
    }

    #[test]
    fn encoding_rate_concentrates() {
        let t = bernoulli_encode(&constant_dataset(0.5, 1, 1), 10_000, 42).unwrap();
        let frac = t.count_ones() as f64 / 10_000.0;
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn encoding_is_seed_deterministic() {
        let ds = constant_dataset(0.3, 7, 4);
        assert_eq!(bernoulli_encode(&ds, 5, 9).unwrap(), bernoulli_encode(&ds, 5, 9).unwrap());
        assert_ne!(bernoulli_encode(&ds, 5, 9).unwrap(), bernoulli_encode(&ds, 5, 10).unwrap());
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(LabeledDataset::new(1, 2, vec![1.5], vec![0]).is_err());
        assert!(LabeledDataset::new(1, 2, vec![0.5], vec![2]).is_err());
    }

    #[test]
    fn single_block_full_rho_gives_identical_columns() {
        let blocks = BlockStructure::contiguous(&[6], 1.0).unwrap();
        let t = synthetic_correlated_spikes(6, 50, 3, &blocks, 5).unwrap();
        for step in 0..3 {
            for s in 0..50 {
                let f = t.frame(step, s);
                assert!(f.iter().all(|&b| b == f[0]));
            }
        }
    }

    #[test]
    fn invalid_partitions() {
        assert!(BlockStructure::contiguous(&[], 0.5).is_err());
        assert!(BlockStructure::contiguous(&[3, 0], 0.5).is_err());
        assert!(BlockStructure::contiguous(&[3], 1.5).is_err());
        let b = BlockStructure::contiguous(&[3, 3], 0.5).unwrap();
        assert!(synthetic_correlated_spikes(5, 1, 1, &b, 0).is_err());
    }

    #[test]
    fn spike_file_rejects_bad_magic_and_truncation() {
        let t = SpikeTensor::from_vec(1, 1, 9, vec![1, 0, 1, 1, 0, 0, 0, 1, 1]).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 20 + 2);
        assert_eq!(&buf[20..], &[0b1000_1101, 0b1]);
        assert!(matches!(
            SpikeTensor::read_from(&mut &buf[..buf.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        buf[0] = b'X';
        assert!(matches!(SpikeTensor::read_from(&mut buf.as_slice()), Err(Error::BadMagic { .. })));
    }

    proptest! {
        #[test]
        fn spike_file_round_trip(t in 1usize..4, s in 1usize..5, f in 1usize..13, seed in any::<u64>()) {
            let ds = constant_dataset(0.4, f, s);
            let spikes = bernoulli_encode(&ds, t, seed).unwrap();
            let mut buf = Vec::new();
            spikes.write_to(&mut buf).unwrap();
            prop_assert_eq!(SpikeTensor::read_from(&mut buf.as_slice()).unwrap(), spikes);
        }

        #[test]
        fn encoded_tensors_are_binary(p in 0.0f32..=1.0, seed in any::<u64>()) {
            let spikes = bernoulli_encode(&constant_dataset(p, 8, 3), 4, seed).unwrap();
            prop_assert!(spikes.as_slice().iter().all(|&b| b <= 1));
        }
    }
}
