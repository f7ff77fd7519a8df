//! Labeled datasets, deterministic synthetic generators and the dataset file format.
//!
//! All randomness comes from `ChaCha8Rng` (rand_chacha) seeded with the
//! spec's `seed`/`task_seed`, so generated data is identical across runs and
//! platforms.
//!
//! # File layout
//!
//! Little-endian throughout:
//!
//! | field          | type              |
//! |----------------|-------------------|
//! | magic          | 8 bytes `FSQDATA\0` |
//! | version        | u32 (= 1)         |
//! | sample count N | u64               |
//! | class count    | u32               |
//! | rank r         | u32               |
//! | input shape    | r × u64           |
//! | features       | N × prod(shape) × f64, row-major |
//! | labels         | N × u32           |

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Samples with class labels, stored as one row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    input_shape: Vec<usize>,
    features: Vec<f64>,
    labels: Vec<usize>,
    class_count: usize,
}

impl Dataset {
    pub fn new(input_shape: Vec<usize>, features: Vec<f64>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::Input(format!("invalid input shape {input_shape:?}")));
        }
        if class_count == 0 {
            return Err(Error::Input("class count must be positive".into()));
        }
        let dim: usize = input_shape.iter().product();
        if features.len() != dim * labels.len() {
            return Err(Error::Input(format!(
                "{} feature scalars for {} samples of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::Input(format!("label {bad} out of range for {class_count} classes")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite feature value".into()));
        }
        Ok(Self {
            input_shape,
            features,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_dim(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let d = self.input_dim();
        &self.features[i * d..(i + 1) * d]
    }

    /// Count of samples per class.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }

    /// Stacks the chosen samples into a `[k, input_shape..]` batch.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * self.input_dim());
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(&self.input_shape);
        (
            Tensor::from_parts(shape, data),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }

    /// The whole dataset as one batch.
    pub fn all(&self) -> (Tensor, Vec<usize>) {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.batch(&idx)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.input_dim());
        for &i in indices {
            features.extend_from_slice(self.sample(i));
        }
        Dataset {
            input_shape: self.input_shape.clone(),
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    /// Seeded shuffle, then the first `ceil(fraction * N)` samples go to the second part.
    pub fn split(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::Input(format!("split fraction {fraction} outside (0, 1)")));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let held = ((self.len() as f64) * fraction).ceil() as usize;
        if held == 0 || held >= self.len() {
            return Err(Error::Input(format!("cannot split {} samples at fraction {fraction}", self.len())));
        }
        let (second, first) = idx.split_at(held);
        let (mut first, mut second) = (first.to_vec(), second.to_vec());
        first.sort_unstable();
        second.sort_unstable();
        Ok((self.subset(&first), self.subset(&second)))
    }

    /// Serializes into the dataset file layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.features.len() * 8 + self.labels.len() * 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.class_count as u32).to_le_bytes());
        out.extend_from_slice(&(self.input_shape.len() as u32).to_le_bytes());
        for &d in &self.input_shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &self.features {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &y in &self.labels {
            out.extend_from_slice(&(y as u32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if bytes.is_empty() {
            return Err(Error::format(0, "empty dataset file"));
        }
        let magic = r.take(8, "magic")?;
        if magic != MAGIC {
            return Err(Error::format(0, "bad magic, not a dataset file"));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(Error::format(8, format!("unsupported dataset version {version}")));
        }
        let n = r.u64("sample count")? as usize;
        let classes = r.u32("class count")? as usize;
        let rank_at = r.offset();
        let rank = r.u32("rank")? as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::format(rank_at, format!("implausible input rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64("input shape")? as usize);
        }
        let dim = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::format(rank_at, format!("invalid input shape {shape:?}")))?;
        let payload = n
            .checked_mul(dim)
            .and_then(|s| s.checked_mul(8))
            .and_then(|s| s.checked_add(n.checked_mul(4)?))
            .ok_or_else(|| Error::format(r.offset(), "declared sizes overflow"))?;
        if r.remaining() != payload {
            return Err(Error::format(
                r.offset(),
                format!(
                    "header declares {n} samples ({payload} payload bytes) but {} bytes follow",
                    r.remaining()
                ),
            ));
        }
        let mut features = Vec::with_capacity(n * dim);
        for _ in 0..n * dim {
            features.push(r.f64("features")?);
        }
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let at = r.offset();
            let y = r.u32("labels")? as usize;
            if y >= classes {
                return Err(Error::format(at, format!("label {y} out of range for {classes} classes")));
            }
            labels.push(y);
        }
        Dataset::new(shape, features, labels, classes).map_err(|e| Error::format(0, e.to_string()))
    }

    pub fn store(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

const MAGIC: &[u8; 8] = b"FSQDATA\0";
const VERSION: u32 = 1;

/// Bounds-checked little-endian reader that reports byte offsets.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format(
                self.offset(),
                format!("truncated while reading {what}: need {n} bytes, {} left", self.remaining()),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Shape of the synthetic class-conditional distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    /// One isotropic Gaussian per class around a random center.
    GaussianBlobs,
    /// Class `c` lies near radius `c + 1` in the first two coordinates.
    ConcentricRings,
    /// Gaussian blobs with every class center translated by one fixed vector of norm `domain_shift`.
    ShiftedBlobs { domain_shift: f64 },
}

/// Recipe for a deterministic synthetic classification dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub generator: Generator,
    pub n_samples: usize,
    pub n_classes: usize,
    pub input_shape: Vec<usize>,
    pub noise_sigma: f64,
    /// Seeds the per-sample noise.
    pub seed: u64,
    /// Seeds the class geometry (centers, shift direction); defaults to `seed`.
    /// Datasets sharing a task seed share their class centers.
    #[serde(default)]
    pub task_seed: Option<u64>,
    /// Spread of class centers around the origin.
    #[serde(default = "default_center_scale")]
    pub center_scale: f64,
}

fn default_center_scale() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn blobs(n_samples: usize, n_classes: usize, input_shape: Vec<usize>, noise_sigma: f64, seed: u64) -> Self {
        Self {
            generator: Generator::GaussianBlobs,
            n_samples,
            n_classes,
            input_shape,
            noise_sigma,
            seed,
            task_seed: None,
            center_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::Config("synthetic data needs at least 2 classes".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma {} must be >= 0", self.noise_sigma)));
        }
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be positive".into()));
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::Config(format!("invalid input shape {:?}", self.input_shape)));
        }
        if let Generator::ConcentricRings = self.generator {
            if self.input_shape.iter().product::<usize>() < 2 {
                return Err(Error::Config("concentric rings need at least 2 input dimensions".into()));
            }
        }
        if let Generator::ShiftedBlobs { domain_shift } = self.generator {
            if !domain_shift.is_finite() {
                return Err(Error::Config("domain_shift must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Class centers and shift vector derived from the task seed.
fn class_centers(spec: &SyntheticSpec, dim: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.task_seed.unwrap_or(spec.seed));
    let centers = (0..spec.n_classes)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    spec.center_scale * z
                })
                .collect()
        })
        .collect();
    let mut dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    dir.iter_mut().for_each(|v| *v /= norm);
    (centers, dir)
}

/// Generates the dataset described by `spec`. Labels cycle `0, 1, .., C-1`,
/// so class counts differ by at most one.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let dim: usize = spec.input_shape.iter().product();
    let (centers, shift_dir) = class_centers(spec, dim);
    let shift = match spec.generator {
        Generator::ShiftedBlobs { domain_shift } => domain_shift,
        _ => 0.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5bd1_e995_9e37_79b9);
    let mut features = Vec::with_capacity(spec.n_samples * dim);
    let mut labels = Vec::with_capacity(spec.n_samples);
    for i in 0..spec.n_samples {
        let c = i % spec.n_classes;
        match spec.generator {
            Generator::GaussianBlobs | Generator::ShiftedBlobs { .. } => {
                for (j, &mu) in centers[c].iter().enumerate() {
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    features.push(mu + shift * shift_dir[j] + spec.noise_sigma * eps);
                }
            }
            Generator::ConcentricRings => {
                let angle = rand::Rng::random_range(&mut rng, 0.0..std::f64::consts::TAU);
                let radius = (c + 1) as f64 * spec.center_scale;
                for j in 0..dim {
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    let base = match j {
                        0 => radius * angle.cos(),
                        1 => radius * angle.sin(),
                        _ => 0.0,
                    };
                    features.push(base + spec.noise_sigma * eps);
                }
            }
        }
        labels.push(c);
    }
    Dataset::new(spec.input_shape.clone(), features, labels, spec.n_classes)
}
