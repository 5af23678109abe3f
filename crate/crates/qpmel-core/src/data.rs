//! Dataset ingestion and synthesis.
//!
//! Reads the big-endian IDX container used by MNIST-style datasets, scales
//! pixels to [0, 1], and offers deterministic preprocessing (block-average
//! downsampling, per-feature standardization) plus a separable Gaussian-blob
//! generator for desk-scale end-to-end runs. Datasets are immutable after
//! construction.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::derive_stream;

/// IDX magic for unsigned-byte images (3 dimensions).
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// IDX magic for unsigned-byte labels (1 dimension).
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// A feature matrix with integer class labels and a class-to-samples index.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    feature_dim: usize,
    labels: Vec<usize>,
    class_index: BTreeMap<usize, Vec<usize>>,
}

impl LabeledDataset {
    pub fn new(features: Vec<f64>, feature_dim: usize, labels: Vec<usize>) -> Result<Self> {
        if feature_dim == 0 {
            return Err(Error::InvalidArgument("feature_dim must be positive".into()));
        }
        if features.len() != labels.len() * feature_dim {
            return Err(Error::Inconsistent(format!(
                "{} feature values for {} samples of dim {feature_dim}",
                features.len(),
                labels.len()
            )));
        }
        let mut class_index: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &label) in labels.iter().enumerate() {
            class_index.entry(label).or_default().push(i);
        }
        Ok(Self {
            features,
            feature_dim,
            labels,
            class_index,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.class_index.len()
    }

    /// Class labels in ascending order.
    pub fn classes(&self) -> Vec<usize> {
        self.class_index.keys().copied().collect()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Sample indices belonging to one class.
    pub fn class_samples(&self, class: usize) -> Option<&[usize]> {
        self.class_index.get(&class).map(Vec::as_slice)
    }
}

struct IdxReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> IdxReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn read_u32_be(&mut self) -> Result<u32> {
        if self.pos + 4 > self.bytes.len() {
            return Err(Error::Truncated {
                needed: self.pos + 4,
                found: self.bytes.len(),
            });
        }
        let b = &self.bytes[self.pos..self.pos + 4];
        self.pos += 4;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn payload(&self, needed: usize) -> Result<&'a [u8]> {
        if self.pos + needed > self.bytes.len() {
            return Err(Error::Truncated {
                needed: self.pos + needed,
                found: self.bytes.len(),
            });
        }
        Ok(&self.bytes[self.pos..self.pos + needed])
    }
}

/// Parses an IDX image/label pair into a dataset, scaling pixels by 1/255.
/// Images are flattened row-major.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<LabeledDataset> {
    let mut img = IdxReader::new(images);
    let magic = img.read_u32_be()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            expected: format!("images magic {IDX_IMAGES_MAGIC:#010x}"),
            found: format!("{magic:#010x}"),
        });
    }
    let count = img.read_u32_be()? as usize;
    let rows = img.read_u32_be()? as usize;
    let cols = img.read_u32_be()? as usize;
    let pixels = img.payload(count * rows * cols)?;

    let mut lab = IdxReader::new(labels);
    let lmagic = lab.read_u32_be()?;
    if lmagic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            expected: format!("labels magic {IDX_LABELS_MAGIC:#010x}"),
            found: format!("{lmagic:#010x}"),
        });
    }
    let lcount = lab.read_u32_be()? as usize;
    if lcount != count {
        return Err(Error::Inconsistent(format!(
            "{count} images but {lcount} labels"
        )));
    }
    let label_bytes = lab.payload(count)?;

    let features: Vec<f64> = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels: Vec<usize> = label_bytes.iter().map(|&l| usize::from(l)).collect();
    LabeledDataset::new(features, rows * cols, labels)
}

/// File-path variant of [`parse_idx`].
pub fn parse_idx_files(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<LabeledDataset> {
    let image_bytes = std::fs::read(images)?;
    let label_bytes = std::fs::read(labels)?;
    parse_idx(&image_bytes, &label_bytes)
}

/// Deterministic preprocessing modes.
#[derive(Debug, Clone, PartialEq)]
pub enum PreprocessMode {
    /// Identity; images are already flattened at parse time.
    Flatten,
    /// Average k x k blocks of a square image.
    Downsample(usize),
    /// Per-feature zero mean, unit variance (sd floored at 1e-8).
    Standardize,
}

/// Per-feature statistics produced by standardization, reusable on held-out
/// data.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

const SD_FLOOR: f64 = 1e-8;

/// Applies one preprocessing mode. Standardization returns the statistics
/// it computed so they can be reapplied to evaluation data with
/// [`standardize_with`].
pub fn preprocess(
    ds: &LabeledDataset,
    mode: &PreprocessMode,
) -> Result<(LabeledDataset, Option<FeatureStats>)> {
    match mode {
        PreprocessMode::Flatten => Ok((ds.clone(), None)),
        PreprocessMode::Downsample(k) => Ok((downsample(ds, *k)?, None)),
        PreprocessMode::Standardize => {
            let stats = feature_stats(ds);
            let out = standardize_with(ds, &stats)?;
            Ok((out, Some(stats)))
        }
    }
}

fn feature_stats(ds: &LabeledDataset) -> FeatureStats {
    let n = ds.num_samples() as f64;
    let d = ds.feature_dim();
    let mut means = vec![0.0; d];
    for i in 0..ds.num_samples() {
        for (m, &x) in means.iter_mut().zip(ds.sample(i)) {
            *m += x;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut vars = vec![0.0; d];
    for i in 0..ds.num_samples() {
        for ((v, &m), &x) in vars.iter_mut().zip(&means).zip(ds.sample(i)) {
            *v += (x - m) * (x - m);
        }
    }
    let sds = vars.iter().map(|v| (v / n).sqrt()).collect();
    FeatureStats { means, sds }
}

/// Standardizes with previously computed statistics.
pub fn standardize_with(ds: &LabeledDataset, stats: &FeatureStats) -> Result<LabeledDataset> {
    if stats.means.len() != ds.feature_dim() || stats.sds.len() != ds.feature_dim() {
        return Err(Error::DimensionMismatch {
            context: "feature statistics",
            expected: ds.feature_dim(),
            found: stats.means.len(),
        });
    }
    let d = ds.feature_dim();
    let mut features = Vec::with_capacity(ds.features.len());
    for i in 0..ds.num_samples() {
        for ((&x, &m), &s) in ds.sample(i).iter().zip(&stats.means).zip(&stats.sds) {
            features.push((x - m) / s.max(SD_FLOOR));
        }
    }
    LabeledDataset::new(features, d, ds.labels.clone())
}

fn downsample(ds: &LabeledDataset, k: usize) -> Result<LabeledDataset> {
    if k == 0 {
        return Err(Error::InvalidArgument("downsample factor must be >= 1".into()));
    }
    let d = ds.feature_dim();
    let side = (d as f64).sqrt().round() as usize;
    if side * side != d {
        return Err(Error::InvalidArgument(format!(
            "downsample needs a square image, got {d} features"
        )));
    }
    if !side.is_multiple_of(k) {
        return Err(Error::InvalidArgument(format!(
            "downsample factor {k} does not divide image side {side}"
        )));
    }
    let out_side = side / k;
    let out_dim = out_side * out_side;
    let scale = 1.0 / (k * k) as f64;
    let mut features = Vec::with_capacity(ds.num_samples() * out_dim);
    for i in 0..ds.num_samples() {
        let img = ds.sample(i);
        for br in 0..out_side {
            for bc in 0..out_side {
                let mut acc = 0.0;
                for r in 0..k {
                    for c in 0..k {
                        acc += img[(br * k + r) * side + (bc * k + c)];
                    }
                }
                features.push(acc * scale);
            }
        }
    }
    LabeledDataset::new(features, out_dim, ds.labels.clone())
}

/// Synthesizes `n_classes` isotropic Gaussian blobs with class means at
/// pairwise distance >= separation * noise_sd, placed deterministically from
/// the seed by rejection sampling.
pub fn synth_blobs(
    n_classes: usize,
    dim: usize,
    per_class: usize,
    separation: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n_classes == 0 || dim == 0 || per_class == 0 {
        return Err(Error::InvalidArgument(
            "n_classes, dim, per_class must be positive".into(),
        ));
    }
    if separation < 0.0 || noise_sd < 0.0 {
        return Err(Error::InvalidArgument(
            "separation and noise_sd must be non-negative".into(),
        ));
    }
    let min_dist = separation * noise_sd;
    let box_half = (1.0 + min_dist) * n_classes as f64;
    let mut mean_rng = derive_stream(seed, "blobs.means");
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(n_classes);
    const MAX_ATTEMPTS: usize = 10_000;
    for c in 0..n_classes {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let candidate: Vec<f64> = (0..dim)
                .map(|_| mean_rng.uniform(-box_half, box_half))
                .collect();
            let ok = means.iter().all(|m| {
                let dist_sq: f64 = m
                    .iter()
                    .zip(&candidate)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                dist_sq.sqrt() >= min_dist
            });
            if ok {
                means.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Config(format!(
                "could not place {n_classes} class means at distance {min_dist} in dimension {dim} (stuck at {c})"
            )));
        }
    }

    let mut sample_rng = derive_stream(seed, "blobs.samples");
    let mut features = Vec::with_capacity(n_classes * per_class * dim);
    let mut labels = Vec::with_capacity(n_classes * per_class);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for &m in mean {
                features.push(m + noise_sd * sample_rng.normal());
            }
            labels.push(c);
        }
    }
    LabeledDataset::new(features, dim, labels)
}

/// Keeps only the listed classes and relabels them to 0..n-1 in the given
/// order.
pub fn filter_classes(ds: &LabeledDataset, classes: &[usize]) -> Result<LabeledDataset> {
    if classes.is_empty() {
        return Err(Error::InvalidArgument("no classes requested".into()));
    }
    for &c in classes {
        if !ds.class_index.contains_key(&c) {
            return Err(Error::InvalidArgument(format!(
                "class {c} not present in dataset"
            )));
        }
    }
    let mut relabel: BTreeMap<usize, usize> = BTreeMap::new();
    for (new, &old) in classes.iter().enumerate() {
        if relabel.insert(old, new).is_some() {
            return Err(Error::InvalidArgument(format!("class {old} listed twice")));
        }
    }
    let d = ds.feature_dim();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for i in 0..ds.num_samples() {
        if let Some(&new) = relabel.get(&ds.label(i)) {
            features.extend_from_slice(ds.sample(i));
            labels.push(new);
        }
    }
    LabeledDataset::new(features, d, labels)
}
