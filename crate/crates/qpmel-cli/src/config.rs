//! Run configuration: one TOML file describes the dataset, preprocessing,
//! encoder, training schedule, evaluation protocol and output paths.
//!
//! Every random choice in a run derives from `master_seed`; see the README
//! for the seed fan-out and the full key schema.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use qpmel_core::data::{
    filter_classes, parse_idx_files, preprocess, standardize_with, synth_blobs, FeatureStats,
    LabeledDataset, PreprocessMode,
};
use qpmel_core::rng::derive_seed;
use qpmel_core::trainer::SimilarityMode;
use qpmel_core::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub master_seed: u64,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    pub encoder: EncoderConfig,
    pub training: TrainingConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Gaussian blobs generated on the fly.
    Synthetic {
        n_classes: usize,
        dim: usize,
        per_class: usize,
        separation: f64,
        noise_sd: f64,
    },
    /// IDX image/label files, optionally filtered to a class subset.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        classes: Option<Vec<usize>>,
    },
    /// Named shortcut over the bundled MNIST files.
    Preset {
        name: String,
        #[serde(default = "default_data_dir")]
        data_dir: PathBuf,
    },
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data/mnist")
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Block-average factor; applied first.
    #[serde(default)]
    pub downsample: Option<usize>,
    /// Per-feature standardization with train-split statistics.
    #[serde(default)]
    pub standardize: bool,
    /// Constant multiplier applied last.
    #[serde(default)]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub layer_dims: Vec<usize>,
    pub qubits: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_queries: usize,
    pub episodes: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub similarity: SimilarityChoice,
}

#[derive(Debug, Clone, Copy, Deserialize, Default, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityChoice {
    #[default]
    Additive,
    Multiplicative,
}

impl From<SimilarityChoice> for SimilarityMode {
    fn from(c: SimilarityChoice) -> Self {
        match c {
            SimilarityChoice::Additive => SimilarityMode::Additive,
            SimilarityChoice::Multiplicative => SimilarityMode::Multiplicative,
        }
    }
}

fn default_lr() -> f64 {
    1e-3
}

fn default_temperature() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationConfig {
    #[serde(default)]
    pub n_way: Option<usize>,
    #[serde(default)]
    pub k_shot: Option<usize>,
    #[serde(default)]
    pub q_queries: Option<usize>,
    #[serde(default = "default_eval_episodes")]
    pub episodes: usize,
    #[serde(default)]
    pub mode: EvalModeChoice,
    #[serde(default = "default_shots")]
    pub shots: u64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            n_way: None,
            k_shot: None,
            q_queries: None,
            episodes: default_eval_episodes(),
            mode: EvalModeChoice::default(),
            shots: default_shots(),
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Default, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum EvalModeChoice {
    #[default]
    Classical,
    Quantum,
}

fn default_eval_episodes() -> usize {
    150
}

fn default_shots() -> u64 {
    100_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub checkpoint: PathBuf,
    #[serde(default)]
    pub metrics: Option<PathBuf>,
    #[serde(default)]
    pub qasm: Option<PathBuf>,
}

impl RunConfig {
    /// Parses and validates a config file. Input paths are checked here so
    /// a broken config fails before any work happens.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.encoder.layer_dims.is_empty() || self.encoder.layer_dims.contains(&0) {
            return Err(Error::Config("encoder.layer_dims must be positive".into()));
        }
        if self.encoder.qubits == 0 {
            return Err(Error::Config("encoder.qubits must be positive".into()));
        }
        match &self.dataset {
            DatasetConfig::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
                ..
            } => {
                for p in [train_images, train_labels, test_images, test_labels] {
                    if !p.exists() {
                        return Err(Error::Config(format!(
                            "dataset file not found: {}",
                            p.display()
                        )));
                    }
                }
            }
            DatasetConfig::Preset { name, data_dir } => {
                preset_classes(name)?;
                for f in [
                    "train-images-idx3-ubyte",
                    "train-labels-idx1-ubyte",
                    "t10k-images-idx3-ubyte",
                    "t10k-labels-idx1-ubyte",
                ] {
                    let p = data_dir.join(f);
                    if !p.exists() {
                        return Err(Error::Config(format!(
                            "dataset file not found: {}",
                            p.display()
                        )));
                    }
                }
            }
            DatasetConfig::Synthetic { .. } => {}
        }
        Ok(())
    }

    pub fn encoder_seed(&self) -> u64 {
        derive_seed(self.master_seed, "cli.encoder")
    }

    pub fn train_seed(&self) -> u64 {
        derive_seed(self.master_seed, "cli.train")
    }

    pub fn eval_seed(&self) -> u64 {
        derive_seed(self.master_seed, "cli.eval")
    }
}

fn preset_classes(name: &str) -> Result<Vec<usize>> {
    match name {
        "mnist-01" => Ok(vec![0, 1]),
        "mnist-35" => Ok(vec![3, 5]),
        "mnist-012" => Ok(vec![0, 1, 2]),
        other => Err(Error::Config(format!(
            "unknown preset {other:?}; available: mnist-01, mnist-35, mnist-012"
        ))),
    }
}

/// The train and evaluation splits after filtering and preprocessing.
pub struct PreparedData {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// Loads both splits. Standardization statistics always come from the
/// train split; the synthetic evaluation split is a fresh draw from a seed
/// derived as `data.eval`.
pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    let (train_raw, test_raw) = match &cfg.dataset {
        DatasetConfig::Synthetic {
            n_classes,
            dim,
            per_class,
            separation,
            noise_sd,
        } => {
            let train = synth_blobs(
                *n_classes,
                *dim,
                *per_class,
                *separation,
                *noise_sd,
                derive_seed(cfg.master_seed, "data.train"),
            )?;
            let test = synth_blobs(
                *n_classes,
                *dim,
                *per_class,
                *separation,
                *noise_sd,
                derive_seed(cfg.master_seed, "data.eval"),
            )?;
            (train, test)
        }
        DatasetConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            classes,
        } => {
            let mut train = parse_idx_files(train_images, train_labels)?;
            let mut test = parse_idx_files(test_images, test_labels)?;
            if let Some(classes) = classes {
                train = filter_classes(&train, classes)?;
                test = filter_classes(&test, classes)?;
            }
            (train, test)
        }
        DatasetConfig::Preset { name, data_dir } => {
            let classes = preset_classes(name)?;
            let train = filter_classes(
                &parse_idx_files(
                    data_dir.join("train-images-idx3-ubyte"),
                    data_dir.join("train-labels-idx1-ubyte"),
                )?,
                &classes,
            )?;
            let test = filter_classes(
                &parse_idx_files(
                    data_dir.join("t10k-images-idx3-ubyte"),
                    data_dir.join("t10k-labels-idx1-ubyte"),
                )?,
                &classes,
            )?;
            (train, test)
        }
    };
    apply_preprocess(&cfg.preprocess, train_raw, test_raw)
}

fn apply_preprocess(
    pp: &PreprocessConfig,
    mut train: LabeledDataset,
    mut test: LabeledDataset,
) -> Result<PreparedData> {
    if let Some(k) = pp.downsample {
        train = preprocess(&train, &PreprocessMode::Downsample(k))?.0;
        test = preprocess(&test, &PreprocessMode::Downsample(k))?.0;
    }
    if pp.standardize {
        let (standardized, stats) = preprocess(&train, &PreprocessMode::Standardize)?;
        let stats: FeatureStats = stats.expect("standardize returns stats");
        train = standardized;
        test = standardize_with(&test, &stats)?;
    }
    if let Some(s) = pp.scale {
        train = scale_features(&train, s)?;
        test = scale_features(&test, s)?;
    }
    Ok(PreparedData { train, test })
}

fn scale_features(ds: &LabeledDataset, s: f64) -> Result<LabeledDataset> {
    let mut feats = Vec::with_capacity(ds.num_samples() * ds.feature_dim());
    for i in 0..ds.num_samples() {
        feats.extend(ds.sample(i).iter().map(|x| x * s));
    }
    LabeledDataset::new(feats, ds.feature_dim(), ds.labels().to_vec())
}
