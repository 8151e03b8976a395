//! Versioned TOML experiment configuration.

use std::path::{Path, PathBuf};

use mimo_jscc_core::channel::{AngleModel, ArrayGeometry, ClusterConfig};
use mimo_jscc_core::codec::{CodecSpec, TrainingConfig};
use mimo_jscc_core::evaluator::EvaluatorTraining;
use mimo_jscc_core::image::ImageDims;
use mimo_jscc_core::link::LinkEnvironment;
use mimo_jscc_core::nn::AdamParams;
use mimo_jscc_core::precoding::PrecoderStrategy;
use mimo_jscc_core::quantizer::MAX_BITS;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{SimError, SimResult};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub codec: CodecSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub evaluator: EvaluatorSection,
    #[serde(default)]
    pub quantizer: QuantizerSection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Svd,
    ZeroForcing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub num_tx: usize,
    pub num_rx: usize,
    pub clusters: usize,
    pub rays_per_cluster: usize,
    pub spacing_over_wavelength: f64,
    /// Standard deviation of ray azimuths around their cluster center.
    pub ray_spread_deg: f64,
    pub streams: usize,
    pub strategy: Strategy,
    pub equalize: bool,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            num_tx: 16,
            num_rx: 16,
            clusters: 2,
            rays_per_cluster: 4,
            spacing_over_wavelength: 0.5,
            ray_spread_deg: 7.5,
            streams: 2,
            strategy: Strategy::Svd,
            equalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodecSection {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub symbols: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for CodecSection {
    fn default() -> Self {
        let d = CodecSpec::DESK;
        Self {
            height: d.dims.height,
            width: d.dims.width,
            channels: d.dims.channels,
            symbols: d.symbol_count,
            hidden: d.hidden,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub snr_db: f64,
    pub seed: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainingConfig::default();
        Self {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            snr_db: t.train_snr_db,
            seed: t.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluatorSection {
    pub hidden: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub label_snr_db: f64,
    pub label_realizations: usize,
    pub label_seed: u64,
}

impl Default for EvaluatorSection {
    fn default() -> Self {
        let t = EvaluatorTraining::default();
        Self {
            hidden: 64,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: t.seed,
            label_snr_db: 6.0,
            label_realizations: 4,
            label_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantizerSection {
    /// Bit depths to fit codebooks for.
    pub bits: Vec<u8>,
    pub fit_channels: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for QuantizerSection {
    fn default() -> Self {
        Self {
            bits: vec![1, 2, 3, 4, 5, 6, 7, 8],
            fit_channels: 10_000,
            seed: 0,
            tol: 1e-8,
            max_iters: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSection {
    Synthetic {
        train_count: usize,
        test_count: usize,
        validation_count: usize,
        texture_fraction: f64,
        seed: u64,
    },
    /// CIFAR-10 binary batches; images are center-cropped to the codec size.
    /// The validation images are the first `validation_count` training images.
    Cifar {
        train_paths: Vec<PathBuf>,
        test_path: PathBuf,
        train_count: Option<usize>,
        test_count: Option<usize>,
        validation_count: usize,
    },
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection::Synthetic {
            train_count: 2048,
            test_count: 512,
            validation_count: 256,
            texture_fraction: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorMode {
    /// Measured labels stand in for predictions.
    Oracle,
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub seeds: Vec<u64>,
    /// Test SNRs for the PSNR-vs-SNR sweep.
    pub snr_db: Vec<f64>,
    /// `[num_tx, num_rx]` pairs for the PSNR-vs-SNR sweep.
    pub antennas: Vec<[usize; 2]>,
    /// Threshold reported alongside the PSNR-vs-SNR rows.
    pub reference_threshold_db: f64,
    pub experiment_snr_db: f64,
    pub uniform_bits: Vec<u8>,
    pub split_bits: [u8; 2],
    /// Empty: ten points spanning the empirical PSNR range.
    pub thresholds_db: Vec<f64>,
    pub option_sets: Vec<Vec<u8>>,
    /// Empty: three interior points of the empirical PSNR range.
    pub overhead_thresholds_db: Vec<f64>,
    pub predictor: PredictorMode,
    pub calibration_realizations: usize,
    pub calibration_seed: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2],
            snr_db: vec![-6.0, 0.0, 6.0, 12.0, 18.0],
            antennas: vec![[4, 4], [16, 16]],
            reference_threshold_db: 20.0,
            experiment_snr_db: 6.0,
            uniform_bits: vec![5, 6, 7],
            split_bits: [7, 5],
            thresholds_db: Vec::new(),
            option_sets: vec![vec![7], vec![7, 6], vec![7, 6, 5]],
            overhead_thresholds_db: Vec::new(),
            predictor: PredictorMode::Oracle,
            calibration_realizations: 2,
            calibration_seed: 0,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            channel: ChannelSection::default(),
            codec: CodecSection::default(),
            training: TrainingSection::default(),
            evaluator: EvaluatorSection::default(),
            quantizer: QuantizerSection::default(),
            dataset: DatasetSection::default(),
            sweep: SweepSection::default(),
        }
    }
}

fn err(msg: impl Into<String>) -> SimError {
    SimError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> SimResult<Self> {
        let config: Self = toml::from_str(text).map_err(|e| err(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> SimResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 12 hex digits of the SHA-256 of the fully resolved config.
    /// The seed list is left out: every row carries its own seed, so a
    /// row can be regenerated by running its seed alone.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.sweep.seeds.clear();
        let digest = Sha256::digest(c.to_toml().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> SimResult<()> {
        if self.version != CONFIG_VERSION {
            return Err(err(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.link_env()?;
        self.codec_spec()?;
        self.training_config().validate()?;
        let s = &self.sweep;
        if s.seeds.is_empty() || s.snr_db.is_empty() || s.antennas.is_empty() {
            return Err(err("sweep seeds, SNRs and antenna list must be nonempty"));
        }
        if s.uniform_bits.is_empty() || s.option_sets.iter().any(|o| o.is_empty()) || s.option_sets.is_empty() {
            return Err(err("bit options must be nonempty"));
        }
        if s.split_bits[0] <= s.split_bits[1] {
            return Err(err("split_bits must be [high, low] with high > low"));
        }
        if s.option_sets.iter().any(|o| o.windows(2).any(|w| w[0] <= w[1])) {
            return Err(err("each option set must be strictly descending"));
        }
        let needed = self.required_bits();
        if let Some(b) = needed.iter().find(|b| !self.quantizer.bits.contains(b)) {
            return Err(err(format!("no codebook configured for {b} bits")));
        }
        if self.quantizer.bits.iter().any(|&b| !(1..=MAX_BITS).contains(&b)) {
            return Err(err(format!("quantizer bits must lie in 1..={MAX_BITS}")));
        }
        if self.quantizer.fit_channels == 0 {
            return Err(err("need at least one channel to fit codebooks"));
        }
        if s.calibration_realizations == 0 || self.evaluator.label_realizations == 0 {
            return Err(err("realization counts must be at least 1"));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&s.snr_db) || !finite(&s.thresholds_db) || !finite(&s.overhead_thresholds_db) {
            return Err(err("sweep values must be finite"));
        }
        if self.evaluator.hidden == 0 || self.evaluator.batch_size == 0 {
            return Err(err("evaluator sizes must be positive"));
        }
        match &self.dataset {
            DatasetSection::Synthetic {
                train_count,
                test_count,
                validation_count,
                texture_fraction,
                ..
            } => {
                if *train_count == 0 || *test_count == 0 || *validation_count == 0 {
                    return Err(err("dataset counts must be positive"));
                }
                if !(0.0..=1.0).contains(texture_fraction) {
                    return Err(err("texture_fraction must lie in [0, 1]"));
                }
            }
            DatasetSection::Cifar {
                train_paths,
                validation_count,
                ..
            } => {
                if train_paths.is_empty() || *validation_count == 0 {
                    return Err(err("CIFAR dataset needs training batches and a validation count"));
                }
            }
        }
        Ok(())
    }

    /// Every bit depth the sweeps quantize with.
    pub fn required_bits(&self) -> Vec<u8> {
        let s = &self.sweep;
        let mut bits: Vec<u8> = s
            .uniform_bits
            .iter()
            .chain(&s.split_bits)
            .chain(s.option_sets.iter().flatten())
            .copied()
            .collect();
        bits.sort_unstable();
        bits.dedup();
        bits
    }

    pub fn cluster_config_for(&self, num_tx: usize, num_rx: usize) -> SimResult<ClusterConfig> {
        let c = &self.channel;
        let angles = AngleModel {
            ray_spread: c.ray_spread_deg.to_radians(),
            ..AngleModel::default()
        };
        Ok(ClusterConfig::with_angles(
            c.clusters,
            c.rays_per_cluster,
            ArrayGeometry::new(num_tx, c.spacing_over_wavelength)?,
            ArrayGeometry::new(num_rx, c.spacing_over_wavelength)?,
            angles,
        )?)
    }

    pub fn link_env_for(&self, num_tx: usize, num_rx: usize) -> SimResult<LinkEnvironment> {
        let mut env = LinkEnvironment::new(self.cluster_config_for(num_tx, num_rx)?, self.channel.streams)?;
        env.strategy = match self.channel.strategy {
            Strategy::Svd => PrecoderStrategy::Svd,
            Strategy::ZeroForcing => PrecoderStrategy::ZeroForcing,
        };
        env.equalize = self.channel.equalize;
        Ok(env)
    }

    pub fn link_env(&self) -> SimResult<LinkEnvironment> {
        self.link_env_for(self.channel.num_tx, self.channel.num_rx)
    }

    pub fn codec_spec(&self) -> SimResult<CodecSpec> {
        let c = &self.codec;
        let spec = CodecSpec {
            dims: ImageDims::new(c.height, c.width, c.channels),
            symbol_count: c.symbols,
            hidden: c.hidden,
        };
        if spec.dims.is_empty() || spec.symbol_count == 0 || spec.hidden == 0 {
            return Err(err("codec dimensions must be positive"));
        }
        Ok(spec)
    }

    pub fn training_config(&self) -> TrainingConfig {
        let t = &self.training;
        TrainingConfig {
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            train_snr_db: t.snr_db,
            seed: t.seed,
            adam: AdamParams::default(),
        }
    }

    pub fn evaluator_training(&self) -> EvaluatorTraining {
        let e = &self.evaluator;
        EvaluatorTraining {
            learning_rate: e.learning_rate,
            batch_size: e.batch_size,
            epochs: e.epochs,
            seed: e.seed,
            adam: AdamParams::default(),
        }
    }
}
