//! Artifact building (codebooks, codecs, labels, evaluator, degradation
//! table) and the three figure sweeps.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mimo_jscc_core::channel::{sample_channel_entries, snr_to_noise_variance};
use mimo_jscc_core::codec::{train, JsccCodec, TrainingHistory};
use mimo_jscc_core::evaluator::{
    label_image, regressor_layers, train_evaluator, Evaluator, LabeledImage, LabeledSet, Predictor, QualityPrediction,
};
use mimo_jscc_core::feedback::{
    calibrate_degradation, group_split_allocation, min_bits_search, simulate_image, success_ratio, uniform_allocation,
    AllocationPlan, CodebookSet, DegradationTable, OutageSpec,
};
use mimo_jscc_core::image::{synthesize_images, ImageSample};
use mimo_jscc_core::link::LinkEnvironment;
use mimo_jscc_core::quantizer::{fit_lloyd_max, pooled_parts, CsiCodebook, LloydMaxOptions};
use mimo_jscc_core::rng::{stream, Purpose};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cifar;
use crate::config::{DatasetSection, ExperimentConfig, PredictorMode};
use crate::error::{SimError, SimResult};
use crate::formats::{self, Checkpoint, LabelRow};

/// Source ids of test and validation images start at these offsets so they
/// never collide with training ids.
pub const TEST_ID_BASE: u64 = 1 << 32;
pub const VALIDATION_ID_BASE: u64 = 2 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Datasets {
    pub train: Vec<ImageSample>,
    pub validation: Vec<ImageSample>,
    pub test: Vec<ImageSample>,
}

fn reindex(images: Vec<ImageSample>, base: u64) -> SimResult<Vec<ImageSample>> {
    images
        .into_iter()
        .map(|s| {
            let kind = s.kind();
            let out = ImageSample::new(base + s.source_id(), s.dims(), s.pixels().to_vec())?;
            Ok(match kind {
                Some(k) => out.with_kind(k),
                None => out,
            })
        })
        .collect()
}

pub fn load_datasets(config: &ExperimentConfig) -> SimResult<Datasets> {
    let dims = config.codec_spec()?.dims;
    match &config.dataset {
        DatasetSection::Synthetic {
            train_count,
            test_count,
            validation_count,
            texture_fraction,
            seed,
        } => Ok(Datasets {
            train: synthesize_images(*train_count, dims, *texture_fraction, *seed)?,
            validation: reindex(
                synthesize_images(*validation_count, dims, *texture_fraction, seed.wrapping_add(2))?,
                VALIDATION_ID_BASE,
            )?,
            test: reindex(
                synthesize_images(*test_count, dims, *texture_fraction, seed.wrapping_add(1))?,
                TEST_ID_BASE,
            )?,
        }),
        DatasetSection::Cifar {
            train_paths,
            test_path,
            train_count,
            test_count,
            validation_count,
        } => {
            let mut train = Vec::new();
            for (k, path) in train_paths.iter().enumerate() {
                let offset = (k as u64) << 24;
                train.extend(cifar::load_cropped(path, offset, dims.height, dims.width)?);
            }
            if let Some(n) = train_count {
                train.truncate(*n);
            }
            let mut test = cifar::load_cropped(test_path, TEST_ID_BASE, dims.height, dims.width)?;
            if let Some(n) = test_count {
                test.truncate(*n);
            }
            if *validation_count > train.len() {
                return Err(SimError::Config("validation_count exceeds the training set".into()));
            }
            let validation = reindex(train[..*validation_count].to_vec(), VALIDATION_ID_BASE)?;
            Ok(Datasets {
                train,
                validation,
                test,
            })
        }
    }
}

/// Builds artifacts on demand, caching them under
/// `<dir>/artifacts-<config hash>/` when a directory is given.
pub struct Workspace {
    pub config: ExperimentConfig,
    pub hash: String,
    pub datasets: Datasets,
    dir: Option<PathBuf>,
    log: bool,
}

impl Workspace {
    pub fn new(config: ExperimentConfig, out_dir: Option<&Path>) -> SimResult<Self> {
        config.validate()?;
        let hash = config.hash();
        let dir = match out_dir {
            Some(d) => {
                let dir = d.join(format!("artifacts-{hash}"));
                std::fs::create_dir_all(&dir).map_err(|e| SimError::io(&dir, e))?;
                Some(dir)
            }
            None => None,
        };
        let datasets = load_datasets(&config)?;
        Ok(Self {
            config,
            hash,
            datasets,
            dir,
            log: false,
        })
    }

    pub fn with_logging(mut self, log: bool) -> Self {
        self.log = log;
        self
    }

    fn note(&self, msg: impl AsRef<str>) {
        if self.log {
            eprintln!("[{}] {}", self.hash, msg.as_ref());
        }
    }

    fn artifact(&self, name: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(name))
    }

    fn cached(&self, name: &str) -> Option<PathBuf> {
        self.artifact(name).filter(|p| p.exists())
    }

    pub fn codebooks(&self) -> SimResult<CodebookSet> {
        let bits = &self.config.quantizer.bits;
        let mut set = CodebookSet::new();
        let mut missing = Vec::new();
        for &b in bits {
            match self.cached(&format!("codebook_{b}.txt")) {
                Some(path) => {
                    let book = formats::read_codebook(&path)?;
                    if book.fitted_on() != self.hash {
                        return Err(SimError::StaleArtifact {
                            path,
                            expected: self.hash.clone(),
                            found: book.fitted_on().to_string(),
                        });
                    }
                    set.insert(book);
                }
                None => missing.push(b),
            }
        }
        if missing.is_empty() {
            return Ok(set);
        }
        let t = Instant::now();
        let q = &self.config.quantizer;
        let env = self.config.link_env()?;
        let channels: Vec<_> = (0..q.fit_channels)
            .map(|i| sample_channel_entries(&env.channel, &mut stream(q.seed, Purpose::Codebook, i as u64)))
            .collect();
        let samples = pooled_parts(channels.iter());
        let options = LloydMaxOptions {
            tol: q.tol,
            max_iters: q.max_iters,
        };
        let fitted: Vec<CsiCodebook> = missing
            .par_iter()
            .map(|&b| {
                let fit = fit_lloyd_max(&samples, b, options)?;
                let c = fit.codebook;
                Ok(CsiCodebook::from_parts(
                    b,
                    c.levels().to_vec(),
                    c.thresholds().to_vec(),
                    self.hash.clone(),
                )?)
            })
            .collect::<SimResult<_>>()?;
        for book in fitted {
            if let Some(path) = self.artifact(&format!("codebook_{}.txt", book.bits())) {
                formats::write_codebook(&path, &book)?;
            }
            set.insert(book);
        }
        self.note(format!(
            "fitted codebooks {missing:?} on {} channels in {:.1}s",
            q.fit_channels,
            t.elapsed().as_secs_f64()
        ));
        Ok(set)
    }

    pub fn train_codec(&self, num_tx: usize, num_rx: usize) -> SimResult<(JsccCodec, TrainingHistory)> {
        let env = self.config.link_env_for(num_tx, num_rx)?;
        let mut codec = JsccCodec::new(self.config.codec_spec()?, self.config.codec.seed)?;
        let history = train(&mut codec, &self.datasets.train, &self.config.training_config(), &env)?;
        Ok((codec, history))
    }

    pub fn codec(&self, num_tx: usize, num_rx: usize) -> SimResult<JsccCodec> {
        let name = format!("codec_{num_tx}x{num_rx}.ckpt");
        if let Some(path) = self.cached(&name) {
            let ckpt = Checkpoint::read(&path)?;
            self.check_hash(&path, &ckpt.config_hash)?;
            return ckpt.to_codec(&path);
        }
        let t = Instant::now();
        let (codec, history) = self.train_codec(num_tx, num_rx)?;
        self.note(format!(
            "trained {num_tx}x{num_rx} codec in {:.1}s, final epoch loss {:.5}",
            t.elapsed().as_secs_f64(),
            history.epoch_losses.last().copied().unwrap_or(f64::NAN)
        ));
        if let Some(path) = self.artifact(&name) {
            Checkpoint::from_codec(&codec, &self.hash).write(&path)?;
        }
        Ok(codec)
    }

    pub fn main_codec(&self) -> SimResult<JsccCodec> {
        self.codec(self.config.channel.num_tx, self.config.channel.num_rx)
    }

    fn check_hash(&self, path: &Path, found: &str) -> SimResult<()> {
        if found != self.hash {
            return Err(SimError::StaleArtifact {
                path: path.to_path_buf(),
                expected: self.hash.clone(),
                found: found.to_string(),
            });
        }
        Ok(())
    }

    /// The first channel each test image sees in the experiment stream of
    /// `seed`, in test order.
    pub fn channel_dump(&self, seed: u64) -> SimResult<formats::ChannelDump> {
        let env = self.config.link_env()?;
        let channels = self
            .datasets
            .test
            .iter()
            .map(|img| sample_channel_entries(&env.channel, &mut stream(seed, Purpose::Experiment, img.source_id())))
            .collect();
        Ok(formats::ChannelDump {
            seed,
            config_hash: self.hash.clone(),
            channels,
        })
    }

    /// Perfect-CSI labels at the configured label SNR, one stream per image.
    pub fn label(&self, codec: &JsccCodec, images: &[ImageSample], name: &str) -> SimResult<LabeledSet> {
        let e = &self.config.evaluator;
        let file = format!("labels_{name}.csv");
        if let Some(path) = self.cached(&file) {
            let rows: Vec<LabelRow> = formats::read_csv(&path)?;
            let by_id: BTreeMap<u64, &LabelRow> = rows.iter().map(|r| (r.source_id, r)).collect();
            let items = images
                .iter()
                .map(|s| {
                    let row = by_id
                        .get(&s.source_id())
                        .ok_or_else(|| SimError::format(&path, format!("no label for image {}", s.source_id())))?;
                    Ok(LabeledImage {
                        image: s.clone(),
                        true_psnr_db: row.true_psnr_db,
                    })
                })
                .collect::<SimResult<Vec<_>>>()?;
            return Ok(LabeledSet {
                items,
                snr_db: e.label_snr_db,
                realizations: e.label_realizations,
            });
        }
        let env = self.config.link_env()?;
        let items = images
            .par_iter()
            .map(|s| {
                let true_psnr_db = label_image(codec, s, &env, e.label_snr_db, e.label_realizations, e.label_seed)?;
                Ok(LabeledImage {
                    image: s.clone(),
                    true_psnr_db,
                })
            })
            .collect::<SimResult<Vec<_>>>()?;
        let set = LabeledSet {
            items,
            snr_db: e.label_snr_db,
            realizations: e.label_realizations,
        };
        if let Some(path) = self.artifact(&file) {
            formats::write_csv(&path, &formats::label_rows(&set))?;
        }
        Ok(set)
    }

    pub fn new_evaluator(&self) -> SimResult<Evaluator> {
        let n = self.config.codec_spec()?.dims.len();
        Ok(Evaluator::new(
            n,
            regressor_layers(n, self.config.evaluator.hidden),
            self.config.evaluator.seed,
        )?)
    }

    pub fn evaluator(&self, train_labels: &LabeledSet) -> SimResult<Evaluator> {
        if let Some(path) = self.cached("evaluator.ckpt") {
            let ckpt = Checkpoint::read(&path)?;
            self.check_hash(&path, &ckpt.config_hash)?;
            return ckpt.to_evaluator(&path);
        }
        let mut ev = self.new_evaluator()?;
        let losses = train_evaluator(&mut ev, train_labels, &self.config.evaluator_training())?;
        self.note(format!(
            "trained evaluator, final loss {:.3} dB²",
            losses.last().copied().unwrap_or(f64::NAN)
        ));
        if let Some(path) = self.artifact("evaluator.ckpt") {
            Checkpoint::from_evaluator(&ev, &self.hash).write(&path)?;
        }
        Ok(ev)
    }

    pub fn degradation(&self, codec: &JsccCodec, codebooks: &CodebookSet) -> SimResult<DegradationTable> {
        if let Some(path) = self.cached("degradation.csv") {
            return formats::read_degradation(&path);
        }
        let s = &self.config.sweep;
        let mut bits: Vec<u8> = s.option_sets.iter().flatten().copied().collect();
        bits.sort_unstable_by(|a, b| b.cmp(a));
        bits.dedup();
        let env = self.config.link_env()?;
        let table = calibrate_degradation(
            codec,
            &self.datasets.validation,
            &bits,
            codebooks,
            &env,
            s.experiment_snr_db,
            s.calibration_realizations,
            s.calibration_seed,
        )?;
        if let Some(path) = self.artifact("degradation.csv") {
            formats::write_degradation(&path, &table)?;
        }
        Ok(table)
    }

    /// Quality predictions for the test set under the configured mode.
    pub fn predictions(&self, codec: &JsccCodec) -> SimResult<Vec<QualityPrediction>> {
        let test_labels = self.label(codec, &self.datasets.test, "test")?;
        let preds = match self.config.sweep.predictor {
            PredictorMode::Oracle => Predictor::Oracle(&test_labels).predict_all(&self.datasets.test)?,
            PredictorMode::Learned => {
                let train_labels = self.label(codec, &self.datasets.train, "train")?;
                let ev = self.evaluator(&train_labels)?;
                let labels = test_labels.label_map();
                Predictor::Learned(&ev)
                    .predict_all(&self.datasets.test)?
                    .into_iter()
                    .map(|p| QualityPrediction {
                        true_psnr_db: labels.get(&p.source_id).copied(),
                        ..p
                    })
                    .collect()
            }
        };
        Ok(preds)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Figure {
    /// PSNR against SNR under perfect CSI for several array sizes.
    Fig4,
    /// Success ratio of uniform and split allocations across thresholds.
    Fig5,
    /// Total feedback bits of min-bits search for each option set.
    Fig6,
}

impl Figure {
    pub fn number(self) -> u8 {
        match self {
            Figure::Fig4 => 4,
            Figure::Fig5 => 5,
            Figure::Fig6 => 6,
        }
    }

    pub fn from_number(n: u8) -> SimResult<Self> {
        match n {
            4 => Ok(Figure::Fig4),
            5 => Ok(Figure::Fig5),
            6 => Ok(Figure::Fig6),
            _ => Err(SimError::Config(format!("no figure {n}; expected 4, 5 or 6"))),
        }
    }
}

/// One CSV row. Wall-clock time is kept in memory only so rows stay
/// reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub figure: u8,
    pub policy: String,
    pub option_bits: String,
    pub antennas: String,
    pub threshold_db: f64,
    pub snr_db: f64,
    pub success_ratio: f64,
    pub avg_bits: f64,
    pub total_bits: u64,
    pub mean_psnr_db: f64,
    pub seed: u64,
    pub config_hash: String,
    #[serde(skip)]
    pub wall_clock_s: f64,
}

impl MetricsRecord {
    /// Identifies the point within a sweep, ignoring the measured values.
    pub fn key(&self) -> (u8, &str, &str, &str, u64, u64, u64) {
        (
            self.figure,
            &self.policy,
            &self.option_bits,
            &self.antennas,
            self.threshold_db.to_bits(),
            self.snr_db.to_bits(),
            self.seed,
        )
    }
}

pub fn bits_label(bits: &[u8]) -> String {
    bits.iter().map(|b| b.to_string()).collect::<Vec<_>>().join("-")
}

fn antennas_label(nt: usize, nr: usize) -> String {
    format!("{nt}x{nr}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub figure: Figure,
    pub records: Vec<MetricsRecord>,
    pub violations: Vec<String>,
}

impl SweepOutput {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn label_range(labels: &LabeledSet) -> (f64, f64) {
    labels
        .items
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), it| {
            (lo.min(it.true_psnr_db), hi.max(it.true_psnr_db))
        })
}

/// PSNR of every test image at one seed and feedback depth, in test order.
fn outcomes(
    codec: &JsccCodec,
    images: &[ImageSample],
    bits: Option<u8>,
    codebooks: &CodebookSet,
    env: &LinkEnvironment,
    snr_db: f64,
    seed: u64,
) -> SimResult<Vec<f64>> {
    let noise = snr_to_noise_variance(snr_db)?;
    images
        .par_iter()
        .map(|img| Ok(simulate_image(codec, img, bits, codebooks, env, &noise, seed)?.psnr_db))
        .collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// PSNRs realized under `plan`, looked up from per-depth outcome vectors
/// that share channels and noise.
fn planned_psnrs(
    plan: &AllocationPlan,
    images: &[ImageSample],
    by_bits: &BTreeMap<u8, Vec<f64>>,
) -> SimResult<Vec<f64>> {
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let b = plan
                .bits_for(img.source_id())
                .ok_or_else(|| SimError::Invariant(format!("no bits assigned to image {}", img.source_id())))?;
            by_bits
                .get(&b)
                .map(|v| v[i])
                .ok_or_else(|| SimError::Invariant(format!("no outcomes simulated at {b} bits")))
        })
        .collect()
}

struct Row<'a> {
    ws: &'a Workspace,
    figure: Figure,
    antennas: String,
    snr_db: f64,
    seed: u64,
    started: Instant,
}

impl Row<'_> {
    fn record(&self, policy: &str, option_bits: &[u8], threshold_db: f64, psnrs: &[f64], plan: Option<&AllocationPlan>) -> SimResult<MetricsRecord> {
        let spec = OutageSpec::new(threshold_db)?;
        Ok(MetricsRecord {
            figure: self.figure.number(),
            policy: policy.to_string(),
            option_bits: bits_label(option_bits),
            antennas: self.antennas.clone(),
            threshold_db,
            snr_db: self.snr_db,
            success_ratio: success_ratio(psnrs, &spec)?,
            avg_bits: plan.map_or(0.0, |p| p.average_bits()),
            total_bits: plan.map_or(0, |p| p.total_bits()),
            mean_psnr_db: mean(psnrs),
            seed: self.seed,
            config_hash: self.ws.hash.clone(),
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        })
    }
}

impl Workspace {
    /// Thresholds for the success-ratio sweep: configured, or ten points
    /// spanning the perfect-CSI label range of the test set.
    pub fn fig5_thresholds(&self, test_labels: &LabeledSet) -> Vec<f64> {
        if !self.config.sweep.thresholds_db.is_empty() {
            return self.config.sweep.thresholds_db.clone();
        }
        let (lo, hi) = label_range(test_labels);
        linspace(lo, hi, 10)
    }

    /// Thresholds for the overhead sweep: configured, or the quartiles of
    /// the label range.
    pub fn fig6_thresholds(&self, test_labels: &LabeledSet) -> Vec<f64> {
        if !self.config.sweep.overhead_thresholds_db.is_empty() {
            return self.config.sweep.overhead_thresholds_db.clone();
        }
        let (lo, hi) = label_range(test_labels);
        [0.25, 0.5, 0.75].iter().map(|f| lo + f * (hi - lo)).collect()
    }

    pub fn run_figure_sweep(&self, figure: Figure, seeds: &[u64]) -> SimResult<SweepOutput> {
        if seeds.is_empty() {
            return Err(SimError::Config("no seeds to sweep".into()));
        }
        let records = match figure {
            Figure::Fig4 => self.sweep_fig4(seeds)?,
            Figure::Fig5 => self.sweep_fig5(seeds)?,
            Figure::Fig6 => self.sweep_fig6(seeds)?,
        };
        let violations = check_records(&records, self.datasets.test.len());
        Ok(SweepOutput {
            figure,
            records,
            violations,
        })
    }

    fn sweep_fig4(&self, seeds: &[u64]) -> SimResult<Vec<MetricsRecord>> {
        let s = &self.config.sweep;
        let images = &self.datasets.test;
        let none = CodebookSet::new();
        let mut out = Vec::new();
        for &[nt, nr] in &s.antennas {
            let codec = self.codec(nt, nr)?;
            let env = self.config.link_env_for(nt, nr)?;
            for &snr_db in &s.snr_db {
                for &seed in seeds {
                    let row = Row {
                        ws: self,
                        figure: Figure::Fig4,
                        antennas: antennas_label(nt, nr),
                        snr_db,
                        seed,
                        started: Instant::now(),
                    };
                    let psnrs = outcomes(&codec, images, None, &none, &env, snr_db, seed)?;
                    out.push(row.record("perfect_csi", &[], s.reference_threshold_db, &psnrs, None)?);
                }
            }
            self.note(format!("fig4 {nt}x{nr} done"));
        }
        Ok(out)
    }

    fn sweep_fig5(&self, seeds: &[u64]) -> SimResult<Vec<MetricsRecord>> {
        let s = &self.config.sweep;
        let images = &self.datasets.test;
        let codec = self.main_codec()?;
        let codebooks = self.codebooks()?;
        let env = self.config.link_env()?;
        let test_labels = self.label(&codec, images, "test")?;
        let preds = self.predictions(&codec)?;
        let thresholds = self.fig5_thresholds(&test_labels);
        let [high, low] = s.split_bits;
        let split = group_split_allocation(&preds, high, low)?;
        let mut depths: Vec<u8> = s.uniform_bits.iter().copied().chain([high, low]).collect();
        depths.sort_unstable();
        depths.dedup();
        let mut out = Vec::new();
        for &seed in seeds {
            let started = Instant::now();
            let mut by_bits = BTreeMap::new();
            for &b in &depths {
                by_bits.insert(b, outcomes(&codec, images, Some(b), &codebooks, &env, s.experiment_snr_db, seed)?);
            }
            let row = Row {
                ws: self,
                figure: Figure::Fig5,
                antennas: antennas_label(self.config.channel.num_tx, self.config.channel.num_rx),
                snr_db: s.experiment_snr_db,
                seed,
                started,
            };
            let split_psnrs = planned_psnrs(&split, images, &by_bits)?;
            for &th in &thresholds {
                for &b in &s.uniform_bits {
                    let plan = uniform_allocation(&preds, b)?;
                    out.push(row.record("uniform", &[b], th, &by_bits[&b], Some(&plan))?);
                }
                out.push(row.record("group_split", &[high, low], th, &split_psnrs, Some(&split))?);
            }
        }
        Ok(out)
    }

    fn sweep_fig6(&self, seeds: &[u64]) -> SimResult<Vec<MetricsRecord>> {
        let s = &self.config.sweep;
        let images = &self.datasets.test;
        let codec = self.main_codec()?;
        let codebooks = self.codebooks()?;
        let env = self.config.link_env()?;
        let test_labels = self.label(&codec, images, "test")?;
        let preds = self.predictions(&codec)?;
        let table = self.degradation(&codec, &codebooks)?;
        let thresholds = self.fig6_thresholds(&test_labels);
        let mut depths: Vec<u8> = s.option_sets.iter().flatten().copied().collect();
        depths.sort_unstable();
        depths.dedup();
        let top = *depths.last().ok_or_else(|| SimError::Config("empty option sets".into()))?;
        let mut out = Vec::new();
        for &seed in seeds {
            let started = Instant::now();
            let mut by_bits = BTreeMap::new();
            for &b in &depths {
                by_bits.insert(b, outcomes(&codec, images, Some(b), &codebooks, &env, s.experiment_snr_db, seed)?);
            }
            let row = Row {
                ws: self,
                figure: Figure::Fig6,
                antennas: antennas_label(self.config.channel.num_tx, self.config.channel.num_rx),
                snr_db: s.experiment_snr_db,
                seed,
                started,
            };
            for &th in &thresholds {
                let spec = OutageSpec::new(th)?;
                let baseline_plan = uniform_allocation(&preds, top)?;
                let baseline = row.record("uniform", &[top], th, &by_bits[&top], Some(&baseline_plan))?;
                let target = success_ratio(&by_bits[&top], &spec)?;
                out.push(baseline);
                for options in &s.option_sets {
                    let mut options = options.clone();
                    options.sort_unstable_by(|a, b| b.cmp(a));
                    let found = min_bits_search(&preds, &options, target, &table, &spec)?;
                    let psnrs = planned_psnrs(&found.plan, images, &by_bits)?;
                    out.push(row.record("min_bits_search", &options, th, &psnrs, Some(&found.plan))?);
                }
            }
        }
        Ok(out)
    }
}

/// Figure, policy, option bits, antennas and two f64 bit patterns.
type CurveKey<'a> = (u8, &'a str, &'a str, &'a str, u64, u64);

/// Invariant checks over sweep output; returns one message per violation.
pub fn check_records(records: &[MetricsRecord], image_count: usize) -> Vec<String> {
    let mut bad = Vec::new();
    for r in records {
        let values = [r.threshold_db, r.snr_db, r.success_ratio, r.avg_bits, r.mean_psnr_db];
        if values.iter().any(|v| !v.is_finite()) {
            bad.push(format!("non-finite value in {:?}", r.key()));
        }
        if !(0.0..=1.0).contains(&r.success_ratio) {
            bad.push(format!("success ratio {} outside [0, 1] in {:?}", r.success_ratio, r.key()));
        }
        let options: Vec<u64> = r.option_bits.split('-').filter_map(|b| b.parse().ok()).collect();
        if let Some(&max) = options.iter().max() {
            if r.total_bits > max * image_count as u64 {
                bad.push(format!("total bits {} exceed {}·{} in {:?}", r.total_bits, image_count, max, r.key()));
            }
            if r.policy == "group_split" && image_count.is_multiple_of(2) {
                let expect = options.iter().sum::<u64>() as f64 / options.len() as f64;
                if (r.avg_bits - expect).abs() > 1e-12 {
                    bad.push(format!("split average {} differs from {} in {:?}", r.avg_bits, expect, r.key()));
                }
            }
        }
    }
    // Success ratio must not increase with the threshold along a curve.
    let mut curves: BTreeMap<CurveKey<'_>, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records {
        curves
            .entry((r.figure, &r.policy, &r.option_bits, &r.antennas, r.snr_db.to_bits(), r.seed))
            .or_default()
            .push((r.threshold_db, r.success_ratio));
    }
    for (key, mut pts) in curves {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        if pts.windows(2).any(|w| w[1].1 > w[0].1) {
            bad.push(format!("success ratio rises with threshold on curve {key:?}"));
        }
    }
    bad
}

/// Seed-averaged view of sweep rows, one line per point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub figure: u8,
    pub policy: String,
    pub option_bits: String,
    pub antennas: String,
    pub threshold_db: f64,
    pub snr_db: f64,
    pub seeds: usize,
    pub success_ratio: f64,
    pub avg_bits: f64,
    pub total_bits: f64,
    pub mean_psnr_db: f64,
}

pub fn summarize_records(records: &[MetricsRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<CurveKey<'_>, Vec<&MetricsRecord>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in records {
        let key = (r.figure, r.policy.as_str(), r.option_bits.as_str(), r.antennas.as_str(), r.threshold_db.to_bits(), r.snr_db.to_bits());
        let entry = groups.entry(key).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rows = &groups[&key];
            let n = rows.len() as f64;
            let avg = |f: fn(&MetricsRecord) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
            SummaryRow {
                figure: key.0,
                policy: key.1.to_string(),
                option_bits: key.2.to_string(),
                antennas: key.3.to_string(),
                threshold_db: rows[0].threshold_db,
                snr_db: rows[0].snr_db,
                seeds: rows.len(),
                success_ratio: avg(|r| r.success_ratio),
                avg_bits: avg(|r| r.avg_bits),
                total_bits: avg(|r| r.total_bits as f64),
                mean_psnr_db: avg(|r| r.mean_psnr_db),
            }
        })
        .collect()
}
