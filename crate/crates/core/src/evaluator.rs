//! Per-image reconstruction-quality predictor.
//!
//! A small regressor is trained on PSNR labels measured by running the codec
//! over simulated links; its predictions rank images by how much slack they
//! have above an outage threshold.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;

use crate::channel::snr_to_noise_variance;
use crate::codec::{image_psnr, JsccCodec};
use crate::error::{check_len, invalid, Error, Result};
use crate::image::{ImageSample, PSNR_CAP_DB};
use crate::link::{draw_image_link, CsiFeedback, LinkEnvironment};
use crate::nn::{Adam, AdamParams, LayerSpec, Mlp};
use crate::rng::{stream, Purpose, SimRng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityPrediction {
    pub source_id: u64,
    pub predicted_psnr_db: f64,
    pub true_psnr_db: Option<f64>,
    /// `predicted − threshold`, present once a threshold is bound.
    pub tolerance_db: Option<f64>,
}

impl QualityPrediction {
    pub fn new(source_id: u64, predicted_psnr_db: f64) -> Self {
        Self {
            source_id,
            predicted_psnr_db,
            true_psnr_db: None,
            tolerance_db: None,
        }
    }

    pub fn with_threshold(mut self, threshold_db: f64) -> Self {
        self.tolerance_db = Some(self.predicted_psnr_db - threshold_db);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: ImageSample,
    pub true_psnr_db: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub items: Vec<LabeledImage>,
    pub snr_db: f64,
    pub realizations: usize,
}

impl LabeledSet {
    pub fn labels(&self) -> Vec<f64> {
        self.items.iter().map(|l| l.true_psnr_db).collect()
    }

    pub fn label_map(&self) -> BTreeMap<u64, f64> {
        self.items
            .iter()
            .map(|l| (l.image.source_id(), l.true_psnr_db))
            .collect()
    }
}

/// Mean PSNR of one image over `realizations` perfect-CSI links at `snr_db`.
/// Draws from the image's own stream, keyed by its source id.
pub fn label_image(
    codec: &JsccCodec,
    image: &ImageSample,
    env: &LinkEnvironment,
    snr_db: f64,
    realizations: usize,
    seed: u64,
) -> Result<f64> {
    if realizations == 0 {
        return Err(invalid("need at least one realization per label"));
    }
    let noise = snr_to_noise_variance(snr_db)?;
    let mut rng: SimRng = stream(seed, Purpose::Label, image.source_id());
    let mut total = 0.0;
    for _ in 0..realizations {
        let link = draw_image_link(env, CsiFeedback::Perfect, Some(&noise), codec.symbol_count(), &mut rng)?;
        total += image_psnr(codec, image, &link.realization)?;
    }
    Ok((total / realizations as f64).min(PSNR_CAP_DB))
}

pub fn label_dataset(
    codec: &JsccCodec,
    dataset: &[ImageSample],
    env: &LinkEnvironment,
    snr_db: f64,
    realizations: usize,
    seed: u64,
) -> Result<LabeledSet> {
    let items = dataset
        .iter()
        .map(|image| {
            label_image(codec, image, env, snr_db, realizations, seed).map(|true_psnr_db| LabeledImage {
                image: image.clone(),
                true_psnr_db,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledSet {
        items,
        snr_db,
        realizations,
    })
}

/// `N → hidden → 1` regressor with softplus activation.
pub fn regressor_layers(input_len: usize, hidden: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Dense {
            inputs: input_len,
            outputs: hidden,
        },
        LayerSpec::Softplus,
        LayerSpec::Dense {
            inputs: hidden,
            outputs: 1,
        },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluator {
    net: Mlp,
    /// Network output `y` maps to `offset + scale·y` dB.
    label_offset: f64,
    label_scale: f64,
    /// Per-pixel standardization applied before the network.
    input_mean: Vec<f64>,
    input_std: Vec<f64>,
    normalized: bool,
}

/// Fitted scaling of evaluator inputs and outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub label_offset: f64,
    pub label_scale: f64,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
}

impl Normalization {
    pub fn identity(input_len: usize) -> Self {
        Self {
            label_offset: 0.0,
            label_scale: 1.0,
            input_mean: vec![0.0; input_len],
            input_std: vec![1.0; input_len],
        }
    }
}

impl Evaluator {
    pub fn new(input_len: usize, layers: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let net = Mlp::new(input_len, layers, &mut stream(seed, Purpose::Init, 1))?;
        if net.output_dim() != 1 {
            return Err(invalid("evaluator must output a single value"));
        }
        Ok(Self {
            net,
            label_offset: 0.0,
            label_scale: 1.0,
            input_mean: vec![0.0; input_len],
            input_std: vec![1.0; input_len],
            normalized: false,
        })
    }

    /// Default `N → 64 → 1` evaluator.
    pub fn desk(input_len: usize, seed: u64) -> Result<Self> {
        Self::new(input_len, regressor_layers(input_len, 64), seed)
    }

    /// Single learned bias; converges to the mean label.
    pub fn constant(input_len: usize, seed: u64) -> Result<Self> {
        Self::new(input_len, vec![LayerSpec::Constant { outputs: 1 }], seed)
    }

    pub fn from_parts(input_len: usize, layers: Vec<LayerSpec>, params: Vec<f64>, norm: Normalization) -> Result<Self> {
        let Normalization {
            label_offset,
            label_scale,
            input_mean,
            input_std,
        } = norm;
        if !(label_scale > 0.0 && label_scale.is_finite() && label_offset.is_finite()) {
            return Err(invalid("label normalization must be finite with positive scale"));
        }
        if input_mean.len() != input_len || input_std.len() != input_len {
            return Err(invalid("input normalization length does not match the input"));
        }
        if input_mean.iter().any(|m| !m.is_finite()) || input_std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(invalid("input normalization must be finite with positive spread"));
        }
        let net = Mlp::from_params(input_len, layers, params)?;
        Ok(Self {
            net,
            label_offset,
            label_scale,
            input_mean,
            input_std,
            normalized: true,
        })
    }

    pub fn network(&self) -> &Mlp {
        &self.net
    }

    pub fn normalization(&self) -> Normalization {
        Normalization {
            label_offset: self.label_offset,
            label_scale: self.label_scale,
            input_mean: self.input_mean.clone(),
            input_std: self.input_std.clone(),
        }
    }

    fn standardize(&self, image: &ImageSample) -> Vec<f64> {
        image
            .pixels()
            .iter()
            .zip(self.input_mean.iter().zip(&self.input_std))
            .map(|(p, (m, s))| (p - m) / s)
            .collect()
    }

    pub fn params(&self) -> &[f64] {
        self.net.params()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len(self.net.params().len(), params.len())?;
        self.net.params_mut().copy_from_slice(params);
        Ok(())
    }

    pub fn predict_db(&self, image: &ImageSample) -> Result<f64> {
        check_len(self.input_mean.len(), image.len())?;
        let y = self.net.forward(&self.standardize(image))?[0];
        Ok(self.label_offset + self.label_scale * y)
    }

    pub fn predict(&self, image: &ImageSample) -> Result<QualityPrediction> {
        Ok(QualityPrediction::new(image.source_id(), self.predict_db(image)?))
    }

    /// Mean squared prediction error (dB²) and its parameter gradient.
    pub fn loss_and_gradient(&self, batch: &[LabeledImage]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut grad = vec![0.0; self.net.params().len()];
        let mut loss = 0.0;
        let b = batch.len() as f64;
        for item in batch {
            check_len(self.input_mean.len(), item.image.len())?;
            let trace = self.net.forward_trace(&self.standardize(&item.image))?;
            let err = self.label_offset + self.label_scale * trace.output()[0] - item.true_psnr_db;
            loss += err * err;
            self.net
                .backward(&trace, &[2.0 * err * self.label_scale / b], &mut grad)?;
        }
        Ok((loss / b, grad))
    }

    /// Mean squared error (dB²) over a labeled set.
    pub fn mse(&self, set: &[LabeledImage]) -> Result<f64> {
        Ok(self.loss_and_gradient(set)?.0)
    }

    /// Label mean and spread become the output scaling; per-pixel mean and
    /// spread become the input standardization.
    fn fit_normalization(&mut self, set: &LabeledSet) {
        let labels = set.labels();
        let n = labels.len() as f64;
        let mean = labels.iter().sum::<f64>() / n;
        let var = labels.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        self.label_offset = mean;
        self.label_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let dim = self.input_mean.len();
        let mut mu = vec![0.0; dim];
        for it in &set.items {
            for (m, p) in mu.iter_mut().zip(it.image.pixels()) {
                *m += p / n;
            }
        }
        let mut var = vec![0.0; dim];
        for it in &set.items {
            for ((v, m), p) in var.iter_mut().zip(&mu).zip(it.image.pixels()) {
                *v += (p - m) * (p - m) / n;
            }
        }
        self.input_std = var.iter().map(|v| if *v > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        self.input_mean = mu;
        self.normalized = true;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluatorTraining {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamParams,
}

impl Default for EvaluatorTraining {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 60,
            seed: 0,
            adam: AdamParams::default(),
        }
    }
}

/// Minimizes the mean squared PSNR prediction error. On first training the
/// set's label and pixel statistics fix the normalization. Returns per-epoch
/// mean losses in dB².
pub fn train_evaluator(evaluator: &mut Evaluator, set: &LabeledSet, config: &EvaluatorTraining) -> Result<Vec<f64>> {
    if set.items.is_empty() {
        return Err(Error::Empty("labeled set"));
    }
    if config.batch_size == 0 || config.learning_rate.is_nan() || config.learning_rate < 0.0 {
        return Err(invalid("evaluator training needs a batch size ≥ 1 and a non-negative rate"));
    }
    if config.epochs == 0 {
        return Ok(Vec::new());
    }
    if !evaluator.normalized {
        if set.items.iter().any(|it| it.image.len() != evaluator.input_mean.len()) {
            return Err(invalid("labeled image size does not match the evaluator input"));
        }
        evaluator.fit_normalization(set);
    }
    let mut adam = Adam::new(evaluator.net.params().len(), config.adam);
    let mut order: Vec<usize> = (0..set.items.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        order.shuffle(&mut stream(config.seed, Purpose::Shuffle, (1 << 40) | epoch as u64));
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<LabeledImage> = chunk.iter().map(|&i| set.items[i].clone()).collect();
            let (loss, grad) = evaluator.loss_and_gradient(&batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { batch: step });
            }
            adam.step(evaluator.net.params_mut(), &grad, config.learning_rate);
            total += loss;
            batches += 1;
            step += 1;
        }
        history.push(total / batches as f64);
    }
    Ok(history)
}

/// Source of per-image quality predictions.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    Learned(&'a Evaluator),
    /// Uses measured labels as predictions.
    Oracle(&'a LabeledSet),
}

impl Predictor<'_> {
    pub fn predict_all(&self, images: &[ImageSample]) -> Result<Vec<QualityPrediction>> {
        match self {
            Predictor::Learned(ev) => images.iter().map(|s| ev.predict(s)).collect(),
            Predictor::Oracle(set) => {
                let labels = set.label_map();
                images
                    .iter()
                    .map(|s| {
                        let label = *labels
                            .get(&s.source_id())
                            .ok_or_else(|| invalid("oracle predictor has no label for an image"))?;
                        Ok(QualityPrediction {
                            true_psnr_db: Some(label),
                            ..QualityPrediction::new(s.source_id(), label)
                        })
                    })
                    .collect()
            }
        }
    }
}

/// Average ranks (1-based), ties share the mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a.len(), b.len())?;
    if a.len() < 2 {
        return Err(invalid("rank correlation needs at least two points"));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    if va == 0.0 || vb == 0.0 {
        return Ok(0.0);
    }
    Ok(cov / (va * vb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::{synthesize_images, ImageDims};

    const DIMS: ImageDims = ImageDims::new(4, 4, 3);

    fn labeled(labels: &[f64]) -> LabeledSet {
        let imgs = synthesize_images(labels.len(), DIMS, 0.5, 1).unwrap();
        LabeledSet {
            items: imgs
                .into_iter()
                .zip(labels)
                .map(|(image, &true_psnr_db)| LabeledImage { image, true_psnr_db })
                .collect(),
            snr_db: 6.0,
            realizations: 1,
        }
    }

    #[test]
    fn constant_predictor_converges_to_label_variance() {
        let labels = [20.0, 22.0, 25.0, 31.0, 18.0, 27.0];
        let set = labeled(&labels);
        let mut ev = Evaluator::constant(DIMS.len(), 0).unwrap();
        let cfg = EvaluatorTraining {
            learning_rate: 0.05,
            batch_size: 6,
            epochs: 2000,
            ..EvaluatorTraining::default()
        };
        train_evaluator(&mut ev, &set, &cfg).unwrap();
        let mean = labels.iter().sum::<f64>() / 6.0;
        let var = labels.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 6.0;
        assert!((ev.mse(&set.items).unwrap() - var).abs() < 1e-6 * var);
    }

    #[test]
    fn zero_epochs_leave_evaluator_untouched() {
        let set = labeled(&[10.0, 20.0]);
        let mut ev = Evaluator::desk(DIMS.len(), 4).unwrap();
        let before = ev.clone();
        let cfg = EvaluatorTraining { epochs: 0, ..EvaluatorTraining::default() };
        assert!(train_evaluator(&mut ev, &set, &cfg).unwrap().is_empty());
        assert_eq!(ev, before);
    }

    #[test]
    fn first_training_fits_pixel_statistics() {
        let set = labeled(&[12.0, 30.0, 15.0, 28.0]);
        let mut ev = Evaluator::desk(DIMS.len(), 2).unwrap();
        let cfg = EvaluatorTraining { epochs: 1, ..EvaluatorTraining::default() };
        train_evaluator(&mut ev, &set, &cfg).unwrap();
        let norm = ev.normalization();
        let k = 5;
        let mean = set.items.iter().map(|it| it.image.pixels()[k]).sum::<f64>() / 4.0;
        let var = set.items.iter().map(|it| (it.image.pixels()[k] - mean).powi(2)).sum::<f64>() / 4.0;
        assert!((norm.input_mean[k] - mean).abs() < 1e-15);
        assert!((norm.input_std[k] - var.sqrt()).abs() < 1e-15);
        assert!((norm.label_offset - 21.25).abs() < 1e-12);
        // A second training run keeps the fitted statistics.
        let other = labeled(&[1.0, 2.0, 3.0, 4.0]);
        train_evaluator(&mut ev, &other, &cfg).unwrap();
        assert_eq!(ev.normalization(), norm);
        let bad = Normalization { input_std: vec![0.0; DIMS.len()], ..norm };
        assert!(Evaluator::from_parts(DIMS.len(), regressor_layers(DIMS.len(), 64), ev.params().to_vec(), bad).is_err());
    }

    #[test]
    fn predictions_are_finite_and_pure() {
        let ev = Evaluator::desk(DIMS.len(), 4).unwrap();
        let zeros = ImageSample::new(0, DIMS, vec![0.0; DIMS.len()]).unwrap();
        let ones = ImageSample::new(1, DIMS, vec![1.0; DIMS.len()]).unwrap();
        assert!(ev.predict_db(&zeros).unwrap().is_finite());
        assert!(ev.predict_db(&ones).unwrap().is_finite());
        assert_eq!(ev.predict(&ones).unwrap(), ev.predict(&ones).unwrap());
        let wrong = ImageSample::new(2, ImageDims::new(2, 2, 3), vec![0.5; 12]).unwrap();
        assert!(ev.predict(&wrong).is_err());
    }

    #[test]
    fn threshold_binding() {
        let p = QualityPrediction::new(3, 25.0).with_threshold(21.5);
        assert_eq!(p.tolerance_db, Some(3.5));
        assert_eq!(QualityPrediction::new(3, 25.0).tolerance_db, None);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[5.0, 1.0, 5.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn oracle_predictor_returns_labels() {
        let set = labeled(&[11.0, 12.5, 9.0]);
        let imgs: Vec<ImageSample> = set.items.iter().map(|l| l.image.clone()).collect();
        let preds = Predictor::Oracle(&set).predict_all(&imgs).unwrap();
        let got: Vec<f64> = preds.iter().map(|p| p.predicted_psnr_db).collect();
        assert_eq!(got, vec![11.0, 12.5, 9.0]);
    }
}
