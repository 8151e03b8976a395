//! Deep joint source-channel codec.
//!
//! The encoder maps an image to `2K` reals, pairs them into `K` complex
//! symbols and normalizes them to unit average power. The decoder maps the
//! `K` received symbols back to pixels through a logistic output.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;

use crate::channel::snr_to_noise_variance;
use crate::error::{check_len, invalid, Error, Result};
use crate::image::{mse, psnr_from_mse, ImageDims, ImageSample};
use crate::linalg::C64;
use crate::link::{draw_image_link, CsiFeedback, LinkEnvironment};
use crate::nn::{Adam, AdamParams, LayerSpec, Mlp};
use crate::precoding::LinkRealization;
use crate::rng::{stream, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CodecSpec {
    pub dims: ImageDims,
    pub symbol_count: usize,
    pub hidden: usize,
}

impl CodecSpec {
    /// 8×8×3 patches, 32 symbols, 256 hidden units.
    pub const DESK: CodecSpec = CodecSpec {
        dims: ImageDims::new(8, 8, 3),
        symbol_count: 32,
        hidden: 256,
    };

    pub fn encoder_layers(&self) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Dense {
                inputs: self.dims.len(),
                outputs: self.hidden,
            },
            LayerSpec::Softplus,
            LayerSpec::Dense {
                inputs: self.hidden,
                outputs: 2 * self.symbol_count,
            },
        ]
    }

    pub fn decoder_layers(&self) -> Vec<LayerSpec> {
        vec![
            LayerSpec::Dense {
                inputs: 2 * self.symbol_count,
                outputs: self.hidden,
            },
            LayerSpec::Softplus,
            LayerSpec::Dense {
                inputs: self.hidden,
                outputs: self.dims.len(),
            },
            LayerSpec::Sigmoid,
        ]
    }

    fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.symbol_count == 0 || self.hidden == 0 {
            return Err(invalid("codec dimensions must be positive"));
        }
        Ok(())
    }
}

/// Scales `z` to unit average power, `z·sqrt(K / Σ|z_k|²)`.
pub fn power_normalize(z_raw: &[C64]) -> Result<Vec<C64>> {
    let energy: f64 = z_raw.iter().map(|z| z.norm_sqr()).sum();
    if energy == 0.0 || z_raw.is_empty() {
        return Err(Error::ZeroPower);
    }
    let scale = (z_raw.len() as f64 / energy).sqrt();
    Ok(z_raw.iter().map(|z| z * scale).collect())
}

fn pair(reals: &[f64]) -> Vec<C64> {
    reals.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect()
}

fn unpair(symbols: &[C64]) -> Vec<f64> {
    symbols.iter().flat_map(|z| [z.re, z.im]).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct JsccCodec {
    spec: CodecSpec,
    seed: u64,
    encoder: Mlp,
    decoder: Mlp,
}

impl JsccCodec {
    pub fn new(spec: CodecSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = stream(seed, Purpose::Init, 0);
        let encoder = Mlp::new(spec.dims.len(), spec.encoder_layers(), &mut rng)?;
        let decoder = Mlp::new(2 * spec.symbol_count, spec.decoder_layers(), &mut rng)?;
        Ok(Self {
            spec,
            seed,
            encoder,
            decoder,
        })
    }

    pub fn from_params(spec: CodecSpec, seed: u64, encoder: Vec<f64>, decoder: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            seed,
            encoder: Mlp::from_params(spec.dims.len(), spec.encoder_layers(), encoder)?,
            decoder: Mlp::from_params(2 * spec.symbol_count, spec.decoder_layers(), decoder)?,
        })
    }

    pub fn spec(&self) -> &CodecSpec {
        &self.spec
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn symbol_count(&self) -> usize {
        self.spec.symbol_count
    }

    pub fn encoder_params(&self) -> &[f64] {
        self.encoder.params()
    }

    pub fn decoder_params(&self) -> &[f64] {
        self.decoder.params()
    }

    pub fn param_count(&self) -> usize {
        self.encoder.params().len() + self.decoder.params().len()
    }

    /// Encoder parameters followed by decoder parameters.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.encoder.params().to_vec();
        p.extend_from_slice(self.decoder.params());
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        check_len(self.param_count(), params.len())?;
        let n = self.encoder.params().len();
        self.encoder.params_mut().copy_from_slice(&params[..n]);
        self.decoder.params_mut().copy_from_slice(&params[n..]);
        Ok(())
    }

    pub fn encode(&self, s: &ImageSample) -> Result<Vec<C64>> {
        let raw = self.encoder.forward(s.pixels())?;
        power_normalize(&pair(&raw))
    }

    pub fn decode(&self, z_hat: &[C64]) -> Result<Vec<f64>> {
        check_len(self.spec.symbol_count, z_hat.len())?;
        self.decoder.forward(&unpair(z_hat))
    }

    pub fn reconstruct(&self, s: &ImageSample, link: &LinkRealization) -> Result<Vec<f64>> {
        self.decode(&link.apply(&self.encode(s)?)?)
    }

    /// Batch MSE through encode → link → decode and its gradient with respect
    /// to [`params`](Self::params). Each image uses its own fixed link.
    pub fn loss_and_gradient(&self, batch: &[ImageSample], links: &[LinkRealization]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        check_len(batch.len(), links.len())?;
        let n_enc = self.encoder.params().len();
        let mut grad_enc = vec![0.0; n_enc];
        let mut grad_dec = vec![0.0; self.decoder.params().len()];
        let n_pix = self.spec.dims.len() as f64;
        let weight = 2.0 / (n_pix * batch.len() as f64);
        let mut loss = 0.0;
        for (s, link) in batch.iter().zip(links) {
            let enc_trace = self.encoder.forward_trace(s.pixels())?;
            let raw = enc_trace.output().to_vec();
            let z = power_normalize(&pair(&raw))?;
            let z_hat = link.apply(&z)?;
            let dec_trace = self.decoder.forward_trace(&unpair(&z_hat))?;
            let s_hat = dec_trace.output();
            loss += mse(s.pixels(), s_hat)?;

            let grad_s_hat: Vec<f64> = s_hat
                .iter()
                .zip(s.pixels())
                .map(|(y, t)| weight * (y - t))
                .collect();
            let grad_z_hat = pair(&self.decoder.backward(&dec_trace, &grad_s_hat, &mut grad_dec)?);
            let grad_z = unpair(&link.backward(&grad_z_hat)?);
            let grad_raw = power_normalize_backward(&raw, &grad_z);
            self.encoder.backward(&enc_trace, &grad_raw, &mut grad_enc)?;
        }
        grad_enc.extend(grad_dec);
        Ok((loss / batch.len() as f64, grad_enc))
    }
}

/// Vector-Jacobian product of `r ↦ sqrt(K)·r/‖r‖` over the `2K` reals.
fn power_normalize_backward(raw: &[f64], grad_out: &[f64]) -> Vec<f64> {
    let k = (raw.len() / 2) as f64;
    let norm_sqr: f64 = raw.iter().map(|x| x * x).sum();
    let norm = norm_sqr.sqrt();
    let dot: f64 = raw.iter().zip(grad_out).map(|(a, b)| a * b).sum();
    let scale = k.sqrt() / norm;
    raw.iter()
        .zip(grad_out)
        .map(|(r, g)| scale * (g - r * dot / norm_sqr))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub train_snr_db: f64,
    pub seed: u64,
    pub adam: AdamParams,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 30,
            train_snr_db: 6.0,
            seed: 0,
            adam: AdamParams::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning rate must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch size must be at least 1"));
        }
        if !self.train_snr_db.is_finite() {
            return Err(invalid("training SNR must be finite"));
        }
        Ok(())
    }

    /// Learning rate for `epoch`: halved after each third of the run.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let period = self.epochs.div_ceil(3).max(1);
        self.learning_rate * 0.5f64.powi((epoch / period) as i32)
    }
}

/// Optimizer state for a codec.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecOptimizer {
    adam: Adam,
}

impl CodecOptimizer {
    pub fn new(codec: &JsccCodec, hyper: AdamParams) -> Self {
        Self {
            adam: Adam::new(codec.param_count(), hyper),
        }
    }
}

/// One adaptive-moment update on `batch`; returns the loss before the update.
pub fn train_step(
    codec: &mut JsccCodec,
    batch: &[ImageSample],
    links: &[LinkRealization],
    optimizer: &mut CodecOptimizer,
    learning_rate: f64,
    batch_index: usize,
) -> Result<f64> {
    let (loss, grad) = codec.loss_and_gradient(batch, links)?;
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss { batch: batch_index });
    }
    let mut params = codec.params();
    optimizer.adam.step(&mut params, &grad, learning_rate);
    codec.set_params(&params)?;
    Ok(loss)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingHistory {
    pub step_losses: Vec<f64>,
    pub epoch_losses: Vec<f64>,
}

/// Epoch loop over shuffled batches. Every image in every step sees a fresh
/// perfect-CSI channel and noise at the training SNR.
pub fn train(
    codec: &mut JsccCodec,
    dataset: &[ImageSample],
    config: &TrainingConfig,
    env: &LinkEnvironment,
) -> Result<TrainingHistory> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let noise = snr_to_noise_variance(config.train_snr_db)?;
    let mut optimizer = CodecOptimizer::new(codec, config.adam);
    let mut history = TrainingHistory::default();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut step = 0usize;
    for epoch in 0..config.epochs {
        order.shuffle(&mut stream(config.seed, Purpose::Shuffle, epoch as u64));
        let lr = config.learning_rate_at(epoch);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<ImageSample> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            let links = chunk
                .iter()
                .enumerate()
                .map(|(pos, _)| {
                    let mut rng = stream(config.seed, Purpose::TrainLink, ((step as u64) << 20) | pos as u64);
                    draw_image_link(env, CsiFeedback::Perfect, Some(&noise), codec.symbol_count(), &mut rng)
                        .map(|l| l.realization)
                })
                .collect::<Result<Vec<_>>>()?;
            let loss = train_step(codec, &batch, &links, &mut optimizer, lr, step)?;
            history.step_losses.push(loss);
            epoch_loss += loss;
            batches += 1;
            step += 1;
        }
        history.epoch_losses.push(epoch_loss / batches as f64);
    }
    Ok(history)
}

/// PSNR of one image over one fixed link.
pub fn image_psnr(codec: &JsccCodec, s: &ImageSample, link: &LinkRealization) -> Result<f64> {
    Ok(psnr_from_mse(mse(s.pixels(), &codec.reconstruct(s, link)?)?))
}
