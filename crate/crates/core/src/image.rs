//! Image samples, PSNR and a synthetic dataset generator.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::error::{check_len, invalid, Error, Result};
use crate::rng::{stream, Purpose};

/// PSNR reported for (near-)perfect reconstructions.
pub const PSNR_CAP_DB: f64 = 60.0;

/// Peak pixel value of the 8-bit convention PSNR is reported in.
pub const PIXEL_MAX: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ImageDims {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageDims {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Mixture component of a synthetic image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageKind {
    Smooth,
    Texture,
}

/// A flattened `H×W×C` image (channel-last, row-major) with pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    source_id: u64,
    dims: ImageDims,
    pixels: Vec<f64>,
    kind: Option<ImageKind>,
}

impl ImageSample {
    pub fn new(source_id: u64, dims: ImageDims, pixels: Vec<f64>) -> Result<Self> {
        check_len(dims.len(), pixels.len())?;
        if dims.is_empty() {
            return Err(Error::Empty("image"));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("pixel values must lie in [0, 1]"));
        }
        Ok(Self {
            source_id,
            dims,
            pixels,
            kind: None,
        })
    }

    pub fn with_kind(mut self, kind: ImageKind) -> Self {
        self.kind = Some(kind);
        self
    }

    pub fn source_id(&self) -> u64 {
        self.source_id
    }

    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn kind(&self) -> Option<ImageKind> {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[(y * self.dims.width + x) * self.dims.channels + c]
    }

    /// Central `size×size` patch.
    pub fn center_crop(&self, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || height > self.dims.height || width > self.dims.width {
            return Err(invalid("crop does not fit inside the image"));
        }
        let y0 = (self.dims.height - height) / 2;
        let x0 = (self.dims.width - width) / 2;
        let dims = ImageDims::new(height, width, self.dims.channels);
        let mut pixels = Vec::with_capacity(dims.len());
        for y in 0..height {
            for x in 0..width {
                for c in 0..dims.channels {
                    pixels.push(self.at(y0 + y, x0 + x, c));
                }
            }
        }
        Ok(Self {
            source_id: self.source_id,
            dims,
            pixels,
            kind: self.kind,
        })
    }

    /// Anisotropic total variation summed over channels.
    pub fn total_variation(&self) -> f64 {
        let ImageDims {
            height,
            width,
            channels,
        } = self.dims;
        let mut tv = 0.0;
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    let v = self.at(y, x, c);
                    if x + 1 < width {
                        tv += (self.at(y, x + 1, c) - v).abs();
                    }
                    if y + 1 < height {
                        tv += (self.at(y + 1, x, c) - v).abs();
                    }
                }
            }
        }
        tv
    }
}

/// Mean squared error between two `[0, 1]` pixel vectors.
pub fn mse(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    check_len(reference.len(), estimate.len())?;
    if reference.is_empty() {
        return Err(Error::Empty("pixel vector"));
    }
    let sum: f64 = reference.iter().zip(estimate).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / reference.len() as f64)
}

/// `10·log10(MAX²/MSE)` on the 0..255 scale, capped at [`PSNR_CAP_DB`].
pub fn psnr_from_mse(mse_unit: f64) -> f64 {
    let mse_8bit = mse_unit * PIXEL_MAX * PIXEL_MAX;
    if mse_8bit <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (PIXEL_MAX * PIXEL_MAX / mse_8bit).log10()).min(PSNR_CAP_DB)
}

pub fn psnr(reference: &ImageSample, estimate: &[f64]) -> Result<f64> {
    Ok(psnr_from_mse(mse(reference.pixels(), estimate)?))
}

/// Deterministic mixture of smooth color gradients and noise textures.
///
/// `texture_fraction` is the probability that an image is a texture. Smooth
/// images are linear blends between two colors at most 0.5 apart per channel;
/// textures add uniform noise of amplitude 0.4–1.0 on top of such a blend.
pub fn synthesize_images(
    count: usize,
    dims: ImageDims,
    texture_fraction: f64,
    seed: u64,
) -> Result<Vec<ImageSample>> {
    if count == 0 {
        return Err(Error::Empty("synthetic dataset"));
    }
    if dims.is_empty() {
        return Err(Error::Empty("image"));
    }
    if !(0.0..=1.0).contains(&texture_fraction) {
        return Err(invalid("texture fraction must lie in [0, 1]"));
    }
    (0..count)
        .map(|i| {
            let mut rng = stream(seed, Purpose::Dataset, i as u64);
            let kind = if rng.random::<f64>() < texture_fraction {
                ImageKind::Texture
            } else {
                ImageKind::Smooth
            };
            let pixels = synth_pixels(dims, kind, &mut rng);
            ImageSample::new(i as u64, dims, pixels).map(|s| s.with_kind(kind))
        })
        .collect()
}

fn synth_pixels<R: Rng + ?Sized>(dims: ImageDims, kind: ImageKind, rng: &mut R) -> Vec<f64> {
    let c = dims.channels;
    let base: Vec<f64> = (0..c).map(|_| 0.25 + 0.5 * rng.random::<f64>()).collect();
    let delta: Vec<f64> = (0..c).map(|_| 0.5 * rng.random::<f64>() - 0.25).collect();
    let theta = core::f64::consts::TAU * rng.random::<f64>();
    let (dx, dy) = (theta.cos(), theta.sin());
    let amplitude = match kind {
        ImageKind::Smooth => 0.0,
        ImageKind::Texture => 0.4 + 0.6 * rng.random::<f64>(),
    };
    // Projection of the pixel grid onto the gradient direction, scaled to [-1, 1].
    let span = ((dims.width.max(2) - 1) as f64 * dx.abs() + (dims.height.max(2) - 1) as f64 * dy.abs()).max(1e-12);
    let cx = (dims.width as f64 - 1.0) / 2.0;
    let cy = (dims.height as f64 - 1.0) / 2.0;
    let mut pixels = Vec::with_capacity(dims.len());
    for y in 0..dims.height {
        for x in 0..dims.width {
            let t = 2.0 * ((x as f64 - cx) * dx + (y as f64 - cy) * dy) / span;
            for ch in 0..c {
                let smooth = base[ch] + delta[ch] * t;
                let noise = amplitude * (rng.random::<f64>() - 0.5);
                pixels.push((smooth + noise).clamp(0.0, 1.0));
            }
        }
    }
    pixels
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const DESK: ImageDims = ImageDims::new(8, 8, 3);

    #[test]
    fn psnr_contract() {
        let s = ImageSample::new(0, DESK, vec![0.5; 192]).unwrap();
        assert_eq!(psnr(&s, s.pixels()).unwrap(), PSNR_CAP_DB);
        let off: Vec<f64> = s.pixels().iter().map(|p| p + 1.0 / 255.0).collect();
        let expected = 10.0 * (255.0f64 * 255.0).log10();
        assert!((psnr(&s, &off).unwrap() - expected).abs() < 1e-9);
        assert!((expected - 48.130_803_608_679_1).abs() < 1e-9);
        assert!(psnr_from_mse(1.0).abs() < 1e-12);
        assert!(psnr(&s, &[0.0; 10]).is_err());
    }

    #[test]
    fn psnr_strictly_decreasing_below_cap() {
        let mut prev = f64::INFINITY;
        for k in 1..50 {
            let p = psnr_from_mse(k as f64 * 1e-3);
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn sample_validation() {
        assert!(ImageSample::new(0, DESK, vec![1.5; 192]).is_err());
        assert!(ImageSample::new(0, DESK, vec![0.5; 191]).is_err());
    }

    #[test]
    fn synthesis_is_deterministic_and_rejects_empty() {
        let a = synthesize_images(20, DESK, 0.5, 3).unwrap();
        let b = synthesize_images(20, DESK, 0.5, 3).unwrap();
        assert_eq!(a, b);
        assert!(synthesize_images(0, DESK, 0.5, 3).is_err());
        assert!(synthesize_images(2, DESK, 1.5, 3).is_err());
    }

    #[test]
    fn smooth_images_have_less_variation_than_textures() {
        let smooth = synthesize_images(200, DESK, 0.0, 11).unwrap();
        let texture = synthesize_images(200, DESK, 1.0, 12).unwrap();
        let max_smooth = smooth.iter().map(|s| s.total_variation()).fold(0.0, f64::max);
        let min_texture = texture.iter().map(|s| s.total_variation()).fold(f64::INFINITY, f64::min);
        assert!(max_smooth < min_texture, "{max_smooth} vs {min_texture}");
        assert!(smooth.iter().all(|s| s.kind() == Some(ImageKind::Smooth)));
        assert!(texture.iter().all(|s| s.kind() == Some(ImageKind::Texture)));
    }

    #[test]
    fn center_crop_takes_middle() {
        let dims = ImageDims::new(4, 4, 1);
        let pixels: Vec<f64> = (0..16).map(|v| v as f64 / 16.0).collect();
        let s = ImageSample::new(0, dims, pixels).unwrap();
        let c = s.center_crop(2, 2).unwrap();
        assert_eq!(c.pixels(), &[5.0 / 16.0, 6.0 / 16.0, 9.0 / 16.0, 10.0 / 16.0]);
    }
}
