//! Lloyd-Max scalar quantization of CSI matrices.
//!
//! Real and imaginary parts of every channel coefficient are quantized
//! independently with one shared codebook of `2^b` levels.

use alloc::string::String;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::channel::ChannelMatrix;
use crate::error::{invalid, Error, Result};
use crate::linalg::{CMatrix, C64};

pub const MAX_BITS: u8 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct CsiCodebook {
    bits: u8,
    levels: Vec<f64>,
    thresholds: Vec<f64>,
    fitted_on: String,
}

impl CsiCodebook {
    /// Assembles a codebook from stored parts, checking its shape.
    pub fn from_parts(
        bits: u8,
        levels: Vec<f64>,
        thresholds: Vec<f64>,
        fitted_on: String,
    ) -> Result<Self> {
        if !(1..=MAX_BITS).contains(&bits) {
            return Err(invalid("bit depth must be in 1..=8"));
        }
        let n = 1usize << bits;
        if levels.len() != n || thresholds.len() != n - 1 {
            return Err(invalid("level/threshold count does not match bit depth"));
        }
        if levels.iter().chain(&thresholds).any(|x| !x.is_finite()) {
            return Err(invalid("non-finite codebook entry"));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("levels must be strictly ascending"));
        }
        if thresholds
            .iter()
            .enumerate()
            .any(|(k, &t)| !(levels[k] <= t && t <= levels[k + 1]))
        {
            return Err(invalid("thresholds must interleave levels"));
        }
        Ok(Self {
            bits,
            levels,
            thresholds,
            fitted_on,
        })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn fitted_on(&self) -> &str {
        &self.fitted_on
    }

    pub fn index_of(&self, x: f64) -> u16 {
        self.thresholds.partition_point(|&t| t < x) as u16
    }

    pub fn level(&self, index: u16) -> f64 {
        self.levels[index as usize]
    }

    pub fn quantize(&self, x: f64) -> f64 {
        self.level(self.index_of(x))
    }

    /// Mean squared quantization error over `samples`.
    pub fn mse(&self, samples: &[f64]) -> f64 {
        let total: f64 = samples.iter().map(|&x| (x - self.quantize(x)).powi(2)).sum();
        total / samples.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LloydMaxOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for LloydMaxOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LloydMaxFit {
    pub codebook: CsiCodebook,
    /// MSE of the uniform starting quantizer followed by the MSE after each
    /// iteration.
    pub mse_history: Vec<f64>,
    pub converged: bool,
}

impl LloydMaxFit {
    pub fn initial_mse(&self) -> f64 {
        self.mse_history[0]
    }

    pub fn final_mse(&self) -> f64 {
        *self.mse_history.last().unwrap()
    }
}

/// Uniform quantizer with `2^bits` cells covering `center ± 4·std`.
pub fn uniform_codebook(center: f64, std: f64, bits: u8) -> Result<CsiCodebook> {
    if !(1..=MAX_BITS).contains(&bits) {
        return Err(invalid("bit depth must be in 1..=8"));
    }
    if !(std > 0.0 && std.is_finite()) {
        return Err(invalid("uniform quantizer needs a positive spread"));
    }
    let n = 1usize << bits;
    let lo = center - 4.0 * std;
    let step = 8.0 * std / n as f64;
    let levels: Vec<f64> = (0..n).map(|k| lo + (k as f64 + 0.5) * step).collect();
    let thresholds = midpoints(&levels);
    CsiCodebook::from_parts(bits, levels, thresholds, String::from("uniform ±4σ"))
}

fn midpoints(levels: &[f64]) -> Vec<f64> {
    levels.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
}

/// Cell `k` of a sorted sample is `sorted[bounds[k]..bounds[k + 1]]`.
fn cell_bounds(sorted: &[f64], thresholds: &[f64]) -> Vec<usize> {
    let mut bounds = Vec::with_capacity(thresholds.len() + 2);
    bounds.push(0);
    for &t in thresholds {
        bounds.push(sorted.partition_point(|&s| s <= t));
    }
    bounds.push(sorted.len());
    bounds
}

fn partition_mse(sorted: &[f64], bounds: &[usize], levels: &[f64]) -> f64 {
    let mut total = 0.0;
    for (k, &c) in levels.iter().enumerate() {
        total += sorted[bounds[k]..bounds[k + 1]]
            .iter()
            .map(|&x| (x - c) * (x - c))
            .sum::<f64>();
    }
    total / sorted.len() as f64
}

/// Fits a Lloyd-Max codebook by alternating centroid and nearest-neighbor
/// updates, starting from the uniform ±4σ quantizer.
///
/// An empty cell has its level moved onto the sample that is currently
/// farthest from its own level.
pub fn fit_lloyd_max(samples: &[f64], bits: u8, options: LloydMaxOptions) -> Result<LloydMaxFit> {
    if !(1..=MAX_BITS).contains(&bits) {
        return Err(invalid("bit depth must be in 1..=8"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(invalid("samples must be finite"));
    }
    let n_levels = 1usize << bits;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let distinct = 1 + sorted.windows(2).filter(|w| w[0] != w[1]).count();
    if sorted.is_empty() || distinct < n_levels {
        return Err(Error::DegenerateSamples {
            distinct: if sorted.is_empty() { 0 } else { distinct },
            required: n_levels,
        });
    }

    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let std = (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let start = uniform_codebook(mean, std, bits)?;
    let mut levels = start.levels;
    let mut thresholds = start.thresholds;
    let mut bounds = cell_bounds(&sorted, &thresholds);
    let mut mse = partition_mse(&sorted, &bounds, &levels);
    let mut history = alloc::vec![mse];
    let mut converged = false;

    for _ in 0..options.max_iters {
        // Centroid condition.
        let mut empty = Vec::new();
        for (k, level) in levels.iter_mut().enumerate() {
            let cell = &sorted[bounds[k]..bounds[k + 1]];
            if cell.is_empty() {
                empty.push(k);
            } else {
                *level = cell.iter().sum::<f64>() / cell.len() as f64;
            }
        }
        for k in empty {
            reseed_empty_level(&sorted, &bounds, &mut levels, k);
        }
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        while levels.len() < n_levels {
            // Duplicate levels after re-seeding: split the widest gap.
            let (gap, _) = levels
                .windows(2)
                .enumerate()
                .map(|(i, w)| (i, w[1] - w[0]))
                .fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a });
            let mid = 0.5 * (levels[gap] + levels[gap + 1]);
            levels.insert(gap + 1, mid);
        }

        // Nearest-neighbor condition.
        thresholds = midpoints(&levels);
        bounds = cell_bounds(&sorted, &thresholds);
        let next = partition_mse(&sorted, &bounds, &levels);
        history.push(next);
        let rel = if mse > 0.0 { (mse - next) / mse } else { 0.0 };
        mse = next;
        if mse == 0.0 || rel.abs() < options.tol {
            converged = true;
            break;
        }
    }

    let fitted_on = alloc::format!("{} samples, mean {:.6e}, std {:.6e}", sorted.len(), mean, std);
    let codebook = CsiCodebook::from_parts(bits, levels, thresholds, fitted_on)?;
    Ok(LloydMaxFit {
        codebook,
        mse_history: history,
        converged,
    })
}

fn reseed_empty_level(sorted: &[f64], bounds: &[usize], levels: &mut [f64], empty: usize) {
    let mut best = (f64::MIN, levels[empty]);
    for (k, &c) in levels.iter().enumerate() {
        let (lo, hi) = (bounds[k], bounds[k + 1]);
        if lo == hi {
            continue;
        }
        // Within a sorted cell the farthest sample is an endpoint.
        for &x in [sorted[lo], sorted[hi - 1]].iter() {
            let dist = (x - c).abs();
            if dist > best.0 {
                best = (dist, x);
            }
        }
    }
    levels[empty] = best.1;
}

/// Feedback payload for one channel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedCsi {
    rows: usize,
    cols: usize,
    bits: u8,
    /// Row-major, `[re, im]` interleaved per coefficient.
    indices: Vec<u16>,
    reconstructed: ChannelMatrix,
}

impl QuantizedCsi {
    pub fn indices(&self) -> &[u16] {
        &self.indices
    }

    pub fn reconstructed(&self) -> &ChannelMatrix {
        &self.reconstructed
    }

    pub fn into_reconstructed(self) -> ChannelMatrix {
        self.reconstructed
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn payload_bits(&self) -> usize {
        payload_bits(self.rows, self.cols, self.bits)
    }
}

/// `2·Nr·Nt·b` feedback bits.
pub fn payload_bits(rows: usize, cols: usize, bits: u8) -> usize {
    2 * rows * cols * bits as usize
}

pub fn quantize_csi(h: &ChannelMatrix, codebook: &CsiCodebook) -> QuantizedCsi {
    let entries = h.entries();
    let indices: Vec<u16> = entries
        .as_slice()
        .iter()
        .flat_map(|z| [codebook.index_of(z.re), codebook.index_of(z.im)])
        .collect();
    let reconstructed = dequantize_csi(entries.rows(), entries.cols(), &indices, codebook)
        .expect("index count matches by construction");
    QuantizedCsi {
        rows: entries.rows(),
        cols: entries.cols(),
        bits: codebook.bits,
        indices,
        reconstructed,
    }
}

pub fn dequantize_csi(
    rows: usize,
    cols: usize,
    indices: &[u16],
    codebook: &CsiCodebook,
) -> Result<ChannelMatrix> {
    crate::error::check_len(2 * rows * cols, indices.len())?;
    if indices.iter().any(|&i| i as usize >= codebook.levels.len()) {
        return Err(invalid("quantization index out of range"));
    }
    let data = indices
        .chunks_exact(2)
        .map(|p| C64::new(codebook.level(p[0]), codebook.level(p[1])))
        .collect();
    let entries = CMatrix::from_row_major(rows, cols, data).expect("length checked");
    Ok(ChannelMatrix::from_entries(entries))
}

/// `‖H − Ĥ‖²_F / ‖H‖²_F` for one realization.
pub fn nmse(h: &ChannelMatrix, h_hat: &ChannelMatrix) -> Result<f64> {
    nmse_entries(h.entries(), h_hat.entries())
}

pub fn nmse_entries(h: &CMatrix, h_hat: &CMatrix) -> Result<f64> {
    if h.rows() != h_hat.rows() || h.cols() != h_hat.cols() {
        return Err(Error::DimensionMismatch {
            expected: h.rows() * h.cols(),
            found: h_hat.rows() * h_hat.cols(),
        });
    }
    let denom = h.frobenius_norm_sqr();
    if denom == 0.0 {
        return Err(Error::ZeroChannel);
    }
    Ok(h.sub(h_hat).frobenius_norm_sqr() / denom)
}

/// Pools the real and imaginary parts of every coefficient.
pub fn pooled_parts<'a>(matrices: impl IntoIterator<Item = &'a CMatrix>) -> Vec<f64> {
    matrices
        .into_iter()
        .flat_map(|m| m.as_slice().iter().flat_map(|z| [z.re, z.im]))
        .collect()
}
