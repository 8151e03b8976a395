//! Linear transmit precoding and receive combining.
//!
//! The transmitter builds `V` from the CSI it recovered from feedback, the
//! receiver builds `U` from its own channel knowledge, and a block `x` of `d`
//! symbols is received as `x̂ = Uᴴ(H·V·x + n)`. Every stream carries unit
//! average symbol power.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Zero;
use rand::Rng;

use crate::channel::{draw_noise, ChannelMatrix, NoiseModel};
use crate::error::{check_len, invalid, Error, Result};
use crate::linalg::{CMatrix, C64};

/// Relative singular-value floor below which a stream is considered unusable.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PrecoderStrategy {
    /// `V` and `U` are the dominant right/left singular vectors.
    #[default]
    Svd,
    /// SVD transmit precoder with a zero-forcing receive combiner
    /// `U = HV(VᴴHᴴHV)⁻¹`, which nulls inter-stream leakage exactly.
    /// Its columns are orthogonal-but-not-unit-norm under perfect CSI.
    ZeroForcing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderPair {
    tx_precoder: CMatrix,
    rx_combiner: CMatrix,
    /// `diag(Uᴴ·Ĥ·V)`, the per-stream gain the receiver divides out.
    stream_gains: Vec<C64>,
    num_streams: usize,
}

impl PrecoderPair {
    pub fn tx_precoder(&self) -> &CMatrix {
        &self.tx_precoder
    }

    pub fn rx_combiner(&self) -> &CMatrix {
        &self.rx_combiner
    }

    pub fn stream_gains(&self) -> &[C64] {
        &self.stream_gains
    }

    pub fn num_streams(&self) -> usize {
        self.num_streams
    }

    /// `Uᴴ·H·V` for the channel actually traversed.
    pub fn effective_channel(&self, h: &ChannelMatrix) -> CMatrix {
        self.rx_combiner
            .adjoint()
            .matmul(&h.entries().matmul(&self.tx_precoder))
    }
}

fn usable_streams(h: &ChannelMatrix) -> usize {
    let sigma = h.sigma();
    let top = sigma.first().copied().unwrap_or(0.0);
    sigma.iter().filter(|&&s| s > top * RANK_TOL && s > 0.0).count()
}

fn check_streams(h: &ChannelMatrix, d: usize) -> Result<()> {
    let usable = usable_streams(h);
    if d > usable {
        return Err(Error::InsufficientStreams {
            requested: d,
            usable,
        });
    }
    Ok(())
}

/// SVD precoders: `V` from `channel_for_tx` (the CSI recovered at the
/// transmitter), `U` from `channel_for_rx` (the receiver's channel).
pub fn svd_precoders(
    channel_for_tx: &ChannelMatrix,
    channel_for_rx: &ChannelMatrix,
    d: usize,
) -> Result<PrecoderPair> {
    build_precoders(PrecoderStrategy::Svd, channel_for_tx, channel_for_rx, d)
}

pub fn build_precoders(
    strategy: PrecoderStrategy,
    channel_for_tx: &ChannelMatrix,
    channel_for_rx: &ChannelMatrix,
    d: usize,
) -> Result<PrecoderPair> {
    if d == 0 {
        return Err(invalid("at least one stream is required"));
    }
    if channel_for_tx.num_tx() != channel_for_rx.num_tx()
        || channel_for_tx.num_rx() != channel_for_rx.num_rx()
    {
        return Err(invalid("transmit and receive channel views differ in shape"));
    }
    let max = channel_for_tx.num_tx().min(channel_for_tx.num_rx());
    if d > max {
        return Err(Error::InsufficientStreams {
            requested: d,
            usable: max,
        });
    }
    check_streams(channel_for_tx, d)?;
    check_streams(channel_for_rx, d)?;

    let v = channel_for_tx.v().leading_columns(d);
    let u = match strategy {
        PrecoderStrategy::Svd => channel_for_rx.u().leading_columns(d),
        PrecoderStrategy::ZeroForcing => {
            let hv = channel_for_rx.entries().matmul(&v);
            let gram = hv.adjoint().matmul(&hv);
            let inv = gram.inverse().ok_or(Error::InsufficientStreams {
                requested: d,
                usable: 0,
            })?;
            hv.matmul(&inv)
        }
    };
    let est = u
        .adjoint()
        .matmul(&channel_for_tx.entries().matmul(&v));
    let stream_gains = (0..d).map(|i| est[(i, i)]).collect();
    Ok(PrecoderPair {
        tx_precoder: v,
        rx_combiner: u,
        stream_gains,
        num_streams: d,
    })
}

/// `x̂ = Uᴴ(H·V·x + n)`; `noise = None` is a noiseless link.
pub fn transmit_block<R: Rng + ?Sized>(
    x: &[C64],
    h: &ChannelMatrix,
    p: &PrecoderPair,
    noise: Option<&NoiseModel>,
    rng: &mut R,
) -> Result<Vec<C64>> {
    check_len(p.num_streams, x.len())?;
    check_len(p.tx_precoder.rows(), h.num_tx())?;
    let mut y = h.entries().mul_vec(&p.tx_precoder.mul_vec(x));
    if let Some(model) = noise {
        for (yi, ni) in y.iter_mut().zip(draw_noise(model, h.num_rx(), rng)) {
            *yi += ni;
        }
    }
    Ok(p.rx_combiner.adjoint_mul_vec(&y))
}

/// The symbol-level view of one precoded channel use: `x̂ = M·x + w`,
/// where `M = D⁻¹·Uᴴ·H·V` and `w = D⁻¹·Uᴴ·n`, `D` being the equalizer
/// (identity when equalization is off).
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveLink {
    map: CMatrix,
    combiner_eq: CMatrix,
    num_rx: usize,
}

impl EffectiveLink {
    pub fn new(h: &ChannelMatrix, p: &PrecoderPair, equalize: bool) -> Result<Self> {
        let d = p.num_streams;
        let mut eq = vec![C64::new(1.0, 0.0); d];
        if equalize {
            for (e, g) in eq.iter_mut().zip(&p.stream_gains) {
                if g.is_zero() || !g.re.is_finite() || !g.im.is_finite() {
                    return Err(Error::InsufficientStreams {
                        requested: d,
                        usable: 0,
                    });
                }
                *e = g.inv();
            }
        }
        let uh = p.rx_combiner.adjoint();
        let combiner_eq = CMatrix::from_fn(d, uh.cols(), |i, j| uh[(i, j)] * eq[i]);
        let map = combiner_eq.matmul(&h.entries().matmul(&p.tx_precoder));
        Ok(Self {
            map,
            combiner_eq,
            num_rx: h.num_rx(),
        })
    }

    pub fn num_streams(&self) -> usize {
        self.map.rows()
    }

    pub fn map(&self) -> &CMatrix {
        &self.map
    }

    /// Fixes the noise for a `symbol_count`-symbol transmission.
    pub fn realize<R: Rng + ?Sized>(
        &self,
        symbol_count: usize,
        noise: Option<&NoiseModel>,
        rng: &mut R,
    ) -> LinkRealization {
        let d = self.num_streams();
        let blocks = symbol_count.div_ceil(d);
        let mut w = Vec::with_capacity(blocks * d);
        for _ in 0..blocks {
            match noise {
                Some(model) => {
                    let n = draw_noise(model, self.num_rx, rng);
                    w.extend(self.combiner_eq.mul_vec(&n));
                }
                None => w.extend(core::iter::repeat_n(C64::zero(), d)),
            }
        }
        LinkRealization {
            map: self.map.clone(),
            noise: w,
            symbol_count,
        }
    }
}

/// A link with its noise drawn: a fixed affine map on `symbol_count`
/// symbols. Differentiable in the transmitted symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkRealization {
    map: CMatrix,
    noise: Vec<C64>,
    symbol_count: usize,
}

impl LinkRealization {
    pub fn symbol_count(&self) -> usize {
        self.symbol_count
    }

    pub fn map(&self) -> &CMatrix {
        &self.map
    }

    /// Splits `z` into `d`-symbol blocks (zero-padding the tail), sends each
    /// block and strips the padding.
    pub fn apply(&self, z: &[C64]) -> Result<Vec<C64>> {
        check_len(self.symbol_count, z.len())?;
        let d = self.map.rows();
        let mut out = Vec::with_capacity(z.len());
        let mut block = vec![C64::zero(); d];
        for (b, chunk) in z.chunks(d).enumerate() {
            block.iter_mut().for_each(|x| *x = C64::zero());
            block[..chunk.len()].copy_from_slice(chunk);
            let y = self.map.mul_vec(&block);
            let w = &self.noise[b * d..(b + 1) * d];
            out.extend(y.iter().zip(w).take(chunk.len()).map(|(a, n)| a + n));
        }
        Ok(out)
    }

    /// Gradient of a real loss w.r.t. the sent symbols given its gradient
    /// w.r.t. the received ones (both as `∂L/∂Re + j·∂L/∂Im`): `Mᴴ·g` per block.
    pub fn backward(&self, grad_out: &[C64]) -> Result<Vec<C64>> {
        check_len(self.symbol_count, grad_out.len())?;
        let d = self.map.rows();
        let mut out = Vec::with_capacity(grad_out.len());
        let mut block = vec![C64::zero(); d];
        for chunk in grad_out.chunks(d) {
            block.iter_mut().for_each(|x| *x = C64::zero());
            block[..chunk.len()].copy_from_slice(chunk);
            let g = self.map.adjoint_mul_vec(&block);
            out.extend_from_slice(&g[..chunk.len()]);
        }
        Ok(out)
    }
}

/// Sends `K` symbols over one block-fading realization, `⌈K/d⌉` channel uses.
pub fn transmit_symbols<R: Rng + ?Sized>(
    z: &[C64],
    h: &ChannelMatrix,
    p: &PrecoderPair,
    noise: Option<&NoiseModel>,
    equalize: bool,
    rng: &mut R,
) -> Result<Vec<C64>> {
    EffectiveLink::new(h, p, equalize)?
        .realize(z.len(), noise, rng)
        .apply(z)
}
