//! Per-image physical link: channel draw, CSI feedback, precoding and noise.

use rand::Rng;

use crate::channel::{generate_channel, ClusterConfig, NoiseModel};
use crate::error::{invalid, Result};
use crate::precoding::{build_precoders, EffectiveLink, LinkRealization, PrecoderStrategy};
use crate::quantizer::{nmse, quantize_csi, CsiCodebook};

/// Everything about the physical layer except the SNR and the feedback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEnvironment {
    pub channel: ClusterConfig,
    pub streams: usize,
    pub strategy: PrecoderStrategy,
    pub equalize: bool,
    /// Build the receive combiner from the fed-back CSI instead of the
    /// receiver's own channel knowledge.
    pub combiner_from_feedback: bool,
}

impl LinkEnvironment {
    pub fn new(channel: ClusterConfig, streams: usize) -> Result<Self> {
        if streams == 0 || streams > channel.num_tx().min(channel.num_rx()) {
            return Err(invalid("stream count must be in 1..=min(Nt, Nr)"));
        }
        Ok(Self {
            channel,
            streams,
            strategy: PrecoderStrategy::Svd,
            equalize: true,
            combiner_from_feedback: false,
        })
    }

    /// 16×16 clustered channel with two streams.
    pub fn desk_default() -> Self {
        Self::new(ClusterConfig::mmwave(16, 16).expect("valid"), 2).expect("valid")
    }
}

/// CSI available at the transmitter.
#[derive(Debug, Clone, Copy)]
pub enum CsiFeedback<'a> {
    Perfect,
    Quantized(&'a CsiCodebook),
}

#[derive(Debug, Clone)]
pub struct ImageLink {
    pub realization: LinkRealization,
    /// NMSE of the fed-back CSI, `None` under perfect CSI.
    pub nmse: Option<f64>,
}

/// Draws one block-fading channel, applies feedback, builds precoders and
/// fixes the noise for `symbol_count` symbols. Randomness is consumed
/// identically whatever the feedback, so different bit depths see the same
/// channel and noise for the same stream.
pub fn draw_image_link<R: Rng + ?Sized>(
    env: &LinkEnvironment,
    feedback: CsiFeedback<'_>,
    noise: Option<&NoiseModel>,
    symbol_count: usize,
    rng: &mut R,
) -> Result<ImageLink> {
    let h = generate_channel(&env.channel, rng);
    let (h_tx, err) = match feedback {
        CsiFeedback::Perfect => (None, None),
        CsiFeedback::Quantized(codebook) => {
            let q = quantize_csi(&h, codebook).into_reconstructed();
            let e = nmse(&h, &q)?;
            (Some(q), Some(e))
        }
    };
    let tx_view = h_tx.as_ref().unwrap_or(&h);
    let rx_view = if env.combiner_from_feedback { tx_view } else { &h };
    let p = build_precoders(env.strategy, tx_view, rx_view, env.streams)?;
    let link = EffectiveLink::new(&h, &p, env.equalize)?;
    Ok(ImageLink {
        realization: link.realize(symbol_count, noise, rng),
        nmse: err,
    })
}
