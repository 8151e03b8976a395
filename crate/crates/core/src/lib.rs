//! Link-level simulation of MIMO deep joint source-channel coding with
//! quality-adaptive CSI feedback.
//!
//! The crate is `no_std` (with `alloc`); file formats, the CLI and parallel
//! sweeps live in the companion `mimo-jscc` crate.

#![no_std]

extern crate alloc;

pub mod channel;
pub mod codec;
pub mod error;
pub mod evaluator;
pub mod feedback;
pub mod image;
pub mod linalg;
pub mod link;
pub mod nn;
pub mod precoding;
pub mod quantizer;
pub mod rng;

pub use channel::{generate_channel, ChannelMatrix, ClusterConfig, NoiseModel};
pub use codec::{CodecSpec, JsccCodec, TrainingConfig};
pub use error::{Error, Result};
pub use evaluator::{Evaluator, LabeledSet, Predictor, QualityPrediction};
pub use feedback::{AllocationPlan, CodebookSet, DegradationTable, OutageSpec};
pub use image::{ImageDims, ImageSample};
pub use linalg::{CMatrix, C64};
pub use link::LinkEnvironment;
pub use precoding::{PrecoderPair, PrecoderStrategy};
pub use quantizer::CsiCodebook;
