//! CSI-based wireless sensing: neural positioning, channel charting and
//! closed-set RF-fingerprint device classification, plus a synthetic
//! multi-ORU uplink CSI generator.
//!
//! The DSP kernels ([`dsp`]) and the network engine ([`nn`]) are generic over
//! [`Scalar`] (`f32`/`f64`). The aliases below fix the scalar to `f64`, which
//! is what the feature extractors and pipelines use.

pub mod charting;
pub mod classify;
pub mod dsp;
pub mod error;
pub mod features;
pub mod ingest;
pub mod model;
pub mod nn;
pub mod positioning;
pub mod rng;
pub mod scalar;
pub mod synthgen;

pub use error::{Error, Result};
pub use model::{CsiSample, CsiTensor, Dataset, Point, ScenarioMeta};
pub use scalar::Scalar;

pub type Complex = num_complex::Complex64;
pub type ComplexMatrix = dsp::ComplexMatrix<f64>;
pub type Tensor = nn::Tensor<f64>;
pub type Network = nn::Network<f64>;
