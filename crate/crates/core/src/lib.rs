//! Synthetic clean/noisy RAW image pairs for denoiser training.
//!
//! The pipeline samples a procedural [`scene`], renders it to linear RGB,
//! converts it to a Bayer mosaic ([`unprocess`]) and adds signal-dependent
//! noise ([`noise`]) whose parameters come from burst [`calibration`].
//! [`dataset`] runs the chain at scale with a checksummed manifest, and
//! [`diversity`] and [`metrics`] measure inputs and results.
//!
//! Everything random flows from [`Rng`] streams, so every output is a pure
//! function of a seed and a configuration.
//!
//! The guide in `book/` walks through each stage; its listings run as
//! doctests of this crate.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod dataset;
pub mod diversity;
pub mod error;
pub mod image;
pub mod metrics;
pub mod noise;
pub mod rawio;
pub mod rng;
pub mod scene;
pub mod unprocess;

pub use error::{Error, Result};
pub use image::{BayerImage, CfaPattern, Channel, RgbImage};
pub use rng::Rng;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/images.md")]
    mod images {}
    #[doc = include_str!("../../../book/src/scenes.md")]
    mod scenes {}
    #[doc = include_str!("../../../book/src/diversity.md")]
    mod diversity {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/unprocessing.md")]
    mod unprocessing {}
    #[doc = include_str!("../../../book/src/noise.md")]
    mod noise {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
