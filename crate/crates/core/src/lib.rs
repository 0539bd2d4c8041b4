//! Quality enhancement toolkit for HEVC low-delay compressed video.
//!
//! The crate models the low-delay coding structure (one intra frame followed
//! by inter frames in repeating groups), enhances clips through pluggable
//! [`enhance::Enhancer`]s, fuses differently-enhanced variants with a
//! context-aware plan, ensembles over the eight dihedral transforms, and
//! measures results with PSNR and restoration losses.
//!
//! Module map:
//! - [`frame`], [`dihedral`]: sample grids, sequences and spatial symmetries
//! - [`vio`]: YUV4MPEG2 / raw planar streams and report output
//! - [`codec`]: GOP classification, segmentation, degradation simulator,
//!   external encoder bridge
//! - [`metrics`]: PSNR, Charbonnier, total variation, temporal gradient
//! - [`fusion`]: average-frame motion heuristic and fusion plans
//! - [`ensemble`]: test-time augmentation
//! - [`enhance`]: enhancers, variant runs, trimmed-window analysis

pub mod codec;
pub mod dihedral;
pub mod enhance;
pub mod ensemble;
pub mod error;
pub mod frame;
pub mod fusion;
pub mod metrics;
pub mod numeric;
pub mod process;
pub mod vio;

pub use dihedral::{apply_dihedral, inverse_dihedral, DihedralElement};
pub use error::{Error, Result};
pub use frame::{
    frame_linear_combine, ChromaLayout, Frame, Plane, Rational, SampleScale, VideoSequence,
};
