//! Geometry-aware analysis of cast and attached shadows.
//!
//! A directional light `l` (pointing from the light into the scene) and
//! per-pixel surface normals `n` determine where a surface can shade itself:
//! the orientation-only *partial attached map* marks `n . l > 0`. This crate
//! implements that map and everything needed to reason with it end to end:
//!
//! - [`raster`]: grids, masks, tri-class labels, logits, normals, and the
//!   unit light direction, plus WSRD-style full-mask derivation;
//! - [`io`] / [`dataset`]: bit-exact file formats and the on-disk layout;
//! - [`geometry`]: depth-to-normals and the hard/soft partial maps;
//! - [`light`]: the centroid+depth heuristic and a deterministic sphere
//!   search inverting the partial map to recover the light;
//! - [`losses`]: the training objectives with finite-difference-verified
//!   analytic gradients;
//! - [`oracle`]: an analytic sphere renderer producing exact ground truth;
//! - [`metrics`]: BER/F1 and the full/cast/attached evaluation protocol;
//! - [`pipeline`]: a baseline detector and the closed-loop refinement that
//!   alternates detection with light estimation.

pub mod dataset;
pub mod error;
pub mod geometry;
pub mod io;
pub mod light;
pub mod losses;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod raster;

pub use error::{Error, Result};
pub use raster::{BinaryMask, LightDirection, LogitField, NormalMap, RasterGrid, ShadowClass, TriClassMask};
