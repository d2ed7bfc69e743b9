//! Infrared-visible video registration from the vertices of foreground
//! polygons.
//!
//! Each frame pair is segmented by a running-average background model, blobs
//! are traced and simplified by discrete curve evolution, convex vertices are
//! matched polygon by polygon, matches accumulate in a temporal buffer, and a
//! RANSAC affine fit is adopted whenever it improves the foreground overlap.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bgsub;
pub mod config;
pub mod contour;
pub mod dce;
pub mod descriptor;
pub mod error;
pub mod eval;
pub mod imaging;
pub mod io;
pub mod matching;
pub mod pipeline;
pub mod synth;
pub mod transform;

pub use config::{FrameRange, InputSource, PipelineConfig, RegistrationConfig};
pub use error::{Error, Result};
pub use eval::{alignment_error, GroundTruthSet};
pub use imaging::{AffineTransform, BinaryMask, GrayFrame, Point2};
pub use pipeline::{run_pipeline, GlobalMatcher, PerPolygonMatcher, PolygonMatcher, Registrar};
pub use synth::{generate_sequence, SceneParams, SceneSpec};
