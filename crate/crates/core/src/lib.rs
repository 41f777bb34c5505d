//! Two-keypoint oriented box detection targets.
//!
//! Boxes are described by their center, the midpoint of one short edge (the
//! vertex), the long side `h` and the short side `w`. This crate encodes such
//! boxes into dense heatmap and regression planes, decodes planes back into
//! boxes, and evaluates detections with rotated IoU.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar for the common case.

pub mod data_io;
pub mod decoder;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod losses;
pub mod plane;
pub mod scalar;
pub mod simulation;
pub mod target_codec;

pub use decoder::{decode, extract_peaks, merge_tiles, rotated_nms, unletterbox, DecodeConfig, DecodeMode, Provenance};
pub use error::{Error, Result};
pub use evaluation::{average_precision, evaluate, match_detections, ApMethod, EvalConfig, EvalReport, MatchLabel};
pub use geometry::{obb_to_quad, quad_to_obb, relative_direction, rotated_iou};
pub use scalar::Real;
pub use target_codec::{encode_scene, EncoderConfig, ExtentMode, HeatmapKind};

pub type Point = geometry::Point2<f64>;
pub type Quad = geometry::RotatedQuad<f64>;
pub type Obb = geometry::ObbSpec<f64>;
pub type Maps = target_codec::TargetMaps<f64>;
pub type Maps32 = target_codec::TargetMaps<f32>;
pub type Det = decoder::Detection<f64>;
pub type Ann = target_codec::Annotation<f64>;
pub type SceneF64 = target_codec::Scene<f64>;
