//! Repetition estimation in video.
//!
//! Optical flow is decomposed into six first-order differential motion maps,
//! each pixel's map values are analysed over time with a dense Morlet
//! continuous wavelet transform, the per-channel power is fused and
//! mean-thresholded into a foreground mask, and the median scale under the
//! mask yields an instantaneous frequency that integrates to a count.
//!
//! Numeric types are generic over [`Real`]; the aliases below pin the common
//! instantiations.

pub mod diffgeo;
pub mod error;
pub mod eval;
pub mod flow;
pub mod io;
pub mod pipeline;
pub mod scalar;
pub mod synth;
pub mod types;
pub mod wavelet;

pub use error::{Error, Result};
pub use eval::{Estimator, EvalReport};
pub use flow::HSParams;
pub use io::{Manifest, ManifestEntry, VideoSource};
pub use pipeline::{PipelineConfig, VideoInput};
pub use scalar::Real;
pub use synth::{SynthKind, SynthSpec, TaxonomyCase};
pub use types::{
    validate_config, Channel, CountResult, CycleAnnotation, FlowField, Grid, Image, MotionMaps,
    PowerMap, ScaleMap, Scalogram, SegMask, WaveletConfig,
};

pub type Grid32 = Grid<f32>;
pub type Grid64 = Grid<f64>;
pub type FlowField32 = FlowField<f32>;
pub type FlowField64 = FlowField<f64>;
pub type MotionMaps32 = MotionMaps<f32>;
pub type MotionMaps64 = MotionMaps<f64>;
pub type Scalogram32 = Scalogram<f32>;
pub type Scalogram64 = Scalogram<f64>;
