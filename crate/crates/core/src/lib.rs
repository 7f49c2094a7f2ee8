//! Weak-supervision pipeline for local-news detection.
//!
//! Numeric code that depends on a scalar type (affinity shares, the n-gram
//! model, evaluation metrics) is generic over [`scalar::Scalar`]; the aliases
//! below fix it to `f64` or `f32`.

pub mod affinity;
pub mod augment;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod synth;
pub mod text;
pub mod weaklabel;

pub use corpus::{Article, ClickRecord, Label, LabeledExample, RuleTag, Segment};
pub use scalar::Scalar;

pub type AffinityParams = affinity::AffinityParams<f64>;
pub type CityDistribution = affinity::CityDistribution<f64>;
pub type GapRatioResult = affinity::GapRatioResult<f64>;
pub type PublisherAffinity = affinity::PublisherAffinity<f64>;
pub type LinearModel = model::NgramLinearModel<f64>;
pub type LinearModelF32 = model::NgramLinearModel<f32>;
pub type EvalReport = eval::EvalReport<f64>;
pub type SliceMetrics = eval::SliceMetrics<f64>;
pub type DeltaTable = eval::DeltaTable<f64>;
