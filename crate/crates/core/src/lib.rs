//! Repurchase-behaviour prediction from raw transaction logs.
//!
//! The pipeline runs ingest -> label -> featurize -> balance -> tune ->
//! train -> integrate -> evaluate. Every stage is a plain function over
//! immutable inputs and all randomness flows from explicit seeds.

pub mod cart;
pub mod dataio;
pub mod ensemble;
pub mod features;
pub mod forest;
pub mod gbdt;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod resample;
pub mod synth;
pub mod tpe;

pub mod util;
