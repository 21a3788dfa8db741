//! Fake-news style binary text classification: TF-IDF features feeding a
//! bidirectional GRU and transformer-encoder stack, with an optional
//! variational classification head and the training harness around it.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the 64-bit precision used by the training pipeline.

pub mod bayes;
pub mod ingest;
pub mod model;
pub mod numcore;
pub mod rng;
pub mod scalar;
pub mod synthetic;
pub mod textpipe;
pub mod train;

pub use scalar::Scalar;

pub type Tensor = numcore::Tensor2D<f64>;
pub type Tape = numcore::Tape<f64>;
pub type ParamSet = numcore::ParamSet<f64>;
pub type Parameter = numcore::Parameter<f64>;
pub type Model = model::Model<f64>;
pub type Tensor32 = numcore::Tensor2D<f32>;
pub type Model32 = model::Model<f32>;
