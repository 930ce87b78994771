//! Online deep learning with autoencoder backbones.
//!
//! A stream of `(x, y)` pairs is consumed one example at a time. Each model
//! first predicts `ŷ` from `x`, then updates on the revealed label. Two fusion
//! strategies sit on top of a shared encoder/decoder:
//!
//! * [`hedge::HedgeModel`] trains a classifier per hidden layer and mixes
//!   their outputs with hedge weights;
//! * [`attention::AttentionModel`] mixes the hidden layers themselves with a
//!   learned attention and classifies the mixture.
//!
//! Both balance reconstruction against prediction with an adaptive trade-off
//! ([`balance`]) and can be trained on corrupted inputs ([`denoise`]).

pub mod attention;
pub mod autoencoder;
pub mod balance;
pub mod baseline;
pub mod checkpoint;
pub mod denoise;
pub mod error;
pub mod evaluate;
pub mod hedge;
pub mod model;
pub mod numerics;
pub mod optim;
pub mod params;
pub mod settings;
pub mod stream;

pub use autoencoder::ModelDims;
pub use balance::TradeoffState;
pub use denoise::CorruptionPolicy;
pub use error::{Error, Result};
pub use evaluate::{ConfusionMatrix, MetricsReport, PrequentialEvaluator};
pub use model::{build_model, Model, OnlineClassifier, StepRecord, Variant};
pub use numerics::{Activation, Matrix, Rng, Vector};
pub use optim::OptimizerKind;
pub use params::ParamSet;
pub use settings::ModelSettings;
pub use stream::{Example, StreamSpec};
