//! Unsupervised domain adaptation on pre-extracted feature matrices by
//! treating closed-form subspace alignment as an auxiliary task.
//!
//! A linear softmax classifier (the primary task) and a `d×d` alignment
//! matrix `Φ` between target and source subspaces (the auxiliary task) are
//! trained in alternation: the classifier sees target features re-projected
//! through `Φ`, and `Φ` is tuned on held-out target rows with the classifier
//! frozen, trading alignment cost against prediction entropy and class
//! balance.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

pub mod data;
pub mod error;
pub mod linalg;
pub mod losses;
pub mod model;
pub mod scalar;
pub mod subspace;
pub mod trainer;

pub use error::{Error, Result};
pub use losses::{LossComponent, LossWeights};
pub use scalar::Scalar;
pub use trainer::{Mode, TrainConfig};

pub type Subspace = subspace::Subspace<f64>;
pub type AlignmentMap = subspace::AlignmentMap<f64>;
pub type SoftmaxClassifier = model::SoftmaxClassifier<f64>;
pub type FeatureDataset = data::FeatureDataset<f64>;
pub type RunReport = trainer::RunReport<f64>;
pub type FittedModel = trainer::FittedModel<f64>;
pub type LossValue = losses::LossValue<f64>;

pub type Subspace32 = subspace::Subspace<f32>;
pub type AlignmentMap32 = subspace::AlignmentMap<f32>;
pub type SoftmaxClassifier32 = model::SoftmaxClassifier<f32>;
pub type FeatureDataset32 = data::FeatureDataset<f32>;
