//! Data-driven scan path synthesis.
//!
//! A [`model::ScanPathModel`] is learned from human gaze recordings by
//! clustering them hierarchically with K-Means, matching clusters across
//! recordings and fitting a PCA shape model to the shifts of each matched
//! cluster group. [`generator`] walks such a model top-down to produce new
//! scan paths. [`features`], [`augment`] and [`eval`] provide the
//! featurization and classification harness used to judge generated data.

pub mod augment;
pub mod cli;
pub mod clustering;
pub mod error;
pub mod eval;
pub mod features;
pub mod gaze;
pub mod generator;
pub mod model;
pub mod render;
pub mod rng;
pub mod shape;
pub mod synthetic;

pub use error::{Error, Result};
pub use features::{FeatureSpec, FeatureVector};
pub use gaze::{ClassKey, Dataset, GazePoint, GazeRecording};
pub use generator::{generate_batch, generate_scanpath, GeneratorConfig};
pub use model::{generate_model, load_model, save_model, BuildConfig, ModelNode, ScanPathModel, UpdateRule};
pub use shape::PrincipalComponents;
