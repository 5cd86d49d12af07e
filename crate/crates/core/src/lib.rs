//! Multi-target tracking engine and radar search-and-track episode
//! environment.
//!
//! The tracking pipeline (predict, gate, assign, update, initiate, delete)
//! lives in [`tracker`]; [`environment`] wraps it as a step/reset episode
//! with a beam-pointing action space, and [`experiment`] runs seeded
//! baseline batches.

pub mod assignment;
pub mod association;
pub mod config;
pub mod environment;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod metrics;
pub mod models;
pub mod policies;
pub mod scenario;
pub mod tracker;

pub use config::RunConfig;
pub use environment::{ActionIndex, Environment, Observation, StepInfo, StepOutcome};
pub use error::{Error, Result};
pub use estimation::{GaussianEstimate, UtParams};
pub use models::{KinematicState, MeasurementVector, NoiseParams, SphericalCoords};
pub use policies::{BaselinePolicy, Policy, PolicyKind};
pub use scenario::{Detection, GroundTruthPath, RadarSensor};
pub use tracker::{Track, TrackId, TrackList, TrackerConfig};
