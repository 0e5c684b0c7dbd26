//! Designing chaotic attractors around a periodic skeleton with leaky echo
//! state networks.

pub mod analysis;
pub mod error;
pub mod io;
pub mod experiment;
pub mod linalg;
pub mod lyapunov;
pub mod reservoir;
pub mod rng;
pub mod search;
pub mod skeleton;
pub mod training;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use reservoir::{build_reservoir, Reservoir, ReservoirSpec, State};
pub use skeleton::Skeleton;
pub use training::{RecordOptions, RunMode, RunTrace, TrainedModel, TrainingConfig};
pub use analysis::{AnalysisReport, BifurcationDiagram, Classification};
pub use experiment::{evaluate_point, EvalConfig, PointEvaluation};
pub use lyapunov::{LyapunovResult, TangentSettings};
pub use search::{SearchConfig, SearchResult, Thresholds};
