//! Multi-task learning via robust regularized clustering.
//!
//! Jointly fits one generalized linear model per task, clusters the
//! coefficient vectors through a fusion penalty on a task graph, and flags
//! outlier tasks through group-sparse outlier parameters.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

pub mod clustering;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod glm;
pub mod io;
pub mod linalg;
pub mod penalty;
pub mod scalar;
pub mod simulate;
pub mod solver;
pub mod taskgraph;

pub use clustering::{check_stationarity_rrc, cluster_labels, solve_rrc, RccState, RrcOptions};
pub use data::{fit_stl, MultiTaskData, Standardizer};
pub use error::{Error, Result};
pub use glm::{Family, NewtonOptions, TaskCoef, TaskDataset};
pub use penalty::{PenaltyFamily, PenaltySpec};
pub use scalar::Real;
pub use simulate::{generate, split, Case, GroundTruth, SimConfig, SplitSpec};
pub use solver::{
    check_stationarity_mtlrrc, fit_admm, fit_bcd, FitResult, HyperParams, ModelParams,
    SolverOptions,
};
pub use taskgraph::{knn_weights, TaskGraph};

pub type Data = MultiTaskData<f64>;
pub type Graph = TaskGraph<f64>;
pub type Penalty = PenaltySpec<f64>;
pub type Hyper = HyperParams<f64>;
pub type Params = ModelParams<f64>;
pub type Fit = FitResult<f64>;
pub type Options = SolverOptions<f64>;
