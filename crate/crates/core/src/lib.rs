//! Continual-learning dynamics of wide two-layer networks: finite-width
//! gradient descent, the infinite-width mean-field limit, small-`gamma0`
//! perturbation theory and continual-learning metrics.

pub mod activation;
pub mod compare;
pub mod data;
pub mod dmft;
pub mod error;
pub mod finite_net;
pub mod linalg;
pub mod metrics;
pub mod perturb;
pub mod rng;
pub mod stats;
pub mod trajectory;

pub use activation::Activation;
pub use data::{SimilarityKind, SimilaritySpec, TaskDataset, TaskLayout, TaskSequence};
pub use error::{Error, Result};
pub use metrics::{EvalKind, EvalMatrix, MetricReport};
pub use trajectory::{Checkpoint, KernelSnapshot, Trajectory};
pub use finite_net::{NetworkState, ParamConfig, Parameterization, ReadoutInit, TrainOptions};
pub use dmft::{DmftConfig, FieldEnsemble, XiMode};
