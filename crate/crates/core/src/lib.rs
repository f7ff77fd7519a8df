//! Federated learning simulator built around dual parameter copies: a frozen
//! structural copy fixes every ReLU gate, a quantitative copy is trained
//! locally and averaged across clients. FedAvg and FedProx run on the same
//! machinery as baselines.
//!
//! Everything is 64-bit and seeded with ChaCha8, so runs are reproducible
//! across platforms and worker counts.

pub mod calibrate;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod dualcopy;
pub mod error;
pub mod experiment;
pub mod fedproto;
pub mod logs;
pub mod nn;
pub mod partition;
pub mod scenario;
pub mod tensor;
pub mod training;

pub use calibrate::{obtain_schedule, pretrain, CalibrationConfig, CalibrationReport, Schedule, StopReason};
pub use data::{generate, Dataset, Generator, SyntheticSpec};
pub use dualcopy::{make_dual_copy, ActivationMaskSet, AffineMap, DualCopyModel};
pub use error::{Error, Result};
pub use fedproto::{
    aggregate, run_centralized, run_federation, FederationConfig, GlobalModel, PartitionSpec, RoundLog, Strategy,
};
pub use nn::{LayerKind, LayerSpec, ModelArch, ModelParams};
pub use partition::{dirichlet_split, heterogeneity_index, iid_split, PartitionPlan};
pub use tensor::Tensor;
pub use training::{evaluate, Evaluation, SgdConfig};
