//! Semi-supervised deep kernel learning for regression.
//!
//! An exact Gaussian process regresses on the output of a trainable MLP
//! embedding. Training jointly maximizes the marginal likelihood of the
//! labeled data and minimizes the posterior predictive variance at
//! unlabeled points, so the embedding is pulled toward configurations in
//! which unlabeled inputs sit close to labeled ones. The crate also ships
//! the regression-adapted semi-supervised baselines used to benchmark the
//! approach (Coreg, label propagation, VAT, mean teacher, kNN) and the
//! seeded split protocol for running trials.
//!
//! Everything here is pure computation over `alloc` containers; file
//! formats, CSV ingestion and the experiment CLI live in the companion
//! `ssdkl-cli` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod data;
pub mod gp;
pub mod kernels;
pub mod linalg;
pub mod net;
pub mod trainer;

pub use data::{Dataset, SplitView};
pub use kernels::{KernelKind, KernelParams};
pub use linalg::{CholFactor, JitterPolicy, Matrix};
pub use net::{AdamState, MlpParams};
pub use trainer::{TrainConfig, TrainedModel};
