//! Matrix-product-operator engine for quantum error mitigation.
//!
//! Noisy quantum circuits, viewed as linear maps on vectorized density
//! matrices, are represented as matrix product operators (MPOs). The crate
//! compiles circuit descriptions into MPOs, computes approximate inverse maps
//! variationally, truncates those inverses into cheap correction layers, and
//! measures how much of the noise the corrections remove — all against dense
//! small-system references that serve as ground truth in tests.
//!
//! Module map:
//! * [`dense`] — exact dense superoperators/states (reference, small n);
//! * [`channels`] — gate and noise superoperators, single-site and two-site;
//! * [`mpo`], [`mps`], [`lpdo`] — tensor-network operator and state types;
//! * [`circuit`] — circuit specs, generation, partitioning, MPO compilation;
//! * [`inverse`] — variational MPO inversion (alternating least squares);
//! * [`qem`] — the five-step mitigation pipeline and state simulation;
//! * [`pepo`] — the two-dimensional (PEPO) generalization;
//! * [`serial`] — binary tensor serialization;
//! * [`stats`], [`rng`] — summary statistics and deterministic seeding.

extern crate openblas_src as _;

mod chain;
mod contract;

pub mod channels;
pub mod circuit;
pub mod decomp;
pub mod dense;
pub mod error;
pub mod inverse;
pub mod lpdo;
pub mod mpo;
pub mod mps;
pub mod pepo;
pub mod qem;
pub mod rng;
pub mod serial;
pub mod stats;

pub use decomp::{TruncationConfig, TruncationReport};
pub use error::{Error, Result};
