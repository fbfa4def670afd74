//! Library half of the benchmark driver: experiment configurations, the
//! bounded-parallel sweep runner, self-verifying result tables, and the
//! power-law fitting used for scaling analyses. The `mpoqem` binary is a
//! thin command-line wrapper over [`experiments::run`].

pub mod config;
pub mod experiments;
pub mod fit;
pub mod output;
pub mod runner;
