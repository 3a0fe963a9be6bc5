//! Detection of differentially and variably methylated regions in
//! methylation array data, with permutation-based significance.
//!
//! The analysis runs in four steps:
//!
//! 1. [`cluster`]: adjacent CpGs are grouped by gap distance and correlation.
//! 2. [`assoc`]: every CpG is regressed on the group indicator and covariates
//!    through one shared design factorization (optionally after the Levene
//!    transform, for variability).
//! 3. [`segment`]: runs of CpGs with large |z| inside each cluster become
//!    candidate regions, scored by a common-mean likelihood-ratio statistic.
//! 4. [`significance`]: group labels are permuted to build null LRT pools,
//!    stratified by cluster size, giving p-values and family-wise error rates.
//!
//! [`pipeline`] wires these together and writes the result tables used by
//! the `dmseg` command-line tool.

pub mod assoc;
pub mod cluster;
pub mod config;
pub mod error;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod segment;
pub mod significance;

pub use error::{DmsegError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
