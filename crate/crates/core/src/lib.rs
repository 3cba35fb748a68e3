//! Coresets for dependency networks.
//!
//! Rows of a data matrix are sampled by their leverage scores and reweighted so
//! that one small weighted sample preserves every per-variable least-squares
//! loss of a Gaussian dependency network to within `1 +- eps`. The same
//! construction is applied to Poisson networks, where no worst-case guarantee
//! exists; [`datagen::generate_hard_instance`] builds the instance showing why.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coreset;
pub mod datagen;
pub mod depnet;
pub mod error;
pub mod glm;
pub mod harness;
pub mod leverage;
pub mod matrix;
pub mod structure;

pub use error::{Error, Result};
