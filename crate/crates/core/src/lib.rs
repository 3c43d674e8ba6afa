//! Sparse one-time sensing: a compressed-sensing cipher whose secret
//! measurement matrix is rebuilt from a self-shrinking keystream for every
//! encryption, together with its security calculus and attack simulators.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod bounds;
pub mod codec;
pub mod combinatorics;
pub mod error;
pub mod experiments;
pub mod keystream;
pub mod pgm;
pub mod seed;
pub mod sensing;
pub mod transforms;

pub use error::{Error, Result};
pub use keystream::{Key, KeyFile, KeystreamSource, LfsrSpec};
pub use sensing::{SensingKey, SystemParams};
pub use transforms::{Basis, BasisKind};
