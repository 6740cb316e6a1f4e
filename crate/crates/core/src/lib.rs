//! Optimal polynomial-time estimators at desk scale.
//!
//! Bit-exact encodings ([`codec`]), a step-bounded stack machine ([`vm`]),
//! word ensembles and estimators ([`model`]), the ERM and advice-argmin
//! constructions with a problem zoo ([`constructions`]), estimator
//! combinators ([`algebra`]), pseudo-invertible reductions
//! ([`reductions`]) and the audit harness ([`harness`]).

pub mod algebra;
pub mod codec;
pub mod constructions;
pub mod error;
pub mod harness;
pub mod model;
pub mod reductions;
pub mod term;
pub mod vm;

pub use codec::{Rational, Word};
pub use error::{Error, Result};
pub use model::{EstimationProblem, Estimator, IndexK, RngStream, Sampler, WordEnsemble};
