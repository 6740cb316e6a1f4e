//! Word ensembles, estimation problems, estimators, samplers and the exact
//! and Monte-Carlo functionals over them.

mod ensemble;
mod estimator;
mod exact;
mod metrics;
mod oracle;
mod problem;
mod rng;
mod sampler;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ensemble::{IndexMap, Table, WordEnsemble, MAX_EXPLICIT_ENTRIES, NORMALIZATION_TOL};
pub use estimator::{
    eval_estimator, kmap, run_program, Backend, ConstEstimator, Estimator, FnEstimator, KMap,
    Scheme, VmEstimator, MAX_ADVICE_BITS, MAX_RAND_BITS,
};
pub use exact::{coin_leaves, expect_over_coins, neumaier_sum, MAX_EXACT_COIN_BITS, MAX_EXACT_LEAVES};
pub use metrics::{
    check_sampler_consistency, exact_expectation, support_sum, exact_sq_error, mc_sq_error, pair_expectation,
    sampler_joint_table, sampler_label_mean, tv_distance, tv_tables, ConsistencyReport, LabelMode,
    McEstimate, TestResidual,
};
pub use oracle::{conditional_expectation_estimator, ObservationMap};
pub use problem::{EstimationProblem, Target};
pub use rng::RngStream;
pub use sampler::{FnSampler, Sampler, SamplerScheme};

use crate::error::{Error, Result};

/// Largest admissible value of either index component.
pub const MAX_INDEX: u64 = 1 << 20;

/// Rank-2 index `K = (K0, K1)`: problem size and resource parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IndexK {
    pub k0: u64,
    pub k1: u64,
}

impl IndexK {
    /// Panics if either component exceeds [`MAX_INDEX`]; see [`IndexK::try_new`].
    pub fn new(k0: u64, k1: u64) -> Self {
        Self::try_new(k0, k1).expect("index within bounds")
    }

    pub fn try_new(k0: u64, k1: u64) -> Result<Self> {
        let k = IndexK { k0, k1 };
        if k0 > MAX_INDEX || k1 > MAX_INDEX {
            return Err(Error::IndexRange(k));
        }
        Ok(k)
    }
}

impl fmt::Display for IndexK {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.k0, self.k1)
    }
}

impl FromStr for IndexK {
    type Err = Error;

    /// `K0,K1` with optional parentheses.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().trim_start_matches('(').trim_end_matches(')');
        let bad = || Error::InvalidParam(format!("bad index {s:?}"));
        let (a, b) = t.split_once(',').ok_or_else(bad)?;
        let k0 = a.trim().parse().map_err(|_| bad())?;
        let k1 = b.trim().parse().map_err(|_| bad())?;
        IndexK::try_new(k0, k1)
    }
}
