//! Existence constructions (ERM over programs, per-index advice argmin) and
//! the problem zoo.

mod advice;
mod erm;
mod zoo;

pub use advice::{advice_argmin_select, build_advice_argmin_estimator, true_errors, AdviceSelection};
pub use erm::{
    build_erm_estimator, class_errors, draw_erm_samples, empirical_risk, erm_select, ErmEstimator, ErmSample,
    ErmSelection,
};
pub use zoo::{owf_toy8, owf_toy8_inverse, zoo_make, zoo_names, LanguageSpec, ZooProblem};

use serde::Serialize;

use crate::model::IndexK;
use crate::vm::{MAX_BUDGET, MAX_ENUM_BITS};

/// Resource schedule `r(K) = K1`, `l(K) = ⌊log₂(K1 + 2)⌋`, `m(K) = l(K)⁴`,
/// step budget `K1`. The optional overrides exist for experiments that cap
/// the program length or truncate the coin supply.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ResourcePolicy {
    pub len_override: Option<u32>,
    pub coin_cap: Option<usize>,
}

impl ResourcePolicy {
    pub fn standard() -> Self {
        Self::default()
    }

    pub fn with_len(mut self, l: u32) -> Self {
        self.len_override = Some(l);
        self
    }

    pub fn with_coin_cap(mut self, cap: usize) -> Self {
        self.coin_cap = Some(cap);
        self
    }

    pub fn step_budget(&self, k: IndexK) -> u64 {
        k.k1.min(MAX_BUDGET)
    }

    pub fn program_len(&self, k: IndexK) -> u32 {
        self.len_override
            .unwrap_or_else(|| (k.k1 + 2).ilog2())
            .min(MAX_ENUM_BITS)
    }

    /// `l⁴`, and one sample when `l = 0`.
    pub fn sample_count(&self, k: IndexK) -> usize {
        (self.program_len(k) as usize).pow(4).max(1)
    }

    pub fn coin_count(&self, k: IndexK) -> usize {
        let r = k.k1 as usize;
        self.coin_cap.map_or(r, |c| r.min(c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_schedule() {
        let p = ResourcePolicy::standard();
        for (k1, l) in [(0, 1), (2, 2), (30, 5), (126, 7), (510, 9), (2046, 11), (4094, 12), (4093, 11)] {
            assert_eq!(p.program_len(IndexK::new(1, k1)), l, "K1={k1}");
        }
        let k = IndexK::new(3, 126);
        assert_eq!(p.sample_count(k), 7usize.pow(4));
        assert_eq!(p.coin_count(k), 126);
        assert_eq!(p.step_budget(k), 126);
        assert_eq!(p.with_coin_cap(8).coin_count(k), 8);
        assert_eq!(p.with_len(0).sample_count(k), 1);
    }
}
