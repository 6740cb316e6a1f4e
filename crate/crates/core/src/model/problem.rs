use std::fmt;
use std::sync::Arc;

use super::{IndexK, WordEnsemble};
use crate::codec::{Rational, Word};
use crate::error::{Error, Result};

/// Target function `f`; may depend on the index (tally problems).
pub type Target = Arc<dyn Fn(IndexK, &Word) -> Rational + Send + Sync>;

/// A word ensemble with a bounded target, `(D, f)` with `|f| ≤ M`.
#[derive(Clone)]
pub struct EstimationProblem {
    pub name: String,
    pub ensemble: WordEnsemble,
    pub target: Target,
    pub bound: Rational,
}

impl EstimationProblem {
    pub fn new<F>(name: &str, ensemble: WordEnsemble, bound: Rational, f: F) -> Self
    where
        F: Fn(IndexK, &Word) -> Rational + Send + Sync + 'static,
    {
        EstimationProblem {
            name: name.to_string(),
            ensemble,
            target: Arc::new(f),
            bound: bound.abs(),
        }
    }

    pub fn f(&self, k: IndexK, x: &Word) -> Rational {
        (self.target)(k, x)
    }

    /// Same target over another ensemble.
    pub fn with_ensemble(&self, name: &str, ensemble: WordEnsemble) -> Self {
        EstimationProblem {
            name: name.to_string(),
            ensemble,
            target: self.target.clone(),
            bound: self.bound,
        }
    }

    /// Verifies `|f| ≤ M` on the exact support at `k`.
    pub fn check_bound(&self, k: IndexK) -> Result<()> {
        for (x, _) in self.ensemble.support(k)?.iter() {
            let t = self.f(k, x);
            if t.abs() > self.bound {
                return Err(Error::InvalidParam(format!(
                    "{}: |f({x})| = {} exceeds bound {}",
                    self.name,
                    t.abs(),
                    self.bound
                )));
            }
        }
        Ok(())
    }

    /// `E_D[f]` at `k`.
    pub fn mean_target(&self, k: IndexK) -> Result<f64> {
        let t = self.ensemble.support(k)?;
        Ok(super::neumaier_sum(t.iter().map(|(x, p)| p * self.f(k, x).to_f64())))
    }
}

impl fmt::Debug for EstimationProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EstimationProblem({})", self.name)
    }
}
