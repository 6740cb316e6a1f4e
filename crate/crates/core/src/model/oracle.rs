//! The exact conditional-expectation estimator of a finite model.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use super::{Backend, Estimator, EstimationProblem, IndexK, Scheme};
use crate::codec::{Rational, Word};
use crate::error::Result;
use crate::vm::Tape;

/// The observation `m(x)` an oracle conditions on.
#[derive(Clone)]
pub struct ObservationMap {
    name: String,
    f: Arc<dyn Fn(&Word) -> Word + Send + Sync>,
}

impl ObservationMap {
    pub fn new<F: Fn(&Word) -> Word + Send + Sync + 'static>(name: &str, f: F) -> Self {
        ObservationMap {
            name: name.to_string(),
            f: Arc::new(f),
        }
    }

    pub fn identity() -> Self {
        Self::new("identity", |x| x.clone())
    }

    pub fn constant() -> Self {
        Self::new("constant", |_| Word::new())
    }

    /// The first `n` bits (fewer on shorter words).
    pub fn prefix(n: usize) -> Self {
        Self::new(&format!("prefix:{n}"), move |x| x.slice(0, n.min(x.len())))
    }

    pub fn apply(&self, x: &Word) -> Word {
        (self.f)(x)
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl fmt::Debug for ObservationMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ObservationMap({})", self.name)
    }
}

type FiberMeans = Arc<HashMap<Word, Rational>>;

struct OracleEstimator {
    problem: EstimationProblem,
    m: ObservationMap,
    cache: Mutex<HashMap<IndexK, FiberMeans>>,
}

impl OracleEstimator {
    fn fiber_means(&self, k: IndexK) -> Result<FiberMeans> {
        if let Some(t) = self.cache.lock().unwrap().get(&k) {
            return Ok(t.clone());
        }
        let support = self.problem.ensemble.support(k)?;
        // per fiber: masses, weighted targets, and the common target if any
        let mut acc: HashMap<Word, (Vec<f64>, Vec<f64>, Option<Option<Rational>>)> = HashMap::new();
        for (x, p) in support.iter() {
            let t = self.problem.f(k, x);
            let e = acc.entry(self.m.apply(x)).or_default();
            e.0.push(*p);
            e.1.push(p * t.to_f64());
            e.2 = match e.2 {
                None => Some(Some(t)),
                Some(Some(prev)) if prev == t => Some(Some(t)),
                _ => Some(None),
            };
        }
        let means: HashMap<Word, Rational> = acc
            .into_iter()
            .map(|(obs, (ps, pts, common))| {
                let v = match common.flatten() {
                    Some(t) => t,
                    None => Rational::approximate(
                        super::neumaier_sum(pts) / super::neumaier_sum(ps),
                    )
                    .clamp_sym(self.problem.bound),
                };
                (obs, v)
            })
            .collect();
        let means = Arc::new(means);
        self.cache.lock().unwrap().insert(k, means.clone());
        Ok(means)
    }
}

impl Scheme for OracleEstimator {
    fn bound(&self) -> Rational {
        self.problem.bound
    }

    fn evaluate(&self, k: IndexK, x: &Word, _coins: &dyn Tape) -> Result<Rational> {
        let means = self.fiber_means(k)?;
        Ok(means.get(&self.m.apply(x)).copied().unwrap_or(Rational::ZERO))
    }

    fn prepare(&self, k: IndexK) -> Result<()> {
        self.fiber_means(k).map(drop)
    }

    fn backend(&self) -> Backend {
        Backend::Oracle
    }

    fn describe(&self) -> String {
        format!("oracle({}, {})", self.problem.name, self.m.name)
    }
}

/// `P(x) = E_{x' ~ D^K}[f(x') | m(x') = m(x)]`, deterministic. Words whose
/// observation matches no support word evaluate to 0.
pub fn conditional_expectation_estimator(prob: &EstimationProblem, m: ObservationMap) -> Estimator {
    Estimator::new(OracleEstimator {
        problem: prob.clone(),
        m,
        cache: Mutex::new(HashMap::new()),
    })
}
