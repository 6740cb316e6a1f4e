//! Empirical risk minimization over all programs of length at most `l(K)`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;

use super::ResourcePolicy;
use crate::codec::{Rational, Word};
use crate::error::Result;
use crate::model::{
    exact_sq_error, kmap, run_program, Backend, EstimationProblem, Estimator, IndexK, RngStream, Sampler,
    Scheme, VmEstimator,
};
use crate::vm::{program_at, program_count, Program, Tape};

/// One labeled instance with the coin string the candidate programs see.
#[derive(Debug, Clone)]
pub struct ErmSample {
    pub x: Word,
    pub label: Rational,
    pub coins: Word,
}

/// Sample `i` takes its sampler coins from stream `(seed, K, "sample", i)`
/// and its program coins from `(seed, K, "risk-coin", i)`.
pub fn draw_erm_samples(
    sampler: &Sampler,
    k: IndexK,
    seed: u64,
    policy: &ResourcePolicy,
) -> Vec<ErmSample> {
    let r = policy.coin_count(k);
    (0..policy.sample_count(k))
        .into_par_iter()
        .map(|i| {
            let (x, label) = sampler.draw(k, &mut RngStream::new(seed, k, "sample", i as u64));
            let coins = RngStream::new(seed, k, "risk-coin", i as u64).draw_bits(r);
            ErmSample { x, label, coins }
        })
        .collect()
}

#[inline]
fn sq_residual(v: Rational, t: Rational) -> f64 {
    let d = v.to_f64() - t.to_f64();
    d * d
}

/// Sum of squared residuals in sample order; `None` as soon as the running
/// sum exceeds `cutoff`.
fn risk_sum(
    program: &Program,
    samples: &[ErmSample],
    budget: u64,
    advice: &Word,
    bound: Rational,
    cutoff: f64,
) -> Option<f64> {
    let mut sum = 0.0f64;
    for s in samples {
        sum += sq_residual(run_program(program, budget, &s.x, &s.coins, advice, bound), s.label);
        if sum > cutoff {
            return None;
        }
    }
    Some(sum)
}

/// Mean of `(eval_as_estimator(program, ..) − t_i)²` over the samples.
pub fn empirical_risk(
    program: &Program,
    samples: &[ErmSample],
    budget: u64,
    advice: &Word,
    bound: Rational,
) -> f64 {
    let sum = risk_sum(program, samples, budget, advice, bound, f64::INFINITY)
        .expect("no cutoff");
    sum / samples.len().max(1) as f64
}

/// Audit record of one selection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErmSelection {
    pub k: IndexK,
    pub seed: u64,
    /// Position of the program in the canonical enumeration order.
    pub index: u64,
    pub program: Word,
    pub risk: f64,
    pub program_len: u32,
    pub samples: usize,
}

impl ErmSelection {
    pub fn program(&self) -> Program {
        Program::new(self.program.clone())
    }
}

/// Draws `l(K)⁴` samples and returns the canonical-order argmin of the
/// empirical risk over every program of length `≤ l(K)`.
///
/// Candidates are scored in parallel. A candidate is abandoned once its
/// running residual sum strictly exceeds the full sum of some already scored
/// candidate, which can never discard a minimizer, so the result is the exact
/// argmin regardless of scheduling.
pub fn erm_select(
    sampler: &Sampler,
    k: IndexK,
    seed: u64,
    policy: &ResourcePolicy,
    bound: Rational,
) -> Result<ErmSelection> {
    let samples = draw_erm_samples(sampler, k, seed, policy);
    let advice = sampler.advice(k);
    let budget = policy.step_budget(k);
    let l = policy.program_len(k);
    let n = program_count(l);
    let best = AtomicU64::new(f64::INFINITY.to_bits());
    let score = |i: u64| -> Option<f64> {
        let cutoff = f64::from_bits(best.load(Ordering::Relaxed));
        let s = risk_sum(&program_at(i), &samples, budget, &advice, bound, cutoff)?;
        // non-negative floats order like their bit patterns
        best.fetch_min(s.to_bits(), Ordering::Relaxed);
        Some(s)
    };
    // short programs first, to get a useful cutoff early
    let head = n.min(64);
    let mut sums: Vec<Option<f64>> = (0..head).map(score).collect();
    sums.extend((head..n).into_par_iter().map(score).collect::<Vec<_>>());
    let (index, sum) = sums
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|s| (i as u64, s)))
        .fold(None, |acc: Option<(u64, f64)>, (i, s)| match acc {
            Some((_, b)) if b <= s => acc,
            _ => Some((i, s)),
        })
        .expect("the empty program is never abandoned before a cutoff exists");
    Ok(ErmSelection {
        k,
        seed,
        index,
        program: program_at(index).code().clone(),
        risk: sum / samples.len() as f64,
        program_len: l,
        samples: samples.len(),
    })
}

/// Exact error against `prob` of every program in the ERM class at `k`
/// (length `≤ l(K)`, `coin_count(K)` coins, the given advice), in canonical
/// order.
pub fn class_errors(
    prob: &EstimationProblem,
    k: IndexK,
    policy: &ResourcePolicy,
    bound: Rational,
    advice: &Word,
) -> Result<Vec<f64>> {
    let r = policy.coin_count(k);
    let budget = policy.step_budget(k);
    (0..program_count(policy.program_len(k)))
        .into_par_iter()
        .map(|i| {
            let adv = advice.clone();
            let p: Estimator = VmEstimator::new(program_at(i), bound)
                .with_rand_bits(kmap(move |_| r))
                .with_advice(kmap(move |_| adv.clone()))
                .with_budget(kmap(move |_| budget))
                .into();
            exact_sq_error(&p, prob, k)
        })
        .collect()
}

/// `P^K(x, z) = D(Ev^{K1}(A^K; x, z))` with `A^K` the ERM selection at
/// `(K, seed)`; advice is the sampler's advice.
pub struct ErmEstimator {
    sampler: Sampler,
    policy: ResourcePolicy,
    bound: Rational,
    seed: u64,
    cache: Mutex<HashMap<IndexK, Arc<ErmSelection>>>,
}

impl ErmEstimator {
    pub fn selection(&self, k: IndexK) -> Result<Arc<ErmSelection>> {
        if let Some(s) = self.cache.lock().unwrap().get(&k) {
            return Ok(s.clone());
        }
        // selected without holding the lock; a racing duplicate selection
        // yields the same record
        let sel = Arc::new(erm_select(&self.sampler, k, self.seed, &self.policy, self.bound)?);
        Ok(self.cache.lock().unwrap().entry(k).or_insert(sel).clone())
    }

    /// All selections made so far, in index order.
    pub fn selections(&self) -> Vec<Arc<ErmSelection>> {
        let mut v: Vec<_> = self.cache.lock().unwrap().values().cloned().collect();
        v.sort_by_key(|s| s.k);
        v
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The stream the final run's coins are conventionally drawn from.
    pub fn final_coins(&self, k: IndexK, index: u64) -> Word {
        RngStream::new(self.seed, k, "final-coin", index).draw_bits(self.policy.coin_count(k))
    }
}

impl Scheme for ErmEstimator {
    fn bound(&self) -> Rational {
        self.bound
    }

    fn rand_bits(&self, k: IndexK) -> usize {
        self.policy.coin_count(k)
    }

    fn advice(&self, k: IndexK) -> Result<Word> {
        Ok(self.sampler.advice(k))
    }

    fn evaluate(&self, k: IndexK, x: &Word, coins: &dyn Tape) -> Result<Rational> {
        let sel = self.selection(k)?;
        let advice = self.sampler.advice(k);
        Ok(run_program(&sel.program(), self.policy.step_budget(k), x, coins, &advice, self.bound))
    }

    fn prepare(&self, k: IndexK) -> Result<()> {
        self.selection(k).map(drop)
    }

    fn backend(&self) -> Backend {
        Backend::Erm
    }

    fn describe(&self) -> String {
        format!("erm({}, seed={})", self.sampler.describe(), self.seed)
    }
}

/// The ERM estimator of `sampler`; returned together with a handle for
/// auditing its selections.
pub fn build_erm_estimator(
    sampler: &Sampler,
    policy: ResourcePolicy,
    bound: Rational,
    seed: u64,
) -> (Estimator, Arc<ErmEstimator>) {
    let erm = Arc::new(ErmEstimator {
        sampler: sampler.clone(),
        policy,
        bound: bound.abs(),
        seed,
        cache: Mutex::new(HashMap::new()),
    });
    (Estimator::new(Shared(erm.clone())), erm)
}

struct Shared(Arc<ErmEstimator>);

impl Scheme for Shared {
    fn bound(&self) -> Rational {
        self.0.bound()
    }
    fn rand_bits(&self, k: IndexK) -> usize {
        self.0.rand_bits(k)
    }
    fn advice(&self, k: IndexK) -> Result<Word> {
        self.0.advice(k)
    }
    fn evaluate(&self, k: IndexK, x: &Word, coins: &dyn Tape) -> Result<Rational> {
        self.0.evaluate(k, x, coins)
    }
    fn prepare(&self, k: IndexK) -> Result<()> {
        self.0.prepare(k)
    }
    fn backend(&self) -> Backend {
        self.0.backend()
    }
    fn describe(&self) -> String {
        self.0.describe()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::w;

    fn labeled(label: Rational, n: usize) -> Vec<ErmSample> {
        (0..n)
            .map(|i| ErmSample {
                x: Word::from_u64(i as u64, 3),
                label,
                coins: Word::new(),
            })
            .collect()
    }

    fn asm(s: &str) -> Program {
        Program::assemble(s).unwrap()
    }

    #[test]
    fn risk_examples() {
        let e = Word::new();
        let half = labeled(Rational::HALF, 5);
        assert_eq!(empirical_risk(&asm("EMITHALF"), &half, 16, &e, Rational::ONE), 0.0);
        let ones = labeled(Rational::ONE, 5);
        assert_eq!(empirical_risk(&Program::new(w("")), &ones, 16, &e, Rational::ONE), 1.0);
        let mut mixed = labeled(Rational::ONE, 1);
        mixed.extend(labeled(Rational::ZERO, 1));
        assert_eq!(empirical_risk(&asm("EMIT1"), &mixed, 16, &e, Rational::ONE), 0.5);
    }

    fn const_sampler(t: Rational) -> Sampler {
        Sampler::from_fn("const", Rational::ONE, |k| k.k0 as usize, move |k, c| {
            (Word::from_bits((0..k.k0 as usize).map(|i| c.bit(i))).unwrap(), t)
        })
    }

    #[test]
    fn constant_half_label_selects_zero_risk() {
        let k = IndexK::new(2, 30);
        let sel = erm_select(&const_sampler(Rational::HALF), k, 1, &ResourcePolicy::standard(), Rational::ONE)
            .unwrap();
        assert_eq!(sel.risk, 0.0);
        assert_eq!(sel.program_len, 5);
        // the first zero-risk program in canonical order ends with EMITHALF
        assert!(sel.program().disassemble().starts_with("EMITHALF"), "{:?}", sel.program());
    }

    #[test]
    fn empty_class_risk_is_mean_square_label() {
        let k = IndexK::new(2, 30);
        let sel = erm_select(
            &const_sampler(Rational::ONE),
            k,
            1,
            &ResourcePolicy::standard().with_len(0),
            Rational::ONE,
        )
        .unwrap();
        assert_eq!(sel.index, 0);
        assert_eq!(sel.risk, 1.0);
    }

    #[test]
    fn class_errors_cover_the_class() {
        let prob = EstimationProblem::new("half", crate::model::WordEnsemble::uniform_bits("u"), Rational::ONE, |_, _| {
            Rational::HALF
        });
        let k = IndexK::new(2, 6);
        let errs = class_errors(&prob, k, &ResourcePolicy::standard(), Rational::ONE, &Word::new()).unwrap();
        assert_eq!(errs.len(), 15);
        // the empty program emits nothing and scores 0
        assert_eq!(errs[0], 0.25);
        let min = errs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min <= 0.25);
    }

    #[test]
    fn advice_passes_through_and_selection_is_cached() {
        let s = Sampler::new(crate::model::FnSampler {
            name: "adv".into(),
            label_bound: Rational::ONE,
            rand_bits: Arc::new(|_| 0),
            advice: Some(Arc::new(|k: IndexK| Word::from_u64(k.k0, 4))),
            generate: Arc::new(|_, _| (Word::new(), Rational::ONE)),
        });
        let (p, handle) = build_erm_estimator(&s, ResourcePolicy::standard(), Rational::ONE, 7);
        for k0 in 0..4 {
            let k = IndexK::new(k0, 14);
            assert_eq!(p.advice(k).unwrap(), s.advice(k));
        }
        let k = IndexK::new(1, 14);
        p.prepare(k).unwrap();
        let a = handle.selection(k).unwrap();
        p.prepare(k).unwrap();
        assert!(Arc::ptr_eq(&a, &handle.selection(k).unwrap()));
        assert_eq!(handle.selections().len(), 1);
    }
}
