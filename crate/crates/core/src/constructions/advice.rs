//! Per-index advice: the deterministic program of length `≤ l(K)` with the
//! least exact error, handed to a universal evaluator as advice.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::Serialize;

use super::ResourcePolicy;
use crate::codec::{Rational, Word};
use crate::error::Result;
use crate::model::{run_program, Backend, EstimationProblem, Estimator, IndexK, Scheme, Table};
use crate::vm::{program_at, program_count, Program, Tape};

fn weighted_error(
    program: &Program,
    prob: &EstimationProblem,
    k: IndexK,
    table: &Table,
    budget: u64,
    bound: Rational,
    cutoff: f64,
) -> Option<f64> {
    let empty = Word::new();
    let mut sum = 0.0f64;
    for (x, p) in table.iter() {
        let d = run_program(program, budget, x, &empty, &empty, bound).to_f64() - prob.f(k, x).to_f64();
        sum += p * d * d;
        if sum > cutoff {
            return None;
        }
    }
    Some(sum)
}

/// Exact error of every deterministic program of length `≤ l(K)`, in
/// canonical order.
pub fn true_errors(
    prob: &EstimationProblem,
    k: IndexK,
    policy: &ResourcePolicy,
    bound: Rational,
) -> Result<Vec<f64>> {
    let table = prob.ensemble.support(k)?;
    let budget = policy.step_budget(k);
    Ok((0..program_count(policy.program_len(k)))
        .into_par_iter()
        .map(|i| {
            weighted_error(&program_at(i), prob, k, &table, budget, bound, f64::INFINITY)
                .expect("no cutoff")
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdviceSelection {
    pub k: IndexK,
    pub index: u64,
    pub program: Word,
    pub error: f64,
}

/// Canonical-order argmin of the exact error (abandoning candidates whose
/// partial error already exceeds a completed one, which keeps it exact).
pub fn advice_argmin_select(
    prob: &EstimationProblem,
    k: IndexK,
    policy: &ResourcePolicy,
    bound: Rational,
) -> Result<AdviceSelection> {
    let table = prob.ensemble.support(k)?;
    let budget = policy.step_budget(k);
    let n = program_count(policy.program_len(k));
    let best = AtomicU64::new(f64::INFINITY.to_bits());
    let score = |i: u64| {
        let cutoff = f64::from_bits(best.load(Ordering::Relaxed));
        let s = weighted_error(&program_at(i), prob, k, &table, budget, bound, cutoff)?;
        best.fetch_min(s.to_bits(), Ordering::Relaxed);
        Some(s)
    };
    let head = n.min(64);
    let mut sums: Vec<Option<f64>> = (0..head).map(score).collect();
    sums.extend((head..n).into_par_iter().map(score).collect::<Vec<_>>());
    let (index, error) = sums
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|s| (i as u64, s)))
        .fold(None, |acc: Option<(u64, f64)>, (i, s)| match acc {
            Some((_, b)) if b <= s => acc,
            _ => Some((i, s)),
        })
        .expect("a minimizer is never abandoned");
    Ok(AdviceSelection {
        k,
        index,
        program: program_at(index).code().clone(),
        error,
    })
}

struct AdviceArgmin {
    problem: EstimationProblem,
    policy: ResourcePolicy,
    bound: Rational,
    cache: Mutex<HashMap<IndexK, Arc<AdviceSelection>>>,
}

impl AdviceArgmin {
    fn selection(&self, k: IndexK) -> Result<Arc<AdviceSelection>> {
        if let Some(s) = self.cache.lock().unwrap().get(&k) {
            return Ok(s.clone());
        }
        let sel = Arc::new(advice_argmin_select(&self.problem, k, &self.policy, self.bound)?);
        Ok(self.cache.lock().unwrap().entry(k).or_insert(sel).clone())
    }
}

impl Scheme for AdviceArgmin {
    fn bound(&self) -> Rational {
        self.bound
    }

    fn advice(&self, k: IndexK) -> Result<Word> {
        Ok(self.selection(k)?.program.clone())
    }

    fn evaluate(&self, k: IndexK, x: &Word, _coins: &dyn Tape) -> Result<Rational> {
        let sel = self.selection(k)?;
        let empty = Word::new();
        Ok(run_program(
            &Program::new(sel.program.clone()),
            self.policy.step_budget(k),
            x,
            &empty,
            &empty,
            self.bound,
        ))
    }

    fn prepare(&self, k: IndexK) -> Result<()> {
        self.selection(k).map(drop)
    }

    fn backend(&self) -> Backend {
        Backend::AdviceArgmin
    }

    fn describe(&self) -> String {
        format!("advice_argmin({})", self.problem.name)
    }
}

/// Estimator whose advice at `K` is the exact-error argmin program, run on
/// `x` with no coins.
pub fn build_advice_argmin_estimator(
    prob: &EstimationProblem,
    policy: ResourcePolicy,
    bound: Rational,
) -> Estimator {
    Estimator::new(AdviceArgmin {
        problem: prob.clone(),
        policy,
        bound: bound.abs(),
        cache: Mutex::new(HashMap::new()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{exact_sq_error, WordEnsemble};

    #[test]
    fn constant_one_target() {
        let prob = EstimationProblem::new("one", WordEnsemble::uniform_bits("u"), Rational::ONE, |_, _| {
            Rational::ONE
        });
        let k = IndexK::new(2, 30);
        let p = build_advice_argmin_estimator(&prob, ResourcePolicy::standard(), Rational::ONE);
        // "11" zero-pads to the EMIT1 opcode
        assert_eq!(p.advice(k).unwrap(), crate::codec::w("11"));
        assert_eq!(exact_sq_error(&p, &prob, k).unwrap(), 0.0);
    }

    #[test]
    fn argmin_beats_every_program() {
        let prob = EstimationProblem::new("and", WordEnsemble::uniform_bits("u"), Rational::ONE, |_, x| {
            Rational::integer((x.bit(0) && x.bit(1)) as i64)
        });
        let k = IndexK::new(2, 126);
        let policy = ResourcePolicy::standard();
        let p = build_advice_argmin_estimator(&prob, policy, Rational::ONE);
        let err = exact_sq_error(&p, &prob, k).unwrap();
        let all = true_errors(&prob, k, &policy, Rational::ONE).unwrap();
        let min = all.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(all.iter().all(|e| err <= *e + 1e-15));
        assert!((err - min).abs() < 1e-15);
    }
}
