//! Exact and Monte-Carlo functionals: squared error, total variation,
//! sampler label means and sampler consistency.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use super::{
    expect_over_coins, neumaier_sum, EstimationProblem, Estimator, IndexK, RngStream, Sampler,
    Table, WordEnsemble, MAX_EXACT_COIN_BITS,
};
use crate::codec::{Rational, Word};
use crate::error::{Error, Result};
use crate::vm::SubTape;

/// Exact `Σ_x D(x) · term(x)`, with the per-word terms computed in parallel
/// and summed in support order.
pub fn support_sum<F>(table: &Table, term: F) -> Result<f64>
where
    F: Fn(&Word) -> Result<f64> + Sync,
{
    let terms: Vec<f64> = table
        .par_iter()
        .map(|(x, p)| Ok(p * term(x)?))
        .collect::<Result<_>>()?;
    Ok(neumaier_sum(terms))
}

/// `E_{x ~ D^K, z ~ U}[h(x, P(x, z))]`, exactly.
pub fn exact_expectation<H>(p: &Estimator, e: &WordEnsemble, k: IndexK, h: H) -> Result<f64>
where
    H: Fn(&Word, f64) -> f64 + Sync,
{
    p.prepare(k)?;
    let table = e.support(k)?;
    let r = p.rand_bits(k);
    support_sum(&table, |x| expect_over_coins(r, |z| Ok(h(x, p.value(k, x, z)?))))
}

/// `E[h(x, P(x, z₁), Q(x, z₂))]` over `D^K` and independent coin strings.
pub fn pair_expectation<H>(
    p: &Estimator,
    q: &Estimator,
    e: &WordEnsemble,
    k: IndexK,
    h: H,
) -> Result<f64>
where
    H: Fn(&Word, f64, f64) -> f64 + Sync,
{
    p.prepare(k)?;
    q.prepare(k)?;
    let table = e.support(k)?;
    let (rp, rq) = (p.rand_bits(k), q.rand_bits(k));
    support_sum(&table, |x| {
        expect_over_coins(rp + rq, |z| {
            let pv = p.value(k, x, &SubTape::new(z, 0, rp))?;
            let qv = q.value(k, x, &SubTape::new(z, rp, rq))?;
            Ok(h(x, pv, qv))
        })
    })
}

/// `E_{D^K × U_P}[(P − f)²]`, exactly.
pub fn exact_sq_error(p: &Estimator, prob: &EstimationProblem, k: IndexK) -> Result<f64> {
    exact_expectation(p, &prob.ensemble, k, |x, v| {
        let d = v - prob.f(k, x).to_f64();
        d * d
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl McEstimate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = neumaier_sum(values.iter().copied()) / n as f64;
        let var = if n > 1 {
            neumaier_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1) as f64
        } else {
            0.0
        };
        McEstimate {
            mean,
            stderr: (var / n as f64).sqrt(),
            n,
        }
    }
}

/// Monte-Carlo `(P − f)²`: draw `i` uses child streams `("mc-x", i)` and
/// `("mc-coin", i)` of `rng`, so the result is a function of the seed.
pub fn mc_sq_error(
    p: &Estimator,
    prob: &EstimationProblem,
    k: IndexK,
    n_samples: usize,
    rng: &RngStream,
) -> Result<McEstimate> {
    if n_samples < 2 {
        return Err(Error::InvalidParam("mc_sq_error needs at least 2 samples".into()));
    }
    p.prepare(k)?;
    let values: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let x = prob.ensemble.sample(k, &mut rng.derive("mc-x", i as u64))?;
            let coins = rng.derive("mc-coin", i as u64).draw_bits(p.rand_bits(k));
            let d = p.value(k, &x, &coins)? - prob.f(k, &x).to_f64();
            Ok(d * d)
        })
        .collect::<Result<_>>()?;
    Ok(McEstimate::from_values(&values))
}

/// Half the L1 distance between two tables.
pub fn tv_tables(a: &Table, b: &Table) -> f64 {
    let mut diff: BTreeMap<&Word, f64> = BTreeMap::new();
    for (x, p) in a {
        *diff.entry(x).or_default() += p;
    }
    for (x, p) in b {
        *diff.entry(x).or_default() -= p;
    }
    0.5 * neumaier_sum(diff.values().map(|d| d.abs()))
}

/// Exact total variation distance; both ensembles must be explicit.
pub fn tv_distance(e1: &WordEnsemble, e2: &WordEnsemble, k: IndexK) -> Result<f64> {
    for e in [e1, e2] {
        if !e.is_explicit() {
            return Err(Error::Refused(format!(
                "total variation needs explicit ensembles; {} is sampler-backed",
                e.name()
            )));
        }
    }
    Ok(tv_tables(&*e1.support(k)?, &*e2.support(k)?))
}

/// `(word, probability, conditional label mean)` over all coin strings of `s`.
pub fn sampler_joint_table(s: &Sampler, k: IndexK) -> Result<Vec<(Word, f64, f64)>> {
    let r = s.rand_bits(k);
    if r > MAX_EXACT_COIN_BITS {
        return Err(Error::Refused(format!(
            "exact sampler enumeration needs 2^{r} draws; use Monte-Carlo"
        )));
    }
    let n = 1u64 << r;
    let draws: Vec<(Word, Rational)> = (0..n)
        .into_par_iter()
        .map(|v| s.sample_with(k, &Word::from_u64(v, r)))
        .collect();
    let mut acc: BTreeMap<Word, (u64, Vec<f64>)> = BTreeMap::new();
    for (x, t) in draws {
        let e = acc.entry(x).or_default();
        e.0 += 1;
        e.1.push(t.to_f64());
    }
    Ok(acc
        .into_iter()
        .map(|(x, (c, ts))| (x, c as f64 / n as f64, neumaier_sum(ts) / c as f64))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelMode {
    Exact,
    /// Rejection estimate from `n` sampler draws of the given stream.
    Mc(usize),
}

/// `f_σ(x)`: the mean label of draws emitting `x`, or 0 if `x` is never
/// emitted (never observed, in Monte-Carlo mode).
pub fn sampler_label_mean(
    s: &Sampler,
    k: IndexK,
    x: &Word,
    mode: LabelMode,
    rng: &RngStream,
) -> Result<f64> {
    match mode {
        LabelMode::Exact => Ok(sampler_joint_table(s, k)?
            .into_iter()
            .find(|(y, _, _)| y == x)
            .map_or(0.0, |(_, _, m)| m)),
        LabelMode::Mc(n) => {
            let labels: Vec<f64> = (0..n)
                .filter_map(|i| {
                    let (y, t) = s.draw(k, &mut rng.derive("label-mean", i as u64));
                    (y == *x).then(|| t.to_f64())
                })
                .collect();
            Ok(if labels.is_empty() {
                0.0
            } else {
                neumaier_sum(labels.iter().copied()) / labels.len() as f64
            })
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TestResidual {
    pub test: String,
    pub exact: f64,
    pub sampled: McEstimate,
    /// `|E_D[h] − E_σ[h∘σ₀]|`.
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsistencyReport {
    pub per_test: Vec<TestResidual>,
    /// `E_D[|f_σ − f|]`, exact when the sampler's coins can be enumerated.
    pub label_bias: Option<f64>,
    /// `TV(D, σ₀)`, exact when the sampler's coins can be enumerated.
    pub marginal_tv: Option<f64>,
}

/// Compares the sampler's marginal and labels against an explicit problem,
/// through the given test functions and the label bias.
pub fn check_sampler_consistency(
    s: &Sampler,
    prob: &EstimationProblem,
    k: IndexK,
    tests: &[Estimator],
    n: usize,
    rng: &RngStream,
) -> Result<ConsistencyReport> {
    let table = prob.ensemble.support(k)?;
    let draws: Vec<Word> = (0..n)
        .map(|i| s.draw(k, &mut rng.derive("consistency-sample", i as u64)).0)
        .collect();
    let mut per_test = Vec::with_capacity(tests.len());
    for (j, h) in tests.iter().enumerate() {
        let exact = exact_expectation(h, &prob.ensemble, k, |_, v| v)?;
        let values: Vec<f64> = draws
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let coins = rng
                    .derive("consistency-coin", (j * n + i) as u64)
                    .draw_bits(h.rand_bits(k));
                h.value(k, x, &coins)
            })
            .collect::<Result<_>>()?;
        let sampled = McEstimate::from_values(&values);
        per_test.push(TestResidual {
            test: h.describe(),
            exact,
            residual: (exact - sampled.mean).abs(),
            sampled,
        });
    }
    let (label_bias, marginal_tv) = match sampler_joint_table(s, k) {
        Ok(joint) => {
            let by_word: HashMap<&Word, f64> = joint.iter().map(|(x, _, m)| (x, *m)).collect();
            let bias = neumaier_sum(table.iter().map(|(x, p)| {
                p * (by_word.get(x).copied().unwrap_or(0.0) - prob.f(k, x).to_f64()).abs()
            }));
            let marginal: Table = joint.into_iter().map(|(x, p, _)| (x, p)).collect();
            (Some(bias), Some(tv_tables(&table, &marginal)))
        }
        Err(Error::Refused(_)) => (None, None),
        Err(e) => return Err(e),
    };
    Ok(ConsistencyReport {
        per_test,
        label_bias,
        marginal_tv,
    })
}
