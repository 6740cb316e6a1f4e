//! Audit functionals: calibration, orthogonality, optimality gap, uniqueness,
//! decider extraction and regret curves.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::codec::{Rational, Word};
use crate::constructions::{class_errors, true_errors, ResourcePolicy};
use crate::error::{Error, Result};
use crate::model::{
    coin_leaves, exact_expectation, exact_sq_error, expect_over_coins, neumaier_sum, pair_expectation,
    sampler_joint_table, support_sum, tv_tables, EstimationProblem, Estimator, IndexK, McEstimate,
    ObservationMap, RngStream, Sampler, WordEnsemble,
};
use crate::vm::{program_at, SubTape};

/// Exact enumeration or `n` Monte-Carlo draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    Exact,
    MonteCarlo(usize),
}

/// One weighted outcome `(x, P-value, f(x))`.
struct Draw {
    x: Word,
    v: f64,
    f: f64,
    w: f64,
}

fn draws(p: &Estimator, prob: &EstimationProblem, k: IndexK, mode: Mode, rng: &RngStream) -> Result<Vec<Draw>> {
    p.prepare(k)?;
    let r = p.rand_bits(k);
    match mode {
        Mode::Exact => {
            let table = prob.ensemble.support(k)?;
            let per_x: Vec<Vec<Draw>> = table
                .par_iter()
                .map(|(x, px)| {
                    let f = prob.f(k, x).to_f64();
                    let leaves = coin_leaves(r, |c| p.value(k, x, c))?;
                    Ok(leaves
                        .into_iter()
                        .map(|(v, w)| Draw { x: x.clone(), v, f, w: px * w })
                        .collect())
                })
                .collect::<Result<_>>()?;
            Ok(per_x.into_iter().flatten().collect())
        }
        Mode::MonteCarlo(n) => {
            if n == 0 {
                return Err(Error::InvalidParam("Monte-Carlo mode needs at least one draw".into()));
            }
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let x = prob.ensemble.sample(k, &mut rng.derive("x", i as u64))?;
                    let coins = rng.derive("coin", i as u64).draw_bits(r);
                    let v = p.value(k, &x, &coins)?;
                    let f = prob.f(k, &x).to_f64();
                    Ok(Draw { x, v, f, w: 1.0 / n as f64 })
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Bucket {
    pub a: f64,
    pub b: f64,
    pub alpha: f64,
    /// Conditional mean of `f` given `P ∈ [a, b]`.
    pub mean: Option<f64>,
    /// `E[1{P ∈ [a, b]} (P − f)²]`.
    pub eps_hat: f64,
    pub bound: Option<f64>,
    pub tol: f64,
    /// `None` when `alpha < alpha_min`.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    #[serde(rename = "K")]
    pub k: IndexK,
    pub buckets: Vec<Bucket>,
    pub total_alpha: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct CalibrationOptions {
    /// Bucket edges `e0 < e1 < … < en`; buckets are `[e_i, e_{i+1})`, the
    /// last one closed.
    pub edges: Vec<f64>,
    pub alpha_min: f64,
    /// Analytic slack added to every bucket interval.
    pub slack: f64,
}

impl CalibrationOptions {
    pub fn new(edges: Vec<f64>) -> Self {
        CalibrationOptions {
            edges,
            alpha_min: 0.05,
            slack: 1e-12,
        }
    }

    /// `n` equal buckets over `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Self {
        Self::new((0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect())
    }
}

fn bucket_of(edges: &[f64], v: f64) -> Option<usize> {
    let n = edges.len() - 1;
    if v < edges[0] || v > edges[n] {
        return None;
    }
    Some(edges.partition_point(|e| *e <= v).saturating_sub(1).min(n - 1))
}

/// Per-bucket calibration: the conditional mean of `f` given `P` in the
/// bucket must lie within `√(ε̂/α)` of the bucket (plus tolerance).
pub fn calibration_report(
    p: &Estimator,
    prob: &EstimationProblem,
    k: IndexK,
    opts: &CalibrationOptions,
    mode: Mode,
    rng: &RngStream,
) -> Result<CalibrationReport> {
    let edges = &opts.edges;
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParam("bucket edges must be strictly increasing, at least two".into()));
    }
    let n = edges.len() - 1;
    let mut parts: Vec<Vec<&Draw>> = vec![Vec::new(); n];
    let ds = draws(p, prob, k, mode, rng)?;
    for d in &ds {
        let i = bucket_of(edges, d.v)
            .ok_or_else(|| Error::InvalidParam(format!("buckets do not cover estimator value {}", d.v)))?;
        parts[i].push(d);
    }
    let buckets: Vec<Bucket> = parts
        .iter()
        .enumerate()
        .map(|(i, part)| {
            let (a, b) = (edges[i], edges[i + 1]);
            let alpha = neumaier_sum(part.iter().map(|d| d.w));
            let eps_hat = neumaier_sum(part.iter().map(|d| d.w * (d.v - d.f) * (d.v - d.f)));
            let mean = (alpha > 0.0).then(|| neumaier_sum(part.iter().map(|d| d.w * d.f)) / alpha);
            let stat = match (mode, mean) {
                (Mode::MonteCarlo(_), Some(m)) if part.len() > 1 => {
                    let c = part.len() as f64;
                    let var = neumaier_sum(part.iter().map(|d| (d.f - m) * (d.f - m))) / (c - 1.0);
                    3.0 * (var / c).sqrt()
                }
                _ => 0.0,
            };
            let tol = opts.slack + stat;
            let evaluated = alpha >= opts.alpha_min && alpha > 0.0;
            let bound = evaluated.then(|| (eps_hat / alpha).sqrt());
            let pass = match (bound, mean) {
                (Some(bd), Some(m)) => Some(m >= a - bd - tol && m <= b + bd + tol),
                _ => None,
            };
            Bucket {
                a,
                b,
                alpha,
                mean,
                eps_hat,
                bound,
                tol,
                pass,
            }
        })
        .collect();
    let total_alpha = neumaier_sum(buckets.iter().map(|b| b.alpha));
    let pass = buckets.iter().all(|b| b.pass != Some(false));
    Ok(CalibrationReport {
        k,
        buckets,
        total_alpha,
        pass,
    })
}

type TestBody = dyn Fn(&Word, f64) -> f64 + Send + Sync;

/// A bounded test function `S(x, v)` of the word and the estimator value.
#[derive(Clone)]
pub struct TestFn {
    pub name: String,
    pub sup: f64,
    f: Arc<TestBody>,
}

impl TestFn {
    pub fn new<F: Fn(&Word, f64) -> f64 + Send + Sync + 'static>(name: &str, sup: f64, f: F) -> Self {
        TestFn {
            name: name.to_string(),
            sup,
            f: Arc::new(f),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(&format!("const({c})"), c.abs(), move |_, _| c)
    }

    /// `S(x, v) = v`, bounded by the estimator bound `m`.
    pub fn value(m: f64) -> Self {
        Self::new("value", m, |_, v| v)
    }

    pub fn eval(&self, x: &Word, v: f64) -> f64 {
        (self.f)(x, v)
    }
}

impl fmt::Debug for TestFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestFn({}, sup {})", self.name, self.sup)
    }
}

/// One indicator `1{m(x) = o}` per observation `o` occurring on the support.
pub fn fiber_indicators(e: &WordEnsemble, k: IndexK, m: &ObservationMap) -> Result<Vec<TestFn>> {
    let table = e.support(k)?;
    let obs: BTreeSet<Word> = table.iter().map(|(x, _)| m.apply(x)).collect();
    Ok(obs
        .into_iter()
        .map(|o| {
            let m = m.clone();
            TestFn::new(&format!("fiber({o})"), 1.0, move |x, _| (m.apply(x) == o) as u8 as f64)
        })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct OrthogonalityReport {
    /// `(test name, E[(P − f) S])`.
    pub residuals: Vec<(String, f64)>,
    pub max: f64,
}

/// `E[(P − f) S]` for each test; `max` is the largest absolute value.
pub fn orthogonality_residual(
    p: &Estimator,
    prob: &EstimationProblem,
    k: IndexK,
    tests: &[TestFn],
    mode: Mode,
    rng: &RngStream,
) -> Result<OrthogonalityReport> {
    let ds = draws(p, prob, k, mode, rng)?;
    let residuals: Vec<(String, f64)> = tests
        .iter()
        .map(|s| {
            let r = neumaier_sum(ds.iter().map(|d| d.w * (d.v - d.f) * s.eval(&d.x, d.v)));
            (s.name.clone(), r)
        })
        .collect();
    let max = residuals.iter().map(|(_, r)| r.abs()).fold(0.0, f64::max);
    Ok(OrthogonalityReport { residuals, max })
}

/// A competitor family for [`optimality_gap`].
#[derive(Clone, Debug)]
pub enum Competitors {
    /// The ERM class at `K`: programs of length `≤ l(K)` with `coin_count(K)`
    /// coins and the given advice.
    Class {
        policy: ResourcePolicy,
        bound: Rational,
        advice: Word,
    },
    /// Deterministic programs of length `≤ l(K)` without coins or advice.
    Deterministic { policy: ResourcePolicy, bound: Rational },
    /// Constants `−M + 2M j/steps`, `j = 0..=steps`.
    Constants { bound: Rational, steps: u32 },
    List(Vec<Estimator>),
}

/// The competitor with the least exact error at `k` (first in canonical
/// order on ties).
pub fn best_competitor(prob: &EstimationProblem, k: IndexK, comps: &Competitors) -> Result<(String, f64)> {
    let named: Vec<(String, f64)> = match comps {
        Competitors::Class { policy, bound, advice } => {
            let errs = class_errors(prob, k, policy, *bound, advice)?;
            argmin(&errs).map(|i| (program_at(i as u64).code().to_string(), errs[i])).into_iter().collect()
        }
        Competitors::Deterministic { policy, bound } => {
            let errs = true_errors(prob, k, policy, *bound)?;
            argmin(&errs).map(|i| (program_at(i as u64).code().to_string(), errs[i])).into_iter().collect()
        }
        Competitors::Constants { bound, steps } => {
            if *steps == 0 {
                return Err(Error::InvalidParam("constants grid needs at least one step".into()));
            }
            let table = prob.ensemble.support(k)?;
            let m1 = support_sum(&table, |x| Ok(prob.f(k, x).to_f64()))?;
            let m2 = support_sum(&table, |x| Ok(prob.f(k, x).to_f64().powi(2)))?;
            let m = bound.to_f64();
            (0..=*steps)
                .map(|j| {
                    let c = -m + 2.0 * m * j as f64 / *steps as f64;
                    (format!("const({c})"), c * c - 2.0 * c * m1 + m2)
                })
                .collect()
        }
        Competitors::List(list) => list
            .iter()
            .map(|q| Ok((q.describe(), exact_sq_error(q, prob, k)?)))
            .collect::<Result<_>>()?,
    };
    let errs: Vec<f64> = named.iter().map(|(_, e)| *e).collect();
    let i = argmin(&errs).ok_or_else(|| Error::InvalidParam("empty competitor family".into()))?;
    Ok(named[i].clone())
}

fn argmin(xs: &[f64]) -> Option<usize> {
    xs.iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &e)| match best {
            Some((_, b)) if b <= e => best,
            _ => Some((i, e)),
        })
        .map(|(i, _)| i)
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    #[serde(rename = "K")]
    pub k: IndexK,
    pub error: f64,
    pub best: String,
    pub best_error: f64,
    /// `error − best_error`; negative when `P` beats the family.
    pub gap: f64,
}

pub fn optimality_gap(p: &Estimator, prob: &EstimationProblem, k: IndexK, comps: &Competitors) -> Result<GapReport> {
    let error = exact_sq_error(p, prob, k)?;
    let (best, best_error) = best_competitor(prob, k, comps)?;
    Ok(GapReport {
        k,
        error,
        best,
        best_error,
        gap: error - best_error,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualBound {
    /// `E[(P − f) S]`.
    pub residual: f64,
    pub bound: f64,
    /// `(t, err(P) − err(P − tS))` for `±t` over the grid.
    pub gaps: Vec<(f64, f64)>,
}

/// Residual bound implied by the perturbations `P − tS`: for each sign,
/// `min_t (sup|S|²|t| + max(gap_t, 0)/|t|)/2`, maximised over the signs.
pub fn residual_bound_from_gap(
    p: &Estimator,
    prob: &EstimationProblem,
    k: IndexK,
    s: &TestFn,
    t_grid: &[f64],
) -> Result<ResidualBound> {
    if t_grid.is_empty() || t_grid.iter().any(|t| *t <= 0.0) {
        return Err(Error::InvalidParam("t grid must be nonempty and positive".into()));
    }
    let f = |x: &Word| prob.f(k, x).to_f64();
    let base = exact_expectation(p, &prob.ensemble, k, |x, v| (v - f(x)).powi(2))?;
    let residual = exact_expectation(p, &prob.ensemble, k, |x, v| (v - f(x)) * s.eval(x, v))?;
    let mut gaps = Vec::with_capacity(2 * t_grid.len());
    let mut per_sign = [f64::INFINITY; 2];
    for (side, sign) in [1.0, -1.0].into_iter().enumerate() {
        for &t in t_grid {
            let ts = sign * t;
            let err = exact_expectation(p, &prob.ensemble, k, |x, v| (v - ts * s.eval(x, v) - f(x)).powi(2))?;
            let gap = base - err;
            gaps.push((ts, gap));
            let b = (s.sup * s.sup * t + gap.max(0.0) / t) / 2.0;
            per_sign[side] = per_sign[side].min(b);
        }
    }
    Ok(ResidualBound {
        residual,
        bound: per_sign[0].max(per_sign[1]),
        gaps,
    })
}

/// `E[(P − Q)²]` over the ensemble and independent coins.
pub fn uniqueness_distance(
    p: &Estimator,
    q: &Estimator,
    e: &WordEnsemble,
    k: IndexK,
    mode: Mode,
    rng: &RngStream,
) -> Result<McEstimate> {
    match mode {
        Mode::Exact => Ok(McEstimate {
            mean: pair_expectation(p, q, e, k, |_, a, b| (a - b) * (a - b))?,
            stderr: 0.0,
            n: 0,
        }),
        Mode::MonteCarlo(n) => {
            if n < 2 {
                return Err(Error::InvalidParam("Monte-Carlo distance needs at least 2 draws".into()));
            }
            p.prepare(k)?;
            q.prepare(k)?;
            let values: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let x = e.sample(k, &mut rng.derive("x", i as u64))?;
                    let a = p.value(k, &x, &rng.derive("coin-p", i as u64).draw_bits(p.rand_bits(k)))?;
                    let b = q.value(k, &x, &rng.derive("coin-q", i as u64).draw_bits(q.rand_bits(k)))?;
                    Ok((a - b) * (a - b))
                })
                .collect::<Result<_>>()?;
            Ok(McEstimate::from_values(&values))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterfactualReport {
    #[serde(rename = "K")]
    pub k: IndexK,
    /// `E_D[(P − Q)²]` over the full ensemble.
    pub distance: f64,
    pub mass_l: f64,
    /// `E_{D|L}[(P − Q)²]`.
    pub conditional_distance: f64,
    /// `|E[R (P − Q)²] − E[χ_L (P − Q)²]|`.
    pub r_residual: f64,
    /// `R ≥ eps·D(L)` at every support point and coin pattern.
    pub precondition: bool,
    /// `(E_D[χ_L (P − Q)²] + r_residual) / (eps·D(L))`.
    pub bound: Option<f64>,
    pub pass: Option<bool>,
}

/// Distance of `P` and `Q` off `L`, bounded through `R_L ≥ eps·D(L)`:
/// `E[(P−Q)²] ≤ E[R(P−Q)²]/(eps D(L))`, with `E[R(P−Q)²]` split into its
/// value on `L` and the residual of `R` against `χ_L`.
pub fn counterfactual_uniqueness<L>(
    p: &Estimator,
    q: &Estimator,
    r_l: &Estimator,
    eps: f64,
    e: &WordEnsemble,
    in_l: L,
    k: IndexK,
) -> Result<CounterfactualReport>
where
    L: Fn(&Word) -> bool + Sync,
{
    if eps <= 0.0 {
        return Err(Error::InvalidParam("eps must be positive".into()));
    }
    for est in [p, q, r_l] {
        est.prepare(k)?;
    }
    let (rp, rq, rr) = (p.rand_bits(k), q.rand_bits(k), r_l.rand_bits(k));
    let table = e.support(k)?;
    let mass_l = support_sum(&table, |x| Ok(in_l(x) as u8 as f64))?;
    let floor = eps * mass_l;
    // Per support point: (E[d²], E[R d²], min R).
    let rows: Vec<(f64, bool, f64, f64, f64)> = table
        .par_iter()
        .map(|(x, px)| {
            let leaves = coin_leaves(rp + rq + rr, |c| {
                let a = p.value(k, x, &SubTape::new(c, 0, rp))?;
                let b = q.value(k, x, &SubTape::new(c, rp, rq))?;
                let r = r_l.value(k, x, &SubTape::new(c, rp + rq, rr))?;
                Ok(((a - b) * (a - b), r))
            })?;
            let d2 = neumaier_sum(leaves.iter().map(|((d, _), w)| w * d));
            let rd2 = neumaier_sum(leaves.iter().map(|((d, r), w)| w * r * d));
            let rmin = leaves.iter().map(|((_, r), _)| *r).fold(f64::INFINITY, f64::min);
            Ok((*px, in_l(x), d2, rd2, rmin))
        })
        .collect::<Result<_>>()?;
    let distance = neumaier_sum(rows.iter().map(|(px, _, d, _, _)| px * d));
    let on_l = neumaier_sum(rows.iter().filter(|r| r.1).map(|(px, _, d, _, _)| px * d));
    let weighted = neumaier_sum(rows.iter().map(|(px, _, _, rd, _)| px * rd));
    let r_residual = (weighted - on_l).abs();
    let precondition = mass_l > 0.0 && rows.iter().all(|r| r.4 >= floor - 1e-15);
    let bound = precondition.then(|| (on_l + r_residual) / floor);
    Ok(CounterfactualReport {
        k,
        distance,
        mass_l,
        conditional_distance: if mass_l > 0.0 { on_l / mass_l } else { 0.0 },
        r_residual,
        precondition,
        bound,
        pass: bound.map(|b| distance <= b + 1e-12),
    })
}

/// `A(y₁, y₂) = 1 iff P(σ(y₁), y₂) > 1/2`.
pub struct Decider {
    sampler: Sampler,
    p: Estimator,
    k: IndexK,
}

impl Decider {
    pub fn rand_bits(&self) -> usize {
        self.sampler.rand_bits(self.k) + self.p.rand_bits(self.k)
    }

    pub fn decide(&self, coins: &dyn crate::vm::Tape) -> Result<bool> {
        let rs = self.sampler.rand_bits(self.k);
        let (x, _) = self.sampler.sample_with(self.k, &SubTape::new(coins, 0, rs));
        let v = self.p.value(self.k, &x, &SubTape::new(coins, rs, self.p.rand_bits(self.k)))?;
        Ok(v > 0.5)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DeciderReport {
    #[serde(rename = "K")]
    pub k: IndexK,
    pub chi: bool,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    /// `E[(P(σ) − χ)²]`.
    pub sq_error: f64,
    pub sq_error_exact: bool,
    pub tv: f64,
    pub sigma: f64,
    /// `4 sq_error + tv + 3σ`.
    pub bound: f64,
    pub pass: bool,
}

/// Builds the decider for a tally sampler and measures its failure rate
/// over `trials` draws. `reference` is the ensemble the sampler is meant to
/// reproduce; the total variation to it is added to the bound.
pub fn extract_decider(
    sampler: &Sampler,
    p: &Estimator,
    k: IndexK,
    trials: usize,
    rng: &RngStream,
    reference: Option<&WordEnsemble>,
) -> Result<(Decider, DeciderReport)> {
    if trials == 0 {
        return Err(Error::InvalidParam("decider needs at least one trial".into()));
    }
    p.prepare(k)?;
    let rs = sampler.rand_bits(k);
    let rp = p.rand_bits(k);
    let joint = sampler_joint_table(sampler, k).ok();
    let decider = Decider {
        sampler: sampler.clone(),
        p: p.clone(),
        k,
    };
    let outcomes: Vec<(f64, bool, f64)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let coins = rng.derive("decider", i as u64).draw_bits(rs + rp);
            let (x, label) = sampler.sample_with(k, &SubTape::new(&coins, 0, rs));
            let v = p.value(k, &x, &SubTape::new(&coins, rs, rp))?;
            Ok((label.to_f64(), v > 0.5, v))
        })
        .collect::<Result<_>>()?;
    let labels: Vec<f64> = match &joint {
        Some(t) => t.iter().map(|(_, _, m)| *m).collect(),
        None => outcomes.iter().map(|o| o.0).collect(),
    };
    let chi_v = labels[0];
    if labels.iter().any(|l| *l != chi_v) || (chi_v != 0.0 && chi_v != 1.0) {
        return Err(Error::Refused(format!(
            "{} is not a tally problem at {k}: labels are not one constant bit",
            sampler.describe()
        )));
    }
    let chi = chi_v == 1.0;
    let failures = outcomes.iter().filter(|o| o.1 != chi).count();
    let exact = expect_over_coins(rs + rp, |c| {
        let (x, _) = sampler.sample_with(k, &SubTape::new(c, 0, rs));
        Ok((p.value(k, &x, &SubTape::new(c, rs, rp))? - chi_v).powi(2))
    });
    let (sq_error, sq_error_exact) = match exact {
        Ok(e) => (e, true),
        Err(Error::Refused(_)) => (
            neumaier_sum(outcomes.iter().map(|o| (o.2 - chi_v).powi(2))) / trials as f64,
            false,
        ),
        Err(e) => return Err(e),
    };
    let tv = match (reference, &joint) {
        (Some(r), Some(t)) => {
            let table = t.iter().map(|(x, px, _)| (x.clone(), *px)).collect();
            tv_tables(&table, &*r.support(k)?)
        }
        _ => 0.0,
    };
    let q = (4.0 * sq_error + tv).min(1.0);
    let sigma = (q * (1.0 - q) / trials as f64).sqrt();
    let failure_rate = failures as f64 / trials as f64;
    let bound = 4.0 * sq_error + tv + 3.0 * sigma;
    Ok((
        decider,
        DeciderReport {
            k,
            chi,
            trials,
            failures,
            failure_rate,
            sq_error,
            sq_error_exact,
            tv,
            sigma,
            bound,
            pass: failure_rate <= bound + 1e-12,
        },
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct RegretRow {
    pub k1: u64,
    pub error: f64,
    pub best_error: f64,
    pub regret: f64,
    pub partial_sum: f64,
    pub partial_sum_monotone: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegretCurve {
    pub k0: u64,
    pub rows: Vec<RegretRow>,
    /// `max partial_sum / log₂ log₂ K1` over tested `K1 ≥ 4`.
    pub fitted_m: f64,
}

/// FallU partial sums `Σ_{k ≤ N, k ≥ 2} max(ε(k), 0)/(k log₂ k)` over the
/// tested `k` (ascending), raw and with `ε` replaced by its tested
/// suffix supremum.
pub fn fallu_partial_sums(ks: &[u64], regrets: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let floored: Vec<f64> = regrets.iter().map(|r| r.max(0.0)).collect();
    let mut sup = floored.clone();
    for i in (0..sup.len().saturating_sub(1)).rev() {
        sup[i] = sup[i].max(sup[i + 1]);
    }
    let sums = |eps: &[f64]| {
        let mut acc = 0.0;
        ks.iter()
            .zip(eps)
            .map(|(&k, &e)| {
                if k >= 2 {
                    acc += e / (k as f64 * (k as f64).log2());
                }
                acc
            })
            .collect::<Vec<f64>>()
    };
    (sums(&floored), sums(&sup))
}

pub fn regret_curve(
    p: &Estimator,
    prob: &EstimationProblem,
    k0: u64,
    k1s: &[u64],
    comps: &Competitors,
) -> Result<RegretCurve> {
    let mut ks = k1s.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let mut rows = Vec::with_capacity(ks.len());
    for &k1 in &ks {
        let k = IndexK::try_new(k0, k1)?;
        let g = optimality_gap(p, prob, k, comps)?;
        rows.push(RegretRow {
            k1,
            error: g.error,
            best_error: g.best_error,
            regret: g.gap,
            partial_sum: 0.0,
            partial_sum_monotone: 0.0,
        });
    }
    let regrets: Vec<f64> = rows.iter().map(|r| r.regret).collect();
    let (raw, mono) = fallu_partial_sums(&ks, &regrets);
    for (row, (a, b)) in rows.iter_mut().zip(raw.into_iter().zip(mono)) {
        row.partial_sum = a;
        row.partial_sum_monotone = b;
    }
    let fitted_m = rows
        .iter()
        .filter(|r| r.k1 >= 4)
        .map(|r| r.partial_sum / (r.k1 as f64).log2().log2())
        .fold(0.0, f64::max);
    Ok(RegretCurve { k0, rows, fitted_m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::w;
    use crate::constructions::zoo_make;
    use crate::model::conditional_expectation_estimator;
    use crate::term::Term;

    fn zoo(s: &str) -> EstimationProblem {
        zoo_make(&Term::parse(s).unwrap()).unwrap().problem
    }

    fn half() -> Estimator {
        Estimator::constant(Rational::HALF)
    }

    fn rng() -> RngStream {
        RngStream::new(7, IndexK::new(0, 0), "test", 0)
    }

    #[test]
    fn calibration_of_constant_half_on_fair_coin() {
        let prob = zoo("fair_coin");
        let k = IndexK::new(1, 4);
        let opts = CalibrationOptions::new(vec![0.0, 0.4, 0.6, 1.0]);
        let rep = calibration_report(&half(), &prob, k, &opts, Mode::Exact, &rng()).unwrap();
        let b = &rep.buckets[1];
        assert_eq!((b.alpha, b.mean, b.pass), (1.0, Some(0.5), Some(true)));
        assert_eq!(rep.buckets[0].alpha, 0.0);
        assert_eq!(rep.buckets[0].pass, None);
        assert!((rep.total_alpha - 1.0).abs() < 1e-12 && rep.pass);
    }

    #[test]
    fn calibration_of_oracle_is_exact() {
        let prob = zoo("first_bit");
        let k = IndexK::new(4, 4);
        let p = conditional_expectation_estimator(&prob, ObservationMap::identity());
        let rep = calibration_report(&p, &prob, k, &CalibrationOptions::uniform(0.0, 1.0, 4), Mode::Exact, &rng())
            .unwrap();
        for b in rep.buckets.iter().filter(|b| b.alpha > 0.0) {
            let m = b.mean.unwrap();
            assert!(m >= b.a && m <= b.b);
            assert_eq!(b.eps_hat, 0.0);
        }
        assert!(rep.pass);
    }

    #[test]
    fn calibration_rejects_uncovered_values() {
        let prob = zoo("first_bit");
        let opts = CalibrationOptions::new(vec![0.6, 1.0]);
        assert!(calibration_report(&half(), &prob, IndexK::new(2, 2), &opts, Mode::Exact, &rng()).is_err());
    }

    #[test]
    fn monte_carlo_calibration_is_seeded() {
        let prob = zoo("first_bit");
        let k = IndexK::new(8, 4);
        let opts = CalibrationOptions::uniform(0.0, 1.0, 2);
        let a = calibration_report(&half(), &prob, k, &opts, Mode::MonteCarlo(500), &rng()).unwrap();
        let b = calibration_report(&half(), &prob, k, &opts, Mode::MonteCarlo(500), &rng()).unwrap();
        assert_eq!(a.buckets[1].mean, b.buckets[1].mean);
        assert!(a.pass);
    }

    #[test]
    fn orthogonality_examples() {
        let k = IndexK::new(3, 4);
        let fair = zoo("fair_coin");
        let r = orthogonality_residual(&half(), &fair, k, &[TestFn::constant(1.0)], Mode::Exact, &rng()).unwrap();
        assert_eq!(r.max, 0.0);
        let one = zoo("point_mass(0, 1)");
        let zero = Estimator::constant(Rational::ZERO);
        let r = orthogonality_residual(&zero, &one, k, &[TestFn::constant(1.0)], Mode::Exact, &rng()).unwrap();
        assert_eq!(r.max, 1.0);
        let parity = zoo("parity(2)");
        let m = ObservationMap::prefix(1);
        let p = conditional_expectation_estimator(&parity, m.clone());
        let tests = fiber_indicators(&parity.ensemble, k, &m).unwrap();
        assert_eq!(tests.len(), 2);
        let r = orthogonality_residual(&p, &parity, k, &tests, Mode::Exact, &rng()).unwrap();
        assert!(r.max <= 1e-12);
    }

    #[test]
    fn gap_examples() {
        let k = IndexK::new(2, 6);
        let fair = zoo("fair_coin");
        let g = optimality_gap(&half(), &fair, k, &Competitors::Constants { bound: Rational::ONE, steps: 8 }).unwrap();
        assert!(g.gap.abs() <= 1e-12);
        let one = zoo("point_mass(0, 1)");
        let zero = Estimator::constant(Rational::ZERO);
        let emit1 = Estimator::from(crate::model::VmEstimator::new(crate::vm::Program::new(w("1100")), Rational::ONE));
        let g = optimality_gap(&zero, &one, k, &Competitors::List(vec![emit1, half()])).unwrap();
        assert_eq!(g.gap, 1.0);
    }

    #[test]
    fn residual_bound_examples() {
        let k = IndexK::new(3, 4);
        let prob = zoo("first_bit");
        let p = conditional_expectation_estimator(&prob, ObservationMap::identity());
        let s = TestFn::new("x0", 1.0, |x, _| x.bit(0) as u8 as f64);
        let b = residual_bound_from_gap(&p, &prob, k, &s, &[0.25, 0.5]).unwrap();
        assert!(b.gaps.iter().all(|(_, g)| *g <= 1e-15));
        assert!((b.bound - 0.125).abs() < 1e-12);
        let z = residual_bound_from_gap(&half(), &prob, k, &TestFn::constant(0.0), &[0.5]).unwrap();
        assert_eq!(z.bound, 0.0);
        let r = residual_bound_from_gap(&half(), &prob, k, &s, &[1.0, 0.5, 0.25, 0.125]).unwrap();
        assert!(r.residual.abs() <= r.bound + 1e-9);
    }

    #[test]
    fn uniqueness_examples() {
        let k = IndexK::new(3, 4);
        let e = zoo("first_bit").ensemble;
        let zero = Estimator::constant(Rational::ZERO);
        let one = Estimator::constant(Rational::ONE);
        assert_eq!(uniqueness_distance(&one, &one, &e, k, Mode::Exact, &rng()).unwrap().mean, 0.0);
        assert_eq!(uniqueness_distance(&zero, &one, &e, k, Mode::Exact, &rng()).unwrap().mean, 1.0);
        assert_eq!(uniqueness_distance(&zero, &one, &e, k, Mode::MonteCarlo(10), &rng()).unwrap().mean, 1.0);
    }

    #[test]
    fn counterfactual_examples() {
        let k = IndexK::new(3, 4);
        let e = zoo("first_bit").ensemble;
        let in_l = |x: &Word| x.bit(0);
        let r = Estimator::constant(Rational::HALF);
        let rep = counterfactual_uniqueness(&half(), &half(), &r, 0.5, &e, in_l, k).unwrap();
        assert_eq!(rep.distance, 0.0);
        assert_eq!(rep.pass, Some(true));
        let zero = Estimator::constant(Rational::ZERO);
        let rep = counterfactual_uniqueness(&half(), &half(), &zero, 0.5, &e, in_l, k).unwrap();
        assert!(!rep.precondition);
        assert_eq!(rep.pass, None);
    }

    #[test]
    fn decider_examples() {
        let z = zoo_make(&Term::parse("tally(3)").unwrap()).unwrap();
        let s = z.require_sampler().unwrap();
        let k = IndexK::new(3, 4);
        let one = Estimator::constant(Rational::ONE);
        let (_, rep) = extract_decider(s, &one, k, 100, &rng(), Some(&z.problem.ensemble)).unwrap();
        assert!(rep.chi && rep.failures == 0 && rep.pass);
        let (d, rep) = extract_decider(s, &half(), k, 100, &rng(), None).unwrap();
        assert_eq!((rep.failure_rate, rep.bound), (1.0, 1.0));
        assert!(!d.decide(&Word::from_u64(0, d.rand_bits())).unwrap());
        let fair = zoo_make(&Term::parse("fair_coin").unwrap()).unwrap();
        let err = extract_decider(fair.require_sampler().unwrap(), &half(), k, 10, &rng(), None);
        assert!(matches!(err, Err(Error::Refused(_))));
    }

    #[test]
    fn fallu_examples() {
        let ks = [2u64, 3, 4, 5];
        let regrets: Vec<f64> = ks.iter().map(|&k| k as f64 * (k as f64).log2()).collect();
        let (raw, mono) = fallu_partial_sums(&ks, &regrets);
        assert!((raw[3] - 4.0).abs() < 1e-12);
        assert!(mono[3] >= raw[3]);
        let (raw, _) = fallu_partial_sums(&ks, &[0.0; 4]);
        assert_eq!(raw, vec![0.0; 4]);
        let (raw, _) = fallu_partial_sums(&[1, 2], &[5.0, -1.0]);
        assert_eq!(raw, vec![0.0, 0.0]);
    }
}
