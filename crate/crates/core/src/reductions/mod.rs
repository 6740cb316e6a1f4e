//! Pseudo-invertible reductions between estimation problems, estimator
//! pullbacks along them, dominance checks and the complete problem.
//!
//! A reduction from `(D, f)` to `(E, g)` over an index map `α` is a
//! randomized map `π^K(x, z)` into the words of `E^{α(K)}`. It is verified
//! numerically per index: (i) `π_*D^K` matches `E^{α(K)}` (or, for a
//! dominated reduction, `E^{α(K)}` reweighted by `W^K`), (ii) `g∘π` tracks
//! `f`, and (iii) a pseudo-inverse `τ` resamples `D^K` conditioned on the
//! fiber of `π`.

mod complete;

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

pub use crate::model::IndexMap;
use crate::codec::{Rational, Word};
use crate::error::{Error, Result};
use crate::model::{
    expect_over_coins, kmap, neumaier_sum, Backend, EstimationProblem, Estimator, IndexK, KMap,
    Scheme, Table, WordEnsemble, MAX_EXACT_COIN_BITS, MAX_RAND_BITS,
};
use crate::vm::{SubTape, Tape};

pub use complete::{
    build_canonical_reduction, build_complete_problem, encode_index, CanonicalReduction,
    CompleteProblem, CompleteProblemSpec, FEvaluator, LengthPolicy, SourceProgram,
};

type WordMap = Arc<dyn Fn(IndexK, &Word, &dyn Tape) -> Word + Send + Sync>;
type TableMap = Arc<dyn Fn(IndexK) -> Result<Table> + Send + Sync>;

/// A randomized word map with its coin count.
#[derive(Clone)]
pub struct CoinMap {
    pub rand_bits: KMap<usize>,
    pub map: WordMap,
}

impl CoinMap {
    pub fn new<R, F>(rand_bits: R, map: F) -> Self
    where
        R: Fn(IndexK) -> usize + Send + Sync + 'static,
        F: Fn(IndexK, &Word, &dyn Tape) -> Word + Send + Sync + 'static,
    {
        CoinMap {
            rand_bits: kmap(rand_bits),
            map: Arc::new(map),
        }
    }

    pub fn deterministic<F>(f: F) -> Self
    where
        F: Fn(IndexK, &Word) -> Word + Send + Sync + 'static,
    {
        CoinMap::new(|_| 0, move |k, x, _| f(k, x))
    }

    pub fn apply(&self, k: IndexK, x: &Word, coins: &dyn Tape) -> Word {
        (self.map)(k, x, coins)
    }
}

/// Radon-Nikodym weight `W` of a dominated reduction, optionally with a
/// direct way to tabulate `E^{α(K)}·E[W^K]` on the support of `W^K`.
#[derive(Clone)]
pub struct Dominance {
    pub weight: Estimator,
    pub reweighted: Option<TableMap>,
}

#[derive(Clone)]
pub struct Reduction {
    pub name: String,
    pub alpha: IndexMap,
    pub forward: CoinMap,
    pub inverse: Option<CoinMap>,
    /// Averaging width; `None` for a precise reduction (`γ ≡ 1`).
    pub gamma: Option<KMap<u64>>,
    pub dominance: Option<Dominance>,
}

impl Reduction {
    pub fn new(name: &str, forward: CoinMap) -> Self {
        Reduction {
            name: name.to_string(),
            alpha: IndexMap::Identity,
            forward,
            inverse: None,
            gamma: None,
            dominance: None,
        }
    }

    /// `π(x) = x` with the point-mass pseudo-inverse.
    pub fn identity() -> Self {
        Reduction::relabel("identity", |x| x.clone(), Some(|y: &Word| y.clone()))
    }

    /// `π ≡ y0`. No pseudo-inverse.
    pub fn constant(y0: Word) -> Self {
        Reduction::new("constant", CoinMap::deterministic(move |_, _| y0.clone()))
    }

    /// Deterministic `π = f`; `inverse`, when given, is used as a
    /// deterministic pseudo-inverse.
    pub fn relabel<F, G>(name: &str, f: F, inverse: Option<G>) -> Self
    where
        F: Fn(&Word) -> Word + Send + Sync + 'static,
        G: Fn(&Word) -> Word + Send + Sync + 'static,
    {
        let mut red = Reduction::new(name, CoinMap::deterministic(move |_, x| f(x)));
        red.inverse = inverse.map(|g| CoinMap::deterministic(move |_, y| g(y)));
        red
    }

    pub fn with_alpha(mut self, alpha: IndexMap) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_inverse(mut self, inverse: CoinMap) -> Self {
        self.inverse = Some(inverse);
        self
    }

    pub fn with_gamma<G: Fn(IndexK) -> u64 + Send + Sync + 'static>(mut self, gamma: G) -> Self {
        self.gamma = Some(kmap(gamma));
        self
    }

    pub fn with_dominance(mut self, dominance: Dominance) -> Self {
        self.dominance = Some(dominance);
        self
    }

    pub fn gamma(&self, k: IndexK) -> u64 {
        self.gamma.as_ref().map_or(1, |g| g(k))
    }

    pub fn rand_bits(&self, k: IndexK) -> usize {
        (self.forward.rand_bits)(k)
    }
}

struct Pullback {
    red: Reduction,
    target: Estimator,
    averaged: bool,
}

impl Pullback {
    fn target_index(&self, k: IndexK) -> Result<IndexK> {
        self.red.alpha.apply(k)
    }

    fn term_bits(&self, k: IndexK) -> usize {
        let kt = self.target_index(k).unwrap_or(k);
        self.red.rand_bits(k) + self.target.rand_bits(kt)
    }

    fn width(&self, k: IndexK) -> u64 {
        if self.averaged {
            self.red.gamma(k).max(1)
        } else {
            1
        }
    }
}

impl Scheme for Pullback {
    fn bound(&self) -> Rational {
        self.target.bound()
    }

    fn rand_bits(&self, k: IndexK) -> usize {
        self.term_bits(k).saturating_mul(self.width(k) as usize)
    }

    fn advice(&self, k: IndexK) -> Result<Word> {
        self.target.advice(self.target_index(k)?)
    }

    fn evaluate(&self, k: IndexK, x: &Word, coins: &dyn Tape) -> Result<Rational> {
        let kt = self.target_index(k)?;
        let (rp, rt) = (self.red.rand_bits(k), self.target.rand_bits(kt));
        let gamma = self.width(k);
        if (rp + rt).saturating_mul(gamma as usize) > MAX_RAND_BITS {
            return Err(Error::Refused(format!(
                "{gamma} averaged terms of {} coins exceed the {MAX_RAND_BITS}-bit coin budget",
                rp + rt
            )));
        }
        let mut sum = Rational::ZERO;
        for i in 0..gamma as usize {
            let base = i * (rp + rt);
            let y = self.red.forward.apply(k, x, &SubTape::new(coins, base, rp));
            sum = sum + self.target.evaluate(kt, &y, &SubTape::new(coins, base + rp, rt))?;
        }
        Ok(if gamma == 1 {
            sum
        } else {
            sum.checked_div(Rational::integer(gamma as i64)).expect("γ ≥ 1")
        })
    }

    fn prepare(&self, k: IndexK) -> Result<()> {
        self.target.prepare(self.target_index(k)?)
    }

    fn backend(&self) -> Backend {
        Backend::Combinator
    }

    fn describe(&self) -> String {
        let kind = if self.averaged { "averaged" } else { "pullback" };
        format!("{kind}({}, {})", self.red.name, self.target.describe())
    }
}

/// `P(x, z w) = P_target(π(x, z), w)` at index `α(K)`.
pub fn apply_precise_reduction(red: &Reduction, target: &Estimator) -> Result<Estimator> {
    if red.gamma.is_some() {
        return Err(Error::InvalidParam(format!(
            "{} is an averaged reduction; use apply_averaged_reduction",
            red.name
        )));
    }
    Ok(Estimator::new(Pullback {
        red: red.clone(),
        target: target.clone(),
        averaged: false,
    }))
}

/// Mean of `P_target(π(x, z_i), w_i)` over `γ(K)` independent pairs, the
/// pairs' coins laid out one after another.
pub fn apply_averaged_reduction(red: &Reduction, target: &Estimator) -> Estimator {
    Estimator::new(Pullback {
        red: red.clone(),
        target: target.clone(),
        averaged: true,
    })
}

/// Re-indexed ensemble `(D^α)^K = D^{α(K)}`.
pub fn pullback_ensemble(e: &WordEnsemble, alpha: IndexMap) -> WordEnsemble {
    e.pullback(alpha)
}

fn enumerate_coins(r: usize, what: &str) -> Result<u64> {
    if r > MAX_EXACT_COIN_BITS {
        return Err(Error::Refused(format!(
            "{what} uses {r} coins; exhaustive verification handles at most {MAX_EXACT_COIN_BITS}"
        )));
    }
    Ok(1u64 << r)
}

/// Joint law of `(π(x, z), x)` for `x ~ D^K`, `z` uniform, as a map from
/// image word to the source words reaching it.
fn pushforward_joint(
    red: &Reduction,
    source: &Table,
    k: IndexK,
) -> Result<BTreeMap<Word, BTreeMap<Word, f64>>> {
    let r = red.rand_bits(k);
    let n = enumerate_coins(r, &format!("the forward map of {}", red.name))?;
    let scale = 1.0 / n as f64;
    let parts: Vec<Vec<(Word, Word, f64)>> = source
        .par_iter()
        .map(|(x, p)| {
            (0..n)
                .map(|z| (red.forward.apply(k, x, &Word::from_u64(z, r)), x.clone(), p * scale))
                .collect()
        })
        .collect();
    let mut joint: BTreeMap<Word, BTreeMap<Word, f64>> = BTreeMap::new();
    for (y, x, m) in parts.into_iter().flatten() {
        *joint.entry(y).or_default().entry(x).or_default() += m;
    }
    Ok(joint)
}

/// `π_*D^K` as a table in word order.
pub fn pushforward(red: &Reduction, source: &WordEnsemble, k: IndexK) -> Result<Table> {
    let joint = pushforward_joint(red, &*source.support(k)?, k)?;
    Ok(joint
        .into_iter()
        .map(|(y, xs)| (y, neumaier_sum(xs.into_values())))
        .collect())
}

/// `E[W^K(y)]` over the coins of `W`.
fn mean_weight(w: &Estimator, k: IndexK, y: &Word) -> Result<f64> {
    expect_over_coins(w.rand_bits(k), |c| Ok(w.evaluate(k, y, c)?.to_f64()))
}

/// `y ↦ E^{α(K)}(y)·E[W^K(y)]` over the target support, zero entries dropped.
fn reweighted_table(dom: &Dominance, target: &WordEnsemble, k: IndexK, kt: IndexK) -> Result<Table> {
    if let Some(f) = &dom.reweighted {
        return f(k);
    }
    dom.weight.prepare(k)?;
    let rows: Result<Vec<(Word, f64)>> = target
        .support(kt)?
        .par_iter()
        .map(|(y, p)| Ok((y.clone(), p * mean_weight(&dom.weight, k, y)?)))
        .collect();
    Ok(rows?.into_iter().filter(|(_, m)| *m != 0.0).collect())
}

/// `Σ_y |a(y) − b(y)|` over the union of the supports.
pub fn l1_tables(a: &Table, b: &Table) -> f64 {
    let mut diff: BTreeMap<&Word, f64> = BTreeMap::new();
    for (x, p) in a {
        *diff.entry(x).or_default() += p;
    }
    for (x, p) in b {
        *diff.entry(x).or_default() -= p;
    }
    neumaier_sum(diff.into_values().map(f64::abs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub i: f64,
    pub ii: f64,
    pub iii: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            i: 1e-9,
            ii: 1e-9,
            iii: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetMode {
    /// `E|f(x) − g(π(x, z))|`.
    #[default]
    Strict,
    /// `E_x|f(x) − E_z g(π(x, z))|`.
    Lax,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VerifyOptions {
    pub thresholds: Thresholds,
    pub mode: TargetMode,
}

/// Residuals of one reduction at one index. A residual is `None` when it
/// could not be evaluated (no pseudo-inverse for (iii)).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionReport {
    #[serde(rename = "K")]
    pub k: IndexK,
    pub residual_i: Option<f64>,
    pub residual_ii: Option<f64>,
    pub residual_iii: Option<f64>,
    pub thresholds: Thresholds,
    pub mode: TargetMode,
    pub dominated: bool,
    pub pass: bool,
}

/// Exhaustive check of the three reduction conditions at `k`.
///
/// (i) is `TV(π_*D^K, E^{α(K)})`, or for a dominated reduction half the L1
/// distance between `π_*D^K` and `E^{α(K)}·E[W^K]`. (ii) is taken over
/// `D^K × U` with the target `g` read at `α(K)`. (iii) is
/// `E_{y ~ π_*D}[TV(D^K | π^{-1}(y), τ_y)]`.
///
/// `n` is the Monte-Carlo draw count for (ii) when the forward map has too
/// many coins for enumeration; (i) and (iii) are then left unevaluated.
pub fn verify_reduction(
    red: &Reduction,
    source: &EstimationProblem,
    target: &EstimationProblem,
    k: IndexK,
    n: usize,
    opts: &VerifyOptions,
) -> Result<ReductionReport> {
    let kt = red.alpha.apply(k)?;
    let table = source.ensemble.support(k)?;
    let g = |y: &Word| target.f(kt, y).to_f64();

    let (residual_i, residual_ii, residual_iii) = match pushforward_joint(red, &table, k) {
        Ok(joint) => {
            let image: Table = joint
                .iter()
                .map(|(y, xs)| (y.clone(), neumaier_sum(xs.values().copied())))
                .collect();
            let res_i = match &red.dominance {
                Some(dom) => 0.5 * l1_tables(&image, &reweighted_table(dom, &target.ensemble, k, kt)?),
                None => 0.5 * l1_tables(&image, &*target.ensemble.support(kt)?),
            };
            let res_ii = target_residual(red, source, &table, k, opts.mode, &g, None)?;
            let res_iii = match &red.inverse {
                Some(tau) => Some(fiber_residual(tau, &joint, &image, k)?),
                None => None,
            };
            (Some(res_i), Some(res_ii), res_iii)
        }
        Err(Error::Refused(_)) => {
            let res_ii = target_residual(red, source, &table, k, opts.mode, &g, Some(n.max(1)))?;
            (None, Some(res_ii), None)
        }
        Err(e) => return Err(e),
    };
    let t = opts.thresholds;
    let ok = |r: Option<f64>, th: f64| r.map_or(true, |r| r <= th);
    Ok(ReductionReport {
        k,
        residual_i,
        residual_ii,
        residual_iii,
        thresholds: t,
        mode: opts.mode,
        dominated: red.dominance.is_some(),
        pass: ok(residual_i, t.i) && ok(residual_ii, t.ii) && ok(residual_iii, t.iii),
    })
}

fn target_residual<G: Fn(&Word) -> f64 + Sync>(
    red: &Reduction,
    source: &EstimationProblem,
    table: &Table,
    k: IndexK,
    mode: TargetMode,
    g: &G,
    mc: Option<usize>,
) -> Result<f64> {
    let r = red.rand_bits(k);
    let per_x = |x: &Word| -> Result<f64> {
        let fx = source.f(k, x).to_f64();
        let coin_mean = |h: &dyn Fn(f64) -> f64| -> Result<f64> {
            match mc {
                None => Ok(neumaier_sum(
                    (0..1u64 << r).map(|z| h(g(&red.forward.apply(k, x, &Word::from_u64(z, r))))),
                ) / (1u64 << r) as f64),
                Some(n) => {
                    let rng = crate::model::RngStream::new(0, k, "reduction-ii", 0)
                        .derive(&x.to_string(), 0);
                    let vals = (0..n).map(|i| {
                        let z = rng.derive("z", i as u64).draw_bits(r);
                        h(g(&red.forward.apply(k, x, &z)))
                    });
                    Ok(neumaier_sum(vals) / n as f64)
                }
            }
        };
        match mode {
            TargetMode::Strict => coin_mean(&|gy| (fx - gy).abs()),
            TargetMode::Lax => Ok((fx - coin_mean(&|gy| gy)?).abs()),
        }
    };
    let terms: Result<Vec<f64>> = table.par_iter().map(|(x, p)| Ok(p * per_x(x)?)).collect();
    Ok(neumaier_sum(terms?))
}

fn fiber_residual(
    tau: &CoinMap,
    joint: &BTreeMap<Word, BTreeMap<Word, f64>>,
    image: &Table,
    k: IndexK,
) -> Result<f64> {
    let r = (tau.rand_bits)(k);
    let n = enumerate_coins(r, "the pseudo-inverse")?;
    let mass: BTreeMap<&Word, f64> = image.iter().map(|(y, p)| (y, *p)).collect();
    let terms: Vec<f64> = joint
        .par_iter()
        .map(|(y, xs)| {
            let py = mass[y];
            let posterior: Table = xs.iter().map(|(x, m)| (x.clone(), m / py)).collect();
            let mut resampled: BTreeMap<Word, f64> = BTreeMap::new();
            for z in 0..n {
                *resampled.entry(tau.apply(k, y, &Word::from_u64(z, r))).or_default() += 1.0 / n as f64;
            }
            py * 0.5 * l1_tables(&posterior, &resampled.into_iter().collect())
        })
        .collect();
    Ok(neumaier_sum(terms))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominanceRow {
    #[serde(rename = "K")]
    pub k: IndexK,
    pub residual: f64,
}

/// `Σ_x |E^K(x)·E[W^K(x)] − D^K(x)|` per index.
pub fn check_dominance(
    dominated: &WordEnsemble,
    dominating: &WordEnsemble,
    w: &Estimator,
    ks: &[IndexK],
) -> Result<Vec<DominanceRow>> {
    ks.iter()
        .map(|&k| {
            let dom = Dominance {
                weight: w.clone(),
                reweighted: None,
            };
            let ew = reweighted_table(&dom, dominating, k, k)?;
            Ok(DominanceRow {
                k,
                residual: l1_tables(&ew, &*dominated.support(k)?),
            })
        })
        .collect()
}
