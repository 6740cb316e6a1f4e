//! The complete problem `(D_F, f_F)` and the canonical reduction into it.
//!
//! A word of `D_F^K` is `⟨b, En(K1), a, x⟩` with `b`, `a` uniform `r(K1)`-bit
//! words and `x` the output of the program `a` run for `K1` steps on tapes
//! `[En(K), w]`, `w` uniform of `s(K1)` bits. Its target is `F(φ, k, x)` when
//! `b` begins with the self-delimiting code `chev(φ)` of some `φ`, else 0.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::{CoinMap, Dominance, Reduction};
use crate::codec::{chev_decode, chev_decode_prefix, chev_encode, decode_nat, encode_nat, Rational, Word};
use crate::error::{Error, Result};
use crate::model::{
    neumaier_sum, run_program, EstimationProblem, Estimator, IndexK, IndexMap, Sampler, Table, WordEnsemble,
    MAX_INDEX,
};
use crate::vm::{eval, eval_traced, Opcode, Program, MAX_BUDGET};

/// Largest `r` or `s` a complete problem accepts.
pub const MAX_LEN: usize = 16;

/// Step budget used when checking that a source program is representable.
const PROBE_BUDGET: u64 = 1 << 16;

/// Length policy for `r` or `s` as a function of `K1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LengthPolicy {
    Const(usize),
    /// `min(cap, ⌊log2(K1 + 2)⌋)`.
    Log2 { cap: usize },
}

impl LengthPolicy {
    pub fn at(&self, k1: u64) -> usize {
        match *self {
            LengthPolicy::Const(n) => n,
            LengthPolicy::Log2 { cap } => cap.min((k1 + 2).ilog2() as usize),
        }
    }

    fn cap(&self) -> usize {
        match *self {
            LengthPolicy::Const(n) => n,
            LengthPolicy::Log2 { cap } => cap,
        }
    }
}

type FFn = dyn Fn(&Word, u64, &Word) -> Rational + Send + Sync;

/// The bounded function `F(φ, k, x)`.
#[derive(Clone)]
pub struct FEvaluator {
    pub name: String,
    pub bound: Rational,
    eval: Arc<FFn>,
}

impl FEvaluator {
    pub fn new<F>(name: &str, bound: Rational, f: F) -> Self
    where
        F: Fn(&Word, u64, &Word) -> Rational + Send + Sync + 'static,
    {
        FEvaluator {
            name: name.to_string(),
            bound: bound.abs(),
            eval: Arc::new(f),
        }
    }

    /// `φ` run as an estimator program on `x` for `k` steps, no coins or
    /// advice.
    pub fn vm(bound: Rational) -> Self {
        let m = bound.abs();
        FEvaluator::new("vm", m, move |phi, k, x| {
            let empty = Word::new();
            run_program(&Program::new(phi.clone()), k, x, &empty, &empty, m)
        })
    }

    /// Bit number `φ` (read in binary, the empty word being 0) of `x`; 0 past
    /// the end of `x`.
    pub fn bit() -> Self {
        FEvaluator::new("bit", Rational::ONE, |phi, _, x| {
            let i = if phi.len() > 32 { usize::MAX } else { phi.to_u64() as usize };
            Rational::integer(x.get(i).unwrap_or(false) as i64)
        })
    }

    pub fn eval(&self, phi: &Word, k: u64, x: &Word) -> Rational {
        (self.eval)(phi, k, x).clamp_sym(self.bound)
    }
}

impl std::fmt::Debug for FEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FEvaluator({})", self.name)
    }
}

#[derive(Debug, Clone)]
pub struct CompleteProblemSpec {
    pub f: FEvaluator,
    pub r: LengthPolicy,
    pub s: LengthPolicy,
}

/// `En(K)`: the tuple encoding of `(K0, K1)`.
pub fn encode_index(k: IndexK) -> Word {
    chev_encode(&[encode_nat(k.k0), encode_nat(k.k1)]).expect("two naturals always encode")
}

#[derive(Clone)]
pub struct CompleteProblem {
    pub spec: CompleteProblemSpec,
    pub problem: EstimationProblem,
    pub sampler: Sampler,
}

/// `x = Ev^{K1}(a; En(K), w)`; the empty word if `a` does not halt.
fn run_sampler_program(k: IndexK, a: &Word, w: &Word) -> Word {
    let budget = k.k1.min(MAX_BUDGET);
    eval(&Program::new(a.clone()), budget, &[encode_index(k), w.clone()])
        .expect("budget capped and two tapes")
        .output
}

fn f_target(f: &FEvaluator, y: &Word) -> Rational {
    let Ok(parts) = chev_decode(y) else {
        return Rational::ZERO;
    };
    let [b, k, _a, x] = parts.as_slice() else {
        return Rational::ZERO;
    };
    let (Ok((phi, _)), Ok(k)) = (chev_decode_prefix(b, 0), decode_nat(k)) else {
        return Rational::ZERO;
    };
    f.eval(&phi, k, x)
}

/// Builds `(D_F, f_F)` with its exact sampler. The ensemble is
/// sampler-backed, so its support is enumerable only while `2r + s ≤ 20`.
pub fn build_complete_problem(spec: CompleteProblemSpec) -> Result<CompleteProblem> {
    if spec.r.cap() > MAX_LEN || spec.s.cap() > MAX_LEN {
        return Err(Error::Refused(format!(
            "complete problem lengths are limited to {MAX_LEN} bits"
        )));
    }
    // both policies only change where K1 + 2 is a power of two
    let probes = std::iter::once(0).chain((1..=MAX_LEN as u32 + 1).map(|j| (1u64 << j) - 2));
    for k1 in probes {
        if spec.r.at(k1) > spec.s.at(k1) {
            return Err(Error::InvalidParam(format!(
                "r({k1}) = {} exceeds s({k1}) = {}",
                spec.r.at(k1),
                spec.s.at(k1)
            )));
        }
    }
    let (rp, sp) = (spec.r, spec.s);
    let fs = spec.f.clone();
    let sampler = Sampler::from_fn(
        "complete",
        spec.f.bound,
        move |k| 2 * rp.at(k.k1) + sp.at(k.k1),
        move |k, c| {
            let (r, s) = (rp.at(k.k1), sp.at(k.k1));
            let bits = |from: usize, n: usize| Word::from_bits((from..from + n).map(|i| c.bit(i))).unwrap();
            let (b, a, w) = (bits(0, r), bits(r, r), bits(2 * r, s));
            let x = run_sampler_program(k, &a, &w);
            let y = chev_encode(&[b, encode_nat(k.k1), a, x]).expect("short parts");
            let label = f_target(&fs, &y);
            (y, label)
        },
    );
    let ft = spec.f.clone();
    let problem = EstimationProblem::new(
        &format!("complete({})", spec.f.name),
        WordEnsemble::sampled("complete", sampler.clone(), false),
        spec.f.bound,
        move |_, y| f_target(&ft, y),
    );
    Ok(CompleteProblem {
        spec,
        problem,
        sampler,
    })
}

impl CompleteProblem {
    pub fn r(&self, k: IndexK) -> usize {
        self.spec.r.at(k.k1)
    }

    pub fn s(&self, k: IndexK) -> usize {
        self.spec.s.at(k.k1)
    }

    pub fn target(&self, y: &Word) -> Rational {
        f_target(&self.spec.f, y)
    }

    /// Law of `Ev^{K1}(a; En(K), w)` for `w` uniform of `s(K1)` bits.
    pub fn output_law(&self, k: IndexK, a: &Word) -> BTreeMap<Word, f64> {
        let s = self.s(k);
        let n = 1u64 << s;
        let mut law: BTreeMap<Word, f64> = BTreeMap::new();
        for v in 0..n {
            *law.entry(run_sampler_program(k, a, &Word::from_u64(v, s))).or_default() += 1.0 / n as f64;
        }
        law
    }
}

/// A source sampler given as a program over tapes `[En(K), w]` reading at
/// most `coins` bits of `w`.
#[derive(Debug, Clone)]
pub struct SourceProgram {
    pub program: Program,
    pub coins: usize,
}

pub struct CanonicalReduction {
    pub reduction: Reduction,
    /// `α_p(K) = (K0, K1 + offset)`.
    pub alpha: IndexMap,
    pub offset: u64,
    pub b: Word,
    pub a: Word,
    pub weight: Estimator,
    /// Longest source word.
    pub max_len: usize,
    complete: CompleteProblem,
}

struct Probe {
    steps: u64,
    max_len: usize,
}

/// Runs the source program on every coin string and checks it halts inside
/// its own code, so that any padding after it is never executed.
fn probe_source(src: &SourceProgram) -> Result<Probe> {
    if src.coins > MAX_LEN {
        return Err(Error::Refused(format!("source programs may use at most {MAX_LEN} coins")));
    }
    let code_nibbles = src.program.len_bits() / 4;
    let mut probe = Probe { steps: 0, max_len: 0 };
    let unrepresentable = |why: String| Error::Construction(format!("unrepresentable sampler: {why}"));
    for v in 0..1u64 << src.coins {
        let w = Word::from_u64(v, src.coins);
        let (res, trace) = eval_traced(&src.program, PROBE_BUDGET, &[Word::new(), w.clone()])?;
        if !res.halted {
            return Err(unrepresentable(format!("no halt within {PROBE_BUDGET} steps on coins {w}")));
        }
        for t in &trace {
            let width = if matches!(t.opcode, Opcode::ReadBit | Opcode::Jz) { 2 } else { 1 };
            if t.pc + width > code_nibbles {
                return Err(unrepresentable(format!(
                    "executes nibble {} beyond its {code_nibbles} whole nibbles",
                    t.pc + width - 1
                )));
            }
        }
        for fill in [false, true] {
            let mut longer = w.clone();
            for _ in 0..8 {
                longer.push(fill)?;
            }
            if eval(&src.program, PROBE_BUDGET, &[Word::new(), longer])?.output != res.output {
                return Err(unrepresentable(format!("reads more than {} coins", src.coins)));
            }
        }
        probe.steps = probe.steps.max(res.steps_used);
        probe.max_len = probe.max_len.max(res.output.len());
    }
    Ok(probe)
}

fn eval_poly(q: &[u64], x: u64) -> u64 {
    q.iter().rev().fold(0u64, |acc, &c| acc.saturating_mul(x).saturating_add(c))
}

/// The reduction `π^K(x, z_b z_a) = ⟨b z_b, En(p(K1)), a z_a, x⟩` with
/// `b = chev(φ)`, `a` the source program and `p(K1) = K1 + c`, `c` the least
/// offset meeting the length, step and `q` requirements. The pseudo-inverse
/// projects onto `x` and `W = 2^{|a|+|b|}` on well-formed words.
pub fn build_canonical_reduction(
    source: &SourceProgram,
    phi: &Word,
    q: &[u64],
    complete: &CompleteProblem,
) -> Result<CanonicalReduction> {
    let probe = probe_source(source)?;
    let b = chev_encode(&[phi.clone()])?;
    let a = source.program.code().clone();
    let need = b.len().max(a.len());
    let spec = &complete.spec;
    let floor = probe.steps.max(eval_poly(q, probe.max_len as u64));
    let offset = (floor..=MAX_INDEX / 2)
        .find(|&c| spec.r.at(c) >= need && spec.s.at(c) >= source.coins)
        .ok_or_else(|| {
            Error::Construction(format!(
                "no index gives r ≥ {need} and s ≥ {} within the policy caps",
                source.coins
            ))
        })?;
    let alpha = IndexMap::Poly(vec![offset, 1]);
    let (lb, la) = (b.len(), a.len());
    let rp = spec.r;
    let pad = move |k: IndexK| 2 * rp.at(k.k1 + offset) - la - lb;

    let (bf, af) = (b.clone(), a.clone());
    let forward = CoinMap::new(pad, move |k, x, z| {
        let r = rp.at(k.k1 + offset);
        let mut first = bf.clone();
        let mut third = af.clone();
        for i in 0..r - lb {
            first.push(z.bit(i)).expect("short");
        }
        for i in r - lb..2 * r - la - lb {
            third.push(z.bit(i)).expect("short");
        }
        chev_encode(&[first, encode_nat(k.k1 + offset), third, x.clone()]).expect("short parts")
    });
    let inverse = CoinMap::deterministic(|_, y| match chev_decode(y) {
        Ok(parts) if parts.len() == 4 => parts[3].clone(),
        _ => Word::new(),
    });

    let max_len = probe.max_len;
    let w_value = Rational::integer(1i64 << (la + lb));
    let (bw, aw) = (b.clone(), a.clone());
    let weight = Estimator::from_fn("W", w_value, move |k, y| {
        let h = rp.at(k.k1 + offset).max(max_len);
        let ok = match chev_decode(y) {
            Ok(p) if p.len() == 4 => {
                p[0].starts_with(&bw)
                    && p[0].len() - lb <= h
                    && p[1] == encode_nat(k.k1 + offset)
                    && p[2].starts_with(&aw)
                    && p[2].len() - la <= h
                    && p[3].len() <= h
            }
            _ => false,
        };
        if ok {
            w_value
        } else {
            Rational::ZERO
        }
    });

    let mut canon = CanonicalReduction {
        reduction: Reduction::new("canonical", forward)
            .with_alpha(alpha.clone())
            .with_inverse(inverse),
        alpha,
        offset,
        b,
        a,
        weight,
        max_len,
        complete: complete.clone(),
    };
    let shared = Arc::new(canon.clone_parts());
    canon.reduction = canon.reduction.with_dominance(Dominance {
        weight: canon.weight.clone(),
        reweighted: Some(Arc::new(move |k| shared.reweighted(k))),
    });
    Ok(canon)
}

/// What the reweighted table needs, detached from the reduction itself.
struct Parts {
    offset: u64,
    b: Word,
    a: Word,
    max_len: usize,
    complete: CompleteProblem,
}

impl Parts {
    fn reweighted(&self, k: IndexK) -> Result<Table> {
        let kt = IndexK::try_new(k.k0, k.k1 + self.offset)?;
        let r = self.complete.r(kt);
        let h = r.max(self.max_len);
        let (lb, la) = (self.b.len(), self.a.len());
        let scale = 2f64.powi((la + lb) as i32 - 2 * r as i32);
        let nz_a = 1u64 << (r - la);
        let nz_b = 1u64 << (r - lb);
        let kk = encode_nat(kt.k1);
        let rows: Vec<Vec<(Word, f64)>> = (0..nz_a)
            .into_par_iter()
            .map(|za| {
                let mut a_full = self.a.clone();
                a_full.extend_from(&Word::from_u64(za, r - la)).expect("short");
                let law = self.complete.output_law(kt, &a_full);
                let mut out = Vec::new();
                for zb in 0..nz_b {
                    let mut b_full = self.b.clone();
                    b_full.extend_from(&Word::from_u64(zb, r - lb)).expect("short");
                    for (x, p) in law.iter().filter(|(x, _)| x.len() <= h) {
                        let y = chev_encode(&[b_full.clone(), kk.clone(), a_full.clone(), x.clone()])
                            .expect("short parts");
                        out.push((y, p * scale));
                    }
                }
                out
            })
            .collect();
        Ok(rows.into_iter().flatten().collect())
    }
}

impl CanonicalReduction {
    fn clone_parts(&self) -> Parts {
        Parts {
            offset: self.offset,
            b: self.b.clone(),
            a: self.a.clone(),
            max_len: self.max_len,
            complete: self.complete.clone(),
        }
    }

    /// `D_F^{α(K)}·W^K` on the support of `W^K`, computed from the sampler
    /// definition of `D_F`.
    pub fn reweighted(&self, k: IndexK) -> Result<Table> {
        self.clone_parts().reweighted(k)
    }

    /// `Σ_y |D_F^{α(K)}(y) W^K(y) − (π_*D^K)(y)|`.
    pub fn dominance_residual(&self, source: &WordEnsemble, k: IndexK) -> Result<f64> {
        let image = super::pushforward(&self.reduction, source, k)?;
        Ok(super::l1_tables(&self.reweighted(k)?, &image))
    }

    /// Total mass of `D_F^{α(K)}·W^K`.
    pub fn reweighted_mass(&self, k: IndexK) -> Result<f64> {
        Ok(neumaier_sum(self.reweighted(k)?.into_iter().map(|e| e.1)))
    }
}
