//! Estimators: schemes with per-index advice and random-bit counts.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use super::{IndexK, RngStream};
use crate::codec::{Rational, Word};
use crate::error::{Error, Result};
use crate::vm::{Machine, Program, Tape, MAX_BUDGET};

/// Largest random-bit count an estimator may declare.
pub const MAX_RAND_BITS: usize = 1 << 16;
/// Largest advice word an estimator may declare.
pub const MAX_ADVICE_BITS: usize = 1 << 12;

/// A per-index map.
pub type KMap<T> = Arc<dyn Fn(IndexK) -> T + Send + Sync>;

pub fn kmap<T, F: Fn(IndexK) -> T + Send + Sync + 'static>(f: F) -> KMap<T> {
    Arc::new(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    VmProgram,
    NativeConst,
    NativeFn,
    Combinator,
    Oracle,
    Erm,
    AdviceArgmin,
}

/// Evaluation contract for estimators. `evaluate` must read only coins
/// below `rand_bits(k)` and return a value in `[-bound, bound]`.
pub trait Scheme: Send + Sync {
    fn bound(&self) -> Rational;

    fn rand_bits(&self, _k: IndexK) -> usize {
        0
    }

    fn advice(&self, _k: IndexK) -> Result<Word> {
        Ok(Word::new())
    }

    fn evaluate(&self, k: IndexK, x: &Word, coins: &dyn Tape) -> Result<Rational>;

    /// Performs per-index precomputation (program selection, fiber tables)
    /// ahead of parallel evaluation.
    fn prepare(&self, _k: IndexK) -> Result<()> {
        Ok(())
    }

    fn backend(&self) -> Backend;

    fn describe(&self) -> String;
}

#[derive(Clone)]
pub struct Estimator(Arc<dyn Scheme>);

impl Estimator {
    pub fn new(scheme: impl Scheme + 'static) -> Self {
        Estimator(Arc::new(scheme))
    }

    pub fn constant(value: Rational) -> Self {
        Self::new(ConstEstimator(value))
    }

    /// A deterministic estimator given by a closure of `(K, x)`.
    pub fn from_fn<F>(name: &str, bound: Rational, f: F) -> Self
    where
        F: Fn(IndexK, &Word) -> Rational + Send + Sync + 'static,
    {
        Self::new(FnEstimator {
            name: name.to_string(),
            bound,
            rand_bits: kmap(|_| 0),
            eval: Arc::new(move |k, x, _| Ok(f(k, x))),
        })
    }

    pub fn bound(&self) -> Rational {
        self.0.bound()
    }

    pub fn rand_bits(&self, k: IndexK) -> usize {
        self.0.rand_bits(k)
    }

    pub fn advice(&self, k: IndexK) -> Result<Word> {
        self.0.advice(k)
    }

    pub fn prepare(&self, k: IndexK) -> Result<()> {
        self.0.prepare(k)
    }

    pub fn backend(&self) -> Backend {
        self.0.backend()
    }

    pub fn describe(&self) -> String {
        self.0.describe()
    }

    /// Evaluates on the given coin tape, which must hold `rand_bits(k)` bits.
    pub fn evaluate(&self, k: IndexK, x: &Word, coins: &dyn Tape) -> Result<Rational> {
        let v = self.0.evaluate(k, x, coins)?;
        debug_assert!(v.abs() <= self.bound().abs(), "{} out of bound for {}", v, self.describe());
        Ok(v.clamp_sym(self.bound()))
    }

    /// `evaluate` as a float, convenient for the exact explorers.
    pub fn value(&self, k: IndexK, x: &Word, coins: &dyn Tape) -> Result<f64> {
        Ok(self.evaluate(k, x, coins)?.to_f64())
    }

    /// Checks the declared resource bounds at `k`.
    pub fn check_resources(&self, k: IndexK) -> Result<()> {
        let r = self.rand_bits(k);
        if r > MAX_RAND_BITS {
            return Err(Error::Refused(format!("{} declares {r} random bits", self.describe())));
        }
        let a = self.advice(k)?.len();
        if a > MAX_ADVICE_BITS {
            return Err(Error::Refused(format!("{} declares {a} advice bits", self.describe())));
        }
        Ok(())
    }
}

impl fmt::Debug for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Estimator({})", self.describe())
    }
}

/// Draws exactly `rand_bits(k)` bits from `rng` and evaluates `p` at `x`.
pub fn eval_estimator(p: &Estimator, k: IndexK, x: &Word, rng: &mut RngStream) -> Result<Rational> {
    let coins = rng.draw_bits(p.rand_bits(k));
    p.evaluate(k, x, &coins)
}

#[derive(Debug, Clone, Copy)]
pub struct ConstEstimator(pub Rational);

impl Scheme for ConstEstimator {
    fn bound(&self) -> Rational {
        self.0.abs()
    }

    fn evaluate(&self, _k: IndexK, _x: &Word, _coins: &dyn Tape) -> Result<Rational> {
        Ok(self.0)
    }

    fn backend(&self) -> Backend {
        Backend::NativeConst
    }

    fn describe(&self) -> String {
        format!("const({})", self.0)
    }
}

type EvalFn = dyn Fn(IndexK, &Word, &dyn Tape) -> Result<Rational> + Send + Sync;

/// Estimator backed by a closure of `(K, x, coins)`.
pub struct FnEstimator {
    pub name: String,
    pub bound: Rational,
    pub rand_bits: KMap<usize>,
    pub eval: Arc<EvalFn>,
}

impl Scheme for FnEstimator {
    fn bound(&self) -> Rational {
        self.bound
    }

    fn rand_bits(&self, k: IndexK) -> usize {
        (self.rand_bits)(k)
    }

    fn evaluate(&self, k: IndexK, x: &Word, coins: &dyn Tape) -> Result<Rational> {
        (self.eval)(k, x, coins)
    }

    fn backend(&self) -> Backend {
        Backend::NativeFn
    }

    fn describe(&self) -> String {
        self.name.clone()
    }
}

thread_local! {
    static MACHINE: RefCell<Machine> = RefCell::new(Machine::new());
}

/// Runs `program` on `[x, coins, advice]` with a per-thread machine and
/// returns the clamped decoded output.
pub fn run_program(
    program: &Program,
    budget: u64,
    x: &Word,
    coins: &dyn Tape,
    advice: &Word,
    bound: Rational,
) -> Rational {
    let budget = budget.min(MAX_BUDGET);
    MACHINE.with(|m| {
        let tapes: [&dyn Tape; 3] = [x, coins, advice];
        match m.try_borrow_mut() {
            Ok(mut m) => m.estimate(program, budget, &tapes, bound),
            Err(_) => Machine::new().estimate(program, budget, &tapes, bound),
        }
    })
}

/// A VM program run for `K1` steps on `[x, coins, A(K)]`, output clamped to
/// `[-M, M]`.
#[derive(Clone)]
pub struct VmEstimator {
    pub program: Program,
    pub bound: Rational,
    pub rand_bits: KMap<usize>,
    pub advice: KMap<Word>,
    pub budget: KMap<u64>,
}

impl VmEstimator {
    /// Deterministic, advice-free program with step budget `K1`.
    pub fn new(program: Program, bound: Rational) -> Self {
        VmEstimator {
            program,
            bound,
            rand_bits: kmap(|_| 0),
            advice: kmap(|_| Word::new()),
            budget: kmap(|k| k.k1),
        }
    }

    pub fn with_rand_bits(mut self, rand_bits: KMap<usize>) -> Self {
        self.rand_bits = rand_bits;
        self
    }

    pub fn with_advice(mut self, advice: KMap<Word>) -> Self {
        self.advice = advice;
        self
    }

    pub fn with_budget(mut self, budget: KMap<u64>) -> Self {
        self.budget = budget;
        self
    }
}

impl Scheme for VmEstimator {
    fn bound(&self) -> Rational {
        self.bound
    }

    fn rand_bits(&self, k: IndexK) -> usize {
        (self.rand_bits)(k)
    }

    fn advice(&self, k: IndexK) -> Result<Word> {
        Ok((self.advice)(k))
    }

    fn evaluate(&self, k: IndexK, x: &Word, coins: &dyn Tape) -> Result<Rational> {
        let advice = (self.advice)(k);
        Ok(run_program(&self.program, (self.budget)(k), x, coins, &advice, self.bound))
    }

    fn backend(&self) -> Backend {
        Backend::VmProgram
    }

    fn describe(&self) -> String {
        format!("program({})", self.program.code())
    }
}

impl From<VmEstimator> for Estimator {
    fn from(v: VmEstimator) -> Self {
        Estimator::new(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::w;

    #[test]
    fn constant_ignores_input() {
        let p = Estimator::constant(Rational::HALF);
        let mut rng = RngStream::new(0, IndexK::new(1, 1), "t", 0);
        for x in ["", "0", "1101"] {
            assert_eq!(eval_estimator(&p, IndexK::new(1, 1), &w(x), &mut rng).unwrap(), Rational::HALF);
        }
    }

    #[test]
    fn bit_copy_program() {
        let p: Estimator =
            VmEstimator::new(Program::assemble("READBIT 0 0, EMITBIT").unwrap(), Rational::ONE).into();
        let k = IndexK::new(1, 16);
        let mut rng = RngStream::new(0, k, "t", 0);
        assert_eq!(eval_estimator(&p, k, &w("1"), &mut rng).unwrap(), Rational::ONE);
        assert_eq!(eval_estimator(&p, k, &w("0"), &mut rng).unwrap(), Rational::ZERO);
    }

    #[test]
    fn deterministic_twice() {
        let p: Estimator = VmEstimator::new(Program::new(w("1101")), Rational::ONE).into();
        let k = IndexK::new(1, 16);
        let mut a = RngStream::new(1, k, "t", 0);
        let mut b = RngStream::new(2, k, "t", 0);
        assert_eq!(
            eval_estimator(&p, k, &w("01"), &mut a).unwrap(),
            eval_estimator(&p, k, &w("01"), &mut b).unwrap()
        );
    }

    #[test]
    fn coin_reading_program() {
        // READBIT 1 0, EMITBIT copies the first coin
        let p: Estimator = VmEstimator::new(Program::assemble("READBIT 1 0, EMITBIT").unwrap(), Rational::ONE)
            .with_rand_bits(kmap(|_| 1))
            .into();
        let k = IndexK::new(0, 8);
        assert_eq!(p.evaluate(k, &w(""), &w("1")).unwrap(), Rational::ONE);
        assert_eq!(p.evaluate(k, &w(""), &w("0")).unwrap(), Rational::ZERO);
    }
}
