use std::fmt;
use std::sync::Arc;

use super::{IndexK, RngStream};
use crate::codec::{Rational, Word};
use crate::vm::Tape;

/// Randomized generator of `(word, label)` pairs: the σ of a samplable
/// problem. `sample` must read only coins below `rand_bits(k)`.
pub trait SamplerScheme: Send + Sync {
    fn rand_bits(&self, k: IndexK) -> usize;

    fn advice(&self, _k: IndexK) -> Word {
        Word::new()
    }

    /// Bound on `|label|`.
    fn label_bound(&self) -> Rational;

    fn sample(&self, k: IndexK, coins: &dyn Tape) -> (Word, Rational);

    fn describe(&self) -> String {
        "sampler".into()
    }
}

#[derive(Clone)]
pub struct Sampler(Arc<dyn SamplerScheme>);

impl Sampler {
    pub fn new(scheme: impl SamplerScheme + 'static) -> Self {
        Sampler(Arc::new(scheme))
    }

    pub fn from_fn<R, G>(name: &str, label_bound: Rational, rand_bits: R, generate: G) -> Self
    where
        R: Fn(IndexK) -> usize + Send + Sync + 'static,
        G: Fn(IndexK, &dyn Tape) -> (Word, Rational) + Send + Sync + 'static,
    {
        Sampler::new(FnSampler {
            name: name.to_string(),
            label_bound,
            rand_bits: Arc::new(rand_bits),
            advice: None,
            generate: Arc::new(generate),
        })
    }

    pub fn rand_bits(&self, k: IndexK) -> usize {
        self.0.rand_bits(k)
    }

    pub fn advice(&self, k: IndexK) -> Word {
        self.0.advice(k)
    }

    pub fn label_bound(&self) -> Rational {
        self.0.label_bound()
    }

    pub fn sample_with(&self, k: IndexK, coins: &dyn Tape) -> (Word, Rational) {
        let (x, t) = self.0.sample(k, coins);
        debug_assert!(t.abs() <= self.label_bound().abs(), "label {t} out of bound");
        (x, t)
    }

    /// One draw, consuming exactly `rand_bits(k)` bits of `rng`.
    pub fn draw(&self, k: IndexK, rng: &mut RngStream) -> (Word, Rational) {
        let coins = rng.draw_bits(self.rand_bits(k));
        self.sample_with(k, &coins)
    }

    pub fn describe(&self) -> String {
        self.0.describe()
    }
}

impl fmt::Debug for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Sampler({})", self.describe())
    }
}

type GenFn = dyn Fn(IndexK, &dyn Tape) -> (Word, Rational) + Send + Sync;

/// Sampler backed by closures.
pub struct FnSampler {
    pub name: String,
    pub label_bound: Rational,
    pub rand_bits: Arc<dyn Fn(IndexK) -> usize + Send + Sync>,
    pub advice: Option<Arc<dyn Fn(IndexK) -> Word + Send + Sync>>,
    pub generate: Arc<GenFn>,
}

impl SamplerScheme for FnSampler {
    fn rand_bits(&self, k: IndexK) -> usize {
        (self.rand_bits)(k)
    }

    fn advice(&self, k: IndexK) -> Word {
        self.advice.as_ref().map(|a| a(k)).unwrap_or_default()
    }

    fn label_bound(&self) -> Rational {
        self.label_bound
    }

    fn sample(&self, k: IndexK, coins: &dyn Tape) -> (Word, Rational) {
        (self.generate)(k, coins)
    }

    fn describe(&self) -> String {
        self.name.clone()
    }
}
