//! Exact expectations over uniform coin strings.
//!
//! Rather than enumerating all `2^r` coin strings, the evaluation is replayed
//! on partial assignments: whenever it asks for a coin that is not yet fixed,
//! the run is discarded and both values of that coin are explored. The
//! expectation is exact for any evaluation that is a deterministic function
//! of the coins it reads, and costs about twice the number of distinct read
//! patterns.

use std::cell::Cell;

use crate::error::{Error, Result};
use crate::vm::Tape;

/// Cap on the number of distinct coin-read patterns (leaves) explored.
pub const MAX_EXACT_LEAVES: usize = 1 << 20;
/// Deepest chain of adaptively read coins that is explored exactly.
pub const MAX_EXACT_COIN_BITS: usize = 20;

struct PartialCoins<'a> {
    assigned: &'a [Option<bool>],
    missing: Cell<Option<usize>>,
}

impl Tape for PartialCoins<'_> {
    fn len(&self) -> usize {
        self.assigned.len()
    }

    fn bit(&self, i: usize) -> bool {
        match self.assigned[i] {
            Some(b) => b,
            None => {
                if self.missing.get().is_none() {
                    self.missing.set(Some(i));
                }
                false
            }
        }
    }
}

struct Explorer<'f, F> {
    f: &'f mut F,
    assigned: Vec<Option<bool>>,
    leaves: usize,
}

impl<F> Explorer<'_, F>
where
    F: FnMut(&dyn Tape) -> Result<f64>,
{
    fn explore(&mut self, depth: usize) -> Result<f64> {
        let tape = PartialCoins {
            assigned: &self.assigned,
            missing: Cell::new(None),
        };
        let value = (self.f)(&tape)?;
        let Some(i) = tape.missing.get() else {
            self.leaves += 1;
            if self.leaves > MAX_EXACT_LEAVES {
                return Err(Error::Refused(format!(
                    "exact coin expectation needs more than {MAX_EXACT_LEAVES} read patterns; use Monte-Carlo"
                )));
            }
            return Ok(value);
        };
        if depth >= MAX_EXACT_COIN_BITS {
            return Err(Error::Refused(format!(
                "evaluation reads more than {MAX_EXACT_COIN_BITS} coins adaptively; use Monte-Carlo"
            )));
        }
        self.assigned[i] = Some(false);
        let v0 = self.explore(depth + 1)?;
        self.assigned[i] = Some(true);
        let v1 = self.explore(depth + 1)?;
        self.assigned[i] = None;
        Ok(0.5 * v0 + 0.5 * v1)
    }
}

/// `E_{z ~ U^rand_bits}[f(z)]`, exactly.
pub fn expect_over_coins<F>(rand_bits: usize, mut f: F) -> Result<f64>
where
    F: FnMut(&dyn Tape) -> Result<f64>,
{
    let mut explorer = Explorer {
        f: &mut f,
        assigned: vec![None; rand_bits],
        leaves: 0,
    };
    explorer.explore(0)
}

struct LeafCollector<'f, F, T> {
    f: &'f mut F,
    assigned: Vec<Option<bool>>,
    leaves: Vec<(T, f64)>,
}

impl<F, T> LeafCollector<'_, F, T>
where
    F: FnMut(&dyn Tape) -> Result<T>,
{
    fn explore(&mut self, depth: usize) -> Result<()> {
        let tape = PartialCoins {
            assigned: &self.assigned,
            missing: Cell::new(None),
        };
        let value = (self.f)(&tape)?;
        let Some(i) = tape.missing.get() else {
            if self.leaves.len() >= MAX_EXACT_LEAVES {
                return Err(Error::Refused(format!(
                    "exact coin law needs more than {MAX_EXACT_LEAVES} read patterns; use Monte-Carlo"
                )));
            }
            self.leaves.push((value, 0.5f64.powi(depth as i32)));
            return Ok(());
        };
        if depth >= MAX_EXACT_COIN_BITS {
            return Err(Error::Refused(format!(
                "evaluation reads more than {MAX_EXACT_COIN_BITS} coins adaptively; use Monte-Carlo"
            )));
        }
        for b in [false, true] {
            self.assigned[i] = Some(b);
            self.explore(depth + 1)?;
        }
        self.assigned[i] = None;
        Ok(())
    }
}

/// The values of `f` on each distinct coin-read pattern, with the pattern's
/// probability; the probabilities sum to 1.
pub fn coin_leaves<T, F>(rand_bits: usize, mut f: F) -> Result<Vec<(T, f64)>>
where
    F: FnMut(&dyn Tape) -> Result<T>,
{
    let mut c = LeafCollector {
        f: &mut f,
        assigned: vec![None; rand_bits],
        leaves: Vec::new(),
    };
    c.explore(0)?;
    Ok(c.leaves)
}

/// Compensated (Neumaier) summation in iteration order.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Word;

    /// Reference: plain enumeration of every coin string.
    fn brute(rand_bits: usize, f: impl Fn(&dyn Tape) -> f64) -> f64 {
        let n = 1u64 << rand_bits;
        (0..n)
            .map(|v| f(&Word::from_u64(v, rand_bits)))
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn matches_brute_force_on_adaptive_reads() {
        // reads coin 0, then coin 1 or coins 2 and 3 depending on it
        let f = |t: &dyn Tape| {
            if t.bit(0) {
                t.bit(1) as u8 as f64 * 3.0
            } else {
                (t.bit(2) as u8 + 2 * t.bit(3) as u8) as f64
            }
        };
        let exact = expect_over_coins(6, |t| Ok(f(t))).unwrap();
        assert!((exact - brute(6, f)).abs() < 1e-15);
        assert!((exact - (0.5 * 1.5 + 0.5 * 1.5)).abs() < 1e-15);
    }

    #[test]
    fn deterministic_runs_once() {
        let mut calls = 0;
        let v = expect_over_coins(4094, |_| {
            calls += 1;
            Ok(0.25)
        })
        .unwrap();
        assert_eq!(v, 0.25);
        assert_eq!(calls, 1);
    }

    #[test]
    fn deep_reads_are_refused() {
        let r = expect_over_coins(64, |t| Ok((0..30).filter(|&i| t.bit(i)).count() as f64));
        assert!(matches!(r, Err(Error::Refused(_))));
    }

    #[test]
    fn leaves_carry_pattern_probabilities() {
        let leaves = coin_leaves(8, |t| Ok(if t.bit(0) { 1 } else if t.bit(1) { 2 } else { 3 })).unwrap();
        assert_eq!(leaves, vec![(3, 0.25), (2, 0.25), (1, 0.5)]);
        assert_eq!(coin_leaves(0, |_| Ok(7)).unwrap(), vec![(7, 1.0)]);
    }

    #[test]
    fn compensated_sum() {
        let vals = std::iter::once(1e16).chain(std::iter::repeat(1.0).take(1000)).chain([-1e16]);
        assert_eq!(neumaier_sum(vals), 1000.0);
    }
}
