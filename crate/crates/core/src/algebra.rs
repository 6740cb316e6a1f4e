//! Estimator combinators: linear combination, conditional quotient, product
//! with an indicator estimator, clipping, and the independence product.
//!
//! A combinator's coin string is its constituents' coin strings concatenated
//! in argument order, and its advice is the tuple encoding of theirs.

use crate::codec::{chev_decode, chev_encode, Rational, Word};
use crate::error::Result;
use crate::model::{Backend, Estimator, IndexK, Scheme};
use crate::vm::{SubTape, Tape};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Linear(Rational, Rational),
    CondQuotient(Rational),
    ChiProduct,
    ClipBetween(Rational, Rational),
    Product,
}

struct Combinator {
    kind: Kind,
    parts: [Estimator; 2],
}

impl Combinator {
    fn values(&self, k: IndexK, inputs: [&Word; 2], coins: &dyn Tape) -> Result<[Rational; 2]> {
        let r0 = self.parts[0].rand_bits(k);
        let r1 = self.parts[1].rand_bits(k);
        Ok([
            self.parts[0].evaluate(k, inputs[0], &SubTape::new(coins, 0, r0))?,
            self.parts[1].evaluate(k, inputs[1], &SubTape::new(coins, r0, r1))?,
        ])
    }
}

impl Scheme for Combinator {
    fn bound(&self) -> Rational {
        let [m0, m1] = [self.parts[0].bound(), self.parts[1].bound()];
        match self.kind {
            Kind::Linear(t0, t1) => t0.abs() * m0 + t1.abs() * m1,
            Kind::CondQuotient(m) => m.abs(),
            Kind::ChiProduct | Kind::Product => m0 * m1,
            Kind::ClipBetween(s, t) => m1 * s.abs().max(t.abs()),
        }
    }

    fn rand_bits(&self, k: IndexK) -> usize {
        self.parts[0].rand_bits(k) + self.parts[1].rand_bits(k)
    }

    fn advice(&self, k: IndexK) -> Result<Word> {
        Ok(chev_encode(&[self.parts[0].advice(k)?, self.parts[1].advice(k)?])?)
    }

    fn evaluate(&self, k: IndexK, x: &Word, coins: &dyn Tape) -> Result<Rational> {
        if self.kind == Kind::Product {
            let parts = match chev_decode(x) {
                Ok(p) if p.len() == 2 => p,
                // off the product support: both factors see the empty word
                _ => vec![Word::new(), Word::new()],
            };
            let [a, b] = self.values(k, [&parts[0], &parts[1]], coins)?;
            return Ok(a * b);
        }
        let [a, b] = self.values(k, [x, x], coins)?;
        Ok(match self.kind {
            Kind::Linear(t0, t1) => t0 * a + t1 * b,
            Kind::CondQuotient(m) => {
                let m = m.abs();
                match b.checked_div(a) {
                    None => m,
                    Some(q) => q.clamp_sym(m),
                }
            }
            Kind::ChiProduct => a * b,
            Kind::ClipBetween(s, t) => a.max(b * s).min(b * t),
            Kind::Product => unreachable!(),
        })
    }

    fn prepare(&self, k: IndexK) -> Result<()> {
        self.parts[0].prepare(k)?;
        self.parts[1].prepare(k)
    }

    fn backend(&self) -> Backend {
        Backend::Combinator
    }

    fn describe(&self) -> String {
        let [p0, p1] = [self.parts[0].describe(), self.parts[1].describe()];
        match self.kind {
            Kind::Linear(t0, t1) => format!("linear({t0}, {p0}, {t1}, {p1})"),
            Kind::CondQuotient(m) => format!("quotient({p0}, {p1}, {m})"),
            Kind::ChiProduct => format!("chi_product({p0}, {p1})"),
            Kind::ClipBetween(s, t) => format!("clip({p0}, {p1}, {s}, {t})"),
            Kind::Product => format!("product({p0}, {p1})"),
        }
    }
}

fn combine(kind: Kind, a: &Estimator, b: &Estimator) -> Estimator {
    Estimator::new(Combinator {
        kind,
        parts: [a.clone(), b.clone()],
    })
}

/// `t1 P1(x, y1) + t2 P2(x, y2)`.
pub fn linear_combine(t1: Rational, p1: &Estimator, t2: Rational, p2: &Estimator) -> Estimator {
    combine(Kind::Linear(t1, t2), p1, p2)
}

/// `P_χf / P_L` clamped to `[-M, M]`, and `M` where `P_L = 0`.
pub fn conditional_quotient(p_l: &Estimator, p_chif: &Estimator, m: Rational) -> Estimator {
    combine(Kind::CondQuotient(m), p_l, p_chif)
}

/// `P_L · P_{f|L}`.
pub fn chi_product(p_l: &Estimator, p_f_given_l: &Estimator) -> Estimator {
    combine(Kind::ChiProduct, p_l, p_f_given_l)
}

/// `min(max(P_χf, P_L s), P_L t)`.
pub fn clip_between(p_chif: &Estimator, p_l: &Estimator, s: Rational, t: Rational) -> Estimator {
    combine(Kind::ClipBetween(s, t), p_chif, p_l)
}

/// `P(⟨x1, x2⟩) = P1(x1) P2(x2)`; other words evaluate both factors on the
/// empty word.
pub fn product_estimator(p1: &Estimator, p2: &Estimator) -> Estimator {
    combine(Kind::Product, p1, p2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::w;
    use crate::model::{kmap, FnEstimator};
    use std::sync::Arc;

    fn c(n: i64, d: i64) -> Estimator {
        Estimator::constant(Rational::new(n, d).unwrap())
    }

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d).unwrap()
    }

    fn at(p: &Estimator, x: &str) -> Rational {
        let k = IndexK::new(0, 0);
        p.evaluate(k, &w(x), &Word::new()).unwrap()
    }

    #[test]
    fn examples() {
        let one = Rational::ONE;
        assert_eq!(at(&linear_combine(one, &c(1, 4), one, &c(1, 2)), ""), r(3, 4));
        assert_eq!(at(&conditional_quotient(&c(1, 2), &c(1, 4), one), ""), r(1, 2));
        assert_eq!(at(&conditional_quotient(&c(0, 1), &c(1, 4), one), ""), one);
        assert_eq!(at(&conditional_quotient(&c(1, 4), &c(1, 2), one), ""), one);
        assert_eq!(at(&conditional_quotient(&c(1, 4), &c(-1, 2), one), ""), -one);
        assert_eq!(at(&chi_product(&c(1, 2), &c(1, 1)), ""), r(1, 2));
        assert_eq!(at(&chi_product(&c(0, 1), &c(3, 4)), ""), r(0, 1));
        let (z, o) = (Rational::ZERO, Rational::ONE);
        assert_eq!(at(&clip_between(&c(1, 4), &c(1, 2), z, o), ""), r(1, 4));
        assert_eq!(at(&clip_between(&c(2, 1), &c(1, 2), z, o), ""), r(1, 2));
        assert_eq!(at(&clip_between(&c(-1, 1), &c(1, 2), z, o), ""), r(0, 1));
    }

    #[test]
    fn product_on_tuples_and_fallback() {
        let first = Estimator::from_fn("first", Rational::ONE, |_, x| Rational::integer(x.get(0).unwrap_or(false) as i64));
        let p = product_estimator(&first, &c(1, 3));
        let x = chev_encode(&[w("1"), w("0")]).unwrap();
        assert_eq!(at(&p, &x.to_string()), r(1, 3));
        assert_eq!(at(&p, "1"), r(0, 1));
        let id = product_estimator(&first, &c(1, 1));
        assert_eq!(at(&id, &chev_encode(&[w("1"), w("")]).unwrap().to_string()), Rational::ONE);
    }

    #[test]
    fn coins_split_in_argument_order_and_advice_is_a_tuple() {
        let coin = |i: usize| {
            Estimator::new(FnEstimator {
                name: format!("coin{i}"),
                bound: Rational::ONE,
                rand_bits: kmap(move |_| i + 1),
                eval: Arc::new(move |_, _, c| Ok(Rational::integer(c.bit(i) as i64))),
            })
        };
        let p = linear_combine(Rational::ONE, &coin(0), Rational::integer(2), &coin(1));
        let k = IndexK::new(0, 0);
        assert_eq!(p.rand_bits(k), 3);
        // coin0 reads bit 0; coin1 reads bit 1 of its own segment (bit 2 overall)
        assert_eq!(p.evaluate(k, &w(""), &w("100")).unwrap(), Rational::ONE);
        assert_eq!(p.evaluate(k, &w(""), &w("001")).unwrap(), Rational::integer(2));
        assert_eq!(p.evaluate(k, &w(""), &w("010")).unwrap(), Rational::ZERO);
        assert_eq!(p.advice(k).unwrap(), w("0101"));
        assert_eq!(p.bound(), Rational::integer(3));
    }
}
