//! Resolution of estimator expressions against a zoo problem.

use std::sync::Arc;

use crate::algebra::{chi_product, clip_between, conditional_quotient, linear_combine, product_estimator};
use crate::codec::Rational;
use crate::constructions::{build_advice_argmin_estimator, build_erm_estimator, ErmEstimator, ResourcePolicy, ZooProblem};
use crate::error::{Error, Result};
use crate::model::{conditional_expectation_estimator, kmap, Estimator, ObservationMap, VmEstimator};
use crate::term::Term;
use crate::vm::Program;

use super::checks::TestFn;

/// Context for [`resolve_estimator`]: default ERM seed and resource policy.
#[derive(Debug, Clone, Copy)]
pub struct ResolveContext {
    pub seed: u64,
    pub policy: ResourcePolicy,
}

/// A resolved expression with handles to any ERM parts, for audit records.
#[derive(Clone)]
pub struct Resolved {
    pub estimator: Estimator,
    pub erm: Vec<Arc<ErmEstimator>>,
}

/// Known expression heads with their shapes.
pub fn expression_names() -> Vec<(&'static str, &'static str)> {
    vec![
        ("const(q)", "constant q"),
        ("erm / erm(seed)", "ERM over programs, trained on the problem's sampler"),
        ("advice_argmin", "exact-error argmin program as advice"),
        ("oracle(m)", "conditional expectation given m = identity | constant | prefix(n)"),
        ("program(bits[, coins])", "fixed VM program with K1 step budget"),
        ("linear(t1, e1, t2, e2)", "t1 e1 + t2 e2"),
        ("quotient(eL, eChiF, M)", "eChiF / eL clamped to [-M, M]"),
        ("chi_product(eL, eFgivenL)", "eL eFgivenL"),
        ("clip(eChiF, eL, s, t)", "min(max(eChiF, s eL), t eL)"),
        ("product(e1, e2)", "e1(x1) e2(x2) on <x1, x2>"),
        ("linked(i, e)", "e resolved against linked problem i"),
    ]
}

pub fn parse_observation(t: &Term) -> Result<ObservationMap> {
    match t.head() {
        "identity" => Ok(ObservationMap::identity()),
        "constant" => Ok(ObservationMap::constant()),
        "prefix" => Ok(ObservationMap::prefix(t.expect_arity(1)?[0].natural()? as usize)),
        other => Err(Error::UnknownName(format!("observation {other}"))),
    }
}

pub fn resolve_estimator(t: &Term, zoo: &ZooProblem, ctx: &ResolveContext) -> Result<Resolved> {
    let mut erm = Vec::new();
    let estimator = resolve(t, zoo, ctx, &mut erm)?;
    Ok(Resolved { estimator, erm })
}

fn resolve(t: &Term, zoo: &ZooProblem, ctx: &ResolveContext, erm: &mut Vec<Arc<ErmEstimator>>) -> Result<Estimator> {
    let a = t.args();
    let prob = &zoo.problem;
    let mut sub = |t: &Term| resolve(t, zoo, ctx, erm);
    Ok(match t.head() {
        "const" => Estimator::constant(t.expect_arity(1)?[0].rational()?),
        "erm" => {
            let seed = match a {
                [] => ctx.seed,
                [s] => s.natural()?,
                _ => return Err(Error::InvalidParam("erm takes at most a seed".into())),
            };
            let (p, handle) = build_erm_estimator(zoo.require_sampler()?, ctx.policy, prob.bound, seed);
            erm.push(handle);
            p
        }
        "advice_argmin" => {
            t.expect_arity(0)?;
            build_advice_argmin_estimator(prob, ctx.policy, prob.bound)
        }
        "oracle" => {
            let m = match a {
                [] => ObservationMap::identity(),
                [m] => parse_observation(m)?,
                _ => return Err(Error::InvalidParam("oracle takes at most one observation".into())),
            };
            conditional_expectation_estimator(prob, m)
        }
        "program" => {
            let (bits, coins) = match a {
                [b] => (b.word()?, 0),
                [b, c] => (b.word()?, c.natural()? as usize),
                _ => return Err(Error::InvalidParam("program takes bits and an optional coin count".into())),
            };
            let policy = ctx.policy;
            VmEstimator::new(Program::new(bits), prob.bound)
                .with_rand_bits(kmap(move |_| coins))
                .with_budget(kmap(move |k| policy.step_budget(k)))
                .into()
        }
        "linear" => {
            let a = t.expect_arity(4)?;
            linear_combine(a[0].rational()?, &sub(&a[1])?, a[2].rational()?, &sub(&a[3])?)
        }
        "quotient" => {
            let a = t.expect_arity(3)?;
            conditional_quotient(&sub(&a[0])?, &sub(&a[1])?, a[2].rational()?)
        }
        "chi_product" => {
            let a = t.expect_arity(2)?;
            chi_product(&sub(&a[0])?, &sub(&a[1])?)
        }
        "clip" => {
            let a = t.expect_arity(4)?;
            clip_between(&sub(&a[0])?, &sub(&a[1])?, a[2].rational()?, a[3].rational()?)
        }
        "product" => {
            let a = t.expect_arity(2)?;
            product_estimator(&sub(&a[0])?, &sub(&a[1])?)
        }
        "linked" => {
            let a = t.expect_arity(2)?;
            let i = a[0].natural()? as usize;
            let inner = zoo
                .linked
                .get(i)
                .ok_or_else(|| Error::InvalidParam(format!("{} has no linked problem {i}", prob.name)))?;
            resolve(&a[1], inner, ctx, erm)?
        }
        other => return Err(Error::UnknownName(format!("estimator {other}"))),
    })
}

/// Test functions: `const(c)`, `value`, `bit(i)` (bit `i` of `x`), and
/// `fibers(m)` (expanded per index by the caller).
pub fn resolve_test(t: &Term, bound: Rational) -> Result<TestFn> {
    match t.head() {
        "const" => Ok(TestFn::constant(t.expect_arity(1)?[0].rational()?.to_f64())),
        "value" => Ok(TestFn::value(bound.to_f64())),
        "bit" => {
            let i = t.expect_arity(1)?[0].natural()? as usize;
            Ok(TestFn::new(&format!("bit({i})"), 1.0, move |x, _| x.get(i).unwrap_or(false) as u8 as f64))
        }
        other => Err(Error::UnknownName(format!("test function {other}"))),
    }
}
