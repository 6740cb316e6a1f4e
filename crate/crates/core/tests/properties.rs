use proptest::prelude::*;

use opte_core::algebra::{chi_product, clip_between, linear_combine};
use opte_core::codec::{chev_decode, chev_encode, decode_nat, decode_rat, encode_nat, encode_rat};
use opte_core::harness::{fallu_partial_sums, uniqueness_distance, Mode};
use opte_core::model::tv_tables;
use opte_core::vm::{eval, Program};
use opte_core::{Estimator, IndexK, Rational, RngStream, Word, WordEnsemble};

fn word(max: usize) -> impl Strategy<Value = Word> {
    prop::collection::vec(any::<bool>(), 0..=max).prop_map(|b| Word::from_bits(b).unwrap())
}

fn rational() -> impl Strategy<Value = Rational> {
    (-1000i64..=1000, 1i64..=1000).prop_map(|(n, d)| Rational::new(n, d).unwrap())
}

fn unit() -> impl Strategy<Value = Rational> {
    (0i64..=64).prop_map(|n| Rational::new(n, 64).unwrap())
}

proptest! {
    #[test]
    fn chev_round_trips(parts in prop::collection::vec(word(24), 0..6)) {
        let enc = chev_encode(&parts).unwrap();
        prop_assert_eq!(enc.len(), parts.iter().map(|p| 2 * p.len() + 2).sum::<usize>());
        prop_assert_eq!(chev_decode(&enc).unwrap(), parts);
    }

    #[test]
    fn naturals_and_rationals_round_trip(n in any::<u64>(), q in rational()) {
        prop_assert_eq!(decode_nat(&encode_nat(n)).unwrap(), n);
        prop_assert_eq!(decode_rat(&encode_rat(q)).unwrap(), q);
    }

    #[test]
    fn decoders_are_total(w in word(40)) {
        let _ = chev_decode(&w);
        let _ = decode_nat(&w);
        let _ = decode_rat(&w);
    }

    #[test]
    fn halting_runs_are_stable_under_larger_budgets(
        code in word(48),
        budget in 1u64..200,
        extra in 1u64..1000,
        inputs in prop::collection::vec(word(16), 0..=3),
    ) {
        let p = Program::new(code);
        let a = eval(&p, budget, &inputs).unwrap();
        prop_assert_eq!(&a, &eval(&p, budget, &inputs).unwrap());
        if a.halted {
            prop_assert!(a.steps_used <= budget);
            prop_assert_eq!(a, eval(&p, budget + extra, &inputs).unwrap());
        }
    }

    #[test]
    fn linear_combination_of_constants(t1 in rational(), c1 in rational(), t2 in rational(), c2 in rational()) {
        let p = linear_combine(t1, &Estimator::constant(c1), t2, &Estimator::constant(c2));
        let k = IndexK::new(0, 0);
        prop_assert_eq!(p.evaluate(k, &Word::new(), &Word::new()).unwrap(), t1 * c1 + t2 * c2);
    }

    #[test]
    fn clip_lies_between_scaled_language_estimates(chif in unit(), l in unit(), s in unit(), t in unit()) {
        prop_assume!(s <= t);
        let p = clip_between(&Estimator::constant(chif), &Estimator::constant(l), s, t);
        let v = p.evaluate(IndexK::new(0, 0), &Word::new(), &Word::new()).unwrap();
        prop_assert!(l * s <= v && v <= l * t);
        let q = chi_product(&Estimator::constant(l), &Estimator::constant(chif));
        prop_assert_eq!(q.evaluate(IndexK::new(0, 0), &Word::new(), &Word::new()).unwrap(), l * chif);
    }

    #[test]
    fn fallu_sums_are_monotone(regrets in prop::collection::vec(-1.0f64..1.0, 1..20)) {
        let ks: Vec<u64> = (1..=regrets.len() as u64).collect();
        let (raw, mono) = fallu_partial_sums(&ks, &regrets);
        for i in 1..raw.len() {
            prop_assert!(raw[i] >= raw[i - 1]);
            prop_assert!(mono[i] >= mono[i - 1]);
        }
        for (r, m) in raw.iter().zip(&mono) {
            prop_assert!(m >= r);
        }
    }

    #[test]
    fn distance_of_constants_is_their_squared_gap(a in rational(), b in rational(), k0 in 0u64..5) {
        let e = WordEnsemble::uniform_bits("u");
        let k = IndexK::new(k0, 0);
        let rng = RngStream::new(0, k, "p", 0);
        let (pa, pb) = (Estimator::constant(a), Estimator::constant(b));
        let d = uniqueness_distance(&pa, &pb, &e, k, Mode::Exact, &rng).unwrap().mean;
        let expect = (a - b).to_f64().powi(2);
        prop_assert!((d - expect).abs() <= 1e-9 * expect.max(1.0));
        prop_assert_eq!(d, uniqueness_distance(&pb, &pa, &e, k, Mode::Exact, &rng).unwrap().mean);
    }

    #[test]
    fn total_variation_is_a_bounded_symmetric_distance(
        pa in prop::collection::vec(0.0f64..1.0, 4),
        pb in prop::collection::vec(0.0f64..1.0, 4),
    ) {
        let norm = |p: &[f64]| {
            let s: f64 = p.iter().sum::<f64>() + 1e-9;
            p.iter().enumerate().map(|(i, v)| (Word::from_u64(i as u64, 2), v / s)).collect::<Vec<_>>()
        };
        let (a, b) = (norm(&pa), norm(&pb));
        let d = tv_tables(&a, &b);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
        prop_assert!((d - tv_tables(&b, &a)).abs() <= 1e-15);
        prop_assert!(tv_tables(&a, &a) == 0.0);
    }
}
