//! Registry of named estimation problems, each with an exact sampler where
//! one exists.

use std::sync::{Arc, OnceLock};

use crate::codec::{chev_decode, chev_encode, Rational, Word};
use crate::error::{Error, Result};
use crate::model::{EstimationProblem, IndexK, Sampler, WordEnsemble};
use crate::term::Term;
use crate::vm::{SubTape, Tape};

/// A zoo entry: the problem, its sampler, and any problems built alongside it.
#[derive(Clone, Debug)]
pub struct ZooProblem {
    pub problem: EstimationProblem,
    pub sampler: Option<Sampler>,
    pub linked: Vec<ZooProblem>,
}

impl ZooProblem {
    fn new(problem: EstimationProblem, sampler: Option<Sampler>) -> Self {
        ZooProblem {
            problem,
            sampler,
            linked: Vec::new(),
        }
    }

    pub fn require_sampler(&self) -> Result<&Sampler> {
        self.sampler
            .as_ref()
            .ok_or_else(|| Error::Construction(format!("{} has no sampler", self.problem.name)))
    }
}

/// Names and parameter shapes accepted by [`zoo_make`].
pub fn zoo_names() -> Vec<(&'static str, &'static str)> {
    vec![
        ("fair_coin", "uniform K0-bit x, independent fair label; f = 1/2"),
        ("first_bit", "uniform K0-bit x; f = first bit"),
        ("parity(k)", "uniform K0-bit x; f = xor of the first k bits"),
        ("goldreich_levin(toy8)", "<owf(x), y> for uniform 8-bit x, y; f = x.y mod 2"),
        ("tally(k0[:q], ...)", "point mass on 1^K0; f = q for listed K0 (q defaults to 1), else 0"),
        ("point_mass(bits, q)", "point mass on the given word; f = q"),
        ("product(p1, p2)", "<x1, x2> with independent components; f = f1 f2"),
        ("conditional_pair(base, L)", "(D, chi_L), linked with (D, chi_L f) and (D | L, f); L = all | prefix(bits) | bit(i)"),
    ]
}

/// Builds the named problem, e.g. `product(first_bit, parity(2))`.
pub fn zoo_make(spec: &Term) -> Result<ZooProblem> {
    let args = spec.args();
    match spec.head() {
        "fair_coin" => Ok(fair_coin()),
        "first_bit" => Ok(first_bit()),
        "parity" => parity(spec.expect_arity(1)?[0].natural()? as usize),
        "goldreich_levin" => {
            match args {
                [] => {}
                [t] if t.atom()? == "toy8" => {}
                _ => return Err(Error::InvalidParam(format!("unknown one-way candidate in {spec}"))),
            }
            Ok(goldreich_levin())
        }
        "tally" => {
            let mut entries = Vec::with_capacity(args.len());
            for a in args {
                let s = a.atom()?;
                let (k0, q) = match s.split_once(':') {
                    Some((k0, q)) => (k0, q.parse().map_err(|_| Error::InvalidParam(format!("bad tally value {s:?}")))?),
                    None => (s, Rational::ONE),
                };
                let k0 = k0.parse().map_err(|_| Error::InvalidParam(format!("bad tally index {s:?}")))?;
                entries.push((k0, q));
            }
            tally(entries)
        }
        "point_mass" => {
            let a = spec.expect_arity(2)?;
            point_mass(a[0].word()?, a[1].rational()?)
        }
        "product" => {
            let a = spec.expect_arity(2)?;
            product(&zoo_make(&a[0])?, &zoo_make(&a[1])?)
        }
        "conditional_pair" => {
            let a = spec.expect_arity(2)?;
            conditional_pair(&zoo_make(&a[0])?, LanguageSpec::parse(&a[1])?)
        }
        other => Err(Error::UnknownName(other.to_string())),
    }
}

fn prefix_word(coins: &dyn Tape, n: usize) -> Word {
    Word::from_bits((0..n).map(|i| coins.bit(i))).expect("short word")
}

fn bit_rat(b: bool) -> Rational {
    Rational::integer(b as i64)
}

/// Uniform `K0`-bit words with target `f`; the sampler emits its first `K0`
/// coins with label `f`.
fn uniform_problem<F>(name: &str, f: F) -> ZooProblem
where
    F: Fn(&Word) -> Rational + Send + Sync + Clone + 'static,
{
    let g = f.clone();
    let sampler = Sampler::from_fn(name, Rational::ONE, |k| k.k0 as usize, move |k, c| {
        let x = prefix_word(c, k.k0 as usize);
        let t = g(&x);
        (x, t)
    });
    let problem = EstimationProblem::new(name, WordEnsemble::uniform_bits(name), Rational::ONE, move |_, x| f(x));
    ZooProblem::new(problem, Some(sampler))
}

fn fair_coin() -> ZooProblem {
    let name = "fair_coin";
    let sampler = Sampler::from_fn(name, Rational::ONE, |k| k.k0 as usize + 1, |k, c| {
        let n = k.k0 as usize;
        (prefix_word(c, n), bit_rat(c.bit(n)))
    });
    let problem = EstimationProblem::new(name, WordEnsemble::uniform_bits(name), Rational::ONE, |_, _| Rational::HALF);
    ZooProblem::new(problem, Some(sampler))
}

fn first_bit() -> ZooProblem {
    uniform_problem("first_bit", |x| bit_rat(x.get(0).unwrap_or(false)))
}

fn parity(k: usize) -> Result<ZooProblem> {
    Ok(uniform_problem(&format!("parity({k})"), move |x| {
        bit_rat((0..k.min(x.len())).filter(|&i| x.bit(i)).count() % 2 == 1)
    }))
}

const OWF_KEYS: [u8; 4] = [0x5a, 0xc3, 0x96, 0x3c];
const OWF_MUL: u8 = 0x1d;
const OWF_ROT: u32 = 3;

/// Toy 8-bit permutation: four rounds of xor with a round key, rotate left
/// by 3 and multiply by the odd constant 0x1d modulo 256. Not one-way in any
/// provable sense.
pub fn owf_toy8(x: u8) -> u8 {
    OWF_KEYS.iter().fold(x, |v, &key| (v ^ key).rotate_left(OWF_ROT).wrapping_mul(OWF_MUL))
}

pub fn owf_toy8_inverse(y: u8) -> u8 {
    static INV: OnceLock<[u8; 256]> = OnceLock::new();
    INV.get_or_init(|| {
        let mut t = [0u8; 256];
        for x in 0..=255u8 {
            t[owf_toy8(x) as usize] = x;
        }
        t
    })[y as usize]
}

fn byte_word(v: u8) -> Word {
    Word::from_u64(v as u64, 8)
}

fn goldreich_levin() -> ZooProblem {
    let name = "goldreich_levin(toy8)";
    let sampler = Sampler::from_fn(name, Rational::ONE, |_| 16, |_, c| {
        let x = prefix_word(c, 8).to_u64() as u8;
        let y = prefix_word(&SubTape::new(c, 8, 8), 8).to_u64() as u8;
        let word = chev_encode(&[byte_word(owf_toy8(x)), byte_word(y)]).expect("small tuple");
        (word, bit_rat((x & y).count_ones() % 2 == 1))
    });
    let target = |_: IndexK, w: &Word| -> Rational {
        match chev_decode(w).as_deref() {
            Ok([u, y]) if u.len() == 8 && y.len() == 8 => {
                let x = owf_toy8_inverse(u.to_u64() as u8);
                bit_rat((x & y.to_u64() as u8).count_ones() % 2 == 1)
            }
            _ => Rational::ZERO,
        }
    };
    let ensemble = WordEnsemble::sampled(name, sampler.clone(), true);
    ZooProblem::new(EstimationProblem::new(name, ensemble, Rational::ONE, target), Some(sampler))
}

fn ones(n: u64) -> Result<Word> {
    if n > 4096 {
        return Err(Error::Refused(format!("tally word of length {n}")));
    }
    Ok(Word::from_bits((0..n).map(|_| true))?)
}

fn tally(entries: Vec<(u64, Rational)>) -> Result<ZooProblem> {
    let bound = entries.iter().map(|e| e.1.abs()).max().unwrap_or(Rational::ZERO).max(Rational::ONE);
    let h = Arc::new(move |k0: u64| {
        entries.iter().find(|e| e.0 == k0).map_or(Rational::ZERO, |e| e.1)
    });
    let name = "tally";
    let hs = h.clone();
    let sampler = Sampler::from_fn(name, bound, |_| 0, move |k, _| {
        (ones(k.k0).unwrap_or_default(), hs(k.k0))
    });
    let ensemble = WordEnsemble::generated(name, |k0| Ok(vec![(ones(k0)?, 1.0)]));
    let problem = EstimationProblem::new(name, ensemble, bound, move |k, _| h(k.k0));
    Ok(ZooProblem::new(problem, Some(sampler)))
}

fn point_mass(word: Word, q: Rational) -> Result<ZooProblem> {
    let name = format!("point_mass({word}, {q})");
    let x = word.clone();
    let sampler = Sampler::from_fn(&name, q.abs(), |_| 0, move |_, _| (x.clone(), q));
    let ensemble = WordEnsemble::point_table(&name, vec![(word, 1.0)])?;
    let problem = EstimationProblem::new(&name, ensemble, q.abs(), move |_, _| q);
    Ok(ZooProblem::new(problem, Some(sampler)))
}

fn product(a: &ZooProblem, b: &ZooProblem) -> Result<ZooProblem> {
    let (pa, pb) = (a.problem.clone(), b.problem.clone());
    let name = format!("product({}, {})", pa.name, pb.name);
    let (ea, eb) = (pa.ensemble.clone(), pb.ensemble.clone());
    let ensemble = WordEnsemble::generated(&name, move |k0| {
        let k = IndexK::try_new(k0, 0)?;
        let (ta, tb) = (ea.support(k)?, eb.support(k)?);
        if ta.len() * tb.len() > crate::model::MAX_EXPLICIT_ENTRIES {
            return Err(Error::Refused(format!("product support of {} words", ta.len() * tb.len())));
        }
        let mut out = Vec::with_capacity(ta.len() * tb.len());
        for (x1, p1) in ta.iter() {
            for (x2, p2) in tb.iter() {
                out.push((chev_encode(&[x1.clone(), x2.clone()])?, p1 * p2));
            }
        }
        Ok(out)
    });
    let target = move |k: IndexK, w: &Word| match chev_decode(w).as_deref() {
        Ok([x1, x2]) => pa.f(k, x1) * pb.f(k, x2),
        _ => Rational::ZERO,
    };
    let bound = a.problem.bound * b.problem.bound;
    let sampler = match (&a.sampler, &b.sampler) {
        (Some(sa), Some(sb)) => {
            let (sa, sb) = (sa.clone(), sb.clone());
            let (ra, rb) = (sa.clone(), sb.clone());
            Some(Sampler::from_fn(
                &name,
                sa.label_bound() * sb.label_bound(),
                move |k| ra.rand_bits(k) + rb.rand_bits(k),
                move |k, c| {
                    let r1 = sa.rand_bits(k);
                    let (x1, t1) = sa.sample_with(k, &SubTape::new(c, 0, r1));
                    let (x2, t2) = sb.sample_with(k, &SubTape::new(c, r1, sb.rand_bits(k)));
                    (chev_encode(&[x1, x2]).expect("product word"), t1 * t2)
                },
            ))
        }
        _ => None,
    };
    let mut z = ZooProblem::new(EstimationProblem::new(&name, ensemble, bound, target), sampler);
    z.linked = vec![a.clone(), b.clone()];
    Ok(z)
}

/// A decidable word set for conditional problems.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LanguageSpec {
    All,
    Prefix(Word),
    /// Words whose bit `i` is 1.
    Bit(usize),
}

impl LanguageSpec {
    pub fn parse(t: &Term) -> Result<Self> {
        match t.head() {
            "all" => Ok(LanguageSpec::All),
            "prefix" => Ok(LanguageSpec::Prefix(t.expect_arity(1)?[0].word()?)),
            "bit" => Ok(LanguageSpec::Bit(t.expect_arity(1)?[0].natural()? as usize)),
            other => Err(Error::UnknownName(format!("language {other}"))),
        }
    }

    pub fn contains(&self, x: &Word) -> bool {
        match self {
            LanguageSpec::All => true,
            LanguageSpec::Prefix(p) => x.starts_with(p),
            LanguageSpec::Bit(i) => x.get(*i).unwrap_or(false),
        }
    }
}

/// `(D, χ_L)` with `(D, χ_L f)` and `(D | L, f)` linked, in that order.
fn conditional_pair(base: &ZooProblem, lang: LanguageSpec) -> Result<ZooProblem> {
    let p = base.problem.clone();
    let lang = Arc::new(lang);
    let chi_name = format!("chi_L({})", p.name);
    let l1 = lang.clone();
    let chi = EstimationProblem::new(&chi_name, p.ensemble.clone(), Rational::ONE, move |_, x| bit_rat(l1.contains(x)));
    let l2 = lang.clone();
    let f = p.target.clone();
    let chi_f = EstimationProblem::new(&format!("chi_L_f({})", p.name), p.ensemble.clone(), p.bound, move |k, x| {
        if l2.contains(x) {
            f(k, x)
        } else {
            Rational::ZERO
        }
    });
    let l3 = lang.clone();
    let cond_name = format!("{}|L", p.name);
    let conditioned = p.with_ensemble(&cond_name, p.ensemble.conditioned(&cond_name, move |x| l3.contains(x)));
    let label_sampler = |g: Arc<dyn Fn(&Word, Rational) -> Rational + Send + Sync>, name: &str| {
        base.sampler.as_ref().map(|s| {
            let (s1, s2) = (s.clone(), s.clone());
            Sampler::from_fn(name, s.label_bound().max(Rational::ONE), move |k| s1.rand_bits(k), move |k, c| {
                let (x, t) = s2.sample_with(k, c);
                let label = g(&x, t);
                (x, label)
            })
        })
    };
    let l4 = lang.clone();
    let chi_sampler = label_sampler(Arc::new(move |x, _| bit_rat(l4.contains(x))), &chi_name);
    let l5 = lang.clone();
    let chi_f_sampler = label_sampler(
        Arc::new(move |x, t| if l5.contains(x) { t } else { Rational::ZERO }),
        &chi_f.name,
    );
    let mut z = ZooProblem::new(chi, chi_sampler);
    z.linked = vec![ZooProblem::new(chi_f, chi_f_sampler), ZooProblem::new(conditioned, None)];
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tv_distance;

    fn make(s: &str) -> ZooProblem {
        zoo_make(&Term::parse(s).unwrap()).unwrap()
    }

    #[test]
    fn owf_is_a_permutation() {
        let mut seen = [false; 256];
        for x in 0..=255u8 {
            seen[owf_toy8(x) as usize] = true;
            assert_eq!(owf_toy8_inverse(owf_toy8(x)), x);
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn goldreich_levin_support_shape() {
        let z = make("goldreich_levin(toy8)");
        let k = IndexK::new(0, 1022);
        let t = z.problem.ensemble.support(k).unwrap();
        assert_eq!(t.len(), 1 << 16);
        for (w, p) in t.iter().step_by(97) {
            assert_eq!(*p, 1.0 / 65536.0);
            let parts = chev_decode(w).unwrap();
            assert_eq!(parts.len(), 2);
            assert!(parts.iter().all(|x| x.len() == 8));
            let f = z.problem.f(k, w);
            assert!(f == Rational::ZERO || f == Rational::ONE);
        }
        assert!((z.problem.mean_target(k).unwrap() - 0.5).abs() < 0.01);
    }

    #[test]
    fn product_of_point_masses() {
        let z = make("product(point_mass(0, 1/2), point_mass(1, 1/3))");
        let k = IndexK::new(0, 0);
        let t = z.problem.ensemble.support(k).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(z.problem.f(k, &t[0].0), Rational::new(1, 6).unwrap());
        assert_eq!(z.linked.len(), 2);
    }

    #[test]
    fn conditional_pair_on_full_language() {
        let z = make("conditional_pair(first_bit, all)");
        let k = IndexK::new(3, 0);
        let cond = &z.linked[1].problem;
        assert_eq!(tv_distance(&cond.ensemble, &z.problem.ensemble, k).unwrap(), 0.0);
        let half = make("conditional_pair(first_bit, prefix(1))");
        assert_eq!(half.linked[1].problem.ensemble.support(k).unwrap().len(), 4);
    }

    #[test]
    fn tally_targets() {
        let z = make("tally(1, 3:1/2)");
        for (k0, f) in [(0, Rational::ZERO), (1, Rational::ONE), (3, Rational::HALF)] {
            let k = IndexK::new(k0, 5);
            let t = z.problem.ensemble.support(k).unwrap();
            assert_eq!(t[0].0.len(), k0 as usize);
            assert_eq!(z.problem.f(k, &t[0].0), f);
        }
    }

    #[test]
    fn samplers_match_their_ensembles() {
        let k = IndexK::new(3, 0);
        for name in ["first_bit", "fair_coin", "parity(2)", "product(first_bit, parity(1))"] {
            let z = make(name);
            let s = z.sampler.clone().unwrap();
            let joint = crate::model::sampler_joint_table(&s, k).unwrap();
            let table = z.problem.ensemble.support(k).unwrap();
            let marginal: Vec<_> = joint.iter().map(|(x, p, _)| (x.clone(), *p)).collect();
            assert!(crate::model::tv_tables(&table, &marginal) < 1e-12, "{name}");
            for (x, _, m) in &joint {
                assert!((m - z.problem.f(k, x).to_f64()).abs() < 1e-12, "{name} {x}");
            }
        }
        assert!(zoo_make(&Term::parse("nope").unwrap()).is_err());
    }
}
