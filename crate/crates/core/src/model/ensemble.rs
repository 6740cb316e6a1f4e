//! Word ensembles: index-dependent distributions over words.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::BufRead;
use std::sync::{Arc, Mutex};

use super::{IndexK, RngStream, Sampler};
use crate::codec::Word;
use crate::error::{Error, Result};
use crate::model::exact::MAX_EXACT_COIN_BITS;

/// Most entries an explicit table may hold for one index.
pub const MAX_EXPLICIT_ENTRIES: usize = 4096;
/// Allowed deviation of an explicit table's total mass from 1.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// `(word, probability)` entries in canonical entry order.
pub type Table = Vec<(Word, f64)>;

type TableFn = dyn Fn(u64) -> Result<Table> + Send + Sync;
type Predicate = dyn Fn(&Word) -> bool + Send + Sync;

/// Index re-mapping `α` used by ensemble pullbacks and reductions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexMap {
    Identity,
    Constant(IndexK),
    /// `α_p(K) = (K0, p(K1))`, `p` given by natural coefficients, constant
    /// term first.
    Poly(Vec<u64>),
    /// `(K0, K1) ↦ (K0, k1)`: forgets the resource parameter.
    EtaLift { k1: u64 },
}

impl IndexMap {
    pub fn apply(&self, k: IndexK) -> Result<IndexK> {
        match self {
            IndexMap::Identity => Ok(k),
            IndexMap::Constant(c) => Ok(*c),
            IndexMap::Poly(coeffs) => {
                let mut acc: u128 = 0;
                for &c in coeffs.iter().rev() {
                    acc = acc.saturating_mul(k.k1 as u128).saturating_add(c as u128);
                }
                let k1 = u64::try_from(acc).unwrap_or(u64::MAX);
                IndexK::try_new(k.k0, k1)
            }
            IndexMap::EtaLift { k1 } => IndexK::try_new(k.k0, *k1),
        }
    }

    fn keeps_k0(&self) -> bool {
        !matches!(self, IndexMap::Constant(_))
    }
}

enum Kind {
    Fixed(BTreeMap<u64, Arc<Table>>),
    Generated(Arc<TableFn>),
    Sampled(Sampler),
    Pullback(WordEnsemble, IndexMap),
    Conditioned(WordEnsemble, Arc<Predicate>),
}

struct Inner {
    name: String,
    kind: Kind,
    eta_lifted: bool,
    cache: Mutex<HashMap<IndexK, Arc<Table>>>,
}

/// A family `K ↦ D^K` of distributions over words. Cheap to clone.
#[derive(Clone)]
pub struct WordEnsemble(Arc<Inner>);

fn validate(table: &Table, what: &str) -> Result<()> {
    if table.is_empty() {
        return Err(Error::InvalidTable(format!("{what}: empty table")));
    }
    if table.len() > MAX_EXPLICIT_ENTRIES {
        return Err(Error::InvalidTable(format!(
            "{what}: {} entries exceed {MAX_EXPLICIT_ENTRIES}",
            table.len()
        )));
    }
    let mut seen = std::collections::HashSet::with_capacity(table.len());
    for (w, p) in table {
        if !(p.is_finite() && *p > 0.0 && *p <= 1.0 + NORMALIZATION_TOL) {
            return Err(Error::InvalidTable(format!("{what}: probability {p} for {w}")));
        }
        if !seen.insert(w) {
            return Err(Error::InvalidTable(format!("{what}: duplicate word {w}")));
        }
    }
    let total: f64 = super::exact::neumaier_sum(table.iter().map(|e| e.1));
    if (total - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::InvalidTable(format!("{what}: total mass {total}")));
    }
    Ok(())
}

impl WordEnsemble {
    fn build(name: &str, kind: Kind, eta_lifted: bool) -> Self {
        WordEnsemble(Arc::new(Inner {
            name: name.to_string(),
            kind,
            eta_lifted,
            cache: Mutex::new(HashMap::new()),
        }))
    }

    /// Explicit tables keyed by `K0`; the distribution ignores `K1`.
    pub fn explicit(name: &str, tables: BTreeMap<u64, Table>) -> Result<Self> {
        let mut fixed = BTreeMap::new();
        for (k0, t) in tables {
            validate(&t, &format!("{name} K0={k0}"))?;
            fixed.insert(k0, Arc::new(t));
        }
        Ok(Self::build(name, Kind::Fixed(fixed), true))
    }

    /// The same explicit table at every index.
    pub fn point_table(name: &str, table: Table) -> Result<Self> {
        validate(&table, name)?;
        let table = Arc::new(table);
        Ok(Self::generated(name, move |_| Ok(table.as_ref().clone())))
    }

    /// Explicit tables produced on demand from `K0` (validated on first use).
    pub fn generated<F>(name: &str, f: F) -> Self
    where
        F: Fn(u64) -> Result<Table> + Send + Sync + 'static,
    {
        Self::build(name, Kind::Generated(Arc::new(f)), true)
    }

    /// Uniform distribution over all `K0`-bit words.
    pub fn uniform_bits(name: &str) -> Self {
        Self::generated(name, |k0| {
            if k0 > 12 {
                return Err(Error::Refused(format!(
                    "uniform table over {k0}-bit words exceeds {MAX_EXPLICIT_ENTRIES} entries"
                )));
            }
            let n = 1u64 << k0;
            Ok((0..n)
                .map(|v| (Word::from_u64(v, k0 as usize), 1.0 / n as f64))
                .collect())
        })
    }

    /// Distribution of the word emitted by one draw of `sampler`.
    pub fn sampled(name: &str, sampler: Sampler, eta_lifted: bool) -> Self {
        Self::build(name, Kind::Sampled(sampler), eta_lifted)
    }

    /// `(D^α)^K := D^{α(K)}`.
    pub fn pullback(&self, alpha: IndexMap) -> Self {
        let eta = match &alpha {
            IndexMap::Constant(_) | IndexMap::EtaLift { .. } => true,
            IndexMap::Identity | IndexMap::Poly(_) => self.0.eta_lifted,
        };
        debug_assert!(alpha.keeps_k0() || eta);
        let name = format!("{}^{:?}", self.0.name, alpha);
        Self::build(&name, Kind::Pullback(self.clone(), alpha), eta)
    }

    /// `D | L`, renormalized; refuses indices where `D(L) = 0`.
    pub fn conditioned<P>(&self, name: &str, predicate: P) -> Self
    where
        P: Fn(&Word) -> bool + Send + Sync + 'static,
    {
        Self::build(
            name,
            Kind::Conditioned(self.clone(), Arc::new(predicate)),
            self.0.eta_lifted,
        )
    }

    /// Parses `K0 <tab> word <tab> probability` lines (`#` comments and blank
    /// lines ignored).
    pub fn from_reader<R: BufRead>(name: &str, reader: R) -> Result<Self> {
        let mut tables: BTreeMap<u64, Table> = BTreeMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let err = |m: &str| Error::Config {
                line: i + 1,
                message: m.to_string(),
            };
            let fields: Vec<&str> = t.split('\t').collect();
            let [k0, word, p] = fields.as_slice() else {
                return Err(err("expected K0<TAB>word<TAB>probability"));
            };
            let k0: u64 = k0.trim().parse().map_err(|_| err("bad K0"))?;
            let word: Word = word.trim().parse().map_err(|_| err("bad word"))?;
            let p: f64 = p.trim().parse().map_err(|_| err("bad probability"))?;
            tables.entry(k0).or_default().push((word, p));
        }
        Self::explicit(name, tables)
    }

    pub fn name(&self) -> &str {
        &self.0.name
    }

    pub fn eta_lifted(&self) -> bool {
        self.0.eta_lifted
    }

    pub fn is_explicit(&self) -> bool {
        match &self.0.kind {
            Kind::Fixed(_) | Kind::Generated(_) => true,
            Kind::Sampled(_) => false,
            Kind::Pullback(e, _) | Kind::Conditioned(e, _) => e.is_explicit(),
        }
    }

    pub fn sampler(&self) -> Option<&Sampler> {
        match &self.0.kind {
            Kind::Sampled(s) => Some(s),
            _ => None,
        }
    }

    /// Exact support with probabilities. Explicit kinds return their table;
    /// sampler-backed ensembles are enumerated over all coin strings (at most
    /// 2^20) and listed in canonical word order.
    pub fn support(&self, k: IndexK) -> Result<Arc<Table>> {
        let key = if self.0.eta_lifted {
            IndexK { k0: k.k0, k1: 0 }
        } else {
            k
        };
        if let Some(t) = self.0.cache.lock().unwrap().get(&key) {
            return Ok(t.clone());
        }
        let table = Arc::new(self.compute_support(k)?);
        self.0.cache.lock().unwrap().insert(key, table.clone());
        Ok(table)
    }

    fn compute_support(&self, k: IndexK) -> Result<Table> {
        match &self.0.kind {
            Kind::Fixed(map) => map
                .get(&k.k0)
                .map(|t| t.as_ref().clone())
                .ok_or(Error::MissingIndex(k)),
            Kind::Generated(f) => {
                let t = f(k.k0)?;
                validate(&t, &format!("{} K0={}", self.0.name, k.k0))?;
                Ok(t)
            }
            Kind::Sampled(s) => {
                let r = s.rand_bits(k);
                if r > MAX_EXACT_COIN_BITS {
                    return Err(Error::Refused(format!(
                        "exact support of {} needs 2^{r} sampler draws",
                        self.0.name
                    )));
                }
                let n = 1u64 << r;
                let mut counts: BTreeMap<Word, u64> = BTreeMap::new();
                for v in 0..n {
                    let (x, _) = s.sample_with(k, &Word::from_u64(v, r));
                    *counts.entry(x).or_default() += 1;
                }
                Ok(counts
                    .into_iter()
                    .map(|(x, c)| (x, c as f64 / n as f64))
                    .collect())
            }
            Kind::Pullback(inner, alpha) => Ok(inner.support(alpha.apply(k)?)?.as_ref().clone()),
            Kind::Conditioned(inner, pred) => {
                let base = inner.support(k)?;
                let kept: Table = base.iter().filter(|(x, _)| pred(x)).cloned().collect();
                let mass = super::exact::neumaier_sum(kept.iter().map(|e| e.1));
                if kept.is_empty() || mass <= 0.0 {
                    return Err(Error::Refused(format!(
                        "{} has zero mass at {k}",
                        self.0.name
                    )));
                }
                Ok(kept.into_iter().map(|(x, p)| (x, p / mass)).collect())
            }
        }
    }

    /// Mass of the words satisfying `pred` at `k`.
    pub fn mass<P: Fn(&Word) -> bool>(&self, k: IndexK, pred: P) -> Result<f64> {
        let t = self.support(k)?;
        Ok(super::exact::neumaier_sum(
            t.iter().filter(|(x, _)| pred(x)).map(|e| e.1),
        ))
    }

    /// One draw: inverse CDF over the table order, or one sampler draw.
    pub fn sample(&self, k: IndexK, rng: &mut RngStream) -> Result<Word> {
        match &self.0.kind {
            Kind::Sampled(s) => Ok(s.draw(k, rng).0),
            Kind::Pullback(inner, alpha) if !inner.is_explicit() => {
                inner.sample(alpha.apply(k)?, rng)
            }
            _ => {
                let t = self.support(k)?;
                let u = rng.draw_f64();
                let mut acc = 0.0;
                for (x, p) in t.iter() {
                    acc += p;
                    if u < acc {
                        return Ok(x.clone());
                    }
                }
                Ok(t.last().expect("validated nonempty").0.clone())
            }
        }
    }
}

impl fmt::Debug for WordEnsemble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WordEnsemble({})", self.0.name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{w, Rational};

    fn coin() -> WordEnsemble {
        WordEnsemble::point_table("coin", vec![(w("0"), 0.5), (w("1"), 0.5)]).unwrap()
    }

    #[test]
    fn point_mass_always_yields_its_word() {
        let e = WordEnsemble::point_table("pm", vec![(w("0"), 1.0)]).unwrap();
        let mut rng = RngStream::new(1, IndexK::new(0, 0), "t", 0);
        for _ in 0..10 {
            assert_eq!(e.sample(IndexK::new(7, 3), &mut rng).unwrap(), w("0"));
        }
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let k = IndexK::new(1, 1);
        let draws = |seed| {
            let mut rng = RngStream::new(seed, k, "sample", 0);
            (0..32)
                .map(|_| coin().sample(k, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draws(11), draws(11));
    }

    #[test]
    fn uniform_two_bit_frequencies() {
        let e = WordEnsemble::uniform_bits("u");
        let k = IndexK::new(2, 0);
        let mut rng = RngStream::new(3, k, "freq", 0);
        let mut counts: HashMap<Word, u32> = HashMap::new();
        let n = 100_000;
        for _ in 0..n {
            *counts.entry(e.sample(k, &mut rng).unwrap()).or_default() += 1;
        }
        assert_eq!(counts.len(), 4);
        for c in counts.values() {
            let f = *c as f64 / n as f64;
            assert!((f - 0.25).abs() < 0.01, "{f}");
        }
    }

    #[test]
    fn table_validation() {
        assert!(WordEnsemble::point_table("bad", vec![(w("0"), 0.5)]).is_err());
        assert!(WordEnsemble::point_table("bad", vec![(w("0"), 0.5), (w("0"), 0.5)]).is_err());
        assert!(WordEnsemble::point_table("bad", vec![(w("0"), 1.0), (w("1"), 0.0)]).is_err());
        assert!(WordEnsemble::point_table("empty", vec![]).is_err());
        let big: Table = (0..4097).map(|v| (Word::from_u64(v, 13), 1.0 / 4097.0)).collect();
        assert!(WordEnsemble::point_table("big", big).is_err());
    }

    #[test]
    fn missing_index() {
        let mut m = BTreeMap::new();
        m.insert(2, vec![(w("1"), 1.0)]);
        let e = WordEnsemble::explicit("m", m).unwrap();
        assert!(e.support(IndexK::new(2, 99)).is_ok());
        assert!(matches!(
            e.support(IndexK::new(3, 0)),
            Err(Error::MissingIndex(_))
        ));
    }

    #[test]
    fn text_format() {
        let src = "# demo\n1\t0\t0.25\n1\t1\t0.75\n\n2\t10\t1\n";
        let e = WordEnsemble::from_reader("file", src.as_bytes()).unwrap();
        assert_eq!(e.support(IndexK::new(1, 0)).unwrap().len(), 2);
        assert_eq!(
            e.support(IndexK::new(2, 5)).unwrap().as_ref(),
            &vec![(w("10"), 1.0)]
        );
        assert!(WordEnsemble::from_reader("bad", "1 0 0.5\n".as_bytes()).is_err());
    }

    #[test]
    fn sampled_support_enumerates_coins() {
        let s = Sampler::from_fn("first2", Rational::ONE, |_| 3, |_, c| {
            (Word::from_bits([c.bit(0), c.bit(1)]).unwrap(), Rational::ZERO)
        });
        let e = WordEnsemble::sampled("s", s, true);
        let t = e.support(IndexK::new(0, 0)).unwrap();
        assert_eq!(t.len(), 4);
        assert!(t.iter().all(|(_, p)| (*p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn pullbacks() {
        let e = WordEnsemble::generated("len", |k0| Ok(vec![(Word::from_u64(0, k0 as usize), 1.0)]));
        let k = IndexK::new(3, 9);
        assert_eq!(e.pullback(IndexMap::Identity).support(k).unwrap(), e.support(k).unwrap());
        let c = e.pullback(IndexMap::Constant(IndexK::new(5, 0)));
        assert!(c.eta_lifted());
        assert_eq!(c.support(k).unwrap()[0].0.len(), 5);
        assert_eq!(c.support(IndexK::new(1, 1)).unwrap()[0].0.len(), 5);
        assert!(e.pullback(IndexMap::EtaLift { k1: 0 }).eta_lifted());
        assert_eq!(
            IndexMap::Poly(vec![1, 0, 2]).apply(IndexK::new(4, 3)).unwrap(),
            IndexK::new(4, 19)
        );
        assert!(IndexMap::Poly(vec![0, 0, 0, 1]).apply(IndexK::new(0, 1 << 10)).is_err());
    }

    #[test]
    fn conditioning_renormalizes() {
        let e = WordEnsemble::uniform_bits("u").conditioned("u|first", |x| x.bit(0));
        let t = e.support(IndexK::new(2, 0)).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|(x, p)| x.bit(0) && (*p - 0.5).abs() < 1e-15));
        let none = WordEnsemble::uniform_bits("u").conditioned("empty", |_| false);
        assert!(none.support(IndexK::new(2, 0)).is_err());
    }
}
