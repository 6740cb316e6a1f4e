//! Line-oriented experiment configs: `[experiment]`, `[check NAME]` and
//! `[reduction]` sections of `key = value` lines, `#` comments.

use std::collections::BTreeMap;

use crate::codec::Word;
use crate::constructions::LanguageSpec;
use crate::error::{Error, Result};
use crate::model::IndexK;
use crate::reductions::{TargetMode, Thresholds};
use crate::term::Term;

use super::checks::Mode;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub problem: Term,
    /// Explicit ensemble replacing the problem's, in the tab-separated format.
    pub ensemble_file: Option<String>,
    pub estimator: Term,
    pub grid: Vec<IndexK>,
    pub checks: Vec<CheckSpec>,
}

#[derive(Debug, Clone)]
pub struct CheckSpec {
    pub name: String,
    pub line: usize,
    pub kind: CheckKind,
}

/// Competitor families named in configs.
#[derive(Debug, Clone, PartialEq)]
pub enum CompetitorSpec {
    /// `class` or `class(l)`.
    Class(Option<u32>),
    /// `deterministic` or `deterministic(l)`.
    Deterministic(Option<u32>),
    /// `constants(steps)`.
    Constants(u32),
    /// `list(expr, ...)`.
    List(Vec<Term>),
}

#[derive(Debug, Clone)]
pub enum CheckKind {
    Error {
        mode: Mode,
        threshold: Option<f64>,
    },
    Calibration {
        edges: Vec<f64>,
        alpha_min: f64,
        slack: f64,
        mode: Mode,
    },
    Orthogonality {
        tests: Vec<Term>,
        threshold: f64,
        mode: Mode,
    },
    Gap {
        competitors: CompetitorSpec,
        threshold: f64,
    },
    ResidualBound {
        test: Term,
        t_grid: Vec<f64>,
        tol: f64,
    },
    Uniqueness {
        other: Term,
        threshold: f64,
        mode: Mode,
    },
    Counterfactual {
        other: Term,
        r: Term,
        eps: f64,
        language: LanguageSpec,
    },
    Decider {
        trials: usize,
    },
    Regret {
        competitors: CompetitorSpec,
        max_partial_sum: Option<f64>,
    },
}

impl CheckKind {
    pub fn name(&self) -> &'static str {
        match self {
            CheckKind::Error { .. } => "error",
            CheckKind::Calibration { .. } => "calibration",
            CheckKind::Orthogonality { .. } => "orthogonality",
            CheckKind::Gap { .. } => "gap",
            CheckKind::ResidualBound { .. } => "residual_bound",
            CheckKind::Uniqueness { .. } => "uniqueness",
            CheckKind::Counterfactual { .. } => "counterfactual",
            CheckKind::Decider { .. } => "decider",
            CheckKind::Regret { .. } => "regret",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReductionConfig {
    /// Zoo term of the source problem.
    pub source: Term,
    /// Assembly of the source sampler program.
    pub sampler: String,
    pub coins: usize,
    pub phi: Word,
    /// Coefficients of the polynomial bound `q`.
    pub q: Vec<u64>,
    /// `bit` or `vm(bound)`.
    pub f: Term,
    pub r: u32,
    pub s: u32,
    pub grid: Vec<IndexK>,
    pub mode: TargetMode,
    pub samples: usize,
    pub thresholds: Thresholds,
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

/// Key-value lines of one section, with line numbers.
#[derive(Debug, Default)]
struct Section {
    line: usize,
    head: String,
    entries: BTreeMap<String, (usize, String)>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn required(&mut self, key: &str) -> Result<(usize, String)> {
        self.take(key)
            .ok_or_else(|| err(self.line, format!("[{}] is missing `{key}`", self.head)))
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        match self.take(key) {
            None => Ok(default),
            Some((l, v)) => v.parse().map_err(|_| err(l, format!("bad value for `{key}`: {v:?}"))),
        }
    }

    fn optional<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((l, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| err(l, format!("bad value for `{key}`: {v:?}"))),
        }
    }

    fn term(&mut self, key: &str) -> Result<Term> {
        let (l, v) = self.required(key)?;
        Term::parse(&v).map_err(|e| err(l, e.to_string()))
    }

    fn finish(self) -> Result<()> {
        match self.entries.into_iter().next() {
            Some((k, (l, _))) => Err(err(l, format!("unknown key `{k}` in [{}]", self.head))),
            None => Ok(()),
        }
    }
}

fn sections(src: &str) -> Result<Vec<Section>> {
    let mut out: Vec<Section> = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let line = i + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        if let Some(h) = text.strip_prefix('[') {
            let head = h
                .strip_suffix(']')
                .ok_or_else(|| err(line, "unterminated section header"))?
                .split_whitespace()
                .collect::<Vec<_>>()
                .join(" ");
            out.push(Section {
                line,
                head,
                entries: BTreeMap::new(),
            });
            continue;
        }
        let sec = out.last_mut().ok_or_else(|| err(line, "key outside any section"))?;
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected `key = value`, found {text:?}")))?;
        let k = k.trim().to_string();
        if sec.entries.insert(k.clone(), (line, v.trim().to_string())).is_some() {
            return Err(err(line, format!("duplicate key `{k}`")));
        }
    }
    Ok(out)
}

/// `K0:K1` entries separated by commas.
pub fn parse_grid(s: &str) -> Result<Vec<IndexK>> {
    s.split(',')
        .map(|e| {
            let (a, b) = e
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::InvalidParam(format!("bad grid entry {e:?}; expected K0:K1")))?;
            let bad = || Error::InvalidParam(format!("bad grid entry {e:?}"));
            IndexK::try_new(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?)
        })
        .collect()
}

fn parse_list<T: std::str::FromStr>(line: usize, key: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| err(line, format!("bad entry {:?} in `{key}`", v.trim())))
        })
        .collect()
}

/// Comma-separated terms (commas inside parentheses do not split).
fn parse_terms(line: usize, s: &str) -> Result<Vec<Term>> {
    let t = Term::parse(&format!("list({s})")).map_err(|e| err(line, e.to_string()))?;
    Ok(t.args().to_vec())
}

/// `exact` or `mc(n)`.
pub fn parse_mode(s: &str) -> Result<Mode> {
    let t = Term::parse(s)?;
    match (t.head(), t.args()) {
        ("exact", []) => Ok(Mode::Exact),
        ("mc", [n]) => Ok(Mode::MonteCarlo(n.natural()? as usize)),
        _ => Err(Error::InvalidParam(format!("unknown mode {s:?}; expected exact or mc(n)"))),
    }
}

fn mode(sec: &mut Section) -> Result<Mode> {
    match sec.take("mode") {
        None => Ok(Mode::Exact),
        Some((l, v)) => parse_mode(&v).map_err(|e| err(l, e.to_string())),
    }
}

fn competitors(sec: &mut Section) -> Result<CompetitorSpec> {
    let (l, v) = sec.required("competitors")?;
    let t = Term::parse(&v).map_err(|e| err(l, e.to_string()))?;
    let len = |t: &Term| -> Result<Option<u32>> {
        match t.args() {
            [] => Ok(None),
            [n] => Ok(Some(n.natural().map_err(|e| err(l, e.to_string()))? as u32)),
            _ => Err(err(l, format!("{} takes at most one argument", t.head()))),
        }
    };
    match t.head() {
        "class" => Ok(CompetitorSpec::Class(len(&t)?)),
        "deterministic" => Ok(CompetitorSpec::Deterministic(len(&t)?)),
        "constants" => {
            let n = t.expect_arity(1).and_then(|a| a[0].natural()).map_err(|e| err(l, e.to_string()))?;
            Ok(CompetitorSpec::Constants(n as u32))
        }
        "list" => Ok(CompetitorSpec::List(t.args().to_vec())),
        other => Err(err(l, format!("unknown competitor family {other:?}"))),
    }
}

fn check(mut sec: Section, name: String) -> Result<CheckSpec> {
    let line = sec.line;
    let kind_name = match sec.take("kind") {
        Some((_, k)) => k,
        None => name.clone(),
    };
    let kind = match kind_name.as_str() {
        "error" => CheckKind::Error {
            mode: mode(&mut sec)?,
            threshold: sec.optional("threshold")?,
        },
        "calibration" => {
            let (l, v) = sec.required("buckets")?;
            CheckKind::Calibration {
                edges: parse_list(l, "buckets", &v)?,
                alpha_min: sec.parsed("alpha_min", 0.05)?,
                slack: sec.parsed("slack", 1e-12)?,
                mode: mode(&mut sec)?,
            }
        }
        "orthogonality" => {
            let (l, v) = sec.required("tests")?;
            CheckKind::Orthogonality {
                tests: parse_terms(l, &v)?,
                threshold: sec.parsed("threshold", 1e-12)?,
                mode: mode(&mut sec)?,
            }
        }
        "gap" => CheckKind::Gap {
            competitors: competitors(&mut sec)?,
            threshold: sec.parsed("threshold", 1e-12)?,
        },
        "residual_bound" => {
            let test = sec.term("test")?;
            let (l, v) = sec.required("t_grid")?;
            CheckKind::ResidualBound {
                test,
                t_grid: parse_list(l, "t_grid", &v)?,
                tol: sec.parsed("tol", 1e-9)?,
            }
        }
        "uniqueness" => CheckKind::Uniqueness {
            other: sec.term("other")?,
            threshold: sec.parsed("threshold", 1e-12)?,
            mode: mode(&mut sec)?,
        },
        "counterfactual" => {
            let other = sec.term("other")?;
            let r = sec.term("r")?;
            let (l, v) = sec.required("language")?;
            let language = Term::parse(&v)
                .and_then(|t| LanguageSpec::parse(&t))
                .map_err(|e| err(l, e.to_string()))?;
            CheckKind::Counterfactual {
                other,
                r,
                eps: sec.parsed("eps", 1.0)?,
                language,
            }
        }
        "decider" => CheckKind::Decider {
            trials: sec.parsed("trials", 1000)?,
        },
        "regret" => CheckKind::Regret {
            competitors: competitors(&mut sec)?,
            max_partial_sum: sec.optional("max_partial_sum")?,
        },
        other => return Err(err(line, format!("unknown check kind {other:?}"))),
    };
    sec.finish()?;
    Ok(CheckSpec { name, line, kind })
}

impl ExperimentConfig {
    pub fn parse(src: &str) -> Result<Self> {
        let mut exp: Option<Section> = None;
        let mut checks = Vec::new();
        for sec in sections(src)? {
            let head = sec.head.clone();
            let mut words = head.splitn(2, ' ');
            match (words.next(), words.next()) {
                (Some("experiment"), None) => {
                    if exp.is_some() {
                        return Err(err(sec.line, "duplicate [experiment] section"));
                    }
                    exp = Some(sec);
                }
                (Some("check"), Some(name)) => {
                    if checks.iter().any(|c: &CheckSpec| c.name == name) {
                        return Err(err(sec.line, format!("duplicate check {name:?}")));
                    }
                    checks.push(check(sec, name.to_string())?);
                }
                _ => return Err(err(sec.line, format!("unknown section [{head}]"))),
            }
        }
        let mut sec = exp.ok_or_else(|| err(0, "missing [experiment] section"))?;
        let name = sec.parsed("name", "experiment".to_string())?;
        let seed = sec.parsed("seed", 0u64)?;
        let seeds = match sec.take("seeds") {
            Some((l, v)) => parse_list(l, "seeds", &v)?,
            None => vec![seed],
        };
        let problem = sec.term("problem")?;
        let ensemble_file = sec.take("ensemble_file").map(|(_, v)| v);
        let estimator = sec.term("estimator")?;
        let (l, g) = sec.required("grid")?;
        let grid = parse_grid(&g).map_err(|e| err(l, e.to_string()))?;
        sec.finish()?;
        Ok(ExperimentConfig {
            name,
            seed,
            seeds,
            problem,
            ensemble_file,
            estimator,
            grid,
            checks,
        })
    }

    /// Replaces the seed list by the single seed `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.seeds = vec![seed];
        self
    }
}

impl ReductionConfig {
    pub fn parse(src: &str) -> Result<Self> {
        let mut secs = sections(src)?;
        if secs.len() != 1 || secs[0].head != "reduction" {
            let line = secs.get(1).or(secs.first()).map_or(0, |s| s.line);
            return Err(err(line, "expected exactly one [reduction] section"));
        }
        let mut sec = secs.remove(0);
        let source = sec.term("source")?;
        let (_, sampler) = sec.required("sampler")?;
        let coins = sec.parsed("coins", 0usize)?;
        let phi = match sec.take("phi") {
            None => Word::new(),
            Some((l, v)) => Term::Atom(v).word().map_err(|e| err(l, e.to_string()))?,
        };
        let q = match sec.take("q") {
            None => vec![0, 1],
            Some((l, v)) => parse_list(l, "q", &v)?,
        };
        let f = match sec.take("f") {
            None => Term::Atom("bit".into()),
            Some((l, v)) => Term::parse(&v).map_err(|e| err(l, e.to_string()))?,
        };
        let r = sec.parsed("r", 12u32)?;
        let s = sec.parsed("s", 12u32)?;
        let (l, g) = sec.required("grid")?;
        let grid = parse_grid(&g).map_err(|e| err(l, e.to_string()))?;
        let mode = match sec.take("mode") {
            None => TargetMode::Strict,
            Some((_, v)) if v == "strict" => TargetMode::Strict,
            Some((_, v)) if v == "lax" => TargetMode::Lax,
            Some((l, v)) => return Err(err(l, format!("unknown mode {v:?}; expected strict or lax"))),
        };
        let samples = sec.parsed("samples", 10_000usize)?;
        let d = Thresholds::default();
        let thresholds = Thresholds {
            i: sec.parsed("threshold_i", d.i)?,
            ii: sec.parsed("threshold_ii", d.ii)?,
            iii: sec.parsed("threshold_iii", d.iii)?,
        };
        sec.finish()?;
        Ok(ReductionConfig {
            source,
            sampler,
            coins,
            phi,
            q,
            f,
            r,
            s,
            grid,
            mode,
            samples,
            thresholds,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "
# demo
[experiment]
name = demo
seed = 3
problem = product(first_bit, parity(2))
estimator = linear(1, const(1/2), 0, const(0))
grid = 4:6, 8:14

[check calibration]
buckets = 0, 0.5, 1
mode = mc(100)

[check g]
kind = gap
competitors = constants(8)
";

    #[test]
    fn parses_sections_and_defaults() {
        let c = ExperimentConfig::parse(GOOD).unwrap();
        assert_eq!(c.seeds, vec![3]);
        assert_eq!(c.grid, vec![IndexK::new(4, 6), IndexK::new(8, 14)]);
        assert_eq!(c.checks.len(), 2);
        assert!(matches!(
            c.checks[0].kind,
            CheckKind::Calibration { mode: Mode::MonteCarlo(100), .. }
        ));
        assert!(matches!(
            c.checks[1].kind,
            CheckKind::Gap { competitors: CompetitorSpec::Constants(8), .. }
        ));
    }

    #[test]
    fn reports_line_numbers() {
        let bad = GOOD.replace("mode = mc(100)", "mdoe = mc(100)");
        match ExperimentConfig::parse(&bad) {
            Err(Error::Config { line, .. }) => assert_eq!(line, 12),
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::parse("[experiment]\nproblem fair_coin").is_err());
        assert!(ExperimentConfig::parse("x = 1").is_err());
        assert!(ExperimentConfig::parse(&GOOD.replace("4:6", "4;6")).is_err());
        assert!(ExperimentConfig::parse(&GOOD.replace("[check g]", "[check calibration]")).is_err());
    }

    #[test]
    fn zero_checks_is_valid() {
        let c = ExperimentConfig::parse("[experiment]\nproblem = fair_coin\nestimator = const(1/2)\ngrid = 1:2").unwrap();
        assert!(c.checks.is_empty());
    }

    #[test]
    fn parses_reduction_config() {
        let c = ReductionConfig::parse(
            "[reduction]\nsource = first_bit\nsampler = READBIT 1 0 EMITRAT\ncoins = 1\nf = bit\ngrid = 1:0",
        )
        .unwrap();
        assert_eq!((c.r, c.s, c.coins), (12, 12, 1));
        assert!(ReductionConfig::parse("[reduction]\nsource = first_bit\n").is_err());
    }
}
