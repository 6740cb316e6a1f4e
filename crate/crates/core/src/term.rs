//! Prefix terms such as `linear(1, erm(), -1, const(1/2))`, shared by the
//! zoo registry and estimator expressions.

use std::fmt;

use crate::codec::{Rational, Word};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    /// A bare token: a name, number, rational or bit string.
    Atom(String),
    Call(String, Vec<Term>),
}

fn bad(msg: impl Into<String>) -> Error {
    Error::InvalidParam(msg.into())
}

impl Term {
    pub fn parse(src: &str) -> Result<Term> {
        let mut p = Parser {
            src: src.as_bytes(),
            pos: 0,
        };
        let t = p.term()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(bad(format!("trailing input at column {} of {src:?}", p.pos + 1)));
        }
        Ok(t)
    }

    pub fn head(&self) -> &str {
        match self {
            Term::Atom(s) | Term::Call(s, _) => s,
        }
    }

    pub fn args(&self) -> &[Term] {
        match self {
            Term::Atom(_) => &[],
            Term::Call(_, a) => a,
        }
    }

    pub fn atom(&self) -> Result<&str> {
        match self {
            Term::Atom(s) => Ok(s),
            Term::Call(..) => Err(bad(format!("expected a value, found {self}"))),
        }
    }

    pub fn rational(&self) -> Result<Rational> {
        let s = self.atom()?;
        s.parse().map_err(|_| bad(format!("expected a rational, found {s:?}")))
    }

    pub fn natural(&self) -> Result<u64> {
        let s = self.atom()?;
        s.parse().map_err(|_| bad(format!("expected a natural, found {s:?}")))
    }

    pub fn word(&self) -> Result<Word> {
        let s = self.atom()?;
        if s == "-" {
            return Ok(Word::new());
        }
        s.parse().map_err(|_| bad(format!("expected a bit string, found {s:?}")))
    }

    /// Errors unless the call has exactly `n` arguments.
    pub fn expect_arity(&self, n: usize) -> Result<&[Term]> {
        let a = self.args();
        if a.len() != n {
            return Err(bad(format!("{} takes {n} argument(s), got {}", self.head(), a.len())));
        }
        Ok(a)
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Atom(s) => f.write_str(s),
            Term::Call(h, args) => {
                write!(f, "{h}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn term(&mut self) -> Result<Term> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && !b"(),".contains(&self.src[self.pos]) && !self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(bad(format!("expected a term at column {}", start + 1)));
        }
        let head = String::from_utf8_lossy(&self.src[start..self.pos]).into_owned();
        self.skip_ws();
        if self.src.get(self.pos) != Some(&b'(') {
            return Ok(Term::Atom(head));
        }
        self.pos += 1;
        let mut args = Vec::new();
        self.skip_ws();
        if self.src.get(self.pos) == Some(&b')') {
            self.pos += 1;
            return Ok(Term::Call(head, args));
        }
        loop {
            args.push(self.term()?);
            self.skip_ws();
            match self.src.get(self.pos) {
                Some(b',') => self.pos += 1,
                Some(b')') => {
                    self.pos += 1;
                    return Ok(Term::Call(head, args));
                }
                _ => return Err(bad(format!("expected ',' or ')' at column {}", self.pos + 1))),
            }
        }
    }
}
