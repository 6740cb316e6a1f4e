//! Bit strings and the self-delimiting encodings built on them.
//!
//! A [`Word`] is a finite bit string. Tuples of words are encoded by doubling
//! every bit and terminating each part with the separator `01`; naturals are
//! minimal MSB-first binary; rationals are the tuple `⟨|n|, m, sign⟩`.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Longest representable word, in bits.
pub const MAX_WORD_BITS: usize = 1 << 20;
/// Longest part accepted by [`chev_encode`].
pub const MAX_PART_BITS: usize = 1 << 18;
/// Most parts accepted by [`chev_encode`].
pub const MAX_PARTS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("word length {0} exceeds the {MAX_WORD_BITS}-bit limit")]
    WordTooLong(usize),
    #[error("encoding overflow: {0}")]
    Overflow(String),
    #[error("malformed tuple encoding at bit {offset}: {reason}")]
    Malformed { offset: usize, reason: &'static str },
    #[error("not a natural-number encoding: {0}")]
    BadNatural(String),
    #[error("not a rational encoding: {0}")]
    BadRational(String),
    #[error("invalid bit character {0:?}")]
    BadChar(char),
    #[error("zero denominator")]
    ZeroDenominator,
}

/// A finite bit string, packed MSB-first into 64-bit limbs.
///
/// Unused low bits of the last limb are always zero so that derived equality
/// and hashing agree with bitwise equality.
#[derive(Clone, Default)]
pub struct Word {
    limbs: Vec<u64>,
    len: usize,
}

impl Word {
    pub const fn new() -> Self {
        Word {
            limbs: Vec::new(),
            len: 0,
        }
    }

    pub fn with_capacity(bits: usize) -> Self {
        Word {
            limbs: Vec::with_capacity(bits.div_ceil(64)),
            len: 0,
        }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Result<Self, CodecError> {
        let mut w = Word::new();
        for b in bits {
            w.push(b)?;
        }
        Ok(w)
    }

    /// The `len` low bits of `value`, most significant first.
    pub fn from_u64(value: u64, len: usize) -> Self {
        assert!(len <= 64);
        let mut w = Word::with_capacity(len);
        for i in (0..len).rev() {
            w.push_bounded((value >> i) & 1 == 1);
        }
        w
    }

    /// Reads the word back as an unsigned integer, MSB first. Words longer
    /// than 64 bits keep only their last 64 bits.
    pub fn to_u64(&self) -> u64 {
        self.iter().fold(0u64, |acc, b| (acc << 1) | b as u64)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> Option<bool> {
        (i < self.len).then(|| self.bit(i))
    }

    /// Bit `i`; callers guarantee `i < len`.
    #[inline]
    pub fn bit(&self, i: usize) -> bool {
        (self.limbs[i >> 6] >> (63 - (i & 63))) & 1 == 1
    }

    pub fn push(&mut self, bit: bool) -> Result<(), CodecError> {
        if self.len >= MAX_WORD_BITS {
            return Err(CodecError::WordTooLong(self.len + 1));
        }
        self.push_bounded(bit);
        Ok(())
    }

    #[inline]
    pub(crate) fn push_bounded(&mut self, bit: bool) {
        debug_assert!(self.len < MAX_WORD_BITS);
        if self.len & 63 == 0 {
            self.limbs.push(0);
        }
        if bit {
            let last = self.limbs.len() - 1;
            self.limbs[last] |= 1u64 << (63 - (self.len & 63));
        }
        self.len += 1;
    }

    pub fn extend_from(&mut self, other: &Word) -> Result<(), CodecError> {
        if self.len + other.len > MAX_WORD_BITS {
            return Err(CodecError::WordTooLong(self.len + other.len));
        }
        for b in other.iter() {
            self.push_bounded(b);
        }
        Ok(())
    }

    pub fn concat(&self, other: &Word) -> Result<Word, CodecError> {
        let mut w = self.clone();
        w.extend_from(other)?;
        Ok(w)
    }

    /// Bits `start..end` as a new word (clipped to the word's length).
    pub fn slice(&self, start: usize, end: usize) -> Word {
        let end = end.min(self.len);
        let mut w = Word::with_capacity(end.saturating_sub(start));
        for i in start..end {
            w.push_bounded(self.bit(i));
        }
        w
    }

    pub fn starts_with(&self, prefix: &Word) -> bool {
        prefix.len <= self.len && (0..prefix.len).all(|i| self.bit(i) == prefix.bit(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.bit(i))
    }

    pub fn count_ones(&self) -> usize {
        self.limbs.iter().map(|l| l.count_ones() as usize).sum()
    }
}

impl PartialEq for Word {
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len && self.limbs == other.limbs
    }
}

impl Eq for Word {}

impl Hash for Word {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.len.hash(state);
        self.limbs.hash(state);
    }
}

/// Length first, then lexicographic: the canonical enumeration order.
impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len
            .cmp(&other.len)
            .then_with(|| self.limbs.cmp(&other.limbs))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.iter() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word(\"{self}\")")
    }
}

impl FromStr for Word {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut w = Word::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => w.push(false)?,
                '1' => w.push(true)?,
                other => return Err(CodecError::BadChar(other)),
            }
        }
        Ok(w)
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Convenience for tests and literals; panics on non-bit characters.
pub fn w(s: &str) -> Word {
    s.parse().expect("literal word")
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// A rational number in lowest terms with a positive denominator.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rational {
    num: i64,
    den: i64,
}

impl Rational {
    pub const ZERO: Rational = Rational { num: 0, den: 1 };
    pub const ONE: Rational = Rational { num: 1, den: 1 };
    pub const HALF: Rational = Rational { num: 1, den: 2 };

    pub fn new(num: i64, den: i64) -> Result<Self, CodecError> {
        if den == 0 {
            return Err(CodecError::ZeroDenominator);
        }
        Self::from_wide(num as i128, den as i128)
            .ok_or_else(|| CodecError::Overflow(format!("{num}/{den}")))
    }

    pub const fn integer(n: i64) -> Self {
        Rational { num: n, den: 1 }
    }

    /// Reduces `num/den`; `None` if the reduced form does not fit in i64.
    fn from_wide(num: i128, den: i128) -> Option<Self> {
        debug_assert!(den != 0);
        let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
        let g = gcd(num.unsigned_abs(), den as u128).max(1) as i128;
        let (n, d) = (num / g, den / g);
        if n < i64::MIN as i128 + 1 || n > i64::MAX as i128 || d > i64::MAX as i128 {
            return None;
        }
        Some(Rational {
            num: n as i64,
            den: d as i64,
        })
    }

    /// Exact when the result fits; otherwise the nearest fraction with a
    /// denominator of at most 2^53.
    fn from_wide_or_approx(num: i128, den: i128) -> Self {
        Self::from_wide(num, den).unwrap_or_else(|| Self::approximate(num as f64 / den as f64))
    }

    /// Best rational approximation of `x` with denominator ≤ 2^53.
    pub fn approximate(x: f64) -> Self {
        if !x.is_finite() {
            return Rational::ZERO;
        }
        let limit: i128 = 1 << 53;
        let (mut p0, mut q0, mut p1, mut q1) = (0i128, 1i128, 1i128, 0i128);
        let mut v = x.abs();
        for _ in 0..64 {
            let a = v.floor();
            if a > 1e18 {
                break;
            }
            let a = a as i128;
            let (p2, q2) = (a * p1 + p0, a * q1 + q0);
            if q2 > limit || p2 > i64::MAX as i128 {
                break;
            }
            (p0, q0, p1, q1) = (p1, q1, p2, q2);
            let frac = v - a as f64;
            if frac < 1e-15 {
                break;
            }
            v = 1.0 / frac;
        }
        if q1 == 0 {
            return Rational::integer(if x < 0.0 { -i64::MAX } else { i64::MAX });
        }
        let sign = if x < 0.0 { -1 } else { 1 };
        Self::from_wide(sign * p1, q1).unwrap_or(Rational::ZERO)
    }

    #[inline]
    pub fn numer(&self) -> i64 {
        self.num
    }

    #[inline]
    pub fn denom(&self) -> i64 {
        self.den
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    pub fn abs(self) -> Self {
        Rational {
            num: self.num.abs(),
            den: self.den,
        }
    }

    pub fn clamp_sym(self, bound: Rational) -> Self {
        let bound = bound.abs();
        if self > bound {
            bound
        } else if self < -bound {
            -bound
        } else {
            self
        }
    }

    /// `None` on division by zero.
    pub fn checked_div(self, rhs: Rational) -> Option<Rational> {
        if rhs.num == 0 {
            return None;
        }
        Some(Self::from_wide_or_approx(
            self.num as i128 * rhs.den as i128,
            self.den as i128 * rhs.num as i128,
        ))
    }
}

impl Ord for Rational {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as i128 * other.den as i128).cmp(&(other.num as i128 * self.den as i128))
    }
}

impl PartialOrd for Rational {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl std::ops::Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational {
            num: -self.num,
            den: self.den,
        }
    }
}

impl std::ops::Add for Rational {
    type Output = Rational;
    fn add(self, rhs: Rational) -> Rational {
        let (a, b, c, d) = (
            self.num as i128,
            self.den as i128,
            rhs.num as i128,
            rhs.den as i128,
        );
        Rational::from_wide_or_approx(a * d + c * b, b * d)
    }
}

impl std::ops::Sub for Rational {
    type Output = Rational;
    fn sub(self, rhs: Rational) -> Rational {
        self + (-rhs)
    }
}

impl std::ops::Mul for Rational {
    type Output = Rational;
    fn mul(self, rhs: Rational) -> Rational {
        Rational::from_wide_or_approx(
            self.num as i128 * rhs.num as i128,
            self.den as i128 * rhs.den as i128,
        )
    }
}

impl From<i64> for Rational {
    fn from(n: i64) -> Self {
        Rational::integer(n)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl FromStr for Rational {
    type Err = CodecError;

    /// Accepts `n`, `n/m` and plain decimals such as `0.25`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || CodecError::BadRational(s.to_string());
        if let Some((n, m)) = s.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|_| bad())?;
            let m: i64 = m.trim().parse().map_err(|_| bad())?;
            return Rational::new(n, m);
        }
        if let Ok(n) = s.parse::<i64>() {
            return Ok(Rational::integer(n));
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || frac.len() > 15 || !frac.bytes().all(|c| c.is_ascii_digit()) {
                return Err(bad());
            }
            let neg = int.trim_start().starts_with('-');
            let int: i64 = match int.trim() {
                "" | "-" | "+" => 0,
                t => t.parse().map_err(|_| bad())?,
            };
            let scale = 10i64.pow(frac.len() as u32);
            let f: i64 = frac.parse().map_err(|_| bad())?;
            let mag = int.abs().checked_mul(scale).and_then(|v| v.checked_add(f));
            let mag = mag.ok_or_else(bad)?;
            return Rational::new(if neg { -mag } else { mag }, scale);
        }
        Err(bad())
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Tuple encoding: every bit doubled, `01` after each part.
pub fn chev_encode(parts: &[Word]) -> Result<Word, CodecError> {
    if parts.len() > MAX_PARTS {
        return Err(CodecError::Overflow(format!(
            "{} parts exceed the {MAX_PARTS}-part limit",
            parts.len()
        )));
    }
    let mut total = 0usize;
    for p in parts {
        if p.len() > MAX_PART_BITS {
            return Err(CodecError::Overflow(format!(
                "part of {} bits exceeds the {MAX_PART_BITS}-bit limit",
                p.len()
            )));
        }
        total += 2 * p.len() + 2;
    }
    if total > MAX_WORD_BITS {
        return Err(CodecError::WordTooLong(total));
    }
    let mut out = Word::with_capacity(total);
    for p in parts {
        for b in p.iter() {
            out.push_bounded(b);
            out.push_bounded(b);
        }
        out.push_bounded(false);
        out.push_bounded(true);
    }
    Ok(out)
}

/// Splits off the first complete part of a tuple encoding, returning it and
/// the bit offset just past its separator.
pub fn chev_decode_prefix(w: &Word, start: usize) -> Result<(Word, usize), CodecError> {
    let mut part = Word::new();
    let mut i = start;
    loop {
        if i >= w.len() {
            return Err(CodecError::Malformed {
                offset: i,
                reason: "unterminated part",
            });
        }
        if i + 1 >= w.len() {
            return Err(CodecError::Malformed {
                offset: i,
                reason: "trailing odd bit",
            });
        }
        match (w.bit(i), w.bit(i + 1)) {
            (false, false) => part.push_bounded(false),
            (true, true) => part.push_bounded(true),
            (false, true) => return Ok((part, i + 2)),
            (true, false) => {
                return Err(CodecError::Malformed {
                    offset: i,
                    reason: "pair 10 is neither a doubled bit nor a separator",
                })
            }
        }
        i += 2;
    }
}

/// Exact inverse of [`chev_encode`] on its image.
pub fn chev_decode(w: &Word) -> Result<Vec<Word>, CodecError> {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < w.len() {
        if parts.len() == MAX_PARTS {
            return Err(CodecError::Malformed {
                offset: i,
                reason: "more parts than the encoder admits",
            });
        }
        let (part, next) = chev_decode_prefix(w, i)?;
        if part.len() > MAX_PART_BITS {
            return Err(CodecError::Malformed {
                offset: i,
                reason: "part longer than the encoder admits",
            });
        }
        parts.push(part);
        i = next;
    }
    Ok(parts)
}

pub fn encode_nat(n: u64) -> Word {
    if n == 0 {
        return Word::from_u64(0, 1);
    }
    let bits = 64 - n.leading_zeros() as usize;
    Word::from_u64(n, bits)
}

pub fn decode_nat(w: &Word) -> Result<u64, CodecError> {
    if w.is_empty() {
        return Err(CodecError::BadNatural("empty word".into()));
    }
    if w.len() > 1 && !w.bit(0) {
        return Err(CodecError::BadNatural(format!("leading zero in {w}")));
    }
    if w.len() > 64 {
        return Err(CodecError::BadNatural(format!(
            "{} bits exceed the 64-bit range",
            w.len()
        )));
    }
    Ok(w.to_u64())
}

pub fn encode_rat(q: Rational) -> Word {
    let sign = Word::from_u64((q.num < 0) as u64, 1);
    let parts = [encode_nat(q.num.unsigned_abs()), encode_nat(q.den as u64), sign];
    chev_encode(&parts).expect("three short parts always encode")
}

pub fn decode_rat(w: &Word) -> Result<Rational, CodecError> {
    let parts = chev_decode(w)?;
    let bad = |why: &str| CodecError::BadRational(format!("{w}: {why}"));
    let [n, m, s] = parts.as_slice() else {
        return Err(bad("expected three parts"));
    };
    let n = decode_nat(n)?;
    let m = decode_nat(m)?;
    let negative = match s.len() {
        1 => s.bit(0),
        _ => return Err(bad("sign part must be one bit")),
    };
    if m == 0 {
        return Err(bad("zero denominator"));
    }
    if n > i64::MAX as u64 || m > i64::MAX as u64 {
        return Err(bad("component exceeds the 63-bit range"));
    }
    if gcd(n as u128, m as u128) != 1 {
        return Err(bad("not in lowest terms"));
    }
    if n == 0 && negative {
        return Err(bad("negative zero"));
    }
    let num = if negative { -(n as i64) } else { n as i64 };
    Ok(Rational {
        num,
        den: m as i64,
    })
}

/// `clamp(t, -M, M)` when `w` encodes `t`, and `0` for any other word.
pub fn decode_clamped(w: &Word, bound: Rational) -> Rational {
    match decode_rat(w) {
        Ok(t) => t.clamp_sym(bound),
        Err(_) => Rational::ZERO,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d).unwrap()
    }

    #[test]
    fn chev_examples() {
        assert_eq!(chev_encode(&[w("0"), w("1")]).unwrap(), w("00011101"));
        assert_eq!(chev_encode(&[]).unwrap(), Word::new());
        assert_eq!(chev_encode(&[Word::new()]).unwrap(), w("01"));
        assert_eq!(chev_decode(&w("00011101")).unwrap(), vec![w("0"), w("1")]);
        assert_eq!(chev_decode(&Word::new()).unwrap(), Vec::<Word>::new());
        assert!(matches!(
            chev_decode(&w("00")),
            Err(CodecError::Malformed { offset: 2, .. })
        ));
    }

    #[test]
    fn chev_decode_reports_offsets() {
        let err = chev_decode(&w("000110")).unwrap_err();
        assert_eq!(
            err,
            CodecError::Malformed {
                offset: 4,
                reason: "pair 10 is neither a doubled bit nor a separator"
            }
        );
        assert!(matches!(
            chev_decode(&w("01011")),
            Err(CodecError::Malformed { offset: 4, .. })
        ));
    }

    #[test]
    fn chev_limits() {
        let long = Word::from_bits(std::iter::repeat(true).take(MAX_PART_BITS + 1)).unwrap();
        assert!(matches!(chev_encode(&[long]), Err(CodecError::Overflow(_))));
        let many = vec![Word::new(); MAX_PARTS + 1];
        assert!(matches!(chev_encode(&many), Err(CodecError::Overflow(_))));
    }

    #[test]
    fn naturals() {
        assert_eq!(encode_nat(5), w("101"));
        assert_eq!(encode_nat(0), w("0"));
        assert_eq!(encode_nat(1), w("1"));
        assert_eq!(decode_nat(&w("101")).unwrap(), 5);
        assert_eq!(decode_nat(&w("0")).unwrap(), 0);
        assert!(decode_nat(&w("01")).is_err());
        assert!(decode_nat(&Word::new()).is_err());
        assert_eq!(decode_nat(&encode_nat(i64::MAX as u64)).unwrap(), i64::MAX as u64);
    }

    #[test]
    fn rationals() {
        assert_eq!(
            encode_rat(r(3, 2)),
            chev_encode(&[w("11"), w("10"), w("0")]).unwrap()
        );
        assert_eq!(
            encode_rat(Rational::ZERO),
            chev_encode(&[w("0"), w("1"), w("0")]).unwrap()
        );
        assert_eq!(
            decode_rat(&chev_encode(&[w("11"), w("10"), w("0")]).unwrap()).unwrap(),
            r(3, 2)
        );
        assert_eq!(decode_rat(&encode_rat(r(-7, 3))).unwrap(), r(-7, 3));
        // non-canonical forms are outside the image
        for parts in [
            ["10", "100", "0"],
            ["0", "1", "1"],
            ["1", "0", "0"],
            ["1", "1", "00"],
            ["01", "1", "0"],
        ] {
            let word = chev_encode(&parts.map(w)).unwrap();
            assert!(decode_rat(&word).is_err(), "{parts:?}");
        }
    }

    #[test]
    fn clamped_decoding() {
        assert_eq!(decode_clamped(&encode_rat(r(3, 2)), Rational::ONE), Rational::ONE);
        assert_eq!(decode_clamped(&w("11"), Rational::integer(5)), Rational::ZERO);
        assert_eq!(decode_clamped(&encode_rat(r(-1, 4)), Rational::ONE), r(-1, 4));
        assert_eq!(decode_clamped(&encode_rat(r(-9, 4)), Rational::ONE), -Rational::ONE);
        assert_eq!(decode_clamped(&encode_rat(r(1, 3)), Rational::ZERO), Rational::ZERO);
    }

    #[test]
    fn rational_parsing_and_arithmetic() {
        assert_eq!("3/6".parse::<Rational>().unwrap(), r(1, 2));
        assert_eq!("-0.25".parse::<Rational>().unwrap(), r(-1, 4));
        assert_eq!("2".parse::<Rational>().unwrap(), Rational::integer(2));
        assert_eq!(".5".parse::<Rational>().unwrap(), r(1, 2));
        assert!("1/0".parse::<Rational>().is_err());
        assert!("abc".parse::<Rational>().is_err());
        assert_eq!(r(1, 4) + r(1, 2), r(3, 4));
        assert_eq!(r(1, 2) * r(1, 3), r(1, 6));
        assert_eq!(r(1, 4).checked_div(r(1, 2)), Some(r(1, 2)));
        assert_eq!(r(1, 4).checked_div(Rational::ZERO), None);
        assert!(r(1, 3) < r(1, 2));
        assert_eq!(r(2, -4), r(-1, 2));
    }

    #[test]
    fn overflow_falls_back_to_approximation() {
        let big = Rational::new(i64::MAX, 3).unwrap();
        let prod = big * big;
        assert!(prod.to_f64().is_finite());
        let tiny = Rational::new(1, i64::MAX).unwrap() * Rational::new(1, 7).unwrap();
        assert!(tiny.to_f64().abs() < 1e-12);
        let approx = Rational::approximate(0.1);
        assert_eq!(approx, r(1, 10));
    }

    #[test]
    fn word_basics() {
        let x = w("1011");
        assert_eq!(x.len(), 4);
        assert_eq!(x.to_string(), "1011");
        assert_eq!(x.to_u64(), 11);
        assert_eq!(Word::from_u64(11, 6), w("001011"));
        assert_eq!(x.slice(1, 3), w("01"));
        assert!(x.starts_with(&w("10")));
        assert!(w("1") < w("00"));
        assert!(w("01") < w("10"));
        let long = Word::from_bits((0..130).map(|i| i % 3 == 0)).unwrap();
        assert_eq!(long.count_ones(), 44);
        assert!("10x".parse::<Word>().is_err());
        assert_eq!(serde_json::to_string(&x).unwrap(), "\"1011\"");
        assert_eq!(serde_json::to_string(&r(-3, 4)).unwrap(), "\"-3/4\"");
    }

    #[test]
    fn word_length_limit() {
        let mut big = Word::from_bits(std::iter::repeat(false).take(MAX_WORD_BITS)).unwrap();
        assert!(matches!(big.push(true), Err(CodecError::WordTooLong(_))));
    }

    #[test]
    fn decoders_total_on_all_short_words() {
        for len in 0..=12 {
            for v in 0..(1u64 << len) {
                let word = Word::from_u64(v, len);
                let _ = chev_decode(&word);
                let _ = decode_nat(&word);
                let q = decode_clamped(&word, Rational::ONE);
                assert!(q.abs() <= Rational::ONE);
            }
        }
    }
}
