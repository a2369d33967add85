//! Exact sparse multivariate polynomials over the rationals.
//!
//! Every coefficient of the power-series solution is a [`Poly`] in the random
//! symbols of the model. Coefficients are arbitrary-precision rationals, so the
//! coefficient recursion never accumulates rounding error; floats appear only
//! when a polynomial is evaluated at sampled values.
//!
//! Terms are kept in a `BTreeMap` keyed by [`Monomial`], ordered graded
//! lexicographically by [`SymbolId`]. Zero coefficients are never stored, so
//! structural equality is polynomial equality.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub type Rational = BigRational;

/// Dense index of a random symbol inside a [`SymbolTable`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolId(pub u32);

impl SymbolId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolyError {
    #[error("symbol `{0}` declared twice")]
    DuplicateSymbol(String),
    #[error("no value assigned to symbol #{0}")]
    MissingSymbol(u32),
    #[error("undeclared symbol `{0}`")]
    UndeclaredSymbol(String),
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

/// Name <-> id mapping. Ids are dense from 0 in insertion order.
#[derive(Clone, Debug, Default)]
pub struct SymbolTable {
    names: Vec<String>,
    index: HashMap<String, SymbolId>,
}

impl SymbolTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str) -> Result<SymbolId, PolyError> {
        if self.index.contains_key(name) {
            return Err(PolyError::DuplicateSymbol(name.to_string()));
        }
        let id = SymbolId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn lookup(&self, name: &str) -> Option<SymbolId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: SymbolId) -> &str {
        &self.names[id.index()]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SymbolId, &str)> {
        self.names
            .iter()
            .enumerate()
            .map(|(i, n)| (SymbolId(i as u32), n.as_str()))
    }
}

/// Product of symbol powers, stored sparsely and sorted by symbol id.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Monomial {
    exps: Vec<(SymbolId, u32)>,
}

impl Monomial {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn var(id: SymbolId) -> Self {
        Self::pow(id, 1)
    }

    pub fn pow(id: SymbolId, e: u32) -> Self {
        if e == 0 {
            Self::one()
        } else {
            Self { exps: vec![(id, e)] }
        }
    }

    /// Builds a monomial from arbitrary (symbol, exponent) pairs; repeated
    /// symbols are merged and zero exponents dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (SymbolId, u32)>) -> Self {
        let mut map: BTreeMap<SymbolId, u32> = BTreeMap::new();
        for (s, e) in pairs {
            *map.entry(s).or_insert(0) += e;
        }
        Self {
            exps: map.into_iter().filter(|&(_, e)| e > 0).collect(),
        }
    }

    pub fn is_one(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.exps.iter().map(|&(_, e)| e).sum()
    }

    pub fn exponent(&self, id: SymbolId) -> u32 {
        self.exps
            .binary_search_by_key(&id, |&(s, _)| s)
            .map(|i| self.exps[i].1)
            .unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (SymbolId, u32)> + '_ {
        self.exps.iter().copied()
    }

    /// Exponent addition (sorted merge).
    pub fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.exps, &other.exps);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => {
                    out.push(a[i]);
                    i += 1;
                }
                Ordering::Greater => {
                    out.push(b[j]);
                    j += 1;
                }
                Ordering::Equal => {
                    out.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial { exps: out }
    }

    pub fn eval(&self, values: &[f64]) -> Result<f64, PolyError> {
        let mut acc = 1.0;
        for &(s, e) in &self.exps {
            let v = values.get(s.index()).copied().ok_or(PolyError::MissingSymbol(s.0))?;
            acc *= v.powi(e as i32);
        }
        Ok(acc)
    }
}

// Graded order: total degree first; within a degree, a larger exponent on the
// lowest-indexed differing symbol sorts first (A^2 < A*Y0 < Y0^2).
impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        let by_degree = self.degree().cmp(&other.degree());
        if by_degree != Ordering::Equal {
            return by_degree;
        }
        let (a, b) = (&self.exps, &other.exps);
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            let (sa, ea) = a[i];
            let (sb, eb) = b[j];
            match sa.cmp(&sb) {
                Ordering::Less => return Ordering::Less,
                Ordering::Greater => return Ordering::Greater,
                Ordering::Equal if ea != eb => return eb.cmp(&ea),
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
            }
        }
        (a.len() - i).cmp(&(b.len() - j)).reverse()
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Combine {
    Add,
    Sub,
}

/// Exact sparse polynomial with rational coefficients.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Poly {
    terms: BTreeMap<Monomial, Rational>,
}

impl Poly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::constant(Rational::one())
    }

    pub fn constant(c: Rational) -> Self {
        Self::term(c, Monomial::one())
    }

    pub fn var(id: SymbolId) -> Self {
        Self::term(Rational::one(), Monomial::var(id))
    }

    pub fn term(c: Rational, m: Monomial) -> Self {
        let mut terms = BTreeMap::new();
        if !c.is_zero() {
            terms.insert(m, c);
        }
        Self { terms }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Rational, Monomial)>) -> Self {
        let mut p = Self::zero();
        for (c, m) in terms {
            p.add_term(c, m);
        }
        p
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Returns the constant value if the polynomial has no symbols.
    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => self.terms.get(&Monomial::one()).cloned(),
            _ => None,
        }
    }

    pub fn symbols(&self) -> Vec<SymbolId> {
        let mut out: Vec<SymbolId> = self.terms.keys().flat_map(|m| m.iter().map(|(s, _)| s)).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn add_term(&mut self, c: Rational, m: Monomial) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(m) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn scale(&self, c: &Rational) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly {
            terms: self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect(),
        }
    }

    pub fn combine(kind: Combine, p: &Poly, q: &Poly) -> Poly {
        let mut out = p.clone();
        for (m, c) in &q.terms {
            let c = match kind {
                Combine::Add => c.clone(),
                Combine::Sub => -c.clone(),
            };
            out.add_term(c, m.clone());
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(ca * cb, ma.mul(mb));
            }
        }
        out
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut out = Poly::one();
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }

    /// Evaluates at a dense assignment indexed by symbol id. Each monomial is
    /// computed in floating point and the rational coefficient is converted
    /// only when it is multiplied in.
    pub fn eval(&self, values: &[f64]) -> Result<f64, PolyError> {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            acc += rational_to_f64(c) * m.eval(values)?;
        }
        Ok(acc)
    }

    /// Evaluates at a sparse assignment.
    pub fn eval_map(&self, values: &HashMap<SymbolId, f64>) -> Result<f64, PolyError> {
        let mut acc = 0.0;
        for (m, c) in &self.terms {
            let mut prod = 1.0;
            for (s, e) in m.iter() {
                let v = values.get(&s).ok_or(PolyError::MissingSymbol(s.0))?;
                prod *= v.powi(e as i32);
            }
            acc += rational_to_f64(c) * prod;
        }
        Ok(acc)
    }

    /// Canonical text form `c1*sym1^e1*sym2^e2 + ...`, rationals as `p/q`.
    pub fn to_text(&self, symbols: &SymbolTable) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (i, (m, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            match (i, neg) {
                (0, true) => out.push('-'),
                (0, false) => {}
                (_, true) => out.push_str(" - "),
                (_, false) => out.push_str(" + "),
            }
            let abs = c.abs();
            let mut factors: Vec<String> = Vec::new();
            if m.is_one() || !abs.is_one() {
                factors.push(format_rational(&abs));
            }
            for (s, e) in m.iter() {
                if e == 1 {
                    factors.push(symbols.name(s).to_string());
                } else {
                    factors.push(format!("{}^{}", symbols.name(s), e));
                }
            }
            out.push_str(&factors.join("*"));
        }
        out
    }

    /// Parses an expression over declared symbols. Accepts the canonical form
    /// plus decimals, parentheses, `/` by constants and `^` powers.
    pub fn parse(text: &str, symbols: &SymbolTable) -> Result<Poly, PolyError> {
        let mut p = Parser {
            src: text.as_bytes(),
            pos: 0,
            symbols,
        };
        let out = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(out)
    }
}

impl fmt::Display for Poly {
    // Without a symbol table, symbols print as `s<id>`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut table = SymbolTable::new();
        let max = self.symbols().last().map(|s| s.0 + 1).unwrap_or(0);
        for i in 0..max {
            table.insert(&format!("s{i}")).expect("fresh names");
        }
        f.write_str(&self.to_text(&table))
    }
}

pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Nearest double to an exact rational, robust to numerators and
/// denominators far beyond the f64 range.
pub fn rational_to_f64(r: &Rational) -> f64 {
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && n.abs() < 9.0e15 && d < 9.0e15 {
            return n / d;
        }
    }
    if r.is_zero() {
        return 0.0;
    }
    // Shift so the integer quotient carries 64 significant bits.
    let n = r.numer().abs();
    let d = r.denom().clone();
    let shift = d.bits() as i64 - n.bits() as i64 + 64;
    let q = if shift >= 0 {
        (n << shift as usize) / d
    } else {
        n / (d << (-shift) as usize)
    };
    let mant = q.to_f64().unwrap_or(f64::INFINITY);
    let v = ldexp(mant, -shift);
    if r.is_negative() {
        -v
    } else {
        v
    }
}

fn ldexp(mut x: f64, mut e: i64) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e as i32)
}

/// Exact rational value of a finite double.
pub fn f64_to_rational(x: f64) -> Rational {
    Rational::from_float(x).expect("finite float")
}

/// Parses `12`, `-3/4`, `0.35`, `1e-3`, `2.5E+2` exactly.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    if let Some((n, d)) = t.split_once('/') {
        let n = parse_rational(n)?;
        let d = parse_rational(d)?;
        if d.is_zero() {
            return None;
        }
        return Some(n / d);
    }
    let (neg, body) = match t.as_bytes()[0] {
        b'-' => (true, &t[1..]),
        b'+' => (false, &t[1..]),
        _ => (false, t),
    };
    let (mantissa, exp) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], body[i + 1..].parse::<i32>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = digits.parse().ok()?;
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut r = Rational::from_integer(numer);
    if scale >= 0 {
        r *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        r /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if neg { -r } else { r })
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    symbols: &'a SymbolTable,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> PolyError {
        PolyError::Parse {
            pos: self.pos,
            msg: msg.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Poly, PolyError> {
        let mut acc = match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                -self.term()?
            }
            Some(b'+') => {
                self.pos += 1;
                self.term()?
            }
            _ => self.term()?,
        };
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    acc = &acc + &self.term()?;
                }
                Some(b'-') => {
                    self.pos += 1;
                    acc = &acc - &self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Poly, PolyError> {
        let mut acc = self.power()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    acc = &acc * &self.power()?;
                }
                Some(b'/') => {
                    self.pos += 1;
                    let at = self.pos;
                    let d = self.power()?;
                    match d.as_constant() {
                        Some(c) if !c.is_zero() => acc = acc.scale(&c.recip()),
                        _ => {
                            return Err(PolyError::Parse {
                                pos: at,
                                msg: "division only by a nonzero constant".into(),
                            })
                        }
                    }
                }
                _ => return Ok(acc),
            }
        }
    }

    fn power(&mut self) -> Result<Poly, PolyError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            let e: u32 = std::str::from_utf8(&self.src[start..self.pos])
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| self.err("expected a nonnegative integer exponent"))?;
            return Ok(base.pow(e));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Poly, PolyError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.err("expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(b) if b.is_ascii_digit() || b == b'.' => {
                let start = self.pos;
                while self.pos < self.src.len() {
                    let c = self.src[self.pos];
                    let exp_sign = (c == b'-' || c == b'+') && matches!(self.src[self.pos - 1], b'e' | b'E');
                    if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' || exp_sign {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                let lit = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                parse_rational(lit).map(Poly::constant).ok_or(PolyError::Parse {
                    pos: start,
                    msg: format!("bad number `{lit}`"),
                })
            }
            Some(b) if b.is_ascii_alphabetic() || b == b'_' => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                self.symbols
                    .lookup(name)
                    .map(Poly::var)
                    .ok_or_else(|| PolyError::UndeclaredSymbol(name.to_string()))
            }
            Some(_) => Err(self.err("unexpected character")),
            None => Err(self.err("unexpected end of input")),
        }
    }
}

impl Add for &Poly {
    type Output = Poly;
    fn add(self, rhs: &Poly) -> Poly {
        Poly::combine(Combine::Add, self, rhs)
    }
}

impl Sub for &Poly {
    type Output = Poly;
    fn sub(self, rhs: &Poly) -> Poly {
        Poly::combine(Combine::Sub, self, rhs)
    }
}

impl Mul for &Poly {
    type Output = Poly;
    fn mul(self, rhs: &Poly) -> Poly {
        Poly::mul(self, rhs)
    }
}

impl Neg for Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly {
            terms: self.terms.into_iter().map(|(m, c)| (m, -c)).collect(),
        }
    }
}

/// Floating-point snapshot of a polynomial for hot evaluation loops.
#[derive(Clone, Debug)]
pub struct CompiledPoly {
    terms: Vec<(f64, Vec<(usize, i32)>)>,
}

impl CompiledPoly {
    pub fn new(p: &Poly) -> Self {
        Self {
            terms: p
                .terms()
                .map(|(m, c)| {
                    (
                        rational_to_f64(c),
                        m.iter().map(|(s, e)| (s.index(), e as i32)).collect(),
                    )
                })
                .collect(),
        }
    }

    /// `values` must cover every symbol of the source polynomial.
    pub fn eval(&self, values: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, m)| c * m.iter().map(|&(s, e)| values[s].powi(e)).product::<f64>())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    fn table(names: &[&str]) -> SymbolTable {
        let mut t = SymbolTable::new();
        for n in names {
            t.insert(n).unwrap();
        }
        t
    }

    #[test]
    fn like_terms_collect() {
        let t = table(&["A"]);
        let a = SymbolId(0);
        let p = Poly::var(a).scale(&q(2, 1));
        let r = Poly::var(a).scale(&q(3, 1));
        assert_eq!((&p + &r).to_text(&t), "5*A");
        assert!((&p - &p).is_zero());
    }

    #[test]
    fn half_cancellation_matches_fraction_arithmetic() {
        let t = table(&["A", "Y0"]);
        let p = Poly::parse("A*Y0", &t).unwrap();
        let r = Poly::parse("-1/2*A*Y0", &t).unwrap();
        let sum = &p + &r;
        // 1 + (-1/2) = 1/2 over plain integer fractions: (2 - 1)/2
        let (num, den) = (2 - 1, 2);
        assert_eq!(sum, Poly::parse("A*Y0", &t).unwrap().scale(&q(num, den)));
        assert_eq!(sum.to_text(&t), "1/2*A*Y0");
    }

    #[test]
    fn identity_and_squares() {
        let t = table(&["A", "Y0", "Y1"]);
        let p = Poly::parse("3*A - Y0^2 + 1/7", &t).unwrap();
        assert_eq!(&Poly::one() * &p, p);
        let a = Poly::parse("A", &t).unwrap();
        assert_eq!((&a * &a).to_text(&t), "A^2");
        let lhs = &Poly::parse("Y0 + Y1", &t).unwrap() * &Poly::parse("Y0 - Y1", &t).unwrap();
        assert_eq!(lhs.to_text(&t), "Y0^2 - Y1^2");
    }

    #[test]
    fn eval_examples() {
        let t = table(&["A", "Y0"]);
        assert_eq!(Poly::zero().eval(&[]).unwrap(), 0.0);
        let p = Poly::parse("A^2*Y0", &t).unwrap();
        assert_eq!(p.eval(&[1.0, 2.5]).unwrap(), 2.5);
        let third = Poly::parse("1/3*A", &t).unwrap();
        assert_eq!(third.eval(&[3.0, 0.0]).unwrap(), 1.0);
        assert_eq!(p.eval(&[1.0]), Err(PolyError::MissingSymbol(1)));
        let mut m = HashMap::new();
        m.insert(SymbolId(0), 1.0);
        assert_eq!(p.eval_map(&m), Err(PolyError::MissingSymbol(1)));
    }

    #[test]
    fn canonical_order_is_graded() {
        let t = table(&["A", "Y0", "Y1", "C"]);
        let p = Poly::parse("1/24*A^2*Y0 + 1/12*C - 1/6*A*Y0", &t).unwrap();
        assert_eq!(p.to_text(&t), "1/12*C - 1/6*A*Y0 + 1/24*A^2*Y0");
        let p = Poly::parse("Y0^2 + A*Y0 + A^2 + 2", &t).unwrap();
        assert_eq!(p.to_text(&t), "2 + A^2 + A*Y0 + Y0^2");
    }

    #[test]
    fn parse_errors() {
        let t = table(&["A"]);
        assert_eq!(Poly::parse("A*Q", &t), Err(PolyError::UndeclaredSymbol("Q".into())));
        assert!(matches!(Poly::parse("A/A", &t), Err(PolyError::Parse { .. })));
        assert!(matches!(Poly::parse("A +", &t), Err(PolyError::Parse { .. })));
        assert!(matches!(Poly::parse("(A", &t), Err(PolyError::Parse { .. })));
        assert_eq!(Poly::parse("(2 - A)/6", &t).unwrap().to_text(&t), "1/3 - 1/6*A");
    }

    #[test]
    fn rationals_parse_exactly() {
        assert_eq!(parse_rational("0.35"), Some(q(7, 20)));
        assert_eq!(parse_rational("-3/4"), Some(q(-3, 4)));
        assert_eq!(parse_rational("1e-3"), Some(q(1, 1000)));
        assert_eq!(parse_rational("2.5E+2"), Some(q(250, 1)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("abc"), None);
    }

    #[test]
    fn huge_rationals_convert() {
        let big = num_traits::pow(BigInt::from(10), 400);
        let r = Rational::new(big.clone() * BigInt::from(3), big);
        assert_eq!(rational_to_f64(&r), 3.0);
        let tiny = Rational::new(BigInt::from(1), num_traits::pow(BigInt::from(2), 1000));
        assert_eq!(rational_to_f64(&tiny), 2f64.powi(-1000));
        assert_eq!(rational_to_f64(&q(-1, 3)), -1.0 / 3.0);
    }
}
