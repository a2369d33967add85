//! Distributions, dependence blocks and the exact moment oracle.
//!
//! A [`RandomModel`] partitions the random symbols into mutually independent
//! [`DependenceBlock`]s. Scalar blocks carry one symbol; a multinomial block
//! carries a dependent vector. Expectations of polynomials factorize over
//! blocks and are computed exactly from closed-form or enumerated moments.

use std::collections::HashMap;
use std::sync::RwLock;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use rand::Rng;
use rand_distr::{Beta as BetaSampler, Binomial as BinomialSampler, Distribution as _, Gamma as GammaSampler};
use thiserror::Error;

use crate::polyalg::{rational_to_f64, Monomial, Poly, PolyError, Rational, SymbolId, SymbolTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("symbol `{0}` owned by two blocks")]
    SymbolOwnedTwice(String),
    #[error("invalid {kind} parameters: {msg}")]
    InvalidParameters { kind: &'static str, msg: String },
    #[error("{0} is vector-valued; use a joint moment")]
    UnsupportedKind(&'static str),
    #[error("distribution has {expected} components but {got} were given")]
    ArityMismatch { expected: usize, got: usize },
    #[error("symbol #{0} is not part of the model")]
    UnknownSymbol(u32),
    #[error("a block needs at least one symbol")]
    EmptyBlock,
}

impl From<PolyError> for ModelError {
    fn from(e: PolyError) -> Self {
        match e {
            PolyError::DuplicateSymbol(n) => ModelError::SymbolOwnedTwice(n),
            other => ModelError::InvalidParameters {
                kind: "symbol",
                msg: other.to_string(),
            },
        }
    }
}

/// Probability law of a block. Parameters are exact rationals; the Gamma law
/// uses the shape-rate parametrization.
#[derive(Clone, Debug, PartialEq)]
pub enum Distribution {
    PointMass(Rational),
    Bernoulli(Rational),
    Binomial {
        n: u64,
        p: Rational,
    },
    Beta {
        alpha: Rational,
        beta: Rational,
    },
    Gamma {
        shape: Rational,
        rate: Rational,
    },
    Uniform {
        a: Rational,
        b: Rational,
    },
    FiniteDiscrete {
        points: Vec<Rational>,
        probs: Vec<Rational>,
    },
    Multinomial {
        n: u64,
        probs: Vec<Rational>,
    },
}

fn invalid(kind: &'static str, msg: impl Into<String>) -> ModelError {
    ModelError::InvalidParameters { kind, msg: msg.into() }
}

fn check_prob(kind: &'static str, p: &Rational) -> Result<(), ModelError> {
    if p.is_negative() || p > &Rational::one() {
        return Err(invalid(kind, format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

fn check_probs(kind: &'static str, probs: &[Rational]) -> Result<(), ModelError> {
    if probs.is_empty() {
        return Err(invalid(kind, "empty probability vector"));
    }
    for p in probs {
        check_prob(kind, p)?;
    }
    let total: Rational = probs.iter().sum();
    if !total.is_one() {
        return Err(invalid(kind, format!("probabilities sum to {total}, not 1")));
    }
    Ok(())
}

impl Distribution {
    pub fn kind(&self) -> &'static str {
        match self {
            Distribution::PointMass(_) => "point",
            Distribution::Bernoulli(_) => "bernoulli",
            Distribution::Binomial { .. } => "binomial",
            Distribution::Beta { .. } => "beta",
            Distribution::Gamma { .. } => "gamma",
            Distribution::Uniform { .. } => "uniform",
            Distribution::FiniteDiscrete { .. } => "discrete",
            Distribution::Multinomial { .. } => "multinomial",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Distribution::Multinomial { probs, .. } => probs.len(),
            _ => 1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let kind = self.kind();
        match self {
            Distribution::PointMass(_) => Ok(()),
            Distribution::Bernoulli(p) | Distribution::Binomial { p, .. } => check_prob(kind, p),
            Distribution::Beta { alpha, beta } => {
                if alpha.is_positive() && beta.is_positive() {
                    Ok(())
                } else {
                    Err(invalid(kind, "alpha and beta must be positive"))
                }
            }
            Distribution::Gamma { shape, rate } => {
                if shape.is_positive() && rate.is_positive() {
                    Ok(())
                } else {
                    Err(invalid(kind, "shape and rate must be positive"))
                }
            }
            Distribution::Uniform { a, b } => {
                if a < b {
                    Ok(())
                } else {
                    Err(invalid(kind, format!("need a < b, got a={a}, b={b}")))
                }
            }
            Distribution::FiniteDiscrete { points, probs } => {
                if points.len() != probs.len() {
                    return Err(invalid(kind, "points and probs differ in length"));
                }
                check_probs(kind, probs)
            }
            Distribution::Multinomial { probs, .. } => check_probs(kind, probs),
        }
    }
}

/// Essential supremum of |Z|.
#[derive(Clone, Debug, PartialEq)]
pub enum EssSup {
    Bounded(Rational),
    Unbounded,
}

impl EssSup {
    pub fn to_f64(&self) -> f64 {
        match self {
            EssSup::Bounded(r) => rational_to_f64(r),
            EssSup::Unbounded => f64::INFINITY,
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, EssSup::Bounded(_))
    }
}

fn binomial_coeff(n: u64, k: u64) -> BigInt {
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

fn rpow(r: &Rational, k: u64) -> Rational {
    num_traits::pow(r.clone(), k as usize)
}

fn int(n: u64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Exact E[Z^k] for a scalar distribution.
pub fn raw_moment(dist: &Distribution, k: u32) -> Result<Rational, ModelError> {
    if k == 0 {
        return Ok(Rational::one());
    }
    let k64 = u64::from(k);
    Ok(match dist {
        Distribution::PointMass(c) => rpow(c, k64),
        Distribution::Bernoulli(p) => p.clone(),
        Distribution::Binomial { n, p } => {
            let q = Rational::one() - p;
            (0..=*n)
                .map(|y| {
                    Rational::from_integer(binomial_coeff(*n, y)) * rpow(p, y) * rpow(&q, n - y) * rpow(&int(y), k64)
                })
                .sum()
        }
        Distribution::Beta { alpha, beta } => (0..k64).map(|j| (alpha + int(j)) / (alpha + beta + int(j))).product(),
        Distribution::Gamma { shape, rate } => (0..k64).map(|j| (shape + int(j)) / rate).product(),
        Distribution::Uniform { a, b } => (rpow(b, k64 + 1) - rpow(a, k64 + 1)) / (int(k64 + 1) * (b - a)),
        Distribution::FiniteDiscrete { points, probs } => points.iter().zip(probs).map(|(x, p)| p * rpow(x, k64)).sum(),
        Distribution::Multinomial { .. } => return Err(ModelError::UnsupportedKind("multinomial")),
    })
}

/// Essential sup of |Z| for a scalar law; for a multinomial vector, the bound
/// shared by every component.
pub fn linfty_norm(dist: &Distribution) -> EssSup {
    let zero = Rational::zero;
    match dist {
        Distribution::PointMass(c) => EssSup::Bounded(c.abs()),
        Distribution::Bernoulli(p) => EssSup::Bounded(if p.is_zero() { zero() } else { Rational::one() }),
        Distribution::Binomial { n, p } => EssSup::Bounded(if p.is_zero() { zero() } else { int(*n) }),
        Distribution::Beta { .. } => EssSup::Bounded(Rational::one()),
        Distribution::Gamma { .. } => EssSup::Unbounded,
        Distribution::Uniform { a, b } => EssSup::Bounded(a.abs().max(b.abs())),
        Distribution::FiniteDiscrete { points, probs } => EssSup::Bounded(
            points
                .iter()
                .zip(probs)
                .filter(|(_, p)| p.is_positive())
                .map(|(x, _)| x.abs())
                .max()
                .unwrap_or_else(zero),
        ),
        Distribution::Multinomial { n, .. } => EssSup::Bounded(int(*n)),
    }
}

/// A group of symbols sharing one joint law; distinct blocks are independent.
#[derive(Clone, Debug, PartialEq)]
pub struct DependenceBlock {
    pub symbols: Vec<SymbolId>,
    pub dist: Distribution,
}

fn for_each_composition(n: u64, parts: usize, f: &mut impl FnMut(&[u64])) {
    fn rec(rem: u64, idx: usize, cur: &mut Vec<u64>, f: &mut impl FnMut(&[u64])) {
        if idx + 1 == cur.len() {
            cur[idx] = rem;
            f(cur);
            return;
        }
        for y in 0..=rem {
            cur[idx] = y;
            rec(rem - y, idx + 1, cur, f);
        }
    }
    let mut cur = vec![0; parts];
    rec(n, 0, &mut cur, f);
}

/// Exact E[prod Z_i^{e_i}] over one block.
pub fn joint_moment(block: &DependenceBlock, exponents: &[u32]) -> Result<Rational, ModelError> {
    let arity = block.dist.arity();
    if exponents.len() != arity || block.symbols.len() != arity {
        return Err(ModelError::ArityMismatch {
            expected: block.symbols.len(),
            got: exponents.len(),
        });
    }
    match &block.dist {
        Distribution::Multinomial { n, probs } => {
            if exponents.iter().all(|&e| e == 0) {
                return Ok(Rational::one());
            }
            let mut total = Rational::zero();
            let factorial = |m: u64| -> BigInt { (1..=m).map(BigInt::from).product() };
            let n_fact = factorial(*n);
            for_each_composition(*n, arity, &mut |ys| {
                let mut weight = Rational::from_integer(n_fact.clone());
                let mut value = Rational::one();
                for ((&y, p), &e) in ys.iter().zip(probs).zip(exponents) {
                    weight = weight * rpow(p, y) / Rational::from_integer(factorial(y));
                    value *= rpow(&int(y), u64::from(e));
                }
                total += weight * value;
            });
            Ok(total)
        }
        scalar => raw_moment(scalar, exponents[0]),
    }
}

/// Mutually independent blocks over a shared symbol table.
#[derive(Clone, Debug, Default)]
pub struct RandomModel {
    symbols: SymbolTable,
    blocks: Vec<DependenceBlock>,
    // symbol id -> (block index, position within block)
    owner: Vec<(usize, usize)>,
}

impl RandomModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_scalar(&mut self, name: &str, dist: Distribution) -> Result<SymbolId, ModelError> {
        Ok(self.add_block(&[name], dist)?[0])
    }

    pub fn add_block(&mut self, names: &[&str], dist: Distribution) -> Result<Vec<SymbolId>, ModelError> {
        if names.is_empty() {
            return Err(ModelError::EmptyBlock);
        }
        dist.validate()?;
        if dist.arity() != names.len() {
            return Err(ModelError::ArityMismatch {
                expected: dist.arity(),
                got: names.len(),
            });
        }
        for (i, n) in names.iter().enumerate() {
            if self.symbols.lookup(n).is_some() || names[..i].contains(n) {
                return Err(ModelError::SymbolOwnedTwice(n.to_string()));
            }
        }
        let b = self.blocks.len();
        let mut ids = Vec::with_capacity(names.len());
        for (pos, n) in names.iter().enumerate() {
            let id = self.symbols.insert(n)?;
            self.owner.push((b, pos));
            ids.push(id);
        }
        self.blocks.push(DependenceBlock {
            symbols: ids.clone(),
            dist,
        });
        Ok(ids)
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    pub fn blocks(&self) -> &[DependenceBlock] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn block_of(&self, id: SymbolId) -> Result<(usize, usize), ModelError> {
        self.owner
            .get(id.index())
            .copied()
            .ok_or(ModelError::UnknownSymbol(id.0))
    }

    /// Essential sup of a single symbol.
    pub fn symbol_linfty(&self, id: SymbolId) -> Result<EssSup, ModelError> {
        let (b, _) = self.block_of(id)?;
        Ok(linfty_norm(&self.blocks[b].dist))
    }

    /// Triangle-inequality bound sum |c| prod ||Z||^e on ess sup |p|. Exact for
    /// a single scaled symbol or a constant.
    pub fn poly_linfty_bound(&self, p: &Poly) -> Result<EssSup, ModelError> {
        let mut total = Rational::zero();
        for (m, c) in p.terms() {
            let mut prod = c.abs();
            for (s, e) in m.iter() {
                match self.symbol_linfty(s)? {
                    EssSup::Bounded(r) => prod *= rpow(&r, u64::from(e)),
                    EssSup::Unbounded => return Ok(EssSup::Unbounded),
                }
            }
            total += prod;
        }
        Ok(EssSup::Bounded(total))
    }
}

/// Exact expectation engine with memoized per-block moments.
///
/// The cache sits behind a lock so one oracle may be shared by worker
/// threads; exact arithmetic makes the results independent of query order.
pub struct MomentOracle<'m> {
    model: &'m RandomModel,
    memoize: bool,
    block_cache: RwLock<HashMap<(usize, Vec<u32>), Rational>>,
    monomial_cache: RwLock<HashMap<Monomial, Rational>>,
}

impl<'m> MomentOracle<'m> {
    pub fn new(model: &'m RandomModel) -> Self {
        Self {
            model,
            memoize: true,
            block_cache: RwLock::new(HashMap::new()),
            monomial_cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn uncached(model: &'m RandomModel) -> Self {
        Self {
            memoize: false,
            ..Self::new(model)
        }
    }

    pub fn model(&self) -> &RandomModel {
        self.model
    }

    fn block_moment(&self, b: usize, exps: Vec<u32>) -> Result<Rational, ModelError> {
        if self.memoize {
            if let Some(v) = self.block_cache.read().unwrap().get(&(b, exps.clone())) {
                return Ok(v.clone());
            }
        }
        let v = joint_moment(&self.model.blocks[b], &exps)?;
        if self.memoize {
            self.block_cache.write().unwrap().insert((b, exps), v.clone());
        }
        Ok(v)
    }

    /// E[m], factorized across blocks.
    pub fn monomial(&self, m: &Monomial) -> Result<Rational, ModelError> {
        if m.is_one() {
            return Ok(Rational::one());
        }
        if self.memoize {
            if let Some(v) = self.monomial_cache.read().unwrap().get(m) {
                return Ok(v.clone());
            }
        }
        let v = self.factorized(m)?;
        if self.memoize {
            self.monomial_cache.write().unwrap().insert(m.clone(), v.clone());
        }
        Ok(v)
    }

    /// E[m] from the block moments, without storing `m` itself. Meant for
    /// monomials that are queried once.
    pub fn factorized(&self, m: &Monomial) -> Result<Rational, ModelError> {
        let mut per_block: Vec<(usize, Vec<u32>)> = Vec::new();
        for (s, e) in m.iter() {
            let (b, pos) = self.model.block_of(s)?;
            let slot = match per_block.iter().position(|(bb, _)| *bb == b) {
                Some(i) => i,
                None => {
                    per_block.push((b, vec![0; self.model.blocks[b].symbols.len()]));
                    per_block.len() - 1
                }
            };
            per_block[slot].1[pos] = e;
        }
        let mut v = Rational::one();
        for (b, exps) in per_block {
            v *= self.block_moment(b, exps)?;
            if v.is_zero() {
                break;
            }
        }
        Ok(v)
    }

    pub fn expect(&self, p: &Poly) -> Result<Rational, ModelError> {
        let mut total = Rational::zero();
        for (m, c) in p.terms() {
            total += c * self.monomial(m)?;
        }
        Ok(total)
    }

    /// E[p*q] accumulated term pair by term pair, never building p*q.
    pub fn expect_product(&self, p: &Poly, q: &Poly) -> Result<Rational, ModelError> {
        let mut total = Rational::zero();
        for (ma, ca) in p.terms() {
            let mut inner = Rational::zero();
            for (mb, cb) in q.terms() {
                inner += cb * self.monomial(&ma.mul(mb))?;
            }
            total += ca * inner;
        }
        Ok(total)
    }

    /// sqrt(E[p^2]).
    pub fn l2_norm(&self, p: &Poly) -> Result<f64, ModelError> {
        Ok(rational_to_f64(&self.expect_product(p, p)?).max(0.0).sqrt())
    }
}

/// Exact E[p] under `model`.
pub fn expect_poly(p: &Poly, model: &RandomModel) -> Result<Rational, ModelError> {
    MomentOracle::new(model).expect(p)
}

/// Floating-point sampler for one block, built once per Monte Carlo run.
#[derive(Clone, Debug)]
pub enum BlockSampler {
    Point(f64),
    Bernoulli(f64),
    Binomial(BinomialSampler),
    Beta(BetaSampler<f64>),
    Gamma(GammaSampler<f64>),
    Uniform(f64, f64),
    Discrete { points: Vec<f64>, cumulative: Vec<f64> },
    Multinomial { n: u64, probs: Vec<f64> },
}

impl BlockSampler {
    pub fn new(dist: &Distribution) -> Self {
        let f = rational_to_f64;
        match dist {
            Distribution::PointMass(c) => BlockSampler::Point(f(c)),
            Distribution::Bernoulli(p) => BlockSampler::Bernoulli(f(p)),
            Distribution::Binomial { n, p } => {
                BlockSampler::Binomial(BinomialSampler::new(*n, f(p)).expect("validated binomial"))
            }
            Distribution::Beta { alpha, beta } => {
                BlockSampler::Beta(BetaSampler::new(f(alpha), f(beta)).expect("validated beta"))
            }
            Distribution::Gamma { shape, rate } => {
                BlockSampler::Gamma(GammaSampler::new(f(shape), 1.0 / f(rate)).expect("validated gamma"))
            }
            Distribution::Uniform { a, b } => BlockSampler::Uniform(f(a), f(b)),
            Distribution::FiniteDiscrete { points, probs } => {
                let mut acc = 0.0;
                let cumulative = probs
                    .iter()
                    .map(|p| {
                        acc += f(p);
                        acc
                    })
                    .collect();
                BlockSampler::Discrete {
                    points: points.iter().map(f).collect(),
                    cumulative,
                }
            }
            Distribution::Multinomial { n, probs } => BlockSampler::Multinomial {
                n: *n,
                probs: probs.iter().map(f).collect(),
            },
        }
    }

    /// One joint draw written to `out` (length = block arity).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            BlockSampler::Point(c) => out[0] = *c,
            BlockSampler::Bernoulli(p) => out[0] = if rng.random::<f64>() < *p { 1.0 } else { 0.0 },
            BlockSampler::Binomial(s) => out[0] = s.sample(rng) as f64,
            BlockSampler::Beta(s) => out[0] = s.sample(rng),
            BlockSampler::Gamma(s) => out[0] = s.sample(rng),
            BlockSampler::Uniform(a, b) => out[0] = a + (b - a) * rng.random::<f64>(),
            BlockSampler::Discrete { points, cumulative } => {
                let u = rng.random::<f64>() * cumulative.last().copied().unwrap_or(1.0);
                let i = cumulative.partition_point(|&c| c <= u).min(points.len() - 1);
                out[0] = points[i];
            }
            BlockSampler::Multinomial { n, probs } => {
                // sequential binomial decomposition
                let mut remaining = *n;
                let mut p_left = 1.0;
                let last = probs.len() - 1;
                for (i, &p) in probs.iter().enumerate() {
                    if i == last {
                        out[i] = remaining as f64;
                        break;
                    }
                    let x = if remaining == 0 || p <= 0.0 {
                        0
                    } else if p >= p_left {
                        remaining
                    } else {
                        BinomialSampler::new(remaining, (p / p_left).clamp(0.0, 1.0))
                            .expect("probability in range")
                            .sample(rng)
                    };
                    out[i] = x as f64;
                    remaining -= x;
                    p_left -= p;
                }
            }
        }
    }
}

/// One joint draw of `block` as (symbol, value) pairs.
pub fn sample_block<R: Rng + ?Sized>(block: &DependenceBlock, rng: &mut R) -> Vec<(SymbolId, f64)> {
    let mut out = vec![0.0; block.symbols.len()];
    BlockSampler::new(&block.dist).draw(rng, &mut out);
    block.symbols.iter().copied().zip(out).collect()
}

/// Draws every block of a model into a dense assignment indexed by symbol id.
#[derive(Clone, Debug)]
pub struct ModelSampler {
    blocks: Vec<(Vec<usize>, BlockSampler)>,
    width: usize,
}

impl ModelSampler {
    pub fn new(model: &RandomModel) -> Self {
        Self {
            blocks: model
                .blocks()
                .iter()
                .map(|b| {
                    (
                        b.symbols.iter().map(|s| s.index()).collect(),
                        BlockSampler::new(&b.dist),
                    )
                })
                .collect(),
            width: model.len(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, values: &mut [f64]) {
        let mut buf = [0.0; 16];
        for (ids, sampler) in &self.blocks {
            if ids.len() <= buf.len() {
                sampler.draw(rng, &mut buf[..ids.len()]);
                for (k, &i) in ids.iter().enumerate() {
                    values[i] = buf[k];
                }
            } else {
                let mut v = vec![0.0; ids.len()];
                sampler.draw(rng, &mut v);
                for (k, &i) in ids.iter().enumerate() {
                    values[i] = v[k];
                }
            }
        }
    }
}
