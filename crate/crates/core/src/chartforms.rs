//! Exact multivariate rational functions and top-degree forms on affine
//! charts, with pullback along substitution chains and pole-order readout.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChartError {
    #[error("inexact division, remainder {remainder}")]
    Inexact { remainder: String },
    #[error("denominator is identically zero")]
    ZeroDenominator,
    #[error("unknown variable '{0}'")]
    UnknownVar(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("frame mismatch: {0}")]
    Frame(String),
    #[error("coefficient vanishes identically; order is undefined")]
    ZeroForm,
    #[error("chart {chart}: {source}")]
    Chart {
        chart: String,
        #[source]
        source: Box<ChartError>,
    },
    #[error("unknown example '{0}' (expected ex1, ex2 or ex3)")]
    UnknownExample(String),
}

/// Ordered variable names shared by every polynomial of one computation.
pub type Ring = Arc<Vec<String>>;

pub fn ring(names: &[&str]) -> Ring {
    Arc::new(names.iter().map(|s| s.to_string()).collect())
}

fn index_of(ring: &Ring, name: &str) -> Result<usize, ChartError> {
    ring.iter()
        .position(|v| v == name)
        .ok_or_else(|| ChartError::UnknownVar(name.to_string()))
}

fn same_ring(a: &Ring, b: &Ring) {
    assert!(
        Arc::ptr_eq(a, b) || a == b,
        "polynomials over different rings"
    );
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsePoly {
    ring: Ring,
    terms: BTreeMap<Vec<u32>, BigRational>,
}

impl SparsePoly {
    pub fn zero(ring: &Ring) -> Self {
        Self {
            ring: ring.clone(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(ring: &Ring, c: BigRational) -> Self {
        let mut p = Self::zero(ring);
        if !c.is_zero() {
            p.terms.insert(vec![0; ring.len()], c);
        }
        p
    }

    pub fn one(ring: &Ring) -> Self {
        Self::constant(ring, BigRational::one())
    }

    pub fn monomial(ring: &Ring, exps: Vec<u32>, c: BigRational) -> Self {
        assert_eq!(exps.len(), ring.len());
        let mut p = Self::zero(ring);
        if !c.is_zero() {
            p.terms.insert(exps, c);
        }
        p
    }

    pub fn var(ring: &Ring, idx: usize) -> Self {
        let mut e = vec![0; ring.len()];
        e[idx] = 1;
        Self::monomial(ring, e, BigRational::one())
    }

    pub fn named(ring: &Ring, name: &str) -> Result<Self, ChartError> {
        Ok(Self::var(ring, index_of(ring, name)?))
    }

    pub fn ring(&self) -> &Ring {
        &self.ring
    }

    pub fn terms(&self) -> &BTreeMap<Vec<u32>, BigRational> {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1
            && self
                .terms
                .iter()
                .all(|(e, c)| c.is_one() && e.iter().all(|&x| x == 0))
    }

    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => {
                let (e, c) = self.terms.iter().next().unwrap();
                e.iter().all(|&x| x == 0).then(|| c.clone())
            }
            _ => None,
        }
    }

    fn add_term(&mut self, e: Vec<u32>, c: BigRational) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(e) {
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

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero(&self.ring);
        }
        Self {
            ring: self.ring.clone(),
            terms: self.terms.iter().map(|(e, x)| (e.clone(), x * c)).collect(),
        }
    }

    pub fn mul_monomial(&self, m: &[u32]) -> Self {
        Self {
            ring: self.ring.clone(),
            terms: self
                .terms
                .iter()
                .map(|(e, c)| (e.iter().zip(m).map(|(a, b)| a + b).collect(), c.clone()))
                .collect(),
        }
    }

    /// Panics unless `m` divides every term.
    fn div_monomial(&self, m: &[u32]) -> Self {
        Self {
            ring: self.ring.clone(),
            terms: self
                .terms
                .iter()
                .map(|(e, c)| (e.iter().zip(m).map(|(a, b)| a - b).collect(), c.clone()))
                .collect(),
        }
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::one(&self.ring);
        let mut base = self.clone();
        let mut k = k;
        while k > 0 {
            if k & 1 == 1 {
                out = &out * &base;
            }
            k >>= 1;
            if k > 0 {
                base = &base * &base;
            }
        }
        out
    }

    pub fn derivative(&self, idx: usize) -> Self {
        let mut out = Self::zero(&self.ring);
        for (e, c) in &self.terms {
            if e[idx] > 0 {
                let mut f = e.clone();
                f[idx] -= 1;
                out.add_term(f, c * BigRational::from_integer(BigInt::from(e[idx])));
            }
        }
        out
    }

    /// Largest `k` with `x_idx^k | self`; `None` for the zero polynomial.
    pub fn ord(&self, idx: usize) -> Option<u32> {
        self.terms.keys().map(|e| e[idx]).min()
    }

    pub fn min_exponents(&self) -> Vec<u32> {
        let mut m = vec![u32::MAX; self.ring.len()];
        for e in self.terms.keys() {
            for (a, &b) in m.iter_mut().zip(e) {
                *a = (*a).min(b);
            }
        }
        if self.is_zero() {
            m.iter_mut().for_each(|a| *a = 0);
        }
        m
    }

    fn leading(&self) -> Option<(&Vec<u32>, &BigRational)> {
        self.terms.iter().next_back()
    }

    /// Quotient of an exact division in lexicographic order.
    pub fn exact_divide(&self, q: &Self) -> Result<Self, ChartError> {
        same_ring(&self.ring, &q.ring);
        let (qm, qc) = q.leading().ok_or(ChartError::ZeroDenominator)?;
        let (qm, qc) = (qm.clone(), qc.clone());
        let mut r = self.clone();
        let mut quot = Self::zero(&self.ring);
        let mut rem = Self::zero(&self.ring);
        while let Some((m, c)) = r.leading().map(|(m, c)| (m.clone(), c.clone())) {
            if m.iter().zip(&qm).all(|(a, b)| a >= b) {
                let e: Vec<u32> = m.iter().zip(&qm).map(|(a, b)| a - b).collect();
                let t = &c / &qc;
                r = &r - &q.mul_monomial(&e).scale(&t);
                quot.add_term(e, t);
            } else {
                r.terms.remove(&m);
                rem.add_term(m, c);
            }
        }
        if rem.is_zero() {
            Ok(quot)
        } else {
            Err(ChartError::Inexact {
                remainder: rem.to_string(),
            })
        }
    }

    pub fn eval(&self, point: &[BigRational]) -> BigRational {
        self.terms
            .iter()
            .map(|(e, c)| {
                e.iter()
                    .zip(point)
                    .fold(c.clone(), |acc, (&k, x)| acc * num_traits::pow(x.clone(), k as usize))
            })
            .sum()
    }

    /// `x_idx ↦ x_idx + c`.
    pub fn shift(&self, idx: usize, c: &BigRational) -> Self {
        let mut sub = vec![None; self.ring.len()];
        let x = Self::var(&self.ring, idx);
        sub[idx] = Some(RatFn::from_poly(&x + &Self::constant(&self.ring, c.clone())));
        RatFn::from_poly(self.clone())
            .substitute(&sub)
            .expect("polynomial substitution has denominator 1")
            .num
    }
}

impl std::ops::Add for &SparsePoly {
    type Output = SparsePoly;
    fn add(self, o: &SparsePoly) -> SparsePoly {
        same_ring(&self.ring, &o.ring);
        let mut out = self.clone();
        for (e, c) in &o.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }
}

impl std::ops::Sub for &SparsePoly {
    type Output = SparsePoly;
    fn sub(self, o: &SparsePoly) -> SparsePoly {
        same_ring(&self.ring, &o.ring);
        let mut out = self.clone();
        for (e, c) in &o.terms {
            out.add_term(e.clone(), -c);
        }
        out
    }
}

impl std::ops::Neg for &SparsePoly {
    type Output = SparsePoly;
    fn neg(self) -> SparsePoly {
        self.scale(&-BigRational::one())
    }
}

impl std::ops::Mul for &SparsePoly {
    type Output = SparsePoly;
    fn mul(self, o: &SparsePoly) -> SparsePoly {
        same_ring(&self.ring, &o.ring);
        let mut out = SparsePoly::zero(&self.ring);
        for (e1, c1) in &self.terms {
            for (e2, c2) in &o.terms {
                let e = e1.iter().zip(e2).map(|(a, b)| a + b).collect();
                out.add_term(e, c1 * c2);
            }
        }
        out
    }
}

fn fmt_rational(q: &BigRational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

impl fmt::Display for SparsePoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        for (k, (e, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let mag = c.abs();
            if k == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { '-' } else { '+' })?;
            }
            let vars: Vec<String> = e
                .iter()
                .enumerate()
                .filter(|(_, &x)| x > 0)
                .map(|(i, &x)| {
                    if x == 1 {
                        self.ring[i].clone()
                    } else {
                        format!("{}^{}", self.ring[i], x)
                    }
                })
                .collect();
            if vars.is_empty() {
                write!(f, "{}", fmt_rational(&mag))?;
            } else if mag.is_one() {
                write!(f, "{}", vars.join("*"))?;
            } else {
                write!(f, "{}*{}", fmt_rational(&mag), vars.join("*"))?;
            }
        }
        Ok(())
    }
}

/// Quotient of polynomials with shared pure variable powers cancelled and
/// the denominator's leading coefficient normalised to 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RatFn {
    num: SparsePoly,
    den: SparsePoly,
}

impl RatFn {
    pub fn new(num: SparsePoly, den: SparsePoly) -> Result<Self, ChartError> {
        same_ring(&num.ring, &den.ring);
        if den.is_zero() {
            return Err(ChartError::ZeroDenominator);
        }
        let mut r = Self { num, den };
        r.reduce();
        Ok(r)
    }

    pub fn from_poly(p: SparsePoly) -> Self {
        let den = SparsePoly::one(&p.ring);
        Self { num: p, den }
    }

    pub fn constant(ring: &Ring, c: BigRational) -> Self {
        Self::from_poly(SparsePoly::constant(ring, c))
    }

    pub fn num(&self) -> &SparsePoly {
        &self.num
    }

    pub fn den(&self) -> &SparsePoly {
        &self.den
    }

    pub fn ring(&self) -> &Ring {
        &self.num.ring
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    fn reduce(&mut self) {
        if self.num.is_zero() {
            self.den = SparsePoly::one(&self.num.ring);
            return;
        }
        let a = self.num.min_exponents();
        let b = self.den.min_exponents();
        let m: Vec<u32> = a.iter().zip(&b).map(|(x, y)| *x.min(y)).collect();
        if m.iter().any(|&x| x > 0) {
            self.num = self.num.div_monomial(&m);
            self.den = self.den.div_monomial(&m);
        }
        let lead = self.den.leading().unwrap().1.clone();
        if !lead.is_one() {
            let inv = lead.recip();
            self.num = self.num.scale(&inv);
            self.den = self.den.scale(&inv);
        }
    }

    pub fn recip(&self) -> Result<Self, ChartError> {
        Self::new(self.den.clone(), self.num.clone())
    }

    pub fn pow(&self, k: i32) -> Result<Self, ChartError> {
        let base = if k < 0 { self.recip()? } else { self.clone() };
        let k = k.unsigned_abs();
        Self::new(base.num.pow(k), base.den.pow(k))
    }

    pub fn derivative(&self, idx: usize) -> Self {
        let n = &(&self.num.derivative(idx) * &self.den) - &(&self.num * &self.den.derivative(idx));
        Self::new(n, self.den.pow(2)).unwrap()
    }

    /// Same rational function, checked by cross-multiplication.
    pub fn equivalent(&self, other: &Self) -> bool {
        &self.num * &other.den == &other.num * &self.den
    }

    /// `ord(num) − ord(den)` along the coordinate hyperplane `x_idx = 0`.
    pub fn ord(&self, idx: usize) -> Result<i64, ChartError> {
        let n = self.num.ord(idx).ok_or(ChartError::ZeroForm)?;
        let d = self.den.ord(idx).unwrap();
        Ok(i64::from(n) - i64::from(d))
    }

    /// Simultaneous substitution `x_i ↦ subs[i]` for every `Some` entry.
    pub fn substitute(&self, subs: &[Option<RatFn>]) -> Result<Self, ChartError> {
        let nn = subst_poly(&self.num, subs);
        let dd = subst_poly(&self.den, subs);
        if dd.0.is_zero() {
            return Err(ChartError::ZeroDenominator);
        }
        Self::new(&nn.0 * &dd.1, &nn.1 * &dd.0)
    }

    pub fn shift(&self, idx: usize, c: &BigRational) -> Self {
        Self::new(self.num.shift(idx, c), self.den.shift(idx, c)).unwrap()
    }
}

/// Returns (numerator, denominator) of `p` after substitution, over the
/// common denominator `∏ den_i^{max exponent of x_i}`.
fn subst_poly(p: &SparsePoly, subs: &[Option<RatFn>]) -> (SparsePoly, SparsePoly) {
    let ring = &p.ring;
    let n = ring.len();
    let mut max_e = vec![0u32; n];
    for e in p.terms.keys() {
        for i in 0..n {
            if subs[i].is_some() {
                max_e[i] = max_e[i].max(e[i]);
            }
        }
    }
    let mut num_pows: HashMap<(usize, u32), SparsePoly> = HashMap::new();
    let mut den_pows: HashMap<(usize, u32), SparsePoly> = HashMap::new();
    let pow_of = |cache: &mut HashMap<(usize, u32), SparsePoly>, base: &SparsePoly, i: usize, k: u32| {
        cache
            .entry((i, k))
            .or_insert_with(|| base.pow(k))
            .clone()
    };
    let mut out = SparsePoly::zero(ring);
    for (e, c) in &p.terms {
        let mut keep = e.clone();
        let mut term = SparsePoly::constant(ring, c.clone());
        for i in 0..n {
            if let Some(r) = &subs[i] {
                keep[i] = 0;
                if e[i] > 0 {
                    term = &term * &pow_of(&mut num_pows, &r.num, i, e[i]);
                }
                let gap = max_e[i] - e[i];
                if gap > 0 && !r.den.is_one() {
                    term = &term * &pow_of(&mut den_pows, &r.den, i, gap);
                }
            }
        }
        out = &out + &term.mul_monomial(&keep);
    }
    let mut den = SparsePoly::one(ring);
    for i in 0..n {
        if let Some(r) = &subs[i] {
            if max_e[i] > 0 && !r.den.is_one() {
                den = &den * &r.den.pow(max_e[i]);
            }
        }
    }
    (out, den)
}

impl std::ops::Add for &RatFn {
    type Output = RatFn;
    fn add(self, o: &RatFn) -> RatFn {
        if self.den == o.den {
            return RatFn::new(&self.num + &o.num, self.den.clone()).unwrap();
        }
        RatFn::new(
            &(&self.num * &o.den) + &(&o.num * &self.den),
            &self.den * &o.den,
        )
        .unwrap()
    }
}

impl std::ops::Sub for &RatFn {
    type Output = RatFn;
    fn sub(self, o: &RatFn) -> RatFn {
        self + &-o
    }
}

impl std::ops::Neg for &RatFn {
    type Output = RatFn;
    fn neg(self) -> RatFn {
        RatFn {
            num: -&self.num,
            den: self.den.clone(),
        }
    }
}

impl std::ops::Mul for &RatFn {
    type Output = RatFn;
    fn mul(self, o: &RatFn) -> RatFn {
        RatFn::new(&self.num * &o.num, &self.den * &o.den).unwrap()
    }
}

impl fmt::Display for RatFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |p: &SparsePoly| {
            if p.terms.len() > 1 {
                format!("({p})")
            } else {
                p.to_string()
            }
        };
        if self.den.is_one() {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", wrap(&self.num), wrap(&self.den))
        }
    }
}

/// Determinant of a polynomial matrix by fraction-free elimination.
pub fn poly_det(mut m: Vec<Vec<SparsePoly>>, ring: &Ring) -> Result<SparsePoly, ChartError> {
    let n = m.len();
    if n == 0 {
        return Ok(SparsePoly::one(ring));
    }
    let mut negate = false;
    let mut prev = SparsePoly::one(ring);
    for k in 0..n - 1 {
        if m[k][k].is_zero() {
            match (k + 1..n).find(|&i| !m[i][k].is_zero()) {
                Some(i) => {
                    m.swap(i, k);
                    negate = !negate;
                }
                None => return Ok(SparsePoly::zero(ring)),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let t = &(&m[k][k] * &m[i][j]) - &(&m[i][k] * &m[k][j]);
                m[i][j] = t.exact_divide(&prev)?;
            }
        }
        prev = m[k][k].clone();
    }
    let d = m[n - 1][n - 1].clone();
    Ok(if negate { -&d } else { d })
}

/// Determinant of a matrix of rational functions: clear each row's
/// denominators, then eliminate over the polynomial ring.
pub fn ratfn_det(m: &[Vec<RatFn>], ring: &Ring) -> Result<RatFn, ChartError> {
    let mut rows = Vec::with_capacity(m.len());
    let mut scale = SparsePoly::one(ring);
    for row in m {
        let mut dens: Vec<&SparsePoly> = Vec::new();
        for r in row {
            if !r.den.is_one() && !dens.contains(&&r.den) {
                dens.push(&r.den);
            }
        }
        let l = dens
            .iter()
            .fold(SparsePoly::one(ring), |acc, d| &acc * d);
        let mut prow = Vec::with_capacity(row.len());
        for r in row {
            prow.push(&r.num * &l.exact_divide(&r.den)?);
        }
        scale = &scale * &l;
        rows.push(prow);
    }
    RatFn::new(poly_det(rows, ring)?, scale)
}

/// Jacobian determinant of `exprs` with respect to the variables `frame`.
pub fn jacobian_det(exprs: &[RatFn], frame: &[usize], ring: &Ring) -> Result<RatFn, ChartError> {
    if exprs.len() != frame.len() {
        return Err(ChartError::Frame(format!(
            "{} functions against {} coordinates",
            exprs.len(),
            frame.len()
        )));
    }
    let m: Vec<Vec<RatFn>> = exprs
        .iter()
        .map(|e| frame.iter().map(|&j| e.derivative(j)).collect())
        .collect();
    ratfn_det(&m, ring)
}

/// `coeff · dx₁ ∧ … ∧ dx_k` for the frame `(x₁, …, x_k)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TopForm {
    pub coeff: RatFn,
    pub frame: Vec<String>,
}

impl TopForm {
    pub fn new(coeff: RatFn, frame: Vec<String>) -> Result<Self, ChartError> {
        let distinct: BTreeSet<&String> = frame.iter().collect();
        if distinct.len() != frame.len() {
            return Err(ChartError::Frame("repeated frame variable".into()));
        }
        for v in &frame {
            index_of(coeff.ring(), v)?;
        }
        Ok(Self { coeff, frame })
    }

    fn frame_indices(&self) -> Vec<usize> {
        self.frame
            .iter()
            .map(|v| index_of(self.coeff.ring(), v).unwrap())
            .collect()
    }
}

impl fmt::Display for TopForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ds: Vec<String> = self.frame.iter().map(|v| format!("d{v}")).collect();
        write!(f, "{} {}", self.coeff, ds.join("∧"))
    }
}

/// Simultaneous substitution of old variables by rational functions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChartMap {
    subs: Vec<Option<RatFn>>,
}

impl ChartMap {
    pub fn new(ring: &Ring, pairs: Vec<(String, RatFn)>) -> Result<Self, ChartError> {
        let mut subs = vec![None; ring.len()];
        for (name, r) in pairs {
            same_ring(ring, r.ring());
            subs[index_of(ring, &name)?] = Some(r);
        }
        Ok(Self { subs })
    }

    pub fn apply(&self, r: &RatFn) -> Result<RatFn, ChartError> {
        r.substitute(&self.subs)
    }

    /// One map equivalent to applying `maps` in order.
    pub fn compose(ring: &Ring, maps: &[ChartMap]) -> Result<Self, ChartError> {
        let mut subs = Vec::with_capacity(ring.len());
        for i in 0..ring.len() {
            let x = RatFn::from_poly(SparsePoly::var(ring, i));
            let mut e = x.clone();
            for m in maps {
                e = m.apply(&e)?;
            }
            subs.push((e != x).then_some(e));
        }
        Ok(Self { subs })
    }
}

/// A sequence of maps ending on a chart with coordinates `frame`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chain {
    pub name: String,
    pub maps: Vec<ChartMap>,
    pub frame: Vec<String>,
}

pub fn pullback(form: &TopForm, chain: &Chain) -> Result<TopForm, ChartError> {
    let ring = form.coeff.ring().clone();
    let mut coeff = form.coeff.clone();
    let mut exprs: Vec<RatFn> = form
        .frame_indices()
        .into_iter()
        .map(|i| RatFn::from_poly(SparsePoly::var(&ring, i)))
        .collect();
    for m in &chain.maps {
        coeff = m.apply(&coeff)?;
        for e in exprs.iter_mut() {
            *e = m.apply(e)?;
        }
    }
    let frame: Vec<usize> = chain
        .frame
        .iter()
        .map(|v| index_of(&ring, v))
        .collect::<Result<_, _>>()?;
    let det = jacobian_det(&exprs, &frame, &ring)?;
    TopForm::new(&coeff * &det, chain.frame.clone())
}

/// A hyperplane `{var = shift}` in a chart.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Locus {
    pub var: String,
    pub shift: BigRational,
}

impl Locus {
    pub fn var(name: &str) -> Self {
        Self {
            var: name.to_string(),
            shift: BigRational::zero(),
        }
    }

    pub fn shifted(name: &str, c: BigRational) -> Self {
        Self {
            var: name.to_string(),
            shift: c,
        }
    }
}

impl fmt::Display for Locus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.shift.is_zero() {
            write!(f, "{}", self.var)
        } else if self.shift.is_negative() {
            write!(f, "{} + {}", self.var, fmt_rational(&-&self.shift))
        } else {
            write!(f, "{} - {}", self.var, fmt_rational(&self.shift))
        }
    }
}

/// Vanishing order of the coefficient along the locus; negative for a pole.
pub fn order_along(form: &TopForm, locus: &Locus) -> Result<i64, ChartError> {
    let idx = index_of(form.coeff.ring(), &locus.var)?;
    if locus.shift.is_zero() {
        form.coeff.ord(idx)
    } else {
        form.coeff.shift(idx, &locus.shift).ord(idx)
    }
}

// ---------------------------------------------------------------------------
// Expressions

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(BigInt),
    Ident(String),
    Op(char),
}

fn is_ident_char(c: char) -> bool {
    !c.is_whitespace() && !"+-*/^()".contains(c)
}

fn tokenize(s: &str) -> Result<Vec<Tok>, ChartError> {
    let mut out = Vec::new();
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if "+-*/^()".contains(c) {
            out.push(Tok::Op(c));
            i += 1;
        } else if c == '−' {
            out.push(Tok::Op('-'));
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            out.push(Tok::Num(text.parse().unwrap()));
        } else {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) && chars[i] != '−' {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        }
    }
    Ok(out)
}

/// Identifiers used by an expression, in order of first appearance.
pub fn expr_vars(s: &str) -> Result<Vec<String>, ChartError> {
    let mut seen = Vec::new();
    for t in tokenize(s)? {
        if let Tok::Ident(name) = t {
            if !seen.contains(&name) {
                seen.push(name);
            }
        }
    }
    Ok(seen)
}

struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    ring: &'a Ring,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn err<T>(&self, msg: &str) -> Result<T, ChartError> {
        Err(ChartError::Parse(format!("{msg} at token {}", self.pos)))
    }

    fn expr(&mut self) -> Result<RatFn, ChartError> {
        let mut acc = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if c == '+' { &acc + &rhs } else { &acc - &rhs };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<RatFn, ChartError> {
        let mut acc = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            acc = if c == '*' {
                &acc * &rhs
            } else {
                &acc * &rhs.recip()?
            };
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<RatFn, ChartError> {
        if let Some(Tok::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(-&self.unary()?);
        }
        self.power()
    }

    fn power(&mut self) -> Result<RatFn, ChartError> {
        let base = self.atom()?;
        if let Some(Tok::Op('^')) = self.peek() {
            self.pos += 1;
            let neg = matches!(self.peek(), Some(Tok::Op('-')));
            if neg {
                self.pos += 1;
            }
            let k = match self.peek().cloned() {
                Some(Tok::Num(k)) => {
                    self.pos += 1;
                    i32::try_from(k).map_err(|_| ChartError::Parse("exponent too large".into()))?
                }
                _ => return self.err("expected integer exponent"),
            };
            return base.pow(if neg { -k } else { k });
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<RatFn, ChartError> {
        match self.peek().cloned() {
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(RatFn::constant(self.ring, BigRational::from_integer(n)))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                Ok(RatFn::from_poly(SparsePoly::named(self.ring, &name)?))
            }
            Some(Tok::Op('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(&Tok::Op(')')) {
                    return self.err("expected ')'");
                }
                self.pos += 1;
                Ok(e)
            }
            _ => self.err("unexpected token"),
        }
    }
}

/// Parses `+ - * / ^` expressions with integer literals and integer
/// (possibly negative) exponents.
pub fn parse_expr(ring: &Ring, s: &str) -> Result<RatFn, ChartError> {
    let mut p = Parser {
        toks: tokenize(s)?,
        pos: 0,
        ring,
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// Textual chart descriptions and the built-in tables

/// A chain step: substitutions applied simultaneously.
pub type StepSpec = Vec<(String, String)>;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LocusSpec {
    pub name: String,
    pub var: String,
    #[serde(default)]
    pub shift: Option<String>,
    #[serde(default)]
    pub expected: Option<i64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChartSpec {
    pub name: String,
    pub steps: Vec<StepSpec>,
    pub frame: Vec<String>,
    pub loci: Vec<LocusSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FormSpec {
    pub coeff: String,
    pub frame: Vec<String>,
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
pub struct PoleRow {
    pub chart: String,
    pub divisor: String,
    pub locus: String,
    pub coefficient: String,
    pub computed: i64,
    pub expected: Option<i64>,
}

impl PoleRow {
    pub fn matches(&self) -> bool {
        self.expected.is_none_or(|e| e == self.computed)
    }
}

fn collect_ring(form: &FormSpec, charts: &[ChartSpec]) -> Result<Ring, ChartError> {
    let mut names: Vec<String> = Vec::new();
    let mut push = |v: &str| {
        if !names.iter().any(|n| n == v) {
            names.push(v.to_string());
        }
    };
    for v in expr_vars(&form.coeff)? {
        push(&v);
    }
    form.frame.iter().for_each(|v| push(v));
    for c in charts {
        for step in &c.steps {
            for (lhs, rhs) in step {
                push(lhs);
                for v in expr_vars(rhs)? {
                    push(&v);
                }
            }
        }
        c.frame.iter().for_each(|v| push(v));
        c.loci.iter().for_each(|l| push(&l.var));
    }
    Ok(Arc::new(names))
}

fn build_chain(ring: &Ring, spec: &ChartSpec) -> Result<Chain, ChartError> {
    let maps = spec
        .steps
        .iter()
        .map(|step| {
            let pairs = step
                .iter()
                .map(|(lhs, rhs)| Ok((lhs.clone(), parse_expr(ring, rhs)?)))
                .collect::<Result<Vec<_>, ChartError>>()?;
            ChartMap::new(ring, pairs)
        })
        .collect::<Result<Vec<_>, ChartError>>()?;
    Ok(Chain {
        name: spec.name.clone(),
        maps,
        frame: spec.frame.clone(),
    })
}

/// Pulls `form` back along every chart and reads off the order at each locus.
/// Reported values are pole orders, i.e. the negated vanishing order.
pub fn run_charts(form: &FormSpec, charts: &[ChartSpec]) -> Result<Vec<PoleRow>, ChartError> {
    let ring = collect_ring(form, charts)?;
    let start = TopForm::new(parse_expr(&ring, &form.coeff)?, form.frame.clone())?;
    let mut rows = Vec::new();
    for spec in charts {
        let wrap = |e: ChartError| ChartError::Chart {
            chart: spec.name.clone(),
            source: Box::new(e),
        };
        let chain = build_chain(&ring, spec).map_err(wrap)?;
        let pulled = pullback(&start, &chain).map_err(wrap)?;
        for l in &spec.loci {
            let shift = match &l.shift {
                Some(s) => crate::clemens::parse_rational(s)
                    .ok_or_else(|| wrap(ChartError::Parse(format!("bad shift '{s}'"))))?,
                None => BigRational::zero(),
            };
            let locus = Locus::shifted(&l.var, shift);
            let ord = order_along(&pulled, &locus).map_err(wrap)?;
            rows.push(PoleRow {
                chart: spec.name.clone(),
                divisor: l.name.clone(),
                locus: locus.to_string(),
                coefficient: pulled.coeff.to_string(),
                computed: -ord,
                expected: l.expected,
            });
        }
    }
    Ok(rows)
}

fn strs(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn step(pairs: &[(&str, &str)]) -> StepSpec {
    pairs
        .iter()
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .collect()
}

fn locus(name: &str, var: &str, expected: i64) -> LocusSpec {
    LocusSpec {
        name: name.into(),
        var: var.into(),
        shift: None,
        expected: Some(expected),
    }
}

/// The form `dλ∧dβ₁∧dβ₂′/(λ³β₂′)` and the blowup charts that meet each
/// boundary component of the smooth pair compactification.
pub fn preset_ex1() -> (FormSpec, Vec<ChartSpec>) {
    let form = FormSpec {
        coeff: "1/(l^3*b2p)".into(),
        frame: strs(&["l", "b1", "b2p"]),
    };
    let u4 = [
        step(&[("l", "y1*lt"), ("b1", "y1*b1t"), ("b2p", "y1*b2t")]),
        step(&[("b2t", "-b1t*y2t")]),
    ];
    let charts = vec![
        ChartSpec {
            name: "U1".into(),
            steps: vec![
                step(&[("b1", "l*b1t"), ("b2p", "l*b2t")]),
                step(&[("b1t", "-b2t^2*y1t")]),
            ],
            frame: strs(&["l", "y1t", "b2t"]),
            loci: vec![locus("E1++", "l", 2)],
        },
        ChartSpec {
            name: "U3".into(),
            steps: vec![step(&[("l", "lt*b2p"), ("b1", "b1t*b2p")])],
            frame: strs(&["lt", "b1t", "b2p"]),
            loci: vec![locus("D022+++", "lt", 3)],
        },
        ChartSpec {
            name: "U5".into(),
            steps: vec![
                step(&[("l", "lt*y2p"), ("b1", "b1t*y2p"), ("b2p", "b2t*y2p")]),
                step(&[("b1t", "-b2t*y1t")]),
                step(&[("b2t", "lt^2")]),
            ],
            frame: strs(&["y2p", "y1t", "lt"]),
            loci: vec![locus("D210+++", "lt", 1)],
        },
        ChartSpec {
            name: "U223".into(),
            steps: vec![
                step(&[("l", "lt*b1"), ("b2p", "b2t*b1")]),
                step(&[("lt", "b2t*ltt")]),
                step(&[("ltt", "y1tt*lttt"), ("b2t", "y1tt*b2tt")]),
                step(&[("b2tt", "-lttt^2")]),
            ],
            frame: strs(&["y1tt", "b1", "lttt"]),
            loci: vec![locus("E3^0", "y1tt", 5), locus("(E2^1)+", "lttt", 7)],
        },
        ChartSpec {
            name: "U422".into(),
            steps: [
                u4.to_vec(),
                vec![
                    step(&[("lt", "b1t*ltt"), ("y2t", "b1t*y2tt")]),
                    step(&[("ltt", "y2tt*lttt")]),
                    step(&[("b1t", "-lttt^2")]),
                ],
            ]
            .concat(),
            frame: strs(&["y2tt", "lttt", "y1"]),
            loci: vec![locus("E3^1", "y2tt", 3), locus("(E2^2)+", "lttt", 5)],
        },
        ChartSpec {
            name: "U432".into(),
            steps: [
                u4.to_vec(),
                vec![
                    step(&[("lt", "y2t*ltt"), ("b1t", "y2t*b1tt")]),
                    step(&[("ltt", "b1tt*lttt"), ("y2t", "b1tt*y2tt")]),
                    step(&[("y2tt", "-lttt^2")]),
                ],
            ]
            .concat(),
            frame: strs(&["y1", "b1tt", "lttt"]),
            loci: vec![locus("E3^2", "b1tt", 3)],
        },
    ];
    (form, charts)
}

/// The invariant form `dV₁∧dV₃…∧dA₁∧…/A₂` on the big cell and its
/// inversion chart at infinity, in dimension `2n + 1`.
pub fn preset_ex2(n: u32) -> (FormSpec, Vec<ChartSpec>) {
    let n = n as usize;
    let upper: Vec<String> = (3..=n + 1).map(|i| i.to_string()).collect();
    let mut old = vec!["V1".to_string()];
    old.extend(upper.iter().map(|i| format!("V{i}")));
    old.push("A1".into());
    old.push("A2".into());
    old.extend(upper.iter().map(|i| format!("A{i}")));
    let mut new = vec!["s".to_string()];
    new.extend(upper.iter().map(|i| format!("v{i}")));
    new.push("t".into());
    new.push("a1".into());
    new.extend(upper.iter().map(|i| format!("a{i}")));

    let mut subs: StepSpec = vec![("V1".into(), "1/s".into())];
    subs.extend(upper.iter().map(|i| (format!("V{i}"), format!("v{i}/s"))));
    subs.push(("A1".into(), "a1/t".into()));
    subs.push(("A2".into(), "1/t".into()));
    subs.extend(upper.iter().map(|i| (format!("A{i}"), format!("a{i}/t"))));

    let e = n as i64 + 1;
    let form = FormSpec {
        coeff: "1/A2".into(),
        frame: old,
    };
    let chart = ChartSpec {
        name: format!("O1 (n={n})"),
        steps: vec![subs],
        frame: new,
        loci: vec![locus("D1", "s", e), locus("D2", "t", e)],
    };
    (form, vec![chart])
}

/// The gauge form on triples of lines in the coordinates of the big cell,
/// recentred along the boundary, and the two blowup charts.
pub fn preset_ex3() -> (FormSpec, Vec<ChartSpec>) {
    let form = FormSpec {
        coeff: "1/((a2 - b2)^6*(al13 - g13)^3*(be13 - al13)^6*(a2 - c2)^4)".into(),
        frame: strs(&["a2", "a3", "b2", "c2", "al13", "g13"]),
    };
    let recentre = step(&[
        ("a2", "a2p + c2"),
        ("b2", "b2p + c2"),
        ("g13", "g13p + al13"),
        ("be13", "be13p + al13"),
    ]);
    let charts = vec![
        ChartSpec {
            name: "U1".into(),
            steps: vec![
                recentre.clone(),
                step(&[("b2p", "a2p*b2t"), ("be13p", "g13p*b2t")]),
            ],
            frame: strs(&["a2p", "a3", "b2t", "c2", "al13", "g13p"]),
            loci: vec![
                locus("E", "a2p", 9),
                LocusSpec {
                    name: "D12,3".into(),
                    var: "b2t".into(),
                    shift: Some("1".into()),
                    expected: Some(6),
                },
                locus("D23,1", "b2t", 6),
                locus("(D2_123)+", "g13p", 9),
            ],
        },
        ChartSpec {
            name: "U2".into(),
            steps: vec![recentre, step(&[("a2p", "b2p*a2t"), ("g13p", "be13p*a2t")])],
            frame: strs(&["b2p", "a3", "a2t", "c2", "al13", "be13p"]),
            loci: vec![locus("D13,2", "a2t", 6)],
        },
    ];
    (form, charts)
}

/// Pole table for a built-in example; `ex2` runs `n = 1..=5` unless `n`
/// is given.
pub fn run_preset(example: &str, n: Option<u32>) -> Result<Vec<PoleRow>, ChartError> {
    match example.to_ascii_lowercase().as_str() {
        "ex1" => {
            let (f, c) = preset_ex1();
            run_charts(&f, &c)
        }
        "ex2" => {
            let ns: Vec<u32> = match n {
                Some(n) => vec![n],
                None => (1..=5).collect(),
            };
            let mut rows = Vec::new();
            for n in ns {
                let (f, c) = preset_ex2(n);
                rows.extend(run_charts(&f, &c)?);
            }
            Ok(rows)
        }
        "ex3" => {
            let (f, c) = preset_ex3();
            run_charts(&f, &c)
        }
        other => Err(ChartError::UnknownExample(other.to_string())),
    }
}

// ---------------------------------------------------------------------------
// JSON chart files

#[derive(Deserialize)]
struct SubstFile {
    var: String,
    expr: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StepFile {
    Single(SubstFile),
    Group { subs: Vec<SubstFile> },
}

#[derive(Deserialize)]
struct FormFile {
    #[serde(default)]
    num: Option<String>,
    #[serde(default)]
    den: Option<String>,
    frame: Vec<String>,
}

#[derive(Deserialize)]
struct ChartFile {
    #[serde(default)]
    name: Option<String>,
    vars: Vec<String>,
    form: FormFile,
    chain: Vec<StepFile>,
    #[serde(default)]
    loci: Vec<LocusSpec>,
}

/// Reads a chart description: `vars` is the target chart's coordinate list,
/// `chain` is applied in order (plain entries one at a time, `subs` groups
/// simultaneously). Without `loci`, every target coordinate is reported.
pub fn parse_chart_file(text: &str) -> Result<(FormSpec, ChartSpec), ChartError> {
    let file: ChartFile =
        serde_json::from_str(text).map_err(|e| ChartError::Parse(e.to_string()))?;
    let num = file.form.num.unwrap_or_else(|| "1".into());
    let den = file.form.den.unwrap_or_else(|| "1".into());
    let form = FormSpec {
        coeff: format!("({num})/({den})"),
        frame: file.form.frame,
    };
    let steps = file
        .chain
        .into_iter()
        .map(|s| match s {
            StepFile::Single(s) => vec![(s.var, s.expr)],
            StepFile::Group { subs } => subs.into_iter().map(|s| (s.var, s.expr)).collect(),
        })
        .collect();
    let loci = if file.loci.is_empty() {
        file.vars
            .iter()
            .map(|v| LocusSpec {
                name: v.clone(),
                var: v.clone(),
                shift: None,
                expected: None,
            })
            .collect()
    } else {
        file.loci
    };
    let chart = ChartSpec {
        name: file.name.unwrap_or_else(|| "chart".into()),
        steps,
        frame: file.vars,
        loci,
    };
    Ok((form, chart))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    fn xy() -> Ring {
        ring(&["x", "y", "z"])
    }

    fn p(r: &Ring, s: &str) -> SparsePoly {
        let e = parse_expr(r, s).unwrap();
        assert!(e.den().is_one(), "{s} is not a polynomial");
        e.num().clone()
    }

    #[test]
    fn polynomial_basics() {
        let r = xy();
        assert_eq!(p(&r, "x^2*y").derivative(0), p(&r, "2*x*y"));
        assert_eq!(p(&r, "x^2 - y^2").exact_divide(&p(&r, "x - y")).unwrap(), p(&r, "x + y"));
        assert!(matches!(
            p(&r, "x^2 + 1").exact_divide(&p(&r, "x")),
            Err(ChartError::Inexact { .. })
        ));
        assert_eq!(p(&r, "(x+y)^2"), p(&r, "x^2 + 2*x*y + y^2"));
        assert_eq!(p(&r, "x^3*y + x^2*y^2").ord(0), Some(2));
        assert_eq!(SparsePoly::zero(&r).ord(0), None);
        assert_eq!(p(&r, "3*x^2*y - z/2 + 1").to_string(), "3*x^2*y - 1/2*z + 1");
    }

    #[test]
    fn rational_functions_reduce() {
        let r = xy();
        let f = parse_expr(&r, "x^3*y/(x*y^2*(1+z))").unwrap();
        assert_eq!(f.num(), &p(&r, "x^2"));
        assert_eq!(f.den(), &p(&r, "y*z + y"));
        assert_eq!(f.ord(0).unwrap(), 2);
        assert_eq!(f.ord(1).unwrap(), -1);
        assert_eq!(f.ord(2).unwrap(), 0);
        let g = parse_expr(&r, "x^-2").unwrap();
        assert_eq!(g.ord(0).unwrap(), -2);
        assert!(parse_expr(&r, "x/(y - y)").is_err());
        assert!(parse_expr(&r, "w").is_err());
        assert!(parse_expr(&r, "x +").is_err());
    }

    #[test]
    fn identity_pullback() {
        let r = xy();
        let form = TopForm::new(parse_expr(&r, "1/(x*y)").unwrap(), strs(&["x", "y"])).unwrap();
        let chain = Chain {
            name: "id".into(),
            maps: vec![],
            frame: strs(&["x", "y"]),
        };
        assert_eq!(pullback(&form, &chain).unwrap(), form);
    }

    #[test]
    fn logarithmic_form_is_invariant() {
        let r = ring(&["x", "u", "v"]);
        let form = TopForm::new(parse_expr(&r, "1/x").unwrap(), strs(&["x"])).unwrap();
        let chain = Chain {
            name: "scale".into(),
            maps: vec![ChartMap::new(&r, vec![("x".into(), parse_expr(&r, "u*v").unwrap())]).unwrap()],
            frame: strs(&["u"]),
        };
        let out = pullback(&form, &chain).unwrap();
        assert!(out.coeff.equivalent(&parse_expr(&r, "1/u").unwrap()));
    }

    #[test]
    fn first_chart_coefficient() {
        let (form, charts) = preset_ex1();
        let u1 = &charts[0];
        let ring = collect_ring(&form, &charts).unwrap();
        let start = TopForm::new(parse_expr(&ring, &form.coeff).unwrap(), form.frame.clone()).unwrap();
        let out = pullback(&start, &build_chain(&ring, u1).unwrap()).unwrap();
        let expected = parse_expr(&ring, "b2t/l^2").unwrap();
        assert!(out.coeff.equivalent(&expected) || out.coeff.equivalent(&-&expected));
        assert_eq!(order_along(&out, &Locus::var("l")).unwrap(), -2);
        assert_eq!(order_along(&out, &Locus::var("b2t")).unwrap(), 1);
    }

    #[test]
    fn shifted_locus() {
        let r = ring(&["a", "b", "g"]);
        let c = parse_expr(&r, "1/(a^9*(1-b)^6*g^9*b^6)").unwrap();
        let f = TopForm::new(c, strs(&["a", "b", "g"])).unwrap();
        assert_eq!(order_along(&f, &Locus::shifted("b", q(1))).unwrap(), -6);
        assert_eq!(order_along(&f, &Locus::var("b")).unwrap(), -6);
        assert_eq!(order_along(&f, &Locus::var("a")).unwrap(), -9);
    }

    #[test]
    fn order_of_simple_coefficients() {
        let r = ring(&["l", "b1", "b2p"]);
        let f = TopForm::new(parse_expr(&r, "1/(l^3*b2p)").unwrap(), strs(&["l", "b1", "b2p"])).unwrap();
        assert_eq!(order_along(&f, &Locus::var("l")).unwrap(), -3);
        let zero = TopForm::new(RatFn::constant(&r, q(0)), strs(&["l"])).unwrap();
        assert_eq!(order_along(&zero, &Locus::var("l")), Err(ChartError::ZeroForm));
    }

    #[test]
    fn preset_tables_match() {
        for ex in ["ex1", "ex2", "ex3"] {
            let rows = run_preset(ex, None).unwrap();
            for row in &rows {
                assert!(row.matches(), "{ex}: {row:?}");
            }
        }
        let rows = run_preset("ex2", Some(3)).unwrap();
        assert_eq!(rows.iter().map(|r| r.computed).collect::<Vec<_>>(), vec![4, 4]);
        assert_eq!(run_preset("ex1", None).unwrap().len(), 8);
        assert_eq!(run_preset("ex3", None).unwrap().len(), 5);
    }

    #[test]
    fn chart_file_round_trip() {
        let text = r#"{
            "vars": ["lt", "b1t", "b2p"],
            "form": {"num": "1", "den": "l^3*b2p", "frame": ["l", "b1", "b2p"]},
            "chain": [{"subs": [{"var": "l", "expr": "lt*b2p"}, {"var": "b1", "expr": "b1t*b2p"}]}],
            "loci": [{"name": "D", "var": "lt", "expected": 3}]
        }"#;
        let (form, chart) = parse_chart_file(text).unwrap();
        let rows = run_charts(&form, &[chart]).unwrap();
        assert_eq!(rows[0].computed, 3);
        assert!(rows[0].matches());

        let text = r#"{"vars":["u"],"form":{"den":"x","frame":["x"]},"chain":[{"var":"x","expr":"u^2"}]}"#;
        let (form, chart) = parse_chart_file(text).unwrap();
        let rows = run_charts(&form, &[chart]).unwrap();
        assert_eq!((rows[0].divisor.as_str(), rows[0].computed), ("u", 1));
    }

    #[test]
    fn composed_chain_equals_stepwise() {
        let (form, charts) = preset_ex1();
        let ring = collect_ring(&form, &charts).unwrap();
        let start = TopForm::new(parse_expr(&ring, &form.coeff).unwrap(), form.frame.clone()).unwrap();
        let u1 = build_chain(&ring, &charts[0]).unwrap();
        let first = Chain {
            name: "a".into(),
            maps: vec![u1.maps[0].clone()],
            frame: strs(&["l", "b1t", "b2t"]),
        };
        let second = Chain {
            name: "b".into(),
            maps: vec![u1.maps[1].clone()],
            frame: u1.frame.clone(),
        };
        let stepwise = pullback(&pullback(&start, &first).unwrap(), &second).unwrap();
        let direct = pullback(&start, &u1).unwrap();
        let composed = Chain {
            name: "c".into(),
            maps: vec![ChartMap::compose(&ring, &u1.maps).unwrap()],
            frame: u1.frame.clone(),
        };
        let once = pullback(&start, &composed).unwrap();
        assert_eq!(stepwise.coeff, direct.coeff);
        assert_eq!(once.coeff, direct.coeff);
    }

    #[test]
    fn jacobian_chain_rule() {
        // J₁: (x,y) ← (u,v) with x = u·v², y = v;  J₂: (u,v) ← (s,t) with u = s³t, v = s·t.
        let r = ring(&["x", "y", "u", "v", "s", "t"]);
        let e = |s: &str| parse_expr(&r, s).unwrap();
        let idx = |n: &str| index_of(&r, n).unwrap();
        let m1 = ChartMap::new(&r, vec![("x".into(), e("u*v^2")), ("y".into(), e("v"))]).unwrap();
        let m2 = ChartMap::new(&r, vec![("u".into(), e("s^3*t")), ("v".into(), e("s*t"))]).unwrap();
        let j1 = jacobian_det(&[e("u*v^2"), e("v")], &[idx("u"), idx("v")], &r).unwrap();
        let j2 = jacobian_det(&[e("s^3*t"), e("s*t")], &[idx("s"), idx("t")], &r).unwrap();
        let composed = ChartMap::compose(&r, &[m1.clone(), m2.clone()]).unwrap();
        let xs = composed.apply(&e("x")).unwrap();
        let ys = composed.apply(&e("y")).unwrap();
        let direct = jacobian_det(&[xs, ys], &[idx("s"), idx("t")], &r).unwrap();
        let via_chain = &m2.apply(&j1).unwrap() * &j2;
        assert!(direct.equivalent(&via_chain));
    }

    fn poly_strategy() -> impl Strategy<Value = Vec<(i64, [u32; 3])>> {
        proptest::collection::vec((-5i64..=5, [0u32..4, 0u32..4, 0u32..4]), 1..6)
    }

    fn build(r: &Ring, terms: &[(i64, [u32; 3])]) -> SparsePoly {
        terms.iter().fold(SparsePoly::zero(r), |acc, (c, e)| {
            &acc + &SparsePoly::monomial(r, e.to_vec(), q(*c))
        })
    }

    proptest! {
        #[test]
        fn ord_is_additive(a in poly_strategy(), b in poly_strategy(), var in 0usize..3) {
            let r = xy();
            let (pa, pb) = (build(&r, &a), build(&r, &b));
            prop_assume!(!pa.is_zero() && !pb.is_zero());
            prop_assert_eq!((&pa * &pb).ord(var), Some(pa.ord(var).unwrap() + pb.ord(var).unwrap()));
        }

        #[test]
        fn vanishing_on_hyperplane(a in poly_strategy(), var in 0usize..3,
                                   pts in proptest::collection::vec([-7i64..=7, -7i64..=7, -7i64..=7], 12)) {
            let r = xy();
            let pa = build(&r, &a);
            prop_assume!(!pa.is_zero());
            let restricted_zero = pts.iter().all(|pt| {
                let mut x: Vec<BigRational> = pt.iter().map(|&c| q(c)).collect();
                x[var] = q(0);
                pa.eval(&x).is_zero()
            });
            let divisible = pa.ord(var).unwrap() >= 1;
            if divisible {
                prop_assert!(restricted_zero);
            }
            let mut sub = vec![None; 3];
            sub[var] = Some(RatFn::constant(&r, q(0)));
            let restriction = RatFn::from_poly(pa.clone()).substitute(&sub).unwrap();
            prop_assert_eq!(restriction.is_zero(), divisible);
        }

        #[test]
        fn exact_division_inverts_multiplication(a in poly_strategy(), b in poly_strategy()) {
            let r = xy();
            let (pa, pb) = (build(&r, &a), build(&r, &b));
            prop_assume!(!pb.is_zero());
            prop_assert_eq!((&pa * &pb).exact_divide(&pb).unwrap(), pa);
        }
    }
}
