//! Complete enumeration of integral points of bounded height.
//!
//! Each search is split into independent outer indices whose partial tallies
//! are summed in index order, so results do not depend on the number of
//! worker threads.

pub mod oracle;

use std::io::Write;

use num_bigint::BigInt;
use num_integer::{Integer, Roots};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::clemens::rational_string;
use crate::heights::{HeightError, QuadricPairInstance, TriangleTriple};
use crate::weights::{self, WeightError};

/// Largest accepted value of `⌊R²⌋`.
pub const MAX_R_SQ: u64 = 1 << 50;
const CHUNK: usize = 4096;

#[derive(Debug, Error)]
pub enum EnumError {
    #[error("R = {0} is beyond enumeration range")]
    RTooLarge(String),
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("oracle limited to desk scale (box {0})")]
    OracleLimit(i64),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Height(#[from] HeightError),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("point sink: {0}")]
    Sink(#[from] std::io::Error),
}

/// Parameters of one of the three counting problems.
#[derive(Clone, Debug, PartialEq)]
pub enum ExampleParams {
    Ex1 { inst: QuadricPairInstance },
    Ex2 { n: u32, lambda1: u32, lambda2: u32 },
    Ex3 { kappa1: u32, kappa2: u32, eta: f64 },
}

impl ExampleParams {
    pub fn id(&self) -> &'static str {
        match self {
            Self::Ex1 { .. } => "ex1",
            Self::Ex2 { .. } => "ex2",
            Self::Ex3 { .. } => "ex3",
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            Self::Ex1 { inst } => json!({"q1": inst.q1, "q2": inst.q2}),
            Self::Ex2 { n, lambda1, lambda2 } => {
                json!({"n": n, "lambda1": lambda1, "lambda2": lambda2})
            }
            Self::Ex3 { kappa1, kappa2, eta } => {
                json!({"kappa1": kappa1, "kappa2": kappa2, "eta": eta})
            }
        }
    }

    pub fn validate(&self) -> Result<(), EnumError> {
        match self {
            Self::Ex1 { inst } => Ok(inst.validate()?),
            Self::Ex2 { n, lambda1, lambda2 } => {
                if *n == 0 || *lambda1 == 0 || *lambda2 == 0 {
                    return Err(EnumError::Invalid("n, lambda1, lambda2 must be ≥ 1".into()));
                }
                Ok(())
            }
            Self::Ex3 { kappa1, kappa2, eta } => {
                if *kappa1 == 0 || *kappa2 == 0 {
                    return Err(EnumError::Invalid("kappa1, kappa2 must be ≥ 1".into()));
                }
                if eta.is_nan() || *eta <= 0.0 {
                    return Err(WeightError::EtaNotPositive(*eta).into());
                }
                if *eta > 1.0 {
                    return Err(WeightError::EtaTooLarge(*eta).into());
                }
                Ok(())
            }
        }
    }
}

/// Partial result of scanning some outer indices.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Tally {
    pub count: u64,
    pub scanned: u64,
    pub weighted: f64,
}

impl Tally {
    pub fn merge(&mut self, o: &Tally) {
        self.count += o.count;
        self.scanned += o.scanned;
        self.weighted += o.weighted;
    }
}

/// An accepted point: the defining vectors and the squared height.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Point {
    pub cols: Vec<Vec<i64>>,
    pub ht_sq: BigRational,
}

impl Point {
    pub fn to_json(&self) -> Value {
        json!({"cols": self.cols, "ht_sq": rational_string(&self.ht_sq)})
    }
}

pub trait PointSink {
    fn accept(&mut self, p: &Point) -> std::io::Result<()>;
}

impl PointSink for Vec<Point> {
    fn accept(&mut self, p: &Point) -> std::io::Result<()> {
        self.push(p.clone());
        Ok(())
    }
}

/// One JSON object per line.
pub struct JsonLinesSink<W: Write>(pub W);

impl<W: Write> PointSink for JsonLinesSink<W> {
    fn accept(&mut self, p: &Point) -> std::io::Result<()> {
        writeln!(self.0, "{}", p.to_json())
    }
}

/// A search whose outer loop can be scanned index by index.
pub trait Enumerator: Sync {
    fn outer_len(&self) -> usize;
    fn scan(&self, i: usize, points: Option<&mut Vec<Point>>) -> Tally;
    /// Work done while building the outer list.
    fn setup_scanned(&self) -> u64 {
        0
    }
    fn weighted(&self) -> bool {
        false
    }
}

/// Sequential scan of a sub-range of outer indices.
pub fn scan_range<E: Enumerator + ?Sized>(e: &E, range: std::ops::Range<usize>) -> Tally {
    let mut t = Tally::default();
    for i in range {
        t.merge(&e.scan(i, None));
    }
    t
}

pub fn run<E: Enumerator + ?Sized>(
    e: &E,
    workers: usize,
    mut sink: Option<&mut dyn PointSink>,
) -> Result<Tally, EnumError> {
    if workers <= 1 {
        let mut total = Tally {
            scanned: e.setup_scanned(),
            ..Tally::default()
        };
        let mut pts = Vec::new();
        for i in 0..e.outer_len() {
            pts.clear();
            total.merge(&e.scan(i, sink.is_some().then_some(&mut pts)));
            if let Some(s) = sink.as_deref_mut() {
                for p in &pts {
                    s.accept(p)?;
                }
            }
        }
        return Ok(total);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|err| EnumError::Pool(err.to_string()))?;
    let want_points = sink.is_some();
    let mut total = Tally {
        scanned: e.setup_scanned(),
        ..Tally::default()
    };
    let n = e.outer_len();
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let parts: Vec<(Tally, Vec<Point>)> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| {
                    let mut pts = Vec::new();
                    let t = e.scan(i, want_points.then_some(&mut pts));
                    (t, pts)
                })
                .collect()
        });
        for (t, pts) in parts {
            total.merge(&t);
            if let Some(s) = sink.as_deref_mut() {
                for p in &pts {
                    s.accept(p)?;
                }
            }
        }
        start = end;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountResult {
    pub count: u64,
    pub weighted: Option<f64>,
    pub points_scanned: u64,
}

/// `⌊R²⌋`, or an error if the search would be hopeless.
pub fn floor_r_sq(r: &BigRational) -> Result<u64, EnumError> {
    if !r.is_positive() {
        return Ok(0);
    }
    (r * r)
        .floor()
        .to_integer()
        .to_u64()
        .filter(|&f| f <= MAX_R_SQ)
        .ok_or_else(|| EnumError::RTooLarge(rational_string(r)))
}

pub fn build(params: &ExampleParams, r: &BigRational) -> Result<Box<dyn Enumerator>, EnumError> {
    params.validate()?;
    Ok(match params {
        ExampleParams::Ex1 { inst } => Box::new(Ex1Search::new(inst, r)?),
        ExampleParams::Ex2 { n, lambda1, lambda2 } => {
            Box::new(Ex2Search::new(*n, *lambda1, *lambda2, r)?)
        }
        ExampleParams::Ex3 { kappa1, kappa2, eta } => {
            Box::new(Ex3Search::new(*kappa1, *kappa2, r, *eta)?)
        }
    })
}

pub fn count(
    params: &ExampleParams,
    r: &BigRational,
    workers: usize,
    sink: Option<&mut dyn PointSink>,
) -> Result<CountResult, EnumError> {
    let e = build(params, r)?;
    let t = run(e.as_ref(), workers, sink)?;
    Ok(CountResult {
        count: t.count,
        weighted: e.weighted().then_some(t.weighted),
        points_scanned: t.scanned,
    })
}

pub fn enumerate_ex1(inst: &QuadricPairInstance, r: &BigRational) -> Result<u64, EnumError> {
    Ok(count(&ExampleParams::Ex1 { inst: inst.clone() }, r, 1, None)?.count)
}

pub fn enumerate_ex2(n: u32, lambda1: u32, lambda2: u32, r: &BigRational) -> Result<u64, EnumError> {
    Ok(count(&ExampleParams::Ex2 { n, lambda1, lambda2 }, r, 1, None)?.count)
}

/// (weighted sum, raw count).
pub fn enumerate_ex3(kappa1: u32, kappa2: u32, r: &BigRational, eta: f64) -> Result<(f64, u64), EnumError> {
    let res = count(&ExampleParams::Ex3 { kappa1, kappa2, eta }, r, 1, None)?;
    Ok((res.weighted.unwrap_or(0.0), res.count))
}

// ---------------------------------------------------------------------------
// Shared integer helpers

fn isqrt(x: i64) -> i64 {
    if x < 0 {
        -1
    } else {
        x.sqrt()
    }
}

fn pow_u128(x: u64, k: u32) -> Option<u128> {
    u128::from(x).checked_pow(k)
}

/// Largest `m` with `m^k ≤ x`.
fn iroot(x: u128, k: u32) -> u128 {
    x.nth_root(k)
}

/// Smallest `m ≥ 0` with `m^k ≥ x`.
fn ceil_root(x: u128, k: u32) -> u128 {
    let r = iroot(x, k);
    if r.checked_pow(k) == Some(x) {
        r
    } else {
        r + 1
    }
}

fn norm_sq(v: &[i64]) -> i64 {
    v.iter().map(|x| x * x).sum()
}

fn canonical(v: &[i64]) -> Vec<i64> {
    match v.iter().find(|&&x| x != 0) {
        Some(&x) if x < 0 => v.iter().map(|y| -y).collect(),
        _ => v.to_vec(),
    }
}

fn is_canonical(v: &[i64]) -> bool {
    v.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0)
}

fn content(v: &[i64]) -> i64 {
    v.iter().fold(0i64, |g, &x| g.gcd(&x))
}

/// Sign-canonical primitive vectors of `Zᵈ` with `‖v‖² ≤ max_sq`, sorted by
/// norm and then lexicographically.
pub fn canonical_primitive_ball(dim: usize, max_sq: i64) -> Vec<(Vec<i64>, i64)> {
    fn rec(dim: usize, max_sq: i64, cur: &mut Vec<i64>, s: i64, out: &mut Vec<(Vec<i64>, i64)>) {
        if cur.len() == dim {
            if is_canonical(cur) && content(cur) == 1 {
                out.push((cur.clone(), s));
            }
            return;
        }
        let b = isqrt(max_sq - s);
        for x in -b..=b {
            cur.push(x);
            rec(dim, max_sq, cur, s + x * x, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if max_sq >= 1 {
        rec(dim, max_sq, &mut Vec::with_capacity(dim), 0, &mut out);
    }
    out.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Visits every `y ∈ Zᵈ` with `⟨x, y⟩ = 1` and `‖y‖² ≤ hi`, passing `‖y‖²`.
/// Returns the number of candidates examined.
///
/// The coordinate `j` where `|x_j|` is largest is solved for; the last other
/// coordinate runs through one residue class modulo `|x_j| / g`.
pub fn for_each_unit_solution<F: FnMut(&[i64], i64)>(x: &[i64], hi: i64, mut visit: F) -> u64 {
    let d = x.len();
    if hi < 1 || d == 0 || content(x) != 1 {
        return 0;
    }
    let j = (0..d).max_by_key(|&i| (x[i].abs(), std::cmp::Reverse(i))).unwrap();
    let mut y = vec![0i64; d];
    if d == 1 {
        y[0] = x[0];
        visit(&y, 1);
        return 1;
    }
    let f = (0..d).rev().find(|&i| i != j).unwrap();
    let rest: Vec<usize> = (0..d).filter(|&i| i != j && i != f).collect();

    struct Ctx<'a> {
        x: &'a [i64],
        j: usize,
        f: usize,
        rest: &'a [usize],
        hi: i64,
        // Congruence data that does not depend on the partial sum.
        g: i64,
        m: i64,
        inv: i64,
    }

    fn rec<F: FnMut(&[i64], i64)>(c: &Ctx, k: usize, s: i64, t: i64, y: &mut [i64], visit: &mut F) -> u64 {
        if k < c.rest.len() {
            let i = c.rest[k];
            let b = isqrt(c.hi - s);
            let mut scanned = 0;
            for v in -b..=b {
                y[i] = v;
                scanned += rec(c, k + 1, s + v * v, t + c.x[i] * v, y, visit);
            }
            y[i] = 0;
            return scanned;
        }
        let target = 1 - t;
        if target.rem_euclid(c.g) != 0 {
            return 1;
        }
        let y0 = ((target / c.g).rem_euclid(c.m) as i128 * c.inv as i128).rem_euclid(c.m as i128) as i64;
        let bnd = isqrt(c.hi - s);
        let start = -bnd + (y0 + bnd).rem_euclid(c.m);
        let (xj, xf) = (c.x[c.j], c.x[c.f]);
        let mut scanned = 1;
        let mut yf = start;
        while yf <= bnd {
            scanned += 1;
            let yj = (target - xf * yf) / xj;
            let norm = s + yf * yf + yj * yj;
            if norm <= c.hi {
                y[c.f] = yf;
                y[c.j] = yj;
                visit(y, norm);
            }
            yf += c.m;
        }
        scanned
    }

    let axj = x[j].abs();
    let g = x[f].gcd(&axj);
    let m = axj / g;
    let inv = if m == 1 {
        0
    } else {
        let e = (x[f] / g).rem_euclid(m).extended_gcd(&m);
        e.x.rem_euclid(m)
    };
    let ctx = Ctx {
        x,
        j,
        f,
        rest: &rest,
        hi,
        g,
        m,
        inv,
    };
    rec(&ctx, 0, 0, 0, &mut y, &mut visit)
}

// ---------------------------------------------------------------------------
// Pairs of quadrics

/// Integer vectors `c ∈ Z⁴` with `cᵀQc = target` and `‖c‖² ≤ max_sq`, found by
/// running three coordinates through the ball and solving for the fourth.
/// Returns the vectors and the number of triples examined.
pub fn quadric_column_candidates(q: &[[i64; 4]; 4], target: i64, max_sq: i64) -> (Vec<[i64; 4]>, u64) {
    let p = (0..4).rev().find(|&i| q[i][i] != 0).unwrap_or(3);
    let others: Vec<usize> = (0..4).filter(|&i| i != p).collect();
    let mut out = Vec::new();
    let mut scanned = 0u64;
    let mut c = [0i64; 4];
    let r0 = isqrt(max_sq);
    for x0 in -r0..=r0 {
        let s0 = x0 * x0;
        let r1 = isqrt(max_sq - s0);
        for x1 in -r1..=r1 {
            let s1 = s0 + x1 * x1;
            let r2 = isqrt(max_sq - s1);
            for x2 in -r2..=r2 {
                let s2 = s1 + x2 * x2;
                scanned += 1;
                c[others[0]] = x0;
                c[others[1]] = x1;
                c[others[2]] = x2;
                c[p] = 0;
                let a = i128::from(q[p][p]);
                let b: i128 = others.iter().map(|&i| 2 * i128::from(q[i][p] * c[i])).sum();
                let mut c0 = -i128::from(target);
                for &i in &others {
                    for &k in &others {
                        c0 += i128::from(q[i][k]) * i128::from(c[i] * c[k]);
                    }
                }
                let rem = max_sq - s2;
                let mut push = |xp: i128| {
                    if xp * xp <= i128::from(rem) {
                        let mut v = c;
                        v[p] = xp as i64;
                        out.push(v);
                    }
                };
                if a != 0 {
                    let disc = b * b - 4 * a * c0;
                    if disc < 0 {
                        continue;
                    }
                    let s = disc.sqrt();
                    if s * s != disc {
                        continue;
                    }
                    for (k, root) in [-b + s, -b - s].into_iter().enumerate() {
                        if k == 1 && s == 0 {
                            break;
                        }
                        if root % (2 * a) == 0 {
                            push(root / (2 * a));
                        }
                    }
                } else if b != 0 {
                    if c0 % b == 0 {
                        push(-c0 / b);
                    }
                } else if c0 == 0 {
                    let r = isqrt(rem) as i128;
                    for xp in -r..=r {
                        push(xp);
                    }
                }
            }
        }
    }
    out.sort();
    (out, scanned)
}

/// 4×2 integer matrices `M = (c₁|c₂)` with `MᵀQ₂M = Q₁` and `‖M‖ ≤ R`.
pub struct Ex1Search {
    col1: Vec<([i64; 4], i64)>,
    col2: Vec<([i64; 4], i64)>,
    q2: [[i64; 4]; 4],
    off: i64,
    max_sq: i64,
    setup: u64,
}

impl Ex1Search {
    pub fn new(inst: &QuadricPairInstance, r: &BigRational) -> Result<Self, EnumError> {
        let max_sq = floor_r_sq(r)? as i64;
        let with_norm = |v: Vec<[i64; 4]>| -> Vec<([i64; 4], i64)> {
            v.into_iter().map(|c| (c, norm_sq(&c))).collect()
        };
        let (c1, s1) = quadric_column_candidates(&inst.q2, inst.q1[0][0], max_sq);
        let (c2, s2) = quadric_column_candidates(&inst.q2, inst.q1[1][1], max_sq);
        let mut col2 = with_norm(c2);
        col2.sort_by_key(|&(c, n)| (n, c));
        Ok(Self {
            col1: with_norm(c1),
            col2,
            q2: inst.q2,
            off: inst.q1[0][1],
            max_sq,
            setup: s1 + s2,
        })
    }
}

impl Enumerator for Ex1Search {
    fn outer_len(&self) -> usize {
        self.col1.len()
    }

    fn setup_scanned(&self) -> u64 {
        self.setup
    }

    fn scan(&self, i: usize, mut points: Option<&mut Vec<Point>>) -> Tally {
        let (c1, n1) = self.col1[i];
        let mut qc = [0i64; 4];
        for (k, slot) in qc.iter_mut().enumerate() {
            *slot = (0..4).map(|l| self.q2[k][l] * c1[l]).sum();
        }
        let room = self.max_sq - n1;
        let end = self.col2.partition_point(|&(_, n)| n <= room);
        let mut t = Tally {
            scanned: end as u64,
            ..Tally::default()
        };
        for &(c2, n2) in &self.col2[..end] {
            let b: i64 = qc.iter().zip(&c2).map(|(a, b)| a * b).sum();
            if b == self.off {
                t.count += 1;
                if let Some(p) = points.as_deref_mut() {
                    p.push(Point {
                        cols: vec![c1.to_vec(), c2.to_vec()],
                        ht_sq: BigRational::from_integer((n1 + n2).into()),
                    });
                }
            }
        }
        t
    }
}

// ---------------------------------------------------------------------------
// Vector plus complementary hyperplane

/// Pairs `(v, ker w)` with `⟨w, v⟩ = ±1` and `‖v‖^λ₁‖w‖^λ₂ ≤ R`.
///
/// Counting pairs with `⟨w, v⟩ = +1` over all signs of `w` gives the same
/// number. The smaller of `‖v‖^λ₁`, `‖w‖^λ₂` is at most `√R`, so the outer
/// loop runs over that side and the other side is solved on the affine
/// hyperplane `⟨x, y⟩ = 1`. Outer vectors are taken sign-canonical and the
/// tally doubled.
pub struct Ex2Search {
    lambda1: u32,
    lambda2: u32,
    f: u64,
    outer_v: Vec<(Vec<i64>, i64)>,
    outer_w: Vec<(Vec<i64>, i64)>,
}

impl Ex2Search {
    pub fn new(n: u32, lambda1: u32, lambda2: u32, r: &BigRational) -> Result<Self, EnumError> {
        if n == 0 || lambda1 == 0 || lambda2 == 0 {
            return Err(EnumError::Invalid("n, lambda1, lambda2 must be ≥ 1".into()));
        }
        let f = floor_r_sq(r)?;
        let root = u128::from(f.sqrt());
        let dim = n as usize + 1;
        let outer_v = canonical_primitive_ball(dim, iroot(root, lambda1) as i64);
        let outer_w = canonical_primitive_ball(dim, iroot(root, lambda2) as i64);
        Ok(Self {
            lambda1,
            lambda2,
            f,
            outer_v,
            outer_w,
        })
    }
}

impl Enumerator for Ex2Search {
    fn outer_len(&self) -> usize {
        self.outer_v.len() + self.outer_w.len()
    }

    fn scan(&self, i: usize, mut points: Option<&mut Vec<Point>>) -> Tally {
        let f = u128::from(self.f);
        let v_side = i < self.outer_v.len();
        let (x, xn, own, other) = if v_side {
            let (x, n) = &self.outer_v[i];
            (x, *n, self.lambda1, self.lambda2)
        } else {
            let (x, n) = &self.outer_w[i - self.outer_v.len()];
            (x, *n, self.lambda2, self.lambda1)
        };
        let mut t = Tally {
            scanned: 1,
            ..Tally::default()
        };
        let Some(a) = pow_u128(xn as u64, own) else {
            return t;
        };
        // Ties ‖v‖^λ₁ = ‖w‖^λ₂ belong to the v side.
        let lo = if v_side { ceil_root(a, other) } else { ceil_root(a + 1, other) };
        let hi = iroot(f / a, other);
        if lo > hi {
            return t;
        }
        let lo = lo as i64;
        let hi = i64::try_from(hi).unwrap_or(i64::MAX);
        let mut found = 0u64;
        t.scanned += for_each_unit_solution(x, hi, |y, yn| {
            if yn < lo {
                return;
            }
            found += 1;
            if let Some(p) = points.as_deref_mut() {
                let ht = BigInt::from(a) * num_traits::pow(BigInt::from(yn), other as usize);
                let ht_sq = BigRational::from_integer(ht);
                let neg: Vec<i64> = if v_side { x.iter().map(|c| -c).collect() } else { y.iter().map(|c| -c).collect() };
                let (v1, v2, w) = if v_side {
                    (x.clone(), neg, canonical(y))
                } else {
                    (y.to_vec(), neg, x.clone())
                };
                for v in [v1, v2] {
                    p.push(Point {
                        cols: vec![v, w.clone()],
                        ht_sq: ht_sq.clone(),
                    });
                }
            }
        });
        t.count = 2 * found;
        t
    }
}

// ---------------------------------------------------------------------------
// Triangles of lines

fn cross(a: &[i64], b: &[i64]) -> [i64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Ordered triples of lines spanning `Z³` with `Ht₁^κ₁ Ht₂^κ₂ ≤ R`.
///
/// With `m = min(κ₁, κ₂)` every accepted triple has
/// `‖v₁‖‖v₂‖‖v₃‖‖v₁∧v₂‖ ≤ R^{1/m}`. Pairs `(v₁, v₂)` are drawn from the
/// sorted list of canonical primitive vectors under that bound and `v₃` is
/// read off the plane `(v₁×v₂)·y = 1`.
pub struct Ex3Search {
    kappa1: u32,
    kappa2: u32,
    eta: f64,
    list: Vec<(Vec<i64>, i64)>,
    bound: u128,
    r_num_sq: BigInt,
    r_den_sq: BigInt,
    log_r2: f64,
}

impl Ex3Search {
    pub fn new(kappa1: u32, kappa2: u32, r: &BigRational, eta: f64) -> Result<Self, EnumError> {
        ExampleParams::Ex3 { kappa1, kappa2, eta }.validate()?;
        let f = floor_r_sq(r)?;
        let bound = iroot(u128::from(f), kappa1.min(kappa2));
        let list = canonical_primitive_ball(3, bound as i64);
        let (p, q) = if r.is_positive() {
            (r.numer().clone(), r.denom().clone())
        } else {
            (BigInt::zero(), BigInt::one())
        };
        Ok(Self {
            kappa1,
            kappa2,
            eta,
            list,
            bound,
            r_num_sq: &p * &p,
            r_den_sq: &q * &q,
            log_r2: 2.0 * r.to_f64().unwrap_or(0.0).max(f64::MIN_POSITIVE).ln(),
        })
    }

    /// `Ht² = P^{2κ₁−κ₂} W^{2κ₂−κ₁} ≤ R²` for `P = ∏‖vᵢ‖²`, `W = ∏‖vᵢ∧vⱼ‖²`.
    fn accepts(&self, p: u128, w: u128) -> bool {
        let e1 = 2 * i64::from(self.kappa1) - i64::from(self.kappa2);
        let e2 = 2 * i64::from(self.kappa2) - i64::from(self.kappa1);
        let approx = e1 as f64 * (p as f64).ln() + e2 as f64 * (w as f64).ln();
        if approx < self.log_r2 - 1e-9 {
            return true;
        }
        if approx > self.log_r2 + 1e-9 {
            return false;
        }
        let part = |base: u128, e: i64| num_traits::pow(BigInt::from(base), e.unsigned_abs() as usize);
        let (mut num, mut den) = (BigInt::one(), BigInt::one());
        for (base, e) in [(p, e1), (w, e2)] {
            if e >= 0 {
                num *= part(base, e);
            } else {
                den *= part(base, e);
            }
        }
        num * &self.r_den_sq <= den * &self.r_num_sq
    }
}

impl Enumerator for Ex3Search {
    fn outer_len(&self) -> usize {
        self.list.len()
    }

    fn weighted(&self) -> bool {
        true
    }

    fn scan(&self, i: usize, mut points: Option<&mut Vec<Point>>) -> Tally {
        let (v1, n1) = &self.list[i];
        let n1 = *n1 as u128;
        let room = self.bound / n1;
        let end = self.list.partition_point(|(_, n)| (*n as u128) <= room);
        let mut t = Tally::default();
        for (j, (v2, n2)) in self.list[..end].iter().enumerate() {
            t.scanned += 1;
            if j == i {
                continue;
            }
            let c = cross(v1, v2);
            let cn = norm_sq(&c) as u128;
            let k = n1 * (*n2 as u128) * cn;
            if cn == 0 || k > self.bound {
                continue;
            }
            let hi = (self.bound / k) as i64;
            let mut accepted: Vec<(Vec<i64>, u128, u128)> = Vec::new();
            t.scanned += for_each_unit_solution(&c, hi, |y, yn| {
                let p = n1 * (*n2 as u128) * yn as u128;
                let w = cn * norm_sq(&cross(v1, y)) as u128 * norm_sq(&cross(v2, y)) as u128;
                if self.accepts(p, w) {
                    accepted.push((canonical(y), p, w));
                }
            });
            for (v3, p, w) in accepted {
                let triple = TriangleTriple::from_i64([
                    [v1[0], v1[1], v1[2]],
                    [v2[0], v2[1], v2[2]],
                    [v3[0], v3[1], v3[2]],
                ])
                .expect("unit determinant by construction");
                t.count += 1;
                t.weighted += weights::weight(&triple, self.eta).expect("eta validated");
                if let Some(pts) = points.as_deref_mut() {
                    let ht_sq = num_traits::pow(
                        BigRational::new(BigInt::from(p) * BigInt::from(p), BigInt::from(w)),
                        self.kappa1 as usize,
                    ) * num_traits::pow(
                        BigRational::new(BigInt::from(w) * BigInt::from(w), BigInt::from(p)),
                        self.kappa2 as usize,
                    );
                    pts.push(Point {
                        cols: vec![v1.clone(), v2.clone(), v3],
                        ht_sq,
                    });
                }
            }
        }
        t
    }
}

// ---------------------------------------------------------------------------
// Ladder rows

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum CensusValue {
    Count(u64),
    Weighted(f64),
}

impl CensusValue {
    pub fn as_f64(&self) -> f64 {
        match self {
            Self::Count(c) => *c as f64,
            Self::Weighted(w) => *w,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CensusRow {
    pub r: BigRational,
    pub value: CensusValue,
    pub points_scanned: u64,
    pub seconds: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heights::{ht_ex2_sq, ht_ex3_sq, Splitting};
    use crate::lattice::IntVector;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn r(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    fn points(params: &ExampleParams, rr: &BigRational) -> (CountResult, Vec<Point>) {
        let mut pts: Vec<Point> = Vec::new();
        let res = count(params, rr, 2, Some(&mut pts)).unwrap();
        (res, pts)
    }

    #[test]
    fn unit_solutions_match_brute_force() {
        for x in [vec![1, 0], vec![3, 5], vec![0, 7, 2], vec![6, 10, 15], vec![2, 4, 6], vec![-4, 1, 9, 2]] {
            let hi = 60;
            let mut fast = Vec::new();
            for_each_unit_solution(&x, hi, |y, n| {
                assert_eq!(n, norm_sq(y));
                fast.push(y.to_vec());
            });
            fast.sort();
            let b = isqrt(hi);
            let mut slow = Vec::new();
            let d = x.len();
            let total = (2 * b + 1).pow(d as u32);
            for idx in 0..total {
                let mut y = Vec::with_capacity(d);
                let mut k = idx;
                for _ in 0..d {
                    y.push(k % (2 * b + 1) - b);
                    k /= 2 * b + 1;
                }
                let dot: i64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
                if dot == 1 && norm_sq(&y) <= hi {
                    slow.push(y);
                }
            }
            slow.sort();
            assert_eq!(fast, slow, "x = {x:?}");
        }
    }

    #[test]
    fn ball_listing() {
        let ball = canonical_primitive_ball(2, 2);
        let vs: Vec<Vec<i64>> = ball.iter().map(|(v, _)| v.clone()).collect();
        assert_eq!(vs, vec![vec![0, 1], vec![1, 0], vec![1, -1], vec![1, 1]]);
        assert!(canonical_primitive_ball(3, 0).is_empty());
    }

    #[test]
    fn quadric_columns_solve_exactly() {
        let inst = QuadricPairInstance::default();
        let (cols, _) = quadric_column_candidates(&inst.q2, 1, 30);
        assert!(cols.contains(&[1, 0, 0, 0]));
        for c in &cols {
            assert_eq!(c[0] * c[0] - 2 * c[1] * c[1] + c[2] * c[2] - 3 * c[3] * c[3], 1);
            assert!(norm_sq(c) <= 30);
        }
        let split = QuadricPairInstance::split();
        let (cols, _) = quadric_column_candidates(&split.q2, 0, 2);
        // Isotropic vectors of 2x₁x₄ + 2x₂x₃ include every unit vector.
        for k in 0..4 {
            let mut e = [0; 4];
            e[k] = 1;
            assert!(cols.contains(&e));
        }
    }

    #[test]
    fn ex1_small_values() {
        let inst = QuadricPairInstance::default();
        assert_eq!(enumerate_ex1(&inst, &r(1)).unwrap(), 0);
        let (res, pts) = points(&ExampleParams::Ex1 { inst: inst.clone() }, &r(2));
        assert!(res.count >= 1);
        assert!(pts.iter().any(|p| p.cols == vec![vec![1, 0, 0, 0], vec![0, 1, 0, 0]]));
        for p in &pts {
            let cols = [
                [p.cols[0][0], p.cols[0][1], p.cols[0][2], p.cols[0][3]],
                [p.cols[1][0], p.cols[1][1], p.cols[1][2], p.cols[1][3]],
            ];
            crate::heights::QuadricPoint::new(cols, &inst).unwrap();
        }
    }

    #[test]
    fn ex2_hand_count() {
        assert_eq!(enumerate_ex2(1, 1, 1, &r(1)).unwrap(), 4);
        assert_eq!(enumerate_ex2(3, 2, 1, &BigRational::new(1.into(), 2.into())).unwrap(), 0);
        let (res, pts) = points(&ExampleParams::Ex2 { n: 1, lambda1: 1, lambda2: 1 }, &r(1));
        assert_eq!(res.count, 4);
        let got: HashSet<_> = pts.iter().map(|p| p.cols.clone()).collect();
        let want: HashSet<_> = [
            vec![vec![1, 0], vec![1, 0]],
            vec![vec![-1, 0], vec![1, 0]],
            vec![vec![0, 1], vec![0, 1]],
            vec![vec![0, -1], vec![0, 1]],
        ]
        .into_iter()
        .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn ex2_points_are_distinct_splittings() {
        for (l1, l2) in [(1, 1), (1, 2), (2, 1)] {
            let rr = r(9);
            let (res, pts) = points(&ExampleParams::Ex2 { n: 2, lambda1: l1, lambda2: l2 }, &rr);
            assert_eq!(res.count as usize, pts.len());
            let mut seen = HashSet::new();
            for p in &pts {
                let s = Splitting::new(IntVector::from_i64(&p.cols[0]), IntVector::from_i64(&p.cols[1])).unwrap();
                assert_eq!(s.w().to_i64().unwrap(), p.cols[1]);
                let h = ht_ex2_sq(&s, l1, l2);
                assert_eq!(h, p.ht_sq);
                assert!(h <= &rr * &rr);
                assert!(seen.insert(p.cols.clone()));
            }
        }
    }

    #[test]
    fn ex3_base_case() {
        let (w, raw) = enumerate_ex3(1, 1, &r(1), 0.5).unwrap();
        assert_eq!(raw, 6);
        let std_w = weights::weight(&TriangleTriple::standard(), 0.5).unwrap();
        assert!((w - 6.0 * std_w).abs() < 1e-12);
        assert_eq!(enumerate_ex3(2, 1, &BigRational::new(9.into(), 10.into()), 0.5).unwrap().1, 0);
        assert!(matches!(enumerate_ex3(1, 1, &r(2), 1.5), Err(EnumError::Weight(_))));
    }

    #[test]
    fn ex3_points_have_stated_heights_and_are_closed_under_permutation() {
        for (k1, k2) in [(1, 1), (1, 2), (2, 1)] {
            let rr = r(6);
            let (res, pts) = points(&ExampleParams::Ex3 { kappa1: k1, kappa2: k2, eta: 0.5 }, &rr);
            assert_eq!(res.count as usize, pts.len());
            let set: HashSet<Vec<Vec<i64>>> = pts.iter().map(|p| p.cols.clone()).collect();
            assert_eq!(set.len(), pts.len());
            assert_eq!(pts.len() % 6, 0);
            for p in &pts {
                let t = TriangleTriple::from_i64([
                    [p.cols[0][0], p.cols[0][1], p.cols[0][2]],
                    [p.cols[1][0], p.cols[1][1], p.cols[1][2]],
                    [p.cols[2][0], p.cols[2][1], p.cols[2][2]],
                ])
                .unwrap();
                assert_eq!(ht_ex3_sq(&t, k1, k2), p.ht_sq);
                assert!(p.ht_sq <= &rr * &rr);
                for perm in [[1, 0, 2], [0, 2, 1], [2, 1, 0]] {
                    let q: Vec<Vec<i64>> = perm.iter().map(|&k| p.cols[k].clone()).collect();
                    assert!(set.contains(&q));
                }
            }
        }
    }

    #[test]
    fn worker_counts_agree() {
        let cases = [
            (ExampleParams::Ex1 { inst: QuadricPairInstance::default() }, r(15)),
            (ExampleParams::Ex2 { n: 2, lambda1: 1, lambda2: 1 }, r(40)),
            (ExampleParams::Ex3 { kappa1: 1, kappa2: 1, eta: 0.5 }, r(7)),
        ];
        for (p, rr) in cases {
            let base = count(&p, &rr, 1, None).unwrap();
            for w in [2, 4] {
                assert_eq!(count(&p, &rr, w, None).unwrap(), base);
            }
        }
    }

    #[test]
    fn monotone_in_r() {
        let p = ExampleParams::Ex2 { n: 1, lambda1: 1, lambda2: 2 };
        let mut last = 0;
        for k in 1..30 {
            let c = count(&p, &r(k), 1, None).unwrap().count;
            assert!(c >= last);
            last = c;
        }
    }

    #[test]
    fn oversized_r_is_rejected() {
        let huge = BigRational::from_integer(BigInt::from(1u64 << 40));
        assert!(matches!(enumerate_ex2(1, 1, 1, &huge), Err(EnumError::RTooLarge(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn any_partition_gives_the_same_total(cuts in proptest::collection::vec(0.0f64..1.0, 0..6), which in 0usize..3) {
            let (p, rr) = match which {
                0 => (ExampleParams::Ex1 { inst: QuadricPairInstance::default() }, r(12)),
                1 => (ExampleParams::Ex2 { n: 2, lambda1: 1, lambda2: 2 }, r(30)),
                _ => (ExampleParams::Ex3 { kappa1: 1, kappa2: 2, eta: 0.5 }, r(6)),
            };
            let e = build(&p, &rr).unwrap();
            let n = e.outer_len();
            let mut bounds: Vec<usize> = cuts.iter().map(|c| (c * n as f64) as usize).collect();
            bounds.push(0);
            bounds.push(n);
            bounds.sort();
            let mut total = Tally { scanned: e.setup_scanned(), ..Tally::default() };
            for w in bounds.windows(2) {
                total.merge(&scan_range(e.as_ref(), w[0]..w[1]));
            }
            let whole = run(e.as_ref(), 1, None).unwrap();
            prop_assert_eq!(total.count, whole.count);
            prop_assert_eq!(total.scanned, whole.scanned);
            prop_assert!((total.weighted - whole.weighted).abs() <= 1e-9 * whole.weighted.max(1.0));
        }
    }
}
