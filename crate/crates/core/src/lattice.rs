//! Exact integer linear algebra on small lattices.
//!
//! Every norm handled here is a squared quantity carried as an exact
//! rational ([`SqVal`]), so comparisons never touch floating point.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("zero vector has no primitivity")]
    ZeroVector,
    #[error("degenerate basis")]
    DegenerateBasis,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("covector must be primitive")]
    NotPrimitive,
    #[error("empty vector")]
    Empty,
}

/// Integer vector with arbitrary-precision coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IntVector {
    coords: Vec<BigInt>,
}

impl IntVector {
    pub fn new(coords: Vec<BigInt>) -> Result<Self, LatticeError> {
        if coords.is_empty() {
            return Err(LatticeError::Empty);
        }
        Ok(Self { coords })
    }

    /// Panics on an empty slice.
    pub fn from_i64(coords: &[i64]) -> Self {
        assert!(!coords.is_empty(), "IntVector needs at least one coordinate");
        Self {
            coords: coords.iter().map(|&c| BigInt::from(c)).collect(),
        }
    }

    pub fn unit(dim: usize, i: usize) -> Self {
        let mut c = vec![0i64; dim];
        c[i] = 1;
        Self::from_i64(&c)
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[BigInt] {
        &self.coords
    }

    pub fn to_i64(&self) -> Option<Vec<i64>> {
        self.coords.iter().map(|c| c.to_i64()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|c| c.is_zero())
    }

    pub fn dot(&self, other: &Self) -> Result<BigInt, LatticeError> {
        check_dims(self, other)?;
        Ok(self
            .coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn norm_sq(&self) -> BigInt {
        self.coords.iter().map(|c| c * c).sum()
    }

    pub fn neg(&self) -> Self {
        Self {
            coords: self.coords.iter().map(|c| -c).collect(),
        }
    }

    /// Representative of `±self` whose first nonzero coordinate is positive.
    pub fn canonical_sign(&self) -> Self {
        match self.coords.iter().find(|c| !c.is_zero()) {
            Some(c) if c.is_negative() => self.neg(),
            _ => self.clone(),
        }
    }

    pub fn is_sign_canonical(&self) -> bool {
        self.coords
            .iter()
            .find(|c| !c.is_zero())
            .is_some_and(|c| c.is_positive())
    }

    /// Cross product; both vectors must live in Z³.
    pub fn cross(&self, other: &Self) -> Result<Self, LatticeError> {
        check_dims(self, other)?;
        if self.dim() != 3 {
            return Err(LatticeError::DimensionMismatch(self.dim(), 3));
        }
        let (a, b) = (&self.coords, &other.coords);
        Ok(Self {
            coords: vec![
                &a[1] * &b[2] - &a[2] * &b[1],
                &a[2] * &b[0] - &a[0] * &b[2],
                &a[0] * &b[1] - &a[1] * &b[0],
            ],
        })
    }
}

impl fmt::Display for IntVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

fn check_dims(a: &IntVector, b: &IntVector) -> Result<(), LatticeError> {
    if a.dim() != b.dim() {
        return Err(LatticeError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(())
}

/// A squared Euclidean quantity, held exactly.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SqVal(BigRational);

impl SqVal {
    pub fn new(value: BigRational) -> Option<Self> {
        (!value.is_negative()).then_some(Self(value))
    }

    pub fn from_int(value: BigInt) -> Option<Self> {
        Self::new(BigRational::from_integer(value))
    }

    pub fn one() -> Self {
        Self(BigRational::one())
    }

    pub fn value(&self) -> &BigRational {
        &self.0
    }

    pub fn into_inner(self) -> BigRational {
        self.0
    }
}

impl fmt::Display for SqVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Linearly independent integer vectors of a common dimension.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeBasis {
    vectors: Vec<IntVector>,
    gram_det: BigInt,
}

impl LatticeBasis {
    pub fn new(vectors: Vec<IntVector>) -> Result<Self, LatticeError> {
        let gram_det = gram_determinant(&vectors)?;
        if gram_det.is_zero() {
            return Err(LatticeError::DegenerateBasis);
        }
        Ok(Self { vectors, gram_det })
    }

    pub fn vectors(&self) -> &[IntVector] {
        &self.vectors
    }

    pub fn rank(&self) -> usize {
        self.vectors.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.vectors.first().map_or(0, IntVector::dim)
    }

    pub fn covolume_sq(&self) -> SqVal {
        SqVal(BigRational::from_integer(self.gram_det.clone()))
    }
}

/// det of the Gram matrix of `vectors`; zero exactly when they are dependent.
/// The empty family has Gram determinant 1.
pub fn gram_determinant(vectors: &[IntVector]) -> Result<BigInt, LatticeError> {
    if let Some(first) = vectors.first() {
        for v in vectors {
            check_dims(first, v)?;
        }
    }
    let gram: Vec<Vec<BigInt>> = vectors
        .iter()
        .map(|a| vectors.iter().map(|b| a.dot(b).unwrap()).collect())
        .collect();
    Ok(bareiss_det(gram))
}

/// Fraction-free Gaussian elimination. All intermediate divisions are exact.
pub fn bareiss_det(mut m: Vec<Vec<BigInt>>) -> BigInt {
    let n = m.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if m[k][k].is_zero() {
            match (k + 1..n).find(|&i| !m[i][k].is_zero()) {
                Some(i) => {
                    m.swap(i, k);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let t = &m[k][k] * &m[i][j] - &m[i][k] * &m[k][j];
                m[i][j] = t / &prev;
            }
        }
        prev = m[k][k].clone();
    }
    sign * &m[n - 1][n - 1]
}

pub fn is_primitive(v: &IntVector) -> Result<bool, LatticeError> {
    if v.is_zero() {
        return Err(LatticeError::ZeroVector);
    }
    let g = v
        .coords
        .iter()
        .fold(BigInt::zero(), |acc, c| acc.gcd(c));
    Ok(g.is_one())
}

pub fn covolume_sq(vectors: &[IntVector]) -> Result<SqVal, LatticeError> {
    Ok(LatticeBasis::new(vectors.to_vec())?.covolume_sq())
}

/// ‖v∧w‖², zero when the vectors are dependent.
pub fn wedge_sq_norm(v: &IntVector, w: &IntVector) -> Result<SqVal, LatticeError> {
    let d = gram_determinant(&[v.clone(), w.clone()])?;
    Ok(SqVal(BigRational::from_integer(d)))
}

/// Basis of `{x : <w, x> = 0}` obtained by unimodular column operations that
/// reduce the row `w` to a single `±1`.
pub fn kernel_basis(w: &IntVector) -> Result<LatticeBasis, LatticeError> {
    if !is_primitive(w)? {
        return Err(LatticeError::NotPrimitive);
    }
    let n = w.dim();
    let mut row: Vec<BigInt> = w.coords.clone();
    let mut cols: Vec<Vec<BigInt>> = (0..n)
        .map(|j| {
            (0..n)
                .map(|i| if i == j { BigInt::one() } else { BigInt::zero() })
                .collect()
        })
        .collect();
    let pivot = loop {
        let p = (0..n)
            .filter(|&j| !row[j].is_zero())
            .min_by_key(|&j| row[j].abs())
            .expect("primitive covector is nonzero");
        let mut done = true;
        for j in 0..n {
            if j == p || row[j].is_zero() {
                continue;
            }
            let q = row[j].div_floor(&row[p]);
            row[j] = &row[j] - &q * &row[p];
            let cp = cols[p].clone();
            for (x, y) in cols[j].iter_mut().zip(&cp) {
                *x -= &q * y;
            }
            if !row[j].is_zero() {
                done = false;
            }
        }
        if done {
            break p;
        }
    };
    debug_assert!(row[pivot].abs().is_one());
    let vectors = cols
        .into_iter()
        .enumerate()
        .filter(|&(j, _)| j != pivot)
        .map(|(_, c)| IntVector { coords: c })
        .collect();
    LatticeBasis::new(vectors)
}

/// Subsets of {1,2,3} are encoded as bitmasks (bit i for line i+1).
pub type IndexSet = u8;

fn sub_covolume_sq(lines: &[IntVector; 3], set: IndexSet) -> BigInt {
    let picked: Vec<IntVector> = (0..3)
        .filter(|i| set & (1 << i) != 0)
        .map(|i| lines[i].clone())
        .collect();
    gram_determinant(&picked).expect("lines share a dimension")
}

/// The squared ratio ‖Λ_I‖‖Λ_J‖ / (‖Λ_{I∩J}‖‖Λ_{I∪J}‖).
pub fn d_ij_sq(lines: &[IntVector; 3], i: IndexSet, j: IndexSet) -> Result<BigRational, LatticeError> {
    if lines.iter().any(|v| v.dim() != 3) {
        return Err(LatticeError::DimensionMismatch(lines[0].dim(), 3));
    }
    if gram_determinant(lines)?.is_zero() {
        return Err(LatticeError::DegenerateBasis);
    }
    let (i, j) = (i & 7, j & 7);
    let num = sub_covolume_sq(lines, i) * sub_covolume_sq(lines, j);
    let den = sub_covolume_sq(lines, i & j) * sub_covolume_sq(lines, i | j);
    Ok(BigRational::new(num, den))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(c: &[i64]) -> IntVector {
        IntVector::from_i64(c)
    }

    fn int(x: i64) -> SqVal {
        SqVal::from_int(BigInt::from(x)).unwrap()
    }

    #[test]
    fn primitivity() {
        assert!(is_primitive(&v(&[1, 0, 0])).unwrap());
        assert!(!is_primitive(&v(&[2, 4, 6])).unwrap());
        assert!(is_primitive(&v(&[6, 10, 15])).unwrap());
        assert_eq!(is_primitive(&v(&[0, 0])), Err(LatticeError::ZeroVector));
    }

    #[test]
    fn covolumes() {
        let std3 = [v(&[1, 0, 0]), v(&[0, 1, 0]), v(&[0, 0, 1])];
        assert_eq!(covolume_sq(&std3).unwrap(), int(1));
        assert_eq!(covolume_sq(&[v(&[1, 1, 1])]).unwrap(), int(3));
        assert_eq!(covolume_sq(&[v(&[1, 0, 0]), v(&[1, 1, 1])]).unwrap(), int(2));
        assert_eq!(
            covolume_sq(&[v(&[1, 2, 3]), v(&[2, 4, 6])]),
            Err(LatticeError::DegenerateBasis)
        );
    }

    #[test]
    fn wedges() {
        assert_eq!(wedge_sq_norm(&v(&[1, 0, 0]), &v(&[0, 1, 0])).unwrap(), int(1));
        assert_eq!(wedge_sq_norm(&v(&[1, 0, 0]), &v(&[1, 1, 1])).unwrap(), int(2));
        assert_eq!(wedge_sq_norm(&v(&[3, 1, 4]), &v(&[3, 1, 4])).unwrap(), int(0));
        assert!(wedge_sq_norm(&v(&[1, 0]), &v(&[1, 0, 0])).is_err());
    }

    #[test]
    fn kernels() {
        let k = kernel_basis(&v(&[0, 0, 1])).unwrap();
        assert_eq!(k.rank(), 2);
        assert_eq!(k.covolume_sq(), int(1));

        let k = kernel_basis(&v(&[1, 1])).unwrap();
        let b = &k.vectors()[0];
        assert!(b == &v(&[1, -1]) || b == &v(&[-1, 1]));
        assert_eq!(k.covolume_sq(), int(2));

        let w = v(&[1, 2, 3]);
        let k = kernel_basis(&w).unwrap();
        assert_eq!(k.covolume_sq(), int(14));
        for b in k.vectors() {
            assert!(w.dot(b).unwrap().is_zero());
        }
        assert_eq!(kernel_basis(&v(&[2, 4])), Err(LatticeError::NotPrimitive));
    }

    #[test]
    fn d_ij_values() {
        let std3 = [v(&[1, 0, 0]), v(&[0, 1, 0]), v(&[0, 0, 1])];
        for i in 0..8 {
            for j in 0..8 {
                assert!(d_ij_sq(&std3, i, j).unwrap().is_one());
            }
        }
        let lines = [v(&[1, 0, 0]), v(&[0, 1, 0]), v(&[1, 1, 1])];
        assert_eq!(
            d_ij_sq(&lines, 0b001, 0b100).unwrap(),
            BigRational::new(3.into(), 2.into())
        );
        for s in 0..8 {
            assert!(d_ij_sq(&lines, s, s).unwrap().is_one());
        }
        let bad = [v(&[1, 0, 0]), v(&[0, 1, 0]), v(&[1, 1, 0])];
        assert!(d_ij_sq(&bad, 1, 2).is_err());
    }

    #[test]
    fn bareiss_matches_cofactor_expansion() {
        let m = vec![
            vec![2.into(), (-1).into(), 3.into()],
            vec![0.into(), 4.into(), 1.into()],
            vec![5.into(), 2.into(), (-2).into()],
        ];
        // 2(4·-2 - 1·2) + 1(0·-2 - 1·5) + 3(0·2 - 4·5) = -20 - 5 - 60
        assert_eq!(bareiss_det(m), BigInt::from(-85));
        let singular_pivot = vec![
            vec![0.into(), 1.into()],
            vec![1.into(), 0.into()],
        ];
        assert_eq!(bareiss_det(singular_pivot), BigInt::from(-1));
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<i64>> {
        proptest::collection::vec(-9i64..=9, dim)
    }

    /// Applies `x_a += k·x_b` style operations to the rows of a basis.
    fn apply_unimodular(vs: &[Vec<i64>], ops: &[(usize, usize, i64)]) -> Vec<Vec<i64>> {
        let mut out = vs.to_vec();
        let r = out.len();
        for &(a, b, k) in ops {
            let (a, b) = (a % r, b % r);
            if a == b {
                out[a].iter_mut().for_each(|x| *x = -*x);
            } else {
                let src = out[b].clone();
                for (x, y) in out[a].iter_mut().zip(src) {
                    *x += k * y;
                }
            }
        }
        out
    }

    proptest! {
        #[test]
        fn covolume_is_unimodular_invariant(
            rows in proptest::collection::vec(vec_strategy(4), 1..=3),
            ops in proptest::collection::vec((0usize..3, 0usize..3, -3i64..=3), 0..8),
        ) {
            let basis: Vec<IntVector> = rows.iter().map(|r| v(r)).collect();
            let before = gram_determinant(&basis).unwrap();
            let moved: Vec<IntVector> =
                apply_unimodular(&rows, &ops).iter().map(|r| v(r)).collect();
            prop_assert_eq!(gram_determinant(&moved).unwrap(), before);
        }

        #[test]
        fn hadamard_for_wedges(a in vec_strategy(3), b in vec_strategy(3)) {
            let (a, b) = (v(&a), v(&b));
            let wedge = wedge_sq_norm(&a, &b).unwrap().into_inner();
            let bound = BigRational::from_integer(a.norm_sq() * b.norm_sq());
            prop_assert!(wedge <= bound);
            prop_assert_eq!(wedge == bound, a.dot(&b).unwrap().is_zero());
        }

        #[test]
        fn d_ij_symmetric(
            m in proptest::collection::vec(vec_strategy(3), 3),
            i in 0u8..8,
            j in 0u8..8,
        ) {
            let lines = [v(&m[0]), v(&m[1]), v(&m[2])];
            match d_ij_sq(&lines, i, j) {
                Ok(x) => prop_assert_eq!(x, d_ij_sq(&lines, j, i).unwrap()),
                Err(_) => prop_assert!(gram_determinant(&lines).unwrap().is_zero()),
            }
        }

        #[test]
        fn kernel_vectors_are_orthogonal(w in vec_strategy(4)) {
            let w = v(&w);
            prop_assume!(!w.is_zero() && is_primitive(&w).unwrap());
            let k = kernel_basis(&w).unwrap();
            prop_assert_eq!(k.rank(), 3);
            for b in k.vectors() {
                prop_assert!(w.dot(b).unwrap().is_zero());
            }
        }
    }
}
