//! Heights on the three varieties, evaluated in squared form.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::lattice::{is_primitive, wedge_sq_norm, IntVector, LatticeError, SqVal};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HeightError {
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("triple is not unimodular (det = {0})")]
    NotUnimodular(BigInt),
    #[error("vector {0} is not primitive")]
    NotPrimitive(String),
    #[error("<w, v> = {0}, expected ±1")]
    NotComplementary(BigInt),
    #[error("matrix does not satisfy M^T Q2 M = Q1")]
    NotOnQuadric,
    #[error("{0}")]
    Shape(String),
}

/// Ordered triple of lines in Z³ spanning Z³, one canonical-sign generator each.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TriangleTriple {
    v: [IntVector; 3],
    det: BigInt,
}

impl TriangleTriple {
    pub fn new(v1: IntVector, v2: IntVector, v3: IntVector) -> Result<Self, HeightError> {
        for x in [&v1, &v2, &v3] {
            if x.dim() != 3 {
                return Err(LatticeError::DimensionMismatch(x.dim(), 3).into());
            }
            if !is_primitive(x)? {
                return Err(HeightError::NotPrimitive(x.to_string()));
            }
        }
        let v = [v1.canonical_sign(), v2.canonical_sign(), v3.canonical_sign()];
        let det = v[0].dot(&v[1].cross(&v[2])?)?;
        if !det.abs().is_one() {
            return Err(HeightError::NotUnimodular(det));
        }
        Ok(Self { v, det })
    }

    pub fn from_i64(cols: [[i64; 3]; 3]) -> Result<Self, HeightError> {
        Self::new(
            IntVector::from_i64(&cols[0]),
            IntVector::from_i64(&cols[1]),
            IntVector::from_i64(&cols[2]),
        )
    }

    pub fn standard() -> Self {
        Self::from_i64([[1, 0, 0], [0, 1, 0], [0, 0, 1]]).unwrap()
    }

    /// Columns of the product of elementary matrices `E(a, b, k)` (add `k`
    /// times column `b` to column `a`; `a == b` negates the column).
    pub fn from_word(word: &[(usize, usize, i64)]) -> Self {
        let mut c = [[1i64, 0, 0], [0, 1, 0], [0, 0, 1]];
        for &(a, b, k) in word {
            let (a, b) = (a % 3, b % 3);
            if a == b {
                c[a].iter_mut().for_each(|x| *x = -*x);
            } else {
                let src = c[b];
                for (x, y) in c[a].iter_mut().zip(src) {
                    *x += k * y;
                }
            }
        }
        Self::from_i64(c).expect("elementary words are unimodular")
    }

    pub fn vectors(&self) -> &[IntVector; 3] {
        &self.v
    }

    pub fn det(&self) -> &BigInt {
        &self.det
    }

    /// The triple (v₂×v₃, v₃×v₁, v₁×v₂), again unimodular.
    pub fn cofactor(&self) -> Self {
        let [a, b, c] = &self.v;
        Self::new(
            b.cross(c).unwrap(),
            c.cross(a).unwrap(),
            a.cross(b).unwrap(),
        )
        .expect("cofactor of a unimodular triple is unimodular")
    }

    pub fn permuted(&self, p: [usize; 3]) -> Self {
        Self::new(self.v[p[0]].clone(), self.v[p[1]].clone(), self.v[p[2]].clone()).unwrap()
    }

    fn norm_product(&self) -> BigInt {
        self.v.iter().map(IntVector::norm_sq).product()
    }

    fn wedge_product(&self) -> BigInt {
        let [a, b, c] = &self.v;
        [(a, b), (a, c), (b, c)]
            .into_iter()
            .map(|(x, y)| wedge_sq_norm(x, y).unwrap().into_inner().to_integer())
            .product()
    }
}

/// A vector `v` together with a complement `ker(w)`; `w` is stored sign-canonical.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Splitting {
    v: IntVector,
    w: IntVector,
}

impl Splitting {
    pub fn new(v: IntVector, w: IntVector) -> Result<Self, HeightError> {
        let pairing = w.dot(&v)?;
        if !pairing.abs().is_one() {
            return Err(HeightError::NotComplementary(pairing));
        }
        Ok(Self {
            v,
            w: w.canonical_sign(),
        })
    }

    pub fn v(&self) -> &IntVector {
        &self.v
    }

    pub fn w(&self) -> &IntVector {
        &self.w
    }
}

/// The pair of quadratic forms defining the first variety.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadricPairInstance {
    pub q1: [[i64; 2]; 2],
    pub q2: [[i64; 4]; 4],
}

impl Default for QuadricPairInstance {
    fn default() -> Self {
        Self {
            q1: [[1, 0], [0, -2]],
            q2: [[1, 0, 0, 0], [0, -2, 0, 0], [0, 0, 1, 0], [0, 0, 0, -3]],
        }
    }
}

impl QuadricPairInstance {
    /// Hyperbolic forms 2xy and 2x₁x₄ + 2x₂x₃.
    pub fn split() -> Self {
        Self {
            q1: [[0, 1], [1, 0]],
            q2: [[0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0], [1, 0, 0, 0]],
        }
    }

    pub fn validate(&self) -> Result<(), HeightError> {
        let sym1 = self.q1[0][1] == self.q1[1][0];
        let sym2 = (0..4).all(|i| (0..4).all(|j| self.q2[i][j] == self.q2[j][i]));
        if !sym1 || !sym2 {
            return Err(HeightError::Shape("forms must be symmetric".into()));
        }
        let s1 = signature(&self.q1.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
        let s2 = signature(&self.q2.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
        if s1 != (1, 1, 0) {
            return Err(HeightError::Shape(format!(
                "Q1 must be nondegenerate of signature (1,1), got {s1:?}"
            )));
        }
        if s2 != (2, 2, 0) {
            return Err(HeightError::Shape(format!(
                "Q2 must be nondegenerate of signature (2,2), got {s2:?}"
            )));
        }
        Ok(())
    }

    pub fn bilinear(&self, a: &[i64; 4], b: &[i64; 4]) -> i64 {
        let mut s = 0;
        for i in 0..4 {
            for j in 0..4 {
                s += a[i] * self.q2[i][j] * b[j];
            }
        }
        s
    }
}

/// (positive, negative, zero) counts of a symmetric rational matrix, by
/// congruence diagonalisation.
pub fn signature(m: &[Vec<i64>]) -> (usize, usize, usize) {
    let n = m.len();
    let mut a: Vec<Vec<BigRational>> = m
        .iter()
        .map(|r| r.iter().map(|&x| BigRational::from_integer(x.into())).collect())
        .collect();
    let (mut pos, mut neg, mut zero) = (0, 0, 0);
    let mut active: Vec<usize> = (0..n).collect();
    while !active.is_empty() {
        let p = match active.iter().copied().find(|&i| !a[i][i].is_zero()) {
            Some(p) => p,
            None => {
                // All remaining diagonals vanish: create one by adding row/col j to i.
                let hit = active.iter().copied().find_map(|i| {
                    active
                        .iter()
                        .copied()
                        .find(|&j| j != i && !a[i][j].is_zero())
                        .map(|j| (i, j))
                });
                match hit {
                    Some((i, j)) => {
                        for k in 0..n {
                            let t = a[j][k].clone();
                            a[i][k] += t;
                        }
                        for k in 0..n {
                            let t = a[k][j].clone();
                            a[k][i] += t;
                        }
                        continue;
                    }
                    None => {
                        zero += active.len();
                        break;
                    }
                }
            }
        };
        let piv = a[p][p].clone();
        if piv.is_positive() {
            pos += 1;
        } else {
            neg += 1;
        }
        active.retain(|&i| i != p);
        for &i in &active {
            let f = &a[i][p] / &piv;
            for k in 0..n {
                let t = &f * &a[p][k];
                a[i][k] -= t;
            }
        }
        for &i in &active {
            let f = &a[p][i] / &piv;
            for k in 0..n {
                let t = &f * &a[k][p];
                a[k][i] -= t;
            }
        }
    }
    (pos, neg, zero)
}

/// A 4×2 integer matrix `M` with `MᵀQ₂M = Q₁`, stored as two columns.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QuadricPoint {
    cols: [[i64; 4]; 2],
}

impl QuadricPoint {
    pub fn new(cols: [[i64; 4]; 2], inst: &QuadricPairInstance) -> Result<Self, HeightError> {
        for i in 0..2 {
            for j in 0..2 {
                if inst.bilinear(&cols[i], &cols[j]) != inst.q1[i][j] {
                    return Err(HeightError::NotOnQuadric);
                }
            }
        }
        Ok(Self { cols })
    }

    pub fn cols(&self) -> &[[i64; 4]; 2] {
        &self.cols
    }
}

/// Sum of squares of all entries of a 4×2 matrix given by its columns.
pub fn matrix_norm_sq(cols: &[[i64; 4]; 2]) -> BigInt {
    cols.iter()
        .flatten()
        .map(|&x| BigInt::from(x) * BigInt::from(x))
        .sum()
}

pub fn ht_ex1_sq(p: &QuadricPoint) -> SqVal {
    SqVal::from_int(matrix_norm_sq(&p.cols)).unwrap()
}

/// (‖v‖²)^λ₁ (‖w‖²)^λ₂; the complement `ker(w)` has covolume ‖w‖.
pub fn ht_ex2_sq(s: &Splitting, lambda1: u32, lambda2: u32) -> BigRational {
    let h = num_traits::pow(s.v.norm_sq(), lambda1 as usize)
        * num_traits::pow(s.w.norm_sq(), lambda2 as usize);
    BigRational::from_integer(h)
}

pub fn ht1_sq(t: &TriangleTriple) -> BigRational {
    let p = t.norm_product();
    BigRational::new(&p * &p, t.wedge_product())
}

pub fn ht2_sq(t: &TriangleTriple) -> BigRational {
    let w = t.wedge_product();
    BigRational::new(&w * &w, t.norm_product())
}

/// (Ht₁²)^κ₁ (Ht₂²)^κ₂.
pub fn ht_ex3_sq(t: &TriangleTriple, kappa1: u32, kappa2: u32) -> BigRational {
    num_traits::pow(ht1_sq(t), kappa1 as usize) * num_traits::pow(ht2_sq(t), kappa2 as usize)
}

pub fn ht_ex3_leq(t: &TriangleTriple, kappa1: u32, kappa2: u32, r: &BigRational) -> bool {
    ht_ex3_sq(t, kappa1, kappa2) <= r * r
}

#[cfg(test)]
pub(crate) fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[i64]) -> IntVector {
        IntVector::from_i64(c)
    }

    #[test]
    fn quadric_heights() {
        let inst = QuadricPairInstance::default();
        let m0 = QuadricPoint::new([[1, 0, 0, 0], [0, 1, 0, 0]], &inst).unwrap();
        assert_eq!(ht_ex1_sq(&m0), SqVal::from_int(2.into()).unwrap());
        assert_eq!(matrix_norm_sq(&[[0; 4]; 2]), BigInt::zero());
        assert_eq!(matrix_norm_sq(&[[1, 1, 0, 0], [0, 0, 1, 1]]), BigInt::from(4));
        assert!(QuadricPoint::new([[1, 1, 0, 0], [0, 0, 1, 1]], &inst).is_err());
    }

    #[test]
    fn instances_validate() {
        QuadricPairInstance::default().validate().unwrap();
        QuadricPairInstance::split().validate().unwrap();
        let mut bad = QuadricPairInstance::default();
        bad.q2[3][3] = 3;
        assert!(bad.validate().is_err());
        assert_eq!(signature(&[vec![0, 0], vec![0, 0]]), (0, 0, 2));
        assert_eq!(signature(&[vec![1, 2], vec![2, 4]]), (1, 0, 1));
    }

    #[test]
    fn splitting_heights() {
        let s = Splitting::new(v(&[1, 0]), v(&[1, 0])).unwrap();
        assert_eq!(ht_ex2_sq(&s, 1, 1), rat(1, 1));
        let s = Splitting::new(v(&[1, 1]), v(&[1, 0])).unwrap();
        assert_eq!(ht_ex2_sq(&s, 1, 1), rat(2, 1));
        let s = Splitting::new(v(&[1, 0]), v(&[1, 3])).unwrap();
        assert_eq!(ht_ex2_sq(&s, 2, 1), rat(10, 1));
        let s = Splitting::new(v(&[1, 0]), v(&[-1, 3])).unwrap();
        assert_eq!(s.w(), &v(&[1, -3]));
        assert!(Splitting::new(v(&[2, 1]), v(&[1, 1])).is_err());
    }

    #[test]
    fn triangle_heights() {
        let std = TriangleTriple::standard();
        assert_eq!(ht1_sq(&std), rat(1, 1));
        assert_eq!(ht2_sq(&std), rat(1, 1));
        let t = TriangleTriple::from_i64([[1, 0, 0], [0, 1, 0], [1, 1, 1]]).unwrap();
        assert_eq!(ht1_sq(&t), rat(9, 4));
        assert_eq!(ht2_sq(&t), rat(16, 3));
        assert_eq!(ht1_sq(&t) * ht2_sq(&t), rat(3 * 4, 1));
        assert!(ht_ex3_leq(&std, 4, 7, &rat(1, 1)));
        assert!(!ht_ex3_leq(&t, 1, 1, &rat(3, 1)));
        assert!(ht_ex3_leq(&t, 1, 1, &rat(4, 1)));
    }

    #[test]
    fn triple_construction() {
        let t = TriangleTriple::from_i64([[-1, 0, 0], [0, 1, 0], [0, 0, -1]]).unwrap();
        assert_eq!(t, TriangleTriple::standard());
        assert!(matches!(
            TriangleTriple::from_i64([[1, 0, 0], [0, 1, 0], [1, 1, 2]]),
            Err(HeightError::NotUnimodular(_))
        ));
        assert!(matches!(
            TriangleTriple::from_i64([[2, 0, 0], [0, 1, 0], [0, 0, 1]]),
            Err(HeightError::NotPrimitive(_))
        ));
    }

    #[test]
    fn cofactor_of_example() {
        let t = TriangleTriple::from_i64([[1, 0, 0], [0, 1, 0], [1, 1, 1]]).unwrap();
        assert_eq!(ht2_sq(&t), ht1_sq(&t.cofactor()));
    }

    fn word() -> impl proptest::strategy::Strategy<Value = Vec<(usize, usize, i64)>> {
        proptest::collection::vec((0usize..3, 0usize..3, -3i64..=3), 0..10)
    }

    proptest::proptest! {
        #[test]
        fn duality_and_lower_bounds(w in word()) {
            let t = TriangleTriple::from_word(&w);
            let one = rat(1, 1);
            proptest::prop_assert!(ht1_sq(&t) >= one);
            proptest::prop_assert!(ht2_sq(&t) >= one);
            proptest::prop_assert_eq!(ht2_sq(&t), ht1_sq(&t.cofactor()));
        }

        #[test]
        fn heights_depend_on_lines_only(w in word(), flips in 0u8..8, perm in 0usize..6) {
            let t = TriangleTriple::from_word(&w);
            let vs = t.vectors();
            let flip = |i: usize| if flips & (1 << i) != 0 { vs[i].neg() } else { vs[i].clone() };
            let raw = [flip(0), flip(1), flip(2)];
            let s = TriangleTriple::new(raw[0].clone(), raw[1].clone(), raw[2].clone()).unwrap();
            proptest::prop_assert_eq!(&s, &t);
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let p = t.permuted(perms[perm]);
            proptest::prop_assert_eq!(ht1_sq(&p), ht1_sq(&t));
            proptest::prop_assert_eq!(ht2_sq(&p), ht2_sq(&t));
        }
    }
}
