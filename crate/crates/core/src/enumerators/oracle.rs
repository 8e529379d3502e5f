//! Exhaustive box scans, written independently of the fast searches.
//!
//! Every candidate inside the box is tested against the raw defining
//! equations, and heights are recomputed inline from their definitions.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::ToPrimitive;

use super::{EnumError, ExampleParams};

/// Upper limit on the estimated number of elementary tests in one scan.
pub const WORK_LIMIT: f64 = 5.0e9;

fn box_points(dim: usize, b: i64) -> Vec<Vec<i64>> {
    let side = 2 * b + 1;
    let total = side.pow(dim as u32);
    (0..total)
        .map(|mut k| {
            (0..dim)
                .map(|_| {
                    let c = k % side - b;
                    k /= side;
                    c
                })
                .collect()
        })
        .collect()
}

fn sq(v: &[i64]) -> i64 {
    v.iter().map(|x| x * x).sum()
}

fn gcd_all(v: &[i64]) -> i64 {
    v.iter().fold(0i64, |g, x| g.gcd(x))
}

fn first_nonzero_positive(v: &[i64]) -> bool {
    v.iter().find(|&&x| x != 0).is_some_and(|&x| x > 0)
}

/// Estimated work of a scan with the given box.
pub fn work_estimate(params: &ExampleParams, b: i64) -> f64 {
    let side = (2 * b + 1) as f64;
    match params {
        ExampleParams::Ex1 { .. } => side.powi(4),
        ExampleParams::Ex2 { n, .. } => side.powi(2 * (*n as i32 + 1)) / 2.0,
        ExampleParams::Ex3 { .. } => (side.powi(3) / 2.0).powi(3) / 6.0,
    }
}

/// Smallest box containing every point of height at most `r`.
pub fn required_box(params: &ExampleParams, r: &BigRational) -> Result<i64, EnumError> {
    let f = super::floor_r_sq(r)? as f64;
    let root = |x: f64, k: u32| {
        let mut m = x.powf(1.0 / f64::from(k)).floor();
        while (m + 1.0).powi(k as i32) <= x {
            m += 1.0;
        }
        while m > 0.0 && m.powi(k as i32) > x {
            m -= 1.0;
        }
        m
    };
    let max_norm_sq = match params {
        ExampleParams::Ex1 { .. } => f,
        ExampleParams::Ex2 { lambda1, lambda2, .. } => root(f, *lambda1.min(lambda2)),
        ExampleParams::Ex3 { kappa1, kappa2, .. } => root(f, *kappa1.min(kappa2)),
    };
    Ok(root(max_norm_sq, 2) as i64)
}

/// Number of points inside `[−b, b]^N` of height at most each `r`.
pub fn oracle_counts(params: &ExampleParams, rs: &[BigRational], b: i64) -> Result<Vec<u64>, EnumError> {
    params.validate()?;
    if b < 0 {
        return Err(EnumError::Invalid(format!("box bound must be ≥ 0, got {b}")));
    }
    if work_estimate(params, b) > WORK_LIMIT {
        return Err(EnumError::OracleLimit(b));
    }
    let r_sq: Vec<BigRational> = rs.iter().map(|r| r * r).collect();
    let r_max_sq = r_sq
        .iter()
        .filter_map(|x| x.to_f64())
        .fold(0.0f64, f64::max);
    let mut counts = vec![0u64; rs.len()];
    let mut record = |ht_sq: BigRational, approx: f64, mult: u64| {
        if approx > r_max_sq * (1.0 + 1e-9) + 1e-9 {
            return;
        }
        for (c, bound) in counts.iter_mut().zip(&r_sq) {
            if ht_sq <= *bound {
                *c += mult;
            }
        }
    };
    match params {
        ExampleParams::Ex1 { inst } => {
            let q = inst.q2;
            let form = |a: &[i64], c: &[i64]| -> i64 {
                let mut s = 0;
                for i in 0..4 {
                    for j in 0..4 {
                        s += a[i] * q[i][j] * c[j];
                    }
                }
                s
            };
            let cols = box_points(4, b);
            let first: Vec<&Vec<i64>> = cols.iter().filter(|c| form(c, c) == inst.q1[0][0]).collect();
            let second: Vec<&Vec<i64>> = cols.iter().filter(|c| form(c, c) == inst.q1[1][1]).collect();
            for c1 in &first {
                for c2 in &second {
                    if form(c1, c2) == inst.q1[0][1] && form(c2, c1) == inst.q1[1][0] {
                        let h = sq(c1) + sq(c2);
                        record(BigRational::from_integer(h.into()), h as f64, 1);
                    }
                }
            }
        }
        ExampleParams::Ex2 { n, lambda1, lambda2 } => {
            let d = *n as usize + 1;
            let all = box_points(d, b);
            let ws: Vec<&Vec<i64>> = all.iter().filter(|w| first_nonzero_positive(w)).collect();
            for v in all.iter().filter(|v| v.iter().any(|&x| x != 0)) {
                for w in &ws {
                    let dot: i64 = v.iter().zip(w.iter()).map(|(a, c)| a * c).sum();
                    if dot.abs() != 1 || gcd_all(v) != 1 || gcd_all(w) != 1 {
                        continue;
                    }
                    let (nv, nw) = (sq(v), sq(w));
                    let h = num_traits::pow(BigInt::from(nv), *lambda1 as usize)
                        * num_traits::pow(BigInt::from(nw), *lambda2 as usize);
                    let approx = (nv as f64).powi(*lambda1 as i32) * (nw as f64).powi(*lambda2 as i32);
                    record(BigRational::from_integer(h), approx, 1);
                }
            }
        }
        ExampleParams::Ex3 { kappa1, kappa2, .. } => {
            // Unordered triples of distinct lines; the height is symmetric,
            // so each contributes its six orderings.
            let lines: Vec<Vec<i64>> = box_points(3, b)
                .into_iter()
                .filter(|v| first_nonzero_positive(v) && gcd_all(v) == 1)
                .collect();
            let cr = |a: &[i64], c: &[i64]| {
                [
                    a[1] * c[2] - a[2] * c[1],
                    a[2] * c[0] - a[0] * c[2],
                    a[0] * c[1] - a[1] * c[0],
                ]
            };
            for i in 0..lines.len() {
                for j in i + 1..lines.len() {
                    let c = cr(&lines[i], &lines[j]);
                    for k in j + 1..lines.len() {
                        let z = &lines[k];
                        let det = c[0] * z[0] + c[1] * z[1] + c[2] * z[2];
                        if det.abs() != 1 {
                            continue;
                        }
                        let (x, y) = (&lines[i], &lines[j]);
                        let norms = sq(x) * sq(y) * sq(z);
                        let wedges = sq(&c) * sq(&cr(x, z)) * sq(&cr(y, z));
                        let (nf, wf) = (norms as f64, wedges as f64);
                        let approx = (nf * nf / wf).powi(*kappa1 as i32) * (wf * wf / nf).powi(*kappa2 as i32);
                        if approx > r_max_sq * (1.0 + 1e-9) + 1e-9 {
                            continue;
                        }
                        let (nb, wb) = (BigInt::from(norms), BigInt::from(wedges));
                        let h1 = BigRational::new(&nb * &nb, wb.clone());
                        let h2 = BigRational::new(&wb * &wb, nb);
                        let ht = num_traits::pow(h1, *kappa1 as usize) * num_traits::pow(h2, *kappa2 as usize);
                        record(ht, approx, 6);
                    }
                }
            }
        }
    }
    Ok(counts)
}

pub fn oracle_scan(params: &ExampleParams, r: &BigRational, b: i64) -> Result<u64, EnumError> {
    Ok(oracle_counts(params, std::slice::from_ref(r), b)?[0])
}

/// Scan with the smallest complete box for `r`.
pub fn oracle_count_complete(params: &ExampleParams, r: &BigRational) -> Result<u64, EnumError> {
    let b = required_box(params, r)?.max(1);
    oracle_scan(params, r, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heights::QuadricPairInstance;

    fn r(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    #[test]
    fn desk_examples() {
        let ex2 = ExampleParams::Ex2 { n: 1, lambda1: 1, lambda2: 1 };
        assert_eq!(oracle_scan(&ex2, &r(1), 1).unwrap(), 4);
        let ex1 = ExampleParams::Ex1 { inst: QuadricPairInstance::default() };
        assert_eq!(oracle_scan(&ex1, &r(1), 1).unwrap(), 0);
        let ex3 = ExampleParams::Ex3 { kappa1: 1, kappa2: 1, eta: 0.5 };
        assert_eq!(oracle_scan(&ex3, &r(1), 1).unwrap(), 6);
    }

    #[test]
    fn box_limit() {
        let ex3 = ExampleParams::Ex3 { kappa1: 1, kappa2: 1, eta: 0.5 };
        assert!(matches!(oracle_scan(&ex3, &r(13), 13), Err(EnumError::OracleLimit(13))));
        let msg = oracle_scan(&ex3, &r(13), 13).unwrap_err().to_string();
        assert!(msg.contains("oracle limited to desk scale"));
    }

    #[test]
    fn required_boxes() {
        let ex2 = ExampleParams::Ex2 { n: 2, lambda1: 1, lambda2: 2 };
        assert_eq!(required_box(&ex2, &r(20)).unwrap(), 20);
        let ex3 = ExampleParams::Ex3 { kappa1: 2, kappa2: 3, eta: 0.5 };
        assert_eq!(required_box(&ex3, &r(16)).unwrap(), 4);
    }

    #[test]
    fn small_ladders_agree_with_fast_search() {
        let cases = [
            ExampleParams::Ex1 { inst: QuadricPairInstance::default() },
            ExampleParams::Ex1 { inst: QuadricPairInstance::split() },
            ExampleParams::Ex2 { n: 1, lambda1: 2, lambda2: 1 },
            ExampleParams::Ex2 { n: 2, lambda1: 1, lambda2: 1 },
            ExampleParams::Ex3 { kappa1: 1, kappa2: 2, eta: 0.5 },
            ExampleParams::Ex3 { kappa1: 1, kappa2: 1, eta: 0.5 },
        ];
        let rs: Vec<BigRational> = (1..=5).map(r).collect();
        for p in cases {
            let b = required_box(&p, &r(5)).unwrap();
            let slow = oracle_counts(&p, &rs, b).unwrap();
            let fast: Vec<u64> = rs
                .iter()
                .map(|x| super::super::count(&p, x, 1, None).unwrap().count)
                .collect();
            assert_eq!(slow, fast, "{p:?}");
        }
    }
}
