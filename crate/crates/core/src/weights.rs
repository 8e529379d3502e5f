//! Weight polygons for line triples.
//!
//! A triple `x` and a parameter `η ∈ (0, 1]` cut out a convex polygon in the
//! plane `t₁ + t₂ + t₃ = 0`, written in the coordinates `(t₁, t₂)`. The weight
//! of `x` is `min(1/area, 1)`.

use num_traits::ToPrimitive;
use serde::Serialize;
use thiserror::Error;

use crate::heights::TriangleTriple;
use crate::lattice::gram_determinant;

pub const BOX_SIDE: f64 = 1.0e6;
pub const COLLINEAR_TOL: f64 = 1.0e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("weight polytope infeasible by convention (eta = {0} > 1)")]
    EtaTooLarge(f64),
    #[error("eta must be positive, got {0}")]
    EtaNotPositive(f64),
}

/// `a·t₁ + b·t₂ ≥ c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HalfPlane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl HalfPlane {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        assert!(a != 0.0 || b != 0.0, "half-plane needs a nonzero normal");
        Self { a, b, c }
    }

    fn slack(&self, p: (f64, f64)) -> f64 {
        self.a * p.0 + self.b * p.1 - self.c
    }

    pub fn contains(&self, p: (f64, f64)) -> bool {
        self.slack(p) >= 0.0
    }
}

/// Convex polygon, vertices counter-clockwise.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Polygon {
    pub vertices: Vec<(f64, f64)>,
}

impl Polygon {
    pub fn square(half_side: f64) -> Self {
        let h = half_side;
        Self {
            vertices: vec![(-h, -h), (h, -h), (h, h), (-h, h)],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn area(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let n = self.vertices.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let (x0, y0) = self.vertices[i];
                let (x1, y1) = self.vertices[(i + 1) % n];
                x0 * y1 - x1 * y0
            })
            .sum();
        (twice / 2.0).abs()
    }

    /// Sutherland–Hodgman step against a single half-plane.
    pub fn clip(&self, h: &HalfPlane) -> Self {
        let n = self.vertices.len();
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let (sp, sq) = (h.slack(p), h.slack(q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
            }
        }
        let mut poly = Self { vertices: out };
        poly.simplify();
        poly
    }

    /// Drops repeated and collinear vertices.
    fn simplify(&mut self) {
        let scale = self
            .vertices
            .iter()
            .map(|p| p.0.abs().max(p.1.abs()))
            .fold(1.0, f64::max);
        let tol = COLLINEAR_TOL * scale;
        let mut changed = true;
        while changed && self.vertices.len() >= 3 {
            changed = false;
            let n = self.vertices.len();
            for i in 0..n {
                let a = self.vertices[(i + n - 1) % n];
                let b = self.vertices[i];
                let c = self.vertices[(i + 1) % n];
                let cross = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
                let span = ((c.0 - a.0).powi(2) + (c.1 - a.1).powi(2)).sqrt().max(tol);
                let dup = (b.0 - a.0).abs() <= tol && (b.1 - a.1).abs() <= tol;
                if dup || cross.abs() / span <= tol {
                    self.vertices.remove(i);
                    changed = true;
                    break;
                }
            }
        }
        if self.vertices.len() < 3 {
            self.vertices.clear();
        }
    }
}

/// Intersection of the bounding box with every half-plane.
pub fn clip_all(planes: &[HalfPlane]) -> Polygon {
    planes
        .iter()
        .fold(Polygon::square(BOX_SIDE / 2.0), |poly, h| {
            if poly.is_empty() {
                poly
            } else {
                poly.clip(h)
            }
        })
}

pub fn polygon_area(planes: &[HalfPlane]) -> f64 {
    clip_all(planes).area()
}

/// Nonempty proper subsets of {1,2,3} as bitmasks, in the order used by
/// [`omega_constraints`].
pub const SUBSETS: [u8; 6] = [0b001, 0b010, 0b100, 0b011, 0b101, 0b110];

fn check_eta(eta: f64) -> Result<(), WeightError> {
    if eta.is_nan() || eta <= 0.0 {
        return Err(WeightError::EtaNotPositive(eta));
    }
    if eta > 1.0 {
        return Err(WeightError::EtaTooLarge(eta));
    }
    Ok(())
}

/// The six constraints `Σ_{i∈I} tᵢ ≥ −ln‖Λ_I‖ + ln η`, with `t₃ = −t₁ − t₂`.
pub fn omega_constraints(t: &TriangleTriple, eta: f64) -> Result<Vec<HalfPlane>, WeightError> {
    check_eta(eta)?;
    let vs = t.vectors();
    Ok(SUBSETS
        .iter()
        .map(|&set| {
            let picked: Vec<_> = (0..3)
                .filter(|i| set & (1 << i) != 0)
                .map(|i| vs[i].clone())
                .collect();
            let cov_sq = gram_determinant(&picked)
                .unwrap()
                .to_f64()
                .expect("covolume fits in f64");
            let has = |i: u8| f64::from(set & (1 << i) != 0);
            HalfPlane::new(
                has(0) - has(2),
                has(1) - has(2),
                -0.5 * cov_sq.ln() + eta.ln(),
            )
        })
        .collect())
}

pub fn weight_polygon(t: &TriangleTriple, eta: f64) -> Result<Polygon, WeightError> {
    Ok(clip_all(&omega_constraints(t, eta)?))
}

pub fn weight_from_area(area: f64) -> f64 {
    if area <= 0.0 {
        1.0
    } else {
        (1.0 / area).min(1.0)
    }
}

pub fn weight(t: &TriangleTriple, eta: f64) -> Result<f64, WeightError> {
    Ok(weight_from_area(weight_polygon(t, eta)?.area()))
}
