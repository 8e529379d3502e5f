//! Growth-law predictor driven by boundary divisor data.
//!
//! Each boundary component carries the pole order `d` of the invariant form
//! and the multiplicity `λ` of the height. The exponent is
//! `a = max (d − 1)/λ` over components with `λ > 0`, and `b` is the size of
//! the largest face of the intersection complex made only of components
//! attaining `a`. Component indices are 1-based in every external format.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClemensError {
    #[error("height not proper on boundary: no component has lambda > 0")]
    NotProper,
    #[error("component {0}: lambda must be nonnegative")]
    NegativeLambda(String),
    #[error("face {face:?} refers to component {index}, but there are {count} components")]
    BadIndex {
        face: Vec<usize>,
        index: usize,
        count: usize,
    },
    #[error("face {0:?} is empty or repeats an index")]
    BadFace(Vec<usize>),
    #[error("unknown example '{0}' (expected ex1, ex2 or ex3)")]
    UnknownExample(String),
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("cannot read model: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model: {0}")]
    Parse(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Component {
    pub name: String,
    pub d: i64,
    pub lambda: BigRational,
}

impl Component {
    pub fn new(name: &str, d: i64, lambda: BigRational) -> Self {
        Self {
            name: name.to_string(),
            d,
            lambda,
        }
    }

    /// `(d − 1)/λ`, or `None` when `λ = 0`.
    pub fn ratio(&self) -> Option<BigRational> {
        self.lambda
            .is_positive()
            .then(|| BigRational::from_integer(BigInt::from(self.d - 1)) / &self.lambda)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DivisorModel {
    components: Vec<Component>,
    faces: BTreeSet<BTreeSet<usize>>,
    b_set: BTreeSet<usize>,
}

impl DivisorModel {
    /// `faces` and `b_set` use 1-based indices. Faces may be given as maximal
    /// faces only; every subset (and every singleton) is added.
    pub fn new(
        components: Vec<Component>,
        faces: &[Vec<usize>],
        b_set: &[usize],
    ) -> Result<Self, ClemensError> {
        let count = components.len();
        for c in &components {
            if c.lambda.is_negative() {
                return Err(ClemensError::NegativeLambda(c.name.clone()));
            }
        }
        let check = |face: &[usize]| -> Result<BTreeSet<usize>, ClemensError> {
            let set: BTreeSet<usize> = face.iter().copied().collect();
            if set.is_empty() || set.len() != face.len() {
                return Err(ClemensError::BadFace(face.to_vec()));
            }
            if let Some(&index) = face.iter().find(|&&i| i == 0 || i > count) {
                return Err(ClemensError::BadIndex {
                    face: face.to_vec(),
                    index,
                    count,
                });
            }
            Ok(set.into_iter().map(|i| i - 1).collect())
        };
        let mut closed = BTreeSet::new();
        for i in 0..count {
            closed.insert(BTreeSet::from([i]));
        }
        for face in faces {
            let face = check(face)?;
            let items: Vec<usize> = face.into_iter().collect();
            for mask in 1u64..(1u64 << items.len()) {
                let sub = items
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask & (1 << k) != 0)
                    .map(|(_, &i)| i)
                    .collect();
                closed.insert(sub);
            }
        }
        let b = if b_set.is_empty() {
            BTreeSet::new()
        } else {
            check(b_set)?
        };
        Ok(Self {
            components,
            faces: closed,
            b_set: b,
        })
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// All faces, 0-based.
    pub fn faces(&self) -> &BTreeSet<BTreeSet<usize>> {
        &self.faces
    }

    pub fn b_set(&self) -> &BTreeSet<usize> {
        &self.b_set
    }

    pub fn ratios(&self) -> Vec<Option<BigRational>> {
        self.components.iter().map(Component::ratio).collect()
    }

    pub fn with_component(mut self, c: Component) -> Self {
        let i = self.components.len();
        self.components.push(c);
        self.faces.insert(BTreeSet::from([i]));
        self
    }

    pub fn scaled(&self, s: &BigRational) -> Self {
        let mut out = self.clone();
        for c in &mut out.components {
            c.lambda = &c.lambda * s;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Focusing {
    Yes,
    No,
    NotApplicable,
}

impl Serialize for Focusing {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Focusing::Yes => s.serialize_bool(true),
            Focusing::No => s.serialize_bool(false),
            Focusing::NotApplicable => s.serialize_str("n/a"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrowthPrediction {
    pub a: BigRational,
    pub b: usize,
    /// 0-based.
    pub attaining: BTreeSet<usize>,
    pub focusing: Focusing,
    pub law: String,
}

impl GrowthPrediction {
    /// A prediction with no component data, for fitting against a bare law.
    pub fn bare(a: BigRational, b: usize) -> Self {
        let law = render_law(&a, b);
        Self {
            a,
            b,
            attaining: BTreeSet::new(),
            focusing: Focusing::NotApplicable,
            law,
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::json!({
            "a": rational_string(&self.a),
            "b": self.b,
            "attaining": self.attaining.iter().map(|i| i + 1).collect::<Vec<_>>(),
            "focusing": self.focusing,
            "law": self.law,
        })
    }
}

impl fmt::Display for GrowthPrediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.law)
    }
}

pub fn rational_string(q: &BigRational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

fn render_law(a: &BigRational, b: usize) -> String {
    if a.is_zero() {
        return match b {
            1 => "c·log R".to_string(),
            _ => format!("c·(log R)^{b}"),
        };
    }
    let power = if a.denom().is_one() {
        format!("R^{}", a.numer())
    } else {
        format!("R^({})", rational_string(a))
    };
    match b {
        0 | 1 => format!("c·{power}"),
        2 => format!("c·{power}·log R"),
        _ => format!("c·{power}·(log R)^{}", b - 1),
    }
}

pub fn predict(m: &DivisorModel) -> Result<GrowthPrediction, ClemensError> {
    let ratios = m.ratios();
    let a = ratios
        .iter()
        .flatten()
        .max()
        .cloned()
        .ok_or(ClemensError::NotProper)?;
    let attaining: BTreeSet<usize> = ratios
        .iter()
        .enumerate()
        .filter(|(_, r)| r.as_ref() == Some(&a))
        .map(|(i, _)| i)
        .collect();
    let inside: Vec<&BTreeSet<usize>> = m
        .faces
        .iter()
        .filter(|f| f.is_subset(&attaining))
        .collect();
    let b = inside.iter().map(|f| f.len()).max().unwrap_or(1);
    let focusing = if m.b_set.is_empty() {
        Focusing::NotApplicable
    } else if inside
        .iter()
        .filter(|f| f.len() == b)
        .any(|f| !f.is_disjoint(&m.b_set))
    {
        Focusing::No
    } else {
        Focusing::Yes
    };
    let law = render_law(&a, b);
    Ok(GrowthPrediction {
        a,
        b,
        attaining,
        focusing,
        law,
    })
}

fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn preset_ex1() -> DivisorModel {
    let names = ["E1", "D210", "E3^2", "(E2^2)+", "E3^1", "(E2^1)+", "E3^0", "D022"];
    let d = [2, 1, 3, 5, 3, 7, 5, 3];
    let lambda = [1, 1, 2, 3, 1, 3, 2, 1];
    let components = (0..8)
        .map(|i| Component::new(names[i], d[i], int(lambda[i])))
        .collect();
    let faces: Vec<Vec<usize>> = (2..8).map(|i| vec![1, i, i + 1]).collect();
    DivisorModel::new(components, &faces, &[]).unwrap()
}

pub fn preset_ex2(n: u32, lambda1: u32, lambda2: u32) -> Result<DivisorModel, ClemensError> {
    if n == 0 || lambda1 == 0 || lambda2 == 0 {
        return Err(ClemensError::BadParam(
            "n, lambda1 and lambda2 must be positive".into(),
        ));
    }
    let d = i64::from(n) + 1;
    DivisorModel::new(
        vec![
            Component::new("D1", d, int(lambda1.into())),
            Component::new("D2", d, int(lambda2.into())),
        ],
        &[vec![1, 2]],
        &[],
    )
}

pub fn preset_ex3(kappa1: u32, kappa2: u32) -> Result<DivisorModel, ClemensError> {
    if kappa1 == 0 || kappa2 == 0 {
        return Err(ClemensError::BadParam("kappa1 and kappa2 must be positive".into()));
    }
    let (k1, k2) = (i64::from(kappa1), i64::from(kappa2));
    let mid = int(k1 + k2);
    DivisorModel::new(
        vec![
            Component::new("E", 9, int(3 * k1)),
            Component::new("D12,3", 6, mid.clone()),
            Component::new("D23,1", 6, mid.clone()),
            Component::new("D13,2", 6, mid),
            Component::new("(D2_123)+", 9, int(3 * k2)),
        ],
        &[vec![1, 2, 5], vec![1, 3, 5], vec![1, 4, 5]],
        &[1, 5],
    )
}

/// Parameters understood by [`preset`]; unused fields are ignored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PresetParams {
    pub n: u32,
    pub lambda1: u32,
    pub lambda2: u32,
    pub kappa1: u32,
    pub kappa2: u32,
}

impl Default for PresetParams {
    fn default() -> Self {
        Self {
            n: 2,
            lambda1: 1,
            lambda2: 1,
            kappa1: 1,
            kappa2: 1,
        }
    }
}

pub fn preset(example: &str, p: &PresetParams) -> Result<DivisorModel, ClemensError> {
    match example.to_ascii_lowercase().as_str() {
        "ex1" => Ok(preset_ex1()),
        "ex2" => preset_ex2(p.n, p.lambda1, p.lambda2),
        "ex3" => preset_ex3(p.kappa1, p.kappa2),
        other => Err(ClemensError::UnknownExample(other.to_string())),
    }
}

#[derive(Deserialize)]
struct ModelFile {
    components: Vec<ComponentFile>,
    #[serde(default)]
    faces: Vec<Vec<usize>>,
    #[serde(default)]
    b_set: Vec<usize>,
}

#[derive(Deserialize)]
struct ComponentFile {
    name: String,
    d: i64,
    lambda: Value,
}

pub fn parse_rational(s: &str) -> Option<BigRational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((p, q)) => {
            let p: BigInt = p.trim().parse().ok()?;
            let q: BigInt = q.trim().parse().ok()?;
            (!q.is_zero()).then(|| BigRational::new(p, q))
        }
        None => {
            if let Some((whole, frac)) = s.split_once('.') {
                let neg = whole.starts_with('-');
                let digits = format!("{}{}", whole.trim_start_matches('-'), frac);
                let mut p: BigInt = digits.parse().ok()?;
                if neg {
                    p = -p;
                }
                let q = num_traits::pow(BigInt::from(10), frac.len());
                Some(BigRational::new(p, q))
            } else {
                Some(BigRational::from_integer(s.parse().ok()?))
            }
        }
    }
}

pub fn parse_model(text: &str) -> Result<DivisorModel, ClemensError> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| ClemensError::Parse(e.to_string()))?;
    let mut components = Vec::with_capacity(file.components.len());
    for c in file.components {
        let lambda = match &c.lambda {
            Value::String(s) => parse_rational(s),
            Value::Number(n) => n.as_i64().map(int),
            _ => None,
        }
        .ok_or_else(|| {
            ClemensError::Parse(format!("component {}: lambda must be \"p/q\"", c.name))
        })?;
        components.push(Component::new(&c.name, c.d, lambda));
    }
    DivisorModel::new(components, &file.faces, &file.b_set)
}

pub fn load_model(path: &Path) -> Result<DivisorModel, ClemensError> {
    parse_model(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn ex1_table_and_law() {
        let m = preset_ex1();
        let r: Vec<_> = m.ratios().into_iter().map(Option::unwrap).collect();
        let expected = [q(1, 1), q(0, 1), q(1, 1), q(4, 3), q(2, 1), q(2, 1), q(2, 1), q(2, 1)];
        assert_eq!(r, expected);
        let p = predict(&m).unwrap();
        assert_eq!((p.a.clone(), p.b), (q(2, 1), 2));
        assert_eq!(p.attaining, BTreeSet::from([4, 5, 6, 7]));
        assert_eq!(p.focusing, Focusing::NotApplicable);
        assert_eq!(p.law, "c·R^2·log R");
    }

    #[test]
    fn ex2_cases() {
        let p = predict(&preset_ex2(2, 1, 2).unwrap()).unwrap();
        assert_eq!((p.a, p.b), (q(2, 1), 1));
        let p = predict(&preset_ex2(3, 2, 2).unwrap()).unwrap();
        assert_eq!((p.a, p.b), (q(3, 2), 2));
        assert!(preset_ex2(0, 1, 1).is_err());
    }

    #[test]
    fn ex3_cases() {
        let m = preset_ex3(1, 1).unwrap();
        let lambdas: Vec<_> = m.components().iter().map(|c| c.lambda.clone()).collect();
        assert_eq!(lambdas, vec![q(3, 1), q(2, 1), q(2, 1), q(2, 1), q(3, 1)]);
        let p = predict(&m).unwrap();
        assert_eq!((p.a.clone(), p.b), (q(8, 3), 2));
        assert_eq!(p.focusing, Focusing::No);
        assert_eq!(p.law, "c·R^(8/3)·log R");
        let p = predict(&preset_ex3(1, 2).unwrap()).unwrap();
        assert_eq!((p.a, p.b), (q(8, 3), 1));
        assert_eq!(p.attaining, BTreeSet::from([0]));
    }

    #[test]
    fn focusing_when_middle_components_win() {
        let comps = vec![
            Component::new("E", 9, q(8, 1)),
            Component::new("A", 6, q(1, 1)),
            Component::new("B", 6, q(1, 1)),
            Component::new("C", 6, q(1, 1)),
            Component::new("F", 9, q(8, 1)),
        ];
        let m = DivisorModel::new(comps, &[vec![1, 2, 5], vec![1, 3, 5], vec![1, 4, 5]], &[1, 5])
            .unwrap();
        let p = predict(&m).unwrap();
        assert_eq!((p.a, p.b), (q(5, 1), 1));
        assert_eq!(p.focusing, Focusing::Yes);
    }

    #[test]
    fn no_proper_component() {
        let m = DivisorModel::new(vec![Component::new("X", 3, q(0, 1))], &[], &[]).unwrap();
        assert!(matches!(predict(&m), Err(ClemensError::NotProper)));
    }

    #[test]
    fn zero_exponent_law() {
        let m = DivisorModel::new(
            vec![Component::new("X", 1, q(1, 1)), Component::new("Y", 1, q(2, 1))],
            &[vec![1, 2]],
            &[],
        )
        .unwrap();
        let p = predict(&m).unwrap();
        assert_eq!(p.law, "c·(log R)^2");
    }

    #[test]
    fn model_file_round_trip() {
        let text = r#"{"components":[{"name":"A","d":3,"lambda":"1/2"},{"name":"B","d":5,"lambda":"1"}],
                       "faces":[[1,2]],"b_set":[2]}"#;
        let m = parse_model(text).unwrap();
        assert_eq!(m.faces().len(), 3);
        let p = predict(&m).unwrap();
        assert_eq!((p.a, p.b), (q(4, 1), 2));
        assert_eq!(p.focusing, Focusing::No);
        assert!(matches!(
            parse_model(r#"{"components":[{"name":"A","d":3,"lambda":"1"}],"faces":[[1,2]]}"#),
            Err(ClemensError::BadIndex { .. })
        ));
        assert!(parse_model(r#"{"components":[{"name":"A","d":3,"lambda":"x"}]}"#).is_err());
    }

    #[test]
    fn rationals_parse() {
        assert_eq!(parse_rational("3/6"), Some(q(1, 2)));
        assert_eq!(parse_rational("-2.25"), Some(q(-9, 4)));
        assert_eq!(parse_rational("7"), Some(q(7, 1)));
        assert_eq!(parse_rational("1/0"), None);
    }

    fn small_model() -> impl Strategy<Value = DivisorModel> {
        (
            proptest::collection::vec((1i64..10, 1i64..6, 1i64..4), 1..6),
            proptest::collection::vec(proptest::collection::btree_set(1usize..6, 1..4), 0..5),
        )
            .prop_map(|(comps, faces)| {
                let n = comps.len();
                let components = comps
                    .iter()
                    .enumerate()
                    .map(|(i, &(d, p, s))| Component::new(&format!("C{i}"), d, q(p, s)))
                    .collect();
                let faces: Vec<Vec<usize>> = faces
                    .into_iter()
                    .map(|f| f.into_iter().filter(|&i| i <= n).collect::<Vec<_>>())
                    .filter(|f: &Vec<usize>| !f.is_empty())
                    .collect();
                DivisorModel::new(components, &faces, &[1]).unwrap()
            })
    }

    proptest! {
        #[test]
        fn rescaling_lambdas(m in small_model(), sn in 1i64..7, sd in 1i64..7) {
            let s = q(sn, sd);
            let p = predict(&m).unwrap();
            let r = predict(&m.scaled(&s)).unwrap();
            prop_assert_eq!(r.a, p.a / s);
            prop_assert_eq!(r.b, p.b);
            prop_assert_eq!(r.attaining, p.attaining);
            prop_assert_eq!(r.focusing, p.focusing);
        }

        #[test]
        fn ratio_zero_component_is_inert(m in small_model(), l in 1i64..5) {
            let p = predict(&m).unwrap();
            prop_assume!(p.a.is_positive());
            let r = predict(&m.with_component(Component::new("Z", 1, q(l, 1)))).unwrap();
            prop_assert_eq!((r.a, r.b), (p.a, p.b));
        }
    }
}
