//! Browser bindings for the demo page in `www/`.
//!
//! Each exported function takes plain numbers or strings and returns a JSON
//! string, so the page needs no generated type glue beyond `JSON.parse`.

use num_bigint::BigInt;
use num_rational::BigRational;
use serde_json::json;
use wasm_bindgen::prelude::*;

use orbitcount::clemens::{self, PresetParams};
use orbitcount::enumerators::{self, ExampleParams};
use orbitcount::heights::{QuadricPairInstance, TriangleTriple};
use orbitcount::weights;

/// Largest R the page may request from `census_json`.
pub const DEMO_R_MAX: u32 = 60;

/// Weight polygon of three integer vectors given as nine comma-separated entries.
#[wasm_bindgen]
pub fn weight_polygon_json(entries: &str, eta: f64) -> Result<String, String> {
    let xs: Vec<i64> = entries
        .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("not an integer: '{s}'")))
        .collect::<Result<_, _>>()?;
    if xs.len() != 9 {
        return Err(format!("expected 9 integers, got {}", xs.len()));
    }
    let mut m = [[0i64; 3]; 3];
    for (k, x) in xs.into_iter().enumerate() {
        m[k / 3][k % 3] = x;
    }
    let t = TriangleTriple::from_i64(m).map_err(|e| e.to_string())?;
    let poly = weights::weight_polygon(&t, eta).map_err(|e| e.to_string())?;
    let area = poly.area();
    Ok(json!({
        "vertices": poly.vertices,
        "area": area,
        "weight": weights::weight_from_area(area),
        "eta": eta,
    })
    .to_string())
}

/// Predicted growth law for one of the three preset families.
#[wasm_bindgen]
pub fn predict_json(example: &str, n: u32, lambda1: u32, lambda2: u32, kappa1: u32, kappa2: u32) -> Result<String, String> {
    let p = PresetParams { n, lambda1, lambda2, kappa1, kappa2 };
    let model = clemens::preset(example, &p).map_err(|e| e.to_string())?;
    let pred = clemens::predict(&model).map_err(|e| e.to_string())?;
    Ok(pred.to_json().to_string())
}

/// Counts at R = 1..=r_max on a single thread, for a small growth plot.
#[wasm_bindgen]
pub fn census_json(example: &str, n: u32, lambda1: u32, lambda2: u32, r_max: u32) -> Result<String, String> {
    if !(1..=DEMO_R_MAX).contains(&r_max) {
        return Err(format!("R must be between 1 and {DEMO_R_MAX}"));
    }
    let params = match example {
        "ex1" => ExampleParams::Ex1 { inst: QuadricPairInstance::default() },
        "ex2" => ExampleParams::Ex2 { n, lambda1, lambda2 },
        "ex3" => ExampleParams::Ex3 { kappa1: lambda1, kappa2: lambda2, eta: 0.5 },
        other => return Err(format!("unknown example '{other}'")),
    };
    let mut rows = Vec::new();
    for r in 1..=r_max {
        let res = enumerators::count(&params, &BigRational::from_integer(BigInt::from(r)), 1, None)
            .map_err(|e| e.to_string())?;
        rows.push(json!({"r": r, "count": res.count, "weighted": res.weighted}));
    }
    Ok(json!({"example": example, "rows": rows}).to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn standard_basis_polygon() {
        let v: Value = serde_json::from_str(&weight_polygon_json("1 0 0, 0 1 0, 0 0 1", 0.5).unwrap()).unwrap();
        let l = 2f64.ln();
        assert!((v["area"].as_f64().unwrap() - 3.0 * l * l).abs() < 1e-9);
        assert!(weight_polygon_json("1,2,3", 0.5).is_err());
        assert!(weight_polygon_json("1,0,0,0,1,0,1,1,0", 0.5).is_err());
    }

    #[test]
    fn predictions() {
        let v: Value = serde_json::from_str(&predict_json("ex3", 2, 1, 1, 1, 1).unwrap()).unwrap();
        assert_eq!(v["a"], "8/3");
        assert!(predict_json("ex9", 2, 1, 1, 1, 1).is_err());
    }

    #[test]
    fn census_rows() {
        let v: Value = serde_json::from_str(&census_json("ex2", 2, 1, 2, 4).unwrap()).unwrap();
        let counts: Vec<u64> = v["rows"].as_array().unwrap().iter().map(|r| r["count"].as_u64().unwrap()).collect();
        assert_eq!(counts, [6, 78, 246, 366]);
        assert!(census_json("ex2", 2, 1, 1, 500).is_err());
    }
}
