//! R-ladders, CSV persistence, growth-law fits and run reports.

use std::collections::BTreeMap;
use std::time::Instant;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::clemens::{parse_rational, rational_string, GrowthPrediction};
use crate::enumerators::{self, oracle, CensusRow, CensusValue, EnumError, ExampleParams};
use crate::heights::QuadricPairInstance;

pub const DEFAULT_TOLERANCE: f64 = 0.15;
pub const VALUE_FLOOR: f64 = 30.0;
pub const CSV_HEADER: &str = "R,value,points_scanned,seconds";
pub const CONFIG_KEYS: [&str; 14] = [
    "example", "n", "lambda1", "lambda2", "kappa1", "kappa2", "eta", "r_min", "r_max", "steps",
    "workers", "tolerance", "oracle_box", "instance",
];

#[derive(Debug, Error)]
pub enum CensusError {
    #[error(transparent)]
    Enum(#[from] EnumError),
    #[error("config: {0}")]
    Config(String),
    #[error("csv line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("oracle disagrees at R = {r}: fast {fast}, oracle {oracle}")]
    OracleMismatch { r: String, fast: u64, oracle: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LadderConfig {
    pub params: ExampleParams,
    pub r_min: BigRational,
    pub r_max: BigRational,
    pub steps: usize,
    pub workers: usize,
    pub tolerance: f64,
    /// Rows whose complete oracle box fits within this bound are cross-checked.
    pub oracle_box: Option<i64>,
}

impl LadderConfig {
    pub fn new(params: ExampleParams, r_min: BigRational, r_max: BigRational, steps: usize) -> Self {
        Self {
            params,
            r_min,
            r_max,
            steps,
            workers: 1,
            tolerance: DEFAULT_TOLERANCE,
            oracle_box: None,
        }
    }

    pub fn validate(&self) -> Result<(), CensusError> {
        if self.r_min < BigRational::one() {
            return Err(CensusError::Config(format!("r_min must be ≥ 1, got {}", rational_string(&self.r_min))));
        }
        if self.r_max <= self.r_min {
            return Err(CensusError::Config("r_max must exceed r_min".into()));
        }
        if self.steps < 4 {
            return Err(CensusError::Config(format!("steps must be ≥ 4, got {}", self.steps)));
        }
        if self.workers == 0 {
            return Err(CensusError::Config("workers must be ≥ 1".into()));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(CensusError::Config("tolerance must be ≥ 0".into()));
        }
        self.params.validate()?;
        Ok(())
    }

    /// Geometric ladder rounded to multiples of 1/1000, endpoints exact.
    pub fn ladder(&self) -> Vec<BigRational> {
        let lo = self.r_min.to_f64().unwrap();
        let hi = self.r_max.to_f64().unwrap();
        let mut out: Vec<BigRational> = Vec::with_capacity(self.steps);
        for k in 0..self.steps {
            let r = if k == 0 {
                self.r_min.clone()
            } else if k + 1 == self.steps {
                self.r_max.clone()
            } else {
                let x = lo * (hi / lo).powf(k as f64 / (self.steps - 1) as f64);
                BigRational::new(BigInt::from((x * 1000.0).round() as i64), BigInt::from(1000))
            };
            if out.last().is_none_or(|p| *p < r) {
                out.push(r);
            }
        }
        out
    }
}

/// Runs the matching enumerator at every `R`.
pub fn run_rs(
    params: &ExampleParams,
    rs: &[BigRational],
    workers: usize,
    oracle_box: Option<i64>,
) -> Result<Vec<CensusRow>, CensusError> {
    let mut rows = Vec::with_capacity(rs.len());
    for r in rs {
        let t0 = Instant::now();
        let res = enumerators::count(params, r, workers, None)?;
        let seconds = t0.elapsed().as_secs_f64();
        if let Some(limit) = oracle_box {
            let b = oracle::required_box(params, r)?.max(1);
            if b <= limit && oracle::work_estimate(params, b) <= oracle::WORK_LIMIT {
                let o = oracle::oracle_scan(params, r, b)?;
                if o != res.count {
                    return Err(CensusError::OracleMismatch {
                        r: rational_string(r),
                        fast: res.count,
                        oracle: o,
                    });
                }
            }
        }
        let value = match res.weighted {
            Some(w) => CensusValue::Weighted(w),
            None => CensusValue::Count(res.count),
        };
        rows.push(CensusRow {
            r: r.clone(),
            value,
            points_scanned: res.points_scanned,
            seconds,
        });
    }
    Ok(rows)
}

pub fn run_ladder(cfg: &LadderConfig) -> Result<Vec<CensusRow>, CensusError> {
    cfg.validate()?;
    run_rs(&cfg.params, &cfg.ladder(), cfg.workers, cfg.oracle_box)
}

// ---------------------------------------------------------------------------
// CSV

/// Terminating decimal when the denominator allows it, `p/q` otherwise.
pub fn format_r(r: &BigRational) -> String {
    let mut d = r.denom().clone();
    let (two, five) = (BigInt::from(2), BigInt::from(5));
    let mut places = 0usize;
    let (mut twos, mut fives) = (0usize, 0usize);
    while d.is_even() {
        d /= &two;
        twos += 1;
    }
    while (&d % &five).is_zero() {
        d /= &five;
        fives += 1;
    }
    if !d.is_one() {
        return rational_string(r);
    }
    places += twos.max(fives);
    if places == 0 {
        return r.numer().to_string();
    }
    let scaled = (r * BigRational::from_integer(num_traits::pow(BigInt::from(10), places))).to_integer();
    let neg = scaled.is_negative();
    let digits = scaled.abs().to_string();
    let digits = format!("{digits:0>width$}", width = places + 1);
    let (int, frac) = digits.split_at(digits.len() - places);
    format!("{}{int}.{frac}", if neg { "-" } else { "" })
}

/// Decimal with 15 significant digits.
pub fn format_weighted(x: f64) -> String {
    if x == 0.0 {
        return format!("{:.14}", 0.0);
    }
    let mag = x.abs().log10().floor() as i32;
    let places = (14 - mag).max(0) as usize;
    let s = format!("{x:.places$}");
    // Rounding can carry into a new leading digit.
    let reparsed: f64 = s.parse().unwrap();
    if reparsed.abs() >= 10f64.powi(mag + 1) && places > 0 {
        format!("{x:.prec$}", prec = places - 1)
    } else {
        s
    }
}

pub fn format_value(v: &CensusValue) -> String {
    match v {
        CensusValue::Count(c) => c.to_string(),
        CensusValue::Weighted(w) => format_weighted(*w),
    }
}

/// CSV text; with `timing` off the seconds column is written as `0`, which
/// makes files from repeated runs byte-identical.
pub fn write_csv(rows: &[CensusRow], timing: bool) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let secs = if timing { format!("{:.3}", row.seconds) } else { "0".into() };
        out.push_str(&format!(
            "{},{},{},{}\n",
            format_r(&row.r),
            format_value(&row.value),
            row.points_scanned,
            secs
        ));
    }
    out
}

pub fn read_csv(text: &str) -> Result<Vec<CensusRow>, CensusError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let err = |line: usize, msg: String| CensusError::Csv { line: line + 1, msg };
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        Some((i, h)) => return Err(err(i, format!("expected header '{CSV_HEADER}', got '{h}'"))),
        None => return Err(err(0, "empty file".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(err(i, format!("expected 4 fields, got {}", f.len())));
        }
        let r = parse_rational(f[0]).ok_or_else(|| err(i, format!("bad R '{}'", f[0])))?;
        let value = if f[1].contains(['.', 'e', 'E']) {
            CensusValue::Weighted(f[1].parse().map_err(|_| err(i, format!("bad value '{}'", f[1])))?)
        } else {
            CensusValue::Count(f[1].parse().map_err(|_| err(i, format!("bad value '{}'", f[1])))?)
        };
        let points_scanned = f[2].parse().map_err(|_| err(i, format!("bad points_scanned '{}'", f[2])))?;
        let seconds = f[3].parse().map_err(|_| err(i, format!("bad seconds '{}'", f[3])))?;
        rows.push(CensusRow {
            r,
            value,
            points_scanned,
            seconds,
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Fits

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "consistent")]
    Consistent,
    #[serde(rename = "inconsistent")]
    Inconsistent,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Consistent => "consistent",
            Self::Inconsistent => "inconsistent",
            Self::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub a_hat: f64,
    pub c_hat: f64,
    pub a_hat_nolog: f64,
    pub rss_with_log: f64,
    pub rss_without_log: f64,
    pub preferred_model: &'static str,
    pub prediction: GrowthPrediction,
    pub verdict: Verdict,
    pub rows_used: usize,
    pub tolerance: f64,
}

impl FitReport {
    pub fn fit_json(&self) -> Value {
        json!({
            "a_hat": self.a_hat,
            "c_hat": self.c_hat,
            "a_hat_nolog": self.a_hat_nolog,
            "rss_log": self.rss_with_log,
            "rss_nolog": self.rss_without_log,
            "preferred": self.preferred_model,
            "rows_used": self.rows_used,
            "tolerance": self.tolerance,
        })
    }
}

/// Least squares `y ≈ c + a·x`; returns (c, a, rss).
fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let a = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let c = my - a * mx;
    let rss = xs.iter().zip(ys).map(|(x, y)| (y - c - a * x).powi(2)).sum();
    (c, a, rss)
}

pub fn fit_growth(rows: &[CensusRow], prediction: &GrowthPrediction, tolerance: f64) -> FitReport {
    let mut sorted: Vec<&CensusRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.r.cmp(&b.r));
    let positive = sorted.iter().filter(|r| r.value.as_f64() >= 1.0).count();
    let top = &sorted[sorted.len() / 2..];
    let usable: Vec<(f64, f64)> = top
        .iter()
        .map(|r| (r.r.to_f64().unwrap(), r.value.as_f64()))
        .filter(|&(r, v)| r > 1.0 && v >= VALUE_FLOOR)
        .collect();
    let log_power = prediction.b.saturating_sub(1) as f64;
    let mut report = FitReport {
        a_hat: f64::NAN,
        c_hat: f64::NAN,
        a_hat_nolog: f64::NAN,
        rss_with_log: f64::NAN,
        rss_without_log: f64::NAN,
        preferred_model: "no-log",
        prediction: prediction.clone(),
        verdict: Verdict::Inconclusive,
        rows_used: usable.len(),
        tolerance,
    };
    let all_equal = usable.windows(2).all(|w| w[0].1 == w[1].1);
    if positive < 4 || usable.len() < 3 || all_equal {
        return report;
    }
    let xs: Vec<f64> = usable.iter().map(|(r, _)| r.ln()).collect();
    let ys: Vec<f64> = usable.iter().map(|(_, v)| v.ln()).collect();
    let ys_log: Vec<f64> = usable
        .iter()
        .map(|(r, v)| v.ln() - log_power * r.ln().ln())
        .collect();
    let (_, a0, rss0) = ols(&xs, &ys);
    let (c1, a1, rss1) = ols(&xs, &ys_log);
    report.a_hat = a1;
    report.c_hat = c1.exp();
    report.a_hat_nolog = a0;
    report.rss_with_log = rss1.max(0.0);
    report.rss_without_log = rss0.max(0.0);
    report.preferred_model = if rss1 < rss0 { "log" } else { "no-log" };
    let a = prediction.a.to_f64().unwrap();
    report.verdict = if (a1 - a).abs() <= tolerance {
        Verdict::Consistent
    } else {
        Verdict::Inconsistent
    };
    report
}

pub fn notes(params: &ExampleParams) -> Vec<String> {
    let mut notes = vec!["leading constant c is not estimated; only exponents are compared".to_string()];
    match params {
        ExampleParams::Ex1 { .. } => {}
        ExampleParams::Ex2 { .. } => {
            notes.push("pairs (v, ±w) counted with v signed and w up to sign".into());
        }
        ExampleParams::Ex3 { eta, .. } => {
            notes.push(format!(
                "weights use Lebesgue measure in (t1, t2) on t1 + t2 + t3 = 0, eta = {eta}"
            ));
            notes.push(
                "focusing threshold under the (d-1)/lambda rule is 8/5, not 4/3; the discrepancy is left open".into(),
            );
        }
    }
    notes
}

pub fn report_json(params: &ExampleParams, fit: &FitReport) -> Value {
    let mut prediction = fit.prediction.to_json();
    if let Some(m) = prediction.as_object_mut() {
        m.remove("attaining");
    }
    json!({
        "example": params.id(),
        "params": params.to_json(),
        "prediction": prediction,
        "fit": fit.fit_json(),
        "verdict": fit.verdict.as_str(),
        "notes": notes(params),
    })
}

// ---------------------------------------------------------------------------
// Config files

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CensusError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CensusError::Config(format!("line {}: expected key = value", i + 1)))?;
        let k = k.trim().to_string();
        if !CONFIG_KEYS.contains(&k.as_str()) {
            return Err(CensusError::Config(format!("line {}: unknown key '{k}'", i + 1)));
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

fn get<T: std::str::FromStr>(m: &BTreeMap<String, String>, k: &str, default: T) -> Result<T, CensusError> {
    match m.get(k) {
        None => Ok(default),
        Some(s) => s
            .parse()
            .map_err(|_| CensusError::Config(format!("bad value for {k}: '{s}'"))),
    }
}

fn get_rational(m: &BTreeMap<String, String>, k: &str, default: i64) -> Result<BigRational, CensusError> {
    match m.get(k) {
        None => Ok(BigRational::from_integer(default.into())),
        Some(s) => parse_rational(s).ok_or_else(|| CensusError::Config(format!("bad value for {k}: '{s}'"))),
    }
}

/// Example parameters from config keys, with the usual defaults.
pub fn params_from_map(m: &BTreeMap<String, String>) -> Result<ExampleParams, CensusError> {
    let example = m.get("example").map(String::as_str).unwrap_or("ex1");
    let params = match example.to_ascii_lowercase().as_str() {
        "ex1" => ExampleParams::Ex1 {
            inst: match m.get("instance").map(String::as_str).unwrap_or("default") {
                "default" => QuadricPairInstance::default(),
                "split" => QuadricPairInstance::split(),
                other => return Err(CensusError::Config(format!("unknown instance '{other}'"))),
            },
        },
        "ex2" => ExampleParams::Ex2 {
            n: get(m, "n", 2)?,
            lambda1: get(m, "lambda1", 1)?,
            lambda2: get(m, "lambda2", 1)?,
        },
        "ex3" => ExampleParams::Ex3 {
            kappa1: get(m, "kappa1", 1)?,
            kappa2: get(m, "kappa2", 1)?,
            eta: get(m, "eta", 0.5)?,
        },
        other => return Err(CensusError::Config(format!("unknown example '{other}'"))),
    };
    params.validate()?;
    Ok(params)
}

pub fn ladder_from_map(m: &BTreeMap<String, String>) -> Result<LadderConfig, CensusError> {
    let mut cfg = LadderConfig::new(
        params_from_map(m)?,
        get_rational(m, "r_min", 1)?,
        get_rational(m, "r_max", 100)?,
        get(m, "steps", 8)?,
    );
    cfg.workers = get(m, "workers", 1)?;
    cfg.tolerance = get(m, "tolerance", DEFAULT_TOLERANCE)?;
    cfg.oracle_box = m
        .get("oracle_box")
        .map(|s| s.parse().map_err(|_| CensusError::Config(format!("bad value for oracle_box: '{s}'"))))
        .transpose()?;
    cfg.validate()?;
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Plot support

/// Two whitespace-separated columns `R value`.
pub fn plot_data(rows: &[CensusRow]) -> String {
    let mut out = String::from("# R value\n");
    for r in rows {
        out.push_str(&format!("{} {}\n", r.r.to_f64().unwrap(), r.value.as_f64()));
    }
    out
}

/// A gnuplot script drawing the data on log–log axes with the fitted law.
pub fn plot_script(data_file: &str, fit: &FitReport) -> String {
    let b1 = fit.prediction.b.saturating_sub(1);
    let law = if b1 == 0 {
        format!("{:.6e} * x**{:.6}", fit.c_hat, fit.a_hat)
    } else {
        format!("{:.6e} * x**{:.6} * log(x)**{b1}", fit.c_hat, fit.a_hat)
    };
    format!(
        "set logscale xy\nset xlabel 'R'\nset ylabel 'count'\nset key left top\n\
         plot '{data_file}' using 1:2 with points title 'census', \\\n     {law} title 'fit {}'\n",
        fit.prediction.law
    )
}
