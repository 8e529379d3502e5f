use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_rational::BigRational;
use serde_json::json;

use orbitcount::census::{self, CensusError, LadderConfig, Verdict};
use orbitcount::chartforms::{self, PoleRow};
use orbitcount::clemens::{self, parse_rational, rational_string, GrowthPrediction, PresetParams};
use orbitcount::enumerators::{self, oracle, ExampleParams, JsonLinesSink, PointSink};
use orbitcount::heights::TriangleTriple;
use orbitcount::weights;

#[derive(Parser)]
#[command(name = "orbitcount", version, about = "Point counts of bounded height on three homogeneous varieties")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Predict the growth law from a divisor model.
    Predict {
        #[command(flatten)]
        ex: ExampleArgs,
        /// Divisor model JSON instead of a preset.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Count points of height at most R.
    Count {
        #[command(flatten)]
        ex: ExampleArgs,
        #[arg(long)]
        r: String,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Write accepted points as JSON lines.
        #[arg(long)]
        points: Option<PathBuf>,
    },
    /// Run a geometric R-ladder and write CSV.
    Ladder {
        #[command(flatten)]
        ex: ExampleArgs,
        #[command(flatten)]
        ladder: LadderArgs,
        /// CSV output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write 0 in the seconds column.
        #[arg(long)]
        no_timing: bool,
        /// Also fit and write a report JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Fit a CSV against the predicted law and print a report.
    Fit {
        #[command(flatten)]
        ex: ExampleArgs,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        tolerance: Option<f64>,
        /// Exit with status 2 when the verdict is "inconsistent".
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write `R value` columns for plotting.
        #[arg(long)]
        plot_data: Option<PathBuf>,
        /// Write a gnuplot script reading --plot-data.
        #[arg(long)]
        plot_script: Option<PathBuf>,
    },
    /// Pole orders of the invariant form along boundary divisors.
    Poles {
        /// ex1, ex2 or ex3.
        #[arg(long, conflicts_with = "chart")]
        example: Option<String>,
        /// Only this n for ex2 (default: 1..=5).
        #[arg(long)]
        n: Option<u32>,
        /// Chart-chain JSON file.
        #[arg(long)]
        chart: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Weight polygon of a line triple.
    Weight {
        /// Three vectors, e.g. "1,0,0;0,1,0;0,0,1".
        #[arg(long)]
        triple: String,
        #[arg(long, default_value_t = 0.5)]
        eta: f64,
    },
    /// Exhaustive box scan.
    Oracle {
        #[command(flatten)]
        ex: ExampleArgs,
        #[arg(long)]
        r: String,
        /// Box bound (default: smallest complete box for R).
        #[arg(long = "box")]
        box_bound: Option<i64>,
    },
}

#[derive(Args, Default)]
struct ExampleArgs {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// ex1, ex2 or ex3.
    #[arg(long)]
    example: Option<String>,
    #[arg(long)]
    n: Option<u32>,
    #[arg(long = "l1", alias = "lambda1")]
    lambda1: Option<u32>,
    #[arg(long = "l2", alias = "lambda2")]
    lambda2: Option<u32>,
    #[arg(long = "k1", alias = "kappa1")]
    kappa1: Option<u32>,
    #[arg(long = "k2", alias = "kappa2")]
    kappa2: Option<u32>,
    #[arg(long)]
    eta: Option<f64>,
    /// Quadric pair for ex1: default or split.
    #[arg(long)]
    instance: Option<String>,
}

#[derive(Args)]
struct LadderArgs {
    #[arg(long)]
    r_min: Option<String>,
    #[arg(long)]
    r_max: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Cross-check rows whose complete oracle box is at most this.
    #[arg(long)]
    oracle_box: Option<i64>,
}

/// Exit status plus message for failures.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: 1, msg: msg.into() }
    }
}

impl From<CensusError> for Failure {
    fn from(e: CensusError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<enumerators::EnumError> for Failure {
    fn from(e: enumerators::EnumError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(e.to_string())
    }
}

type Outcome = Result<u8, Failure>;

impl ExampleArgs {
    fn map(&self) -> Result<BTreeMap<String, String>, Failure> {
        let mut m = match &self.config {
            Some(p) => census::parse_config(&read(p)?)?,
            None => BTreeMap::new(),
        };
        let mut set = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        set("example", self.example.clone());
        set("n", self.n.map(|x| x.to_string()));
        set("lambda1", self.lambda1.map(|x| x.to_string()));
        set("lambda2", self.lambda2.map(|x| x.to_string()));
        set("kappa1", self.kappa1.map(|x| x.to_string()));
        set("kappa2", self.kappa2.map(|x| x.to_string()));
        set("eta", self.eta.map(|x| x.to_string()));
        set("instance", self.instance.clone());
        if !m.contains_key("example") {
            return Err(Failure::usage("missing --example (ex1, ex2 or ex3)"));
        }
        Ok(m)
    }

    fn params(&self) -> Result<ExampleParams, Failure> {
        Ok(census::params_from_map(&self.map()?)?)
    }
}

fn read(p: &Path) -> Result<String, Failure> {
    fs::read_to_string(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))
}

fn write(p: &Path, text: &str) -> Result<(), Failure> {
    fs::write(p, text).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))
}

fn rational_arg(flag: &str, s: &str) -> Result<BigRational, Failure> {
    parse_rational(s).ok_or_else(|| Failure::usage(format!("{flag}: not a rational number: '{s}'")))
}

fn prediction_for(params: &ExampleParams) -> Result<GrowthPrediction, Failure> {
    let mut p = PresetParams::default();
    match params {
        ExampleParams::Ex1 { .. } => {}
        ExampleParams::Ex2 { n, lambda1, lambda2 } => {
            p.n = *n;
            p.lambda1 = *lambda1;
            p.lambda2 = *lambda2;
        }
        ExampleParams::Ex3 { kappa1, kappa2, .. } => {
            p.kappa1 = *kappa1;
            p.kappa2 = *kappa2;
        }
    }
    let model = clemens::preset(params.id(), &p).map_err(|e| Failure::usage(e.to_string()))?;
    clemens::predict(&model).map_err(|e| Failure::usage(e.to_string()))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).unwrap());
}

fn cmd_predict(ex: &ExampleArgs, model: &Option<PathBuf>) -> Outcome {
    let pred = match model {
        Some(path) => {
            let m = clemens::load_model(path).map_err(|e| Failure::usage(format!("--model: {e}")))?;
            clemens::predict(&m).map_err(|e| Failure::usage(e.to_string()))?
        }
        None => prediction_for(&ex.params()?)?,
    };
    print_json(&pred.to_json());
    Ok(0)
}

fn cmd_count(ex: &ExampleArgs, r: &str, workers: usize, points: &Option<PathBuf>) -> Outcome {
    let params = ex.params()?;
    let r = rational_arg("--r", r)?;
    let t0 = Instant::now();
    let res = match points {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| Failure::usage(format!("--points: {e}")))?;
            let mut sink = JsonLinesSink(BufWriter::new(file));
            let res = enumerators::count(&params, &r, workers, Some(&mut sink as &mut dyn PointSink))?;
            sink.0.flush()?;
            res
        }
        None => enumerators::count(&params, &r, workers, None)?,
    };
    print_json(&json!({
        "example": params.id(),
        "params": params.to_json(),
        "R": rational_string(&r),
        "count": res.count,
        "weighted": res.weighted,
        "points_scanned": res.points_scanned,
        "seconds": t0.elapsed().as_secs_f64(),
    }));
    Ok(0)
}

fn ladder_config(ex: &ExampleArgs, la: &LadderArgs) -> Result<LadderConfig, Failure> {
    let mut m = ex.map()?;
    let mut set = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            m.insert(k.to_string(), v);
        }
    };
    set("r_min", la.r_min.clone());
    set("r_max", la.r_max.clone());
    set("steps", la.steps.map(|x| x.to_string()));
    set("workers", la.workers.map(|x| x.to_string()));
    set("tolerance", la.tolerance.map(|x| x.to_string()));
    set("oracle_box", la.oracle_box.map(|x| x.to_string()));
    Ok(census::ladder_from_map(&m)?)
}

fn cmd_ladder(ex: &ExampleArgs, la: &LadderArgs, out: &Option<PathBuf>, no_timing: bool, report: &Option<PathBuf>) -> Outcome {
    let cfg = ladder_config(ex, la)?;
    let rows = census::run_ladder(&cfg)?;
    let csv = census::write_csv(&rows, !no_timing);
    match out {
        Some(p) => write(p, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(p) = report {
        let fit = census::fit_growth(&rows, &prediction_for(&cfg.params)?, cfg.tolerance);
        write(p, &(serde_json::to_string_pretty(&census::report_json(&cfg.params, &fit)).unwrap() + "\n"))?;
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_fit(
    ex: &ExampleArgs,
    csv: &Path,
    tolerance: Option<f64>,
    strict: bool,
    report: &Option<PathBuf>,
    plot_data: &Option<PathBuf>,
    plot_script: &Option<PathBuf>,
) -> Outcome {
    let m = ex.map()?;
    let params = census::params_from_map(&m)?;
    let tol = match tolerance {
        Some(t) => t,
        None => m
            .get("tolerance")
            .map(|s| s.parse().map_err(|_| Failure::usage(format!("bad tolerance '{s}'"))))
            .transpose()?
            .unwrap_or(census::DEFAULT_TOLERANCE),
    };
    let rows = census::read_csv(&read(csv)?)?;
    let fit = census::fit_growth(&rows, &prediction_for(&params)?, tol);
    let j = census::report_json(&params, &fit);
    print_json(&j);
    if let Some(p) = report {
        write(p, &(serde_json::to_string_pretty(&j).unwrap() + "\n"))?;
    }
    if let Some(p) = plot_data {
        write(p, &census::plot_data(&rows))?;
    }
    if let Some(p) = plot_script {
        let data = plot_data
            .as_ref()
            .map(|d| d.display().to_string())
            .unwrap_or_else(|| "census.dat".into());
        write(p, &census::plot_script(&data, &fit))?;
    }
    Ok(if strict && fit.verdict == Verdict::Inconsistent { 2 } else { 0 })
}

fn cmd_poles(example: &Option<String>, n: Option<u32>, chart: &Option<PathBuf>, as_json: bool) -> Outcome {
    let rows: Vec<PoleRow> = match (example, chart) {
        (_, Some(path)) => {
            let (form, spec) = chartforms::parse_chart_file(&read(path)?).map_err(|e| Failure::usage(format!("--chart: {e}")))?;
            chartforms::run_charts(&form, &[spec]).map_err(|e| Failure::usage(e.to_string()))?
        }
        (Some(ex), None) => chartforms::run_preset(ex, n).map_err(|e| Failure::usage(format!("--example: {e}")))?,
        (None, None) => return Err(Failure::usage("poles needs --example or --chart")),
    };
    let checked = rows.iter().filter(|r| r.expected.is_some()).count();
    let matched = rows.iter().filter(|r| r.expected.is_some() && r.matches()).count();
    if as_json {
        print_json(&json!({"rows": rows, "checked": checked, "matched": matched}));
    } else {
        println!("{:<14} {:<12} {:<10} {:>5} {:>8}", "chart", "divisor", "locus", "pole", "expected");
        for r in &rows {
            let exp = r.expected.map(|e| e.to_string()).unwrap_or_else(|| "-".into());
            let mark = if r.matches() { "" } else { "  MISMATCH" };
            println!("{:<14} {:<12} {:<10} {:>5} {:>8}{mark}", r.chart, r.divisor, r.locus, r.computed, exp);
        }
        if checked > 0 {
            println!("{matched}/{checked} matches");
        }
    }
    Ok(if matched == checked { 0 } else { 2 })
}

fn parse_triple(s: &str) -> Result<[[i64; 3]; 3], Failure> {
    let bad = || Failure::usage(format!("--triple: expected \"a,b,c;d,e,f;g,h,i\", got '{s}'"));
    let parts: Vec<&str> = s.split(';').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = [[0i64; 3]; 3];
    for (row, part) in out.iter_mut().zip(parts) {
        let xs: Vec<i64> = part
            .split(',')
            .map(|x| x.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        if xs.len() != 3 {
            return Err(bad());
        }
        row.copy_from_slice(&xs);
    }
    Ok(out)
}

fn cmd_weight(triple: &str, eta: f64) -> Outcome {
    let t = TriangleTriple::from_i64(parse_triple(triple)?).map_err(|e| Failure::usage(format!("--triple: {e}")))?;
    let poly = weights::weight_polygon(&t, eta).map_err(|e| Failure::usage(format!("--eta: {e}")))?;
    let area = poly.area();
    print_json(&json!({
        "weight": weights::weight_from_area(area),
        "area": area,
        "eta": eta,
        "vertices": poly.vertices,
    }));
    Ok(0)
}

fn cmd_oracle(ex: &ExampleArgs, r: &str, box_bound: Option<i64>) -> Outcome {
    let params = ex.params()?;
    let r = rational_arg("--r", r)?;
    let b = match box_bound {
        Some(b) => b,
        None => oracle::required_box(&params, &r)?.max(1),
    };
    let count = oracle::oracle_scan(&params, &r, b)?;
    print_json(&json!({"example": params.id(), "R": rational_string(&r), "box": b, "count": count}));
    Ok(0)
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.cmd {
        Command::Predict { ex, model } => cmd_predict(&ex, &model),
        Command::Count { ex, r, workers, points } => cmd_count(&ex, &r, workers, &points),
        Command::Ladder { ex, ladder, out, no_timing, report } => cmd_ladder(&ex, &ladder, &out, no_timing, &report),
        Command::Fit { ex, csv, tolerance, strict, report, plot_data, plot_script } => {
            cmd_fit(&ex, &csv, tolerance, strict, &report, &plot_data, &plot_script)
        }
        Command::Poles { example, n, chart, json } => cmd_poles(&example, n, &chart, json),
        Command::Weight { triple, eta } => cmd_weight(&triple, eta),
        Command::Oracle { ex, r, box_bound } => cmd_oracle(&ex, &r, box_bound),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
