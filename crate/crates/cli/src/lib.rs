//! Command-line front end. [`run`] parses an argv, executes one subcommand,
//! and emits a JSON [`RunReport`] to stdout or to `--report`.

pub mod emit;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::{Serialize, Serializer};
use serde_json::{json, Value};
use ttstar::factorization::{b_distance, iwasawa_su11, model_iwasawa, IwasawaFactors};
use ttstar::geometry::{build_mesh, GridSpec, H_DEFAULT};
use ttstar::painleve3::{classify_from_x0, crosscheck, solve_from_seed, PIIITrace, TraceStatus, CLASSIFY_TOL};
use ttstar::qc_frames::model_e;
use ttstar::{DoubleF64, Error, LoopConfig, Real};

/// Exit code for bad flags or out-of-domain parameters.
pub const EXIT_USAGE: i32 = 1;
/// Exit code for numerical failures.
pub const EXIT_NUMERIC: i32 = 2;

/// A value of the parameter a. Accepts decimal literals and the token
/// `4gamma` for four times the Euler constant, both kept in double-double.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AParam {
    pub token: &'static str,
    pub value: DoubleF64,
}

impl AParam {
    pub fn f64(&self) -> f64 {
        self.value.to_f64()
    }
}

impl FromStr for AParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("4gamma") || s == "4γ" {
            return Ok(AParam { token: "4gamma", value: DoubleF64::four_gamma() });
        }
        let value: DoubleF64 = s.parse().map_err(|e| format!("{e}"))?;
        if !value.is_finite() {
            return Err(format!("a = {s} is not finite"));
        }
        Ok(AParam { token: "", value })
    }
}

impl fmt::Display for AParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.token.is_empty() {
            write!(f, "{}", self.f64())
        } else {
            f.write_str(self.token)
        }
    }
}

impl Serialize for AParam {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.token.is_empty() {
            s.serialize_f64(self.f64())
        } else {
            s.serialize_str(self.token)
        }
    }
}

fn parse_list<T: FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    let v: Vec<T> = s
        .split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| format!("'{}': {e}", p.trim())))
        .collect::<Result<_, _>>()?;
    if v.is_empty() {
        return Err("empty list".into());
    }
    Ok(v)
}

#[derive(Clone, Debug, Serialize)]
#[serde(transparent)]
pub struct AList(pub Vec<AParam>);

impl FromStr for AList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_list(s).map(AList)
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(transparent)]
pub struct RList(pub Vec<f64>);

impl FromStr for RList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_list(s).map(RList)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    /// IEEE double, tol in [1e-12, 1e-6].
    F64,
    /// Double-double, tol in [1e-28, 1e-6].
    Double,
}

#[derive(Parser, Debug)]
#[command(name = "ttstar", version, about = "tt* surfaces, Iwasawa factorization and Painlevé III traces")]
pub struct Cli {
    /// Write the JSON run report here instead of stdout.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Build a polar-grid mesh of the surface and export it as OBJ.
    Surface(SurfaceArgs),
    /// Integrate the radial sinh-Gordon equation from the asymptotic seed.
    Piii(PiiiArgs),
    /// Classify several values of a as smooth or singular.
    Scan(ScanArgs),
    /// Compare k²√r from the factorization with the ODE solution.
    Crosscheck(CrosscheckArgs),
    /// Exact model-case factors against the numerical factorization.
    Modelcase(ModelcaseArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct SurfaceArgs {
    #[arg(long)]
    pub a: AParam,
    #[arg(long, default_value_t = 0.01)]
    pub rmin: f64,
    #[arg(long, default_value_t = 0.5)]
    pub rmax: f64,
    #[arg(long, default_value_t = 100)]
    pub nr: usize,
    #[arg(long, default_value_t = 64)]
    pub ntheta: usize,
    /// Truncation degree of the factorization.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Mean curvature.
    #[arg(long, default_value_t = H_DEFAULT)]
    pub h: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct PiiiArgs {
    #[arg(long)]
    pub a: AParam,
    #[arg(long, default_value_t = 1e-4)]
    pub x0: f64,
    #[arg(long, default_value_t = 20.0)]
    pub xmax: f64,
    /// Defaults to 1e-10 in f64 and 1e-24 in double-double.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_enum, default_value_t = Precision::F64)]
    pub precision: Precision,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ScanArgs {
    #[arg(long = "a-list")]
    pub a_list: AList,
    #[arg(long, default_value_t = 20.0)]
    pub xmax: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub x0: f64,
    #[arg(long, default_value_t = CLASSIFY_TOL)]
    pub tol: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct CrosscheckArgs {
    #[arg(long)]
    pub a: AParam,
    #[arg(long = "r-list")]
    pub r_list: RList,
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct ModelcaseArgs {
    #[arg(long)]
    pub a: AParam,
    /// Complex point, e.g. `0.3`, `0.2+0.1i`.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(serialize_with = "ser_complex")]
    pub z: Complex64,
    #[arg(long)]
    pub degree: Option<usize>,
}

fn ser_complex<S: Serializer>(z: &Complex64, s: S) -> Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub parameters: Value,
    pub outputs: Vec<PathBuf>,
    pub diagnostics: BTreeMap<String, Value>,
    pub wall_time: f64,
}

#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub report: Option<RunReport>,
}

enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::DomainError(_) | Error::GridTooCoarse { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(format!("I/O error: {e}"))
    }
}

type Diag = BTreeMap<String, Value>;

struct Partial {
    outputs: Vec<PathBuf>,
    diagnostics: Diag,
}

/// Parses `argv` (program name first), runs the subcommand, and writes the
/// report. Never exits the process.
pub fn run<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return Outcome { code, report: None };
        }
    };
    let start = Instant::now();
    let (name, parameters) = match &cli.command {
        Command::Surface(a) => ("surface", to_value(a)),
        Command::Piii(a) => ("piii", to_value(a)),
        Command::Scan(a) => ("scan", to_value(a)),
        Command::Crosscheck(a) => ("crosscheck", to_value(a)),
        Command::Modelcase(a) => ("modelcase", to_value(a)),
    };
    let mut partial = Partial { outputs: Vec::new(), diagnostics: Diag::new() };
    let result = match &cli.command {
        Command::Surface(a) => surface(a, &mut partial),
        Command::Piii(a) => piii(a, &mut partial),
        Command::Scan(a) => scan(a, &mut partial),
        Command::Crosscheck(a) => crosscheck_cmd(a, &mut partial),
        Command::Modelcase(a) => modelcase(a, &mut partial),
    };
    let mut code = 0;
    if let Err(f) = result {
        let (c, msg) = match f {
            Failure::Usage(m) => (EXIT_USAGE, m),
            Failure::Numeric(m) => (EXIT_NUMERIC, m),
        };
        eprintln!("error: {msg}");
        partial.diagnostics.insert("error".into(), json!(msg));
        code = c;
    }
    let report = RunReport {
        command: name.to_string(),
        parameters,
        outputs: partial.outputs,
        diagnostics: partial.diagnostics,
        wall_time: start.elapsed().as_secs_f64(),
    };
    if let Err(e) = write_report(&report, cli.report.as_ref()) {
        eprintln!("error: cannot write report: {e}");
        if code == 0 {
            code = EXIT_USAGE;
        }
    }
    Outcome { code, report: Some(report) }
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).unwrap_or(Value::Null)
}

fn write_report(report: &RunReport, path: Option<&PathBuf>) -> std::io::Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            serde_json::to_writer_pretty(&mut w, report)?;
            writeln!(w)?;
            w.flush()
        }
        None => {
            let mut out = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut out, report)?;
            writeln!(out)
        }
    }
}

fn loop_config(degree: Option<usize>) -> LoopConfig {
    match degree {
        Some(d) => LoopConfig::default().with_degree(d),
        None => LoopConfig::default(),
    }
}

fn status_json(s: &TraceStatus) -> Value {
    serde_json::to_value(s).unwrap_or(Value::Null)
}

fn surface(args: &SurfaceArgs, p: &mut Partial) -> Result<(), Failure> {
    let cfg = loop_config(args.degree);
    let grid = GridSpec::new(args.rmin, args.rmax, args.nr, args.ntheta);
    let mesh = build_mesh(args.a.f64(), &grid, args.h, &cfg)?;
    let fold = |f: fn(&ttstar::factorization::IwasawaDiagnostics) -> f64| {
        mesh.vertices
            .iter()
            .filter_map(|v| v.diagnostics.as_ref().map(f))
            .fold(0.0f64, f64::max)
    };
    let d = &mut p.diagnostics;
    d.insert("vertices".into(), json!(mesh.vertices.len()));
    d.insert("singular_vertices".into(), json!(mesh.singular_count()));
    d.insert("flagged_vertices".into(), json!(mesh.flagged_count()));
    d.insert("faces".into(), json!(mesh.faces.len()));
    d.insert("dropped_faces".into(), json!(mesh.dropped_faces.len()));
    d.insert("reflection_defect".into(), json!(mesh.reflection_defect()));
    d.insert("max_residual".into(), json!(fold(|x| x.residual)));
    d.insert("max_condition".into(), json!(fold(|x| x.condition)));
    d.insert("max_reality_defect".into(), json!(fold(|x| x.reality_defect)));
    d.insert("max_reconstruction".into(), json!(fold(|x| x.reconstruction)));

    let obj_index = match &args.out {
        Some(path) => {
            let idx = emit::write_obj(&mesh, BufWriter::new(File::create(path)?))?;
            p.outputs.push(path.clone());
            idx
        }
        None => emit::write_obj(&mesh, std::io::sink())?,
    };
    if let Some(path) = &args.annotations {
        let ann = emit::annotations(&mesh, &obj_index);
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, &ann).map_err(std::io::Error::from)?;
        w.flush()?;
        p.outputs.push(path.clone());
    }
    Ok(())
}

fn trace_diagnostics<T: Real>(t: &PIIITrace<T>, d: &mut Diag) {
    let ys = t.y();
    d.insert("status".into(), status_json(&t.status));
    d.insert("steps".into(), json!(t.step_count()));
    d.insert("order".into(), json!(t.order));
    d.insert("x_end".into(), json!(t.x_end()));
    d.insert("y_min".into(), json!(ys.iter().copied().fold(f64::INFINITY, f64::min)));
    d.insert("y_max".into(), json!(ys.iter().copied().fold(0.0f64, f64::max)));
    d.insert("max_piii_residual".into(), json!(t.max_piii_residual(3)));
}

fn piii(args: &PiiiArgs, p: &mut Partial) -> Result<(), Failure> {
    let nodes = match args.precision {
        Precision::F64 => {
            let t = solve_from_seed(args.a.f64(), args.x0, args.xmax, args.tol.unwrap_or(1e-10))?;
            trace_diagnostics(&t, &mut p.diagnostics);
            t.nodes
        }
        Precision::Double => {
            let t = solve_from_seed(args.a.value, args.x0, args.xmax, args.tol.unwrap_or(CLASSIFY_TOL))?;
            trace_diagnostics(&t, &mut p.diagnostics);
            t.nodes
        }
    };
    if let Some(path) = &args.out {
        emit::write_trace_csv(&nodes, BufWriter::new(File::create(path)?))?;
        p.outputs.push(path.clone());
    }
    Ok(())
}

fn scan(args: &ScanArgs, p: &mut Partial) -> Result<(), Failure> {
    let results: Vec<ttstar::Result<TraceStatus>> = std::thread::scope(|s| {
        let handles: Vec<_> = args
            .a_list
            .0
            .iter()
            .map(|a| s.spawn(move || classify_from_x0(a.value, args.x0, args.xmax, args.tol)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("classification thread panicked")).collect()
    });
    let mut summary = serde_json::Map::new();
    let mut details = Vec::new();
    for (a, r) in args.a_list.0.iter().zip(results) {
        let status = r?;
        let label = if status.is_smooth() { "smooth" } else { "singular" };
        summary.insert(a.to_string(), json!(label));
        details.push(json!({ "a": a, "classification": label, "trace": status_json(&status) }));
    }
    p.diagnostics.insert("classification".into(), Value::Object(summary));
    p.diagnostics.insert("traces".into(), Value::Array(details));
    Ok(())
}

fn crosscheck_cmd(args: &CrosscheckArgs, p: &mut Partial) -> Result<(), Failure> {
    let rep = crosscheck(args.a.f64(), &args.r_list.0, &loop_config(args.degree), args.tol)?;
    p.diagnostics.insert("max_rel_error".into(), json!(rep.max_rel_error));
    p.diagnostics.insert("rows".into(), to_value(&rep.rows));
    Ok(())
}

fn factors_json(f: &IwasawaFactors) -> Value {
    let b: Vec<Value> = f
        .b
        .trimmed(1e-14)
        .terms()
        .map(|(k, m)| {
            let e = |i, j| {
                let z: Complex64 = m[(i, j)];
                json!([z.re, z.im])
            };
            json!({ "power": k, "coeff": [[e(0, 0), e(0, 1)], [e(1, 0), e(1, 1)]] })
        })
        .collect();
    json!({ "orbit": f.orbit, "k": f.k, "b": b })
}

fn modelcase(args: &ModelcaseArgs, p: &mut Partial) -> Result<(), Failure> {
    let a = args.a.f64();
    if args.z == Complex64::new(0.0, 0.0) || !args.z.is_finite() {
        return Err(Failure::Usage(format!("z = {} is not in C*", args.z)));
    }
    let t = args.z.ln();
    let oracle = model_iwasawa(a, t)?;
    p.diagnostics.insert("oracle".into(), factors_json(&oracle));
    let numeric = iwasawa_su11(&model_e(a, t)?, &loop_config(args.degree))?;
    p.diagnostics.insert("numeric".into(), factors_json(&numeric));
    p.diagnostics.insert("numeric_diagnostics".into(), to_value(&numeric.diagnostics));
    p.diagnostics.insert("orbit_match".into(), json!(oracle.orbit == numeric.orbit));
    p.diagnostics.insert("k_rel_error".into(), json!(((numeric.k - oracle.k) / oracle.k).abs()));
    p.diagnostics.insert("b_distance".into(), json!(b_distance(&oracle, &numeric)));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_tokens() {
        let a: AParam = "4gamma".parse().unwrap();
        assert_eq!(a.value, DoubleF64::four_gamma());
        assert_eq!(a.to_string(), "4gamma");
        let b: AParam = "2.5".parse().unwrap();
        assert_eq!(b.f64(), 2.5);
        assert!("two".parse::<AParam>().is_err());
        let l: AList = "1, 4gamma,4".parse().unwrap();
        assert_eq!(l.0.len(), 3);
        assert!("1,,2".parse::<RList>().is_err());
    }

    #[test]
    fn bad_flags_are_usage_errors() {
        assert_eq!(run(["ttstar", "frobnicate"]).code, EXIT_USAGE);
        assert_eq!(run(["ttstar", "piii"]).code, EXIT_USAGE);
        assert_eq!(run(["ttstar", "piii", "--a", "x"]).code, EXIT_USAGE);
    }

    fn run_with_report(args: &[&str]) -> (i32, Value) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let mut argv = vec!["ttstar"];
        argv.extend_from_slice(args);
        argv.extend_from_slice(&["--report", path.to_str().unwrap()]);
        let out = run(argv);
        let report: Value = serde_json::from_reader(File::open(&path).unwrap()).unwrap();
        assert_eq!(report["command"], json!(out.report.unwrap().command));
        (out.code, report)
    }

    #[test]
    fn scan_reports_each_value() {
        let (code, r) = run_with_report(&["scan", "--a-list", "1,4gamma,4,2.30886", "--xmax", "20"]);
        assert_eq!(code, 0);
        let c = &r["diagnostics"]["classification"];
        assert_eq!(c["1"], "singular");
        assert_eq!(c["4gamma"], "smooth");
        assert_eq!(c["4"], "singular");
        // five decimals are not enough to stay on the separatrix up to x = 20
        assert_eq!(c["2.30886"], "singular");
        let x_s = r["diagnostics"]["traces"][3]["trace"]["x_s"].as_f64().unwrap();
        assert!(x_s > 8.0);
    }

    #[test]
    fn modelcase_agrees_with_oracle() {
        let (code, r) = run_with_report(&["modelcase", "--a", "1", "--z", "0.367879"]);
        assert_eq!(code, 0);
        let d = &r["diagnostics"];
        assert_eq!(d["oracle"]["orbit"], "W");
        assert_eq!(d["numeric"]["orbit"], "W");
        for side in ["oracle", "numeric"] {
            assert!((d[side]["k"].as_f64().unwrap() - 1.0).abs() < 1e-5);
        }
        assert!(d["b_distance"].as_f64().unwrap() < 1e-8);
    }

    #[test]
    fn modelcase_on_the_boundary_fails_numerically() {
        let (code, r) = run_with_report(&["modelcase", "--a", "2", "--z", "0.36787944117144233"]);
        assert_eq!(code, EXIT_NUMERIC);
        assert!(r["diagnostics"]["error"].is_string());
    }

    #[test]
    fn piii_writes_full_precision_csv() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("trace.csv");
        let (code, r) = run_with_report(&[
            "piii", "--a", "2.30886", "--x0", "1e-4", "--xmax", "20", "--out", csv.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        assert_eq!(r["outputs"][0], json!(csv));
        let text = std::fs::read_to_string(&csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,v,vp,y"));
        let mut last_x = 0.0;
        let mut rows = 0;
        for l in lines {
            let f: Vec<f64> = l.split(',').map(|s| s.parse().unwrap()).collect();
            assert!(f[0] > last_x && f[3] > 0.0);
            assert_eq!(f[3], f[1].exp());
            last_x = f[0];
            rows += 1;
        }
        assert_eq!(rows, r["diagnostics"]["steps"].as_u64().unwrap() + 1);
    }

    #[test]
    fn piii_rejects_tolerance_out_of_range() {
        let (code, _) = run_with_report(&["piii", "--a", "1", "--tol", "1e-14"]);
        assert_eq!(code, EXIT_NUMERIC);
        let (code, _) = run_with_report(&["piii", "--a", "4gamma", "--tol", "1e-20", "--precision", "double", "--xmax", "1"]);
        assert_eq!(code, 0);
    }

    #[test]
    fn surface_emits_consistent_obj_and_annotations() {
        let dir = tempfile::tempdir().unwrap();
        let obj = dir.path().join("mesh.obj");
        let ann = dir.path().join("ann.json");
        let (code, r) = run_with_report(&[
            "surface", "--a", "1", "--rmin", "0.2", "--rmax", "0.9", "--nr", "8", "--ntheta", "6",
            "--out", obj.to_str().unwrap(), "--annotations", ann.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        let d = &r["diagnostics"];
        assert_eq!(d["vertices"], 48);
        assert!(d["flagged_vertices"].as_u64().unwrap() > 0);
        let text = std::fs::read_to_string(&obj).unwrap();
        let nv = text.lines().filter(|l| l.starts_with("v ")).count();
        assert_eq!(nv as u64, 48 - d["singular_vertices"].as_u64().unwrap());
        let faces: Vec<Vec<usize>> = text
            .lines()
            .filter(|l| l.starts_with("f "))
            .map(|l| l[2..].split(' ').map(|s| s.parse().unwrap()).collect())
            .collect();
        assert_eq!(faces.len() as u64, d["faces"].as_u64().unwrap());
        assert!(faces.iter().all(|f| f.len() == 4 && f.iter().all(|&i| (1..=nv).contains(&i))));
        let a: Value = serde_json::from_reader(File::open(&ann).unwrap()).unwrap();
        let a = a.as_object().unwrap();
        assert_eq!(a.len(), 48);
        assert!(a.values().any(|v| v["status"]["kind"] == "orbit_change"));
    }

    #[test]
    fn surface_with_bad_range_is_usage_error() {
        let (code, _) = run_with_report(&["surface", "--a", "1", "--rmin", "0.5", "--rmax", "0.1"]);
        assert_eq!(code, EXIT_USAGE);
    }
}
