//! `tdecomp` — experiment harness for the `torus-decomp` library.
//!
//! One experiment per process invocation, fully described by a single JSON
//! config file:
//!
//! ```text
//! tdecomp <subcommand> --config <path> [--out <dir>] [--seed <u64>]
//! ```
//!
//! Every run writes two artifacts into the output directory: `report.json`
//! (the complete trace, including every assertion record produced by the
//! library) and `summary.csv` (a flat table ready for external plotting).
//! Identical config and seed produce byte-identical CSV output: all floats
//! are printed with Rust's shortest round-trip formatting, which is a pure
//! function of the value.
//!
//! Config format: a flat JSON object. Experiment inputs are top-level keys;
//! driver-parameter overrides use dotted keys (`"params.tau": 0.25`).
//! Unknown keys, missing keys, and mistyped values are rejected with a
//! machine-readable error JSON on standard error that names the offending
//! key. Exit codes: 0 success, 2 rejected input, 3 hypothesis failed,
//! 4 extraction failed, 5 internal assertion.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::{json, Map, Value};

use torus_decomp::addcomb::bsg_refine;
use torus_decomp::decompose::{
    bootstrap_diagnostic, decompose, final_bootstrap_diagnostic, AssertRecord, ParamSet,
};
use torus_decomp::error::Error;
use torus_decomp::granulate::{granulate, verify_family};
use torus_decomp::io;
use torus_decomp::measure::{make_measure, spectrum, walk_step, MeasureKind};
use torus_decomp::multiplier::{generate, regularity_constant, GenerateKind, MultiplierSet};
use torus_decomp::projection::projection_probe;
use torus_decomp::GridMeasure;

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

#[derive(Parser)]
#[command(
    name = "tdecomp",
    version,
    about = "Measure-decomposition experiments on the one-dimensional torus"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fourier coefficients of a measure over a symmetric window.
    Spectrum(RunArgs),
    /// Sup of low-frequency coefficients along the multiplicative walk.
    WalkDecay(RunArgs),
    /// Regularity constant of a multiplier set, with witness interval.
    Regularity(RunArgs),
    /// Dense-graph refinement certificate on a bipartite edge list.
    Bsg(RunArgs),
    /// Granule family extracted from one rich spectral level set.
    Granulate(RunArgs),
    /// One instrumented dimension-increment step of the walk.
    Bootstrap(RunArgs),
    /// Endgame diagnostic: near-full covering to positive density.
    FinalBootstrap(RunArgs),
    /// Full iterative decomposition into flat + granular parts.
    Decompose(RunArgs),
    /// Projection covering probe on a planar point set.
    ProjectionProbe(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file describing the experiment instance.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json and summary.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Seed override; takes precedence over the config's "seed" key.
    #[arg(long)]
    seed: Option<u64>,
}

// ---------------------------------------------------------------------------
// Failures
// ---------------------------------------------------------------------------

/// A run failure: either a config problem tied to a specific key, or an
/// error raised by the library.
enum Failure {
    Config { key: String, message: String },
    Lib(Error),
}

impl Failure {
    fn config(key: &str, message: impl Into<String>) -> Self {
        Failure::Config { key: key.to_string(), message: message.into() }
    }

    fn exit_code(&self) -> i32 {
        match self {
            Failure::Config { .. } => 2,
            Failure::Lib(e) => e.exit_code(),
        }
    }

    fn to_json(&self) -> Value {
        let (kind, key, message) = match self {
            Failure::Config { key, message } => {
                ("rejected_input", Some(key.clone()), message.clone())
            }
            Failure::Lib(e) => {
                let kind = match e {
                    Error::RejectedInput(_) => "rejected_input",
                    Error::HypothesisFailed(_) => "hypothesis_failed",
                    Error::ExtractionFailed(_) => "extraction_failed",
                    Error::InternalAssertion(_) => "internal_assertion",
                };
                (kind, None, e.to_string())
            }
        };
        json!({
            "error": {
                "exit_code": self.exit_code(),
                "kind": kind,
                "key": key,
                "message": message,
            }
        })
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type RunResult<T> = std::result::Result<T, Failure>;

// ---------------------------------------------------------------------------
// Config access
// ---------------------------------------------------------------------------

struct Config {
    map: Map<String, Value>,
    /// Directory of the config file; relative paths resolve against it.
    dir: PathBuf,
    /// Seed from the command line, overriding the config's "seed" key.
    seed_flag: Option<u64>,
}

impl Config {
    fn load(path: &Path, seed_flag: Option<u64>) -> RunResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::config("config", format!("{}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Failure::config("config", format!("{}: {e}", path.display())))?;
        let map = match value {
            Value::Object(m) => m,
            _ => {
                return Err(Failure::config(
                    "config",
                    format!("{}: top level must be a JSON object", path.display()),
                ))
            }
        };
        let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(Config { map, dir, seed_flag })
    }

    /// Rejects keys outside the experiment's vocabulary. Dotted `params.*`
    /// keys are validated later, field by field, when `allow_params` is set.
    fn check_keys(&self, allowed: &[&str], allow_params: bool) -> RunResult<()> {
        for key in self.map.keys() {
            if key.starts_with("params.") {
                if allow_params {
                    continue;
                }
                return Err(Failure::config(
                    key,
                    "driver-parameter overrides are not used by this experiment",
                ));
            }
            if key == "seed" || allowed.contains(&key.as_str()) {
                continue;
            }
            return Err(Failure::config(key, "unknown configuration key"));
        }
        Ok(())
    }

    fn require<T: DeserializeOwned>(&self, key: &str) -> RunResult<T> {
        let v = self
            .map
            .get(key)
            .ok_or_else(|| Failure::config(key, "missing required key"))?;
        serde_json::from_value(v.clone()).map_err(|e| Failure::config(key, e.to_string()))
    }

    fn optional<T: DeserializeOwned>(&self, key: &str) -> RunResult<Option<T>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| Failure::config(key, e.to_string())),
        }
    }

    /// The run seed: command-line flag first, then the config's "seed".
    fn seed(&self) -> RunResult<Option<u64>> {
        if let Some(s) = self.seed_flag {
            return Ok(Some(s));
        }
        self.optional::<u64>("seed")
    }

    fn require_seed(&self) -> RunResult<u64> {
        self.seed()?.ok_or_else(|| {
            Failure::config("seed", "this experiment is seeded; pass --seed or a \"seed\" key")
        })
    }

    /// The measure under study: either `"measure": "<path>"` referencing a
    /// measure file, or an inline kind object (then `"q"` gives the grid).
    fn measure(&self) -> RunResult<GridMeasure> {
        match self.map.get("measure") {
            None => Err(Failure::config("measure", "missing required key")),
            Some(Value::String(rel)) => {
                let path = self.dir.join(rel);
                io::read_measure(&path).map_err(Failure::Lib)
            }
            Some(v) => {
                let kind: MeasureKind = serde_json::from_value(v.clone())
                    .map_err(|e| Failure::config("measure", e.to_string()))?;
                let q: usize = self.require("q")?;
                make_measure(&kind, q).map_err(Failure::Lib)
            }
        }
    }

    /// The multiplier set: `{"l": .., "elements": [..]}` verbatim, or a
    /// generator object (`{"kind": "full"}`, `{"kind": "random", ..}`, …)
    /// paired with a top-level `"l"`.
    fn multiplier(&self) -> RunResult<MultiplierSet> {
        let v = self
            .map
            .get("multiplier")
            .ok_or_else(|| Failure::config("multiplier", "missing required key"))?;
        if let Some(obj) = v.as_object() {
            if obj.contains_key("elements") {
                let l = obj
                    .get("l")
                    .and_then(Value::as_u64)
                    .ok_or_else(|| Failure::config("multiplier", "explicit set needs \"l\""))?;
                let elements: Vec<u64> =
                    serde_json::from_value(obj.get("elements").cloned().unwrap())
                        .map_err(|e| Failure::config("multiplier", e.to_string()))?;
                return MultiplierSet::new(l, elements).map_err(Failure::Lib);
            }
        }
        let kind: GenerateKind = serde_json::from_value(v.clone())
            .map_err(|e| Failure::config("multiplier", e.to_string()))?;
        let l: u64 = self.require("l")?;
        generate(&kind, l).map_err(Failure::Lib)
    }

    /// Driver parameters: defaults, then `params.*` overrides. When a
    /// multiplier scale is known it seeds the `l` field so the schedule
    /// validation sees the real scale.
    fn params(&self, scale_l: Option<u64>) -> RunResult<ParamSet> {
        let mut p = ParamSet::default();
        if let Some(l) = scale_l {
            p.l = l;
        }
        for (key, value) in &self.map {
            if let Some(field) = key.strip_prefix("params.") {
                p.set_field(field, value)
                    .map_err(|e| Failure::config(key, e.to_string()))?;
            }
        }
        p.validate().map_err(|e| Failure::config("params", e.to_string()))?;
        Ok(p)
    }

    /// The original config map, echoed into reports for reproducibility.
    fn echo(&self) -> Value {
        Value::Object(self.map.clone())
    }
}

// ---------------------------------------------------------------------------
// CSV helpers
// ---------------------------------------------------------------------------

fn asserts_csv(records: &[AssertRecord]) -> String {
    let mut out = String::from("name,lhs,rhs,holds,exact\n");
    for r in records {
        let _ = writeln!(out, "{},{},{},{},{}", r.name, r.lhs, r.rhs, r.holds, r.exact);
    }
    out
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct Outputs {
    report: Value,
    summary_csv: String,
}

fn run_spectrum(cfg: &Config) -> RunResult<Outputs> {
    cfg.check_keys(&["measure", "q", "n_max"], false)?;
    let mu = cfg.measure()?;
    let n_max: usize = cfg.require("n_max")?;
    let spec = spectrum(&mu, n_max);
    let mut sup = 0.0f64;
    let mut sup_at = 0i64;
    for (n, c) in spec.iter() {
        if n != 0 && c.norm() > sup {
            sup = c.norm();
            sup_at = n;
        }
    }
    Ok(Outputs {
        report: json!({
            "experiment": "spectrum",
            "config": cfg.echo(),
            "q": mu.q(),
            "mass": mu.mass(),
            "n_max": n_max,
            "sup_abs_nonzero": sup,
            "sup_at": sup_at,
        }),
        summary_csv: io::spectrum_csv(&spec),
    })
}

fn run_walk_decay(cfg: &Config) -> RunResult<Outputs> {
    cfg.check_keys(&["measure", "q", "multiplier", "l", "steps", "window"], false)?;
    let mu = cfg.measure()?;
    let s = cfg.multiplier()?;
    let steps: usize = cfg.require("steps")?;
    let window: usize = cfg.optional("window")?.unwrap_or(64);
    if window == 0 {
        return Err(Failure::config("window", "window must be positive"));
    }

    let mut csv = String::from("k,sup_abs\n");
    let mut rows = Vec::with_capacity(steps + 1);
    let mut cur = mu;
    for k in 0..=steps {
        let spec = spectrum(&cur, window);
        let sup = spec
            .iter()
            .filter(|(n, _)| *n != 0)
            .map(|(_, c)| c.norm())
            .fold(0.0f64, f64::max);
        let _ = writeln!(csv, "{k},{sup}");
        rows.push(json!({"k": k, "sup_abs": sup}));
        if k < steps {
            cur = walk_step(&cur, &s);
        }
    }
    Ok(Outputs {
        report: json!({
            "experiment": "walk-decay",
            "config": cfg.echo(),
            "l": s.l(),
            "set_size": s.len(),
            "steps": steps,
            "window": window,
            "rows": rows,
        }),
        summary_csv: csv,
    })
}

fn run_regularity(cfg: &Config) -> RunResult<Outputs> {
    cfg.check_keys(&["multiplier", "l", "lambda", "scale_r"], false)?;
    let s = cfg.multiplier()?;
    let lambda: f64 = cfg.require("lambda")?;
    let scale_r: f64 = cfg.require("scale_r")?;
    let cert = regularity_constant(&s, lambda, scale_r)?;
    let mut csv = String::from("l,size,lambda,scale_r,c_tilde,witness_left,witness_width\n");
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{},{}",
        s.l(),
        s.len(),
        cert.lambda,
        cert.scale_r,
        cert.c_tilde,
        cert.witness.0,
        cert.witness.1
    );
    Ok(Outputs {
        report: json!({
            "experiment": "regularity",
            "config": cfg.echo(),
            "l": s.l(),
            "elements": s.elements(),
            "certificate": cert,
        }),
        summary_csv: csv,
    })
}

fn run_bsg(cfg: &Config) -> RunResult<Outputs> {
    cfg.check_keys(&["graph", "k"], false)?;
    let rel: String = cfg.require("graph")?;
    let graph = io::read_edge_list(&cfg.dir.join(rel))?;
    let k: f64 = cfg.require("k")?;
    let seed = cfg.require_seed()?;
    let cert = bsg_refine(&graph, k, seed)?;
    let mut csv = String::from(
        "n,k,a_refined,a_size_bound,b_refined,b_size_bound,\
         edges_between,edge_bound,min_walks3,walks3_bound\n",
    );
    let _ = writeln!(
        csv,
        "{},{},{},{},{},{},{},{},{},{}",
        cert.n,
        cert.k,
        cert.a_refined.len(),
        cert.a_size_bound,
        cert.b_refined.len(),
        cert.b_size_bound,
        cert.edges_between,
        cert.edge_bound,
        cert.min_walks3,
        cert.walks3_bound
    );
    Ok(Outputs {
        report: json!({
            "experiment": "bsg",
            "config": cfg.echo(),
            "seed": seed,
            "certificate": cert,
        }),
        summary_csv: csv,
    })
}

fn run_granulate(cfg: &Config) -> RunResult<Outputs> {
    cfg.check_keys(
        &["measure", "q", "level_n", "scale_m", "threshold_t", "richness_s"],
        false,
    )?;
    let mu = cfg.measure()?;
    let level_n: u64 = cfg.require("level_n")?;
    let scale_m: u64 = cfg.require("scale_m")?;
    let threshold_t: f64 = cfg.require("threshold_t")?;
    let richness_s: f64 = cfg.require("richness_s")?;
    let outcome = granulate(&mu, level_n, scale_m, threshold_t, richness_s)?;
    let recount = verify_family(&mu, &outcome.family)?;
    let mut csv = String::from("cube,peak,peak_value,captured\n");
    for g in &outcome.family.granules {
        let _ = writeln!(csv, "{},{},{},{}", g.cube, g.peak, g.peak_value, g.captured);
    }
    Ok(Outputs {
        report: json!({
            "experiment": "granulate",
            "config": cfg.echo(),
            "outcome": outcome,
            "recounted_mass": recount,
        }),
        summary_csv: csv,
    })
}

fn run_bootstrap(cfg: &Config) -> RunResult<Outputs> {
    cfg.check_keys(
        &["measure", "q", "multiplier", "l", "n", "window_n", "scale_m", "delta"],
        true,
    )?;
    let mu = cfg.measure()?;
    let s = cfg.multiplier()?;
    let params = cfg.params(Some(s.l()))?;
    let n: usize = cfg.require("n")?;
    let window_n: f64 = cfg.require("window_n")?;
    let scale_m: f64 = cfg.require("scale_m")?;
    let delta: f64 = cfg.require("delta")?;
    let seed = cfg.require_seed()?;
    let trace = bootstrap_diagnostic(&mu, &s, n, window_n, scale_m, delta, &params, seed)?;
    Ok(Outputs {
        summary_csv: asserts_csv(&trace.asserts),
        report: json!({
            "experiment": "bootstrap",
            "config": cfg.echo(),
            "seed": seed,
            "trace": trace,
        }),
    })
}

fn run_final_bootstrap(cfg: &Config) -> RunResult<Outputs> {
    cfg.check_keys(
        &["measure", "q", "multiplier", "l", "n", "window_n", "scale_m", "delta"],
        true,
    )?;
    let mu = cfg.measure()?;
    let s = cfg.multiplier()?;
    let params = cfg.params(Some(s.l()))?;
    let n: usize = cfg.require("n")?;
    let window_n: f64 = cfg.require("window_n")?;
    let scale_m: f64 = cfg.require("scale_m")?;
    let delta: f64 = cfg.require("delta")?;
    let trace = final_bootstrap_diagnostic(&mu, &s, n, window_n, scale_m, delta, &params)?;
    Ok(Outputs {
        summary_csv: asserts_csv(&trace.asserts),
        report: json!({
            "experiment": "final-bootstrap",
            "config": cfg.echo(),
            "trace": trace,
        }),
    })
}

fn run_decompose(cfg: &Config) -> RunResult<Outputs> {
    cfg.check_keys(&["measure", "q", "multiplier", "l"], true)?;
    let mu = cfg.measure()?;
    let s = cfg.multiplier()?;
    let params = cfg.params(Some(s.l()))?;
    let result = decompose(&mu, &s, &params)?;
    Ok(Outputs {
        summary_csv: result.iteration_csv(),
        report: json!({
            "experiment": "decompose",
            "config": cfg.echo(),
            "result": result,
        }),
    })
}

fn run_projection_probe(cfg: &Config) -> RunResult<Outputs> {
    cfg.check_keys(
        &["points", "directions", "r", "alpha", "alpha_delta", "tau0", "kappa"],
        false,
    )?;
    let rel: String = cfg.require("points")?;
    let points = io::read_planar_csv(&cfg.dir.join(rel))?;
    let directions: Vec<f64> = cfg.require("directions")?;
    let r: f64 = cfg.require("r")?;
    let alpha: f64 = cfg.require("alpha")?;
    let defaults = ParamSet::default();
    let alpha_delta: f64 = cfg.optional("alpha_delta")?.unwrap_or(defaults.alpha_delta);
    let tau0: f64 = cfg.optional("tau0")?.unwrap_or(defaults.tau0);
    let kappa: f64 = cfg.optional("kappa")?.unwrap_or(defaults.kappa);
    let report = projection_probe(&points, &directions, r, alpha, alpha_delta, tau0, kappa)?;
    let mut csv = String::from("eta,covering,threshold,good\n");
    for d in &report.directions {
        let _ = writeln!(csv, "{},{},{},{}", d.eta, d.covering, d.threshold, d.good);
    }
    Ok(Outputs {
        report: json!({
            "experiment": "projection-probe",
            "config": cfg.echo(),
            "report": report,
        }),
        summary_csv: csv,
    })
}

// ---------------------------------------------------------------------------
// Entry
// ---------------------------------------------------------------------------

fn run(cmd: &Cmd) -> RunResult<String> {
    let (args, runner): (&RunArgs, fn(&Config) -> RunResult<Outputs>) = match cmd {
        Cmd::Spectrum(a) => (a, run_spectrum),
        Cmd::WalkDecay(a) => (a, run_walk_decay),
        Cmd::Regularity(a) => (a, run_regularity),
        Cmd::Bsg(a) => (a, run_bsg),
        Cmd::Granulate(a) => (a, run_granulate),
        Cmd::Bootstrap(a) => (a, run_bootstrap),
        Cmd::FinalBootstrap(a) => (a, run_final_bootstrap),
        Cmd::Decompose(a) => (a, run_decompose),
        Cmd::ProjectionProbe(a) => (a, run_projection_probe),
    };
    let cfg = Config::load(&args.config, args.seed)?;
    let outputs = runner(&cfg)?;

    fs::create_dir_all(&args.out)
        .map_err(|e| Failure::config("out", format!("{}: {e}", args.out.display())))?;
    let report_path = args.out.join("report.json");
    let csv_path = args.out.join("summary.csv");
    io::write_json(&report_path, &outputs.report)?;
    fs::write(&csv_path, &outputs.summary_csv)
        .map_err(|e| Failure::config("out", format!("{}: {e}", csv_path.display())))?;
    Ok(format!("wrote {} and {}", report_path.display(), csv_path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.cmd) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
