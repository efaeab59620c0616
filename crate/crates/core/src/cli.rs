//! `gmppi` command line: seeded experiment runs and the registry listing.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::optimizer::{run, Ablation, GlobalMppiConfig, Method, RunTrace};
use crate::problems::{problem_by_name, problem_names};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_ALL_SEEDS_FAILED: i32 = 64;

/// Worker-thread override for the parallel sections.
pub const THREADS_ENV: &str = "GMPPI_THREADS";

/// JSON schema of `summary.json`.
pub const SUMMARY_SCHEMA: &str = include_str!("../schemas/summary.schema.json");

pub const TRACE_HEADER: [&str; 8] = [
    "iteration",
    "restart",
    "nominal_cost",
    "cumulative_evaluations",
    "sigma_lse",
    "delta_scale",
    "sdp_status",
    "wall_ms",
];

#[derive(Debug, Parser)]
#[command(name = "gmppi", version, about = "Global-MPPI experiments on benchmark problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one method on one problem for a list of seeds.
    Run(RunArgs),
    /// List registered problems, then methods.
    List,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub problem: String,
    #[arg(long, default_value = "global-mppi")]
    pub method: String,
    /// `a..b` (inclusive) or a comma-separated list.
    #[arg(long, default_value = "0..5")]
    pub seeds: String,
    /// TOML file with `GlobalMppiConfig` fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub no_gnc: bool,
    #[arg(long)]
    pub no_refine: bool,
    #[arg(long)]
    pub no_autocal: bool,
    /// Override a config field, e.g. `--set n_restarts=3` or
    /// `--set calibration.refine_steps=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Record wall-clock times in the traces.
    #[arg(long)]
    pub timing: bool,
}

/// A fully resolved experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: String,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub config: GlobalMppiConfig,
    pub out: PathBuf,
}

pub fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("cannot parse seed list '{spec}'"));
    let spec = spec.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = spec.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b): (u64, u64) = (
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        );
        if a > b {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("invalid key '{path}'")));
        }
        if !node.is_object() {
            *node = json!({});
        }
        let map = node.as_object_mut().expect("object");
        if i + 1 == parts.len() {
            map.insert((*part).to_owned(), value);
            return Ok(());
        }
        node = map.entry(*part).or_insert_with(|| json!({}));
    }
    Ok(())
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

fn parse_override_value(raw: &str) -> Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => serde_json::to_value(t.remove("v").expect("key v")).unwrap_or(Value::String(raw.to_owned())),
        Err(_) => Value::String(raw.to_owned()),
    }
}

/// Defaults, then the config file, then `--set` overrides, then flags.
pub fn build_config(
    file: Option<&Path>,
    overrides: &[String],
    ablation: Ablation,
    timing: bool,
) -> Result<GlobalMppiConfig> {
    let mut value = serde_json::to_value(GlobalMppiConfig::default()).map_err(|e| Error::Config(e.to_string()))?;
    if let Some(path) = file {
        let text = fs::read_to_string(path)?;
        let table: toml::Table = toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        merge(
            &mut value,
            serde_json::to_value(table).map_err(|e| Error::Config(e.to_string()))?,
        );
    }
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{o}' is not KEY=VALUE")))?;
        set_path(&mut value, key.trim(), parse_override_value(raw.trim()))?;
    }
    let mut cfg: GlobalMppiConfig = serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))?;
    cfg.ablation.no_gnc |= ablation.no_gnc;
    cfg.ablation.no_refine |= ablation.no_refine;
    cfg.ablation.no_autocal |= ablation.no_autocal;
    cfg.timing |= timing;
    cfg.validate()?;
    Ok(cfg)
}

pub fn resolve(args: &RunArgs) -> Result<ExperimentConfig> {
    if problem_by_name(&args.problem).is_none() {
        return Err(Error::Config(format!(
            "unknown problem '{}'; known problems: {}",
            args.problem,
            problem_names().join(", ")
        )));
    }
    let method: Method = args.method.parse()?;
    let ablation = Ablation {
        no_gnc: args.no_gnc,
        no_refine: args.no_refine,
        no_autocal: args.no_autocal,
    };
    Ok(ExperimentConfig {
        problem: args.problem.clone(),
        method,
        seeds: parse_seeds(&args.seeds)?,
        config: build_config(args.config.as_deref(), &args.overrides, ablation, args.timing)?,
        out: args.out.clone(),
    })
}

fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes one row per restart stage (or baseline step).
pub fn write_trace_csv<W: Write>(trace: &RunTrace, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for (outer, r) in trace.stages() {
        let status = r.sdp_status.map_or_else(|| "none".to_owned(), |s| s.to_string());
        w.write_record([
            outer.iteration.to_string(),
            r.restart.to_string(),
            fmt_float(r.nominal_cost),
            r.cumulative_evaluations.to_string(),
            fmt_float(r.sigma_lse),
            fmt_float(r.delta_scale),
            status,
            fmt_float(r.wall_ms.total()),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub ok: bool,
    pub initial_cost: Option<f64>,
    pub final_cost: Option<f64>,
    pub iterations: Option<usize>,
    pub iterations_to_tolerance: Option<usize>,
    pub evaluations: Option<u64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Spread {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub problem: String,
    pub method: Method,
    pub ablation: Ablation,
    pub seeds: Vec<SeedSummary>,
    pub failed_seeds: usize,
    pub final_cost: Option<Spread>,
    pub config: GlobalMppiConfig,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn spread(values: &[f64]) -> Option<Spread> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q1, q3) = (quantile(&v, 0.25), quantile(&v, 0.75));
    Some(Spread {
        median: quantile(&v, 0.5),
        q1,
        q3,
        iqr: q3 - q1,
    })
}

pub struct ExperimentOutcome {
    pub summary: Summary,
    pub traces: Vec<(u64, Result<RunTrace>)>,
}

/// Runs every seed and returns the traces and the summary without writing
/// anything.
pub fn run_seeds(exp: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let problem =
        problem_by_name(&exp.problem).ok_or_else(|| Error::Config(format!("unknown problem '{}'", exp.problem)))?;
    let traces: Vec<(u64, Result<RunTrace>)> = exp
        .seeds
        .par_iter()
        .map(|&seed| {
            let cfg = GlobalMppiConfig {
                seed,
                ..exp.config.clone()
            };
            (seed, run::<f64, _>(&problem, &cfg, exp.method).map(|s| s.trace))
        })
        .collect();
    let seeds: Vec<SeedSummary> = traces
        .iter()
        .map(|(seed, t)| match t {
            Ok(t) => SeedSummary {
                seed: *seed,
                ok: true,
                initial_cost: Some(t.initial_cost),
                final_cost: Some(t.best_cost),
                iterations: Some(t.iterations()),
                iterations_to_tolerance: t.converged_after,
                evaluations: Some(t.evaluations),
                error: None,
            },
            Err(e) => SeedSummary {
                seed: *seed,
                ok: false,
                initial_cost: None,
                final_cost: None,
                iterations: None,
                iterations_to_tolerance: None,
                evaluations: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let finals: Vec<f64> = seeds.iter().filter_map(|s| s.final_cost).collect();
    let summary = Summary {
        problem: exp.problem.clone(),
        method: exp.method,
        ablation: exp.config.ablation,
        failed_seeds: seeds.iter().filter(|s| !s.ok).count(),
        final_cost: spread(&finals),
        seeds,
        config: exp.config.clone(),
    };
    Ok(ExperimentOutcome { summary, traces })
}

/// Runs the experiment and writes `trace_<seed>.csv` files and
/// `summary.json` into the output directory.
pub fn run_experiment(exp: &ExperimentConfig) -> Result<Summary> {
    let outcome = run_seeds(exp)?;
    fs::create_dir_all(&exp.out)?;
    for (seed, trace) in &outcome.traces {
        if let Ok(trace) = trace {
            let file = fs::File::create(exp.out.join(format!("trace_{seed}.csv")))?;
            write_trace_csv(trace, std::io::BufWriter::new(file))?;
        }
    }
    let text = serde_json::to_string_pretty(&outcome.summary).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(exp.out.join("summary.json"), text + "\n")?;
    Ok(outcome.summary)
}

pub fn list_registry() -> String {
    let mut s = String::new();
    for name in problem_names() {
        s.push_str(name);
        s.push('\n');
    }
    for m in Method::ALL {
        s.push_str(m.name());
        s.push('\n');
    }
    s
}

fn configure_threads() {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not configure {n} threads: {e}");
                }
            }
            _ => log::warn!("ignoring {THREADS_ENV}={v}"),
        }
    }
}

/// Entry point; returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    configure_threads();
    match cli.command {
        Command::List => {
            print!("{}", list_registry());
            EXIT_OK
        }
        Command::Run(args) => {
            let exp = match resolve(&args) {
                Ok(e) => e,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            };
            match run_experiment(&exp) {
                Ok(summary) => {
                    for s in &summary.seeds {
                        match (s.final_cost, &s.error) {
                            (Some(c), _) => println!("seed {}: final cost {c:.6e}", s.seed),
                            (None, Some(e)) => eprintln!("seed {} failed: {e}", s.seed),
                            _ => {}
                        }
                    }
                    if summary.failed_seeds == summary.seeds.len() {
                        EXIT_ALL_SEEDS_FAILED
                    } else {
                        EXIT_OK
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    EXIT_FAILURE
                }
            }
        }
    }
}
