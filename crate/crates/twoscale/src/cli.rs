//! Command-line entry point: subcommand dispatch, flat key=value
//! configuration with flag precedence, deterministic execution, CSV
//! reporting, and a manifest recording every setting that influenced a
//! run.
//!
//! Subcommands: `invariant`, `ergodicity`, `regularity`, `coupling`,
//! `simulate`, `average`. Identical configuration and seed produce
//! byte-identical outputs; the thread count (key `threads`, or the
//! `TWOSCALE_THREADS` environment variable) affects speed only.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::averaging::{
    l1_error_experiment, solve_averaged_ode, weak_error_experiment, AveragedSystem,
    ExperimentConfig, TestFunction,
};
use crate::chain::{
    fit_exponential_envelope, invariant_measure, sup_tv_decay, truncate, State,
};
use crate::error::{Error, Result};
use crate::models::{
    make_generator, make_model, FamilyName, GeneratorParams, ModelName, ModelParams,
};
use crate::regularity::blowup_table;
use crate::report;
use crate::sim::{simulate_two_scale, SimConfig};
use crate::skorokhod::{coupling_bound_report, simulate_frozen_coupled};

/// Fixed default seed: reproducibility-first, never time-based.
pub const DEFAULT_SEED: u64 = 424242;

/// Environment variable naming the worker thread count.
pub const THREADS_ENV: &str = "TWOSCALE_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Invariant,
    Ergodicity,
    Regularity,
    Coupling,
    Simulate,
    Average,
}

impl Subcommand {
    pub const ALL: [Subcommand; 6] = [
        Subcommand::Invariant,
        Subcommand::Ergodicity,
        Subcommand::Regularity,
        Subcommand::Coupling,
        Subcommand::Simulate,
        Subcommand::Average,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Subcommand::Invariant => "invariant",
            Subcommand::Ergodicity => "ergodicity",
            Subcommand::Regularity => "regularity",
            Subcommand::Coupling => "coupling",
            Subcommand::Simulate => "simulate",
            Subcommand::Average => "average",
        }
    }

    fn allowed_keys(&self) -> &'static [&'static str] {
        match self {
            Subcommand::Invariant => {
                &["model", "out", "seed", "threads", "x", "trunc", "tol", "decay"]
            }
            Subcommand::Ergodicity => &[
                "model", "out", "seed", "threads", "x", "trunc", "tlo", "thi", "points", "probes",
                "decay",
            ],
            Subcommand::Regularity => &["model", "out", "seed", "threads", "mmax", "beta", "terms"],
            Subcommand::Coupling => &[
                "model", "out", "seed", "threads", "x", "y", "i0", "t", "trunc", "replicates",
                "jumplog", "decay",
            ],
            Subcommand::Simulate => &[
                "model", "out", "seed", "threads", "eps", "alpha", "t", "dt", "trunc", "x0", "i0",
                "s0", "c",
            ],
            Subcommand::Average => &[
                "model", "out", "seed", "threads", "kind", "t", "dt", "trunc", "grid",
                "replicates", "testfn", "x0", "i0", "s0", "c",
            ],
        }
    }
}

impl FromStr for Subcommand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Subcommand::ALL
            .iter()
            .find(|c| c.as_str() == s)
            .copied()
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown subcommand `{s}`; known: {}",
                    Subcommand::ALL.map(|c| c.as_str()).join(", ")
                ))
            })
    }
}

/// A fully resolved run: subcommand plus every setting (defaults filled
/// in), ready for the manifest.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    resolved: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.resolved.get(key).map(|s| s.as_str())
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    fn f64(&self, key: &str) -> Result<f64> {
        parse_f64(key, self.resolved.get(key).expect("resolved key"))
    }

    fn usize(&self, key: &str) -> Result<usize> {
        parse_usize(key, self.resolved.get(key).expect("resolved key"))
    }

    fn u64(&self, key: &str) -> Result<u64> {
        parse_u64(key, self.resolved.get(key).expect("resolved key"))
    }

    fn bool(&self, key: &str) -> Result<bool> {
        let raw = self.resolved.get(key).expect("resolved key");
        match raw.as_str() {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(Error::Config(format!(
                "invalid value for key `{key}`: `{other}` is not a boolean"
            ))),
        }
    }

    fn point(&self, key: &str) -> Result<Vec<f64>> {
        let raw = self.resolved.get(key).expect("resolved key");
        raw.split(',')
            .map(|part| parse_f64(key, part.trim()))
            .collect()
    }
}

fn parse_f64(key: &str, raw: &str) -> Result<f64> {
    raw.parse::<f64>()
        .map_err(|_| Error::Config(format!("invalid value for key `{key}`: `{raw}` is not a number")))
        .and_then(|v| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Config(format!(
                    "invalid value for key `{key}`: must be finite"
                )))
            }
        })
}

fn parse_usize(key: &str, raw: &str) -> Result<usize> {
    raw.parse::<usize>().map_err(|_| {
        Error::Config(format!(
            "invalid value for key `{key}`: `{raw}` is not a nonnegative integer"
        ))
    })
}

fn parse_u64(key: &str, raw: &str) -> Result<u64> {
    raw.parse::<u64>().map_err(|_| {
        Error::Config(format!(
            "invalid value for key `{key}`: `{raw}` is not a 64-bit integer"
        ))
    })
}

/// Parse `eps:alpha` cells separated by commas.
fn parse_grid(raw: &str) -> Result<Vec<(f64, f64)>> {
    raw.split(',')
        .map(|cell| {
            let (e, a) = cell.trim().split_once(':').ok_or_else(|| {
                Error::Config(format!(
                    "invalid value for key `grid`: cell `{cell}` is not eps:alpha"
                ))
            })?;
            Ok((parse_f64("grid", e)?, parse_f64("grid", a)?))
        })
        .collect()
}

/// Parse argv (after the binary name) plus an optional `--config` file into
/// a validated [`RunConfig`]. Flags override file values.
pub fn parse_config(args: &[String]) -> Result<RunConfig> {
    let mut iter = args.iter();
    let sub_raw = iter
        .next()
        .ok_or_else(|| Error::Config("missing subcommand; try --help".into()))?;
    let subcommand: Subcommand = sub_raw.parse()?;

    let mut flags: BTreeMap<String, String> = BTreeMap::new();
    let mut config_path: Option<String> = None;
    while let Some(arg) = iter.next() {
        let key = arg.strip_prefix("--").ok_or_else(|| {
            Error::Config(format!("expected `--key value`, found `{arg}`"))
        })?;
        let value = iter
            .next()
            .ok_or_else(|| Error::Config(format!("missing value for key `{key}`")))?;
        if key == "config" {
            config_path = Some(value.clone());
        } else {
            flags.insert(key.to_string(), value.clone());
        }
    }

    let mut merged: BTreeMap<String, String> = BTreeMap::new();
    if let Some(path) = &config_path {
        for (lineno, line) in fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config file `{path}`: {e}")))?
            .lines()
            .enumerate()
        {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "config file `{path}` line {}: expected key=value",
                    lineno + 1
                ))
            })?;
            merged.insert(key.trim().to_string(), value.trim().to_string());
        }
    }
    merged.extend(flags);

    resolve(subcommand, merged)
}

/// Fill defaults, validate ranges, and reject unknown keys.
fn resolve(subcommand: Subcommand, mut map: BTreeMap<String, String>) -> Result<RunConfig> {
    let allowed = subcommand.allowed_keys();
    for key in map.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "unknown key `{key}` for subcommand `{}`",
                subcommand.as_str()
            )));
        }
    }

    let put = |map: &mut BTreeMap<String, String>, key: &str, value: String| {
        map.entry(key.to_string()).or_insert(value);
    };

    put(&mut map, "out", "out".into());
    put(&mut map, "seed", DEFAULT_SEED.to_string());
    let threads_default = std::env::var(THREADS_ENV)
        .ok()
        .unwrap_or_else(|| available_threads().to_string());
    put(&mut map, "threads", threads_default);

    match subcommand {
        Subcommand::Invariant => {
            put(&mut map, "model", "bd_example21".into());
            put(&mut map, "x", "0.5".into());
            put(&mut map, "trunc", "100".into());
            put(&mut map, "tol", "1e-10".into());
            put(&mut map, "decay", "1".into());
        }
        Subcommand::Ergodicity => {
            put(&mut map, "model", "bd_example21".into());
            put(&mut map, "x", "0.5".into());
            put(&mut map, "trunc", "100".into());
            put(&mut map, "tlo", "1".into());
            put(&mut map, "thi", "20".into());
            put(&mut map, "points", "12".into());
            put(&mut map, "decay", "1".into());
            let trunc = parse_usize("trunc", &map["trunc"])?;
            put(&mut map, "probes", trunc.min(50).to_string());
        }
        Subcommand::Regularity => {
            put(&mut map, "model", "bd_example21".into());
            put(&mut map, "mmax", "50".into());
            put(&mut map, "beta", "1".into());
            let mmax = parse_usize("mmax", &map["mmax"])?;
            put(&mut map, "terms", (60 * mmax.max(2)).to_string());
        }
        Subcommand::Coupling => {
            put(&mut map, "model", "bd_example233".into());
            put(&mut map, "x", "0".into());
            put(&mut map, "y", "0.1".into());
            put(&mut map, "i0", "1".into());
            put(&mut map, "t", "1".into());
            put(&mut map, "trunc", "60".into());
            put(&mut map, "replicates", "10000".into());
            put(&mut map, "jumplog", "false".into());
            put(&mut map, "decay", "1".into());
        }
        Subcommand::Simulate => {
            put(&mut map, "model", "indicator-drift".into());
            put(&mut map, "eps", "0.1".into());
            put(&mut map, "alpha", "0.1".into());
            put(&mut map, "t", "1".into());
            put(&mut map, "trunc", "60".into());
            put(&mut map, "s0", "1".into());
            put(&mut map, "c", "1".into());
            put(&mut map, "i0", "1".into());
            let alpha = parse_f64("alpha", &map["alpha"])?;
            put(&mut map, "dt", (alpha / 20.0).to_string());
            let model: ModelName = map["model"].parse()?;
            let defaults = make_model(model, &ModelParams::default())?;
            put(
                &mut map,
                "x0",
                defaults
                    .x0
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        Subcommand::Average => {
            put(&mut map, "model", "indicator-drift".into());
            put(&mut map, "kind", "ode".into());
            put(&mut map, "t", "1".into());
            put(&mut map, "dt", "0.001".into());
            put(&mut map, "trunc", "60".into());
            put(&mut map, "grid", "0.2:0.2,0.1:0.1,0.05:0.05".into());
            put(&mut map, "replicates", "400".into());
            put(&mut map, "testfn", "tanh".into());
            put(&mut map, "s0", "1".into());
            put(&mut map, "c", "1".into());
            put(&mut map, "i0", "1".into());
            let model: ModelName = map["model"].parse()?;
            let defaults = make_model(model, &ModelParams::default())?;
            put(
                &mut map,
                "x0",
                defaults
                    .x0
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
    }

    let config = RunConfig {
        subcommand,
        resolved: map,
    };
    validate(&config)?;
    Ok(config)
}

fn validate(config: &RunConfig) -> Result<()> {
    let check = |cond: bool, key: &str, reason: &str| -> Result<()> {
        if cond {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid value for key `{key}`: {reason}")))
        }
    };
    if let Some(raw) = config.get("trunc") {
        let trunc = parse_usize("trunc", raw)?;
        check(trunc >= 2, "trunc", "truncation must be >= 2")?;
    }
    if config.get("tol").is_some() {
        check(config.f64("tol")? > 0.0, "tol", "must be positive")?;
    }
    if config.get("threads").is_some() {
        check(config.usize("threads")? >= 1, "threads", "need at least one thread")?;
    }
    if config.get("decay").is_some() {
        check(config.f64("decay")? > 0.0, "decay", "must be positive")?;
    }
    match config.subcommand {
        Subcommand::Invariant => {
            config.point("x")?;
            config.get("model").unwrap().parse::<FamilyName>()?;
        }
        Subcommand::Ergodicity => {
            config.get("model").unwrap().parse::<FamilyName>()?;
            let tlo = config.f64("tlo")?;
            let thi = config.f64("thi")?;
            check(tlo > 0.0, "tlo", "must be positive")?;
            check(thi > tlo, "thi", "must exceed tlo")?;
            check(config.usize("points")? >= 2, "points", "need at least 2 time points")?;
            check(config.usize("probes")? >= 1, "probes", "need at least one probe state")?;
        }
        Subcommand::Regularity => {
            check(
                config.get("model") == Some("bd_example21"),
                "model",
                "the blow-up table is defined for bd_example21",
            )?;
            let mmax = config.usize("mmax")?;
            check(mmax >= 2, "mmax", "need mmax >= 2")?;
            let beta = config.f64("beta")?;
            check(beta > 0.0 && beta <= 1.0, "beta", "exponent must be in (0, 1]")?;
            check(
                config.usize("terms")? >= 60 * mmax,
                "terms",
                "series truncation must be at least 60*mmax",
            )?;
        }
        Subcommand::Coupling => {
            config.get("model").unwrap().parse::<FamilyName>()?;
            config.point("x")?;
            config.point("y")?;
            check(config.usize("i0")? >= 1, "i0", "states are 1-based")?;
            check(config.f64("t")? > 0.0, "t", "horizon must be positive")?;
            check(config.usize("replicates")? >= 100, "replicates", "need at least 100")?;
            config.bool("jumplog")?;
        }
        Subcommand::Simulate => {
            config.get("model").unwrap().parse::<ModelName>()?;
            check(config.f64("eps")? >= 0.0, "eps", "must be >= 0")?;
            check(config.f64("alpha")? > 0.0, "alpha", "must be positive")?;
            check(config.f64("t")? > 0.0, "t", "horizon must be positive")?;
            check(config.f64("dt")? > 0.0, "dt", "step must be positive")?;
            check(config.usize("i0")? >= 1, "i0", "states are 1-based")?;
            check(config.f64("s0")? >= 0.0, "s0", "must be >= 0")?;
            config.point("x0")?;
        }
        Subcommand::Average => {
            config.get("model").unwrap().parse::<ModelName>()?;
            let kind = config.get("kind").unwrap();
            check(
                matches!(kind, "ode" | "l1" | "weak"),
                "kind",
                "must be one of ode, l1, weak",
            )?;
            check(config.f64("t")? > 0.0, "t", "horizon must be positive")?;
            check(config.f64("dt")? > 0.0, "dt", "step must be positive")?;
            parse_grid(config.get("grid").unwrap())?;
            let min_reps = if kind == "l1" { 100 } else { 2 };
            check(
                config.usize("replicates")? >= min_reps,
                "replicates",
                "too few replicates for the experiment",
            )?;
            for name in config.get("testfn").unwrap().split(',') {
                TestFunction::by_name(name.trim())?;
            }
            config.point("x0")?;
        }
    }
    Ok(())
}

fn available_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Execute a resolved run: writes `<out>/<subcommand>.csv` (plus extras)
/// and `<out>/manifest.txt`, returning the written paths.
pub fn run(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let threads = config.usize("threads")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::NumericalFailure(format!("thread pool: {e}")))?;
    pool.install(|| run_inner(config))
}

fn run_inner(config: &RunConfig) -> Result<Vec<PathBuf>> {
    let outdir = PathBuf::from(config.get("out").unwrap());
    fs::create_dir_all(&outdir)?;
    let seed = config.u64("seed")?;
    let mut written = Vec::new();

    match config.subcommand {
        Subcommand::Invariant => {
            let family = family_from(config)?;
            let x = config.point("x")?;
            let chain = truncate(&family, &x, config.usize("trunc")?)?;
            let pi = invariant_measure(&chain, config.f64("tol")?)?;
            written.push(write_csv(&outdir, "invariant.csv", |w| {
                report::write_invariant_csv(w, &pi)
            })?);
        }
        Subcommand::Ergodicity => {
            let family = family_from(config)?;
            let x = config.point("x")?;
            let trunc = config.usize("trunc")?;
            let (tlo, thi) = (config.f64("tlo")?, config.f64("thi")?);
            let points = config.usize("points")?;
            let times: Vec<f64> = (0..points)
                .map(|k| tlo * (thi / tlo).powf(k as f64 / (points - 1) as f64))
                .collect();
            let chain = truncate(&family, &x, trunc)?;
            let probes: Vec<State> = (1..=config.usize("probes")?.min(chain.size())).collect();
            let pi = invariant_measure(&chain, 1e-10)?;
            let decays = sup_tv_decay(&chain, &pi, &times, &probes)?;
            let fit = fit_exponential_envelope(&times, &decays)?;
            written.push(write_csv(&outdir, "ergodicity.csv", |w| {
                report::write_fit_csv(w, &fit)
            })?);
            written.push(write_csv(&outdir, "ergodicity_decay.csv", |w| {
                report::write_decay_csv(w, &times, &decays)
            })?);
        }
        Subcommand::Regularity => {
            let rows = blowup_table(
                config.usize("mmax")?,
                config.f64("beta")?,
                config.usize("terms")?,
            )?;
            written.push(write_csv(&outdir, "regularity.csv", |w| {
                report::write_blowup_csv(w, &rows)
            })?);
        }
        Subcommand::Coupling => {
            let family = family_from(config)?;
            let x = config.point("x")?;
            let y = config.point("y")?;
            let i0 = config.usize("i0")?;
            let t_end = config.f64("t")?;
            let trunc = config.usize("trunc")?;
            let rows = coupling_bound_report(
                &family,
                &[(x.clone(), y.clone())],
                i0,
                t_end,
                trunc,
                config.usize("replicates")?,
                seed,
            )?;
            written.push(write_csv(&outdir, "coupling.csv", |w| {
                report::write_coupling_csv(w, &rows)
            })?);
            if config.bool("jumplog")? {
                let paths = simulate_frozen_coupled(&family, &x, &y, i0, t_end, trunc, seed)?;
                written.push(write_csv(&outdir, "coupling_jumps.csv", |w| {
                    report::write_jump_log_csv(w, &[(0, &paths)])
                })?);
            }
        }
        Subcommand::Simulate => {
            let model = model_from(config)?;
            let sim = SimConfig::new(
                config.f64("eps")?,
                config.f64("alpha")?,
                config.f64("t")?,
                config.f64("dt")?,
                config.usize("trunc")?,
                seed,
            );
            let path = simulate_two_scale(&model, &sim)?;
            written.push(write_csv(&outdir, "simulate.csv", |w| {
                report::write_path_csv(w, &path)
            })?);
        }
        Subcommand::Average => {
            let model = model_from(config)?;
            let trunc = config.usize("trunc")?;
            let t_end = config.f64("t")?;
            match config.get("kind").unwrap() {
                "ode" => {
                    let system = AveragedSystem::new(model.clone(), trunc);
                    let path =
                        solve_averaged_ode(&system, &model.x0, t_end, config.f64("dt")?)?;
                    written.push(write_csv(&outdir, "average.csv", |w| {
                        report::write_ode_path_csv(w, &path)
                    })?);
                }
                kind => {
                    let grid = parse_grid(config.get("grid").unwrap())?;
                    let cfg = ExperimentConfig::new(
                        grid,
                        t_end,
                        config.usize("replicates")?,
                        trunc,
                        seed,
                    );
                    let report_data = if kind == "l1" {
                        l1_error_experiment(&model, &cfg)?
                    } else {
                        let fns: Vec<TestFunction> = config
                            .get("testfn")
                            .unwrap()
                            .split(',')
                            .map(|n| TestFunction::by_name(n.trim()))
                            .collect::<Result<_>>()?;
                        weak_error_experiment(&model, &fns, &cfg)?
                    };
                    written.push(write_csv(&outdir, "average.csv", |w| {
                        report::write_convergence_csv(w, &report_data)
                    })?);
                }
            }
        }
    }

    let mut manifest = config.resolved().clone();
    manifest.insert("subcommand".into(), config.subcommand.as_str().into());
    written.push(write_csv(&outdir, "manifest.txt", |w| {
        report::write_manifest(w, &manifest)
    })?);
    Ok(written)
}

fn family_from(config: &RunConfig) -> Result<crate::chain::GeneratorFamily> {
    let name: FamilyName = config.get("model").unwrap().parse()?;
    let params = GeneratorParams {
        decay: config
            .get("decay")
            .map(|raw| parse_f64("decay", raw))
            .transpose()?
            .unwrap_or(1.0),
    };
    make_generator(name, &params)
}

fn model_from(config: &RunConfig) -> Result<crate::models::TwoScaleModel> {
    let name: ModelName = config.get("model").unwrap().parse()?;
    let params = ModelParams {
        s0: config.f64("s0")?,
        c: config.f64("c")?,
        x0: Some(config.point("x0")?),
        i0: Some(config.usize("i0")?),
    };
    make_model(name, &params)
}

fn write_csv(
    outdir: &Path,
    name: &str,
    writer: impl FnOnce(&mut dyn std::io::Write) -> Result<()>,
) -> Result<PathBuf> {
    let path = outdir.join(name);
    let mut file = std::io::BufWriter::new(fs::File::create(&path)?);
    writer(&mut file)?;
    use std::io::Write as _;
    file.flush()?;
    Ok(path)
}

/// Full CLI driver: parses, runs, prints one line per written file, and
/// returns the process exit code.
pub fn main_with_args(args: &[String]) -> i32 {
    if args.is_empty() || args[0] == "--help" || args[0] == "-h" || args[0] == "help" {
        print!("{}", help_text());
        return 0;
    }
    let config = match parse_config(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match run(&config) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn help_text() -> String {
    let families = FamilyName::ALL.map(|f| f.as_str()).join(", ");
    let models = ModelName::ALL.map(|m| m.as_str()).join(", ");
    format!(
        "twoscale — two-time-scale regime-switching diffusion toolkit

USAGE:
    twoscale <subcommand> [--key value]... [--config FILE]

Config files are flat `key=value` lines with `#` comments; command-line
flags override file values. Every run writes `<out>/<subcommand>.csv`
(plus extras) and `<out>/manifest.txt` recording the resolved settings.
Identical config and seed give byte-identical outputs; `threads` (or the
{THREADS_ENV} environment variable) only changes speed.

SUBCOMMANDS AND KEYS:
    invariant    stationary law of a generator family at fixed x
                 model, x, trunc, tol, decay
    ergodicity   total-variation decay and fitted envelope c·e^(-lambda t)
                 model, x, trunc, tlo, thi, points, probes, decay
    regularity   non-Hoelder blow-up table of the birth-death family
                 mmax, beta, terms
    coupling     shared-mark coupling of two frozen chains + bound check
                 model, x, y, i0, t, trunc, replicates, jumplog, decay
    simulate     one path of the coupled slow/fast system
                 model, eps, alpha, t, dt, trunc, x0, i0, s0, c
    average      averaged ODE (kind=ode) or convergence experiments
                 (kind=l1|weak): model, kind, t, dt, trunc, grid,
                 replicates, testfn, x0, i0, s0, c

COMMON KEYS:
    out      output directory              (default: out)
    seed     64-bit seed                   (default: {DEFAULT_SEED})
    threads  worker threads                (default: available parallelism)

VALUES:
    model    generator families: {families}
             path/experiment models: {models}
    grid     eps:alpha cells, e.g. 0.2:0.2,0.1:0.1,0.05:0.05
    testfn   comma-separated: tanh, clip10
    x, x0    comma-separated coordinates for d > 1
"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    fn temp_dir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("twoscale_cli_{tag}_{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn parse_basic_invariant() {
        let cfg = parse_config(&args(&[
            "invariant", "--model", "bd_example21", "--x", "0.5", "--trunc", "100",
        ]))
        .unwrap();
        assert_eq!(cfg.subcommand, Subcommand::Invariant);
        assert_eq!(cfg.get("x"), Some("0.5"));
        assert_eq!(cfg.get("trunc"), Some("100"));
        // Defaults resolved.
        assert_eq!(cfg.get("seed"), Some("424242"));
        assert_eq!(cfg.get("tol"), Some("1e-10"));
    }

    #[test]
    fn flags_override_config_file() {
        let dir = temp_dir("precedence");
        let file = dir.join("run.conf");
        fs::write(&file, "alpha=0.05\neps=0.3 # inline comment\n\n# full comment\n").unwrap();
        let cfg = parse_config(&args(&[
            "simulate",
            "--config",
            file.to_str().unwrap(),
            "--alpha",
            "0.01",
        ]))
        .unwrap();
        assert_eq!(cfg.get("alpha"), Some("0.01"));
        assert_eq!(cfg.get("eps"), Some("0.3"));
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let err = parse_config(&args(&["invariant", "--bogus", "1"])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus"), "{msg}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn tiny_truncation_is_rejected_by_name() {
        let err = parse_config(&args(&["invariant", "--trunc", "1"])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("trunc"), "{msg}");
    }

    #[test]
    fn invariant_run_writes_expected_weights() {
        let dir = temp_dir("invariant");
        let cfg = parse_config(&args(&[
            "invariant",
            "--model",
            "bd_example21",
            "--x",
            "0.5",
            "--trunc",
            "100",
            "--out",
            dir.join("o").to_str().unwrap(),
        ]))
        .unwrap();
        let files = run(&cfg).unwrap();
        let csv = fs::read_to_string(&files[0]).unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("i,pi"));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[0], "1");
        let pi1: f64 = first[1].parse().unwrap();
        assert!((pi1 - 0.5).abs() < 1e-9);
        // Manifest records every resolved key.
        let manifest = fs::read_to_string(files.last().unwrap()).unwrap();
        for needle in ["seed=424242", "trunc=100", "subcommand=invariant", "tol=1e-10"] {
            assert!(manifest.contains(needle), "manifest missing {needle}:\n{manifest}");
        }
    }

    #[test]
    fn reruns_are_byte_identical_and_thread_count_free() {
        let dir = temp_dir("determinism");
        let run_with = |out: &Path, threads: &str| -> Vec<u8> {
            let cfg = parse_config(&args(&[
                "coupling",
                "--model",
                "bd_example233",
                "--x",
                "0",
                "--y",
                "0.1",
                "--t",
                "0.5",
                "--trunc",
                "30",
                "--replicates",
                "200",
                "--threads",
                threads,
                "--out",
                out.to_str().unwrap(),
            ]))
            .unwrap();
            let files = run(&cfg).unwrap();
            fs::read(&files[0]).unwrap()
        };
        let a = run_with(&dir.join("a"), "1");
        let b = run_with(&dir.join("b"), "1");
        let c = run_with(&dir.join("c"), "4");
        assert_eq!(a, b, "same-thread reruns differ");
        assert_eq!(a, c, "thread count changed the bytes");
    }

    #[test]
    fn grid_parsing() {
        let grid = parse_grid("0.2:0.2, 0.1:0.1,0.05:0.05").unwrap();
        assert_eq!(grid.len(), 3);
        assert_eq!(grid[1], (0.1, 0.1));
        assert!(parse_grid("0.2;0.2").is_err());
    }

    #[test]
    fn average_ode_run_matches_closed_form() {
        let dir = temp_dir("avg_ode");
        let cfg = parse_config(&args(&[
            "average",
            "--model",
            "indicator-drift",
            "--kind",
            "ode",
            "--t",
            "1",
            "--dt",
            "0.001",
            "--trunc",
            "80",
            "--x0",
            "0",
            "--out",
            dir.join("o").to_str().unwrap(),
        ]))
        .unwrap();
        let files = run(&cfg).unwrap();
        let csv = fs::read_to_string(&files[0]).unwrap();
        let last = csv.lines().last().unwrap();
        let xbar: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
        let expect = 1.0 - (-1.0f64).exp();
        assert!((xbar - expect).abs() < 1e-6, "{xbar} vs {expect}");
    }

    #[test]
    fn regularity_run_row_count() {
        let dir = temp_dir("regularity");
        let cfg = parse_config(&args(&[
            "regularity",
            "--mmax",
            "50",
            "--out",
            dir.join("o").to_str().unwrap(),
        ]))
        .unwrap();
        let files = run(&cfg).unwrap();
        let csv = fs::read_to_string(&files[0]).unwrap();
        assert_eq!(csv.lines().count(), 50, "header + 49 rows");
    }
}
