//! Command-line front end.
//!
//! Settings come from flags and an optional `--config` file of `key = value`
//! lines (or a run manifest); flags win. Keys are the flag names with `-`
//! written as `_`. Exit codes: 0 success, 2 configuration error, 3 domain
//! error, 4 unwritable output.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use num_bigint::BigUint;
use num_rational::Ratio;

use crate::analytic::{self, IndexConvention, ResistanceClass};
use crate::branching::{BranchingConfig, LawMode, DEFAULT_GENERATIONS, DEFAULT_POPULATION_CAP};
use crate::error::{Error, Result};
use crate::experiments::{self, EstimateRecord, Experiment, RunConfig};
use crate::output::{self, Format, RunManifest};
use crate::tree::TreeModel;
use crate::walk::{Kernel, DEFAULT_STEP_CAP};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DOMAIN: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "orrw", version, about = "Once-reinforced random walks on sparse trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-form quantities (--what resistance|critical|ruin|product|bound|sequence|n0|mean|delta)
    Analytic(Opts),
    /// Half-line escape frequency from m to M against the escape product
    Escape(Opts),
    /// Excursion statistics on the block T(x)
    Excursion(Opts),
    /// Survival of the block branching process
    Branching(Opts),
    /// Escape to level 2^(k+levels) before returning to the root
    Probe(Opts),
    /// Fixed-budget walks over a grid of reinforcement values
    Sweep(Opts),
}

/// Every setting is read as text and resolved against the config file.
#[derive(Args, Debug, Default)]
struct Opts {
    /// Tree model: sparse:<d>, weighted:<arity>:<p/q> or halfline
    #[arg(long)]
    model: Option<String>,
    /// Reinforcement parameter
    #[arg(long)]
    a: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long = "M")]
    big_m: Option<String>,
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    n0: Option<String>,
    #[arg(long)]
    k0: Option<String>,
    /// Extra levels n for bounds and probes (target level 2^(k+n))
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    replicas: Option<String>,
    /// Per-replica step budget
    #[arg(long)]
    budget: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<String>,
    /// csv or jsonl
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// key = value settings file, or a run manifest
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    what: Option<String>,
    #[arg(long)]
    generations: Option<String>,
    /// Series terms for resistance
    #[arg(long)]
    terms: Option<String>,
    /// Sequence length
    #[arg(long)]
    count: Option<String>,
    /// Largest k checked by the n0 search
    #[arg(long)]
    k_max: Option<String>,
    /// Excursion kernel: lattice or skeleton
    #[arg(long)]
    kernel: Option<String>,
    /// Offspring law: sampler or empirical:<samples>
    #[arg(long)]
    law: Option<String>,
    #[arg(long)]
    population_cap: Option<String>,
    /// Comma-separated reinforcement values
    #[arg(long)]
    a_grid: Option<String>,
}

impl Opts {
    fn flags(&self) -> BTreeMap<String, String> {
        let pairs = [
            ("model", &self.model),
            ("a", &self.a),
            ("m", &self.m),
            ("M", &self.big_m),
            ("k", &self.k),
            ("n0", &self.n0),
            ("k0", &self.k0),
            ("levels", &self.levels),
            ("replicas", &self.replicas),
            ("budget", &self.budget),
            ("seed", &self.seed),
            ("threads", &self.threads),
            ("format", &self.format),
            ("out", &self.out),
            ("what", &self.what),
            ("generations", &self.generations),
            ("terms", &self.terms),
            ("count", &self.count),
            ("k_max", &self.k_max),
            ("kernel", &self.kernel),
            ("law", &self.law),
            ("population_cap", &self.population_cap),
            ("a_grid", &self.a_grid),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k.to_owned(), v)))
            .collect()
    }
}

/// Resolved settings; lookups record defaults so the manifest shows them.
struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    fn load(opts: &Opts) -> Result<Self> {
        let mut values = match &opts.config {
            Some(path) => read_config(path)?,
            None => BTreeMap::new(),
        };
        values.extend(opts.flags());
        Ok(Settings { values })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(s) => s
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("invalid value {s:?} for {key}"))),
        }
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::Config(format!("missing --{}", key.replace('_', "-"))))
    }

    fn or<T: FromStr + ToString>(&mut self, key: &str, default: T) -> Result<T> {
        match self.get(key)? {
            Some(v) => Ok(v),
            None => {
                self.values.insert(key.to_owned(), default.to_string());
                Ok(default)
            }
        }
    }

    fn sparse_d(&mut self) -> Result<u32> {
        let model: TreeModel = self.require("model")?;
        model
            .sparse_d()
            .filter(|_| matches!(model, TreeModel::Sparse { .. }))
            .ok_or_else(|| Error::Config(format!("{model} is not a sparse:<d> model")))
    }

    /// Data-file settings only: what reproduces the records.
    fn for_manifest(&self) -> BTreeMap<String, String> {
        let mut v = self.values.clone();
        v.remove("out");
        v.remove("threads");
        v
    }
}

fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    if text.trim_start().starts_with('{') {
        let m: RunManifest =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("bad manifest {}: {e}", path.display())))?;
        return Ok(m.config);
    }
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}:{}: expected key = value", path.display(), i + 1)))?;
        let key = k.trim().trim_start_matches("--").replace('-', "_");
        out.insert(key, v.trim().to_owned());
    }
    Ok(out)
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("orrw: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Domain(_) | Error::Overflow(_) => EXIT_DOMAIN,
        Error::Io { .. } => EXIT_IO,
    }
}

fn execute(command: Command) -> Result<()> {
    let (name, opts) = match &command {
        Command::Analytic(o) => ("analytic", o),
        Command::Escape(o) => ("escape", o),
        Command::Excursion(o) => ("excursion", o),
        Command::Branching(o) => ("branching", o),
        Command::Probe(o) => ("probe", o),
        Command::Sweep(o) => ("sweep", o),
    };
    let mut s = Settings::load(opts)?;
    let started = Instant::now();
    let records = if name == "analytic" {
        analytic_records(&mut s)?
    } else {
        let config = run_config(name, &mut s)?;
        let threads: Option<usize> = s.get("threads")?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.unwrap_or(0))
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| experiments::run(&config))?
    };
    let format: Format = s.or("format", Format::Csv)?;
    match s.get::<String>("out")? {
        Some(out) => {
            let path = PathBuf::from(out);
            output::write_results(&records, format, &path)?;
            let manifest = RunManifest {
                version: env!("CARGO_PKG_VERSION").to_owned(),
                subcommand: name.to_owned(),
                config: s.for_manifest(),
                seed: s.get("seed")?.unwrap_or(0),
                duration_seconds: started.elapsed().as_secs_f64(),
                records: records.len(),
                summary: records.iter().map(summary_line).collect(),
            };
            output::write_manifest(&manifest, &output::manifest_path(&path))?;
            if name != "analytic" {
                let mut stdout = std::io::stdout().lock();
                for r in &records {
                    let _ = writeln!(stdout, "{}", summary_line(r));
                }
            }
        }
        None if name != "analytic" => {
            output::write_to(&records, format, std::io::stdout().lock()).map_err(|source| Error::Io {
                path: "<stdout>".into(),
                source,
            })?;
        }
        None => {}
    }
    Ok(())
}

fn summary_line(r: &EstimateRecord) -> String {
    let params: Vec<String> = r.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    let mut line = format!("{} [{}] estimate {:?}", r.experiment, params.join(" "), r.estimate);
    if let Some(se) = r.stderr {
        line += &format!(" se {se:?}");
    }
    line += &format!(" n {}", r.n);
    if let (Some(reference), Some(z)) = (r.reference, r.z) {
        line += &format!(" reference {reference:?} z {z:.3}");
    }
    if r.truncated > 0 {
        line += &format!(" truncated {}", r.truncated);
    }
    line
}

fn run_config(name: &str, s: &mut Settings) -> Result<RunConfig> {
    let seed: u64 = s
        .get("seed")?
        .ok_or_else(|| Error::Config(format!("{name} needs --seed (no implicit entropy)")))?;
    let experiment = match name {
        "escape" => {
            let m = s.require("m")?;
            let big_m = s.require("M")?;
            Experiment::Escape { m, big_m }
        }
        "excursion" => {
            let d = s.sparse_d()?;
            Experiment::Excursion {
                d,
                k: s.require("k")?,
                n0: s.require("n0")?,
                kernel: s.or("kernel", Kernel::Lattice)?,
            }
        }
        "probe" => Experiment::Probe {
            model: s.require("model")?,
            k: s.require("k")?,
            levels: s.require("levels")?,
        },
        "sweep" => {
            let grid: String = s.require("a_grid")?;
            let a_grid = grid
                .split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad a_grid entry {x:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Experiment::Sweep {
                model: s.require("model")?,
                a_grid,
            }
        }
        "branching" => {
            let d = s.sparse_d()?;
            let mut cfg = BranchingConfig::new(d, s.require("n0")?, s.or("k0", 1)?, 0.0);
            cfg.generations = s.or("generations", DEFAULT_GENERATIONS)?;
            cfg.kernel = s.or("kernel", Kernel::Skeleton)?;
            cfg.population_cap = s.or("population_cap", DEFAULT_POPULATION_CAP)?;
            let law: String = s.or("law", "sampler".to_owned())?;
            cfg.law = match law.split_once(':') {
                None if law == "sampler" => LawMode::Sampler,
                Some(("empirical", n)) => LawMode::Empirical {
                    samples: n.parse().map_err(|_| Error::Config(format!("bad law {law:?}")))?,
                },
                _ => return Err(Error::Config(format!("bad law {law:?} (sampler|empirical:<samples>)"))),
            };
            Experiment::Branching(cfg)
        }
        _ => unreachable!("simulation subcommand"),
    };
    let default_budget = match name {
        "sweep" => 1_000_000,
        "probe" => 10_000_000,
        _ => DEFAULT_STEP_CAP,
    };
    let a = match experiment {
        Experiment::Sweep { .. } => s.or("a", 1.0)?,
        _ => s.require("a")?,
    };
    let config = RunConfig {
        experiment,
        a,
        replicas: s.or("replicas", 10_000)?,
        budget: s.or("budget", default_budget)?,
        seed,
    };
    config.validate()?;
    Ok(config)
}

fn exact_string(r: &Ratio<BigUint>) -> Option<String> {
    let s = format!("{}/{}", r.numer(), r.denom());
    (s.len() <= 200).then_some(s)
}

/// Evaluates `--what` and prints `name value` lines.
fn analytic_records(s: &mut Settings) -> Result<Vec<EstimateRecord>> {
    let what: String = s.require("what")?;
    let mut lines: Vec<(String, String)> = Vec::new();
    let mut records = Vec::new();
    let mut emit = |name: &str, value: f64, params: Vec<(&str, String)>| {
        lines.push((name.to_owned(), format!("{value:?}")));
        let mut r = EstimateRecord::new(format!("analytic.{name}"), value, 0);
        for (k, v) in params {
            r = r.param(k, v);
        }
        records.push(r);
    };
    let mut extra: Vec<(String, String)> = Vec::new();
    match what.as_str() {
        "resistance" => {
            let model: TreeModel = s.require("model")?;
            let terms = s.or("terms", 70u32)?;
            let r = analytic::effective_resistance::<f64>(&model, terms)?;
            emit(
                "partial_sum",
                r.partial_sum,
                vec![("model", model.to_string()), ("terms", terms.to_string())],
            );
            match r.class {
                ResistanceClass::Finite { limit } => emit("limit", limit, vec![("model", model.to_string())]),
                ResistanceClass::Divergent => extra.push(("limit".into(), "divergent".into())),
            }
        }
        "critical" => {
            let model: TreeModel = s.require("model")?;
            emit(
                "critical",
                analytic::critical_parameter(&model)?,
                vec![("model", model.to_string())],
            );
        }
        "ruin" => {
            let j: u64 = s.require("m")?;
            let a: f64 = s.require("a")?;
            emit(
                "ruin",
                analytic::ruin_step_probability(j, a)?,
                vec![("j", j.to_string()), ("a", a.to_string())],
            );
        }
        "product" => {
            let (m, big_m): (u64, u64) = (s.require("m")?, s.require("M")?);
            let a: f64 = s.require("a")?;
            let p = analytic::escape_product(m, big_m, a)?;
            emit(
                "product",
                p,
                vec![("m", m.to_string()), ("M", big_m.to_string()), ("a", a.to_string())],
            );
            if a.fract() == 0.0 && (1.0..=64.0).contains(&a) {
                if let Some(e) = exact_string(&analytic::escape_product_exact(m, big_m, a as u32)?) {
                    extra.push(("exact".into(), e));
                }
            }
        }
        "bound" => {
            let d = s.sparse_d()?;
            let (k, n): (u32, u32) = (s.require("k")?, s.require("levels")?);
            let a: f64 = s.require("a")?;
            let b = analytic::escape_bound(k, n, a, d)?;
            emit(
                "bound",
                b,
                vec![("d", d.to_string()), ("k", k.to_string()), ("n_levels", n.to_string())],
            );
        }
        "sequence" => {
            let d = s.sparse_d()?;
            let a: f64 = s.require("a")?;
            let count = s.or("count", 8usize)?;
            let seq = analytic::recurrence_level_sequence(a, d, count)?;
            let text: Vec<String> = seq.iter().map(u64::to_string).collect();
            extra.push(("levels".into(), text.join(" ")));
        }
        "n0" => {
            let d = s.sparse_d()?;
            let a: f64 = s.require("a")?;
            let k_max = s.or("k_max", 64u32)?;
            let found = analytic::find_n0(a, d, k_max)?;
            extra.push(("n0".into(), found.n0.to_string()));
            let delta = analytic::delta::<f64>(d, found.n0)?;
            let den = BigUint::from(d).pow(2 * found.n0);
            extra.push(("delta".into(), format!("1/{den} ({delta:?})")));
            if let Some(k) = found.worst_k {
                extra.push(("worst_k".into(), k.to_string()));
            }
            extra.push(("worst_mean".into(), format!("{:?}", found.worst_mean)));
            records.push(
                EstimateRecord::new("analytic.n0", f64::from(found.n0), 0)
                    .param("d", d)
                    .param("a", a),
            );
            records.push(
                EstimateRecord::new("analytic.delta", delta, 0)
                    .param("d", d)
                    .param("n0", found.n0),
            );
        }
        "mean" => {
            let d = s.sparse_d()?;
            let (k, n0): (u32, u32) = (s.require("k")?, s.require("n0")?);
            let a: f64 = s.require("a")?;
            for conv in [IndexConvention::GraphDistance, IndexConvention::LevelPowers] {
                let v = analytic::offspring_mean(k, n0, a, d, conv)?;
                emit(
                    &format!("mean_{}", conv.name()),
                    v,
                    vec![
                        ("d", d.to_string()),
                        ("k", k.to_string()),
                        ("n0", n0.to_string()),
                        ("a", a.to_string()),
                    ],
                );
            }
        }
        "delta" => {
            let d = s.sparse_d()?;
            let n0: u32 = s.require("n0")?;
            let delta = analytic::delta::<f64>(d, n0)?;
            extra.push((
                "delta".into(),
                format!("1/{} ({delta:?})", BigUint::from(d).pow(2 * n0)),
            ));
            records.push(
                EstimateRecord::new("analytic.delta", delta, 0)
                    .param("d", d)
                    .param("n0", n0),
            );
        }
        other => return Err(Error::Config(format!("unknown --what {other:?}"))),
    }
    let mut stdout = std::io::stdout().lock();
    for (k, v) in lines.iter().chain(&extra) {
        let _ = writeln!(stdout, "{k} {v}");
    }
    Ok(records)
}
