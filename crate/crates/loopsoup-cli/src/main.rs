//! Command-line driver: configure an experiment, run it, write reproducible
//! output.
//!
//! Every run resolves its parameters in the same order — command-line flag,
//! then `KEY=VALUE` config file (`--config`), then the `LOOPSOUP_SEED`
//! environment variable (seed only), then the built-in default — validates
//! them, executes, and writes two files under the `--out` base path: a
//! JSON-lines file with one full record per experiment and a CSV with one
//! row per `(k, n)` point.  With a fixed seed the data files are
//! reproducible byte for byte (the JSONL `wall_time_s` field is the one
//! documented exception; the CSV omits it entirely).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{self, ExitCode};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use loopsoup::clusters::{ArmEventKind, ArmKind, Setting};
use loopsoup::experiments::{
    estimate_arm_batch, estimate_arm_budgeted, estimate_gff_segment_connection, estimate_n_lambda,
    fit_exponent, quasi_mult_ratio, verify_resistance_drop, Budget, Estimate, ExperimentRecord,
    FitMode, NLambdaSetting,
};
use loopsoup::gff::GffSampler;
use loopsoup::lattice::{Domain, DomainLabel};
use loopsoup::potential::PotentialSolver;
use loopsoup::rwls::{build_vertex_laws, sample_rwls, VertexOrder};
use loopsoup::selftest::run_selftest;

#[derive(Parser)]
#[command(
    name = "loopsoup",
    about = "Loop-soup and free-field cluster experiments on Z² and its metric graph",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Estimate one arm-event probability.
    Arm(ArmArgs),
    /// Estimate an event across several inner radii and fit the log–log slope.
    Fit(FitArgs),
    /// Quasi-multiplicativity ratio π̂₄(n) / (π̂₄(k)·π̂₄(k,n)).
    Quasi(QuasiArgs),
    /// Mean count of well-separated boundary points still connected outward.
    Nlambda(NlambdaArgs),
    /// Cross-check an estimate against its closed-form prediction.
    Verify(VerifyArgs),
    /// Draw one sample (loop soup or field) and write it to a text file.
    Sample(SampleArgs),
    /// Run the fast invariant suite; nonzero exit on any failure.
    Selftest,
}

/// Options shared by every experiment subcommand.
#[derive(Args)]
struct Common {
    /// KEY=VALUE defaults file; explicit flags take precedence.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// RNG seed (fallback: config file, then $LOOPSOUP_SEED, then 1).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    /// Fail (nonzero exit, no output files) if the run exceeds this wall time.
    #[arg(long, value_name = "SECONDS")]
    max_seconds: Option<f64>,
    /// Output base path: writes <OUT>.jsonl and <OUT>.csv.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    /// Four-arm event (two outermost crossing clusters).
    Four,
    /// Half-plane two-arm event (one crossing cluster).
    TwoPlus,
    /// Positive boundary-segment cluster reaching distance n (metric only).
    Segment,
}

impl FromStr for KindArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <KindArg as ValueEnum>::from_str(s, true)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SettingArg {
    Metric,
    Discrete,
}

impl FromStr for SettingArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        <SettingArg as ValueEnum>::from_str(s, true)
    }
}

impl From<SettingArg> for Setting {
    fn from(s: SettingArg) -> Setting {
        match s {
            SettingArg::Metric => Setting::Metric,
            SettingArg::Discrete => Setting::Discrete,
        }
    }
}

#[derive(Args)]
struct ArmArgs {
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long, value_enum)]
    setting: Option<SettingArg>,
    #[arg(long)]
    n: Option<i32>,
    #[arg(long)]
    k: Option<i32>,
    /// Soup intensity (discrete setting only).
    #[arg(long)]
    alpha: Option<f64>,
    /// Replica count, or `auto` for the rare-event schedule.
    #[arg(long)]
    replicas: Option<String>,
    /// Hits required before `auto` stops sampling.
    #[arg(long)]
    min_hits: Option<u64>,
    /// Replica cap for `auto`.
    #[arg(long)]
    max_replicas: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long, value_enum)]
    setting: Option<SettingArg>,
    #[arg(long)]
    n: Option<i32>,
    /// Comma-separated inner radii, e.g. `2,4,8,16`.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    replicas: Option<String>,
    #[arg(long)]
    min_hits: Option<u64>,
    #[arg(long)]
    max_replicas: Option<u64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct QuasiArgs {
    #[arg(long, value_enum)]
    setting: Option<SettingArg>,
    #[arg(long)]
    n: Option<i32>,
    #[arg(long)]
    k: Option<i32>,
    /// Replicas per sub-estimate (fixed count only).
    #[arg(long)]
    replicas: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct NlambdaArgs {
    #[arg(long, value_enum)]
    setting: Option<SettingArg>,
    #[arg(long)]
    n: Option<i32>,
    /// Window radius (discrete setting only).
    #[arg(long)]
    k: Option<i32>,
    #[arg(long)]
    replicas: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CheckArg {
    /// Effective-resistance drop vs the reflection-principle value.
    ResistanceDrop,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    check: CheckArg,
    #[arg(long)]
    n: Option<i32>,
    #[arg(long)]
    k: Option<i32>,
    /// Resistance-drop threshold.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    replicas: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, value_enum)]
    setting: Option<SettingArg>,
    #[arg(long)]
    n: Option<i32>,
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    common: Common,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Arm(a) => cmd_arm(a),
        Cmd::Fit(a) => cmd_fit(a),
        Cmd::Quasi(a) => cmd_quasi(a),
        Cmd::Nlambda(a) => cmd_nlambda(a),
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::Sample(a) => cmd_sample(a),
        Cmd::Selftest => cmd_selftest(),
    }
}

// ---------------------------------------------------------------- config

/// `KEY=VALUE` config file; `#` starts a comment, keys are case-insensitive
/// and may use `-` or `_` interchangeably.
struct Config {
    values: BTreeMap<String, String>,
}

const CONFIG_KEYS: &[&str] = &[
    "experiment",
    "kind",
    "setting",
    "alpha",
    "n",
    "k",
    "c",
    "replicas",
    "min_hits",
    "max_replicas",
    "seed",
    "jobs",
    "max_seconds",
    "out",
];

impl Config {
    fn load(path: Option<&Path>) -> Result<Config> {
        let mut values = BTreeMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    anyhow!("{}:{}: expected KEY=VALUE", path.display(), lineno + 1)
                })?;
                let key = key.trim().to_ascii_lowercase().replace('-', "_");
                if !CONFIG_KEYS.contains(&key.as_str()) {
                    bail!("{}:{}: unknown config key `{key}`", path.display(), lineno + 1);
                }
                values.insert(key, value.trim().to_string());
            }
        }
        Ok(Config { values })
    }

    /// The flag value if given, else the parsed file value, else `None`.
    fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("config key `{key}`: bad value `{raw}`: {e}")),
        }
    }

    /// Error out if the config file names a different experiment.
    fn check_experiment(&self, name: &str) -> Result<()> {
        if let Some(exp) = self.values.get("experiment") {
            if exp != name {
                bail!("config file is for experiment `{exp}`, but the command line says `{name}`");
            }
        }
        Ok(())
    }
}

fn resolve_seed(cfg: &Config, flag: Option<u64>) -> Result<u64> {
    if let Some(s) = cfg.resolve(flag, "seed")? {
        return Ok(s);
    }
    match std::env::var("LOOPSOUP_SEED") {
        Ok(raw) => raw.parse().map_err(|e| anyhow!("LOOPSOUP_SEED: bad value `{raw}`: {e}")),
        Err(_) => Ok(1),
    }
}

fn setup_jobs(cfg: &Config, flag: Option<usize>) -> Result<()> {
    if let Some(jobs) = cfg.resolve(flag, "jobs")? {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("installing the worker pool")?;
    }
    Ok(())
}

/// Resolve `--replicas/--min-hits/--max-replicas` into a [`Budget`];
/// `None` when nothing specifies a replica count.
fn budget_from(
    cfg: &Config,
    replicas: Option<String>,
    min_hits: Option<u64>,
    max_replicas: Option<u64>,
) -> Result<Option<Budget>> {
    let min_hits = cfg.resolve(min_hits, "min_hits")?.unwrap_or(100);
    let max_replicas = cfg.resolve(max_replicas, "max_replicas")?.unwrap_or(10_000_000);
    let raw = cfg.resolve(replicas, "replicas")?;
    match raw.as_deref() {
        None => Ok(None),
        Some("auto") => {
            if max_replicas == 0 {
                bail!("--max-replicas must be at least 1");
            }
            Ok(Some(Budget::Auto { min_hits, max_replicas }))
        }
        Some(raw) => {
            let count: u64 = raw
                .parse()
                .map_err(|e| anyhow!("--replicas: expected a count or `auto`, got `{raw}`: {e}"))?;
            if count == 0 {
                bail!("--replicas must be at least 1");
            }
            Ok(Some(Budget::Fixed(count)))
        }
    }
}

fn fixed_replicas(cfg: &Config, replicas: Option<String>) -> Result<u64> {
    match budget_from(cfg, replicas, None, None)? {
        Some(Budget::Fixed(count)) => Ok(count),
        Some(Budget::Auto { .. }) => bail!("this experiment needs a fixed --replicas count"),
        None => bail!("missing required parameter --replicas (flag or config file)"),
    }
}

/// The geometry/intensity invariants every experiment shares.
fn validate_geometry(n: i32, ks: &[i32], alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        bail!("alpha = {alpha} is outside the admissible range (0, 0.5]");
    }
    for &k in ks {
        if !(1 <= k && 2 * k <= n) {
            bail!("geometry k = {k}, n = {n} violates 1 ≤ k ≤ n/2");
        }
    }
    Ok(())
}

fn require<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| anyhow!("missing required parameter {what} (flag or config file)"))
}

// ---------------------------------------------------------------- output

/// `<base>` plus a literal suffix (`with_extension` would eat a dotted base).
fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn out_base(cfg: &Config, flag: Option<PathBuf>) -> Result<PathBuf> {
    Ok(cfg.resolve(flag, "out")?.unwrap_or_else(|| PathBuf::from("loopsoup-run")))
}

fn write_json_doc<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("creating {}", path.display()))?;
    Ok(())
}

/// Set once the final budget check has passed and output writing has begun;
/// from then on the watchdog must not kill the process mid-write.
static OUTPUT_COMMITTED: AtomicBool = AtomicBool::new(false);

/// Collects records, enforces the wall-time budget, writes the output pair.
struct Runner {
    t0: Instant,
    max_seconds: Option<f64>,
    records: Vec<ExperimentRecord>,
}

impl Runner {
    fn new(cfg: &Config, flag: Option<f64>) -> Result<Runner> {
        let max_seconds = cfg.resolve(flag, "max_seconds")?;
        if let Some(s) = max_seconds {
            if !(s >= 0.0) {
                bail!("--max-seconds must be nonnegative");
            }
        }
        let r = Runner { t0: Instant::now(), max_seconds, records: Vec::new() };
        r.check_budget()?; // a zero budget is infeasible before any work
        r.arm_watchdog();
        Ok(r)
    }

    fn check_budget(&self) -> Result<()> {
        let elapsed = self.t0.elapsed().as_secs_f64();
        if let Some(max) = self.max_seconds {
            if elapsed > max {
                bail!(
                    "wall-time budget of {max}s exceeded ({elapsed:.1}s elapsed); \
                     no output written — raise --max-seconds or lower the replica budget"
                );
            }
        }
        Ok(())
    }

    /// Abort the whole process at the deadline so the budget actually bounds
    /// wall time; sampling has no cancellation points, so a sleeping thread
    /// is the only way to interrupt it.  Output files are never truncated:
    /// writing starts only after `commit`, which stands the watchdog down.
    fn arm_watchdog(&self) {
        let Some(max) = self.max_seconds else { return };
        let t0 = self.t0;
        thread::spawn(move || {
            let remaining = max - t0.elapsed().as_secs_f64();
            if remaining > 0.0 {
                thread::sleep(Duration::from_secs_f64(remaining));
            }
            if !OUTPUT_COMMITTED.load(Ordering::Acquire) {
                eprintln!(
                    "error: wall-time budget of {max}s exceeded; \
                     no output written — raise --max-seconds or lower the replica budget"
                );
                process::exit(1);
            }
        });
    }

    /// Final budget check; past this point output is committed and the
    /// watchdog no longer fires.
    fn commit(&self) -> Result<()> {
        self.check_budget()?;
        OUTPUT_COMMITTED.store(true, Ordering::Release);
        Ok(())
    }

    /// Record one finished estimate and print its one-line summary.
    fn push(&mut self, est: &Estimate, params: &[(&str, f64)]) {
        let wall = self.t0.elapsed().as_secs_f64();
        println!(
            "{}: {:.6e} ± {:.2e}  ({} replicas)",
            est.label, est.mean, est.std_error, est.replicas
        );
        self.records.push(ExperimentRecord::from_estimate(est, params, wall));
    }

    /// Enforce the budget once more, then write `<out>.jsonl` and `<out>.csv`.
    fn finish(self, out: &Path) -> Result<()> {
        self.commit()?;
        let jsonl = with_suffix(out, ".jsonl");
        let csv = with_suffix(out, ".csv");
        let mut w = BufWriter::new(
            fs::File::create(&jsonl).with_context(|| format!("creating {}", jsonl.display()))?,
        );
        ExperimentRecord::write_jsonl(&self.records, &mut w)?;
        w.flush()?;
        let mut w = BufWriter::new(
            fs::File::create(&csv).with_context(|| format!("creating {}", csv.display()))?,
        );
        ExperimentRecord::write_csv(&self.records, &mut w)?;
        w.flush()?;
        println!("wrote {} and {}", jsonl.display(), csv.display());
        Ok(())
    }
}

// ----------------------------------------------------------- subcommands

fn arm_event(kind: KindArg, setting: Setting, k: i32, n: i32) -> Result<ArmEventKind> {
    let kind = match kind {
        KindArg::Four => ArmKind::FourArmLocal { k, n },
        KindArg::TwoPlus => ArmKind::TwoArmHalfPlaneLocal { k, n },
        KindArg::Segment => bail!("`segment` is a fit-only kind; use `fit --kind segment`"),
    };
    Ok(ArmEventKind { kind, setting })
}

fn cmd_arm(a: ArmArgs) -> Result<()> {
    let cfg = Config::load(a.common.config.as_deref())?;
    cfg.check_experiment("arm")?;
    setup_jobs(&cfg, a.common.jobs)?;
    let kind = require(cfg.resolve(a.kind, "kind")?, "--kind")?;
    let setting: Setting = require(cfg.resolve(a.setting, "setting")?, "--setting")?.into();
    let n = require(cfg.resolve(a.n, "n")?, "--n")?;
    let k = require(cfg.resolve(a.k, "k")?, "--k")?;
    let alpha = cfg.resolve(a.alpha, "alpha")?.unwrap_or(0.5);
    let seed = resolve_seed(&cfg, a.common.seed)?;
    let budget = require(budget_from(&cfg, a.replicas, a.min_hits, a.max_replicas)?, "--replicas")?;
    validate_geometry(n, &[k], alpha)?;

    let mut runner = Runner::new(&cfg, a.common.max_seconds)?;
    let event = arm_event(kind, setting, k, n)?;
    let est = estimate_arm_budgeted(event, budget, seed, alpha)?;
    runner.push(&est, &[("alpha", alpha), ("k", k as f64), ("n", n as f64)]);
    runner.finish(&out_base(&cfg, a.common.out)?)
}

fn parse_k_list(raw: &str) -> Result<Vec<i32>> {
    let ks: Vec<i32> = raw
        .split(',')
        .map(|t| t.trim().parse::<i32>().map_err(|e| anyhow!("--k: bad entry `{t}`: {e}")))
        .collect::<Result<_>>()?;
    if ks.len() < 3 {
        bail!("a slope fit needs at least 3 radii, got {}", ks.len());
    }
    Ok(ks)
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let cfg = Config::load(a.common.config.as_deref())?;
    cfg.check_experiment("fit")?;
    setup_jobs(&cfg, a.common.jobs)?;
    let kind = require(cfg.resolve(a.kind, "kind")?, "--kind")?;
    let setting: Setting = require(cfg.resolve(a.setting, "setting")?, "--setting")?.into();
    let n = require(cfg.resolve(a.n, "n")?, "--n")?;
    let ks = parse_k_list(&require(cfg.resolve(a.k, "k")?, "--k")?)?;
    let alpha = cfg.resolve(a.alpha, "alpha")?.unwrap_or(0.5);
    let seed = resolve_seed(&cfg, a.common.seed)?;
    let budget = require(budget_from(&cfg, a.replicas, a.min_hits, a.max_replicas)?, "--replicas")?;
    validate_geometry(n, &ks, alpha)?;
    let out = out_base(&cfg, a.common.out)?;
    let mut runner = Runner::new(&cfg, a.common.max_seconds)?;

    let mut points: Vec<((i32, i32), Estimate)> = Vec::new();
    match (kind, budget) {
        (KindArg::Segment, budget) => {
            if setting != Setting::Metric {
                bail!("the segment connection is defined on the metric graph only");
            }
            let Budget::Fixed(replicas) = budget else {
                bail!("`fit --kind segment` needs a fixed --replicas count");
            };
            // Separate runs per k: the boundary data changes with the
            // segment, so samples cannot be shared across radii.
            for (i, &k) in ks.iter().enumerate() {
                runner.check_budget()?;
                let point_seed = seed + ((i as u64) << 40);
                let est = estimate_gff_segment_connection(n, k, replicas, point_seed)?;
                runner.push(&est, &[("k", k as f64), ("n", n as f64)]);
                points.push(((k, n), est));
            }
        }
        // One pass with shared samples: every k-event is evaluated on the
        // same decompositions, so the whole grid costs one k's worth of
        // sampling.
        (_, Budget::Fixed(replicas)) => {
            let events: Vec<ArmEventKind> =
                ks.iter().map(|&k| arm_event(kind, setting, k, n)).collect::<Result<_>>()?;
            let ests = estimate_arm_batch(&events, replicas, seed, alpha)?;
            for (&k, est) in ks.iter().zip(&ests) {
                runner.push(est, &[("alpha", alpha), ("k", k as f64), ("n", n as f64)]);
                points.push(((k, n), est.clone()));
            }
        }
        (_, auto) => {
            for (i, &k) in ks.iter().enumerate() {
                runner.check_budget()?;
                let event = arm_event(kind, setting, k, n)?;
                let point_seed = seed + ((i as u64) << 40);
                let est = estimate_arm_budgeted(event, auto, point_seed, alpha)?;
                runner.push(&est, &[("alpha", alpha), ("k", k as f64), ("n", n as f64)]);
                points.push(((k, n), est));
            }
        }
    }

    let fit = fit_exponent(&points, FitMode::VaryK)?;
    println!("slope {:.4} ± {:.4} (intercept {:.4})", fit.slope, fit.slope_stderr, fit.intercept);
    runner.check_budget()?;
    let fit_path = with_suffix(&out, ".fit.json");
    write_json_doc(&fit_path, &fit)?;
    println!("wrote {}", fit_path.display());
    runner.finish(&out)
}

fn cmd_quasi(a: QuasiArgs) -> Result<()> {
    let cfg = Config::load(a.common.config.as_deref())?;
    cfg.check_experiment("quasi")?;
    setup_jobs(&cfg, a.common.jobs)?;
    let setting: Setting = require(cfg.resolve(a.setting, "setting")?, "--setting")?.into();
    let n = require(cfg.resolve(a.n, "n")?, "--n")?;
    let k = require(cfg.resolve(a.k, "k")?, "--k")?;
    let replicas = fixed_replicas(&cfg, a.replicas)?;
    let seed = resolve_seed(&cfg, a.common.seed)?;
    validate_geometry(n, &[k], 0.5)?;
    let out = out_base(&cfg, a.common.out)?;
    let mut runner = Runner::new(&cfg, a.common.max_seconds)?;

    let report = quasi_mult_ratio(n, k, replicas, seed, setting)?;
    runner.push(&report.pi_n, &[("k", 1.0), ("n", n as f64)]);
    runner.push(&report.pi_k, &[("k", 1.0), ("n", k as f64)]);
    runner.push(&report.pi_kn, &[("k", k as f64), ("n", n as f64)]);
    println!("quasi-multiplicativity ratio {:.4} ± {:.4}", report.ratio, report.ratio_se);
    runner.check_budget()?;
    let report_path = with_suffix(&out, ".quasi.json");
    write_json_doc(&report_path, &report)?;
    println!("wrote {}", report_path.display());
    runner.finish(&out)
}

fn cmd_nlambda(a: NlambdaArgs) -> Result<()> {
    let cfg = Config::load(a.common.config.as_deref())?;
    cfg.check_experiment("nlambda")?;
    setup_jobs(&cfg, a.common.jobs)?;
    let setting = require(cfg.resolve(a.setting, "setting")?, "--setting")?;
    let n = require(cfg.resolve(a.n, "n")?, "--n")?;
    let k = cfg.resolve(a.k, "k")?;
    let replicas = fixed_replicas(&cfg, a.replicas)?;
    let seed = resolve_seed(&cfg, a.common.seed)?;
    let (nl_setting, params) = match (setting, k) {
        (SettingArg::Metric, None) => (NLambdaSetting::Metric, vec![("n", n as f64)]),
        (SettingArg::Metric, Some(_)) => bail!("--k applies to the discrete statistic only"),
        (SettingArg::Discrete, Some(k)) => {
            (NLambdaSetting::DiscreteK(k), vec![("k", k as f64), ("n", n as f64)])
        }
        (SettingArg::Discrete, None) => bail!("the discrete statistic needs --k"),
    };
    let mut runner = Runner::new(&cfg, a.common.max_seconds)?;
    let est = estimate_n_lambda(n, replicas, seed, nl_setting)?;
    runner.push(&est, &params);
    runner.finish(&out_base(&cfg, a.common.out)?)
}

fn cmd_verify(a: VerifyArgs) -> Result<()> {
    let cfg = Config::load(a.common.config.as_deref())?;
    cfg.check_experiment("verify")?;
    setup_jobs(&cfg, a.common.jobs)?;
    let CheckArg::ResistanceDrop = a.check;
    let n = require(cfg.resolve(a.n, "n")?, "--n")?;
    let k = require(cfg.resolve(a.k, "k")?, "--k")?;
    let c = cfg.resolve(a.c, "c")?.unwrap_or(0.1);
    let replicas = fixed_replicas(&cfg, a.replicas)?;
    let seed = resolve_seed(&cfg, a.common.seed)?;
    validate_geometry(n, &[k], 0.5)?;
    let mut runner = Runner::new(&cfg, a.common.max_seconds)?;

    let (est, analytic) = verify_resistance_drop(n, k, c, replicas, seed)?;
    runner.push(
        &est,
        &[("analytic", analytic), ("c", c), ("k", k as f64), ("n", n as f64)],
    );
    println!(
        "estimate {:.5} vs analytic {:.5} (ratio {:.3})",
        est.mean,
        analytic,
        est.mean / analytic
    );
    runner.finish(&out_base(&cfg, a.common.out)?)
}

fn cmd_sample(a: SampleArgs) -> Result<()> {
    let cfg = Config::load(a.common.config.as_deref())?;
    cfg.check_experiment("sample")?;
    setup_jobs(&cfg, a.common.jobs)?;
    let setting = require(cfg.resolve(a.setting, "setting")?, "--setting")?;
    let n = require(cfg.resolve(a.n, "n")?, "--n")?;
    let alpha = cfg.resolve(a.alpha, "alpha")?.unwrap_or(0.5);
    let seed = resolve_seed(&cfg, a.common.seed)?;
    validate_geometry(n, &[], alpha)?;
    if n < 1 {
        bail!("--n must be at least 1");
    }
    let out = out_base(&cfg, a.common.out)?;
    let runner = Runner::new(&cfg, a.common.max_seconds)?;

    let domain = Arc::new(Domain::build(DomainLabel::Box { n })?);
    match setting {
        SettingArg::Discrete => {
            let laws = build_vertex_laws(&domain, VertexOrder::Lex)?;
            let soup = sample_rwls(&laws, alpha, seed);
            runner.commit()?;
            let path = with_suffix(&out, ".soup.txt");
            let mut w = BufWriter::new(
                fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?,
            );
            soup.write_text(&mut w)?;
            w.flush()?;
            println!(
                "sampled {} loops on box {n} at alpha {alpha} (seed {seed}); wrote {}",
                soup.loops().len(),
                path.display()
            );
        }
        SettingArg::Metric => {
            if alpha != 0.5 {
                bail!("the metric-graph field is tied to intensity 1/2");
            }
            let solver = Arc::new(PotentialSolver::new(&domain)?);
            let sampler = GffSampler::new(Arc::clone(&solver), &solver.zero_boundary())?;
            let field = sampler.sample(&mut ChaCha8Rng::seed_from_u64(seed));
            runner.commit()?;
            let path = with_suffix(&out, ".field.txt");
            let mut text = String::new();
            for v in 0..domain.vertex_count() as u32 {
                let p = domain.point(v);
                writeln!(text, "{} {} {}", p.x, p.y, field.value(v))?;
            }
            fs::write(&path, text).with_context(|| format!("creating {}", path.display()))?;
            println!(
                "sampled a field on {} vertices of box {n} (seed {seed}); wrote {}",
                domain.vertex_count(),
                path.display()
            );
        }
    }
    Ok(())
}

fn cmd_selftest() -> Result<()> {
    let outcomes = run_selftest();
    let mut failed = 0;
    for o in &outcomes {
        println!("{o}");
        if !o.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        bail!("{failed} of {} checks failed", outcomes.len());
    }
    println!("all {} checks passed", outcomes.len());
    Ok(())
}
