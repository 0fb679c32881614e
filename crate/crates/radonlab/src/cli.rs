//! Command-line front end.
//!
//! One binary, subcommand style. A JSON config file may replace flags
//! (`--config path`); explicitly given flags win on conflict, which keeps
//! experiment bundles reproducible while allowing ad-hoc overrides.
//!
//! Exit codes: 0 = all assertions passed; 1 = an invariant or inequality
//! assertion failed (a witness is serialized); 2 = usage or config error.
//!
//! Randomness always flows from an explicit 64-bit seed through ChaCha8, a
//! portable counter-based generator with stable output across platforms
//! and releases; no platform default RNG is ever used. `RADONLAB_THREADS`
//! caps the worker pool.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::exponent::{parse_rat, Exponent};
use crate::normlab::{self, Family, SearchConfig};
use crate::poly::{IntPolynomial, MAX_DEGREE, MAX_N};
use crate::reduce::{self, BridgeConfig, QuadraticTriple, ReduceError};
use crate::regions::{self, Region};
use crate::signal::Signal1D;
use crate::sparse;
use crate::weyl::{self, CountStrategy};

const EXIT_OK: i32 = 0;
const EXIT_VIOLATION: i32 = 1;
const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "radonlab",
    version,
    about = "Desk-scale experiments with discrete polynomial averaging operators"
)]
struct Cli {
    /// JSON config file; explicit flags win on conflict.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output path (defaults to stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Report format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    /// Worker cap; overrides RADONLAB_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Exact rational membership in the exponent regions.
    Region(RegionArgs),
    /// Near-extremal ratio search over an N grid.
    Improving(ImprovingArgs),
    /// Exact even-moment counts of the normalized exponential sums.
    MeanValue(MeanValueArgs),
    /// Closed-form extremizer families.
    Sharpness(SharpnessArgs),
    /// Quadratic completing-the-square transfer checks.
    Transfer(TransferArgs),
    /// Projection lift of 1D averages through the moment curve.
    Lift(LiftArgs),
    /// Fractional-integral bridges (pointwise and dyadic).
    Fractional(FractionalArgs),
    /// Sparse-form evidence: pairings against greedy collections.
    Sparse(SparseArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Region(_) => "region",
            Command::Improving(_) => "improving",
            Command::MeanValue(_) => "mean-value",
            Command::Sharpness(_) => "sharpness",
            Command::Transfer(_) => "transfer",
            Command::Lift(_) => "lift",
            Command::Fractional(_) => "fractional",
            Command::Sparse(_) => "sparse",
        }
    }
}

macro_rules! overlay {
    ($cli:expr, $cfg:expr; $($f:ident),* $(,)?) => {
        $( if $cli.$f.is_none() { $cli.$f = $cfg.$f.clone(); } )*
    };
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RegionArgs {
    /// Region name: t2 | polyrange | necessary | high-necessary | conj-i.
    #[arg(long)]
    which: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    p: Option<Exponent>,
    #[arg(long)]
    q: Option<Exponent>,
    /// Exact rational, e.g. 3/4 (required for conj-i).
    #[arg(long)]
    lambda: Option<String>,
    #[serde(skip)]
    #[arg(skip)]
    command: Option<String>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ImprovingArgs {
    /// Coefficients c0,c1,…,cd (rationals allowed).
    #[arg(long)]
    poly: Option<String>,
    #[arg(long)]
    p: Option<Exponent>,
    #[arg(long)]
    q: Option<Exponent>,
    /// Use q = p'.
    #[arg(long, action = clap::ArgAction::SetTrue)]
    dual: Option<bool>,
    /// Averaging parameters, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Random-signal window length.
    #[arg(long)]
    window: Option<u64>,
    /// Proven upper bound to assert on every best ratio.
    #[arg(long)]
    assert_bound: Option<f64>,
    #[serde(skip)]
    #[arg(skip)]
    command: Option<String>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MeanValueArgs {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    /// Re-derive every count by full enumeration and compare.
    #[arg(long, action = clap::ArgAction::SetTrue)]
    brute_check: Option<bool>,
    /// Counting strategy: hash | sort | auto.
    #[arg(long)]
    strategy: Option<String>,
    /// Cap on enumerated m-tuples.
    #[arg(long)]
    tuple_budget: Option<u128>,
    #[serde(skip)]
    #[arg(skip)]
    command: Option<String>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SharpnessArgs {
    /// Family letters, e.g. a,b or d,e.
    #[arg(long, value_delimiter = ',')]
    family: Option<Vec<String>>,
    /// 1D polynomial (families a, b, c).
    #[arg(long)]
    poly: Option<String>,
    /// Moment-curve dimension (families d, e, f).
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    p: Option<Exponent>,
    #[arg(long)]
    q: Option<Exponent>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    #[serde(skip)]
    #[arg(skip)]
    command: Option<String>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TransferArgs {
    /// Quadratic coefficients a,b,c (nonnegative integers, a >= 1).
    #[arg(long)]
    quad: Option<String>,
    #[arg(long)]
    p: Option<Exponent>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Input window half-width.
    #[arg(long)]
    width: Option<u64>,
    #[serde(skip)]
    #[arg(skip)]
    command: Option<String>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LiftArgs {
    #[arg(long)]
    poly: Option<String>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    p: Option<Exponent>,
    #[arg(long)]
    q: Option<Exponent>,
    /// Half-width of the random 1D input.
    #[arg(long)]
    width: Option<u64>,
    #[serde(skip)]
    #[arg(skip)]
    command: Option<String>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FractionalArgs {
    #[arg(long)]
    poly: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    #[arg(long)]
    q: Option<Exponent>,
    /// Truncation of the fractional integral in the forward bound.
    #[arg(long)]
    k: Option<u64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    width: Option<u64>,
    #[serde(skip)]
    #[arg(skip)]
    command: Option<String>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SparseArgs {
    #[arg(long)]
    poly: Option<String>,
    #[arg(long)]
    p: Option<Exponent>,
    #[arg(long)]
    q: Option<Exponent>,
    #[arg(long)]
    nmax: Option<u64>,
    #[arg(long)]
    corpus: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    window: Option<u64>,
    #[arg(long)]
    depth: Option<u32>,
    #[arg(long)]
    lambda: Option<f64>,
    #[serde(skip)]
    #[arg(skip)]
    command: Option<String>,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("assertion failed: {0}")]
    Violation(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Violation(_) => EXIT_VIOLATION,
            CliError::Internal(_) => EXIT_VIOLATION,
        }
    }
}

fn usage<T: std::fmt::Display>(msg: T) -> CliError {
    CliError::Usage(msg.to_string())
}

fn internal<T: std::fmt::Display>(msg: T) -> CliError {
    CliError::Internal(msg.to_string())
}

fn require<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| usage(format!("missing required --{flag} (flag or config)")))
}

/// Process entry point used by the binary.
pub fn main_with_env() -> i32 {
    let args: Vec<String> = std::env::args().collect();
    let mut stdout = std::io::stdout().lock();
    let mut stderr = std::io::stderr().lock();
    run_from(args, &mut stdout, &mut stderr)
}

/// Testable entry point: parses `argv`, executes, writes the report to
/// `out` (unless `--out` redirects it), and returns the exit code.
pub fn run_from<W: Write, E: Write>(argv: Vec<String>, out: &mut W, err: &mut E) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return EXIT_USAGE;
        }
    };
    match dispatch(cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "radonlab: {e}");
            e.code()
        }
    }
}

fn init_threads(cap: Option<usize>) {
    #[cfg(feature = "parallel")]
    {
        use std::sync::OnceLock;
        static POOL: OnceLock<()> = OnceLock::new();
        POOL.get_or_init(|| {
            let from_env = std::env::var("RADONLAB_THREADS")
                .ok()
                .and_then(|s| s.parse::<usize>().ok());
            if let Some(n) = cap.or(from_env) {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build_global();
            }
        });
    }
    #[cfg(not(feature = "parallel"))]
    let _ = cap;
}

fn load_config(path: &PathBuf) -> Result<serde_json::Value, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("bad config JSON: {e}")))
}

fn config_command(value: &serde_json::Value) -> Option<String> {
    value
        .get("command")
        .and_then(|v| v.as_str())
        .map(|s| s.to_string())
}

fn parse_args_from_config<T: for<'de> Deserialize<'de>>(
    value: &serde_json::Value,
    name: &str,
) -> Result<T, CliError> {
    let mut v = value.clone();
    if let Some(obj) = v.as_object_mut() {
        obj.remove("command");
        obj.remove("out");
        obj.remove("format");
        obj.remove("threads");
    }
    serde_json::from_value(v).map_err(|e| usage(format!("bad {name} config: {e}")))
}

struct Output {
    sink: OutputSink,
}

enum OutputSink {
    File(std::io::BufWriter<fs::File>),
    Buffer(Vec<u8>),
}

impl Output {
    fn create(path: Option<&PathBuf>) -> Result<Self, CliError> {
        let sink = match path {
            Some(p) => OutputSink::File(std::io::BufWriter::new(
                fs::File::create(p)
                    .map_err(|e| usage(format!("cannot create {}: {e}", p.display())))?,
            )),
            None => OutputSink::Buffer(Vec::new()),
        };
        Ok(Self { sink })
    }

    fn finish<W: Write>(self, fallback: &mut W) -> Result<(), CliError> {
        match self.sink {
            OutputSink::File(mut f) => f.flush().map_err(|e| internal(e.to_string())),
            OutputSink::Buffer(b) => fallback
                .write_all(&b)
                .map_err(|e| internal(e.to_string())),
        }
    }
}

impl Write for Output {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        match &mut self.sink {
            OutputSink::File(f) => f.write(buf),
            OutputSink::Buffer(b) => b.write(buf),
        }
    }

    fn flush(&mut self) -> std::io::Result<()> {
        match &mut self.sink {
            OutputSink::File(f) => f.flush(),
            OutputSink::Buffer(b) => b.flush(),
        }
    }
}

fn dispatch<W: Write, E: Write>(cli: Cli, out: &mut W, err: &mut E) -> Result<(), CliError> {
    init_threads(cli.threads);
    let config = cli.config.as_ref().map(load_config).transpose()?;
    let command = match (cli.command, &config) {
        (Some(c), _) => c,
        (None, Some(cfg)) => {
            let name = config_command(cfg)
                .ok_or_else(|| usage("config must name a command when none is given"))?;
            command_from_config(&name, cfg)?
        }
        (None, None) => return Err(usage("no command given; see --help")),
    };
    let format = cli
        .format
        .or_else(|| {
            config
                .as_ref()
                .and_then(|c| c.get("format"))
                .and_then(|v| serde_json::from_value(v.clone()).ok())
        })
        .unwrap_or(Format::Csv);
    let out_path = cli.out.clone().or_else(|| {
        config
            .as_ref()
            .and_then(|c| c.get("out"))
            .and_then(|v| v.as_str())
            .map(PathBuf::from)
    });
    let mut sink = Output::create(out_path.as_ref())?;
    let result = run_command(command, &config, format, &mut sink, err);
    sink.finish(out)?;
    result
}

fn command_from_config(name: &str, cfg: &serde_json::Value) -> Result<Command, CliError> {
    Ok(match name {
        "region" => Command::Region(parse_args_from_config(cfg, name)?),
        "improving" => Command::Improving(parse_args_from_config(cfg, name)?),
        "mean-value" => Command::MeanValue(parse_args_from_config(cfg, name)?),
        "sharpness" => Command::Sharpness(parse_args_from_config(cfg, name)?),
        "transfer" => Command::Transfer(parse_args_from_config(cfg, name)?),
        "lift" => Command::Lift(parse_args_from_config(cfg, name)?),
        "fractional" => Command::Fractional(parse_args_from_config(cfg, name)?),
        "sparse" => Command::Sparse(parse_args_from_config(cfg, name)?),
        other => return Err(usage(format!("unknown command {other:?} in config"))),
    })
}

fn run_command<E: Write>(
    mut command: Command,
    config: &Option<serde_json::Value>,
    format: Format,
    sink: &mut Output,
    err: &mut E,
) -> Result<(), CliError> {
    if let Some(cfg) = config {
        if let Some(name) = config_command(cfg) {
            if name != command.name() {
                return Err(usage(format!(
                    "config is for {name:?} but the command line says {:?}",
                    command.name()
                )));
            }
        }
        merge_config(&mut command, cfg)?;
    }
    match command {
        Command::Region(a) => cmd_region(a, format, sink),
        Command::Improving(a) => cmd_improving(a, format, sink, err),
        Command::MeanValue(a) => cmd_mean_value(a, format, sink, err),
        Command::Sharpness(a) => cmd_sharpness(a, format, sink, err),
        Command::Transfer(a) => cmd_transfer(a, format, sink, err),
        Command::Lift(a) => cmd_lift(a, format, sink, err),
        Command::Fractional(a) => cmd_fractional(a, format, sink, err),
        Command::Sparse(a) => cmd_sparse(a, format, sink),
    }
}

fn merge_config(command: &mut Command, cfg: &serde_json::Value) -> Result<(), CliError> {
    match command {
        Command::Region(a) => {
            let c: RegionArgs = parse_args_from_config(cfg, "region")?;
            overlay!(a, c; which, d, p, q, lambda);
        }
        Command::Improving(a) => {
            let c: ImprovingArgs = parse_args_from_config(cfg, "improving")?;
            overlay!(a, c; poly, p, q, dual, n, trials, seed, window, assert_bound);
        }
        Command::MeanValue(a) => {
            let c: MeanValueArgs = parse_args_from_config(cfg, "mean-value")?;
            overlay!(a, c; d, m, n, brute_check, strategy, tuple_budget);
        }
        Command::Sharpness(a) => {
            let c: SharpnessArgs = parse_args_from_config(cfg, "sharpness")?;
            overlay!(a, c; family, poly, d, p, q, n);
        }
        Command::Transfer(a) => {
            let c: TransferArgs = parse_args_from_config(cfg, "transfer")?;
            overlay!(a, c; quad, p, n, trials, seed, width);
        }
        Command::Lift(a) => {
            let c: LiftArgs = parse_args_from_config(cfg, "lift")?;
            overlay!(a, c; poly, n, seed, trials, p, q, width);
        }
        Command::Fractional(a) => {
            let c: FractionalArgs = parse_args_from_config(cfg, "fractional")?;
            overlay!(a, c; poly, lambda, n, q, k, trials, seed, width);
        }
        Command::Sparse(a) => {
            let c: SparseArgs = parse_args_from_config(cfg, "sparse")?;
            overlay!(a, c; poly, p, q, nmax, corpus, seed, window, depth, lambda);
        }
    }
    Ok(())
}

// --- shared validation -------------------------------------------------------

fn parse_poly(s: &str) -> Result<IntPolynomial, CliError> {
    let p = IntPolynomial::parse(s).map_err(|e| usage(format!("--poly: {e}")))?;
    if p.degree() > MAX_DEGREE {
        return Err(usage(format!(
            "--poly: degree {} exceeds the cap {MAX_DEGREE}",
            p.degree()
        )));
    }
    if !p.check_integer_valued() {
        return Err(usage("--poly: polynomial does not map the integers into the integers"));
    }
    Ok(p)
}

fn validate_grid(n: &[u64]) -> Result<(), CliError> {
    if n.is_empty() {
        return Err(usage("--n: empty grid"));
    }
    if n.windows(2).any(|w| w[0] >= w[1]) {
        return Err(usage("--n: grid must be strictly increasing"));
    }
    if *n.last().unwrap() > MAX_N {
        return Err(usage(format!("--n: values above the cap {MAX_N}")));
    }
    if n[0] == 0 {
        return Err(usage("--n: values must be positive"));
    }
    Ok(())
}

fn trial_seed(seed: u64, lane: u64, trial: u64) -> u64 {
    // splitmix-style mixing keeps per-(lane, trial) streams disjoint.
    let mut z = seed ^ lane.rotate_left(17) ^ trial.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z ^ (z >> 31)
}

fn random_nonneg_window(seed: u64, half_width: u64) -> Signal1D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = (2 * half_width + 1) as usize;
    Signal1D::new(
        -(half_width as i64),
        (0..len).map(|_| rng.gen::<f64>()).collect(),
    )
    .expect("finite random values")
}

struct CsvSink<'a> {
    writer: csv::Writer<&'a mut Output>,
}

impl<'a> CsvSink<'a> {
    fn new(out: &'a mut Output, header: &[&str]) -> Result<Self, CliError> {
        let mut writer = csv::Writer::from_writer(out);
        writer
            .write_record(header)
            .map_err(|e| internal(e.to_string()))?;
        Ok(Self { writer })
    }

    fn row(&mut self, fields: &[String]) -> Result<(), CliError> {
        self.writer
            .write_record(fields)
            .map_err(|e| internal(e.to_string()))
    }

    fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| internal(e.to_string()))
    }
}

fn emit<T: Serialize>(
    format: Format,
    sink: &mut Output,
    header: &[&str],
    rows: &[Vec<String>],
    json_doc: &T,
) -> Result<(), CliError> {
    match format {
        Format::Csv => {
            let mut csv = CsvSink::new(sink, header)?;
            for r in rows {
                csv.row(r)?;
            }
            csv.finish()
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut *sink, json_doc)
                .map_err(|e| internal(e.to_string()))?;
            writeln!(sink).map_err(|e| internal(e.to_string()))
        }
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

// --- region -------------------------------------------------------------------

fn cmd_region(args: RegionArgs, _format: Format, sink: &mut Output) -> Result<(), CliError> {
    let which = require(args.which.clone(), "which")?;
    let p = require(args.p, "p")?;
    let q = require(args.q, "q")?;
    let region = match which.as_str() {
        "t2" => Region::T2,
        "polyrange" => Region::PolyRange {
            d: require(args.d, "d")?,
        },
        "necessary" => Region::Necessary {
            d: require(args.d, "d")?,
        },
        "high-necessary" => Region::HighNecessary {
            d: require(args.d, "d")?,
        },
        "conj-i" => Region::ConjI {
            d: require(args.d, "d")?,
        },
        other => return Err(usage(format!("unknown region {other:?}"))),
    };
    let lambda = args
        .lambda
        .as_deref()
        .map(parse_rat)
        .transpose()
        .map_err(|e| usage(format!("--lambda: {e}")))?;
    let verdict = regions::member(region, &regions::ExponentPair::new(p, q), lambda)
        .map_err(|e| usage(e.to_string()))?;
    // Region verdicts are always JSON: the per-constraint evaluations are
    // the point of the command.
    serde_json::to_writer_pretty(&mut *sink, &verdict).map_err(|e| internal(e.to_string()))?;
    writeln!(sink).map_err(|e| internal(e.to_string()))?;
    Ok(())
}

// --- mean-value ----------------------------------------------------------------

fn cmd_mean_value<E: Write>(
    args: MeanValueArgs,
    format: Format,
    sink: &mut Output,
    err: &mut E,
) -> Result<(), CliError> {
    let d = require(args.d, "d")?;
    let m = require(args.m, "m")?;
    let n_grid = require(args.n.clone(), "n")?;
    validate_grid(&n_grid)?;
    let strategy = match args.strategy.as_deref() {
        None | Some("auto") => CountStrategy::Auto,
        Some("hash") => CountStrategy::Hash,
        Some("sort") => CountStrategy::Sort,
        Some(other) => return Err(usage(format!("unknown strategy {other:?}"))),
    };
    let budget = args.tuple_budget.unwrap_or(weyl::DEFAULT_TUPLE_BUDGET);
    if budget == 0 {
        return Err(usage("--tuple-budget must be positive"));
    }
    let brute = args.brute_check.unwrap_or(false);
    let mut rows = Vec::new();
    let mut docs = Vec::new();
    for &n in &n_grid {
        let start = Instant::now();
        let rec = weyl::mean_value_exact_with(n, d, m, strategy, budget)
            .map_err(|e| usage(e.to_string()))?;
        let wall_ms = start.elapsed().as_millis();
        if brute {
            let check = weyl::mean_value_brute(n, d, m, budget)
                .map_err(|e| usage(format!("brute check infeasible: {e}")))?;
            if check != rec.j {
                let _ = writeln!(
                    err,
                    "witness: {}",
                    json!({"kind": "count-mismatch", "d": d, "m": m, "n": n,
                           "mitm": rec.j.to_string(), "brute": check.to_string()})
                );
                return Err(CliError::Violation(format!(
                    "meet-in-the-middle disagrees with brute force at N = {n}"
                )));
            }
        }
        rows.push(vec![
            d.to_string(),
            m.to_string(),
            n.to_string(),
            rec.j.to_string(),
            fmt_f64(rec.norm()),
            wall_ms.to_string(),
        ]);
        docs.push(json!({
            "d": d, "m": m, "n": n, "j": rec.j.to_string(),
            "norm": rec.norm(), "wall_ms": wall_ms,
        }));
    }
    emit(
        format,
        sink,
        &["d", "m", "N", "J", "norm", "wall_ms"],
        &rows,
        &json!({"command": "mean-value", "config": &args, "rows": docs}),
    )
}

// --- improving ------------------------------------------------------------------

fn cmd_improving<E: Write>(
    args: ImprovingArgs,
    format: Format,
    sink: &mut Output,
    err: &mut E,
) -> Result<(), CliError> {
    let poly = parse_poly(&require(args.poly.clone(), "poly")?)?;
    let p = require(args.p, "p")?;
    let q = match (args.q, args.dual.unwrap_or(false)) {
        (Some(q), false) => q,
        (None, true) => p
            .conjugate()
            .map_err(|e| usage(format!("cannot dualize p: {e}")))?,
        (Some(_), true) => return Err(usage("--q conflicts with --dual")),
        (None, false) => return Err(usage("need --q or --dual")),
    };
    let n_grid = require(args.n.clone(), "n")?;
    validate_grid(&n_grid)?;
    let trials = require(args.trials, "trials")?;
    let seed = require(args.seed, "seed")?;
    let window = args.window.unwrap_or(1024);

    let mut rows = Vec::new();
    let mut docs = Vec::new();
    let mut samples = Vec::new();
    let mut violation: Option<normlab::SearchViolation> = None;
    for &n in &n_grid {
        let cfg = SearchConfig {
            n,
            p,
            q,
            window,
            trials,
            seed,
            upper_bound: args.assert_bound,
        };
        let outcome =
            normlab::search_near_extremal(&poly, &cfg).map_err(|e| usage(e.to_string()))?;
        let family = outcome
            .best
            .family
            .map(|f| f.label().to_string())
            .unwrap_or_else(|| "search".into());
        samples.push(outcome.best.clone());
        let slope = if samples.len() >= 2 {
            normlab::improvement_fit(&samples)
                .map(|f| fmt_f64(f.slope))
                .unwrap_or_default()
        } else {
            String::new()
        };
        rows.push(vec![
            n.to_string(),
            p.to_string(),
            q.to_string(),
            fmt_f64(outcome.best.ratio),
            family.clone(),
            slope.clone(),
        ]);
        docs.push(json!({
            "n": n, "p": p.to_string(), "q": q.to_string(),
            "best_ratio": outcome.best.ratio, "family": family,
            "slope_so_far": slope,
        }));
        if violation.is_none() {
            violation = outcome.violation;
        }
    }
    emit(
        format,
        sink,
        &["N", "p", "q", "best_ratio", "family", "slope_so_far"],
        &rows,
        &json!({"command": "improving", "config": &args, "rows": docs}),
    )?;
    if let Some(v) = violation {
        let _ = writeln!(
            err,
            "witness: {}",
            serde_json::to_string(&v).unwrap_or_default()
        );
        return Err(CliError::Violation(format!(
            "ratio {} exceeds the configured bound {}",
            v.sample.ratio, v.bound
        )));
    }
    Ok(())
}

// --- sharpness -------------------------------------------------------------------

fn cmd_sharpness<E: Write>(
    args: SharpnessArgs,
    format: Format,
    sink: &mut Output,
    err: &mut E,
) -> Result<(), CliError> {
    let families = require(args.family.clone(), "family")?;
    let p = require(args.p, "p")?;
    let q = require(args.q, "q")?;
    let n_grid = require(args.n.clone(), "n")?;
    validate_grid(&n_grid)?;
    let poly = args.poly.as_deref().map(parse_poly).transpose()?;
    let mut rows = Vec::new();
    let mut docs = Vec::new();
    let mut worst: Option<(String, u64, f64)> = None;
    for fam_label in &families {
        let family = match fam_label.as_str() {
            "a" => Family::PolyIndicator,
            "b" => Family::Delta1D,
            "c" => Family::WideIndicator,
            "d" => Family::MomentCurve,
            "e" => Family::DeltaD,
            "f" => Family::BoxD,
            other => return Err(usage(format!("unknown family {other:?}"))),
        };
        let one_dim = matches!(
            family,
            Family::PolyIndicator | Family::Delta1D | Family::WideIndicator
        );
        for &n in &n_grid {
            let fs = if one_dim {
                let poly = poly
                    .as_ref()
                    .ok_or_else(|| usage("families a, b, c need --poly"))?;
                normlab::family_sample_1d(family, poly, n, p, q)
            } else {
                let d = require(args.d, "d")?;
                normlab::family_sample_dd(family, d, n, p, q)
            }
            .map_err(|e| usage(e.to_string()))?;
            let (predicted, rel_err) = match fs.predicted {
                Some(pred) => {
                    let rel = (fs.sample.ratio - pred).abs() / pred.abs().max(f64::MIN_POSITIVE);
                    if worst.as_ref().map(|w| rel > w.2).unwrap_or(true) {
                        worst = Some((fam_label.clone(), n, rel));
                    }
                    (fmt_f64(pred), fmt_f64(rel))
                }
                None => (String::new(), String::new()),
            };
            rows.push(vec![
                fam_label.clone(),
                n.to_string(),
                p.to_string(),
                q.to_string(),
                fmt_f64(fs.sample.ratio),
                predicted.clone(),
                rel_err.clone(),
            ]);
            docs.push(json!({
                "family": fam_label, "n": n, "p": p.to_string(), "q": q.to_string(),
                "measured": fs.sample.ratio, "predicted": fs.predicted,
                "support": fs.support.to_string(), "injective": fs.injective,
            }));
        }
    }
    emit(
        format,
        sink,
        &["family", "N", "p", "q", "measured", "predicted", "rel_err"],
        &rows,
        &json!({"command": "sharpness", "config": &args, "rows": docs}),
    )?;
    if let Some((fam, n, rel)) = worst {
        if rel > 1e-9 {
            let _ = writeln!(
                err,
                "witness: {}",
                json!({"kind": "closed-form-mismatch", "family": fam, "n": n, "rel_err": rel})
            );
            return Err(CliError::Violation(format!(
                "family ({fam}) at N = {n} deviates from its closed form by {rel:.3e}"
            )));
        }
    }
    Ok(())
}

// --- transfer ---------------------------------------------------------------------

fn cmd_transfer<E: Write>(
    args: TransferArgs,
    format: Format,
    sink: &mut Output,
    err: &mut E,
) -> Result<(), CliError> {
    let quad = require(args.quad.clone(), "quad")?;
    let parts: Vec<i64> = quad
        .split(',')
        .map(|t| t.trim().parse::<i64>())
        .collect::<Result<_, _>>()
        .map_err(|_| usage(format!("--quad: cannot parse {quad:?}")))?;
    if parts.len() != 3 {
        return Err(usage("--quad needs exactly a,b,c"));
    }
    if parts.iter().any(|&v| v < 0) {
        return Err(usage(
            "--quad: negative coefficients are outside the construction; rejected",
        ));
    }
    let triple = QuadraticTriple::new(parts[0] as u64, parts[1] as u64, parts[2] as u64)
        .map_err(|e| usage(e.to_string()))?;
    let p = require(args.p, "p")?;
    let n_grid = require(args.n.clone(), "n")?;
    validate_grid(&n_grid)?;
    let trials = args.trials.unwrap_or(1);
    let seed = require(args.seed, "seed")?;
    let width = args.width.unwrap_or(30);

    let mut rows = Vec::new();
    let mut docs = Vec::new();
    for &n in &n_grid {
        for t in 0..trials {
            let f = random_nonneg_window(trial_seed(seed, n, t), width);
            match reduce::quadratic_transfer_check(triple, n, &f, p, false) {
                Ok(rep) => {
                    rows.push(vec![
                        triple.a.to_string(),
                        triple.b.to_string(),
                        triple.c.to_string(),
                        n.to_string(),
                        p.to_string(),
                        t.to_string(),
                        fmt_f64(rep.min_slack),
                        fmt_f64(rep.normalized_ratio),
                    ]);
                    docs.push(json!({
                        "a": triple.a, "b": triple.b, "c": triple.c, "n": n,
                        "p": p.to_string(), "trial": t,
                        "min_slack": rep.min_slack,
                        "normalized_ratio": rep.normalized_ratio,
                    }));
                }
                Err(ReduceError::NegativeSlack { x, lhs, rhs }) => {
                    let _ = writeln!(
                        err,
                        "witness: {}",
                        json!({"kind": "negative-transfer-slack", "x": x, "lhs": lhs,
                               "rhs": rhs, "n": n, "trial": t, "input": f})
                    );
                    return Err(CliError::Violation(format!(
                        "transfer domination failed at x = {x} (N = {n}, trial {t})"
                    )));
                }
                Err(e) => return Err(usage(e.to_string())),
            }
        }
    }
    emit(
        format,
        sink,
        &["a", "b", "c", "N", "p", "trial", "min_slack", "normalized_ratio"],
        &rows,
        &json!({"command": "transfer", "config": &args, "rows": docs}),
    )
}

// --- lift --------------------------------------------------------------------------

fn cmd_lift<E: Write>(
    args: LiftArgs,
    format: Format,
    sink: &mut Output,
    err: &mut E,
) -> Result<(), CliError> {
    let poly = parse_poly(&require(args.poly.clone(), "poly")?)?;
    let n_grid = require(args.n.clone(), "n")?;
    validate_grid(&n_grid)?;
    let seed = require(args.seed, "seed")?;
    let trials = args.trials.unwrap_or(3);
    let p = args.p.unwrap_or(Exponent::from_integer(2).unwrap());
    let q = args.q.unwrap_or(Exponent::from_integer(2).unwrap());
    let width = args.width.unwrap_or(8);
    let dec = poly.decompose().map_err(|e| usage(e.to_string()))?;
    let residues: Vec<i64> = (0..dec.u as i64).collect();

    let mut rows = Vec::new();
    let mut docs = Vec::new();
    for &n in &n_grid {
        for &r in &residues {
            for t in 0..trials {
                let g = random_nonneg_window(trial_seed(seed, n ^ (r as u64) << 32, t), width);
                let rep = reduce::projection_lift(&g, &poly, n, r, p, q)
                    .map_err(|e| usage(e.to_string()))?;
                if rep.max_identity_gap > 1e-12 {
                    let _ = writeln!(
                        err,
                        "witness: {}",
                        json!({"kind": "lift-identity-gap", "n": n, "residue": r,
                               "trial": t, "gap": rep.max_identity_gap, "input": g})
                    );
                    return Err(CliError::Violation(format!(
                        "lift identity gap {} at N = {n}, r = {r}",
                        rep.max_identity_gap
                    )));
                }
                rows.push(vec![
                    poly.to_string(),
                    n.to_string(),
                    r.to_string(),
                    t.to_string(),
                    rep.identity_points.to_string(),
                    fmt_f64(rep.max_identity_gap),
                    rep.mult_max.to_string(),
                    fmt_f64(rep.c1_ratio),
                    fmt_f64(rep.sublattice.c_measured),
                    rep.sublattice.asserted.to_string(),
                ]);
                docs.push(json!({
                    "poly": poly.to_string(), "n": n, "residue": r, "trial": t,
                    "identity_points": rep.identity_points,
                    "max_identity_gap": rep.max_identity_gap,
                    "mult_max": rep.mult_max, "c1_ratio": rep.c1_ratio,
                    "sublattice": rep.sublattice,
                }));
            }
        }
    }
    emit(
        format,
        sink,
        &[
            "poly",
            "N",
            "r",
            "trial",
            "identity_points",
            "max_gap",
            "mult_max",
            "c1_ratio",
            "c2_measured",
            "c2_asserted",
        ],
        &rows,
        &json!({"command": "lift", "config": &args, "rows": docs}),
    )
}

// --- fractional ----------------------------------------------------------------------

fn cmd_fractional<E: Write>(
    args: FractionalArgs,
    format: Format,
    sink: &mut Output,
    err: &mut E,
) -> Result<(), CliError> {
    let poly = parse_poly(&require(args.poly.clone(), "poly")?)?;
    let lambda = require(args.lambda, "lambda")?;
    let n_grid = require(args.n.clone(), "n")?;
    validate_grid(&n_grid)?;
    let q = args.q.unwrap_or(Exponent::from_integer(2).unwrap());
    let k = args.k.unwrap_or(64);
    let trials = args.trials.unwrap_or(3);
    let seed = require(args.seed, "seed")?;
    let width = args.width.unwrap_or(20);
    let cfg = BridgeConfig {
        lambda,
        truncation: k,
        n_values: n_grid.clone(),
        q,
    };
    let mut rows = Vec::new();
    let mut docs = Vec::new();
    for t in 0..trials {
        let f = random_nonneg_window(trial_seed(seed, 0xf5ac, t), width);
        let rep = reduce::dyadic_bridge(&poly, &cfg, &f).map_err(|e| usage(e.to_string()))?;
        let bad_reverse = rep.reverse.iter().find(|pw| pw.min_slack < -1e-12);
        if bad_reverse.is_some() || rep.forward_min_slack < -1e-12 {
            let _ = writeln!(
                err,
                "witness: {}",
                json!({"kind": "bridge-slack", "trial": t, "report": rep, "input": f})
            );
            return Err(CliError::Violation(format!(
                "fractional bridge slack went negative in trial {t}"
            )));
        }
        for pw in &rep.reverse {
            rows.push(vec![
                fmt_f64(lambda),
                pw.n.to_string(),
                t.to_string(),
                fmt_f64(pw.min_slack),
                fmt_f64(rep.forward_min_slack),
                fmt_f64(rep.lhs_norm),
                fmt_f64(rep.rhs_norm),
            ]);
        }
        docs.push(json!({"trial": t, "report": rep}));
    }
    emit(
        format,
        sink,
        &[
            "lambda",
            "N",
            "trial",
            "reverse_min_slack",
            "forward_min_slack",
            "lhs_norm",
            "rhs_norm",
        ],
        &rows,
        &json!({"command": "fractional", "config": &args, "rows": docs}),
    )
}

// --- sparse -----------------------------------------------------------------------------

fn cmd_sparse(args: SparseArgs, format: Format, sink: &mut Output) -> Result<(), CliError> {
    let poly = parse_poly(&require(args.poly.clone(), "poly")?)?;
    let p = require(args.p, "p")?;
    let q = require(args.q, "q")?;
    let nmax = require(args.nmax, "nmax")?;
    if nmax == 0 || nmax > MAX_N {
        return Err(usage(format!("--nmax must be in [1, {MAX_N}]")));
    }
    let corpus = require(args.corpus, "corpus")?;
    let seed = require(args.seed, "seed")?;
    let window = args.window.unwrap_or(256);
    let depth = args.depth.unwrap_or(6);
    let lambda = args.lambda.unwrap_or(0.0);
    // The conjectured domination pairs the form with the conjugate index.
    let q_dual = q
        .conjugate()
        .map_err(|e| usage(format!("cannot dualize q: {e}")))?;
    let mut rows = Vec::new();
    let mut docs = Vec::new();
    for t in 0..corpus {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, 0x5fa5, t));
        let len = window.max(2) as usize;
        let f = Signal1D::new(0, (0..len).map(|_| rng.gen::<f64>()).collect())
            .map_err(|e| internal(e.to_string()))?;
        let g = Signal1D::new(0, (0..len).map(|_| rng.gen::<f64>()).collect())
            .map_err(|e| internal(e.to_string()))?;
        let pairing = sparse::pairing(&poly, nmax, &f, &g).map_err(|e| usage(e.to_string()))?;
        let (collection, form) =
            sparse::greedy_collection(&f, &g, p, q_dual, lambda, depth)
                .map_err(|e| usage(e.to_string()))?;
        collection
            .validate()
            .map_err(|e| CliError::Violation(format!("builder produced an invalid collection: {e}")))?;
        let ratio = if form > 0.0 { pairing / form } else { f64::NAN };
        rows.push(vec![
            t.to_string(),
            fmt_f64(pairing),
            fmt_f64(form),
            fmt_f64(ratio),
        ]);
        docs.push(json!({
            "trial": t, "pairing": pairing, "lambda_form": form, "ratio": ratio,
            "intervals": collection.items.len(),
        }));
    }
    emit(
        format,
        sink,
        &["trial", "pairing", "lambda_form", "ratio"],
        &rows,
        &json!({"command": "sparse", "config": &args, "rows": docs}),
    )
}
