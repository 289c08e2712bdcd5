//! `stein-sphere`: uniformity tests on the hypersphere from the command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 power study finished with
//! failed cells, 64 usage error, 65 malformed input data, 66 missing input
//! file, 73 output file could not be created.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use stein_sphere::alternatives::{AlternativeModel, AlternativeSpec};
use stein_sphere::fields::{export_field, field_grid, FieldKind, FieldRequest, SphereGrid};
use stein_sphere::harness::{emit_table, run_power_study, ExperimentConfig, TableMeta, TestSpec};
use stein_sphere::null_dist::{null_draws, p_value_mc, upper_quantile, CriticalValueTable};
use stein_sphere::rng::{replicate_rng, Purpose};
use stein_sphere::tuning::{
    abar, argmax_first, grid_order, select_lambda_kfold, LambdaGrid, ScoreTable,
};
use stein_sphere::{Error, SampleSet};

#[derive(Parser, Debug)]
#[command(name = "stein-sphere", version, about = "L2-Stein tests of uniformity on the hypersphere")]
struct Cli {
    /// Worker threads for Monte Carlo loops (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print machine-readable JSON instead of text or CSV.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test a data file for uniformity with a Monte Carlo calibrated statistic.
    Test(TestArgs),
    /// Monte Carlo critical values under uniformity.
    Critval(CritvalArgs),
    /// Run a power study described by a JSON config.
    Power(PowerArgs),
    /// Score a grid of tuning parameters and select one.
    Tune(TuneArgs),
    /// Evaluate a drift or correlation field on a longitude/latitude grid of S².
    Field(FieldArgs),
    /// Draw a sample from an alternative.
    Sample(SampleArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Stat {
    Stein,
    Dksd,
    Softmax,
    Rayleigh,
    Bingham,
}

#[derive(Args, Debug)]
struct StatArgs {
    /// Statistic to use.
    #[arg(long, value_enum, default_value = "stein")]
    stat: Stat,
    /// Tuning parameter of the stein, dksd and softmax statistics.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
}

impl StatArgs {
    fn spec(&self) -> TestSpec {
        let lambda = self.lambda;
        match self.stat {
            Stat::Stein => TestSpec::Stein { lambda },
            Stat::Dksd => TestSpec::Dksd { lambda },
            Stat::Softmax => TestSpec::Softmax { lambda },
            Stat::Rayleigh => TestSpec::Rayleigh,
            Stat::Bingham => TestSpec::Bingham,
        }
    }
}

#[derive(Args, Debug)]
struct TestArgs {
    /// CSV file with one observation per row.
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    stat: StatArgs,
    /// Null replicates for the critical value and p-value.
    #[arg(long = "m", default_value_t = 5000)]
    m: usize,
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Random seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Rescale rows to unit length instead of refusing non-unit rows.
    #[arg(long)]
    normalize: bool,
}

#[derive(Args, Debug)]
struct CritvalArgs {
    #[command(flatten)]
    stat: StatArgs,
    /// Sample sizes (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// Ambient dimension.
    #[arg(long)]
    p: usize,
    /// Null replicates.
    #[arg(long = "m", default_value_t = 5000)]
    m: usize,
    /// Significance level.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Random seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PowerArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV; metadata goes to `<out>.meta.json`.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct TuneArgs {
    /// Pilot sample drawn independently of the data to be tested.
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    pilot: Option<PathBuf>,
    /// Sample size of the test the pilot tunes for.
    #[arg(long, requires = "pilot")]
    n_target: Option<usize>,
    /// Data to tune on by K-fold splitting.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Number of folds for --data.
    #[arg(long, default_value_t = 20)]
    folds: usize,
    /// Grid spacing; the grid is {i * step : i = 1..=count}.
    #[arg(long, default_value_t = 0.1)]
    grid_step: f64,
    /// Number of grid points.
    #[arg(long, default_value_t = 300)]
    grid_count: usize,
    /// Random seed (fold assignment).
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Rescale rows to unit length instead of refusing non-unit rows.
    #[arg(long)]
    normalize: bool,
    /// Output file (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FieldArgs {
    /// Field to evaluate.
    #[arg(long, value_enum)]
    kind: FieldKindArg,
    /// Concentration of the von Mises-Fisher alternative (0 is uniform).
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    /// Tuning parameter.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Mean direction of the alternative.
    #[arg(long, value_delimiter = ',', default_value = "0,-1,0", allow_hyphen_values = true)]
    mu: Vec<f64>,
    /// Reference point of the correlation fields.
    #[arg(long = "t-ref", value_delimiter = ',', default_value = "0,0,1", allow_hyphen_values = true)]
    t_ref: Vec<f64>,
    /// Sample size scaling the drift field.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Grid resolution as LONxLAT.
    #[arg(long, default_value = "181x91")]
    resolution: String,
    /// Random seed (Monte Carlo kernel of rho-alt).
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FieldKindArg {
    AbsZ,
    RhoNull,
    RhoAlt,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Alternative as JSON, e.g. '{"kind":"vmf","kappa":0.5}'.
    #[arg(long)]
    alt: String,
    /// Ambient dimension.
    #[arg(long)]
    p: usize,
    /// Sample size.
    #[arg(long)]
    n: usize,
    /// Random seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output CSV (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    NoInput(String),
    CantCreate(String),
    Partial,
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Partial => 2,
            Failure::Usage(_) => 64,
            Failure::Data(_) => 65,
            Failure::NoInput(_) => 66,
            Failure::CantCreate(_) => 73,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_) => Failure::Data(e.to_string()),
            Error::Config(_) | Error::Json(_) => Failure::Data(e.to_string()),
            Error::Domain(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

fn open_input(path: &Path) -> std::result::Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::NoInput(format!("{}: {e}", path.display())))
}

fn read_sample(path: &Path, normalize: bool) -> std::result::Result<SampleSet, Failure> {
    SampleSet::read_csv(open_input(path)?, normalize)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn create_output(path: &Path) -> std::result::Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::CantCreate(format!("{}: {e}", path.display())))
}

/// Runs `f` on the file at `out`, or on standard output.
fn with_output<F>(out: Option<&Path>, f: F) -> Outcome
where
    F: FnOnce(&mut dyn Write) -> std::result::Result<(), Failure>,
{
    match out {
        Some(path) => {
            let mut w = create_output(path)?;
            f(&mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            f(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Outcome {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Failure::Runtime(e.to_string()))?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct TestReport {
    statistic: String,
    n: usize,
    p: usize,
    value: f64,
    critical_value: f64,
    p_value: f64,
    alpha: f64,
    #[serde(rename = "M")]
    m: usize,
    seed: u64,
    reject: bool,
}

fn cmd_test(args: &TestArgs, json: bool) -> Outcome {
    let sample = read_sample(&args.data, args.normalize)?;
    let spec = args.stat.spec();
    let value = spec.evaluate(&sample)?;
    let draws = null_draws(|x| spec.evaluate(x), sample.n(), sample.p(), args.m, args.seed)?;
    let critical_value = upper_quantile(&draws, args.alpha)?;
    let report = TestReport {
        statistic: spec.to_string(),
        n: sample.n(),
        p: sample.p(),
        value,
        critical_value,
        p_value: p_value_mc(value, &draws)?,
        alpha: args.alpha,
        m: args.m,
        seed: args.seed,
        reject: value > critical_value,
    };
    if json {
        return print_json(&report);
    }
    let mut out = io::stdout().lock();
    writeln!(out, "statistic       {}", report.statistic)?;
    writeln!(out, "n, p            {}, {}", report.n, report.p)?;
    writeln!(out, "value           {}", report.value)?;
    writeln!(out, "critical value  {} (alpha {}, M {}, seed {})", report.critical_value, report.alpha, report.m, report.seed)?;
    writeln!(out, "p-value         {}", report.p_value)?;
    writeln!(out, "decision        {}", if report.reject { "reject uniformity" } else { "do not reject uniformity" })?;
    Ok(())
}

fn cmd_critval(args: &CritvalArgs, json: bool) -> Outcome {
    if args.m < 100 {
        return Err(Failure::Usage(format!("--m must be at least 100, got {}", args.m)));
    }
    let spec = args.stat.spec();
    let tables = args
        .n
        .iter()
        .map(|&n| {
            let draws = null_draws(|x| spec.evaluate(x), n, args.p, args.m, args.seed)?;
            Ok(CriticalValueTable {
                statistic: spec.to_string(),
                n,
                p: args.p,
                lambda: spec.lambda(),
                alpha: args.alpha,
                m: args.m,
                seed: args.seed,
                critical_value: upper_quantile(&draws, args.alpha)?,
            })
        })
        .collect::<std::result::Result<Vec<_>, Error>>()?;
    with_output(args.out.as_deref(), |w| {
        if json {
            serde_json::to_writer_pretty(&mut *w, &tables).map_err(|e| Failure::Runtime(e.to_string()))?;
            writeln!(w)?;
            Ok(())
        } else {
            Ok(CriticalValueTable::write_csv(&tables, w)?)
        }
    })
}

fn cmd_power(args: &PowerArgs) -> Outcome {
    let text = io::read_to_string(open_input(&args.config)?)?;
    let mut config = ExperimentConfig::from_json(&text).map_err(|e| Failure::Data(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let start = Instant::now();
    let table = run_power_study(&config)?;
    create_output(&args.out)?;
    emit_table(&table, &TableMeta::for_config(&config), &args.out)?;
    eprintln!("power study finished in {:.1} s", start.elapsed().as_secs_f64());
    for c in table.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!("cell {} n={} {} failed: {}", c.alternative, c.n, c.test, c.error.as_deref().unwrap_or(""));
    }
    if table.has_errors() {
        return Err(Failure::Partial);
    }
    Ok(())
}

#[derive(Serialize)]
struct ScoreRow {
    lambda: f64,
    score: f64,
    selected: bool,
}

#[derive(Serialize)]
struct TuneReport {
    method: String,
    selected_lambda: f64,
    scores: Vec<ScoreRow>,
}

fn cmd_tune(args: &TuneArgs, json: bool) -> Outcome {
    if !(args.grid_step > 0.0) || args.grid_count == 0 {
        return Err(Failure::Usage("--grid-step must be positive and --grid-count non-zero".into()));
    }
    let grid = LambdaGrid::regular(args.grid_step, args.grid_count)?;
    let (method, scores) = if let Some(pilot) = &args.pilot {
        let pilot = read_sample(pilot, args.normalize)?;
        let n_target = args.n_target.ok_or_else(|| Failure::Usage("--pilot needs --n-target".into()))?;
        let order = grid_order(pilot.p(), &grid)?;
        let est = abar(&pilot, n_target, order)?;
        ("pilot".to_string(), ScoreTable::new(pilot.p(), &grid, order)?.scores(&est)?)
    } else {
        let data = read_sample(args.data.as_deref().expect("clap enforces --data"), args.normalize)?;
        let table = ScoreTable::new(data.p(), &grid, grid_order(data.p(), &grid)?)?;
        let mut rng = replicate_rng(args.seed, Purpose::Folds, 0);
        let sel = select_lambda_kfold(&data, args.folds, &table, &mut rng)?;
        (format!("{}-fold", args.folds), sel.mean_scores)
    };
    let best = argmax_first(&scores);
    let report = TuneReport {
        method,
        selected_lambda: grid.values()[best],
        scores: grid
            .values()
            .iter()
            .zip(&scores)
            .enumerate()
            .map(|(i, (&lambda, &score))| ScoreRow { lambda, score, selected: i == best })
            .collect(),
    };
    with_output(args.out.as_deref(), |w| {
        if json {
            serde_json::to_writer_pretty(&mut *w, &report).map_err(|e| Failure::Runtime(e.to_string()))?;
            writeln!(w)?;
            return Ok(());
        }
        let mut wtr = csv::Writer::from_writer(w);
        for row in &report.scores {
            wtr.serialize(row).map_err(|e| Failure::Runtime(e.to_string()))?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    if !json {
        eprintln!("selected lambda = {}", report.selected_lambda);
    }
    Ok(())
}

fn parse_resolution(s: &str) -> std::result::Result<(usize, usize), Failure> {
    let bad = || Failure::Usage(format!("--resolution must look like 181x91, got {s:?}"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn cmd_field(args: &FieldArgs) -> Outcome {
    let (n_lon, n_lat) = parse_resolution(&args.resolution)?;
    let grid = SphereGrid::new(n_lon, n_lat)?;
    if args.mu.len() != 3 || args.t_ref.len() != 3 {
        return Err(Failure::Usage("--mu and --t-ref take three comma-separated coordinates".into()));
    }
    let kind = match args.kind {
        FieldKindArg::AbsZ => FieldKind::AbsZ,
        FieldKindArg::RhoNull => FieldKind::RhoNull,
        FieldKindArg::RhoAlt => FieldKind::RhoAlt,
    };
    let req = FieldRequest {
        kind,
        kappa: args.kappa,
        mu: [args.mu[0], args.mu[1], args.mu[2]],
        lambda: args.lambda,
        n: args.n,
        t_ref: [args.t_ref[0], args.t_ref[1], args.t_ref[2]],
        seed: args.seed,
    };
    let field = field_grid(&req, &grid)?;
    with_output(args.out.as_deref(), |w| Ok(export_field(&field, w)?))
}

fn cmd_sample(args: &SampleArgs) -> Outcome {
    let spec: AlternativeSpec = serde_json::from_str(&args.alt).map_err(|e| Failure::Usage(format!("--alt: {e}")))?;
    let model = AlternativeModel::new(spec, args.p)?;
    let sample = model.sample(args.n, &mut replicate_rng(args.seed, Purpose::Alternative(0), 0))?;
    with_output(args.out.as_deref(), |w| Ok(sample.write_csv(w)?))
}

fn run(cli: Cli) -> Outcome {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Failure::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    match &cli.command {
        Command::Test(a) => cmd_test(a, cli.json),
        Command::Critval(a) => cmd_critval(a, cli.json),
        Command::Power(a) => cmd_power(a),
        Command::Tune(a) => cmd_tune(a, cli.json),
        Command::Field(a) => cmd_field(a),
        Command::Sample(a) => cmd_sample(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Partial => eprintln!("error: some cells failed; the table records them"),
                Failure::Usage(m) | Failure::Data(m) | Failure::NoInput(m) | Failure::CantCreate(m) | Failure::Runtime(m) => {
                    eprintln!("error: {m}")
                }
            }
            ExitCode::from(f.code())
        }
    }
}
