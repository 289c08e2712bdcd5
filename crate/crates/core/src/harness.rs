//! Monte Carlo power studies.
//!
//! Every test in a study sees the same replicate samples: null replicate `r`
//! at size `n` is shared by all critical values, and replicate `r` of an
//! alternative is shared by all tests of that row. Critical values are the
//! empirical `1-α` quantiles of `m_critical` null replicates; rejection
//! rates are frequencies over `m_power` replicates.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::alternatives::{AlternativeModel, AlternativeSpec};
use crate::error::{domain, Error, Result};
use crate::null_dist::{csv_err, uniform_sample, upper_quantile};
use crate::rng::{replicate_rng, Purpose};
use crate::stein_statistic::{
    bingham, dksd_statistic, rayleigh, sobolev_statistic, CoefficientSequence, DksdScaling, GegenbauerGram,
    SampleSet, DEFAULT_TOL,
};
use crate::tuning::{abar, argmax_first, select_lambda_kfold, LambdaGrid, PilotEstimate, ScoreTable};

fn default_alpha() -> f64 {
    0.05
}

fn default_pilot_size() -> usize {
    10_000
}

fn default_folds() -> usize {
    20
}

/// How a K-fold tuned test is calibrated under the null. Both variants run
/// the whole selection procedure on every null replicate, so the size is
/// nominal despite `λ̂` being chosen from the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KfoldCalibration {
    /// `T_n(λ̂)` standardized by its closed-form null moments at `λ̂` is the test statistic.
    #[default]
    Standardized,
    /// The fixed-λ null p-value of `T_n(λ̂)` at `λ̂` is the test statistic.
    PValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestSpec {
    Stein {
        lambda: f64,
    },
    Dksd {
        lambda: f64,
    },
    Softmax {
        lambda: f64,
    },
    Rayleigh,
    Bingham,
    /// `T_n(λ̃)` with `λ̃` chosen from an independent pilot sample of the alternative.
    SteinTuned {
        #[serde(default = "default_pilot_size")]
        pilot_size: usize,
    },
    /// `T_n(λ̂)` with `λ̂` chosen by K-fold splitting of the sample itself.
    SteinKfold {
        #[serde(default = "default_folds")]
        folds: usize,
        #[serde(default)]
        calibration: KfoldCalibration,
    },
}

impl fmt::Display for TestSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestSpec::Stein { lambda } => write!(f, "T_n({lambda})"),
            TestSpec::Dksd { lambda } => write!(f, "dKSD({lambda})"),
            TestSpec::Softmax { lambda } => write!(f, "softmax({lambda})"),
            TestSpec::Rayleigh => write!(f, "Rayleigh"),
            TestSpec::Bingham => write!(f, "Bingham"),
            TestSpec::SteinTuned { .. } => write!(f, "T_n(tuned)"),
            TestSpec::SteinKfold { folds, .. } => write!(f, "T_n({folds}-fold)"),
        }
    }
}

impl TestSpec {
    /// `λ` of a fixed-parameter test.
    pub fn lambda(&self) -> Option<f64> {
        match *self {
            TestSpec::Stein { lambda } | TestSpec::Dksd { lambda } | TestSpec::Softmax { lambda } => Some(lambda),
            _ => None,
        }
    }

    /// Value of a fixed-parameter statistic on `sample`. Tuned tests depend
    /// on more than the sample and are refused.
    pub fn evaluate(&self, sample: &SampleSet) -> Result<f64> {
        let p = sample.p();
        match *self {
            TestSpec::Stein { lambda } => sobolev_statistic(sample, &CoefficientSequence::stein(p, lambda, DEFAULT_TOL)?),
            TestSpec::Dksd { lambda } => dksd_statistic(sample, lambda, DksdScaling::default()),
            TestSpec::Softmax { lambda } => sobolev_statistic(sample, &CoefficientSequence::softmax(p, lambda, DEFAULT_TOL)?),
            TestSpec::Rayleigh => Ok(rayleigh(sample)),
            TestSpec::Bingham => Ok(bingham(sample)),
            TestSpec::SteinTuned { .. } | TestSpec::SteinKfold { .. } => {
                domain(format!("{self} has no fixed statistic; use a power study or the tuning tools"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub p: usize,
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub m_critical: usize,
    pub m_power: usize,
    pub seed: u64,
    /// Candidate `λ` values for the tuned tests; `{i/10 : i = 1..=300}` if absent.
    #[serde(default)]
    pub lambda_grid: Option<Vec<f64>>,
    pub tests: Vec<TestSpec>,
    pub alternatives: Vec<AlternativeSpec>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.p < 2 {
            return bad(format!("p must be at least 2, got {}", self.p));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.iter().any(|&n| n < 2) {
            return bad("sample_sizes must be non-empty with every n ≥ 2".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.m_critical < 100 || self.m_power < 100 {
            return bad("m_critical and m_power must be at least 100".into());
        }
        if self.tests.is_empty() || self.alternatives.is_empty() {
            return bad("tests and alternatives must be non-empty".into());
        }
        let mut labels: Vec<String> = self.tests.iter().map(|t| t.to_string()).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return bad("tests must have distinct labels".into());
        }
        for t in &self.tests {
            match *t {
                TestSpec::Stein { lambda } | TestSpec::Dksd { lambda } | TestSpec::Softmax { lambda } => {
                    if !(lambda > 0.0 && lambda.is_finite()) {
                        return bad(format!("{t}: lambda must be positive"));
                    }
                }
                TestSpec::SteinTuned { pilot_size } if pilot_size < 2 => {
                    return bad(format!("{t}: pilot_size must be at least 2"));
                }
                TestSpec::SteinKfold { folds, .. } => {
                    if folds < 2 {
                        return bad(format!("{t}: folds must be at least 2"));
                    }
                    if let Some(&n) = self.sample_sizes.iter().find(|&&n| n < folds || n - n.div_ceil(folds) < 2) {
                        return bad(format!("{t}: sample size {n} is too small for {folds} folds"));
                    }
                }
                _ => {}
            }
        }
        for a in &self.alternatives {
            AlternativeModel::new(a.clone(), self.p).map_err(|e| Error::Config(format!("{a}: {e}")))?;
        }
        self.grid()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<LambdaGrid> {
        match &self.lambda_grid {
            Some(v) => LambdaGrid::new(v.clone()).map_err(|e| Error::Config(e.to_string())),
            None => Ok(LambdaGrid::default()),
        }
    }

    fn needs_grid(&self) -> bool {
        self.tests
            .iter()
            .any(|t| matches!(t, TestSpec::SteinTuned { .. } | TestSpec::SteinKfold { .. }))
    }
}

/// One cell of a power table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCell {
    pub alternative: String,
    pub n: usize,
    pub test: String,
    /// Rejection percentage; absent when the cell failed.
    pub rejection: Option<f64>,
    /// Monte Carlo standard error of `rejection`, in percentage points.
    pub se: Option<f64>,
    /// Best in its row, or not significantly worse than the best.
    pub best: bool,
    /// `λ̃` for pilot-tuned tests, the mean selected `λ` for K-fold tests.
    pub lambda: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub cells: Vec<PowerCell>,
}

impl PowerTable {
    pub fn has_errors(&self) -> bool {
        self.cells.iter().any(|c| c.error.is_some())
    }

    pub fn get(&self, alternative: &str, n: usize, test: &str) -> Option<&PowerCell> {
        self.cells
            .iter()
            .find(|c| c.alternative == alternative && c.n == n && c.test == test)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        if self.cells.is_empty() {
            wtr.write_record(["alternative", "n", "test", "rejection", "se", "best", "lambda", "error"])
                .map_err(csv_err)?;
        }
        for c in &self.cells {
            wtr.serialize(c).map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let cells = csv::Reader::from_reader(r)
            .deserialize()
            .map(|row| row.map_err(csv_err))
            .collect::<Result<_>>()?;
        Ok(Self { cells })
    }
}

/// Provenance written next to an emitted table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub software: String,
    pub version: String,
    pub seed: u64,
    pub alpha: f64,
    pub m_critical: usize,
    pub m_power: usize,
    pub config: ExperimentConfig,
}

impl TableMeta {
    pub fn for_config(config: &ExperimentConfig) -> Self {
        Self {
            software: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            alpha: config.alpha,
            m_critical: config.m_critical,
            m_power: config.m_power,
            config: config.clone(),
        }
    }
}

/// Path of the metadata file written next to `path`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes the table as CSV to `path` and its metadata to `<path>.meta.json`.
pub fn emit_table(table: &PowerTable, meta: &TableMeta, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    table.write_csv(&mut w)?;
    w.flush()?;
    let mut m = BufWriter::new(File::create(meta_path(path))?);
    serde_json::to_writer_pretty(&mut m, meta)?;
    m.write_all(b"\n")?;
    m.flush()?;
    Ok(())
}

/// Whether test `a` rejects significantly less often than test `b` on the
/// same replicates, by a one-sided paired t-test at `level`.
pub fn paired_onesided_test(a: &[bool], b: &[bool], level: f64) -> Result<bool> {
    if a.len() != b.len() {
        return domain("paired test needs indicator vectors of equal length");
    }
    if a.len() < 30 {
        return domain(format!("paired test needs at least 30 replicates, got {}", a.len()));
    }
    let m = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x as u8 as f64 - y as u8 as f64).collect();
    let mean = d.iter().sum::<f64>() / m;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    if var == 0.0 {
        return Ok(mean < 0.0);
    }
    let t = mean / (var / m).sqrt();
    let dist = StudentsT::new(0.0, 1.0, m - 1.0).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(dist.cdf(t) < level)
}

/// What a replicate contributes to every test's decision.
struct Features {
    pair_sums: Vec<f64>,
    n: usize,
    rayleigh: f64,
    bingham: f64,
    /// Per test: the K-fold outcome (grid index and standardized statistic).
    kfold: Vec<Option<Result<(usize, f64)>>>,
}

/// A test made concrete for one study: coefficients resolved, tables built.
enum Prepared {
    Sobolev(Vec<f64>),
    Rayleigh,
    Bingham,
    Tuned,
    Kfold { folds: usize, calibration: KfoldCalibration },
    Failed(String),
}

struct Plan {
    p: usize,
    order: usize,
    tests: Vec<Prepared>,
    table: Option<ScoreTable>,
}

impl Plan {
    fn new(config: &ExperimentConfig) -> Result<Self> {
        let p = config.p;
        let table = if config.needs_grid() {
            let grid = config.grid()?;
            let order = crate::tuning::grid_order(p, &grid)?;
            Some(ScoreTable::new(p, &grid, order)?)
        } else {
            None
        };
        let mut order = table.as_ref().map_or(1, |t| t.order());
        let mut tests = Vec::new();
        for t in &config.tests {
            let coeffs = |c: Result<CoefficientSequence>| match c {
                Ok(c) => Prepared::Sobolev(c.coeffs().to_vec()),
                Err(e) => Prepared::Failed(e.to_string()),
            };
            let prepared = match *t {
                TestSpec::Stein { lambda } => coeffs(CoefficientSequence::stein(p, lambda, DEFAULT_TOL)),
                TestSpec::Dksd { lambda } => coeffs(CoefficientSequence::dksd(p, lambda, DEFAULT_TOL)),
                TestSpec::Softmax { lambda } => coeffs(CoefficientSequence::softmax(p, lambda, DEFAULT_TOL)),
                TestSpec::Rayleigh => Prepared::Rayleigh,
                TestSpec::Bingham => Prepared::Bingham,
                TestSpec::SteinTuned { .. } => Prepared::Tuned,
                TestSpec::SteinKfold { folds, calibration } => Prepared::Kfold { folds, calibration },
            };
            if let Prepared::Sobolev(c) = &prepared {
                order = order.max(c.len());
            }
            tests.push(prepared);
        }
        Ok(Self { p, order, tests, table })
    }

    fn features(&self, sample: &SampleSet, rng: &mut ChaCha8Rng) -> Result<Features> {
        let gram = GegenbauerGram::new(sample, self.order)?;
        let kfold = self
            .tests
            .iter()
            .map(|t| match (t, &self.table) {
                (Prepared::Kfold { folds, .. }, Some(table)) => Some(kfold_outcome(sample, &gram, *folds, table, rng)),
                _ => None,
            })
            .collect();
        Ok(Features {
            pair_sums: gram.pair_sums().to_vec(),
            n: sample.n(),
            rayleigh: rayleigh(sample),
            bingham: bingham(sample),
            kfold,
        })
    }
}

fn kfold_outcome<R: Rng + ?Sized>(
    sample: &SampleSet,
    gram: &GegenbauerGram,
    folds: usize,
    table: &ScoreTable,
    rng: &mut R,
) -> Result<(usize, f64)> {
    let sel = select_lambda_kfold(sample, folds, table, rng)?;
    let off = gram.off_diagonal(table.coeffs(sel.index))?;
    Ok((sel.index, off / table.null_sd(sel.index, sample.n())))
}

/// Add-one upper-tail frequency of `value` among `sorted` draws.
fn upper_tail(sorted: &[f64], value: f64) -> f64 {
    let below = sorted.partition_point(|&d| d < value);
    (1 + sorted.len() - below) as f64 / (sorted.len() + 1) as f64
}

/// The selected grid index and the statistic a K-fold test rejects on
/// (larger is more extreme).
fn kfold_statistic(
    f: &Features,
    ti: usize,
    calibration: KfoldCalibration,
    table: Option<&ScoreTable>,
    grid_sorted: Option<&[Vec<f64>]>,
    at_one: &[f64],
) -> Result<(usize, f64)> {
    let (i, z) = match f.kfold[ti].as_ref().expect("k-fold outcome computed") {
        Ok(o) => *o,
        Err(e) => return Err(Error::Numeric(e.to_string())),
    };
    match calibration {
        KfoldCalibration::Standardized => Ok((i, z)),
        KfoldCalibration::PValue => {
            let table = table.expect("grid built for k-fold tests");
            let sorted = &grid_sorted.expect("null draws kept for p-value calibration")[i];
            Ok((i, -upper_tail(sorted, sobolev_from(f, table.coeffs(i), at_one))))
        }
    }
}

/// `T_n` from the off-diagonal sums plus the diagonal `Σ_k b_k C_k(1)`.
fn sobolev_from(features: &Features, b: &[f64], at_one: &[f64]) -> f64 {
    let n = features.n as f64;
    b.iter()
        .zip(features.pair_sums.iter().zip(at_one))
        .map(|(b, (s, c))| b * (2.0 * s + n * c) / n)
        .sum()
}

/// Per-test null quantities at one sample size.
struct NullCalibration {
    /// Fixed-coefficient tests: the critical value.
    fixed: Vec<Option<Result<f64>>>,
    /// Null features, kept for the tuned tests whose `λ` is only known per alternative.
    features: Vec<Features>,
    /// Per grid point: sorted null draws of `T_n(λ_i)`.
    grid_sorted: Option<Vec<Vec<f64>>>,
}

fn replicate_errors<T>(results: Vec<Result<T>>) -> Result<Vec<T>> {
    results
        .into_iter()
        .enumerate()
        .map(|(r, x)| x.map_err(|e| Error::Replicate { replicate: r, source: Box::new(e) }))
        .collect()
}

fn calibrate(plan: &Plan, config: &ExperimentConfig, n: usize, at_one: &[f64]) -> Result<NullCalibration> {
    let features = replicate_errors(
        (0..config.m_critical)
            .into_par_iter()
            .map(|r| {
                let mut rng = replicate_rng(config.seed, Purpose::Null, r as u64);
                let sample = uniform_sample(n, plan.p, &mut rng);
                plan.features(&sample, &mut rng)
            })
            .collect(),
    )?;
    let alpha = config.alpha;
    let needs_grid = plan
        .tests
        .iter()
        .any(|t| matches!(t, Prepared::Kfold { calibration: KfoldCalibration::PValue, .. }));
    let grid_sorted: Option<Vec<Vec<f64>>> = match (&plan.table, needs_grid) {
        (Some(table), true) => Some(
            (0..table.lambdas().len())
                .into_par_iter()
                .map(|i| {
                    let mut d: Vec<f64> = features.iter().map(|f| sobolev_from(f, table.coeffs(i), at_one)).collect();
                    d.sort_by(f64::total_cmp);
                    d
                })
                .collect(),
        ),
        _ => None,
    };
    let fixed = plan
        .tests
        .iter()
        .enumerate()
        .map(|(ti, t)| {
            let draws: Result<Vec<f64>> = match t {
                Prepared::Sobolev(b) => Ok(features.iter().map(|f| sobolev_from(f, b, at_one)).collect()),
                Prepared::Rayleigh => Ok(features.iter().map(|f| f.rayleigh).collect()),
                Prepared::Bingham => Ok(features.iter().map(|f| f.bingham).collect()),
                Prepared::Kfold { calibration, .. } => replicate_errors(
                    features
                        .iter()
                        .map(|f| {
                            kfold_statistic(f, ti, *calibration, plan.table.as_ref(), grid_sorted.as_deref(), at_one)
                                .map(|(_, s)| s)
                        })
                        .collect(),
                ),
                _ => return None,
            };
            Some(draws.and_then(|d| upper_quantile(&d, alpha)))
        })
        .collect();
    Ok(NullCalibration { fixed, features, grid_sorted })
}

/// Runs the study described by `config`. Failures are confined to the
/// cells they occur in; the returned table records them.
pub fn run_power_study(config: &ExperimentConfig) -> Result<PowerTable> {
    config.validate()?;
    let plan = Plan::new(config)?;
    let at_one = crate::specfun::GegenbauerTable::new(config.p, plan.order).values_at_one()[1..].to_vec();
    let labels: Vec<String> = config.tests.iter().map(|t| t.to_string()).collect();

    // Pilot estimates do not depend on n; one per alternative.
    let pilots: Vec<Option<Result<PilotEstimate>>> = config
        .alternatives
        .iter()
        .enumerate()
        .map(|(a, spec)| {
            let size = config.tests.iter().find_map(|t| match t {
                TestSpec::SteinTuned { pilot_size } => Some(*pilot_size),
                _ => None,
            })?;
            let table = plan.table.as_ref()?;
            Some((|| {
                let model = AlternativeModel::new(spec.clone(), config.p)?;
                let pilot = model.sample(size, &mut replicate_rng(config.seed, Purpose::Pilot(a as u64), 0))?;
                abar(&pilot, 2, table.order())
            })())
        })
        .collect();

    let mut cells = Vec::new();
    for &n in &config.sample_sizes {
        let null = calibrate(&plan, config, n, &at_one);
        for (a, spec) in config.alternatives.iter().enumerate() {
            let row = run_row(&plan, config, &null, pilots[a].as_ref(), a, spec, n, &at_one);
            let mut row_cells: Vec<PowerCell> = labels
                .iter()
                .zip(&row)
                .map(|(label, r)| match r {
                    Ok(o) => {
                        let m = o.rejections.len() as f64;
                        let rate = o.rejections.iter().filter(|&&x| x).count() as f64 / m;
                        PowerCell {
                            alternative: spec.to_string(),
                            n,
                            test: label.clone(),
                            rejection: Some(100.0 * rate),
                            se: Some(100.0 * (rate * (1.0 - rate) / m).sqrt()),
                            best: false,
                            lambda: o.lambda,
                            error: None,
                        }
                    }
                    Err(e) => PowerCell {
                        alternative: spec.to_string(),
                        n,
                        test: label.clone(),
                        rejection: None,
                        se: None,
                        best: false,
                        lambda: None,
                        error: Some(e.to_string()),
                    },
                })
                .collect();
            mark_best(&mut row_cells, &row)?;
            cells.extend(row_cells);
        }
    }
    Ok(PowerTable { cells })
}

struct CellOutcome {
    rejections: Vec<bool>,
    lambda: Option<f64>,
}

fn mark_best(cells: &mut [PowerCell], row: &[Result<CellOutcome>]) -> Result<()> {
    let ok: Vec<usize> = (0..row.len()).filter(|&i| row[i].is_ok()).collect();
    let Some(&best) = ok.iter().max_by(|&&i, &&j| {
        let (a, b) = (cells[i].rejection.unwrap_or(0.0), cells[j].rejection.unwrap_or(0.0));
        a.total_cmp(&b).then(j.cmp(&i))
    }) else {
        return Ok(());
    };
    let best_rej = &row[best].as_ref().map_err(|_| Error::Numeric("unreachable".into()))?.rejections;
    for &i in &ok {
        let rej = &row[i].as_ref().map_err(|_| Error::Numeric("unreachable".into()))?.rejections;
        cells[i].best = i == best || !paired_onesided_test(rej, best_rej, 0.05)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_row(
    plan: &Plan,
    config: &ExperimentConfig,
    null: &Result<NullCalibration>,
    pilot: Option<&Result<PilotEstimate>>,
    a: usize,
    spec: &AlternativeSpec,
    n: usize,
    at_one: &[f64],
) -> Vec<Result<CellOutcome>> {
    let fail = |e: &Error| -> Vec<Result<CellOutcome>> {
        plan.tests.iter().map(|_| Err(Error::Numeric(e.to_string()))).collect()
    };
    let null = match null {
        Ok(c) => c,
        Err(e) => return fail(&Error::Numeric(format!("null calibration failed: {e}"))),
    };
    let model = match AlternativeModel::new(spec.clone(), config.p) {
        Ok(m) => m,
        Err(e) => return fail(&e),
    };

    // Decision rule per test: a critical value, or for tuned tests the λ and its critical value.
    let mut tuned: Option<Result<(usize, f64)>> = None;
    if plan.tests.iter().any(|t| matches!(t, Prepared::Tuned)) {
        tuned = Some((|| {
            let table = plan.table.as_ref().expect("grid built for tuned tests");
            let est = match pilot.expect("pilot drawn for tuned tests") {
                Ok(e) => e.with_target(n)?,
                Err(e) => return Err(Error::Numeric(format!("pilot failed: {e}"))),
            };
            let i = argmax_first(&table.scores(&est)?);
            let d: Vec<f64> = null.features.iter().map(|f| sobolev_from(f, table.coeffs(i), at_one)).collect();
            Ok((i, upper_quantile(&d, config.alpha)?))
        })());
    }

    let stream = Purpose::Alternative(((a as u64) << 32) ^ n as u64);
    let per_rep: Vec<Result<Features>> = (0..config.m_power)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(config.seed, stream, r as u64);
            let sample = model.sample(n, &mut rng)?;
            plan.features(&sample, &mut rng)
        })
        .collect();

    plan.tests
        .iter()
        .enumerate()
        .map(|(ti, t)| {
            if let Prepared::Failed(e) = t {
                return Err(Error::Numeric(e.clone()));
            }
            let mut rejections = Vec::with_capacity(per_rep.len());
            let mut lambda = None;
            let mut lambda_sum = 0.0;
            for (r, f) in per_rep.iter().enumerate() {
                let f = f.as_ref().map_err(|e| Error::Numeric(format!("replicate {r}: {e}")))?;
                let reject = match t {
                    Prepared::Sobolev(b) => {
                        let c = null.fixed[ti].as_ref().expect("fixed test calibrated");
                        sobolev_from(f, b, at_one) > *c.as_ref().map_err(|e| Error::Numeric(e.to_string()))?
                    }
                    Prepared::Rayleigh => f.rayleigh > *null.fixed[ti].as_ref().unwrap().as_ref().map_err(|e| Error::Numeric(e.to_string()))?,
                    Prepared::Bingham => f.bingham > *null.fixed[ti].as_ref().unwrap().as_ref().map_err(|e| Error::Numeric(e.to_string()))?,
                    Prepared::Tuned => {
                        let (i, c) = tuned.as_ref().unwrap().as_ref().map_err(|e| Error::Numeric(e.to_string()))?;
                        let table = plan.table.as_ref().unwrap();
                        lambda = Some(table.lambdas()[*i]);
                        sobolev_from(f, table.coeffs(*i), at_one) > *c
                    }
                    Prepared::Kfold { calibration, .. } => {
                        let table = plan.table.as_ref().unwrap();
                        let (i, stat) = kfold_statistic(f, ti, *calibration, Some(table), null.grid_sorted.as_deref(), at_one)
                            .map_err(|e| Error::Numeric(format!("replicate {r}: {e}")))?;
                        lambda_sum += table.lambdas()[i];
                        stat > *null.fixed[ti].as_ref().unwrap().as_ref().map_err(|e| Error::Numeric(e.to_string()))?
                    }
                    Prepared::Failed(_) => unreachable!(),
                };
                rejections.push(reject);
            }
            if matches!(t, Prepared::Kfold { .. }) {
                lambda = Some(lambda_sum / per_rep.len() as f64);
            }
            Ok(CellOutcome { rejections, lambda })
        })
        .collect()
}
