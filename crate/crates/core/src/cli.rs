//! The `tickms` batch pipeline: `ingest`, `calibrate`, `simulate`, `verify`.
//!
//! Reports are flat `key = value` text and tables are CSV. Each command
//! writes a `manifest.txt` with input and output digests, the seed and the
//! modelling conventions in force; apart from its `created_utc` line every
//! output is a pure function of the inputs and the seed.
//!
//! Exit codes: 0 success, 2 input error, 3 estimation or validation error,
//! 4 verification failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibrate::{estimate_counts, fit_logit_design, fit_power_law, significance_stars, LogitDesign};
use crate::dcmm::{acf_squared_dcmm_lags, build_squared_chain, e3_closed_form, DcmmParams, RegimeCoupling};
use crate::error::Error;
use crate::ingest::{activity_profile, build_tick_series, parse_trades_file, split_regimes, ActivityRegime, TickSeries};
use crate::markov::SpreadChainParams;
use crate::ms::{acf_squared, MsParams};
use crate::simulate::{run_ensemble, simulate_path, ModelKind, ModelParams, SimConfig, DEFAULT_LENGTH, DEFAULT_RUNS};
use crate::states::TransitionState;
use crate::stats::{batch_acf_se, sample_acf, scaling_profile, Aggregation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_ESTIMATION: i32 = 3;
pub const EXIT_VERIFY: i32 = 4;

pub const SEED_ENV: &str = "TICKMS_SEED";
const DEFAULT_SEED: u64 = 1;
const VERIFY_BLOCKS: usize = 100;
const VERIFY_LENGTH: usize = 1_000_000;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Estimation(String),
    Verification(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Estimation(_) => EXIT_ESTIMATION,
            CliError::Verification(_) => EXIT_VERIFY,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Estimation(m) => write!(f, "estimation error: {m}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::Parse(_) => CliError::Input(e.to_string()),
            other => CliError::Estimation(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "tickms", version, about = "Spread and mid-price models for large-tick assets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a trade file into high and low activity tick series.
    Ingest(IngestArgs),
    /// Estimate MS or DCMM parameters from a tick series.
    Calibrate(CalibrateArgs),
    /// Simulate an ensemble of paths and summarize them.
    Simulate(SimulateArgs),
    /// Compare analytic and simulated autocorrelations of squared returns.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Msb,
    Ms,
    Dcmm,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Msb => ModelKind::MsB,
            ModelArg::Ms => ModelKind::Ms,
            ModelArg::Dcmm => ModelKind::Dcmm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Switch {
    On,
    Off,
}

/// Closed index window written `lo:hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl std::str::FromStr for Window {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (lo, hi) = s.split_once(':').ok_or_else(|| format!("window {s:?} must be lo:hi"))?;
        let lo: f64 = lo.trim().parse().map_err(|_| format!("bad window start {lo:?}"))?;
        let hi: f64 = hi.trim().parse().map_err(|_| format!("bad window end {hi:?}"))?;
        if !(lo > 0.0 && lo < hi) {
            return Err(format!("window needs 0 < lo < hi, got {lo}:{hi}"));
        }
        Ok(Window { lo, hi })
    }
}

impl std::fmt::Display for Window {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.lo, self.hi)
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub tick_size: f64,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Tick series CSV, or a simulated path CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelArg::Ms)]
    pub model: ModelArg,
    /// DCMM order.
    #[arg(long)]
    pub p: Option<usize>,
    /// Power-law fit window for the lag coefficients.
    #[arg(long)]
    pub window: Option<Window>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Parameter file (TOML).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Master seed; falls back to the file, then to TICKMS_SEED.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Largest lag of the squared-return ACF summary.
    #[arg(long)]
    pub max_lag: Option<usize>,
    /// Power-law fit window for the excess kurtosis against dt.
    #[arg(long)]
    pub window: Option<Window>,
    #[arg(long, value_enum)]
    pub overlap: Option<Switch>,
    /// Number of runs whose paths are written out (default: all).
    #[arg(long)]
    pub paths: Option<usize>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub max_lag: Option<usize>,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parameter file. Every section is optional; `[run]` holds defaults that
/// command-line flags override.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spread: Option<SpreadSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub returns: Option<ReturnsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dcmm: Option<DcmmSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run: Option<RunSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpreadSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p11: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p21: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bernoulli: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReturnsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta1: Option<f64>,
    pub theta4: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcmmSection {
    pub alpha1: f64,
    pub beta1: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub length: Option<usize>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub burn_in: Option<usize>,
    pub max_lag: Option<usize>,
    pub overlap: Option<Switch>,
    pub window: Option<String>,
}

impl ParamsFile {
    pub fn parse(text: &str) -> Result<Self, Error> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_model(params: &ModelParams) -> Self {
        let chain = params.chain();
        let spread = match chain.bernoulli_p() {
            Some(p) => SpreadSection { bernoulli: Some(p), ..Default::default() },
            None => SpreadSection { p11: Some(chain.p11()), p21: Some(chain.p21()), bernoulli: None },
        };
        let (returns, dcmm) = match params {
            ModelParams::Ms(m) => (ReturnsSection { theta1: Some(m.theta1), theta4: m.theta4 }, None),
            ModelParams::Dcmm(d) => (
                ReturnsSection { theta1: None, theta4: d.theta4 },
                Some(DcmmSection { alpha1: d.alpha1, beta1: d.beta1.clone() }),
            ),
        };
        ParamsFile { spread: Some(spread), returns: Some(returns), dcmm, run: None }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("parameter file serializes")
    }

    fn chain(&self) -> Result<SpreadChainParams, Error> {
        let s = self.spread.as_ref().ok_or_else(|| Error::InvalidParameter("missing [spread] section".into()))?;
        match (s.p11, s.p21, s.bernoulli) {
            (None, None, Some(p)) => SpreadChainParams::bernoulli(p),
            (Some(p11), Some(p21), None) => SpreadChainParams::new(p11, p21),
            _ => Err(Error::InvalidParameter("[spread] needs either p11 and p21, or bernoulli".into())),
        }
    }

    fn theta4(&self) -> Result<f64, Error> {
        Ok(self.returns.as_ref().ok_or_else(|| Error::InvalidParameter("missing [returns] section".into()))?.theta4)
    }

    /// Model parameters for `kind`. For DCMM, `p` selects the first `p`
    /// lag coefficients of the file.
    pub fn model_params(&self, kind: ModelKind, p: Option<usize>) -> Result<ModelParams, Error> {
        let chain = self.chain()?;
        match kind {
            ModelKind::MsB | ModelKind::Ms => {
                if kind == ModelKind::MsB && chain.bernoulli_p().is_none() {
                    return Err(Error::InvalidParameter("model msb needs spread.bernoulli".into()));
                }
                let theta1 = self
                    .returns
                    .as_ref()
                    .and_then(|r| r.theta1)
                    .ok_or_else(|| Error::InvalidParameter("missing returns.theta1".into()))?;
                Ok(ModelParams::Ms(MsParams::new(chain, theta1, self.theta4()?)?))
            }
            ModelKind::Dcmm => {
                let d = self.dcmm.as_ref().ok_or_else(|| Error::InvalidParameter("missing [dcmm] section".into()))?;
                let p = p.unwrap_or(d.beta1.len());
                if p > d.beta1.len() {
                    return Err(Error::InvalidParameter(format!(
                        "order {p} requested but the file has {} lag coefficients",
                        d.beta1.len()
                    )));
                }
                Ok(ModelParams::Dcmm(DcmmParams::new(chain, d.alpha1, d.beta1[..p].to_vec(), self.theta4()?)?))
            }
        }
    }

    fn run(&self) -> RunSection {
        self.run.clone().unwrap_or_default()
    }
}

/// Flat `key = value` report with insertion order kept.
#[derive(Debug, Default, Clone)]
pub struct Report(Vec<(String, String)>);

impl Report {
    fn with_manifest() -> Self {
        let mut r = Report::default();
        r.put("manifest", "manifest.txt");
        r
    }

    pub fn put(&mut self, key: impl Into<String>, value: impl ToString) {
        self.0.push((key.into(), value.to_string()));
    }

    fn put_opt(&mut self, key: &str, value: Option<f64>) {
        match value {
            Some(v) => self.put(key, v),
            None => self.put(key, "undefined"),
        }
    }

    pub fn render(&self) -> String {
        self.0.iter().fold(String::new(), |mut out, (k, v)| {
            let _ = writeln!(out, "{k} = {v}");
            out
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Collects outputs and writes them with a manifest that lists digests.
struct OutputDir {
    dir: PathBuf,
    manifest: Report,
    outputs: Vec<(String, String)>,
}

impl OutputDir {
    fn create(dir: &Path, command: &str) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let mut manifest = Report::default();
        manifest.put("command", command);
        manifest.put("version", env!("CARGO_PKG_VERSION"));
        Ok(OutputDir { dir: dir.to_path_buf(), manifest, outputs: Vec::new() })
    }

    fn input(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        self.manifest.put(format!("input.{}", path.display()), sha256_hex(&bytes));
        Ok(bytes)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        self.outputs.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    fn write_with<F>(&mut self, name: &str, f: F) -> CliResult<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<(), Error>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    fn finish(mut self) -> CliResult<()> {
        for (name, digest) in std::mem::take(&mut self.outputs) {
            self.manifest.put(format!("output.{name}"), digest);
        }
        self.manifest.put("created_utc", chrono::Utc::now().format("%Y-%m-%dT%H:%M:%SZ"));
        let path = self.dir.join("manifest.txt");
        fs::write(&path, self.manifest.render()).map_err(|e| io_err(&path, e))
    }
}

fn read_params(out: &mut OutputDir, path: &Path) -> CliResult<ParamsFile> {
    let bytes = out.input(path)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::Input(format!("{} is not UTF-8", path.display())))?;
    ParamsFile::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> CliResult<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| CliError::Input(format!("{SEED_ENV}={v:?} is not a 64-bit integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

pub fn cmd_ingest(args: &IngestArgs) -> CliResult<Report> {
    let mut out = OutputDir::create(&args.output, "ingest")?;
    let digest = sha256_hex(&fs::read(&args.input).map_err(|e| io_err(&args.input, e))?);
    out.manifest.put(format!("input.{}", args.input.display()), digest);
    out.manifest.put("tick_size", args.tick_size);
    out.manifest.put("decision.quotes", "bid and ask attached to each execution");
    out.manifest.put("decision.collapse", "consecutive identical (date, timestamp_ms, side) keep the last record");
    out.manifest.put("decision.session", "09:30-16:00, first and last six minutes trimmed");

    let parsed = parse_trades_file(&args.input)?;
    let split = split_regimes(&parsed.records);
    let mut report = Report::with_manifest();
    report.put("records", parsed.records.len());
    report.put("collapsed", parsed.collapsed);
    report.put("rejected_lines", parsed.errors.len());
    for e in &parsed.errors {
        report.put(format!("rejected.line_{}", e.line), &e.message);
    }
    for (i, w) in parsed.warnings.iter().enumerate() {
        report.put(format!("warning_{}", i + 1), w);
    }
    report.put("trimmed", split.trimmed);
    report.put("outside_session", split.outside_session);
    for (regime, recs) in [(ActivityRegime::High, &split.high), (ActivityRegime::Low, &split.low)] {
        let mut series = build_tick_series(recs, args.tick_size)?;
        series.regime = Some(regime);
        report.put(format!("{regime}.records"), recs.len());
        report.put(format!("{regime}.segments"), series.segments.len());
        report.put(format!("{regime}.returns"), series.return_count());
        report.put(format!("{regime}.dropped"), series.dropped_count);
        out.write_with(&format!("series_{regime}.csv"), |b| series.write_csv(b))?;
    }
    if !parsed.records.is_empty() {
        let profile = activity_profile(&parsed.records, args.tick_size)?;
        out.write_with("profile.csv", |b| profile.write_csv(b))?;
    }
    out.write("report.txt", report.render().as_bytes())?;
    out.finish()?;
    Ok(report)
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> CliResult<Report> {
    let mut out = OutputDir::create(&args.output, "calibrate")?;
    let bytes = out.input(&args.input)?;
    let series = TickSeries::read_csv(bytes.as_slice())?;
    let kind: ModelKind = args.model.into();
    let counts = estimate_counts(&series)?;
    let mut report = Report::with_manifest();
    report.put("model", kind);
    report.put("segments", series.segments.len());
    report.put("n_spreads", counts.n_s);
    report.put("n_returns", series.return_count());
    report.put("pi1_hat", counts.pi1_hat);
    report.put("pi1_se", counts.pi1_se());
    report.put_opt("p11_hat", counts.p11_hat);
    report.put_opt("p11_se", counts.p11_se());
    report.put_opt("p21_hat", counts.p21_hat);
    report.put_opt("p21_se", counts.p21_se());
    for (name, k) in [("theta1", TransitionState::StayOne), ("theta4", TransitionState::StayTwo)] {
        let hat = if k == TransitionState::StayOne { counts.theta1_hat } else { counts.theta4_hat };
        report.put_opt(&format!("{name}_hat"), hat);
        report.put_opt(&format!("{name}_se"), counts.theta_se(k));
        if let Some(sym) = counts.symmetry(k) {
            report.put(format!("{name}.symmetry_imbalance"), sym.imbalance);
            report.put(format!("{name}.symmetry_z"), sym.z);
            report.put(format!("{name}.symmetry_flag"), sym.flagged);
        }
    }
    for i in 0..2 {
        for j in 0..2 {
            report.put(format!("n_{}{}", i + 1, j + 1), counts.n_ij[i][j]);
        }
    }
    for k in TransitionState::ALL {
        report.put(format!("n_{}", k.label()), counts.n_k[k.index()]);
        report.put(format!("n0_{}", k.label()), counts.n0k[k.index()]);
    }

    let mut params = ParamsFile {
        spread: Some(SpreadSection { p11: counts.p11_hat, p21: counts.p21_hat, bernoulli: None }),
        returns: counts.theta4_hat.map(|t4| ReturnsSection { theta1: counts.theta1_hat, theta4: t4 }),
        dcmm: None,
        run: None,
    };

    match kind {
        ModelKind::Dcmm => {
            let p = args.p.ok_or_else(|| CliError::Input("--p is required for dcmm".into()))?;
            let design = LogitDesign::from_series(&series, p)?;
            let fit = fit_logit_design(&design)?;
            report.put("logit.p", p);
            report.put("logit.n_obs", fit.n_obs);
            report.put("logit.converged", fit.converged);
            report.put("logit.iterations", fit.iterations);
            report.put("logit.log_likelihood", fit.log_likelihood);
            report.put("logit.ridge_used", fit.ridge_used);
            if let Some(d) = &fit.diagnostic {
                report.put("logit.diagnostic", d);
            }
            let names = std::iter::once("alpha1".to_string()).chain((1..=p).map(|i| format!("beta1_{i:02}")));
            for (i, name) in names.enumerate() {
                let est = fit.estimates()[i];
                report.put(&name, est);
                report.put(format!("{name}.se"), fit.std_errors[i]);
                report.put(format!("{name}.z"), fit.z_values[i]);
                report.put(format!("{name}.stars"), significance_stars(fit.p_values[i]));
            }
            let window = args.window.unwrap_or(Window { lo: 3.0, hi: 50.0 });
            let idx: Vec<f64> = (1..=p).map(|i| i as f64).collect();
            if let Ok(pl) = fit_power_law(&fit.beta1, &idx, (window.lo, window.hi)) {
                report.put("beta_decay.window", window);
                report.put("beta_decay.exponent", pl.exponent);
                report.put("beta_decay.exponent_se", pl.exponent_se);
                report.put("beta_decay.excluded", pl.excluded);
            }
            if !fit.converged {
                out.write("report.txt", report.render().as_bytes())?;
                out.finish()?;
                return Err(CliError::Estimation(fit.diagnostic.unwrap_or_else(|| "logit fit did not converge".into())));
            }
            params.dcmm = Some(DcmmSection { alpha1: fit.alpha1, beta1: fit.beta1 });
        }
        ModelKind::Ms | ModelKind::MsB => {
            counts.ms_params()?;
        }
    }
    out.write("report.txt", report.render().as_bytes())?;
    out.write("params.toml", params.to_toml().as_bytes())?;
    out.finish()?;
    Ok(report)
}

fn power_of_two_scales(max: usize) -> Vec<usize> {
    std::iter::successors(Some(1usize), |d| Some(d * 2)).take_while(|d| *d <= max).collect()
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<Report> {
    let mut out = OutputDir::create(&args.output, "simulate")?;
    let file = read_params(&mut out, &args.input)?;
    let run = file.run();
    let kind: ModelKind = args.model.into();
    let params = file.model_params(kind, args.p)?;
    let length = args.length.or(run.length).unwrap_or(DEFAULT_LENGTH);
    let runs = args.runs.or(run.runs).unwrap_or(DEFAULT_RUNS);
    let seed = resolve_seed(args.seed, run.seed)?;
    let max_lag = args.max_lag.or(run.max_lag).unwrap_or(50);
    let overlap = args.overlap.or(run.overlap).unwrap_or(Switch::On);
    let window = match (args.window, &run.window) {
        (Some(w), _) => w,
        (None, Some(w)) => w.parse().map_err(CliError::Input)?,
        (None, None) => Window { lo: 8.0, hi: 512.0 },
    };
    let mut config = SimConfig::new(params, length, seed).with_runs(runs);
    if let Some(b) = run.burn_in {
        config = config.with_burn_in(b);
    }
    config.validate()?;
    let mode = Aggregation::from_flag(overlap == Switch::On);
    let dts = power_of_two_scales(512.min(length.saturating_sub(2) / 4).max(1));

    out.manifest.put("seed", seed);
    out.manifest.put("config_digest", sha256_hex(format!("{config:?}|{max_lag}|{overlap:?}|{window}").as_bytes()));
    out.manifest.put("decision.rng", "chacha8, seed_from_u64(seed) with stream = run index");
    out.manifest.put("decision.burn_in", config.burn_in);
    out.manifest.put("decision.dcmm_window_init", "zeros");
    out.manifest.put("decision.overlap", format!("{overlap:?}").to_lowercase());
    out.manifest.put("decision.acf", "biased");
    out.manifest.put("decision.kappa_fit_window", window);

    let write_paths = args.paths.unwrap_or(runs).min(runs);
    let path_csvs: std::sync::Mutex<Vec<(usize, Vec<u8>)>> = std::sync::Mutex::new(Vec::new());
    let ensemble = run_ensemble(&config, |path| {
        let mut stats: Vec<f64> = Vec::new();
        for (sn, k) in scaling_profile(&path.return_values(), &dts, mode)? {
            stats.push(sn);
            stats.push(k);
        }
        stats.extend(sample_acf(&path.squared_returns(), max_lag)?.values);
        if (path.stream as usize) < write_paths {
            let mut buf = Vec::new();
            path.write_csv(&mut buf)?;
            path_csvs.lock().expect("no poisoned lock").push((path.stream as usize, buf));
        }
        Ok(stats)
    })?;
    let mut csvs = path_csvs.into_inner().expect("no poisoned lock");
    csvs.sort_by_key(|(i, _)| *i);
    for (i, buf) in &csvs {
        out.write(&format!("paths/path_{i:03}.csv"), buf)?;
    }

    let sd = ensemble.sd.as_ref();
    let mut summary = String::from(if sd.is_some() {
        "dt,sigma_n_mean,sigma_n_sd,kappa_mean,kappa_sd\n"
    } else {
        "dt,sigma_n_mean,kappa_mean\n"
    });
    for (j, dt) in dts.iter().enumerate() {
        let (a, b) = (2 * j, 2 * j + 1);
        match sd {
            Some(sd) => writeln!(summary, "{dt},{},{},{},{}", ensemble.mean[a], sd[a], ensemble.mean[b], sd[b]),
            None => writeln!(summary, "{dt},{},{}", ensemble.mean[a], ensemble.mean[b]),
        }
        .expect("write to string");
    }
    out.write("summary.csv", summary.as_bytes())?;

    let off = 2 * dts.len();
    let mut acf = String::from(if sd.is_some() { "lag,mean,sd\n" } else { "lag,mean\n" });
    for lag in 0..=max_lag {
        match sd {
            Some(sd) => writeln!(acf, "{lag},{},{}", ensemble.mean[off + lag], sd[off + lag]),
            None => writeln!(acf, "{lag},{}", ensemble.mean[off + lag]),
        }
        .expect("write to string");
    }
    out.write("acf.csv", acf.as_bytes())?;

    let mut report = Report::with_manifest();
    report.put("model", kind);
    report.put("order", config.params.order());
    report.put("length", length);
    report.put("runs", runs);
    report.put("seed", seed);
    report.put("burn_in", config.burn_in);
    report.put("sd_available", sd.is_some());
    let kappa: Vec<f64> = (0..dts.len()).map(|j| ensemble.mean[2 * j + 1]).collect();
    let scales: Vec<f64> = dts.iter().map(|d| *d as f64).collect();
    match fit_power_law(&kappa, &scales, (window.lo, window.hi)) {
        Ok(f) => {
            report.put("kappa_fit.window", window);
            report.put("kappa_fit.exponent", f.exponent);
            report.put("kappa_fit.exponent_se", f.exponent_se);
            report.put("kappa_fit.excluded", f.excluded);
        }
        Err(e) => report.put("kappa_fit.error", e),
    }
    out.write("report.txt", report.render().as_bytes())?;
    out.finish()?;
    Ok(report)
}

/// One row of the analytic-versus-simulated comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub tau: usize,
    pub analytic: f64,
    pub mc: f64,
    pub se: f64,
    pub pass: bool,
}

/// Analytic `rho(1..=max_lag)` against the sample ACF of one simulated
/// path, with batch-means standard errors; rows pass within 3 SE.
pub fn verify_rows(params: &ModelParams, max_lag: usize, length: usize, seed: u64) -> Result<Vec<VerifyRow>, Error> {
    let analytic: Vec<f64> = match params {
        ModelParams::Ms(p) => (1..=max_lag as u32).map(|t| acf_squared(p, t)).collect(),
        ModelParams::Dcmm(p) => acf_squared_dcmm_lags(p, RegimeCoupling::Exact, max_lag as u32)?,
    };
    let path = simulate_path(&SimConfig::new(params.clone(), length, seed))?;
    let sq = path.squared_returns();
    let mc = sample_acf(&sq, max_lag)?;
    let se = batch_acf_se(&sq, max_lag, VERIFY_BLOCKS)?;
    Ok((1..=max_lag)
        .map(|tau| {
            let a = analytic[tau - 1];
            VerifyRow { tau, analytic: a, mc: mc.values[tau], se: se[tau], pass: (mc.values[tau] - a).abs() <= 3.0 * se[tau] }
        })
        .collect())
}

pub fn cmd_verify(args: &VerifyArgs) -> CliResult<Report> {
    let mut out = OutputDir::create(&args.output, "verify")?;
    let file = read_params(&mut out, &args.input)?;
    let run = file.run();
    let kind: ModelKind = args.model.into();
    let params = file.model_params(kind, args.p)?;
    let max_lag = args.max_lag.or(run.max_lag).unwrap_or(10);
    let length = args.length.or(run.length).unwrap_or(VERIFY_LENGTH);
    let seed = resolve_seed(args.seed, run.seed)?;
    out.manifest.put("seed", seed);
    out.manifest.put("decision.coupling", "exact spread-window chain");
    out.manifest.put("decision.se", format!("batch means over {VERIFY_BLOCKS} blocks"));

    let rows = verify_rows(&params, max_lag, length, seed)?;
    let mut table = String::from("tau,analytic,mc,se,pass\n");
    for r in &rows {
        writeln!(table, "{},{},{},{},{}", r.tau, r.analytic, r.mc, r.se, r.pass).expect("write to string");
    }
    out.write("verify.csv", table.as_bytes())?;

    let mut report = Report::with_manifest();
    report.put("model", kind);
    report.put("order", params.order());
    report.put("max_lag", max_lag);
    report.put("length", length);
    report.put("seed", seed);
    let failed = rows.iter().filter(|r| !r.pass).count();
    let mut pass = failed == 0;
    report.put("failed_lags", failed);
    if let ModelParams::Dcmm(p) = &params {
        if p.order() == 1 {
            let closed = e3_closed_form(p)?;
            let spectrum = build_squared_chain(p)?.matrix().to_dense()?.spectrum()?;
            let numeric = spectrum
                .iter()
                .map(|z| z.re)
                .min_by(|a, b| (a - closed).abs().total_cmp(&(b - closed).abs()))
                .unwrap_or(f64::NAN);
            let ok = (numeric - closed).abs() < 1e-10;
            report.put("e3.closed_form", closed);
            report.put("e3.spectrum", numeric);
            report.put("e3.pass", ok);
            pass &= ok;
        }
    }
    report.put("pass", pass);
    out.write("report.txt", report.render().as_bytes())?;
    out.finish()?;
    if pass {
        Ok(report)
    } else {
        Err(CliError::Verification(format!("{failed} lags outside 3 standard errors")))
    }
}

pub fn execute(cli: &Cli) -> CliResult<Report> {
    match &cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("tickms: {e}");
            e.code()
        }
    }
}
