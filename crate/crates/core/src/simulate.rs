//! Monte Carlo paths for MS_B, MS and DCMM(p), and a parallel ensemble runner.
//!
//! Randomness comes from ChaCha8. Run `i` of an ensemble with master seed
//! `s` uses `ChaCha8Rng::seed_from_u64(s)` switched to stream `i`; single
//! paths use stream 0. Each run first draws its whole spread path and then
//! the returns, one uniform per step.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dcmm::DcmmParams;
use crate::error::{Error, Result};
use crate::markov::SpreadChainParams;
use crate::ms::MsParams;
use crate::states::{encode_transition, Return, SpreadState, TransitionState};

pub const DEFAULT_RUNS: usize = 25;
pub const DEFAULT_LENGTH: usize = 1_000_000;

pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    MsB,
    Ms,
    Dcmm,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "msb" | "ms_b" => Ok(ModelKind::MsB),
            "ms" => Ok(ModelKind::Ms),
            "dcmm" => Ok(ModelKind::Dcmm),
            other => Err(Error::InvalidParameter(format!("unknown model {other:?}, expected msb, ms or dcmm"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::MsB => "msb",
            ModelKind::Ms => "ms",
            ModelKind::Dcmm => "dcmm",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Ms(MsParams),
    Dcmm(DcmmParams),
}

impl ModelParams {
    pub fn chain(&self) -> &SpreadChainParams {
        match self {
            ModelParams::Ms(p) => &p.chain,
            ModelParams::Dcmm(p) => &p.chain,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::Ms(p) if p.is_bernoulli() => ModelKind::MsB,
            ModelParams::Ms(_) => ModelKind::Ms,
            ModelParams::Dcmm(_) => ModelKind::Dcmm,
        }
    }

    pub fn order(&self) -> usize {
        match self {
            ModelParams::Ms(_) => 0,
            ModelParams::Dcmm(p) => p.order(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: ModelParams,
    /// Number of recorded spread observations; the path carries one fewer return.
    pub length: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub n_runs: usize,
}

impl SimConfig {
    pub fn new(params: ModelParams, length: usize, seed: u64) -> Self {
        let burn_in = default_burn_in(&params);
        SimConfig { params, length, seed, burn_in, n_runs: DEFAULT_RUNS }
    }

    pub fn with_runs(mut self, n_runs: usize) -> Self {
        self.n_runs = n_runs;
        self
    }

    pub fn with_burn_in(mut self, burn_in: usize) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < 1 {
            return Err(Error::InvalidParameter("length must be at least 1".into()));
        }
        if self.n_runs < 1 {
            return Err(Error::InvalidParameter("n_runs must be at least 1".into()));
        }
        if self.burn_in < self.params.order() {
            return Err(Error::InvalidParameter(format!(
                "burn-in {} is shorter than the model order {}",
                self.burn_in,
                self.params.order()
            )));
        }
        Ok(())
    }
}

/// `max(10 p, 1000)` for DCMM(p), none for the memoryless models.
pub fn default_burn_in(params: &ModelParams) -> usize {
    match params {
        ModelParams::Ms(_) => 0,
        ModelParams::Dcmm(p) => (10 * p.order()).max(1000),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimPath {
    pub spreads: Vec<SpreadState>,
    pub transitions: Vec<TransitionState>,
    pub returns: Vec<Return>,
    pub seed_used: u64,
    pub stream: u64,
}

impl SimPath {
    pub fn returns_f64(&self) -> Vec<f64> {
        self.returns.iter().map(|r| r.value() as f64).collect()
    }

    pub fn squared_returns(&self) -> Vec<f64> {
        self.returns.iter().map(|r| r.squared() as f64).collect()
    }

    pub fn return_values(&self) -> Vec<i64> {
        self.returns.iter().map(|r| r.value() as i64).collect()
    }

    /// Writes `t,s,x,r`. The last spread has no successor, so its `x` and
    /// `r` fields are empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,s,x,r")?;
        for (t, s) in self.spreads.iter().enumerate() {
            match (self.transitions.get(t), self.returns.get(t)) {
                (Some(x), Some(r)) => writeln!(w, "{t},{s},{x},{r}")?,
                _ => writeln!(w, "{t},{s},,")?,
            }
        }
        Ok(())
    }
}

fn spread_step<R: Rng>(rng: &mut R, chain: &SpreadChainParams, from: SpreadState) -> SpreadState {
    if rng.gen::<f64>() < chain.prob_to_one(from) {
        SpreadState::One
    } else {
        SpreadState::Two
    }
}

fn spread_path<R: Rng>(rng: &mut R, chain: &SpreadChainParams, length: usize) -> Vec<SpreadState> {
    let mut out = Vec::with_capacity(length);
    if length == 0 {
        return out;
    }
    let pi1 = chain.spread_stationary()[0];
    let mut s = if rng.gen::<f64>() < pi1 { SpreadState::One } else { SpreadState::Two };
    out.push(s);
    for _ in 1..length {
        s = spread_step(rng, chain, s);
        out.push(s);
    }
    out
}

pub fn simulate_spread(chain: &SpreadChainParams, length: usize, seed: u64) -> Vec<SpreadState> {
    spread_path(&mut stream_rng(seed, 0), chain, length)
}

/// Draws returns given the regime, tracking the squared-return window for DCMM.
enum ReturnGenerator<'a> {
    Ms { move1: f64, move4: f64 },
    Dcmm { params: &'a DcmmParams, window: Vec<u8>, head: usize, move4: f64 },
}

impl<'a> ReturnGenerator<'a> {
    fn new(params: &'a ModelParams) -> Self {
        match params {
            ModelParams::Ms(p) => ReturnGenerator::Ms { move1: 2.0 * p.theta1, move4: 2.0 * p.theta4 },
            ModelParams::Dcmm(p) => ReturnGenerator::Dcmm {
                params: p,
                window: vec![0; p.order()],
                head: 0,
                move4: 2.0 * p.theta4,
            },
        }
    }

    fn move_prob_one(&self) -> f64 {
        match self {
            ReturnGenerator::Ms { move1, .. } => *move1,
            ReturnGenerator::Dcmm { params, window, head, .. } => {
                // window[head] is the oldest entry; beta_l multiplies the value l steps back
                let p = window.len();
                let mut z = params.alpha1;
                for (l, b) in params.beta1.iter().enumerate() {
                    let idx = head + p - 1 - l;
                    z += b * window[if idx >= p { idx - p } else { idx }] as f64;
                }
                crate::dcmm::logistic(z)
            }
        }
    }

    fn draw<R: Rng>(&mut self, rng: &mut R, x: TransitionState) -> Return {
        let u: f64 = rng.gen();
        let value: i8 = match x {
            TransitionState::Widen | TransitionState::Narrow => {
                if u < 0.5 {
                    -1
                } else {
                    1
                }
            }
            TransitionState::StayOne | TransitionState::StayTwo => {
                let eta = if x == TransitionState::StayOne {
                    self.move_prob_one()
                } else {
                    match self {
                        ReturnGenerator::Ms { move4, .. } | ReturnGenerator::Dcmm { move4, .. } => *move4,
                    }
                };
                if u < eta / 2.0 {
                    -2
                } else if u < eta {
                    2
                } else {
                    0
                }
            }
        };
        if let ReturnGenerator::Dcmm { window, head, .. } = self {
            window[*head] = (value * value) as u8;
            *head = (*head + 1) % window.len();
        }
        Return::new(value as i64).expect("generated return is in range")
    }
}

fn simulate_stream(config: &SimConfig, stream: u64) -> SimPath {
    let mut rng = stream_rng(config.seed, stream);
    let total = config.burn_in + config.length;
    let spreads = spread_path(&mut rng, config.params.chain(), total);
    let mut gen = ReturnGenerator::new(&config.params);
    let kept = config.length - 1;
    let mut transitions = Vec::with_capacity(kept);
    let mut returns = Vec::with_capacity(kept);
    for t in 0..total - 1 {
        let x = encode_transition(spreads[t], spreads[t + 1]);
        let r = gen.draw(&mut rng, x);
        if t >= config.burn_in {
            transitions.push(x);
            returns.push(r);
        }
    }
    SimPath {
        spreads: spreads[config.burn_in..].to_vec(),
        transitions,
        returns,
        seed_used: config.seed,
        stream,
    }
}

pub fn simulate_path(config: &SimConfig) -> Result<SimPath> {
    config.validate()?;
    Ok(simulate_stream(config, 0))
}

/// Per-run values of a vector statistic with their ensemble mean and spread.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub per_run: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Sample standard deviation across runs; `None` for a single run.
    pub sd: Option<Vec<f64>>,
}

impl EnsembleSummary {
    pub fn from_runs(per_run: Vec<Vec<f64>>) -> Result<Self> {
        let n = per_run.len();
        let width = per_run.first().map_or(0, Vec::len);
        if n == 0 || per_run.iter().any(|v| v.len() != width) {
            return Err(Error::InvalidParameter("ensemble runs must be nonempty and equally long".into()));
        }
        let mean: Vec<f64> = (0..width).map(|j| per_run.iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
        let sd = (n >= 2).then(|| {
            (0..width)
                .map(|j| {
                    let ss: f64 = per_run.iter().map(|v| (v[j] - mean[j]).powi(2)).sum();
                    (ss / (n - 1) as f64).sqrt()
                })
                .collect()
        });
        Ok(EnsembleSummary { per_run, mean, sd })
    }

    pub fn runs(&self) -> usize {
        self.per_run.len()
    }

    /// Standard error of the ensemble mean, `sd / sqrt(runs)`.
    pub fn standard_error(&self) -> Option<Vec<f64>> {
        let root = (self.runs() as f64).sqrt();
        self.sd.as_ref().map(|sd| sd.iter().map(|s| s / root).collect())
    }
}

/// Runs `config.n_runs` independent paths in parallel and evaluates
/// `statistic` on each. Results are ordered by run index.
pub fn run_ensemble<F>(config: &SimConfig, statistic: F) -> Result<EnsembleSummary>
where
    F: Fn(&SimPath) -> Result<Vec<f64>> + Sync,
{
    config.validate()?;
    let per_run = (0..config.n_runs as u64)
        .into_par_iter()
        .map(|run| statistic(&simulate_stream(config, run)))
        .collect::<Result<Vec<_>>>()?;
    EnsembleSummary::from_runs(per_run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ms::unconditional_moments;
    use crate::states::allowed_returns;

    fn ms_high() -> MsParams {
        MsParams::new(SpreadChainParams::new(0.953, 0.522).unwrap(), 0.0481, 0.00151).unwrap()
    }

    #[test]
    fn degenerate_spread_chain() {
        let chain = SpreadChainParams::new(1.0, 1.0).unwrap();
        assert!(simulate_spread(&chain, 1000, 7).iter().all(|s| *s == SpreadState::One));
    }

    #[test]
    fn spread_fraction_matches_stationary_law() {
        let chain = SpreadChainParams::new(0.953, 0.522).unwrap();
        let s = simulate_spread(&chain, 1_000_000, 11);
        let frac = s.iter().filter(|s| **s == SpreadState::One).count() as f64 / s.len() as f64;
        assert!((frac - 0.9174).abs() < 0.003, "{frac}");
    }

    #[test]
    fn bernoulli_spreads_are_uncorrelated() {
        let chain = SpreadChainParams::bernoulli(0.9).unwrap();
        let s: Vec<f64> = simulate_spread(&chain, 200_000, 3).iter().map(|s| s.ticks() as f64).collect();
        let acf = crate::stats::sample_acf(&s, 1).unwrap();
        assert!(acf.values[1].abs() < 3.0 / (s.len() as f64).sqrt());
    }

    #[test]
    fn zero_thetas_give_only_odd_moves() {
        let p = MsParams::new(SpreadChainParams::new(0.9, 0.4).unwrap(), 0.0, 0.0).unwrap();
        let path = simulate_path(&SimConfig::new(ModelParams::Ms(p), 50_000, 5)).unwrap();
        for (x, r) in path.transitions.iter().zip(&path.returns) {
            assert!(r.value().abs() <= 1);
            if x.spread_constant() {
                assert_eq!(r.value(), 0);
            }
        }
    }

    #[test]
    fn paths_respect_invariants() {
        let dcmm = DcmmParams::new(SpreadChainParams::new(0.953, 0.522).unwrap(), -2.921, vec![-0.156, 0.05], 0.00151)
            .unwrap();
        for params in [ModelParams::Ms(ms_high()), ModelParams::Dcmm(dcmm)] {
            let path = simulate_path(&SimConfig::new(params, 20_000, 9)).unwrap();
            assert_eq!(path.spreads.len(), 20_000);
            assert_eq!(path.returns.len(), 19_999);
            for t in 0..path.returns.len() {
                let x = encode_transition(path.spreads[t], path.spreads[t + 1]);
                assert_eq!(path.transitions[t], x);
                assert!(allowed_returns(x).contains(&path.returns[t]));
            }
        }
    }

    #[test]
    fn ms_sigma_matches_moments() {
        let path = simulate_path(&SimConfig::new(ModelParams::Ms(ms_high()), 1_000_000, 21)).unwrap();
        let r = path.returns_f64();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r.len() as f64;
        let expect = unconditional_moments(&ms_high()).sigma();
        assert!((var.sqrt() - expect).abs() < 0.005);
    }

    #[test]
    fn ensemble_is_deterministic_and_ordered() {
        let config = SimConfig::new(ModelParams::Ms(ms_high()), 5_000, 99).with_runs(6);
        let stat = |p: &SimPath| Ok(vec![p.return_values().iter().sum::<i64>() as f64, p.stream as f64]);
        let a = run_ensemble(&config, stat).unwrap();
        let b = run_ensemble(&config, stat).unwrap();
        assert_eq!(a, b);
        let streams: Vec<f64> = a.per_run.iter().map(|v| v[1]).collect();
        assert_eq!(streams, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(a.per_run[0][0], simulate_path(&config).unwrap().return_values().iter().sum::<i64>() as f64);
    }

    #[test]
    fn single_run_has_no_sd() {
        let config = SimConfig::new(ModelParams::Ms(ms_high()), 100, 1).with_runs(1);
        let e = run_ensemble(&config, |_| Ok(vec![1.0])).unwrap();
        assert!(e.sd.is_none());
        assert!(e.standard_error().is_none());
    }

    #[test]
    fn config_validation() {
        let cfg = SimConfig::new(ModelParams::Ms(ms_high()), 0, 1);
        assert!(simulate_path(&cfg).is_err());
        let dcmm = DcmmParams::new(SpreadChainParams::new(0.9, 0.5).unwrap(), -2.0, vec![0.1; 5], 0.0).unwrap();
        let cfg = SimConfig::new(ModelParams::Dcmm(dcmm), 10, 1);
        assert_eq!(cfg.burn_in, 1000);
        assert!(simulate_path(&cfg.with_burn_in(3)).is_err());
    }

    #[test]
    fn csv_layout() {
        let path = simulate_path(&SimConfig::new(ModelParams::Ms(ms_high()), 3, 4)).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "t,s,x,r");
        assert!(lines[3].ends_with(",,"));
    }

    #[test]
    fn model_kind_parsing() {
        assert_eq!("msb".parse::<ModelKind>().unwrap(), ModelKind::MsB);
        assert_eq!("DCMM".parse::<ModelKind>().unwrap(), ModelKind::Dcmm);
        assert!("garch".parse::<ModelKind>().is_err());
        let b = MsParams::new(SpreadChainParams::bernoulli(0.9).unwrap(), 0.1, 0.1).unwrap();
        assert_eq!(ModelParams::Ms(b).kind(), ModelKind::MsB);
    }
}
