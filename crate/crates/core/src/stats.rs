//! Sample statistics of return series: autocorrelations, aggregated returns
//! `r(t, dt)`, their normalized volatility and excess kurtosis.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AcfEstimate {
    /// `0..=max_lag`.
    pub lags: Vec<usize>,
    pub values: Vec<f64>,
    pub n: usize,
    /// Half width of the white-noise band, `z / sqrt(n)`.
    pub noise_band: f64,
}

/// Biased sample autocorrelation with a `2 / sqrt(n)` noise band.
pub fn sample_acf(series: &[f64], max_lag: usize) -> Result<AcfEstimate> {
    sample_acf_with_band(series, max_lag, 2.0)
}

pub fn sample_acf_with_band(series: &[f64], max_lag: usize, z: f64) -> Result<AcfEstimate> {
    let n = series.len();
    if n <= max_lag + 1 {
        return Err(Error::InsufficientData(format!(
            "series of length {n} is too short for lag {max_lag}"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let denom: f64 = centered.iter().map(|x| x * x).sum();
    if denom <= 0.0 || !denom.is_finite() {
        return Err(Error::Numerical("series has zero variance".into()));
    }
    let mut values = Vec::with_capacity(max_lag + 1);
    values.push(1.0);
    for tau in 1..=max_lag {
        let num: f64 = centered[..n - tau].iter().zip(&centered[tau..]).map(|(a, b)| a * b).sum();
        values.push(num / denom);
    }
    Ok(AcfEstimate { lags: (0..=max_lag).collect(), values, n, noise_band: z / (n as f64).sqrt() })
}

/// Bartlett standard errors `sqrt((1 + 2 sum_{k<tau} rho_k^2) / n)` from
/// the estimate's own values.
pub fn bartlett_se(acf: &AcfEstimate) -> Vec<f64> {
    let mut acc = 1.0;
    let mut out = vec![0.0];
    for tau in 1..acf.values.len() {
        out.push((acc / acf.n as f64).sqrt());
        acc += 2.0 * acf.values[tau].powi(2);
    }
    out
}

/// Batch-means standard errors of the full-sample ACF: the series is cut
/// into `blocks` contiguous pieces and the spread of the per-block
/// estimates is divided by `sqrt(blocks)`.
pub fn batch_acf_se(series: &[f64], max_lag: usize, blocks: usize) -> Result<Vec<f64>> {
    if blocks < 2 {
        return Err(Error::InvalidParameter("batch means need at least two blocks".into()));
    }
    let len = series.len() / blocks;
    let per_block = series
        .chunks_exact(len.max(1))
        .take(blocks)
        .map(|chunk| sample_acf(chunk, max_lag).map(|a| a.values))
        .collect::<Result<Vec<_>>>()?;
    if per_block.len() < blocks {
        return Err(Error::InsufficientData("series too short for the requested blocks".into()));
    }
    let b = blocks as f64;
    Ok((0..=max_lag)
        .map(|tau| {
            let mean = per_block.iter().map(|v| v[tau]).sum::<f64>() / b;
            let var = per_block.iter().map(|v| (v[tau] - mean).powi(2)).sum::<f64>() / (b - 1.0);
            (var / b).sqrt()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    /// Every start `t`; the default.
    #[default]
    Overlapping,
    /// Starts at multiples of `dt`.
    NonOverlapping,
}

impl Aggregation {
    pub fn from_flag(on: bool) -> Self {
        if on {
            Aggregation::Overlapping
        } else {
            Aggregation::NonOverlapping
        }
    }

    fn step(self, dt: usize) -> usize {
        match self {
            Aggregation::Overlapping => 1,
            Aggregation::NonOverlapping => dt,
        }
    }
}

fn check_dt(len: usize, dt: usize) -> Result<()> {
    if dt < 1 {
        return Err(Error::InvalidParameter("aggregation scale must be at least 1".into()));
    }
    if len < dt + 1 {
        return Err(Error::InsufficientData(format!("{len} returns cannot be aggregated over {dt}")));
    }
    Ok(())
}

/// `r(t, dt) = sum_{u=t}^{t+dt-1} r(u)`.
pub fn aggregate_returns(returns: &[i64], dt: usize, mode: Aggregation) -> Result<Vec<i64>> {
    check_dt(returns.len(), dt)?;
    let prefix = prefix_sums(returns);
    Ok((0..=returns.len() - dt).step_by(mode.step(dt)).map(|t| prefix[t + dt] - prefix[t]).collect())
}

fn prefix_sums(returns: &[i64]) -> Vec<i64> {
    let mut prefix = Vec::with_capacity(returns.len() + 1);
    prefix.push(0);
    let mut acc = 0;
    for r in returns {
        acc += r;
        prefix.push(acc);
    }
    prefix
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateStats {
    pub dt: usize,
    pub n: usize,
    pub mean: f64,
    pub sigma: f64,
    /// `sigma / sqrt(dt)`.
    pub sigma_n: f64,
    /// Excess kurtosis.
    pub kappa: f64,
    pub histogram: BTreeMap<i64, u64>,
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
    m4: f64,
}

/// Central moments from one pass of power sums. The inputs are integers of
/// moderate size, so the raw sums are exact enough that the usual
/// cancellation of the shortcut formula does not arise.
fn central_moments(values: impl Iterator<Item = i64>) -> Moments {
    let (mut n, mut s1, mut s2, mut s3, mut s4) = (0usize, 0.0, 0.0, 0.0, 0.0);
    for v in values {
        let a = v as f64;
        let a2 = a * a;
        n += 1;
        s1 += a;
        s2 += a2;
        s3 += a2 * a;
        s4 += a2 * a2;
    }
    let nf = n as f64;
    let mean = s1 / nf;
    let (e2, e3, e4) = (s2 / nf, s3 / nf, s4 / nf);
    let m2 = e2 - mean * mean;
    let m4 = e4 - 4.0 * mean * e3 + 6.0 * mean * mean * e2 - 3.0 * mean.powi(4);
    Moments { n, mean, m2, m4 }
}

/// Largest `|r(t, dt)|` for which fourth powers summed over a chunk of
/// `EXACT_CHUNK` windows stay inside `i64`.
const EXACT_BOUND: i64 = 1 << 12;
const EXACT_CHUNK: usize = 1 << 14;

/// Integer power sums over all overlapping windows, accumulated exactly.
fn overlapping_moments_exact(prefix: &[i64], dt: usize) -> Moments {
    let n = prefix.len() - dt;
    let (head, tail) = (&prefix[..n], &prefix[dt..]);
    let mut tot = [0i128; 4];
    for (h, t) in head.chunks(EXACT_CHUNK).zip(tail.chunks(EXACT_CHUNK)) {
        let mut acc = [0i64; 4];
        for (a, b) in h.iter().zip(t) {
            let v = b - a;
            let v2 = v * v;
            acc[0] += v;
            acc[1] += v2;
            acc[2] += v2 * v;
            acc[3] += v2 * v2;
        }
        for k in 0..4 {
            tot[k] += acc[k] as i128;
        }
    }
    let nf = n as f64;
    let mean = tot[0] as f64 / nf;
    let (e2, e3, e4) = (tot[1] as f64 / nf, tot[2] as f64 / nf, tot[3] as f64 / nf);
    Moments {
        n,
        mean,
        m2: e2 - mean * mean,
        m4: e4 - 4.0 * mean * e3 + 6.0 * mean * mean * e2 - 3.0 * mean.powi(4),
    }
}

pub fn aggregate_stats(returns: &[i64], dt: usize, mode: Aggregation) -> Result<AggregateStats> {
    let agg = aggregate_returns(returns, dt, mode)?;
    if agg.len() < 4 {
        return Err(Error::InsufficientData(format!("only {} aggregated observations", agg.len())));
    }
    let m = central_moments(agg.iter().copied());
    if m.m2 <= 0.0 {
        return Err(Error::Numerical(format!("aggregated returns at dt = {dt} have zero variance")));
    }
    let mut histogram = BTreeMap::new();
    for v in &agg {
        *histogram.entry(*v).or_insert(0) += 1;
    }
    let sigma = m.m2.sqrt();
    Ok(AggregateStats {
        dt,
        n: m.n,
        mean: m.mean,
        sigma,
        sigma_n: sigma / (dt as f64).sqrt(),
        kappa: m.m4 / (m.m2 * m.m2) - 3.0,
        histogram,
    })
}

/// `(sigma_n, kappa)` at each scale without materializing histograms.
pub fn scaling_profile(returns: &[i64], dts: &[usize], mode: Aggregation) -> Result<Vec<(f64, f64)>> {
    let prefix = prefix_sums(returns);
    let max_abs = returns.iter().map(|r| r.abs()).max().unwrap_or(0);
    dts.iter()
        .map(|&dt| {
            check_dt(returns.len(), dt)?;
            let m = if mode == Aggregation::Overlapping && max_abs.saturating_mul(dt as i64) <= EXACT_BOUND {
                overlapping_moments_exact(&prefix, dt)
            } else {
                let starts = (0..=returns.len() - dt).step_by(mode.step(dt));
                central_moments(starts.map(|t| prefix[t + dt] - prefix[t]))
            };
            if m.n < 4 || m.m2 <= 0.0 {
                return Err(Error::InsufficientData(format!("degenerate aggregation at dt = {dt}")));
            }
            Ok(((m.m2 / dt as f64).sqrt(), m.m4 / (m.m2 * m.m2) - 3.0))
        })
        .collect()
}

/// Counts windows where the parity of `r(t, dt)` disagrees with whether the
/// spread changed between `t` and `t + dt`.
pub fn parity_violations(spreads: &[u8], returns: &[i64], dt: usize) -> usize {
    let prefix = prefix_sums(returns);
    let n = returns.len().min(spreads.len().saturating_sub(1));
    (0..n.saturating_sub(dt - 1))
        .filter(|&t| {
            let odd = (prefix[t + dt] - prefix[t]).rem_euclid(2) == 1;
            odd != (spreads[t + dt] != spreads[t])
        })
        .count()
}

/// Odd histogram bins with at least `min_count` entries, paired with
/// whether each lies strictly below the larger of its even neighbors.
pub fn odd_bin_dominance(histogram: &BTreeMap<i64, u64>, min_count: u64) -> Vec<(i64, bool)> {
    let count = |k: i64| histogram.get(&k).copied().unwrap_or(0);
    histogram
        .iter()
        .filter(|(k, c)| k.rem_euclid(2) == 1 && **c >= min_count)
        .map(|(&k, &c)| (k, c < count(k - 1).max(count(k + 1))))
        .collect()
}

pub fn write_acf_csv<W: Write>(acf: &AcfEstimate, mut w: W) -> Result<()> {
    writeln!(w, "lag,value,band")?;
    for (lag, v) in acf.lags.iter().zip(&acf.values) {
        writeln!(w, "{lag},{v},{}", acf.noise_band)?;
    }
    Ok(())
}

pub fn write_histogram_csv<W: Write>(histogram: &BTreeMap<i64, u64>, mut w: W) -> Result<()> {
    writeln!(w, "bin,count")?;
    for (bin, count) in histogram {
        writeln!(w, "{bin},{count}")?;
    }
    Ok(())
}
