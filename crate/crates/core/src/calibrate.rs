//! Estimation from observed tick series.
//!
//! The spread chain and the MS thetas come from transition and zero-return
//! counts. The DCMM logit coefficients are fitted by iteratively reweighted
//! least squares on regime-1 steps, regressing the move indicator on the
//! preceding `p` squared returns.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dcmm::{logistic, SquaredReturnWindow};
use crate::error::{Error, Result};
use crate::ingest::TickSeries;
use crate::markov::SpreadChainParams;
use crate::ms::MsParams;
use crate::states::{binarize_return, is_allowed, BinaryMove, TransitionState};

/// z-score beyond which the `+2` / `-2` imbalance is flagged.
pub const SYMMETRY_Z_LIMIT: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryCheck {
    /// `(n(+2) - n(-2)) / N_k`.
    pub imbalance: f64,
    /// `(n(+2) - n(-2)) / sqrt(n(+2) + n(-2))`.
    pub z: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountEstimates {
    pub n1: u64,
    pub n_s: u64,
    /// `n_ij[i][j]`: spread `i + 1` followed by `j + 1`.
    pub n_ij: [[u64; 2]; 2],
    /// Zero returns per regime, indexed by `TransitionState::index`.
    pub n0k: [u64; 4],
    pub n_k: [u64; 4],
    pub n_up2: [u64; 4],
    pub n_down2: [u64; 4],
    pub pi1_hat: f64,
    /// `None` when the row has no observations.
    pub p11_hat: Option<f64>,
    pub p21_hat: Option<f64>,
    pub theta1_hat: Option<f64>,
    pub theta4_hat: Option<f64>,
}

fn binomial_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

impl CountEstimates {
    fn row_total(&self, i: usize) -> u64 {
        self.n_ij[i][0] + self.n_ij[i][1]
    }

    pub fn pi1_se(&self) -> f64 {
        binomial_se(self.pi1_hat, self.n_s)
    }

    pub fn p11_se(&self) -> Option<f64> {
        self.p11_hat.map(|p| binomial_se(p, self.row_total(0)))
    }

    pub fn p21_se(&self) -> Option<f64> {
        self.p21_hat.map(|p| binomial_se(p, self.row_total(1)))
    }

    fn theta_hat(&self, k: TransitionState) -> Option<f64> {
        match k {
            TransitionState::StayOne => self.theta1_hat,
            TransitionState::StayTwo => self.theta4_hat,
            _ => None,
        }
    }

    /// Binomial SE of `theta_k`, half that of the zero-return frequency.
    pub fn theta_se(&self, k: TransitionState) -> Option<f64> {
        let theta = self.theta_hat(k)?;
        Some(0.5 * binomial_se(1.0 - 2.0 * theta, self.n_k[k.index()]))
    }

    pub fn symmetry(&self, k: TransitionState) -> Option<SymmetryCheck> {
        let i = k.index();
        let (up, down) = (self.n_up2[i] as f64, self.n_down2[i] as f64);
        if self.n_k[i] == 0 || !k.spread_constant() {
            return None;
        }
        let z = if up + down > 0.0 { (up - down) / (up + down).sqrt() } else { 0.0 };
        Some(SymmetryCheck { imbalance: (up - down) / self.n_k[i] as f64, z, flagged: z.abs() > SYMMETRY_Z_LIMIT })
    }

    pub fn chain(&self) -> Result<SpreadChainParams> {
        match (self.p11_hat, self.p21_hat) {
            (Some(p11), Some(p21)) => SpreadChainParams::new(p11, p21),
            _ => Err(Error::InsufficientData("a spread state was never left, transition row undefined".into())),
        }
    }

    pub fn ms_params(&self) -> Result<MsParams> {
        let undefined = |k| Error::InsufficientData(format!("regime {k} never observed, theta undefined"));
        MsParams::new(self.chain()?, self.theta1_hat.ok_or_else(|| undefined(1))?, self.theta4_hat.ok_or_else(|| undefined(4))?)
    }
}

pub fn estimate_counts(series: &TickSeries) -> Result<CountEstimates> {
    if series.is_empty() {
        return Err(Error::InsufficientData("empty series".into()));
    }
    let mut est = CountEstimates {
        n1: 0,
        n_s: 0,
        n_ij: [[0; 2]; 2],
        n0k: [0; 4],
        n_k: [0; 4],
        n_up2: [0; 4],
        n_down2: [0; 4],
        pi1_hat: 0.0,
        p11_hat: None,
        p21_hat: None,
        theta1_hat: None,
        theta4_hat: None,
    };
    for seg in &series.segments {
        for s in &seg.spreads {
            est.n_s += 1;
            est.n1 += (s.index() == 0) as u64;
        }
        for (x, r) in seg.transitions().zip(&seg.returns) {
            if !is_allowed(*r, x) {
                return Err(Error::SupportViolation { ret: r.value() as i64, state: x.label() });
            }
            est.n_ij[x.from_spread().index()][x.to_spread().index()] += 1;
            let k = x.index();
            est.n_k[k] += 1;
            match r.value() {
                0 => est.n0k[k] += 1,
                2 => est.n_up2[k] += 1,
                -2 => est.n_down2[k] += 1,
                _ => {}
            }
        }
    }
    est.pi1_hat = est.n1 as f64 / est.n_s as f64;
    let row = |i: usize| {
        let total = est.n_ij[i][0] + est.n_ij[i][1];
        (total > 0).then(|| est.n_ij[i][0] as f64 / total as f64)
    };
    est.p11_hat = row(0);
    est.p21_hat = row(1);
    let theta = |k: usize| (est.n_k[k] > 0).then(|| 0.5 * (1.0 - est.n0k[k] as f64 / est.n_k[k] as f64));
    est.theta1_hat = theta(0);
    est.theta4_hat = theta(3);
    Ok(est)
}

/// Regime-1 observations with their squared-return windows, stored sparsely
/// since most past squared returns are zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LogitDesign {
    pub p: usize,
    pub response: Vec<f64>,
    offsets: Vec<usize>,
    /// `(lag - 1, r^2)` for the nonzero window entries of each row.
    entries: Vec<(u16, u8)>,
}

impl LogitDesign {
    pub fn new(p: usize) -> Self {
        LogitDesign { p, response: Vec::new(), offsets: vec![0], entries: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.response.is_empty()
    }

    /// Adds a row. `window` is oldest first.
    pub fn push(&mut self, b: BinaryMove, window: &[u8]) {
        debug_assert_eq!(window.len(), self.p);
        for (l, &v) in window.iter().rev().enumerate() {
            if v != 0 {
                self.entries.push((l as u16, v));
            }
        }
        self.offsets.push(self.entries.len());
        self.response.push(b.as_f64());
    }

    fn row(&self, i: usize) -> &[(u16, u8)] {
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }

    fn linear_predictor(&self, i: usize, coef: &[f64]) -> f64 {
        coef[0] + self.row(i).iter().map(|&(l, v)| coef[l as usize + 1] * v as f64).sum::<f64>()
    }

    /// Every regime-1 step of the series with a full window inside its segment.
    pub fn from_series(series: &TickSeries, p: usize) -> Result<Self> {
        let mut design = LogitDesign::new(p);
        for seg in &series.segments {
            let sq: Vec<u8> = seg.returns.iter().map(|r| r.squared()).collect();
            for (t, x) in seg.transitions().enumerate() {
                if t < p || x != TransitionState::StayOne {
                    continue;
                }
                let b = binarize_return(seg.returns[t], x)?;
                design.push(b, &sq[t - p..t]);
            }
        }
        Ok(design)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitFit {
    pub alpha1: f64,
    /// `beta1[l - 1]` multiplies `r^2(t - l)`.
    pub beta1: Vec<f64>,
    /// Intercept first, then one per lag.
    pub std_errors: Vec<f64>,
    pub z_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub n_obs: usize,
    /// Whether the information matrix needed the `1e-8` ridge.
    pub ridge_used: bool,
    pub diagnostic: Option<String>,
}

impl LogitFit {
    pub fn estimates(&self) -> Vec<f64> {
        std::iter::once(self.alpha1).chain(self.beta1.iter().copied()).collect()
    }
}

const MAX_ITERATIONS: usize = 100;
const SCORE_TOL: f64 = 1e-8;
const LL_REL_TOL: f64 = 1e-12;
const RIDGE: f64 = 1e-8;
const PIN_EPS: f64 = 1e-10;

struct Evaluation {
    ll: f64,
    score: DVector<f64>,
    info: DMatrix<f64>,
    pinned: usize,
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn log_likelihood(design: &LogitDesign, coef: &[f64]) -> f64 {
    (0..design.len())
        .map(|i| {
            let z = design.linear_predictor(i, coef);
            design.response[i] * z - log1p_exp(z)
        })
        .sum()
}

fn evaluate(design: &LogitDesign, coef: &[f64]) -> Evaluation {
    let k = design.p + 1;
    let mut score = DVector::zeros(k);
    let mut info = DMatrix::zeros(k, k);
    let (mut ll, mut pinned) = (0.0, 0);
    for i in 0..design.len() {
        let z = design.linear_predictor(i, coef);
        let mu = logistic(z);
        let y = design.response[i];
        ll += y * z - log1p_exp(z);
        if !(PIN_EPS..=1.0 - PIN_EPS).contains(&mu) {
            pinned += 1;
        }
        let resid = y - mu;
        let w = mu * (1.0 - mu);
        let row = design.row(i);
        score[0] += resid;
        info[(0, 0)] += w;
        for (a, &(la, va)) in row.iter().enumerate() {
            let (ia, xa) = (la as usize + 1, va as f64);
            score[ia] += resid * xa;
            info[(ia, 0)] += w * xa;
            for &(lb, vb) in &row[..=a] {
                info[(ia, lb as usize + 1)] += w * xa * vb as f64;
            }
        }
    }
    // row entries are sorted by lag, so only the lower triangle was filled
    info.fill_upper_triangle_with_lower_triangle();
    Evaluation { ll, score, info, pinned }
}

/// Cholesky of the information matrix, regularized once if needed.
fn factor(info: &DMatrix<f64>) -> Option<(nalgebra::Cholesky<f64, nalgebra::Dyn>, bool)> {
    if let Some(c) = info.clone().cholesky() {
        let d = info.diagonal();
        let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        if lo > 0.0 && hi / lo < 1e14 {
            return Some((c, false));
        }
    }
    let k = info.nrows();
    (info + DMatrix::identity(k, k) * RIDGE).cholesky().map(|c| (c, true))
}

/// Maximizes the Bernoulli log-likelihood of the move indicator with a
/// logistic mean by Newton steps, halving any step that lowers it.
pub fn fit_logit_design(design: &LogitDesign) -> Result<LogitFit> {
    let k = design.p + 1;
    if design.len() <= 10 * k {
        return Err(Error::InsufficientData(format!(
            "{} observations for {} coefficients; need more than {}",
            design.len(),
            k,
            10 * k
        )));
    }
    let mut coef = vec![0.0; k];
    let mut eval = evaluate(design, &coef);
    let (mut converged, mut iterations, mut ridge_used) = (false, 0, false);
    let mut diagnostic = None;
    while iterations < MAX_ITERATIONS {
        if eval.score.amax() < SCORE_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let Some((chol, ridged)) = factor(&eval.info) else {
            diagnostic = Some("information matrix is not positive definite".into());
            break;
        };
        ridge_used |= ridged;
        let step = chol.solve(&eval.score);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = coef.iter().zip(step.iter()).map(|(c, s)| c + scale * s).collect();
            let ll = log_likelihood(design, &trial);
            if ll >= eval.ll {
                accepted = Some((trial, ll));
                break;
            }
            scale *= 0.5;
        }
        let Some((trial, ll)) = accepted else {
            diagnostic = Some("no ascent direction found".into());
            break;
        };
        let prev_ll = eval.ll;
        coef = trial;
        eval = evaluate(design, &coef);
        debug_assert!((eval.ll - ll).abs() <= 1e-9 * ll.abs().max(1.0));
        if (eval.ll - prev_ll).abs() <= LL_REL_TOL * prev_ll.abs() {
            converged = true;
            break;
        }
    }
    if eval.pinned > 0 {
        converged = false;
        diagnostic = Some(format!(
            "possible separation: {} fitted probabilities pinned at 0 or 1",
            eval.pinned
        ));
    } else if !converged && diagnostic.is_none() {
        diagnostic = Some(format!("no convergence after {MAX_ITERATIONS} iterations"));
    }
    let (std_errors, ridged) = match factor(&eval.info) {
        Some((chol, ridged)) => {
            let inv = chol.inverse();
            ((0..k).map(|i| inv[(i, i)].max(0.0).sqrt()).collect::<Vec<_>>(), ridged)
        }
        None => (vec![f64::NAN; k], false),
    };
    ridge_used |= ridged;
    let z_values: Vec<f64> = coef.iter().zip(&std_errors).map(|(c, s)| c / s).collect();
    let p_values = z_values.iter().map(|z| two_sided_p(*z)).collect();
    Ok(LogitFit {
        alpha1: coef[0],
        beta1: coef[1..].to_vec(),
        std_errors,
        z_values,
        p_values,
        converged,
        iterations,
        log_likelihood: eval.ll,
        n_obs: design.len(),
        ridge_used,
        diagnostic,
    })
}

/// Fits from aligned move indicators and windows (oldest first).
pub fn fit_logit_irls(binary: &[BinaryMove], windows: &[SquaredReturnWindow], p: usize) -> Result<LogitFit> {
    if binary.len() != windows.len() {
        return Err(Error::InvalidParameter(format!(
            "{} responses but {} windows",
            binary.len(),
            windows.len()
        )));
    }
    let mut design = LogitDesign::new(p);
    for (b, w) in binary.iter().zip(windows) {
        if w.len() != p {
            return Err(Error::InvalidParameter(format!("window of length {} for order {p}", w.len())));
        }
        design.push(*b, w.values());
    }
    fit_logit_design(&design)
}

pub fn two_sided_p(z: f64) -> f64 {
    if !z.is_finite() {
        return f64::NAN;
    }
    let n = Normal::standard();
    2.0 * n.cdf(-z.abs())
}

/// `***` below 0.001, `**` below 0.01, `*` below 0.05, `.` below 0.1.
pub fn significance_stars(p_value: f64) -> &'static str {
    match p_value {
        p if p < 0.001 => "***",
        p if p < 0.01 => "**",
        p if p < 0.05 => "*",
        p if p < 0.1 => ".",
        _ => "",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub exponent_se: f64,
    pub prefactor: f64,
    pub range: (f64, f64),
    pub n_points: usize,
    /// Points in the window dropped for being non-positive.
    pub excluded: usize,
}

impl PowerLawFit {
    pub fn predict(&self, index: f64) -> f64 {
        self.prefactor * index.powf(-self.exponent)
    }
}

/// OLS of `log value` on `log index` over `lo <= index <= hi`.
pub fn fit_power_law(values: &[f64], indices: &[f64], window: (f64, f64)) -> Result<PowerLawFit> {
    let (lo, hi) = window;
    if values.len() != indices.len() {
        return Err(Error::InvalidParameter("values and indices differ in length".into()));
    }
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) || lo <= 0.0 {
        return Err(Error::InvalidParameter(format!("invalid window [{lo}, {hi}]")));
    }
    let mut excluded = 0;
    let mut pts = Vec::new();
    for (&v, &i) in values.iter().zip(indices) {
        if i < lo || i > hi {
            continue;
        }
        if v > 0.0 && v.is_finite() {
            pts.push((i.ln(), v.ln()));
        } else {
            excluded += 1;
        }
    }
    let n = pts.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("{n} usable points in the fit window")));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::InsufficientData("all indices coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Ok(PowerLawFit {
        exponent: -slope,
        exponent_se: (rss / (nf - 2.0) / sxx).sqrt(),
        prefactor: intercept.exp(),
        range: window,
        n_points: n,
        excluded,
    })
}
