//! Double chain Markov model DCMM(p).
//!
//! When the spread stays at one tick, the probability of a price move is a
//! logit regression on the past `p` squared returns. Spread changes give
//! symmetric one-half-tick moves, and a spread that stays at two ticks uses
//! the window-independent probability `2 theta4`.
//!
//! The squared return `r^2` takes values in `{0, 1, 4}`. A window of the
//! last `p` squared returns is encoded as a base-3 number whose most
//! significant digit is the oldest observation (digit 0 is `r^2 = 0`, 1 is
//! `r^2 = 1`, 2 is `r^2 = 4`). The 1-based tuple index
//! `i = 3 - digit` is available through [`index_map`] and [`index_tuple`].
//!
//! Two Markov embeddings of the squared-return process are provided:
//!
//! * [`SquaredReturnChain`] mixes the regime matrices with the stationary
//!   transition law, `S = sum_k lambda_k U_k`. This treats consecutive
//!   regimes as independent and is the chain whose spectrum is
//!   `(1, 0, e3)` for `p = 1`.
//! * [`JointChain`] carries the current spread alongside the window, which
//!   makes it the exact law of the simulated process. Autocorrelations use
//!   this chain unless [`RegimeCoupling::MeanField`] is requested.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::markov::{ProbabilityVector, SparseStochastic, SpreadChainParams, StochasticMatrix, DENSE_SOLVE_LIMIT};
use crate::ms::{centered_power, ReturnPmf};
use crate::states::{SpreadState, TransitionState};

/// Largest order for which the `3^p` analytic chain is built.
pub const MAX_ANALYTIC_ORDER: usize = 12;

/// Squared-return value for each base-3 digit.
pub const DIGIT_SQUARE: [u8; 3] = [0, 1, 4];

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn square_digit(sq: u8) -> Result<usize> {
    match sq {
        0 => Ok(0),
        1 => Ok(1),
        4 => Ok(2),
        other => Err(Error::InvalidParameter(format!("{other} is not a squared return in {{0, 1, 4}}"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcmmParams {
    pub chain: SpreadChainParams,
    pub alpha1: f64,
    /// `beta1[l - 1]` multiplies `r^2(t - l)`.
    pub beta1: Vec<f64>,
    pub theta4: f64,
    /// Coefficients on past signed returns. Always empty.
    pub gamma: Vec<f64>,
}

impl DcmmParams {
    pub fn new(chain: SpreadChainParams, alpha1: f64, beta1: Vec<f64>, theta4: f64) -> Result<Self> {
        if beta1.is_empty() {
            return Err(Error::InvalidParameter("DCMM order p must be at least 1".into()));
        }
        if !alpha1.is_finite() || beta1.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("non-finite logit coefficient".into()));
        }
        if !(0.0..0.5).contains(&theta4) {
            return Err(Error::InvalidParameter(format!("theta4 = {theta4} must lie in [0, 1/2)")));
        }
        Ok(DcmmParams { chain, alpha1, beta1, theta4, gamma: Vec::new() })
    }

    pub fn order(&self) -> usize {
        self.beta1.len()
    }

    /// Linear predictor for a window given as squared returns, oldest first.
    pub fn linear_predictor(&self, window: &[u8]) -> f64 {
        let p = self.order();
        self.alpha1
            + self
                .beta1
                .iter()
                .enumerate()
                .map(|(l, b)| b * window[p - 1 - l] as f64)
                .sum::<f64>()
    }
}

/// The last `p` squared returns, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SquaredReturnWindow(Vec<u8>);

impl SquaredReturnWindow {
    pub fn new(values: Vec<u8>) -> Result<Self> {
        for &v in &values {
            square_digit(v)?;
        }
        Ok(SquaredReturnWindow(values))
    }

    pub fn zeros(p: usize) -> Self {
        SquaredReturnWindow(vec![0; p])
    }

    pub fn values(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Zero-based state code of the window in the `3^p` embedding.
    pub fn code(&self) -> usize {
        self.0.iter().fold(0, |acc, &v| acc * 3 + square_digit(v).unwrap())
    }

    pub fn from_code(code: usize, p: usize) -> Self {
        let mut vals = vec![0u8; p];
        let mut c = code;
        for slot in vals.iter_mut().rev() {
            *slot = DIGIT_SQUARE[c % 3];
            c /= 3;
        }
        SquaredReturnWindow(vals)
    }
}

fn check_window(window: &SquaredReturnWindow, params: &DcmmParams) -> Result<()> {
    if window.len() != params.order() {
        return Err(Error::InvalidParameter(format!(
            "window has {} entries, model order is {}",
            window.len(),
            params.order()
        )));
    }
    Ok(())
}

/// Probability of a price move in a spread-constant regime.
pub fn eta(k: TransitionState, window: &SquaredReturnWindow, params: &DcmmParams) -> Result<f64> {
    check_window(window, params)?;
    match k {
        TransitionState::StayOne => Ok(logistic(params.linear_predictor(window.values()))),
        TransitionState::StayTwo => Ok(2.0 * params.theta4),
        other => Err(Error::InvalidParameter(format!(
            "eta is defined for regimes 1 and 4, not {other}"
        ))),
    }
}

pub fn regime_return_pmf(k: TransitionState, window: &SquaredReturnWindow, params: &DcmmParams) -> Result<ReturnPmf> {
    check_window(window, params)?;
    Ok(match k {
        TransitionState::Widen | TransitionState::Narrow => ReturnPmf::odd(),
        spread_constant => ReturnPmf::even(eta(spread_constant, window, params)?),
    })
}

/// 1-based state number of an index tuple `(i_1, .., i_p)`, `i_l` in `1..=3`.
pub fn index_map(indices: &[u8]) -> Result<usize> {
    let p = indices.len();
    if p == 0 || indices.iter().any(|i| !(1..=3).contains(i)) {
        return Err(Error::InvalidParameter(format!("invalid index tuple {indices:?}")));
    }
    let head: usize = indices[..p - 1]
        .iter()
        .enumerate()
        .map(|(l, &i)| 3usize.pow((p - 1 - l) as u32) * (3 - i as usize))
        .sum();
    Ok(head + 4 - indices[p - 1] as usize)
}

/// Inverse of [`index_map`].
pub fn index_tuple(m: usize, p: usize) -> Result<Vec<u8>> {
    if m == 0 || m > 3usize.pow(p as u32) {
        return Err(Error::InvalidParameter(format!("state {m} out of range for p = {p}")));
    }
    let mut out = vec![0u8; p];
    let mut c = m - 1;
    for slot in out.iter_mut().rev() {
        *slot = 3 - (c % 3) as u8;
        c /= 3;
    }
    Ok(out)
}

fn check_order(p: usize) -> Result<usize> {
    if p > MAX_ANALYTIC_ORDER {
        return Err(Error::ChainTooLarge { p, cap: MAX_ANALYTIC_ORDER });
    }
    Ok(3usize.pow(p as u32))
}

/// Move probability in regime 1 for every window code.
fn regime_one_etas(params: &DcmmParams) -> Vec<f64> {
    let p = params.order();
    let n = 3usize.pow(p as u32);
    (0..n)
        .map(|code| {
            let mut z = params.alpha1;
            let mut c = code;
            for b in &params.beta1 {
                z += b * DIGIT_SQUARE[c % 3] as f64;
                c /= 3;
            }
            logistic(z)
        })
        .collect()
}

/// Next-digit distribution `(P(r^2=0), P(r^2=1), P(r^2=4))` for each regime and window.
struct RegimeLaws {
    etas: Vec<f64>,
    theta4: f64,
}

impl RegimeLaws {
    fn new(params: &DcmmParams) -> Self {
        RegimeLaws { etas: regime_one_etas(params), theta4: params.theta4 }
    }

    fn digit_probs(&self, k: TransitionState, code: usize) -> [f64; 3] {
        match k {
            TransitionState::StayOne => [1.0 - self.etas[code], 0.0, self.etas[code]],
            TransitionState::Widen | TransitionState::Narrow => [0.0, 1.0, 0.0],
            TransitionState::StayTwo => [1.0 - 2.0 * self.theta4, 0.0, 2.0 * self.theta4],
        }
    }
}

fn shift(code: usize, digit: usize, n: usize) -> usize {
    (code % (n / 3)) * 3 + digit
}

/// Regime matrices `U_1..U_4` on the `3^p` window states.
pub fn build_regime_matrices(params: &DcmmParams) -> Result<[SparseStochastic; 4]> {
    let n = check_order(params.order())?;
    let laws = RegimeLaws::new(params);
    let build = |k: TransitionState| {
        SparseStochastic::from_rows(
            n,
            (0..n).map(|code| {
                let probs = laws.digit_probs(k, code);
                (0..3).map(|d| (shift(code, d, n), probs[d])).collect()
            }),
        )
    };
    Ok([
        build(TransitionState::StayOne)?,
        build(TransitionState::Widen)?,
        build(TransitionState::Narrow)?,
        build(TransitionState::StayTwo)?,
    ])
}

/// How the spread regime is coupled to the window chain when computing
/// analytic autocorrelations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegimeCoupling {
    /// Spread state carried in the chain; exact for the simulated process.
    #[default]
    Exact,
    /// `S = sum_k lambda_k U_k`, regimes drawn independently each step.
    MeanField,
}

/// A Markov embedding whose state determines the current squared return.
pub trait SquaredReturnEmbedding {
    fn order(&self) -> usize;
    fn transition(&self) -> &SparseStochastic;
    fn stationary(&self) -> &ProbabilityVector;

    /// Current squared return of a state.
    fn square_of(&self, state: usize) -> f64 {
        // window codes sit in the low base-3 digits of every state index
        DIGIT_SQUARE[state % 3] as f64
    }

    /// `(P(r^2 = 4), P(r^2 = 1), P(r^2 = 0))`, obtained by summing the
    /// stationary law over all past trajectories.
    fn marginal(&self) -> [f64; 3] {
        let mut psi = [0.0; 3];
        for (state, p) in self.stationary().as_slice().iter().enumerate() {
            psi[2 - state % 3] += p;
        }
        psi
    }
}

/// Mean-field chain `S = sum_k lambda_k U_k` with its stationary laws.
#[derive(Debug, Clone)]
pub struct SquaredReturnChain {
    p: usize,
    s: SparseStochastic,
    big_psi: ProbabilityVector,
    psi: [f64; 3],
}

impl SquaredReturnChain {
    pub fn matrix(&self) -> &SparseStochastic {
        &self.s
    }

    /// Stationary law of the window states, indexed by zero-based code.
    pub fn window_law(&self) -> &ProbabilityVector {
        &self.big_psi
    }

    /// `(P(r^2 = 4), P(r^2 = 1), P(r^2 = 0))`.
    pub fn psi(&self) -> [f64; 3] {
        self.psi
    }
}

impl SquaredReturnEmbedding for SquaredReturnChain {
    fn order(&self) -> usize {
        self.p
    }
    fn transition(&self) -> &SparseStochastic {
        &self.s
    }
    fn stationary(&self) -> &ProbabilityVector {
        &self.big_psi
    }
}

pub fn build_squared_chain(params: &DcmmParams) -> Result<SquaredReturnChain> {
    let u = build_regime_matrices(params)?;
    let lambda = params.chain.transition_stationary();
    let parts: Vec<(f64, &SparseStochastic)> = lambda.iter().copied().zip(u.iter()).collect();
    let s = SparseStochastic::mixture(&parts)?;
    let big_psi = s.stationary_distribution()?;
    let mut chain = SquaredReturnChain { p: params.order(), s, big_psi, psi: [0.0; 3] };
    chain.psi = chain.marginal();
    Ok(chain)
}

/// Exact chain on `(s(t+1), window)` pairs. State index is
/// `spread_index * 3^p + window_code`.
#[derive(Debug, Clone)]
pub struct JointChain {
    p: usize,
    t: SparseStochastic,
    stationary: ProbabilityVector,
}

impl JointChain {
    pub fn build(params: &DcmmParams) -> Result<Self> {
        let n = check_order(params.order())?;
        let laws = RegimeLaws::new(params);
        let spreads = [SpreadState::One, SpreadState::Two];
        let rows = spreads.iter().flat_map(|&s| {
            let laws = &laws;
            (0..n).map(move |code| {
                let mut row = Vec::with_capacity(6);
                for (s2_idx, &s2) in spreads.iter().enumerate() {
                    let up = params.chain.prob_to_one(s);
                    let ps = if s2 == SpreadState::One { up } else { 1.0 - up };
                    let x = crate::states::encode_transition(s, s2);
                    let probs = laws.digit_probs(x, code);
                    for (d, pd) in probs.iter().enumerate() {
                        row.push((s2_idx * n + shift(code, d, n), ps * pd));
                    }
                }
                row
            })
        });
        let t = SparseStochastic::from_rows(2 * n, rows)?;
        let stationary = t.stationary_distribution()?;
        Ok(JointChain { p: params.order(), t, stationary })
    }

    /// Stationary law of the window alone.
    pub fn window_law(&self) -> Vec<f64> {
        let n = 3usize.pow(self.p as u32);
        let v = self.stationary.as_slice();
        (0..n).map(|c| v[c] + v[n + c]).collect()
    }
}

impl SquaredReturnEmbedding for JointChain {
    fn order(&self) -> usize {
        self.p
    }
    fn transition(&self) -> &SparseStochastic {
        &self.t
    }
    fn stationary(&self) -> &ProbabilityVector {
        &self.stationary
    }
}

/// Closed-form third eigenvalue of the mean-field chain for `p = 1`.
pub fn e3_closed_form(params: &DcmmParams) -> Result<f64> {
    if params.order() != 1 {
        return Err(Error::InvalidParameter(format!(
            "closed-form e3 needs p = 1, got p = {}",
            params.order()
        )));
    }
    let w0 = SquaredReturnWindow::zeros(1);
    let w4 = SquaredReturnWindow(vec![4]);
    let eta1 = |w| eta(TransitionState::StayOne, w, params);
    let eta4 = |w| eta(TransitionState::StayTwo, w, params);
    let (p11, p21) = (params.chain.p11(), params.chain.p21());
    let num = (eta4(&w0)? - eta4(&w4)?) * (1.0 - p11 - p21 + p11 * p21) + (eta1(&w0)? - eta1(&w4)?) * p11 * p21;
    Ok(-num / (p21 - p11 + 1.0))
}

/// Return-level chain `N = sum_k lambda_k A_k` for `p = 1`, on returns
/// ordered `(2, 1, 0, -1, -2)`.
pub fn return_level_matrix(params: &DcmmParams) -> Result<StochasticMatrix> {
    if params.order() != 1 {
        return Err(Error::InvalidParameter("return-level matrix is built for p = 1 only".into()));
    }
    let lambda = params.chain.transition_stationary();
    let mut n = DMatrix::<f64>::zeros(5, 5);
    for i in 0..5 {
        let prev = 2 - i as i64;
        let window = SquaredReturnWindow(vec![(prev * prev) as u8]);
        for (k, x) in TransitionState::ALL.iter().enumerate() {
            let pmf = regime_return_pmf(*x, &window, params)?;
            for j in 0..5 {
                // pmf is indexed from -2 upwards, columns from +2 downwards
                n[(i, j)] += lambda[k] * pmf.0[4 - j];
            }
        }
    }
    StochasticMatrix::from_matrix(n)
}

fn moments<E: SquaredReturnEmbedding + ?Sized>(chain: &E) -> (f64, f64) {
    let psi = chain.marginal();
    (4.0 * psi[0] + psi[1], 16.0 * psi[0] + psi[1])
}

/// `rho(1..=max_lag)` through the transfer-matrix form
/// `(xi' S^tau delta - (delta' psi)^2) / (delta_2' psi - (delta' psi)^2)`
/// on a dense copy of the chain.
pub fn acf_squared_transfer<E: SquaredReturnEmbedding + ?Sized>(chain: &E, max_lag: u32) -> Result<Vec<f64>> {
    let n = chain.transition().dim();
    if n > DENSE_SOLVE_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "transfer-matrix route is limited to {DENSE_SOLVE_LIMIT} states, chain has {n}"
        )));
    }
    let s = chain.transition().to_dense()?;
    let psi = DVector::from_column_slice(chain.stationary().as_slice());
    let delta = DVector::from_fn(n, |i, _| chain.square_of(i));
    let xi = delta.component_mul(&psi);
    let (e2, e4) = moments(chain);
    let var = e4 - e2 * e2;
    let centered = s.as_matrix() - DVector::from_element(n, 1.0) * psi.transpose();
    Ok((1..=max_lag)
        .map(|tau| xi.dot(&(centered_power(&centered, tau) * &delta)) / var)
        .collect())
}

/// `rho(1..=max_lag)` from the joint laws `P(r^2(t) = a, r^2(t + tau) = b)`,
/// each obtained by summing `(S^tau)_{mn} Psi_m` over all windows ending
/// in `a` and `b`.
pub fn acf_squared_joint<E: SquaredReturnEmbedding + ?Sized>(chain: &E, max_lag: u32) -> Vec<f64> {
    let s = chain.transition();
    let n = s.dim();
    let stationary = chain.stationary().as_slice();
    let (e2, e4) = moments(chain);
    let var = e4 - e2 * e2;

    // one propagated row vector per current value a (digits 1 and 2; r^2 = 0 adds nothing)
    let mut rows: Vec<(f64, Vec<f64>)> = [1usize, 2]
        .iter()
        .map(|&a| {
            let v = (0..n).map(|m| if m % 3 == a { stationary[m] } else { 0.0 }).collect();
            (DIGIT_SQUARE[a] as f64, v)
        })
        .collect();

    let mut out = Vec::with_capacity(max_lag as usize);
    for _ in 0..max_lag {
        let mut cross = 0.0;
        for (sq_a, v) in rows.iter_mut() {
            *v = s.left_mul(v);
            let mut joint = [0.0; 3];
            for (state, p) in v.iter().enumerate() {
                joint[state % 3] += p;
            }
            cross += *sq_a * (joint[1] * 1.0 + joint[2] * 4.0);
        }
        out.push((cross - e2 * e2) / var);
    }
    out
}

/// Analytic `rho(1..=max_lag)` for the chosen coupling. Uses the
/// transfer-matrix form for `p = 1` and joint probabilities otherwise.
pub fn acf_squared_dcmm_lags(params: &DcmmParams, coupling: RegimeCoupling, max_lag: u32) -> Result<Vec<f64>> {
    let chain: Box<dyn SquaredReturnEmbedding> = match coupling {
        RegimeCoupling::Exact => Box::new(JointChain::build(params)?),
        RegimeCoupling::MeanField => Box::new(build_squared_chain(params)?),
    };
    if params.order() == 1 {
        acf_squared_transfer(chain.as_ref(), max_lag)
    } else {
        Ok(acf_squared_joint(chain.as_ref(), max_lag))
    }
}

pub fn acf_squared_dcmm(params: &DcmmParams, tau: u32) -> Result<f64> {
    if tau == 0 {
        return Ok(1.0);
    }
    Ok(acf_squared_dcmm_lags(params, RegimeCoupling::Exact, tau)?[tau as usize - 1])
}

/// Stationary `E[r^2]` of the exact chain.
pub fn mean_squared_return(params: &DcmmParams) -> Result<f64> {
    Ok(moments(&JointChain::build(params)?).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::ProbabilityVector;
    use crate::ms::{acf_squared, MsParams};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn table_params(p: usize) -> DcmmParams {
        let beta = [-0.156, -0.0403, 0.0218, 0.0458, 0.0713, 0.0759];
        DcmmParams::new(
            SpreadChainParams::new(0.953, 0.522).unwrap(),
            -2.921,
            beta[..p].to_vec(),
            0.00151,
        )
        .unwrap()
    }

    #[test]
    fn eta_examples() {
        let p = table_params(1);
        let zero = SquaredReturnWindow::zeros(1);
        assert_abs_diff_eq!(eta(TransitionState::StayOne, &zero, &p).unwrap(), 0.0511, epsilon = 5e-5);
        let four = SquaredReturnWindow::new(vec![4]).unwrap();
        assert_abs_diff_eq!(eta(TransitionState::StayOne, &four, &p).unwrap(), 0.0281, epsilon = 5e-5);
        assert_abs_diff_eq!(eta(TransitionState::StayTwo, &four, &p).unwrap(), 3.02e-3, epsilon = 1e-15);
        assert!(eta(TransitionState::Widen, &zero, &p).is_err());
    }

    #[test]
    fn beta_lag_convention() {
        // beta_1 must hit the most recent element, beta_3 the oldest
        let p = DcmmParams::new(SpreadChainParams::new(0.9, 0.5).unwrap(), 0.0, vec![1.0, 10.0, 100.0], 0.0).unwrap();
        let w = SquaredReturnWindow::new(vec![1, 0, 4]).unwrap();
        let got = eta(TransitionState::StayOne, &w, &p).unwrap();
        assert_abs_diff_eq!(got, logistic(4.0 * 1.0 + 100.0 * 1.0), epsilon = 1e-15);
        let w = SquaredReturnWindow::new(vec![0, 1, 0]).unwrap();
        assert_abs_diff_eq!(eta(TransitionState::StayOne, &w, &p).unwrap(), logistic(10.0), epsilon = 1e-15);
    }

    #[test]
    fn regime_pmf_examples() {
        let p = table_params(1);
        let zero = SquaredReturnWindow::zeros(1);
        let pmf = regime_return_pmf(TransitionState::StayOne, &zero, &p).unwrap();
        assert_abs_diff_eq!(pmf.0[2], 0.9489, epsilon = 5e-5);
        assert_abs_diff_eq!(pmf.0[4], 0.02555, epsilon = 5e-5);
        assert_eq!(pmf.0[0], pmf.0[4]);
        let pmf = regime_return_pmf(TransitionState::Narrow, &zero, &p).unwrap();
        assert_eq!(pmf.0, [0.0, 0.5, 0.0, 0.5, 0.0]);
        let p0 = DcmmParams::new(SpreadChainParams::new(0.9, 0.5).unwrap(), 0.0, vec![0.0], 0.0).unwrap();
        let pmf = regime_return_pmf(TransitionState::StayTwo, &zero, &p0).unwrap();
        assert_eq!(pmf.0[2], 1.0);
    }

    #[test]
    fn index_map_examples() {
        assert_eq!(index_map(&[3, 3]).unwrap(), 1);
        assert_eq!(index_map(&[1, 1]).unwrap(), 9);
        assert_eq!(index_map(&[2]).unwrap(), 2);
        assert!(index_map(&[0, 1]).is_err());
    }

    #[test]
    fn index_map_is_a_bijection() {
        for p in 1..=8usize {
            let n = 3usize.pow(p as u32);
            for m in 1..=n {
                let t = index_tuple(m, p).unwrap();
                assert_eq!(index_map(&t).unwrap(), m);
                // the tuple and window encodings agree
                let w = SquaredReturnWindow::new(t.iter().map(|&i| (3 - i) * (3 - i)).collect()).unwrap();
                assert_eq!(w.code() + 1, m);
                assert_eq!(SquaredReturnWindow::from_code(m - 1, p), w);
            }
        }
    }

    #[test]
    fn regime_matrices_p2_shape() {
        let p = table_params(2);
        let u = build_regime_matrices(&p).unwrap();
        // U_2: single one in the column whose newest element is r^2 = 1
        for m in 0..9 {
            let row: Vec<_> = u[1].row(m).collect();
            assert_eq!(row.len(), 1);
            assert_eq!(row[0].1, 1.0);
            assert_eq!(row[0].0 % 3, 1);
        }
        assert_eq!(u[1], u[2]);
        // first row of U_1 carries eta(0, 0) in columns 1 and 3 (1-based)
        let eta00 = logistic(-2.921);
        assert_abs_diff_eq!(u[0].get(0, 0), 1.0 - eta00, epsilon = 1e-15);
        assert_abs_diff_eq!(u[0].get(0, 2), eta00, epsilon = 1e-15);
        // second row (0, 1) moves to columns 4 and 6
        let eta01 = logistic(-2.921 - 0.156);
        assert_abs_diff_eq!(u[0].get(1, 3), 1.0 - eta01, epsilon = 1e-15);
        assert_abs_diff_eq!(u[0].get(1, 5), eta01, epsilon = 1e-15);
        // U_4 rows carry the constant law
        for m in 0..9 {
            let probs: Vec<f64> = u[3].row(m).map(|e| e.1).collect();
            assert_eq!(probs, vec![1.0 - 2.0 * 0.00151, 2.0 * 0.00151]);
        }
    }

    #[test]
    fn regime_matrix_p1_matches_v1() {
        let p = table_params(1);
        let u = build_regime_matrices(&p).unwrap();
        let eta0 = logistic(-2.921);
        // zero-history state, columns ordered (r^2 = 0, 1, 4)
        let row: Vec<f64> = (0..3).map(|j| u[0].get(0, j)).collect();
        assert_eq!(row, vec![1.0 - eta0, 0.0, eta0]);
    }

    #[test]
    fn shift_compatibility_exhaustive() {
        for p in 1..=4usize {
            let params = DcmmParams::new(SpreadChainParams::new(0.9, 0.4).unwrap(), -1.0, vec![0.3; p], 0.1).unwrap();
            let n = 3usize.pow(p as u32);
            for u in build_regime_matrices(&params).unwrap() {
                for m in 0..n {
                    let suffix = m % (n / 3);
                    let total: f64 = u.row(m).map(|e| e.1).sum();
                    assert!((total - 1.0).abs() < 1e-12);
                    for (col, v) in u.row(m) {
                        assert!(v > 0.0);
                        assert_eq!(col / 3, suffix, "p={p} m={m} col={col}");
                    }
                }
            }
        }
    }

    #[test]
    fn order_cap() {
        let p = DcmmParams::new(SpreadChainParams::new(0.9, 0.4).unwrap(), -1.0, vec![0.0; 13], 0.1).unwrap();
        assert!(matches!(build_squared_chain(&p), Err(Error::ChainTooLarge { p: 13, .. })));
    }

    #[test]
    fn e3_examples() {
        let p = table_params(1);
        assert_abs_diff_eq!(e3_closed_form(&p).unwrap(), -0.0202, epsilon = 5e-5);
        let flat = DcmmParams::new(SpreadChainParams::new(0.9, 0.4).unwrap(), -2.0, vec![0.0], 0.01).unwrap();
        assert_eq!(e3_closed_form(&flat).unwrap(), 0.0);
        assert!(e3_closed_form(&table_params(2)).is_err());
    }

    #[test]
    fn mean_field_spectrum_p1() {
        let p = table_params(1);
        let chain = build_squared_chain(&p).unwrap();
        let sp = chain.matrix().to_dense().unwrap().spectrum().unwrap();
        assert_abs_diff_eq!(sp[0].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sp[1].re, e3_closed_form(&p).unwrap(), epsilon = 1e-10);
        assert!(sp[2].norm() < 1e-10);
    }

    #[test]
    fn flat_logit_reduces_to_ms_law() {
        let chain = SpreadChainParams::new(0.953, 0.522).unwrap();
        let alpha: f64 = -2.5;
        let p = DcmmParams::new(chain, alpha, vec![0.0], 0.00151).unwrap();
        let ms = MsParams::new(chain, logistic(alpha) / 2.0, 0.00151).unwrap();
        let lam = chain.transition_stationary();
        let expect_four = lam[0] * 2.0 * ms.theta1 + lam[3] * 2.0 * ms.theta4;
        let expect_one = lam[1] + lam[2];
        for psi in [build_squared_chain(&p).unwrap().psi(), JointChain::build(&p).unwrap().marginal()] {
            assert_abs_diff_eq!(psi[0], expect_four, epsilon = 1e-12);
            assert_abs_diff_eq!(psi[1], expect_one, epsilon = 1e-12);
            assert_abs_diff_eq!(psi[2], 1.0 - expect_four - expect_one, epsilon = 1e-12);
        }
    }

    #[test]
    fn chain_sizes() {
        let chain = build_squared_chain(&table_params(2)).unwrap();
        assert_eq!(chain.window_law().len(), 9);
        assert_abs_diff_eq!(chain.psi().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let joint = JointChain::build(&table_params(2)).unwrap();
        assert_eq!(joint.stationary().len(), 18);
        ProbabilityVector::new(joint.window_law()).unwrap();
    }

    #[test]
    fn return_level_matrix_is_stochastic() {
        let n = return_level_matrix(&table_params(1)).unwrap();
        assert_eq!(n.dim(), 5);
        assert!(return_level_matrix(&table_params(2)).is_err());
    }

    #[test]
    fn negative_short_lag_correlation() {
        let p = table_params(1);
        assert!(acf_squared_dcmm(&p, 1).unwrap() < 0.0);
        let mf = acf_squared_dcmm_lags(&p, RegimeCoupling::MeanField, 1).unwrap();
        assert!(mf[0] < 0.0);
    }

    #[test]
    fn mean_square_consistency() {
        for p in 1..=3 {
            let params = table_params(p);
            let joint = JointChain::build(&params).unwrap();
            let psi = joint.marginal();
            let direct: f64 = joint
                .stationary()
                .as_slice()
                .iter()
                .enumerate()
                .map(|(i, v)| v * joint.square_of(i))
                .sum();
            assert_abs_diff_eq!(4.0 * psi[0] + psi[1], direct, epsilon = 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn routes_agree_at_p1(p11 in 0.3f64..0.99, p21 in 0.1f64..0.9, alpha in -4.0f64..-0.5,
                              beta in -0.5f64..0.5, theta4 in 0.0f64..0.2) {
            let params = DcmmParams::new(SpreadChainParams::new(p11, p21).unwrap(), alpha, vec![beta], theta4).unwrap();
            for chain in [
                Box::new(JointChain::build(&params).unwrap()) as Box<dyn SquaredReturnEmbedding>,
                Box::new(build_squared_chain(&params).unwrap()),
            ] {
                let a = acf_squared_transfer(chain.as_ref(), 20).unwrap();
                let b = acf_squared_joint(chain.as_ref(), 20);
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() < 1e-12, "{} vs {}", x, y);
                }
            }
        }

        #[test]
        fn flat_dcmm_nests_ms(p11 in 0.3f64..0.99, p21 in 0.1f64..0.9, alpha in -4.0f64..-0.5,
                              theta4 in 0.0f64..0.2, p in 1usize..4) {
            let chain = SpreadChainParams::new(p11, p21).unwrap();
            let params = DcmmParams::new(chain, alpha, vec![0.0; p], theta4).unwrap();
            let ms = MsParams::new(chain, logistic(alpha) / 2.0, theta4).unwrap();
            let rho = acf_squared_dcmm_lags(&params, RegimeCoupling::Exact, 50).unwrap();
            for (tau, r) in rho.iter().enumerate() {
                let expect = acf_squared(&ms, tau as u32 + 1);
                prop_assert!((r - expect).abs() < 1e-10, "tau {}: {} vs {}", tau + 1, r, expect);
            }
        }

        #[test]
        fn e3_matches_spectrum(p11 in 0.3f64..0.99, p21 in 0.1f64..0.9, alpha in -4.0f64..0.0,
                               beta in -1.0f64..1.0, theta4 in 0.0f64..0.2) {
            let params = DcmmParams::new(SpreadChainParams::new(p11, p21).unwrap(), alpha, vec![beta], theta4).unwrap();
            let sp = build_squared_chain(&params).unwrap().matrix().to_dense().unwrap().spectrum().unwrap();
            let e3 = e3_closed_form(&params).unwrap();
            prop_assert!(sp.iter().any(|z| (z.re - e3).abs() < 1e-10 && z.im.abs() < 1e-10));
        }
    }
}
