//! Memoryless Markov-switching return model (MS, and MS_B for a Bernoulli
//! spread): returns depend only on the current spread transition.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::markov::{build_transition_chain, SpreadChainParams};
use crate::states::{Return, TransitionState};

/// Probabilities over `Return::ALL` (`-2, -1, 0, 1, 2`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReturnPmf(pub [f64; 5]);

impl ReturnPmf {
    pub fn prob(&self, r: Return) -> f64 {
        self.0[r.index()]
    }

    pub(crate) fn even(move_prob: f64) -> Self {
        ReturnPmf([move_prob / 2.0, 0.0, 1.0 - move_prob, 0.0, move_prob / 2.0])
    }

    pub(crate) fn odd() -> Self {
        ReturnPmf([0.0, 0.5, 0.0, 0.5, 0.0])
    }

    pub fn moment(&self, k: i32) -> f64 {
        Return::ALL
            .iter()
            .map(|r| self.prob(*r) * (r.value() as f64).powi(k))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MsParams {
    pub chain: SpreadChainParams,
    pub theta1: f64,
    pub theta4: f64,
}

impl MsParams {
    pub fn new(chain: SpreadChainParams, theta1: f64, theta4: f64) -> Result<Self> {
        for (name, v) in [("theta1", theta1), ("theta4", theta4)] {
            if !(0.0..0.5).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must lie in [0, 1/2)")));
            }
        }
        Ok(MsParams { chain, theta1, theta4 })
    }

    pub fn is_bernoulli(&self) -> bool {
        self.chain.bernoulli_p().is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub m1: [f64; 4],
    pub m2: [f64; 4],
    pub m4: [f64; 4],
    pub e_r2: f64,
    pub e_r4: f64,
    pub var_r: f64,
    pub var_r2: f64,
}

impl MomentSet {
    pub fn sigma(&self) -> f64 {
        self.var_r.sqrt()
    }

    pub fn excess_kurtosis(&self) -> f64 {
        self.e_r4 / (self.e_r2 * self.e_r2) - 3.0
    }
}

pub fn conditional_return_pmf(x: TransitionState, params: &MsParams) -> ReturnPmf {
    match x {
        TransitionState::StayOne => ReturnPmf::even(2.0 * params.theta1),
        TransitionState::Widen | TransitionState::Narrow => ReturnPmf::odd(),
        TransitionState::StayTwo => ReturnPmf::even(2.0 * params.theta4),
    }
}

fn conditional_moments(params: &MsParams, k: i32) -> [f64; 4] {
    TransitionState::ALL.map(|x| conditional_return_pmf(x, params).moment(k))
}

pub fn unconditional_moments(params: &MsParams) -> MomentSet {
    let lambda = params.chain.transition_stationary();
    let m1 = conditional_moments(params, 1);
    let m2 = conditional_moments(params, 2);
    let m4 = conditional_moments(params, 4);
    let dot = |m: &[f64; 4]| m.iter().zip(&lambda).map(|(a, b)| a * b).sum::<f64>();
    let (e_r, e_r2, e_r4) = (dot(&m1), dot(&m2), dot(&m4));
    MomentSet {
        m1,
        m2,
        m4,
        e_r2,
        e_r4,
        var_r: e_r2 - e_r * e_r,
        var_r2: e_r4 - e_r2 * e_r2,
    }
}

/// Lag-`tau` autocorrelation of a function of the regime,
/// `(lambda' diag(f) M^tau f - (f'lambda)^2) / (g'lambda - (f'lambda)^2)`,
/// where `f` is the conditional mean and `g` the conditional second moment
/// of the observable.
///
/// The numerator is evaluated as `lambda' diag(f) (M - 1 lambda')^tau f`,
/// which equals the expression above for `tau >= 1` and keeps full relative
/// precision as the correlation decays.
pub fn regime_autocorrelation(chain: &SpreadChainParams, f: &[f64; 4], g: &[f64; 4], tau: u32) -> f64 {
    let (m, lambda) = build_transition_chain(chain);
    let lambda = DVector::from_column_slice(lambda.as_slice());
    let fv = DVector::from_column_slice(f);
    let gv = DVector::from_column_slice(g);
    let mean = fv.dot(&lambda);
    let var = gv.dot(&lambda) - mean * mean;
    if tau == 0 {
        return 1.0;
    }
    let centered = m.as_matrix() - DVector::from_element(4, 1.0) * lambda.transpose();
    let lagged = fv.component_mul(&lambda).dot(&(centered_power(&centered, tau) * &fv));
    lagged / var
}

pub(crate) fn centered_power(d: &DMatrix<f64>, tau: u32) -> DMatrix<f64> {
    let n = d.nrows();
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut base = d.clone();
    let mut e = tau;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Linear autocorrelation `zeta(tau)` of returns. Zero for this symmetric model.
pub fn acf_returns(params: &MsParams, tau: u32) -> f64 {
    let ms = unconditional_moments(params);
    regime_autocorrelation(&params.chain, &ms.m1, &ms.m2, tau)
}

/// Autocorrelation `rho(tau)` of squared returns.
pub fn acf_squared(params: &MsParams, tau: u32) -> f64 {
    let ms = unconditional_moments(params);
    regime_autocorrelation(&params.chain, &ms.m2, &ms.m4, tau)
}
