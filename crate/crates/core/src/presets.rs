//! Parameter sets estimated on a liquid large-tick stock, split by intraday
//! activity, used by the examples and tests.

use crate::dcmm::DcmmParams;
use crate::markov::SpreadChainParams;
use crate::ms::MsParams;

/// Logit intercept of the order-50 fit on the high-activity series.
pub const ALPHA1: f64 = -2.921;

/// Exponent of the power-law decay of the fitted lag coefficients.
pub const BETA_DECAY: f64 = 0.626;

/// First 25 lag coefficients of the order-50 fit.
pub const BETA1_HEAD: [f64; 25] = [
    -1.56e-1, -4.03e-2, 2.18e-2, 4.58e-2, 7.13e-2, 7.59e-2, 5.94e-2, 6.06e-2, 5.94e-2, 5.58e-2, 5.69e-2, 4.14e-2,
    5.79e-2, 5.17e-2, 4.18e-2, 3.76e-2, 4.86e-2, 5.11e-2, 3.52e-2, 2.96e-2, 3.92e-2, 2.51e-2, 2.70e-2, 3.50e-2,
    2.32e-2,
];

pub fn high_activity_chain() -> SpreadChainParams {
    SpreadChainParams::new(0.953, 0.522).expect("valid preset")
}

pub fn low_activity_chain() -> SpreadChainParams {
    SpreadChainParams::new(0.972, 0.550).expect("valid preset")
}

pub fn high_activity_ms() -> MsParams {
    MsParams::new(high_activity_chain(), 4.81e-2, 1.51e-3).expect("valid preset")
}

pub fn low_activity_ms() -> MsParams {
    MsParams::new(low_activity_chain(), 2.85e-2, 2.65e-4).expect("valid preset")
}

/// Prefactor `c` of `c i^(-0.626)`, fitted in log space to the positive
/// tabulated coefficients (lags 3 to 25).
pub fn beta_tail_prefactor() -> f64 {
    let logs: Vec<f64> = (3..=BETA1_HEAD.len())
        .map(|i| BETA1_HEAD[i - 1].ln() + BETA_DECAY * (i as f64).ln())
        .collect();
    (logs.iter().sum::<f64>() / logs.len() as f64).exp()
}

/// `p` lag coefficients: the tabulated head, continued past lag 25 by the
/// fitted power law.
pub fn beta1(p: usize) -> Vec<f64> {
    let c = beta_tail_prefactor();
    (1..=p)
        .map(|i| match BETA1_HEAD.get(i - 1) {
            Some(b) => *b,
            None => c * (i as f64).powf(-BETA_DECAY),
        })
        .collect()
}

/// DCMM(p) on the high-activity spread chain with the preset logit.
pub fn high_activity_dcmm(p: usize) -> DcmmParams {
    DcmmParams::new(high_activity_chain(), ALPHA1, beta1(p), high_activity_ms().theta4).expect("valid preset")
}
