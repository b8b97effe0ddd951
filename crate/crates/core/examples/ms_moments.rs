//! Unconditional moments and autocorrelations of the Markov-switching model.

use tickms::ms::{acf_returns, acf_squared, conditional_return_pmf, unconditional_moments};
use tickms::presets;
use tickms::states::{Return, TransitionState};

fn main() {
    for (name, params) in [("high", presets::high_activity_ms()), ("low", presets::low_activity_ms())] {
        let m = unconditional_moments(&params);
        println!("{name} activity (theta1 = {}, theta4 = {})", params.theta1, params.theta4);
        for k in TransitionState::ALL {
            let pmf = conditional_return_pmf(k, &params);
            let probs: Vec<String> = Return::ALL.iter().map(|r| format!("{:.4}", pmf.prob(*r))).collect();
            println!("  P(r | {}) = [{}]", k.label(), probs.join(", "));
        }
        println!("  E[r^2] = {:.6}  sigma = {:.6}  excess kurtosis = {:.3}", m.e_r2, m.sigma(), m.excess_kurtosis());
        for tau in [1, 2, 5, 10, 50] {
            println!("  tau = {tau:>2}: rho_r = {:+.3e}  rho_r2 = {:+.3e}", acf_returns(&params, tau), acf_squared(&params, tau));
        }
    }
}
