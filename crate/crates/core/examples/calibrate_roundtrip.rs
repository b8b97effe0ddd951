//! Simulate with known parameters, then recover them: counting estimators for
//! the spread chain and the MS return probabilities, IRLS for the logit lags.

use tickms::calibrate::{estimate_counts, fit_logit_design, significance_stars, LogitDesign};
use tickms::dcmm::DcmmParams;
use tickms::ingest::TickSeries;
use tickms::presets;
use tickms::simulate::{simulate_path, ModelParams, SimConfig};

fn main() -> tickms::Result<()> {
    let ms = presets::high_activity_ms();
    let path = simulate_path(&SimConfig::new(ModelParams::Ms(ms), 500_000, 3))?;
    let counts = estimate_counts(&TickSeries::from_path(&path))?;
    println!("MS: true p11 = {}, estimate {:.4} (se {:.4})", ms.chain.p11(), counts.p11_hat.unwrap(), counts.p11_se().unwrap());
    println!("    true theta1 = {}, estimate {:.4}", ms.theta1, counts.theta1_hat.unwrap());

    let truth = DcmmParams::new(presets::high_activity_chain(), -2.9, vec![-0.15, 0.20, 0.12], 0.0015)?;
    let path = simulate_path(&SimConfig::new(ModelParams::Dcmm(truth.clone()), 500_000, 4))?;
    let design = LogitDesign::from_series(&TickSeries::from_path(&path), truth.order())?;
    let fit = fit_logit_design(&design)?;
    println!("DCMM(3) logit on {} regime-1 steps, converged = {}", fit.n_obs, fit.converged);
    let truth_coefs = std::iter::once(truth.alpha1).chain(truth.beta1.iter().copied());
    for (i, (t, est)) in truth_coefs.zip(fit.estimates()).enumerate() {
        println!(
            "  coef {i}: true {t:+.3}  estimate {est:+.4} (se {:.4}) {}",
            fit.std_errors[i],
            significance_stars(fit.p_values[i])
        );
    }
    Ok(())
}
