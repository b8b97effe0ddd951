//! Aggregated returns across time scales: volatility per step, excess
//! kurtosis and its power-law decay, for the MS and DCMM(50) models.

use tickms::calibrate::fit_power_law;
use tickms::presets;
use tickms::simulate::{run_ensemble, ModelParams, SimConfig};
use tickms::stats::{scaling_profile, Aggregation};

fn main() -> tickms::Result<()> {
    let dts: Vec<usize> = (0..=9).map(|k| 1usize << k).collect();
    let models = [
        ("MS", ModelParams::Ms(presets::high_activity_ms())),
        ("DCMM(50)", ModelParams::Dcmm(presets::high_activity_dcmm(50))),
    ];
    for (name, params) in models {
        let config = SimConfig::new(params, 400_000, 11).with_runs(4);
        let summary = run_ensemble(&config, |path| {
            Ok(scaling_profile(&path.return_values(), &dts, Aggregation::Overlapping)?
                .into_iter()
                .flat_map(|(s, k)| [s, k])
                .collect())
        })?;
        println!("{name}");
        for (j, dt) in dts.iter().enumerate() {
            println!("  dt = {dt:>3}: sigma_N = {:.4}  kappa = {:+.4}", summary.mean[2 * j], summary.mean[2 * j + 1]);
        }
        let kappa: Vec<f64> = (0..dts.len()).map(|j| summary.mean[2 * j + 1]).collect();
        let x: Vec<f64> = dts.iter().map(|d| *d as f64).collect();
        let fit = fit_power_law(&kappa, &x, (8.0, 512.0))?;
        println!("  kappa ~ dt^-{:.3} (se {:.3})", fit.exponent, fit.exponent_se);
    }
    Ok(())
}
