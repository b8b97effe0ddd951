//! Analytic squared-return autocorrelations against a simulated path, with
//! batch-means standard errors.

use tickms::cli::verify_rows;
use tickms::presets;
use tickms::simulate::ModelParams;

fn main() -> tickms::Result<()> {
    for (name, params) in [
        ("MS", ModelParams::Ms(presets::high_activity_ms())),
        ("DCMM(2)", ModelParams::Dcmm(presets::high_activity_dcmm(2))),
    ] {
        println!("{name}");
        for row in verify_rows(&params, 5, 400_000, 21)? {
            println!(
                "  tau = {}: analytic {:+.5}  simulated {:+.5}  se {:.5}  {}",
                row.tau,
                row.analytic,
                row.mc,
                row.se,
                if row.pass { "ok" } else { "outside 3 se" }
            );
        }
    }
    Ok(())
}
