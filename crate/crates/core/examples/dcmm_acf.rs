//! Squared-return autocorrelation of the DCMM: exact coupling against the
//! mean-field chain, and the third eigenvalue for a one-lag model.

use tickms::dcmm::{
    acf_squared_dcmm_lags, build_squared_chain, e3_closed_form, eta, mean_squared_return, RegimeCoupling,
    SquaredReturnWindow,
};
use tickms::presets;
use tickms::states::TransitionState;

fn main() -> tickms::Result<()> {
    let one = presets::high_activity_dcmm(1);
    for r2 in [0u8, 1, 4] {
        let w = SquaredReturnWindow::new(vec![r2])?;
        println!("eta(r^2 = {r2}) = {:.4}", eta(TransitionState::StayOne, &w, &one)?);
    }
    let closed = e3_closed_form(&one)?;
    let spectrum = build_squared_chain(&one)?.matrix().to_dense()?.spectrum()?;
    let mut re: Vec<f64> = spectrum.iter().map(|z| z.re).collect();
    re.sort_by(|a, b| b.total_cmp(a));
    println!("e3 closed form = {closed:.7}, spectrum = {re:.7?}");

    for p in [1, 2, 4, 8] {
        let params = presets::high_activity_dcmm(p);
        let exact = acf_squared_dcmm_lags(&params, RegimeCoupling::Exact, 10)?;
        let mean_field = acf_squared_dcmm_lags(&params, RegimeCoupling::MeanField, 10)?;
        println!(
            "p = {p}: E[r^2] = {:.5}  rho(1) exact = {:+.5} mean-field = {:+.5}  rho(10) exact = {:+.5}",
            mean_squared_return(&params)?,
            exact[0],
            mean_field[0],
            exact[9]
        );
    }
    Ok(())
}
