//! Stationary laws of the spread chain and of the four-state transition chain.

use tickms::markov::build_transition_chain;
use tickms::presets;
use tickms::states::TransitionState;

fn main() -> tickms::Result<()> {
    for (name, chain) in [("high", presets::high_activity_chain()), ("low", presets::low_activity_chain())] {
        let [pi1, pi2] = chain.spread_stationary();
        println!("{name} activity: p11 = {}, p21 = {}", chain.p11(), chain.p21());
        println!("  pi = ({pi1:.6}, {pi2:.6})");

        let (matrix, lambda) = build_transition_chain(&chain);
        for k in TransitionState::ALL {
            println!("  lambda[{}] = {:.6}", k.label(), lambda.as_slice()[k.index()]);
        }
        // The numeric stationary vector must match the closed form.
        let numeric = matrix.stationary_distribution()?;
        let gap = numeric.as_slice().iter().zip(lambda.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("  max |numeric - closed form| = {gap:.2e}");
        let spectrum = matrix.spectrum()?;
        let moduli: Vec<String> = spectrum.iter().map(|z| format!("{:.4}", z.norm())).collect();
        println!("  |eigenvalues| = [{}]", moduli.join(", "));
    }
    Ok(())
}
