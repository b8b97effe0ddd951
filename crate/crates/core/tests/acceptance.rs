//! End-to-end acceptance suite. Runs every criterion, prints one line per
//! criterion and exits non-zero if any fails.

use std::collections::BTreeMap;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tickms::calibrate::{estimate_counts, fit_logit_design, fit_power_law, LogitDesign};
use tickms::cli::verify_rows;
use tickms::dcmm::{
    acf_squared_dcmm_lags, acf_squared_joint, acf_squared_transfer, build_squared_chain, e3_closed_form, logistic,
    DcmmParams, JointChain, RegimeCoupling,
};
use tickms::ingest::TickSeries;
use tickms::markov::{build_transition_chain, SpreadChainParams};
use tickms::ms::{acf_squared, unconditional_moments, MsParams};
use tickms::presets;
use tickms::simulate::{run_ensemble, simulate_path, EnsembleSummary, ModelParams, SimConfig};
use tickms::states::TransitionState;
use tickms::stats::{aggregate_stats, odd_bin_dominance, sample_acf, scaling_profile, Aggregation};

const SEED: u64 = 2024;
const MAX_DT: usize = 512;
const ACF_LAGS: usize = 50;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn random_chain(rng: &mut ChaCha8Rng) -> SpreadChainParams {
    SpreadChainParams::new(rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99)).unwrap()
}

fn stationary_closed_forms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let chain = random_chain(&mut rng);
        let (p11, p21) = (chain.p11(), chain.p21());
        let pi1 = p21 / (1.0 - p11 + p21);
        let pi2 = 1.0 - pi1;
        let lambda = [pi1 * p11, pi1 * (1.0 - p11), pi2 * p21, pi2 * (1.0 - p21)];
        let pi = chain.spread_matrix().stationary_distribution().unwrap();
        let (matrix, _) = build_transition_chain(&chain);
        let numeric = matrix.stationary_distribution().unwrap();
        worst = worst.max((pi.as_slice()[0] - pi1).abs()).max((pi.as_slice()[1] - pi2).abs());
        for (n, l) in numeric.as_slice().iter().zip(lambda) {
            worst = worst.max((n - l).abs());
        }
    }
    outcome(worst < 1e-10, format!("1000 chains, max deviation {worst:.1e}"))
}

fn table_two_consistency() -> Outcome {
    let high = presets::high_activity_chain().spread_stationary()[0];
    let low = presets::low_activity_chain().spread_stationary()[0];
    let pass = (high - 0.9174).abs() < 5e-4
        && (high - 0.917).abs() < 5e-4
        && (low - 0.9516).abs() < 5e-4
        && (low - 0.952).abs() < 5e-4;
    outcome(pass, format!("pi1 high {high:.5} (0.917), low {low:.5} (0.952)"))
}

fn model_implied_moments() -> Outcome {
    let params = presets::high_activity_ms();
    let l = params.chain.transition_stationary();
    // Independent oracle: regimes 1 and 4 move by +-2 with prob theta each,
    // regimes 2 and 3 by +-1 with prob 1/2 each.
    let e2 = l[0] * 8.0 * params.theta1 + l[1] + l[2] + l[3] * 8.0 * params.theta4;
    let e4 = l[0] * 32.0 * params.theta1 + l[1] + l[2] + l[3] * 32.0 * params.theta4;
    let (sigma_o, kappa_o) = (e2.sqrt(), e4 / (e2 * e2) - 3.0);
    let m = unconditional_moments(&params);
    let oracle_ok = (m.sigma() - sigma_o).abs() < 1e-12 && (m.excess_kurtosis() - kappa_o).abs() < 1e-10;
    let pass = oracle_ok && rel(m.sigma(), 0.652) < 0.02 && rel(m.excess_kurtosis(), 5.13) < 0.05;
    outcome(
        pass,
        format!(
            "sigma {:.4} vs 0.652 ({:.1}%), kurtosis {:.3} vs 5.13 ({:.1}%), oracle match {oracle_ok}",
            m.sigma(),
            100.0 * rel(m.sigma(), 0.652),
            m.excess_kurtosis(),
            100.0 * rel(m.excess_kurtosis(), 5.13)
        ),
    )
}

fn ms_geometry() -> Outcome {
    let params = presets::high_activity_ms();
    let d = params.chain.p11() - params.chain.p21();
    let worst_ratio = (1..=50u32)
        .map(|t| rel(acf_squared(&params, t + 1) / acf_squared(&params, t), d))
        .fold(0.0, f64::max);
    let pi1 = params.chain.spread_stationary()[0];
    let msb = MsParams::new(SpreadChainParams::bernoulli(pi1).unwrap(), params.theta1, params.theta4).unwrap();
    let base = acf_squared(&msb, 2);
    let worst_flat = (2..=50u32).map(|t| (acf_squared(&msb, t) - base).abs()).fold(0.0, f64::max);
    outcome(
        worst_ratio < 1e-10 && worst_flat < 1e-12,
        format!("ratio rel error {worst_ratio:.1e}, MS_B flatness {worst_flat:.1e}"),
    )
}

fn random_dcmm1(rng: &mut ChaCha8Rng) -> DcmmParams {
    let chain = random_chain(rng);
    DcmmParams::new(chain, rng.gen_range(-4.0..0.0), vec![rng.gen_range(-0.5..0.5)], rng.gen_range(0.0001..0.05)).unwrap()
}

fn third_eigenvalue() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let params = random_dcmm1(&mut rng);
        let closed = e3_closed_form(&params).unwrap();
        let spectrum = build_squared_chain(&params).unwrap().matrix().to_dense().unwrap().spectrum().unwrap();
        let nearest = spectrum.iter().map(|z| (z.re - closed).abs() + z.im.abs()).fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    let preset = presets::high_activity_dcmm(1);
    let e3 = e3_closed_form(&preset).unwrap();
    let rho1 = acf_squared_dcmm_lags(&preset, RegimeCoupling::Exact, 1).unwrap()[0];
    outcome(
        worst < 1e-10 && (e3 + 0.0202).abs() < 5e-5 && rho1 < 0.0,
        format!("100 draws, max gap {worst:.1e}; preset e3 {e3:.5}, rho(1) {rho1:.5}"),
    )
}

fn embedding_equivalence() -> Outcome {
    let mut worst_routes: f64 = 0.0;
    let mut failures = Vec::new();
    let mut rows = 0;
    for p in 1..=3 {
        let params = presets::high_activity_dcmm(p);
        let chain = JointChain::build(&params).unwrap();
        let dense = acf_squared_transfer(&chain, 10).unwrap();
        let joint = acf_squared_joint(&chain, 10);
        worst_routes = dense.iter().zip(&joint).map(|(a, b)| (a - b).abs()).fold(worst_routes, f64::max);
        for row in verify_rows(&ModelParams::Dcmm(params), 10, 1_000_000, SEED + p as u64).unwrap() {
            rows += 1;
            if !row.pass {
                failures.push(format!("p={p} tau={} z={:.2}", row.tau, (row.mc - row.analytic) / row.se));
            }
        }
    }
    outcome(
        worst_routes < 1e-12 && failures.is_empty(),
        format!("route gap {worst_routes:.1e}; {}/{rows} lags within 3 SE {failures:?}", rows - failures.len()),
    )
}

fn nesting() -> Outcome {
    let mut worst: f64 = 0.0;
    for (chain, alpha) in [(presets::high_activity_chain(), presets::ALPHA1), (presets::low_activity_chain(), -3.3)] {
        for p in 1..=3 {
            let dcmm = DcmmParams::new(chain, alpha, vec![0.0; p], 0.00151).unwrap();
            let ms = MsParams::new(chain, logistic(alpha) / 2.0, 0.00151).unwrap();
            let lags = acf_squared_dcmm_lags(&dcmm, RegimeCoupling::Exact, 50).unwrap();
            for (i, v) in lags.iter().enumerate() {
                worst = worst.max((v - acf_squared(&ms, i as u32 + 1)).abs());
            }
        }
    }
    outcome(worst < 1e-10, format!("max |rho_dcmm - rho_ms| over tau <= 50: {worst:.1e}"))
}

fn simulate_recover() -> Outcome {
    let ms = presets::high_activity_ms();
    let path = simulate_path(&SimConfig::new(ModelParams::Ms(ms), 1_000_000, SEED)).unwrap();
    let c = estimate_counts(&TickSeries::from_path(&path)).unwrap();
    let pi1 = ms.chain.spread_stationary()[0];
    let counts = [
        ("pi1", c.pi1_hat, c.pi1_se(), pi1),
        ("p11", c.p11_hat.unwrap(), c.p11_se().unwrap(), ms.chain.p11()),
        ("p21", c.p21_hat.unwrap(), c.p21_se().unwrap(), ms.chain.p21()),
        ("theta1", c.theta1_hat.unwrap(), c.theta_se(TransitionState::StayOne).unwrap(), ms.theta1),
        ("theta4", c.theta4_hat.unwrap(), c.theta_se(TransitionState::StayTwo).unwrap(), ms.theta4),
    ];
    let mut worst_z: f64 = 0.0;
    let mut failures = Vec::new();
    for (name, hat, se, truth) in counts {
        let z = (hat - truth) / se;
        worst_z = worst_z.max(z.abs());
        if z.abs() > 3.0 {
            failures.push(format!("{name} z={z:.2}"));
        }
    }
    let mut coefs = 0;
    for p in 1..=10 {
        let truth = presets::high_activity_dcmm(p);
        let path = simulate_path(&SimConfig::new(ModelParams::Dcmm(truth.clone()), 1_000_000, SEED + p as u64)).unwrap();
        let fit = fit_logit_design(&LogitDesign::from_series(&TickSeries::from_path(&path), p).unwrap()).unwrap();
        if !fit.converged {
            failures.push(format!("p={p} not converged"));
        }
        let truth_coefs = std::iter::once(truth.alpha1).chain(truth.beta1.iter().copied());
        for (i, (t, est)) in truth_coefs.zip(fit.estimates()).enumerate() {
            coefs += 1;
            let z = (est - t) / fit.std_errors[i];
            worst_z = worst_z.max(z.abs());
            if z.abs() > 3.0 {
                failures.push(format!("p={p} coef {i} z={z:.2}"));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("5 count estimators and {coefs} logit coefficients, max |z| {worst_z:.2} {failures:?}"),
    )
}

/// Per-run statistics: `sigma_N(1..=512)`, `kappa(1..=512)`, then the
/// squared-return ACF at lags `0..=50`.
fn shared_ensemble(params: ModelParams) -> EnsembleSummary {
    let dts: Vec<usize> = (1..=MAX_DT).collect();
    let config = SimConfig::new(params, 1_000_000, SEED).with_runs(25);
    run_ensemble(&config, |path| {
        let profile = scaling_profile(&path.return_values(), &dts, Aggregation::Overlapping)?;
        let mut out: Vec<f64> = profile.iter().map(|p| p.0).collect();
        out.extend(profile.iter().map(|p| p.1));
        out.extend(sample_acf(&path.squared_returns(), ACF_LAGS)?.values);
        Ok(out)
    })
    .unwrap()
}

fn kappa_exponent(e: &EnsembleSummary) -> (f64, f64) {
    let dts: Vec<f64> = (1..=MAX_DT).map(|d| d as f64).collect();
    let fit = fit_power_law(&e.mean[MAX_DT..2 * MAX_DT], &dts, (8.0, MAX_DT as f64)).unwrap();
    (fit.exponent, fit.exponent_se)
}

fn kurtosis_scaling(ms: &EnsembleSummary, dcmm: &EnsembleSummary) -> Outcome {
    let (a_ms, se_ms) = kappa_exponent(ms);
    let (a_dcmm, se_dcmm) = kappa_exponent(dcmm);
    outcome(
        (0.85..=1.15).contains(&a_ms) && a_dcmm < 0.85,
        format!("MS exponent {a_ms:.3} ({se_ms:.3}), DCMM(50) exponent {a_dcmm:.3} ({se_dcmm:.3}), dt in [8, 512]"),
    )
}

fn acf_power_law(dcmm: &EnsembleSummary) -> Outcome {
    let acf = &dcmm.mean[2 * MAX_DT..];
    let lags: Vec<f64> = (0..=ACF_LAGS).map(|l| l as f64).collect();
    let fit = fit_power_law(acf, &lags, (6.0, 50.0)).unwrap();
    outcome(
        (fit.exponent - 0.30).abs() <= 0.10,
        format!("exponent {:.3} ({:.3}) over tau in [6, 50], {} lags excluded", fit.exponent, fit.exponent_se, fit.excluded),
    )
}

fn parity_invariant() -> Outcome {
    let pi1 = presets::high_activity_chain().spread_stationary()[0];
    let msb = MsParams::new(SpreadChainParams::bernoulli(pi1).unwrap(), 0.0481, 0.00151).unwrap();
    let models = [ModelParams::Ms(msb), ModelParams::Ms(presets::high_activity_ms()), ModelParams::Dcmm(presets::high_activity_dcmm(50))];
    let mut violations = 0usize;
    let mut checked = 0usize;
    for params in models {
        for seed in 0..20 {
            let path = simulate_path(&SimConfig::new(params.clone(), 100_000, seed)).unwrap();
            let s: Vec<u8> = path.spreads.iter().map(|s| s.ticks()).collect();
            let r = path.return_values();
            let mut prefix = vec![0i64; r.len() + 1];
            for (i, v) in r.iter().enumerate() {
                prefix[i + 1] = prefix[i] + v;
            }
            for dt in 1..=256 {
                for t in 0..=r.len() - dt {
                    checked += 1;
                    let odd = (prefix[t + dt] - prefix[t]).rem_euclid(2) == 1;
                    if odd != (s[t + dt] != s[t]) {
                        violations += 1;
                    }
                }
            }
        }
    }
    outcome(violations == 0, format!("{violations} violations in {checked} windows"))
}

fn diffusivity(ms: &EnsembleSummary, dcmm: &EnsembleSummary) -> Outcome {
    let mut detail = Vec::new();
    let mut pass = true;
    for (name, e) in [("MS", ms), ("DCMM(50)", dcmm)] {
        let mut worst_z: f64 = 0.0;
        let mut bad = 0;
        let n = e.runs() as f64;
        for dt in 2..=MAX_DT {
            let ratios: Vec<f64> = e.per_run.iter().map(|r| r[dt - 1] / r[0]).collect();
            let mean = ratios.iter().sum::<f64>() / n;
            let sd = (ratios.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let z = (mean - 1.0) / (sd / n.sqrt());
            worst_z = worst_z.max(z.abs());
            if z.abs() > 3.0 {
                bad += 1;
            }
        }
        pass &= bad == 0;
        detail.push(format!("{name}: {bad} of 511 outside, max |z| {worst_z:.2}"));
    }
    outcome(pass, detail.join("; "))
}

fn odd_even_histogram() -> Outcome {
    let path = simulate_path(&SimConfig::new(ModelParams::Ms(presets::high_activity_ms()), 1_000_000, SEED)).unwrap();
    let stats = aggregate_stats(&path.return_values(), 128, Aggregation::Overlapping).unwrap();
    let tested = odd_bin_dominance(&stats.histogram, 100);
    let failed: Vec<i64> = tested.iter().filter(|(_, ok)| !ok).map(|(k, _)| *k).collect();
    outcome(
        !tested.is_empty() && failed.is_empty(),
        format!("{} odd bins tested, failures {failed:?}", tested.len()),
    )
}

fn path_csv(params: &ModelParams, seed: u64) -> Vec<u8> {
    let mut buf = Vec::new();
    simulate_path(&SimConfig::new(params.clone(), 50_000, seed)).unwrap().write_csv(&mut buf).unwrap();
    buf
}

fn determinism() -> Outcome {
    let params = ModelParams::Dcmm(presets::high_activity_dcmm(5));
    let lib_equal = path_csv(&params, 9) == path_csv(&params, 9) && path_csv(&params, 9) != path_csv(&params, 10);

    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("params.toml");
    std::fs::write(&input, tickms::cli::ParamsFile::from_model(&params).to_toml()).unwrap();
    let run = |out: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_tickms"))
            .args(["simulate", "--model", "dcmm", "--length", "20000", "--runs", "3", "--seed", "77", "--max-lag", "5"])
            .arg("--input")
            .arg(&input)
            .arg("--output")
            .arg(dir.path().join(out))
            .status()
            .unwrap();
        assert!(status.success());
        (0..3)
            .map(|i| std::fs::read(dir.path().join(out).join(format!("paths/path_{i:03}.csv"))).unwrap())
            .collect::<Vec<_>>()
    };
    let cli_equal = run("a") == run("b");
    outcome(lib_equal && cli_equal, format!("library paths identical: {lib_equal}, CLI path files identical: {cli_equal}"))
}

fn main() {
    let mut results: BTreeMap<u32, bool> = BTreeMap::new();
    let mut record = |id: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        println!(
            "{} criterion {id:>2} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        results.insert(id, o.pass);
    };
    record(1, "stationary closed forms", &mut stationary_closed_forms);
    record(2, "spread stationary law vs reference", &mut table_two_consistency);
    record(3, "model-implied moments", &mut model_implied_moments);
    record(4, "MS autocorrelation geometry", &mut ms_geometry);
    record(5, "third eigenvalue", &mut third_eigenvalue);
    record(6, "embedding equivalence", &mut embedding_equivalence);
    record(7, "model nesting", &mut nesting);
    record(8, "simulate and recover", &mut simulate_recover);

    let start = Instant::now();
    let ms = shared_ensemble(ModelParams::Ms(presets::high_activity_ms()));
    let dcmm = shared_ensemble(ModelParams::Dcmm(presets::high_activity_dcmm(50)));
    println!("     (shared 25-run ensembles built in {:.1}s)", start.elapsed().as_secs_f64());
    record(9, "kurtosis scaling", &mut || kurtosis_scaling(&ms, &dcmm));
    record(10, "squared-return ACF power law", &mut || acf_power_law(&dcmm));
    record(11, "parity invariant", &mut parity_invariant);
    record(12, "diffusivity", &mut || diffusivity(&ms, &dcmm));
    record(13, "odd-even histogram", &mut odd_even_histogram);
    record(14, "determinism", &mut determinism);

    let failed: Vec<u32> = results.iter().filter(|(_, ok)| !**ok).map(|(id, _)| *id).collect();
    println!("acceptance: {} of {} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
