//! Fit a 3-state chain to a cohort simulated from known parameters and
//! compare the recovered rates and emissions with the truth.
//!
//! ```text
//! cargo run --release --example em_recovery -- [seed] [inits]
//! ```

use std::time::Instant;

use cthmm::hmm::{ChainModel, MaskPreset};
use cthmm::synth::{simulate_cohort, SimSpec};
use cthmm::training::{fit_best_of, TrainConfig};

fn truth() -> ChainModel {
    ChainModel::chain(
        vec!["GADA".into(), "IA2A".into(), "IAA".into()],
        vec![0.5, 0.3, 0.2],
        &[0.4, 0.7],
        vec![
            vec![0.05, 0.05, 0.05],
            vec![0.9, 0.1, 0.9],
            vec![0.9, 0.9, 0.9],
        ],
    )
    .expect("valid model")
}

fn main() -> cthmm::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let inits: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(3);
    let model = truth();
    let spec = SimSpec {
        age_resolution: Some(1.0 / 365.25),
        ..SimSpec::new(model.clone(), 500, seed)
    };
    let sim = simulate_cohort(&spec)?;
    println!(
        "simulated {} subjects, {} visits",
        sim.cohort.len(),
        sim.cohort.visit_count()
    );

    let mut config = TrainConfig::new(3, MaskPreset::Chain, seed);
    config.tolerance = 1e-4;
    let started = Instant::now();
    let fit = fit_best_of(&config, &sim.cohort, inits)?;
    println!(
        "EM: {} iterations, converged={}, final LL {:.3} ({:.2?})",
        fit.iterations,
        fit.converged,
        fit.final_ll(),
        started.elapsed()
    );
    for i in 0..2 {
        println!(
            "rate {i}->{}: true {:.3}, fitted {:.3}",
            i + 1,
            model.rate(i, i + 1),
            fit.model.rate(i, i + 1)
        );
    }
    for (s, (t, f)) in model.emissions().iter().zip(fit.model.emissions()).enumerate() {
        println!("state {s}: true {t:.2?} fitted {f:.3?}");
    }
    let rate_err = (0..2)
        .map(|i| (fit.model.rate(i, i + 1) / model.rate(i, i + 1) - 1.0).abs())
        .fold(0.0, f64::max);
    let emission_err = model
        .emissions()
        .iter()
        .flatten()
        .zip(fit.model.emissions().iter().flatten())
        .map(|(t, f)| (t - f).abs())
        .fold(0.0, f64::max);
    println!("max relative rate error {rate_err:.3}, max emission error {emission_err:.3}");
    Ok(())
}
