//! Run the selection grid on a cohort simulated from a 4-state chain and
//! print the per-K curves with the recommended number of states.
//!
//! ```text
//! cargo run --release --example model_selection -- [seed] [subjects] [tolerance]
//! ```

use std::time::Instant;

use cthmm::hmm::ChainModel;
use cthmm::selection::{run_grid, select_k, GridSpec};
use cthmm::synth::{simulate_cohort, SimSpec};

fn truth() -> ChainModel {
    ChainModel::chain(
        vec!["GADA".into(), "IA2A".into(), "IAA".into()],
        vec![0.4, 0.3, 0.2, 0.1],
        &[0.4, 0.5, 0.6],
        vec![
            vec![0.05, 0.05, 0.05],
            vec![0.9, 0.05, 0.05],
            vec![0.9, 0.9, 0.05],
            vec![0.9, 0.9, 0.9],
        ],
    )
    .expect("valid model")
}

fn main() -> cthmm::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let subjects: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let tolerance: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1e-3);

    let spec = SimSpec {
        age_resolution: Some(1.0 / 365.25),
        ..SimSpec::new(truth(), subjects, seed)
    };
    let cohort = simulate_cohort(&spec)?.cohort;

    let grid = GridSpec {
        tolerance,
        ..GridSpec::new(2, 6, 3, 3, seed)
    };
    let started = Instant::now();
    let results = run_grid(&cohort, &grid)?;
    let report = select_k(&results)?;
    println!(
        "{} fits on {} subjects in {:.1?}",
        results.len(),
        cohort.len(),
        started.elapsed()
    );
    println!("  K    val LL   val BIC   (all-run median LL)");
    for s in &report.curve {
        if let (Some(ll), Some(bic), Some(all)) = (s.selected_validation_ll, s.selected_validation_bic, s.validation_ll) {
            println!("{:>3}  {:>8.2}  {:>8.2}   ({:.2})", s.k, ll, bic, all.median);
        }
    }
    println!(
        "recommended K = {}{}",
        report.recommended_k,
        if report.no_elbow { " (no elbow)" } else { "" }
    );
    Ok(())
}
