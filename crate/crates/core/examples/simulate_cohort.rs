//! Simulate an irregularly sampled cohort and print it as CSV, followed by
//! the hidden states on stderr.
//!
//! ```text
//! cargo run --example simulate_cohort -- [subjects] [seed] > cohort.csv
//! ```

use cthmm::hmm::ChainModel;
use cthmm::io::{write_cohort, write_truth};
use cthmm::synth::{simulate_cohort, SimSpec};

fn main() -> cthmm::Result<()> {
    let mut args = std::env::args().skip(1);
    let subjects: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let model = ChainModel::chain(
        vec!["GADA".into(), "IA2A".into(), "IAA".into()],
        vec![0.6, 0.3, 0.1],
        &[0.4, 0.7],
        vec![vec![0.05, 0.05, 0.05], vec![0.9, 0.1, 0.9], vec![0.9, 0.9, 0.9]],
    )?;
    let spec = SimSpec {
        follow_up_cap: 5.0,
        ..SimSpec::new(model, subjects, seed).with_missingness(0.15)
    };
    let sim = simulate_cohort(&spec)?;
    write_cohort(std::io::stdout().lock(), &sim.cohort)?;
    write_truth(std::io::stderr().lock(), &sim.cohort, &sim.truth)?;
    Ok(())
}
