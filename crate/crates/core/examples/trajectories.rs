//! Label a cohort simulated from an 11-state chain with two near-zero rates,
//! split the chain into trajectories and explore a subgroup.
//!
//! ```text
//! cargo run --release --example trajectories -- [query]
//! ```

use cthmm::hmm::ChainModel;
use cthmm::outputs::{
    label_cohort, segment_trajectories, state_summary, subgroup_filter, subject_bands, SummaryOptions,
};
use cthmm::synth::{simulate_cohort, SimSpec};

fn eleven_states() -> cthmm::Result<ChainModel> {
    let mut rates = vec![0.6; 10];
    rates[2] = 1e-9;
    rates[7] = 1e-9;
    let mut pi = vec![0.0; 11];
    pi[0] = 0.4;
    pi[3] = 0.3;
    pi[8] = 0.3;
    let emissions = (0..11usize)
        .map(|s| (0..4).map(|m| if (s >> m) & 1 == 1 || s == 10 { 0.95 } else { 0.05 }).collect())
        .collect();
    ChainModel::chain((1..=4).map(|i| format!("m{i}")).collect(), pi, &rates, emissions)
}

fn main() -> cthmm::Result<()> {
    let query = std::env::args().nth(1).unwrap_or_else(|| "visited == {0,1,2}".into());
    let model = eleven_states()?;
    let sim = simulate_cohort(&SimSpec::new(model.clone(), 300, 4).with_missingness(0.05))?;
    let labeled = label_cohort(&model, &sim.cohort)?;
    println!(
        "{} subjects, {} visits, {} labeling discrepancies",
        labeled.subjects.len(),
        labeled.visit_count(),
        labeled.discrepancy_count()
    );

    for segment in segment_trajectories(&model, &labeled)? {
        println!(
            "trajectory {}-{}: {} subjects",
            segment.first_state(),
            segment.last_state(),
            segment.members.len()
        );
        for e in segment.entry_ages.iter().filter(|e| e.count > 0) {
            println!("  enters {} at median age {:.1} ({} subjects)", e.state, e.median.unwrap_or(f64::NAN), e.count);
        }
    }

    let ids = subgroup_filter(&labeled, &query)?;
    println!("\n`{query}` selects {} subjects", ids.len());
    let subgroup = labeled.restrict(&ids);
    let summary = state_summary(&model, &subgroup, &SummaryOptions::default())?;
    for s in summary.states.iter().filter(|s| s.visits > 0) {
        println!("  state {:>2}: {:>4} visits, mean age {:.2}", s.state, s.visits, s.mean_age.unwrap_or(f64::NAN));
    }
    if let Some(first) = subgroup.subjects.first() {
        println!("\ntimeline of {}:", first.subject_id);
        for b in subject_bands(first) {
            println!("  state {:>2} from {:.2} to {:.2}", b.state, b.start, b.end);
        }
    }
    Ok(())
}
