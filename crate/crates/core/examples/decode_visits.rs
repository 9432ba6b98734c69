//! Likelihood, filtering, smoothing and Viterbi decoding for one subject,
//! with missing readings marginalized out.
//!
//! ```text
//! cargo run --example decode_visits
//! ```

use cthmm::hmm::{forward_backward, forward_filter, viterbi, ChainModel, Cohort, Reading, VisitSequence};
use cthmm::outputs::label_cohort;

use Reading::{Missing, Negative, Positive};

fn main() -> cthmm::Result<()> {
    let model = ChainModel::chain(
        vec!["GADA".into(), "IAA".into()],
        vec![0.7, 0.2, 0.1],
        &[0.5, 0.3],
        vec![vec![0.05, 0.05], vec![0.9, 0.1], vec![0.9, 0.9]],
    )?;
    let seq = VisitSequence::from_observations(
        "subject-1",
        vec![1.0, 1.4, 2.5, 3.1, 4.8],
        vec![
            vec![Negative, Negative],
            vec![Positive, Missing],
            vec![Positive, Negative],
            vec![Missing, Positive],
            vec![Positive, Positive],
        ],
    )?;

    let filtered = forward_filter(&model, &seq)?;
    let smoothed = forward_backward(&model, &seq)?;
    let path = viterbi(&model, &seq)?;
    println!("log-likelihood {:.4}", filtered.log_likelihood);
    println!("Viterbi path {:?} (log-prob {:.4})", path.states, path.log_probability);
    println!(" age   filtered                smoothed");
    for (t, age) in seq.times().iter().enumerate() {
        let fmt = |p: &[f64]| p.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
        println!("{age:>4.1}   {}   {}", fmt(&filtered.filtered[t]), fmt(&smoothed.smoothed[t]));
    }

    let cohort = Cohort::new(model.marker_names().to_vec(), vec![], vec![seq])?;
    let labeled = label_cohort(&model, &cohort)?;
    for v in &labeled.subjects[0].visits {
        if v.discrepancy {
            println!(
                "age {:.1}: Viterbi says {}, filtering says {}",
                v.age, v.viterbi_state, v.filtered_argmax
            );
        }
    }
    Ok(())
}
