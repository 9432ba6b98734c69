//! Transition probabilities and end-point conditioned moments for a small
//! progression chain.
//!
//! ```text
//! cargo run --example transition_kernels
//! ```

use cthmm::hmm::ChainModel;
use cthmm::linalg::conditioned_moments;
use cthmm::outputs::{dwell_times, horizon_matrix};

fn main() -> cthmm::Result<()> {
    let model = ChainModel::chain(
        vec!["marker".into()],
        vec![1.0, 0.0, 0.0],
        &[0.4, 0.7],
        vec![vec![0.05], vec![0.5], vec![0.95]],
    )?;

    for d in dwell_times(&model) {
        match d.mean_years {
            Some(y) => println!("state {}: exit rate {:.2}/y, mean dwell {y:.2} y", d.state, d.exit_rate),
            None => println!("state {}: absorbing", d.state),
        }
    }

    for months in [0.0, 6.0, 24.0] {
        let p = horizon_matrix(&model, months)?;
        println!("\nP({months} months):");
        for row in p.to_rows() {
            println!("  {}", row.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join("  "));
        }
    }

    let dt = 2.0;
    let m = conditioned_moments(model.generator(), dt)?;
    println!("\ngiven state 0 at t=0 and state 2 at t={dt}:");
    for s in 0..3 {
        println!("  expected time in {s}: {:.4} y", m.occupation(0, 2, s));
    }
    for (from, to) in m.edges().collect::<Vec<_>>() {
        println!("  expected jumps {from}->{to}: {:.4}", m.jumps(0, 2, from, to));
    }
    Ok(())
}
