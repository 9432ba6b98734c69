//! Fit a model to a simulated cohort, select K with a small grid and write
//! the report bundle that `cthmm serve` reads.
//!
//! ```text
//! cargo run --release --example report_bundle -- [out.json]
//! ```

use cthmm::hmm::{ChainModel, MaskPreset};
use cthmm::io::{emit_report, ReportOptions};
use cthmm::outputs::AgeAxis;
use cthmm::selection::{run_grid, select_k, GridSpec};
use cthmm::synth::{simulate_cohort, SimSpec};
use cthmm::training::{fit_best_of, TrainConfig};

fn main() -> cthmm::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "report.json".into());
    let truth = ChainModel::chain(
        vec!["GADA".into(), "IA2A".into(), "IAA".into()],
        vec![0.5, 0.3, 0.2],
        &[0.4, 0.7],
        vec![vec![0.05, 0.05, 0.05], vec![0.9, 0.1, 0.9], vec![0.9, 0.9, 0.9]],
    )?;
    let cohort = simulate_cohort(&SimSpec {
        age_resolution: Some(1.0 / 365.25),
        ..SimSpec::new(truth, 150, 2)
    })?
    .cohort;

    let grid = GridSpec {
        tolerance: 1e-3,
        ..GridSpec::new(2, 4, 2, 2, 2)
    };
    let selection = select_k(&run_grid(&cohort, &grid)?)?;
    println!("recommended K = {}", selection.recommended_k);

    let config = TrainConfig {
        tolerance: 1e-4,
        ..TrainConfig::new(selection.recommended_k, MaskPreset::Chain, 2)
    };
    let fit = fit_best_of(&config, &cohort, 3)?;
    let options = ReportOptions {
        horizons: vec![6, 12, 24],
        selection: Some(selection),
        age_axis: AgeAxis::Years,
        ..ReportOptions::default()
    };
    let bundle = emit_report(&fit.model, &cohort, &options, &out)?;
    println!(
        "wrote {out}: {} states, {} timelines, {} horizons",
        bundle.dwell.len(),
        bundle.timelines.len(),
        bundle.horizons.len()
    );
    Ok(())
}
