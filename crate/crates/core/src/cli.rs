//! Command-line interface.
//!
//! Exit codes: 0 on success, 2 for invalid input (bad flags, malformed
//! files, failed validation), 1 for anything else.

use std::ffi::OsString;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::hmm::MaskPreset;
use crate::io::{
    build_report, parse_cohort_csv, read_bundle_file, read_model_file, read_results_csv, write_bundle,
    write_cohort_csv, write_labels_csv, write_model_file, write_results_csv, write_truth_csv, ReportOptions,
    DEFAULT_HORIZON_MONTHS,
};
use crate::outputs::{label_cohort, AgeAxis, DerivedColumn};
use crate::selection::{run_grid, select_k, GridSpec};
use crate::synth::{simulate_cohort, SimSpec};
use crate::training::{fit_best_of, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "cthmm", version, about = "Continuous-time hidden Markov models for longitudinal biomarker cohorts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a cohort from a model file.
    Simulate(SimulateArgs),
    /// Fit a model with EM, keeping the best of several initializations.
    Train(TrainArgs),
    /// Run the model-selection grid and write one row per fit.
    Select(SelectArgs),
    /// Label every visit with its Viterbi and filtered state.
    Decode(DecodeArgs),
    /// Build the report bundle for a fitted model and cohort.
    Report(ReportArgs),
    /// Serve a report bundle over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct MarkerArgs {
    /// Comma-separated marker columns; other columns are auxiliary.
    /// Defaults to every column after `age_years`.
    #[arg(long, value_delimiter = ',')]
    pub markers: Option<Vec<String>>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub subjects: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the hidden states (`subject_id,age_years,true_state`).
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Per-marker probability that a reading is missing.
    #[arg(long, default_value_t = 0.1)]
    pub missingness: f64,
    /// Maximum follow-up in years.
    #[arg(long, default_value_t = 15.0)]
    pub follow_up: f64,
    #[arg(long, default_value_t = 0.8)]
    pub interval_mean: f64,
    #[arg(long, default_value_t = 0.94)]
    pub interval_sd: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub states: usize,
    #[arg(long, default_value = "chain")]
    pub mask: MaskPreset,
    #[arg(long, default_value_t = 1)]
    pub inits: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[command(flatten)]
    pub markers: MarkerArgs,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub kmin: usize,
    #[arg(long)]
    pub kmax: usize,
    #[arg(long, default_value_t = 3)]
    pub splits: usize,
    #[arg(long, default_value_t = 1)]
    pub inits: usize,
    #[arg(long, default_value_t = 0.7)]
    pub ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Transition constraints to include; repeat for several.
    #[arg(long = "mask", default_value = "chain")]
    pub masks: Vec<MaskPreset>,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Include wall-clock time per fit (makes the output non-reproducible).
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    pub markers: MarkerArgs,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Horizon in months; repeat for several.
    #[arg(long = "horizon", default_values_t = [DEFAULT_HORIZON_MONTHS])]
    pub horizons: Vec<u32>,
    /// Grid results from `select`, summarized into the bundle.
    #[arg(long)]
    pub selection: Option<PathBuf>,
    /// Derived running-maximum column, as `NAME=SOURCE`; repeatable.
    #[arg(long = "running-max", value_parser = parse_derived)]
    pub running_max: Vec<DerivedColumn>,
    #[arg(long, default_value = "years", value_parser = parse_axis)]
    pub age_axis: AgeAxis,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub host: IpAddr,
}

fn parse_derived(text: &str) -> std::result::Result<DerivedColumn, String> {
    match text.split_once('=') {
        Some((name, source)) if !name.trim().is_empty() && !source.trim().is_empty() => {
            Ok(DerivedColumn::running_max(name.trim(), source.trim()))
        }
        _ => Err(format!("expected NAME=SOURCE, got `{text}`")),
    }
}

fn parse_axis(text: &str) -> std::result::Result<AgeAxis, String> {
    match text {
        "years" => Ok(AgeAxis::Years),
        "months" => Ok(AgeAxis::Months),
        _ => Err(format!("expected years or months, got `{text}`")),
    }
}

impl Cli {
    pub fn execute(self) -> Result<()> {
        match self.command {
            Command::Simulate(a) => simulate(a),
            Command::Train(a) => train(a),
            Command::Select(a) => select(a),
            Command::Decode(a) => decode(a),
            Command::Report(a) => report(a),
            Command::Serve(a) => serve(a),
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let model = read_model_file(&a.model)?;
    let spec = SimSpec {
        interval_mean: a.interval_mean,
        interval_sd: a.interval_sd,
        follow_up_cap: a.follow_up,
        ..SimSpec::new(model, a.subjects, a.seed).with_missingness(a.missingness)
    };
    let sim = simulate_cohort(&spec)?;
    write_cohort_csv(&a.out, &sim.cohort)?;
    if let Some(path) = &a.truth {
        write_truth_csv(path, &sim.cohort, &sim.truth)?;
    }
    log::info!("wrote {} subjects, {} visits", sim.cohort.len(), sim.cohort.visit_count());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let cohort = parse_cohort_csv(&a.data, a.markers.markers.as_deref())?;
    let config = TrainConfig {
        max_iterations: a.max_iter,
        tolerance: a.tol,
        ..TrainConfig::new(a.states, a.mask, a.seed)
    };
    let fit = fit_best_of(&config, &cohort, a.inits)?;
    for w in &fit.warnings {
        log::warn!("{w}");
    }
    log::info!(
        "final log-likelihood {:.6} after {} iterations (converged: {})",
        fit.final_ll(),
        fit.iterations,
        fit.converged
    );
    write_model_file(&a.out, &fit.model)
}

fn select(a: SelectArgs) -> Result<()> {
    let cohort = parse_cohort_csv(&a.data, a.markers.markers.as_deref())?;
    let spec = GridSpec {
        train_ratio: a.ratio,
        constraints: a.masks,
        max_iterations: a.max_iter,
        tolerance: a.tol,
        ..GridSpec::new(a.kmin, a.kmax, a.splits, a.inits, a.seed)
    };
    let results = run_grid(&cohort, &spec)?;
    write_results_csv(&a.out, &results, a.timing)?;
    match select_k(&results) {
        Ok(report) => log::info!(
            "recommended K = {}{}",
            report.recommended_k,
            if report.no_elbow { " (no elbow found)" } else { "" }
        ),
        Err(e) => log::warn!("no recommendation: {e}"),
    }
    Ok(())
}

fn decode(a: DecodeArgs) -> Result<()> {
    let model = read_model_file(&a.model)?;
    let cohort = parse_cohort_csv(&a.data, Some(model.marker_names()))?;
    let labeled = label_cohort(&model, &cohort)?;
    log::info!("{} discrepant visits", labeled.discrepancy_count());
    write_labels_csv(&a.out, &labeled)
}

fn report(a: ReportArgs) -> Result<()> {
    let model = read_model_file(&a.model)?;
    let cohort = parse_cohort_csv(&a.data, Some(model.marker_names()))?;
    let selection = match &a.selection {
        Some(path) => Some(select_k(&read_results_csv(path)?).map_err(|e| e.context("selection results"))?),
        None => None,
    };
    let mut options = ReportOptions {
        horizons: a.horizons,
        selection,
        age_axis: a.age_axis,
        ..ReportOptions::default()
    };
    options.summary.derived = a.running_max;
    let bundle = build_report(&model, &cohort, &options)?;
    let file = std::fs::File::create(&a.out).map_err(|e| Error::from(e).context(a.out.display().to_string()))?;
    write_bundle(std::io::BufWriter::new(file), &bundle)
}

fn serve(a: ServeArgs) -> Result<()> {
    let bundle = read_bundle_file(&a.bundle)?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(crate::serve::serve(bundle, SocketAddr::new(a.host, a.port)))
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match cli.execute() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}
