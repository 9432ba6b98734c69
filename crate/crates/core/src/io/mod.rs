//! File formats: cohort and label tables, models, grid results and report
//! bundles.

mod bundle;
mod cohort_csv;
mod model_file;
mod tables;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub use bundle::{
    build_report, emit_report, read_bundle, read_bundle_file, write_bundle, DiscrepancyCounts, HorizonMatrix,
    ReportBundle, ReportOptions, BUNDLE_SCHEMA_VERSION, DEFAULT_HORIZON_MONTHS,
};
pub use cohort_csv::{parse_cohort_csv, read_cohort, write_cohort, write_cohort_csv, write_truth, write_truth_csv};
pub use model_file::{
    read_model, read_model_file, write_model, write_model_file, ModelDocument, RateEntry, MODEL_SCHEMA_VERSION,
};
pub use tables::{read_results, read_results_csv, write_labels, write_labels_csv, write_results, write_results_csv};

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::from(e).context(format!("opening {}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::from(e).context(format!("creating {}", path.display())))
}

fn csv_writer<W: Write>(writer: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer)
}
