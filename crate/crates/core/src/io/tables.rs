use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hmm::MaskPreset;
use crate::outputs::LabeledCohort;
use crate::selection::ExperimentResult;

use super::{create, csv_writer, open};

/// `subject_id,age_years,viterbi_state,filtered_argmax,discrepancy,p_state_0..`
pub fn write_labels<W: Write>(writer: W, labeled: &LabeledCohort) -> Result<()> {
    let mut w = csv_writer(writer);
    let mut header: Vec<String> = ["subject_id", "age_years", "viterbi_state", "filtered_argmax", "discrepancy"]
        .map(String::from)
        .to_vec();
    header.extend((0..labeled.num_states).map(|s| format!("p_state_{s}")));
    w.write_record(&header)?;
    for subject in &labeled.subjects {
        for v in &subject.visits {
            let mut row = vec![
                subject.subject_id.clone(),
                v.age.to_string(),
                v.viterbi_state.to_string(),
                v.filtered_argmax.to_string(),
                u8::from(v.discrepancy).to_string(),
            ];
            row.extend(v.filtered.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_labels_csv(path: impl AsRef<Path>, labeled: &LabeledCohort) -> Result<()> {
    write_labels(create(path.as_ref())?, labeled)
}

#[derive(Debug, Serialize, Deserialize)]
struct ResultRow {
    split_id: usize,
    k: usize,
    init_index: usize,
    constraint: MaskPreset,
    train_ll: Option<f64>,
    validation_ll: Option<f64>,
    validation_bic: Option<f64>,
    param_count: usize,
    validation_visits: usize,
    iterations: usize,
    converged: bool,
    error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    wall_time_ms: Option<f64>,
}

/// One row per grid cell. Wall time is only written when `with_timing` is
/// set, so the default output is reproducible byte for byte.
pub fn write_results<W: Write>(writer: W, results: &[ExperimentResult], with_timing: bool) -> Result<()> {
    let mut w = csv_writer(writer);
    for r in results {
        w.serialize(ResultRow {
            split_id: r.split_id,
            k: r.k,
            init_index: r.init_index,
            constraint: r.constraint,
            train_ll: r.train_ll,
            validation_ll: r.validation_ll,
            validation_bic: r.validation_bic,
            param_count: r.param_count,
            validation_visits: r.validation_visits,
            iterations: r.iterations,
            converged: r.converged,
            error: r.error.clone(),
            wall_time_ms: with_timing.then_some(r.wall_time_ms),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results_csv(path: impl AsRef<Path>, results: &[ExperimentResult], with_timing: bool) -> Result<()> {
    write_results(create(path.as_ref())?, results, with_timing)
}

pub fn read_results<R: Read>(reader: R) -> Result<Vec<ExperimentResult>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize::<ResultRow>()
        .map(|row| {
            let r = row?;
            Ok(ExperimentResult {
                split_id: r.split_id,
                k: r.k,
                init_index: r.init_index,
                constraint: r.constraint,
                train_ll: r.train_ll,
                validation_ll: r.validation_ll,
                validation_bic: r.validation_bic,
                param_count: r.param_count,
                validation_visits: r.validation_visits,
                iterations: r.iterations,
                converged: r.converged,
                wall_time_ms: r.wall_time_ms.unwrap_or(0.0),
                error: r.error,
            })
        })
        .collect()
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<ExperimentResult>> {
    let path = path.as_ref();
    read_results(open(path)?).map_err(|e| e.context(path.display().to_string()))
}
