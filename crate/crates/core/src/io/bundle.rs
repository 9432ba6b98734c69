use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{ChainModel, Cohort};
use crate::outputs::{
    dwell_times, horizon_matrix, label_cohort, segment_trajectories, state_summary, timeline_bands, AgeAxis,
    DwellTime, LabeledCohort, StateSummary, SubjectTimeline, SummaryOptions, TrajectorySegment,
};
use crate::selection::SelectionReport;

use super::model_file::ModelDocument;
use super::{create, open};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_HORIZON_MONTHS: u32 = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HorizonMatrix {
    pub months: u32,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DiscrepancyCounts {
    pub visits: usize,
    pub discrepant: usize,
    /// Discrepant visits by Viterbi state.
    pub by_state: Vec<usize>,
}

impl DiscrepancyCounts {
    pub fn of(labeled: &LabeledCohort) -> Self {
        let mut by_state = vec![0; labeled.num_states];
        for v in labeled.subjects.iter().flat_map(|s| &s.visits) {
            if v.discrepancy {
                by_state[v.viterbi_state] += 1;
            }
        }
        Self {
            visits: labeled.visit_count(),
            discrepant: by_state.iter().sum(),
            by_state,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReportOptions {
    pub horizons: Vec<u32>,
    pub summary: SummaryOptions,
    pub selection: Option<SelectionReport>,
    pub age_axis: AgeAxis,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            horizons: vec![DEFAULT_HORIZON_MONTHS],
            summary: SummaryOptions::default(),
            selection: None,
            age_axis: AgeAxis::Years,
        }
    }
}

/// Everything the explorer needs, in one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReportBundle {
    pub schema_version: u32,
    pub model: ModelDocument,
    pub selection: Option<SelectionReport>,
    pub dwell: Vec<DwellTime>,
    pub horizons: Vec<HorizonMatrix>,
    pub summary_options: SummaryOptions,
    pub state_summary: StateSummary,
    /// `None` when the model is not a chain.
    pub segments: Option<Vec<TrajectorySegment>>,
    pub age_axis: AgeAxis,
    pub timelines: Vec<SubjectTimeline>,
    pub discrepancies: DiscrepancyCounts,
    pub labeled: LabeledCohort,
}

impl ReportBundle {
    pub fn chain_model(&self) -> Result<ChainModel> {
        self.model.to_model()
    }

    pub fn horizon(&self, months: u32) -> Option<&HorizonMatrix> {
        self.horizons.iter().find(|h| h.months == months)
    }
}

/// Labels the cohort with `model` and collects every derived output.
pub fn build_report(model: &ChainModel, cohort: &Cohort, options: &ReportOptions) -> Result<ReportBundle> {
    let labeled = label_cohort(model, cohort).map_err(|e| e.context("labeling cohort"))?;
    let mut months = options.horizons.clone();
    months.sort_unstable();
    months.dedup();
    let horizons = months
        .into_iter()
        .map(|m| {
            Ok(HorizonMatrix {
                months: m,
                matrix: horizon_matrix(model, f64::from(m))?.to_rows(),
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.context("horizon matrices"))?;
    let summary = state_summary(model, &labeled, &options.summary).map_err(|e| e.context("state summary"))?;
    let segments = if model.mask().is_chain() {
        Some(segment_trajectories(model, &labeled).map_err(|e| e.context("segmentation"))?)
    } else {
        None
    };
    Ok(ReportBundle {
        schema_version: BUNDLE_SCHEMA_VERSION,
        model: ModelDocument::from_model(model),
        selection: options.selection.clone(),
        dwell: dwell_times(model),
        horizons,
        summary_options: options.summary.clone(),
        state_summary: summary,
        segments,
        age_axis: options.age_axis,
        timelines: timeline_bands(&labeled, options.age_axis),
        discrepancies: DiscrepancyCounts::of(&labeled),
        labeled,
    })
}

pub fn write_bundle<W: Write>(mut writer: W, bundle: &ReportBundle) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, bundle)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn read_bundle<R: Read>(reader: R) -> Result<ReportBundle> {
    let value: serde_json::Value = serde_json::from_reader(reader)?;
    let found = value.get("schemaVersion").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != BUNDLE_SCHEMA_VERSION {
        return Err(Error::Schema {
            found,
            expected: BUNDLE_SCHEMA_VERSION,
        });
    }
    let bundle: ReportBundle = serde_json::from_value(value)?;
    bundle.chain_model()?;
    Ok(bundle)
}

pub fn read_bundle_file(path: impl AsRef<Path>) -> Result<ReportBundle> {
    let path = path.as_ref();
    read_bundle(open(path)?).map_err(|e| e.context(path.display().to_string()))
}

/// Builds the report and writes it to `path`.
pub fn emit_report(
    model: &ChainModel,
    cohort: &Cohort,
    options: &ReportOptions,
    path: impl AsRef<Path>,
) -> Result<ReportBundle> {
    let bundle = build_report(model, cohort, options)?;
    write_bundle(create(path.as_ref())?, &bundle)?;
    Ok(bundle)
}
