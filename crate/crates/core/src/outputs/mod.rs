//! Analytics computed from a fitted model and a labeled cohort.

mod dwell;
mod labeling;
mod query;
mod segments;
mod summary;
mod timeline;

pub use dwell::{dwell_times, horizon_matrix, DwellTime};
pub use labeling::{label_cohort, LabeledCohort, LabeledSubject, LabeledVisit};
pub use query::{filter_subjects, subgroup_filter, Comparison, Query};
pub use segments::{
    segment_boundaries, segment_trajectories, EntryAges, TrajectorySegment, SEGMENT_RATE_THRESHOLD,
    SEGMENT_START_FRACTION,
};
pub use summary::{
    state_summary, AuxSummary, ColumnInfo, ColumnKind, DerivedColumn, StateStats, StateSummary, SummaryOptions,
    Transform,
};
pub use timeline::{subject_bands, timeline_bands, AgeAxis, Band, SubjectTimeline};
