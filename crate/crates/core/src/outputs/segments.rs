use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::ChainModel;

use super::labeling::LabeledCohort;

/// Rates below this (per year) cut the chain.
pub const SEGMENT_RATE_THRESHOLD: f64 = 1e-6;
/// Minimum share of subjects starting in a state for an unused edge to cut the chain.
pub const SEGMENT_START_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EntryAges {
    pub state: usize,
    /// Members whose labels reach the state.
    pub count: usize,
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub median: Option<f64>,
    pub max: Option<f64>,
}

impl EntryAges {
    fn of(state: usize, ages: &mut [f64]) -> Self {
        ages.sort_by(f64::total_cmp);
        let n = ages.len();
        let median = match n {
            0 => None,
            _ if n % 2 == 1 => Some(ages[n / 2]),
            _ => Some((ages[n / 2 - 1] + ages[n / 2]) / 2.0),
        };
        Self {
            state,
            count: n,
            mean: (n > 0).then(|| ages.iter().sum::<f64>() / n as f64),
            min: ages.first().copied(),
            median,
            max: ages.last().copied(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrajectorySegment {
    pub states: Vec<usize>,
    pub members: Vec<String>,
    pub entry_ages: Vec<EntryAges>,
}

impl TrajectorySegment {
    pub fn first_state(&self) -> usize {
        self.states[0]
    }

    pub fn last_state(&self) -> usize {
        self.states[self.states.len() - 1]
    }

    pub fn contains(&self, state: usize) -> bool {
        (self.first_state()..=self.last_state()).contains(&state)
    }
}

/// States `j >= 1` that start a new segment.
pub fn segment_boundaries(model: &ChainModel, labeled: &LabeledCohort) -> Result<Vec<usize>> {
    if !model.mask().is_chain() {
        return Err(Error::invalid("trajectory segmentation requires a chain mask"));
    }
    let k = model.num_states();
    if labeled.num_states != k {
        return Err(Error::invalid("labeled cohort and model disagree on K"));
    }
    // crossings[j]: consecutive label pairs that pass from below j to j or above
    let mut crossings = vec![0usize; k];
    let mut starts = vec![0usize; k];
    for subject in &labeled.subjects {
        if subject.visits.is_empty() {
            continue;
        }
        starts[subject.first_state()] += 1;
        let states: Vec<usize> = subject.states().collect();
        for w in states.windows(2).filter(|w| w[1] > w[0]) {
            for c in &mut crossings[w[0] + 1..=w[1]] {
                *c += 1;
            }
        }
    }
    let n = labeled.subjects.iter().filter(|s| !s.visits.is_empty()).count();
    Ok((1..k)
        .filter(|&j| {
            let rate_cut = model.rate(j - 1, j) < SEGMENT_RATE_THRESHOLD;
            let unused_cut = n > 0
                && crossings[j] == 0
                && starts[j] as f64 >= SEGMENT_START_FRACTION * n as f64;
            rate_cut || unused_cut
        })
        .collect())
}

/// Splits the chain into contiguous runs of states. Each subject belongs
/// to the segment holding its first label.
pub fn segment_trajectories(model: &ChainModel, labeled: &LabeledCohort) -> Result<Vec<TrajectorySegment>> {
    let k = model.num_states();
    let boundaries = segment_boundaries(model, labeled)?;
    let mut starts = vec![0];
    starts.extend(boundaries);
    let ranges: Vec<(usize, usize)> = starts
        .iter()
        .enumerate()
        .map(|(i, &lo)| (lo, starts.get(i + 1).map_or(k - 1, |&next| next - 1)))
        .collect();

    Ok(ranges
        .into_iter()
        .map(|(lo, hi)| {
            let members: Vec<_> = labeled
                .subjects
                .iter()
                .filter(|s| !s.visits.is_empty() && (lo..=hi).contains(&s.first_state()))
                .collect();
            let entry_ages = (lo..=hi)
                .map(|state| {
                    let mut ages: Vec<f64> = members
                        .iter()
                        .filter_map(|s| s.visits.iter().find(|v| v.viterbi_state == state).map(|v| v.age))
                        .collect();
                    EntryAges::of(state, &mut ages)
                })
                .collect();
            TrajectorySegment {
                states: (lo..=hi).collect(),
                members: members.iter().map(|s| s.subject_id.clone()).collect(),
                entry_ages,
            }
        })
        .collect())
}
