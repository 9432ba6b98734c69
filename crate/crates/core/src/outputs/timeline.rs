use serde::{Deserialize, Serialize};

use super::labeling::{LabeledCohort, LabeledSubject};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeAxis {
    #[default]
    Years,
    Months,
}

impl AgeAxis {
    fn scale(self) -> f64 {
        match self {
            AgeAxis::Years => 1.0,
            AgeAxis::Months => 12.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub state: usize,
    pub start: f64,
    pub end: f64,
}

impl Band {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SubjectTimeline {
    pub subject_id: String,
    pub bands: Vec<Band>,
}

/// Runs of equal Viterbi labels, split at the midpoint between the last
/// visit of one run and the first visit of the next. Ages are in years.
pub fn subject_bands(subject: &LabeledSubject) -> Vec<Band> {
    let visits = &subject.visits;
    let mut bands: Vec<Band> = Vec::new();
    for (i, v) in visits.iter().enumerate() {
        match bands.last_mut() {
            Some(band) if band.state == v.viterbi_state => band.end = v.age,
            Some(band) => {
                let cut = (visits[i - 1].age + v.age) / 2.0;
                band.end = cut;
                bands.push(Band {
                    state: v.viterbi_state,
                    start: cut,
                    end: v.age,
                });
            }
            None => bands.push(Band {
                state: v.viterbi_state,
                start: v.age,
                end: v.age,
            }),
        }
    }
    bands
}

pub fn timeline_bands(labeled: &LabeledCohort, axis: AgeAxis) -> Vec<SubjectTimeline> {
    let scale = axis.scale();
    labeled
        .subjects
        .iter()
        .map(|s| SubjectTimeline {
            subject_id: s.subject_id.clone(),
            bands: subject_bands(s)
                .into_iter()
                .map(|b| Band {
                    state: b.state,
                    start: b.start * scale,
                    end: b.end * scale,
                })
                .collect(),
        })
        .collect()
}
