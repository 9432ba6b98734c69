use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{forward_filter, viterbi, AuxValue, ChainModel, Cohort};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LabeledVisit {
    pub age: f64,
    pub viterbi_state: usize,
    pub filtered: Vec<f64>,
    pub filtered_argmax: usize,
    /// Viterbi and forward-only assignments disagree.
    pub discrepancy: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aux: Vec<AuxValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LabeledSubject {
    pub subject_id: String,
    pub visits: Vec<LabeledVisit>,
}

impl LabeledSubject {
    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.visits.iter().map(|v| v.viterbi_state)
    }

    pub fn first_state(&self) -> usize {
        self.visits[0].viterbi_state
    }

    pub fn last_state(&self) -> usize {
        self.visits[self.visits.len() - 1].viterbi_state
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LabeledCohort {
    pub num_states: usize,
    pub aux_names: Vec<String>,
    pub subjects: Vec<LabeledSubject>,
}

impl LabeledCohort {
    pub fn discrepancy_count(&self) -> usize {
        self.subjects
            .iter()
            .flat_map(|s| &s.visits)
            .filter(|v| v.discrepancy)
            .count()
    }

    pub fn visit_count(&self) -> usize {
        self.subjects.iter().map(|s| s.visits.len()).sum()
    }

    /// Subjects with the given ids, in cohort order.
    pub fn restrict(&self, ids: &[String]) -> LabeledCohort {
        let keep: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
        LabeledCohort {
            num_states: self.num_states,
            aux_names: self.aux_names.clone(),
            subjects: self
                .subjects
                .iter()
                .filter(|s| keep.contains(s.subject_id.as_str()))
                .cloned()
                .collect(),
        }
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Viterbi state and forward-filtered posterior for every visit. The model
/// is used as given; nothing is refitted.
pub fn label_cohort(model: &ChainModel, cohort: &Cohort) -> Result<LabeledCohort> {
    if cohort.marker_names() != model.marker_names() {
        return Err(Error::invalid(format!(
            "cohort markers {:?} do not match model markers {:?}",
            cohort.marker_names(),
            model.marker_names()
        )));
    }
    let subjects = cohort
        .subjects()
        .iter()
        .map(|seq| {
            let path = viterbi(model, seq)?;
            let filter = forward_filter(model, seq)?;
            let visits = seq
                .times()
                .iter()
                .zip(path.states)
                .zip(filter.filtered)
                .zip(seq.auxiliary())
                .map(|(((&age, state), filtered), aux)| {
                    let filtered_argmax = argmax(&filtered);
                    LabeledVisit {
                        age,
                        viterbi_state: state,
                        filtered_argmax,
                        discrepancy: state != filtered_argmax,
                        filtered,
                        aux: aux.clone(),
                    }
                })
                .collect();
            Ok(LabeledSubject {
                subject_id: seq.subject_id().to_string(),
                visits,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledCohort {
        num_states: model.num_states(),
        aux_names: cohort.aux_names().to_vec(),
        subjects,
    })
}
