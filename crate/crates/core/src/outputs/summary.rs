use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{AuxValue, ChainModel};

use super::labeling::LabeledCohort;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    /// All observed values are 0 or 1.
    Binary,
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Transform {
    /// Per-subject maximum over visits so far.
    RunningMax,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedColumn {
    pub name: String,
    pub source: String,
    pub transform: Transform,
}

impl DerivedColumn {
    pub fn running_max(name: impl Into<String>, source: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            source: source.into(),
            transform: Transform::RunningMax,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryOptions {
    /// Auxiliary columns to summarize; all when `None`.
    pub columns: Option<Vec<String>>,
    pub derived: Vec<DerivedColumn>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AuxSummary {
    pub column: String,
    /// Visits in the state with a value in this column.
    pub observed: usize,
    /// Mean for numeric columns, positive rate for binary ones.
    pub value: Option<f64>,
    /// Category frequencies among observed visits.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub categories: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StateStats {
    pub state: usize,
    pub visits: usize,
    pub mean_age: Option<f64>,
    pub emissions: Vec<f64>,
    pub aux: Vec<AuxSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StateSummary {
    pub markers: Vec<String>,
    pub columns: Vec<ColumnInfo>,
    pub total_visits: usize,
    pub states: Vec<StateStats>,
}

fn column_kind(values: &[&AuxValue]) -> ColumnKind {
    let observed: Vec<&AuxValue> = values.iter().copied().filter(|v| **v != AuxValue::Missing).collect();
    if observed.iter().any(|v| matches!(v, AuxValue::Text(_))) {
        ColumnKind::Categorical
    } else if observed.iter().all(|v| matches!(v.as_number(), Some(x) if x == 0.0 || x == 1.0)) {
        ColumnKind::Binary
    } else {
        ColumnKind::Numeric
    }
}

/// Column values per subject and visit: either a raw auxiliary column or a
/// derived one.
fn column_values(labeled: &LabeledCohort, index: usize, transform: Option<Transform>) -> Vec<Vec<AuxValue>> {
    labeled
        .subjects
        .iter()
        .map(|s| {
            let raw = s.visits.iter().map(|v| v.aux.get(index).cloned().unwrap_or(AuxValue::Missing));
            match transform {
                None => raw.collect(),
                Some(Transform::RunningMax) => {
                    let mut best: Option<f64> = None;
                    raw.map(|v| {
                        if let Some(x) = v.as_number() {
                            best = Some(best.map_or(x, |b| b.max(x)));
                        }
                        best.map_or(AuxValue::Missing, AuxValue::Number)
                    })
                    .collect()
                }
            }
        })
        .collect()
}

/// Per-state emissions, visit counts, mean age and auxiliary aggregates
/// over the visits labeled with each state.
pub fn state_summary(model: &ChainModel, labeled: &LabeledCohort, options: &SummaryOptions) -> Result<StateSummary> {
    let k = model.num_states();
    if labeled.num_states != k {
        return Err(Error::invalid("labeled cohort and model disagree on K"));
    }
    let lookup = |name: &str| {
        labeled
            .aux_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::invalid(format!("unknown auxiliary column `{name}`")))
    };
    let selected: Vec<String> = match &options.columns {
        Some(cols) => cols.clone(),
        None => labeled.aux_names.clone(),
    };
    let mut specs: Vec<(String, Vec<Vec<AuxValue>>)> = Vec::new();
    for name in &selected {
        specs.push((name.clone(), column_values(labeled, lookup(name)?, None)));
    }
    for d in &options.derived {
        specs.push((d.name.clone(), column_values(labeled, lookup(&d.source)?, Some(d.transform))));
    }

    let columns: Vec<ColumnInfo> = specs
        .iter()
        .map(|(name, values)| ColumnInfo {
            name: name.clone(),
            kind: column_kind(&values.iter().flatten().collect::<Vec<_>>()),
        })
        .collect();

    let mut visits = vec![0usize; k];
    let mut age_sum = vec![0.0; k];
    // per state, per column: the observed values
    let mut bucket: Vec<Vec<Vec<&AuxValue>>> = vec![vec![Vec::new(); specs.len()]; k];
    for (si, subject) in labeled.subjects.iter().enumerate() {
        for (vi, visit) in subject.visits.iter().enumerate() {
            let s = visit.viterbi_state;
            visits[s] += 1;
            age_sum[s] += visit.age;
            for (c, (_, values)) in specs.iter().enumerate() {
                let v = &values[si][vi];
                if *v != AuxValue::Missing {
                    bucket[s][c].push(v);
                }
            }
        }
    }

    let states = (0..k)
        .map(|s| StateStats {
            state: s,
            visits: visits[s],
            mean_age: (visits[s] > 0).then(|| age_sum[s] / visits[s] as f64),
            emissions: model.emissions()[s].clone(),
            aux: columns
                .iter()
                .zip(&bucket[s])
                .map(|(info, observed)| summarize(info, observed))
                .collect(),
        })
        .collect();

    Ok(StateSummary {
        markers: model.marker_names().to_vec(),
        columns,
        total_visits: labeled.visit_count(),
        states,
    })
}

fn summarize(info: &ColumnInfo, observed: &[&AuxValue]) -> AuxSummary {
    let n = observed.len();
    let (value, categories) = if n == 0 {
        (None, None)
    } else if info.kind == ColumnKind::Categorical {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for v in observed {
            *counts.entry(v.to_string()).or_default() += 1;
        }
        let freq = counts.into_iter().map(|(c, m)| (c, m as f64 / n as f64)).collect();
        (None, Some(freq))
    } else {
        let sum: f64 = observed.iter().filter_map(|v| v.as_number()).sum();
        (Some(sum / n as f64), None)
    };
    AuxSummary {
        column: info.name.clone(),
        observed: n,
        value,
        categories,
    }
}
