use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One binary biomarker reading at a visit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reading {
    Positive,
    Negative,
    Missing,
}

impl Reading {
    pub fn is_missing(self) -> bool {
        self == Reading::Missing
    }
}

/// A per-visit value of a column that is carried along but never modeled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AuxValue {
    Missing,
    Number(f64),
    Text(String),
}

impl AuxValue {
    pub fn parse(cell: &str) -> Self {
        let cell = cell.trim();
        if cell.is_empty() {
            AuxValue::Missing
        } else if let Some(x) = cell.parse::<f64>().ok().filter(|x| x.is_finite()) {
            AuxValue::Number(x)
        } else {
            AuxValue::Text(cell.to_string())
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            AuxValue::Number(x) => Some(*x),
            _ => None,
        }
    }
}

impl fmt::Display for AuxValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AuxValue::Missing => Ok(()),
            AuxValue::Number(x) => write!(f, "{x}"),
            AuxValue::Text(s) => f.write_str(s),
        }
    }
}

/// Time-ordered visits of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitSequence {
    subject_id: String,
    times: Vec<f64>,
    observations: Vec<Vec<Reading>>,
    auxiliary: Vec<Vec<AuxValue>>,
}

impl VisitSequence {
    pub fn new(
        subject_id: impl Into<String>,
        times: Vec<f64>,
        observations: Vec<Vec<Reading>>,
        auxiliary: Vec<Vec<AuxValue>>,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        if times.is_empty() {
            return Err(Error::invalid(format!("subject `{subject_id}` has no visits")));
        }
        if observations.len() != times.len() {
            return Err(Error::invalid(format!(
                "subject `{subject_id}`: {} times but {} observation rows",
                times.len(),
                observations.len()
            )));
        }
        if !auxiliary.is_empty() && auxiliary.len() != times.len() {
            return Err(Error::invalid(format!(
                "subject `{subject_id}`: auxiliary rows do not match visits"
            )));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid(format!("subject `{subject_id}` has non-finite ages")));
        }
        if let Some(w) = times.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "subject `{subject_id}`: ages must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        let m = observations[0].len();
        if observations.iter().any(|o| o.len() != m) {
            return Err(Error::invalid(format!(
                "subject `{subject_id}`: observation vectors differ in length"
            )));
        }
        let auxiliary = if auxiliary.is_empty() {
            vec![Vec::new(); times.len()]
        } else {
            auxiliary
        };
        Ok(Self {
            subject_id,
            times,
            observations,
            auxiliary,
        })
    }

    /// Sequence without auxiliary columns.
    pub fn from_observations(
        subject_id: impl Into<String>,
        times: Vec<f64>,
        observations: Vec<Vec<Reading>>,
    ) -> Result<Self> {
        Self::new(subject_id, times, observations, Vec::new())
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn observations(&self) -> &[Vec<Reading>] {
        &self.observations
    }

    pub fn auxiliary(&self) -> &[Vec<AuxValue>] {
        &self.auxiliary
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn num_markers(&self) -> usize {
        self.observations[0].len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    marker_names: Vec<String>,
    aux_names: Vec<String>,
    subjects: Vec<VisitSequence>,
}

impl Cohort {
    pub fn new(
        marker_names: Vec<String>,
        aux_names: Vec<String>,
        subjects: Vec<VisitSequence>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &subjects {
            if !seen.insert(s.subject_id()) {
                return Err(Error::invalid(format!("duplicate subject id `{}`", s.subject_id())));
            }
            if s.num_markers() != marker_names.len() {
                return Err(Error::invalid(format!(
                    "subject `{}` has {} markers, cohort has {}",
                    s.subject_id(),
                    s.num_markers(),
                    marker_names.len()
                )));
            }
            if s.auxiliary().iter().any(|row| row.len() != aux_names.len()) {
                return Err(Error::invalid(format!(
                    "subject `{}` auxiliary width does not match the schema",
                    s.subject_id()
                )));
            }
        }
        Ok(Self {
            marker_names,
            aux_names,
            subjects,
        })
    }

    pub fn empty(marker_names: Vec<String>) -> Self {
        Self {
            marker_names,
            aux_names: Vec::new(),
            subjects: Vec::new(),
        }
    }

    pub fn marker_names(&self) -> &[String] {
        &self.marker_names
    }

    pub fn aux_names(&self) -> &[String] {
        &self.aux_names
    }

    pub fn subjects(&self) -> &[VisitSequence] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn visit_count(&self) -> usize {
        self.subjects.iter().map(VisitSequence::len).sum()
    }

    pub fn get(&self, subject_id: &str) -> Option<&VisitSequence> {
        self.subjects.iter().find(|s| s.subject_id() == subject_id)
    }

    /// Sub-cohort of the given subject indices, in the given order.
    /// Indices may repeat, in which case ids are suffixed to stay unique.
    pub fn select(&self, indices: &[usize]) -> Cohort {
        let mut counts = std::collections::HashMap::new();
        let subjects = indices
            .iter()
            .map(|&i| {
                let mut s = self.subjects[i].clone();
                let n = counts.entry(i).or_insert(0usize);
                if *n > 0 {
                    s.subject_id = format!("{}#{}", s.subject_id, n);
                }
                *n += 1;
                s
            })
            .collect();
        Cohort {
            marker_names: self.marker_names.clone(),
            aux_names: self.aux_names.clone(),
            subjects,
        }
    }
}
