use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::hmm::{AuxValue, Cohort, Reading, VisitSequence};

use super::{csv_writer, open, create};

const ID_COLUMN: &str = "subject_id";
const AGE_COLUMN: &str = "age_years";

struct Pending {
    id: String,
    times: Vec<f64>,
    observations: Vec<Vec<Reading>>,
    auxiliary: Vec<Vec<AuxValue>>,
}

fn parse_reading(cell: &str, line: usize, column: &str) -> Result<Reading> {
    match cell.trim() {
        "1" => Ok(Reading::Positive),
        "0" => Ok(Reading::Negative),
        "" => Ok(Reading::Missing),
        other => Err(Error::parse(
            line,
            format!("marker `{column}` must be 1, 0 or empty, found `{other}`"),
        )),
    }
}

/// Column layout resolved from the header: marker and auxiliary column
/// indices in file order.
fn resolve_header(header: &csv::StringRecord, markers: Option<&[String]>) -> Result<(Vec<usize>, Vec<usize>)> {
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.len() < 2 || names[0] != ID_COLUMN || names[1] != AGE_COLUMN {
        return Err(Error::parse(
            1,
            format!("header must start with `{ID_COLUMN},{AGE_COLUMN}`, found `{}`", names.join(",")),
        ));
    }
    let mut seen = HashSet::new();
    for name in &names {
        if name.is_empty() {
            return Err(Error::parse(1, "empty column name in header"));
        }
        if !seen.insert(*name) {
            return Err(Error::parse(1, format!("duplicate column `{name}`")));
        }
    }
    let rest: Vec<usize> = (2..names.len()).collect();
    match markers {
        None => Ok((rest, Vec::new())),
        Some(expected) => {
            let mut marker_cols = Vec::with_capacity(expected.len());
            for m in expected {
                let col = names
                    .iter()
                    .position(|n| n == m)
                    .filter(|&c| c >= 2)
                    .ok_or_else(|| Error::parse(1, format!("missing marker column `{m}`")))?;
                marker_cols.push(col);
            }
            let aux = rest.into_iter().filter(|c| !marker_cols.contains(c)).collect();
            Ok((marker_cols, aux))
        }
    }
}

/// Reads a cohort. With `markers`, those columns are the modeled markers (in
/// that order) and every other column is auxiliary; without, every column
/// after the age is a marker.
pub fn read_cohort<R: Read>(reader: R, markers: Option<&[String]>) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let (marker_cols, aux_cols) = resolve_header(&header, markers)?;
    let name = |c: usize| header[c].trim().to_string();
    let marker_names: Vec<String> = marker_cols.iter().map(|&c| name(c)).collect();
    let aux_names: Vec<String> = aux_cols.iter().map(|&c| name(c)).collect();

    let mut subjects = Vec::new();
    let mut finished: HashSet<String> = HashSet::new();
    let mut current: Option<Pending> = None;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(Error::parse(
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let id = record[0].trim();
        if id.is_empty() {
            return Err(Error::parse(line, "empty subject_id"));
        }
        let age: f64 = record[1]
            .trim()
            .parse()
            .ok()
            .filter(|a: &f64| a.is_finite())
            .ok_or_else(|| Error::parse(line, format!("invalid age `{}`", &record[1])))?;
        let readings = marker_cols
            .iter()
            .map(|&c| parse_reading(&record[c], line, &header[c]))
            .collect::<Result<Vec<_>>>()?;
        let aux: Vec<AuxValue> = aux_cols.iter().map(|&c| AuxValue::parse(&record[c])).collect();

        if current.as_ref().is_some_and(|p| p.id != id) {
            let done = current.take().expect("checked above");
            finished.insert(done.id.clone());
            subjects.push(done);
        }
        if finished.contains(id) {
            return Err(Error::parse(line, format!("rows of subject `{id}` are not contiguous")));
        }
        let pending = current.get_or_insert_with(|| Pending {
            id: id.to_string(),
            times: Vec::new(),
            observations: Vec::new(),
            auxiliary: Vec::new(),
        });
        if let Some(&prev) = pending.times.last() {
            if age <= prev {
                return Err(Error::parse(
                    line,
                    format!("ages of subject `{id}` must be strictly increasing ({prev} then {age})"),
                ));
            }
        }
        pending.times.push(age);
        pending.observations.push(readings);
        pending.auxiliary.push(aux);
    }
    subjects.extend(current);

    let sequences = subjects
        .into_iter()
        .map(|p| VisitSequence::new(p.id, p.times, p.observations, p.auxiliary))
        .collect::<Result<Vec<_>>>()?;
    Cohort::new(marker_names, aux_names, sequences)
}

pub fn parse_cohort_csv(path: impl AsRef<Path>, markers: Option<&[String]>) -> Result<Cohort> {
    let path = path.as_ref();
    read_cohort(open(path)?, markers).map_err(|e| e.context(path.display().to_string()))
}

fn reading_cell(r: Reading) -> &'static str {
    match r {
        Reading::Positive => "1",
        Reading::Negative => "0",
        Reading::Missing => "",
    }
}

pub fn write_cohort<W: Write>(writer: W, cohort: &Cohort) -> Result<()> {
    let mut w = csv_writer(writer);
    let mut header = vec![ID_COLUMN.to_string(), AGE_COLUMN.to_string()];
    header.extend(cohort.marker_names().iter().cloned());
    header.extend(cohort.aux_names().iter().cloned());
    w.write_record(&header)?;
    for seq in cohort.subjects() {
        for ((age, obs), aux) in seq.times().iter().zip(seq.observations()).zip(seq.auxiliary()) {
            let mut row = vec![seq.subject_id().to_string(), age.to_string()];
            row.extend(obs.iter().map(|&r| reading_cell(r).to_string()));
            row.extend(aux.iter().map(AuxValue::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_cohort_csv(path: impl AsRef<Path>, cohort: &Cohort) -> Result<()> {
    write_cohort(create(path.as_ref())?, cohort)
}

/// Hidden states of a simulated cohort: `subject_id,age_years,true_state`.
pub fn write_truth<W: Write>(writer: W, cohort: &Cohort, truth: &[Vec<usize>]) -> Result<()> {
    if truth.len() != cohort.len() {
        return Err(Error::invalid("truth and cohort differ in subject count"));
    }
    let mut w = csv_writer(writer);
    w.write_record([ID_COLUMN, AGE_COLUMN, "true_state"])?;
    for (seq, states) in cohort.subjects().iter().zip(truth) {
        if states.len() != seq.len() {
            return Err(Error::invalid(format!("truth length mismatch for `{}`", seq.subject_id())));
        }
        for (age, s) in seq.times().iter().zip(states) {
            w.write_record([seq.subject_id().to_string(), age.to_string(), s.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_truth_csv(path: impl AsRef<Path>, cohort: &Cohort, truth: &[Vec<usize>]) -> Result<()> {
    write_truth(create(path.as_ref())?, cohort, truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Cohort> {
        read_cohort(text.as_bytes(), None)
    }

    fn line_of(err: Error) -> usize {
        match err {
            Error::Parse { line, .. } => line,
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn reads_one_subject_two_visits() {
        let c = parse("subject_id,age_years,GADA,IAA\nA,1.0,1,\nA,2.0,0,1\n").unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.visit_count(), 2);
        assert_eq!(c.subjects()[0].observations()[0], vec![Reading::Positive, Reading::Missing]);
    }

    #[test]
    fn rejects_bad_input_with_line_numbers() {
        assert_eq!(line_of(parse("subject_id,age_years,m\nA,2.0,1\nA,1.0,1\n").unwrap_err()), 3);
        assert_eq!(line_of(parse("subject_id,age_years,m\nA,1.0,1\nA,2.0,x\n").unwrap_err()), 3);
        assert_eq!(line_of(parse("id,age,m\nA,1.0,1\n").unwrap_err()), 1);
        assert_eq!(line_of(parse("subject_id,age_years,m\nA,1,1\nB,1,1\nA,2,1\n").unwrap_err()), 4);
        assert_eq!(line_of(parse("subject_id,age_years,m\nA,1,1,0\n").unwrap_err()), 2);
    }

    #[test]
    fn splits_markers_and_auxiliaries() {
        let text = "subject_id,age_years,IAA,site,GADA\nA,1,1,north,0\nA,2,,south,1\n";
        let markers = vec!["GADA".to_string(), "IAA".to_string()];
        let c = read_cohort(text.as_bytes(), Some(&markers)).unwrap();
        assert_eq!(c.marker_names(), &markers[..]);
        assert_eq!(c.aux_names(), &["site".to_string()]);
        assert_eq!(c.subjects()[0].observations()[1], vec![Reading::Positive, Reading::Missing]);
        assert!(read_cohort(text.as_bytes(), Some(&["IA2A".to_string()])).is_err());
    }
}
