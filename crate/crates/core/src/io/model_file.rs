use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{ChainModel, MaskPreset, TransitionMask};

use super::{create, open};

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
}

/// Serialized form of a [`ChainModel`]. `mask` names a preset, or is
/// `"custom"` when the rate entries themselves define the allowed edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ModelDocument {
    pub schema_version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub marker_names: Vec<String>,
    pub pi: Vec<f64>,
    pub mask: String,
    pub rates: Vec<RateEntry>,
    pub emissions: Vec<Vec<f64>>,
}

impl ModelDocument {
    pub fn from_model(model: &ChainModel) -> Self {
        let mask = model.mask();
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            k: model.num_states(),
            marker_names: model.marker_names().to_vec(),
            pi: model.initial().to_vec(),
            mask: mask.preset_kind().map_or("custom".to_string(), |p| p.to_string()),
            rates: mask
                .edges()
                .into_iter()
                .map(|(from, to)| RateEntry {
                    from,
                    to,
                    rate: model.rate(from, to),
                })
                .collect(),
            emissions: model.emissions().to_vec(),
        }
    }

    pub fn to_model(&self) -> Result<ChainModel> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Schema {
                found: self.schema_version,
                expected: MODEL_SCHEMA_VERSION,
            });
        }
        let k = self.k;
        if k == 0 {
            return Err(Error::Invariant("K must be at least 1".into()));
        }
        if self.pi.len() != k {
            return Err(Error::Invariant(format!("pi has {} entries, K = {k}", self.pi.len())));
        }
        let mut rates = DMatrix::zeros(k, k);
        let mut given = vec![vec![false; k]; k];
        for e in &self.rates {
            if e.from >= k || e.to >= k || e.from == e.to {
                return Err(Error::Invariant(format!("invalid rate edge {}->{}", e.from, e.to)));
            }
            if given[e.from][e.to] {
                return Err(Error::Invariant(format!("duplicate rate edge {}->{}", e.from, e.to)));
            }
            given[e.from][e.to] = true;
            rates[(e.from, e.to)] = e.rate;
        }
        let mask = if self.mask == "custom" {
            TransitionMask::custom(given)?
        } else {
            let mask = TransitionMask::preset(self.mask.parse::<MaskPreset>()?, k);
            let expected = mask.edge_count();
            if self.rates.len() != expected || self.rates.iter().any(|e| !mask.allows(e.from, e.to)) {
                return Err(Error::Invariant(format!(
                    "a {k}-state {} mask needs exactly {expected} rate entries on its allowed edges, found {}",
                    self.mask,
                    self.rates.len()
                )));
            }
            mask
        };
        if self.emissions.len() != k || self.emissions.iter().any(|row| row.len() != self.marker_names.len()) {
            return Err(Error::Invariant("emissions must be K rows of one probability per marker".into()));
        }
        if self.emissions.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Invariant("emission probabilities must lie in [0, 1]".into()));
        }
        ChainModel::new(self.marker_names.clone(), self.pi.clone(), mask, rates, self.emissions.clone())
    }
}

pub fn write_model<W: Write>(mut writer: W, model: &ChainModel) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, &ModelDocument::from_model(model))?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(reader: R) -> Result<ChainModel> {
    let doc: ModelDocument = serde_json::from_reader(reader)?;
    doc.to_model()
}

pub fn write_model_file(path: impl AsRef<Path>, model: &ChainModel) -> Result<()> {
    write_model(create(path.as_ref())?, model)
}

pub fn read_model_file(path: impl AsRef<Path>) -> Result<ChainModel> {
    let path = path.as_ref();
    read_model(open(path)?).map_err(|e| e.context(path.display().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ChainModel {
        ChainModel::chain(
            vec!["a".into(), "b".into()],
            vec![0.7, 0.3],
            &[0.1 + 0.2],
            vec![vec![0.1, 1.0 / 3.0], vec![0.9, 0.8]],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let mut buf = Vec::new();
        write_model(&mut buf, &model()).unwrap();
        let back = read_model(buf.as_slice()).unwrap();
        assert_eq!(back.max_param_diff(&model()), Some(0.0));
        assert_eq!(back, model());
    }

    #[test]
    fn rejects_schema_and_invariant_violations() {
        let mut doc = ModelDocument::from_model(&model());
        doc.schema_version = 2;
        assert!(matches!(doc.to_model(), Err(Error::Schema { found: 2, .. })));

        let mut doc = ModelDocument::from_model(&model());
        doc.pi = vec![0.7, 0.4];
        assert!(matches!(doc.to_model(), Err(Error::Invariant(_))));

        let mut doc = ModelDocument::from_model(&model());
        doc.rates.push(RateEntry { from: 1, to: 0, rate: 0.1 });
        assert!(matches!(doc.to_model(), Err(Error::Invariant(_))));
    }
}
