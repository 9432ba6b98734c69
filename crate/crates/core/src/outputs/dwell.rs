use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::ChainModel;
use crate::linalg::StochasticMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DwellTime {
    pub state: usize,
    pub exit_rate: f64,
    /// Mean sojourn in years; `None` for a sink.
    pub mean_years: Option<f64>,
    pub sink: bool,
}

/// Mean sojourn `1 / q_i` per state.
pub fn dwell_times(model: &ChainModel) -> Vec<DwellTime> {
    (0..model.num_states())
        .map(|state| {
            let exit_rate = model.exit_rate(state);
            let sink = !(exit_rate > 0.0);
            DwellTime {
                state,
                exit_rate,
                mean_years: (!sink).then(|| 1.0 / exit_rate),
                sink,
            }
        })
        .collect()
}

/// Transition probabilities over `months`.
pub fn horizon_matrix(model: &ChainModel, months: f64) -> Result<StochasticMatrix> {
    if !(months >= 0.0) || !months.is_finite() {
        return Err(Error::invalid(format!("horizon must be >= 0 months, got {months}")));
    }
    model.generator().transition(months / 12.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(q: f64) -> ChainModel {
        ChainModel::chain(vec!["m".into()], vec![1.0, 0.0], &[q], vec![vec![0.1], vec![0.9]]).unwrap()
    }

    #[test]
    fn dwell_is_reciprocal_rate() {
        let d = dwell_times(&two_state(0.5));
        assert_eq!(d[0].mean_years, Some(2.0));
        assert!(d[1].sink);
        assert_eq!(d[1].mean_years, None);
    }

    #[test]
    fn two_year_horizon_closed_form() {
        let p = horizon_matrix(&two_state(0.5), 24.0).unwrap();
        assert!((p.get(0, 0) - (-1.0f64).exp()).abs() < 1e-12);
        assert!((p.get(0, 1) - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert_eq!(horizon_matrix(&two_state(0.5), 0.0).unwrap().get(0, 1), 0.0);
        assert!(horizon_matrix(&two_state(0.5), -1.0).is_err());
    }
}
