use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::GeneratorMatrix;

/// Emission probabilities are kept inside `[EMISSION_FLOOR, 1 - EMISSION_FLOOR]`.
pub const EMISSION_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskPreset {
    /// Every off-diagonal transition allowed.
    Full,
    /// Only transitions to higher-indexed states.
    Forward,
    /// Only `i -> i + 1`.
    Chain,
}

impl MaskPreset {
    pub fn as_str(&self) -> &'static str {
        match self {
            MaskPreset::Full => "full",
            MaskPreset::Forward => "forward",
            MaskPreset::Chain => "chain",
        }
    }
}

impl fmt::Display for MaskPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MaskPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(MaskPreset::Full),
            "forward" => Ok(MaskPreset::Forward),
            "chain" => Ok(MaskPreset::Chain),
            other => Err(Error::invalid(format!(
                "unknown mask `{other}` (expected chain, forward or full)"
            ))),
        }
    }
}

/// Which off-diagonal rates may be non-zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionMask {
    k: usize,
    allowed: Vec<bool>,
    preset: Option<MaskPreset>,
}

impl TransitionMask {
    pub fn preset(preset: MaskPreset, k: usize) -> Self {
        let allowed = (0..k * k)
            .map(|idx| {
                let (i, j) = (idx / k, idx % k);
                match preset {
                    MaskPreset::Full => i != j,
                    MaskPreset::Forward => j > i,
                    MaskPreset::Chain => j == i + 1,
                }
            })
            .collect();
        Self {
            k,
            allowed,
            preset: Some(preset),
        }
    }

    pub fn chain(k: usize) -> Self {
        Self::preset(MaskPreset::Chain, k)
    }

    pub fn forward(k: usize) -> Self {
        Self::preset(MaskPreset::Forward, k)
    }

    pub fn full(k: usize) -> Self {
        Self::preset(MaskPreset::Full, k)
    }

    /// Arbitrary mask; the diagonal is ignored.
    pub fn custom(allowed: Vec<Vec<bool>>) -> Result<Self> {
        let k = allowed.len();
        if allowed.iter().any(|row| row.len() != k) {
            return Err(Error::invalid("mask must be square"));
        }
        let flat: Vec<bool> = allowed
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &a)| a && i != j))
            .collect();
        if k > 1 && !flat.iter().any(|&a| a) {
            return Err(Error::invalid("mask allows no transitions"));
        }
        Ok(Self {
            k,
            allowed: flat,
            preset: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn preset_kind(&self) -> Option<MaskPreset> {
        self.preset
    }

    pub fn is_chain(&self) -> bool {
        self.preset == Some(MaskPreset::Chain) || self.allowed == Self::chain(self.k).allowed
    }

    pub fn allows(&self, from: usize, to: usize) -> bool {
        from != to && self.allowed[from * self.k + to]
    }

    /// Allowed edges in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.k)
            .flat_map(|i| (0..self.k).map(move |j| (i, j)))
            .filter(|&(i, j)| self.allows(i, j))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.allowed.iter().filter(|&&a| a).count()
    }
}

/// A continuous-time HMM with binary markers.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainModel {
    marker_names: Vec<String>,
    initial: Vec<f64>,
    mask: TransitionMask,
    generator: GeneratorMatrix,
    /// `emissions[s][m]` = P(marker m positive | state s).
    emissions: Vec<Vec<f64>>,
}

impl ChainModel {
    /// `rates[(i, j)]` for allowed edges; entries outside the mask must be 0.
    /// Emission probabilities are clamped into the allowed band.
    pub fn new(
        marker_names: Vec<String>,
        initial: Vec<f64>,
        mask: TransitionMask,
        rates: DMatrix<f64>,
        emissions: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let k = initial.len();
        if k == 0 {
            return Err(Error::invalid("model needs at least one state"));
        }
        if mask.dim() != k || rates.nrows() != k || rates.ncols() != k {
            return Err(Error::invalid("mask, rates and initial distribution disagree on K"));
        }
        if initial.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Invariant("initial distribution has negative entries".into()));
        }
        let total: f64 = initial.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invariant(format!(
                "initial distribution sums to {total}, not 1"
            )));
        }
        for i in 0..k {
            for j in 0..k {
                if i != j && !mask.allows(i, j) && rates[(i, j)] != 0.0 {
                    return Err(Error::Invariant(format!(
                        "rate on masked edge {i}->{j} must be 0"
                    )));
                }
            }
        }
        let m = marker_names.len();
        if emissions.len() != k || emissions.iter().any(|row| row.len() != m) {
            return Err(Error::invalid("emission matrix must be K x M"));
        }
        if emissions.iter().flatten().any(|p| !p.is_finite()) {
            return Err(Error::invalid("emission probabilities must be finite"));
        }
        let emissions = emissions
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|p| p.clamp(EMISSION_FLOOR, 1.0 - EMISSION_FLOOR))
                    .collect()
            })
            .collect();
        let generator = GeneratorMatrix::from_rates(rates)?;
        Ok(Self {
            marker_names,
            initial,
            mask,
            generator,
            emissions,
        })
    }

    /// Convenience constructor for a chain with rates `chain_rates[i]` on `i -> i+1`.
    pub fn chain(
        marker_names: Vec<String>,
        initial: Vec<f64>,
        chain_rates: &[f64],
        emissions: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let k = initial.len();
        if chain_rates.len() + 1 != k {
            return Err(Error::invalid(format!(
                "a {k}-state chain needs {} rates, got {}",
                k.saturating_sub(1),
                chain_rates.len()
            )));
        }
        let mut rates = DMatrix::zeros(k, k);
        for (i, &r) in chain_rates.iter().enumerate() {
            rates[(i, i + 1)] = r;
        }
        Self::new(marker_names, initial, TransitionMask::chain(k), rates, emissions)
    }

    pub fn num_states(&self) -> usize {
        self.initial.len()
    }

    pub fn num_markers(&self) -> usize {
        self.marker_names.len()
    }

    pub fn marker_names(&self) -> &[String] {
        &self.marker_names
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn mask(&self) -> &TransitionMask {
        &self.mask
    }

    pub fn generator(&self) -> &GeneratorMatrix {
        &self.generator
    }

    pub fn emissions(&self) -> &[Vec<f64>] {
        &self.emissions
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.generator.rate(from, to)
    }

    pub fn exit_rate(&self, state: usize) -> f64 {
        self.generator.exit_rate(state)
    }

    /// Off-diagonal rates as a matrix with zero diagonal.
    pub fn rate_matrix(&self) -> DMatrix<f64> {
        let k = self.num_states();
        DMatrix::from_fn(k, k, |i, j| self.rate(i, j))
    }

    /// Largest absolute difference across all parameters; `None` when the
    /// shapes differ.
    pub fn max_param_diff(&self, other: &ChainModel) -> Option<f64> {
        if self.num_states() != other.num_states() || self.num_markers() != other.num_markers() {
            return None;
        }
        let pi = self
            .initial
            .iter()
            .zip(&other.initial)
            .map(|(a, b)| (a - b).abs());
        let q = self
            .rate_matrix()
            .iter()
            .zip(other.rate_matrix().iter())
            .map(|(a, b)| (a - b).abs())
            .collect::<Vec<_>>();
        let em = self
            .emissions
            .iter()
            .flatten()
            .zip(other.emissions.iter().flatten())
            .map(|(a, b)| (a - b).abs());
        Some(pi.chain(q).chain(em).fold(0.0, f64::max))
    }
}
