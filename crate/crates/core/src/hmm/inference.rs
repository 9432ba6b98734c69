//! Exact inference for irregularly timed visits.
//!
//! All recursions run on the interval transition matrices
//! `P(Δt) = exp(Q·Δt)` between consecutive visits. The forward pass is
//! scaled so that every filtered vector sums to one; the log-likelihood is
//! the sum of the log scale factors.

use std::collections::HashMap;

use nalgebra::DMatrix;

use super::cohort::{Cohort, Reading, VisitSequence};
use super::model::ChainModel;
use crate::error::{Error, Result};
use crate::linalg::StochasticMatrix;

/// Interval lengths closer than this share one transition matrix.
pub const DT_QUANTUM: f64 = 1e-9;

fn dt_key(dt: f64) -> i64 {
    (dt / DT_QUANTUM).round() as i64
}

/// Memoized interval transition matrices keyed by quantized Δt.
///
/// A per-sequence cache evaluates each key at the first Δt it sees. A
/// canonical cache evaluates at the quantized value itself, so results do
/// not depend on the order in which intervals are visited.
#[derive(Debug)]
pub(crate) struct TransitionCache {
    canonical: bool,
    index: HashMap<i64, usize>,
    matrices: Vec<StochasticMatrix>,
    deltas: Vec<f64>,
}

impl TransitionCache {
    pub(crate) fn per_sequence() -> Self {
        Self {
            canonical: false,
            index: HashMap::new(),
            matrices: Vec::new(),
            deltas: Vec::new(),
        }
    }

    pub(crate) fn canonical() -> Self {
        Self {
            canonical: true,
            ..Self::per_sequence()
        }
    }

    pub(crate) fn lookup(&mut self, model: &ChainModel, dt: f64) -> Result<usize> {
        let key = dt_key(dt);
        if let Some(&idx) = self.index.get(&key) {
            return Ok(idx);
        }
        let at = if self.canonical { key as f64 * DT_QUANTUM } else { dt };
        let p = model.generator().transition(at)?;
        let idx = self.matrices.len();
        self.matrices.push(p);
        self.deltas.push(at);
        self.index.insert(key, idx);
        Ok(idx)
    }

    pub(crate) fn matrix(&self, idx: usize) -> &StochasticMatrix {
        &self.matrices[idx]
    }

    pub(crate) fn delta(&self, idx: usize) -> f64 {
        self.deltas[idx]
    }

    pub(crate) fn len(&self) -> usize {
        self.matrices.len()
    }

    /// Cache slots for each interval of `seq`.
    pub(crate) fn intervals(&mut self, model: &ChainModel, seq: &VisitSequence) -> Result<Vec<usize>> {
        seq.times()
            .windows(2)
            .map(|w| self.lookup(model, w[1] - w[0]))
            .collect()
    }
}

fn check_markers(model: &ChainModel, seq: &VisitSequence) -> Result<()> {
    if seq.num_markers() != model.num_markers() {
        return Err(Error::invalid(format!(
            "subject `{}` has {} markers, model expects {}",
            seq.subject_id(),
            seq.num_markers(),
            model.num_markers()
        )));
    }
    Ok(())
}

fn emission_prob(row: &[f64], obs: &[Reading]) -> f64 {
    row.iter()
        .zip(obs)
        .map(|(&b, r)| match r {
            Reading::Positive => b,
            Reading::Negative => 1.0 - b,
            Reading::Missing => 1.0,
        })
        .product()
}

/// Probability of one visit's readings given the state; missing markers
/// contribute a factor of one.
pub fn emission_likelihood(model: &ChainModel, state: usize, obs: &[Reading]) -> Result<f64> {
    if state >= model.num_states() {
        return Err(Error::invalid(format!(
            "state {state} out of range for a {}-state model",
            model.num_states()
        )));
    }
    if obs.len() != model.num_markers() {
        return Err(Error::invalid(format!(
            "observation has {} markers, model expects {}",
            obs.len(),
            model.num_markers()
        )));
    }
    Ok(emission_prob(&model.emissions()[state], obs))
}

fn emission_vector(model: &ChainModel, obs: &[Reading]) -> Vec<f64> {
    model
        .emissions()
        .iter()
        .map(|row| emission_prob(row, obs))
        .collect()
}

/// Scaled forward and backward quantities for one sequence.
pub(crate) struct Passes {
    pub emissions: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
    pub scales: Vec<f64>,
    pub log_likelihood: f64,
}

fn normalize(v: &mut [f64], subject: &str) -> Result<f64> {
    let c: f64 = v.iter().sum();
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::DegenerateLikelihood {
            subject: subject.to_string(),
        });
    }
    v.iter_mut().for_each(|x| *x /= c);
    Ok(c)
}

pub(crate) fn forward_pass(
    model: &ChainModel,
    seq: &VisitSequence,
    cache: &TransitionCache,
    slots: &[usize],
) -> Result<Passes> {
    let k = model.num_states();
    let n = seq.len();
    let emissions: Vec<Vec<f64>> = seq
        .observations()
        .iter()
        .map(|o| emission_vector(model, o))
        .collect();
    let mut alpha = Vec::with_capacity(n);
    let mut scales = Vec::with_capacity(n);

    let mut first: Vec<f64> = (0..k).map(|s| model.initial()[s] * emissions[0][s]).collect();
    scales.push(normalize(&mut first, seq.subject_id())?);
    alpha.push(first);

    for t in 1..n {
        let p = cache.matrix(slots[t - 1]).matrix();
        let prev = &alpha[t - 1];
        let mut next = vec![0.0; k];
        for (b, slot) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (a, &pa) in prev.iter().enumerate() {
                acc += pa * p[(a, b)];
            }
            *slot = acc * emissions[t][b];
        }
        scales.push(normalize(&mut next, seq.subject_id())?);
        alpha.push(next);
    }
    let log_likelihood = scales.iter().map(|c| c.ln()).sum();
    Ok(Passes {
        emissions,
        alpha,
        scales,
        log_likelihood,
    })
}

/// Scaled backward vectors matching `passes.scales`.
pub(crate) fn backward_pass(passes: &Passes, cache: &TransitionCache, slots: &[usize]) -> Vec<Vec<f64>> {
    let n = passes.alpha.len();
    let k = passes.alpha[0].len();
    let mut beta = vec![vec![1.0; k]; n];
    for t in (0..n - 1).rev() {
        let p = cache.matrix(slots[t]).matrix();
        let weighted: Vec<f64> = (0..k)
            .map(|b| passes.emissions[t + 1][b] * beta[t + 1][b])
            .collect();
        let c = passes.scales[t + 1];
        for a in 0..k {
            let mut acc = 0.0;
            for (b, &w) in weighted.iter().enumerate() {
                acc += p[(a, b)] * w;
            }
            beta[t][a] = acc / c;
        }
    }
    beta
}

fn smoothed_from(alpha: &[Vec<f64>], beta: &[Vec<f64>]) -> Vec<Vec<f64>> {
    alpha
        .iter()
        .zip(beta)
        .map(|(a, b)| {
            let mut g: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
            let s: f64 = g.iter().sum();
            g.iter_mut().for_each(|x| *x /= s);
            g
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FilterResult {
    pub log_likelihood: f64,
    /// Per visit, P(state | readings up to and including that visit).
    pub filtered: Vec<Vec<f64>>,
}

pub fn forward_filter(model: &ChainModel, seq: &VisitSequence) -> Result<FilterResult> {
    check_markers(model, seq)?;
    let mut cache = TransitionCache::per_sequence();
    let slots = cache.intervals(model, seq)?;
    let passes = forward_pass(model, seq, &cache, &slots)?;
    Ok(FilterResult {
        log_likelihood: passes.log_likelihood,
        filtered: passes.alpha,
    })
}

#[derive(Debug, Clone)]
pub struct SmoothResult {
    pub log_likelihood: f64,
    pub filtered: Vec<Vec<f64>>,
    /// Per visit, P(state | all readings).
    pub smoothed: Vec<Vec<f64>>,
    /// Per interval `t -> t+1`, `pairwise[t][(a, b)] = P(X_t = a, X_{t+1} = b | all readings)`.
    pub pairwise: Vec<DMatrix<f64>>,
}

pub fn forward_backward(model: &ChainModel, seq: &VisitSequence) -> Result<SmoothResult> {
    check_markers(model, seq)?;
    let mut cache = TransitionCache::per_sequence();
    let slots = cache.intervals(model, seq)?;
    let passes = forward_pass(model, seq, &cache, &slots)?;
    let beta = backward_pass(&passes, &cache, &slots);
    let k = model.num_states();
    let pairwise = (0..seq.len().saturating_sub(1))
        .map(|t| {
            let p = cache.matrix(slots[t]).matrix();
            let c = passes.scales[t + 1];
            let mut xi = DMatrix::from_fn(k, k, |a, b| {
                passes.alpha[t][a] * p[(a, b)] * passes.emissions[t + 1][b] * beta[t + 1][b] / c
            });
            let total = xi.sum();
            xi /= total;
            xi
        })
        .collect();
    let smoothed = smoothed_from(&passes.alpha, &beta);
    Ok(SmoothResult {
        log_likelihood: passes.log_likelihood,
        filtered: passes.alpha,
        smoothed,
        pairwise,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ViterbiPath {
    pub states: Vec<usize>,
    pub log_probability: f64,
}

/// First index attaining the maximum, so ties go to the lowest state.
fn argmax(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Most probable state path; among equally probable paths the
/// lexicographically smallest one is returned.
pub fn viterbi(model: &ChainModel, seq: &VisitSequence) -> Result<ViterbiPath> {
    check_markers(model, seq)?;
    let mut cache = TransitionCache::per_sequence();
    let slots = cache.intervals(model, seq)?;
    let k = model.num_states();
    let n = seq.len();
    let log_emit: Vec<Vec<f64>> = seq
        .observations()
        .iter()
        .map(|o| emission_vector(model, o).into_iter().map(f64::ln).collect())
        .collect();
    let log_trans: Vec<DMatrix<f64>> = slots
        .iter()
        .map(|&s| cache.matrix(s).matrix().map(f64::ln))
        .collect();

    // suffix[t][a]: best log-probability of visits t.. given X_t = a.
    let mut suffix = vec![vec![0.0; k]; n];
    suffix[n - 1].clone_from(&log_emit[n - 1]);
    for t in (0..n - 1).rev() {
        for a in 0..k {
            let (_, best) = argmax((0..k).map(|b| log_trans[t][(a, b)] + suffix[t + 1][b]));
            suffix[t][a] = log_emit[t][a] + best;
        }
    }

    let (first, total) = argmax((0..k).map(|s| model.initial()[s].ln() + suffix[0][s]));
    if !total.is_finite() {
        return Err(Error::DegenerateLikelihood {
            subject: seq.subject_id().to_string(),
        });
    }
    let mut states = Vec::with_capacity(n);
    states.push(first);
    for t in 0..n - 1 {
        let a = states[t];
        let (b, _) = argmax((0..k).map(|b| log_trans[t][(a, b)] + suffix[t + 1][b]));
        states.push(b);
    }
    Ok(ViterbiPath {
        states,
        log_probability: total,
    })
}

/// Sum of per-subject log-likelihoods, accumulated in subject-id order.
pub fn dataset_loglik(model: &ChainModel, cohort: &Cohort) -> Result<f64> {
    if cohort.marker_names().len() != model.num_markers() {
        return Err(Error::invalid("cohort markers do not match the model"));
    }
    let mut order: Vec<&VisitSequence> = cohort.subjects().iter().collect();
    order.sort_by(|a, b| a.subject_id().cmp(b.subject_id()));
    let mut total = 0.0;
    for seq in order {
        total += forward_filter(model, seq)?.log_likelihood;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::model::TransitionMask;
    use Reading::*;

    fn names(m: usize) -> Vec<String> {
        (0..m).map(|i| format!("m{i}")).collect()
    }

    fn three_marker_model() -> ChainModel {
        ChainModel::chain(
            names(3),
            vec![1.0, 0.0],
            &[0.3],
            vec![vec![0.9, 0.8, 0.1], vec![0.5, 0.5, 0.5]],
        )
        .unwrap()
    }

    #[test]
    fn emission_products() {
        let m = three_marker_model();
        let p = emission_likelihood(&m, 0, &[Positive, Positive, Negative]).unwrap();
        assert!((p - 0.648).abs() < 1e-12);
        assert_eq!(emission_likelihood(&m, 0, &[Missing, Missing, Missing]).unwrap(), 1.0);
        let p = emission_likelihood(&m, 0, &[Positive, Missing, Negative]).unwrap();
        assert!((p - 0.81).abs() < 1e-12);
        assert!(emission_likelihood(&m, 2, &[Missing; 3]).is_err());
    }

    #[test]
    fn symmetric_single_visit() {
        let m = ChainModel::new(
            names(1),
            vec![1.0 / 3.0; 3],
            TransitionMask::chain(3),
            DMatrix::from_fn(3, 3, |i, j| if j == i + 1 { 0.2 } else { 0.0 }),
            vec![vec![0.3]; 3],
        )
        .unwrap();
        let seq = VisitSequence::from_observations("s", vec![2.0], vec![vec![Positive]]).unwrap();
        let f = forward_filter(&m, &seq).unwrap();
        assert!((f.log_likelihood - 0.3f64.ln()).abs() < 1e-12);
        for p in &f.filtered[0] {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
        let s = forward_backward(&m, &seq).unwrap();
        assert_eq!(s.smoothed, f.filtered);
        assert!(s.pairwise.is_empty());
    }

    #[test]
    fn underflowing_likelihood_is_degenerate() {
        // 60 contradicted markers at the emission floor underflow to zero
        let m = ChainModel::chain(names(60), vec![1.0], &[], vec![vec![0.0; 60]]).unwrap();
        let seq = VisitSequence::from_observations("x", vec![0.0], vec![vec![Positive; 60]]).unwrap();
        let err = forward_filter(&m, &seq).unwrap_err();
        assert!(matches!(err, Error::DegenerateLikelihood { ref subject } if subject == "x"));
        assert!(viterbi(&m, &seq).is_err());
    }

    #[test]
    fn symmetric_tie_picks_smallest_path() {
        // two absorbing states, nothing distinguishes them
        let m = ChainModel::new(
            names(1),
            vec![0.5, 0.5],
            TransitionMask::full(2),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.4, 0.4, 0.0]),
            vec![vec![0.5], vec![0.5]],
        )
        .unwrap();
        let seq = VisitSequence::from_observations(
            "t",
            vec![0.0, 1.0, 2.5],
            vec![vec![Positive], vec![Negative], vec![Missing]],
        )
        .unwrap();
        let v = viterbi(&m, &seq).unwrap();
        assert_eq!(v.states, vec![0, 0, 0]);
    }

    #[test]
    fn empty_cohort_has_zero_loglik() {
        let m = three_marker_model();
        assert_eq!(dataset_loglik(&m, &Cohort::empty(names(3))).unwrap(), 0.0);
    }
}
