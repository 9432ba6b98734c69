//! EM estimation of a masked continuous-time HMM.
//!
//! E-step statistics per interval are `Σ_ab ξ(a, b)·E[R_k | a, b]` and
//! `Σ_ab ξ(a, b)·E[N_kl | a, b]`. Since `ξ(a, b) / P(a, b)` factors as
//! `α̂_t(a)·e_{t+1}(b)·β̂_{t+1}(b) / c_{t+1}`, the weights of all intervals
//! sharing one Δt are summed first and the statistics come from a single
//! block exponential per distinct Δt.

use log::warn;
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{
    backward_pass, dataset_loglik, forward_pass, ChainModel, Cohort, MaskPreset, Reading,
    TransitionCache, TransitionMask, VisitSequence, EMISSION_FLOOR,
};
use crate::linalg::weighted_interval_statistics;
use crate::seed::{derive_seed, rng_for};

/// Rates below this are reported as effectively zero.
pub const EFFECTIVELY_ZERO_RATE: f64 = 1e-6;

const STARVED_MASS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub k: usize,
    pub mask: MaskPreset,
    pub max_iterations: usize,
    /// Stop once the absolute log-likelihood gain of an iteration drops below this.
    pub tolerance: f64,
    pub seed: u64,
    pub emission_bounds: (f64, f64),
    pub rate_floor: f64,
}

impl TrainConfig {
    pub fn new(k: usize, mask: MaskPreset, seed: u64) -> Self {
        Self {
            k,
            mask,
            max_iterations: 500,
            tolerance: 1e-6,
            seed,
            emission_bounds: (EMISSION_FLOOR, 1.0 - EMISSION_FLOOR),
            rate_floor: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::invalid("convergence tolerance must be > 0"));
        }
        let (lo, hi) = self.emission_bounds;
        if !(lo >= EMISSION_FLOOR && hi <= 1.0 - EMISSION_FLOOR && lo < hi) {
            return Err(Error::invalid("emission bounds must lie inside [1e-6, 1 - 1e-6]"));
        }
        if !(self.rate_floor > 0.0) {
            return Err(Error::invalid("rate floor must be > 0"));
        }
        Ok(())
    }

    pub fn mask(&self) -> TransitionMask {
        TransitionMask::preset(self.mask, self.k)
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: ChainModel,
    /// Log-likelihood of the initial model followed by one entry per iteration.
    pub ll_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn final_ll(&self) -> f64 {
        *self.ll_trace.last().expect("trace is never empty")
    }
}

/// Random starting point for EM, fully determined by `config.seed`.
pub fn init_random(config: &TrainConfig, cohort: &Cohort) -> Result<ChainModel> {
    config.validate()?;
    if cohort.is_empty() {
        return Err(Error::invalid("cannot initialize from an empty cohort"));
    }
    let k = config.k;
    let m = cohort.marker_names().len();
    let mask = config.mask();
    let mut rng = rng_for(config.seed, &[]);

    let draws: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
    let total: f64 = draws.iter().sum();
    let mut initial: Vec<f64> = draws.iter().map(|d| d / total).collect();
    let drift: f64 = 1.0 - initial.iter().sum::<f64>();
    initial[0] += drift;

    let mut rates = DMatrix::zeros(k, k);
    for (i, j) in mask.edges() {
        rates[(i, j)] = rng.random_range(0.05..=1.0);
    }
    let emissions = (0..k)
        .map(|_| (0..m).map(|_| rng.random_range(0.05..=0.95)).collect())
        .collect();
    ChainModel::new(cohort.marker_names().to_vec(), initial, mask, rates, emissions)
}

struct Expectations {
    log_likelihood: f64,
    first_visit: Vec<f64>,
    occupation: Vec<f64>,
    jumps: DMatrix<f64>,
    visit_mass: Vec<f64>,
    positives: Vec<Vec<f64>>,
    observed: Vec<Vec<f64>>,
}

fn sorted_subjects(cohort: &Cohort) -> Vec<&VisitSequence> {
    let mut order: Vec<&VisitSequence> = cohort.subjects().iter().collect();
    order.sort_by(|a, b| a.subject_id().cmp(b.subject_id()));
    order
}

fn e_step(model: &ChainModel, subjects: &[&VisitSequence]) -> Result<Expectations> {
    let k = model.num_states();
    let m = model.num_markers();
    let mut cache = TransitionCache::canonical();
    let mut weights: Vec<DMatrix<f64>> = Vec::new();
    let mut ex = Expectations {
        log_likelihood: 0.0,
        first_visit: vec![0.0; k],
        occupation: vec![0.0; k],
        jumps: DMatrix::zeros(k, k),
        visit_mass: vec![0.0; k],
        positives: vec![vec![0.0; m]; k],
        observed: vec![vec![0.0; m]; k],
    };

    for seq in subjects {
        let slots = cache.intervals(model, seq)?;
        while weights.len() < cache.len() {
            weights.push(DMatrix::zeros(k, k));
        }
        let passes = forward_pass(model, seq, &cache, &slots)?;
        let beta = backward_pass(&passes, &cache, &slots);
        ex.log_likelihood += passes.log_likelihood;

        for (t, (alpha, beta_t)) in passes.alpha.iter().zip(&beta).enumerate() {
            let mut gamma: Vec<f64> = alpha.iter().zip(beta_t).map(|(a, b)| a * b).collect();
            let s: f64 = gamma.iter().sum();
            gamma.iter_mut().for_each(|g| *g /= s);
            if t == 0 {
                for (acc, g) in ex.first_visit.iter_mut().zip(&gamma) {
                    *acc += g;
                }
            }
            for (state, &g) in gamma.iter().enumerate() {
                ex.visit_mass[state] += g;
                for (marker, r) in seq.observations()[t].iter().enumerate() {
                    match r {
                        Reading::Positive => {
                            ex.positives[state][marker] += g;
                            ex.observed[state][marker] += g;
                        }
                        Reading::Negative => ex.observed[state][marker] += g,
                        Reading::Missing => {}
                    }
                }
            }
        }

        for (t, &slot) in slots.iter().enumerate() {
            let c = passes.scales[t + 1];
            let w = &mut weights[slot];
            for b in 0..k {
                let right = passes.emissions[t + 1][b] * beta[t + 1][b] / c;
                if right == 0.0 {
                    continue;
                }
                for a in 0..k {
                    w[(a, b)] += passes.alpha[t][a] * right;
                }
            }
        }
    }

    for (slot, w) in weights.iter().enumerate() {
        let stats = weighted_interval_statistics(model.generator(), cache.delta(slot), w)?;
        for (acc, r) in ex.occupation.iter_mut().zip(&stats.occupation) {
            *acc += r;
        }
        ex.jumps += stats.jumps;
    }
    Ok(ex)
}

fn m_step(
    model: &ChainModel,
    ex: &Expectations,
    config: &TrainConfig,
    subjects: usize,
    warnings: &mut Vec<String>,
    iteration: usize,
) -> Result<ChainModel> {
    let k = model.num_states();
    let mask = model.mask().clone();

    let total: f64 = ex.first_visit.iter().sum();
    let mut initial: Vec<f64> = ex.first_visit.iter().map(|g| g / total).collect();
    if subjects > 0 {
        let drift = 1.0 - initial.iter().sum::<f64>();
        let top = (0..k)
            .max_by(|&a, &b| initial[a].total_cmp(&initial[b]))
            .unwrap_or(0);
        initial[top] += drift;
    }

    let mut rates = model.rate_matrix();
    for i in 0..k {
        let starved = ex.occupation[i] < STARVED_MASS && ex.visit_mass[i] < STARVED_MASS;
        if starved {
            let msg = format!("iteration {iteration}: state {i} is starved; keeping its parameters");
            warn!("{msg}");
            warnings.push(msg);
        }
        if ex.occupation[i] < STARVED_MASS {
            continue;
        }
        for j in 0..k {
            if mask.allows(i, j) {
                rates[(i, j)] = (ex.jumps[(i, j)] / ex.occupation[i]).max(config.rate_floor);
            }
        }
    }

    let (lo, hi) = config.emission_bounds;
    let mut emissions = model.emissions().to_vec();
    for (s, row) in emissions.iter_mut().enumerate() {
        for (marker, b) in row.iter_mut().enumerate() {
            let seen = ex.observed[s][marker];
            if seen >= STARVED_MASS {
                *b = (ex.positives[s][marker] / seen).clamp(lo, hi);
            }
        }
    }
    ChainModel::new(model.marker_names().to_vec(), initial, mask, rates, emissions)
}

/// Runs EM from `init` until the log-likelihood gain falls below the
/// tolerance or the iteration cap is reached.
pub fn em_fit(init: &ChainModel, cohort: &Cohort, config: &TrainConfig) -> Result<FitResult> {
    config.validate()?;
    if cohort.marker_names() != init.marker_names() {
        return Err(Error::invalid("cohort markers do not match the initial model"));
    }
    if cohort.is_empty() {
        return Err(Error::invalid("cannot fit an empty cohort"));
    }
    let subjects = sorted_subjects(cohort);
    let mut model = init.clone();
    let mut ex = e_step(&model, &subjects)?;
    let mut trace = vec![ex.log_likelihood];
    let mut warnings = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let next = m_step(&model, &ex, config, subjects.len(), &mut warnings, iterations)?;
        let next_ex = e_step(&next, &subjects)?;
        let gain = next_ex.log_likelihood - ex.log_likelihood;
        model = next;
        ex = next_ex;
        trace.push(ex.log_likelihood);
        if gain < config.tolerance {
            converged = true;
            break;
        }
    }

    Ok(FitResult {
        model,
        ll_trace: trace,
        iterations,
        converged,
        warnings,
    })
}

/// Fits `inits` random starts (seeds derived from `config.seed`) and keeps
/// the one with the highest final training log-likelihood.
pub fn fit_best_of(config: &TrainConfig, cohort: &Cohort, inits: usize) -> Result<FitResult> {
    if inits == 0 {
        return Err(Error::invalid("need at least one initialization"));
    }
    let mut best: Option<FitResult> = None;
    for i in 0..inits {
        let cfg = TrainConfig {
            seed: derive_seed(config.seed, &[i as u64]),
            ..config.clone()
        };
        let init = init_random(&cfg, cohort)?;
        let fit = em_fit(&init, cohort, &cfg)?;
        if best.as_ref().is_none_or(|b| fit.final_ll() > b.final_ll()) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one fit"))
}

/// Log-likelihoods of `replicates` subject-level resamples drawn with
/// replacement.
pub fn bootstrap_ll(model: &ChainModel, cohort: &Cohort, replicates: usize, seed: u64) -> Result<Vec<f64>> {
    if cohort.is_empty() {
        return Err(Error::invalid("cannot bootstrap an empty cohort"));
    }
    if replicates == 0 {
        return Err(Error::invalid("need at least one bootstrap replicate"));
    }
    let n = cohort.len();
    (0..replicates)
        .map(|b| {
            let mut rng = rng_for(seed, &[b as u64]);
            let picks: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            dataset_loglik(model, &cohort.select(&picks))
        })
        .collect()
}

/// Allowed edges whose rate is below [`EFFECTIVELY_ZERO_RATE`].
pub fn effectively_zero_edges(model: &ChainModel) -> Vec<(usize, usize)> {
    model
        .mask()
        .edges()
        .into_iter()
        .filter(|&(i, j)| model.rate(i, j) < EFFECTIVELY_ZERO_RATE)
        .collect()
}
