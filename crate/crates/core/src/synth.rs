//! Synthetic cohorts drawn from a known model.
//!
//! Each subject gets its own random stream derived from `(seed, index)`, so
//! cohorts are reproducible and subjects are independent of one another.

use rand::Rng;
use rand_distr::{Distribution, Exp, LogNormal};

use crate::error::{Error, Result};
use crate::hmm::{ChainModel, Cohort, Reading, VisitSequence};
use crate::seed::rng_for;

/// Piecewise-constant state trajectory on `[0, t_end]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    /// `states[0]` holds on `[0, jump_times[0])`, and so on.
    pub states: Vec<usize>,
    pub jump_times: Vec<f64>,
    pub t_end: f64,
}

impl StatePath {
    pub fn state_at(&self, t: f64) -> usize {
        let jumps = self.jump_times.partition_point(|&j| j <= t);
        self.states[jumps]
    }

    pub fn first_jump(&self) -> Option<f64> {
        self.jump_times.first().copied()
    }
}

fn draw_index<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // round-off: last state with positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Gillespie simulation from a fixed start state.
pub fn simulate_path_from<R: Rng>(model: &ChainModel, start: usize, t_end: f64, rng: &mut R) -> StatePath {
    let k = model.num_states();
    let mut states = vec![start];
    let mut jump_times = Vec::new();
    let mut t = 0.0;
    let mut current = start;
    loop {
        let exit = model.exit_rate(current);
        if exit <= 0.0 {
            break;
        }
        let sojourn = Exp::new(exit).expect("positive rate").sample(rng);
        t += sojourn;
        if t > t_end {
            break;
        }
        let weights: Vec<f64> = (0..k).map(|j| model.rate(current, j)).collect();
        current = draw_index(rng, &weights);
        states.push(current);
        jump_times.push(t);
    }
    StatePath {
        states,
        jump_times,
        t_end,
    }
}

/// Path on `[0, t_end]` with the start state drawn from the initial distribution.
pub fn simulate_path(model: &ChainModel, t_end: f64, seed: u64) -> Result<StatePath> {
    if !(t_end > 0.0) {
        return Err(Error::invalid("path length must be > 0"));
    }
    let mut rng = rng_for(seed, &[]);
    let start = draw_index(&mut rng, model.initial());
    Ok(simulate_path_from(model, start, t_end, &mut rng))
}

/// `n` independent sojourn times in `state`.
pub fn sample_sojourns(model: &ChainModel, state: usize, n: usize, seed: u64) -> Result<Vec<f64>> {
    if state >= model.num_states() {
        return Err(Error::invalid(format!("state {state} out of range")));
    }
    let exit = model.exit_rate(state);
    if exit <= 0.0 {
        return Err(Error::invalid(format!("state {state} is a sink")));
    }
    // long enough horizon that truncation is negligible
    let horizon = 200.0 / exit;
    let mut rng = rng_for(seed, &[state as u64]);
    Ok((0..n)
        .map(|_| {
            simulate_path_from(model, state, horizon, &mut rng)
                .first_jump()
                .unwrap_or(horizon)
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct SimSpec {
    pub model: ChainModel,
    pub subjects: usize,
    /// Mean and sd (years) of the log-normal gap between visits.
    pub interval_mean: f64,
    pub interval_sd: f64,
    /// Maximum follow-up after the first visit (years).
    pub follow_up_cap: f64,
    /// Per-marker probability that a reading is missing.
    pub missingness: Vec<f64>,
    pub initial_override: Option<Vec<f64>>,
    /// Uniform range of the age at first visit (years).
    pub start_age: (f64, f64),
    /// Record ages as whole multiples of this many years (e.g. `1.0 / 365.25`
    /// for days). Visits that collapse onto an earlier one are dropped.
    pub age_resolution: Option<f64>,
    pub seed: u64,
}

impl SimSpec {
    pub fn new(model: ChainModel, subjects: usize, seed: u64) -> Self {
        let m = model.num_markers();
        Self {
            model,
            subjects,
            interval_mean: 0.8,
            interval_sd: 0.94,
            follow_up_cap: 15.0,
            missingness: vec![0.1; m],
            initial_override: None,
            start_age: (0.25, 1.0),
            age_resolution: None,
            seed,
        }
    }

    pub fn with_missingness(mut self, p: f64) -> Self {
        self.missingness = vec![p; self.model.num_markers()];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 {
            return Err(Error::invalid("need at least one subject"));
        }
        if !(self.interval_mean > 0.0) || !(self.interval_sd > 0.0) {
            return Err(Error::invalid("visit interval mean and sd must be > 0"));
        }
        if !(self.follow_up_cap >= 0.0) {
            return Err(Error::invalid("follow-up cap must be >= 0"));
        }
        if self.missingness.len() != self.model.num_markers()
            || self.missingness.iter().any(|p| !(0.0..1.0).contains(p))
        {
            return Err(Error::invalid("missingness must be one probability in [0, 1) per marker"));
        }
        if let Some(pi) = &self.initial_override {
            if pi.len() != self.model.num_states() || pi.iter().any(|p| *p < 0.0) || pi.iter().sum::<f64>() <= 0.0 {
                return Err(Error::invalid("initial override must be a non-negative K-vector"));
            }
        }
        let (lo, hi) = self.start_age;
        if !(lo >= 0.0 && hi >= lo) {
            return Err(Error::invalid("start age range must satisfy 0 <= lo <= hi"));
        }
        if self.age_resolution.is_some_and(|r| !(r > 0.0 && r.is_finite())) {
            return Err(Error::invalid("age resolution must be > 0"));
        }
        Ok(())
    }

    /// Log-normal gap distribution matching `interval_mean` and `interval_sd`.
    pub fn interval_distribution(&self) -> LogNormal<f64> {
        let ratio = self.interval_sd / self.interval_mean;
        let sigma2 = (1.0 + ratio * ratio).ln();
        let mu = self.interval_mean.ln() - sigma2 / 2.0;
        LogNormal::new(mu, sigma2.sqrt()).expect("valid log-normal parameters")
    }
}

/// Cohort plus the hidden state at every visit.
#[derive(Debug, Clone)]
pub struct SimulatedCohort {
    pub cohort: Cohort,
    pub truth: Vec<Vec<usize>>,
    pub paths: Vec<StatePath>,
}

pub fn subject_id(index: usize) -> String {
    format!("S{index:05}")
}

pub fn simulate_cohort(spec: &SimSpec) -> Result<SimulatedCohort> {
    spec.validate()?;
    let model = &spec.model;
    let initial = spec.initial_override.as_deref().unwrap_or(model.initial());
    let gaps = spec.interval_distribution();
    let mut subjects = Vec::with_capacity(spec.subjects);
    let mut truth = Vec::with_capacity(spec.subjects);
    let mut paths = Vec::with_capacity(spec.subjects);

    for i in 0..spec.subjects {
        let mut rng = rng_for(spec.seed, &[i as u64]);
        let (lo, hi) = spec.start_age;
        let start_age = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let start = draw_index(&mut rng, initial);
        let path = simulate_path_from(model, start, spec.follow_up_cap, &mut rng);

        let mut offsets = vec![0.0];
        loop {
            let next = offsets[offsets.len() - 1] + gaps.sample(&mut rng);
            if next > spec.follow_up_cap {
                break;
            }
            offsets.push(next);
        }
        let ages: Vec<f64> = match spec.age_resolution {
            None => offsets.iter().map(|t| start_age + t).collect(),
            Some(res) => {
                let first = (start_age / res).round();
                let mut ticks: Vec<f64> = Vec::with_capacity(offsets.len());
                for t in &offsets {
                    let tick = (t / res).round();
                    if ticks.last().is_none_or(|&last| tick > last) && tick * res <= spec.follow_up_cap {
                        ticks.push(tick);
                    }
                }
                offsets = ticks.iter().map(|t| t * res).collect();
                ticks.iter().map(|t| (first + t) * res).collect()
            }
        };

        let mut states = Vec::with_capacity(offsets.len());
        let mut observations = Vec::with_capacity(offsets.len());
        for &t in &offsets {
            let s = path.state_at(t);
            let row = model.emissions()[s]
                .iter()
                .zip(&spec.missingness)
                .map(|(&b, &miss)| {
                    let positive = rng.random::<f64>() < b;
                    if rng.random::<f64>() < miss {
                        Reading::Missing
                    } else if positive {
                        Reading::Positive
                    } else {
                        Reading::Negative
                    }
                })
                .collect();
            states.push(s);
            observations.push(row);
        }
        subjects.push(VisitSequence::from_observations(subject_id(i), ages, observations)?);
        truth.push(states);
        paths.push(path);
    }

    Ok(SimulatedCohort {
        cohort: Cohort::new(model.marker_names().to_vec(), Vec::new(), subjects)?,
        truth,
        paths,
    })
}
