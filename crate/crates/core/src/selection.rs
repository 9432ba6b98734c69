//! Experiment grid over (split, K, init, constraint) and the selection of K
//! from predictive log-likelihood and BIC curves.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hmm::{dataset_loglik, Cohort, MaskPreset, TransitionMask};
use crate::seed::{derive_seed, rng_for};
use crate::training::{em_fit, init_random, TrainConfig};

const SPLIT_STREAM: u64 = 0x0053_504C_4954;

/// Partitions subjects (never visits) into training and validation sets.
/// The training set receives `round(ratio·n)` subjects; both keep the
/// cohort's original order.
pub fn split_subjects(cohort: &Cohort, ratio: f64, seed: u64) -> Result<(Cohort, Cohort)> {
    let n = cohort.len();
    if n < 2 {
        return Err(Error::invalid(format!("need at least 2 subjects to split, got {n}")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid(format!("split ratio must be in (0, 1), got {ratio}")));
    }
    let n_train = ((ratio * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[SPLIT_STREAM]));
    let mut train = order[..n_train].to_vec();
    let mut validation = order[n_train..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    Ok((cohort.select(&train), cohort.select(&validation)))
}

/// Free parameters: `K-1` initial probabilities, one rate per allowed edge
/// and `K·M` emission probabilities.
pub fn param_count(k: usize, markers: usize, mask: &TransitionMask) -> usize {
    k.saturating_sub(1) + mask.edge_count() + k * markers
}

/// `p·ln(n) - 2·LL`.
pub fn bic(log_likelihood: f64, params: usize, observations: usize) -> Result<f64> {
    if observations == 0 {
        return Err(Error::invalid("BIC needs at least one observation"));
    }
    Ok(params as f64 * (observations as f64).ln() - 2.0 * log_likelihood)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub k_min: usize,
    pub k_max: usize,
    pub splits: usize,
    pub inits: usize,
    pub train_ratio: f64,
    pub constraints: Vec<MaskPreset>,
    pub master_seed: u64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl GridSpec {
    pub fn new(k_min: usize, k_max: usize, splits: usize, inits: usize, master_seed: u64) -> Self {
        Self {
            k_min,
            k_max,
            splits,
            inits,
            train_ratio: 0.7,
            constraints: vec![MaskPreset::Chain],
            master_seed,
            max_iterations: 500,
            tolerance: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_min < 2 || self.k_min > self.k_max {
            return Err(Error::invalid(format!(
                "need 2 <= kMin <= kMax, got {}..{}",
                self.k_min, self.k_max
            )));
        }
        if self.splits == 0 || self.inits == 0 || self.constraints.is_empty() {
            return Err(Error::invalid("splits, inits and constraints must all be non-empty"));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::invalid("train ratio must be in (0, 1)"));
        }
        Ok(())
    }

    /// `V · |K| · M · C`.
    pub fn cell_count(&self) -> usize {
        self.splits * (self.k_max + 1 - self.k_min) * self.inits * self.constraints.len()
    }

    pub fn split_seed(&self, split: usize) -> u64 {
        derive_seed(self.master_seed, &[SPLIT_STREAM, split as u64])
    }

    pub fn fit_seed(&self, split: usize, k: usize, init: usize, constraint: usize) -> u64 {
        derive_seed(
            self.master_seed,
            &[split as u64, k as u64, init as u64, constraint as u64],
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExperimentResult {
    pub split_id: usize,
    pub k: usize,
    pub init_index: usize,
    pub constraint: MaskPreset,
    pub train_ll: Option<f64>,
    pub validation_ll: Option<f64>,
    pub validation_bic: Option<f64>,
    pub param_count: usize,
    pub validation_visits: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Not reproducible; excluded from deterministic exports.
    pub wall_time_ms: f64,
    pub error: Option<String>,
}

struct Cell {
    split: usize,
    k: usize,
    init: usize,
    constraint: usize,
}

fn run_cell(spec: &GridSpec, cell: &Cell, train: &Cohort, validation: &Cohort) -> ExperimentResult {
    let preset = spec.constraints[cell.constraint];
    let markers = train.marker_names().len();
    let mut result = ExperimentResult {
        split_id: cell.split,
        k: cell.k,
        init_index: cell.init,
        constraint: preset,
        train_ll: None,
        validation_ll: None,
        validation_bic: None,
        param_count: param_count(cell.k, markers, &TransitionMask::preset(preset, cell.k)),
        validation_visits: validation.visit_count(),
        iterations: 0,
        converged: false,
        wall_time_ms: 0.0,
        error: None,
    };
    let started = Instant::now();
    let config = TrainConfig {
        max_iterations: spec.max_iterations,
        tolerance: spec.tolerance,
        ..TrainConfig::new(
            cell.k,
            preset,
            spec.fit_seed(cell.split, cell.k, cell.init, cell.constraint),
        )
    };
    let outcome = init_random(&config, train)
        .and_then(|init| em_fit(&init, train, &config))
        .and_then(|fit| {
            let vll = dataset_loglik(&fit.model, validation)?;
            Ok((fit, vll))
        });
    match outcome {
        Ok((fit, vll)) => {
            result.train_ll = Some(fit.final_ll());
            result.validation_ll = Some(vll);
            result.validation_bic = bic(vll, result.param_count, result.validation_visits).ok();
            result.iterations = fit.iterations;
            result.converged = fit.converged;
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    result
}

/// Trains every grid cell. Failed fits are recorded in their row; results
/// come back ordered by (split, K, init, constraint).
pub fn run_grid(cohort: &Cohort, spec: &GridSpec) -> Result<Vec<ExperimentResult>> {
    spec.validate()?;
    let splits = (0..spec.splits)
        .map(|v| split_subjects(cohort, spec.train_ratio, spec.split_seed(v)))
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::with_capacity(spec.cell_count());
    for split in 0..spec.splits {
        for k in spec.k_min..=spec.k_max {
            for init in 0..spec.inits {
                for constraint in 0..spec.constraints.len() {
                    cells.push(Cell {
                        split,
                        k,
                        init,
                        constraint,
                    });
                }
            }
        }
    }
    Ok(cells
        .par_iter()
        .map(|cell| {
            let (train, validation) = &splits[cell.split];
            run_cell(spec, cell, train, validation)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Quartiles {
    /// Linear-interpolation quantiles; `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Self {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct KSummary {
    pub k: usize,
    pub runs: usize,
    pub failures: usize,
    pub train_ll: Option<Quartiles>,
    pub validation_ll: Option<Quartiles>,
    pub validation_bic: Option<Quartiles>,
    /// Median over (split, constraint) groups of the validation LL of the
    /// init with the best training LL.
    pub selected_validation_ll: Option<f64>,
    /// Validation BIC of the same fits, median over groups.
    pub selected_validation_bic: Option<f64>,
}

/// Per (split, constraint), the successful row with the highest training LL.
fn best_of_inits<'a>(rows: &[&'a ExperimentResult]) -> Vec<&'a ExperimentResult> {
    let mut best: Vec<&ExperimentResult> = Vec::new();
    for &r in rows {
        let (Some(tll), Some(vll), Some(b)) = (r.train_ll, r.validation_ll, r.validation_bic) else {
            continue;
        };
        if !(tll.is_finite() && vll.is_finite() && b.is_finite()) {
            continue;
        }
        match best
            .iter_mut()
            .find(|x| x.split_id == r.split_id && x.constraint == r.constraint)
        {
            Some(slot) => {
                if tll > slot.train_ll.unwrap_or(f64::NEG_INFINITY) {
                    *slot = r;
                }
            }
            None => best.push(r),
        }
    }
    best
}

fn median(values: &[f64]) -> Option<f64> {
    Quartiles::of(values).map(|q| q.median)
}

/// Per-K distribution of training LL, validation LL and validation BIC.
pub fn summarize_by_k(results: &[ExperimentResult]) -> Vec<KSummary> {
    let mut ks: Vec<usize> = results.iter().map(|r| r.k).collect();
    ks.sort_unstable();
    ks.dedup();
    ks.into_iter()
        .map(|k| {
            let rows: Vec<&ExperimentResult> = results.iter().filter(|r| r.k == k).collect();
            let best = best_of_inits(&rows);
            let collect = |f: fn(&ExperimentResult) -> Option<f64>| -> Vec<f64> {
                rows.iter().filter_map(|r| f(r)).filter(|x| x.is_finite()).collect()
            };
            KSummary {
                k,
                runs: rows.len(),
                failures: rows.iter().filter(|r| r.error.is_some()).count(),
                train_ll: Quartiles::of(&collect(|r| r.train_ll)),
                validation_ll: Quartiles::of(&collect(|r| r.validation_ll)),
                validation_bic: Quartiles::of(&collect(|r| r.validation_bic)),
                selected_validation_ll: median(&best.iter().filter_map(|r| r.validation_ll).collect::<Vec<_>>()),
                selected_validation_bic: median(&best.iter().filter_map(|r| r.validation_bic).collect::<Vec<_>>()),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SelectionRule {
    /// Gain threshold as a fraction of the range of median validation LL.
    pub ll_gain_fraction: f64,
    /// Allowed relative distance of the median BIC from its running minimum.
    pub bic_tolerance: f64,
}

impl Default for SelectionRule {
    fn default() -> Self {
        Self {
            ll_gain_fraction: 0.01,
            bic_tolerance: 0.005,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SelectionReport {
    pub curve: Vec<KSummary>,
    pub recommended_k: usize,
    pub no_elbow: bool,
    pub ll_gain_threshold: f64,
    pub rule: SelectionRule,
}

pub fn select_k(results: &[ExperimentResult]) -> Result<SelectionReport> {
    select_k_with(results, SelectionRule::default())
}

/// Recommends the smallest K after which one more state gains at most the
/// threshold in validation LL, provided K's BIC is within tolerance of the
/// best BIC at or below K. Both curves use, per split, the init with the
/// best training LL, then the median across splits. Falls back to the largest K
/// with `no_elbow` set.
pub fn select_k_with(results: &[ExperimentResult], rule: SelectionRule) -> Result<SelectionReport> {
    let curve = summarize_by_k(results);
    let points: Vec<(usize, f64, f64)> = curve
        .iter()
        .filter_map(|s| Some((s.k, s.selected_validation_ll?, s.selected_validation_bic?)))
        .collect();
    if points.len() < 2 {
        return Err(Error::invalid(
            "model selection needs successful results for at least 2 distinct K",
        ));
    }
    let lo = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let threshold = rule.ll_gain_fraction * (hi - lo);

    let mut best_bic = f64::INFINITY;
    let mut recommended = None;
    for (i, &(k, ll, b)) in points.iter().enumerate() {
        best_bic = best_bic.min(b);
        let Some(&(_, next_ll, _)) = points.get(i + 1) else {
            break;
        };
        let bic_ok = b - best_bic <= rule.bic_tolerance * best_bic.abs();
        if next_ll - ll <= threshold && bic_ok {
            recommended = Some(k);
            break;
        }
    }
    let no_elbow = recommended.is_none();
    Ok(SelectionReport {
        recommended_k: recommended.unwrap_or(points[points.len() - 1].0),
        no_elbow,
        ll_gain_threshold: threshold,
        rule,
        curve,
    })
}
