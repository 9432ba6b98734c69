//! Independent oracles and fixtures shared by the integration tests.
//!
//! Nothing here calls into the crate's numerical kernels: transition
//! matrices come from a truncated Taylor series and posteriors from
//! exhaustive path enumeration.

#![allow(dead_code)]

use cthmm::hmm::{AuxValue, ChainModel, Cohort, Reading, TransitionMask, VisitSequence};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn markers(m: usize) -> Vec<String> {
    (0..m).map(|i| format!("m{i}")).collect()
}

/// `exp(a)` from a scaled 40-term Taylor series followed by squaring.
pub fn taylor_expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = (0..n)
        .map(|j| (0..n).map(|i| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale /= 2.0;
        squarings += 1;
    }
    let x = a * scale;
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for i in 1..=40 {
        term = &term * &x / i as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn generator_of(model: &ChainModel) -> DMatrix<f64> {
    let k = model.num_states();
    let mut q = model.rate_matrix();
    for i in 0..k {
        q[(i, i)] = 0.0;
        let out: f64 = (0..k).map(|j| q[(i, j)]).sum();
        q[(i, i)] = -out;
    }
    q
}

pub fn oracle_transition(model: &ChainModel, dt: f64) -> DMatrix<f64> {
    taylor_expm(&(generator_of(model) * dt))
}

pub fn oracle_emission(row: &[f64], obs: &[Reading]) -> f64 {
    row.iter()
        .zip(obs)
        .map(|(&b, r)| match r {
            Reading::Positive => b,
            Reading::Negative => 1.0 - b,
            Reading::Missing => 1.0,
        })
        .product()
}

/// Every state path with its joint probability with the readings.
pub struct Enumeration {
    pub paths: Vec<(Vec<usize>, f64)>,
}

impl Enumeration {
    pub fn of(model: &ChainModel, seq: &VisitSequence) -> Self {
        let k = model.num_states();
        let n = seq.len();
        let times = seq.times();
        let trans: Vec<DMatrix<f64>> = (1..n).map(|t| oracle_transition(model, times[t] - times[t - 1])).collect();
        let emit = |t: usize, s: usize| oracle_emission(&model.emissions()[s], &seq.observations()[t]);
        let mut paths = Vec::with_capacity(k.pow(n as u32));
        let mut path = vec![0usize; n];
        loop {
            let mut p = model.initial()[path[0]] * emit(0, path[0]);
            for t in 1..n {
                p *= trans[t - 1][(path[t - 1], path[t])].max(0.0) * emit(t, path[t]);
            }
            paths.push((path.clone(), p));
            // odometer increment, last position fastest
            let mut i = n;
            loop {
                if i == 0 {
                    return Self { paths };
                }
                i -= 1;
                path[i] += 1;
                if path[i] < k {
                    break;
                }
                path[i] = 0;
            }
        }
    }

    pub fn likelihood(&self) -> f64 {
        self.paths.iter().map(|(_, p)| p).sum()
    }

    /// Highest joint probability; ties resolved to the lexicographically
    /// smallest path because enumeration runs in lexicographic order.
    pub fn argmax(&self) -> (&[usize], f64) {
        let mut best: (&[usize], f64) = (&self.paths[0].0, self.paths[0].1);
        for (path, p) in &self.paths {
            if *p > best.1 {
                best = (path, *p);
            }
        }
        best
    }

    /// `P(X_t = s | all readings)`.
    pub fn smoothed(&self, k: usize) -> Vec<Vec<f64>> {
        let n = self.paths[0].0.len();
        let total = self.likelihood();
        let mut g = vec![vec![0.0; k]; n];
        for (path, p) in &self.paths {
            for (t, &s) in path.iter().enumerate() {
                g[t][s] += p / total;
            }
        }
        g
    }
}

/// `P(X_t = s | readings up to t)`, by enumerating the prefix.
pub fn oracle_filtered(model: &ChainModel, seq: &VisitSequence, t: usize) -> Vec<f64> {
    let e = Enumeration::of(model, &truncate(seq, t + 1));
    let total = e.likelihood();
    let mut f = vec![0.0; model.num_states()];
    for (path, p) in &e.paths {
        f[path[t]] += p / total;
    }
    f
}

pub fn truncate(seq: &VisitSequence, n: usize) -> VisitSequence {
    VisitSequence::from_observations(
        seq.subject_id(),
        seq.times()[..n].to_vec(),
        seq.observations()[..n].to_vec(),
    )
    .unwrap()
}

pub fn random_mask<R: Rng>(rng: &mut R, k: usize) -> TransitionMask {
    match rng.random_range(0..4) {
        0 => TransitionMask::chain(k),
        1 => TransitionMask::forward(k),
        2 => TransitionMask::full(k),
        _ => {
            let allowed: Vec<Vec<bool>> = (0..k)
                .map(|i| (0..k).map(|j| i != j && rng.random_bool(0.5)).collect())
                .collect();
            TransitionMask::custom(allowed).unwrap_or_else(|_| TransitionMask::full(k))
        }
    }
}

pub fn random_simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let drift = 1.0 - p.iter().sum::<f64>();
    p[0] += drift;
    p
}

pub fn random_model<R: Rng>(rng: &mut R, k: usize, m: usize) -> ChainModel {
    let mask = random_mask(rng, k);
    let mut rates = DMatrix::zeros(k, k);
    for (i, j) in mask.edges() {
        rates[(i, j)] = rng.random_range(0.05..2.0);
    }
    let emissions = (0..k)
        .map(|_| (0..m).map(|_| rng.random_range(0.02..0.98)).collect())
        .collect();
    ChainModel::new(markers(m), random_simplex(rng, k), mask, rates, emissions).unwrap()
}

pub fn random_reading<R: Rng>(rng: &mut R, missing: f64) -> Reading {
    if rng.random_bool(missing) {
        Reading::Missing
    } else if rng.random_bool(0.5) {
        Reading::Positive
    } else {
        Reading::Negative
    }
}

pub fn random_sequence<R: Rng>(rng: &mut R, id: &str, n: usize, m: usize) -> VisitSequence {
    let mut t = rng.random_range(0.0..2.0);
    let mut times = Vec::with_capacity(n);
    for _ in 0..n {
        times.push(t);
        t += rng.random_range(0.05..2.5);
    }
    let obs = (0..n).map(|_| (0..m).map(|_| random_reading(rng, 0.2)).collect()).collect();
    VisitSequence::from_observations(id, times, obs).unwrap()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

pub fn max_abs(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Composite Gauss–Legendre quadrature (5 nodes per panel) on `[a, b]`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (x, w) in X.iter().zip(W) {
            total += w * f(mid + x * h / 2.0);
        }
    }
    total * h / 2.0
}

/// Eleven-state chain with near-zero rates out of states 2 and 7 and
/// initial mass on states 0, 3 and 8.
pub fn eleven_state_model() -> ChainModel {
    let mut rates = vec![0.6; 10];
    rates[2] = 1e-9;
    rates[7] = 1e-9;
    let mut pi = vec![0.0; 11];
    pi[0] = 0.4;
    pi[3] = 0.3;
    pi[8] = 0.3;
    let emissions = (0..11)
        .map(|s| {
            // distinct, well-separated profiles over four markers
            (0..4).map(|m| if (s >> m) & 1 == 1 || s == 10 { 0.95 } else { 0.05 }).collect()
        })
        .collect();
    ChainModel::chain(markers(4), pi, &rates, emissions).unwrap()
}

/// Cohort whose visit readings are exactly the emission profile of the
/// intended state, so decoding recovers the intended labels.
pub fn cohort_from_states(model: &ChainModel, subjects: &[(&str, Vec<(f64, usize)>)], aux: &[&str]) -> Cohort {
    let seqs = subjects
        .iter()
        .map(|(id, visits)| {
            let times = visits.iter().map(|v| v.0).collect();
            let obs = visits
                .iter()
                .map(|&(_, s)| {
                    model.emissions()[s]
                        .iter()
                        .map(|&b| if b > 0.5 { Reading::Positive } else { Reading::Negative })
                        .collect()
                })
                .collect();
            let auxiliary = if aux.is_empty() {
                Vec::new()
            } else {
                visits.iter().map(|_| aux.iter().map(|_| AuxValue::Missing).collect()).collect()
            };
            VisitSequence::new(*id, times, obs, auxiliary).unwrap()
        })
        .collect();
    Cohort::new(model.marker_names().to_vec(), aux.iter().map(|s| s.to_string()).collect(), seqs).unwrap()
}

/// Three groups of subjects following the segments 0-2, 3-7 and 8-10 of
/// [`eleven_state_model`]. Returns the cohort and the ids of the first group.
pub fn three_segment_cohort() -> (Cohort, Vec<String>) {
    let model = eleven_state_model();
    let mut subjects: Vec<(String, Vec<(f64, usize)>)> = Vec::new();
    let mut first = Vec::new();
    for i in 0..12 {
        let id = format!("A{i:02}");
        // every member traverses 0, 1, 2 with one to three visits per state
        let repeats = 1 + i % 3;
        let visits = (0..=2)
            .flat_map(|s| (0..repeats).map(move |r| (s as f64 * 2.0 + 1.0 + 0.4 * r as f64, s)))
            .collect();
        first.push(id.clone());
        subjects.push((id, visits));
    }
    for i in 0..12 {
        let end = 3 + i % 5;
        let visits = (3..=end)
            .flat_map(|s| [(s as f64 * 1.5 + 0.5, s), (s as f64 * 1.5 + 1.0, s)])
            .collect();
        subjects.push((format!("B{i:02}"), visits));
    }
    for i in 0..12 {
        let end = 8 + i % 3;
        let visits = (8..=end).flat_map(|s| [(s as f64 + 0.2, s), (s as f64 + 0.7, s)]).collect();
        subjects.push((format!("C{i:02}"), visits));
    }
    let refs: Vec<(&str, Vec<(f64, usize)>)> = subjects.iter().map(|(id, v)| (id.as_str(), v.clone())).collect();
    (cohort_from_states(&model, &refs, &[]), first)
}
