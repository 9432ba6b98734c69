mod common;

use common::*;
use cthmm::linalg::{conditioned_moments, expm, weighted_interval_statistics, GeneratorMatrix};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

/// Full generator with off-diagonal rates in `[0, max_rate)`; roughly a third
/// of the edges are zero.
fn random_generator<R: Rng>(r: &mut R, k: usize, max_rate: f64) -> DMatrix<f64> {
    let mut q = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i != j && r.random_bool(0.67) {
                q[(i, j)] = r.random_range(0.0..max_rate);
            }
        }
        let out: f64 = q.row(i).sum();
        q[(i, i)] = -out;
    }
    q
}

fn chain_generator(rates: &[f64]) -> GeneratorMatrix {
    let k = rates.len() + 1;
    let mut q = DMatrix::zeros(k, k);
    for (i, &r) in rates.iter().enumerate() {
        q[(i, i + 1)] = r;
    }
    GeneratorMatrix::from_rates(q).unwrap()
}

#[test]
fn two_state_closed_form() {
    let a = DMatrix::from_row_slice(2, 2, &[-0.5, 0.5, 0.0, 0.0]);
    let p = expm(&a, 2.0).unwrap();
    let stay = (-1.0f64).exp();
    assert!((p[(0, 0)] - stay).abs() < 1e-9);
    assert!((p[(0, 1)] - (1.0 - stay)).abs() < 1e-9);
    assert!((p[(0, 0)] - 0.36788).abs() < 5e-6);
    assert!((p[(0, 1)] - 0.63212).abs() < 5e-6);
    assert_eq!((p[(1, 0)], p[(1, 1)]), (0.0, 1.0));
}

#[test]
fn zero_generator_gives_identity() {
    assert_eq!(expm(&DMatrix::zeros(3, 3), 5.0).unwrap(), DMatrix::identity(3, 3));
}

#[test]
fn matches_taylor_series_oracle() {
    for seed in 0..50 {
        let mut r = rng(seed);
        let q = random_generator(&mut r, 4, 2.0);
        let p = expm(&q, 1.0).unwrap();
        let oracle = taylor_expm(&q);
        let scale = oracle.abs().max();
        assert!((&p - &oracle).abs().max() / scale < 1e-10, "seed {seed}");
    }
}

#[test]
fn rows_sum_to_one() {
    for seed in 0..200 {
        let mut r = rng(100 + seed);
        let k = r.random_range(2..=8);
        let q = random_generator(&mut r, k, 5.0);
        let t = r.random_range(0.0..10.0);
        let p = expm(&q, t).unwrap();
        for row in p.row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-10, "seed {seed}: {}", row.sum());
        }
    }
}

#[test]
fn chapman_kolmogorov() {
    for seed in 0..200 {
        let mut r = rng(500 + seed);
        let k = r.random_range(2..=6);
        let q = random_generator(&mut r, k, 5.0);
        let s = r.random_range(0.0..10.0);
        let t = r.random_range(0.0..10.0);
        let lhs = expm(&q, s + t).unwrap();
        let rhs = expm(&q, s).unwrap() * expm(&q, t).unwrap();
        assert!((lhs - rhs).abs().max() < 1e-8, "seed {seed}");
    }
}

#[test]
fn rejects_bad_inputs() {
    assert!(expm(&DMatrix::zeros(2, 3), 1.0).is_err());
    assert!(expm(&DMatrix::from_element(2, 2, f64::NAN), 1.0).is_err());
    assert!(expm(&DMatrix::zeros(2, 2), -1.0).is_err());
    assert!(GeneratorMatrix::new(DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, 0.0])).is_err());
    assert!(GeneratorMatrix::from_rates(DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.0, 0.0])).is_err());
    let q = chain_generator(&[1.0]);
    assert!(conditioned_moments(&q, 0.0).is_err());
}

#[test]
fn conditioned_occupation_closed_form() {
    let q = chain_generator(&[1.0]);
    let m = conditioned_moments(&q, 1.0).unwrap();
    let e = (-1.0f64).exp();
    let expected = 1.0 - e / (1.0 - e);
    assert!((m.occupation(0, 1, 0) - expected).abs() < 1e-12);
    assert!((m.occupation(0, 1, 0) - 0.41802).abs() < 5e-6);
    assert!((m.occupation(0, 1, 1) - (1.0 - expected)).abs() < 1e-12);
    assert!((m.jumps(0, 1, 0, 1) - 1.0).abs() < 1e-12);
    assert_eq!(m.jumps(0, 0, 0, 1), 0.0);
}

#[test]
fn tiny_interval_stays_put() {
    let mut r = rng(9);
    let q = GeneratorMatrix::new(random_generator(&mut r, 4, 3.0)).unwrap();
    let dt = 1e-9;
    let m = conditioned_moments(&q, dt).unwrap();
    for a in 0..4 {
        assert!((m.occupation(a, a, a) - dt).abs() < 1e-12);
    }
}

/// `∫_0^dt P(s)_{a,k} P(dt-s)_{l,b} ds`, from the Taylor oracle.
fn quadrature_integral(q: &DMatrix<f64>, dt: f64, a: usize, k: usize, l: usize, b: usize) -> f64 {
    integrate(
        |s| taylor_expm(&(q * s))[(a, k)] * taylor_expm(&(q * (dt - s)))[(l, b)],
        0.0,
        dt,
        40,
    )
}

#[test]
fn conditioned_moments_match_quadrature() {
    let mut r = rng(31);
    let rates: Vec<f64> = (0..2).map(|_| r.random_range(0.2..1.5)).collect();
    let q = chain_generator(&rates);
    let dt = 0.8;
    let m = conditioned_moments(&q, dt).unwrap();
    let p = taylor_expm(&(q.matrix() * dt));
    let mut checked = 0;
    for a in 0..3 {
        for b in a..3 {
            for k in 0..3 {
                let oracle = quadrature_integral(q.matrix(), dt, a, k, k, b) / p[(a, b)];
                assert!((m.occupation(a, b, k) - oracle).abs() < 1e-6, "R_{k} | {a},{b}");
                checked += 1;
            }
            for (from, to) in [(0, 1), (1, 2)] {
                let oracle = q.rate(from, to) * quadrature_integral(q.matrix(), dt, a, from, to, b) / p[(a, b)];
                assert!((m.jumps(a, b, from, to) - oracle).abs() < 1e-6, "N_{from}{to} | {a},{b}");
            }
        }
    }
    assert_eq!(checked, 18);
}

#[test]
fn full_generator_moments_match_quadrature() {
    let mut r = rng(32);
    let q = GeneratorMatrix::new(random_generator(&mut r, 3, 1.5)).unwrap();
    let dt = 1.3;
    let m = conditioned_moments(&q, dt).unwrap();
    let p = taylor_expm(&(q.matrix() * dt));
    for a in 0..3 {
        for b in 0..3 {
            if p[(a, b)] < 1e-8 {
                continue;
            }
            for k in 0..3 {
                let oracle = quadrature_integral(q.matrix(), dt, a, k, k, b) / p[(a, b)];
                assert!((m.occupation(a, b, k) - oracle).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn occupation_completeness_and_jump_consistency() {
    for seed in 0..50 {
        let mut r = rng(700 + seed);
        let k = r.random_range(2..=5);
        let q = GeneratorMatrix::new(random_generator(&mut r, k, 2.0)).unwrap();
        let dt = r.random_range(0.1..4.0);
        let m = conditioned_moments(&q, dt).unwrap();
        let p = m.transition().matrix().clone();
        for a in 0..k {
            for b in 0..k {
                if m.is_reachable(a, b) && p[(a, b)] > 1e-10 {
                    let total: f64 = (0..k).map(|s| m.occupation(a, b, s)).sum();
                    assert!((total - dt).abs() < 1e-8, "seed {seed}: {total} vs {dt}");
                }
            }
            for (from, to) in m.edges().collect::<Vec<_>>() {
                let jumps: f64 = (0..k).map(|b| p[(a, b)] * m.jumps(a, b, from, to)).sum();
                let occ: f64 = (0..k).map(|b| p[(a, b)] * m.occupation(a, b, from)).sum();
                assert!((jumps - q.rate(from, to) * occ).abs() < 1e-6, "seed {seed}");
            }
        }
    }
}

#[test]
fn unreachable_pairs_have_zero_moments() {
    let q = chain_generator(&[0.5, 0.5]);
    let m = conditioned_moments(&q, 1.0).unwrap();
    assert!(!m.is_reachable(2, 0));
    for s in 0..3 {
        assert_eq!(m.occupation(2, 0, s), 0.0);
        assert!(m.occupation(2, 0, s).is_finite());
    }
    assert_eq!(m.jumps(2, 0, 0, 1), 0.0);
}

#[test]
fn weighted_statistics_equal_posterior_weighted_moments() {
    for seed in 0..30 {
        let mut r = rng(900 + seed);
        let k = r.random_range(2..=5);
        let q = GeneratorMatrix::new(random_generator(&mut r, k, 2.0)).unwrap();
        let dt = r.random_range(0.1..3.0);
        let m = conditioned_moments(&q, dt).unwrap();
        let p = m.transition().matrix().clone();
        // as in the E-step, xi(a, b) = alpha(a)·P(a, b)·(emission·beta)(b)
        let left: Vec<f64> = (0..k).map(|_| r.random_range(0.0..1.0)).collect();
        let right: Vec<f64> = (0..k).map(|_| r.random_range(0.0..1.0)).collect();
        let w = DMatrix::from_fn(k, k, |a, b| left[a] * right[b]);
        let xi = DMatrix::from_fn(k, k, |a, b| w[(a, b)] * p[(a, b)]);
        let stats = weighted_interval_statistics(&q, dt, &w).unwrap();
        for s in 0..k {
            let direct: f64 = (0..k)
                .flat_map(|a| (0..k).map(move |b| (a, b)))
                .map(|(a, b)| xi[(a, b)] * m.occupation(a, b, s))
                .sum();
            assert!((stats.occupation[s] - direct).abs() < 1e-8 * (1.0 + direct), "seed {seed}");
        }
        for (from, to) in m.edges().collect::<Vec<_>>() {
            let direct: f64 = (0..k)
                .flat_map(|a| (0..k).map(move |b| (a, b)))
                .map(|(a, b)| xi[(a, b)] * m.jumps(a, b, from, to))
                .sum();
            assert!((stats.jumps[(from, to)] - direct).abs() < 1e-8 * (1.0 + direct), "seed {seed}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn transition_rows_are_distributions(seed in 0u64..1_000_000, t in 0.0f64..10.0) {
        let mut r = rng(seed);
        let k = r.random_range(1..=6);
        let q = GeneratorMatrix::new(random_generator(&mut r, k, 5.0)).unwrap();
        let p = q.transition(t).unwrap();
        for row in p.matrix().row_iter() {
            prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|x| *x >= 0.0));
        }
    }
}
