//! Dense kernels for rate matrices.
//!
//! The matrix exponential is the Higham (2005) scaling-and-squaring method
//! with diagonal Padé approximants of degree 3, 5, 7, 9 or 13, picked from the
//! 1-norm of the scaled matrix. End-point-conditioned expectations of a Markov
//! jump process come from the upper-right block of
//!
//! ```text
//! exp([[Q, E], [0, Q]] · t) = [[P(t), ∫ P(t-s) E P(s) ds], [0, P(t)]]
//! ```
//!
//! which is exact for defective generators.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Transition probabilities below this are treated as impossible.
pub const UNREACHABLE_PROB: f64 = 1e-300;

/// Row-sum tolerance accepted for generator matrices.
pub const GENERATOR_ROW_TOL: f64 = 1e-12;

const THETA: [(usize, f64); 4] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
];
const THETA_13: f64 = 5.371_920_351_148_152;

const PADE_3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE_5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE_7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const PADE_9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const PADE_13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn check_square_finite(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::invalid(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    Ok(())
}

fn add_assign_scaled(x: &mut DMatrix<f64>, y: &DMatrix<f64>, c: f64) {
    for (xi, yi) in x.as_mut_slice().iter_mut().zip(y.as_slice()) {
        *xi += c * yi;
    }
}

/// Plain triple loop; beats a packed GEMM at the sizes used here.
fn small_mul(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, inner, m) = (a.nrows(), a.ncols(), b.ncols());
    if n > 32 || m > 32 {
        return a * b;
    }
    let (av, bv) = (a.as_slice(), b.as_slice());
    let mut out = DMatrix::zeros(n, m);
    let ov = out.as_mut_slice();
    for j in 0..m {
        let col = &mut ov[j * n..(j + 1) * n];
        for l in 0..inner {
            let blj = bv[l + j * inner];
            if blj == 0.0 {
                continue;
            }
            for (o, &ail) in col.iter_mut().zip(&av[l * n..(l + 1) * n]) {
                *o += ail * blj;
            }
        }
    }
    out
}

/// The operations the Padé evaluation needs. Implemented for plain dense
/// matrices and for block upper-triangular matrices with equal diagonal
/// blocks, which stay in that form under every operation used.
trait PadeOps: Sized {
    fn identity_like(&self) -> Self;
    fn mul(&self, other: &Self) -> Self;
    fn scaled(&self, c: f64) -> Self;
    fn add_scaled(&mut self, other: &Self, c: f64);
    fn norm1(&self) -> f64;
    /// Solves `(v - u) x = v + u`.
    fn pade_quotient(u: Self, v: Self) -> Result<Self>;
}

fn singular() -> Error {
    Error::Invariant("singular Padé denominator".into())
}

impl PadeOps for DMatrix<f64> {
    fn identity_like(&self) -> Self {
        DMatrix::identity(self.nrows(), self.ncols())
    }

    fn mul(&self, other: &Self) -> Self {
        small_mul(self, other)
    }

    fn scaled(&self, c: f64) -> Self {
        self * c
    }

    fn add_scaled(&mut self, other: &Self, c: f64) {
        add_assign_scaled(self, other, c);
    }

    fn norm1(&self) -> f64 {
        one_norm(self)
    }

    fn pade_quotient(u: Self, v: Self) -> Result<Self> {
        let denom = &v - &u;
        let numer = v + u;
        denom.lu().solve(&numer).ok_or_else(singular)
    }
}

/// `[[a, b], [0, a]]`
struct BlockPair {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl PadeOps for BlockPair {
    fn identity_like(&self) -> Self {
        let k = self.a.nrows();
        BlockPair {
            a: DMatrix::identity(k, k),
            b: DMatrix::zeros(k, k),
        }
    }

    fn mul(&self, o: &Self) -> Self {
        let mut b = small_mul(&self.a, &o.b);
        add_assign_scaled(&mut b, &small_mul(&self.b, &o.a), 1.0);
        BlockPair {
            a: small_mul(&self.a, &o.a),
            b,
        }
    }

    fn scaled(&self, c: f64) -> Self {
        BlockPair {
            a: &self.a * c,
            b: &self.b * c,
        }
    }

    fn add_scaled(&mut self, o: &Self, c: f64) {
        add_assign_scaled(&mut self.a, &o.a, c);
        add_assign_scaled(&mut self.b, &o.b, c);
    }

    fn norm1(&self) -> f64 {
        // column sums of the full 2k x 2k matrix
        let left = self.a.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>());
        let right = self
            .a
            .column_iter()
            .zip(self.b.column_iter())
            .map(|(ca, cb)| ca.iter().chain(cb.iter()).map(|x| x.abs()).sum::<f64>());
        left.chain(right).fold(0.0, f64::max)
    }

    fn pade_quotient(u: Self, v: Self) -> Result<Self> {
        // [[d, o], [0, d]] [[x1, x2], [0, x1]] = [[n, m], [0, n]]
        let d = &v.a - &u.a;
        let o = &v.b - &u.b;
        let n = v.a + u.a;
        let m = v.b + u.b;
        let lu = d.lu();
        let x1 = lu.solve(&n).ok_or_else(singular)?;
        let x2 = lu.solve(&(m - o * &x1)).ok_or_else(singular)?;
        Ok(BlockPair { a: x1, b: x2 })
    }
}

/// Scaling and squaring on an already scaled argument.
fn pade_expm<T: PadeOps>(scaled: T) -> Result<T> {
    let norm = scaled.norm1();
    for &(m, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &PADE_3,
                5 => &PADE_5,
                7 => &PADE_7,
                _ => &PADE_9,
            };
            return pade_low(&scaled, coeffs);
        }
    }
    let squarings = (norm / THETA_13).log2().ceil().max(0.0) as i32;
    let reduced = scaled.scaled(2f64.powi(-squarings));
    let mut result = pade_13(&reduced)?;
    for _ in 0..squarings {
        result = result.mul(&result);
    }
    Ok(result)
}

/// `exp(A·t)` for a real square matrix.
pub fn expm(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    check_square_finite(a)?;
    if !t.is_finite() || t < 0.0 {
        return Err(Error::invalid(format!("duration must be finite and >= 0, got {t}")));
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let scaled = a * t;
    if one_norm(&scaled) == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    pade_expm(scaled)
}

fn pade_low<T: PadeOps>(a: &T, b: &[f64]) -> Result<T> {
    let ident = a.identity_like();
    let a2 = a.mul(a);
    let mut odd = ident.scaled(b[1]);
    let mut even = ident.scaled(b[0]);
    let mut power = ident;
    let degree = b.len() - 1;
    for j in (2..=degree).step_by(2) {
        power = power.mul(&a2);
        even.add_scaled(&power, b[j]);
        if j < degree {
            odd.add_scaled(&power, b[j + 1]);
        }
    }
    let u = a.mul(&odd);
    T::pade_quotient(u, even)
}

fn pade_13<T: PadeOps>(a: &T) -> Result<T> {
    let b = &PADE_13;
    let ident = a.identity_like();
    let a2 = a.mul(a);
    let a4 = a2.mul(&a2);
    let a6 = a4.mul(&a2);

    let mut inner_u = a6.scaled(b[13]);
    inner_u.add_scaled(&a4, b[11]);
    inner_u.add_scaled(&a2, b[9]);
    let mut outer_u = a6.mul(&inner_u);
    outer_u.add_scaled(&a6, b[7]);
    outer_u.add_scaled(&a4, b[5]);
    outer_u.add_scaled(&a2, b[3]);
    outer_u.add_scaled(&ident, b[1]);
    let u = a.mul(&outer_u);

    let mut inner_v = a6.scaled(b[12]);
    inner_v.add_scaled(&a4, b[10]);
    inner_v.add_scaled(&a2, b[8]);
    let mut v = a6.mul(&inner_v);
    v.add_scaled(&a6, b[6]);
    v.add_scaled(&a4, b[4]);
    v.add_scaled(&a2, b[2]);
    v.add_scaled(&ident, b[0]);
    T::pade_quotient(u, v)
}

/// Continuous-time rate matrix, units 1/year.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    q: DMatrix<f64>,
}

impl GeneratorMatrix {
    /// Builds a generator from its off-diagonal rates; the diagonal of
    /// `rates` is ignored and replaced by minus the row sum.
    pub fn from_rates(rates: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&rates)?;
        let k = rates.nrows();
        let mut q = rates;
        for i in 0..k {
            let mut exit = 0.0;
            for j in 0..k {
                if i == j {
                    continue;
                }
                if q[(i, j)] < 0.0 {
                    return Err(Error::invalid(format!(
                        "negative rate {} on edge {i}->{j}",
                        q[(i, j)]
                    )));
                }
                exit += q[(i, j)];
            }
            q[(i, i)] = -exit;
        }
        Ok(Self { q })
    }

    /// Validates a full generator with its diagonal already set.
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        check_square_finite(&q)?;
        for i in 0..q.nrows() {
            let mut sum = 0.0;
            for j in 0..q.ncols() {
                if i != j && q[(i, j)] < 0.0 {
                    return Err(Error::invalid(format!("negative rate on edge {i}->{j}")));
                }
                sum += q[(i, j)];
            }
            if sum.abs() > GENERATOR_ROW_TOL * (1.0 + q[(i, i)].abs()) {
                return Err(Error::invalid(format!("row {i} of generator sums to {sum}")));
            }
        }
        Ok(Self { q })
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        if from == to {
            0.0
        } else {
            self.q[(from, to)]
        }
    }

    pub fn exit_rate(&self, state: usize) -> f64 {
        -self.q[(state, state)]
    }

    /// Transition probabilities over `t` years.
    pub fn transition(&self, t: f64) -> Result<StochasticMatrix> {
        Ok(StochasticMatrix::from_raw(expm(&self.q, t)?))
    }
}

/// Row-stochastic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticMatrix {
    p: DMatrix<f64>,
}

impl StochasticMatrix {
    /// Clamps negative round-off to zero and renormalizes each row.
    pub fn from_raw(mut p: DMatrix<f64>) -> Self {
        for mut row in p.row_iter_mut() {
            for x in row.iter_mut() {
                if *x < 0.0 {
                    *x = 0.0;
                }
            }
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row /= sum;
            }
        }
        Self { p }
    }

    pub fn identity(k: usize) -> Self {
        Self {
            p: DMatrix::identity(k, k),
        }
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.p[(from, to)]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.p
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

/// Upper-right block of `exp([[Q, E], [0, Q]]·dt)`, evaluated with
/// k x k block arithmetic.
fn convolution_block(q: &DMatrix<f64>, coupling: &DMatrix<f64>, dt: f64) -> Result<DMatrix<f64>> {
    let scaled = BlockPair {
        a: q * dt,
        b: coupling * dt,
    };
    if scaled.norm1() == 0.0 {
        return Ok(DMatrix::zeros(q.nrows(), q.ncols()));
    }
    Ok(pade_expm(scaled)?.b)
}

fn unit_coupling(k: usize, row: usize, col: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(k, k);
    e[(row, col)] = 1.0;
    e
}

/// End-point-conditioned occupation times and jump counts over one interval.
#[derive(Debug, Clone)]
pub struct ConditionedMoments {
    dt: f64,
    transition: StochasticMatrix,
    /// `occupation[k][(a, b)] = E[R_k | X(0)=a, X(dt)=b]`
    occupation: Vec<DMatrix<f64>>,
    /// Allowed edges with `jumps[(a, b)] = E[N_kl | X(0)=a, X(dt)=b]`.
    jumps: Vec<((usize, usize), DMatrix<f64>)>,
}

impl ConditionedMoments {
    pub fn dim(&self) -> usize {
        self.transition.dim()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn transition(&self) -> &StochasticMatrix {
        &self.transition
    }

    pub fn is_reachable(&self, a: usize, b: usize) -> bool {
        self.transition.get(a, b) >= UNREACHABLE_PROB
    }

    pub fn occupation(&self, a: usize, b: usize, state: usize) -> f64 {
        self.occupation[state][(a, b)]
    }

    /// Zero for edges with no rate.
    pub fn jumps(&self, a: usize, b: usize, from: usize, to: usize) -> f64 {
        self.jumps
            .iter()
            .find(|((k, l), _)| *k == from && *l == to)
            .map_or(0.0, |(_, m)| m[(a, b)])
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.jumps.iter().map(|(e, _)| *e)
    }
}

/// Exact end-point-conditioned moments of the jump process over `dt` years.
pub fn conditioned_moments(q: &GeneratorMatrix, dt: f64) -> Result<ConditionedMoments> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("interval length must be > 0, got {dt}")));
    }
    let k = q.dim();
    let transition = q.transition(dt)?;
    let reach = |a: usize, b: usize| transition.get(a, b) >= UNREACHABLE_PROB;

    let mut occupation = Vec::with_capacity(k);
    for state in 0..k {
        let mut f = convolution_block(q.matrix(), &unit_coupling(k, state, state), dt)?;
        for a in 0..k {
            for b in 0..k {
                f[(a, b)] = if reach(a, b) {
                    (f[(a, b)] / transition.get(a, b)).clamp(0.0, dt)
                } else {
                    0.0
                };
            }
        }
        occupation.push(f);
    }

    let mut jumps = Vec::new();
    for from in 0..k {
        for to in 0..k {
            let rate = q.rate(from, to);
            if from == to || rate <= 0.0 {
                continue;
            }
            let mut f = convolution_block(q.matrix(), &unit_coupling(k, from, to), dt)?;
            for a in 0..k {
                for b in 0..k {
                    f[(a, b)] = if reach(a, b) {
                        (rate * f[(a, b)] / transition.get(a, b)).max(0.0)
                    } else {
                        0.0
                    };
                }
            }
            jumps.push(((from, to), f));
        }
    }

    Ok(ConditionedMoments {
        dt,
        transition,
        occupation,
        jumps,
    })
}

/// Expected occupation per state and jumps per edge, aggregated over end
/// points with weights `w[(a, b)]` applied to the *unnormalized* integrals.
///
/// With `w[(a, b)] = ξ(a, b) / P(dt)[(a, b)]` this equals
/// `Σ_ab ξ(a, b)·E[· | a, b]`, but needs one exponential instead of one
/// per target.
#[derive(Debug, Clone)]
pub struct IntervalStatistics {
    pub occupation: Vec<f64>,
    /// Zero off the support of Q.
    pub jumps: DMatrix<f64>,
}

pub fn weighted_interval_statistics(
    q: &GeneratorMatrix,
    dt: f64,
    weights: &DMatrix<f64>,
) -> Result<IntervalStatistics> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("interval length must be > 0, got {dt}")));
    }
    let k = q.dim();
    if weights.nrows() != k || weights.ncols() != k {
        return Err(Error::invalid("weight matrix shape does not match generator"));
    }
    let scale = weights.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return Ok(IntervalStatistics {
            occupation: vec![0.0; k],
            jumps: DMatrix::zeros(k, k),
        });
    }
    let coupling = weights.transpose() / scale;
    // M[(k, l)] = Σ_ab w_ab ∫ P(s)_{ak} P(dt-s)_{lb} ds is the transpose of
    // the upper-right block.
    let m = convolution_block(q.matrix(), &coupling, dt)?.transpose() * scale;
    let occupation = (0..k).map(|s| m[(s, s)].max(0.0)).collect();
    let mut jumps = DMatrix::zeros(k, k);
    for from in 0..k {
        for to in 0..k {
            let rate = q.rate(from, to);
            if from != to && rate > 0.0 {
                jumps[(from, to)] = (rate * m[(from, to)]).max(0.0);
            }
        }
    }
    Ok(IntervalStatistics { occupation, jumps })
}
