//! Truncated level-phase generator, stationary solve and the analytic
//! cross-checks on its solution.
//!
//! State `(k, i)` with level `0 <= k <= N` and phase `0 <= i < d` is stored at
//! index `k d + i`. The blocks are
//!
//! ```text
//! (k, k-1) = k mu I
//! (k, k)   = D(0) - k mu I            (diagonal rebuilt for exact zero row sums)
//! (k, l)   = D(l - k),  k < l < N
//! (k, N)   = sum_{l >= N-k} D(l)      (overflow folded into the top level)
//! ```

use serde::Serialize;
use thiserror::Error;

use crate::exec::Execution;
use crate::gth::{self, DenseGenerator};
use crate::matrix::PhaseMatrix;
use crate::model::{BmapView, StabilityVerdict};
use crate::series::CompensatedSum;

/// Largest accepted `max |pi Q_N|`.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Sample points for [`pgf_check`] when the caller has no preference.
pub const DEFAULT_Z_SAMPLES: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 0.9];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CtmcError {
    #[error("level cap must be at least 1, got {0}")]
    CapTooSmall(usize),
    #[error("service rates differ across streams; the level chain needs a single rate (use q1 or q2)")]
    NotSingleRate,
    #[error("stationary residual {residual:e} exceeds {RESIDUAL_TOL:e}")]
    NumericalFailure { residual: f64 },
    #[error("GTH reduction found no outflow from state {state}")]
    Reducible { state: usize },
    #[error("necessity check needs a stable model")]
    NotStable,
}

impl CtmcError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::CapTooSmall(_) => "CapTooSmall",
            Self::NotSingleRate => "NotSingleRate",
            Self::NumericalFailure { .. } => "NumericalFailure",
            Self::Reducible { .. } => "Reducible",
            Self::NotStable => "NotStable",
        }
    }
}

/// The finite generator `Q_N`.
#[derive(Debug, Clone)]
pub struct TruncatedGenerator {
    cap: usize,
    d: usize,
    mu: f64,
    q: DenseGenerator,
    /// `overflow[m][i] = sum_v (A_v e)_i P(B_v > N - m)`: the rate of
    /// arrivals from `(m, i)` that the truncation redirects to level `N`.
    overflow: Vec<Vec<f64>>,
    transforms: Vec<(Vec<f64>, crate::model::BatchSizeDistribution)>,
}

/// Assembles `Q_N` for a single-rate view.
pub fn build_truncated(view: &BmapView, cap: usize) -> Result<TruncatedGenerator, CtmcError> {
    if cap < 1 {
        return Err(CtmcError::CapTooSmall(cap));
    }
    let mu = view.single_rate().ok_or(CtmcError::NotSingleRate)?;
    let d = view.phases();
    let n = (cap + 1) * d;
    let arrivals: Vec<(&PhaseMatrix, &crate::model::BatchSizeDistribution)> =
        view.arrivals().map(|(_, a, b)| (a, b)).collect();
    // pmf[l] and survival[m] = P(B > m) per stream, l, m <= N
    let pmf: Vec<Vec<f64>> = arrivals
        .iter()
        .map(|(_, b)| (0..=cap as u64).map(|l| b.pmf(l)).collect())
        .collect();
    let surv: Vec<Vec<f64>> = arrivals
        .iter()
        .map(|(_, b)| (0..=cap as u64).map(|m| b.survival(m)).collect())
        .collect();

    let mut q = DenseGenerator::zeros(n);
    let d0 = view.d0();
    for k in 0..=cap {
        for i in 0..d {
            let row = k * d + i;
            if k > 0 {
                q.set(row, (k - 1) * d + i, k as f64 * mu);
            }
            for j in 0..d {
                if j != i {
                    q.add(row, k * d + j, d0[(i, j)]);
                }
            }
            for (s, (a, _)) in arrivals.iter().enumerate() {
                for j in 0..d {
                    let rate = a[(i, j)];
                    if rate == 0.0 {
                        continue;
                    }
                    for (l, p) in pmf[s].iter().enumerate().take(cap - k).skip(1) {
                        q.add(row, (k + l) * d + j, rate * p);
                    }
                    // every batch of size >= N - k lands on level N
                    let top = if k < cap { rate * surv[s][cap - k - 1] } else { rate };
                    if k < cap || j != i {
                        q.add(row, cap * d + j, top);
                    }
                }
            }
        }
    }
    q.make_conservative();

    let overflow = (0..=cap)
        .map(|m| {
            let mut v = vec![0.0; d];
            for (s, (a, _)) in arrivals.iter().enumerate() {
                for (o, r) in v.iter_mut().zip(a.row_sums()) {
                    *o += r * surv[s][cap - m];
                }
            }
            v
        })
        .collect();
    Ok(TruncatedGenerator {
        cap,
        d,
        mu,
        q,
        overflow,
        transforms: arrivals.iter().map(|(a, b)| (a.row_sums(), (*b).clone())).collect(),
    })
}

impl TruncatedGenerator {
    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn phases(&self) -> usize {
        self.d
    }

    pub fn service_rate(&self) -> f64 {
        self.mu
    }

    pub fn order(&self) -> usize {
        self.q.order()
    }

    pub fn matrix(&self) -> &DenseGenerator {
        &self.q
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.q.get(row, col)
    }

    /// Block `(k, l)` as a `d x d` matrix.
    pub fn block(&self, k: usize, l: usize) -> PhaseMatrix {
        let d = self.d;
        let mut m = PhaseMatrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = self.q.get(k * d + i, l * d + j);
            }
        }
        m
    }

    /// Row sums of the full matrix.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.order()).map(|r| self.q.row(r).iter().sum()).collect()
    }

    /// Row sums computed off-diagonal first, then the diagonal added: the
    /// order in which conservativity is exact.
    pub fn conservation_defects(&self) -> Vec<f64> {
        (0..self.order())
            .map(|r| {
                let off: f64 = self
                    .q
                    .row(r)
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != r)
                    .map(|(_, x)| x)
                    .sum();
                off + self.q.get(r, r)
            })
            .collect()
    }
}

/// Stationary law of `Q_N`.
#[derive(Debug, Clone, Serialize)]
pub struct StationarySolution {
    pub cap: usize,
    pub phases: usize,
    /// `pi[k][i]`.
    pub pi: Vec<Vec<f64>>,
    /// `max |pi Q_N|`.
    pub residual: f64,
    /// `pi(N) e`.
    pub tail_mass: f64,
    /// Smallest entry of `pi`; can underflow to zero at very deep levels.
    pub min_entry: f64,
}

impl StationarySolution {
    /// `pi(k) e` for every level.
    pub fn level_marginals(&self) -> Vec<f64> {
        self.pi.iter().map(|p| p.iter().sum()).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.pi.iter().flatten().copied().collect::<CompensatedSum>().value()
    }
}

/// Solves `pi Q_N = 0`, `pi e = 1` by GTH state reduction.
pub fn solve_stationary(generator: &TruncatedGenerator) -> Result<StationarySolution, CtmcError> {
    let flat = gth::stationary(&generator.q).map_err(|e| match e {
        gth::GthError::ZeroOutflow { state } => CtmcError::Reducible { state },
    })?;
    let residual = generator
        .q
        .left_mul(&flat)
        .into_iter()
        .fold(0.0f64, |m, x| m.max(x.abs()));
    if !(residual <= RESIDUAL_TOL) {
        return Err(CtmcError::NumericalFailure { residual });
    }
    let d = generator.d;
    let pi: Vec<Vec<f64>> = flat.chunks_exact(d).map(<[f64]>::to_vec).collect();
    Ok(StationarySolution {
        cap: generator.cap,
        phases: d,
        tail_mass: pi[generator.cap].iter().sum(),
        min_entry: flat.iter().copied().fold(f64::INFINITY, f64::min),
        residual,
        pi,
    })
}

/// Build and solve in one step.
pub fn solve_view(view: &BmapView, cap: usize) -> Result<(TruncatedGenerator, StationarySolution), CtmcError> {
    let generator = build_truncated(view, cap)?;
    let solution = solve_stationary(&generator)?;
    Ok((generator, solution))
}

/// One evaluation of the generating-function identity
/// `mu (1-z) d/dz pihat(z) e = pihat(z) sum_k (1 - z^k) D(k) e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PgfSample {
    pub z: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Bound on the part of `lhs - rhs` caused by folding overflow into
    /// level `N`: `z^N sum_m pi(m) overflow(m)`.
    pub truncation_bound: f64,
}

impl PgfSample {
    /// `residual <= max(abs_floor, 10 * truncation_bound)`.
    pub fn within(&self, abs_floor: f64) -> bool {
        self.residual <= abs_floor.max(10.0 * self.truncation_bound)
    }
}

/// Evaluates both sides of the PGF identity at each `z` in `[0, 1]`.
///
/// `pihat` and its derivative are power sums of the solved `pi`; the batch
/// side uses the analytic transforms `sum_k z^k D(k) e = sum_v (A_v e) P_v(z)`.
pub fn pgf_check(sol: &StationarySolution, generator: &TruncatedGenerator, z_samples: &[f64]) -> Vec<PgfSample> {
    let mu = generator.mu;
    let d = sol.phases;
    z_samples
        .iter()
        .map(|&z| {
            assert!((0.0..=1.0).contains(&z), "z must lie in [0, 1]");
            // pihat(z) (vector) and sum_k k z^(k-1) pi(k) e
            let mut pihat = vec![CompensatedSum::default(); d];
            let mut deriv = CompensatedSum::default();
            let mut bound = CompensatedSum::default();
            let mut zk = 1.0; // z^k
            let mut zk1 = 0.0; // z^(k-1)
            for (k, row) in sol.pi.iter().enumerate() {
                let mass: f64 = row.iter().sum();
                for (acc, p) in pihat.iter_mut().zip(row) {
                    acc.add(zk * p);
                }
                if k > 0 {
                    deriv.add(k as f64 * zk1 * mass);
                }
                bound.add(row.iter().zip(&generator.overflow[k]).map(|(p, o)| p * o).sum());
                zk1 = zk;
                zk *= z;
            }
            let z_cap = z.powi(sol.cap as i32);
            let lhs = mu * (1.0 - z) * deriv.value();
            // sum_k (1 - z^k) D(k) e = sum_v (A_v e) (1 - P_v(z))
            let mut batch = vec![0.0; d];
            for (rates, law) in &generator.transforms {
                let one_minus = 1.0 - law.pgf(z);
                for (b, r) in batch.iter_mut().zip(rates) {
                    *b += r * one_minus;
                }
            }
            let rhs = pihat.iter().zip(&batch).map(|(p, b)| p.value() * b).sum::<f64>();
            PgfSample {
                z,
                lhs,
                rhs,
                residual: (lhs - rhs).abs(),
                truncation_bound: z_cap * bound.value(),
            }
        })
        .collect()
}

/// The harmonic chain `H_k >= log(k+1) >= log(k+e) log 2 / log(1+e)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HarmonicChainReport {
    pub checked_up_to: u64,
    /// Levels where either inequality failed.
    pub violations: Vec<u64>,
}

impl HarmonicChainReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the harmonic chain for `k = 1..=k_max`.
///
/// The second inequality is compared in the multiplied-out form
/// `log(k+1) log(1+e) >= log(k+e) log 2`, where `k = 1` gives two products of
/// the same factors and so holds with bitwise equality.
pub fn harmonic_chain(k_max: u64) -> HarmonicChainReport {
    let ln2 = std::f64::consts::LN_2;
    let l1e = (1.0 + std::f64::consts::E).ln();
    let mut h = CompensatedSum::default();
    let mut violations = Vec::new();
    for k in 1..=k_max {
        let kf = k as f64;
        h.add(1.0 / kf);
        let log_k1 = kf.ln_1p();
        let first = h.value() >= log_k1;
        let second = log_k1 * l1e >= (kf + std::f64::consts::E).ln() * ln2;
        if !(first && second) {
            violations.push(k);
        }
    }
    HarmonicChainReport {
        checked_up_to: k_max,
        violations,
    }
}

/// `pi(0) y <= (mu log(1+e) / log 2)(1 - pi(0) e)` with `y` the
/// log-moment vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NecessityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub harmonic_chain: HarmonicChainReport,
}

/// Levels checked by [`necessity_check`]'s harmonic chain.
pub const HARMONIC_CHAIN_LEVELS: u64 = 10_000;

pub fn necessity_check(
    sol: &StationarySolution,
    verdict: &StabilityVerdict,
    mu: f64,
) -> Result<NecessityReport, CtmcError> {
    if !verdict.stable {
        return Err(CtmcError::NotStable);
    }
    let pi0 = &sol.pi[0];
    let lhs: f64 = pi0.iter().zip(&verdict.log_moment_vector).map(|(p, y)| p * y).sum();
    let pi0e: f64 = pi0.iter().sum();
    let rhs = mu * (1.0 + std::f64::consts::E).ln() / std::f64::consts::LN_2 * (1.0 - pi0e);
    let harmonic_chain = harmonic_chain(HARMONIC_CHAIN_LEVELS);
    Ok(NecessityReport {
        lhs,
        rhs,
        holds: lhs <= rhs && harmonic_chain.holds(),
        harmonic_chain,
    })
}

/// Total variation between two level marginals, padding the shorter with
/// zeros.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    let sum: f64 = (0..n)
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .collect::<CompensatedSum>()
        .value();
    0.5 * sum
}

/// One step of the cap-doubling diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CapDoublingStep {
    pub cap: usize,
    /// TV distance between the level marginals at caps `N` and `2N`.
    pub tv_to_double: f64,
    pub tail_mass: f64,
}

/// Solves at each cap and at its double and reports the TV distance of the
/// level marginals. Independent solves run under `exec`.
pub fn cap_doubling_tv(view: &BmapView, caps: &[usize], exec: Execution) -> Result<Vec<CapDoublingStep>, CtmcError> {
    let mut needed: Vec<usize> = caps.iter().flat_map(|&c| [c, 2 * c]).collect();
    needed.sort_unstable();
    needed.dedup();
    let solved = exec.map(needed.clone(), |c| solve_view(view, c).map(|(_, s)| s));
    let lookup = |c: usize| -> Result<&StationarySolution, CtmcError> {
        let idx = needed.binary_search(&c).expect("cap was scheduled");
        solved[idx].as_ref().map_err(Clone::clone)
    };
    caps.iter()
        .map(|&c| {
            let small = lookup(c)?;
            let large = lookup(2 * c)?;
            Ok(CapDoublingStep {
                cap: c,
                tv_to_double: total_variation(&small.level_marginals(), &large.level_marginals()),
                tail_mass: small.tail_mass,
            })
        })
        .collect()
}
