//! Event-driven simulation of the MBMAP/M/∞ queue and the three-queue
//! service-time coupling.
//!
//! Every replication owns a `ChaCha8Rng` seeded from its `seed`; the arrival
//! skeleton and the per-customer uniforms use separate streams of it, so the
//! skeleton does not change when service rates do.

mod couple;
mod diagnostics;

pub use couple::{couple, service_times, CoupleOptions, CoupledEpoch, CoupledTrace, EventSkeleton};
pub use diagnostics::{diagnostics, StabilityDiagnostics};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp1};
use serde::Serialize;
use thiserror::Error;

use crate::exec::Execution;
use crate::model::{BatchSizeDistribution, ValidatedModel};
use diagnostics::DiagnosticsBuilder;

/// Sampled batch sizes saturate here so counts stay exact in `u64`.
pub const DEFAULT_MAX_BATCH: u64 = 1 << 53;

/// Above this level, departures between background events are applied by
/// binomial thinning instead of one at a time.
pub const DEFAULT_EXACT_LEVEL_LIMIT: u64 = 4096;

pub(crate) const SKELETON_STREAM: u64 = 0;
pub(crate) const UNIFORM_STREAM: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("horizon must be positive and finite, got {0}")]
    HorizonNonpositive(f64),
    #[error("burn-in {burn_in} must lie in [0, horizon = {horizon})")]
    BadBurnIn { burn_in: f64, horizon: f64 },
    #[error("coupling order violated at t = {time}: L2 = {l2}, L = {l}, L1 = {l1}")]
    OrderingViolated { time: f64, l: u64, l1: u64, l2: u64 },
    #[error("skeleton needs more than {limit} customers")]
    TooManyCustomers { limit: u64 },
    #[error("background chain: {0}")]
    Background(String),
}

impl SimError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::HorizonNonpositive(_) => "HorizonNonpositive",
            Self::BadBurnIn { .. } => "BadBurnIn",
            Self::OrderingViolated { .. } => "OrderingViolated",
            Self::TooManyCustomers { .. } => "TooManyCustomers",
            Self::Background(_) => "Background",
        }
    }
}

pub(crate) fn check_times(horizon: f64, burn_in: f64) -> Result<(), SimError> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SimError::HorizonNonpositive(horizon));
    }
    if !(burn_in >= 0.0 && burn_in < horizon) {
        return Err(SimError::BadBurnIn { burn_in, horizon });
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub horizon: f64,
    pub burn_in: f64,
    pub max_batch: u64,
    pub exact_level_limit: u64,
    /// Occupancy is binned for levels `0..histogram_levels`; time above is
    /// reported as `overflow_time`.
    pub histogram_levels: usize,
    /// Starting phase; drawn from the background stationary law when `None`.
    pub initial_phase: Option<usize>,
    /// Keep at most this many `(time, level, phase)` trace rows.
    pub trace_limit: usize,
}

impl SimOptions {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            burn_in: 0.0,
            max_batch: DEFAULT_MAX_BATCH,
            exact_level_limit: DEFAULT_EXACT_LEVEL_LIMIT,
            histogram_levels: 4096,
            initial_phase: None,
            trace_limit: 0,
        }
    }

    pub fn burn_in(mut self, burn_in: f64) -> Self {
        self.burn_in = burn_in;
        self
    }

    pub fn trace_limit(mut self, rows: usize) -> Self {
        self.trace_limit = rows;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub time: f64,
    pub level: u64,
    pub phase: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationResult {
    pub seed: u64,
    pub diagnostics: StabilityDiagnostics,
    /// Time spent at each level after burn-in.
    pub occupancy: Vec<f64>,
    /// Post-burn-in time above the histogram range.
    pub overflow_time: f64,
    /// Post-burn-in time inside binomial-thinning intervals, where the level
    /// path is not resolved event by event.
    pub unresolved_time: f64,
    pub events: u64,
    pub final_level: u64,
    pub final_phase: usize,
    pub trace: Vec<TraceRow>,
}

impl SimulationResult {
    /// Occupancy normalized by the resolved post-burn-in time.
    pub fn empirical_pmf(&self) -> Vec<f64> {
        let total: f64 = self.occupancy.iter().sum::<f64>() + self.overflow_time;
        self.occupancy.iter().map(|t| t / total).collect()
    }
}

/// What a background transition does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum BackgroundMove {
    Phase,
    Arrival { stream: usize },
}

/// Competing clocks of the background chain: from phase `i` the next event
/// fires at total rate `-D(0)_ii` and is a phase change `i -> j` with
/// weight `D(0)_ij` or a batch arrival of stream `v` with weight `A_v,ij`.
#[derive(Debug, Clone)]
pub(crate) struct Background {
    /// Per phase: cumulative weights, targets and moves.
    tables: Vec<Vec<(f64, usize, BackgroundMove)>>,
    rates: Vec<f64>,
    pub laws: Vec<BatchSizeDistribution>,
    pub service_rates: Vec<f64>,
    theta: Vec<f64>,
}

impl Background {
    pub fn new(model: &ValidatedModel) -> Result<Self, SimError> {
        let d = model.phases();
        let mut tables = Vec::with_capacity(d);
        let mut rates = Vec::with_capacity(d);
        for i in 0..d {
            let mut acc = 0.0;
            let mut t = Vec::new();
            for j in 0..d {
                let r = model.d0()[(i, j)];
                if j != i && r > 0.0 {
                    acc += r;
                    t.push((acc, j, BackgroundMove::Phase));
                }
            }
            for (s, stream) in model.streams().iter().enumerate() {
                for j in 0..d {
                    let r = stream.rate_matrix[(i, j)];
                    if r > 0.0 {
                        acc += r;
                        t.push((acc, j, BackgroundMove::Arrival { stream: s }));
                    }
                }
            }
            rates.push(acc);
            tables.push(t);
        }
        let theta = model
            .background_stationary()
            .map_err(|e| SimError::Background(e.to_string()))?;
        Ok(Self {
            tables,
            rates,
            laws: model.streams().iter().map(|s| s.batch.clone()).collect(),
            service_rates: model.streams().iter().map(|s| s.service_rate).collect(),
            theta,
        })
    }

    pub fn rate(&self, phase: usize) -> f64 {
        self.rates[phase]
    }

    pub fn initial_phase<R: Rng>(&self, rng: &mut R, fixed: Option<usize>) -> usize {
        if let Some(p) = fixed {
            return p;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, t) in self.theta.iter().enumerate() {
            acc += t;
            if u < acc {
                return i;
            }
        }
        self.theta.len() - 1
    }

    /// Picks the transition out of `phase`.
    pub fn choose<R: Rng>(&self, rng: &mut R, phase: usize) -> (usize, BackgroundMove) {
        let table = &self.tables[phase];
        let x = rng.random::<f64>() * self.rates[phase];
        let idx = table.partition_point(|&(c, _, _)| c <= x).min(table.len() - 1);
        let (_, to, mv) = table[idx];
        (to, mv)
    }

    pub fn batch<R: Rng>(&self, rng: &mut R, stream: usize, max_batch: u64) -> u64 {
        self.laws[stream].quantile(rng.random::<f64>(), max_batch)
    }
}

pub(crate) fn exp_sample<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    let e: f64 = Exp1.sample(rng);
    e / rate
}

/// Time-at-level accumulator restricted to `[burn_in, horizon]`.
struct Occupancy {
    burn_in: f64,
    bins: Vec<f64>,
    overflow: f64,
    unresolved: f64,
}

impl Occupancy {
    fn clipped(&self, a: f64, b: f64) -> f64 {
        (b - a.max(self.burn_in)).max(0.0)
    }

    fn add(&mut self, level: u64, a: f64, b: f64) {
        let dt = self.clipped(a, b);
        if dt == 0.0 {
            return;
        }
        match self.bins.get_mut(level as usize) {
            Some(slot) => *slot += dt,
            None => self.overflow += dt,
        }
    }

    fn add_unresolved(&mut self, a: f64, b: f64) {
        self.unresolved += self.clipped(a, b);
    }
}

/// Exact simulation of one replication from the empty system.
pub fn simulate(model: &ValidatedModel, opts: &SimOptions, seed: u64) -> Result<SimulationResult, SimError> {
    check_times(opts.horizon, opts.burn_in)?;
    let bg = Background::new(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SKELETON_STREAM);
    let k = bg.laws.len();
    let horizon = opts.horizon;

    let mut phase = bg.initial_phase(&mut rng, opts.initial_phase);
    let mut counts = vec![0u64; k];
    let mut level = 0u64;
    let mut t = 0.0f64;
    let mut events = 0u64;
    let mut occ = Occupancy {
        burn_in: opts.burn_in,
        bins: vec![0.0; opts.histogram_levels],
        overflow: 0.0,
        unresolved: 0.0,
    };
    let mut diag = DiagnosticsBuilder::new(opts.burn_in);
    let mut trace = Vec::new();
    let record = |trace: &mut Vec<TraceRow>, time: f64, level: u64, phase: usize| {
        if trace.len() < opts.trace_limit {
            trace.push(TraceRow { time, level, phase });
        }
    };
    record(&mut trace, 0.0, 0, phase);

    loop {
        let bg_rate = bg.rate(phase);
        if level <= opts.exact_level_limit {
            let dep_rate: f64 = counts.iter().zip(&bg.service_rates).map(|(&c, m)| c as f64 * m).sum();
            let total = bg_rate + dep_rate;
            let dt = exp_sample(&mut rng, total);
            if t + dt >= horizon {
                occ.add(level, t, horizon);
                break;
            }
            occ.add(level, t, t + dt);
            t += dt;
            events += 1;
            let x = rng.random::<f64>() * total;
            if x < dep_rate {
                let mut y = rng.random::<f64>() * dep_rate;
                let mut class = k - 1;
                for (c, (&n, m)) in counts.iter().zip(&bg.service_rates).enumerate() {
                    let w = n as f64 * m;
                    if y < w && n > 0 {
                        class = c;
                        break;
                    }
                    y -= w;
                }
                // guard against rounding landing on an empty class
                if counts[class] == 0 {
                    class = counts
                        .iter()
                        .rposition(|&n| n > 0)
                        .expect("departure from a nonempty system");
                }
                counts[class] -= 1;
                level -= 1;
                if level == 0 {
                    diag.returned(t);
                }
            } else {
                apply_background(
                    &bg,
                    &mut rng,
                    &mut phase,
                    &mut counts,
                    &mut level,
                    &mut diag,
                    t,
                    opts.max_batch,
                );
            }
            record(&mut trace, t, level, phase);
        } else {
            let dt = exp_sample(&mut rng, bg_rate);
            let end = (t + dt).min(horizon);
            let span = end - t;
            let mut emptied_after = None;
            let survivors: Vec<u64> = counts
                .iter()
                .zip(&bg.service_rates)
                .map(|(&n, &mu)| {
                    if n == 0 {
                        return 0;
                    }
                    let p = (-mu * span).exp();
                    Binomial::new(n, p).expect("valid binomial").sample(&mut rng)
                })
                .collect();
            let remaining: u64 = survivors.iter().sum();
            if remaining == 0 {
                let u: f64 = rng.random();
                let s = emptying_time(&counts, &bg.service_rates, span, u);
                emptied_after = Some(s);
            }
            match emptied_after {
                Some(s) => {
                    occ.add_unresolved(t, t + s);
                    diag.returned(t + s);
                    occ.add(0, t + s, end);
                }
                None => occ.add_unresolved(t, end),
            }
            counts = survivors;
            level = remaining;
            t = end;
            events += 1;
            if end >= horizon {
                break;
            }
            apply_background(
                &bg,
                &mut rng,
                &mut phase,
                &mut counts,
                &mut level,
                &mut diag,
                t,
                opts.max_batch,
            );
            record(&mut trace, t, level, phase);
        }
    }

    Ok(SimulationResult {
        seed,
        diagnostics: diag.finish(horizon, level),
        occupancy: occ.bins,
        overflow_time: occ.overflow,
        unresolved_time: occ.unresolved,
        events,
        final_level: level,
        final_phase: phase,
        trace,
    })
}

#[allow(clippy::too_many_arguments)]
fn apply_background(
    bg: &Background,
    rng: &mut ChaCha8Rng,
    phase: &mut usize,
    counts: &mut [u64],
    level: &mut u64,
    diag: &mut DiagnosticsBuilder,
    t: f64,
    max_batch: u64,
) {
    let (to, mv) = bg.choose(rng, *phase);
    *phase = to;
    if let BackgroundMove::Arrival { stream } = mv {
        let b = bg.batch(rng, stream, max_batch);
        if *level == 0 {
            diag.left_empty(t);
        }
        counts[stream] = counts[stream].saturating_add(b);
        *level = level.saturating_add(b);
        diag.observe_level(*level);
    }
}

/// Samples the time the last of `counts[v]` exponential(`mu_v`) lifetimes
/// ends, given that all end within `span`:
/// `P(T <= s) = prod_v ((1 - e^(-mu_v s)) / (1 - e^(-mu_v span)))^counts[v]`.
fn emptying_time(counts: &[u64], mus: &[f64], span: f64, u: f64) -> f64 {
    let log_cdf = |s: f64| -> f64 {
        counts
            .iter()
            .zip(mus)
            .filter(|(&n, _)| n > 0)
            .map(|(&n, &mu)| n as f64 * ((-(-mu * s).exp_m1()).ln() - (-(-mu * span).exp_m1()).ln()))
            .sum()
    };
    let target = u.max(f64::MIN_POSITIVE).ln();
    let (mut lo, mut hi) = (0.0, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if log_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Runs `f` once per seed under `exec`; results come back in seed order.
pub fn replicate<R, F>(seeds: &[u64], exec: Execution, f: F) -> Vec<(u64, R)>
where
    R: Send,
    F: Fn(u64) -> R + Sync + Send,
{
    exec.map(seeds.to_vec(), |s| (s, f(s)))
}
