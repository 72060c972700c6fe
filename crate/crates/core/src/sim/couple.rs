//! Three queues on one probability space.
//!
//! One skeleton `(T_n, c_n, B_n)` and one uniform `U_m` per customer drive
//! all three queues. Customer `m` of batch `n` stays for
//!
//! ```text
//! S_m = -log(U_m) / mu_{c_n}     in the original queue,
//! S̄_m = -log(U_m) / mu_min       in Queue 1,
//! S̲_m = -log(U_m) / mu_max       in Queue 2,
//! ```
//!
//! so `S̲_m <= S_m <= S̄_m` and hence `L2(t) <= |L(t)| <= L1(t)` on every path.
//! Both inequalities survive floating point: division and addition are
//! correctly rounded and therefore monotone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Open01;
use serde::Serialize;

use super::{
    check_times, exp_sample, Background, BackgroundMove, SimError, DEFAULT_MAX_BATCH, SKELETON_STREAM, UNIFORM_STREAM,
};
use crate::model::ValidatedModel;

#[derive(Debug, Clone)]
pub struct CoupleOptions {
    pub horizon: f64,
    pub max_batch: u64,
    /// Upper bound on the number of customers in the skeleton.
    pub max_customers: u64,
    /// Starting phase; drawn from the background stationary law when `None`.
    pub initial_phase: Option<usize>,
}

impl CoupleOptions {
    pub fn new(horizon: f64) -> Self {
        Self {
            horizon,
            max_batch: DEFAULT_MAX_BATCH,
            max_customers: 20_000_000,
            initial_phase: None,
        }
    }
}

/// The shared arrival skeleton.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventSkeleton {
    /// `T_n`, increasing.
    pub arrival_times: Vec<f64>,
    /// `c_n`.
    pub classes: Vec<usize>,
    /// `B_n`.
    pub batch_sizes: Vec<u64>,
    /// `U_m`, one per customer in arrival order.
    pub uniforms: Vec<f64>,
    /// Background phase change points `(time, phase)`, starting at 0.
    pub phase_path: Vec<(f64, usize)>,
}

impl EventSkeleton {
    /// `A_n = B_1 + ... + B_n`, with `A_0 = 0`.
    pub fn cumulative_counts(&self) -> Vec<u64> {
        std::iter::once(0)
            .chain(self.batch_sizes.iter().scan(0u64, |acc, &b| {
                *acc += b;
                Some(*acc)
            }))
            .collect()
    }
}

/// `(S, S̄, S̲)` for one uniform.
pub fn service_times(u: f64, mu_class: f64, mu_min: f64, mu_max: f64) -> (f64, f64, f64) {
    let e = -u.ln();
    (e / mu_class, e / mu_min, e / mu_max)
}

/// Queue lengths right after every event epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoupledEpoch<'a> {
    pub time: f64,
    pub phase: usize,
    /// `|L(t)|`.
    pub total: u64,
    /// `L1(t)`.
    pub queue1: u64,
    /// `L2(t)`.
    pub queue2: u64,
    /// `L_v(t)` for the original queue.
    pub per_class: &'a [u64],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoupledTrace {
    pub seed: u64,
    pub horizon: f64,
    pub classes: usize,
    pub customers: u64,
    times: Vec<f64>,
    phases: Vec<usize>,
    total: Vec<u64>,
    queue1: Vec<u64>,
    queue2: Vec<u64>,
    per_class: Vec<u64>,
    #[serde(skip)]
    pub skeleton: EventSkeleton,
}

impl CoupledTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn epoch(&self, i: usize) -> CoupledEpoch<'_> {
        CoupledEpoch {
            time: self.times[i],
            phase: self.phases[i],
            total: self.total[i],
            queue1: self.queue1[i],
            queue2: self.queue2[i],
            per_class: &self.per_class[i * self.classes..(i + 1) * self.classes],
        }
    }

    pub fn epochs(&self) -> impl Iterator<Item = CoupledEpoch<'_>> {
        (0..self.len()).map(|i| self.epoch(i))
    }

    /// `|L|` as `(time, level)` change points.
    pub fn original_path(&self) -> Vec<(f64, u64)> {
        self.times.iter().copied().zip(self.total.iter().copied()).collect()
    }

    /// Time at each level of `|L|` after `burn_in`, for levels below `levels`.
    pub fn occupancy(&self, burn_in: f64, levels: usize) -> Vec<f64> {
        let mut bins = vec![0.0; levels];
        for i in 0..self.len() {
            let a = self.times[i].max(burn_in);
            let b = self.times.get(i + 1).copied().unwrap_or(self.horizon);
            if b > a {
                if let Some(slot) = bins.get_mut(self.total[i] as usize) {
                    *slot += b - a;
                }
            }
        }
        bins
    }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Arrival { batch: usize },
    Depart { queue: u8, class: usize },
    Phase { phase: usize },
}

/// Generates one skeleton and evaluates all three paths at every epoch,
/// failing with `OrderingViolated` if `L2 <= |L| <= L1` ever breaks.
pub fn couple(model: &ValidatedModel, opts: &CoupleOptions, seed: u64) -> Result<CoupledTrace, SimError> {
    check_times(opts.horizon, 0.0)?;
    let bg = Background::new(model)?;
    let horizon = opts.horizon;
    let mu = &bg.service_rates;
    let mu_min = mu.iter().copied().fold(f64::INFINITY, f64::min);
    let mu_max = mu.iter().copied().fold(0.0, f64::max);
    let k = mu.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SKELETON_STREAM);
    let mut phase = bg.initial_phase(&mut rng, opts.initial_phase);
    let mut skeleton = EventSkeleton {
        arrival_times: Vec::new(),
        classes: Vec::new(),
        batch_sizes: Vec::new(),
        uniforms: Vec::new(),
        phase_path: vec![(0.0, phase)],
    };
    let mut customers = 0u64;
    let mut t = 0.0;
    loop {
        t += exp_sample(&mut rng, bg.rate(phase));
        if t >= horizon {
            break;
        }
        let (to, mv) = bg.choose(&mut rng, phase);
        if to != phase {
            skeleton.phase_path.push((t, to));
        }
        phase = to;
        if let BackgroundMove::Arrival { stream } = mv {
            let b = bg.batch(&mut rng, stream, opts.max_batch);
            customers = customers.saturating_add(b);
            if customers > opts.max_customers {
                return Err(SimError::TooManyCustomers {
                    limit: opts.max_customers,
                });
            }
            skeleton.arrival_times.push(t);
            skeleton.classes.push(stream);
            skeleton.batch_sizes.push(b);
        }
    }

    let mut urng = ChaCha8Rng::seed_from_u64(seed);
    urng.set_stream(UNIFORM_STREAM);
    skeleton.uniforms = (0..customers).map(|_| urng.sample(Open01)).collect();

    let mut events: Vec<(f64, Kind)> = Vec::with_capacity(skeleton.arrival_times.len() + 3 * customers as usize);
    let mut m = 0usize;
    for (n, (&tn, (&c, &b))) in skeleton
        .arrival_times
        .iter()
        .zip(skeleton.classes.iter().zip(&skeleton.batch_sizes))
        .enumerate()
    {
        events.push((tn, Kind::Arrival { batch: n }));
        for _ in 0..b {
            let (s, s_bar, s_under) = service_times(skeleton.uniforms[m], mu[c], mu_min, mu_max);
            for (queue, dur) in [(0u8, s), (1, s_bar), (2, s_under)] {
                let end = tn + dur;
                if end < horizon {
                    events.push((end, Kind::Depart { queue, class: c }));
                }
            }
            m += 1;
        }
    }
    for &(tp, p) in &skeleton.phase_path[1..] {
        events.push((tp, Kind::Phase { phase: p }));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut trace = CoupledTrace {
        seed,
        horizon,
        classes: k,
        customers,
        times: vec![0.0],
        phases: vec![skeleton.phase_path[0].1],
        total: vec![0],
        queue1: vec![0],
        queue2: vec![0],
        per_class: vec![0; k],
        skeleton: EventSkeleton::default_empty(),
    };
    let (mut l, mut l1, mut l2) = (0u64, 0u64, 0u64);
    let mut per_class = vec![0u64; k];
    let mut cur_phase = skeleton.phase_path[0].1;
    let mut i = 0;
    while i < events.len() {
        let time = events[i].0;
        // apply every event at this epoch before evaluating
        while i < events.len() && events[i].0 == time {
            match events[i].1 {
                Kind::Arrival { batch } => {
                    let b = skeleton.batch_sizes[batch];
                    l += b;
                    l1 += b;
                    l2 += b;
                    per_class[skeleton.classes[batch]] += b;
                }
                Kind::Depart { queue: 0, class } => {
                    l -= 1;
                    per_class[class] -= 1;
                }
                Kind::Depart { queue: 1, .. } => l1 -= 1,
                Kind::Depart { .. } => l2 -= 1,
                Kind::Phase { phase } => cur_phase = phase,
            }
            i += 1;
        }
        if !(l2 <= l && l <= l1) {
            return Err(SimError::OrderingViolated { time, l, l1, l2 });
        }
        trace.times.push(time);
        trace.phases.push(cur_phase);
        trace.total.push(l);
        trace.queue1.push(l1);
        trace.queue2.push(l2);
        trace.per_class.extend_from_slice(&per_class);
    }
    trace.skeleton = skeleton;
    Ok(trace)
}

impl EventSkeleton {
    fn default_empty() -> Self {
        Self {
            arrival_times: Vec::new(),
            classes: Vec::new(),
            batch_sizes: Vec::new(),
            uniforms: Vec::new(),
            phase_path: Vec::new(),
        }
    }
}
