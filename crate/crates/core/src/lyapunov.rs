//! Foster-Lyapunov drift for `v(k, i) = log(k + e)`.
//!
//! For a single-rate view the drift vectors `y(k) = (Q v)(k)` are
//!
//! ```text
//! y(0) = D(0) e + sum_l log(l+e) D(l) e
//! y(k) = k mu log(1 - 1/(k+e)) e + tau(k),   tau(k) = sum_l log(1 + l/(k+e)) D(l) e
//! ```
//!
//! and `tau(k) = sum_v (A_v e) E[log(1 + B_v/(k+e))]` is evaluated from the
//! batch laws. A certificate fixes `delta = (mu/2)(log(1+e) - 1)`, the
//! largest `delta` with `k mu log(1 - 1/(k+e)) <= -2 delta` for all `k >= 1`,
//! then the smallest `K` with `tau(K+1) <= delta e`.

use std::f64::consts::E;

use serde::Serialize;
use thiserror::Error;

use crate::exec::Execution;
use crate::model::BmapView;

/// Default `verified_range = 10 K + 100`.
pub fn default_verified_range(k: u64) -> u64 {
    k.saturating_mul(10).saturating_add(100)
}

/// Upper limit on `K` searched by [`find_k`] unless overridden.
pub const DEFAULT_SCAN_LIMIT: u64 = 1 << 40;

/// Relative slack on the certificate comparisons, absorbing rounding in the
/// drift evaluation.
const CMP_SLACK: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LyapunovError {
    #[error("drift diverges: stream '{stream}' has an infinite logarithmic moment")]
    DivergentDrift { stream: String },
    #[error("no K <= {limit} brings the tail drift below delta = {delta}")]
    NoSuchK { delta: f64, limit: u64 },
    #[error("model is not stable; no certificate exists")]
    NotStable,
    #[error("service rates differ across streams; the level chain needs a single rate (use q1 or q2)")]
    NotSingleRate,
    #[error("delta must be positive, got {0}")]
    BadDelta(f64),
    #[error("certificate inequality violated at {} level(s)", violations.len())]
    CertificateFailed { violations: Vec<Violation> },
}

impl LyapunovError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::DivergentDrift { .. } => "DivergentDrift",
            Self::NoSuchK { .. } => "NoSuchK",
            Self::NotStable => "NotStable",
            Self::NotSingleRate => "NotSingleRate",
            Self::BadDelta(_) => "BadDelta",
            Self::CertificateFailed { .. } => "CertificateFailed",
        }
    }
}

/// `v(k) = log(k + e)`; exactly 1 at `k = 0`.
pub fn lyapunov_value(k: u64) -> f64 {
    if k == 0 {
        1.0
    } else {
        (k as f64 + E).ln()
    }
}

/// `k log(1 - 1/(k+e))`, the departure part of `y(k)` per unit `mu`.
pub fn departure_term(k: u64) -> f64 {
    let kf = k as f64;
    kf * (-1.0 / (kf + E)).ln_1p()
}

/// `(mu/2)(log(1+e) - 1)`.
pub fn delta_star(mu: f64) -> f64 {
    0.5 * mu * ((1.0 + E).ln() - 1.0)
}

fn check_single_rate(view: &BmapView) -> Result<f64, LyapunovError> {
    view.single_rate().ok_or(LyapunovError::NotSingleRate)
}

/// `tau(k) = sum_l log(1 + l/(k+e)) D(l) e` for `k >= 0`, with the summed
/// remainder bound of the per-stream series.
pub fn tail_drift(view: &BmapView, k: u64) -> Result<(Vec<f64>, f64), LyapunovError> {
    let c = k as f64 + E;
    let mut out = vec![0.0; view.phases()];
    let mut bound = 0.0;
    for (label, a, b) in view.arrivals() {
        let s = b.log_shift_moment(c).ok_or_else(|| LyapunovError::DivergentDrift {
            stream: label.to_string(),
        })?;
        for (o, r) in out.iter_mut().zip(a.row_sums()) {
            if r > 0.0 {
                *o += r * s.value;
                bound += r * s.error_bound;
            }
        }
    }
    Ok((out, bound))
}

/// `y(k)`.
pub fn drift_vector(view: &BmapView, k: u64) -> Result<Vec<f64>, LyapunovError> {
    let mu = check_single_rate(view)?;
    if k == 0 {
        let mut y = view.d0().row_sums();
        for (label, a, b) in view.arrivals() {
            let m = b.log_moment_series().ok_or_else(|| LyapunovError::DivergentDrift {
                stream: label.to_string(),
            })?;
            for (yi, r) in y.iter_mut().zip(a.row_sums()) {
                if r > 0.0 {
                    *yi += r * m.value;
                }
            }
        }
        return Ok(y);
    }
    let (tau, _) = tail_drift(view, k)?;
    let dep = mu * departure_term(k);
    Ok(tau.into_iter().map(|t| dep + t).collect())
}

/// `y(k)` for each `k` in `range`, evaluated under `exec`.
pub fn drift_table(
    view: &BmapView,
    range: std::ops::Range<u64>,
    exec: Execution,
) -> Result<Vec<Vec<f64>>, LyapunovError> {
    exec.map_range(range, |k| drift_vector(view, k)).into_iter().collect()
}

fn max_entry(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// The smallest `K >= 0` with `tau(K+1) <= delta e`.
///
/// `tau` is componentwise nonincreasing in `k`, so the search gallops
/// upward from `k = 1` and then bisects.
pub fn find_k(view: &BmapView, delta: f64, scan_limit: u64) -> Result<u64, LyapunovError> {
    if !(delta > 0.0) {
        return Err(LyapunovError::BadDelta(delta));
    }
    let ok = |k: u64| -> Result<bool, LyapunovError> { Ok(max_entry(&tail_drift(view, k)?.0) <= delta) };
    if ok(1)? {
        return Ok(0);
    }
    // invariant: !ok(lo), ok(hi)
    let mut lo = 1u64;
    let mut hi = 2u64;
    loop {
        if hi > scan_limit.saturating_add(1) {
            return Err(LyapunovError::NoSuchK {
                delta,
                limit: scan_limit,
            });
        }
        if ok(hi)? {
            break;
        }
        lo = hi;
        hi = hi.saturating_mul(2);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if hi - 1 > scan_limit {
        return Err(LyapunovError::NoSuchK {
            delta,
            limit: scan_limit,
        });
    }
    Ok(hi - 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    /// `y(0) <= C e`.
    Origin,
    /// `y(k) <= (C - 2 delta) e` for `1 <= k <= K`.
    Inner,
    /// `y(k) <= -delta e` for `k > K`.
    Outer,
    /// `tau(k+1) <= tau(k)` componentwise.
    TailMonotone,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub k: u64,
    pub phase: usize,
    pub inequality: Inequality,
    pub value: f64,
    pub bound: f64,
}

/// Constants `(delta, K, C)` with `Q v <= -delta e + (delta + C) 1_K`,
/// verified numerically on `0..=verified_range`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftCertificate {
    pub delta: f64,
    #[serde(rename = "K")]
    pub k: u64,
    #[serde(rename = "C")]
    pub c: f64,
    pub mu: f64,
    pub verified_range: u64,
    /// `y(k)` for `k = 0..drift_vectors.len()`.
    pub drift_vectors: Vec<Vec<f64>>,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Copy)]
pub struct CertificateOptions {
    /// Defaults to `10 K + 100`.
    pub verified_range: Option<u64>,
    /// Number of drift vectors kept in the certificate, from `k = 0`.
    pub report_levels: u64,
    pub scan_limit: u64,
    pub exec: Execution,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self {
            verified_range: None,
            report_levels: 51,
            scan_limit: DEFAULT_SCAN_LIMIT,
            exec: Execution::default(),
        }
    }
}

pub fn foster_certificate(view: &BmapView) -> Result<DriftCertificate, LyapunovError> {
    foster_certificate_with(view, CertificateOptions::default())
}

pub fn foster_certificate_with(view: &BmapView, opts: CertificateOptions) -> Result<DriftCertificate, LyapunovError> {
    let mu = check_single_rate(view)?;
    let verdict = view.stability_verdict();
    let c = match verdict.bound {
        Some(c) if verdict.stable => c,
        _ => return Err(LyapunovError::NotStable),
    };
    let delta = delta_star(mu);
    let k_cap = find_k(view, delta, opts.scan_limit)?;
    let range = opts.verified_range.unwrap_or_else(|| default_verified_range(k_cap));

    let y0 = drift_vector(view, 0)?;
    // tau(k) for k = 1..=range+1; y(k) is rebuilt from it
    let taus: Vec<Vec<f64>> = opts
        .exec
        .map_range(1..range + 2, |k| tail_drift(view, k).map(|t| t.0))
        .into_iter()
        .collect::<Result<_, _>>()?;

    let slack = |bound: f64, scale: f64| bound + CMP_SLACK * scale.abs().max(bound.abs());
    let mut violations = Vec::new();
    for (i, &v) in y0.iter().enumerate() {
        if v > slack(c, v) {
            violations.push(Violation {
                k: 0,
                phase: i,
                inequality: Inequality::Origin,
                value: v,
                bound: c,
            });
        }
    }
    let mut drift_vectors = vec![y0];
    for k in 1..=range {
        let tau = &taus[k as usize - 1];
        let dep = mu * departure_term(k);
        let y: Vec<f64> = tau.iter().map(|t| dep + t).collect();
        let (inequality, bound) = if k <= k_cap {
            (Inequality::Inner, c - 2.0 * delta)
        } else {
            (Inequality::Outer, -delta)
        };
        for (i, &v) in y.iter().enumerate() {
            // the departure term and tau are both O(1): scale the slack by them
            if v > slack(bound, dep.abs() + tau[i].abs()) {
                violations.push(Violation {
                    k,
                    phase: i,
                    inequality,
                    value: v,
                    bound,
                });
            }
        }
        let next = &taus[k as usize];
        for (i, (a, b)) in tau.iter().zip(next).enumerate() {
            if *b > slack(*a, *a) {
                violations.push(Violation {
                    k,
                    phase: i,
                    inequality: Inequality::TailMonotone,
                    value: *b,
                    bound: *a,
                });
            }
        }
        if k < opts.report_levels {
            drift_vectors.push(y);
        }
    }
    if !violations.is_empty() {
        return Err(LyapunovError::CertificateFailed { violations });
    }
    Ok(DriftCertificate {
        delta,
        k: k_cap,
        c,
        mu,
        verified_range: range,
        drift_vectors,
        violations,
    })
}
