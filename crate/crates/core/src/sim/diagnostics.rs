//! Returns-to-empty bookkeeping for a level path.

use serde::Serialize;

/// Empirical stability signature of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityDiagnostics {
    /// Transitions into level 0 after burn-in.
    pub visits_to_empty: u64,
    /// Mean time between consecutive returns to 0 after burn-in; `None`
    /// with fewer than two returns.
    pub mean_recurrence: Option<f64>,
    /// The final excursion away from 0 was still open at the horizon.
    pub censored: bool,
    /// Length of that open excursion (measured from burn-in if it started
    /// earlier); 0 when not censored.
    pub open_excursion: f64,
    pub max_level_seen: u64,
    pub burn_in: f64,
    pub horizon: f64,
}

/// Streaming accumulator fed by the simulators.
#[derive(Debug, Clone)]
pub(crate) struct DiagnosticsBuilder {
    burn_in: f64,
    first_return: Option<f64>,
    last_return: Option<f64>,
    /// Time the current excursion left 0 (clipped to burn-in).
    left_empty: Option<f64>,
    visits: u64,
    max_level: u64,
}

impl DiagnosticsBuilder {
    pub fn new(burn_in: f64) -> Self {
        Self {
            burn_in,
            first_return: None,
            last_return: None,
            left_empty: None,
            visits: 0,
            max_level: 0,
        }
    }

    pub fn observe_level(&mut self, level: u64) {
        self.max_level = self.max_level.max(level);
    }

    /// The level left 0 at time `t`.
    pub fn left_empty(&mut self, t: f64) {
        self.left_empty = Some(t.max(self.burn_in));
    }

    /// The level hit 0 at time `t`.
    pub fn returned(&mut self, t: f64) {
        self.left_empty = None;
        if t < self.burn_in {
            return;
        }
        self.visits += 1;
        self.first_return.get_or_insert(t);
        self.last_return = Some(t);
    }

    pub fn finish(self, horizon: f64, final_level: u64) -> StabilityDiagnostics {
        let mean_recurrence = match (self.first_return, self.last_return) {
            (Some(a), Some(b)) if self.visits >= 2 => Some((b - a) / (self.visits - 1) as f64),
            _ => None,
        };
        let censored = final_level > 0;
        let open_excursion = if censored {
            horizon - self.left_empty.unwrap_or(self.burn_in).max(self.burn_in)
        } else {
            0.0
        };
        StabilityDiagnostics {
            visits_to_empty: self.visits,
            mean_recurrence,
            censored,
            open_excursion,
            max_level_seen: self.max_level,
            burn_in: self.burn_in,
            horizon,
        }
    }
}

/// Diagnostics of a piecewise-constant level path given as `(time, level)`
/// change points starting at time 0.
pub fn diagnostics(path: &[(f64, u64)], horizon: f64, burn_in: f64) -> StabilityDiagnostics {
    assert!(burn_in < horizon, "burn-in must precede the horizon");
    let mut b = DiagnosticsBuilder::new(burn_in);
    let mut prev = 0u64;
    for &(t, level) in path {
        if t > horizon {
            break;
        }
        b.observe_level(level);
        if prev == 0 && level > 0 {
            b.left_empty(t);
        } else if prev > 0 && level == 0 {
            b.returned(t);
        }
        prev = level;
    }
    b.finish(horizon, prev)
}
