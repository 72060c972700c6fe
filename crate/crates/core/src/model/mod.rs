//! BMAP / MBMAP model definitions, validation and the log-moment stability
//! criterion.
//!
//! A model is a phase-change matrix `D(0)` plus `K >= 1` arrival streams. Each
//! stream `v` carries a nonnegative rate matrix `A_v`, a batch-size law `p_v`
//! and an exponential service rate `mu_v`, with batch matrices
//! `D_v(k) = A_v p_v(k)`. The single-class BMAP is the `K = 1` case.
//!
//! The queue is ergodic iff `sum_k log(k+e) D_*(k) e` is finite, where
//! `D_*(k) = sum_v D_v(k)`. Under the separable stream form this vector is
//! `sum_v (A_v e) * E[log(B_v + e)]`, so the verdict reduces to one scalar log
//! moment per stream.

mod batch;
mod file;

pub use batch::{BatchSizeDistribution, BatchSpec, FiniteLaw, GeometricLaw, LogHeavyLaw, ZetaLaw, TAIL_START};
pub use file::{ModelFile, StreamFile};

use serde::Serialize;
use thiserror::Error;

use crate::gth::{self, DenseGenerator};
use crate::matrix::PhaseMatrix;

/// Absolute tolerance on the row sums of `D`.
pub const GENERATOR_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("D = D(0) + sum A_v is not a generator: row {row} sums to {residual:e}")]
    NonGenerator { row: usize, residual: f64 },
    #[error("background generator D is reducible (off-diagonal support is not strongly connected)")]
    Reducible,
    #[error("stream '{stream}' has zero total arrival rate")]
    NoArrivals { stream: String },
    #[error("invalid batch-size law: {0}")]
    BadPmf(String),
    #[error("invalid matrix: {0}")]
    BadMatrix(String),
    #[error("stream '{stream}' has invalid service rate {rate}")]
    BadServiceRate { stream: String, rate: f64 },
    #[error("invalid model: {0}")]
    BadInput(String),
    #[error("background stationary solve failed: {0}")]
    SolveFailed(String),
}

impl ModelError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Self::NonGenerator { .. } => "NonGenerator",
            Self::Reducible => "Reducible",
            Self::NoArrivals { .. } => "NoArrivals",
            Self::BadPmf(_) => "BadPmf",
            Self::BadMatrix(_) => "BadMatrix",
            Self::BadServiceRate { .. } => "BadServiceRate",
            Self::BadInput(_) => "BadInput",
            Self::SolveFailed(_) => "SolveFailed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalStream {
    pub label: String,
    pub rate_matrix: PhaseMatrix,
    pub batch: BatchSizeDistribution,
    pub service_rate: f64,
}

impl ArrivalStream {
    pub fn new(
        label: impl Into<String>,
        rate_matrix: PhaseMatrix,
        batch: BatchSizeDistribution,
        service_rate: f64,
    ) -> Self {
        Self {
            label: label.into(),
            rate_matrix,
            batch,
            service_rate,
        }
    }

    /// `D_v(k) = A_v p_v(k)`.
    pub fn batch_matrix(&self, k: u64) -> PhaseMatrix {
        self.rate_matrix.scaled(self.batch.pmf(k))
    }
}

/// An unvalidated model.
#[derive(Debug, Clone, PartialEq)]
pub struct MbmapModel {
    pub d0: PhaseMatrix,
    pub streams: Vec<ArrivalStream>,
}

/// A model whose invariants have been checked. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedModel {
    model: MbmapModel,
    generator: PhaseMatrix,
    /// Row-sum tolerance the model was accepted under.
    tol: f64,
}

impl MbmapModel {
    pub fn new(d0: PhaseMatrix, streams: Vec<ArrivalStream>) -> Self {
        Self { d0, streams }
    }

    pub fn validate(self) -> Result<ValidatedModel, ModelError> {
        self.validate_with(GENERATOR_TOL)
    }

    /// Checks every model invariant; `tol` bounds `|(D e)_i|`.
    pub fn validate_with(self, tol: f64) -> Result<ValidatedModel, ModelError> {
        let d = self.d0.dim();
        if self.streams.is_empty() {
            return Err(ModelError::BadInput("model needs at least one arrival stream".into()));
        }
        if !self.d0.has_subgenerator_signs() {
            return Err(ModelError::BadMatrix(
                "D(0) needs a strictly negative diagonal and nonnegative off-diagonal entries".into(),
            ));
        }
        let mut labels = std::collections::HashSet::new();
        for s in &self.streams {
            if s.label.is_empty() || !labels.insert(s.label.as_str()) {
                return Err(ModelError::BadInput(format!(
                    "stream labels must be nonempty and unique ('{}')",
                    s.label
                )));
            }
            if s.rate_matrix.dim() != d {
                return Err(ModelError::BadMatrix(format!(
                    "stream '{}' rate matrix is {}x{}, expected {d}x{d}",
                    s.label,
                    s.rate_matrix.dim(),
                    s.rate_matrix.dim()
                )));
            }
            if !s.rate_matrix.is_nonnegative() {
                return Err(ModelError::BadMatrix(format!(
                    "stream '{}' rate matrix has a negative entry",
                    s.label
                )));
            }
            if s.rate_matrix.is_zero() {
                return Err(ModelError::NoArrivals {
                    stream: s.label.clone(),
                });
            }
            if !(s.service_rate > 0.0 && s.service_rate.is_finite()) {
                return Err(ModelError::BadServiceRate {
                    stream: s.label.clone(),
                    rate: s.service_rate,
                });
            }
        }
        let generator = self
            .streams
            .iter()
            .fold(self.d0.clone(), |acc, s| &acc + &s.rate_matrix);
        for (row, residual) in generator.row_sums().into_iter().enumerate() {
            if residual.abs() > tol {
                return Err(ModelError::NonGenerator { row, residual });
            }
        }
        if !generator.is_irreducible() {
            return Err(ModelError::Reducible);
        }
        Ok(ValidatedModel {
            model: self,
            generator,
            tol,
        })
    }
}

impl ValidatedModel {
    pub fn model(&self) -> &MbmapModel {
        &self.model
    }

    pub fn phases(&self) -> usize {
        self.model.d0.dim()
    }

    pub fn d0(&self) -> &PhaseMatrix {
        &self.model.d0
    }

    pub fn streams(&self) -> &[ArrivalStream] {
        &self.model.streams
    }

    /// The background generator `D = D(0) + sum_v A_v`.
    pub fn generator(&self) -> &PhaseMatrix {
        &self.generator
    }

    pub fn into_model(self) -> MbmapModel {
        self.model
    }

    /// Stationary law `theta` of the background chain: `theta D = 0`,
    /// `theta e = 1`, `theta > 0`.
    pub fn background_stationary(&self) -> Result<Vec<f64>, ModelError> {
        let d = self.phases();
        let mut q = DenseGenerator::zeros(d);
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    q.set(i, j, self.generator[(i, j)]);
                }
            }
        }
        q.make_conservative();
        let theta = gth::stationary(&q).map_err(|e| ModelError::SolveFailed(format!("{e:?}")))?;
        let residual = self
            .generator
            .left_mul(&theta)
            .into_iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        if residual > self.tol.max(GENERATOR_TOL) || theta.iter().any(|&t| !(t > 0.0)) {
            return Err(ModelError::SolveFailed(format!("residual {residual:e}")));
        }
        Ok(theta)
    }

    /// Long-run batch arrival rate per stream, `theta A_v e`.
    pub fn batch_rates(&self) -> Result<Vec<f64>, ModelError> {
        let theta = self.background_stationary()?;
        Ok(self
            .streams()
            .iter()
            .map(|s| theta.iter().zip(s.rate_matrix.row_sums()).map(|(t, r)| t * r).sum())
            .collect())
    }

    /// Evaluates the log-moment condition.
    pub fn stability_verdict(&self) -> StabilityVerdict {
        let d = self.phases();
        let mut vector = vec![0.0; d];
        let mut divergent = Vec::new();
        for s in self.streams() {
            let moment = s.batch.log_moment();
            if moment.is_infinite() {
                divergent.push(s.label.clone());
            }
            for (v, rate) in vector.iter_mut().zip(s.rate_matrix.row_sums()) {
                // phases with no arrivals from this stream contribute nothing
                if rate > 0.0 {
                    *v += rate * moment;
                }
            }
        }
        let stable = vector.iter().all(|v| v.is_finite());
        let bound = stable.then(|| vector.iter().copied().fold(0.0, f64::max));
        StabilityVerdict {
            stable,
            log_moment_vector: vector,
            bound,
            divergent_streams: divergent,
        }
    }

    /// The original queue plus the two single-rate bounding queues, all fed
    /// by the same arrival process.
    pub fn flatten(&self) -> FlattenedViews {
        let rates: Vec<f64> = self.streams().iter().map(|s| s.service_rate).collect();
        let mu_min = rates.iter().copied().fold(f64::INFINITY, f64::min);
        let mu_max = rates.iter().copied().fold(0.0, f64::max);
        let view = |selector, rates: Vec<f64>| BmapView {
            selector,
            d0: self.model.d0.clone(),
            arrivals: self
                .streams()
                .iter()
                .map(|s| (s.label.clone(), s.rate_matrix.clone(), s.batch.clone()))
                .collect(),
            service_rates: rates,
        };
        let k = rates.len();
        FlattenedViews {
            original: view(QueueSelector::Original, rates),
            queue1: view(QueueSelector::Queue1, vec![mu_min; k]),
            queue2: view(QueueSelector::Queue2, vec![mu_max; k]),
        }
    }

    pub fn view(&self, selector: QueueSelector) -> BmapView {
        let views = self.flatten();
        match selector {
            QueueSelector::Original => views.original,
            QueueSelector::Queue1 => views.queue1,
            QueueSelector::Queue2 => views.queue2,
        }
    }
}

/// Outcome of the log-moment test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityVerdict {
    pub stable: bool,
    /// `sum_k log(k+e) D_*(k) e`, entrywise; `+inf` where divergent.
    #[serde(serialize_with = "crate::ext_real::serialize_vec")]
    pub log_moment_vector: Vec<f64>,
    /// Smallest valid `C` (the largest entry) when stable.
    #[serde(rename = "C")]
    pub bound: Option<f64>,
    pub divergent_streams: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueSelector {
    /// The class structure as given.
    Original,
    /// Every customer served at `mu_min`.
    #[serde(rename = "q1")]
    Queue1,
    /// Every customer served at `mu_max`.
    #[serde(rename = "q2")]
    Queue2,
}

impl std::str::FromStr for QueueSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "original" => Ok(Self::Original),
            "q1" => Ok(Self::Queue1),
            "q2" => Ok(Self::Queue2),
            other => Err(format!("unknown queue '{other}' (expected original, q1 or q2)")),
        }
    }
}

impl std::fmt::Display for QueueSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Original => "original",
            Self::Queue1 => "q1",
            Self::Queue2 => "q2",
        })
    }
}

#[derive(Debug, Clone)]
pub struct FlattenedViews {
    pub original: BmapView,
    pub queue1: BmapView,
    pub queue2: BmapView,
}

/// A BMAP `{D(0), D_*(k)}` together with per-stream service rates.
///
/// The level process `(L, J)` is a Markov chain of the block form consumed by
/// `ctmc` and `lyapunov` only when every stream shares one rate; see
/// [`BmapView::single_rate`].
#[derive(Debug, Clone)]
pub struct BmapView {
    pub selector: QueueSelector,
    d0: PhaseMatrix,
    arrivals: Vec<(String, PhaseMatrix, BatchSizeDistribution)>,
    service_rates: Vec<f64>,
}

impl BmapView {
    pub fn phases(&self) -> usize {
        self.d0.dim()
    }

    pub fn d0(&self) -> &PhaseMatrix {
        &self.d0
    }

    pub fn service_rates(&self) -> &[f64] {
        &self.service_rates
    }

    /// The common service rate, when all streams share one.
    pub fn single_rate(&self) -> Option<f64> {
        let first = self.service_rates[0];
        self.service_rates.iter().all(|&m| m == first).then_some(first)
    }

    pub fn arrivals(&self) -> impl Iterator<Item = (&str, &PhaseMatrix, &BatchSizeDistribution)> {
        self.arrivals.iter().map(|(l, a, b)| (l.as_str(), a, b))
    }

    /// `D_*(k) = sum_v A_v p_v(k)` for `k >= 1`.
    pub fn batch_matrix(&self, k: u64) -> PhaseMatrix {
        let d = self.phases();
        self.arrivals
            .iter()
            .fold(PhaseMatrix::zeros(d), |acc, (_, a, b)| &acc + &a.scaled(b.pmf(k)))
    }

    /// `sum_{l > m} D_*(l) = sum_v A_v P(B_v > m)`.
    pub fn overflow_matrix(&self, m: u64) -> PhaseMatrix {
        let d = self.phases();
        self.arrivals
            .iter()
            .fold(PhaseMatrix::zeros(d), |acc, (_, a, b)| &acc + &a.scaled(b.survival(m)))
    }

    /// `sum_{k>=1} D_*(k) e = sum_v A_v e`.
    pub fn arrival_rate_vector(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.phases()];
        for (_, a, _) in &self.arrivals {
            for (o, r) in out.iter_mut().zip(a.row_sums()) {
                *o += r;
            }
        }
        out
    }

    /// `sum_{k>=1} z^k D_*(k) e` from the analytic batch transforms.
    pub fn batch_transform_vector(&self, z: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.phases()];
        for (_, a, b) in &self.arrivals {
            let g = b.pgf(z);
            for (o, r) in out.iter_mut().zip(a.row_sums()) {
                *o += r * g;
            }
        }
        out
    }

    /// The stability verdict depends only on `D(0)` and `D_*(k)`.
    pub fn stability_verdict(&self) -> StabilityVerdict {
        let d = self.phases();
        let mut vector = vec![0.0; d];
        let mut divergent = Vec::new();
        for (label, a, b) in &self.arrivals {
            let moment = b.log_moment();
            if moment.is_infinite() {
                divergent.push(label.clone());
            }
            for (v, r) in vector.iter_mut().zip(a.row_sums()) {
                if r > 0.0 {
                    *v += r * moment;
                }
            }
        }
        let stable = vector.iter().all(|v| v.is_finite());
        StabilityVerdict {
            stable,
            bound: stable.then(|| vector.iter().copied().fold(0.0, f64::max)),
            log_moment_vector: vector,
            divergent_streams: divergent,
        }
    }
}
