//! JSON model files.
//!
//! ```json
//! {
//!   "d": 2,
//!   "d0": [[-2.2, 0.7], [0.4, -1.4]],
//!   "streams": [
//!     {"label": "a", "rate_matrix": [[1.0, 0.5], [0.2, 0.8]],
//!      "batch": {"family": "geometric", "params": {"p": 0.5}}, "service_rate": 1.0}
//!   ]
//! }
//! ```
//!
//! Unknown fields are rejected at every level.

use serde::{Deserialize, Serialize};

use super::{ArrivalStream, BatchSizeDistribution, BatchSpec, MbmapModel, ModelError};
use crate::matrix::PhaseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub d: usize,
    pub d0: Vec<Vec<f64>>,
    pub streams: Vec<StreamFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamFile {
    pub label: String,
    pub rate_matrix: Vec<Vec<f64>>,
    pub batch: BatchSpec,
    pub service_rate: f64,
}

impl ModelFile {
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::BadInput(e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("model files always serialize")
    }

    /// Builds the in-memory model; dimensions are checked against `d`.
    pub fn to_model(&self) -> Result<MbmapModel, ModelError> {
        let matrix = |name: &str, rows: &[Vec<f64>]| {
            if rows.len() != self.d {
                return Err(ModelError::BadMatrix(format!(
                    "{name} has {} rows, expected d = {}",
                    rows.len(),
                    self.d
                )));
            }
            PhaseMatrix::from_rows(rows.to_vec()).map_err(|e| ModelError::BadMatrix(format!("{name}: {e}")))
        };
        let d0 = matrix("d0", &self.d0)?;
        let streams = self
            .streams
            .iter()
            .map(|s| {
                Ok(ArrivalStream::new(
                    s.label.clone(),
                    matrix(&format!("stream '{}' rate_matrix", s.label), &s.rate_matrix)?,
                    BatchSizeDistribution::try_from(&s.batch)?,
                    s.service_rate,
                ))
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        Ok(MbmapModel::new(d0, streams))
    }

    /// The normalized file for a model: trailing zero pmf entries dropped.
    pub fn from_model(model: &MbmapModel) -> Self {
        Self {
            d: model.d0.dim(),
            d0: model.d0.to_rows(),
            streams: model
                .streams
                .iter()
                .map(|s| StreamFile {
                    label: s.label.clone(),
                    rate_matrix: s.rate_matrix.to_rows(),
                    batch: BatchSpec::from(&s.batch),
                    service_rate: s.service_rate,
                })
                .collect(),
        }
    }
}
