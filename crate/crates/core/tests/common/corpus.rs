//! The model files under `models/`.

use std::path::PathBuf;

use bmapinf::{ModelError, ModelFile, ValidatedModel};

pub fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

pub fn file(name: &str) -> ModelFile {
    let path = models_dir().join(format!("{name}.json"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    ModelFile::from_json(&text).unwrap()
}

pub fn try_load(name: &str) -> Result<ValidatedModel, ModelError> {
    file_result(name)?.to_model()?.validate()
}

fn file_result(name: &str) -> Result<ModelFile, ModelError> {
    let path = models_dir().join(format!("{name}.json"));
    let text = std::fs::read_to_string(&path).map_err(|e| ModelError::BadInput(e.to_string()))?;
    ModelFile::from_json(&text)
}

pub fn load(name: &str) -> ValidatedModel {
    try_load(name).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Finite log-moment batches.
pub const STABLE: [&str; 4] = ["mx_finite", "mx_geometric", "mx_zeta25", "mx_logheavy30"];

/// LogHeavy with beta 0.5, 1.0, 1.5, 2.0.
pub const DIVERGENT: [&str; 4] = ["mx_logheavy05", "mx_logheavy10", "mx_logheavy15", "mx_logheavy20"];

/// Light-tailed stable models, including the Poisson and two-class ones.
pub const LIGHT: [&str; 4] = ["mx_finite", "mx_geometric", "poisson2", "two_class"];
