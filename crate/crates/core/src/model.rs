//! JSON persistence for fitted models.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::VotingEnsemble;
use crate::forest::Forest;
use crate::gbdt::BoostedModel;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("unsupported model format version {0} (expect {MODEL_FORMAT_VERSION})")]
    Version(u32),
    #[error("prediction failed: {0}")]
    Predict(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model_type", rename_all = "snake_case")]
pub enum Model {
    RandomForest(Forest),
    Gbdt(BoostedModel),
    SoftVoting(VotingEnsemble),
}

impl Model {
    /// Positive-class probability.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, ModelError> {
        match self {
            Model::RandomForest(m) => m
                .predict_proba(x)
                .map(|p| p[1])
                .map_err(|e| ModelError::Predict(e.to_string())),
            Model::Gbdt(m) => m
                .predict_proba(x)
                .map(|p| p[1])
                .map_err(|e| ModelError::Predict(e.to_string())),
            Model::SoftVoting(m) => m
                .soft_vote(x)
                .map_err(|e| ModelError::Predict(e.to_string())),
        }
    }

    pub fn classify(&self, x: &[f64], threshold: f64) -> Result<u8, ModelError> {
        Ok(u8::from(self.predict_proba(x)? >= threshold))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Envelope {
    version: u32,
    #[serde(flatten)]
    model: Model,
}

pub fn save_model(model: &Model, path: &Path) -> Result<(), ModelError> {
    let env = Envelope {
        version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    };
    fs::write(path, serde_json::to_string_pretty(&env)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model, ModelError> {
    let text = fs::read_to_string(path)?;
    let env: Envelope = serde_json::from_str(&text)?;
    if env.version != MODEL_FORMAT_VERSION {
        return Err(ModelError::Version(env.version));
    }
    Ok(env.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cart::{Criterion, TreeParams};
    use crate::ensemble::Member;
    use crate::forest::{fit_forest, ForestParams};
    use crate::synth::gaussian_blobs;

    fn small_forest() -> Forest {
        let (xs, ys) = gaussian_blobs(40, 40, 3, 2.0, 5);
        let params = ForestParams {
            n_trees: 3,
            tree: TreeParams {
                max_depth: 3,
                criterion: Criterion::Gini,
                max_features: 3,
                min_samples_leaf: 1,
                seed: 0,
            },
            seed: 9,
            bootstrap: true,
        };
        fit_forest(&xs, &ys, &params).unwrap()
    }

    #[test]
    fn roundtrip_preserves_predictions() {
        let forest = small_forest();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = Model::RandomForest(forest.clone());
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        let x = vec![0.1, -0.2, 0.3];
        assert_eq!(
            model.predict_proba(&x).unwrap(),
            loaded.predict_proba(&x).unwrap()
        );
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"model_type\": \"random_forest\""));
    }

    #[test]
    fn voting_model_roundtrip() {
        let e = VotingEnsemble::new(
            vec![
                Member::Forest(small_forest()),
                Member::Constant { p: 0.5 },
            ],
            0.5,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vote.json");
        save_model(&Model::SoftVoting(e), &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert!(matches!(loaded, Model::SoftVoting(_)));
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        std::fs::write(
            &path,
            r#"{"version": 99, "model_type": "soft_voting", "members": [{"kind":"constant","p":0.5}], "threshold": 0.5}"#,
        )
        .unwrap();
        assert!(matches!(load_model(&path), Err(ModelError::Version(99))));
    }
}
