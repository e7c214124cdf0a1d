//! Soft-voting combiner over fitted models.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::Forest;
use crate::gbdt::BoostedModel;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("ensemble has no members")]
    Empty,
    #[error("threshold must be in (0, 1), got {0}")]
    BadThreshold(f64),
    #[error("member prediction failed: {0}")]
    Member(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Member {
    Forest(Forest),
    Boosted(BoostedModel),
    /// Fixed positive-class probability; handy for exercising the voter in
    /// isolation.
    Constant { p: f64 },
}

impl Member {
    /// Positive-class probability.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, EnsembleError> {
        match self {
            Member::Forest(f) => f
                .predict_proba(x)
                .map(|p| p[1])
                .map_err(|e| EnsembleError::Member(e.to_string())),
            Member::Boosted(b) => b
                .predict_proba(x)
                .map(|p| p[1])
                .map_err(|e| EnsembleError::Member(e.to_string())),
            Member::Constant { p } => Ok(*p),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VotingEnsemble {
    pub members: Vec<Member>,
    pub threshold: f64,
}

impl VotingEnsemble {
    pub fn new(members: Vec<Member>, threshold: f64) -> Result<Self, EnsembleError> {
        if members.is_empty() {
            return Err(EnsembleError::Empty);
        }
        if !(0.0 < threshold && threshold < 1.0) {
            return Err(EnsembleError::BadThreshold(threshold));
        }
        Ok(VotingEnsemble { members, threshold })
    }

    /// Unweighted mean of member positive-class probabilities.
    pub fn soft_vote(&self, x: &[f64]) -> Result<f64, EnsembleError> {
        let mut total = 0.0;
        for m in &self.members {
            total += m.predict_proba(x)?;
        }
        Ok(total / self.members.len() as f64)
    }

    /// 1 iff the soft vote reaches the threshold.
    pub fn classify(&self, x: &[f64]) -> Result<u8, EnsembleError> {
        Ok(u8::from(self.soft_vote(x)? >= self.threshold))
    }

    pub fn classify_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<u8>, EnsembleError> {
        xs.iter().map(|x| self.classify(x)).collect()
    }
}
