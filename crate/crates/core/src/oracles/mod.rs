//! Classifier and likelihood oracle contracts, plus in-process and remote
//! implementations.
//!
//! A classifier oracle maps sentences to class distributions. A likelihood
//! oracle answers fill-mask queries: given a sentence with the mask id at
//! some positions, it returns a (sparse) distribution over replacement
//! tokens for each position.

mod likelihood;
mod naive_bayes;
mod remote;

pub use likelihood::{
    prior_likelihood, train_ngram_lm, uniform_likelihood, BigramLm, ContextFreeLikelihood, NgramLm,
};
pub use naive_bayes::{train_naive_bayes, NaiveBayes};
pub use remote::{remote_oracle, OracleMeta, RemoteConfig, RemoteOracle};

use thiserror::Error;

use crate::vocab::{Sentence, TokenId};

/// Tolerance on `sum(probs) == 1` for a [`ClassDistribution`].
pub const CLASS_SUM_TOLERANCE: f64 = 1e-6;
/// Upper slack on the covered mass of a [`LikelihoodDistribution`].
pub const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle unavailable: {0}")]
    Unavailable(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("empty class {0}")]
    EmptyClass(usize),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
}

/// Whether an oracle tolerates calls from several threads at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Concurrency {
    Concurrent,
    Serial,
}

/// Probability vector over classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, OracleError> {
        if probs.is_empty() {
            return Err(OracleError::InvalidDistribution("no classes".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(OracleError::InvalidDistribution(format!(
                "class probability {p} outside [0, 1]"
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > CLASS_SUM_TOLERANCE {
            return Err(OracleError::InvalidDistribution(format!(
                "class probabilities sum to {sum}"
            )));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn class_count(&self) -> usize {
        self.0.len()
    }

    pub fn prob(&self, class: usize) -> f64 {
        self.0[class]
    }

    /// Highest-probability class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &p)| {
                if p > best.1 {
                    (i, p)
                } else {
                    best
                }
            })
            .0
    }
}

/// Sparse distribution over replacement tokens for one masked position.
///
/// Entries are kept sorted by ascending token id so every reduction over
/// them happens in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodDistribution {
    entries: Vec<(TokenId, f64)>,
    covered_mass: f64,
}

impl LikelihoodDistribution {
    pub fn new(mut entries: Vec<(TokenId, f64)>) -> Result<Self, OracleError> {
        if let Some((id, p)) = entries.iter().find(|(_, p)| !(*p > 0.0 && *p <= 1.0)) {
            return Err(OracleError::InvalidDistribution(format!(
                "token {id} has likelihood {p} outside (0, 1]"
            )));
        }
        entries.sort_unstable_by_key(|&(id, _)| id);
        if let Some(w) = entries.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(OracleError::InvalidDistribution(format!(
                "token {} listed twice",
                w[0].0
            )));
        }
        let covered_mass: f64 = entries.iter().map(|&(_, p)| p).sum();
        if covered_mass > 1.0 + MASS_TOLERANCE {
            return Err(OracleError::InvalidDistribution(format!(
                "covered mass {covered_mass} exceeds 1"
            )));
        }
        Ok(Self {
            entries,
            covered_mass,
        })
    }

    /// Ascending by token id.
    pub fn entries(&self) -> &[(TokenId, f64)] {
        &self.entries
    }

    pub fn covered_mass(&self) -> f64 {
        self.covered_mass
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: TokenId) -> Option<f64> {
        self.entries
            .binary_search_by_key(&id, |&(t, _)| t)
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn contains(&self, id: TokenId) -> bool {
        self.get(id).is_some()
    }
}

/// A model that scores sentences. Implementations must be deterministic.
pub trait ClassifierOracle: Send + Sync {
    fn class_count(&self) -> usize;

    fn classify_batch(&self, batch: &[Sentence]) -> Result<Vec<ClassDistribution>, OracleError>;

    fn concurrency(&self) -> Concurrency {
        Concurrency::Concurrent
    }
}

/// A source of `p(token | context)` for masked positions.
///
/// Distributions returned by `fill_mask` never contain pad or mask ids.
pub trait LikelihoodOracle: Send + Sync {
    fn mask_id(&self) -> TokenId;

    /// `masked` must hold the mask id at every entry of `positions`. One
    /// distribution is returned per position, in the same order.
    fn fill_mask(
        &self,
        masked: &Sentence,
        positions: &[usize],
    ) -> Result<Vec<LikelihoodDistribution>, OracleError>;

    fn concurrency(&self) -> Concurrency {
        Concurrency::Concurrent
    }
}

pub(crate) fn check_masked(
    masked: &Sentence,
    positions: &[usize],
    mask_id: TokenId,
) -> Result<(), OracleError> {
    for &p in positions {
        match masked.ids().get(p) {
            Some(&id) if id == mask_id => {}
            Some(&id) => {
                return Err(OracleError::InvalidRequest(format!(
                    "position {p} holds token {id}, not the mask"
                )))
            }
            None => {
                return Err(OracleError::InvalidRequest(format!(
                    "position {p} out of range for length {}",
                    masked.len()
                )))
            }
        }
    }
    Ok(())
}
