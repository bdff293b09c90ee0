use std::collections::HashMap;

use super::{check_masked, LikelihoodDistribution, LikelihoodOracle, OracleError};
use crate::vocab::{Sentence, TaggedCorpus, TokenId, Vocabulary};

fn check_smoothing(smoothing: f64) -> Result<(), OracleError> {
    if smoothing > 0.0 && smoothing.is_finite() {
        Ok(())
    } else {
        Err(OracleError::InvalidParameter(format!(
            "smoothing must be positive, got {smoothing}"
        )))
    }
}

/// Likelihood oracle that ignores context and returns the same
/// distribution at every masked position.
#[derive(Debug, Clone)]
pub struct ContextFreeLikelihood {
    dist: LikelihoodDistribution,
    mask_id: TokenId,
}

impl ContextFreeLikelihood {
    /// Normalizes non-negative `weight(id)` over the vocabulary's candidate
    /// ids. Zero-weight tokens are left out of the distribution.
    pub fn from_weights(
        vocab: &Vocabulary,
        weight: impl Fn(TokenId) -> f64,
    ) -> Result<Self, OracleError> {
        let raw: Vec<(TokenId, f64)> = vocab.candidate_ids().map(|id| (id, weight(id))).collect();
        if let Some((id, w)) = raw.iter().find(|(_, w)| !(*w >= 0.0 && w.is_finite())) {
            return Err(OracleError::InvalidParameter(format!(
                "weight {w} for token {id}"
            )));
        }
        let total: f64 = raw.iter().map(|&(_, w)| w).sum();
        if total <= 0.0 {
            return Err(OracleError::InvalidParameter(
                "no positive weight on any candidate token".into(),
            ));
        }
        let entries = raw
            .into_iter()
            .filter(|&(_, w)| w > 0.0)
            .map(|(id, w)| (id, w / total))
            .collect();
        Ok(Self {
            dist: LikelihoodDistribution::new(entries)?,
            mask_id: vocab.mask_id(),
        })
    }

    pub fn distribution(&self) -> &LikelihoodDistribution {
        &self.dist
    }
}

impl LikelihoodOracle for ContextFreeLikelihood {
    fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    fn fill_mask(
        &self,
        masked: &Sentence,
        positions: &[usize],
    ) -> Result<Vec<LikelihoodDistribution>, OracleError> {
        check_masked(masked, positions, self.mask_id)?;
        Ok(vec![self.dist.clone(); positions.len()])
    }
}

/// `1 / (number of candidate tokens)` for every non-reserved token.
pub fn uniform_likelihood(vocab: &Vocabulary) -> Result<ContextFreeLikelihood, OracleError> {
    ContextFreeLikelihood::from_weights(vocab, |_| 1.0)
}

fn unigram_counts(corpus: &TaggedCorpus, vocab: &Vocabulary) -> Vec<u64> {
    let mut counts = vec![0u64; vocab.len()];
    for sentence in corpus.sentences() {
        for &id in sentence.ids() {
            if !vocab.is_reserved(id) {
                counts[id as usize] += 1;
            }
        }
    }
    counts
}

/// Smoothed relative token frequency in `corpus`, context-independent.
pub fn prior_likelihood(
    corpus: &TaggedCorpus,
    vocab: &Vocabulary,
    smoothing: f64,
) -> Result<ContextFreeLikelihood, OracleError> {
    check_smoothing(smoothing)?;
    if corpus.is_empty() {
        return Err(OracleError::EmptyCorpus);
    }
    let counts = unigram_counts(corpus, vocab);
    ContextFreeLikelihood::from_weights(vocab, |id| counts[id as usize] as f64 + smoothing)
}

/// Add-α bigram model conditioned on the left neighbour.
///
/// The first position conditions on a sentence-start context. When the left
/// neighbour is itself masked the model backs off to the smoothed unigram.
#[derive(Debug, Clone)]
pub struct BigramLm {
    unigram: LikelihoodDistribution,
    // None is the sentence-start context.
    bigrams: HashMap<Option<TokenId>, HashMap<TokenId, u64>>,
    candidates: Vec<TokenId>,
    smoothing: f64,
    mask_id: TokenId,
}

impl BigramLm {
    fn conditional(&self, left: Option<TokenId>) -> Result<LikelihoodDistribution, OracleError> {
        let empty = HashMap::new();
        let row = self.bigrams.get(&left).unwrap_or(&empty);
        let total: u64 = row.values().sum();
        let denom = total as f64 + self.smoothing * self.candidates.len() as f64;
        let entries = self
            .candidates
            .iter()
            .map(|&id| {
                let n = row.get(&id).copied().unwrap_or(0);
                (id, (n as f64 + self.smoothing) / denom)
            })
            .collect();
        LikelihoodDistribution::new(entries)
    }
}

impl LikelihoodOracle for BigramLm {
    fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    fn fill_mask(
        &self,
        masked: &Sentence,
        positions: &[usize],
    ) -> Result<Vec<LikelihoodDistribution>, OracleError> {
        check_masked(masked, positions, self.mask_id)?;
        positions
            .iter()
            .map(|&p| {
                if p == 0 {
                    return self.conditional(None);
                }
                let left = masked.ids()[p - 1];
                if left == self.mask_id {
                    Ok(self.unigram.clone())
                } else {
                    self.conditional(Some(left))
                }
            })
            .collect()
    }
}

/// Unigram (order 1) or left-context bigram (order 2) model.
#[derive(Debug, Clone)]
pub enum NgramLm {
    Unigram(ContextFreeLikelihood),
    Bigram(BigramLm),
}

pub fn train_ngram_lm(
    corpus: &TaggedCorpus,
    vocab: &Vocabulary,
    order: usize,
    smoothing: f64,
) -> Result<NgramLm, OracleError> {
    let unigram = prior_likelihood(corpus, vocab, smoothing)?;
    match order {
        1 => Ok(NgramLm::Unigram(unigram)),
        2 => {
            let mut bigrams: HashMap<Option<TokenId>, HashMap<TokenId, u64>> = HashMap::new();
            for sentence in corpus.sentences() {
                let mut left = None;
                for &id in sentence.ids() {
                    if !vocab.is_reserved(id) {
                        *bigrams.entry(left).or_default().entry(id).or_insert(0) += 1;
                    }
                    left = Some(id);
                }
            }
            Ok(NgramLm::Bigram(BigramLm {
                unigram: unigram.dist,
                bigrams,
                candidates: vocab.candidate_ids().collect(),
                smoothing,
                mask_id: vocab.mask_id(),
            }))
        }
        other => Err(OracleError::InvalidParameter(format!(
            "n-gram order must be 1 or 2, got {other}"
        ))),
    }
}

impl LikelihoodOracle for NgramLm {
    fn mask_id(&self) -> TokenId {
        match self {
            NgramLm::Unigram(m) => m.mask_id(),
            NgramLm::Bigram(m) => m.mask_id(),
        }
    }

    fn fill_mask(
        &self,
        masked: &Sentence,
        positions: &[usize],
    ) -> Result<Vec<LikelihoodDistribution>, OracleError> {
        match self {
            NgramLm::Unigram(m) => m.fill_mask(masked, positions),
            NgramLm::Bigram(m) => m.fill_mask(masked, positions),
        }
    }
}
