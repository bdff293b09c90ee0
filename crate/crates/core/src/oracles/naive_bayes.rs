use super::{ClassDistribution, ClassifierOracle, OracleError};
use crate::vocab::{Sentence, TaggedCorpus, Vocabulary};

/// Multinomial naive Bayes over token counts with add-α smoothing.
///
/// Every vocabulary id (specials included) gets a smoothed probability, so
/// tokens never seen in training, such as the pad id, still score finitely.
#[derive(Debug, Clone)]
pub struct NaiveBayes {
    log_prior: Vec<f64>,
    // class-major: log_likelihood[class * vocab_len + id]
    log_likelihood: Vec<f64>,
    vocab_len: usize,
}

/// Fits class priors from document counts and
/// `p(w | c) = (count(w, c) + α) / (total(c) + α·|V|)`.
pub fn train_naive_bayes(
    corpus: &TaggedCorpus,
    vocab: &Vocabulary,
    smoothing: f64,
) -> Result<NaiveBayes, OracleError> {
    if !(smoothing > 0.0 && smoothing.is_finite()) {
        return Err(OracleError::InvalidParameter(format!(
            "smoothing must be positive, got {smoothing}"
        )));
    }
    if corpus.is_empty() {
        return Err(OracleError::EmptyCorpus);
    }
    let classes = corpus.class_count();
    let v = vocab.len();
    let mut docs = vec![0usize; classes];
    let mut counts = vec![0u64; classes * v];
    let mut totals = vec![0u64; classes];
    for (sentence, label) in corpus.iter() {
        docs[label] += 1;
        for &id in sentence.ids() {
            counts[label * v + id as usize] += 1;
            totals[label] += 1;
        }
    }
    if let Some(empty) = docs.iter().position(|&d| d == 0) {
        return Err(OracleError::EmptyClass(empty));
    }
    let n_docs = corpus.len() as f64;
    let log_prior = docs.iter().map(|&d| (d as f64 / n_docs).ln()).collect();
    let mut log_likelihood = Vec::with_capacity(classes * v);
    for c in 0..classes {
        let denom = totals[c] as f64 + smoothing * v as f64;
        log_likelihood.extend(
            counts[c * v..(c + 1) * v]
                .iter()
                .map(|&n| ((n as f64 + smoothing) / denom).ln()),
        );
    }
    Ok(NaiveBayes {
        log_prior,
        log_likelihood,
        vocab_len: v,
    })
}

impl NaiveBayes {
    pub fn classify(&self, sentence: &Sentence) -> Result<ClassDistribution, OracleError> {
        let mut scores = self.log_prior.clone();
        for (c, score) in scores.iter_mut().enumerate() {
            let row = &self.log_likelihood[c * self.vocab_len..(c + 1) * self.vocab_len];
            for &id in sentence.ids() {
                *score += *row.get(id as usize).ok_or_else(|| {
                    OracleError::InvalidRequest(format!("token {id} outside vocabulary"))
                })?;
            }
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        ClassDistribution::new(exp.into_iter().map(|e| e / z).collect())
    }
}

impl ClassifierOracle for NaiveBayes {
    fn class_count(&self) -> usize {
        self.log_prior.len()
    }

    fn classify_batch(&self, batch: &[Sentence]) -> Result<Vec<ClassDistribution>, OracleError> {
        batch.iter().map(|s| self.classify(s)).collect()
    }
}
