//! Test-only reference implementations. Nothing here calls into the
//! engine; each helper recomputes its quantity from first principles.
#![allow(dead_code)]

use margin_attr::oracles::{ClassDistribution, ClassifierOracle, OracleError};
use margin_attr::vocab::{Sentence, TaggedCorpus, TokenId, Vocabulary};

/// p(class 1) is a table lookup on the token at one fixed position.
pub struct PositionClassifier {
    pub position: usize,
    pub table: Vec<f64>,
}

impl ClassifierOracle for PositionClassifier {
    fn class_count(&self) -> usize {
        2
    }

    fn classify_batch(&self, batch: &[Sentence]) -> Result<Vec<ClassDistribution>, OracleError> {
        batch
            .iter()
            .map(|s| {
                let p = self.table[s.ids()[self.position] as usize];
                ClassDistribution::new(vec![1.0 - p, p])
            })
            .collect()
    }
}

/// Ignores its input.
pub struct ConstantClassifier(pub f64);

impl ClassifierOracle for ConstantClassifier {
    fn class_count(&self) -> usize {
        2
    }

    fn classify_batch(&self, batch: &[Sentence]) -> Result<Vec<ClassDistribution>, OracleError> {
        Ok(vec![
            ClassDistribution::new(vec![1.0 - self.0, self.0])?;
            batch.len()
        ])
    }
}

/// Naive-Bayes posterior by direct Bayes rule on raw counts:
/// p(c) Π_w (n(w,c) + α)/(N(c) + α|V|), normalized over classes.
pub fn brute_force_nb_posterior(
    corpus: &TaggedCorpus,
    vocab: &Vocabulary,
    smoothing: f64,
    sentence: &Sentence,
) -> Vec<f64> {
    let classes = corpus.class_count();
    let mut joint = vec![0.0; classes];
    for (c, slot) in joint.iter_mut().enumerate() {
        let docs = corpus.labels().iter().filter(|&&l| l == c).count() as f64;
        let mut total = 0.0;
        let mut counts = vec![0.0; vocab.len()];
        for (s, l) in corpus.iter() {
            if l == c {
                for &id in s.ids() {
                    counts[id as usize] += 1.0;
                    total += 1.0;
                }
            }
        }
        let mut p = docs / corpus.len() as f64;
        for &id in sentence.ids() {
            p *= (counts[id as usize] + smoothing) / (total + smoothing * vocab.len() as f64);
        }
        *slot = p;
    }
    let z: f64 = joint.iter().sum();
    joint.iter().map(|p| p / z).collect()
}

/// Dense loop over every vocabulary id in ascending order, skipping ids the
/// likelihood gives no mass:
/// Σ p(v)·p(y | x_i := v) / Σ p(v), accumulated as offsets from the first
/// visited probability.
pub fn dense_marginal(
    sentence: &Sentence,
    position: usize,
    target: usize,
    vocab_len: usize,
    likelihood: impl Fn(TokenId) -> f64,
    clf: &dyn ClassifierOracle,
) -> f64 {
    let mut first = None;
    let mut weighted = 0.0;
    let mut mass = 0.0;
    for v in 0..vocab_len as TokenId {
        let p = likelihood(v);
        if p == 0.0 {
            continue;
        }
        let mut ids = sentence.ids().to_vec();
        ids[position] = v;
        let s = Sentence::new(ids, &dummy_vocab(vocab_len)).unwrap();
        let q = clf.classify_batch(&[s]).unwrap()[0].probs()[target];
        let a = *first.get_or_insert(q);
        weighted += p * (q - a);
        mass += p;
    }
    first.unwrap() + weighted / mass
}

/// Dense double loop over two positions with a context-free likelihood.
pub fn dense_joint_marginal(
    sentence: &Sentence,
    i: usize,
    j: usize,
    target: usize,
    vocab_len: usize,
    likelihood: impl Fn(TokenId) -> f64,
    clf: &dyn ClassifierOracle,
) -> f64 {
    let vocab = dummy_vocab(vocab_len);
    let mut first = None;
    let mut weighted = 0.0;
    let mut mass = 0.0;
    for a in 0..vocab_len as TokenId {
        for b in 0..vocab_len as TokenId {
            let w = likelihood(a) * likelihood(b);
            if w == 0.0 {
                continue;
            }
            let mut ids = sentence.ids().to_vec();
            ids[i] = a;
            ids[j] = b;
            let q = clf
                .classify_batch(&[Sentence::new(ids, &vocab).unwrap()])
                .unwrap()[0]
                .probs()[target];
            let a = *first.get_or_insert(q);
            weighted += w * (q - a);
            mass += w;
        }
    }
    first.unwrap() + weighted / mass
}

/// Log-odds difference written the textbook way.
pub fn reference_woe(p_full: f64, p_without: f64) -> f64 {
    (p_full / (1.0 - p_full)).log2() - (p_without / (1.0 - p_without)).log2()
}

fn dummy_vocab(len: usize) -> Vocabulary {
    margin_attr::synthetic::toy_vocabulary(len - 3)
}
