//! Seeded toy corpora for tests, benchmarks and demos.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::vocab::{Sentence, SpecialTokens, TaggedCorpus, TokenId, Vocabulary};

/// `[PAD] [UNK] [MASK] w0 .. w{plain-1}`; plain tokens start at id 3.
pub fn toy_vocabulary(plain: usize) -> Vocabulary {
    let mut tokens = vec!["[PAD]".to_owned(), "[UNK]".to_owned(), "[MASK]".to_owned()];
    tokens.extend((0..plain).map(|i| format!("w{i}")));
    Vocabulary::from_tokens(tokens, &SpecialTokens::default()).expect("toy vocabulary is valid")
}

/// Zipf weight `1 / rank^exponent`, ranking candidate ids in ascending order.
pub fn zipf_weight(vocab: &Vocabulary, exponent: f64) -> impl Fn(TokenId) -> f64 {
    let ranks: Vec<Option<usize>> = {
        let mut ranks = vec![None; vocab.len()];
        for (rank, id) in vocab.candidate_ids().enumerate() {
            ranks[id as usize] = Some(rank + 1);
        }
        ranks
    };
    move |id| match ranks.get(id as usize).copied().flatten() {
        Some(r) => (r as f64).powf(-exponent),
        None => 0.0,
    }
}

/// Uniformly random sentences over candidate ids with uniformly random
/// labels; every class is guaranteed at least one sentence.
pub fn random_corpus(
    vocab: &Vocabulary,
    sentences: usize,
    max_len: usize,
    class_count: usize,
    seed: u64,
) -> TaggedCorpus {
    assert!(sentences >= class_count && max_len >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<TokenId> = vocab.candidate_ids().collect();
    let mut out = Vec::with_capacity(sentences);
    let mut labels = Vec::with_capacity(sentences);
    for k in 0..sentences {
        let len = rng.random_range(1..=max_len);
        let ids = (0..len)
            .map(|_| candidates[rng.random_range(0..candidates.len())])
            .collect();
        out.push(Sentence::new(ids, vocab).expect("candidate ids are valid"));
        labels.push(if k < class_count {
            k
        } else {
            rng.random_range(0..class_count)
        });
    }
    TaggedCorpus::new(out, labels, class_count).expect("generated corpus is valid")
}

/// Corpus whose label is 1 exactly when the keyword appears.
#[derive(Debug, Clone)]
pub struct PlantedKeyword {
    pub vocab: Vocabulary,
    pub keyword: TokenId,
    /// Training sentences, half of them containing the keyword.
    pub train: TaggedCorpus,
    /// Held-out sentences that each contain the keyword once.
    pub probes: Vec<Sentence>,
}

/// Filler tokens are `w0 ..`; the keyword is the token `brilliant`.
pub fn planted_keyword(fillers: usize, train: usize, probes: usize, seed: u64) -> PlantedKeyword {
    let mut tokens = vec!["[PAD]".to_owned(), "[UNK]".to_owned(), "[MASK]".to_owned()];
    tokens.push("brilliant".to_owned());
    tokens.extend((0..fillers).map(|i| format!("w{i}")));
    let vocab = Vocabulary::from_tokens(tokens, &SpecialTokens::default())
        .expect("planted vocabulary is valid");
    let keyword = 3;
    let filler_ids: Vec<TokenId> = (4..4 + fillers as TokenId).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentence = |with_keyword: bool, rng: &mut ChaCha8Rng| {
        let len = rng.random_range(4..=10);
        let mut ids: Vec<TokenId> = (0..len)
            .map(|_| filler_ids[rng.random_range(0..filler_ids.len())])
            .collect();
        if with_keyword {
            let at = rng.random_range(0..len);
            ids[at] = keyword;
        }
        Sentence::new(ids, &vocab).expect("planted ids are valid")
    };
    let mut train_sentences = Vec::with_capacity(train);
    let mut labels = Vec::with_capacity(train);
    for k in 0..train {
        let positive = k % 2 == 0;
        train_sentences.push(sentence(positive, &mut rng));
        labels.push(usize::from(positive));
    }
    let probes = (0..probes).map(|_| sentence(true, &mut rng)).collect();
    let train = TaggedCorpus::new(train_sentences, labels, 2).expect("planted corpus is valid");
    PlantedKeyword {
        vocab,
        keyword,
        train,
        probes,
    }
}

/// Sentences drawn token-by-token from Zipf(`exponent`) over the candidate
/// ids. Class 1 sentences additionally receive tokens from `positive`, class
/// 0 from `negative`, so a classifier has signal to learn.
pub fn zipf_corpus(
    vocab: &Vocabulary,
    exponent: f64,
    sentences: usize,
    len: std::ops::RangeInclusive<usize>,
    positive: &[TokenId],
    negative: &[TokenId],
    seed: u64,
) -> TaggedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<TokenId> = vocab.candidate_ids().collect();
    let weight = zipf_weight(vocab, exponent);
    let sampler = WeightedIndex::new(candidates.iter().map(|&id| weight(id)))
        .expect("zipf weights are positive");
    let mut out = Vec::with_capacity(sentences);
    let mut labels = Vec::with_capacity(sentences);
    for k in 0..sentences {
        let label = k % 2;
        let n = rng.random_range(len.clone());
        let mut ids: Vec<TokenId> = (0..n)
            .map(|_| candidates[sampler.sample(&mut rng)])
            .collect();
        let cues = if label == 1 { positive } else { negative };
        if !cues.is_empty() {
            let at = rng.random_range(0..n);
            ids[at] = cues[rng.random_range(0..cues.len())];
        }
        out.push(Sentence::new(ids, vocab).expect("zipf ids are valid"));
        labels.push(label);
    }
    TaggedCorpus::new(out, labels, 2).expect("zipf corpus is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_seeded() {
        let v = toy_vocabulary(10);
        let a = random_corpus(&v, 8, 5, 2, 7);
        let b = random_corpus(&v, 8, 5, 2, 7);
        assert_eq!(a.sentences(), b.sentences());
        assert_eq!(a.labels(), b.labels());
        let p = planted_keyword(12, 20, 5, 3);
        assert!(p.probes.iter().all(|s| s.ids().contains(&p.keyword)));
        assert_eq!(p.train.labels().iter().filter(|&&l| l == 1).count(), 10);
    }

    #[test]
    fn zipf_weight_decays_by_rank() {
        let v = toy_vocabulary(4);
        let w = zipf_weight(&v, 2.0);
        assert_eq!(w(0), 0.0);
        assert_eq!(w(3), 1.0);
        assert_eq!(w(4), 0.25);
    }
}
