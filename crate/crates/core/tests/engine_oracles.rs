mod common;

use common::*;
use margin_attr::engine::{
    attribute, attribute_detailed, attribute_joint, erasure_attribution, marginalize,
    marginalized_probability, weight_of_evidence, MarginalizationConfig, Replacement, Truncation,
};
use margin_attr::oracles::{
    train_naive_bayes, train_ngram_lm, uniform_likelihood, ClassDistribution, ClassifierOracle,
    Concurrency, ContextFreeLikelihood, LikelihoodOracle, NgramLm, OracleError,
};
use margin_attr::synthetic::{planted_keyword, random_corpus, toy_vocabulary};
use margin_attr::vocab::{Sentence, SpecialTokens, TaggedCorpus, TokenId, Vocabulary};
use margin_attr::Execution;
use proptest::prelude::*;

fn unigram(lm: &NgramLm) -> &ContextFreeLikelihood {
    match lm {
        NgramLm::Unigram(u) => u,
        NgramLm::Bigram(_) => panic!("expected unigram"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn naive_bayes_matches_bayes_rule(
        plain in 3usize..=17,
        sentences in 2usize..=10,
        smoothing in 0.05f64..3.0,
        seed in any::<u64>(),
    ) {
        let vocab = toy_vocabulary(plain);
        let corpus = random_corpus(&vocab, sentences, 6, 2, seed);
        let nb = train_naive_bayes(&corpus, &vocab, smoothing).unwrap();
        let probe = random_corpus(&vocab, 4, 6, 2, seed ^ 0xabc);
        for s in probe.sentences() {
            let got = nb.classify_batch(std::slice::from_ref(s)).unwrap();
            let want = brute_force_nb_posterior(&corpus, &vocab, smoothing, s);
            for (g, w) in got[0].probs().iter().zip(&want) {
                prop_assert!((g - w).abs() < 1e-12, "{g} vs {w}");
            }
            prop_assert!((got[0].probs().iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn full_marginalization_is_bit_identical_to_dense_loop(
        plain in 3usize..=17,
        seed in any::<u64>(),
        smoothing in 0.1f64..2.0,
    ) {
        let vocab = toy_vocabulary(plain);
        let corpus = random_corpus(&vocab, 8, 6, 2, seed);
        let nb = train_naive_bayes(&corpus, &vocab, 1.0).unwrap();
        let lm = train_ngram_lm(&corpus, &vocab, 1, smoothing).unwrap();
        let dist = unigram(&lm).distribution().clone();
        let sentence = &corpus.sentences()[0];
        let cfg = MarginalizationConfig::new(1).with_truncation(Truncation::full());
        for position in 0..sentence.len() {
            let got = marginalized_probability(sentence, position, &cfg, &nb, &lm).unwrap();
            let want = dense_marginal(
                sentence, position, 1, vocab.len(),
                |v| dist.get(v).unwrap_or(0.0), &nb,
            );
            prop_assert_eq!(got.to_bits(), want.to_bits());
        }
    }

    #[test]
    fn marginal_is_invariant_to_likelihood_rescaling(
        weights in proptest::collection::vec(0.01f64..1.0, 8),
        scale in 0.05f64..0.9,
        seed in any::<u64>(),
    ) {
        let vocab = toy_vocabulary(8);
        let corpus = random_corpus(&vocab, 6, 5, 2, seed);
        let nb = train_naive_bayes(&corpus, &vocab, 1.0).unwrap();
        let dense = ContextFreeLikelihood::from_weights(&vocab, |id| weights[id as usize - 3]).unwrap();
        // Same relative weights, but only `scale` of the mass is reported.
        let scaled = ScaledLikelihood { inner: dense.clone(), scale };
        let s = &corpus.sentences()[0];
        let cfg = MarginalizationConfig::new(0).with_truncation(Truncation::full());
        let a = marginalized_probability(s, 0, &cfg, &nb, &dense).unwrap();
        let b = marginalized_probability(s, 0, &cfg, &nb, &scaled).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn woe_is_antisymmetric(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let ab = weight_of_evidence(a, b, 1e-7);
        let ba = weight_of_evidence(b, a, 1e-7);
        prop_assert!((ab + ba).abs() < 1e-12);
        prop_assert_eq!(weight_of_evidence(a, a, 1e-7), 0.0);
        prop_assert!(ab.is_finite());
    }

    #[test]
    fn ignored_position_scores_zero(
        table in proptest::collection::vec(0.01f64..0.99, 13),
        seed in any::<u64>(),
        order in 1usize..=2,
    ) {
        let vocab = toy_vocabulary(10);
        let corpus = random_corpus(&vocab, 6, 6, 2, seed);
        let lm = train_ngram_lm(&corpus, &vocab, order, 0.5).unwrap();
        let s = Sentence::new(vec![3, 4, 5, 6], &vocab).unwrap();
        let clf = PositionClassifier { position: 2, table };
        let cfg = MarginalizationConfig::new(1).with_truncation(Truncation::Threshold(1e-3));
        let map = attribute(&s, &cfg, &clf, &lm).unwrap();
        for i in [0, 1, 3] {
            prop_assert_eq!(map.scores[i], 0.0);
        }
    }
}

/// Reports a fixed fraction of another oracle's likelihoods.
struct ScaledLikelihood {
    inner: ContextFreeLikelihood,
    scale: f64,
}

impl LikelihoodOracle for ScaledLikelihood {
    fn mask_id(&self) -> TokenId {
        self.inner.mask_id()
    }

    fn fill_mask(
        &self,
        masked: &Sentence,
        positions: &[usize],
    ) -> Result<Vec<margin_attr::oracles::LikelihoodDistribution>, OracleError> {
        self.inner
            .fill_mask(masked, positions)?
            .into_iter()
            .map(|d| {
                margin_attr::oracles::LikelihoodDistribution::new(
                    d.entries()
                        .iter()
                        .map(|&(id, p)| (id, p * self.scale))
                        .collect(),
                )
            })
            .collect()
    }
}

/// Classifier that records the batch sizes it is called with and refuses
/// concurrent use.
struct SerialRecorder<C> {
    inner: C,
    batches: std::sync::Mutex<Vec<usize>>,
}

impl<C: ClassifierOracle> ClassifierOracle for SerialRecorder<C> {
    fn class_count(&self) -> usize {
        self.inner.class_count()
    }

    fn classify_batch(&self, batch: &[Sentence]) -> Result<Vec<ClassDistribution>, OracleError> {
        let mut guard = self
            .batches
            .try_lock()
            .expect("serial oracle called concurrently");
        guard.push(batch.len());
        self.inner.classify_batch(batch)
    }

    fn concurrency(&self) -> Concurrency {
        Concurrency::Serial
    }
}

#[test]
fn results_independent_of_batching_and_threads() {
    let vocab = toy_vocabulary(300);
    let corpus = random_corpus(&vocab, 40, 8, 2, 11);
    let nb = train_naive_bayes(&corpus, &vocab, 1.0).unwrap();
    let lm = train_ngram_lm(&corpus, &vocab, 2, 0.3).unwrap();
    let s = &corpus.sentences()[3];
    let base = MarginalizationConfig::new(1).with_truncation(Truncation::Threshold(1e-4));
    let reference = attribute(
        &s.clone(),
        &base.clone().with_execution(Execution::Sequential),
        &nb,
        &lm,
    )
    .unwrap();
    for batch in [1, 7, 32, 1000] {
        for exec in [Execution::Sequential, Execution::Parallel] {
            let mut cfg = base.clone().with_execution(exec);
            cfg.batch_size = batch;
            let map = attribute(s, &cfg, &nb, &lm).unwrap();
            assert_eq!(map, reference, "batch {batch}, {exec:?}");
        }
    }
    let serial = SerialRecorder {
        inner: nb.clone(),
        batches: Default::default(),
    };
    let mut cfg = base.clone().with_execution(Execution::Parallel);
    cfg.batch_size = 5;
    assert_eq!(attribute(s, &cfg, &serial, &lm).unwrap(), reference);
    assert!(serial.batches.lock().unwrap().iter().all(|&b| b <= 5));
}

#[test]
fn fixed_n_covering_vocabulary_reproduces_full() {
    let vocab = toy_vocabulary(15);
    let corpus = random_corpus(&vocab, 10, 6, 2, 5);
    let nb = train_naive_bayes(&corpus, &vocab, 1.0).unwrap();
    let lm = train_ngram_lm(&corpus, &vocab, 2, 1.0).unwrap();
    for s in corpus.sentences() {
        let full = attribute(
            s,
            &MarginalizationConfig::new(0).with_truncation(Truncation::full()),
            &nb,
            &lm,
        )
        .unwrap();
        let top = attribute(
            s,
            &MarginalizationConfig::new(0)
                .with_truncation(Truncation::TopN(vocab.candidate_count())),
            &nb,
            &lm,
        )
        .unwrap();
        assert_eq!(full, top);
    }
}

#[test]
fn truncated_scores_track_full_scores() {
    let vocab = toy_vocabulary(17);
    let corpus = random_corpus(&vocab, 10, 6, 2, 21);
    let nb = train_naive_bayes(&corpus, &vocab, 1.0).unwrap();
    let lm = ContextFreeLikelihood::from_weights(
        &vocab,
        margin_attr::synthetic::zipf_weight(&vocab, 2.0),
    )
    .unwrap();
    let mut full = Vec::new();
    let mut truncated = Vec::new();
    for s in corpus.sentences() {
        full.extend(
            attribute(
                s,
                &MarginalizationConfig::new(1).with_truncation(Truncation::full()),
                &nb,
                &lm,
            )
            .unwrap()
            .scores,
        );
        truncated.extend(
            attribute(
                s,
                &MarginalizationConfig::new(1).with_truncation(Truncation::Threshold(1e-5)),
                &nb,
                &lm,
            )
            .unwrap()
            .scores,
        );
    }
    // Every Zipf(2) weight over 17 tokens is above 1e-3, so σ=1e-5 keeps all.
    assert_eq!(full, truncated);
    let r = margin_attr::evaluation::pearson(&full, &truncated).unwrap();
    assert!(r >= 0.999);
}

#[test]
fn joint_matches_single_under_context_free_lm() {
    let vocab = toy_vocabulary(16);
    let lm = ContextFreeLikelihood::from_weights(&vocab, |id| 1.0 + (id % 5) as f64).unwrap();
    let dist = lm.distribution().clone();
    let table: Vec<f64> = (0..vocab.len())
        .map(|i| 0.05 + 0.9 * ((i * 7) % 11) as f64 / 10.0)
        .collect();
    let clf = PositionClassifier { position: 1, table };
    let s = Sentence::new(vec![3, 9, 12, 4, 7], &vocab).unwrap();
    let cfg = MarginalizationConfig::new(1).with_truncation(Truncation::full());
    let single = attribute(&s, &cfg, &clf, &lm).unwrap().scores[1];
    for j in [0, 2, 3, 4] {
        let joint = attribute_joint(&s, &[1, j], &cfg, &clf, &lm).unwrap();
        assert!((joint - single).abs() < 1e-12, "j={j}: {joint} vs {single}");
        let (lo, hi) = if j < 1 { (j, 1) } else { (1, j) };
        let brute = dense_joint_marginal(
            &s,
            lo,
            hi,
            1,
            vocab.len(),
            |v| dist.get(v).unwrap_or(0.0),
            &clf,
        );
        let p_full = clf.classify_batch(std::slice::from_ref(&s)).unwrap()[0].prob(1);
        assert!((joint - reference_woe(p_full, brute)).abs() < 1e-12);
    }
}

#[test]
fn joint_over_three_positions_with_bigram_is_normalized() {
    let vocab = toy_vocabulary(6);
    let corpus = random_corpus(&vocab, 12, 5, 2, 9);
    let lm = train_ngram_lm(&corpus, &vocab, 2, 0.5).unwrap();
    let s = Sentence::new(vec![3, 4, 5, 6], &vocab).unwrap();
    let cfg = MarginalizationConfig::new(1).with_truncation(Truncation::full());
    // A constant classifier must come back unchanged from any marginal.
    let joint = attribute_joint(&s, &[0, 2, 3], &cfg, &ConstantClassifier(0.42), &lm).unwrap();
    assert!(joint.abs() < 1e-12);
}

#[test]
fn keyword_gets_top_score() {
    let planted = planted_keyword(16, 200, 60, 42);
    let nb = train_naive_bayes(&planted.train, &planted.vocab, 1.0).unwrap();
    let lm = train_ngram_lm(&planted.train, &planted.vocab, 1, 1.0).unwrap();
    let cfg = MarginalizationConfig::new(1);
    let mut hits = 0;
    for s in &planted.probes {
        let map = attribute(s, &cfg, &nb, &lm).unwrap();
        let best = margin_attr::evaluation::ranking(&map.scores)[0];
        hits += usize::from(s.ids()[best] == planted.keyword);
    }
    assert!(hits as f64 / planted.probes.len() as f64 >= 0.95, "{hits}");
}

/// Class 1 sentences are three times as long as class 0 ones, and `the`
/// appears in proportion to length. Under naive Bayes, overwriting `the`
/// with the never-seen pad id shifts the odds by roughly the class-size
/// ratio; marginalizing over corpus-frequency candidates does not.
#[test]
fn zero_erasure_inflates_neutral_filler() {
    let vocab = Vocabulary::from_tokens(
        [
            "[PAD]", "[UNK]", "[MASK]", "the", "good", "great", "bad", "awful", "film", "plot",
        ],
        &SpecialTokens::default(),
    )
    .unwrap();
    let id = |t: &str| vocab.id(t).unwrap();
    let mk = |words: &str| Sentence::new(words.split(' ').map(&id).collect(), &vocab).unwrap();
    let mut sentences = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..10 {
        sentences.push(mk("the good film the great plot the good film"));
        labels.push(1);
        sentences.push(mk("the bad plot"));
        labels.push(0);
        sentences.push(mk("the awful film"));
        labels.push(0);
        sentences.push(mk("the great film the good plot the great film"));
        labels.push(1);
    }
    let corpus = TaggedCorpus::new(sentences, labels, 2).unwrap();
    let nb = train_naive_bayes(&corpus, &vocab, 1.0).unwrap();
    let lm = train_ngram_lm(&corpus, &vocab, 1, 1.0).unwrap();
    let probe = mk("the good film");
    let cfg = MarginalizationConfig::new(1).with_truncation(Truncation::full());
    let marg = attribute(&probe, &cfg, &nb, &lm).unwrap();
    let zero = erasure_attribution(&probe, Replacement::zero(&vocab), &cfg, &nb).unwrap();
    assert!(
        zero.scores[0].abs() > marg.scores[0].abs(),
        "zero {} vs marg {}",
        zero.scores[0],
        marg.scores[0]
    );
}

#[test]
fn kept_counts_shrink_with_sigma() {
    let vocab = toy_vocabulary(200);
    let corpus = random_corpus(&vocab, 20, 6, 2, 3);
    let nb = train_naive_bayes(&corpus, &vocab, 1.0).unwrap();
    let lm = ContextFreeLikelihood::from_weights(
        &vocab,
        margin_attr::synthetic::zipf_weight(&vocab, 2.0),
    )
    .unwrap();
    let s = &corpus.sentences()[0];
    let mut last = usize::MAX;
    for sigma in [0.0, 1e-5, 1e-4, 1e-3, 1e-2] {
        let cfg = MarginalizationConfig::new(0).with_truncation(Truncation::Threshold(sigma));
        let kept = marginalize(s, 0, &cfg, &nb, &lm).unwrap().kept;
        assert!(kept <= last);
        last = kept;
    }
    let detailed = attribute_detailed(
        s,
        &MarginalizationConfig::new(0).with_truncation(Truncation::full()),
        &nb,
        &lm,
    )
    .unwrap();
    assert!(detailed.marginals.iter().all(|m| m.kept == 200));
    assert!(uniform_likelihood(&vocab).is_ok());
}
