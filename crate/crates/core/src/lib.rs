//! Model-agnostic token attribution for text classifiers.
//!
//! Each token is scored by how much the classifier's log-odds change when
//! that token is marginalized out over likelihood-weighted replacement
//! candidates, instead of being overwritten with a fixed value. The crate
//! also carries the erasure baselines, deletion-curve evaluation, and
//! heatmap rendering.
//!
//! ```
//! use margin_attr::engine::{attribute, MarginalizationConfig, Truncation};
//! use margin_attr::oracles::{train_naive_bayes, uniform_likelihood};
//! use margin_attr::vocab::{tokenize_whitespace, SpecialTokens, TaggedCorpus, Vocabulary};
//!
//! let vocab = Vocabulary::from_tokens(
//!     ["[PAD]", "[UNK]", "[MASK]", "a", "great", "awful", "film"],
//!     &SpecialTokens::default(),
//! )
//! .unwrap();
//! let sents = ["a great film", "great film", "an awful film", "awful"];
//! let corpus = TaggedCorpus::new(
//!     sents.iter().map(|t| tokenize_whitespace(t, &vocab).unwrap()).collect(),
//!     vec![1, 1, 0, 0],
//!     2,
//! )
//! .unwrap();
//! let clf = train_naive_bayes(&corpus, &vocab, 1.0).unwrap();
//! let lm = uniform_likelihood(&vocab).unwrap();
//!
//! let sentence = tokenize_whitespace("a great film", &vocab).unwrap();
//! let cfg = MarginalizationConfig::new(1).with_truncation(Truncation::full());
//! let map = attribute(&sentence, &cfg, &clf, &lm).unwrap();
//! assert!(map.scores[1] > map.scores[2]);
//! ```

pub mod engine;
pub mod evaluation;
pub mod exec;
pub mod oracles;
pub mod report;
pub mod synthetic;
pub mod vocab;

pub use engine::{AttributionMap, MarginalizationConfig, Method, Truncation};
pub use exec::Execution;
pub use vocab::{Sentence, TokenId, Vocabulary};
