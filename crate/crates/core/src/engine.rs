//! Attribution by input marginalization.
//!
//! A token's score is the weight of evidence (log2 odds difference) between
//! the classifier's prediction on the intact sentence and its prediction
//! with that token marginalized out:
//!
//! ```text
//! p(y | x without x_i) ≈ Σ_{c ∈ K} p(c | x_-i) · p(y | x with x_i := c) / Σ_{c ∈ K} p(c | x_-i)
//! ```
//!
//! where `K` is the candidate set kept by the truncation rule: every token
//! whose likelihood exceeds σ (σ = 0 keeps everything), or the `n` most
//! likely tokens. The normalization by kept mass makes the truncated sum a
//! probability again.
//!
//! All reductions run in ascending candidate-token-id order, so results do
//! not depend on batching or thread scheduling.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{map_chunks, Execution};
use crate::oracles::{ClassifierOracle, LikelihoodDistribution, LikelihoodOracle, OracleError};
use crate::vocab::{Sentence, TokenId, Vocabulary};

pub const DEFAULT_SIGMA: f64 = 1e-5;
pub const DEFAULT_PROB_CLAMP: f64 = 1e-7;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_JOINT_CAP: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("position {position} out of range for sentence of length {len}")]
    InvalidPosition { position: usize, len: usize },
    #[error("positions are not distinct: {0} repeated")]
    DuplicatePosition(usize),
    #[error("joint attribution needs at least 2 positions, got {0}")]
    TooFewPositions(usize),
    #[error("target class {class} out of range for {class_count} classes")]
    TargetClass { class: usize, class_count: usize },
    #[error("no candidates above threshold")]
    NoCandidates,
    #[error("joint marginalization too large: more than {cap} candidate combinations")]
    JointTooLarge { cap: usize },
    #[error("at position {position}: {source}")]
    AtPosition {
        position: usize,
        #[source]
        source: Box<EngineError>,
    },
    #[error("oracle returned {got} results for {expected} inputs")]
    OracleArity { expected: usize, got: usize },
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

impl EngineError {
    fn at(self, position: usize) -> Self {
        EngineError::AtPosition {
            position,
            source: Box::new(self),
        }
    }

    /// The innermost oracle error, if this failure came from an oracle.
    pub fn oracle_error(&self) -> Option<&OracleError> {
        match self {
            EngineError::Oracle(e) => Some(e),
            EngineError::AtPosition { source, .. } => source.oracle_error(),
            _ => None,
        }
    }
}

/// Which candidates survive truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truncation {
    /// Keep tokens with likelihood strictly above σ. σ = 0 is full
    /// marginalization over the oracle's support.
    Threshold(f64),
    /// Keep the `n` most likely tokens; boundary ties go to the lower id.
    TopN(usize),
}

impl Truncation {
    pub fn full() -> Self {
        Truncation::Threshold(0.0)
    }
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::Threshold(DEFAULT_SIGMA)
    }
}

impl fmt::Display for Truncation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Truncation::Threshold(s) => write!(f, "sigma={s:e}"),
            Truncation::TopN(n) => write!(f, "n={n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalizationConfig {
    pub truncation: Truncation,
    pub target_class: usize,
    /// Probabilities are clamped to `[ε, 1 − ε]` before taking odds.
    pub prob_clamp: f64,
    /// Always keep the original token, even below the threshold.
    pub include_original: bool,
    /// Sentences per `classify_batch` call.
    pub batch_size: usize,
    /// Upper bound on candidate combinations in joint marginalization.
    pub joint_cap: usize,
    #[serde(skip)]
    pub execution: Execution,
}

impl MarginalizationConfig {
    pub fn new(target_class: usize) -> Self {
        Self {
            truncation: Truncation::default(),
            target_class,
            prob_clamp: DEFAULT_PROB_CLAMP,
            include_original: false,
            batch_size: DEFAULT_BATCH_SIZE,
            joint_cap: DEFAULT_JOINT_CAP,
            execution: Execution::default(),
        }
    }

    pub fn with_truncation(mut self, truncation: Truncation) -> Self {
        self.truncation = truncation;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidConfig(m));
        match self.truncation {
            Truncation::Threshold(s) if !(0.0..1.0).contains(&s) => {
                return bad(format!("sigma must lie in [0, 1), got {s}"))
            }
            Truncation::TopN(0) => return bad("fixed_n must be at least 1".into()),
            _ => {}
        }
        if !(self.prob_clamp > 0.0 && self.prob_clamp < 0.5) {
            return bad(format!(
                "prob_clamp must lie in (0, 0.5), got {}",
                self.prob_clamp
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.joint_cap == 0 {
            return bad("joint_cap must be at least 1".into());
        }
        Ok(())
    }
}

/// Attribution method tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "marg")]
    Marginalization,
    #[serde(rename = "zero")]
    ZeroErasure,
    #[serde(rename = "unk")]
    UnkErasure,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Marginalization => "marg",
            Method::ZeroErasure => "zero",
            Method::UnkErasure => "unk",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "marg" => Ok(Method::Marginalization),
            "zero" => Ok(Method::ZeroErasure),
            "unk" => Ok(Method::UnkErasure),
            other => Err(format!(
                "unknown method {other:?} (expected marg, zero or unk)"
            )),
        }
    }
}

/// Per-position weight-of-evidence scores, in bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    pub scores: Vec<f64>,
    pub target_class: usize,
    pub method: Method,
}

impl AttributionMap {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Result of marginalizing one position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marginal {
    pub probability: f64,
    /// Number of candidates that survived truncation.
    pub kept: usize,
    pub kept_mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    pub map: AttributionMap,
    /// `p(y_c | x)` on the intact sentence.
    pub full_probability: f64,
    pub marginals: Vec<Marginal>,
}

/// `log2(p / (1 − p))` with `p` clamped to `[clamp, 1 − clamp]`.
///
/// Evaluated as `−log2(1/p − 1)`, which is the same quantity.
pub fn log_odds(p: f64, clamp: f64) -> f64 {
    let p = p.clamp(clamp, 1.0 - clamp);
    -(1.0 / p - 1.0).log2()
}

/// Log-odds difference in bits between the full and the reduced prediction.
pub fn weight_of_evidence(p_full: f64, p_without: f64, clamp: f64) -> f64 {
    log_odds(p_full, clamp) - log_odds(p_without, clamp)
}

/// Applies the truncation rule, returning kept `(id, likelihood)` pairs in
/// ascending id order.
pub fn select_candidates(
    dist: &LikelihoodDistribution,
    truncation: Truncation,
    original: Option<TokenId>,
) -> Vec<(TokenId, f64)> {
    let mut kept: Vec<(TokenId, f64)> = match truncation {
        Truncation::Threshold(sigma) => dist
            .entries()
            .iter()
            .copied()
            .filter(|&(_, p)| p > sigma)
            .collect(),
        Truncation::TopN(n) => {
            let mut ranked = dist.entries().to_vec();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            ranked.truncate(n);
            ranked.sort_unstable_by_key(|&(id, _)| id);
            ranked
        }
    };
    if let Some(id) = original {
        if let (Some(p), Err(at)) = (dist.get(id), kept.binary_search_by_key(&id, |&(t, _)| t)) {
            kept.insert(at, (id, p));
        }
    }
    kept
}

fn check_target(
    cfg: &MarginalizationConfig,
    clf: &dyn ClassifierOracle,
) -> Result<(), EngineError> {
    let class_count = clf.class_count();
    if cfg.target_class >= class_count {
        return Err(EngineError::TargetClass {
            class: cfg.target_class,
            class_count,
        });
    }
    Ok(())
}

/// `p(target | s)` for every sentence, in input order.
pub fn class_probabilities(
    sentences: &[Sentence],
    target_class: usize,
    batch_size: usize,
    execution: Execution,
    clf: &dyn ClassifierOracle,
) -> Result<Vec<f64>, EngineError> {
    let execution = execution.with_oracles(&[clf.concurrency()]);
    map_chunks(sentences, batch_size, execution, |chunk| {
        let dists = clf.classify_batch(chunk)?;
        if dists.len() != chunk.len() {
            return Err(EngineError::OracleArity {
                expected: chunk.len(),
                got: dists.len(),
            });
        }
        dists
            .iter()
            .map(|d| {
                if target_class < d.class_count() {
                    Ok(d.prob(target_class))
                } else {
                    Err(EngineError::TargetClass {
                        class: target_class,
                        class_count: d.class_count(),
                    })
                }
            })
            .collect()
    })
}

fn check_position(sentence: &Sentence, position: usize) -> Result<(), EngineError> {
    if position >= sentence.len() {
        return Err(EngineError::InvalidPosition {
            position,
            len: sentence.len(),
        });
    }
    Ok(())
}

fn query_one(
    lm: &dyn LikelihoodOracle,
    masked: &Sentence,
    position: usize,
) -> Result<LikelihoodDistribution, EngineError> {
    let mut dists = lm.fill_mask(masked, &[position])?;
    match (dists.pop(), dists.is_empty()) {
        (Some(d), true) => Ok(d),
        (d, _) => Err(EngineError::OracleArity {
            expected: 1,
            got: dists.len() + usize::from(d.is_some()),
        }),
    }
}

fn marginalize_unchecked(
    sentence: &Sentence,
    position: usize,
    cfg: &MarginalizationConfig,
    execution: Execution,
    clf: &dyn ClassifierOracle,
    lm: &dyn LikelihoodOracle,
) -> Result<Marginal, EngineError> {
    let masked = sentence.replaced(position, lm.mask_id());
    let dist = query_one(lm, &masked, position)?;
    let original = cfg.include_original.then(|| sentence.ids()[position]);
    let kept = select_candidates(&dist, cfg.truncation, original);
    if kept.is_empty() {
        return Err(EngineError::NoCandidates);
    }
    let substituted: Vec<Sentence> = kept
        .iter()
        .map(|&(id, _)| sentence.replaced(position, id))
        .collect();
    let probs = class_probabilities(
        &substituted,
        cfg.target_class,
        cfg.batch_size,
        execution,
        clf,
    )?;
    let (probability, mass) = weighted_mean(kept.iter().map(|&(_, w)| w).zip(probs));
    Ok(Marginal {
        probability,
        kept: kept.len(),
        kept_mass: mass,
    })
}

/// Marginalizes `position` out of `sentence` and reports the kept-candidate
/// statistics alongside the probability.
pub fn marginalize(
    sentence: &Sentence,
    position: usize,
    cfg: &MarginalizationConfig,
    clf: &dyn ClassifierOracle,
    lm: &dyn LikelihoodOracle,
) -> Result<Marginal, EngineError> {
    cfg.validate()?;
    check_target(cfg, clf)?;
    check_position(sentence, position)?;
    let execution = cfg
        .execution
        .with_oracles(&[clf.concurrency(), lm.concurrency()]);
    marginalize_unchecked(sentence, position, cfg, execution, clf, lm)
}

/// `p(y_c | x_-i)` under the configured truncation rule.
pub fn marginalized_probability(
    sentence: &Sentence,
    position: usize,
    cfg: &MarginalizationConfig,
    clf: &dyn ClassifierOracle,
    lm: &dyn LikelihoodOracle,
) -> Result<f64, EngineError> {
    marginalize(sentence, position, cfg, clf, lm).map(|m| m.probability)
}

/// Scores every position of `sentence` by input marginalization.
pub fn attribute(
    sentence: &Sentence,
    cfg: &MarginalizationConfig,
    clf: &dyn ClassifierOracle,
    lm: &dyn LikelihoodOracle,
) -> Result<AttributionMap, EngineError> {
    attribute_detailed(sentence, cfg, clf, lm).map(|a| a.map)
}

pub fn attribute_detailed(
    sentence: &Sentence,
    cfg: &MarginalizationConfig,
    clf: &dyn ClassifierOracle,
    lm: &dyn LikelihoodOracle,
) -> Result<Attribution, EngineError> {
    cfg.validate()?;
    check_target(cfg, clf)?;
    let execution = cfg
        .execution
        .with_oracles(&[clf.concurrency(), lm.concurrency()]);
    let full_probability = class_probabilities(
        std::slice::from_ref(sentence),
        cfg.target_class,
        1,
        execution,
        clf,
    )?[0];
    let marginals = (0..sentence.len())
        .map(|i| marginalize_unchecked(sentence, i, cfg, execution, clf, lm).map_err(|e| e.at(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let scores = marginals
        .iter()
        .map(|m| weight_of_evidence(full_probability, m.probability, cfg.prob_clamp))
        .collect();
    Ok(Attribution {
        map: AttributionMap {
            scores,
            target_class: cfg.target_class,
            method: Method::Marginalization,
        },
        full_probability,
        marginals,
    })
}

struct JointLeaf {
    weight: f64,
    sentence: Sentence,
}

struct JointWalk<'a> {
    order: &'a [usize],
    original: &'a Sentence,
    cfg: &'a MarginalizationConfig,
    lm: &'a dyn LikelihoodOracle,
    leaves: Vec<JointLeaf>,
}

impl JointWalk<'_> {
    fn descend(
        &mut self,
        current: &mut Sentence,
        depth: usize,
        weight: f64,
        combos: usize,
    ) -> Result<(), EngineError> {
        let Some(&position) = self.order.get(depth) else {
            if self.leaves.len() >= self.cfg.joint_cap {
                return Err(EngineError::JointTooLarge {
                    cap: self.cfg.joint_cap,
                });
            }
            self.leaves.push(JointLeaf {
                weight,
                sentence: current.clone(),
            });
            return Ok(());
        };
        let dist = query_one(self.lm, current, position).map_err(|e| e.at(position))?;
        let original = self
            .cfg
            .include_original
            .then(|| self.original.ids()[position]);
        let kept = select_candidates(&dist, self.cfg.truncation, original);
        if kept.is_empty() {
            return Err(EngineError::NoCandidates.at(position));
        }
        let combos = combos.saturating_mul(kept.len());
        if combos > self.cfg.joint_cap {
            return Err(EngineError::JointTooLarge {
                cap: self.cfg.joint_cap,
            });
        }
        let mass: f64 = kept.iter().map(|&(_, p)| p).sum();
        for &(id, p) in &kept {
            current.set(position, id);
            self.descend(current, depth + 1, weight * (p / mass), combos)?;
        }
        current.set(position, self.lm.mask_id());
        Ok(())
    }
}

/// `p(y_c | x without all of positions)`, by chaining conditional
/// likelihoods left to right: the first position is drawn with every
/// listed position masked, each later one conditions on the candidates
/// already placed to its left. Each conditional is truncated and
/// renormalized independently.
pub fn joint_marginalized_probability(
    sentence: &Sentence,
    positions: &[usize],
    cfg: &MarginalizationConfig,
    clf: &dyn ClassifierOracle,
    lm: &dyn LikelihoodOracle,
) -> Result<f64, EngineError> {
    cfg.validate()?;
    check_target(cfg, clf)?;
    let mut order = positions.to_vec();
    order.sort_unstable();
    for w in order.windows(2) {
        if w[0] == w[1] {
            return Err(EngineError::DuplicatePosition(w[0]));
        }
    }
    for &p in &order {
        check_position(sentence, p)?;
    }
    let execution = cfg
        .execution
        .with_oracles(&[clf.concurrency(), lm.concurrency()]);
    let mut masked = sentence.clone();
    for &p in &order {
        masked.set(p, lm.mask_id());
    }
    let mut walk = JointWalk {
        order: &order,
        original: sentence,
        cfg,
        lm,
        leaves: Vec::new(),
    };
    walk.descend(&mut masked, 0, 1.0, 1)?;
    let leaves = walk.leaves;
    let filled: Vec<Sentence> = leaves.iter().map(|l| l.sentence.clone()).collect();
    let probs = class_probabilities(&filled, cfg.target_class, cfg.batch_size, execution, clf)?;
    Ok(weighted_mean(leaves.iter().map(|l| l.weight).zip(probs)).0)
}

/// Likelihood-weighted mean of class probabilities, taken around the first
/// value so that equal probabilities come back exactly. Returns the mean and
/// the total weight.
pub(crate) fn weighted_mean(pairs: impl IntoIterator<Item = (f64, f64)>) -> (f64, f64) {
    let mut anchor = None;
    let mut offset = 0.0;
    let mut mass = 0.0;
    for (w, p) in pairs {
        let a = *anchor.get_or_insert(p);
        offset += w * (p - a);
        mass += w;
    }
    (anchor.unwrap_or(0.0) + offset / mass, mass)
}

/// Joint weight of evidence of two or more positions.
pub fn attribute_joint(
    sentence: &Sentence,
    positions: &[usize],
    cfg: &MarginalizationConfig,
    clf: &dyn ClassifierOracle,
    lm: &dyn LikelihoodOracle,
) -> Result<f64, EngineError> {
    if positions.len() < 2 {
        return Err(EngineError::TooFewPositions(positions.len()));
    }
    let p_without = joint_marginalized_probability(sentence, positions, cfg, clf, lm)?;
    let p_full = class_probabilities(
        std::slice::from_ref(sentence),
        cfg.target_class,
        1,
        Execution::Sequential,
        clf,
    )?[0];
    Ok(weight_of_evidence(p_full, p_without, cfg.prob_clamp))
}

/// Fixed replacement token for erasure baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Replacement {
    pub token: TokenId,
    pub method: Method,
}

impl Replacement {
    /// Replace with the pad id ("zero" erasure).
    pub fn zero(vocab: &Vocabulary) -> Self {
        Self {
            token: vocab.pad_id(),
            method: Method::ZeroErasure,
        }
    }

    pub fn unk(vocab: &Vocabulary) -> Self {
        Self {
            token: vocab.unk_id(),
            method: Method::UnkErasure,
        }
    }
}

/// Baseline: WoE between the intact sentence and the sentence with one
/// position overwritten by a fixed token. Truncation settings in `cfg` are
/// ignored.
pub fn erasure_attribution(
    sentence: &Sentence,
    replacement: Replacement,
    cfg: &MarginalizationConfig,
    clf: &dyn ClassifierOracle,
) -> Result<AttributionMap, EngineError> {
    cfg.validate()?;
    check_target(cfg, clf)?;
    let mut batch = Vec::with_capacity(sentence.len() + 1);
    batch.push(sentence.clone());
    batch.extend((0..sentence.len()).map(|i| sentence.replaced(i, replacement.token)));
    let probs = class_probabilities(&batch, cfg.target_class, cfg.batch_size, cfg.execution, clf)?;
    let scores = probs[1..]
        .iter()
        .map(|&p| weight_of_evidence(probs[0], p, cfg.prob_clamp))
        .collect();
    Ok(AttributionMap {
        scores,
        target_class: cfg.target_class,
        method: replacement.method,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{ClassDistribution, ContextFreeLikelihood};
    use crate::vocab::SpecialTokens;

    /// p(class 1) is looked up from the token at `position`.
    struct PositionTable {
        position: usize,
        table: Vec<f64>,
    }

    impl ClassifierOracle for PositionTable {
        fn class_count(&self) -> usize {
            2
        }

        fn classify_batch(
            &self,
            batch: &[Sentence],
        ) -> Result<Vec<ClassDistribution>, OracleError> {
            batch
                .iter()
                .map(|s| {
                    let p = self.table[s.ids()[self.position] as usize];
                    ClassDistribution::new(vec![1.0 - p, p])
                })
                .collect()
        }
    }

    struct Constant(f64);

    impl ClassifierOracle for Constant {
        fn class_count(&self) -> usize {
            2
        }

        fn classify_batch(
            &self,
            batch: &[Sentence],
        ) -> Result<Vec<ClassDistribution>, OracleError> {
            Ok(vec![
                ClassDistribution::new(vec![1.0 - self.0, self.0])?;
                batch.len()
            ])
        }
    }

    fn vocab(n_plain: usize) -> Vocabulary {
        let mut tokens = vec!["[PAD]".to_string(), "[UNK]".into(), "[MASK]".into()];
        tokens.extend((0..n_plain).map(|i| format!("w{i}")));
        Vocabulary::from_tokens(tokens, &SpecialTokens::default()).unwrap()
    }

    #[test]
    fn woe_hand_values() {
        assert_eq!(weight_of_evidence(0.8, 0.5, DEFAULT_PROB_CLAMP), 2.0);
        assert_eq!(weight_of_evidence(0.3, 0.3, DEFAULT_PROB_CLAMP), 0.0);
        let clamped = weight_of_evidence(1.0, 0.5, 1e-7);
        assert!(clamped.is_finite());
        assert_eq!(clamped, log_odds(1.0 - 1e-7, 1e-7));
        assert!((clamped - ((1.0 - 1e-7) / 1e-7f64).log2()).abs() < 1e-6);
    }

    #[test]
    fn two_candidate_weighted_mean() {
        let v = vocab(2);
        let lm =
            ContextFreeLikelihood::from_weights(&v, |id| if id == 3 { 0.6 } else { 0.4 }).unwrap();
        let clf = PositionTable {
            position: 0,
            table: vec![0.5, 0.5, 0.5, 0.9, 0.1],
        };
        let s = Sentence::new(vec![3], &v).unwrap();
        let cfg = MarginalizationConfig::new(1).with_truncation(Truncation::full());
        let p = marginalized_probability(&s, 0, &cfg, &clf, &lm).unwrap();
        assert!((p - 0.58).abs() < 1e-15);
    }

    #[test]
    fn constant_classifier_marginal_and_scores() {
        let v = vocab(5);
        let lm = ContextFreeLikelihood::from_weights(&v, |id| id as f64).unwrap();
        let clf = Constant(0.37);
        let s = Sentence::new(vec![4], &v).unwrap();
        let cfg = MarginalizationConfig::new(1).with_truncation(Truncation::full());
        let p = marginalized_probability(&s, 0, &cfg, &clf, &lm).unwrap();
        assert!((p - 0.37).abs() < 1e-15);
        let map = attribute(&s, &cfg, &clf, &lm).unwrap();
        assert_eq!(map.scores.len(), 1);
        assert!(map.scores[0].abs() < 1e-12);
    }

    #[test]
    fn threshold_above_everything_errors() {
        let v = vocab(4);
        let lm = crate::oracles::uniform_likelihood(&v).unwrap();
        let s = Sentence::new(vec![3, 4], &v).unwrap();
        let cfg = MarginalizationConfig::new(0).with_truncation(Truncation::Threshold(0.5));
        let err = attribute(&s, &cfg, &Constant(0.5), &lm).unwrap_err();
        assert!(matches!(
            err,
            EngineError::AtPosition { position: 0, ref source } if matches!(**source, EngineError::NoCandidates)
        ));
        assert!(err.to_string().contains("no candidates above threshold"));
    }

    #[test]
    fn top_n_breaks_ties_by_id() {
        let d = LikelihoodDistribution::new(vec![(9, 0.2), (4, 0.2), (5, 0.5), (6, 0.1)]).unwrap();
        assert_eq!(
            select_candidates(&d, Truncation::TopN(2), None),
            vec![(4, 0.2), (5, 0.5)]
        );
        assert_eq!(select_candidates(&d, Truncation::TopN(10), None).len(), 4);
        assert_eq!(
            select_candidates(&d, Truncation::Threshold(0.15), None),
            vec![(4, 0.2), (5, 0.5), (9, 0.2)]
        );
        assert_eq!(
            select_candidates(&d, Truncation::Threshold(0.3), Some(6)),
            vec![(5, 0.5), (6, 0.1)]
        );
    }

    #[test]
    fn config_validation() {
        let ok = MarginalizationConfig::new(0);
        assert!(ok.validate().is_ok());
        for t in [
            Truncation::Threshold(-1e-3),
            Truncation::Threshold(1.0),
            Truncation::TopN(0),
        ] {
            assert!(ok.clone().with_truncation(t).validate().is_err());
        }
        let mut bad = ok.clone();
        bad.prob_clamp = 0.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn erasure_with_identical_token_scores_zero() {
        let v = vocab(4);
        let clf = PositionTable {
            position: 1,
            table: vec![0.2, 0.4, 0.5, 0.9, 0.6, 0.3, 0.7],
        };
        let s = Sentence::new(vec![3, 5, 6], &v).unwrap();
        let replacement = Replacement {
            token: 5,
            method: Method::ZeroErasure,
        };
        let map =
            erasure_attribution(&s, replacement, &MarginalizationConfig::new(1), &clf).unwrap();
        assert_eq!(map.scores[1], 0.0);
        assert_eq!(map.scores[0], 0.0);
        let zero = erasure_attribution(
            &s,
            Replacement::zero(&v),
            &MarginalizationConfig::new(1),
            &clf,
        )
        .unwrap();
        assert_eq!(zero.method, Method::ZeroErasure);
        assert!((zero.scores[1] - weight_of_evidence(0.3, 0.2, DEFAULT_PROB_CLAMP)).abs() < 1e-15);
    }

    #[test]
    fn joint_rejects_bad_positions() {
        let v = vocab(3);
        let lm = crate::oracles::uniform_likelihood(&v).unwrap();
        let s = Sentence::new(vec![3, 4, 5], &v).unwrap();
        let cfg = MarginalizationConfig::new(0);
        assert!(matches!(
            attribute_joint(&s, &[2, 2], &cfg, &Constant(0.5), &lm),
            Err(EngineError::DuplicatePosition(2))
        ));
        assert!(matches!(
            attribute_joint(&s, &[1], &cfg, &Constant(0.5), &lm),
            Err(EngineError::TooFewPositions(1))
        ));
        assert!(matches!(
            attribute_joint(&s, &[1, 7], &cfg, &Constant(0.5), &lm),
            Err(EngineError::InvalidPosition { .. })
        ));
    }

    #[test]
    fn joint_single_candidate_reduces_to_substitution() {
        let v = vocab(4);
        // One dominant token per position clears σ.
        let lm = ContextFreeLikelihood::from_weights(&v, |id| if id == 6 { 0.97 } else { 0.01 })
            .unwrap();
        let clf = PositionTable {
            position: 0,
            table: vec![0.5, 0.5, 0.5, 0.8, 0.3, 0.4, 0.25],
        };
        let s = Sentence::new(vec![3, 4], &v).unwrap();
        let cfg = MarginalizationConfig::new(1).with_truncation(Truncation::Threshold(0.5));
        let joint = attribute_joint(&s, &[0, 1], &cfg, &clf, &lm).unwrap();
        let substituted = weight_of_evidence(0.8, 0.25, cfg.prob_clamp);
        assert_eq!(joint, substituted);
    }

    #[test]
    fn joint_cap_guard() {
        let v = vocab(10);
        let lm = crate::oracles::uniform_likelihood(&v).unwrap();
        let s = Sentence::new(vec![3, 4, 5], &v).unwrap();
        let mut cfg = MarginalizationConfig::new(0).with_truncation(Truncation::full());
        cfg.joint_cap = 99;
        let err = attribute_joint(&s, &[0, 1], &cfg, &Constant(0.5), &lm).unwrap_err();
        assert!(err
            .to_string()
            .starts_with("joint marginalization too large"));
        cfg.joint_cap = 100;
        assert!(attribute_joint(&s, &[0, 1], &cfg, &Constant(0.5), &lm).is_ok());
    }

    #[test]
    fn target_class_out_of_range() {
        let v = vocab(3);
        let lm = crate::oracles::uniform_likelihood(&v).unwrap();
        let s = Sentence::new(vec![3], &v).unwrap();
        let cfg = MarginalizationConfig::new(2);
        assert!(matches!(
            attribute(&s, &cfg, &Constant(0.5), &lm),
            Err(EngineError::TargetClass { .. })
        ));
    }
}
