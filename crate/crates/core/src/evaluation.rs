//! Quantitative checks on attribution maps.
//!
//! - Deletion curves: replace the top-scored tokens one at a time with a
//!   token sampled from the likelihood oracle and track the prediction.
//!   The normalized area under that curve (AUC_rep) is lower for more
//!   faithful attributions.
//! - IoT: overlap between polarity-tagged tokens and the top-k scored ones.
//! - Neutral audit: mean score at neutral-tagged positions.
//! - Truncation ablation: Pearson correlation of truncated attributions
//!   against full marginalization.

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{
    attribute_detailed, class_probabilities, AttributionMap, EngineError, MarginalizationConfig,
    Method, Truncation,
};
use crate::exec::{map_indexed, Execution};
use crate::oracles::{ClassifierOracle, LikelihoodOracle, OracleError};
use crate::vocab::{Sentence, Tag};

/// Seeded generator used for replacement sampling; recorded in outputs.
pub const RNG_ALGORITHM: &str = "chacha8";
pub const DEFAULT_MAX_FRACTION: f64 = 0.2;
pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("a curve needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("curve fractions must be strictly increasing")]
    NotIncreasing,
    #[error("max_fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no tagged tokens")]
    NoTaggedTokens,
    #[error("tags required")]
    TagsRequired,
    #[error("no neutral tokens")]
    NoNeutralTokens,
    #[error("zero variance")]
    ZeroVariance,
    #[error("need at least 2 values, got {0}")]
    TooShort(usize),
    #[error("empty truncation grid")]
    EmptyGrid,
    #[error("likelihood oracle returned no candidates at position {0}")]
    EmptyDistribution(usize),
}

/// Prediction probability as top-attributed tokens are replaced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeletionCurve {
    /// `(fraction replaced, p(target | current sentence))`, starting at 0.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    pub seed: u64,
    pub method: Method,
}

impl DeletionCurve {
    /// `fraction,probability` CSV, one row per point.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fraction,probability\n");
        for (f, p) in &self.points {
            let _ = writeln!(out, "{f},{p}");
        }
        out
    }

    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "auc": self.auc,
            "seed": self.seed,
            "method": self.method.as_str(),
            "rng": RNG_ALGORITHM,
        })
    }
}

/// Positions by descending score; ties go to the earlier position.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// `ceil(max_fraction · len)`, ignoring float noise just above an integer.
pub fn replacement_budget(len: usize, max_fraction: f64) -> usize {
    let raw = max_fraction * len as f64;
    ((raw - 1e-9).ceil().max(1.0) as usize).min(len)
}

/// Progressively replaces the highest-scored positions with tokens sampled
/// from the likelihood oracle, re-masking the partially replaced sentence
/// at every step. `sentence` itself is never modified.
pub fn deletion_curve(
    sentence: &Sentence,
    attributions: &AttributionMap,
    clf: &dyn ClassifierOracle,
    lm: &dyn LikelihoodOracle,
    max_fraction: f64,
    seed: u64,
) -> Result<DeletionCurve, EvalError> {
    if !(max_fraction > 0.0 && max_fraction <= 1.0) {
        return Err(EvalError::InvalidFraction(max_fraction));
    }
    if attributions.len() != sentence.len() {
        return Err(EvalError::LengthMismatch(
            attributions.len(),
            sentence.len(),
        ));
    }
    let target = attributions.target_class;
    let len = sentence.len();
    let prob = |s: &Sentence| -> Result<f64, EvalError> {
        Ok(class_probabilities(
            std::slice::from_ref(s),
            target,
            1,
            Execution::Sequential,
            clf,
        )?[0])
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = sentence.clone();
    let mut points = vec![(0.0, prob(&current)?)];
    let order = ranking(&attributions.scores);
    for (step, &position) in order
        .iter()
        .take(replacement_budget(len, max_fraction))
        .enumerate()
    {
        current.set(position, lm.mask_id());
        let mut dists = lm.fill_mask(&current, &[position])?;
        let dist = dists.pop().filter(|d| !d.is_empty());
        let dist = dist.ok_or(EvalError::EmptyDistribution(position))?;
        let sampler = WeightedIndex::new(dist.entries().iter().map(|&(_, p)| p))
            .map_err(|_| EvalError::EmptyDistribution(position))?;
        let (token, _) = dist.entries()[sampler.sample(&mut rng)];
        current.set(position, token);
        points.push(((step + 1) as f64 / len as f64, prob(&current)?));
    }
    let auc = auc(&points)?;
    Ok(DeletionCurve {
        points,
        auc,
        seed,
        method: attributions.method,
    })
}

/// Seed for the `index`-th sentence of a corpus run.
pub fn sentence_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

/// One curve per sentence; sentence `i` uses `sentence_seed(seed, i)` so
/// serial and parallel runs agree.
pub fn corpus_deletion_curves(
    sentences: &[Sentence],
    maps: &[AttributionMap],
    clf: &dyn ClassifierOracle,
    lm: &dyn LikelihoodOracle,
    max_fraction: f64,
    seed: u64,
    execution: Execution,
) -> Result<Vec<DeletionCurve>, EvalError> {
    if sentences.len() != maps.len() {
        return Err(EvalError::LengthMismatch(sentences.len(), maps.len()));
    }
    let execution = execution.with_oracles(&[clf.concurrency(), lm.concurrency()]);
    map_indexed(sentences, execution, |i, s| {
        deletion_curve(s, &maps[i], clf, lm, max_fraction, sentence_seed(seed, i))
    })
}

/// Trapezoidal area divided by the x-extent, so a flat curve at `p` has
/// area `p`.
pub fn auc(points: &[(f64, f64)]) -> Result<f64, EvalError> {
    if points.len() < 2 {
        return Err(EvalError::TooFewPoints(points.len()));
    }
    if points
        .windows(2)
        .any(|w| w[1].0.partial_cmp(&w[0].0) != Some(std::cmp::Ordering::Greater))
    {
        return Err(EvalError::NotIncreasing);
    }
    let area: f64 = points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum();
    Ok(area / (points[points.len() - 1].0 - points[0].0))
}

/// Unweighted mean of per-sentence AUC values.
pub fn mean_auc(curves: &[DeletionCurve]) -> Option<f64> {
    mean(curves.iter().map(|c| c.auc))
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// `|P ∩ T| / |P|` where `P` holds positions tagged `polarity` and `T` the
/// `top_k` highest-scored positions (all positions if the sentence is
/// shorter than `top_k`).
pub fn iot(
    attributions: &AttributionMap,
    tags: &[Tag],
    top_k: usize,
    polarity: Tag,
) -> Result<f64, EvalError> {
    if tags.len() != attributions.len() {
        return Err(EvalError::LengthMismatch(tags.len(), attributions.len()));
    }
    let tagged = tags.iter().filter(|&&t| t == polarity).count();
    if tagged == 0 {
        return Err(EvalError::NoTaggedTokens);
    }
    let hits = ranking(&attributions.scores)
        .into_iter()
        .take(top_k)
        .filter(|&i| tags[i] == polarity)
        .count();
    Ok(hits as f64 / tagged as f64)
}

/// Mean score over every neutral-tagged position across the given maps.
pub fn neutral_mean_score<'a>(
    items: impl IntoIterator<Item = (&'a AttributionMap, &'a [Tag])>,
) -> Result<f64, EvalError> {
    let mut neutral = Vec::new();
    for (map, tags) in items {
        if tags.len() != map.len() {
            return Err(EvalError::LengthMismatch(tags.len(), map.len()));
        }
        neutral.extend(
            map.scores
                .iter()
                .zip(tags)
                .filter(|(_, &t)| t == Tag::Neut)
                .map(|(&s, _)| s),
        );
    }
    mean(neutral.into_iter()).ok_or(EvalError::NoNeutralTokens)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(EvalError::TooShort(a.len()));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - mean_a, y - mean_b);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(EvalError::ZeroVariance);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub rule: Truncation,
    pub pearson: f64,
    /// Mean kept candidates per position.
    pub avg_candidates: f64,
}

pub fn rule_label(rule: Truncation) -> String {
    match rule {
        Truncation::Threshold(0.0) => "sigma=0".to_owned(),
        other => other.to_string(),
    }
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("rule,pearson,avg_candidates\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{}",
            rule_label(r.rule),
            r.pearson,
            r.avg_candidates
        );
    }
    out
}

struct Pooled {
    scores: Vec<f64>,
    kept: Vec<usize>,
}

fn pooled_attributions(
    sentences: &[Sentence],
    cfg: &MarginalizationConfig,
    clf: &dyn ClassifierOracle,
    lm: &dyn LikelihoodOracle,
    execution: Execution,
) -> Result<Pooled, EvalError> {
    let per_sentence = map_indexed(sentences, execution, |_, s| {
        attribute_detailed(s, cfg, clf, lm)
    })?;
    let mut pooled = Pooled {
        scores: Vec::new(),
        kept: Vec::new(),
    };
    for a in per_sentence {
        pooled.scores.extend(a.map.scores);
        pooled.kept.extend(a.marginals.iter().map(|m| m.kept));
    }
    Ok(pooled)
}

/// For each rule, attributes every sentence and correlates the pooled
/// scores against full marginalization (σ = 0). `base` supplies the target
/// class and other settings; its truncation is overridden.
pub fn truncation_ablation(
    sentences: &[Sentence],
    rules: &[Truncation],
    base: &MarginalizationConfig,
    clf: &dyn ClassifierOracle,
    lm: &dyn LikelihoodOracle,
) -> Result<Vec<AblationRow>, EvalError> {
    if rules.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let execution = base
        .execution
        .with_oracles(&[clf.concurrency(), lm.concurrency()]);
    // Inner engine calls stay sequential; the fan-out is over sentences.
    let inner = base.clone().with_execution(Execution::Sequential);
    let full = pooled_attributions(
        sentences,
        &inner.clone().with_truncation(Truncation::full()),
        clf,
        lm,
        execution,
    )?;
    rules
        .iter()
        .map(|&rule| {
            let run = pooled_attributions(
                sentences,
                &inner.clone().with_truncation(rule),
                clf,
                lm,
                execution,
            )?;
            let avg = run.kept.iter().sum::<usize>() as f64 / run.kept.len().max(1) as f64;
            Ok(AblationRow {
                rule,
                pearson: pearson(&run.scores, &full.scores)?,
                avg_candidates: avg,
            })
        })
        .collect()
}
