//! Turns `--classifier` / `--likelihood` specs into oracles.

use std::sync::Arc;
use std::time::Duration;

use margin_attr::oracles::{
    prior_likelihood, train_naive_bayes, train_ngram_lm, uniform_likelihood, ClassifierOracle,
    LikelihoodOracle, RemoteConfig, RemoteOracle,
};
use margin_attr::vocab::TaggedCorpus;
use margin_attr::Vocabulary;

use crate::args::CommonArgs;
use crate::error::CliError;

pub const ENDPOINT_VAR: &str = "MARGIN_ATTR_ENDPOINT";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassifierSpec {
    NaiveBayes,
    Remote(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LikelihoodSpec {
    Unigram,
    Bigram,
    Uniform,
    Prior,
    Remote(String),
}

/// `remote:URI` wins over the environment; bare `remote` needs it.
fn remote_uri(rest: Option<&str>, env: Option<&str>) -> Result<String, CliError> {
    match (rest, env) {
        (Some(uri), _) if !uri.is_empty() => Ok(uri.to_owned()),
        (_, Some(uri)) if !uri.is_empty() => Ok(uri.to_owned()),
        _ => Err(CliError::config(format!(
            "remote oracle needs an endpoint: use remote:URI or set {ENDPOINT_VAR}"
        ))),
    }
}

fn split_remote(spec: &str) -> Option<Option<&str>> {
    if spec == "remote" {
        Some(None)
    } else {
        spec.strip_prefix("remote:").map(Some)
    }
}

impl ClassifierSpec {
    pub fn parse(spec: &str, env: Option<&str>) -> Result<Self, CliError> {
        if let Some(rest) = split_remote(spec) {
            return Ok(ClassifierSpec::Remote(remote_uri(rest, env)?));
        }
        match spec {
            "toy:nb" => Ok(ClassifierSpec::NaiveBayes),
            other => Err(CliError::config(format!(
                "unknown classifier {other:?} (expected toy:nb or remote:URI)"
            ))),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ClassifierSpec::NaiveBayes => "toy:nb".into(),
            ClassifierSpec::Remote(u) => format!("remote:{u}"),
        }
    }
}

impl LikelihoodSpec {
    pub fn parse(spec: &str, env: Option<&str>) -> Result<Self, CliError> {
        if let Some(rest) = split_remote(spec) {
            return Ok(LikelihoodSpec::Remote(remote_uri(rest, env)?));
        }
        match spec {
            "toy:unigram" => Ok(LikelihoodSpec::Unigram),
            "toy:bigram" => Ok(LikelihoodSpec::Bigram),
            "uniform" => Ok(LikelihoodSpec::Uniform),
            "prior" => Ok(LikelihoodSpec::Prior),
            other => Err(CliError::config(format!(
                "unknown likelihood {other:?} (expected toy:unigram, toy:bigram, uniform, prior or remote:URI)"
            ))),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            LikelihoodSpec::Unigram => "toy:unigram".into(),
            LikelihoodSpec::Bigram => "toy:bigram".into(),
            LikelihoodSpec::Uniform => "uniform".into(),
            LikelihoodSpec::Prior => "prior".into(),
            LikelihoodSpec::Remote(u) => format!("remote:{u}"),
        }
    }
}

pub struct Oracles {
    pub classifier: Arc<dyn ClassifierOracle>,
    pub likelihood: Arc<dyn LikelihoodOracle>,
    pub classifier_spec: ClassifierSpec,
    pub likelihood_spec: LikelihoodSpec,
}

pub fn resolve(
    common: &CommonArgs,
    corpus: &TaggedCorpus,
    vocab: &Vocabulary,
) -> Result<Oracles, CliError> {
    let env = std::env::var(ENDPOINT_VAR).ok();
    let classifier_spec = ClassifierSpec::parse(&common.classifier, env.as_deref())?;
    let likelihood_spec = LikelihoodSpec::parse(&common.likelihood, env.as_deref())?;
    let config = RemoteConfig {
        timeout: Duration::from_secs(common.timeout),
        retries: common.retries,
    };
    let mut remotes: Vec<(String, Arc<RemoteOracle>)> = Vec::new();
    let mut connect = |uri: &str| -> Result<Arc<RemoteOracle>, CliError> {
        if let Some((_, r)) = remotes.iter().find(|(u, _)| u == uri) {
            return Ok(r.clone());
        }
        let remote = Arc::new(RemoteOracle::connect(uri, config)?);
        remote.verify_vocabulary(vocab)?;
        remotes.push((uri.to_owned(), remote.clone()));
        Ok(remote)
    };
    let classifier: Arc<dyn ClassifierOracle> = match &classifier_spec {
        ClassifierSpec::NaiveBayes => Arc::new(train_naive_bayes(corpus, vocab, common.smoothing)?),
        ClassifierSpec::Remote(uri) => connect(uri)?,
    };
    let likelihood: Arc<dyn LikelihoodOracle> = match &likelihood_spec {
        LikelihoodSpec::Unigram => Arc::new(train_ngram_lm(corpus, vocab, 1, common.smoothing)?),
        LikelihoodSpec::Bigram => Arc::new(train_ngram_lm(corpus, vocab, 2, common.smoothing)?),
        LikelihoodSpec::Uniform => Arc::new(uniform_likelihood(vocab)?),
        LikelihoodSpec::Prior => Arc::new(prior_likelihood(corpus, vocab, common.smoothing)?),
        LikelihoodSpec::Remote(uri) => connect(uri)?,
    };
    if classifier.class_count() < corpus.class_count() {
        return Err(CliError::config(format!(
            "corpus has {} classes, classifier only {}",
            corpus.class_count(),
            classifier.class_count()
        )));
    }
    Ok(Oracles {
        classifier,
        likelihood,
        classifier_spec,
        likelihood_spec,
    })
}
