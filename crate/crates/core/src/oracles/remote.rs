//! HTTP/JSON client for an external classifier + masked-LM server.
//!
//! Endpoints:
//! - `GET  /v1/meta`      → `{"vocab_size", "pad_id", "mask_id", "unk_id", "class_count"}`
//! - `POST /v1/classify`  `{"sentences": [[id, ..], ..]}` → `{"class_count", "probs": [[p, ..], ..]}`
//! - `POST /v1/fill-mask` `{"tokens": [id, ..], "positions": [i, ..]}`
//!   → `{"distributions": [{"token_ids": [..], "probs": [..]}, ..]}`
//!
//! Every response is validated before it reaches the engine.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    check_masked, ClassDistribution, ClassifierOracle, LikelihoodDistribution, LikelihoodOracle,
    OracleError, CLASS_SUM_TOLERANCE,
};
use crate::vocab::{Sentence, TokenId, Vocabulary};

/// Row-sum tolerance the server is held to on `/v1/classify`.
pub const WIRE_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleMeta {
    pub vocab_size: usize,
    pub pad_id: TokenId,
    pub mask_id: TokenId,
    pub unk_id: TokenId,
    pub class_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RemoteConfig {
    pub timeout: Duration,
    /// Extra attempts after the first failed one.
    pub retries: u32,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            retries: 2,
        }
    }
}

#[derive(Serialize)]
struct ClassifyRequest<'a> {
    sentences: Vec<&'a [TokenId]>,
}

#[derive(Deserialize)]
struct ClassifyResponse {
    class_count: usize,
    probs: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct FillMaskRequest<'a> {
    tokens: &'a [TokenId],
    positions: &'a [usize],
}

#[derive(Deserialize)]
struct FillMaskResponse {
    distributions: Vec<SparseDistribution>,
}

#[derive(Deserialize)]
struct SparseDistribution {
    token_ids: Vec<TokenId>,
    probs: Vec<f64>,
}

/// Proxy for a remote model server; implements both oracle traits.
#[derive(Debug)]
pub struct RemoteOracle {
    agent: ureq::Agent,
    base: String,
    retries: u32,
    meta: OracleMeta,
}

/// Connects to `endpoint` and fetches `/v1/meta`.
pub fn remote_oracle(endpoint: &str, config: RemoteConfig) -> Result<RemoteOracle, OracleError> {
    RemoteOracle::connect(endpoint, config)
}

impl RemoteOracle {
    pub fn connect(endpoint: &str, config: RemoteConfig) -> Result<Self, OracleError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut oracle = Self {
            agent,
            base: endpoint.trim_end_matches('/').to_owned(),
            retries: config.retries,
            meta: OracleMeta {
                vocab_size: 0,
                pad_id: 0,
                mask_id: 0,
                unk_id: 0,
                class_count: 0,
            },
        };
        let meta: OracleMeta = oracle.call("/v1/meta", None::<&()>)?;
        if meta.class_count < 2 {
            return Err(OracleError::Protocol(format!(
                "meta reports {} classes",
                meta.class_count
            )));
        }
        oracle.meta = meta;
        Ok(oracle)
    }

    pub fn meta(&self) -> &OracleMeta {
        &self.meta
    }

    /// Rejects a local vocabulary whose size or special ids disagree with
    /// the server's. Ids are never remapped.
    pub fn verify_vocabulary(&self, vocab: &Vocabulary) -> Result<(), OracleError> {
        let m = &self.meta;
        let local = (vocab.len(), vocab.pad_id(), vocab.mask_id(), vocab.unk_id());
        let remote = (m.vocab_size, m.pad_id, m.mask_id, m.unk_id);
        if local != remote {
            return Err(OracleError::VocabMismatch(format!(
                "local (size, pad, mask, unk) = {local:?}, server = {remote:?}"
            )));
        }
        Ok(())
    }

    fn call<B: Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: Option<&B>,
    ) -> Result<T, OracleError> {
        let url = format!("{}{}", self.base, path);
        let attempts = self.retries as usize + 1;
        let mut last = String::new();
        for _ in 0..attempts {
            let sent = match body {
                Some(b) => self.agent.post(&url).send_json(b),
                None => self.agent.get(&url).call(),
            };
            let mut response = match sent {
                Ok(r) => r,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let status = response.status().as_u16();
            if status >= 500 {
                last = format!("HTTP {status}");
                continue;
            }
            if status >= 300 {
                return Err(OracleError::Protocol(format!(
                    "{url} returned HTTP {status}"
                )));
            }
            return response
                .body_mut()
                .read_json::<T>()
                .map_err(|e| OracleError::Protocol(format!("{url}: {e}")));
        }
        Err(OracleError::Unavailable(format!(
            "{url} failed after {attempts} attempts: {last}"
        )))
    }

    fn class_row(&self, row: Vec<f64>) -> Result<ClassDistribution, OracleError> {
        if row.len() != self.meta.class_count {
            return Err(OracleError::Protocol(format!(
                "expected {} class probabilities, got {}",
                self.meta.class_count,
                row.len()
            )));
        }
        if let Some(p) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(OracleError::InvalidDistribution(format!(
                "class probability {p} outside [0, 1]"
            )));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > WIRE_SUM_TOLERANCE {
            return Err(OracleError::InvalidDistribution(format!(
                "class probabilities sum to {sum}"
            )));
        }
        if (sum - 1.0).abs() > CLASS_SUM_TOLERANCE {
            return ClassDistribution::new(row.into_iter().map(|p| p / sum).collect());
        }
        ClassDistribution::new(row)
    }

    fn likelihood(&self, d: SparseDistribution) -> Result<LikelihoodDistribution, OracleError> {
        if d.token_ids.len() != d.probs.len() {
            return Err(OracleError::Protocol(format!(
                "{} token ids but {} probabilities",
                d.token_ids.len(),
                d.probs.len()
            )));
        }
        if d.probs.windows(2).any(|w| w[0] < w[1]) {
            return Err(OracleError::Protocol(
                "fill-mask probabilities not in descending order".into(),
            ));
        }
        for &id in &d.token_ids {
            if id as usize >= self.meta.vocab_size {
                return Err(OracleError::InvalidDistribution(format!(
                    "token {id} outside vocabulary of size {}",
                    self.meta.vocab_size
                )));
            }
            if id == self.meta.pad_id || id == self.meta.mask_id {
                return Err(OracleError::InvalidDistribution(format!(
                    "special token {id} offered as a candidate"
                )));
            }
        }
        LikelihoodDistribution::new(d.token_ids.into_iter().zip(d.probs).collect())
    }
}

impl ClassifierOracle for RemoteOracle {
    fn class_count(&self) -> usize {
        self.meta.class_count
    }

    fn classify_batch(&self, batch: &[Sentence]) -> Result<Vec<ClassDistribution>, OracleError> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let request = ClassifyRequest {
            sentences: batch.iter().map(Sentence::ids).collect(),
        };
        let response: ClassifyResponse = self.call("/v1/classify", Some(&request))?;
        if response.class_count != self.meta.class_count {
            return Err(OracleError::Protocol(format!(
                "classify reports {} classes, meta reported {}",
                response.class_count, self.meta.class_count
            )));
        }
        if response.probs.len() != batch.len() {
            return Err(OracleError::Protocol(format!(
                "sent {} sentences, got {} rows",
                batch.len(),
                response.probs.len()
            )));
        }
        response
            .probs
            .into_iter()
            .map(|row| self.class_row(row))
            .collect()
    }
}

impl LikelihoodOracle for RemoteOracle {
    fn mask_id(&self) -> TokenId {
        self.meta.mask_id
    }

    fn fill_mask(
        &self,
        masked: &Sentence,
        positions: &[usize],
    ) -> Result<Vec<LikelihoodDistribution>, OracleError> {
        check_masked(masked, positions, self.meta.mask_id)?;
        let request = FillMaskRequest {
            tokens: masked.ids(),
            positions,
        };
        let response: FillMaskResponse = self.call("/v1/fill-mask", Some(&request))?;
        if response.distributions.len() != positions.len() {
            return Err(OracleError::Protocol(format!(
                "asked for {} positions, got {} distributions",
                positions.len(),
                response.distributions.len()
            )));
        }
        response
            .distributions
            .into_iter()
            .map(|d| self.likelihood(d))
            .collect()
    }
}
