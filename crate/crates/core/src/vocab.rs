//! Token/id bookkeeping: vocabularies, sentences and labelled corpora.
//!
//! The engine works on pre-tokenized id sequences. The whitespace tokenizer
//! here only exists for toy corpora; real models ship their own ids.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense integer index into a [`Vocabulary`].
pub type TokenId = u32;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("empty vocabulary")]
    Empty,
    #[error("duplicate token {token:?} at ids {first} and {second}")]
    DuplicateToken {
        token: String,
        first: TokenId,
        second: TokenId,
    },
    #[error("missing special token {0:?}")]
    MissingSpecial(String),
    #[error("special tokens must be distinct (pad={pad}, mask={mask}, unk={unk})")]
    SpecialsNotDistinct {
        pad: TokenId,
        mask: TokenId,
        unk: TokenId,
    },
    #[error("empty input")]
    EmptyInput,
    #[error("empty sentence")]
    EmptySentence,
    #[error("token id {id} out of range for vocabulary of size {size}")]
    InvalidId { id: TokenId, size: usize },
    #[error("expected {expected} tags, got {got}")]
    TagLength { expected: usize, got: usize },
    #[error("invalid segment boundaries {0:?}")]
    InvalidSegments(Vec<usize>),
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("{path}:{line}: {message}")]
    Corpus {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("label {label} out of range for {class_count} classes")]
    InvalidLabel { label: usize, class_count: usize },
    #[error("class count must be at least 2, got {0}")]
    TooFewClasses(usize),
}

/// Token strings used to resolve the reserved ids when loading a vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialTokens {
    pub pad: String,
    pub mask: String,
    pub unk: String,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        Self {
            pad: "[PAD]".to_owned(),
            mask: "[MASK]".to_owned(),
            unk: "[UNK]".to_owned(),
        }
    }
}

/// Bidirectional token string / id table with reserved special ids.
///
/// Besides pad, mask and unk, any bracketed token such as `[CLS]` or
/// `[unused0]` is marked reserved and never offered as a replacement
/// candidate by the likelihood oracles.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    reserved: Vec<bool>,
    pad_id: TokenId,
    mask_id: TokenId,
    unk_id: TokenId,
}

fn looks_reserved(token: &str) -> bool {
    token.len() > 2
        && token.starts_with('[')
        && token.ends_with(']')
        && token[1..token.len() - 1]
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_')
}

impl Vocabulary {
    pub fn from_tokens<I, S>(tokens: I, specials: &SpecialTokens) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.is_empty() {
            return Err(VocabError::Empty);
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (id, token) in tokens.iter().enumerate() {
            let id = id as TokenId;
            if let Some(first) = index.insert(token.clone(), id) {
                return Err(VocabError::DuplicateToken {
                    token: token.clone(),
                    first,
                    second: id,
                });
            }
        }
        let lookup = |name: &String| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| VocabError::MissingSpecial(name.clone()))
        };
        let pad_id = lookup(&specials.pad)?;
        let mask_id = lookup(&specials.mask)?;
        let unk_id = lookup(&specials.unk)?;
        if pad_id == mask_id || pad_id == unk_id || mask_id == unk_id {
            return Err(VocabError::SpecialsNotDistinct {
                pad: pad_id,
                mask: mask_id,
                unk: unk_id,
            });
        }
        let mut reserved: Vec<bool> = tokens.iter().map(|t| looks_reserved(t)).collect();
        for id in [pad_id, mask_id, unk_id] {
            reserved[id as usize] = true;
        }
        Ok(Self {
            tokens,
            index,
            reserved,
            pad_id,
            mask_id,
            unk_id,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn pad_id(&self) -> TokenId {
        self.pad_id
    }

    pub fn mask_id(&self) -> TokenId {
        self.mask_id
    }

    pub fn unk_id(&self) -> TokenId {
        self.unk_id
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn contains_id(&self, id: TokenId) -> bool {
        (id as usize) < self.tokens.len()
    }

    /// True for pad, mask, unk and bracketed tokens.
    pub fn is_reserved(&self, id: TokenId) -> bool {
        self.reserved.get(id as usize).copied().unwrap_or(false)
    }

    /// Ids eligible as replacement candidates, ascending.
    pub fn candidate_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.tokens.len() as TokenId).filter(move |&id| !self.reserved[id as usize])
    }

    pub fn candidate_count(&self) -> usize {
        self.reserved.iter().filter(|r| !**r).count()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Display strings for a sentence; out-of-range ids render as `#<id>`.
    pub fn display(&self, sentence: &Sentence) -> Vec<String> {
        sentence
            .ids()
            .iter()
            .map(|&id| match self.token(id) {
                Some(t) => t.to_owned(),
                None => format!("#{id}"),
            })
            .collect()
    }
}

/// Reads a vocabulary file (one token per line, id = line index) using the
/// default `[PAD]`/`[MASK]`/`[UNK]` special strings.
pub fn load_vocabulary(path: impl AsRef<Path>) -> Result<Vocabulary, VocabError> {
    load_vocabulary_with(path, &SpecialTokens::default())
}

pub fn load_vocabulary_with(
    path: impl AsRef<Path>,
    specials: &SpecialTokens,
) -> Result<Vocabulary, VocabError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| VocabError::Io {
        path: path.to_owned(),
        source,
    })?;
    let tokens: Vec<&str> = text
        .strip_suffix('\n')
        .unwrap_or(&text)
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect();
    if text.is_empty() {
        return Err(VocabError::Empty);
    }
    Vocabulary::from_tokens(tokens, specials)
}

/// Word-level sentiment tag, collapsed to three polarities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "&'static str")]
pub enum Tag {
    Pos,
    Neut,
    Neg,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Pos => "pos",
            Tag::Neut => "neut",
            Tag::Neg => "neg",
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tag {
    type Err = VocabError;

    /// Accepts the three collapsed tags plus the five-class
    /// `very_pos` / `very_neg` forms, which merge into `pos` / `neg`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pos" | "very_pos" => Ok(Tag::Pos),
            "neut" => Ok(Tag::Neut),
            "neg" | "very_neg" => Ok(Tag::Neg),
            other => Err(VocabError::UnknownTag(other.to_owned())),
        }
    }
}

impl TryFrom<String> for Tag {
    type Error = VocabError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Tag> for &'static str {
    fn from(t: Tag) -> Self {
        t.as_str()
    }
}

/// An ordered, non-empty token-id sequence with optional segment splits and
/// per-token tags.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Sentence {
    ids: Vec<TokenId>,
    segments: Option<Vec<usize>>,
    tags: Option<Vec<Tag>>,
}

impl Sentence {
    pub fn new(ids: Vec<TokenId>, vocab: &Vocabulary) -> Result<Self, VocabError> {
        if ids.is_empty() {
            return Err(VocabError::EmptySentence);
        }
        if let Some(&id) = ids.iter().find(|&&id| !vocab.contains_id(id)) {
            return Err(VocabError::InvalidId {
                id,
                size: vocab.len(),
            });
        }
        Ok(Self {
            ids,
            segments: None,
            tags: None,
        })
    }

    pub fn with_tags(mut self, tags: Vec<Tag>) -> Result<Self, VocabError> {
        if tags.len() != self.ids.len() {
            return Err(VocabError::TagLength {
                expected: self.ids.len(),
                got: tags.len(),
            });
        }
        self.tags = Some(tags);
        Ok(self)
    }

    /// Split indices must be strictly increasing and fall inside the sentence.
    pub fn with_segments(mut self, segments: Vec<usize>) -> Result<Self, VocabError> {
        let in_range = segments.iter().all(|&s| s > 0 && s < self.ids.len());
        let increasing = segments.windows(2).all(|w| w[0] < w[1]);
        if !in_range || !increasing {
            return Err(VocabError::InvalidSegments(segments));
        }
        self.segments = Some(segments);
        Ok(self)
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn tags(&self) -> Option<&[Tag]> {
        self.tags.as_deref()
    }

    pub fn segments(&self) -> Option<&[usize]> {
        self.segments.as_deref()
    }

    /// Copy of this sentence with `position` set to `id`.
    ///
    /// Panics if `position` is out of bounds.
    pub fn replaced(&self, position: usize, id: TokenId) -> Sentence {
        let mut out = self.clone();
        out.ids[position] = id;
        out
    }

    pub(crate) fn set(&mut self, position: usize, id: TokenId) {
        self.ids[position] = id;
    }
}

/// Lowercases, splits on whitespace and maps words to ids; unknown words
/// (and anything resolving to pad or mask) become `unk_id`.
pub fn tokenize_whitespace(text: &str, vocab: &Vocabulary) -> Result<Sentence, VocabError> {
    let lowered = text.trim().to_lowercase();
    if lowered.is_empty() {
        return Err(VocabError::EmptyInput);
    }
    let ids = lowered
        .split_whitespace()
        .map(|word| match vocab.id(word) {
            Some(id) if id != vocab.pad_id() && id != vocab.mask_id() => id,
            _ => vocab.unk_id(),
        })
        .collect();
    Sentence::new(ids, vocab)
}

/// Labelled sentences, one class id per sentence.
#[derive(Debug, Clone)]
pub struct TaggedCorpus {
    sentences: Vec<Sentence>,
    labels: Vec<usize>,
    class_count: usize,
}

impl TaggedCorpus {
    pub fn new(
        sentences: Vec<Sentence>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self, VocabError> {
        if sentences.is_empty() {
            return Err(VocabError::EmptyCorpus);
        }
        if class_count < 2 {
            return Err(VocabError::TooFewClasses(class_count));
        }
        assert_eq!(sentences.len(), labels.len(), "one label per sentence");
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(VocabError::InvalidLabel { label, class_count });
        }
        Ok(Self {
            sentences,
            labels,
            class_count,
        })
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Sentence, usize)> {
        self.sentences.iter().zip(self.labels.iter().copied())
    }

    pub fn is_tagged(&self) -> bool {
        self.sentences.iter().all(|s| s.tags().is_some())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusRecord {
    tokens: Vec<TokenId>,
    label: usize,
    #[serde(default)]
    tags: Option<Vec<Tag>>,
    #[serde(default)]
    segments: Option<Vec<usize>>,
}

/// Reads a JSONL corpus. When `class_count` is `None` it is inferred as
/// `max(label) + 1`, with a floor of 2.
pub fn load_corpus(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    class_count: Option<usize>,
) -> Result<TaggedCorpus, VocabError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| VocabError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut sentences = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let corpus_err = |message: String| VocabError::Corpus {
            path: path.to_owned(),
            line: lineno + 1,
            message,
        };
        let record: CorpusRecord =
            serde_json::from_str(line).map_err(|e| corpus_err(e.to_string()))?;
        let mut sentence =
            Sentence::new(record.tokens, vocab).map_err(|e| corpus_err(e.to_string()))?;
        if let Some(tags) = record.tags {
            sentence = sentence
                .with_tags(tags)
                .map_err(|e| corpus_err(e.to_string()))?;
        }
        if let Some(segments) = record.segments {
            sentence = sentence
                .with_segments(segments)
                .map_err(|e| corpus_err(e.to_string()))?;
        }
        sentences.push(sentence);
        labels.push(record.label);
    }
    let inferred = labels.iter().max().map_or(2, |&m| (m + 1).max(2));
    TaggedCorpus::new(sentences, labels, class_count.unwrap_or(inferred))
}
