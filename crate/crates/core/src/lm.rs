//! Scoring backends. A language model maps a token-id context to one score
//! per vocabulary entry; the decoding loop owns sampling and masking.
//!
//! `ScriptedLm` replays a fixture keyed by text suffixes and backs the
//! deterministic tests. `RemoteLm` talks to an HTTP scoring service.

use std::time::Duration;

use base64::Engine;
use serde::Deserialize;
use thiserror::Error;

use crate::mask::{Vocabulary, VocabError};

#[derive(Debug, Error)]
pub enum LmError {
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response or fixture: {0}")]
    Schema(String),
    #[error("score vector has {got} entries, vocabulary has {expected}")]
    VocabMismatch { expected: usize, got: usize },
    #[error("vocabulary rejected: {0}")]
    Vocab(#[from] VocabError),
    #[error("no scripted rule matches the context")]
    NoRule,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub trait LanguageModel {
    fn vocabulary(&self) -> &Vocabulary;
    /// Scores for the next token given the context so far. Higher is more
    /// likely; entries need not be normalized.
    fn scores(&self, context: &[u32]) -> Result<Vec<f64>, LmError>;
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RuleAction {
    NextToken { next_token: u32 },
    Scores { scores: Vec<f64> },
}

#[derive(Debug, Deserialize)]
struct ScriptedRule {
    /// Matches when this is a suffix of the detokenized context.
    suffix: String,
    #[serde(flatten)]
    action: RuleAction,
}

#[derive(Debug, Deserialize)]
struct ScriptedFile {
    tokens: Vec<String>,
    eos_id: u32,
    entries: Vec<ScriptedRule>,
    #[serde(default)]
    default: Option<RuleAction>,
}

/// Deterministic fixture-driven model. The context is detokenized and the
/// rule with the longest matching suffix fires; ties go to the earliest
/// rule. `default` fires when nothing matches.
pub struct ScriptedLm {
    vocab: Vocabulary,
    entries: Vec<(Vec<u8>, Vec<f64>)>,
    default: Option<Vec<f64>>,
}

impl ScriptedLm {
    pub fn from_json(text: &str) -> Result<ScriptedLm, LmError> {
        let file: ScriptedFile =
            serde_json::from_str(text).map_err(|e| LmError::Schema(e.to_string()))?;
        let tokens: Vec<Vec<u8>> = file.tokens.iter().map(|t| t.clone().into_bytes()).collect();
        let vocab = Vocabulary::new(tokens, file.eos_id)?;
        let n = vocab.len();
        let expand = |action: &RuleAction| -> Result<Vec<f64>, LmError> {
            match action {
                RuleAction::NextToken { next_token } => {
                    if *next_token as usize >= n {
                        return Err(LmError::Schema(format!(
                            "next_token {} out of range",
                            next_token
                        )));
                    }
                    let mut s = vec![0.0; n];
                    s[*next_token as usize] = 1.0;
                    Ok(s)
                }
                RuleAction::Scores { scores } => {
                    if scores.len() != n {
                        return Err(LmError::VocabMismatch {
                            expected: n,
                            got: scores.len(),
                        });
                    }
                    Ok(scores.clone())
                }
            }
        };
        let mut entries = Vec::new();
        for rule in &file.entries {
            entries.push((rule.suffix.clone().into_bytes(), expand(&rule.action)?));
        }
        let default = file.default.as_ref().map(&expand).transpose()?;
        Ok(ScriptedLm {
            vocab,
            entries,
            default,
        })
    }
}

impl LanguageModel for ScriptedLm {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn scores(&self, context: &[u32]) -> Result<Vec<f64>, LmError> {
        let text = self.vocab.detokenize(context);
        let mut hit: Option<(usize, &Vec<f64>)> = None;
        for (suffix, scores) in &self.entries {
            if text.ends_with(suffix) {
                let better = match hit {
                    None => true,
                    Some((len, _)) => suffix.len() > len,
                };
                if better {
                    hit = Some((suffix.len(), scores));
                }
            }
        }
        if let Some((_, scores)) = hit {
            return Ok(scores.clone());
        }
        self.default.clone().ok_or(LmError::NoRule)
    }
}

#[derive(Debug, Deserialize)]
struct RemoteVocab {
    /// Base64-encoded token bytes, indexed by id.
    tokens: Vec<String>,
    eos_id: u32,
}

#[derive(Debug, Deserialize)]
struct RemoteScores {
    scores: Vec<f64>,
}

/// HTTP scoring service client. `GET {base}/vocab` yields the token
/// inventory once at connect time; `POST {base}/score` maps a context to a
/// full score vector.
pub struct RemoteLm {
    agent: ureq::Agent,
    base: String,
    vocab: Vocabulary,
}

impl RemoteLm {
    pub fn connect(base_url: &str, timeout: Duration) -> Result<RemoteLm, LmError> {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        let base = base_url.trim_end_matches('/').to_string();
        let body = agent
            .get(&format!("{}/vocab", base))
            .call()
            .map_err(map_ureq)?
            .into_string()?;
        let raw: RemoteVocab =
            serde_json::from_str(&body).map_err(|e| LmError::Schema(e.to_string()))?;
        let engine = base64::engine::general_purpose::STANDARD;
        let mut tokens = Vec::with_capacity(raw.tokens.len());
        for (i, enc) in raw.tokens.iter().enumerate() {
            let bytes = engine
                .decode(enc)
                .map_err(|e| LmError::Schema(format!("token {}: {}", i, e)))?;
            tokens.push(bytes);
        }
        let vocab = Vocabulary::new(tokens, raw.eos_id)?;
        Ok(RemoteLm { agent, base, vocab })
    }
}

impl LanguageModel for RemoteLm {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn scores(&self, context: &[u32]) -> Result<Vec<f64>, LmError> {
        let payload = serde_json::json!({ "token_ids": context }).to_string();
        let body = self
            .agent
            .post(&format!("{}/score", self.base))
            .set("content-type", "application/json")
            .send_string(&payload)
            .map_err(map_ureq)?
            .into_string()?;
        let raw: RemoteScores =
            serde_json::from_str(&body).map_err(|e| LmError::Schema(e.to_string()))?;
        if raw.scores.len() != self.vocab.len() {
            return Err(LmError::VocabMismatch {
                expected: self.vocab.len(),
                got: raw.scores.len(),
            });
        }
        Ok(raw.scores)
    }
}

fn map_ureq(err: ureq::Error) -> LmError {
    match err {
        ureq::Error::Status(code, _) => LmError::Transport(format!("http status {}", code)),
        ureq::Error::Transport(t) => {
            let io_timeout = matches!(
                t.kind(),
                ureq::ErrorKind::Io if t.to_string().contains("timed out")
            );
            if io_timeout {
                LmError::Timeout
            } else {
                LmError::Transport(t.to_string())
            }
        }
    }
}
