//! Surrogate embedding functions mapping responses to fixed-dimension vectors.

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agents::{Response, ResponsePayload};
use crate::error::{Error, Result};
use crate::matrix::RowMatrix;

/// FNV-1a 64-bit offset basis used by the hashed bag-of-words embedder.
pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
/// FNV-1a 64-bit prime.
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Passthrough,
    HashedBow,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    None,
    UnitL2,
}

/// Serializable description of an embedder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub p: usize,
    #[serde(default)]
    pub normalization: Normalization,
    /// Texts per request for the external service.
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_batch_size() -> usize {
    32
}

impl EmbedderConfig {
    pub fn passthrough(p: usize) -> Self {
        EmbedderConfig {
            kind: EmbedderKind::Passthrough,
            p,
            normalization: Normalization::None,
            batch_size: default_batch_size(),
        }
    }

    pub fn hashed_bow(p: usize, normalization: Normalization) -> Self {
        EmbedderConfig {
            kind: EmbedderKind::HashedBow,
            p,
            normalization,
            batch_size: default_batch_size(),
        }
    }
}

/// Request body sent to an external embedding service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

/// Response body returned by an external embedding service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
}

/// Host-supplied transport for an embedding service.
pub trait EmbeddingTransport: Send + Sync {
    fn embed(&self, request: &EmbedRequest) -> std::result::Result<EmbedResponse, String>;
}

/// An embedding function `g̃` ready to apply.
#[derive(Clone)]
pub enum Embedder {
    Passthrough {
        p: usize,
    },
    HashedBow {
        p: usize,
        normalization: Normalization,
    },
    External {
        p: usize,
        normalization: Normalization,
        batch_size: usize,
        max_retries: u32,
        retry_delay: Duration,
        transport: Arc<dyn EmbeddingTransport>,
    },
}

impl fmt::Debug for Embedder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Embedder::Passthrough { p } => f.debug_struct("Passthrough").field("p", p).finish(),
            Embedder::HashedBow { p, normalization } => f
                .debug_struct("HashedBow")
                .field("p", p)
                .field("normalization", normalization)
                .finish(),
            Embedder::External { p, batch_size, .. } => f
                .debug_struct("External")
                .field("p", p)
                .field("batch_size", batch_size)
                .finish_non_exhaustive(),
        }
    }
}

impl Embedder {
    /// Builds a local embedder. External embedders need a transport and are
    /// built with [`Embedder::external`].
    pub fn from_config(config: &EmbedderConfig) -> Result<Self> {
        if config.p == 0 {
            return Err(Error::invalid_argument("embedder dimension p must be at least 1"));
        }
        match config.kind {
            EmbedderKind::Passthrough => Ok(Embedder::Passthrough { p: config.p }),
            EmbedderKind::HashedBow => Ok(Embedder::HashedBow {
                p: config.p,
                normalization: config.normalization,
            }),
            EmbedderKind::External => Err(Error::invalid_argument(
                "external embedder requires a transport supplied by the host",
            )),
        }
    }

    pub fn external(
        config: &EmbedderConfig,
        max_retries: u32,
        retry_delay: Duration,
        transport: Arc<dyn EmbeddingTransport>,
    ) -> Result<Self> {
        if config.p == 0 || config.batch_size == 0 {
            return Err(Error::invalid_argument(
                "external embedder needs p >= 1 and batch_size >= 1",
            ));
        }
        Ok(Embedder::External {
            p: config.p,
            normalization: config.normalization,
            batch_size: config.batch_size,
            max_retries,
            retry_delay,
            transport,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Embedder::Passthrough { p }
            | Embedder::HashedBow { p, .. }
            | Embedder::External { p, .. } => *p,
        }
    }

    /// Embeds `responses`; row `k` of the result is the embedding of response `k`.
    pub fn embed(&self, responses: &[Response]) -> Result<RowMatrix> {
        if responses.is_empty() {
            return Err(Error::invalid_argument("cannot embed an empty response list"));
        }
        let p = self.dim();
        match self {
            Embedder::Passthrough { .. } => {
                let mut data = Vec::with_capacity(responses.len() * p);
                for r in responses {
                    match &r.payload {
                        ResponsePayload::Vector(v) if v.len() == p => data.extend_from_slice(v),
                        ResponsePayload::Vector(v) => {
                            return Err(Error::invalid_argument(format!(
                                "passthrough embedder expects dimension {p}, got {}",
                                v.len()
                            )))
                        }
                        ResponsePayload::Text(_) => {
                            return Err(Error::invalid_argument(
                                "passthrough embedder cannot embed text payloads",
                            ))
                        }
                    }
                }
                Ok(RowMatrix::from_vec(responses.len(), p, data))
            }
            Embedder::HashedBow { normalization, .. } => {
                let mut data = Vec::with_capacity(responses.len() * p);
                for r in responses {
                    let text = text_payload(r)?;
                    data.extend(hashed_bow(text, p, *normalization));
                }
                Ok(RowMatrix::from_vec(responses.len(), p, data))
            }
            Embedder::External {
                normalization,
                batch_size,
                max_retries,
                retry_delay,
                transport,
                ..
            } => {
                let texts = responses
                    .iter()
                    .map(|r| text_payload(r).map(str::to_owned))
                    .collect::<Result<Vec<_>>>()?;
                let mut data = Vec::with_capacity(texts.len() * p);
                for batch in texts.chunks(*batch_size) {
                    let request = EmbedRequest {
                        texts: batch.to_vec(),
                    };
                    let reply = crate::retry::with_retries(*max_retries, *retry_delay, || {
                        transport.embed(&request)
                    })
                    .map_err(|e| Error::BackendUnavailable(format!("embedding service: {e}")))?;
                    if reply.vectors.len() != batch.len() {
                        return Err(Error::BackendUnavailable(format!(
                            "embedding service returned {} vectors for {} texts",
                            reply.vectors.len(),
                            batch.len()
                        )));
                    }
                    for mut v in reply.vectors {
                        if v.len() != p || v.iter().any(|x| !x.is_finite()) {
                            return Err(Error::BackendUnavailable(format!(
                                "embedding service returned a malformed vector of length {}",
                                v.len()
                            )));
                        }
                        normalize(&mut v, *normalization);
                        data.extend(v);
                    }
                }
                Ok(RowMatrix::from_vec(responses.len(), p, data))
            }
        }
    }
}

fn text_payload(r: &Response) -> Result<&str> {
    match &r.payload {
        ResponsePayload::Text(t) => Ok(t),
        ResponsePayload::Vector(_) => Err(Error::invalid_argument(
            "text embedder cannot embed vector payloads",
        )),
    }
}

/// 64-bit FNV-1a over the UTF-8 bytes of `token`.
pub fn fnv1a64(token: &str) -> u64 {
    token.bytes().fold(FNV_OFFSET_BASIS, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

/// Hashed bag-of-words embedding.
///
/// The text is lowercased and split on every non-alphanumeric character.
/// Each token hashes with [`fnv1a64`]; bucket is `hash % p` and the top bit
/// of the hash selects the sign (set means `-1`).
pub fn hashed_bow(text: &str, p: usize, normalization: Normalization) -> Vec<f64> {
    let mut row = vec![0.0; p];
    let lowered = text.to_lowercase();
    for token in lowered.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let h = fnv1a64(token);
        let bucket = (h % p as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        row[bucket] += sign;
    }
    normalize(&mut row, normalization);
    row
}

fn normalize(row: &mut [f64], normalization: Normalization) {
    if normalization == Normalization::UnitL2 {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|x| *x /= norm);
        }
    }
}
