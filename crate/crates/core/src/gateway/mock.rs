use std::collections::{HashMap, VecDeque};
use std::io::BufRead;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{
    cache_key, check_batch_dims, check_embed_input, sha256_hex, ChatProvider, ChatRequest,
    ChatResponse, Embedder, EmbeddingVector, GatewayError,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub request_tag: String,
    pub request_digest: String,
    pub response_text: String,
}

/// Replays recorded responses by request digest.
///
/// Entries sharing a digest are served in file order; once a digest's queue
/// is down to its last entry, that entry keeps being returned.
#[derive(Debug)]
pub struct TranscriptChat {
    entries: Vec<TranscriptEntry>,
    queues: Mutex<HashMap<String, VecDeque<usize>>>,
    digest: String,
}

impl TranscriptChat {
    pub fn new(entries: Vec<TranscriptEntry>) -> Self {
        let mut queues: HashMap<String, VecDeque<usize>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            queues.entry(e.request_digest.clone()).or_default().push_back(i);
        }
        let digest = sha256_hex(&serde_json::to_vec(&entries).expect("entries serialize"));
        TranscriptChat {
            entries,
            queues: Mutex::new(queues),
            digest,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, GatewayError> {
        let entries: Vec<TranscriptEntry> =
            serde_json::from_str(text).map_err(|e| GatewayError::Decode(e.to_string()))?;
        Ok(Self::new(entries))
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Digest over the transcript content.
    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl ChatProvider for TranscriptChat {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let digest = cache_key(request);
        let mut queues = self.queues.lock().expect("transcript lock");
        let idx = match queues.get_mut(&digest) {
            Some(q) if q.len() > 1 => q.pop_front(),
            Some(q) => q.front().copied(),
            None => None,
        };
        let Some(idx) = idx else {
            return Err(GatewayError::Unscripted {
                tag: request.request_tag.clone(),
                digest,
            });
        };
        let entry = &self.entries[idx];
        if entry.request_tag != request.request_tag {
            log::debug!(
                "transcript tag mismatch: recorded `{}`, requested `{}`",
                entry.request_tag,
                request.request_tag
            );
        }
        Ok(ChatResponse::stop(entry.response_text.clone()))
    }
}

/// Reply queues keyed by request tag, for unit tests. The last reply of a
/// queue repeats once the queue is otherwise exhausted.
#[derive(Debug, Default)]
pub struct ScriptedChat {
    queues: Mutex<HashMap<String, VecDeque<String>>>,
    log: Mutex<Vec<ChatRequest>>,
}

impl ScriptedChat {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on<I, S>(self, tag: &str, replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.queues
            .lock()
            .expect("script lock")
            .entry(tag.to_string())
            .or_default()
            .extend(replies.into_iter().map(Into::into));
        self
    }

    /// Requests seen so far, in call order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().expect("script lock").clone()
    }

    pub fn calls(&self, tag: &str) -> usize {
        self.log
            .lock()
            .expect("script lock")
            .iter()
            .filter(|r| r.request_tag == tag)
            .count()
    }
}

impl ChatProvider for ScriptedChat {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        self.log.lock().expect("script lock").push(request.clone());
        let mut queues = self.queues.lock().expect("script lock");
        let reply = match queues.get_mut(&request.request_tag) {
            Some(q) if q.len() > 1 => q.pop_front(),
            Some(q) => q.front().cloned(),
            None => None,
        };
        reply.map(ChatResponse::stop).ok_or_else(|| GatewayError::Unscripted {
            tag: request.request_tag.clone(),
            digest: cache_key(request),
        })
    }
}

/// Counts calls that reach the wrapped provider.
#[derive(Debug)]
pub struct CountingChat<P> {
    inner: P,
    calls: AtomicUsize,
}

impl<P> CountingChat<P> {
    pub fn new(inner: P) -> Self {
        CountingChat {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: ChatProvider> ChatProvider for CountingChat<P> {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.chat(request)
    }
}

/// Records every successful exchange as a transcript entry.
#[derive(Debug)]
pub struct RecordingChat<P> {
    inner: P,
    entries: Mutex<Vec<TranscriptEntry>>,
}

impl<P> RecordingChat<P> {
    pub fn new(inner: P) -> Self {
        RecordingChat {
            inner,
            entries: Mutex::new(Vec::new()),
        }
    }

    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.entries.lock().expect("recorder lock").clone()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries()).expect("entries serialize")
    }
}

impl<P: ChatProvider> ChatProvider for RecordingChat<P> {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let response = self.inner.chat(request)?;
        self.entries.lock().expect("recorder lock").push(TranscriptEntry {
            request_tag: request.request_tag.clone(),
            request_digest: cache_key(request),
            response_text: response.text.clone(),
        });
        Ok(response)
    }
}

/// Embeddings from a fixed table. Lookup is exact first, then on the
/// trimmed lowercase form.
#[derive(Debug, Clone)]
pub struct DictionaryEmbedder {
    vectors: HashMap<String, Vec<f64>>,
    folded: HashMap<String, String>,
    dim: usize,
    tag: String,
}

impl DictionaryEmbedder {
    pub fn new(
        vectors: HashMap<String, Vec<f64>>,
        tag: impl Into<String>,
    ) -> Result<Self, GatewayError> {
        let mut dim = None;
        let mut keys: Vec<&String> = vectors.keys().collect();
        keys.sort();
        let mut folded = HashMap::new();
        for k in keys {
            let v = &vectors[k];
            EmbeddingVector::new(v.clone(), "")?;
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(GatewayError::Integrity(format!(
                        "entry `{k}` has dim {} but the table uses {d}",
                        v.len()
                    )))
                }
                _ => {}
            }
            folded.entry(k.trim().to_lowercase()).or_insert_with(|| k.clone());
        }
        Ok(DictionaryEmbedder {
            vectors,
            folded,
            dim: dim.unwrap_or(0),
            tag: tag.into(),
        })
    }

    /// JSON object mapping text to a number array.
    pub fn from_json(text: &str, tag: impl Into<String>) -> Result<Self, GatewayError> {
        let map: HashMap<String, Vec<f64>> =
            serde_json::from_str(text).map_err(|e| GatewayError::Decode(e.to_string()))?;
        Self::new(map, tag)
    }

    /// Tab-separated `text<TAB>v1 v2 ...` lines (commas also accepted between values).
    pub fn from_tsv<R: BufRead>(reader: R, tag: impl Into<String>) -> Result<Self, GatewayError> {
        let mut map = HashMap::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (text, rest) = line.split_once('\t').ok_or_else(|| {
                GatewayError::Decode(format!("line {}: expected text<TAB>vector", i + 1))
            })?;
            let values = rest
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| GatewayError::Decode(format!("line {}: {e}", i + 1)))?;
            map.insert(text.to_string(), values);
        }
        Self::new(map, tag)
    }

    /// Load by extension: `.json` as a JSON table, anything else as TSV.
    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let tag = format!(
            "dictionary:{}",
            path.file_name().and_then(|s| s.to_str()).unwrap_or("vectors")
        );
        if path.extension().and_then(|s| s.to_str()) == Some("json") {
            Self::from_json(&std::fs::read_to_string(path)?, tag)
        } else {
            let f = std::io::BufReader::new(std::fs::File::open(path)?);
            Self::from_tsv(f, tag)
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    fn get(&self, text: &str) -> Option<&Vec<f64>> {
        self.vectors.get(text).or_else(|| {
            self.folded
                .get(&text.trim().to_lowercase())
                .and_then(|k| self.vectors.get(k))
        })
    }
}

impl Embedder for DictionaryEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        check_embed_input(texts)?;
        let out = texts
            .iter()
            .map(|t| {
                let v = self.get(t).ok_or_else(|| GatewayError::UnknownText(t.clone()))?;
                EmbeddingVector::new(v.clone(), self.tag.clone())
            })
            .collect::<Result<Vec<_>, _>>()?;
        check_batch_dims(&out)?;
        Ok(out)
    }

    fn model_tag(&self) -> String {
        self.tag.clone()
    }
}
