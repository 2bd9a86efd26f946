//! Turning flags into a config, a chat provider stack, an embedder and an
//! ontology.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::Args;
use thought_graph::dataset::{ingest_dataset, Dataset};
use thought_graph::engine::TemplateSet;
use thought_graph::gateway::{
    CachedChat, ChatProvider, ChatRequest, ChatResponse, DictionaryEmbedder, Embedder,
    GatewayError, HttpChat, HttpEmbedder, RecordingChat, ResponseCache, RetryPolicy,
    TranscriptChat, ENV_EMBED_URL,
};
use thought_graph::ontology::{parse_obo, Ontology, BIOLOGICAL_PROCESS};
use thought_graph::RunConfig;

use crate::error::{CliError, CliResult};

/// Workers allowed against a live endpoint.
const LIVE_WORKER_CAP: usize = 4;

#[derive(Debug, Clone, Args, Default)]
pub struct RunArgs {
    /// TOML run config; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long = "k-init")]
    pub k_init: Option<usize>,
    #[arg(long = "k-sub")]
    pub k_sub: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub model: Option<String>,
    /// Seed for sampling and exemplar selection.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "cache-dir")]
    pub cache_dir: Option<PathBuf>,
    #[arg(long = "no-cache")]
    pub no_cache: bool,
    /// Serve chat replies from a recorded transcript (offline mode).
    #[arg(long)]
    pub transcript: Option<PathBuf>,
    /// Write every chat exchange of this run to a transcript file.
    #[arg(long)]
    pub record: Option<PathBuf>,
    /// Chat endpoint base URL; defaults to the environment.
    #[arg(long = "chat-url")]
    pub chat_url: Option<String>,
    /// OBO file or ontology index used for edge labels.
    #[arg(long)]
    pub ontology: Option<PathBuf>,
    /// Keep all namespaces instead of only biological_process.
    #[arg(long = "all-namespaces")]
    pub all_namespaces: bool,
    /// Directory of prompt template overrides.
    #[arg(long)]
    pub templates: Option<PathBuf>,
}

impl RunArgs {
    /// Flag, then config file, then built-in default.
    pub fn resolve_config(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.depth {
            cfg.depth = v;
        }
        if let Some(v) = self.beam {
            cfg.beam = v;
        }
        if let Some(v) = self.k_init {
            cfg.initial_branch = v;
        }
        if let Some(v) = self.k_sub {
            cfg.branch = v;
        }
        if let Some(v) = self.temperature {
            cfg.temperature = v;
        }
        if let Some(v) = &self.model {
            cfg.model = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn is_live(&self) -> bool {
        self.transcript.is_none()
    }

    pub fn chat(&self) -> CliResult<Chat> {
        let base: Box<dyn ChatProvider> = match &self.transcript {
            Some(p) => Box::new(TranscriptChat::from_file(p)?),
            None => Box::new(HttpChat::from_env(self.chat_url.clone(), RetryPolicy::default())?),
        };
        let cache_dir = match (&self.cache_dir, self.no_cache, self.is_live()) {
            (_, true, _) => None,
            (Some(d), false, _) => Some(d.clone()),
            (None, false, true) => Some(PathBuf::from(".thought-graph-cache")),
            (None, false, false) => None,
        };
        let cached: Box<dyn ChatProvider> = match cache_dir {
            Some(d) => Box::new(CachedChat::new(base, ResponseCache::new(d))),
            None => base,
        };
        Ok(Chat {
            inner: RecordingChat::new(cached),
            calls: Mutex::new(0),
        })
    }

    pub fn ontology(&self) -> CliResult<Option<Ontology>> {
        let Some(path) = &self.ontology else {
            return Ok(None);
        };
        let o = load_ontology(path)?;
        Ok(Some(if self.all_namespaces {
            o
        } else {
            o.restrict_to_namespace(BIOLOGICAL_PROCESS)
        }))
    }

    pub fn templates(&self) -> CliResult<TemplateSet> {
        Ok(match &self.templates {
            Some(dir) => TemplateSet::with_overrides(dir)?,
            None => TemplateSet::default(),
        })
    }

    pub fn workers(&self, requested: Option<usize>) -> usize {
        let n = requested
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1);
        if self.is_live() {
            n.min(LIVE_WORKER_CAP)
        } else {
            n
        }
    }
}

/// The provider stack for one command, with a call counter and an optional
/// recorder for `--record`.
pub struct Chat {
    inner: RecordingChat<Box<dyn ChatProvider>>,
    calls: Mutex<usize>,
}

impl Chat {
    pub fn calls(&self) -> usize {
        *self.calls.lock().expect("call counter")
    }

    pub fn save_record(&self, path: Option<&Path>) -> CliResult<()> {
        if let Some(p) = path {
            write_text(p, &self.inner.to_json())?;
        }
        Ok(())
    }
}

impl ChatProvider for Chat {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        *self.calls.lock().expect("call counter") += 1;
        self.inner.chat(request)
    }
}

pub fn load_ontology(path: &Path) -> CliResult<Ontology> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if text.trim_start().starts_with('{') {
        Ok(Ontology::from_index_json(&text)?)
    } else {
        Ok(parse_obo(text.as_bytes())?)
    }
}

pub fn load_dataset(path: &Path) -> CliResult<Dataset> {
    let ds = ingest_dataset(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    for w in &ds.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(ds)
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// `--embedder url [URL] | vectors-file FILE | dictionary FILE`.
pub fn embedder(spec: &[String]) -> CliResult<Box<dyn Embedder>> {
    match spec {
        [kind] if kind == "url" => {
            let url = std::env::var(ENV_EMBED_URL).map_err(|_| {
                CliError::config(format!("--embedder url needs a URL or {ENV_EMBED_URL}"))
            })?;
            Ok(Box::new(HttpEmbedder::new(url, RetryPolicy::default())?))
        }
        [kind, url] if kind == "url" => Ok(Box::new(HttpEmbedder::new(url.clone(), RetryPolicy::default())?)),
        [kind, file] if kind == "vectors-file" || kind == "dictionary" => {
            let path = Path::new(file);
            if !path.exists() {
                return Err(CliError::input(format!("{file}: no such embeddings file")));
            }
            Ok(Box::new(DictionaryEmbedder::from_file(path)?))
        }
        _ => Err(CliError::config(format!(
            "unrecognized --embedder `{}`; expected `url [URL]`, `vectors-file FILE` or `dictionary FILE`",
            spec.join(" ")
        ))),
    }
}

/// File name used for a gene set's graph inside a graphs directory.
pub fn graph_file_name(gene_set_id: &str) -> String {
    let safe: String = gene_set_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect();
    format!("{safe}.json")
}
