//! Single-prompt LLM baselines sharing the gateway and templates with the
//! graph engine.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{parse_single_term, Bindings, Engine, EngineError, RunConfig, TemplateSet};
use crate::gateway::{ChatMessage, ChatProvider};
use crate::graph::{GeneSetRecord, NodeId, ThoughtGraph};

/// Number of question-answer exemplars the few-shot prompt carries.
pub const FEW_SHOT_EXEMPLARS: usize = 5;
/// Answers requested by the zero-shot-9 prompt.
pub const ZERO_SHOT_9_COUNT: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    IoZeroShot,
    IoZeroShot9,
    FewShot,
    Cot,
}

impl BaselineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::IoZeroShot => "io-zero-shot",
            BaselineKind::IoZeroShot9 => "io-zero-shot-9",
            BaselineKind::FewShot => "few-shot",
            BaselineKind::Cot => "cot",
        }
    }

    pub fn template(self) -> &'static str {
        match self {
            BaselineKind::IoZeroShot => "io_zero_shot",
            BaselineKind::IoZeroShot9 => "io_zero_shot_9",
            BaselineKind::FewShot => "few_shot",
            BaselineKind::Cot => "cot",
        }
    }

    /// Terms each call returns.
    pub fn arity(self) -> usize {
        match self {
            BaselineKind::IoZeroShot9 => ZERO_SHOT_9_COUNT,
            _ => 1,
        }
    }

    /// Row label used in reports.
    pub fn report_label(self) -> &'static str {
        match self {
            BaselineKind::IoZeroShot => "IO zero-shot",
            BaselineKind::IoZeroShot9 => "IO zero-shot-9 (b)",
            BaselineKind::FewShot => "IO few-shot",
            BaselineKind::Cot => "CoT",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = BaselineError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "io-zero-shot" => Ok(BaselineKind::IoZeroShot),
            "io-zero-shot-9" => Ok(BaselineKind::IoZeroShot9),
            "few-shot" => Ok(BaselineKind::FewShot),
            "cot" => Ok(BaselineKind::Cot),
            other => Err(BaselineError::Precondition(format!("unknown baseline `{other}`"))),
        }
    }
}

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("exemplar file line {line}: {message}")]
    Exemplar { line: usize, message: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub genes: Vec<String>,
    pub answer: String,
    /// Gene set id, when the exemplar came from the dataset.
    pub id: Option<String>,
}

fn normalized_genes(genes: &[String]) -> Vec<String> {
    let mut g: Vec<String> = genes.iter().map(|s| s.trim().to_uppercase()).collect();
    g.sort();
    g
}

/// Read a few-shot exemplar TSV (`genes<TAB>answer[<TAB>id]`, header line
/// optional, genes space- or comma-separated). Exemplars whose id or gene
/// set matches any of `held_out` are rejected.
pub fn load_exemplars<R: BufRead>(
    reader: R,
    held_out: &[GeneSetRecord],
) -> Result<Vec<Exemplar>, BaselineError> {
    let held_ids: HashSet<&str> = held_out.iter().map(|r| r.id.as_str()).collect();
    let held_sets: HashSet<Vec<String>> = held_out.iter().map(|r| normalized_genes(&r.genes)).collect();
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| BaselineError::Exemplar {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() || (lineno == 1 && line.to_lowercase().starts_with("genes\t")) {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 2 {
            return Err(BaselineError::Exemplar {
                line: lineno,
                message: "expected genes<TAB>answer".into(),
            });
        }
        let genes: Vec<String> = cols[0]
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        let answer = cols[1].trim().to_string();
        if genes.is_empty() || answer.is_empty() {
            return Err(BaselineError::Exemplar {
                line: lineno,
                message: "empty genes or answer".into(),
            });
        }
        let id = cols.get(2).map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
        if id.as_deref().is_some_and(|id| held_ids.contains(id))
            || held_sets.contains(&normalized_genes(&genes))
        {
            return Err(BaselineError::Exemplar {
                line: lineno,
                message: "exemplar overlaps an evaluated gene set".into(),
            });
        }
        out.push(Exemplar { genes, answer, id });
    }
    Ok(out)
}

/// Pick exactly [`FEW_SHOT_EXEMPLARS`] exemplars, deterministically for a
/// seed. Fewer than that is an error; file order is kept among the chosen.
pub fn select_exemplars(pool: &[Exemplar], seed: u64) -> Result<Vec<Exemplar>, BaselineError> {
    if pool.len() < FEW_SHOT_EXEMPLARS {
        return Err(BaselineError::Precondition(format!(
            "few-shot needs {FEW_SHOT_EXEMPLARS} exemplars, the file has {}",
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, pool.len(), FEW_SHOT_EXEMPLARS).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pool[i].clone()).collect())
}

/// The two chains CoT lays out: root to final answer first, then root to the
/// first child of the best other voted node in the penultimate layer (or,
/// with a beam of one, to the final answer's first sibling).
pub fn top_pathways(graph: &ThoughtGraph) -> Vec<Vec<String>> {
    let Some(final_id) = graph.final_answer else {
        return Vec::new();
    };
    let terms = |id: NodeId| -> Vec<String> {
        graph.chain_to(id).into_iter().map(|n| n.term.clone()).collect()
    };
    let mut out = vec![terms(final_id)];
    let depth = graph.depth();
    let final_parent = graph.node(final_id).and_then(|n| n.parent);
    let first_child = |parent: NodeId, skip: Option<NodeId>| {
        graph
            .layer(depth)
            .into_iter()
            .filter(|n| n.parent == Some(parent) && Some(n.node_id) != skip)
            .map(|n| n.node_id)
            .min()
    };
    let mut others: Vec<_> = graph
        .layer(depth.saturating_sub(1))
        .into_iter()
        .filter(|n| n.voted && Some(n.node_id) != final_parent)
        .collect();
    others.sort_by_key(|n| (n.vote_rank, n.node_id));
    let second = others
        .iter()
        .find_map(|n| first_child(n.node_id, None))
        .or_else(|| final_parent.and_then(|p| first_child(p, Some(final_id))));
    if let Some(id) = second {
        out.push(terms(id));
    }
    out
}

fn render_pathways(paths: &[Vec<String>]) -> String {
    paths
        .iter()
        .enumerate()
        .map(|(i, chain)| {
            let steps: Vec<String> = chain
                .iter()
                .enumerate()
                .map(|(j, t)| format!("  Step {}: {t}", j + 1))
                .collect();
            format!("Pathway {}:\n{}", i + 1, steps.join("\n"))
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn render_exemplars(exemplars: &[Exemplar]) -> String {
    exemplars
        .iter()
        .map(|e| format!("Genes: {}\nProcess: {}", e.genes.join(", "), e.answer))
        .collect::<Vec<_>>()
        .join("\n\n")
}

pub struct Baselines<'a, C> {
    engine: Engine<'a, C>,
}

impl<'a, C: ChatProvider> Baselines<'a, C> {
    pub fn new(cfg: &'a RunConfig, chat: &'a C) -> Self {
        Baselines {
            engine: Engine::new(cfg, chat),
        }
    }

    pub fn with_templates(self, templates: &'a TemplateSet) -> Self {
        Baselines {
            engine: self.engine.with_templates(templates),
        }
    }

    fn single(&self, kind: BaselineKind, bindings: Bindings) -> Result<String, BaselineError> {
        let tag = kind.as_str();
        let mut messages = self.engine.templates().render(kind.template(), &bindings).map_err(EngineError::from)?;
        let mut retries = self.engine.config().vote_retries;
        loop {
            let raw = self.engine.ask(tag, &messages)?;
            match parse_single_term(&raw) {
                Ok(term) => return Ok(term),
                Err(e) if retries == 0 => {
                    return Err(EngineError::Generation {
                        tag: tag.to_string(),
                        source: e,
                    }
                    .into())
                }
                Err(_) => {
                    retries -= 1;
                    messages.push(ChatMessage::assistant(raw));
                    messages.push(ChatMessage::user(
                        "Reply with a single biological process name only.".to_string(),
                    ));
                }
            }
        }
    }

    pub fn io_zero_shot(&self, gene_set: &GeneSetRecord) -> Result<String, BaselineError> {
        gene_set.validate().map_err(EngineError::from)?;
        self.single(
            BaselineKind::IoZeroShot,
            Bindings::new().set("genes", gene_set.genes_joined()),
        )
    }

    /// Nine distinct terms; duplicates go through the engine's re-ask and top-up path.
    pub fn io_zero_shot_9(&self, gene_set: &GeneSetRecord) -> Result<Vec<String>, BaselineError> {
        gene_set.validate().map_err(EngineError::from)?;
        let kind = BaselineKind::IoZeroShot9;
        let messages = self
            .engine
            .templates()
            .render(
                kind.template(),
                &Bindings::new()
                    .set("genes", gene_set.genes_joined())
                    .set("count", ZERO_SHOT_9_COUNT.to_string()),
            )
            .map_err(EngineError::from)?;
        let generated = self
            .engine
            .generate_terms(kind.as_str(), messages, ZERO_SHOT_9_COUNT, &[])?;
        for note in &generated.notes {
            log::warn!("{}: {note}", gene_set.id);
        }
        Ok(generated.terms)
    }

    pub fn few_shot(&self, gene_set: &GeneSetRecord, exemplars: &[Exemplar]) -> Result<String, BaselineError> {
        gene_set.validate().map_err(EngineError::from)?;
        if exemplars.len() != FEW_SHOT_EXEMPLARS {
            return Err(BaselineError::Precondition(format!(
                "few-shot needs exactly {FEW_SHOT_EXEMPLARS} exemplars, got {}",
                exemplars.len()
            )));
        }
        let target = normalized_genes(&gene_set.genes);
        if exemplars
            .iter()
            .any(|e| e.id.as_deref() == Some(gene_set.id.as_str()) || normalized_genes(&e.genes) == target)
        {
            return Err(BaselineError::Precondition(format!(
                "an exemplar overlaps the evaluated gene set `{}`",
                gene_set.id
            )));
        }
        self.single(
            BaselineKind::FewShot,
            Bindings::new()
                .set("genes", gene_set.genes_joined())
                .set("exemplars", render_exemplars(exemplars)),
        )
    }

    pub fn cot(&self, gene_set: &GeneSetRecord, graph: &ThoughtGraph) -> Result<String, BaselineError> {
        self.single(BaselineKind::Cot, cot_bindings(gene_set, graph)?)
    }
}

fn cot_bindings(gene_set: &GeneSetRecord, graph: &ThoughtGraph) -> Result<Bindings, BaselineError> {
    if !graph.is_complete() {
        return Err(BaselineError::Precondition("CoT needs a completed graph".into()));
    }
    Ok(Bindings::new()
        .set("genes", gene_set.genes_joined())
        .set("pathways", render_pathways(&top_pathways(graph))))
}

/// The CoT user prompt for a gene set and its graph, as sent to the model.
pub fn render_cot_prompt(
    templates: &TemplateSet,
    gene_set: &GeneSetRecord,
    graph: &ThoughtGraph,
) -> Result<String, BaselineError> {
    let msgs = templates
        .render(BaselineKind::Cot.template(), &cot_bindings(gene_set, graph)?)
        .map_err(EngineError::from)?;
    Ok(msgs.last().map(|m| m.content.clone()).unwrap_or_default())
}
