//! Graph generation: initial expansion, voted beam, per-node refinement,
//! edge labeling and final-answer selection.
//!
//! The run is breadth-first. Layer 1 comes from one initial expansion. For
//! each later layer the previous layer is voted down to the beam, every
//! selected node is expanded into more specific children, and every new
//! edge is labeled. The last layer is not voted; a final vote picks one
//! answer from it.

mod config;
pub mod parse;
pub mod templates;

use std::collections::HashSet;
use std::sync::Mutex;

use thiserror::Error;

pub use config::{ConfigError, EdgeLabelMode, RunConfig, VotePool};
pub use parse::{parse_candidate_indices, parse_relation, parse_single_term, parse_term_list, ReplyParseError};
pub use templates::{Bindings, PromptTemplate, TemplateError, TemplateSet};

use crate::gateway::{
    cache_key, sha256_hex, ChatMessage, ChatProvider, ChatRequest, ChatResponse, GatewayError,
};
use crate::graph::{EdgeSource, GeneSetRecord, GraphError, NodeId, ThoughtGraph};
use crate::ontology::{Ontology, Relation};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("generation failed at `{tag}`: {source}")]
    Generation {
        tag: String,
        #[source]
        source: ReplyParseError,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Source of the run start time recorded in provenance.
pub trait Clock: Send + Sync {
    fn now(&self) -> Option<String>;
}

/// Records no time. The default, so runs are reproducible.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> Option<String> {
        None
    }
}

/// Seconds since the Unix epoch.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Option<String> {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .ok()?
            .as_secs();
        Some(format!("unix:{secs}"))
    }
}

/// Terms produced by one expansion, plus notes on any fallback taken.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generated {
    pub terms: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    /// Picked node ids, best first.
    pub selected: Vec<NodeId>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeLabel {
    pub relation: Relation,
    pub source: EdgeSource,
    pub note: Option<String>,
}

/// Built-in relation exemplars for when no ontology is loaded.
const FALLBACK_EXAMPLES: &[(&str, &str, Relation)] = &[
    ("DNA repair", "mismatch repair", Relation::IsA),
    ("cell cycle", "chromosome segregation", Relation::PartOf),
    ("gene expression", "translation", Relation::HasPart),
    ("regulation of cell cycle", "cell cycle", Relation::Regulates),
];

/// Remembers every request digest a run issued.
struct KeyLog<'c, C> {
    inner: &'c C,
    keys: Mutex<Vec<String>>,
}

impl<C: ChatProvider> KeyLog<'_, C> {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.keys.lock().expect("key log").push(cache_key(request));
        self.inner.chat(request)
    }

    fn digest(&self) -> String {
        let mut keys = self.keys.lock().expect("key log").clone();
        keys.sort();
        keys.dedup();
        sha256_hex(keys.join("\n").as_bytes())
    }
}

pub struct Engine<'a, C> {
    cfg: &'a RunConfig,
    chat: KeyLog<'a, C>,
    templates: &'a TemplateSet,
    ontology: Option<&'a Ontology>,
    clock: &'a dyn Clock,
}

static DEFAULT_TEMPLATES: std::sync::OnceLock<TemplateSet> = std::sync::OnceLock::new();

impl<'a, C: ChatProvider> Engine<'a, C> {
    pub fn new(cfg: &'a RunConfig, chat: &'a C) -> Self {
        Engine {
            cfg,
            chat: KeyLog {
                inner: chat,
                keys: Mutex::new(Vec::new()),
            },
            templates: DEFAULT_TEMPLATES.get_or_init(TemplateSet::default),
            ontology: None,
            clock: &NoClock,
        }
    }

    pub fn with_templates(mut self, templates: &'a TemplateSet) -> Self {
        self.templates = templates;
        self
    }

    pub fn with_ontology(mut self, ontology: Option<&'a Ontology>) -> Self {
        self.ontology = ontology;
        self
    }

    pub fn with_clock(mut self, clock: &'a dyn Clock) -> Self {
        self.clock = clock;
        self
    }

    fn request(&self, tag: &str, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest {
            model: self.cfg.model.clone(),
            temperature: self.cfg.temperature,
            messages,
            max_tokens: self.cfg.max_tokens,
            request_tag: tag.to_string(),
        }
    }

    pub(crate) fn ask(&self, tag: &str, messages: &[ChatMessage]) -> Result<String, EngineError> {
        Ok(self.chat.chat(&self.request(tag, messages.to_vec()))?.text)
    }

    /// Ask for `count` distinct terms, none equal to anything in `exclude`.
    ///
    /// Unparseable replies are re-asked up to `vote_retries` times. A short
    /// or duplicated list gets one full re-ask, then one top-up request for
    /// the shortfall; after that the run continues with what it has.
    pub(crate) fn generate_terms(
        &self,
        tag: &str,
        mut messages: Vec<ChatMessage>,
        count: usize,
        exclude: &[String],
    ) -> Result<Generated, EngineError> {
        let mut notes = Vec::new();
        let mut raw = self.ask(tag, &messages)?;
        let mut retries = self.cfg.vote_retries;
        let items = loop {
            match parse_term_list(&raw, count) {
                Ok(items) => break items,
                Err(e) if retries == 0 => {
                    return Err(EngineError::Generation {
                        tag: tag.to_string(),
                        source: e,
                    })
                }
                Err(_) => {
                    retries -= 1;
                    messages.push(ChatMessage::assistant(raw.clone()));
                    messages.push(ChatMessage::user(format!(
                        "That answer could not be read. Reply with a numbered list of exactly {count} \
                         biological process names, one per line, and nothing else."
                    )));
                    raw = self.ask(tag, &messages)?;
                }
            }
        };

        let mut kept = distinct_terms(&items, exclude, count);
        if kept.len() < count {
            notes.push(format!(
                "{tag}: {} usable of {count} requested; re-asking",
                kept.len()
            ));
            messages.push(ChatMessage::assistant(raw.clone()));
            messages.push(ChatMessage::user(format!(
                "Some items repeated each other{} or were missing. Reply with a numbered list of exactly \
                 {count} distinct biological process names, one per line.",
                exclusion_clause(exclude)
            )));
            raw = self.ask(tag, &messages)?;
            if let Ok(items) = parse_term_list(&raw, count) {
                let again = distinct_terms(&items, exclude, count);
                if again.len() >= kept.len() {
                    kept = again;
                }
            }
        }
        if kept.len() < count {
            let shortfall = count - kept.len();
            let mut avoid: Vec<String> = exclude.to_vec();
            avoid.extend(kept.iter().cloned());
            messages.push(ChatMessage::assistant(raw.clone()));
            messages.push(ChatMessage::user(format!(
                "Propose {shortfall} more biological process name(s) different from: {}. \
                 Reply with a numbered list only.",
                avoid.join("; ")
            )));
            raw = self.ask(tag, &messages)?;
            if let Ok(items) = parse_term_list(&raw, shortfall) {
                kept.extend(distinct_terms(&items, &avoid, shortfall));
            }
            if kept.len() < count {
                notes.push(format!(
                    "{tag}: proceeding with {} of {count} terms after top-up",
                    kept.len()
                ));
            }
        }
        Ok(Generated { terms: kept, notes })
    }

    /// The first layer: `initial_branch` high-level terms for the gene set.
    pub fn initial_expand(&self, gene_set: &GeneSetRecord) -> Result<Generated, EngineError> {
        gene_set.validate()?;
        let count = self.cfg.initial_branch;
        let messages = self.templates.render(
            "initial",
            &Bindings::new()
                .set("genes", gene_set.genes_joined())
                .set("count", count.to_string()),
        )?;
        self.generate_terms("initial_expand", messages, count, &[])
    }

    /// `branch` terms more specific than `parent_term`.
    pub fn expand_node(
        &self,
        gene_set: &GeneSetRecord,
        parent_term: &str,
    ) -> Result<Generated, EngineError> {
        if parent_term.trim().is_empty() {
            return Err(GraphError::EmptyTerm.into());
        }
        let count = self.cfg.branch;
        let messages = self.templates.render(
            "subsequent",
            &Bindings::new()
                .set("genes", gene_set.genes_joined())
                .set("parent_term", parent_term.trim())
                .set("count", count.to_string()),
        )?;
        self.generate_terms("expand_node", messages, count, &[parent_term.trim().to_string()])
    }

    /// Ranked pick of `want` candidates in one model call.
    fn pick(
        &self,
        tag: &str,
        template: &str,
        gene_set: &GeneSetRecord,
        candidates: &[(NodeId, String)],
        want: usize,
    ) -> Result<Selection, EngineError> {
        let want = want.min(candidates.len());
        if candidates.len() <= want {
            return Ok(Selection {
                selected: candidates.iter().map(|(id, _)| *id).collect(),
                notes: Vec::new(),
            });
        }
        let terms: Vec<String> = candidates.iter().map(|(_, t)| t.clone()).collect();
        let listing = terms
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{}. {t}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        let mut messages = self.templates.render(
            template,
            &Bindings::new()
                .set("genes", gene_set.genes_joined())
                .set("candidates", listing)
                .set("count", want.to_string()),
        )?;
        let mut notes = Vec::new();
        let mut retries = self.cfg.vote_retries;
        let mut picks = loop {
            let raw = self.ask(tag, &messages)?;
            let picks = parse_candidate_indices(&raw, &terms);
            if !picks.is_empty() {
                break picks;
            }
            if retries == 0 {
                notes.push(format!(
                    "{tag}: unparseable reply after {} attempt(s); tie-break to lowest index",
                    self.cfg.vote_retries + 1
                ));
                break Vec::new();
            }
            retries -= 1;
            messages.push(ChatMessage::assistant(raw));
            messages.push(ChatMessage::user(format!(
                "Reply with {want} candidate number(s) between 1 and {}, separated by commas, and nothing else.",
                terms.len()
            )));
        };
        picks.truncate(want);
        if !picks.is_empty() && picks.len() < want {
            notes.push(format!("{tag}: reply named {} of {want}; filled by lowest index", picks.len()));
        }
        let mut next = 0;
        while picks.len() < want {
            if !picks.contains(&next) {
                picks.push(next);
            }
            next += 1;
        }
        Ok(Selection {
            selected: picks.into_iter().map(|i| candidates[i].0).collect(),
            notes,
        })
    }

    /// Vote `min(beam, pool)` candidates of one layer.
    pub fn vote(
        &self,
        gene_set: &GeneSetRecord,
        layer_candidates: &[(NodeId, String)],
        beam: usize,
    ) -> Result<Selection, EngineError> {
        if layer_candidates.is_empty() {
            return Err(GraphError::Structure("vote over an empty pool".into()).into());
        }
        self.pick("vote", "vote", gene_set, layer_candidates, beam)
    }

    /// One pick per parent branch, in branch order, truncated to `beam`.
    fn vote_per_branch(
        &self,
        gene_set: &GeneSetRecord,
        graph: &ThoughtGraph,
        layer_candidates: &[(NodeId, String)],
        beam: usize,
    ) -> Result<Selection, EngineError> {
        type Branch = (Option<NodeId>, Vec<(NodeId, String)>);
        let mut branches: Vec<Branch> = Vec::new();
        for c in layer_candidates {
            let parent = graph.node(c.0).and_then(|n| n.parent);
            match branches.iter_mut().find(|(p, _)| *p == parent) {
                Some((_, members)) => members.push(c.clone()),
                None => branches.push((parent, vec![c.clone()])),
            }
        }
        if branches.len() == 1 {
            return self.vote(gene_set, layer_candidates, beam);
        }
        let mut out = Selection {
            selected: Vec::new(),
            notes: Vec::new(),
        };
        for (_, members) in &branches {
            let s = self.vote(gene_set, members, 1)?;
            out.selected.extend(s.selected);
            out.notes.extend(s.notes);
        }
        out.selected.truncate(beam);
        Ok(out)
    }

    /// Pick the final answer from the last layer.
    pub fn choose_final(
        &self,
        gene_set: &GeneSetRecord,
        last_layer: &[(NodeId, String)],
    ) -> Result<Selection, EngineError> {
        if last_layer.is_empty() {
            return Err(GraphError::Structure("final choice over an empty layer".into()).into());
        }
        self.pick("final", "final", gene_set, last_layer, 1)
    }

    /// Relation from `parent_term` to the more specific `child_term`.
    pub fn label_edge(&self, parent_term: &str, child_term: &str) -> Result<EdgeLabel, EngineError> {
        if self.cfg.edge_label_mode == EdgeLabelMode::OntologyFirst {
            if let Some(ont) = self.ontology {
                if let Ok(Some(relation)) = ont.relation_between(parent_term, child_term) {
                    return Ok(EdgeLabel {
                        relation,
                        source: EdgeSource::OntologyLookup,
                        note: None,
                    });
                }
            }
        }
        let examples = self.relation_examples();
        let mut messages = self.templates.render(
            "edge_label",
            &Bindings::new()
                .set("parent_term", parent_term)
                .set("child_term", child_term)
                .set("relation_examples", examples),
        )?;
        let mut retries = self.cfg.vote_retries;
        loop {
            let raw = self.ask("edge_label", &messages)?;
            if let Some(relation) = parse_relation(&raw) {
                return Ok(EdgeLabel {
                    relation,
                    source: EdgeSource::ModelLabeled,
                    note: None,
                });
            }
            if retries == 0 {
                return Ok(EdgeLabel {
                    relation: Relation::IsA,
                    source: EdgeSource::ModelLabeled,
                    note: Some(format!(
                        "edge_label: no relation in reply for `{parent_term}` -> `{child_term}`; defaulted to is_a"
                    )),
                });
            }
            retries -= 1;
            messages.push(ChatMessage::assistant(raw));
            messages.push(ChatMessage::user(
                "Answer with exactly one of: is_a, part_of, has_part, regulates.".to_string(),
            ));
        }
    }

    pub(crate) fn config(&self) -> &RunConfig {
        self.cfg
    }

    pub(crate) fn templates(&self) -> &TemplateSet {
        self.templates
    }

    fn relation_examples(&self) -> String {
        let mut lines = Vec::new();
        match self.ontology {
            Some(ont) if self.cfg.relation_examples > 0 => {
                for (i, rel) in Relation::ALL.iter().enumerate() {
                    let seed = self.cfg.seed.wrapping_add(i as u64);
                    for (p, c, r) in ont.sample_relation_examples(*rel, self.cfg.relation_examples, seed) {
                        lines.push(format!("Parent: {p}\nChild: {c}\nRelation: {r}"));
                    }
                }
            }
            _ => {}
        }
        if lines.is_empty() {
            lines = FALLBACK_EXAMPLES
                .iter()
                .map(|(p, c, r)| format!("Parent: {p}\nChild: {c}\nRelation: {r}"))
                .collect();
        }
        lines.join("\n\n")
    }

    fn layer_candidates(graph: &ThoughtGraph, layer: usize) -> Vec<(NodeId, String)> {
        graph
            .layer(layer)
            .into_iter()
            .map(|n| (n.node_id, n.term.clone()))
            .collect()
    }

    /// Build the whole graph. Any generation error discards the partial graph.
    pub fn run(&self, gene_set: &GeneSetRecord) -> Result<ThoughtGraph, EngineError> {
        self.cfg.validate()?;
        gene_set.validate()?;
        self.chat.keys.lock().expect("key log").clear();
        let mut graph = ThoughtGraph::new(gene_set.clone(), self.cfg.clone());
        graph.provenance.started_at = self.clock.now();
        let mut notes: Vec<String> = Vec::new();

        let first = self.initial_expand(gene_set)?;
        notes.extend(first.notes);
        for term in &first.terms {
            graph.add_node(term, 1, None)?;
        }

        for layer in 2..=self.cfg.depth {
            let pool = Self::layer_candidates(&graph, layer - 1);
            let selection = match self.cfg.vote_pool {
                VotePool::Layer => self.vote(gene_set, &pool, self.cfg.beam)?,
                VotePool::PerBranch => self.vote_per_branch(gene_set, &graph, &pool, self.cfg.beam)?,
            };
            notes.extend(selection.notes);
            graph.mark_voted(&selection.selected)?;

            let parents: Vec<(NodeId, String)> = selection
                .selected
                .iter()
                .map(|id| (*id, graph.node(*id).expect("voted node exists").term.clone()))
                .collect();
            // sibling expansions are independent
            let expansions: Vec<Result<Generated, EngineError>> = std::thread::scope(|s| {
                let handles: Vec<_> = parents
                    .iter()
                    .map(|(_, term)| s.spawn(move || self.expand_node(gene_set, term)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("expansion thread panicked"))
                    .collect()
            });

            for ((parent_id, parent_term), expansion) in parents.iter().zip(expansions) {
                let expansion = expansion?;
                notes.extend(expansion.notes);
                for term in &expansion.terms {
                    let child = graph.add_node(term, layer, Some(*parent_id))?;
                    let label = self.label_edge(parent_term, term)?;
                    notes.extend(label.note);
                    graph.set_edge(child, label.relation, label.source)?;
                }
            }
            if graph.layer(layer).is_empty() {
                return Err(GraphError::Structure(format!("layer {layer} came out empty")).into());
            }
        }

        let last = Self::layer_candidates(&graph, self.cfg.depth);
        let chosen = self.choose_final(gene_set, &last)?;
        notes.extend(chosen.notes);
        graph.set_final_answer(chosen.selected[0])?;

        graph.provenance.notes = notes;
        graph.provenance.cache_digest = Some(self.chat.digest());
        graph.validate()?;
        Ok(graph)
    }
}

fn exclusion_clause(exclude: &[String]) -> String {
    if exclude.is_empty() {
        String::new()
    } else {
        format!(", repeated \"{}\"", exclude.join("\", \""))
    }
}

/// Case-insensitive dedup, dropping excluded terms, capped at `limit`.
fn distinct_terms(items: &[String], exclude: &[String], limit: usize) -> Vec<String> {
    let mut seen: HashSet<String> = exclude.iter().map(|e| e.trim().to_lowercase()).collect();
    let mut out = Vec::new();
    for item in items {
        if out.len() == limit {
            break;
        }
        if seen.insert(item.trim().to_lowercase()) {
            out.push(item.trim().to_string());
        }
    }
    out
}
