//! The output data model: a layered tree of candidate terms with vote marks,
//! relation-labeled edges and a final answer.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::RunConfig;
use crate::ontology::Relation;

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneSetRecord {
    pub id: String,
    pub genes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_go_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl GeneSetRecord {
    /// A record with only an id and genes, validated.
    pub fn new(id: impl Into<String>, genes: Vec<String>) -> Result<Self, GraphError> {
        let record = GeneSetRecord {
            id: id.into(),
            genes,
            ground_truth_name: None,
            ground_truth_go_id: None,
            description: None,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        if self.genes.is_empty() {
            return Err(GraphError::GeneSet(format!("gene set `{}` has no genes", self.id)));
        }
        let mut seen = HashSet::new();
        for g in &self.genes {
            if g.trim().is_empty() {
                return Err(GraphError::GeneSet(format!("gene set `{}` has an empty symbol", self.id)));
            }
            if !seen.insert(g.as_str()) {
                return Err(GraphError::GeneSet(format!(
                    "gene set `{}` repeats symbol `{g}`",
                    self.id
                )));
            }
        }
        Ok(())
    }

    pub fn genes_joined(&self) -> String {
        self.genes.join(", ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThoughtNode {
    pub node_id: NodeId,
    pub layer: usize,
    pub term: String,
    pub parent: Option<NodeId>,
    pub voted: bool,
    /// Position in the layer's vote ranking, 0 = best.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vote_rank: Option<usize>,
    pub is_final_answer: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeSource {
    OntologyLookup,
    ModelLabeled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThoughtEdge {
    pub parent_id: NodeId,
    pub child_id: NodeId,
    pub relation: Relation,
    pub source: EdgeSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub model: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_digest: Option<String>,
    /// Wall-clock start, from an injectable clock. Not part of the canonical form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub started_at: Option<String>,
    /// Terms that appear more than once in the graph.
    #[serde(default)]
    pub duplicate_terms: Vec<String>,
    /// Fallbacks taken during generation (parse exhaustion, shortfalls).
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("invalid gene set: {0}")]
    GeneSet(String),
    #[error("empty term")]
    EmptyTerm,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("structural invariant violated: {0}")]
    Structure(String),
    #[error("malformed graph json: {0}")]
    Json(#[from] serde_json::Error),
}

fn structure(msg: impl Into<String>) -> GraphError {
    GraphError::Structure(msg.into())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThoughtGraph {
    pub schema_version: u32,
    pub gene_set: GeneSetRecord,
    pub nodes: Vec<ThoughtNode>,
    pub edges: Vec<ThoughtEdge>,
    pub config_snapshot: RunConfig,
    pub final_answer: Option<NodeId>,
    pub provenance: Provenance,
}

impl PartialEq for ThoughtGraph {
    fn eq(&self, other: &Self) -> bool {
        let strip = |p: &Provenance| Provenance {
            started_at: None,
            ..p.clone()
        };
        self.schema_version == other.schema_version
            && self.gene_set == other.gene_set
            && self.nodes == other.nodes
            && self.edges == other.edges
            && self.config_snapshot == other.config_snapshot
            && self.final_answer == other.final_answer
            && strip(&self.provenance) == strip(&other.provenance)
    }
}

impl ThoughtGraph {
    pub fn new(gene_set: GeneSetRecord, config: RunConfig) -> Self {
        let provenance = Provenance {
            model: config.model.clone(),
            seed: config.seed,
            ..Default::default()
        };
        ThoughtGraph {
            schema_version: GRAPH_SCHEMA_VERSION,
            gene_set,
            nodes: Vec::new(),
            edges: Vec::new(),
            config_snapshot: config,
            final_answer: None,
            provenance,
        }
    }

    pub fn node(&self, id: NodeId) -> Option<&ThoughtNode> {
        // ids are dense from 1 in insertion order
        let idx = (id.0 as usize).checked_sub(1)?;
        self.nodes.get(idx).filter(|n| n.node_id == id)
    }

    fn node_mut(&mut self, id: NodeId) -> Option<&mut ThoughtNode> {
        let idx = (id.0 as usize).checked_sub(1)?;
        self.nodes.get_mut(idx).filter(|n| n.node_id == id)
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.layer).max().unwrap_or(0)
    }

    pub fn layer(&self, layer: usize) -> Vec<&ThoughtNode> {
        self.nodes.iter().filter(|n| n.layer == layer).collect()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        (1..=self.depth()).map(|l| self.layer(l).len()).collect()
    }

    pub fn add_node(
        &mut self,
        term: &str,
        layer: usize,
        parent: Option<NodeId>,
    ) -> Result<NodeId, GraphError> {
        let term = term.trim();
        if term.is_empty() {
            return Err(GraphError::EmptyTerm);
        }
        match (layer, parent) {
            (0, _) => return Err(structure("layer must be at least 1")),
            (1, Some(_)) => return Err(structure("layer-1 nodes have no parent")),
            (1, None) => {}
            (_, None) => return Err(structure(format!("layer-{layer} node needs a parent"))),
            (_, Some(pid)) => {
                let p = self.node(pid).ok_or(GraphError::UnknownNode(pid))?;
                if p.layer + 1 != layer {
                    return Err(structure(format!(
                        "parent {pid} is on layer {}, child on layer {layer}",
                        p.layer
                    )));
                }
                if !p.voted {
                    return Err(structure(format!("parent {pid} was not voted")));
                }
            }
        }
        let id = NodeId(self.nodes.len() as u32 + 1);
        if self.nodes.iter().any(|n| n.term.eq_ignore_ascii_case(term))
            && !self.provenance.duplicate_terms.iter().any(|t| t.eq_ignore_ascii_case(term))
        {
            self.provenance.duplicate_terms.push(term.to_string());
        }
        self.nodes.push(ThoughtNode {
            node_id: id,
            layer,
            term: term.to_string(),
            parent,
            voted: false,
            vote_rank: None,
            is_final_answer: false,
        });
        Ok(id)
    }

    /// Attach the labeled edge for a child added with a parent.
    pub fn set_edge(
        &mut self,
        child: NodeId,
        relation: Relation,
        source: EdgeSource,
    ) -> Result<(), GraphError> {
        let node = self.node(child).ok_or(GraphError::UnknownNode(child))?;
        let parent = node
            .parent
            .ok_or_else(|| structure(format!("{child} is a root and takes no edge")))?;
        if let Some(e) = self.edges.iter_mut().find(|e| e.child_id == child) {
            e.relation = relation;
            e.source = source;
        } else {
            self.edges.push(ThoughtEdge {
                parent_id: parent,
                child_id: child,
                relation,
                source,
            });
        }
        Ok(())
    }

    /// Mark exactly `ids` as voted on their layer, ranked in the given order.
    pub fn mark_voted(&mut self, ids: &[NodeId]) -> Result<(), GraphError> {
        let Some(first) = ids.first() else {
            return Ok(());
        };
        let layer = self.node(*first).ok_or(GraphError::UnknownNode(*first))?.layer;
        for id in ids {
            let n = self.node(*id).ok_or(GraphError::UnknownNode(*id))?;
            if n.layer != layer {
                return Err(structure("voted ids span more than one layer"));
            }
        }
        let children: HashSet<NodeId> = self.nodes.iter().filter_map(|n| n.parent).collect();
        for node in self.nodes.iter_mut().filter(|n| n.layer == layer) {
            let rank = ids.iter().position(|id| *id == node.node_id);
            if rank.is_none() && children.contains(&node.node_id) {
                return Err(structure(format!(
                    "cannot unvote {} which already has children",
                    node.node_id
                )));
            }
            node.voted = rank.is_some();
            node.vote_rank = rank;
        }
        Ok(())
    }

    /// Set the final answer. It must sit in the deepest layer.
    pub fn set_final_answer(&mut self, id: NodeId) -> Result<(), GraphError> {
        let depth = self.depth();
        let node = self.node_mut(id).ok_or(GraphError::UnknownNode(id))?;
        if node.layer != depth {
            return Err(structure("final answer must be in the deepest layer"));
        }
        node.voted = true;
        node.is_final_answer = true;
        if let Some(prev) = self.final_answer.replace(id) {
            if prev != id {
                if let Some(p) = self.node_mut(prev) {
                    p.is_final_answer = false;
                    p.voted = false;
                }
            }
        }
        Ok(())
    }

    /// The green nodes: every voted node plus the final answer, ordered by
    /// (layer, insertion).
    pub fn voted_nodes(&self) -> Vec<&ThoughtNode> {
        let mut out: Vec<&ThoughtNode> = self
            .nodes
            .iter()
            .filter(|n| n.voted || n.is_final_answer)
            .collect();
        out.sort_by_key(|n| (n.layer, n.node_id));
        out
    }

    /// Nodes from the root down to `id`, inclusive.
    pub fn chain_to(&self, id: NodeId) -> Vec<&ThoughtNode> {
        let mut chain = Vec::new();
        let mut cur = self.node(id);
        while let Some(n) = cur {
            chain.push(n);
            cur = n.parent.and_then(|p| self.node(p));
        }
        chain.reverse();
        chain
    }

    pub fn edge_into(&self, child: NodeId) -> Option<&ThoughtEdge> {
        self.edges.iter().find(|e| e.child_id == child)
    }

    pub fn is_complete(&self) -> bool {
        self.final_answer.is_some()
    }

    /// Check every structural invariant.
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.schema_version != GRAPH_SCHEMA_VERSION {
            return Err(structure(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        self.gene_set.validate()?;
        for (i, n) in self.nodes.iter().enumerate() {
            if n.node_id.0 as usize != i + 1 {
                return Err(structure(format!("node ids must be dense; found {} at {}", n.node_id, i + 1)));
            }
            if n.term.trim().is_empty() || n.term.trim() != n.term {
                return Err(structure(format!("{} has an empty or untrimmed term", n.node_id)));
            }
            match (n.layer, n.parent) {
                (0, _) => return Err(structure(format!("{} has layer 0", n.node_id))),
                (1, None) => {}
                (1, Some(_)) => return Err(structure(format!("layer-1 node {} has a parent", n.node_id))),
                (_, None) => return Err(structure(format!("{} is a non-root without parent", n.node_id))),
                (layer, Some(pid)) => {
                    let p = self.node(pid).ok_or(GraphError::UnknownNode(pid))?;
                    if p.layer + 1 != layer {
                        return Err(structure(format!(
                            "{} on layer {layer} has parent {pid} on layer {}",
                            n.node_id, p.layer
                        )));
                    }
                    if !p.voted {
                        return Err(structure(format!("{} has unvoted parent {pid}", n.node_id)));
                    }
                }
            }
            if n.is_final_answer && self.final_answer != Some(n.node_id) {
                return Err(structure(format!("{} flagged final but not the final answer", n.node_id)));
            }
        }
        let mut seen_children = HashSet::new();
        for e in &self.edges {
            let child = self.node(e.child_id).ok_or(GraphError::UnknownNode(e.child_id))?;
            if child.parent != Some(e.parent_id) {
                return Err(structure(format!(
                    "edge {} -> {} disagrees with the child's parent",
                    e.parent_id, e.child_id
                )));
            }
            if !seen_children.insert(e.child_id) {
                return Err(structure(format!("{} has more than one parent edge", e.child_id)));
            }
        }
        if let Some(fid) = self.final_answer {
            let f = self.node(fid).ok_or(GraphError::UnknownNode(fid))?;
            if f.layer != self.depth() {
                return Err(structure("final answer is not in the deepest layer"));
            }
            if !f.voted || !f.is_final_answer {
                return Err(structure("final answer must be voted and flagged"));
            }
            // a complete graph labels every edge
            let missing = self
                .nodes
                .iter()
                .filter(|n| n.parent.is_some() && !seen_children.contains(&n.node_id))
                .count();
            if missing > 0 {
                return Err(structure(format!("{missing} child nodes lack a labeled edge")));
            }
        }
        Ok(())
    }

    fn to_value(&self, keep_timestamp: bool) -> serde_json::Value {
        // serde_json::Map is a BTreeMap here, so keys come out sorted
        let mut value = serde_json::to_value(self).expect("graph serializes");
        if !keep_timestamp {
            if let Some(p) = value.get_mut("provenance").and_then(|p| p.as_object_mut()) {
                p.remove("started_at");
            }
        }
        value
    }

    /// Canonical JSON: sorted keys, no wall-clock fields. Equal graphs give
    /// byte-equal output.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_value(false)).expect("graph serializes")
    }

    /// Like [`to_json`](Self::to_json) but keeps `provenance.started_at`.
    pub fn to_json_stamped(&self) -> String {
        serde_json::to_string_pretty(&self.to_value(true)).expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let graph: ThoughtGraph = serde_json::from_str(text)?;
        graph.validate()?;
        Ok(graph)
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "digraph thought_graph {{");
        let _ = writeln!(out, "  rankdir=TB;");
        let _ = writeln!(out, "  node [shape=box, style=rounded];");
        for n in &self.nodes {
            let mut attrs = vec![format!("label={}", dot_quote(&n.term))];
            if n.voted || n.is_final_answer {
                let color = if n.vote_rank == Some(0) || n.is_final_answer {
                    "darkgreen"
                } else {
                    "palegreen"
                };
                attrs.push("style=\"rounded,filled\"".into());
                attrs.push(format!("fillcolor={color}"));
                if color == "darkgreen" {
                    attrs.push("fontcolor=white".into());
                }
            }
            if n.is_final_answer {
                attrs.push("peripheries=2".into());
            }
            let _ = writeln!(out, "  \"{}\" [{}];", n.node_id, attrs.join(", "));
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}\"];",
                e.parent_id, e.child_id, e.relation
            );
        }
        out.push_str("}\n");
        out
    }

    /// Count of nodes per layer among the green nodes.
    pub fn voted_per_layer(&self) -> BTreeMap<usize, usize> {
        let mut m = BTreeMap::new();
        for n in self.voted_nodes() {
            *m.entry(n.layer).or_insert(0) += 1;
        }
        m
    }

    /// Map of node id to term, for callers that look terms up repeatedly.
    pub fn terms_by_id(&self) -> HashMap<NodeId, &str> {
        self.nodes.iter().map(|n| (n.node_id, n.term.as_str())).collect()
    }
}

fn dot_quote(s: &str) -> String {
    let escaped = s.replace('\\', "\\\\").replace('"', "\\\"");
    format!("\"{escaped}\"")
}
