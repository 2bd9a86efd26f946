//! Scoring: cosine similarity, null-distribution percentiles, predicted and
//! best scores over the green nodes of a graph, layer statistics and
//! corpus-level reports.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::Mutex;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Embedder, EmbeddingVector, GatewayError};
use crate::graph::{GeneSetRecord, NodeId, ThoughtGraph};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("graph is not complete")]
    IncompleteGraph,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// `u·v / (‖u‖‖v‖)`. Not clamped.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, EvalError> {
    if u.len() != v.len() {
        return Err(EvalError::DimMismatch(u.len(), v.len()));
    }
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(EvalError::ZeroVector);
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

pub fn cosine_vectors(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, EvalError> {
    cosine(&u.values, &v.values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    /// Count only null values strictly below the score.
    #[default]
    StrictBelow,
    /// Count ties as half.
    Midpoint,
}

/// Percent of `null` lying strictly below `score`.
pub fn percentile(score: f64, null: &[f64]) -> Result<f64, EvalError> {
    percentile_with(score, null, TieRule::StrictBelow)
}

pub fn percentile_with(score: f64, null: &[f64], rule: TieRule) -> Result<f64, EvalError> {
    if null.is_empty() {
        return Err(EvalError::Empty("null distribution"));
    }
    let below = null.iter().filter(|d| **d < score).count() as f64;
    let counted = match rule {
        TieRule::StrictBelow => below,
        TieRule::Midpoint => below + 0.5 * null.iter().filter(|d| **d == score).count() as f64,
    };
    Ok(100.0 * counted / null.len() as f64)
}

/// Vocabulary embeddings, computed once and shared read-only.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    terms: Vec<String>,
    vectors: Vec<EmbeddingVector>,
}

impl Vocabulary {
    pub fn embed<E: Embedder + ?Sized>(
        terms: Vec<String>,
        embedder: &E,
        batch_size: usize,
    ) -> Result<Self, EvalError> {
        if terms.is_empty() {
            return Err(EvalError::Empty("vocabulary"));
        }
        let mut vectors = Vec::with_capacity(terms.len());
        for chunk in terms.chunks(batch_size.max(1)) {
            vectors.extend(embedder.embed(chunk)?);
        }
        if vectors.len() != terms.len() {
            return Err(GatewayError::Integrity("vocabulary embedding count mismatch".into()).into());
        }
        if let Some(bad) = vectors.iter().find(|v| v.dim != vectors[0].dim) {
            return Err(EvalError::DimMismatch(vectors[0].dim, bad.dim));
        }
        Ok(Vocabulary { terms, vectors })
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Similarity of `predicted` to every vocabulary term, in vocabulary order.
    pub fn null_distribution(&self, predicted: &EmbeddingVector) -> Result<Vec<f64>, EvalError> {
        self.vectors
            .iter()
            .map(|v| cosine_vectors(predicted, v))
            .collect()
    }
}

/// Similarities between `predicted` and each vocabulary term.
pub fn null_distribution<E: Embedder + ?Sized>(
    predicted: &str,
    vocabulary: &[String],
    embedder: &E,
) -> Result<Vec<f64>, EvalError> {
    if vocabulary.is_empty() {
        return Err(EvalError::Empty("vocabulary"));
    }
    let vocab = Vocabulary::embed(vocabulary.to_vec(), embedder, 256)?;
    let p = embedder.embed(&[predicted.to_string()])?.remove(0);
    vocab.null_distribution(&p)
}

/// Embeds each distinct text once.
pub struct EmbeddingMemo<'e, E: ?Sized> {
    embedder: &'e E,
    memo: Mutex<HashMap<String, EmbeddingVector>>,
}

impl<'e, E: Embedder + ?Sized> EmbeddingMemo<'e, E> {
    pub fn new(embedder: &'e E) -> Self {
        EmbeddingMemo {
            embedder,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn get_many(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EvalError> {
        let missing: Vec<String> = {
            let memo = self.memo.lock().expect("memo lock");
            let mut m: Vec<String> = texts.iter().filter(|t| !memo.contains_key(*t)).cloned().collect();
            m.sort();
            m.dedup();
            m
        };
        if !missing.is_empty() {
            let vecs = self.embedder.embed(&missing)?;
            let mut memo = self.memo.lock().expect("memo lock");
            for (t, v) in missing.into_iter().zip(vecs) {
                memo.insert(t, v);
            }
        }
        let memo = self.memo.lock().expect("memo lock");
        Ok(texts.iter().map(|t| memo[t].clone()).collect())
    }

    pub fn get(&self, text: &str) -> Result<EmbeddingVector, EvalError> {
        Ok(self.get_many(&[text.to_string()])?.remove(0))
    }
}

/// Similarity of a predicted term to the truth, and its percentile in the
/// predicted term's null distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermScore {
    pub similarity: f64,
    pub percentile: f64,
}

pub struct Scorer<'a, E: ?Sized> {
    memo: EmbeddingMemo<'a, E>,
    vocabulary: &'a Vocabulary,
    tie_rule: TieRule,
}

impl<'a, E: Embedder + ?Sized> Scorer<'a, E> {
    pub fn new(embedder: &'a E, vocabulary: &'a Vocabulary) -> Self {
        Scorer {
            memo: EmbeddingMemo::new(embedder),
            vocabulary,
            tie_rule: TieRule::StrictBelow,
        }
    }

    pub fn with_tie_rule(mut self, rule: TieRule) -> Self {
        self.tie_rule = rule;
        self
    }

    pub fn score_term(&self, predicted: &str, truth: &str) -> Result<TermScore, EvalError> {
        let v = self.memo.get_many(&[predicted.to_string(), truth.to_string()])?;
        let similarity = cosine_vectors(&v[0], &v[1])?;
        let null = self.vocabulary.null_distribution(&v[0])?;
        Ok(TermScore {
            similarity,
            percentile: percentile_with(similarity, &null, self.tie_rule)?,
        })
    }

    /// Score every green node of a complete graph against `truth`.
    pub fn score_graph(&self, graph: &ThoughtGraph, truth: &str) -> Result<GraphScore, EvalError> {
        let final_id = graph.final_answer.ok_or(EvalError::IncompleteGraph)?;
        if truth.trim().is_empty() {
            return Err(EvalError::Empty("ground truth"));
        }
        let all_terms: Vec<String> = graph.nodes.iter().map(|n| n.term.clone()).collect();
        let mut texts = all_terms.clone();
        texts.push(truth.to_string());
        let vectors = self.memo.get_many(&texts)?;
        let truth_vec = vectors.last().expect("truth embedded");
        let sims: Vec<f64> = vectors[..all_terms.len()]
            .iter()
            .map(|v| cosine_vectors(v, truth_vec))
            .collect::<Result<_, _>>()?;

        let mut per_node = BTreeMap::new();
        for node in graph.voted_nodes() {
            let idx = node.node_id.0 as usize - 1;
            let null = self.vocabulary.null_distribution(&vectors[idx])?;
            per_node.insert(
                node.node_id,
                TermScore {
                    similarity: sims[idx],
                    percentile: percentile_with(sims[idx], &null, self.tie_rule)?,
                },
            );
        }
        let (best_node, best) = per_node
            .iter()
            .fold(None::<(NodeId, TermScore)>, |acc, (id, s)| match acc {
                Some((_, b)) if b.similarity >= s.similarity => acc,
                _ => Some((*id, *s)),
            })
            .expect("complete graph has green nodes");
        let predicted = per_node[&final_id];

        let mut all: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut voted: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (node, sim) in graph.nodes.iter().zip(&sims) {
            all.entry(node.layer).or_default().push(*sim);
            if node.voted || node.is_final_answer {
                voted.entry(node.layer).or_default().push(*sim);
            }
        }
        Ok(GraphScore {
            gene_set_id: graph.gene_set.id.clone(),
            predicted_score: predicted.similarity,
            predicted_percentile: predicted.percentile,
            best_score: best.similarity,
            best_percentile: best.percentile,
            best_node,
            predicted_node: final_id,
            per_node,
            per_layer_mean: means(all),
            per_layer_voted_mean: means(voted),
        })
    }

    /// Best of several candidate terms, by similarity (first wins ties).
    pub fn score_best_of(&self, candidates: &[String], truth: &str) -> Result<(usize, TermScore), EvalError> {
        if candidates.is_empty() {
            return Err(EvalError::Empty("candidate list"));
        }
        let mut best: Option<(usize, TermScore)> = None;
        for (i, c) in candidates.iter().enumerate() {
            let s = self.score_term(c, truth)?;
            if best.is_none_or(|(_, b)| s.similarity > b.similarity) {
                best = Some((i, s));
            }
        }
        Ok(best.expect("nonempty"))
    }
}

fn means(groups: BTreeMap<usize, Vec<f64>>) -> BTreeMap<usize, f64> {
    groups
        .into_iter()
        .map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphScore {
    pub gene_set_id: String,
    /// Similarity of the final answer (p).
    pub predicted_score: f64,
    pub predicted_percentile: f64,
    /// Highest similarity among green nodes (b).
    pub best_score: f64,
    pub best_percentile: f64,
    pub best_node: NodeId,
    pub predicted_node: NodeId,
    pub per_node: BTreeMap<NodeId, TermScore>,
    /// Mean similarity over every generated node of each layer.
    pub per_layer_mean: BTreeMap<usize, f64>,
    /// Mean similarity over the green nodes of each layer.
    pub per_layer_voted_mean: BTreeMap<usize, f64>,
}

/// One scored prediction in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub gene_set_id: String,
    pub predicted_term: String,
    pub similarity: f64,
    pub percentile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub method: String,
    pub similarity_pct: f64,
    pub percentile_pct: f64,
    pub prop_gt99_pct: f64,
}

/// Published headline figures for each method, shown beside computed rows.
pub fn reference_rows() -> Vec<ReferenceRow> {
    [
        ("GSEA", 24.78, 52.00, 17.0),
        ("IO zero-shot", 45.75, 77.00, 27.0),
        ("IO zero-shot-9 (b)", 59.68, 91.42, 61.0),
        ("IO few-shot", 48.73, 81.85, 32.0),
        ("CoT", 28.83, 43.71, 0.0),
        ("Hu et al.", 52.31, 84.44, 43.0),
        ("Thought Graph (p)", 48.53, 80.90, 42.0),
        ("Thought Graph (b)", 65.06, 95.05, 65.0),
    ]
    .into_iter()
    .map(|(m, s, p, g)| ReferenceRow {
        method: m.to_string(),
        similarity_pct: s,
        percentile_pct: p,
        prop_gt99_pct: g,
    })
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub mean_similarity: f64,
    pub mean_percentile: f64,
    pub prop_percentile_gt99: f64,
    pub n_samples: usize,
    pub per_sample: Vec<SampleScore>,
    #[serde(default)]
    pub reference_rows: Vec<ReferenceRow>,
    #[serde(default)]
    pub embedding_model: String,
}

/// Arithmetic means, plus the share of samples with percentile strictly above 99.
pub fn aggregate(method: &str, samples: Vec<SampleScore>) -> Result<EvalReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Empty("sample list"));
    }
    let n = samples.len() as f64;
    let mean_similarity = samples.iter().map(|s| s.similarity).sum::<f64>() / n;
    let mean_percentile = samples.iter().map(|s| s.percentile).sum::<f64>() / n;
    let gt99 = samples.iter().filter(|s| s.percentile > 99.0).count() as f64;
    Ok(EvalReport {
        method: method.to_string(),
        mean_similarity,
        mean_percentile,
        prop_percentile_gt99: gt99 / n,
        n_samples: samples.len(),
        per_sample: samples,
        reference_rows: reference_rows(),
        embedding_model: String::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphPick {
    /// The final answer (p).
    Predicted,
    /// The best green node (b).
    Best,
}

/// Report over graph scores using either the predicted or the best node.
pub fn aggregate_graph_scores(
    method: &str,
    graphs: &[(&ThoughtGraph, &GraphScore)],
    pick: GraphPick,
) -> Result<EvalReport, EvalError> {
    let samples = graphs
        .iter()
        .map(|(g, s)| {
            let (node, similarity, percentile) = match pick {
                GraphPick::Predicted => (s.predicted_node, s.predicted_score, s.predicted_percentile),
                GraphPick::Best => (s.best_node, s.best_score, s.best_percentile),
            };
            SampleScore {
                gene_set_id: s.gene_set_id.clone(),
                predicted_term: g.node(node).map(|n| n.term.clone()).unwrap_or_default(),
                similarity,
                percentile,
            }
        })
        .collect();
    aggregate(method, samples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    /// Quartiles by linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
        };
        Some(Summary {
            n: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: q(0.5),
            q1: q(0.25),
            q3: q(0.75),
            min: v[0],
            max: v[v.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    /// Over per-sample means of all generated nodes.
    pub all_candidates: BTreeMap<usize, Summary>,
    /// Over per-sample means of green nodes only.
    pub voted: BTreeMap<usize, Summary>,
}

pub fn layer_stats(scores: &[GraphScore]) -> LayerStats {
    let collect = |f: fn(&GraphScore) -> &BTreeMap<usize, f64>| {
        let mut by_layer: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for s in scores {
            for (layer, m) in f(s) {
                by_layer.entry(*layer).or_default().push(*m);
            }
        }
        by_layer
            .into_iter()
            .filter_map(|(l, v)| Summary::of(&v).map(|s| (l, s)))
            .collect()
    };
    LayerStats {
        all_candidates: collect(|s| &s.per_layer_mean),
        voted: collect(|s| &s.per_layer_voted_mean),
    }
}

impl LayerStats {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,series,n,mean,median,q1,q3,min,max\n");
        for (series, map) in [("all", &self.all_candidates), ("voted", &self.voted)] {
            for (layer, s) in map {
                let _ = writeln!(
                    out,
                    "{layer},{series},{},{},{},{},{},{},{}",
                    s.n, s.mean, s.median, s.q1, s.q3, s.min, s.max
                );
            }
        }
        out
    }
}

/// Fixed-column TSV: Method, Similarity, Percentile, Percentile>99%.
pub fn reports_to_tsv(reports: &[EvalReport], include_reference: bool) -> String {
    let mut out = String::from("Method\tSimilarity\tPercentile\tPercentile>99%\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{}\t{:.2}%\t{:.2}%\t{:.0}%",
            r.method,
            100.0 * r.mean_similarity,
            r.mean_percentile,
            100.0 * r.prop_percentile_gt99
        );
    }
    if include_reference {
        for row in reference_rows() {
            let _ = writeln!(
                out,
                "reference: {}\t{:.2}%\t{:.2}%\t{:.0}%",
                row.method, row.similarity_pct, row.percentile_pct, row.prop_gt99_pct
            );
        }
    }
    out
}

/// Uniform sample without replacement, deterministic for a seed. Asking for
/// at least as many as exist returns everything in input order.
pub fn sample_dataset(records: &[GeneSetRecord], n: usize, seed: u64) -> Vec<GeneSetRecord> {
    if n >= records.len() {
        return records.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample(&mut rng, records.len(), n)
        .into_iter()
        .map(|i| records[i].clone())
        .collect()
}
