//! Python bindings: ontology parsing, graph JSON, offline generation from a
//! transcript, and the scoring primitives.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use thought_graph::baselines::top_pathways;
use thought_graph::evaluation;
use thought_graph::gateway::TranscriptChat;
use thought_graph::ontology::{self, BIOLOGICAL_PROCESS};
use thought_graph::{Engine, GeneSetRecord, Relation, RunConfig};

create_exception!(_thought_graph, ThoughtGraphError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    ThoughtGraphError::new_err(e.to_string())
}

#[pyclass(frozen, name = "Ontology")]
struct PyOntology {
    inner: ontology::Ontology,
}

#[pymethods]
impl PyOntology {
    /// Parse OBO text.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(PyOntology {
            inner: ontology::parse_obo(text.as_bytes()).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_path(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path).map_err(err)?;
        if text.trim_start().starts_with('{') {
            Self::from_index_json(&text)
        } else {
            Self::parse(&text)
        }
    }

    #[staticmethod]
    fn from_index_json(text: &str) -> PyResult<Self> {
        Ok(PyOntology {
            inner: ontology::Ontology::from_index_json(text).map_err(err)?,
        })
    }

    fn to_index_json(&self) -> String {
        self.inner.to_index_json()
    }

    fn biological_process_only(&self) -> Self {
        PyOntology {
            inner: self.inner.restrict_to_namespace(BIOLOGICAL_PROCESS),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// `(go_id, name, namespace)` for an id or a name, or None.
    fn lookup(&self, key: &str) -> Option<(String, String, String)> {
        self.inner
            .lookup_term(key)
            .map(|t| (t.go_id.clone(), t.name.clone(), t.namespace.clone()))
    }

    /// Direct relation from parent to child (`is_a`, `part_of`, ...) or None.
    fn relation_between(&self, parent: &str, child: &str) -> PyResult<Option<&'static str>> {
        Ok(self
            .inner
            .relation_between(parent, child)
            .map_err(err)?
            .map(Relation::as_str))
    }

    fn sample_relation_examples(&self, relation: &str, count: usize, seed: u64) -> PyResult<Vec<(String, String)>> {
        let rel: Relation = relation.parse().map_err(err)?;
        Ok(self
            .inner
            .sample_relation_examples(rel, count, seed)
            .into_iter()
            .map(|(p, c, _)| (p, c))
            .collect())
    }

    fn bp_term_names(&self) -> Vec<String> {
        self.inner.bp_term_names()
    }

    fn diagnostic_count(&self) -> usize {
        self.inner.diagnostics().len()
    }
}

#[pyclass(frozen, name = "ThoughtGraph")]
struct PyThoughtGraph {
    inner: thought_graph::ThoughtGraph,
}

#[pymethods]
impl PyThoughtGraph {
    /// Parse and validate graph JSON.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(PyThoughtGraph {
            inner: thought_graph::ThoughtGraph::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn to_dot(&self) -> String {
        self.inner.to_dot()
    }

    fn layer_sizes(&self) -> Vec<usize> {
        self.inner.layer_sizes()
    }

    #[getter]
    fn gene_set_id(&self) -> String {
        self.inner.gene_set.id.clone()
    }

    #[getter]
    fn genes(&self) -> Vec<String> {
        self.inner.gene_set.genes.clone()
    }

    /// `(node_id, layer, term, parent_id, green)` per node.
    fn nodes(&self) -> Vec<(u32, usize, String, Option<u32>, bool)> {
        self.inner
            .nodes
            .iter()
            .map(|n| (n.node_id.0, n.layer, n.term.clone(), n.parent.map(|p| p.0), n.voted || n.is_final_answer))
            .collect()
    }

    /// `(parent_id, child_id, relation)` per edge.
    fn edges(&self) -> Vec<(u32, u32, &'static str)> {
        self.inner
            .edges
            .iter()
            .map(|e| (e.parent_id.0, e.child_id.0, e.relation.as_str()))
            .collect()
    }

    fn green_terms(&self) -> Vec<String> {
        self.inner.voted_nodes().iter().map(|n| n.term.clone()).collect()
    }

    fn final_answer(&self) -> Option<String> {
        self.inner
            .final_answer
            .and_then(|id| self.inner.node(id))
            .map(|n| n.term.clone())
    }

    /// The two chains shown to the CoT baseline.
    fn top_pathways(&self) -> Vec<Vec<String>> {
        top_pathways(&self.inner)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.nodes.len()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }
}

/// Build a graph offline, answering chat requests from a recorded transcript.
#[pyfunction]
#[pyo3(signature = (genes, transcript, ontology=None, config_toml=None, gene_set_id="adhoc"))]
fn generate(
    py: Python<'_>,
    genes: Vec<String>,
    transcript: PathBuf,
    ontology: Option<&PyOntology>,
    config_toml: Option<&str>,
    gene_set_id: &str,
) -> PyResult<PyThoughtGraph> {
    let cfg = match config_toml {
        Some(t) => RunConfig::from_toml_str(t).map_err(err)?,
        None => RunConfig::default(),
    };
    let record = GeneSetRecord::new(gene_set_id, genes).map_err(err)?;
    let chat = TranscriptChat::from_file(&transcript).map_err(err)?;
    let onto = ontology.map(|o| &o.inner);
    let graph = py
        .detach(|| Engine::new(&cfg, &chat).with_ontology(onto).run(&record))
        .map_err(err)?;
    Ok(PyThoughtGraph { inner: graph })
}

#[pyfunction]
fn cosine(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    evaluation::cosine(&u, &v).map_err(err)
}

/// Percent of `null` strictly below `score` (`ties="midpoint"` counts ties as half).
#[pyfunction]
#[pyo3(signature = (score, null, ties="strict"))]
fn percentile(score: f64, null: Vec<f64>, ties: &str) -> PyResult<f64> {
    let rule = match ties {
        "strict" => evaluation::TieRule::StrictBelow,
        "midpoint" => evaluation::TieRule::Midpoint,
        other => return Err(err(format!("unknown tie rule `{other}`"))),
    };
    evaluation::percentile_with(score, &null, rule).map_err(err)
}

/// Default run configuration as TOML.
#[pyfunction]
fn default_config() -> String {
    RunConfig::default().to_toml_string()
}

#[pymodule]
fn _thought_graph(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ThoughtGraphError", m.py().get_type::<ThoughtGraphError>())?;
    m.add_class::<PyOntology>()?;
    m.add_class::<PyThoughtGraph>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(percentile, m)?)?;
    m.add_function(wrap_pyfunction!(default_config, m)?)?;
    Ok(())
}
