//! Gene Ontology OBO parsing and the indexed term store used for edge
//! grounding, few-shot relation exemplars and the fallback null vocabulary.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BIOLOGICAL_PROCESS: &str = "biological_process";

/// Version tag written into the JSON term index.
pub const INDEX_SCHEMA_VERSION: u32 = 1;

/// The four GO relations used as edge labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    IsA,
    PartOf,
    HasPart,
    Regulates,
}

impl Relation {
    pub const ALL: [Relation; 4] = [
        Relation::IsA,
        Relation::PartOf,
        Relation::HasPart,
        Relation::Regulates,
    ];

    /// GO label, e.g. `part_of`.
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::IsA => "is_a",
            Relation::PartOf => "part_of",
            Relation::HasPart => "has_part",
            Relation::Regulates => "regulates",
        }
    }

    /// Whether the relation is stored on the more specific (child) term.
    pub fn stored_on_child(self) -> bool {
        matches!(self, Relation::IsA | Relation::PartOf)
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown relation `{0}`")]
pub struct UnknownRelation(pub String);

impl FromStr for Relation {
    type Err = UnknownRelation;

    /// Accepts GO relationship names, including the regulation subtypes,
    /// and their spaced spellings (`part of`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        match norm.as_str() {
            "is_a" => Ok(Relation::IsA),
            "part_of" => Ok(Relation::PartOf),
            "has_part" => Ok(Relation::HasPart),
            "regulates" | "positively_regulates" | "negatively_regulates" => {
                Ok(Relation::Regulates)
            }
            _ => Err(UnknownRelation(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OntologyTerm {
    pub go_id: String,
    pub name: String,
    pub namespace: String,
    pub parents_is_a: Vec<String>,
    pub relations: Vec<(Relation, String)>,
    pub obsolete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostic {
    /// A relation subtype folded into one of the four relations.
    RelationSubtype {
        go_id: String,
        original: String,
        mapped: Relation,
        target: String,
    },
    /// A `relationship:` type outside the supported set; the line was dropped.
    UnsupportedRelation {
        go_id: String,
        relation: String,
        line: usize,
    },
    /// `is_a` or `relationship` pointing at an id absent from the file.
    DanglingTarget {
        go_id: String,
        relation: String,
        target: String,
    },
    /// Two non-obsolete terms share a (lowercased) name; the first keeps it.
    NameCollision {
        name: String,
        kept: String,
        dropped: String,
    },
    DuplicateId {
        go_id: String,
        line: usize,
    },
    MissingField {
        field: String,
        line: usize,
    },
}

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("line {line}: malformed stanza header `{header}`")]
    MalformedHeader { line: usize, header: String },
    #[error("line {line}: malformed tag-value pair")]
    MalformedLine { line: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown term `{0}`")]
    UnknownTerm(String),
    #[error("invalid term index: {0}")]
    Index(String),
}

/// Parsed ontology. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ontology {
    terms: IndexMap<String, OntologyTerm>,
    name_index: HashMap<String, String>,
    diagnostics: Vec<Diagnostic>,
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    schema_version: u32,
    terms: Vec<OntologyTerm>,
    diagnostics: Vec<Diagnostic>,
}

#[derive(Default)]
struct StanzaBuilder {
    line: usize,
    id: Option<String>,
    name: Option<String>,
    namespace: Option<String>,
    is_a: Vec<String>,
    relations: Vec<(Relation, String)>,
    obsolete: bool,
}

/// Strip trailing `! comment` and `{qualifiers}` from an OBO value.
fn strip_value(value: &str) -> &str {
    let value = match value.find(" !") {
        Some(i) => &value[..i],
        None => value,
    };
    let value = match value.find(" {") {
        Some(i) => &value[..i],
        None => value,
    };
    value.trim()
}

pub fn parse_obo<R: BufRead>(reader: R) -> Result<Ontology, OntologyError> {
    let mut stanzas: Vec<StanzaBuilder> = Vec::new();
    let mut diagnostics = Vec::new();
    let mut current: Option<StanzaBuilder> = None;
    let mut in_term = false;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('!') {
            continue;
        }
        if trimmed.starts_with('[') {
            if !trimmed.ends_with(']') || trimmed.len() < 3 {
                return Err(OntologyError::MalformedHeader {
                    line: lineno,
                    header: trimmed.to_string(),
                });
            }
            if let Some(done) = current.take() {
                stanzas.push(done);
            }
            in_term = &trimmed[1..trimmed.len() - 1] == "Term";
            if in_term {
                current = Some(StanzaBuilder {
                    line: lineno,
                    ..Default::default()
                });
            }
            continue;
        }
        // header lines before the first stanza, and non-Term stanzas
        let Some(stanza) = current.as_mut().filter(|_| in_term) else {
            continue;
        };
        let Some((tag, value)) = trimmed.split_once(':') else {
            return Err(OntologyError::MalformedLine { line: lineno });
        };
        let value = strip_value(value);
        match tag.trim() {
            "id" => stanza.id = Some(value.to_string()),
            "name" => stanza.name = Some(value.to_string()),
            "namespace" => stanza.namespace = Some(value.to_string()),
            "is_obsolete" => stanza.obsolete = value == "true",
            "is_a" => stanza.is_a.push(value.to_string()),
            "relationship" => {
                let mut parts = value.split_whitespace();
                let (Some(rel), Some(target)) = (parts.next(), parts.next()) else {
                    return Err(OntologyError::MalformedLine { line: lineno });
                };
                match rel.parse::<Relation>() {
                    Ok(mapped) => {
                        if rel != mapped.as_str() {
                            diagnostics.push(Diagnostic::RelationSubtype {
                                go_id: stanza.id.clone().unwrap_or_default(),
                                original: rel.to_string(),
                                mapped,
                                target: target.to_string(),
                            });
                        }
                        stanza.relations.push((mapped, target.to_string()));
                    }
                    Err(_) => diagnostics.push(Diagnostic::UnsupportedRelation {
                        go_id: stanza.id.clone().unwrap_or_default(),
                        relation: rel.to_string(),
                        line: lineno,
                    }),
                }
            }
            _ => {}
        }
    }
    if let Some(done) = current.take() {
        stanzas.push(done);
    }

    let mut terms: IndexMap<String, OntologyTerm> = IndexMap::new();
    for s in stanzas {
        let Some(go_id) = s.id else {
            diagnostics.push(Diagnostic::MissingField {
                field: "id".into(),
                line: s.line,
            });
            continue;
        };
        if terms.contains_key(&go_id) {
            diagnostics.push(Diagnostic::DuplicateId {
                go_id,
                line: s.line,
            });
            continue;
        }
        let term = OntologyTerm {
            go_id: go_id.clone(),
            name: s.name.unwrap_or_default(),
            namespace: s.namespace.unwrap_or_default(),
            parents_is_a: s.is_a,
            relations: s.relations,
            obsolete: s.obsolete,
        };
        terms.insert(go_id, term);
    }

    // drop dangling targets
    let ids: BTreeSet<String> = terms.keys().cloned().collect();
    for term in terms.values_mut() {
        let go_id = term.go_id.clone();
        term.parents_is_a.retain(|t| {
            let ok = ids.contains(t);
            if !ok {
                diagnostics.push(Diagnostic::DanglingTarget {
                    go_id: go_id.clone(),
                    relation: "is_a".into(),
                    target: t.clone(),
                });
            }
            ok
        });
        term.relations.retain(|(r, t)| {
            let ok = ids.contains(t);
            if !ok {
                diagnostics.push(Diagnostic::DanglingTarget {
                    go_id: go_id.clone(),
                    relation: r.as_str().into(),
                    target: t.clone(),
                });
            }
            ok
        });
    }

    Ok(Ontology::assemble(terms, diagnostics))
}

impl Ontology {
    fn assemble(terms: IndexMap<String, OntologyTerm>, mut diagnostics: Vec<Diagnostic>) -> Self {
        let name_index = build_name_index(&terms, Some(&mut diagnostics));
        Ontology {
            terms,
            name_index,
            diagnostics,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in file order.
    pub fn terms(&self) -> impl Iterator<Item = &OntologyTerm> {
        self.terms.values()
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn name_collisions(&self) -> usize {
        self.diagnostics
            .iter()
            .filter(|d| matches!(d, Diagnostic::NameCollision { .. }))
            .count()
    }

    /// Look a term up by GO id, or by case-insensitive name.
    pub fn lookup_term(&self, key: &str) -> Option<&OntologyTerm> {
        let key = key.trim();
        if let Some(t) = self.terms.get(key) {
            return Some(t);
        }
        self.name_index
            .get(&key.to_lowercase())
            .and_then(|id| self.terms.get(id))
    }

    /// The direct relation between two terms, oriented so that `child` is the
    /// more specific one. `Ok(None)` means both resolved but are not linked.
    pub fn relation_between(
        &self,
        parent_key: &str,
        child_key: &str,
    ) -> Result<Option<Relation>, OntologyError> {
        let parent = self
            .lookup_term(parent_key)
            .ok_or_else(|| OntologyError::UnknownTerm(parent_key.to_string()))?;
        let child = self
            .lookup_term(child_key)
            .ok_or_else(|| OntologyError::UnknownTerm(child_key.to_string()))?;
        Ok(direct_relation(parent, child))
    }

    /// Up to `count` distinct (parent name, child name) pairs linked by
    /// `relation`, drawn deterministically from `seed`.
    pub fn sample_relation_examples(
        &self,
        relation: Relation,
        count: usize,
        seed: u64,
    ) -> Vec<(String, String, Relation)> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for term in self.terms.values() {
            let edges: Vec<&String> = match relation {
                Relation::IsA => term.parents_is_a.iter().collect(),
                r => term
                    .relations
                    .iter()
                    .filter(|(rel, _)| *rel == r)
                    .map(|(_, t)| t)
                    .collect(),
            };
            for other in edges {
                let (parent, child) = if relation.stored_on_child() {
                    (other.as_str(), term.go_id.as_str())
                } else {
                    (term.go_id.as_str(), other.as_str())
                };
                if self.name_resolves_to(parent) && self.name_resolves_to(child) {
                    pairs.push((parent.to_string(), child.to_string()));
                }
            }
        }
        pairs.sort();
        pairs.dedup();
        // keep only pairs whose lookup agrees with the requested relation
        pairs.retain(|(p, c)| direct_relation(&self.terms[p], &self.terms[c]) == Some(relation));

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        pairs.shuffle(&mut rng);
        pairs.truncate(count);
        pairs
            .into_iter()
            .map(|(p, c)| (self.terms[&p].name.clone(), self.terms[&c].name.clone(), relation))
            .collect()
    }

    /// Sorted names of all live biological-process terms.
    pub fn bp_term_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .terms
            .values()
            .filter(|t| !t.obsolete && t.namespace == BIOLOGICAL_PROCESS)
            .map(|t| t.name.clone())
            .collect();
        names.sort();
        names
    }

    /// A copy restricted to one namespace. Links leaving the namespace are dropped.
    pub fn restrict_to_namespace(&self, namespace: &str) -> Ontology {
        let terms: IndexMap<String, OntologyTerm> = self
            .terms
            .iter()
            .filter(|(_, t)| t.namespace == namespace)
            .map(|(k, t)| (k.clone(), t.clone()))
            .collect();
        let keep: BTreeSet<&String> = terms.keys().collect();
        let terms = terms
            .iter()
            .map(|(k, t)| {
                let mut t = t.clone();
                t.parents_is_a.retain(|p| keep.contains(p));
                t.relations.retain(|(_, p)| keep.contains(p));
                (k.clone(), t)
            })
            .collect();
        let diagnostics = self
            .diagnostics
            .iter()
            .filter(|d| !matches!(d, Diagnostic::NameCollision { .. }))
            .cloned()
            .collect();
        Ontology::assemble(terms, diagnostics)
    }

    fn name_resolves_to(&self, go_id: &str) -> bool {
        let term = &self.terms[go_id];
        !term.obsolete && self.name_index.get(&term.name.to_lowercase()).map(String::as_str) == Some(go_id)
    }

    /// Serialize the term index as JSON; stable for identical input.
    pub fn to_index_json(&self) -> String {
        let file = IndexFile {
            schema_version: INDEX_SCHEMA_VERSION,
            terms: self.terms.values().cloned().collect(),
            diagnostics: self.diagnostics.clone(),
        };
        serde_json::to_string_pretty(&file).expect("term index serializes")
    }

    pub fn from_index_json(text: &str) -> Result<Ontology, OntologyError> {
        let file: IndexFile =
            serde_json::from_str(text).map_err(|e| OntologyError::Index(e.to_string()))?;
        if file.schema_version != INDEX_SCHEMA_VERSION {
            return Err(OntologyError::Index(format!(
                "unsupported schema_version {}",
                file.schema_version
            )));
        }
        let mut terms = IndexMap::new();
        for t in file.terms {
            if terms.contains_key(&t.go_id) {
                return Err(OntologyError::Index(format!("duplicate go_id {}", t.go_id)));
            }
            terms.insert(t.go_id.clone(), t);
        }
        // collisions are already part of the stored diagnostics
        let name_index = build_name_index(&terms, None);
        Ok(Ontology {
            terms,
            name_index,
            diagnostics: file.diagnostics,
        })
    }
}

fn direct_relation(parent: &OntologyTerm, child: &OntologyTerm) -> Option<Relation> {
    if child.parents_is_a.contains(&parent.go_id) {
        return Some(Relation::IsA);
    }
    let on_child = |r: Relation| child.relations.iter().any(|(rel, t)| *rel == r && *t == parent.go_id);
    let on_parent = |r: Relation| parent.relations.iter().any(|(rel, t)| *rel == r && *t == child.go_id);
    if on_child(Relation::PartOf) {
        Some(Relation::PartOf)
    } else if on_parent(Relation::HasPart) {
        Some(Relation::HasPart)
    } else if on_parent(Relation::Regulates) {
        Some(Relation::Regulates)
    } else {
        None
    }
}

fn build_name_index(
    terms: &IndexMap<String, OntologyTerm>,
    mut diagnostics: Option<&mut Vec<Diagnostic>>,
) -> HashMap<String, String> {
    let mut index: HashMap<String, String> = HashMap::new();
    for term in terms.values().filter(|t| !t.obsolete && !t.name.is_empty()) {
        let key = term.name.to_lowercase();
        match index.get(&key) {
            Some(kept) => {
                log::warn!("name collision on `{}`: keeping {}", term.name, kept);
                if let Some(diags) = diagnostics.as_deref_mut() {
                    diags.push(Diagnostic::NameCollision {
                        name: key,
                        kept: kept.clone(),
                        dropped: term.go_id.clone(),
                    });
                }
            }
            None => {
                index.insert(key, term.go_id.clone());
            }
        }
    }
    index
}
