#![allow(dead_code)]

use std::path::PathBuf;

use thought_graph::dataset::{ingest_dataset, Dataset};
use thought_graph::gateway::{DictionaryEmbedder, TranscriptChat};
use thought_graph::ontology::{parse_obo, Ontology, BIOLOGICAL_PROCESS};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn ontology() -> Ontology {
    let text = std::fs::read_to_string(fixture("mini_go.obo")).unwrap();
    parse_obo(text.as_bytes()).unwrap()
}

pub fn bp_ontology() -> Ontology {
    ontology().restrict_to_namespace(BIOLOGICAL_PROCESS)
}

pub fn dataset() -> Dataset {
    ingest_dataset(&fixture("dataset.tsv")).unwrap()
}

pub fn transcript() -> TranscriptChat {
    TranscriptChat::from_file(&fixture("transcript.json")).unwrap()
}

pub fn embedder() -> DictionaryEmbedder {
    DictionaryEmbedder::from_file(&fixture("embeddings.json")).unwrap()
}
