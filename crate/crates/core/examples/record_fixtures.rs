//! Regenerates the offline fixtures under `tests/fixtures/`: a dataset, a
//! recorded chat transcript covering graph generation and every baseline,
//! a dictionary of embeddings, and few-shot exemplars.
//!
//! The "model" here is a deterministic stand-in that answers each request
//! from a fixed pool of process names, keyed on the request digest.
//!
//!     cargo run -p thought-graph-core --example record_fixtures -- crates/core/tests/fixtures

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thought_graph::baselines::{load_exemplars, Baselines};
use thought_graph::dataset::parse_dataset;
use thought_graph::gateway::{
    cache_key, ChatProvider, ChatRequest, ChatResponse, GatewayError, RecordingChat,
};
use thought_graph::ontology::{parse_obo, BIOLOGICAL_PROCESS};
use thought_graph::{Engine, RunConfig};

const EXTRA_TERMS: &[&str] = &[
    "base-excision repair",
    "nucleotide-excision repair",
    "homologous recombination",
    "G1/S transition of mitotic cell cycle",
    "G2/M transition of mitotic cell cycle",
    "mitotic spindle assembly checkpoint signaling",
    "cytokinesis",
    "extrinsic apoptotic signaling pathway",
    "regulation of apoptotic process",
    "negative regulation of apoptotic process",
    "cellular response to oxidative stress",
    "response to hypoxia",
    "innate immune response",
    "adaptive immune response",
    "cytokine-mediated signaling pathway",
    "positive regulation of transcription by RNA polymerase II",
    "ribosome biogenesis",
    "rRNA processing",
    "protein ubiquitination",
    "proteasome-mediated ubiquitin-dependent protein catabolic process",
    "fatty acid beta-oxidation",
    "cholesterol biosynthetic process",
    "glycolytic process",
    "oxidative phosphorylation",
    "vasculogenesis",
    "endothelial cell migration",
];

const DATASET: &str = "go_id\tterm_name\tgene_symbols\tdescription
GO:0000008\tDNA repair\tMLH1 MSH2 MSH6 PMS2 XRCC1 ERCC1\tRestoration of damaged DNA.
GO:0000025\tapoptotic process\tBAX BCL2 CASP3 CASP9 APAF1 CYCS\tA programmed cell death process.
GO:0000004\tcell cycle\tCDK1 CCNB1 CDC20 PLK1 BUB1 AURKA\tThe progression of biochemical and morphological phases.
GO:0000046\tlipid metabolic process\tFASN ACACA SCD HMGCR LDLR SREBF1\tChemical reactions involving lipids.
";

const EXEMPLARS: &str = "genes\tanswer\tid
HBA1 HBB HBD\toxygen transport\tGO:0015671
INS GCG SST\tregulation of hormone secretion\tGO:0046883
ALB TTR APOA1\tplasma lipoprotein particle assembly\tGO:0034377
COL1A1 COL1A2 COL3A1\tcollagen fibril organization\tGO:0030199
MYH7 ACTC1 TNNT2\tcardiac muscle contraction\tGO:0060048
";

struct StandIn {
    pool: Vec<String>,
}

impl StandIn {
    fn rng(&self, request: &ChatRequest) -> ChaCha8Rng {
        let key = cache_key(request);
        ChaCha8Rng::seed_from_u64(u64::from_str_radix(&key[..16], 16).unwrap())
    }

    fn pick_terms(&self, rng: &mut ChaCha8Rng, n: usize, avoid: &str) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        while out.len() < n {
            let t = &self.pool[rng.gen_range(0..self.pool.len())];
            if !t.eq_ignore_ascii_case(avoid) && !out.contains(t) {
                out.push(t.clone());
            }
        }
        out
    }
}

fn numbered(items: &[String]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, t)| format!("{}. {t}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

fn quoted_parent(prompt: &str) -> String {
    prompt
        .split("is \"")
        .nth(1)
        .and_then(|rest| rest.split('"').next())
        .unwrap_or("")
        .to_string()
}

fn candidate_count(prompt: &str) -> usize {
    prompt
        .lines()
        .filter(|l| l.split_once(". ").is_some_and(|(n, _)| n.parse::<usize>().is_ok()))
        .count()
}

impl ChatProvider for StandIn {
    fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut rng = self.rng(request);
        let prompt = &request.messages.last().unwrap().content;
        let text = match request.request_tag.as_str() {
            "initial_expand" => numbered(&self.pick_terms(&mut rng, 3, "")),
            "expand_node" => numbered(&self.pick_terms(&mut rng, 2, &quoted_parent(prompt))),
            "vote" => {
                let n = candidate_count(prompt);
                let a = rng.gen_range(1..=n);
                let b = (a + rng.gen_range(1..n)) % n + 1;
                format!("{a}, {b}")
            }
            "final" => format!("{}", rng.gen_range(1..=candidate_count(prompt))),
            "edge_label" => ["is_a", "part_of", "has_part", "regulates"][rng.gen_range(0..4)].to_string(),
            "io-zero-shot" | "few-shot" => self.pick_terms(&mut rng, 1, "")[0].clone(),
            "io-zero-shot-9" => numbered(&self.pick_terms(&mut rng, 9, "")),
            "cot" => {
                let t = self.pick_terms(&mut rng, 1, "")[0].clone();
                format!("Pathway 1 fits best at step 3.\nAnswer: {t}")
            }
            other => return Err(GatewayError::Config(format!("no stand-in for `{other}`"))),
        };
        Ok(ChatResponse::stop(text))
    }
}

fn vector_for(text: &str, dim: usize) -> Vec<f64> {
    let digest = thought_graph::gateway::sha256_hex(text.to_lowercase().as_bytes());
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from_str_radix(&digest[..16], 16).unwrap());
    // shared component so similarities are mostly positive
    (0..dim)
        .map(|i| if i == 0 { 2.0 } else { rng.gen_range(-1.0..1.0) })
        .map(|v: f64| (v * 1e6).round() / 1e6)
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "crates/core/tests/fixtures".into()));
    let obo = std::fs::read_to_string(out.join("mini_go.obo"))?;
    let ontology = parse_obo(obo.as_bytes())?.restrict_to_namespace(BIOLOGICAL_PROCESS);

    let mut pool: Vec<String> = ontology
        .bp_term_names()
        .into_iter()
        .filter(|n| n != "biological_process")
        .collect();
    pool.extend(EXTRA_TERMS.iter().map(|s| s.to_string()));
    let stand_in = StandIn { pool: pool.clone() };
    let recorder = RecordingChat::new(stand_in);

    let dataset = parse_dataset(DATASET.as_bytes())?;
    let exemplars = load_exemplars(EXEMPLARS.as_bytes(), &dataset.records)?;
    let cfg = RunConfig::default();
    let graphs_dir = out.join("graphs");
    std::fs::create_dir_all(&graphs_dir)?;

    let mut seen: BTreeSet<String> = pool.iter().cloned().collect();
    for record in &dataset.records {
        let graph = Engine::new(&cfg, &recorder).with_ontology(Some(&ontology)).run(record)?;
        seen.extend(graph.nodes.iter().map(|n| n.term.clone()));
        std::fs::write(graphs_dir.join(format!("{}.json", record.id.replace(':', "_"))), graph.to_json())?;

        let b = Baselines::new(&cfg, &recorder);
        seen.insert(b.io_zero_shot(record)?);
        seen.extend(b.io_zero_shot_9(record)?);
        seen.insert(b.few_shot(record, &exemplars)?);
        seen.insert(b.cot(record, &graph)?);
    }
    seen.extend(dataset.term_names());

    let mut entries = recorder.entries();
    entries.sort_by(|a, b| (&a.request_tag, &a.request_digest).cmp(&(&b.request_tag, &b.request_digest)));
    std::fs::write(out.join("transcript.json"), serde_json::to_string_pretty(&entries)?)?;

    let embeddings: BTreeMap<&String, Vec<f64>> = seen.iter().map(|t| (t, vector_for(t, 16))).collect();
    std::fs::write(out.join("embeddings.json"), serde_json::to_string_pretty(&embeddings)?)?;
    std::fs::write(out.join("dataset.tsv"), DATASET)?;
    std::fs::write(out.join("exemplars.tsv"), EXEMPLARS)?;
    println!(
        "wrote {} transcript entries, {} embeddings, {} graphs",
        entries.len(),
        embeddings.len(),
        dataset.records.len()
    );
    Ok(())
}
