use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_thought-graph"));
    c.env_remove("THOUGHT_GRAPH_API_KEY")
        .env_remove("OPENAI_API_KEY")
        .env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(args: &[&str], category: &str) {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    let last = err.lines().last().unwrap_or("");
    assert!(last.starts_with(&format!("error[{category}]: ")), "{args:?}: {err}");
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const GENES: &str = "MLH1,MSH2,MSH6,PMS2,XRCC1,ERCC1";

fn generate_args<'a>(transcript: &'a str, ontology: &'a str) -> Vec<&'a str> {
    vec!["generate", "--genes", GENES, "--transcript", transcript, "--ontology", ontology]
}

#[test]
fn generate_from_transcript_has_default_schedule() {
    let (t, o) = (fixture("transcript.json"), fixture("mini_go.obo"));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("graph.json");
    let dot = dir.path().join("graph.dot");
    let mut args = generate_args(s(&t), s(&o));
    args.extend(["--out", s(&out), "--dot", s(&dot)]);
    ok(&args);

    let g: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(g["nodes"].as_array().unwrap().len(), 19);
    assert_eq!(g["edges"].as_array().unwrap().len(), 16);
    let dot = std::fs::read_to_string(&dot).unwrap();
    assert_eq!(dot.lines().filter(|l| l.contains("->")).count(), 16);
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let (t, o) = (fixture("transcript.json"), fixture("mini_go.obo"));
    let a = ok(&generate_args(s(&t), s(&o)));
    let b = ok(&generate_args(s(&t), s(&o)));
    assert_eq!(a, b);
    // the dataset route asks the same questions
    let c = ok(&[
        "generate", "--gene-set-id", "GO:0000008", "--dataset", s(&fixture("dataset.tsv")),
        "--transcript", s(&t), "--ontology", s(&o),
    ]);
    let (va, vc): (Value, Value) = (serde_json::from_str(&a).unwrap(), serde_json::from_str(&c).unwrap());
    assert_eq!(va["nodes"], vc["nodes"]);
}

#[test]
fn ontology_index_is_interchangeable_with_obo() {
    let dir = tempfile::tempdir().unwrap();
    let idx = dir.path().join("go.idx");
    let summary = ok(&["ontology", "index", "--obo", s(&fixture("mini_go.obo")), "--out", s(&idx)]);
    assert!(summary.starts_with("50 terms"), "{summary}");
    let t = fixture("transcript.json");
    assert_eq!(
        ok(&generate_args(s(&t), s(&idx))),
        ok(&generate_args(s(&t), s(&fixture("mini_go.obo"))))
    );
}

#[test]
fn record_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("rec.json");
    let (t, o) = (fixture("transcript.json"), fixture("mini_go.obo"));
    let mut args = generate_args(s(&t), s(&o));
    args.extend(["--record", s(&rec)]);
    let first = ok(&args);
    let second = ok(&generate_args(s(&rec), s(&o)));
    assert_eq!(first, second);
}

#[test]
fn cache_dir_serves_replays() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let (t, o) = (fixture("transcript.json"), fixture("mini_go.obo"));
    let mut args = generate_args(s(&t), s(&o));
    args.extend(["--cache-dir", s(&cache)]);
    let first = ok(&args);
    assert!(std::fs::read_dir(&cache).unwrap().count() > 0);

    // an empty transcript fails on any request the cache cannot answer
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "[]").unwrap();
    let mut args = generate_args(s(&empty), s(&o));
    args.extend(["--cache-dir", s(&cache)]);
    assert_eq!(ok(&args), first);
    let mut args = generate_args(s(&empty), s(&o));
    args.extend(["--cache-dir", s(&cache), "--no-cache"]);
    fails_with(&args, "gateway");
}

fn dry_run(extra: &[&str]) -> Value {
    let mut args = vec!["generate", "--dry-run"];
    args.extend(extra);
    serde_json::from_str(&ok(&args)).unwrap()
}

#[test]
fn config_precedence_per_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "depth = 4\nbeam = 3\ninitial_branch = 5\nbranch = 3\ntemperature = 0.2\nmodel = \"file-model\"\nseed = 9\n",
    )
    .unwrap();
    let cases: [(&str, &str, &str, Value, Value); 7] = [
        ("--depth", "depth", "6", 5.into(), 4.into()),
        ("--beam", "beam", "1", 2.into(), 3.into()),
        ("--k-init", "initial_branch", "4", 3.into(), 5.into()),
        ("--k-sub", "branch", "4", 2.into(), 3.into()),
        ("--temperature", "temperature", "1.5", 0.7.into(), 0.2.into()),
        ("--model", "model", "flag-model", "gpt-4-1106-preview".into(), "file-model".into()),
        ("--seed", "seed", "42", 0.into(), 9.into()),
    ];
    for (flag, key, value, default, from_file) in cases {
        assert_eq!(dry_run(&[])[key], default, "{key} default");
        assert_eq!(dry_run(&["--config", s(&cfg)])[key], from_file, "{key} from file");
        let flagged = dry_run(&["--config", s(&cfg), flag, value]);
        let expected: Value = serde_json::from_str(value).unwrap_or(Value::String(value.into()));
        assert_eq!(flagged[key], expected, "{flag} over file");
        assert_eq!(dry_run(&[flag, value])[key], expected, "{flag} over default");
    }
}

#[test]
fn bad_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "depht = 4\n").unwrap();
    fails_with(&["generate", "--dry-run", "--config", s(&cfg)], "config");
    fails_with(&["generate", "--dry-run", "--depth", "1"], "config");
}

#[test]
fn missing_api_key_without_transcript() {
    fails_with(&["generate", "--genes", GENES, "--no-cache"], "config");
}

#[test]
fn input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("bad.tsv");
    std::fs::write(&ds, "go_id\tterm_name\tgene_symbols\tdescription\nGO:1\tx\t\t\n").unwrap();
    let t = fixture("transcript.json");
    fails_with(&["generate", "--gene-set-id", "GO:1", "--dataset", s(&ds), "--transcript", s(&t)], "input");
    fails_with(
        &["generate", "--gene-set-id", "GO:404", "--dataset", s(&fixture("dataset.tsv")), "--transcript", s(&t)],
        "input",
    );
    fails_with(&["export", "--in", s(&fixture("dataset.tsv"))], "input");
    fails_with(&["export", "--in", s(&dir.path().join("missing.json"))], "io");
}

fn load_vectors() -> HashMap<String, Vec<f64>> {
    serde_json::from_str(&std::fs::read_to_string(fixture("embeddings.json")).unwrap()).unwrap()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

#[test]
fn evaluate_two_samples_matches_hand_computation() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let layers = dir.path().join("layers.csv");
    let graphs = dir.path().join("graphs");
    let stdout = ok(&[
        "evaluate", "--dataset", s(&fixture("dataset.tsv")), "--sample", "2", "--seed", "0",
        "--embedder", "dictionary", s(&fixture("embeddings.json")),
        "--transcript", s(&fixture("transcript.json")), "--ontology", s(&fixture("mini_go.obo")),
        "--out", s(&report), "--layers-out", s(&layers), "--graphs-out", s(&graphs), "--workers", "2",
    ]);
    assert!(stdout.starts_with("Method\tSimilarity\tPercentile\tPercentile>99%\n"));
    assert!(stdout.contains("reference: Thought Graph (b)\t65.06%\t95.05%\t65%"));

    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let ids: Vec<String> = serde_json::from_value(r["samples"].clone()).unwrap();
    assert_eq!(ids.len(), 2);

    let vectors = load_vectors();
    let dataset = std::fs::read_to_string(fixture("dataset.tsv")).unwrap();
    let truth: HashMap<&str, &str> = dataset
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0], f[1])
        })
        .collect();
    let (mut p_sum, mut b_sum) = (0.0, 0.0);
    for id in &ids {
        let g: Value = serde_json::from_str(
            &std::fs::read_to_string(graphs.join(format!("{}.json", id.replace(':', "_")))).unwrap(),
        )
        .unwrap();
        let t = &vectors[truth[id.as_str()]];
        let final_id = g["final_answer"].as_u64().unwrap();
        let mut best = f64::MIN;
        for n in g["nodes"].as_array().unwrap() {
            let sim = cos(&vectors[n["term"].as_str().unwrap()], t);
            if n["node_id"].as_u64() == Some(final_id) {
                p_sum += sim;
            }
            if n["voted"].as_bool().unwrap() || n["is_final_answer"].as_bool().unwrap() {
                best = best.max(sim);
            }
        }
        b_sum += best;
    }
    let reports = r["reports"].as_array().unwrap();
    assert_eq!(reports[0]["method"], "Thought Graph (p)");
    assert!((reports[0]["mean_similarity"].as_f64().unwrap() - p_sum / 2.0).abs() < 1e-12);
    assert!((reports[1]["mean_similarity"].as_f64().unwrap() - b_sum / 2.0).abs() < 1e-12);
    assert!(reports[1]["mean_similarity"].as_f64() >= reports[0]["mean_similarity"].as_f64());

    let csv = std::fs::read_to_string(&layers).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 5);

    // scoring saved graphs gives the same report
    let again = dir.path().join("again.json");
    ok(&[
        "evaluate", "--dataset", s(&fixture("dataset.tsv")), "--sample", "2", "--seed", "0",
        "--embedder", "vectors-file", s(&fixture("embeddings.json")),
        "--graphs", s(&graphs), "--out", s(&again),
    ]);
    let r2: Value = serde_json::from_str(&std::fs::read_to_string(&again).unwrap()).unwrap();
    assert_eq!(r2["reports"], r["reports"]);
}

fn fx(name: &str) -> String {
    fixture(name).to_str().unwrap().to_string()
}

fn baseline_args(extra: &[&str]) -> Vec<String> {
    let mut args: Vec<String> = vec![
        "baseline".into(),
        "--dataset".into(),
        fx("dataset.tsv"),
        "--embedder".into(),
        "dictionary".into(),
        fx("embeddings.json"),
        "--transcript".into(),
        fx("transcript.json"),
    ];
    args.extend(extra.iter().map(|a| a.to_string()));
    args
}

fn ok_owned(args: &[String]) -> String {
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
}

fn baseline(method: &str, extra: &[&str]) -> Value {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let mut args = baseline_args(&["--method", method, "--out", s(&report)]);
    args.extend(extra.iter().map(|a| a.to_string()));
    ok_owned(&args);
    serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap()
}

#[test]
fn baselines_offline() {
    let z = baseline("io-zero-shot", &[]);
    assert_eq!(z["reports"][0]["method"], "IO zero-shot");
    assert_eq!(z["reports"][0]["n_samples"], 4);

    let nine = baseline("io-zero-shot-9", &[]);
    for (_, preds) in nine["predictions"].as_object().unwrap() {
        assert_eq!(preds.as_array().unwrap().len(), 9);
    }
    let fs = baseline("few-shot", &["--exemplars", &fx("exemplars.tsv")]);
    assert_eq!(fs["reports"][0]["method"], "IO few-shot");

    let cot = baseline("cot", &["--graphs", &fx("graphs")]);
    assert_eq!(cot["reports"][0]["method"], "CoT");
    // without --graphs the graphs are regenerated from the transcript
    let cot2 = baseline("cot", &["--ontology", &fx("mini_go.obo")]);
    assert_eq!(cot2["reports"], cot["reports"]);
}

fn fails_owned(args: &[String], category: &str) {
    fails_with(&args.iter().map(String::as_str).collect::<Vec<_>>(), category)
}

#[test]
fn baseline_preconditions() {
    fails_owned(&baseline_args(&["--method", "few-shot"]), "input");

    let dir = tempfile::tempdir().unwrap();
    let four = dir.path().join("four.tsv");
    let text = std::fs::read_to_string(fixture("exemplars.tsv")).unwrap();
    std::fs::write(&four, text.lines().take(5).collect::<Vec<_>>().join("\n")).unwrap();
    fails_owned(&baseline_args(&["--method", "few-shot", "--exemplars", s(&four)]), "input");

    let mut args = baseline_args(&["--method", "io-zero-shot"]);
    args[4] = "telepathy".into();
    fails_owned(&args, "config");
}
