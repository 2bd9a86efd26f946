mod common;

use thought_graph::baselines::{load_exemplars, Baselines};
use thought_graph::gateway::{CachedChat, CountingChat, ResponseCache};
use thought_graph::{Engine, RunConfig, ThoughtGraph};

fn saved_graph(id: &str) -> ThoughtGraph {
    let path = common::fixture(&format!("graphs/{}.json", id.replace(':', "_")));
    ThoughtGraph::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn transcript_replay_reproduces_saved_graphs() {
    let chat = common::transcript();
    let ontology = common::bp_ontology();
    let cfg = RunConfig::default();
    for record in &common::dataset().records {
        let g = Engine::new(&cfg, &chat).with_ontology(Some(&ontology)).run(record).unwrap();
        assert_eq!(g, saved_graph(&record.id), "{}", record.id);
        assert_eq!(g.to_json(), saved_graph(&record.id).to_json());
    }
}

#[test]
fn default_schedule_shape() {
    let chat = common::transcript();
    let ontology = common::bp_ontology();
    let cfg = RunConfig::default();
    let record = &common::dataset().records[0];
    let g = Engine::new(&cfg, &chat).with_ontology(Some(&ontology)).run(record).unwrap();
    assert_eq!(g.layer_sizes(), vec![3, 4, 4, 4, 4]);
    assert_eq!(g.layer_sizes(), cfg.expected_layer_sizes());
    assert_eq!(g.nodes.len(), 19);
    assert_eq!(g.edges.len(), 16);
    assert_eq!(g.voted_nodes().len(), 9);
    let per_layer = g.voted_per_layer();
    assert_eq!(per_layer.values().copied().collect::<Vec<_>>(), vec![2, 2, 2, 2, 1]);
    assert!(g.is_complete());
    g.validate().unwrap();
}

#[test]
fn cached_replay_makes_no_live_calls() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default();
    let ontology = common::bp_ontology();
    let record = &common::dataset().records[1];

    let live = CountingChat::new(common::transcript());
    let first = CachedChat::new(&live, ResponseCache::new(dir.path()));
    let g1 = Engine::new(&cfg, &first).with_ontology(Some(&ontology)).run(record).unwrap();
    assert!(live.calls() > 0);

    let replay = CountingChat::new(common::transcript());
    let second = CachedChat::new(&replay, ResponseCache::new(dir.path()));
    let g2 = Engine::new(&cfg, &second).with_ontology(Some(&ontology)).run(record).unwrap();
    assert_eq!(replay.calls(), 0, "live calls on cached replay");
    assert_eq!(g1, g2);
    assert_eq!(g1.to_json(), g2.to_json());
}

#[test]
fn json_is_a_fixed_point_and_tampering_is_rejected() {
    let g = saved_graph("GO:0000008");
    let json = g.to_json();
    let back = ThoughtGraph::from_json(&json).unwrap();
    assert_eq!(back.to_json(), json);

    let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
    v["edges"].as_array_mut().unwrap().pop();
    assert!(ThoughtGraph::from_json(&v.to_string()).is_err());

    let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
    v["nodes"][5]["parent"] = serde_json::json!(999);
    assert!(ThoughtGraph::from_json(&v.to_string()).is_err());

    let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
    v["final_answer"] = serde_json::json!(1);
    assert!(ThoughtGraph::from_json(&v.to_string()).is_err());
}

#[test]
fn dot_lists_every_node_and_edge() {
    let g = saved_graph("GO:0000025");
    let dot = g.to_dot();
    let node_lines = dot.lines().filter(|l| l.trim_start().starts_with("\"n") && l.contains("[label=") && !l.contains("->")).count();
    let edge_lines = dot.lines().filter(|l| l.contains("->")).count();
    assert_eq!(node_lines, 19);
    assert_eq!(edge_lines, 16);
    assert_eq!(dot.matches("peripheries=2").count(), 1);
}

#[test]
fn baselines_replay_with_expected_arities() {
    let chat = common::transcript();
    let cfg = RunConfig::default();
    let ds = common::dataset();
    let exemplars = load_exemplars(
        std::fs::read_to_string(common::fixture("exemplars.tsv")).unwrap().as_bytes(),
        &ds.records,
    )
    .unwrap();
    let b = Baselines::new(&cfg, &chat);
    for record in &ds.records {
        assert!(!b.io_zero_shot(record).unwrap().is_empty());
        let nine = b.io_zero_shot_9(record).unwrap();
        assert_eq!(nine.len(), 9);
        let mut dedup = nine.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 9);
        assert!(!b.few_shot(record, &exemplars).unwrap().is_empty());
        assert!(!b.cot(record, &saved_graph(&record.id)).unwrap().is_empty());
    }
    assert!(b.few_shot(&ds.records[0], &exemplars[..4]).is_err());
}
