mod common;

use std::collections::HashMap;

use proptest::prelude::*;
use thought_graph::ontology::{Diagnostic, Ontology};
use thought_graph::Relation;

#[test]
fn fixture_counts() {
    let o = common::ontology();
    assert_eq!(o.len(), 50);
    let is_a: usize = o.terms().map(|t| t.parents_is_a.len()).sum();
    assert_eq!(is_a, 49);

    let mut per_rel: HashMap<Relation, usize> = HashMap::new();
    for t in o.terms() {
        for (r, _) in &t.relations {
            *per_rel.entry(*r).or_default() += 1;
        }
    }
    for r in [Relation::PartOf, Relation::HasPart, Relation::Regulates] {
        assert!(per_rel.get(&r).copied().unwrap_or(0) >= 1, "no {r:?}");
    }

    let t15 = o.lookup_term("GO:0000015").unwrap();
    assert!(t15.relations.contains(&(Relation::Regulates, "GO:0000002".to_string())));
    assert_eq!(o.bp_term_names().len(), 48);
}

#[test]
fn fixture_diagnostics() {
    let o = common::ontology();
    let count = |f: fn(&Diagnostic) -> bool| o.diagnostics().iter().filter(|d| f(d)).count();
    assert_eq!(count(|d| matches!(d, Diagnostic::RelationSubtype { .. })), 2);
    assert_eq!(count(|d| matches!(d, Diagnostic::UnsupportedRelation { .. })), 1);
    assert_eq!(count(|d| matches!(d, Diagnostic::DanglingTarget { .. })), 1);
    assert_eq!(o.name_collisions(), 0);
}

#[test]
fn namespace_restriction_drops_molecular_function() {
    let bp = common::bp_ontology();
    assert!(bp.lookup_term("GO:0000049").is_none());
    assert!(bp.lookup_term("cell division").is_some());
}

#[test]
fn index_round_trip() {
    let o = common::ontology();
    let json = o.to_index_json();
    let back = Ontology::from_index_json(&json).unwrap();
    assert_eq!(back.len(), o.len());
    assert_eq!(back.to_index_json(), json);
    assert_eq!(back.diagnostics(), o.diagnostics());
}

#[test]
fn sampled_examples_hold_in_the_ontology() {
    let o = common::ontology();
    for rel in Relation::ALL {
        let examples = o.sample_relation_examples(rel, 3, 7);
        assert!(!examples.is_empty(), "{rel:?}");
        for (parent, child, r) in &examples {
            assert_eq!(*r, rel);
            assert_eq!(o.relation_between(parent, child).unwrap(), Some(rel), "{parent} -> {child}");
        }
        assert_eq!(examples, o.sample_relation_examples(rel, 3, 7));
    }
}

#[test]
fn known_pairs() {
    let o = common::ontology();
    assert_eq!(o.relation_between("cell cycle", "cell division").unwrap(), Some(Relation::PartOf));
    assert_eq!(o.relation_between("DNA repair", "mismatch repair").unwrap(), Some(Relation::IsA));
    assert_eq!(o.relation_between("gene expression", "translation").unwrap(), Some(Relation::HasPart));
    assert!(o.relation_between("nonexistent process", "cell cycle").is_err());
}

proptest! {
    #[test]
    fn relation_is_antisymmetric(a in 1u32..=48, b in 1u32..=48) {
        let o = common::ontology();
        let (a, b) = (format!("GO:{a:07}"), format!("GO:{b:07}"));
        let ab = o.relation_between(&a, &b).unwrap();
        let ba = o.relation_between(&b, &a).unwrap();
        if a != b {
            prop_assert!(ab.is_none() || ba.is_none() || ab != ba, "{a} {b}: {ab:?} / {ba:?}");
        }
    }
}
