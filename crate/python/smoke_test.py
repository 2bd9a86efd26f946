"""Smoke test for the Python bindings.

Build and install first:

    pip install maturin
    maturin develop -m crates/py/Cargo.toml     # or: pip install ./crates/py
    python python/smoke_test.py
"""

import json
import math
import pathlib
import sys

import thought_graph as tg

ROOT = pathlib.Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "crates" / "core" / "tests" / "fixtures"
GENES = ["MLH1", "MSH2", "MSH6", "PMS2", "XRCC1", "ERCC1"]


def main() -> int:
    onto = tg.Ontology.from_path(FIXTURES / "mini_go.obo")
    assert len(onto) == 50
    assert onto.lookup("cell division")[0] == "GO:0000005"
    assert onto.relation_between("cell cycle", "cell division") == "part_of"
    assert len(onto.bp_term_names()) == 48
    again = tg.Ontology.from_index_json(onto.to_index_json())
    assert again.to_index_json() == onto.to_index_json()

    bp = onto.biological_process_only()
    graph = tg.generate(GENES, str(FIXTURES / "transcript.json"), ontology=bp)
    graph.validate()
    assert graph.layer_sizes() == [3, 4, 4, 4, 4]
    assert len(graph) == 19 and len(graph.edges()) == 16
    assert len(graph.green_terms()) == 9
    assert len(graph.top_pathways()) == 2

    text = graph.to_json()
    assert tg.ThoughtGraph.from_json(text).to_json() == text
    assert json.loads(text)["final_answer"] is not None
    assert graph.to_dot().count("->") == 16

    tampered = json.loads(text)
    tampered["edges"].pop()
    try:
        tg.ThoughtGraph.from_json(json.dumps(tampered))
    except tg.ThoughtGraphError:
        pass
    else:
        raise AssertionError("tampered graph accepted")

    assert math.isclose(tg.cosine([1.0, 0.0], [1.0, 1.0]), 1 / math.sqrt(2))
    assert tg.percentile(0.2, [0.1, 0.2, 0.2, 0.9]) == 25.0
    assert tg.percentile(0.2, [0.1, 0.2, 0.2, 0.9], ties="midpoint") == 50.0
    assert "depth = 5" in tg.default_config()

    print(f"ok: final answer {graph.final_answer()!r}, {len(graph)} nodes")
    return 0


if __name__ == "__main__":
    sys.exit(main())
