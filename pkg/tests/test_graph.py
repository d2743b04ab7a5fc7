import json

import numpy as np
import pytest

from mcmpart import load_graph, save_graph, topological_order
from mcmpart.errors import DanglingEdgeError, GraphCycleError, GraphFormatError
from mcmpart.graph import graph_to_json

from conftest import make_graph

CHAIN_DOC = json.dumps(
    {
        "nodes": [
            {"id": 0, "op": "input", "cost": 1.0, "out_bytes": 16, "param_bytes": 0},
            {"id": 1, "op": "matmul", "cost": 2.5, "out_bytes": 32, "param_bytes": 64},
        ],
        "edges": [{"src": 0, "dst": 1, "bytes": 16}],
    }
)


def test_load_minimal_chain():
    g = load_graph(CHAIN_DOC)
    assert g.num_nodes == 2
    assert g.num_edges == 1
    assert g.nodes[1].compute_cost == 2.5
    assert g.edges[0].transfer_bytes == 16


def test_load_accepts_bytes_and_filelike(tmp_path):
    assert load_graph(CHAIN_DOC.encode()).num_nodes == 2
    p = tmp_path / "g.json"
    p.write_text(CHAIN_DOC)
    with open(p, "rb") as fh:
        assert load_graph(fh).num_nodes == 2


def test_cycle_detected():
    doc = json.loads(CHAIN_DOC)
    doc["edges"].append({"src": 1, "dst": 0, "bytes": 8})
    with pytest.raises(GraphCycleError):
        load_graph(json.dumps(doc))


def test_dangling_edge():
    doc = json.loads(CHAIN_DOC)
    doc["nodes"].append({"id": 2, "op": "output", "cost": 1.0, "out_bytes": 8, "param_bytes": 0})
    doc["edges"].append({"src": 1, "dst": 7, "bytes": 8})
    with pytest.raises(DanglingEdgeError):
        load_graph(json.dumps(doc))


def test_parse_errors():
    with pytest.raises(GraphFormatError):
        load_graph("{not json")
    with pytest.raises(GraphFormatError):
        load_graph('{"nodes": []}')
    with pytest.raises(GraphFormatError):
        load_graph('{"nodes": [{"id": 0}], "edges": []}')


def test_ids_must_be_dense():
    doc = json.loads(CHAIN_DOC)
    doc["nodes"][1]["id"] = 5
    with pytest.raises(GraphFormatError):
        load_graph(json.dumps(doc))


def test_duplicate_edge_and_self_edge_rejected():
    doc = json.loads(CHAIN_DOC)
    doc["edges"].append({"src": 0, "dst": 1, "bytes": 4})
    with pytest.raises(GraphFormatError):
        load_graph(json.dumps(doc))
    doc = json.loads(CHAIN_DOC)
    doc["edges"] = [{"src": 0, "dst": 0, "bytes": 4}]
    with pytest.raises(GraphFormatError):
        load_graph(json.dumps(doc))


def test_negative_cost_rejected():
    doc = json.loads(CHAIN_DOC)
    doc["nodes"][0]["cost"] = -1.0
    with pytest.raises(GraphFormatError):
        load_graph(json.dumps(doc))


def test_topological_order_chain(chain3):
    assert topological_order(chain3).tolist() == [0, 1, 2]


def test_topological_order_diamond_tiebreak(diamond):
    assert topological_order(diamond).tolist() == [0, 1, 2, 3]


def test_topological_order_empty():
    g = make_graph(0, [])
    assert topological_order(g).tolist() == []


def test_topological_order_respects_all_edges():
    g = make_graph(7, [(0, 2), (2, 5), (1, 5), (3, 4), (5, 6), (4, 6)])
    order = topological_order(g)
    pos = {int(u): k for k, u in enumerate(order)}
    assert len(order) == 7
    for e in g.edges:
        assert pos[e.src] < pos[e.dst]


def test_roundtrip_byte_identical(tmp_path):
    g = load_graph(CHAIN_DOC)
    canonical = graph_to_json(g)
    again = graph_to_json(load_graph(canonical))
    assert again == canonical
    p = tmp_path / "g.json"
    save_graph(g, p)
    assert p.read_text() == canonical


def test_node_depths(diamond):
    assert diamond.node_depths().tolist() == [0, 1, 1, 2]
