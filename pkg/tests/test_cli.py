"""End-to-end CLI behavior through in-process main() calls."""

import dataclasses
import json

import pytest

from swapgraph.cli import build_parser, main
from swapgraph.rewriter import RewriteConfig
from swapgraph.serialize import dumps, load_graph
from swapgraph.sim import SimConfig


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ---------------------------------------------------------------- pipeline


def test_full_pipeline_chain20(tmp_path, capsys):
    g = tmp_path / "g.json"
    swapped = tmp_path / "swapped.json"
    base_rep = tmp_path / "base.json"
    cand_rep = tmp_path / "cand.json"

    code, out, _ = run_cli(capsys, "generate", "--topology", "chain",
                           "--size", "20", "-o", str(g))
    assert code == 0
    assert out == f"wrote chain graph: 81 nodes, 139 edges, 81 tensors -> {g}\n"

    code, out, _ = run_cli(capsys, "rewrite", "-i", str(g), "-o", str(swapped))
    assert code == 0
    assert out.splitlines() == [
        "tensors_swapped: 20",
        "swap_outs: 20",
        "swap_ins: 20",
        "control_edges: 19",
    ]

    code, out, _ = run_cli(capsys, "simulate", "-i", str(g), "-o", str(base_rep))
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "peak_device_bytes: 22020096"
    assert lines[1] == "peak_host_bytes: 0"
    assert lines[2] == "makespan: 60.0"
    assert lines[5] == "oom: False"

    code, out, _ = run_cli(capsys, "simulate", "-i", str(swapped), "-o", str(cand_rep))
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "peak_device_bytes: 3145728"
    assert lines[1] == "peak_host_bytes: 20971520"
    assert lines[2] == "makespan: 60.0000244140625"

    code, out, _ = run_cli(capsys, "report", str(base_rep), str(cand_rep))
    assert code == 0
    assert out.splitlines() == [
        "device peak: 22020096 -> 3145728 bytes",
        "device_peak_ratio: 7.00x",
        "host peak: 0 -> 20971520 bytes",
        "makespan: 60.0 -> 60.0000244140625 (overhead +2.44141e-05)",
        "transfer time: 0.0 -> 0.0004882812500000002",
    ]

    code, out, _ = run_cli(capsys, "report", str(base_rep), str(cand_rep), "--json")
    assert code == 0
    doc = json.loads(out)
    assert doc["device_peak_ratio"] == 7.0
    assert doc["makespan_overhead"] == pytest.approx(2.44140625e-05)


def test_rewrite_report_file(tmp_path, capsys):
    g = tmp_path / "g.json"
    run_cli(capsys, "generate", "--topology", "chain", "--size", "4", "-o", str(g))
    rep = tmp_path / "rewrite_report.json"
    code, _, _ = run_cli(capsys, "rewrite", "-i", str(g), "-o",
                         str(tmp_path / "out.json"), "--report", str(rep))
    assert code == 0
    doc = json.loads(rep.read_text())
    assert doc["tensors_swapped"] == 4
    assert len(doc["edges_rewritten"]) == 4


def test_simulate_trace_csv(tmp_path, capsys):
    g = tmp_path / "g.json"
    run_cli(capsys, "generate", "--topology", "chain", "--size", "3", "-o", str(g))
    csv_path = tmp_path / "trace.csv"
    code, _, _ = run_cli(capsys, "simulate", "-i", str(g), "-o",
                         str(tmp_path / "rep.json"), "--trace-csv", str(csv_path))
    assert code == 0
    assert csv_path.read_text().splitlines()[0] == "time,event,node,tensor,bytes"


def test_simulate_serial_flag(tmp_path, capsys):
    g = tmp_path / "g.json"
    run_cli(capsys, "generate", "--topology", "chain", "--size", "20", "-o", str(g))
    rep = tmp_path / "rep.json"
    code, out, _ = run_cli(capsys, "simulate", "-i", str(g), "-o", str(rep), "--serial")
    assert code == 0
    doc = json.loads(rep.read_text())
    assert doc["makespan"] == 60.0
    assert doc["transfer_time_total"] == 0.0


def test_rewrite_cap_zero_roundtrips_bytes(tmp_path, capsys):
    g = tmp_path / "g.json"
    run_cli(capsys, "generate", "--topology", "chain", "--size", "5", "-o", str(g))
    out_path = tmp_path / "same.json"
    code, _, _ = run_cli(capsys, "rewrite", "-i", str(g), "-o", str(out_path),
                         "--n-tensors", "0")
    assert code == 0
    # nothing was rewritten, so the output is the canonical form of the input
    assert out_path.read_text() == dumps(load_graph(str(g)))


def test_export_dot(tmp_path, capsys):
    g = tmp_path / "g.json"
    run_cli(capsys, "generate", "--topology", "branchy", "--size", "4", "-o", str(g))
    dot_path = tmp_path / "g.dot"
    code, out, _ = run_cli(capsys, "export-dot", "-i", str(g), "-o", str(dot_path))
    assert code == 0
    text = dot_path.read_text()
    assert text.startswith("digraph g {")
    assert "style=dashed" not in text  # no control edges before rewriting
    assert out.endswith(f"-> {dot_path}\n")


# ---------------------------------------------------------------- defaults


def test_rewrite_parser_defaults_match_config():
    args = build_parser().parse_args(["rewrite", "-i", "a", "-o", "b"])
    cfg = RewriteConfig()
    assert args.n_tensors == cfg.n_tensors
    assert args.lb == cfg.lb
    assert args.ub == cfg.ub
    assert args.ctrld_strategy == cfg.ctrld_strategy
    assert args.fuse_swapins == cfg.fuse_swapins
    assert args.swapin_fuse_distance == cfg.swapin_fuse_distance
    assert args.swap_branches == cfg.swap_branches
    assert args.branch_threshold == cfg.branch_threshold
    assert args.starting_scope == cfg.starting_scope


def test_every_rewrite_config_field_is_exposed():
    args = build_parser().parse_args(["rewrite", "-i", "a", "-o", "b"])
    exposed = set(vars(args))
    for f in dataclasses.fields(RewriteConfig):
        assert f.name in exposed, f.name


def test_simulate_parser_defaults_match_config():
    args = build_parser().parse_args(["simulate", "-i", "a", "-o", "b"])
    cfg = SimConfig()
    assert args.device_capacity_bytes == cfg.device_capacity_bytes
    assert args.h2d_bandwidth == cfg.host_to_device_bandwidth
    assert args.d2h_bandwidth == cfg.device_to_host_bandwidth
    assert args.overlap_transfers == cfg.overlap_transfers


def test_boolean_optional_flags_negate():
    p = build_parser()
    on = p.parse_args(["rewrite", "-i", "a", "-o", "b", "--fuse-swapins"])
    off = p.parse_args(["rewrite", "-i", "a", "-o", "b", "--no-fuse-swapins"])
    assert on.fuse_swapins and not off.fuse_swapins
    no_overlap = p.parse_args(["simulate", "-i", "a", "-o", "b",
                               "--no-overlap-transfers"])
    assert not no_overlap.overlap_transfers


# ---------------------------------------------------------------- failures


def test_missing_input_file(tmp_path, capsys):
    code, out, err = run_cli(capsys, "rewrite", "-i", str(tmp_path / "nope.json"),
                             "-o", str(tmp_path / "out.json"))
    assert code == 1
    assert out == ""
    assert err.startswith("error: ")


def test_malformed_json(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    code, _, err = run_cli(capsys, "simulate", "-i", str(bad),
                           "-o", str(tmp_path / "rep.json"))
    assert code == 1
    assert err.startswith(f"error: {bad}: line 1")


def test_invalid_graph_rejected(tmp_path, capsys):
    doc = {
        "nodes": [
            {"id": 0, "name": "x", "kind": "variable", "parameterized": True,
             "device": "acc:0"},
            {"id": 1, "name": "f", "kind": "compute", "parameterized": False,
             "device": "acc:0"},
        ],
        "edges": [{"src": 0, "dst": 1, "action": "read", "tensor": 7}],
        "tensors": [{"id": 0, "producer": 0, "size_bytes": 8}],
    }
    path = tmp_path / "invalid.json"
    path.write_text(json.dumps(doc))
    code, _, err = run_cli(capsys, "export-dot", "-i", str(path),
                           "-o", str(tmp_path / "g.dot"))
    assert code == 1
    assert "graph is invalid" in err
    assert "unknown-tensor" in err


def test_bad_rewrite_bounds(tmp_path, capsys):
    g = tmp_path / "g.json"
    run_cli(capsys, "generate", "--topology", "chain", "--size", "3", "-o", str(g))
    code, _, err = run_cli(capsys, "rewrite", "-i", str(g),
                           "-o", str(tmp_path / "o.json"), "--lb", "0")
    assert code == 1
    assert "error: lb must be positive" in err


def test_unknown_topology_exits_two(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--topology", "hourglass", "--size", "3",
              "-o", str(tmp_path / "g.json")])
    assert exc.value.code == 2


# ---------------------------------------------------------------- logging


def test_invalid_log_level_warns(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SWAPGRAPH_LOG", "loud")
    g = tmp_path / "g.json"
    code, _, err = run_cli(capsys, "generate", "--topology", "chain",
                           "--size", "3", "-o", str(g))
    assert code == 0
    assert "warning: SWAPGRAPH_LOG='loud'" in err


def test_valid_log_level_silent(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("SWAPGRAPH_LOG", "quiet")
    g = tmp_path / "g.json"
    code, _, err = run_cli(capsys, "generate", "--topology", "chain",
                           "--size", "3", "-o", str(g))
    assert code == 0
    assert "warning:" not in err
