import json
from pathlib import Path

import pytest

from iskg.cli import main
from iskg.corpus import parse_corpus
from iskg.graph import import_json


@pytest.fixture()
def workdir(tmp_path):
    return tmp_path


def run(*argv):
    return main([str(a) for a in argv])


def test_synth_writes_parseable_corpus(workdir, capsys):
    corpus = workdir / "c.tsv"
    events = workdir / "e.jsonl"
    assert run("synth", "--corpus", corpus, "--events", events, "--n", 25, "--seed", 3) == 0
    ds = parse_corpus(corpus.read_text(encoding="utf-8"))
    assert len(ds) == 25
    assert len(events.read_text(encoding="utf-8").splitlines()) == 25
    assert "25 sentences" in capsys.readouterr().out


def test_build_graph_and_export_line_count(workdir, capsys):
    corpus = workdir / "c.tsv"
    graph = workdir / "g.json"
    run("synth", "--corpus", corpus, "--n", 20, "--seed", 5)
    assert run("build-graph", "--corpus", corpus, "--out", graph) == 0
    store = import_json(graph.read_text(encoding="utf-8"))
    stats = store.stats()

    capsys.readouterr()
    assert run("export", "--graph", graph, "--format", "cypher") == 0
    script = capsys.readouterr().out
    lines = [ln for ln in script.splitlines() if ln]
    assert len(lines) == stats["nodes"] + stats["edges"]

    capsys.readouterr()
    assert run("export", "--graph", graph, "--format", "json") == 0
    exported = capsys.readouterr().out
    assert json.loads(exported)["version"] == 1


def test_ingest_duplicate_adds_nothing(workdir, capsys):
    corpus = workdir / "c.tsv"
    graph = workdir / "g.json"
    run("synth", "--corpus", corpus, "--n", 12, "--seed", 6)
    assert run("ingest", "--corpus", corpus, "--graph", graph) == 0
    first = import_json(graph.read_text(encoding="utf-8")).stats()
    assert run("ingest", "--corpus", corpus, "--graph", graph) == 0
    second = import_json(graph.read_text(encoding="utf-8")).stats()
    assert first == second
    assert "+0 nodes" in capsys.readouterr().out


def test_train_eval_extract_round_trip(workdir, capsys):
    corpus = workdir / "c.tsv"
    model_dir = workdir / "model"
    config = workdir / "cfg.json"
    log = workdir / "log.jsonl"
    run("synth", "--corpus", corpus, "--n", 30, "--seed", 7)
    config.write_text(json.dumps({
        "epochs": 2, "batch_size": 8, "lr": 0.01, "loss": "il", "seed": 1,
        "d_tok": 12, "d_seg": 2, "d_pos": 8, "d_model": 16, "d_ff": 32,
        "heads": 2, "layers": 1, "hidden": 8, "max_len": 64,
    }), encoding="utf-8")
    assert run("train", "--corpus", corpus, "--config", config,
               "--out", model_dir, "--log", log) == 0
    assert (model_dir / "bundle.json").exists()
    assert len(log.read_text().splitlines()) == 2
    capsys.readouterr()

    assert run("eval", "--model", model_dir, "--corpus", corpus, "--split", "test") == 0
    table = capsys.readouterr().out
    assert "Entity type" in table and "P (%)" in table
    for row in ("Total", "Equipment", "Process label", "Material", "State", "Consequence"):
        assert row in table

    assert run("extract", "--model", model_dir, "compressor surge happened") == 0
    out = json.loads(capsys.readouterr().out)
    assert "spans" in out and "labels" in out
    assert len(out["labels"]) == 3


def test_ask_on_graph(workdir, capsys):
    corpus = workdir / "c.tsv"
    graph = workdir / "g.json"
    run("synth", "--corpus", corpus, "--n", 40, "--seed", 8)
    run("build-graph", "--corpus", corpus, "--out", graph)
    capsys.readouterr()
    assert run("ask", "--graph", graph, "what is the cause of the compressor trouble?", "-k", 3) == 0
    body = json.loads(capsys.readouterr().out)
    assert body["status"] in ("ok", "refused", "not_found")
    if body["status"] == "ok":
        assert 1 <= len(body["answers"]) <= 3


def test_user_errors_exit_1(workdir, capsys):
    assert run("export", "--graph", workdir / "missing.json") == 1
    assert "error:" in capsys.readouterr().err
    assert run("no-such-command") == 1
    assert run("train", "--corpus", workdir / "nope.tsv", "--out", workdir / "m") == 1
    assert run("synth") == 1  # missing required --corpus


def test_bad_split_ratio_rejected(workdir):
    corpus = workdir / "c.tsv"
    run("synth", "--corpus", corpus, "--n", 12, "--seed", 1)
    assert run("train", "--corpus", corpus, "--out", workdir / "m",
               "--split-ratio", "lots:few") == 1


def test_malformed_corpus_reports_line(workdir, capsys):
    bad = workdir / "bad.tsv"
    bad.write_text("a\tB-EQU\nbroken\n", encoding="utf-8")
    assert run("build-graph", "--corpus", bad, "--out", workdir / "g.json") == 1
    assert "line 2" in capsys.readouterr().err


def test_serve_config_validation(workdir, capsys):
    cfg = workdir / "serve.json"
    cfg.write_text(json.dumps({"addr": "127.0.0.1:0", "bogus": 1}), encoding="utf-8")
    assert run("serve", "--config", cfg) == 1
    assert "unknown keys" in capsys.readouterr().err

    assert run("serve", "--addr", "not-an-addr") == 1
    assert run("serve", "--ui", workdir / "missing-dir") == 1
