"""HTTP API binding the pipeline together: extraction, graph ingest, node
and neighbor lookup, retrieval, path queries, and question answering.

Every error is one of five stable codes (bad_request, not_found,
out_of_scope, model_missing, internal) in a fixed JSON envelope; stack
traces never leak. Graph writes are serialized behind a lock; reads are
lock-free over the already-canonical store.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import applications as apps
from .corpus import BioError, LabeledSentence
from .graph import GraphStore, TripleRecord, build_triples, canonicalize, export_json
from .ontology import Entity, EntityClass
from .training import TaggerModel

MAX_PAYLOAD_BYTES = 1_000_000

_STATUS = {
    "bad_request": 400,
    "not_found": 404,
    "out_of_scope": 422,
    "model_missing": 503,
    "internal": 500,
}


class ApiError(Exception):
    def __init__(self, code: str, message: str, detail=None):
        assert code in _STATUS
        super().__init__(message)
        self.code = code
        self.message = message
        self.detail = detail

    def response(self) -> JSONResponse:
        body = {"code": self.code, "message": self.message, "detail": self.detail}
        return JSONResponse(status_code=_STATUS[self.code], content=body)


@dataclass
class AppState:
    store: GraphStore = field(default_factory=lambda: canonicalize(GraphStore()))
    model: Optional[TaggerModel] = None
    store_path: Optional[Path] = None
    ui_dir: Optional[Path] = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def persist(self) -> None:
        if self.store_path is None:
            return
        tmp = self.store_path.with_suffix(self.store_path.suffix + ".tmp")
        tmp.write_text(export_json(self.store), encoding="utf-8")
        tmp.replace(self.store_path)


def _tokenize_with_offsets(text: str, mode: str) -> List[tuple]:
    """(token, start, end) with codepoint offsets into the request text."""
    if mode == "char":
        return [(ch, i, i + 1) for i, ch in enumerate(text)]
    return [(m.group(0), m.start(), m.end()) for m in re.finditer(r"\S+", text)]


def _extract_spans(state: AppState, text: str) -> Dict:
    if state.model is None:
        raise ApiError("model_missing", "no extraction model is loaded")
    if not text or not text.strip():
        raise ApiError("bad_request", "text must be non-empty")
    mode = state.model.config.tokenizer
    toks = _tokenize_with_offsets(text, mode)
    try:
        labels, spans = state.model.decode([t[0] for t in toks])
    except ValueError as exc:
        raise ApiError("bad_request", str(exc)) from exc
    joiner = "" if mode == "char" else " "
    out_spans = []
    for s in spans:
        start = toks[s.start][1]
        end = toks[s.end - 1][2]
        out_spans.append({
            "start": start,
            "end": end,
            "class": s.cls.value,
            "text": joiner.join(t[0] for t in toks[s.start:s.end]),
        })
    return {"spans": out_spans, "labels": labels}


def _records_from_payload(state: AppState, payload: Dict) -> List[TripleRecord]:
    records: List[TripleRecord] = []
    for i, item in enumerate(payload.get("sentences", [])):
        provenance = item.get("id") or f"ingest-{i}"
        if "tokens" in item and "labels" in item:
            try:
                sentence = LabeledSentence.from_strings(item["tokens"], item["labels"])
            except (BioError, ValueError) as exc:
                raise ApiError("bad_request", f"sentence {i}: {exc}") from exc
            records.extend(build_triples(sentence, provenance))
        elif "text" in item:
            extraction = _extract_spans(state, item["text"])
            entities = [Entity(s["text"], EntityClass(s["class"])) for s in extraction["spans"]]
            records.extend(build_triples(entities, provenance))
        else:
            raise ApiError("bad_request", f"sentence {i} needs tokens+labels or text")
    for i, item in enumerate(payload.get("triples", [])):
        try:
            records.append(TripleRecord(
                head=Entity(item["head"]["text"], EntityClass(item["head"]["class"])),
                relation=item["relation"],
                tail=Entity(item["tail"]["text"], EntityClass(item["tail"]["class"])),
                provenance=item.get("provenance", f"triple-{i}"),
            ))
        except (KeyError, ValueError, TypeError) as exc:
            raise ApiError("bad_request", f"triple {i}: {exc}") from exc
    return records


def create_app(state: Optional[AppState] = None) -> FastAPI:
    state = state or AppState()
    app = FastAPI(title="iskg", docs_url=None, redoc_url=None)
    app.state.iskg = state

    @app.exception_handler(ApiError)
    async def on_api_error(request: Request, exc: ApiError):
        return exc.response()

    @app.exception_handler(Exception)
    async def on_unexpected(request: Request, exc: Exception):
        return ApiError("internal", "internal error").response()

    @app.middleware("http")
    async def payload_cap(request: Request, call_next):
        length = request.headers.get("content-length")
        if length and int(length) > MAX_PAYLOAD_BYTES:
            return ApiError("bad_request", "payload exceeds 1 MB cap").response()
        return await call_next(request)

    async def parse_json(request: Request) -> Dict:
        body = await request.body()
        if len(body) > MAX_PAYLOAD_BYTES:
            raise ApiError("bad_request", "payload exceeds 1 MB cap")
        try:
            obj = json.loads(body or b"{}")
        except json.JSONDecodeError as exc:
            raise ApiError("bad_request", f"invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ApiError("bad_request", "payload must be a JSON object")
        return obj

    @app.post("/extract")
    async def extract(request: Request):
        payload = await parse_json(request)
        return _extract_spans(state, payload.get("text", ""))

    @app.post("/ingest")
    async def ingest(request: Request):
        payload = await parse_json(request)
        records = _records_from_payload(state, payload)
        with state.lock:
            before = state.store.stats()
            state.store.add_triples(records)
            canonicalize(state.store)
            after = state.store.stats()
            state.persist()
        return {"nodes_added": after["nodes"] - before["nodes"],
                "edges_added": after["edges"] - before["edges"]}

    @app.get("/graph/node/{node_id}")
    async def graph_node(node_id: str):
        node = state.store.node_by_id(node_id)
        if node is None:
            raise ApiError("not_found", f"unknown node {node_id!r}")
        body = node.to_json()
        body["out_degree"] = node.out_degree
        body["in_degree"] = node.in_degree
        return body

    @app.get("/graph/neighbors/{node_id}")
    async def graph_neighbors(node_id: str, relation: Optional[str] = None):
        node = state.store.node_by_id(node_id)
        if node is None:
            raise ApiError("not_found", f"unknown node {node_id!r}")
        def render(edges, end):
            return [{"relation": e.relation,
                     "node": state.store.nodes[getattr(e, end)].to_json(),
                     "provenance": list(e.provenance)} for e in edges]
        return {
            "node": node.to_json(),
            "out": render(state.store.out_edges(node_id, relation), "tail"),
            "in": render(state.store.in_edges(node_id, relation), "head"),
        }

    @app.get("/graph/retrieve")
    async def graph_retrieve(entity: str = ""):
        if not entity.strip():
            raise ApiError("bad_request", "entity query parameter is required")
        return apps.retrieve(state.store, entity).to_json()

    @app.post("/qas")
    async def qas(request: Request):
        payload = await parse_json(request)
        question = payload.get("question", "")
        k = payload.get("k", 3)
        try:
            result = apps.answer(state.store, question, k=k, extractor=_model_extractor(state))
        except ValueError as exc:
            raise ApiError("bad_request", str(exc)) from exc
        if result.status == "refused":
            raise ApiError("out_of_scope", result.message, detail=result.to_json())
        if result.status == "not_found":
            raise ApiError("not_found", result.message, detail=result.to_json())
        return result.to_json()

    @app.get("/paths/trace")
    async def paths_trace(node: str = "", depth: int = 12):
        if not node.strip():
            raise ApiError("bad_request", "node query parameter is required")
        try:
            paths = apps.trace_back(state.store, node, depth_limit=depth)
        except apps.NodeNotFound:
            raise ApiError("not_found", f"unknown node {node!r}")
        return {"paths": [p.to_json() for p in paths]}

    @app.get("/paths/inferred")
    async def paths_inferred():
        return {"paths": [p.to_json() for p in apps.infer_paths(state.store)]}

    if state.ui_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(state.ui_dir), html=True), name="ui")

    return app


def _model_extractor(state: AppState):
    """Prefer the trained tagger for QAS entity extraction; entities that do
    not resolve to graph nodes still fall back to the vocabulary matcher."""
    if state.model is None:
        return None
    model = state.model
    fallback = apps.vocabulary_extractor(state.store)

    def extract(question: str) -> List[str]:
        mode = model.config.tokenizer
        toks = _tokenize_with_offsets(question, mode)
        joiner = "" if mode == "char" else " "
        _, spans = model.decode([t[0] for t in toks])
        texts = [joiner.join(t[0] for t in toks[s.start:s.end]) for s in spans]
        resolved = [t for t in texts if state.store.nodes_by_text(t)]
        return resolved or fallback(question)

    return extract
