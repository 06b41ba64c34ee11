"""Applications over the knowledge graph: entity retrieval, consequence
trace-back, cross-event propagation inference, and rule-template question
answering.

Everything here is read-only over a canonicalized store and deterministic:
neighbor groups, paths and answers come out sorted, so repeated calls and
re-built stores agree byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Set, Tuple

from .graph import LEADS_TO, GraphStore, IskEdge, IskNode
from .ontology import ZETA_CLASSES, ElementRole, EntityClass

HAZARD_RELATIONS = (ElementRole.D.value, ElementRole.ME.value, ElementRole.C.value)
EQUIPMENT_CLASSES = (EntityClass.EQUIPMENT, EntityClass.PROCESS_LABEL)


@dataclass
class RetrievalResult:
    """Neighborhood of one subject node, grouped the way operators ask:
    what can go wrong, what equipment is involved, which materials, and
    what the reports suggest."""

    status: str                      # "ok" or "not_found"
    subject: Optional[IskNode]
    hazards: List[IskNode] = field(default_factory=list)
    equipment: List[IskNode] = field(default_factory=list)
    materials: List[IskNode] = field(default_factory=list)
    suggestions: List[IskNode] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "subject": self.subject.to_json() if self.subject else None,
            "hazards": [n.to_json() for n in self.hazards],
            "equipment": [n.to_json() for n in self.equipment],
            "materials": [n.to_json() for n in self.materials],
            "suggestions": [n.to_json() for n in self.suggestions],
        }


def _sorted_nodes(nodes: Sequence[IskNode]) -> List[IskNode]:
    return sorted(nodes, key=lambda n: (n.text, n.cls.value))


def retrieve(store: GraphStore, entity_text: str) -> RetrievalResult:
    """Exact-match lookup plus fixed 1-2 hop neighbor patterns:

    - hazards: states reached by a D/ME/C role edge out of the subject
    - equipment / materials: nodes co-occurring in the subject's events
    - suggestions: S-edge states of those events
    """
    candidates = store.nodes_by_text(entity_text)
    if not candidates:
        return RetrievalResult(status="not_found", subject=None)
    zeta_first = [n for n in candidates if n.cls in ZETA_CLASSES] or candidates
    subject = zeta_first[0]

    hazards = {e.tail for e in store.out_edges(subject.id) if e.relation in HAZARD_RELATIONS}
    events = set(store.provenances_of(subject.id))
    cooccurring: Set[str] = set()
    suggestions: Set[str] = set()
    for p in events:
        for e in store.edges_of_provenance(p):
            cooccurring.add(e.head)
            cooccurring.add(e.tail)
            if e.relation == ElementRole.S.value:
                suggestions.add(e.tail)
    cooccurring.discard(subject.id)

    def pick(ids, classes) -> List[IskNode]:
        return _sorted_nodes([store.nodes[i] for i in ids if store.nodes[i].cls in classes])

    return RetrievalResult(
        status="ok",
        subject=subject,
        hazards=_sorted_nodes([store.nodes[i] for i in hazards]),
        equipment=pick(cooccurring, EQUIPMENT_CLASSES),
        materials=pick(cooccurring, (EntityClass.MATERIAL,)),
        suggestions=_sorted_nodes([store.nodes[i] for i in suggestions]),
    )


@dataclass
class PropagationPath:
    """Ordered cause-to-consequence node walk with the relation of every hop.
    kind "observed" paths come from single events; "inferred" paths splice
    two events at a shared element and list the (event_a, event_b, shared
    node) joins."""

    nodes: List[IskNode]
    kind: str
    relations: List[str] = field(default_factory=list)  # len(nodes) - 1 hops
    joins: List[Tuple[str, str, str]] = field(default_factory=list)

    def node_ids(self) -> Tuple[str, ...]:
        return tuple(n.id for n in self.nodes)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "nodes": [n.to_json() for n in self.nodes],
            "relations": list(self.relations),
            "joins": [{"event_a": a, "event_b": b, "shared": s} for a, b, s in self.joins],
        }


class NodeNotFound(KeyError):
    pass


def _resolve(store: GraphStore, node_ref: str) -> IskNode:
    node = store.node_by_id(node_ref)
    if node is not None:
        return node
    by_text = store.nodes_by_text(node_ref)
    if by_text:
        return by_text[0]
    raise NodeNotFound(node_ref)


def _heads_ic_edge(store: GraphStore, nid: str) -> bool:
    return bool(store.out_edges(nid, ElementRole.IC.value))


def _hop_relations(store: GraphStore, ids: Sequence[str]) -> List[str]:
    """Relation of each consecutive hop (parallel edges resolve by name)."""
    rels = []
    for a, b in zip(ids[:-1], ids[1:]):
        names = sorted(e.relation for e in store.out_edges(a) if e.tail == b)
        rels.append(names[0] if names else LEADS_TO)
    return rels


def trace_back(store: GraphStore, node_ref: str, depth_limit: int = 12) -> List[PropagationPath]:
    """All reverse walks from the given node back to cause elements.

    Walks run backward over both role and LEADS_TO edges (a chain alternates
    the two). A walk terminates, and is reported, when it reaches a node that
    heads an IC edge; walks that dead-end elsewhere are dropped. The visited
    set guarantees termination on cyclic graphs and no node repeats within a
    path.
    """
    target = _resolve(store, node_ref)
    results: Dict[Tuple[str, ...], PropagationPath] = {}
    # stack holds (node, reversed-path-so-far); paths never revisit a node
    stack: List[Tuple[str, Tuple[str, ...]]] = [(target.id, (target.id,))]
    while stack:
        nid, path = stack.pop()
        if _heads_ic_edge(store, nid) and len(path) > 1:
            ordered = tuple(reversed(path))
            if ordered not in results:
                results[ordered] = PropagationPath(
                    nodes=[store.nodes[i] for i in ordered], kind="observed",
                    relations=_hop_relations(store, ordered))
            continue
        if len(path) - 1 >= depth_limit:
            continue
        for e in store.in_edges(nid):
            if e.head in path:
                continue
            stack.append((e.head, path + (e.head,)))
    return sorted(results.values(),
                  key=lambda p: (len(p.nodes), tuple(n.text for n in p.nodes)))


_NEXT_ROLES: Mapping[Optional[str], Tuple[str, ...]] = {
    None: (ElementRole.IC.value,),
    ElementRole.IC.value: (ElementRole.D.value,),
    ElementRole.D.value: (ElementRole.ME.value, ElementRole.C.value),
    ElementRole.ME.value: (ElementRole.ME.value, ElementRole.C.value),
}


def event_chain(store: GraphStore, provenance: str) -> List[str]:
    """Reconstruct one event's propagation chain (cause zeta through
    consequence eta, suggestions excluded) from its provenance edges."""
    edges = store.edges_of_provenance(provenance)
    role_edges: Dict[str, List[IskEdge]] = {}
    leads: Dict[str, List[str]] = {}
    for e in edges:
        if e.relation == LEADS_TO:
            leads.setdefault(e.head, []).append(e.tail)
        else:
            role_edges.setdefault(e.head, []).append(e)

    ic_edges = [e for es in role_edges.values() for e in es if e.relation == ElementRole.IC.value]
    if not ic_edges:
        return []
    current = sorted(ic_edges, key=lambda e: (store.nodes[e.head].text,))[0]
    chain = [current.head, current.tail]
    prev_role = current.relation
    for _ in range(len(edges)):  # bounded: a chain cannot outgrow its edges
        if prev_role == ElementRole.C.value:
            break
        nexts = leads.get(current.tail, [])
        if not nexts:
            break
        step = None
        for nxt in sorted(nexts, key=lambda i: store.nodes[i].text):
            wanted = _NEXT_ROLES.get(prev_role, ())
            for e in sorted(role_edges.get(nxt, []), key=lambda e: wanted.index(e.relation)
                            if e.relation in wanted else 99):
                if e.relation in wanted:
                    step = e
                    break
            if step:
                break
        if step is None:
            break
        chain.extend([step.head, step.tail])
        prev_role = step.relation
        current = step
    return chain


def infer_paths(store: GraphStore) -> List[PropagationPath]:
    """Splice event pairs at a shared element: the same (zeta, eta) serving
    as consequence or middle event in one event and as cause or middle event
    in another. Only paths that are not already observed as a single event's
    chain are emitted; results are independent of ingestion order."""
    chains: Dict[str, List[str]] = {}
    for p in store.provenance_ids():
        chains[p] = event_chain(store, p)
    observed = {tuple(c) for c in chains.values() if c}

    out: Dict[Tuple[str, ...], PropagationPath] = {}
    src_roles = (ElementRole.C.value, ElementRole.ME.value)
    dst_roles = (ElementRole.IC.value, ElementRole.ME.value)
    for eta_id in sorted(store.nodes):
        incoming = store.in_edges(eta_id)
        upstream = [e for e in incoming if e.relation in src_roles]
        downstream = [e for e in incoming if e.relation in dst_roles]
        for e_a in upstream:
            for e_b in downstream:
                if e_a.head != e_b.head:
                    continue  # the whole element (zeta AND eta) must match
                for pa in e_a.provenance:
                    for pb in e_b.provenance:
                        if pa == pb:
                            continue
                        ca, cb = chains.get(pa, []), chains.get(pb, [])
                        key = _splice(ca, cb, e_a.head, eta_id)
                        if key is None or key in observed:
                            continue
                        path = out.get(key)
                        if path is None:
                            path = PropagationPath(
                                nodes=[store.nodes[i] for i in key], kind="inferred",
                                relations=_hop_relations(store, key))
                            out[key] = path
                        join = (pa, pb, eta_id)
                        if join not in path.joins:
                            path.joins.append(join)
    for path in out.values():
        path.joins.sort()
    return sorted(out.values(), key=lambda p: tuple(n.text for n in p.nodes))


def _splice(chain_a: List[str], chain_b: List[str], zeta: str, eta: str) -> Optional[Tuple[str, ...]]:
    def element_pos(chain):
        for i in range(0, len(chain) - 1, 2):
            if chain[i] == zeta and chain[i + 1] == eta:
                return i
        return None

    ia = element_pos(chain_a)
    ib = element_pos(chain_b)
    if ia is None or ib is None:
        return None
    spliced = tuple(chain_a[:ia + 2] + chain_b[ib + 2:])
    if spliced == tuple(chain_a) or spliced == tuple(chain_b):
        return None  # splice reproduces an input chain verbatim
    return spliced


# -- question answering ---------------------------------------------------------

SLOTS = ("cause", "deviation", "middle", "consequence", "suggestion")

DEFAULT_SLOT_KEYWORDS: Dict[str, Tuple[str, ...]] = {
    "cause": ("cause", "causes", "why", "reason", "原因", "为什么"),
    "deviation": ("deviation", "deviate", "偏差"),
    "middle": ("middle", "course", "过程", "中间"),
    "consequence": ("consequence", "consequences", "result", "impact", "后果", "结果", "影响"),
    "suggestion": ("suggestion", "suggestions", "recommend", "handle", "measure", "advice",
                   "建议", "处理", "措施", "怎么办"),
}

_SLOT_ROLE = {
    "cause": ElementRole.IC.value,
    "deviation": ElementRole.D.value,
    "middle": ElementRole.ME.value,
    "consequence": ElementRole.C.value,
    "suggestion": ElementRole.S.value,
}

REFUSAL_MESSAGE = "the scope of the question is not in line with industrial safety"


@dataclass
class AnswerItem:
    text: str
    score: float
    path: List[str]          # node ids of the event chain
    provenance: List[str]    # event ids backing the answer

    def to_json(self) -> dict:
        return {"text": self.text, "score": self.score,
                "path": list(self.path), "provenance": list(self.provenance)}


@dataclass
class Answer:
    question: str
    status: str              # "ok", "refused" or "not_found"
    answers: List[AnswerItem] = field(default_factory=list)
    message: str = ""
    entities: List[str] = field(default_factory=list)
    slots: List[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "question": self.question,
            "status": self.status,
            "answers": [a.to_json() for a in self.answers],
            "message": self.message,
            "entities": list(self.entities),
            "slots": list(self.slots),
        }


def vocabulary_extractor(store: GraphStore) -> Callable[[str], List[str]]:
    """Rule-based fallback extractor: longest non-overlapping matches of the
    graph's own node texts inside the question."""
    texts = sorted({n.text for n in store.nodes.values() if n.text != "SYSTEM"},
                   key=lambda t: (-len(t), t))

    def extract(question: str) -> List[str]:
        folded = question.casefold()
        occupied = [False] * len(folded)
        found: List[str] = []
        for text in texts:
            needle = text.casefold()
            start = 0
            while True:
                i = folded.find(needle, start)
                if i < 0:
                    break
                if not any(occupied[i:i + len(needle)]):
                    for j in range(i, i + len(needle)):
                        occupied[j] = True
                    found.append(text)
                start = i + 1
        return found

    return extract


def detect_slots(question: str, keywords: Optional[Mapping[str, Tuple[str, ...]]] = None) -> List[str]:
    table = keywords or DEFAULT_SLOT_KEYWORDS
    folded = question.casefold()
    slots = [slot for slot in SLOTS if any(k.casefold() in folded for k in table.get(slot, ()))]
    return slots or list(SLOTS)  # no keyword: fill every slot


def _event_slots(store: GraphStore, provenance: str) -> Dict[str, List[str]]:
    by_slot: Dict[str, List[str]] = {slot: [] for slot in SLOTS}
    for e in store.edges_of_provenance(provenance):
        if e.relation == LEADS_TO:
            continue
        for slot, role in _SLOT_ROLE.items():
            if e.relation == role:
                head, tail = store.nodes[e.head], store.nodes[e.tail]
                rendered = f"{head.text} {tail.text}" if head.text != "SYSTEM" else tail.text
                by_slot[slot].append(rendered)
    for slot in SLOTS:
        by_slot[slot].sort()
    return by_slot


def render_answer(slots: Sequence[str], filled: Mapping[str, List[str]]) -> str:
    parts = []
    for slot in SLOTS:
        if slot in slots and filled.get(slot):
            parts.append(f"{slot}: {', '.join(filled[slot])}")
    return "; ".join(parts)


def answer(store: GraphStore, question: str, k: int = 3,
           extractor: Optional[Callable[[str], List[str]]] = None,
           keywords: Optional[Mapping[str, Tuple[str, ...]]] = None) -> Answer:
    """Rule-template QA: extract entities, scope-check against the graph,
    map question keywords to answer slots, fill them from the entities'
    events, and return the top-k answers (shortest chain first, then best
    provenance support). Out-of-scope questions are refused outright."""
    if not question or not question.strip():
        raise ValueError("question must be non-empty")
    if k < 1:
        raise ValueError("k must be at least 1")

    extract = extractor or vocabulary_extractor(store)
    mentions = extract(question)
    nodes: List[IskNode] = []
    for text in mentions:
        nodes.extend(store.nodes_by_text(text))
    if not nodes:
        return Answer(question=question, status="refused", message=REFUSAL_MESSAGE,
                      entities=mentions)

    slots = detect_slots(question, keywords)
    events: Dict[str, None] = {}
    for node in nodes:
        for p in store.provenances_of(node.id):
            events.setdefault(p, None)

    items: List[AnswerItem] = []
    for p in events:
        filled = _event_slots(store, p)
        text = render_answer(slots, filled)
        if not text:
            continue
        chain = event_chain(store, p)
        support = min((len(e.provenance) for e in store.edges_of_provenance(p)), default=1)
        items.append(AnswerItem(
            text=text,
            score=round(support / max(len(chain), 1), 6),
            path=chain,
            provenance=[p],
        ))
    if not items:
        return Answer(question=question, status="not_found",
                      message="no recorded hazard event covers the question",
                      entities=mentions, slots=slots)

    items.sort(key=lambda it: (len(it.path), -it.score, it.text))
    return Answer(question=question, status="ok", answers=items[:k],
                  entities=mentions, slots=slots)
