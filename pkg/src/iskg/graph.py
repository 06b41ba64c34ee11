"""Knowledge-graph storage: triple construction from labeled sentences,
exact-match canonicalization, the in-memory property graph, and
deterministic Cypher / JSON exports.

Nodes are content addressed: the id is a stable hash of the NFC-normalized,
whitespace-trimmed surface text plus the entity class, so identical mentions
merge structurally. Edges come in two families: role edges (zeta -[role]->
eta, one per element) and LEADS_TO chain edges linking each element's eta to
the next element's zeta, which make propagation paths traversable.
"""

from __future__ import annotations

import hashlib
import json
import unicodedata
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

from .corpus import LabeledSentence, Span, bio_decode
from .ontology import (
    ETA_CLASSES,
    ROLE_CHAIN,
    SYSTEM_ZETA,
    ZETA_CLASSES,
    ElementRole,
    Entity,
    EntityClass,
)

LEADS_TO = "LEADS_TO"
ROLE_RELATIONS = tuple(r.value for r in ROLE_CHAIN)
ALL_RELATIONS = ROLE_RELATIONS + (LEADS_TO,)


def normalize_text(text: str) -> str:
    return unicodedata.normalize("NFC", text).strip()


def node_id(text: str, cls: EntityClass) -> str:
    key = f"{cls.value}\x1f{normalize_text(text)}".encode("utf-8")
    return hashlib.sha1(key).hexdigest()[:16]


@dataclass
class IskNode:
    id: str
    text: str
    cls: EntityClass
    out_degree: int = 0
    in_degree: int = 0

    def to_json(self) -> dict:
        return {"id": self.id, "text": self.text, "class": self.cls.value}


@dataclass(frozen=True)
class TripleRecord:
    """One pre-canonicalization triple with its source sentence id."""

    head: Entity
    relation: str
    tail: Entity
    provenance: str
    partial: bool = False

    def __post_init__(self):
        if self.relation not in ALL_RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")


@dataclass
class IskEdge:
    head: str
    relation: str
    tail: str
    provenance: Tuple[str, ...]

    def key(self) -> Tuple[str, str, str]:
        return (self.head, self.relation, self.tail)


class GraphStore:
    """Property graph with adjacency and provenance indexes.

    Concurrent reads are safe; ingest and canonicalize need exclusive access.
    """

    def __init__(self):
        self.nodes: Dict[str, IskNode] = {}
        self.edges: List[IskEdge] = []
        self.canonical = False
        self._out: Dict[str, List[int]] = {}
        self._in: Dict[str, List[int]] = {}
        self._by_provenance: Dict[str, List[int]] = {}
        self._by_text: Dict[str, List[str]] = {}

    # -- mutation --------------------------------------------------------

    def _ensure_node(self, ent: Entity) -> IskNode:
        nid = node_id(ent.text, ent.cls)
        node = self.nodes.get(nid)
        if node is None:
            node = IskNode(id=nid, text=normalize_text(ent.text), cls=ent.cls)
            self.nodes[nid] = node
            self._by_text.setdefault(node.text, []).append(nid)
        return node

    def _index_edge(self, idx: int) -> None:
        e = self.edges[idx]
        self._out.setdefault(e.head, []).append(idx)
        self._in.setdefault(e.tail, []).append(idx)
        for p in e.provenance:
            self._by_provenance.setdefault(p, []).append(idx)
        self.nodes[e.head].out_degree += 1
        self.nodes[e.tail].in_degree += 1

    def add_triples(self, records: Iterable[TripleRecord]) -> None:
        for rec in records:
            head = self._ensure_node(rec.head)
            tail = self._ensure_node(rec.tail)
            if rec.relation in ROLE_RELATIONS and head.id == tail.id:
                raise ValueError(f"role edge {rec.relation} may not be a self-loop ({head.text!r})")
            self.edges.append(IskEdge(head=head.id, relation=rec.relation, tail=tail.id,
                                      provenance=(rec.provenance,)))
            self._index_edge(len(self.edges) - 1)
        self.canonical = False

    def _rebuild_indexes(self) -> None:
        self._out, self._in, self._by_provenance = {}, {}, {}
        for node in self.nodes.values():
            node.out_degree = 0
            node.in_degree = 0
        for i in range(len(self.edges)):
            self._index_edge(i)

    # -- queries ----------------------------------------------------------

    def node_by_id(self, nid: str) -> Optional[IskNode]:
        return self.nodes.get(nid)

    def nodes_by_text(self, text: str) -> List[IskNode]:
        ids = self._by_text.get(normalize_text(text), [])
        return sorted((self.nodes[i] for i in ids), key=lambda n: (n.cls.value, n.id))

    def out_edges(self, nid: str, relation: Optional[str] = None) -> List[IskEdge]:
        out = [self.edges[i] for i in self._out.get(nid, [])]
        return [e for e in out if relation is None or e.relation == relation]

    def in_edges(self, nid: str, relation: Optional[str] = None) -> List[IskEdge]:
        ine = [self.edges[i] for i in self._in.get(nid, [])]
        return [e for e in ine if relation is None or e.relation == relation]

    def edges_of_provenance(self, provenance: str) -> List[IskEdge]:
        return [self.edges[i] for i in self._by_provenance.get(provenance, [])]

    def provenance_ids(self) -> List[str]:
        return sorted(self._by_provenance)

    def provenances_of(self, nid: str) -> List[str]:
        seen: Dict[str, None] = {}
        for e in self.out_edges(nid) + self.in_edges(nid):
            for p in e.provenance:
                seen.setdefault(p, None)
        return sorted(seen)

    def stats(self) -> Dict[str, int]:
        return {"nodes": len(self.nodes), "edges": len(self.edges)}


# -- triple construction -------------------------------------------------------

_RoleAssignment = List[Tuple[ElementRole, Entity, Entity]]


def _pair_elements(entities: Sequence[Entity]) -> List[Tuple[Entity, Entity]]:
    """Pair zeta mentions with the eta that follows each of them.

    A trailing eta with no open zeta (a suggestion naming no equipment) is
    anchored on the reserved SYSTEM zeta; any other stray mention is dropped.
    """
    pairs: List[Tuple[Entity, Entity]] = []
    pending: Optional[Entity] = None
    for i, ent in enumerate(entities):
        if ent.cls in ZETA_CLASSES:
            pending = ent  # consecutive zetas: the earlier one is stray
        elif ent.cls in ETA_CLASSES:
            if pending is not None:
                pairs.append((pending, ent))
                pending = None
            elif i == len(entities) - 1:
                pairs.append((SYSTEM_ZETA, ent))
    return pairs


def _assign_roles(pairs: Sequence[Tuple[Entity, Entity]]) -> _RoleAssignment:
    """Outside-in role assignment: cause and deviation from the front,
    suggestion and consequence from the back, middles in between. With fewer
    than five elements the front assignments win the conflicts."""
    m = len(pairs)
    roles: List[Optional[ElementRole]] = [None] * m
    if m >= 1:
        roles[0] = ElementRole.IC
    if m >= 2:
        roles[1] = ElementRole.D
    if m >= 3 and roles[m - 1] is None:
        roles[m - 1] = ElementRole.S
    if m >= 4 and roles[m - 2] is None:
        roles[m - 2] = ElementRole.C
    for i in range(m):
        if roles[i] is None:
            roles[i] = ElementRole.ME
    return [(roles[i], pairs[i][0], pairs[i][1]) for i in range(m)]


def sentence_entities(sentence: LabeledSentence, joiner: Optional[str] = None) -> List[Entity]:
    """Decode spans and render their surface text.

    joiner None means auto: codepoint-tokenized sentences join with "",
    pseudo-word sentences with a single space.
    """
    if joiner is None:
        joiner = "" if all(len(t.text) == 1 for t in sentence.tokens) else " "
    out = []
    for span in bio_decode(sentence.labels):
        text = joiner.join(t.text for t in sentence.tokens[span.start:span.end])
        out.append(Entity(text, span.cls))
    return out


def build_triples(source: Union[LabeledSentence, Sequence[Entity]], provenance: str,
                  joiner: Optional[str] = None) -> List[TripleRecord]:
    """Construct role triples and LEADS_TO chain triples for one description.

    A full event (at least five elements) yields one role triple per element
    plus a chain triple between each consecutive pair; shorter inputs yield
    only the role triples for what exists, flagged partial, and no chain.
    """
    if isinstance(source, LabeledSentence):
        entities = sentence_entities(source, joiner)
    else:
        entities = list(source)
    assigned = _assign_roles(_pair_elements(entities))
    partial = len(assigned) < 5
    records: List[TripleRecord] = []
    for role, zeta, eta in assigned:
        records.append(TripleRecord(head=zeta, relation=role.value, tail=eta,
                                    provenance=provenance, partial=partial))
    if not partial:
        for (_, _, eta), (_, zeta_next, _) in zip(assigned[:-1], assigned[1:]):
            records.append(TripleRecord(head=eta, relation=LEADS_TO, tail=zeta_next,
                                        provenance=provenance))
    return records


def canonicalize(store: GraphStore) -> GraphStore:
    """Collapse duplicate (head, relation, tail) edges, unioning provenance
    multisets. Node merging is structural (content-addressed ids); surface
    variants are deliberately NOT fuzzy-merged, every distinct wording keeps
    its own node. Idempotent."""
    merged: Dict[Tuple[str, str, str], List[str]] = {}
    for e in store.edges:
        merged.setdefault(e.key(), []).extend(e.provenance)
    store.edges = [
        IskEdge(head=h, relation=r, tail=t, provenance=tuple(sorted(provs)))
        for (h, r, t), provs in sorted(merged.items())
    ]
    store._rebuild_indexes()
    store.canonical = True
    return store


# -- export / import ------------------------------------------------------------

def _cypher_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_cypher(store: GraphStore) -> str:
    """One MERGE line per node, one MATCH+MERGE line per edge, sorted, so
    identical stores export byte-identical scripts."""
    if not store.canonical:
        raise ValueError("export requires a canonicalized store")
    lines: List[str] = []
    for nid in sorted(store.nodes):
        n = store.nodes[nid]
        lines.append(f"MERGE (:`{n.cls.value}` {{id: {_cypher_quote(n.id)}, "
                     f"text: {_cypher_quote(n.text)}}});")
    for e in store.edges:  # canonicalize() already sorted by (head, rel, tail)
        provs = ", ".join(_cypher_quote(p) for p in e.provenance)
        lines.append(
            f"MATCH (h {{id: {_cypher_quote(e.head)}}}) "
            f"MATCH (t {{id: {_cypher_quote(e.tail)}}}) "
            f"MERGE (h)-[:`{e.relation}` {{provenance: [{provs}]}}]->(t);")
    return "\n".join(lines) + ("\n" if lines else "")


SCHEMA_VERSION = 1


def export_json(store: GraphStore) -> str:
    obj = {
        "version": SCHEMA_VERSION,
        "canonical": store.canonical,
        "nodes": [store.nodes[nid].to_json() for nid in sorted(store.nodes)],
        "edges": [
            {"head": e.head, "relation": e.relation, "tail": e.tail,
             "provenance": list(e.provenance)}
            for e in sorted(store.edges, key=IskEdge.key)
        ],
    }
    return json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def import_json(text: str) -> GraphStore:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed graph JSON: {exc}") from exc
    if obj.get("version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported graph schema version {obj.get('version')!r}")
    store = GraphStore()
    for n in obj.get("nodes", []):
        node = IskNode(id=n["id"], text=n["text"], cls=EntityClass(n["class"]))
        if node_id(node.text, node.cls) != node.id:
            raise ValueError(f"node id {node.id!r} does not match its content")
        store.nodes[node.id] = node
        store._by_text.setdefault(node.text, []).append(node.id)
    for e in obj.get("edges", []):
        if e["head"] not in store.nodes or e["tail"] not in store.nodes:
            raise ValueError(f"dangling edge {e['head']} -{e['relation']}-> {e['tail']}")
        if e["relation"] not in ALL_RELATIONS:
            raise ValueError(f"unknown relation {e['relation']!r}")
        store.edges.append(IskEdge(head=e["head"], relation=e["relation"], tail=e["tail"],
                                   provenance=tuple(e.get("provenance", ()))))
    store._rebuild_indexes()
    store.canonical = bool(obj.get("canonical", False))
    return store


def ingest_sentences(store: GraphStore, sentences: Iterable[Tuple[str, LabeledSentence]],
                     joiner: Optional[str] = None) -> None:
    """Build and add triples for (provenance_id, sentence) pairs."""
    for provenance, sentence in sentences:
        store.add_triples(build_triples(sentence, provenance, joiner))
