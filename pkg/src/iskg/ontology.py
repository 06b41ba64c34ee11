"""Hazard-event ontology: element roles, entity classes, zeta/eta pairs,
topology classification, and event validation.

A hazard-propagation event is an ordered chain of elements, each a
(zeta, eta) pair: zeta is the equipment, process label, or material involved
and eta is its operating or physical state. The role chain is fixed:
cause (IC) -> deviation (D) -> middle events (ME) -> consequence (C) ->
suggestion (S). Everything here is an immutable value type.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple


class ElementRole(str, Enum):
    """The five roles of the propagation chain, in causal order."""

    IC = "IC"
    D = "D"
    ME = "ME"
    C = "C"
    S = "S"

    @property
    def rank(self) -> int:
        return _ROLE_RANK[self]

    @property
    def long_name(self) -> str:
        return _ROLE_NAMES[self]


ROLE_CHAIN: Tuple[ElementRole, ...] = (
    ElementRole.IC, ElementRole.D, ElementRole.ME, ElementRole.C, ElementRole.S,
)
_ROLE_RANK = {r: i for i, r in enumerate(ROLE_CHAIN)}
_ROLE_NAMES = {
    ElementRole.IC: "cause",
    ElementRole.D: "deviation",
    ElementRole.ME: "middle event",
    ElementRole.C: "consequence",
    ElementRole.S: "suggestion",
}


class EntityClass(str, Enum):
    EQUIPMENT = "Equipment"
    PROCESS_LABEL = "ProcessLabel"
    CONSEQUENCE = "Consequence"
    MATERIAL = "Material"
    STATE = "State"

    @property
    def bio_prefix(self) -> str:
        return _BIO_PREFIX[self]

    @classmethod
    def from_bio_prefix(cls, prefix: str) -> "EntityClass":
        try:
            return _PREFIX_CLASS[prefix]
        except KeyError:
            raise ValueError(f"unknown entity-class prefix {prefix!r}") from None


_BIO_PREFIX = {
    EntityClass.EQUIPMENT: "EQU",
    EntityClass.PROCESS_LABEL: "PLA",
    EntityClass.CONSEQUENCE: "CON",
    EntityClass.MATERIAL: "MAT",
    EntityClass.STATE: "STA",
}
_PREFIX_CLASS = {v: k for k, v in _BIO_PREFIX.items()}

# zeta names a thing (equipment, a process label standing for equipment, or a
# material); eta names its state or the resulting consequence.
ZETA_CLASSES = frozenset({EntityClass.EQUIPMENT, EntityClass.PROCESS_LABEL, EntityClass.MATERIAL})
ETA_CLASSES = frozenset({EntityClass.STATE, EntityClass.CONSEQUENCE})


class InvalidEventError(ValueError):
    """Raised when an operation receives a structurally impossible event."""


@dataclass(frozen=True)
class Entity:
    """One surface mention with its entity class."""

    text: str
    cls: EntityClass

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise InvalidEventError("entity text must be non-empty")


# Suggestions that name no target equipment are anchored on this reserved zeta.
SYSTEM_ZETA = Entity("SYSTEM", EntityClass.EQUIPMENT)


@dataclass(frozen=True)
class ZetaEta:
    zeta: Entity
    eta: Entity

    def __post_init__(self):
        if self.zeta.cls not in ZETA_CLASSES:
            raise InvalidEventError(f"zeta class must be one of {sorted(c.value for c in ZETA_CLASSES)}, "
                                    f"got {self.zeta.cls.value}")
        if self.eta.cls not in ETA_CLASSES:
            raise InvalidEventError(f"eta class must be one of {sorted(c.value for c in ETA_CLASSES)}, "
                                    f"got {self.eta.cls.value}")


def zeta_eta(zeta_text: str, zeta_cls: EntityClass, eta_text: str, eta_cls: EntityClass) -> ZetaEta:
    return ZetaEta(Entity(zeta_text, zeta_cls), Entity(eta_text, eta_cls))


@dataclass(frozen=True)
class HazardElement:
    role: ElementRole
    pair: ZetaEta


class Topology(str, Enum):
    SINGLE_STRING = "SingleString"
    REVERSE_TREE = "ReverseTree"
    POSITIVE_TREE = "PositiveTree"
    BOW_TIE = "BowTie"


@dataclass(frozen=True)
class HazardEvent:
    """One hazard-propagation event belonging to a HAZOP node."""

    node_id: str
    topology: Topology
    elements: Tuple[HazardElement, ...]

    def role_counts(self) -> Dict[ElementRole, int]:
        counts: Dict[ElementRole, int] = {}
        for el in self.elements:
            counts[el.role] = counts.get(el.role, 0) + 1
        return counts

    def to_json(self) -> dict:
        return {
            "node_id": self.node_id,
            "topology": self.topology.value,
            "elements": [
                {
                    "role": el.role.value,
                    "zeta": {"text": el.pair.zeta.text, "class": el.pair.zeta.cls.value},
                    "eta": {"text": el.pair.eta.text, "class": el.pair.eta.cls.value},
                }
                for el in self.elements
            ],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "HazardEvent":
        try:
            elements = tuple(
                HazardElement(
                    ElementRole(el["role"]),
                    zeta_eta(el["zeta"]["text"], EntityClass(el["zeta"]["class"]),
                             el["eta"]["text"], EntityClass(el["eta"]["class"])),
                )
                for el in obj["elements"]
            )
            return cls(node_id=obj["node_id"], topology=Topology(obj["topology"]), elements=elements)
        except (KeyError, TypeError) as exc:
            raise InvalidEventError(f"malformed hazard-event record: {exc}") from exc


def classify_topology(ic_count: int, c_count: int) -> Topology:
    """Topology is a pure function of cause/consequence multiplicities."""
    if ic_count < 1 or c_count < 1:
        raise InvalidEventError(f"event needs at least one cause and one consequence, "
                                f"got ic={ic_count}, c={c_count}")
    if ic_count == 1 and c_count == 1:
        return Topology.SINGLE_STRING
    if ic_count > 1 and c_count == 1:
        return Topology.REVERSE_TREE
    if ic_count == 1:
        return Topology.POSITIVE_TREE
    return Topology.BOW_TIE


def roles_of(topology: Topology) -> Dict[ElementRole, Tuple[int, Optional[int]]]:
    """Role template for a topology as {role: (min_count, max_count)}.

    max_count None means unbounded: middle events always, causes and
    consequences on the tree-like topologies.
    """
    ic_many = topology in (Topology.REVERSE_TREE, Topology.BOW_TIE)
    c_many = topology in (Topology.POSITIVE_TREE, Topology.BOW_TIE)
    return {
        ElementRole.IC: (2, None) if ic_many else (1, 1),
        ElementRole.D: (1, 1),
        ElementRole.ME: (1, None),
        ElementRole.C: (2, None) if c_many else (1, 1),
        ElementRole.S: (1, 1),
    }


def validate_event(event: HazardEvent) -> List[str]:
    """Return every violated invariant; an empty list means the event is ok.

    Violations are data, not failures: malformed events are reported, never
    raised, so callers can collect them across a corpus.
    """
    violations: List[str] = []
    roles = [el.role for el in event.elements]

    for i in range(1, len(roles)):
        if roles[i].rank < roles[i - 1].rank:
            violations.append(
                f"role order violated at position {i}: {roles[i - 1].value} before {roles[i].value}")

    counts = event.role_counts()
    for role in ROLE_CHAIN:
        if counts.get(role, 0) < 1:
            violations.append(f"missing {role.long_name}")
    if counts.get(ElementRole.D, 0) > 1:
        violations.append(f"multiple deviations ({counts[ElementRole.D]}); one deviation per event")

    ic, c = counts.get(ElementRole.IC, 0), counts.get(ElementRole.C, 0)
    if ic >= 1 and c >= 1:
        expected = classify_topology(ic, c)
        if expected != event.topology:
            violations.append(
                f"topology mismatch: counts imply {expected.value}, event says {event.topology.value}")

    return violations


def make_event(node_id: str, elements: Sequence[HazardElement]) -> HazardEvent:
    """Build an event with the topology its cause/consequence counts imply."""
    counts: Dict[ElementRole, int] = {}
    for el in elements:
        counts[el.role] = counts.get(el.role, 0) + 1
    topology = classify_topology(counts.get(ElementRole.IC, 0), counts.get(ElementRole.C, 0))
    return HazardEvent(node_id=node_id, topology=topology, elements=tuple(elements))
