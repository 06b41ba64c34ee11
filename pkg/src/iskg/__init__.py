"""iskg: HAZOP standardization, entity extraction, and safety knowledge graph."""

from .applications import answer, infer_paths, retrieve, trace_back
from .corpus import Dataset, LabeledSentence, Vocab, generate_synthetic, parse_corpus, split
from .graph import GraphStore, build_triples, canonicalize, export_cypher, export_json, import_json
from .ontology import (
    ElementRole,
    Entity,
    EntityClass,
    HazardElement,
    HazardEvent,
    Topology,
    ZetaEta,
    classify_topology,
    roles_of,
    validate_event,
)
from .training import TaggerModel, TrainConfig, evaluate, forward, load_bundle, save_bundle, train

__version__ = "0.1.0"

__all__ = [
    "ElementRole", "EntityClass", "Entity", "ZetaEta", "HazardElement", "HazardEvent",
    "Topology", "classify_topology", "validate_event", "roles_of",
    "Dataset", "LabeledSentence", "Vocab", "parse_corpus", "split", "generate_synthetic",
    "TaggerModel", "TrainConfig", "train", "evaluate", "forward", "save_bundle", "load_bundle",
    "GraphStore", "build_triples", "canonicalize", "export_cypher", "export_json", "import_json",
    "retrieve", "trace_back", "infer_paths", "answer",
    "__version__",
]
