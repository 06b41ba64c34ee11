import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))  # shared oracles/fixture helpers

from iskg.graph import GraphStore, TripleRecord, build_triples, canonicalize
from iskg.ontology import Entity, EntityClass

EQU = EntityClass.EQUIPMENT
PLA = EntityClass.PROCESS_LABEL
MAT = EntityClass.MATERIAL
STA = EntityClass.STATE
CON = EntityClass.CONSEQUENCE


def _event(provenance, elements):
    """elements: [(zeta_text, zeta_cls, eta_text, eta_cls), ...] in order."""
    ents = []
    for zt, zc, et, ec in elements:
        ents.extend([Entity(zt, zc), Entity(et, ec)])
    return build_triples(ents, provenance=provenance)


def diamond_store():
    """Two events that differ only in their cause: the chains converge at the
    deviation and share everything downstream."""
    shared = [
        ("T-5642103", PLA, "pressure too low", STA),
        ("compressor", EQU, "surge", STA),
        ("air cooler", EQU, "damage", CON),
        ("temperature controller", EQU, "interlock", STA),
    ]
    store = GraphStore()
    store.add_triples(_event("ev1", [("pipeline", EQU, "water storage", STA)] + shared))
    store.add_triples(_event("ev2", [("valve", EQU, "opening too small", STA)] + shared))
    return canonicalize(store)


def ammonia_store():
    """Event A ends in the element (liquid ammonia, leakage); event B starts
    with the same element, so exactly one spliced path can be inferred."""
    store = GraphStore()
    store.add_triples(_event("evA", [
        ("pipeline", EQU, "corrosion", STA),
        ("storage tank", EQU, "pressure abnormal", STA),
        ("flange", EQU, "loose", STA),
        ("liquid ammonia", MAT, "leakage", CON),
        ("inspection team", EQU, "patrol", STA),
    ]))
    store.add_triples(_event("evB", [
        ("liquid ammonia", MAT, "leakage", CON),
        ("scrubber", EQU, "flow too low", STA),
        ("absorber", EQU, "level abnormal", STA),
        ("synthesis reactor", EQU, "explosion", CON),
        ("standby pump", EQU, "start", STA),
    ]))
    return canonicalize(store)


def compressor_store():
    """Retrieval fixture around the circulating gas compressor C-5611101."""
    store = GraphStore()
    store.add_triples(_event("ev1", [
        ("blowback gas", MAT, "flow abnormal", STA),
        ("C-5611101", PLA, "overpressure", STA),
        ("C-5611101", PLA, "surge", STA),
        ("fine desulfurization heater", EQU, "damage", CON),
        ("temperature controller", EQU, "interlock", STA),
    ]))
    store.add_triples(_event("ev2", [
        ("saturated steam", MAT, "pressure fluctuation", STA),
        ("C-5611101", PLA, "flow too low", STA),
        ("synthesis reactor", EQU, "feed unstable", STA),
        ("fine desulfurization heater", EQU, "damage", CON),
        ("standby pump", EQU, "compressor shutdown", STA),
    ]))
    return canonicalize(store)


def air_cooler_store():
    """QAS fixture: the oil and gas air cooler fails because the delivered
    oil and gas is too cold and the pipeline freezes; two suggestions."""
    role = [
        TripleRecord(Entity("oil and gas", MAT), "IC", Entity("temperature too low", STA), "qa1"),
        TripleRecord(Entity("AE-5611101", PLA), "D", Entity("cooling deviation", STA), "qa1"),
        TripleRecord(Entity("pipeline", EQU), "ME", Entity("frozen and blocked", STA), "qa1"),
        TripleRecord(Entity("oil and gas air cooler", EQU), "C", Entity("faulty", CON), "qa1"),
        TripleRecord(Entity("standby device", EQU), "S", Entity("start", STA), "qa1"),
        TripleRecord(Entity("pipeline", EQU), "S", Entity("dredge", STA), "qa1"),
    ]
    chain = [
        TripleRecord(Entity("temperature too low", STA), "LEADS_TO", Entity("AE-5611101", PLA), "qa1"),
        TripleRecord(Entity("cooling deviation", STA), "LEADS_TO", Entity("pipeline", EQU), "qa1"),
        TripleRecord(Entity("frozen and blocked", STA), "LEADS_TO", Entity("oil and gas air cooler", EQU), "qa1"),
        TripleRecord(Entity("faulty", CON), "LEADS_TO", Entity("standby device", EQU), "qa1"),
        TripleRecord(Entity("faulty", CON), "LEADS_TO", Entity("pipeline", EQU), "qa1"),
    ]
    store = GraphStore()
    store.add_triples(role + chain)
    return canonicalize(store)
