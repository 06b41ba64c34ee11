"""Dataset handling: tokenization, BIO encoding/decoding, corpus files,
train/val/test splitting, and a grammar-driven synthetic corpus generator.

The on-disk corpus format is UTF-8 ``token<TAB>label`` lines with a blank
line between sentences. Natural text is tokenized per Unicode codepoint
(the usual convention for Chinese annotation); the synthetic generator
emits whitespace-separated pseudo-word tokens, treated as atomic.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .ontology import (
    ROLE_CHAIN,
    ElementRole,
    Entity,
    EntityClass,
    HazardElement,
    HazardEvent,
    ZetaEta,
    make_event,
    zeta_eta,
)

# label set: O plus B-/I- for each of the five entity classes (11 total)
LABELS: Tuple[str, ...] = ("O",) + tuple(
    f"{p}-{cls.bio_prefix}" for cls in (
        EntityClass.EQUIPMENT, EntityClass.PROCESS_LABEL, EntityClass.CONSEQUENCE,
        EntityClass.MATERIAL, EntityClass.STATE,
    ) for p in ("B", "I")
)
LABEL_TO_ID: Dict[str, int] = {lab: i for i, lab in enumerate(LABELS)}
N_LABELS = len(LABELS)


class BioError(ValueError):
    """Ill-formed BIO label sequence (strict: no silent repair)."""

    def __init__(self, message: str, position: Optional[int] = None):
        super().__init__(message)
        self.position = position


class ParseError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class Token:
    text: str
    index: int

    def __post_init__(self):
        if not self.text:
            raise ValueError("token text must be non-empty")
        if self.index < 0:
            raise ValueError("token index must be non-negative")


@dataclass(frozen=True)
class Span:
    """Token-index span, end exclusive."""

    start: int
    end: int
    cls: EntityClass


def validate_bio(labels: Sequence[str]) -> None:
    """Raise BioError unless `labels` is a well-formed BIO sequence."""
    prev = "O"
    for i, lab in enumerate(labels):
        if lab not in LABEL_TO_ID:
            raise BioError(f"unknown label {lab!r}", i)
        if lab.startswith("I-"):
            cls = lab[2:]
            if prev == "O" or prev[2:] != cls:
                raise BioError(f"I-{cls} at position {i} follows {prev!r}", i)
        prev = lab


@dataclass(frozen=True)
class LabeledSentence:
    tokens: Tuple[Token, ...]
    labels: Tuple[str, ...]

    def __post_init__(self):
        if len(self.tokens) != len(self.labels):
            raise ValueError(f"{len(self.tokens)} tokens vs {len(self.labels)} labels")
        for i, tok in enumerate(self.tokens):
            if tok.index != i:
                raise ValueError(f"token index {tok.index} at position {i}")
        validate_bio(self.labels)

    @classmethod
    def from_strings(cls, tokens: Sequence[str], labels: Sequence[str]) -> "LabeledSentence":
        return cls(tuple(Token(t, i) for i, t in enumerate(tokens)), tuple(labels))

    @property
    def texts(self) -> Tuple[str, ...]:
        return tuple(t.text for t in self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


def tokenize(text: str) -> List[Token]:
    """Per-codepoint tokenization for natural (e.g. Chinese) text."""
    return [Token(ch, i) for i, ch in enumerate(text)]


def tokenize_words(text: str) -> List[Token]:
    """Whitespace tokenization for pseudo-word corpora."""
    return [Token(w, i) for i, w in enumerate(text.split())]


def bio_encode(n_tokens: int, spans: Sequence[Span | Tuple[int, int, EntityClass]]) -> List[str]:
    """Span start gets B-class, interior I-class, everything else O."""
    norm = [s if isinstance(s, Span) else Span(*s) for s in spans]
    labels = ["O"] * n_tokens
    occupied = [False] * n_tokens
    for s in sorted(norm, key=lambda s: s.start):
        if not (0 <= s.start < s.end <= n_tokens):
            raise ValueError(f"span ({s.start}, {s.end}) out of bounds for {n_tokens} tokens")
        if any(occupied[s.start:s.end]):
            raise ValueError(f"overlapping span at ({s.start}, {s.end})")
        for i in range(s.start, s.end):
            occupied[i] = True
        labels[s.start] = f"B-{s.cls.bio_prefix}"
        for i in range(s.start + 1, s.end):
            labels[i] = f"I-{s.cls.bio_prefix}"
    return labels


def bio_decode(labels: Sequence[str]) -> List[Span]:
    """Maximal B..I runs become spans; ill-formed input raises BioError."""
    validate_bio(labels)
    spans: List[Span] = []
    start = None
    cls: Optional[EntityClass] = None
    for i, lab in enumerate(labels):
        if lab == "O":
            if start is not None:
                spans.append(Span(start, i, cls))
                start, cls = None, None
        elif lab.startswith("B-"):
            if start is not None:
                spans.append(Span(start, i, cls))
            start, cls = i, EntityClass.from_bio_prefix(lab[2:])
        # I- continues the open span (validate_bio guarantees the class matches)
    if start is not None:
        spans.append(Span(start, len(labels), cls))
    return spans


@dataclass
class Dataset:
    """Sentences plus named split index lists (train/val/test)."""

    sentences: List[LabeledSentence]
    splits: Dict[str, Tuple[int, ...]] = field(default_factory=dict)

    def subset(self, name: str) -> List[LabeledSentence]:
        return [self.sentences[i] for i in self.splits.get(name, ())]

    def __len__(self) -> int:
        return len(self.sentences)


def parse_corpus(text: str) -> Dataset:
    """Parse token<TAB>label lines; blank line separates sentences."""
    sentences: List[LabeledSentence] = []
    tokens: List[str] = []
    labels: List[str] = []
    sentence_start_line = 1

    def flush(line_no: int) -> None:
        nonlocal tokens, labels
        if not tokens:
            return
        try:
            sentences.append(LabeledSentence.from_strings(tokens, labels))
        except BioError as exc:
            bad = sentence_start_line + (exc.position or 0)
            raise ParseError(str(exc), bad) from exc
        tokens, labels = [], []

    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush(line_no)
            sentence_start_line = line_no + 1
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise ParseError(f"expected token<TAB>label, got {line!r}", line_no)
        tok, lab = parts
        if lab not in LABEL_TO_ID:
            raise ParseError(f"unknown label {lab!r}", line_no)
        tokens.append(tok)
        labels.append(lab)
    flush(len(text.splitlines()) + 1)
    return Dataset(sentences)


def format_corpus(dataset: Dataset) -> str:
    blocks = []
    for s in dataset.sentences:
        blocks.append("\n".join(f"{t.text}\t{lab}" for t, lab in zip(s.tokens, s.labels)))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def split(dataset: Dataset, ratio: Tuple[int, int, int] = (8, 1, 1), seed: int = 0) -> Dataset:
    """Deterministic shuffled split; sizes are floor(f*n)/floor(f*n)/rest."""
    n = len(dataset.sentences)
    if n < 10:
        raise ValueError(f"dataset too small to split: {n} sentences (need >= 10)")
    total = sum(ratio)
    n_train = int(n * ratio[0] / total)
    n_val = int(n * ratio[1] / total)
    order = list(range(n))
    random.Random(seed).shuffle(order)
    return Dataset(
        sentences=dataset.sentences,
        splits={
            "train": tuple(order[:n_train]),
            "val": tuple(order[n_train:n_train + n_val]),
            "test": tuple(order[n_train + n_val:]),
        },
    )


# -- synthetic corpus ---------------------------------------------------------

@dataclass
class SynthGrammar:
    """Vocabulary and chain templates for deterministic corpus generation.

    Every surface phrase is whitespace-split into atomic pseudo-word tokens;
    multi-word phrases exercise the I- labels. Generated sentences always
    realize a full cause -> deviation -> middle events -> consequence ->
    suggestion chain with one cause and one consequence, so the roles can be
    re-derived from the flat text alone.
    """

    vocab: Dict[EntityClass, List[str]]
    connectives: List[str]
    inner_connectives: List[str]
    max_middle_events: int = 3
    seed: int = 0

    def validate(self) -> None:
        for cls in EntityClass:
            if not self.vocab.get(cls):
                raise ValueError(f"grammar vocabulary for {cls.value} is empty")


def default_grammar(seed: int = 0) -> SynthGrammar:
    vocab = {
        EntityClass.EQUIPMENT: [
            "compressor", "circulating gas compressor", "alcohol separation tower",
            "knockout drum", "air cooler", "pipeline", "process pipeline", "valve",
            "heat exchanger", "synthesis reactor", "temperature controller",
            "standby pump", "fuel gas pipe network", "stripper", "deaerator",
            "fine desulfurization heater",
        ],
        EntityClass.PROCESS_LABEL: [
            "T-5753001", "C-5611101", "AE-5611101", "P-5301 A", "PV-0501",
            "PICS-0501 B", "T-5642103", "K-2201", "E-1108 C", "LV-3302",
        ],
        EntityClass.MATERIAL: [
            "syngas", "rich liquid", "mixed alcohol", "blowback gas",
            "saturated steam", "liquid ammonia", "heavy diesel",
            "demineralized water", "stabilized wax", "purified gas",
        ],
        EntityClass.STATE: [
            "overpressure", "surge", "water storage", "temperature too high",
            "temperature too low", "flow too low", "frozen and blocked",
            "opening too small", "mis-operation", "leakage", "level abnormal",
            "interlock", "pressure fluctuation", "feed unstable",
        ],
        EntityClass.CONSEQUENCE: [
            "damage", "rupture", "fire accident", "explosion",
            "harmful release", "unit shutdown", "casualties", "catastrophic damage",
        ],
    }
    return SynthGrammar(
        vocab=vocab,
        connectives=[",", "and", "then", "therefore"],
        inner_connectives=["", "is", "has"],
        seed=seed,
    )


_ZETA_CHOICES = {
    ElementRole.IC: (EntityClass.MATERIAL, EntityClass.EQUIPMENT),
    ElementRole.D: (EntityClass.EQUIPMENT, EntityClass.PROCESS_LABEL),
    ElementRole.ME: (EntityClass.EQUIPMENT, EntityClass.MATERIAL, EntityClass.PROCESS_LABEL),
    ElementRole.C: (EntityClass.EQUIPMENT, EntityClass.PROCESS_LABEL),
    ElementRole.S: (EntityClass.EQUIPMENT,),
}


def _realize_element(rng: random.Random, grammar: SynthGrammar, role: ElementRole) -> ZetaEta:
    zcls = rng.choice(_ZETA_CHOICES[role])
    ecls = EntityClass.CONSEQUENCE if role == ElementRole.C else EntityClass.STATE
    return zeta_eta(rng.choice(grammar.vocab[zcls]), zcls,
                    rng.choice(grammar.vocab[ecls]), ecls)


def generate_synthetic(grammar: SynthGrammar, n: int) -> Tuple[Dataset, List[HazardEvent]]:
    """Generate n labeled sentences with their gold hazard events.

    Sentence i and event i correspond; events carry synthetic HAZOP node ids.
    """
    grammar.validate()
    rng = random.Random(grammar.seed)
    sentences: List[LabeledSentence] = []
    events: List[HazardEvent] = []

    for i in range(n):
        me_count = rng.randint(1, grammar.max_middle_events)
        roles = [ElementRole.IC, ElementRole.D] + [ElementRole.ME] * me_count \
            + [ElementRole.C, ElementRole.S]
        elements = [HazardElement(r, _realize_element(rng, grammar, r)) for r in roles]

        tokens: List[str] = []
        spans: List[Span] = []
        for j, el in enumerate(elements):
            if j > 0:
                tokens.append(rng.choice(grammar.connectives))
            for ent in (el.pair.zeta, el.pair.eta):
                if ent is el.pair.eta:
                    inner = rng.choice(grammar.inner_connectives)
                    if inner:
                        tokens.append(inner)
                words = ent.text.split()
                spans.append(Span(len(tokens), len(tokens) + len(words), ent.cls))
                tokens.extend(words)
        labels = bio_encode(len(tokens), spans)
        sentences.append(LabeledSentence.from_strings(tokens, labels))
        events.append(make_event(f"NODE-{i:04d}", elements))

    return Dataset(sentences), events


def events_to_jsonl(events: Iterable[HazardEvent]) -> str:
    return "".join(json.dumps(ev.to_json(), ensure_ascii=False) + "\n" for ev in events)


def events_from_jsonl(text: str) -> List[HazardEvent]:
    return [HazardEvent.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]


class Vocab:
    """Token inventory with a reserved unknown id 0."""

    UNK = 0

    def __init__(self, tokens: Sequence[str]):
        self._tokens = ["<unk>"] + list(tokens)
        self._ids = {t: i for i, t in enumerate(self._tokens)}

    @classmethod
    def from_sentences(cls, sentences: Iterable[LabeledSentence]) -> "Vocab":
        seen: Dict[str, None] = {}
        for s in sentences:
            for tok in s.tokens:
                seen.setdefault(tok.text, None)
        return cls(list(seen))

    def __len__(self) -> int:
        return len(self._tokens)

    def id(self, token: str) -> int:
        return self._ids.get(token, self.UNK)

    def ids(self, tokens: Sequence[str]) -> List[int]:
        return [self.id(t) for t in tokens]

    @property
    def tokens(self) -> List[str]:
        return list(self._tokens)
