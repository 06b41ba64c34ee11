"""Model assembly (encoder -> BiLSTM -> CRF), the training loop, span-level
evaluation metrics, and checkpoint bundles.

Training groups same-length sentences into batches, sums the per-sentence
loss over each batch, and takes Adam steps; validation metrics are recorded
per epoch and the best-on-validation weights are restored at the end. Runs
are deterministic for a fixed seed: all randomness flows from forked streams
of the config seed.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import bilstm, crf, encoder
from .autodiff import Adam, Parameter, Rng, Tensor, load_checkpoint, load_into, matmul, save_checkpoint, sum_all
from .corpus import LABELS, LABEL_TO_ID, N_LABELS, BioError, Dataset, LabeledSentence, Span, Vocab, bio_decode
from .ontology import EntityClass


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    """Flat run configuration; every key may appear in the run config file."""

    epochs: int = 50
    batch_size: int = 64
    lr: float = 1e-3
    loss: str = "il"              # "mle" or "il"
    seed: int = 0
    tokenizer: str = "word"       # "word" (whitespace) or "char" (codepoint)
    # architecture
    d_tok: int = 768
    d_seg: int = 20
    d_pos: int = 128
    d_model: int = 768
    d_ff: int = 1024
    heads: int = 4
    layers: int = 2
    hidden: int = 128
    lstm_input: Optional[int] = None  # projection inserted when != d_model
    max_len: int = 128
    # attention noise
    sigma: float = 0.1
    noise_mode: str = "train-only"
    # perturbed loss
    il_alpha: float = 1.15
    il_beta: float = 1.0
    il_noise_scale: float = 0.1
    il_s_init: float = 0.0        # raw threshold init; s = sigmoid(il_s_init)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("epochs, batch_size and lr must be positive")
        if self.loss not in ("mle", "il"):
            raise ValueError(f"loss must be 'mle' or 'il', got {self.loss!r}")
        if self.tokenizer not in ("word", "char"):
            raise ValueError(f"tokenizer must be 'word' or 'char', got {self.tokenizer!r}")

    @classmethod
    def from_dict(cls, obj: Dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**obj)

    def to_dict(self) -> Dict:
        return dataclasses.asdict(self)


def desk_scale_config(**overrides) -> TrainConfig:
    """Small dimensions that train in minutes on a CPU."""
    base = dict(d_tok=64, d_seg=8, d_pos=32, d_model=64, d_ff=128, heads=4,
                layers=2, hidden=64, max_len=96, epochs=50, batch_size=64, lr=1e-3)
    base.update(overrides)
    return TrainConfig(**base)


class TaggerModel:
    """Encoder -> BiLSTM -> CRF with all weights derived from config.seed."""

    def __init__(self, config: TrainConfig, vocab: Vocab):
        self.config = config
        self.vocab = vocab
        root = Rng(config.seed)
        self.encoder = encoder.init_encoder(
            root.fork(0), vocab_size=len(vocab), max_len=config.max_len,
            layers=config.layers, d_model=config.d_model, d_ff=config.d_ff,
            heads=config.heads, d_tok=config.d_tok, d_seg=config.d_seg,
            d_pos=config.d_pos,
            noise=encoder.NoiseConfig(sigma=config.sigma, mode=config.noise_mode))
        lstm_input = config.lstm_input or config.d_model
        self.input_proj: Optional[Parameter] = None
        if lstm_input != config.d_model:
            self.input_proj = Parameter(
                root.fork(1).normal((config.d_model, lstm_input), scale=1.0 / np.sqrt(config.d_model)),
                "proj.lstm_in")
        self.lstm_fwd = bilstm.init_lstm_params(root.fork(2), lstm_input, config.hidden, "lstm.fwd")
        self.lstm_bwd = bilstm.init_lstm_params(root.fork(3), lstm_input, config.hidden, "lstm.bwd")
        self.crf = crf.init_crf_params(root.fork(4), 2 * config.hidden, N_LABELS)
        self.il = crf.make_il_config(alpha=config.il_alpha, beta=config.il_beta,
                                     noise_scale=config.il_noise_scale,
                                     s_init=config.il_s_init)
        self.noise_rng = root.fork(5)
        self.il_rng = root.fork(6)

    def parameters(self) -> List[Parameter]:
        out = encoder.encoder_parameters(self.encoder)
        if self.input_proj is not None:
            out.append(self.input_proj)
        out += bilstm.lstm_params_list(self.lstm_fwd)
        out += bilstm.lstm_params_list(self.lstm_bwd)
        out += [self.crf.w_emit, self.crf.b_emit, self.crf.transitions, self.il.s_raw]
        return out

    def emissions(self, token_ids, training: bool = False) -> Tensor:
        x = encoder.encode(self.encoder, token_ids, rng=self.noise_rng, training=training)
        if self.input_proj is not None:
            x = matmul(x, self.input_proj)
        ctx = bilstm.bilstm_encode(x, self.lstm_fwd, self.lstm_bwd)
        return crf.project_emissions(self.crf, ctx)

    def decode(self, tokens: Sequence[str]) -> Tuple[List[str], List[Span]]:
        """Viterbi labels for a token sequence plus the strict span decode.

        Ill-formed predicted BIO yields zero spans (zero credit), never a
        repaired guess.
        """
        e = self.emissions(np.asarray(self.vocab.ids(list(tokens)), dtype=np.int64))
        path, _ = crf.viterbi(e, self.crf.transitions)
        labels = [LABELS[i] for i in path]
        try:
            spans = bio_decode(labels)
        except BioError:
            spans = []
        return labels, spans


def forward(model: TaggerModel, sentence) -> Tensor:
    """Per-token label scores (n, L) for one sentence at evaluation settings."""
    texts = sentence.texts if isinstance(sentence, LabeledSentence) else list(sentence)
    ids = np.asarray(model.vocab.ids(list(texts)), dtype=np.int64)
    return model.emissions(ids, training=False)


# -- metrics ------------------------------------------------------------------

@dataclass
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if (p + r) else 0.0


@dataclass
class Metrics:
    per_class: Dict[EntityClass, ClassCounts]
    total: ClassCounts

    def to_dict(self) -> Dict:
        def row(c: ClassCounts) -> Dict:
            return {"tp": c.tp, "fp": c.fp, "fn": c.fn,
                    "precision": c.precision, "recall": c.recall, "f1": c.f1}

        return {"total": row(self.total),
                **{cls.value: row(c) for cls, c in self.per_class.items()}}


def span_metrics(gold: Sequence[Sequence[Span]], pred: Sequence[Sequence[Span]]) -> Metrics:
    """Strict span match: (start, end, class) must all agree. Micro-averaged
    totals are the exact sums of the per-class confusion counts."""
    if len(gold) != len(pred):
        raise ValueError("gold and predicted span lists differ in length")
    per_class = {cls: ClassCounts() for cls in EntityClass}
    for g_spans, p_spans in zip(gold, pred):
        g_set, p_set = set(g_spans), set(p_spans)
        for s in p_set & g_set:
            per_class[s.cls].tp += 1
        for s in p_set - g_set:
            per_class[s.cls].fp += 1
        for s in g_set - p_set:
            per_class[s.cls].fn += 1
    total = ClassCounts(
        tp=sum(c.tp for c in per_class.values()),
        fp=sum(c.fp for c in per_class.values()),
        fn=sum(c.fn for c in per_class.values()),
    )
    return Metrics(per_class=per_class, total=total)


def _length_batches(sentences: Sequence[LabeledSentence], indices: Sequence[int],
                    batch_size: int, rng: Optional[Rng]) -> List[List[int]]:
    by_len: Dict[int, List[int]] = {}
    for i in indices:
        by_len.setdefault(len(sentences[i]), []).append(i)
    batches: List[List[int]] = []
    for length in sorted(by_len):
        group = by_len[length]
        if rng is not None:
            group = [group[j] for j in rng.permutation(len(group))]
        for lo in range(0, len(group), batch_size):
            batches.append(group[lo:lo + batch_size])
    if rng is not None:
        batches = [batches[j] for j in rng.permutation(len(batches))]
    return batches


def evaluate(model: TaggerModel, sentences: Sequence[LabeledSentence]) -> Metrics:
    """Viterbi decode, strict span decode, strict span match."""
    golds: List[List[Span]] = []
    preds: List[List[Span]] = []
    for batch in _length_batches(sentences, range(len(sentences)), 128, rng=None):
        ids = np.asarray([model.vocab.ids(sentences[i].texts) for i in batch], dtype=np.int64)
        e = model.emissions(ids, training=False)
        paths, _ = crf.viterbi_batch(e.data, model.crf.transitions)
        for row, i in enumerate(batch):
            labels = [LABELS[j] for j in paths[row]]
            try:
                spans = bio_decode(labels)
            except BioError:
                spans = []
            preds.append(spans)
            golds.append(bio_decode(sentences[i].labels))
    return span_metrics(golds, preds)


def train(model: TaggerModel, dataset: Dataset, config: TrainConfig,
          log_path: Optional[str | Path] = None) -> Tuple[TaggerModel, List[Dict]]:
    """Mini-batch training with per-epoch validation; returns the model with
    its best-on-validation weights restored plus the epoch history."""
    train_idx = dataset.splits.get("train", ())
    if not train_idx:
        raise ValueError("dataset has no train split")
    val_sents = dataset.subset("val")

    batch_rng = Rng(config.seed).fork(100)
    params = model.parameters()
    opt = Adam(params, lr=config.lr)
    history: List[Dict] = []
    best_f1 = -1.0
    best_snapshot: Optional[List[np.ndarray]] = None
    log_file = open(log_path, "w", encoding="utf-8") if log_path else None

    id_cache = {
        i: (np.asarray(model.vocab.ids(dataset.sentences[i].texts), dtype=np.int64),
            np.asarray([LABEL_TO_ID[lab] for lab in dataset.sentences[i].labels], dtype=np.int64))
        for i in train_idx
    }

    try:
        for epoch in range(config.epochs):
            total_loss = 0.0
            n_seen = 0
            for b, batch in enumerate(_length_batches(dataset.sentences, train_idx,
                                                      config.batch_size, batch_rng)):
                ids = np.stack([id_cache[i][0] for i in batch])
                y = np.stack([id_cache[i][1] for i in batch])
                opt.zero_grad()
                e = model.emissions(ids, training=True)
                if config.loss == "il":
                    losses = crf.loss_il(e, model.crf.transitions, y, model.il, model.il_rng)
                else:
                    losses = crf.loss_mle(e, model.crf.transitions, y)
                batch_loss = sum_all(losses)
                value = batch_loss.item()
                if not np.isfinite(value):
                    raise TrainingDiverged(epoch, b, value)
                batch_loss.backward()
                opt.step()
                total_loss += value
                n_seen += len(batch)

            record: Dict = {"epoch": epoch, "train_loss": total_loss / max(n_seen, 1)}
            if val_sents:
                metrics = evaluate(model, val_sents)
                record["val_f1"] = metrics.total.f1
                record["val"] = metrics.to_dict()
                if metrics.total.f1 > best_f1:
                    best_f1 = metrics.total.f1
                    best_snapshot = [p.data.copy() for p in params]
            history.append(record)
            if log_file:
                log_file.write(json.dumps(record) + "\n")
                log_file.flush()
    finally:
        if log_file:
            log_file.close()

    if best_snapshot is not None:
        for p, snap in zip(params, best_snapshot):
            p.data[...] = snap
    return model, history


# -- persistence --------------------------------------------------------------

BUNDLE_FILE = "bundle.json"
PARAMS_PREFIX = "params"


def save_bundle(model: TaggerModel, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model.parameters(), directory / PARAMS_PREFIX)
    bundle = {
        "format": 1,
        "config": model.config.to_dict(),
        "vocab": model.vocab.tokens[1:],  # UNK row is implicit
        "labels": list(LABELS),
    }
    (directory / BUNDLE_FILE).write_text(json.dumps(bundle, ensure_ascii=False, indent=2),
                                         encoding="utf-8")


def load_bundle(directory: str | Path) -> TaggerModel:
    directory = Path(directory)
    bundle = json.loads((directory / BUNDLE_FILE).read_text(encoding="utf-8"))
    if bundle.get("format") != 1:
        raise ValueError("unsupported bundle format")
    if bundle.get("labels") != list(LABELS):
        raise ValueError("bundle label inventory does not match this build")
    config = TrainConfig.from_dict(bundle["config"])
    model = TaggerModel(config, Vocab(bundle["vocab"]))
    load_into(model.parameters(), load_checkpoint(directory / PARAMS_PREFIX))
    return model
