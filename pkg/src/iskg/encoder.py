"""Transformer encoder with noise-biased self-attention.

Joint embeddings (token + segment + position tables of independent widths,
concatenated then projected to the model width) feed a stack of post-norm
transformer blocks. During training a fresh normal-distribution bias can be
added to the raw attention scores; it is sampled per forward pass, carries
no gradient, and is off at evaluation, so inference stays deterministic and
a zero sigma reproduces plain scaled-dot-product attention bitwise.

All operations accept a single sentence (n, d) or a same-length batch
(B, n, d).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .autodiff import (
    Array,
    Parameter,
    Rng,
    Tensor,
    add,
    concat,
    layer_norm,
    matmul,
    relu,
    scale,
    slice_axis,
    softmax,
    take_rows,
    transpose_last,
)

UNK_ID = 0

NOISE_MODES = ("train-only", "always", "off")


@dataclass
class NoiseConfig:
    """Normal bias on attention scores: n ~ N(0, sigma^2) per entry."""

    sigma: float = 0.1
    mode: str = "train-only"

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.mode not in NOISE_MODES:
            raise ValueError(f"mode must be one of {NOISE_MODES}")

    def active(self, training: bool) -> bool:
        if self.sigma == 0.0 or self.mode == "off":
            return False
        return self.mode == "always" or training


@dataclass
class EmbeddingTables:
    token: Parameter      # (vocab, d_tok)
    segment: Parameter    # (n_seg, d_seg)
    position: Parameter   # (max_len, d_pos)
    projection: Parameter  # (d_tok + d_seg + d_pos, d_model)

    def __post_init__(self):
        want = self.token.shape[1] + self.segment.shape[1] + self.position.shape[1]
        if self.projection.shape[0] != want:
            raise ValueError(f"projection expects {want} input dims, has {self.projection.shape[0]}")

    @property
    def vocab_size(self) -> int:
        return self.token.shape[0]

    @property
    def max_len(self) -> int:
        return self.position.shape[0]

    @property
    def d_model(self) -> int:
        return self.projection.shape[1]


@dataclass
class AttentionParams:
    """Per-head query/key/value projections, each (d_model, d_k)."""

    w_q: List[Parameter]
    w_k: List[Parameter]
    w_v: List[Parameter]

    def __post_init__(self):
        if not (len(self.w_q) == len(self.w_k) == len(self.w_v)):
            raise ValueError("head projection lists must have equal length")
        d_model = self.w_q[0].shape[0]
        d_k = self.w_q[0].shape[1]
        if d_model != self.heads * d_k:
            raise ValueError(f"d_k must be d_model/heads exactly: {d_model} vs {self.heads}x{d_k}")

    @property
    def heads(self) -> int:
        return len(self.w_q)

    @property
    def d_k(self) -> int:
        return self.w_q[0].shape[1]


@dataclass
class TransformerBlock:
    attention: AttentionParams
    w1: Parameter
    b1: Parameter
    w2: Parameter
    b2: Parameter
    ln1_gain: Parameter
    ln1_bias: Parameter
    ln2_gain: Parameter
    ln2_bias: Parameter


@dataclass
class EncoderParams:
    tables: EmbeddingTables
    blocks: List[TransformerBlock]
    noise: NoiseConfig = field(default_factory=NoiseConfig)


def init_embedding_tables(rng: Rng, vocab_size: int, max_len: int, d_tok: int = 768,
                          d_seg: int = 20, d_pos: int = 128, d_model: int = 768,
                          n_seg: int = 2, prefix: str = "emb") -> EmbeddingTables:
    pre = d_tok + d_seg + d_pos
    return EmbeddingTables(
        token=Parameter(rng.normal((vocab_size, d_tok), scale=0.1), f"{prefix}.token"),
        segment=Parameter(rng.normal((n_seg, d_seg), scale=0.1), f"{prefix}.segment"),
        position=Parameter(rng.normal((max_len, d_pos), scale=0.1), f"{prefix}.position"),
        projection=Parameter(rng.normal((pre, d_model), scale=1.0 / math.sqrt(pre)),
                             f"{prefix}.projection"),
    )


def init_block(rng: Rng, d_model: int, d_ff: int, heads: int, prefix: str) -> TransformerBlock:
    if d_model % heads != 0:
        raise ValueError(f"heads ({heads}) must divide d_model ({d_model})")
    d_k = d_model // heads
    s = 1.0 / math.sqrt(d_model)
    attn = AttentionParams(
        w_q=[Parameter(rng.normal((d_model, d_k), scale=s), f"{prefix}.h{h}.wq") for h in range(heads)],
        w_k=[Parameter(rng.normal((d_model, d_k), scale=s), f"{prefix}.h{h}.wk") for h in range(heads)],
        w_v=[Parameter(rng.normal((d_model, d_k), scale=s), f"{prefix}.h{h}.wv") for h in range(heads)],
    )
    return TransformerBlock(
        attention=attn,
        w1=Parameter(rng.normal((d_model, d_ff), scale=s), f"{prefix}.ffn.w1"),
        b1=Parameter(np.zeros(d_ff), f"{prefix}.ffn.b1"),
        w2=Parameter(rng.normal((d_ff, d_model), scale=1.0 / math.sqrt(d_ff)), f"{prefix}.ffn.w2"),
        b2=Parameter(np.zeros(d_model), f"{prefix}.ffn.b2"),
        ln1_gain=Parameter(np.ones(d_model), f"{prefix}.ln1.gain"),
        ln1_bias=Parameter(np.zeros(d_model), f"{prefix}.ln1.bias"),
        ln2_gain=Parameter(np.ones(d_model), f"{prefix}.ln2.gain"),
        ln2_bias=Parameter(np.zeros(d_model), f"{prefix}.ln2.bias"),
    )


def init_encoder(rng: Rng, vocab_size: int, max_len: int, layers: int, d_model: int,
                 d_ff: int, heads: int, d_tok: int = 768, d_seg: int = 20, d_pos: int = 128,
                 n_seg: int = 2, noise: Optional[NoiseConfig] = None) -> EncoderParams:
    tables = init_embedding_tables(rng, vocab_size, max_len, d_tok, d_seg, d_pos, d_model, n_seg)
    blocks = [init_block(rng, d_model, d_ff, heads, f"blk{i}") for i in range(layers)]
    return EncoderParams(tables=tables, blocks=blocks, noise=noise or NoiseConfig())


def encoder_parameters(enc: EncoderParams) -> List[Parameter]:
    out = [enc.tables.token, enc.tables.segment, enc.tables.position, enc.tables.projection]
    for b in enc.blocks:
        out.extend(b.attention.w_q + b.attention.w_k + b.attention.w_v)
        out.extend([b.w1, b.b1, b.w2, b.b2, b.ln1_gain, b.ln1_bias, b.ln2_gain, b.ln2_bias])
    return out


def embed(tables: EmbeddingTables, token_ids, segment_ids=None, positions=None) -> Tensor:
    """Look up the three tables, concatenate, and project to d_model.

    Ids outside the vocabulary fall back to the reserved UNK row. Sequences
    longer than the position table raise.
    """
    ids = np.asarray(token_ids, dtype=np.int64)
    n = ids.shape[-1]
    if n > tables.max_len:
        raise ValueError(f"sequence length {n} exceeds max_len {tables.max_len}")
    ids = np.where((ids < 0) | (ids >= tables.vocab_size), UNK_ID, ids)
    if segment_ids is None:
        segment_ids = np.zeros_like(ids)
    if positions is None:
        positions = np.broadcast_to(np.arange(n, dtype=np.int64), ids.shape)
    joint = concat([
        take_rows(tables.token, ids),
        take_rows(tables.segment, np.asarray(segment_ids, dtype=np.int64)),
        take_rows(tables.position, np.asarray(positions, dtype=np.int64)),
    ], axis=-1)
    return matmul(joint, tables.projection)


def attention_scores(k: Tensor, q: Tensor, n_bias: Optional[Array], d_k: int) -> Tensor:
    """Raw attention score matrix: (pairwise key-query dot products plus the
    sampled bias, if any) scaled by 1/sqrt(d_k). Row i holds the scores of
    query i against every key."""
    raw = matmul(q, transpose_last(k))
    if n_bias is not None:
        if n_bias.shape != raw.shape:
            raise ValueError(f"bias shape {n_bias.shape} does not match scores {raw.shape}")
        raw = add(raw, Tensor(n_bias))
    return scale(raw, 1.0 / math.sqrt(d_k))


def self_attention(a: Tensor, params: AttentionParams, noise: Optional[NoiseConfig] = None,
                   rng: Optional[Rng] = None, training: bool = False) -> Tensor:
    """Per head: softmax over the key axis of the (optionally biased) scores,
    then the weighted sum of values; heads are concatenated. The per-head
    projections run as one matmul against the stacked weights."""
    n = a.shape[-2]
    d_k = params.d_k
    bias_on = noise is not None and noise.active(training)
    if bias_on and rng is None:
        raise ValueError("noise is active but no rng was provided")
    q_all = matmul(a, concat(params.w_q, axis=-1))
    k_all = matmul(a, concat(params.w_k, axis=-1))
    v_all = matmul(a, concat(params.w_v, axis=-1))
    all_bias = None
    if bias_on:
        all_bias = rng.normal((params.heads,) + a.shape[:-2] + (n, n), scale=noise.sigma)
    outputs = []
    for h in range(params.heads):
        q = slice_axis(q_all, -1, h * d_k, (h + 1) * d_k)
        k = slice_axis(k_all, -1, h * d_k, (h + 1) * d_k)
        v = slice_axis(v_all, -1, h * d_k, (h + 1) * d_k)
        n_bias = all_bias[h] if bias_on else None
        weights = softmax(attention_scores(k, q, n_bias, d_k), axis=-1)
        outputs.append(matmul(weights, v))
    return concat(outputs, axis=-1)


def transformer_block(a: Tensor, block: TransformerBlock, noise: Optional[NoiseConfig] = None,
                      rng: Optional[Rng] = None, training: bool = False) -> Tensor:
    """Post-norm residual block: normalize (a + attention), feed forward,
    normalize again with the second residual."""
    c = self_attention(a, block.attention, noise, rng, training)
    h = layer_norm(add(a, c), block.ln1_gain, block.ln1_bias)
    f = add(matmul(relu(add(matmul(h, block.w1), block.b1)), block.w2), block.b2)
    return layer_norm(add(h, f), block.ln2_gain, block.ln2_bias)


def encode(enc: EncoderParams, token_ids, segment_ids=None, rng: Optional[Rng] = None,
           training: bool = False) -> Tensor:
    """Embed then run the block stack; (n,) ids give (n, d_model) vectors."""
    ids = np.asarray(token_ids, dtype=np.int64)
    if ids.shape[-1] == 0:
        raise ValueError("cannot encode an empty sentence")
    x = embed(enc.tables, ids, segment_ids)
    for block in enc.blocks:
        x = transformer_block(x, block, enc.noise, rng, training)
    return x
