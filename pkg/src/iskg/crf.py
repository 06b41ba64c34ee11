"""Linear-chain CRF: path scoring, log-partition, Viterbi decoding, the
maximum-likelihood loss, and the perturbed industrial loss (IL).

The partition function and path score are implemented as single tape
primitives with hand-derived gradients (posterior marginals via the
forward-backward recursions); the test suite pins them against exhaustive
enumeration and central differences. Emissions may be a single sentence
(n, L) or a same-length batch (B, n, L).

Transitions live in an (L+2, L+2) matrix with virtual START/STOP labels.
Entries into START and out of STOP are pinned to a large negative constant;
the recursions never read them, so they receive no gradient and stay pinned.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .autodiff import (
    Array,
    Parameter,
    Rng,
    Tensor,
    add,
    matmul,
    scale,
    scale_rows,
    sigmoid,
    sub,
)

NEG_INF = -1e4  # finite stand-in so arithmetic never produces nan


@dataclass
class CrfParams:
    w_emit: Parameter      # (context_dim, L)
    b_emit: Parameter      # (L,)
    transitions: Parameter  # (L+2, L+2), START=L, STOP=L+1

    @property
    def n_labels(self) -> int:
        return self.w_emit.shape[1]

    @property
    def start(self) -> int:
        return self.n_labels

    @property
    def stop(self) -> int:
        return self.n_labels + 1


def init_crf_params(rng: Rng, context_dim: int, n_labels: int, prefix: str = "crf") -> CrfParams:
    trans = rng.uniform(-0.1, 0.1, (n_labels + 2, n_labels + 2))
    trans[:, n_labels] = NEG_INF      # into START
    trans[n_labels + 1, :] = NEG_INF  # out of STOP
    return CrfParams(
        w_emit=Parameter(rng.normal((context_dim, n_labels), scale=1.0 / np.sqrt(context_dim)),
                         f"{prefix}.w_emit"),
        b_emit=Parameter(np.zeros(n_labels), f"{prefix}.b_emit"),
        transitions=Parameter(trans, f"{prefix}.transitions"),
    )


def project_emissions(crf: CrfParams, context: Tensor) -> Tensor:
    """Per-token label scores from context vectors: ctx @ W + b."""
    return add(matmul(context, crf.w_emit), crf.b_emit)


def _lse(x: Array, axis: int) -> Array:
    m = x.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(x - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def _promote(emissions: Tensor, labels=None):
    """View inputs as a batch; returns (e, y, batched) with e of shape (B,n,L)."""
    if emissions.ndim == 2:
        e = emissions.data[None]
        y = None if labels is None else np.asarray(labels, dtype=np.int64)[None]
        return e, y, False
    if emissions.ndim == 3:
        y = None if labels is None else np.asarray(labels, dtype=np.int64)
        return emissions.data, y, True
    raise ValueError(f"emissions must be (n,L) or (B,n,L), got {emissions.shape}")


def score_path(emissions: Tensor, transitions: Tensor, labels) -> Tensor:
    """s(x, y): emission scores along y plus transitions, START/STOP included."""
    e, y, batched = _promote(emissions, labels)
    B, n, L = e.shape
    if y.shape != (B, n):
        raise ValueError(f"labels shape {y.shape} does not match emissions {emissions.shape}")
    start, stop = L, L + 1
    T = transitions.data

    bb = np.arange(B)[:, None]
    tt = np.arange(n)[None, :]
    total = e[bb, tt, y].sum(axis=1)
    total = total + T[start, y[:, 0]] + T[y[:, -1], stop]
    if n > 1:
        total = total + T[y[:, :-1], y[:, 1:]].sum(axis=1)

    out = Tensor(total if batched else total[0], (emissions, transitions))

    def bwd(g: Array) -> None:
        gb = np.atleast_1d(g)
        de = np.zeros_like(e)
        np.add.at(de, (bb, tt, y), gb[:, None])
        emissions._accum(de if batched else de[0])
        dT = np.zeros_like(T)
        np.add.at(dT, (np.full(B, start), y[:, 0]), gb)
        np.add.at(dT, (y[:, -1], np.full(B, stop)), gb)
        if n > 1:
            np.add.at(dT, (y[:, :-1].ravel(), y[:, 1:].ravel()), np.repeat(gb, n - 1))
        transitions._accum(dT)

    out._backward = bwd
    return out


def log_partition(emissions: Tensor, transitions: Tensor) -> Tensor:
    """log sum over all label paths of exp(path score), by the forward
    algorithm in log space; gradient is the posterior marginals from the
    forward-backward recursions."""
    e, _, batched = _promote(emissions)
    B, n, L = e.shape
    start, stop = L, L + 1
    T = transitions.data
    Tr = T[:L, :L]
    t_start = T[start, :L]
    t_stop = T[:L, stop]

    alphas = np.empty((n, B, L))
    alphas[0] = t_start[None, :] + e[:, 0]
    for t in range(1, n):
        m = alphas[t - 1][:, :, None] + Tr[None, :, :]
        alphas[t] = _lse(m, axis=1) + e[:, t]
    logz = _lse(alphas[n - 1] + t_stop[None, :], axis=1)

    betas = np.empty((n, B, L))
    betas[n - 1] = np.broadcast_to(t_stop, (B, L))
    for t in range(n - 2, -1, -1):
        m = Tr[None, :, :] + (e[:, t + 1] + betas[t + 1])[:, None, :]
        betas[t] = _lse(m, axis=2)

    out = Tensor(logz if batched else logz[0], (emissions, transitions))

    def bwd(g: Array) -> None:
        gb = np.atleast_1d(g)
        dT = np.zeros_like(T)
        # posterior unary marginals, all time steps at once: (n, B, L)
        unary = np.exp(alphas + betas - logz[None, :, None])
        de = np.swapaxes(unary * gb[None, :, None], 0, 1)
        dT[start, :L] = (gb[:, None] * unary[0]).sum(axis=0)
        dT[:L, stop] = (gb[:, None] * unary[n - 1]).sum(axis=0)
        if n > 1:
            # pairwise marginals for every step: (n-1, B, L, L)
            pair = np.exp(alphas[:-1, :, :, None] + Tr[None, None, :, :]
                          + (np.swapaxes(e, 0, 1)[1:] + betas[1:])[:, :, None, :]
                          - logz[None, :, None, None])
            dT[:L, :L] = np.einsum("tbij,b->ij", pair, gb, optimize=True)
        emissions._accum_owned(de if batched else de[0])
        transitions._accum_owned(dT)

    out._backward = bwd
    return out


def viterbi(emissions, transitions) -> Tuple[List[int], float]:
    """Highest-scoring label sequence and its score.

    Ties break toward the lower label index (argmax takes the first max).
    """
    e = np.asarray(getattr(emissions, "data", emissions), dtype=np.float64)
    T = np.asarray(getattr(transitions, "data", transitions), dtype=np.float64)
    if e.ndim != 2:
        raise ValueError("viterbi decodes one sentence at a time; emissions must be (n,L)")
    n, L = e.shape
    start, stop = L, L + 1
    Tr = T[:L, :L]

    delta = T[start, :L] + e[0]
    back = np.empty((n, L), dtype=np.int64)
    for t in range(1, n):
        m = delta[:, None] + Tr
        back[t] = np.argmax(m, axis=0)
        delta = m[back[t], np.arange(L)] + e[t]
    final = delta + T[:L, stop]
    last = int(np.argmax(final))
    path = [last]
    for t in range(n - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    path.reverse()
    return path, float(final[last])


def viterbi_batch(emissions, transitions) -> Tuple[Array, Array]:
    """Decode a same-length batch in one sweep; returns (paths (B,n) int64,
    scores (B,)). Agrees with per-sentence viterbi exactly, tie-break
    included."""
    e = np.asarray(getattr(emissions, "data", emissions), dtype=np.float64)
    T = np.asarray(getattr(transitions, "data", transitions), dtype=np.float64)
    B, n, L = e.shape
    start, stop = L, L + 1
    Tr = T[:L, :L]

    delta = T[start, :L][None, :] + e[:, 0]
    back = np.empty((n, B, L), dtype=np.int64)
    for t in range(1, n):
        m = delta[:, :, None] + Tr[None, :, :]
        back[t] = np.argmax(m, axis=1)
        delta = np.take_along_axis(m, back[t][:, None, :], axis=1)[:, 0, :] + e[:, t]
    final = delta + T[:L, stop][None, :]
    last = np.argmax(final, axis=1)
    paths = np.empty((B, n), dtype=np.int64)
    paths[:, n - 1] = last
    rows = np.arange(B)
    for t in range(n - 1, 0, -1):
        paths[:, t - 1] = back[t][rows, paths[:, t]]
    return paths, final[rows, last]


def loss_mle(emissions: Tensor, transitions: Tensor, labels) -> Tensor:
    """log-partition minus gold path score; nonnegative by construction."""
    return sub(log_partition(emissions, transitions), score_path(emissions, transitions, labels))


@dataclass
class IlConfig:
    """Perturbed-loss settings; the threshold is trainable through s_raw."""

    s_raw: Parameter
    alpha: float = 1.15
    beta: float = 1.0
    noise_scale: float = 0.1

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be nonnegative")

    @property
    def threshold(self) -> float:
        """s = sigmoid(s_raw), always inside (0, 1)."""
        return float(1.0 / (1.0 + np.exp(-self.s_raw.data)))


def make_il_config(alpha: float = 1.15, beta: float = 1.0, noise_scale: float = 0.1,
                   s_init: float = 0.0, name: str = "il.s_raw") -> IlConfig:
    return IlConfig(s_raw=Parameter(np.asarray(s_init, dtype=np.float64), name),
                    alpha=alpha, beta=beta, noise_scale=noise_scale)


def _hard_gate(u: Tensor) -> Tensor:
    """1 where u > 0 else 0. The forward value is the hard branch choice;
    the backward rule substitutes the sigmoid derivative so the threshold
    parameter keeps receiving gradient (a hard step would freeze it)."""
    out = Tensor((u.data > 0.0).astype(np.float64), (u,))

    def bwd(g: Array) -> None:
        sig = 1.0 / (1.0 + np.exp(-u.data))
        u._accum(g * sig * (1.0 - sig))

    out._backward = bwd
    return out


def perturb(emissions: Tensor, y_pred_scores, il: IlConfig, rng: Rng) -> Tensor:
    """Branch on tau = sigmoid(mean of the predicted-path scores):
    above the threshold, scale emissions by alpha and add half-normal noise;
    otherwise scale by beta and subtract half-normal noise.

    tau is treated as a constant; gradient reaches the threshold only through
    the surrogate in the gate, and reaches emissions through the branch scale.
    """
    y_pred = np.asarray(y_pred_scores, dtype=np.float64)
    tau = 1.0 / (1.0 + np.exp(-y_pred.mean(axis=-1)))  # () or (B,)
    s = sigmoid(il.s_raw)
    gate = _hard_gate(scale(sub(Tensor(tau), s), 10.0))

    shape = emissions.shape
    n_alpha = np.abs(rng.normal(shape)) * il.noise_scale
    n_beta = np.abs(rng.normal(shape)) * il.noise_scale
    branch_a = add(scale(emissions, il.alpha), Tensor(n_alpha))
    branch_b = sub(scale(emissions, il.beta), Tensor(n_beta))
    complement = sub(Tensor(np.ones_like(gate.data)), gate)
    return add(scale_rows(gate, branch_a), scale_rows(complement, branch_b))


def _viterbi_scores(e: Array, T: Array) -> Array:
    """Per-token emission scores along the Viterbi path of one sentence."""
    path, _ = viterbi(e, T)
    return e[np.arange(e.shape[0]), path]


def loss_il(emissions: Tensor, transitions: Tensor, labels, il: IlConfig, rng: Rng) -> Tensor:
    """Perturbed loss: the partition term runs over the perturbed emissions,
    the gold path score over the originals. May be negative, unlike MLE."""
    if emissions.ndim == 2:
        y_pred = _viterbi_scores(emissions.data, transitions.data)
    else:
        paths, _ = viterbi_batch(emissions.data, transitions.data)
        y_pred = np.take_along_axis(emissions.data, paths[:, :, None], axis=2)[:, :, 0]
    perturbed = perturb(emissions, y_pred, il, rng)
    return sub(log_partition(perturbed, transitions),
               score_path(emissions, transitions, labels))
