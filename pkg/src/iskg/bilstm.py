"""Bidirectional LSTM over the encoder's semantic vectors.

One step applies the gate equations to the concatenation [h_prev, x_t]:
forget and input gates via sigmoid, a tanh candidate cell, the gated cell
update, and an output gate that bounds |h| below 1. The two directions run
independently and their hidden states are concatenated per position, so the
output width is exactly twice the hidden size.

Accepts a single sequence (n, d) or a same-length batch (B, n, d).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .autodiff import (
    Parameter,
    Rng,
    Tensor,
    add,
    concat,
    matmul,
    mul,
    sigmoid,
    slice_axis,
    stack,
    tanh,
    transpose_last,
)


@dataclass
class LstmParams:
    """Gate weights over [h_prev, x_t]; each matrix is (hidden, hidden+input)."""

    w_f: Parameter
    w_i: Parameter
    w_c: Parameter
    w_k: Parameter
    b_f: Parameter
    b_i: Parameter
    b_c: Parameter
    b_k: Parameter

    def __post_init__(self):
        shapes = {p.shape for p in (self.w_f, self.w_i, self.w_c, self.w_k)}
        if len(shapes) != 1:
            raise ValueError(f"inconsistent gate weight shapes: {shapes}")

    @property
    def hidden(self) -> int:
        return self.w_f.shape[0]

    @property
    def input_dim(self) -> int:
        return self.w_f.shape[1] - self.hidden


def init_lstm_params(rng: Rng, input_dim: int, hidden: int, prefix: str) -> LstmParams:
    s = 1.0 / np.sqrt(hidden + input_dim)

    def w(name):
        return Parameter(rng.normal((hidden, hidden + input_dim), scale=s), f"{prefix}.{name}")

    def b(name):
        return Parameter(np.zeros(hidden), f"{prefix}.{name}")

    return LstmParams(w_f=w("w_f"), w_i=w("w_i"), w_c=w("w_c"), w_k=w("w_k"),
                      b_f=b("b_f"), b_i=b("b_i"), b_c=b("b_c"), b_k=b("b_k"))


def lstm_params_list(p: LstmParams) -> List[Parameter]:
    return [p.w_f, p.w_i, p.w_c, p.w_k, p.b_f, p.b_i, p.b_c, p.b_k]


def lstm_step(x_t: Tensor, h_prev: Tensor, c_prev: Tensor, p: LstmParams) -> Tuple[Tensor, Tensor]:
    """One gate update; returns (h_t, c_t)."""
    hx = concat([h_prev, x_t], axis=-1)

    def gate(w, b):
        return add(matmul(hx, transpose_last(w)), b)

    f_t = sigmoid(gate(p.w_f, p.b_f))
    i_t = sigmoid(gate(p.w_i, p.b_i))
    c_cand = tanh(gate(p.w_c, p.b_c))
    c_t = add(mul(f_t, c_prev), mul(i_t, c_cand))
    k_t = sigmoid(gate(p.w_k, p.b_k))
    h_t = mul(k_t, tanh(c_t))
    return h_t, c_t


def _zero_state(xs: Tensor, hidden: int) -> Tuple[Tensor, Tensor]:
    shape = xs.shape[:-2] + (hidden,)
    return Tensor(np.zeros(shape)), Tensor(np.zeros(shape))


def lstm_run(xs: Tensor, p: LstmParams, reverse: bool = False) -> List[Tensor]:
    """Hidden states for every position, in input order; zero initial state.

    Equivalent to chaining lstm_step, but the four gates are computed from
    one stacked weight matrix and the input-side projections of every time
    step are hoisted into a single matmul before the loop.
    """
    from .autodiff import index_axis, slice_axis

    n = xs.shape[-2]
    time_axis = xs.ndim - 2
    hidden = p.hidden

    w_all = concat([p.w_f, p.w_i, p.w_c, p.w_k], axis=0)   # (4h, h+input)
    w_h = transpose_last(slice_axis(w_all, 1, 0, hidden))   # (h, 4h)
    w_x = transpose_last(slice_axis(w_all, 1, hidden, w_all.shape[1]))
    b_all = concat([p.b_f, p.b_i, p.b_c, p.b_k], axis=-1)   # (4h,)
    x_proj = add(matmul(xs, w_x), b_all)                    # (..., n, 4h)

    h, c = _zero_state(xs, hidden)
    order = range(n - 1, -1, -1) if reverse else range(n)
    states: List[Tensor] = [None] * n
    for t in order:
        pre = add(index_axis(x_proj, time_axis, t), matmul(h, w_h))
        f_t = sigmoid(slice_axis(pre, -1, 0, hidden))
        i_t = sigmoid(slice_axis(pre, -1, hidden, 2 * hidden))
        c_cand = tanh(slice_axis(pre, -1, 2 * hidden, 3 * hidden))
        k_t = sigmoid(slice_axis(pre, -1, 3 * hidden, 4 * hidden))
        c = add(mul(f_t, c), mul(i_t, c_cand))
        h = mul(k_t, tanh(c))
        states[t] = h
    return states


def bilstm_encode(xs: Tensor, fwd: LstmParams, bwd: LstmParams) -> Tensor:
    """Concat of the left-to-right and right-to-left hidden states per
    position; output shape is xs.shape[:-1] + (2*hidden,)."""
    if xs.shape[-2] == 0:
        raise ValueError("cannot encode an empty sequence")
    hs_f = lstm_run(xs, fwd, reverse=False)
    hs_b = lstm_run(xs, bwd, reverse=True)
    per_pos = [concat([f, b], axis=-1) for f, b in zip(hs_f, hs_b)]
    return stack(per_pos, axis=xs.ndim - 2)
