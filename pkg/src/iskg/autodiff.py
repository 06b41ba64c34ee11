"""Dense float64 tensors with tape-based reverse-mode differentiation.

Deliberately small: the op set is exactly what the tagging model needs, every
op wires its backward rule at call time, and gradients accumulate additively
into leaf tensors. Shapes are explicit; the only implicit broadcasts are a
bias vector over the last axis, a scalar factor, and a per-row scale
(`scale_rows`), which keeps silent shape bugs out.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

Array = np.ndarray


def _as_array(x) -> Array:
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    """A node in the computation graph: float64 data plus a backward rule."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents: Tuple["Tensor", ...] = (), backward=None):
        self.data: Array = _as_array(data)
        self.grad: Array | None = None
        self._parents = parents
        self._backward: Callable[[Array], None] | None = backward

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(()))

    def _accum(self, g: Array) -> None:
        if self.grad is None:
            self.grad = np.array(g)  # copy: g may be a view into another buffer
        else:
            self.grad += g

    def _accum_owned(self, g: Array) -> None:
        """Accumulate a gradient array the caller freshly allocated and will
        not touch again; on first accumulation the buffer is adopted as-is."""
        if self.grad is None:
            self.grad = g
        else:
            self.grad += g

    def _accum_at(self, idx, g: Array) -> None:
        """Accumulate into a sub-region without materializing a full-size
        zeros array per call (the hot path for time-step indexing)."""
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad[idx] += g

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar output back to every leaf."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar, got shape {self.shape}")
        order: List[Tensor] = []
        seen = set()
        stack: List[Tuple[Tensor, bool]] = [(self, False)]
        while stack:  # iterative postorder: long LSTM chains overflow recursion
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self._accum(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        # intermediate grads are not needed past this point
        for node in order:
            if node is not self and node._backward is not None:
                node.grad = None

    # operator sugar used throughout the model code
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


class Parameter(Tensor):
    """A named leaf tensor whose grad buffer persists across passes."""

    __slots__ = ("name",)

    def __init__(self, value, name: str = ""):
        super().__init__(value)
        self.name = name
        self.grad = np.zeros_like(self.data)

    @property
    def value(self) -> Array:
        return self.data

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: Array, shape: Tuple[int, ...]) -> Array:
    """Sum g down to `shape` (used for bias and scalar operands)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _check_addable(a: Tensor, b: Tensor) -> None:
    if b.shape == a.shape or b.shape == () or b.shape == a.shape[-1:]:
        return
    if a.shape == ():
        return
    raise ValueError(f"shape mismatch: {a.shape} vs {b.shape} (only bias/scalar broadcast allowed)")


def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    _check_addable(a, b)
    out = Tensor(a.data + b.data, (a, b))
    same = a.shape == b.shape

    def bwd(g: Array) -> None:
        # g is this node's dead grad buffer: one parent may adopt it as-is,
        # the other must copy (or owns a freshly reduced array)
        a._accum_owned(_unbroadcast(g, a.shape))
        if same:
            b._accum(g)
        else:
            b._accum_owned(_unbroadcast(g, b.shape))

    out._backward = bwd
    return out


def sub(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    _check_addable(a, b)
    out = Tensor(a.data - b.data, (a, b))

    def bwd(g: Array) -> None:
        b._accum_owned(-_unbroadcast(g, b.shape))
        a._accum_owned(_unbroadcast(g, a.shape))

    out._backward = bwd
    return out


def mul(a, b) -> Tensor:
    """Elementwise product; one operand may be a scalar tensor."""
    a, b = _t(a), _t(b)
    if a.shape != b.shape and a.shape != () and b.shape != ():
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data, (a, b))

    def bwd(g: Array) -> None:
        a._accum_owned(_unbroadcast(g * b.data, a.shape))
        b._accum_owned(_unbroadcast(g * a.data, b.shape))

    out._backward = bwd
    return out


def scale(a, s: float) -> Tensor:
    a = _t(a)
    s = float(s)
    out = Tensor(a.data * s, (a,))

    def bwd(g: Array) -> None:
        a._accum_owned(g * s)

    out._backward = bwd
    return out


def scale_rows(s, x) -> Tensor:
    """x[i] scaled by s[i] along the leading axis (s may also be scalar)."""
    s, x = _t(s), _t(x)
    if s.shape not in ((), (x.shape[0],) if x.ndim else ()):
        raise ValueError(f"scale_rows: {s.shape} does not index rows of {x.shape}")
    s_col = s.data if s.shape == () else s.data.reshape((-1,) + (1,) * (x.ndim - 1))
    out = Tensor(x.data * s_col, (s, x))

    def bwd(g: Array) -> None:
        x._accum(g * s_col)
        gs = g * x.data
        if s.shape == ():
            s._accum(gs.sum())
        else:
            s._accum(gs.reshape(x.shape[0], -1).sum(axis=1))

    out._backward = bwd
    return out


def matmul(a, b) -> Tensor:
    """Matrix product supporting (…,m,k)@(k,n), (k,)@(k,n) and equal-batch 3D@3D."""
    a, b = _t(a), _t(b)
    out = Tensor(np.matmul(a.data, b.data), (a, b))

    def bwd(g: Array) -> None:
        if a.ndim == 1 and b.ndim == 2:
            a._accum_owned(g @ b.data.T)
            b._accum_owned(np.outer(a.data, g))
        elif b.ndim == 2:
            a._accum_owned(np.matmul(g, b.data.T))
            k = a.data.shape[-1]
            n = b.data.shape[-1]
            b._accum_owned(a.data.reshape(-1, k).T @ g.reshape(-1, n))
        elif a.ndim == b.ndim:
            a._accum_owned(np.matmul(g, np.swapaxes(b.data, -1, -2)))
            b._accum_owned(np.matmul(np.swapaxes(a.data, -1, -2), g))
        else:
            raise ValueError(f"unsupported matmul grad for shapes {a.shape} @ {b.shape}")

    out._backward = bwd
    return out


def transpose_last(a) -> Tensor:
    a = _t(a)
    out = Tensor(np.swapaxes(a.data, -1, -2), (a,))

    def bwd(g: Array) -> None:
        a._accum_owned(np.swapaxes(g, -1, -2))  # view into the dead buffer

    out._backward = bwd
    return out


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    ts = [_t(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in ts], axis=axis), tuple(ts))
    sizes = [t.data.shape[axis] for t in ts]

    def bwd(g: Array) -> None:
        # disjoint views into the dead buffer: each parent may adopt its own
        offsets = np.cumsum([0] + sizes)
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t._accum_owned(g[tuple(idx)])

    out._backward = bwd
    return out


def stack(tensors: Sequence[Tensor], axis: int) -> Tensor:
    ts = [_t(t) for t in tensors]
    out = Tensor(np.stack([t.data for t in ts], axis=axis), tuple(ts))

    def bwd(g: Array) -> None:
        for i, t in enumerate(ts):
            t._accum_owned(np.take(g, i, axis=axis))

    out._backward = bwd
    return out


def reshape(a, shape: Tuple[int, ...]) -> Tensor:
    a = _t(a)
    out = Tensor(a.data.reshape(shape), (a,))

    def bwd(g: Array) -> None:
        a._accum(g.reshape(a.shape))

    out._backward = bwd
    return out


def index_axis(a, axis: int, i: int) -> Tensor:
    """Select index i along `axis`, dropping that axis."""
    a = _t(a)
    out = Tensor(np.take(a.data, i, axis=axis), (a,))
    idx = [slice(None)] * a.ndim
    idx[axis] = i
    idx = tuple(idx)

    def bwd(g: Array) -> None:
        a._accum_at(idx, g)

    out._backward = bwd
    return out


def slice_axis(a, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice [start:stop) along `axis` (axis is kept)."""
    a = _t(a)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, stop)
    idx = tuple(idx)
    out = Tensor(a.data[idx], (a,))

    def bwd(g: Array) -> None:
        a._accum_at(idx, g)

    out._backward = bwd
    return out


def take_rows(table, ids) -> Tensor:
    """Row lookup: table (V,d) indexed by an integer array of any shape."""
    table = _t(table)
    idx = np.asarray(ids, dtype=np.int64)
    out = Tensor(table.data[idx], (table,))

    def bwd(g: Array) -> None:
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, idx.reshape(-1), g.reshape(-1, table.data.shape[-1]))

    out._backward = bwd
    return out


def sum_all(a) -> Tensor:
    a = _t(a)
    out = Tensor(a.data.sum(), (a,))

    def bwd(g: Array) -> None:
        a._accum_owned(np.full_like(a.data, float(g)))

    out._backward = bwd
    return out


def sigmoid(a) -> Tensor:
    a = _t(a)
    y = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(y, (a,))

    def bwd(g: Array) -> None:
        a._accum_owned(g * y * (1.0 - y))

    out._backward = bwd
    return out


def tanh(a) -> Tensor:
    a = _t(a)
    y = np.tanh(a.data)
    out = Tensor(y, (a,))

    def bwd(g: Array) -> None:
        a._accum_owned(g * (1.0 - y * y))

    out._backward = bwd
    return out


def relu(a) -> Tensor:
    a = _t(a)
    out = Tensor(np.maximum(a.data, 0.0), (a,))

    def bwd(g: Array) -> None:
        a._accum_owned(g * (a.data > 0.0))

    out._backward = bwd
    return out


def softmax(a, axis: int = -1) -> Tensor:
    a = _t(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y, (a,))

    def bwd(g: Array) -> None:
        dot = (g * y).sum(axis=axis, keepdims=True)
        a._accum_owned((g - dot) * y)

    out._backward = bwd
    return out


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize each row over the last axis to zero mean / unit variance."""
    x, gain, bias = _t(x), _t(gain), _t(bias)
    d = x.shape[-1]
    if d < 2:
        raise ValueError("layer_norm needs a last-dim size of at least 2")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    ivar = 1.0 / np.sqrt(var + eps)
    xhat = xc * ivar
    out = Tensor(xhat * gain.data + bias.data, (x, gain, bias))

    def bwd(g: Array) -> None:
        gain._accum(_unbroadcast(g * xhat, gain.shape))
        bias._accum(_unbroadcast(g, bias.shape))
        dxhat = g * gain.data
        dx = ivar * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                     - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        x._accum_owned(dx)

    out._backward = bwd
    return out


class Rng:
    """Seeded deterministic generator; identical seed yields identical streams."""

    def __init__(self, seed: int, _spawn_key: Tuple[int, ...] = ()):
        self._seed = int(seed)
        self._spawn_key = _spawn_key
        seq = np.random.SeedSequence(self._seed, spawn_key=_spawn_key)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def fork(self, key: int) -> "Rng":
        """Independent child stream; fork(k) is a pure function of (seed, k)."""
        return Rng(self._seed, self._spawn_key + (int(key),))

    def normal(self, shape: Tuple[int, ...] = (), scale: float = 1.0) -> Array:
        return self._gen.standard_normal(size=shape) * scale

    def uniform(self, low: float, high: float, shape: Tuple[int, ...] = ()) -> Array:
        return self._gen.uniform(low, high, size=shape)

    def permutation(self, n: int) -> Array:
        return self._gen.permutation(n)

    def integers(self, low: int, high: int, shape: Tuple[int, ...] = ()) -> Array:
        return self._gen.integers(low, high, size=shape)


class Adam:
    """Adam with bias correction; update skipped nowhere, grads read as-is."""

    def __init__(self, params: Iterable[Parameter], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad[...] = 0.0

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def grad_check(f: Callable[[], Tensor], params: Iterable[Parameter], h: float = 1e-5) -> float:
    """Max relative error between reverse-mode grads and central differences.

    Relative error per coordinate is |a-b| / (|a|+|b|+1e-12); `f` is called
    with the parameters mutated in place, so it must rebuild its graph.
    """
    params = list(params)
    for p in params:
        p.grad[...] = 0.0
    out = f()
    out.backward()
    analytic = [p.grad.copy() for p in params]

    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.data.reshape(-1)
        gflat = ga.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            f1 = f().item()
            flat[j] = orig - h
            f2 = f().item()
            flat[j] = orig
            numeric = (f1 - f2) / (2.0 * h)
            err = abs(gflat[j] - numeric) / (abs(gflat[j]) + abs(numeric) + 1e-12)
            worst = max(worst, err)
    return worst


# -- checkpoint format: JSON manifest + little-endian float64 blob -----------

_CHECKPOINT_DTYPE = "<f8"


def save_checkpoint(arrays: Mapping[str, Array] | Iterable[Parameter], prefix: str | Path) -> None:
    """Write `<prefix>.json` + `<prefix>.bin`; round trip is bit-exact."""
    if not isinstance(arrays, Mapping):
        named: Dict[str, Array] = {}
        for p in arrays:
            if not p.name:
                raise ValueError("unnamed Parameter cannot be checkpointed")
            if p.name in named:
                raise ValueError(f"duplicate parameter name {p.name!r}")
            named[p.name] = p.data
        arrays = named
    prefix = Path(prefix)
    entries = []
    blob = bytearray()
    for name in sorted(arrays):
        a = np.asarray(arrays[name], dtype=_CHECKPOINT_DTYPE)
        entries.append({
            "name": name,
            "shape": list(a.shape),
            "offset": len(blob),
            "nbytes": a.nbytes,
        })
        blob.extend(a.tobytes(order="C"))
    manifest = {"format": 1, "dtype": _CHECKPOINT_DTYPE, "tensors": entries}
    prefix.parent.mkdir(parents=True, exist_ok=True)
    prefix.with_suffix(prefix.suffix + ".json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    prefix.with_suffix(prefix.suffix + ".bin").write_bytes(bytes(blob))


def load_checkpoint(prefix: str | Path) -> Dict[str, Array]:
    prefix = Path(prefix)
    manifest = json.loads(prefix.with_suffix(prefix.suffix + ".json").read_text(encoding="utf-8"))
    if manifest.get("format") != 1 or manifest.get("dtype") != _CHECKPOINT_DTYPE:
        raise ValueError("unsupported checkpoint manifest")
    blob = prefix.with_suffix(prefix.suffix + ".bin").read_bytes()
    out: Dict[str, Array] = {}
    for e in manifest["tensors"]:
        raw = blob[e["offset"]:e["offset"] + e["nbytes"]]
        out[e["name"]] = np.frombuffer(raw, dtype=_CHECKPOINT_DTYPE).reshape(e["shape"]).copy()
    return out


def load_into(params: Iterable[Parameter], arrays: Mapping[str, Array]) -> None:
    """Copy checkpointed values into matching named parameters."""
    for p in params:
        if p.name not in arrays:
            raise KeyError(f"checkpoint is missing parameter {p.name!r}")
        src = arrays[p.name]
        if tuple(src.shape) != p.shape:
            raise ValueError(f"shape mismatch for {p.name!r}: {src.shape} vs {p.shape}")
        p.data[...] = src
