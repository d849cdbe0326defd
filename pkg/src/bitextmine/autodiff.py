"""Reverse-mode automatic differentiation over dense float64 arrays.

A ``Tape`` records primitive operations as they execute; ``backward``
replays the record in reverse to accumulate gradients for every watched
``Parameter``.  The kernel is deliberately small: rank-0/1/2 tensors,
no broadcasting beyond scalar-affine, float64 everywhere.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

__all__ = [
    "Parameter",
    "ShapeError",
    "Tape",
    "Tensor",
    "absolute",
    "add",
    "affine3",
    "backward",
    "blend",
    "clamp",
    "concat",
    "hadamard",
    "log",
    "matmul",
    "scalar_affine",
    "sigmoid",
    "sub",
    "take_row",
    "tanh",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible for a kernel op."""


class Parameter:
    """Named trainable float64 array.  Long-lived; outlives any tape."""

    __slots__ = ("name", "value")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        # np.array (not ascontiguousarray) so 0-d scalars keep their shape
        self.value = np.array(value, dtype=np.float64, order="C")

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape})"


class Tensor:
    """Node on a tape: a float64 array plus its backward rule."""

    __slots__ = ("data", "tape", "_idx", "_bwd")

    def __init__(self, data: np.ndarray, tape: "Tape", idx: int, bwd):
        self.data = data
        self.tape = tape
        self._idx = idx
        self._bwd = bwd

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    # operator sugar so model code reads like the math
    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return hadamard(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape})"


class Tape:
    """Ordered op record.  Creation order doubles as topological order,
    so one reverse scan visits every op exactly once.

    Single-threaded by contract; build a fresh tape per example.
    """

    def __init__(self):
        self._nodes: list[Tensor] = []
        self._leaves: dict[Parameter, Tensor] = {}

    def __len__(self) -> int:
        return len(self._nodes)

    def _record(self, data: np.ndarray, bwd) -> Tensor:
        node = Tensor(data, self, len(self._nodes), bwd)
        self._nodes.append(node)
        return node

    def constant(self, value) -> Tensor:
        """Leaf that does not receive gradients."""
        return self._record(np.asarray(value, dtype=np.float64), None)

    def watch(self, param: Parameter) -> Tensor:
        """Leaf bound to ``param``; its gradient lands in the gradient map.

        Watching the same parameter twice returns the same leaf.
        """
        leaf = self._leaves.get(param)
        if leaf is None:
            leaf = self._record(param.value, None)
            self._leaves[param] = leaf
        return leaf


def _same_tape(a: Tensor, b: Tensor, op: str) -> None:
    if a.tape is not b.tape:
        raise ValueError(f"{op}: tensors belong to different tapes")


def _acc(grads: list, idx: int, val: np.ndarray) -> None:
    # first write copies so later in-place adds never alias another node's grad
    cur = grads[idx]
    if cur is None:
        grads[idx] = np.array(val, dtype=np.float64)
    else:
        cur += val


def _acc_new(grads: list, idx: int, val: np.ndarray) -> None:
    # for values freshly allocated by the caller: safe to store without copying.
    # asarray wraps 0-d numpy scalars, which are immutable and would silently
    # drop later in-place accumulations.
    cur = grads[idx]
    if cur is None:
        grads[idx] = np.asarray(val)
    else:
        cur += val


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix/vector product: (m,n)@(n,k), (m,n)@(n,), (n,)@(n,) or (n,)@(n,k)."""
    _same_tape(a, b, "matmul")
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2) or ad.shape[-1] != bd.shape[0]:
        raise ShapeError(f"matmul: shapes {ad.shape} and {bd.shape} are incompatible")
    ai, bi = a._idx, b._idx
    if ad.ndim == 2 and bd.ndim == 1:

        def bwd(g, grads):
            _acc_new(grads, ai, g[:, None] * bd)
            _acc_new(grads, bi, ad.T @ g)

    elif ad.ndim == 1 and bd.ndim == 1:

        def bwd(g, grads):
            _acc_new(grads, ai, g * bd)
            _acc_new(grads, bi, g * ad)

    elif ad.ndim == 2 and bd.ndim == 2:

        def bwd(g, grads):
            _acc_new(grads, ai, g @ bd.T)
            _acc_new(grads, bi, ad.T @ g)

    else:  # (n,) @ (n,k)

        def bwd(g, grads):
            _acc_new(grads, ai, bd @ g)
            _acc_new(grads, bi, ad[:, None] * g)

    return a.tape._record(ad @ bd, bwd)


def _elementwise_pair(a: Tensor, b: Tensor, op: str):
    _same_tape(a, b, op)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} are incompatible")


def add(a: Tensor, b: Tensor) -> Tensor:
    _elementwise_pair(a, b, "add")
    ai, bi = a._idx, b._idx

    def bwd(g, grads):
        _acc(grads, ai, g)
        _acc(grads, bi, g)

    return a.tape._record(a.data + b.data, bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _elementwise_pair(a, b, "sub")
    ai, bi = a._idx, b._idx

    def bwd(g, grads):
        _acc(grads, ai, g)
        _acc_new(grads, bi, -g)

    return a.tape._record(a.data - b.data, bwd)


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Element-wise product."""
    _elementwise_pair(a, b, "hadamard")
    ai, bi = a._idx, b._idx
    ad, bd = a.data, b.data

    def bwd(g, grads):
        _acc_new(grads, ai, g * bd)
        _acc_new(grads, bi, g * ad)

    return a.tape._record(ad * bd, bwd)


def absolute(x: Tensor) -> Tensor:
    """Element-wise |x|.  Subgradient at 0 is 0."""
    xi = x._idx
    sign = np.sign(x.data)

    def bwd(g, grads):
        _acc_new(grads, xi, g * sign)

    return x.tape._record(np.abs(x.data), bwd)


def concat(*parts: Tensor) -> Tensor:
    """Concatenate 1-D tensors."""
    if not parts:
        raise ValueError("concat: no operands")
    tape = parts[0].tape
    for p in parts:
        _same_tape(parts[0], p, "concat")
        if p.data.ndim != 1:
            raise ShapeError(f"concat: expected 1-D operands, got shape {p.data.shape}")
    idxs = [p._idx for p in parts]
    sizes = [p.data.shape[0] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g, grads):
        for i, size, off in zip(idxs, sizes, offsets):
            _acc(grads, i, g[off : off + size])

    return tape._record(np.concatenate([p.data for p in parts]), bwd)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    xi = x._idx

    def bwd(g, grads):
        _acc_new(grads, xi, g * (1.0 - out * out))

    return x.tape._record(out, bwd)


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function 1/(1+e^(-x)), overflow-safe for large |x|."""
    out = expit(x.data)
    xi = x._idx

    def bwd(g, grads):
        _acc_new(grads, xi, g * out * (1.0 - out))

    return x.tape._record(out, bwd)


def scalar_affine(x: Tensor, scale: float, shift: float) -> Tensor:
    """scale*x + shift with python-float coefficients (e.g. 1-z)."""
    xi = x._idx
    scale = float(scale)

    def bwd(g, grads):
        _acc_new(grads, xi, scale * g)

    return x.tape._record(scale * x.data + float(shift), bwd)


def log(x: Tensor) -> Tensor:
    """Natural log; the input must be strictly positive."""
    if np.any(x.data <= 0.0):
        raise ValueError("log: non-positive input")
    xi = x._idx
    xd = x.data

    def bwd(g, grads):
        _acc_new(grads, xi, g / xd)

    return x.tape._record(np.log(xd), bwd)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes only where the input lies inside."""
    mask = (x.data >= lo) & (x.data <= hi)
    xi = x._idx

    def bwd(g, grads):
        _acc_new(grads, xi, g * mask)

    return x.tape._record(np.clip(x.data, lo, hi), bwd)


def affine3(W: Tensor, x: Tensor, U: Tensor, h: Tensor, b: Tensor) -> Tensor:
    """Fused W@x + U@h + b for matrices W, U and vectors x, h, b.

    One node instead of four; the recurrent cell spends most of its time
    here, so the fusion matters at desk scale.
    """
    _same_tape(W, x, "affine3")
    _same_tape(W, U, "affine3")
    _same_tape(W, h, "affine3")
    _same_tape(W, b, "affine3")
    Wd, xd, Ud, hd, bd = W.data, x.data, U.data, h.data, b.data
    ok = (
        Wd.ndim == 2 and Ud.ndim == 2 and xd.ndim == 1 and hd.ndim == 1 and bd.ndim == 1
        and Wd.shape[1] == xd.shape[0] and Ud.shape[1] == hd.shape[0]
        and Wd.shape[0] == Ud.shape[0] == bd.shape[0]
    )
    if not ok:
        raise ShapeError(
            f"affine3: shapes {Wd.shape}@{xd.shape} + {Ud.shape}@{hd.shape} + {bd.shape} are incompatible"
        )
    wi, xi, ui, hi, bi = W._idx, x._idx, U._idx, h._idx, b._idx

    def bwd(g, grads):
        _acc_new(grads, wi, g[:, None] * xd)
        _acc_new(grads, xi, Wd.T @ g)
        _acc_new(grads, ui, g[:, None] * hd)
        _acc_new(grads, hi, Ud.T @ g)
        _acc(grads, bi, g)

    return W.tape._record(Wd @ xd + Ud @ hd + bd, bwd)


def blend(z: Tensor, a: Tensor, b: Tensor) -> Tensor:
    """Fused gate mix (1-z)*a + z*b (the recurrent state update)."""
    _same_tape(z, a, "blend")
    _same_tape(z, b, "blend")
    if not (z.data.shape == a.data.shape == b.data.shape):
        raise ShapeError(
            f"blend: shapes {z.data.shape}, {a.data.shape} and {b.data.shape} are incompatible"
        )
    zd, ad, bd = z.data, a.data, b.data
    zi, ai, bi = z._idx, a._idx, b._idx

    def bwd(g, grads):
        _acc_new(grads, zi, g * (bd - ad))
        _acc_new(grads, ai, g * (1.0 - zd))
        _acc_new(grads, bi, g * zd)

    return z.tape._record((1.0 - zd) * ad + zd * bd, bwd)


def take_row(x: Tensor, i: int) -> Tensor:
    """Row i of a 2-D tensor; gradients scatter back into that row only."""
    xd = x.data
    if xd.ndim != 2:
        raise ShapeError(f"take_row: expected 2-D operand, got shape {xd.shape}")
    if not 0 <= i < xd.shape[0]:
        raise IndexError(f"take_row: row {i} out of range for shape {xd.shape}")
    xi = x._idx
    shape = xd.shape

    def bwd(g, grads):
        buf = grads[xi]
        if buf is None:
            buf = grads[xi] = np.zeros(shape)
        buf[i] += g

    return x.tape._record(xd[i], bwd)


def backward(
    tape: Tape,
    loss: Tensor,
    into: dict[Parameter, np.ndarray] | None = None,
) -> dict[Parameter, np.ndarray]:
    """Accumulate d(loss)/d(param) for every parameter watched on ``tape``.

    Replays the tape once in reverse topological order.  Watched parameters
    the loss does not reach get exactly-zero gradients.  When ``into`` is
    given (a preallocated param -> buffer map covering all watched params),
    gradients are added in place and ``into`` is returned; this lets a
    training loop sum gradients over a minibatch without reallocating.
    Otherwise a fresh map of read-only arrays is returned.
    """
    if loss.tape is not tape:
        raise ValueError("backward: loss was not produced on this tape")
    if loss.data.shape != ():
        raise ValueError(f"backward: loss must be scalar, got shape {loss.data.shape}")

    grads: list[np.ndarray | None] = [None] * len(tape._nodes)
    if into is not None:
        for param, leaf in tape._leaves.items():
            grads[leaf._idx] = into[param]
    grads[loss._idx] = np.ones(())

    for node in reversed(tape._nodes[: loss._idx + 1]):
        g = grads[node._idx]
        if g is not None and node._bwd is not None:
            node._bwd(g, grads)

    if into is not None:
        return into
    out: dict[Parameter, np.ndarray] = {}
    for param, leaf in tape._leaves.items():
        g = grads[leaf._idx]
        if g is None:
            g = np.zeros_like(param.value)
        g.setflags(write=False)
        out[param] = g
    return out
