"""Reverse-mode automatic differentiation over dense float64 matrices.

Every value is a 2-D row-major float64 array wrapped in a Tensor node.
Operations build a computation graph; Tensor.backward() walks it in reverse
topological order and accumulates gradients into Parameter leaves.  Parameter
gradients persist across backward calls (batch accumulation) until
zero_grad(), while interior node gradients live only for the duration of one
backward pass.

The operator set is exactly what the encoder / fusion / reasoning / loss
pipeline needs; this is not a general-purpose autodiff system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DimensionError, EmptyInputError, NumericError, StateError

LOG_EPS = 1e-12      # inside cross-entropy logs
REL_ERR_FLOOR = 1e-8  # denominator floor for gradient-check relative errors


def as_matrix(values) -> np.ndarray:
    """Coerce input to a 2-D float64 array, rejecting non-finite entries."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(1, -1)
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got {m.ndim} dimensions")
    if m.size and not np.isfinite(m).all():
        raise NumericError("matrix contains non-finite entries")
    return m


class Tensor:
    """A node in the computation graph holding a rows x cols float64 matrix."""

    __slots__ = ("value", "_parents", "_backward")

    def __init__(self, value, _parents: tuple = (), _backward: Callable | None = None):
        self.value = as_matrix(value)
        self._parents = _parents
        self._backward = _backward

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.value.shape})"

    def backward(self) -> None:
        """Accumulate d(self)/d(param) into every reachable Parameter.

        self must be a 1x1 scalar (a loss).  Gradients of interior nodes are
        kept in a transient table so repeated backward calls add a fresh
        contribution into Parameter.grad each time.
        """
        if self.shape != (1, 1):
            raise StateError(f"backward requires a 1x1 loss tensor, got {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads: dict[int, np.ndarray] = {id(self): np.ones((1, 1))}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if isinstance(node, Parameter):
                node.grad += g
            elif node._backward is not None:
                node._backward(g, grads)
        # leaf constants: gradients dropped on the floor by grads.pop above


class Parameter(Tensor):
    """A named trainable leaf with a persistent accumulated gradient."""

    __slots__ = ("name", "grad")

    def __init__(self, name: str, value):
        super().__init__(value)
        self.name = name
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[:] = 0.0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def _accumulate(grads: dict[int, np.ndarray], node: Tensor, g: np.ndarray) -> None:
    key = id(node)
    if key in grads:
        grads[key] += g
    else:
        grads[key] = g.copy()


def constant(values) -> Tensor:
    return Tensor(values)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise DimensionError(
            f"matmul shape mismatch: ({a.rows}, {a.cols}) x ({b.rows}, {b.cols})"
        )
    out = Tensor(a.value @ b.value, (a, b))

    def backward(g, grads):
        _accumulate(grads, a, g @ b.value.T)
        _accumulate(grads, b, a.value.T @ g)

    out._backward = backward
    return out


def transpose(a: Tensor) -> Tensor:
    out = Tensor(a.value.T, (a,))

    def backward(g, grads):
        _accumulate(grads, a, g.T)

    out._backward = backward
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise DimensionError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.value + b.value, (a, b))

    def backward(g, grads):
        _accumulate(grads, a, g)
        _accumulate(grads, b, g)

    out._backward = backward
    return out


def add_const(a: Tensor, c) -> Tensor:
    """Add a constant array (broadcast by numpy rules); no gradient to c."""
    out = Tensor(a.value + np.asarray(c, dtype=np.float64), (a,))

    def backward(g, grads):
        _accumulate(grads, a, g)

    out._backward = backward
    return out


def scale(a: Tensor, s: float) -> Tensor:
    out = Tensor(a.value * s, (a,))

    def backward(g, grads):
        _accumulate(grads, a, g * s)

    out._backward = backward
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    if a.shape != b.shape:
        raise DimensionError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.value * b.value, (a, b))

    def backward(g, grads):
        _accumulate(grads, a, g * b.value)
        _accumulate(grads, b, g * a.value)

    out._backward = backward
    return out


def div_by_scalar(a: Tensor, s: Tensor) -> Tensor:
    """Divide every entry of a by the 1x1 tensor s."""
    if s.shape != (1, 1):
        raise DimensionError(f"div_by_scalar needs a 1x1 divisor, got {s.shape}")
    sv = s.value[0, 0]
    out = Tensor(a.value / sv, (a, s))

    def backward(g, grads):
        _accumulate(grads, a, g / sv)
        _accumulate(grads, s, np.array([[-(g * a.value).sum() / (sv * sv)]]))

    out._backward = backward
    return out


def log(a: Tensor) -> Tensor:
    """Natural log; caller must guarantee strictly positive entries."""
    if (a.value <= 0).any():
        raise NumericError("log requires strictly positive entries")
    out = Tensor(np.log(a.value), (a,))

    def backward(g, grads):
        _accumulate(grads, a, g / a.value)

    out._backward = backward
    return out


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(np.array([[a.value.sum()]]), (a,))

    def backward(g, grads):
        _accumulate(grads, a, np.full(a.shape, g[0, 0]))

    out._backward = backward
    return out


def mean_over_rows(a: Tensor) -> Tensor:
    """Column-wise mean over rows; output is 1 x cols."""
    if a.rows == 0:
        raise EmptyInputError("mean_over_rows of an empty matrix")
    n = a.rows
    out = Tensor(a.value.mean(axis=0, keepdims=True), (a,))

    def backward(g, grads):
        _accumulate(grads, a, np.repeat(g, n, axis=0) / n)

    out._backward = backward
    return out


def pick(a: Tensor, row: int, col: int) -> Tensor:
    if not (0 <= row < a.rows and 0 <= col < a.cols):
        raise IndexError(f"pick({row}, {col}) out of range for shape {a.shape}")
    out = Tensor(np.array([[a.value[row, col]]]), (a,))

    def backward(g, grads):
        full = np.zeros(a.shape)
        full[row, col] = g[0, 0]
        _accumulate(grads, a, full)

    out._backward = backward
    return out


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    out = Tensor(a.value[start:stop, :], (a,))

    def backward(g, grads):
        full = np.zeros(a.shape)
        full[start:stop, :] = g
        _accumulate(grads, a, full)

    out._backward = backward
    return out


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    out = Tensor(a.value[:, start:stop], (a,))

    def backward(g, grads):
        full = np.zeros(a.shape)
        full[:, start:stop] = g
        _accumulate(grads, a, full)

    out._backward = backward
    return out


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    cols = parts[0].cols
    for p in parts:
        if p.cols != cols:
            raise DimensionError("concat_rows requires equal column counts")
    out = Tensor(np.concatenate([p.value for p in parts], axis=0), tuple(parts))
    offsets = np.cumsum([0] + [p.rows for p in parts])

    def backward(g, grads):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accumulate(grads, p, g[lo:hi, :])

    out._backward = backward
    return out


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    rows = parts[0].rows
    for p in parts:
        if p.rows != rows:
            raise DimensionError("concat_cols requires equal row counts")
    out = Tensor(np.concatenate([p.value for p in parts], axis=1), tuple(parts))
    offsets = np.cumsum([0] + [p.cols for p in parts])

    def backward(g, grads):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accumulate(grads, p, g[:, lo:hi])

    out._backward = backward
    return out


def embed_rows(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of an embedding table; backward scatters with repeats."""
    idx = np.asarray(ids, dtype=np.intp)
    out = Tensor(table.value[idx, :], (table,))

    def backward(g, grads):
        full = np.zeros(table.shape)
        np.add.at(full, idx, g)
        _accumulate(grads, table, full)

    out._backward = backward
    return out


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction for overflow safety."""
    if a.value.size == 0:
        raise EmptyInputError("softmax_rows of an empty matrix")
    shifted = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)
    out = Tensor(y, (a,))

    def backward(g, grads):
        dot = (g * y).sum(axis=1, keepdims=True)
        _accumulate(grads, a, y * (g - dot))

    out._backward = backward
    return out


def mean_row_entropy(a: Tensor) -> Tensor:
    """Mean over rows of the Shannon entropy -sum_c p*ln(p) of each row.

    Entries are expected in [0, 1]; exact zeros contribute zero (x ln x -> 0)
    so the result is never negative.
    """
    if a.rows == 0:
        raise EmptyInputError("mean_row_entropy of an empty matrix")
    v = a.value
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(v > 0, np.log(np.where(v > 0, v, 1.0)), 0.0)
    ent = -(v * logs).sum() / a.rows
    out = Tensor(np.array([[ent]]), (a,))

    def backward(g, grads):
        d = np.where(v > 0, -(logs + 1.0) / a.rows, 0.0)
        _accumulate(grads, a, g[0, 0] * d)

    out._backward = backward
    return out


def scaled_dot_attention(
    q: Tensor, k: Tensor, v: Tensor, scale_dim: int
) -> tuple[Tensor, Tensor]:
    """softmax(q k^T / sqrt(scale_dim)) v; returns (output, weights)."""
    if q.cols != k.cols:
        raise DimensionError(
            f"attention query/key width mismatch: ({q.rows}, {q.cols}) vs ({k.rows}, {k.cols})"
        )
    if k.rows != v.rows:
        raise DimensionError(
            f"attention key/value length mismatch: ({k.rows}, {k.cols}) vs ({v.rows}, {v.cols})"
        )
    if scale_dim != q.cols:
        raise DimensionError(f"scale_dim {scale_dim} != query width {q.cols}")
    logits = scale(matmul(q, transpose(k)), 1.0 / math.sqrt(scale_dim))
    weights = softmax_rows(logits)
    return matmul(weights, v), weights


def cross_entropy(predicted: Tensor, target_class: int) -> Tensor:
    """-ln(p[target] + eps) for a 1 x L probability row."""
    if predicted.rows != 1:
        raise DimensionError(f"cross_entropy expects one probability row, got {predicted.shape}")
    if not (0 <= target_class < predicted.cols):
        raise IndexError(
            f"target class {target_class} out of range for {predicted.cols} classes"
        )
    total = predicted.value.sum()
    if abs(total - 1.0) > 1e-6:
        raise NumericError(f"probabilities sum to {total}, not 1")
    return scale(log(add_const(pick(predicted, 0, target_class), LOG_EPS)), -1.0)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    mean_rel_error: float
    worst_parameter: str
    num_checked: int

    def __str__(self) -> str:
        return (
            f"checked {self.num_checked} entries: "
            f"max_rel_error={self.max_rel_error:.3e} "
            f"mean_rel_error={self.mean_rel_error:.3e} "
            f"worst={self.worst_parameter or '-'}"
        )


def analytic_gradients(
    params: Iterable[Parameter], loss_fn: Callable[[], Tensor]
) -> dict[str, np.ndarray]:
    """Zero grads, run one forward/backward, return per-parameter gradients."""
    params = list(params)
    for p in params:
        p.zero_grad()
    loss = loss_fn()
    if not np.isfinite(loss.value).all():
        raise NumericError("loss is not finite")
    loss.backward()
    out = {p.name: p.grad.copy() for p in params}
    for p in params:
        p.zero_grad()
    return out


def numeric_gradients(
    params: Iterable[Parameter],
    loss_fn: Callable[[], Tensor],
    perturbation: float = 1e-5,
) -> dict[str, np.ndarray]:
    """Central finite differences (L(x+d) - L(x-d)) / 2d for every entry."""
    if perturbation <= 0:
        raise ValueError("perturbation must be positive")
    out: dict[str, np.ndarray] = {}
    for p in params:
        num = np.zeros_like(p.value)
        flat = p.value.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + perturbation
            lo_hi = loss_fn().value[0, 0]
            flat[i] = orig - perturbation
            lo_lo = loss_fn().value[0, 0]
            flat[i] = orig
            if not (math.isfinite(lo_hi) and math.isfinite(lo_lo)):
                raise NumericError(f"non-finite loss while perturbing {p.name}")
            num.ravel()[i] = (lo_hi - lo_lo) / (2.0 * perturbation)
        out[p.name] = num
    return out


def compare_gradients(
    analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray]
) -> GradCheckReport:
    max_err = 0.0
    err_sum = 0.0
    count = 0
    worst = ""
    for name, ga in analytic.items():
        gn = numeric[name]
        rel = np.abs(ga - gn) / np.maximum(np.abs(ga) + np.abs(gn), REL_ERR_FLOOR)
        if rel.size == 0:
            continue
        count += rel.size
        err_sum += rel.sum()
        local_max = float(rel.max())
        if not worst or local_max > max_err:
            max_err = local_max
            worst = name
    mean = err_sum / count if count else 0.0
    return GradCheckReport(max_err, mean, worst, count)


def grad_check(
    params: Iterable[Parameter],
    loss_fn: Callable[[], Tensor],
    perturbation: float = 1e-5,
) -> GradCheckReport:
    """Compare tape gradients against central differences entry by entry."""
    params = list(params)
    if not params:
        return GradCheckReport(0.0, 0.0, "", 0)
    analytic = analytic_gradients(params, loss_fn)
    numeric = numeric_gradients(params, loss_fn, perturbation)
    return compare_gradients(analytic, numeric)
