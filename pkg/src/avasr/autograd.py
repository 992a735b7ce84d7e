"""Reverse-mode automatic differentiation over dense numpy arrays.

Graphs are define-by-run: every operation computes its value eagerly and
records a closure that pushes gradients back to its parents.
``Tensor.backward()`` runs the reverse pass from a scalar root; leaf
gradients accumulate across calls until ``ParameterStore.zero_grad()``.
Computation is done at whatever float width the operands carry; tests
run everything in float64.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import NumericError, ShapeMismatchError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording (decoding paths that never call backward)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A node in the computation graph: a value, its parents and a grad slot."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        if _grad_enabled and (requires_grad or any(p.requires_grad for p in parents)):
            self.requires_grad = True
            self._parents = tuple(parents)
            self._backward = backward
        else:
            self._parents = ()
            self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def label(self) -> str:
        return self.name if self.name else "<%s>" % (self.data.shape,)

    def is_leaf(self) -> bool:
        return not self._parents

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, seed: float = 1.0) -> None:
        """Reverse pass from a scalar root. Leaf grads accumulate; interior
        grads are reset per call so repeated calls stay consistent."""
        if self.data.size != 1:
            raise ShapeMismatchError(
                "backward requires a scalar root, got %s for %s" % (self.data.shape, self.label())
            )
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        for node in topo:
            if node._parents:
                node.grad = None
        self._accumulate(np.full_like(self.data, seed))
        for node in reversed(topo):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is not None and parent.requires_grad:
                    parent._accumulate(g)

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, scale(other, -1.0))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other):
        return scale(self, float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return narrow(self, key)

    def __repr__(self):
        return "Tensor(name=%r, shape=%s)" % (self.name, self.data.shape)


def constant(data, name=None) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=False, name=name)


def _binary_shape_check(op: str, a: Tensor, b: Tensor, ok: bool) -> None:
    if not ok:
        raise ShapeMismatchError(
            "%s: incompatible shapes %s for %s and %s for %s"
            % (op, a.data.shape, a.label(), b.data.shape, b.label())
        )


# -- primitive ops ------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; also broadcasts a length-d vector over (T, d) rows."""
    if a.data.shape == b.data.shape:
        return Tensor(a.data + b.data, parents=(a, b),
                      backward=lambda g: (g, g), name="add")
    # vector-over-rows broadcast: (T, d) + (d,) or (T, d) + (1, d)
    bd = b.data
    broadcastable = (
        a.data.ndim == 2
        and (bd.shape == (a.data.shape[1],) or bd.shape == (1, a.data.shape[1]))
    )
    _binary_shape_check("add", a, b, broadcastable)
    out = a.data + bd.reshape(1, -1)

    def _bwd(g):
        gb = g.sum(axis=0)
        return g, gb.reshape(bd.shape)

    return Tensor(out, parents=(a, b), backward=_bwd, name="add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_shape_check("mul", a, b, a.data.shape == b.data.shape)
    return Tensor(a.data * b.data, parents=(a, b),
                  backward=lambda g: (g * b.data, g * a.data), name="mul")


def scale(a: Tensor, s: float) -> Tensor:
    return Tensor(a.data * s, parents=(a,), backward=lambda g: (g * s,), name="scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ok = a.data.ndim == 2 and b.data.ndim == 2 and a.data.shape[1] == b.data.shape[0]
    _binary_shape_check("matmul", a, b, ok)
    return Tensor(
        a.data @ b.data,
        parents=(a, b),
        backward=lambda g: (g @ b.data.T, a.data.T @ g),
        name="matmul",
    )


def concat(parts: Iterable[Tensor], axis: int = 0) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeMismatchError("concat of zero tensors")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def _bwd(g):
        return tuple(
            np.take(g, np.arange(offsets[i], offsets[i + 1]), axis=axis)
            for i in range(len(parts))
        )

    return Tensor(out, parents=tuple(parts), backward=_bwd, name="concat")


def narrow(a: Tensor, key) -> Tensor:
    """Basic-slice view of a tensor (rows, columns, strided slices)."""
    out = a.data[key]

    def _bwd(g):
        ga = np.zeros_like(a.data)
        ga[key] += g
        return (ga,)

    return Tensor(np.array(out, copy=True), parents=(a,), backward=_bwd, name="slice")


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)
    return Tensor(np.array(out, copy=True), parents=(a,),
                  backward=lambda g: (g.reshape(a.data.shape),), name="reshape")


def sigmoid_np(x: np.ndarray) -> np.ndarray:
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid(a: Tensor) -> Tensor:
    s = sigmoid_np(a.data)
    return Tensor(s, parents=(a,), backward=lambda g: (g * s * (1.0 - s),), name="sigmoid")


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return Tensor(t, parents=(a,), backward=lambda g: (g * (1.0 - t * t),), name="tanh")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return Tensor(a.data * mask, parents=(a,), backward=lambda g: (g * mask,), name="relu")


def softmax(a: Tensor) -> Tensor:
    """Row-wise softmax with max subtraction."""
    y = softmax_np(a.data)

    def _bwd(g):
        dot = np.sum(g * y, axis=-1, keepdims=True)
        return (y * (g - dot),)

    return Tensor(y, parents=(a,), backward=_bwd, name="softmax")


def log_softmax(a: Tensor) -> Tensor:
    y = log_softmax_np(a.data)

    def _bwd(g):
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True),)

    return Tensor(y, parents=(a,), backward=_bwd, name="log_softmax")


def sum_all(a: Tensor) -> Tensor:
    return Tensor(np.asarray(a.data.sum()), parents=(a,),
                  backward=lambda g: (np.full_like(a.data, float(g)),), name="sum")


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    return Tensor(np.asarray(a.data.mean()), parents=(a,),
                  backward=lambda g: (np.full_like(a.data, float(g) / n),), name="mean")


def custom(parents: tuple[Tensor, ...], value: np.ndarray, backward_fn, name: str) -> Tensor:
    """Escape hatch for fused ops (recurrent cells, sequence losses)."""
    return Tensor(value, parents=parents, backward=backward_fn, name=name)


# -- log-space numerics --------------------------------------------------


def softmax_np(x: np.ndarray) -> np.ndarray:
    m = np.max(x, axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_np(x: np.ndarray) -> np.ndarray:
    m = np.max(x, axis=-1, keepdims=True)
    z = x - m
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def logsumexp(x: np.ndarray, axis=None) -> np.ndarray:
    """Max-subtracted log-sum-exp that stays -inf (not NaN) on empty mass."""
    x = np.asarray(x, dtype=np.float64)
    m = np.max(x, axis=axis, keepdims=True)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(x - m_safe).sum(axis=axis, keepdims=True)) + m_safe
    if axis is None:
        return out.reshape(())
    return np.squeeze(out, axis=axis)


# -- parameters ----------------------------------------------------------


class ParameterStore:
    """Named trainable tensors with their gradient accumulators."""

    def __init__(self, seed: int = 0, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        self.rng = np.random.default_rng(seed)
        self._params: dict[str, Tensor] = {}

    def create(self, name: str, shape: tuple[int, ...], init="glorot") -> Tensor:
        if name in self._params:
            raise ShapeMismatchError("duplicate parameter name %r" % name)
        if isinstance(init, np.ndarray):
            data = init.astype(self.dtype)
            if data.shape != tuple(shape):
                raise ShapeMismatchError("init array shape %s != %s for %r" % (data.shape, shape, name))
        elif init == "zeros":
            data = np.zeros(shape, dtype=self.dtype)
        elif init == "glorot":
            fan_in = shape[0] if len(shape) > 1 else shape[-1]
            fan_out = shape[-1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            data = self.rng.uniform(-limit, limit, size=shape).astype(self.dtype)
        else:
            raise ValueError("unknown init %r" % (init,))
        t = Tensor(data, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def n_values(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def grad_global_norm(self) -> float:
        total = 0.0
        for p in self._params.values():
            if p.grad is not None:
                total += float(np.sum(p.grad * p.grad))
        return float(np.sqrt(total))

    def grads_finite(self) -> bool:
        return all(p.grad is None or np.all(np.isfinite(p.grad)) for p in self._params.values())

    def scale_grads(self, factor: float) -> None:
        for p in self._params.values():
            if p.grad is not None:
                p.grad *= factor

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self._params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        extra = set(state) - set(self._params)
        if missing or extra:
            raise ShapeMismatchError(
                "parameter name mismatch: missing=%s extra=%s" % (sorted(missing), sorted(extra))
            )
        for name, arr in state.items():
            p = self._params[name]
            if tuple(arr.shape) != p.data.shape:
                raise ShapeMismatchError(
                    "shape mismatch for %r: %s vs %s" % (name, arr.shape, p.data.shape)
                )
            p.data = np.array(arr, dtype=self.dtype)


# -- finite-difference gradient checking ----------------------------------


@dataclass
class GradCheckEntry:
    name: str
    max_rel_err: float
    passed: bool


@dataclass
class GradCheckReport:
    entries: list[GradCheckEntry] = field(default_factory=list)
    tol: float = 0.0

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel_err for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def format(self) -> str:
        lines = []
        for e in self.entries:
            lines.append("%-32s max_rel_err=%.3e %s" % (e.name, e.max_rel_err, "PASS" if e.passed else "FAIL"))
        lines.append("overall: max_rel_err=%.3e %s" % (self.max_rel_err, "PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def check_gradient(
    build_loss: Callable[[], Tensor],
    store: ParameterStore,
    eps: float = 1e-5,
    tol: float = 1e-6,
    names: Iterable[str] | None = None,
    denom_floor: float = 1e-3,
) -> GradCheckReport:
    """Compare analytic gradients against central finite differences.

    `build_loss` must rebuild the scalar graph from the store's current
    parameter values on every call. Relative error uses
    |a - n| / max(|a|, |n|, denom_floor) so near-zero gradients are
    compared absolutely at the tolerance scale.
    """
    if eps <= 0 or tol <= 0:
        raise ValueError("eps and tol must be positive")
    selected = list(names) if names is not None else store.names()
    store.zero_grad()
    loss = build_loss()
    if not np.isfinite(loss.data).all():
        raise NumericError("non-finite loss in gradient check")
    loss.backward()
    analytic = {
        name: (store[name].grad.copy() if store[name].grad is not None
               else np.zeros_like(store[name].data))
        for name in selected
    }
    report = GradCheckReport(tol=tol)
    for name in selected:
        p = store[name]
        flat = p.data.reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = build_loss().item()
            flat[i] = orig - eps
            f_minus = build_loss().item()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = analytic[name].reshape(-1)[i]
            denom = max(abs(a), abs(numeric), denom_floor)
            worst = max(worst, abs(a - numeric) / denom)
        report.entries.append(GradCheckEntry(name, worst, worst <= tol))
    store.zero_grad()
    return report
