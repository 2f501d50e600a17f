"""Reverse-mode autodiff on dense numpy arrays, plus a finite-difference oracle.

Define-by-run: every operation records its parents and a backward closure on
a tape. Calling ``backward()`` on a scalar result walks the tape once in
reverse topological order. Arrays are float32 during training; gradient
checks rebuild the same computation in float64 where central differences are
trustworthy at tight tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class GraphError(Exception):
    """Shape mismatch or non-finite value, tagged with the offending op."""


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise GraphError(f"non-finite value produced by op '{op}'")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A numpy array plus the tape bookkeeping needed for backward()."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf", dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents: tuple = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op!r})"

    # -- graph construction ------------------------------------------------

    @staticmethod
    def _result(data, parents, op, backward):
        _check_finite(data, op)
        out = Tensor(data, op=op, dtype=data.dtype)
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        return out

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        other = _as_tensor(other, self.dtype)
        data = self.data + other.data

        def bwd(g, a=self, b=other):
            if a.requires_grad:
                a._accum(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g, b.shape))

        return Tensor._result(data, (self, other), "add", bwd)

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_tensor(other, self.dtype)
        data = self.data - other.data

        def bwd(g, a=self, b=other):
            if a.requires_grad:
                a._accum(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accum(-_unbroadcast(g, b.shape))

        return Tensor._result(data, (self, other), "sub", bwd)

    def __neg__(self):
        def bwd(g, a=self):
            a._accum(-g)

        return Tensor._result(-self.data, (self,), "neg", bwd)

    def __mul__(self, other):
        other = _as_tensor(other, self.dtype)
        data = self.data * other.data

        def bwd(g, a=self, b=other):
            if a.requires_grad:
                a._accum(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accum(_unbroadcast(g * a.data, b.shape))

        return Tensor._result(data, (self, other), "mul", bwd)

    __rmul__ = __mul__

    def __truediv__(self, scalar: float):
        return self * (1.0 / float(scalar))

    def matmul(self, other: "Tensor") -> "Tensor":
        if self.data.shape[-1] != other.data.shape[-2 if other.data.ndim > 1 else 0]:
            raise GraphError(
                f"matmul shape mismatch {self.data.shape} x {other.data.shape}"
            )
        data = np.matmul(self.data, other.data)

        def bwd(g, a=self, b=other):
            if a.requires_grad:
                ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
                a._accum(_unbroadcast(ga, a.shape))
            if b.requires_grad:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
                b._accum(_unbroadcast(gb, b.shape))

        return Tensor._result(data, (self, other), "matmul", bwd)

    __matmul__ = matmul

    # -- shape ops -----------------------------------------------------------

    def reshape(self, *shape):
        old = self.data.shape
        data = self.data.reshape(*shape)

        def bwd(g, a=self):
            a._accum(g.reshape(old))

        return Tensor._result(data, (self,), "reshape", bwd)

    def transpose(self, *axes):
        axes = axes or tuple(reversed(range(self.data.ndim)))
        inv = np.argsort(axes)
        data = self.data.transpose(axes)

        def bwd(g, a=self):
            a._accum(g.transpose(inv))

        return Tensor._result(data, (self,), "transpose", bwd)

    # -- reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        data = self.data.sum(axis=axis, keepdims=keepdims)

        def bwd(g, a=self, ax=axis, kd=keepdims):
            if ax is not None and not kd:
                g = np.expand_dims(g, ax)
            a._accum(np.broadcast_to(g, a.shape).copy())

        return Tensor._result(data, (self,), "sum", bwd)

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- indexing ---------------------------------------------------------------

    def take_rows(self, indices) -> "Tensor":
        """Gather rows along the first axis (embedding lookup / position slice)."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.data.shape[0]):
            raise GraphError("take_rows index out of range")
        data = self.data[idx]

        def bwd(g, a=self, ix=idx):
            ga = np.zeros_like(a.data)
            np.add.at(ga, ix, g)
            a._accum(ga)

        return Tensor._result(data, (self,), "take_rows", bwd)

    def pick(self, indices) -> "Tensor":
        """Select one element from each row of a 2-d tensor."""
        idx = np.asarray(indices, dtype=np.int64)
        if self.data.ndim != 2 or idx.shape != (self.data.shape[0],):
            raise GraphError("pick expects a 2-d tensor and one index per row")
        rows = np.arange(self.data.shape[0])
        data = self.data[rows, idx]

        def bwd(g, a=self, ix=idx, r=rows):
            ga = np.zeros_like(a.data)
            ga[r, ix] = g
            a._accum(ga)

        return Tensor._result(data, (self,), "pick", bwd)

    # -- nonlinearities -----------------------------------------------------------

    def gelu(self) -> "Tensor":
        # tanh approximation; backward differentiates the same approximation
        c = np.sqrt(2.0 / np.pi).astype(self.dtype)
        x = self.data
        inner = c * (x + 0.044715 * x**3)
        t = np.tanh(inner)
        data = 0.5 * x * (1.0 + t)

        def bwd(g, a=self, t=t, c=c):
            x = a.data
            dinner = c * (1.0 + 3 * 0.044715 * x**2)
            da = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * dinner
            a._accum(g * da)

        return Tensor._result(data, (self,), "gelu", bwd)

    def log_softmax(self) -> "Tensor":
        """Numerically safe log-softmax over the last axis (max-subtracted)."""
        x = self.data
        m = x.max(axis=-1, keepdims=True)
        shifted = x - m
        lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        data = shifted - lse

        def bwd(g, a=self, logp=data):
            p = np.exp(logp)
            a._accum(g - p * g.sum(axis=-1, keepdims=True))

        return Tensor._result(data, (self,), "log_softmax", bwd)

    def softmax(self) -> "Tensor":
        x = self.data
        shifted = x - x.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        data = e / e.sum(axis=-1, keepdims=True)

        def bwd(g, a=self, p=data):
            dot = (g * p).sum(axis=-1, keepdims=True)
            a._accum(p * (g - dot))

        return Tensor._result(data, (self,), "softmax", bwd)

    def layer_norm(self, gamma: "Tensor", beta: "Tensor", eps: float = 1e-5) -> "Tensor":
        x = self.data
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xhat = (x - mu) * inv
        data = xhat * gamma.data + beta.data

        def bwd(g, a=self, ga=gamma, be=beta, xhat=xhat, inv=inv):
            n = a.data.shape[-1]
            if ga.requires_grad:
                ga._accum(_unbroadcast(g * xhat, ga.shape))
            if be.requires_grad:
                be._accum(_unbroadcast(g, be.shape))
            if a.requires_grad:
                gx = g * ga.data
                dx = (
                    gx
                    - gx.mean(axis=-1, keepdims=True)
                    - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
                ) * inv
                a._accum(dx)

        return Tensor._result(data, (self, gamma, beta), "layer_norm", bwd)

    # -- backward pass -------------------------------------------------------------

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(self.data.dtype, copy=True)
        else:
            self.grad = self.grad + g

    def backward(self) -> None:
        """Propagate d(self)/d(leaf) to every reachable trainable tensor."""
        if self.data.size != 1:
            raise GraphError("backward requires a scalar root")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
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
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


# -- composite ops used across the objectives ------------------------------------


def pairwise_l2(a: Tensor, b: Tensor, eps: float = 1e-12) -> Tensor:
    """Matrix of Euclidean distances between rows of `a` (l x d) and `b` (m x d)."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[1]:
        raise GraphError(f"pairwise_l2 shape mismatch {a.data.shape} vs {b.data.shape}")
    diff = a.data[:, None, :] - b.data[None, :, :]
    sq = (diff**2).sum(axis=-1)
    data = np.sqrt(sq)

    def bwd(g, a=a, b=b, diff=diff, dist=data):
        safe = np.maximum(dist, eps)[:, :, None]
        contrib = (g[:, :, None] * diff) / safe
        if a.requires_grad:
            a._accum(contrib.sum(axis=1))
        if b.requires_grad:
            b._accum(-contrib.sum(axis=0))

    return Tensor._result(data, (a, b), "pairwise_l2", bwd)


def entropy_from_logits(logits: Tensor) -> Tensor:
    """Per-row Shannon entropy, in nats, of softmax(logits) over the last axis."""
    logp = logits.log_softmax()
    p = logits.softmax()
    return -(p * logp).sum(axis=-1)


def masked_sum(x: Tensor, mask: np.ndarray) -> Tensor:
    """Sum of x over positions where mask is 1; mask carries no gradient."""
    m = Tensor(np.asarray(mask, dtype=x.dtype))
    if m.shape != x.shape:
        raise GraphError(f"masked_sum mask shape {m.shape} != {x.shape}")
    return (x * m).sum()

def masked_mean(x: Tensor, mask: np.ndarray) -> Tensor:
    """Mean of x over unmasked positions; all-masked returns 0 with no gradient."""
    count = float(np.asarray(mask).sum())
    if count == 0:
        return Tensor(np.asarray(0.0, dtype=x.dtype))
    return masked_sum(x, mask) * (1.0 / count)


# -- gradient checking ---------------------------------------------------------------


@dataclass
class GradReport:
    """Outcome of comparing backward() against central finite differences."""

    max_rel_err: dict[str, float] = field(default_factory=dict)
    max_abs_err: dict[str, float] = field(default_factory=dict)
    tol: float = 1e-4
    passed: bool = False

    def worst(self) -> float:
        return max(self.max_rel_err.values(), default=0.0)


def finite_difference(
    f: Callable[[dict[str, Tensor]], Tensor],
    params: dict[str, np.ndarray],
    step: float = 1e-4,
) -> dict[str, np.ndarray]:
    """Central-difference gradient of scalar f, evaluated in float64."""
    if step <= 0:
        raise ValueError("step must be positive")
    base = {k: np.asarray(v, dtype=np.float64).copy() for k, v in params.items()}

    def evaluate(arrays: dict[str, np.ndarray]) -> float:
        tensors = {k: Tensor(v, dtype=np.float64) for k, v in arrays.items()}
        out = f(tensors)
        val = out.item() if isinstance(out, Tensor) else float(out)
        return val

    grads = {}
    for name, arr in base.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = evaluate(base)
            flat[i] = orig - step
            lo = evaluate(base)
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise GraphError(
                    f"non-finite probe at parameter '{name}' coordinate {i}"
                )
            gflat[i] = (hi - lo) / (2.0 * step)
        grads[name] = g
    return grads


def finite_difference_multi(
    f: Callable[[dict[str, Tensor]], dict[str, Tensor]],
    params: dict[str, np.ndarray],
    step: float = 1e-4,
) -> dict[str, dict[str, np.ndarray]]:
    """Central differences for a function returning several scalars at once.

    Each coordinate probe evaluates f a single time and serves every output,
    so checking k related scalars costs the same as checking one.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    base = {k: np.asarray(v, dtype=np.float64).copy() for k, v in params.items()}

    def evaluate(arrays: dict[str, np.ndarray]) -> dict[str, float]:
        tensors = {k: Tensor(v, dtype=np.float64) for k, v in arrays.items()}
        outs = f(tensors)
        return {
            term: (v.item() if isinstance(v, Tensor) else float(v))
            for term, v in outs.items()
        }

    terms = list(evaluate(base))
    grads = {term: {name: np.zeros_like(arr) for name, arr in base.items()} for term in terms}
    for name, arr in base.items():
        flat = arr.reshape(-1)
        gflats = {term: grads[term][name].reshape(-1) for term in terms}
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = evaluate(base)
            flat[i] = orig - step
            lo = evaluate(base)
            flat[i] = orig
            for term in terms:
                if not (np.isfinite(hi[term]) and np.isfinite(lo[term])):
                    raise GraphError(
                        f"non-finite probe for '{term}' at parameter '{name}' coordinate {i}"
                    )
                gflats[term][i] = (hi[term] - lo[term]) / (2.0 * step)
    return grads


def _compare(analytic: dict[str, np.ndarray], numeric: dict[str, np.ndarray], tol: float) -> GradReport:
    report = GradReport(tol=tol)
    ok = True
    for name, ana in analytic.items():
        num = numeric[name]
        abs_err = np.abs(ana - num)
        denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1e-8)
        rel_err = abs_err / denom
        report.max_abs_err[name] = float(abs_err.max()) if abs_err.size else 0.0
        report.max_rel_err[name] = float(rel_err.max()) if rel_err.size else 0.0
        if report.max_rel_err[name] >= tol:
            ok = False
    report.passed = ok
    return report


def grad_check_multi(
    f: Callable[[dict[str, Tensor]], dict[str, Tensor]],
    params: dict[str, np.ndarray],
    step: float = 1e-4,
    tol: float = 1e-4,
) -> dict[str, GradReport]:
    """grad_check for several scalars computed from one shared graph.

    Analytic gradients come from one fresh forward/backward per scalar (tapes
    are single-rooted); the numeric side shares probes via
    finite_difference_multi.
    """
    probe = f({k: Tensor(np.asarray(v, dtype=np.float64)) for k, v in params.items()})
    analytic: dict[str, dict[str, np.ndarray]] = {}
    for term in probe:
        tensors = {
            k: Tensor(np.asarray(v, dtype=np.float64), requires_grad=True)
            for k, v in params.items()
        }
        f(tensors)[term].backward()
        analytic[term] = {
            k: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for k, t in tensors.items()
        }
    numeric = finite_difference_multi(f, params, step=step)
    return {term: _compare(analytic[term], numeric[term], tol) for term in probe}


def grad_check(
    f: Callable[[dict[str, Tensor]], Tensor],
    params: dict[str, np.ndarray],
    step: float = 1e-4,
    tol: float = 1e-4,
) -> GradReport:
    """Compare backward() gradients of f against the finite-difference oracle.

    Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
    """
    tensors = {
        k: Tensor(np.asarray(v, dtype=np.float64), requires_grad=True)
        for k, v in params.items()
    }
    out = f(tensors)
    out.backward()
    numeric = finite_difference(f, params, step=step)
    analytic = {
        k: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for k, t in tensors.items()
    }
    return _compare(analytic, numeric, tol)
