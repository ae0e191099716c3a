"""Quadrature-sampled fields, modulars and Luxemburg norms.

A :class:`DiscreteField` is a finite quadrature representation of a scalar,
vector or symmetric-tensor valued function on a space-time set ``G``: values at
nodes ``(t, x1, x2)`` with positive weights summing to ``|G|``.  Every integral
below is the corresponding weighted sum.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ExponentOrderViolation, FieldOverflow, RootFindFailure
from .exponent import ExponentField, conjugate

__all__ = [
    "DiscreteField",
    "ModularValue",
    "HolderResult",
    "gauss_box_quadrature",
    "magnitude",
    "modular",
    "luxemburg_norm",
    "holder_check",
    "embedding_check",
    "TOL_NUM",
]

TOL_NUM = 1e-9
_OVERFLOW = 1e300
_RANKS = ("scalar", "vector", "sym_tensor")


class DiscreteField:
    """Values at quadrature nodes plus the node weights.

    ``values`` has shape ``(N,)`` (scalar), ``(N, 2)`` (vector) or
    ``(N, 2, 2)`` (symmetric tensor); ``points`` is ``(N, 3)`` with columns
    ``t, x1, x2``; ``weights`` is ``(N,)`` and strictly positive.
    """

    def __init__(self, values, points, weights, rank: str | None = None):
        values = np.asarray(values, dtype=float)
        points = np.atleast_2d(np.asarray(points, dtype=float))
        weights = np.asarray(weights, dtype=float).ravel()
        if rank is None:
            rank = _RANKS[min(values.ndim - 1, 2)]
        if rank not in _RANKS:
            raise ValueError(f"unknown rank {rank!r}")
        n = weights.shape[0]
        if values.shape[0] != n or points.shape != (n, 3):
            raise ValueError(
                f"length mismatch: values {values.shape}, points {points.shape}, weights {weights.shape}")
        expected = {"scalar": (n,), "vector": (n, 2), "sym_tensor": (n, 2, 2)}[rank]
        if values.shape != expected:
            raise ValueError(f"{rank} field needs values of shape {expected}, got {values.shape}")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        if rank == "sym_tensor" and not np.array_equal(values, np.swapaxes(values, 1, 2)):
            raise ValueError("sym_tensor values must be exactly symmetric")
        self.values = values
        self.points = points
        self.weights = weights
        self.rank = rank
        for arr in (self.values, self.points, self.weights):
            arr.setflags(write=False)

    @classmethod
    def from_function(cls, func, points, weights, rank: str | None = None):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(func(points[:, 0], points[:, 1:]), points, weights, rank)

    @property
    def t(self):
        return self.points[:, 0]

    @property
    def x(self):
        return self.points[:, 1:]

    @property
    def measure(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self):
        return self.weights.shape[0]

    def with_values(self, values, rank: str | None = None) -> "DiscreteField":
        return DiscreteField(values, self.points, self.weights, rank)

    def __mul__(self, alpha):
        return self.with_values(float(alpha) * self.values, self.rank)

    __rmul__ = __mul__

    def __truediv__(self, alpha):
        return self.with_values(self.values / float(alpha), self.rank)

    def __add__(self, other: "DiscreteField"):
        _require_shared_quadrature(self, other)
        return self.with_values(self.values + other.values, self.rank)

    def __sub__(self, other: "DiscreteField"):
        _require_shared_quadrature(self, other)
        return self.with_values(self.values - other.values, self.rank)


def _require_shared_quadrature(f, g):
    if f.weights.shape != g.weights.shape or not (
            np.array_equal(f.points, g.points) and np.array_equal(f.weights, g.weights)):
        raise ValueError("fields do not share a quadrature")


@dataclass(frozen=True)
class ModularValue:
    value: float
    exponent_ref: object = None

    def __float__(self):
        return self.value


class HolderResult(NamedTuple):
    lhs: float
    rhs: float
    slack: float


def gauss_box_quadrature(n: int = 16, lo=(0.0, 0.0), hi=(1.0, 1.0), t: float = 0.0,
                         t_interval: tuple[float, float] | None = None, n_t: int = 1):
    """Tensor Gauss-Legendre nodes on a rectangle, optionally times an interval.

    Without ``t_interval`` the nodes sit on the time slice ``t`` and the weights
    sum to the rectangle's area.
    """
    g, gw = np.polynomial.legendre.leggauss(n)
    x1 = lo[0] + (hi[0] - lo[0]) * (g + 1) / 2
    x2 = lo[1] + (hi[1] - lo[1]) * (g + 1) / 2
    w1 = gw * (hi[0] - lo[0]) / 2
    w2 = gw * (hi[1] - lo[1]) / 2
    if t_interval is None:
        ts, wt = np.array([t]), np.array([1.0])
    else:
        gt, gwt = np.polynomial.legendre.leggauss(n_t)
        a, b = t_interval
        ts, wt = a + (b - a) * (gt + 1) / 2, gwt * (b - a) / 2
    T, X1, X2 = np.meshgrid(ts, x1, x2, indexing="ij")
    WT, W1, W2 = np.meshgrid(wt, w1, w2, indexing="ij")
    points = np.column_stack([T.ravel(), X1.ravel(), X2.ravel()])
    return points, (WT * W1 * W2).ravel()


def magnitude(values, rank: str | None = None) -> np.ndarray:
    """Euclidean / Frobenius magnitude per node."""
    values = np.asarray(values, dtype=float)
    if rank is None:
        rank = _RANKS[min(values.ndim - 1, 2)]
    if rank == "scalar":
        return np.abs(values)
    axes = tuple(range(1, values.ndim))
    return np.sqrt(np.sum(values * values, axis=axes))


def _exponent_values(p, f: DiscreteField) -> np.ndarray:
    if isinstance(p, ExponentField):
        return p(f.t, f.x)
    vals = np.asarray(p, dtype=float)
    return np.broadcast_to(vals, f.weights.shape)


def _powers(a, pv):
    """``a**pv`` through ``exp(pv log a)`` with zeros kept at zero."""
    if np.any(~np.isfinite(a)) or np.any(a >= _OVERFLOW):
        raise FieldOverflow("field magnitude is not finite or exceeds 1e300")
    out = np.zeros_like(a)
    nz = a > 0
    out[nz] = np.exp(pv[nz] * np.log(a[nz]))
    return out


def modular(f: DiscreteField, p) -> ModularValue:
    """``sum_i w_i |f_i|^{p(t_i, x_i)}``."""
    a = magnitude(f.values, f.rank)
    pv = _exponent_values(p, f)
    return ModularValue(float(np.sum(f.weights * _powers(a, pv))), p)


def luxemburg_norm(f: DiscreteField, p, tol: float = 1e-12, max_iter: int = 200) -> float:
    """``inf{lam > 0 : modular(f / lam) <= 1}`` by bracketing and bisection in ``log lam``.

    The returned value is always on the feasible side, so
    ``modular(f / norm)`` lies in ``[1 - tol, 1]``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = magnitude(f.values, f.rank)
    if np.any(~np.isfinite(a)) or np.any(a >= _OVERFLOW):
        raise RootFindFailure("field magnitude is not finite or exceeds 1e300")
    nz = a > 0
    if not np.any(nz):
        return 0.0
    pv = _exponent_values(p, f)[nz]
    la = np.log(a[nz])
    w = f.weights[nz]

    def rho(log_lam):
        return float(np.sum(w * np.exp(pv * (la - log_lam))))

    pm, pp = float(pv.min()), float(pv.max())
    log_r = np.log(rho(0.0))
    ends = sorted((log_r / pm, log_r / pp))
    span = 1e-9 * max(1.0, abs(ends[0]), abs(ends[1]))
    lo, hi = ends[0] - span, ends[1] + span
    for _ in range(max_iter):
        if rho(lo) > 1.0:
            break
        lo -= max(1.0, abs(lo))
    for _ in range(max_iter):
        if rho(hi) <= 1.0:
            break
        hi += max(1.0, abs(hi))
    if not (rho(lo) > 1.0 >= rho(hi)):
        raise RootFindFailure("could not bracket the Luxemburg norm")
    tol_log = tol / pp
    for _ in range(max_iter):
        if hi - lo <= tol_log:
            return float(np.exp(hi))
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            return float(np.exp(hi))
        if rho(mid) > 1.0:
            lo = mid
        else:
            hi = mid
    raise RootFindFailure(f"bisection did not converge in {max_iter} iterations")


def _contract(g: DiscreteField, f: DiscreteField) -> np.ndarray:
    if g.rank == "scalar" or f.rank == "scalar":
        prod = (g.values.reshape(g.values.shape + (1,) * (f.values.ndim - g.values.ndim))
                * f.values.reshape(f.values.shape + (1,) * (g.values.ndim - f.values.ndim)))
        return magnitude(prod)
    if g.rank != f.rank:
        raise ValueError(f"cannot contract {g.rank} with {f.rank}")
    axes = tuple(range(1, f.values.ndim))
    return np.abs(np.sum(g.values * f.values, axis=axes))


def holder_check(g: DiscreteField, f: DiscreteField, p: ExponentField) -> HolderResult:
    """Compare ``||g f||_1`` with ``2 ||g||_{p'} ||f||_p``."""
    _require_shared_quadrature(g, f)
    lhs = float(np.sum(f.weights * _contract(g, f)))
    pv = _exponent_values(p, f)
    rhs = 2.0 * luxemburg_norm(g, conjugate(pv)) * luxemburg_norm(f, pv)
    return HolderResult(lhs, rhs, rhs - lhs)


def embedding_check(f: DiscreteField, q: ExponentField, p: ExponentField) -> float:
    """Slack of ``||f||_q <= 2 (1 + |G|) ||f||_p`` for ``q <= p``."""
    qv = _exponent_values(q, f)
    pv = _exponent_values(p, f)
    if np.any(qv > pv):
        i = int(np.argmax(qv > pv))
        raise ExponentOrderViolation(f"q > p at quadrature node {i}: {qv[i]} > {pv[i]}")
    return 2.0 * (1.0 + f.measure) * luxemburg_norm(f, pv) - luxemburg_norm(f, qv)
