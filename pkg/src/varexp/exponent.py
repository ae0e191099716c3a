"""Variable exponents p(t, x) on a space-time box.

An :class:`ExponentField` wraps a vectorised callable together with the box it
lives on and cached lattice extrema.  The essential infimum/supremum of a
measurable exponent cannot be sampled, so ``p_minus``/``p_plus`` are extrema
over a configurable lattice (64^3 by default).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DegenerateExponent, ExponentOrderViolation, UnsupportedDimension

__all__ = [
    "SpaceTimeBox",
    "SampleLattice",
    "ExponentField",
    "LogHolderReport",
    "conjugate",
    "parabolic_star",
    "limit_exponents",
    "log_holder_check",
    "check_exponent_order",
]


@dataclass(frozen=True)
class SpaceTimeBox:
    """Closed box ``[t0, t1] x [lo1, hi1] x [lo2, hi2]``."""

    t0: float = 0.0
    t1: float = 1.0
    lo: tuple[float, float] = (0.0, 0.0)
    hi: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if not (self.t1 >= self.t0 and self.hi[0] > self.lo[0] and self.hi[1] > self.lo[1]):
            raise ValueError(f"empty space-time box {self}")

    def clamp(self, t, x):
        t = np.clip(t, self.t0, self.t1)
        x = np.clip(x, np.asarray(self.lo), np.asarray(self.hi))
        return t, x

    def contains(self, t, x, tol=1e-12):
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        ok_t = (t >= self.t0 - tol) & (t <= self.t1 + tol)
        ok_x = np.all((x >= np.asarray(self.lo) - tol) & (x <= np.asarray(self.hi) + tol), axis=-1)
        return ok_t & ok_x

    def lattice(self, n_t: int = 64, n_x: int = 64) -> "SampleLattice":
        return SampleLattice.grid(self, n_t, n_x)


@dataclass(frozen=True)
class SampleLattice:
    """Finite set of space-time points, one ``(t, x1, x2)`` row each."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("lattice points must have shape (N, 3)")
        object.__setattr__(self, "points", pts)

    @classmethod
    def grid(cls, box: SpaceTimeBox, n_t: int = 64, n_x: int = 64) -> "SampleLattice":
        ts = np.linspace(box.t0, box.t1, n_t) if box.t1 > box.t0 else np.array([box.t0])
        x1 = np.linspace(box.lo[0], box.hi[0], n_x)
        x2 = np.linspace(box.lo[1], box.hi[1], n_x)
        T, X1, X2 = np.meshgrid(ts, x1, x2, indexing="ij")
        return cls(np.column_stack([T.ravel(), X1.ravel(), X2.ravel()]))

    @property
    def t(self):
        return self.points[:, 0]

    @property
    def x(self):
        return self.points[:, 1:]

    def __len__(self):
        return self.points.shape[0]


def _as_tx(t, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
    return t, x


class ExponentField:
    """A variable exponent ``p(t, x)`` with cached lattice extrema.

    ``func(t, x)`` must accept ``t`` of shape ``(N,)`` and ``x`` of shape
    ``(N, 2)`` and return ``N`` exponent values.  Construction raises
    :class:`DegenerateExponent` when the lattice minimum is not above 1 or a
    sample is not finite.
    """

    def __init__(self, func: Callable, domain: SpaceTimeBox | None = None,
                 lattice: SampleLattice | None = None, name: str = "",
                 time_independent: bool = False, require_above_one: bool = True):
        self._func = func
        self.domain = domain or SpaceTimeBox()
        self.name = name
        self.time_independent = time_independent
        if lattice is None:
            n_t = 1 if time_independent else 64
            lattice = self.domain.lattice(n_t, 64)
        self.lattice = lattice
        vals = self(lattice.t, lattice.x)
        if not np.all(np.isfinite(vals)):
            raise DegenerateExponent(f"exponent {name!r} is not finite on its lattice")
        self.p_minus = float(vals.min())
        self.p_plus = float(vals.max())
        if require_above_one and self.p_minus <= 1.0:
            raise DegenerateExponent(
                f"exponent {name!r} has lattice minimum {self.p_minus} <= 1")

    def __call__(self, t, x) -> np.ndarray:
        t, x = _as_tx(t, x)
        out = np.asarray(self._func(t, x), dtype=float)
        return np.broadcast_to(out, t.shape).copy()

    def extended(self, t, x) -> np.ndarray:
        """Evaluate the clamped nearest-point extension outside the box."""
        t, x = _as_tx(t, x)
        t, x = self.domain.clamp(t, x)
        return self(t, x)

    def __repr__(self):
        return f"ExponentField({self.name!r}, p-={self.p_minus:.6g}, p+={self.p_plus:.6g})"

    def map(self, fn: Callable[[np.ndarray], np.ndarray], name: str = "",
            require_above_one: bool = True) -> "ExponentField":
        """Pointwise composition ``fn(p(t, x))`` on the same box and lattice."""
        inner = self._func
        return ExponentField(lambda t, x: fn(np.asarray(inner(t, x), dtype=float)),
                             self.domain, self.lattice, name or f"map({self.name})",
                             self.time_independent, require_above_one)

    def conjugate(self) -> "ExponentField":
        return self.map(conjugate, name=f"{self.name}'")

    def star(self, d: int = 2) -> "ExponentField":
        """Variable parabolic interpolation exponent ``p_*``."""
        return self.map(lambda v: parabolic_star(v, d), name=f"{self.name}_*")

    def shifted(self, delta: float, name: str = "") -> "ExponentField":
        return self.map(lambda v: v + delta, name=name or f"{self.name}{delta:+g}")

    @classmethod
    def constant(cls, value: float, domain: SpaceTimeBox | None = None) -> "ExponentField":
        value = float(value)
        if not value > 1.0:
            raise DegenerateExponent(f"constant exponent {value} must exceed 1")
        lattice = SampleLattice(np.array([[(domain or SpaceTimeBox()).t0,
                                           *(domain or SpaceTimeBox()).lo]]))
        field_ = cls(lambda t, x: np.full(np.shape(t), value), domain, lattice,
                     name=f"constant {value:g}", time_independent=True)
        field_.value = value
        return field_

    @classmethod
    def affine(cls, a: float, b1: float, b2: float, bt: float = 0.0,
               domain: SpaceTimeBox | None = None,
               lattice: SampleLattice | None = None) -> "ExponentField":
        """``p(t, x) = a + b1*x1 + b2*x2 + bt*t``; extrema are attained at corners."""
        dom = domain or SpaceTimeBox()
        if lattice is None:
            corners = np.array([[t, x1, x2] for t in (dom.t0, dom.t1)
                                for x1 in (dom.lo[0], dom.hi[0])
                                for x2 in (dom.lo[1], dom.hi[1])])
            lattice = SampleLattice(corners)
        return cls(lambda t, x: a + b1 * x[..., 0] + b2 * x[..., 1] + bt * t, dom, lattice,
                   name=f"affine {a:g} {b1:g} {b2:g} {bt:g}", time_independent=(bt == 0.0))


def conjugate(p_value):
    """Hölder conjugate ``p / (p - 1)``; accepts scalars or arrays."""
    p = np.asarray(p_value, dtype=float)
    if np.any(p <= 1.0):
        raise DegenerateExponent(f"conjugate exponent undefined for p <= 1 (got min {p.min()})")
    out = p / (p - 1.0)
    return float(out) if out.ndim == 0 else out


def parabolic_star(p_value, d: int = 2):
    """Parabolic interpolation exponent: ``p(d+2)/d`` below ``d``, ``p+2`` from ``d`` on."""
    if int(d) != d or d < 2:
        raise UnsupportedDimension(f"dimension must be an integer >= 2, got {d}")
    p = np.asarray(p_value, dtype=float)
    if np.any(p < 1.0):
        raise DegenerateExponent("parabolic interpolation exponent needs p >= 1")
    out = np.where(p < d, p * (d + 2) / d, p + 2.0)
    return float(out) if out.ndim == 0 else out


def limit_exponents(p: ExponentField, lattice: SampleLattice) -> tuple[float, float]:
    """Minimum and maximum of ``p`` over ``lattice``."""
    if len(lattice) == 0:
        raise ValueError("empty lattice")
    vals = p(lattice.t, lattice.x)
    lo, hi = float(vals.min()), float(vals.max())
    if lo <= 1.0:
        raise DegenerateExponent(f"sampled exponent value {lo} <= 1")
    return lo, hi


def check_exponent_order(q_vals, upper_vals, lower_vals=None, what="q"):
    """Raise :class:`ExponentOrderViolation` unless ``lower <= q <= upper`` pointwise."""
    q_vals = np.asarray(q_vals, dtype=float)
    bad = q_vals > np.asarray(upper_vals) + 1e-12
    if lower_vals is not None:
        bad |= q_vals < np.asarray(lower_vals) - 1e-12
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ExponentOrderViolation(f"{what} violates its exponent bounds at sample {i}")


@dataclass
class LogHolderReport:
    local_constant: float
    decay_constant: float
    p_infinity: float
    max_violation: float
    pairs: int = field(default=0)


def log_holder_check(p: ExponentField, lattice: SampleLattice, budget_c1: float,
                     chunk: int = 512) -> LogHolderReport:
    """Brute-force log-Hölder moduli over all lattice pairs.

    The local constant is ``max |p(z) - p(w)| * log(e + 1/|z - w|)``; the decay
    constant is the smallest ``c2`` with ``|p(z) - p_inf| <= c2 / log(e + |z|)``
    over the best ``p_inf``.
    """
    z = lattice.points
    if z.shape[0] < 2:
        raise ValueError("log-Hölder check needs at least two lattice points")
    vals = p(lattice.t, lattice.x)
    local = 0.0
    n = z.shape[0]
    for start in range(0, n, chunk):
        zi = z[start:start + chunk]
        dist = np.linalg.norm(zi[:, None, :] - z[None, :, :], axis=-1)
        dp = np.abs(vals[start:start + chunk, None] - vals[None, :])
        mask = dist > 0
        weight = np.log(math.e + 1.0 / np.where(mask, dist, 1.0))
        if np.any(mask):
            local = max(local, float(np.max(np.where(mask, dp * weight, 0.0))))
    radial = np.log(math.e + np.linalg.norm(z, axis=1))

    def decay(pinf):
        return float(np.max(np.abs(vals - pinf) * radial))

    lo, hi = float(vals.min()), float(vals.max())
    if hi - lo == 0.0:
        p_inf, dec = lo, 0.0
    else:
        res = minimize_scalar(decay, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        p_inf, dec = float(res.x), float(res.fun)
    return LogHolderReport(local_constant=local, decay_constant=dec, p_infinity=p_inf,
                           max_violation=max(0.0, local - budget_c1), pairs=n * (n - 1) // 2)
