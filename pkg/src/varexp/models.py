"""Flux ``S`` and lower-order term ``b`` plus samplers for their structure conditions.

Every model evaluates vectorised over quadrature nodes: ``t`` has shape ``(N,)``,
``x`` shape ``(N, 2)``, tensors ``(N, 2, 2)`` and vectors ``(N, 2)``.  Samplers
return a :class:`ConditionReport` whose ``worst_slack`` is the minimum of
``rhs - lhs`` over the sampled arguments, so a passing model has
``worst_slack >= -TOL_NUM``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linprog

from .errors import ExponentOrderViolation, SingularFlux
from .exponent import ExponentField, conjugate, parabolic_star
from .mesh_fem import FEFunction, fe_space
from .spaces import TOL_NUM

__all__ = [
    "FluxModel",
    "LowerOrderModel",
    "ConditionReport",
    "BoundFunction",
    "prototype_flux",
    "flux_from_function",
    "interaction_exponent",
    "default_lower_order",
    "check_monotone",
    "check_growth_coercivity",
    "check_lower_order",
    "check_c5_c6",
    "fit_c3_bound",
    "check_c3",
    "hemicontinuity_wiggle",
    "young_constant",
    "operator_pairing",
]


def _zero_scalar(t, x):
    return np.zeros(np.shape(t))


def _frob(A):
    return np.sqrt(np.einsum("nij,nij->n", A, A))


@dataclass
class FluxModel:
    """A Carathéodory flux ``S(t, x, A)`` with its (p, delta)-structure constants.

    ``beta`` and ``c1`` are callables ``(t, x) -> (N,)``; they are sampled on
    whatever quadrature the caller uses.  ``c5_coefficient`` and ``c5_offset``
    are the constants declared for the time-slice coercivity
    ``<S u, u> >= c5_coefficient * rho_p(eps u) - c5_offset(t)``.
    """

    evaluate: Callable
    p: ExponentField
    delta: float = 0.0
    alpha: float = 1.0
    c0: float = 0.5
    beta: Callable = _zero_scalar
    c1: Callable = _zero_scalar
    jacobian: Callable | None = None
    name: str = "flux"
    c5_coefficient: float | None = None
    c5_uses_footnote: bool = False

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be non-negative")
        if self.alpha < 1:
            raise ValueError("alpha must be at least 1")
        if self.c0 <= 0:
            raise ValueError("c0 must be positive")
        if self.c5_coefficient is None:
            self.c5_coefficient = self.c0 / 2

    def __call__(self, t, x, A):
        return self.evaluate(t, x, A)

    def tangent(self, t, x, A):
        """``dS/dA`` as a ``(N, 2, 2, 2, 2)`` tensor acting on symmetric increments."""
        if self.jacobian is not None:
            return self.jacobian(t, x, A)
        return finite_difference_tangent(self.evaluate, t, x, A)

    def c5_offset(self, t, points, weights):
        """Offset of the coercivity bound at time ``t`` on the given spatial quadrature."""
        tt = np.full(len(weights), t)
        pv = self.p(tt, points)
        rho_delta = float(np.sum(weights * self.delta ** pv)) if self.delta > 0 else 0.0
        c1 = float(np.sum(weights * self.c1(tt, points)))
        if self.c5_uses_footnote:
            return rho_delta + c1
        return self.c0 * rho_delta + c1


_SYM_BASIS = np.array([[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 1.0]],
                       [[0.0, 1.0], [1.0, 0.0]]])


def finite_difference_tangent(evaluate, t, x, A, rel_step=1e-6):
    """Central-difference ``dS/dA`` in the symmetric basis, expanded to a 4-tensor."""
    A = np.asarray(A, dtype=float)
    h = rel_step * np.maximum(1.0, _frob(A))[:, None, None]
    D = np.zeros(A.shape[:1] + (2, 2, 2, 2))
    cols = []
    for E in _SYM_BASIS:
        cols.append((evaluate(t, x, A + h * E) - evaluate(t, x, A - h * E)) / (2 * h))
    D[..., 0, 0] = cols[0]
    D[..., 1, 1] = cols[1]
    D[..., 0, 1] = 0.5 * cols[2]
    D[..., 1, 0] = 0.5 * cols[2]
    return D


def prototype_flux(p: ExponentField, delta: float = 0.1) -> FluxModel:
    """``S(t, x, A) = (delta + |A|)^{p(t, x) - 2} A``.

    Declared constants: ``alpha = 1``, ``beta = 0``, ``c0 = 1/2`` and
    ``c1 = delta^p``.  The coercivity on time slices uses
    ``(delta + a)^{p-2} a^2 >= a^p / 2 - delta^p`` directly, giving the
    coefficient ``1/2`` and offset ``rho_p(delta)``.
    """
    delta = float(delta)
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if delta == 0.0 and p.p_minus < 2.0:
        raise SingularFlux(f"delta = 0 with p- = {p.p_minus:g} < 2 makes the flux singular at A = 0")

    def evaluate(t, x, A):
        A = np.asarray(A, dtype=float)
        n = _frob(A)
        pv = p(t, x)
        base = delta + n
        g = np.where(base > 0, np.power(np.where(base > 0, base, 1.0), pv - 2.0), 0.0)
        return g[:, None, None] * A

    def jacobian(t, x, A):
        A = np.asarray(A, dtype=float)
        n = _frob(A)
        pv = p(t, x)
        base = delta + n
        safe = np.where(base > 0, base, 1.0)
        g = np.where(base > 0, safe ** (pv - 2.0), 0.0)
        nz = n > 0
        h = np.where(nz, (pv - 2.0) * safe ** (pv - 3.0) / np.where(nz, n, 1.0), 0.0)
        eye = np.einsum("ac,bd->abcd", np.eye(2), np.eye(2))
        return g[:, None, None, None, None] * eye + h[:, None, None, None, None] * np.einsum(
            "nab,ncd->nabcd", A, A)

    return FluxModel(evaluate=evaluate, p=p, delta=delta, alpha=1.0, c0=0.5,
                     beta=_zero_scalar, c1=lambda t, x: delta ** p(t, x) if delta > 0 else
                     np.zeros(np.shape(t)), jacobian=jacobian,
                     name=f"prototype(delta={delta:g})", c5_coefficient=0.5,
                     c5_uses_footnote=True)


def flux_from_function(evaluate, p: ExponentField, **constants) -> FluxModel:
    """Wrap a user flux; its tangent falls back to finite differences."""
    return FluxModel(evaluate=evaluate, p=p, **constants)


@dataclass
class LowerOrderModel:
    """Lower-order term ``b(t, x, a)`` with its (B.2)/(B.3) constants."""

    evaluate: Callable
    r: ExponentField
    gamma: float = 1.0
    c2: float = 0.0
    eta: Callable = _zero_scalar
    c3: Callable = _zero_scalar
    eps_star: float | None = None
    jacobian: Callable | None = None
    mode: str = "custom"

    def __post_init__(self):
        if self.gamma < 1:
            raise ValueError("gamma must be at least 1")
        if self.c2 < 0:
            raise ValueError("c2 must be non-negative")

    def __call__(self, t, x, a):
        return self.evaluate(t, x, a)

    def tangent(self, t, x, a):
        if self.jacobian is not None:
            return self.jacobian(t, x, a)
        a = np.asarray(a, dtype=float)
        h = 1e-6 * np.maximum(1.0, np.linalg.norm(a, axis=1))[:, None]
        cols = []
        for c in range(2):
            e = np.zeros(2)
            e[c] = 1.0
            cols.append((self.evaluate(t, x, a + h * e) - self.evaluate(t, x, a - h * e)) / (2 * h))
        return np.stack(cols, axis=2)


def interaction_exponent(p: ExponentField, eps_star: float, d: int = 2) -> ExponentField:
    """``r = max{2, p_*} - eps_star`` with ``eps_star`` in ``(0, (p-)_* - 1]``."""
    upper = parabolic_star(p.p_minus, d) - 1.0
    if not 0.0 < eps_star <= upper + 1e-12:
        raise ExponentOrderViolation(
            f"eps_star = {eps_star} must lie in (0, {upper:g}] for p- = {p.p_minus:g}")
    return p.map(lambda v: np.maximum(2.0, parabolic_star(v, d)) - eps_star, name="r")


def default_lower_order(r: ExponentField | None = None, c2: float = 1.0,
                        mode: str = "linear_damping", *, p: ExponentField | None = None,
                        eps_star: float | None = None) -> LowerOrderModel:
    """Default lower-order terms.

    ``linear_damping``: ``b = c2 a``; needs ``r >= 2`` for the growth bound.
    ``saturating``: ``b = c2 a (1 + |a|)^{r - 2}``, growth ``r - 1``.
    ``zero``: ``b = 0``.

    ``r`` may be given directly or built from ``p`` and ``eps_star``; when all
    three are given the relation ``r = max{2, p_*} - eps_star`` is asserted on
    the lattice of ``p``.
    """
    if r is None:
        if p is None or eps_star is None:
            raise ValueError("give r, or p together with eps_star")
        r = interaction_exponent(p, eps_star)
    elif p is not None and eps_star is not None:
        ref = interaction_exponent(p, eps_star)
        lat = p.lattice
        if not np.allclose(r(lat.t, lat.x), ref(lat.t, lat.x), rtol=0, atol=1e-12):
            raise ExponentOrderViolation("r differs from max{2, p_*} - eps_star on the lattice")
    c2 = float(c2)
    if not (math.isfinite(c2) and c2 >= 0):
        raise ValueError("c2 must be finite and non-negative")
    gamma = max(1.0, c2)

    if mode == "linear_damping":
        if r.p_minus < 2.0 - 1e-12:
            raise ExponentOrderViolation(
                f"linear damping grows faster than (1+|a|)^(r-1) when r- = {r.p_minus:g} < 2")
        return LowerOrderModel(
            evaluate=lambda t, x, a: c2 * np.asarray(a, dtype=float),
            jacobian=lambda t, x, a: np.broadcast_to(c2 * np.eye(2), (len(a), 2, 2)).copy(),
            r=r, gamma=gamma, c2=c2, eps_star=eps_star, mode=mode)

    if mode == "saturating":
        def evaluate(t, x, a):
            a = np.asarray(a, dtype=float)
            n = np.linalg.norm(a, axis=1)
            return (c2 * (1.0 + n) ** (r(t, x) - 2.0))[:, None] * a

        def jacobian(t, x, a):
            a = np.asarray(a, dtype=float)
            n = np.linalg.norm(a, axis=1)
            rv = r(t, x)
            g = c2 * (1.0 + n) ** (rv - 2.0)
            nz = n > 0
            h = np.where(nz, c2 * (rv - 2.0) * (1.0 + n) ** (rv - 3.0) / np.where(nz, n, 1.0), 0.0)
            return g[:, None, None] * np.eye(2) + h[:, None, None] * np.einsum("ni,nj->nij", a, a)

        return LowerOrderModel(evaluate=evaluate, jacobian=jacobian, r=r, gamma=gamma,
                               c2=c2 if r.p_minus >= 2.0 else 0.0, eps_star=eps_star, mode=mode)

    if mode == "zero":
        return LowerOrderModel(evaluate=lambda t, x, a: np.zeros_like(np.asarray(a, dtype=float)),
                               jacobian=lambda t, x, a: np.zeros((len(a), 2, 2)),
                               r=r, gamma=1.0, c2=0.0, eps_star=eps_star, mode=mode)
    raise ValueError(f"unknown lower-order mode {mode!r}")


@dataclass
class ConditionReport:
    condition_id: str
    samples: int
    worst_slack: float
    worst_point: tuple = ()
    seed: int | None = None
    constants: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.worst_slack >= -TOL_NUM

    def row(self):
        t, x1, x2 = (tuple(self.worst_point[:3]) + (float("nan"),) * 3)[:3]
        return (self.condition_id, self.samples, self.worst_slack, t, x1, x2)


def _sample_points(p: ExponentField, n, rng):
    box = p.domain
    t = rng.uniform(box.t0, box.t1, n) if box.t1 > box.t0 else np.full(n, box.t0)
    x = rng.uniform(np.asarray(box.lo), np.asarray(box.hi), (n, 2))
    return t, x


def _random_sym(rng, n, lo=1e-3, hi=1e2):
    M = rng.standard_normal((n, 2, 2))
    M = 0.5 * (M + np.swapaxes(M, 1, 2))
    M /= _frob(M)[:, None, None]
    mag = np.exp(rng.uniform(np.log(lo), np.log(hi), n))
    M *= mag[:, None, None]
    M[: max(1, n // 100)] = 0.0  # always include the origin
    return M


def _random_vec(rng, n, lo=1e-3, hi=1e2):
    v = rng.standard_normal((n, 2))
    v /= np.linalg.norm(v, axis=1)[:, None]
    v *= np.exp(rng.uniform(np.log(lo), np.log(hi), n))[:, None]
    v[: max(1, n // 100)] = 0.0
    return v


def _report(cid, slack, t, x, n, seed, constants=None):
    i = int(np.argmin(slack))
    return ConditionReport(cid, n, float(slack[i]), (float(t[i]), float(x[i, 0]), float(x[i, 1])),
                           seed, constants or {})


def check_monotone(S: FluxModel, n_samples: int = 10_000, seed: int = 0) -> ConditionReport:
    """(S.4): ``(S(A) - S(B)) : (A - B) >= 0`` on random ``(t, x, A, B)``."""
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    t, x = _sample_points(S.p, n_samples, rng)
    A = _random_sym(rng, n_samples)
    # half of the pairs are close together, where cancellation is hardest
    B = _random_sym(rng, n_samples)
    near = rng.random(n_samples) < 0.5
    B[near] = A[near] + 1e-3 * _random_sym(rng, int(near.sum()), 1e-3, 1.0)
    slack = np.einsum("nij,nij->n", S(t, x, A) - S(t, x, B), A - B)
    return _report("S4", slack, t, x, n_samples, seed)


def check_growth_coercivity(S: FluxModel, n_samples: int = 10_000, seed: int = 0):
    """(S.2) and (S.3) slacks with the model's declared constants."""
    rng = np.random.default_rng(seed)
    t, x = _sample_points(S.p, n_samples, rng)
    A = _random_sym(rng, n_samples)
    n = _frob(A)
    pv = S.p(t, x)
    base = S.delta + n
    shape = np.where(base > 0, np.where(base > 0, base, 1.0) ** (pv - 2.0), 0.0)
    SA = S(t, x, A)
    s2 = S.alpha * shape * n + S.beta(t, x) - _frob(SA)
    s3 = np.einsum("nij,nij->n", SA, A) - S.c0 * shape * n * n + S.c1(t, x)
    consts = dict(alpha=S.alpha, c0=S.c0, delta=S.delta)
    return (_report("S2", s2, t, x, n_samples, seed, consts),
            _report("S3", s3, t, x, n_samples, seed, consts))


def check_lower_order(b: LowerOrderModel, n_samples: int = 10_000, seed: int = 0):
    """(B.2) growth and (B.3) coercivity slacks for ``b``."""
    rng = np.random.default_rng(seed)
    t, x = _sample_points(b.r, n_samples, rng)
    a = _random_vec(rng, n_samples)
    ba = b(t, x, a)
    na = np.linalg.norm(a, axis=1)
    s2 = b.gamma * (1.0 + na) ** (b.r(t, x) - 1.0) + b.eta(t, x) - np.linalg.norm(ba, axis=1)
    s3 = np.einsum("ni,ni->n", ba, a) - b.c2 * na * na + b.c3(t, x)
    consts = dict(gamma=b.gamma, c2=b.c2, mode=b.mode)
    return (_report("B2", s2, t, x, n_samples, seed, consts),
            _report("B3", s3, t, x, n_samples, seed, consts))


def hemicontinuity_wiggle(S: FluxModel, t, x, A, B, C, s0: float = 0.3,
                          steps=(1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)):
    """``|S(A + (s0+h)B):C - S(A + s0 B):C|`` for shrinking ``h``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    A, B, C = (np.asarray(M, dtype=float)[None] for M in (A, B, C))
    ref = np.einsum("nij,nij->n", S(t, x, A + s0 * B), C)[0]
    return np.array([abs(np.einsum("nij,nij->n", S(t, x, A + (s0 + h) * B), C)[0] - ref)
                     for h in steps])


def young_constant(pv, eps):
    """Pointwise ``c_p(eps) = (p' eps)^{1-p} / p`` of ``ab <= eps a^{p'} + c_p(eps) b^p``."""
    pv = np.asarray(pv, dtype=float)
    return (conjugate(pv) * eps) ** (1.0 - pv) / pv


def operator_pairing(u: FEFunction, v: FEFunction, t: float, S: FluxModel | None = None,
                     b: LowerOrderModel | None = None, rule: int = 3):
    """``<S(t) u, v> + <B(t) u, v>`` by quadrature on the mesh of ``u``."""
    space = fe_space(u.mesh, rule)
    pts = space.q_points.reshape(-1, 2)
    w = space.q_weights.ravel()
    tt = np.full(len(w), t)
    nq = space.q_weights.shape[1]
    total = 0.0
    if S is not None:
        eu = np.repeat(space.eps_of(u.vector()), nq, axis=0)
        ev = np.repeat(space.eps_of(v.vector()), nq, axis=0)
        total += float(np.sum(w * np.einsum("nij,nij->n", S(tt, pts, eu), ev)))
    if b is not None:
        uq = space.values_at_quadrature(u.vector()).reshape(-1, 2)
        vq = space.values_at_quadrature(v.vector()).reshape(-1, 2)
        total += float(np.sum(w * np.einsum("ni,ni->n", b(tt, pts, uq), vq)))
    return total


def _slice_quantities(u: FEFunction, t: float, p: ExponentField, rule: int = 3):
    space = fe_space(u.mesh, rule)
    pts = space.q_points.reshape(-1, 2)
    w = space.q_weights.ravel()
    tt = np.full(len(w), t)
    nq = space.q_weights.shape[1]
    eu = np.repeat(space.eps_of(u.vector()), nq, axis=0)
    uq = space.values_at_quadrature(u.vector()).reshape(-1, 2)
    return space, pts, w, tt, eu, uq


def check_c5_c6(op_family: str, fields, constants: dict | None = None, *,
                S: FluxModel | None = None, b: LowerOrderModel | None = None,
                t: float = 0.0, rule: int = 3, eps_grid=(0.05, 0.1, 0.2, 0.4)):
    """Time-slice coercivity and ``eps``-splitting bounds on sample FE functions.

    ``op_family`` is ``"S"``, ``"B"`` or ``"S+B"``.  ``fields`` is a sequence of
    FE functions on one mesh; (C.6) is checked on every ordered pair of
    consecutive fields.  Returns ``(C5 report, C6 report)``.

    For the flux the (C.6) right-hand side is the Young splitting followed by
    the growth bound ``|S|^{p'} <= 2^{(p-)'} [alpha^{(p-)'} 2^{p+} (delta^p + |A|^p)
    + beta^{p'}]``.  For ``b`` it is the Young splitting in ``r`` followed by
    ``|b|^{r'} <= 2^{(r-)'} [gamma^{(r-)'} 2^{r+} (1 + |a|^r) + eta^{r'}]``.
    The Young constant is the pointwise maximum over the quadrature nodes.
    """
    constants = dict(constants or {})
    use_S = "S" in op_family
    use_B = "B" in op_family
    if use_S and S is None or use_B and b is None:
        raise ValueError(f"op_family {op_family!r} needs the corresponding models")
    fields = list(fields)
    p = S.p if S is not None else constants.get("p")
    c5_worst, c5_at = np.inf, None
    c6_worst, c6_at = np.inf, None
    for k, u in enumerate(fields):
        space, pts, w, tt, eu, uq = _slice_quantities(u, t, p, rule)
        lhs = operator_pairing(u, u, t, S if use_S else None, b if use_B else None, rule)
        y2 = float(u.vector() @ (space.mass @ u.vector()))
        rhs = 0.0
        if use_S:
            rho_eps = float(np.sum(w * _frob(eu) ** p(tt, pts)))
            rhs += S.c5_coefficient * rho_eps - S.c5_offset(t, pts, w)
        if use_B:
            rhs += -b.c2 * y2 - float(np.sum(w * b.c3(tt, pts)))
        if lhs - rhs < c5_worst:
            c5_worst, c5_at = lhs - rhs, (t, k)

        v = fields[(k + 1) % len(fields)]
        _, _, _, _, ev, vq = _slice_quantities(v, t, p, rule)
        pair = abs(operator_pairing(u, v, t, S if use_S else None, b if use_B else None, rule))
        for eps in eps_grid:
            bound = 0.0
            if use_S:
                pv = p(tt, pts)
                pm, pp = float(pv.min()), float(pv.max())
                eps0 = 1.0 / conjugate(pp)
                e = min(eps, 0.999 * eps0)
                cp = float(np.max(young_constant(pv, e)))
                growth = 2.0 ** conjugate(pm) * (
                    S.alpha ** conjugate(pm) * 2.0 ** pp
                    * np.sum(w * (S.delta ** pv + _frob(eu) ** pv))
                    + np.sum(w * S.beta(tt, pts) ** conjugate(pv)))
                bound += e * growth + cp * float(np.sum(w * _frob(ev) ** pv))
            if use_B:
                rv = b.r(tt, pts)
                rm, rp = float(rv.min()), float(rv.max())
                e = min(eps, 0.999 / conjugate(rp))
                cr = float(np.max(young_constant(rv, e)))
                na = np.linalg.norm(uq, axis=1)
                growth = 2.0 ** conjugate(rm) * (
                    b.gamma ** conjugate(rm) * 2.0 ** rp * np.sum(w * (1.0 + na ** rv))
                    + np.sum(w * b.eta(tt, pts) ** conjugate(rv)))
                bound += e * growth + cr * float(np.sum(w * np.linalg.norm(vq, axis=1) ** rv))
            if bound - pair < c6_worst:
                c6_worst, c6_at = bound - pair, (t, k, eps)
    n = len(fields)
    return (ConditionReport("C5", n, float(c5_worst), c5_at or (), None, constants),
            ConditionReport("C6", n * len(eps_grid), float(c6_worst), c6_at or (), None, constants))


@dataclass(frozen=True)
class BoundFunction:
    """Non-decreasing ``B(s) = b0 + b1 s^2`` used in the boundedness condition."""

    b0: float
    b1: float

    def __call__(self, s):
        return self.b0 + self.b1 * np.asarray(s, dtype=float) ** 2


def _c3_terms(u, v, t, S, b, q: ExponentField, rule=3, alpha_t: float = 1.0):
    space = fe_space(u.mesh, rule)
    pts = space.q_points.reshape(-1, 2)
    w = space.q_weights.ravel()
    tt = np.full(len(w), t)
    nq = space.q_weights.shape[1]
    pv = S.p(tt, pts)
    qv = q(tt, pts)
    total = alpha_t
    for f in (u, v):
        e = np.repeat(space.eps_of(f.vector()), nq, axis=0)
        val = np.linalg.norm(space.values_at_quadrature(f.vector()).reshape(-1, 2), axis=1)
        total += float(np.sum(w * val ** qv)) + float(np.sum(w * _frob(e) ** pv))
    lhs = abs(operator_pairing(u, v, t, S, b, rule))
    y = math.sqrt(max(float(u.vector() @ (space.mass @ u.vector())), 0.0))
    return lhs, total, y


def fit_c3_bound(pairs, t, S, b, q: ExponentField, margin: float = 2.0) -> BoundFunction:
    """Fit ``B(s) = b0 + b1 s^2`` dominating the calibration ratios, then inflate by ``margin``."""
    ratios, ys = [], []
    for u, v in pairs:
        lhs, total, y = _c3_terms(u, v, t, S, b, q)
        ratios.append(lhs / total)
        ys.append(y)
    ratios, ys = np.array(ratios), np.array(ys)
    # smallest sum of B over the calibration norms subject to B(y_i) >= ratio_i
    res = linprog(c=[len(ys), float(np.sum(ys**2))],
                  A_ub=-np.column_stack([np.ones_like(ys), ys**2]), b_ub=-ratios,
                  bounds=[(0, None), (0, None)], method="highs")
    b0, b1 = (res.x if res.success else (float(ratios.max()), 0.0))
    return BoundFunction(margin * float(b0), margin * float(b1))


def check_c3(pairs, t, S, b, q: ExponentField, bound: BoundFunction) -> ConditionReport:
    worst, at = np.inf, ()
    for k, (u, v) in enumerate(pairs):
        lhs, total, y = _c3_terms(u, v, t, S, b, q)
        slack = float(bound(y)) * total - lhs
        if slack < worst:
            worst, at = slack, (t, k)
    return ConditionReport("C3", len(pairs), float(worst), at, None,
                           dict(b0=bound.b0, b1=bound.b1))
