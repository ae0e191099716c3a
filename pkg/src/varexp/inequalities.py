"""Numerical harness for the Poincaré, Korn, interpolation and Gagliardo-Nirenberg inequalities.

Two kinds of objects are tested here:

* the radially symmetric counterexample ``u = e1 * eta`` with a time weight
  ``phi(t) = t^(-1/2)``, for which the space-time modular of ``phi u`` diverges
  while that of ``phi grad u`` stays bounded;
* random finite element fields, on which inequality constants that are only
  known to exist are calibrated on one sample, frozen, and validated on a
  disjoint sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import linprog

from .errors import BadSpec, MeshError
from .exponent import ExponentField, SpaceTimeBox, parabolic_star
from .mesh_fem import FEFunction, MeshLevel, fe_space, interpolate

__all__ = [
    "CounterexampleSpec",
    "Counterexample",
    "InequalityReport",
    "SliceStats",
    "RepairConstants",
    "InterpolationConstants",
    "build_counterexample",
    "counterexample_exponent",
    "poincare_failure_run",
    "divergence_certificate",
    "fe_slice_stats",
    "calibrate_poincare_repair",
    "poincare_repair_check",
    "naive_poincare_ratio",
    "calibrate_variable_interpolation",
    "variable_interpolation_check",
    "korn_ratios",
    "korn_check",
    "gn_exponent",
    "gn_check",
    "calibrate_gn",
    "random_fe_fields",
    "random_trajectories",
]


@dataclass(frozen=True)
class CounterexampleSpec:
    omega_radius: float = 2.5
    plateau_radius: float = 0.6
    mollifier_eps: float = 0.4
    p_minus: float = 1.1
    p_plus: float = 2.0
    phi_exponent: float = -0.5
    time_horizon: float = 1.0
    ramp_width: float = 0.1
    indicator_radius: float = 1.0

    def __post_init__(self):
        tol = 1e-12
        if not self.mollifier_eps > 0 or not self.ramp_width > 0:
            raise BadSpec("mollifier_eps and ramp_width must be positive")
        if not 0 < self.ramp_width < self.plateau_radius:
            raise BadSpec("the exponent ramp must fit inside the plateau")
        if self.plateau_radius + self.mollifier_eps > self.indicator_radius + tol:
            raise BadSpec("plateau is not contained in the set where eta = 1")
        if self.indicator_radius + self.mollifier_eps > self.omega_radius + tol:
            raise BadSpec("support of eta is not contained in Omega")
        if not 1.0 < self.p_minus < self.p_plus:
            raise BadSpec("need 1 < p_minus < p_plus")
        if not self.time_horizon > 0:
            raise BadSpec("time_horizon must be positive")
        if not self.phi_exponent < 0:
            raise BadSpec("phi must blow up at t = 0 (negative exponent)")


def _smooth_step(y):
    """C-infinity step: 0 for y <= 0, 1 for y >= 1."""
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(y > 0, np.exp(-1.0 / np.where(y > 0, y, 1.0)), 0.0)
        g = np.where(y < 1, np.exp(-1.0 / np.where(y < 1, 1.0 - y, 1.0)), 0.0)
    return f / (f + g)


def counterexample_exponent(spec: CounterexampleSpec = CounterexampleSpec()) -> ExponentField:
    """Radial exponent: ``p_plus`` inside the inner plateau, ``p_minus`` from the plateau edge on."""
    r0 = spec.plateau_radius - spec.ramp_width
    dp = spec.p_plus - spec.p_minus

    def radial(r):
        return spec.p_minus + dp * _smooth_step((spec.plateau_radius - r) / spec.ramp_width)

    R = spec.omega_radius
    box = SpaceTimeBox(0.0, spec.time_horizon, (-R, -R), (R, R))
    field_ = ExponentField(lambda t, x: radial(np.linalg.norm(x, axis=-1)), box,
                           name="bump", time_independent=True)
    field_.radial = radial
    field_.inner_radius = r0
    return field_


def _mollifier_radial(rho, eps):
    """Unnormalised ``omega(rho / eps)``; normalisation happens in the convolution."""
    s = np.asarray(rho, dtype=float) / eps
    with np.errstate(divide="ignore"):
        return np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s * s, 1.0)), 0.0)


def _eta_profile(spec: CounterexampleSpec, n_samples: int = 4096, n_gauss: int = 256):
    """Radial profile of ``chi_{B_R} * omega_eps`` on ``[0, R + eps]``."""
    R, eps = spec.indicator_radius, spec.mollifier_eps
    g, gw = np.polynomial.legendre.leggauss(n_gauss)
    # normalisation: integral of the mollifier over the plane
    rho = eps * (g + 1) / 2
    mass = float(np.sum(gw * eps / 2 * _mollifier_radial(rho, eps) * 2 * np.pi * rho))
    r = np.linspace(0.0, R + eps, n_samples)
    eta = np.empty_like(r)
    for i, ri in enumerate(r):
        kink = min(max(abs(R - ri), 0.0), eps)
        total = 0.0
        for a, b in ((0.0, kink), (kink, eps)):
            if b <= a:
                continue
            rr = a + (b - a) * (g + 1) / 2
            if ri == 0.0:
                theta = np.where(rr < R, 2 * np.pi, 0.0)
            else:
                cosang = np.clip((ri * ri + rr * rr - R * R) / (2 * ri * rr), -1.0, 1.0)
                theta = 2 * np.arccos(cosang)
            total += float(np.sum(gw * (b - a) / 2 * _mollifier_radial(rr, eps) * rr * theta))
        eta[i] = total / mass
    eta[r <= R - eps] = 1.0
    eta[r >= R + eps] = 0.0
    return r, eta


@dataclass
class SliceStats:
    """Per-time-slice quantities entering the slice-wise inequalities."""

    t: float
    rho_u: float  # rho_{p(t)}(u(t))
    rho_eps: float  # rho_{p(t)}(eps(u)(t))
    y_norm: float  # ||u(t)||_{L^2}
    rho_star: float = float("nan")  # rho_{p_*(t) - eps}(u(t))


class Counterexample:
    """The field ``u = e1 * eta``, its exponent and time weight, with polar quadrature."""

    def __init__(self, spec: CounterexampleSpec, n_samples: int = 4096, n_radial: int = 48,
                 n_angle: int = 64):
        self.spec = spec
        self.p = counterexample_exponent(spec)
        r, eta = _eta_profile(spec, n_samples)
        self._spline = CubicSpline(r, eta, bc_type=((1, 0.0), (1, 0.0)))
        self._dspline = self._spline.derivative()
        self.r_max = spec.indicator_radius + spec.mollifier_eps
        # polar tensor quadrature on the support of u, panels split at profile features
        breaks = sorted({0.0, self.p.inner_radius, spec.plateau_radius,
                         spec.indicator_radius, self.r_max})
        g, gw = np.polynomial.legendre.leggauss(n_radial)
        rs, ws = [], []
        for a, b in zip(breaks[:-1], breaks[1:]):
            rs.append(a + (b - a) * (g + 1) / 2)
            ws.append(gw * (b - a) / 2)
        rq, wr = np.concatenate(rs), np.concatenate(ws)
        th = 2 * np.pi * (np.arange(n_angle) + 0.5) / n_angle
        R, TH = np.meshgrid(rq, th, indexing="ij")
        self.q_points = np.column_stack([(R * np.cos(TH)).ravel(), (R * np.sin(TH)).ravel()])
        self.q_weights = (wr[:, None] * R * (2 * np.pi / n_angle)).ravel()
        self._p_q = self.p(0.0, self.q_points)
        self._eta_q = self.eta(self.q_points)
        grad = self.grad_eta(self.q_points)
        self._grad_q = np.linalg.norm(grad, axis=1)
        # |eps(e1 eta)|^2 = eta_1^2 + eta_2^2 / 2
        self._eps_q = np.sqrt(grad[:, 0] ** 2 + 0.5 * grad[:, 1] ** 2)

    def eta_radial(self, r):
        r = np.asarray(r, dtype=float)
        out = np.where(r <= self.r_max, self._spline(np.clip(r, 0.0, self.r_max)), 0.0)
        out = np.where(r <= self.spec.indicator_radius - self.spec.mollifier_eps, 1.0, out)
        return np.clip(out, 0.0, 1.0)

    def deta_radial(self, r):
        r = np.asarray(r, dtype=float)
        inside = (r > self.spec.indicator_radius - self.spec.mollifier_eps) & (r < self.r_max)
        return np.where(inside, self._dspline(np.clip(r, 0.0, self.r_max)), 0.0)

    def eta(self, x):
        return self.eta_radial(np.linalg.norm(np.atleast_2d(x), axis=1))

    def grad_eta(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        r = np.linalg.norm(x, axis=1)
        safe = np.where(r > 0, r, 1.0)
        return (self.deta_radial(r) / safe)[:, None] * x

    def u(self, x):
        e = self.eta(x)
        return np.column_stack([e, np.zeros_like(e)])

    def phi(self, t):
        return np.asarray(t, dtype=float) ** self.spec.phi_exponent

    def on_mesh(self, mesh: MeshLevel) -> FEFunction:
        """Nodal interpolant of ``u`` on a mesh covering the disk."""
        return interpolate(mesh, self.u)

    def _time_integral(self, s, tau):
        """``int_tau^T t^(-s) dt`` exactly, stable as ``s -> 1``."""
        T = self.spec.time_horizon
        a = 1.0 - np.asarray(s, dtype=float)
        L = math.log(T) - math.log(tau)
        ratio = np.where(np.abs(a) < 1e-14, L, np.expm1(a * L) / np.where(a == 0, 1.0, a))
        return np.exp(a * math.log(tau)) * ratio

    def truncated_modular(self, tau: float, which: str = "u", exponent: str = "p") -> float:
        """``rho(phi_tau * g)`` over ``(0, T) x Omega`` with ``phi_tau = phi * 1_[tau, T]``."""
        pv = self._p_q if exponent == "p" else np.full_like(self._p_q, self.spec.p_minus)
        g = {"u": self._eta_q, "grad": self._grad_q, "eps": self._eps_q}[which]
        s = -self.spec.phi_exponent * pv
        nz = g > 0
        vals = np.zeros_like(g)
        vals[nz] = np.exp(pv[nz] * np.log(g[nz])) * self._time_integral(s[nz], tau)
        return float(np.sum(self.q_weights * vals))

    def slice_stats(self, t: float, eps_star: float | None = None) -> SliceStats:
        """Slice-wise modulars of ``u(t) = phi(t) e1 eta``."""
        ph = float(self.phi(t))
        pv = self._p_q

        def rho(g, ex):
            nz = g > 0
            return float(np.sum(self.q_weights[nz] * np.exp(ex[nz] * np.log(ph * g[nz]))))

        y = ph * math.sqrt(float(np.sum(self.q_weights * self._eta_q ** 2)))
        star = float("nan")
        if eps_star is not None:
            star = rho(self._eta_q, np.maximum(2.0, parabolic_star(pv)) - eps_star)
        return SliceStats(t, rho(self._eta_q, pv), rho(self._eps_q, pv), y, star)

    def radial_table(self, n: int = 251):
        """Rows ``(r, eta, |grad eta|, p)`` along a ray, for plotting."""
        r = np.linspace(0.0, self.spec.omega_radius, n)
        return np.column_stack([r, self.eta_radial(r), np.abs(self.deta_radial(r)),
                                self.p.radial(r)])


def build_counterexample(spec: CounterexampleSpec = CounterexampleSpec(),
                         mesh: MeshLevel | None = None):
    """Return ``(field, p, phi)``; a mesh, if given, must cover the disk of radius ``omega_radius``."""
    if mesh is not None:
        reach = float(np.max(np.linalg.norm(mesh.vertices, axis=1)))
        if reach < spec.omega_radius * math.cos(math.pi / 12) - 1e-9:
            raise MeshError(f"mesh reaches radius {reach:g} < {spec.omega_radius:g}")
    cx = Counterexample(spec)
    return cx, cx.p, cx.phi


def poincare_failure_run(cx: Counterexample, truncations: Sequence[float] | None = None):
    """Rows ``(tau, rho_p(phi_tau u), rho_p(phi_tau grad u), rho_{p-}(phi_tau u))``."""
    if truncations is None:
        truncations = 10.0 ** -np.arange(1, 6)
    taus = np.asarray(truncations, dtype=float)
    if np.any(taus <= 0) or np.any(np.diff(taus) >= 0):
        raise ValueError("truncations must be positive and strictly decreasing")
    return np.array([[tau, cx.truncated_modular(tau, "u"), cx.truncated_modular(tau, "grad"),
                      cx.truncated_modular(tau, "u", exponent="p_minus")] for tau in taus])


def divergence_certificate(table, rel_tol: float = 0.1, grad_tol: float = 1e-3) -> dict:
    """Check decade increments of ``rho_p(phi_tau u)`` against ``A ln 10``.

    ``A`` is fitted by minimax (the midpoint of the increment range).  The
    gradient part passes when its last increment is below ``grad_tol``.
    """
    table = np.asarray(table)
    inc_u = np.diff(table[:, 1])
    inc_g = np.diff(table[:, 2])
    A = 0.5 * (inc_u.max() + inc_u.min()) / math.log(10)
    dev = np.abs(inc_u - A * math.log(10)) / (A * math.log(10))
    return dict(A=float(A), u_increments=inc_u, grad_increments=inc_g,
                max_rel_deviation=float(dev.max()), last_grad_increment=float(inc_g[-1]),
                u_linear=bool(A > 0 and dev.max() <= rel_tol),
                grad_converged=bool(inc_g[-1] < grad_tol))


@dataclass
class InequalityReport:
    name: str
    samples: int
    fitted_constants: dict
    worst_ratio: float
    bound: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.worst_ratio) and self.worst_ratio <= self.bound)

    def row(self):
        consts = ";".join(f"{k}={v:.17g}" for k, v in sorted(self.fitted_constants.items()))
        return (self.name, self.samples, consts, self.worst_ratio, self.bound, int(self.passed))


# ---------------------------------------------------------------- random fields

def random_fe_fields(mesh: MeshLevel, n: int, seed: int, amplitude=(1e-2, 1e2),
                     modes: int = 6, roughness: float = 0.2) -> list[FEFunction]:
    """Random smooth-plus-rough vector fields with zero boundary values."""
    rng = np.random.default_rng(seed)
    V = mesh.vertices[~mesh.boundary_mask]
    scale = float(np.ptp(mesh.vertices, axis=0).max())
    out = []
    for _ in range(n):
        k = rng.normal(0.0, 2 * np.pi / scale * 2.0, (modes, 2))
        ph = rng.uniform(0, 2 * np.pi, modes)
        amp = rng.standard_normal((modes, 2))
        coeffs = np.sin(V @ k.T + ph) @ amp / math.sqrt(modes)
        coeffs += roughness * rng.random() * rng.standard_normal(coeffs.shape)
        size = math.exp(rng.uniform(math.log(amplitude[0]), math.log(amplitude[1])))
        norm = float(np.max(np.abs(coeffs))) or 1.0
        out.append(FEFunction(mesh, size * coeffs / norm))
    return out


def random_trajectories(mesh: MeshLevel, n: int, seed: int, slices: int = 4, T: float = 1.0,
                        amplitude=(1e-2, 1e2)):
    """Random trajectories ``[(t_k, u_k)]`` mixing two random fields smoothly in time."""
    rng = np.random.default_rng(seed)
    base = random_fe_fields(mesh, 2 * n, int(rng.integers(2**31)), amplitude)
    ts = T * (np.arange(1, slices + 1) / slices)
    out = []
    for i in range(n):
        a, b = base[2 * i], base[2 * i + 1]
        w = rng.uniform(0.5, 3.0)
        out.append([(float(t), a * math.cos(w * t) + b * math.sin(w * t)) for t in ts])
    return out


def fe_slice_stats(u: FEFunction, t: float, p: ExponentField, eps_star: float | None = None,
                   rule: int = 3) -> SliceStats:
    space = fe_space(u.mesh, rule)
    pts = space.q_points.reshape(-1, 2)
    w = space.q_weights.ravel()
    nq = space.q_weights.shape[1]
    pv = p(np.full(len(w), t), pts)
    uq = np.linalg.norm(space.values_at_quadrature(u.vector()).reshape(-1, 2), axis=1)
    eq = np.repeat(space.eps_of(u.vector()), nq, axis=0)
    en = np.sqrt(np.einsum("nij,nij->n", eq, eq))
    y = math.sqrt(max(float(u.vector() @ (space.mass @ u.vector())), 0.0))
    star = float("nan")
    if eps_star is not None:
        star = float(np.sum(w * uq ** (np.maximum(2.0, parabolic_star(pv)) - eps_star)))
    return SliceStats(t, float(np.sum(w * uq ** pv)), float(np.sum(w * en ** pv)), y, star)


def _as_stats(fields, p, eps_star=None):
    stats = []
    for item in fields:
        if isinstance(item, SliceStats):
            stats.append(item)
        elif isinstance(item, FEFunction):
            stats.append(fe_slice_stats(item, 0.0, p, eps_star))
        else:  # a trajectory [(t, u), ...] or a list of SliceStats
            for entry in item:
                if isinstance(entry, SliceStats):
                    stats.append(entry)
                else:
                    t, u = entry
                    stats.append(fe_slice_stats(u, t, p, eps_star))
    return stats


# ---------------------------------------------------------------- Poincaré repair

@dataclass(frozen=True)
class RepairConstants:
    c: float
    gamma: float
    seed: int | None = None


def _repair_ratio(s: SliceStats, gamma: float) -> float:
    return s.rho_u / (1.0 + s.rho_eps + s.y_norm ** gamma)


def calibrate_poincare_repair(fields, p, gammas=(1.0, 2.0, 3.0, 4.0), margin: float = 2.0,
                              seed: int | None = None) -> RepairConstants:
    """Pick ``gamma`` from the grid minimising the calibration supremum, freeze ``c``."""
    stats = _as_stats(fields, p)
    best = min(gammas, key=lambda g: max(_repair_ratio(s, g) for s in stats))
    c = margin * max(_repair_ratio(s, best) for s in stats)
    return RepairConstants(c=float(c), gamma=float(best), seed=seed)


def poincare_repair_check(fields, p, constants: RepairConstants) -> InequalityReport:
    """``rho_p(u(t)) <= c [1 + rho_p(eps u(t)) + ||u(t)||_Y^gamma]`` on every slice."""
    stats = _as_stats(fields, p)
    worst = max((_repair_ratio(s, constants.gamma) for s in stats), default=0.0)
    return InequalityReport("poincare_repair", len(stats),
                            dict(c=constants.c, gamma=constants.gamma), float(worst),
                            constants.c)


def naive_poincare_ratio(stats: SliceStats) -> float:
    """``rho_p(u) / rho_p(eps u)``, the quotient a plain Poincaré inequality would bound."""
    return stats.rho_u / stats.rho_eps if stats.rho_eps > 0 else math.inf


# ---------------------------------------------------------------- variable interpolation

@dataclass(frozen=True)
class InterpolationConstants:
    c_eps: float
    gamma_eps: float
    eps_star: float
    seed: int | None = None


def _interp_ratio(s: SliceStats, gamma: float) -> float:
    yg = s.y_norm ** gamma
    return s.rho_star / ((1.0 + s.rho_eps + yg) * (1.0 + yg))


def calibrate_variable_interpolation(fields, p, eps_star: float, gammas=(1.0, 2.0, 3.0, 4.0),
                                     margin: float = 2.0, seed: int | None = None):
    stats = _as_stats(fields, p, eps_star)
    best = min(gammas, key=lambda g: max(_interp_ratio(s, g) for s in stats))
    c = margin * max(_interp_ratio(s, best) for s in stats)
    return InterpolationConstants(float(c), float(best), eps_star, seed)


def variable_interpolation_check(fields, p, constants: InterpolationConstants) -> InequalityReport:
    """``rho_{p_* - eps}(u) <= c_eps [1 + rho_p(eps u) + ||u||^g] (1 + ||u||^g)`` per slice."""
    stats = _as_stats(fields, p, constants.eps_star)
    worst = max((_interp_ratio(s, constants.gamma_eps) for s in stats), default=0.0)
    return InequalityReport("variable_interpolation", len(stats),
                            dict(c_eps=constants.c_eps, gamma_eps=constants.gamma_eps,
                                 eps_star=constants.eps_star), float(worst), constants.c_eps)


# ---------------------------------------------------------------- Korn and Gagliardo-Nirenberg

def _lebesgue_norms(u: FEFunction, s: float, rule: int = 3):
    """``(||u||_s, ||grad u||_s, ||eps u||_s)`` by quadrature."""
    space = fe_space(u.mesh, rule)
    vec = u.vector()
    uq = np.linalg.norm(space.values_at_quadrature(vec).reshape(-1, 2), axis=1)
    w = space.q_weights.ravel()
    G = space.grad_of(vec)
    E = 0.5 * (G + np.swapaxes(G, 1, 2))
    gn = np.sqrt(np.einsum("tij,tij->t", G, G))
    en = np.sqrt(np.einsum("tij,tij->t", E, E))
    a = space.areas
    return (float(np.sum(w * uq ** s)) ** (1 / s), float(np.sum(a * gn ** s)) ** (1 / s),
            float(np.sum(a * en ** s)) ** (1 / s))


def korn_ratios(fields, s: float):
    out = []
    for u in fields:
        nu, ng, ne = _lebesgue_norms(u, s)
        out.append(0.0 if ng == 0 else ng / (nu + ne))
    return np.array(out)


def korn_check(fields, s: float, bound: float) -> InequalityReport:
    """``||grad u||_s <= c (||u||_s + ||eps u||_s)`` with a frozen ``c``."""
    if not s > 1:
        raise ValueError("Korn's inequality needs 1 < s < infinity")
    ratios = korn_ratios(fields, s)
    return InequalityReport(f"korn_s{s:g}", len(ratios), dict(c=bound, s=s),
                            float(ratios.max(initial=0.0)), bound)


def gn_exponent(s: float, r: float, theta: float, d: int = 2) -> float:
    """``q`` from ``1/q = theta (1/r - 1/d) + (1 - theta)/s``."""
    inv = theta * (1 / r - 1 / d) + (1 - theta) / s
    if not inv > 0:
        raise ValueError("parameters give q = infinity or negative")
    return 1.0 / inv


def _gn_terms(u: FEFunction, s, r, theta, rule: int = 7):
    q = gn_exponent(s, r, theta)
    space = fe_space(u.mesh, rule)
    vec = u.vector()
    uq = np.linalg.norm(space.values_at_quadrature(vec).reshape(-1, 2), axis=1)
    w = space.q_weights.ravel()
    nq_ = float(np.sum(w * uq ** q)) ** (1 / q)
    ns = float(np.sum(w * uq ** s)) ** (1 / s)
    G = space.grad_of(vec)
    ngr = float(np.sum(space.areas * np.sqrt(np.einsum("tij,tij->t", G, G)) ** r)) ** (1 / r)
    return nq_, ngr ** theta * ns ** (1 - theta), ns


def calibrate_gn(fields, s, r, theta, margin: float = 2.0):
    """Fit ``(c1, c2) >= 0`` minimising their sum subject to the calibration inequalities."""
    rows = np.array([_gn_terms(u, s, r, theta) for u in fields])
    lhs, X, Y = rows[:, 0], rows[:, 1], rows[:, 2]
    res = linprog(c=[1.0, 1.0], A_ub=-np.column_stack([X, Y]), b_ub=-lhs,
                  bounds=[(0, None), (0, None)], method="highs")
    c1, c2 = res.x if res.success else (0.0, float(np.max(lhs / Y)))
    return margin * float(c1), margin * float(c2)


def gn_check(fields, s: float, r: float, theta: float, c1: float, c2: float) -> InequalityReport:
    """``||u||_q <= c1 ||grad u||_r^theta ||u||_s^(1-theta) + c2 ||u||_s``; ratio against 1."""
    worst = 0.0
    for u in fields:
        lhs, X, Y = _gn_terms(u, s, r, theta)
        rhs = c1 * X + c2 * Y
        worst = max(worst, lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf))
    q = gn_exponent(s, r, theta)
    return InequalityReport(f"gn_s{s:g}_r{r:g}_theta{theta:g}", len(fields),
                            dict(c1=c1, c2=c2, q=q), float(worst), 1.0)
