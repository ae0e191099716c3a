"""Implicit Euler / Galerkin solver for ``du/dt - div S(t, x, eps u) + b(t, x, u) = f - div F``.

Each step solves the nonlinear Galerkin system

    M (u^k - u^{k-1}) / dt + A(t_k) u^k = J(f(t_k), F(t_k))

by damped Newton, where ``<A(t) u, v> = (S(eps u), eps v) + (b(u), v)`` and
``<J(f, F), v> = (f, v) + (F, eps v)``.  Testing the step equation with
``u^k`` gives the discrete energy identity recorded in :class:`EnergyLedger`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, splu

from .errors import ExponentOrderViolation, FluxEvalError, NewtonFailure
from .exponent import ExponentField, conjugate, parabolic_star
from .mesh_fem import (FEFunction, FESpace, MeshLevel, build_mesh_hierarchy, fe_space,
                       prolong)
from .models import FluxModel, LowerOrderModel

log = logging.getLogger(__name__)

__all__ = [
    "ProblemSpec",
    "NewtonConfig",
    "GalerkinState",
    "EnergyLedger",
    "project_initial",
    "assemble_residual",
    "assemble_jacobian",
    "newton_step_solve",
    "run_galerkin",
    "galerkin_convergence_study",
    "bochner_coercivity_monitor",
    "summation_by_parts_defect",
    "dense_linear_euler",
    "poincare_korn_constant",
    "l2_space_time_error",
    "manufactured_linear_problem",
    "gronwall_constants",
    "proxy_norm",
]

TOL_ENERGY = 1e-8


def _zero_vector(t, x):
    return np.zeros((len(x), 2))


def _zero_tensor(t, x):
    return np.zeros((len(x), 2, 2))


@dataclass
class ProblemSpec:
    """Data of one evolution problem.

    ``f_source(t, x) -> (N, 2)``, ``F_source(t, x) -> (N, 2, 2)`` (symmetric) and
    ``u0(x) -> (N, 2)`` are callables sampled on the quadrature of whatever
    level is being solved; ``u0`` may also be an :class:`FEFunction`.
    """

    flux: FluxModel
    lower: LowerOrderModel
    u0: Callable | FEFunction
    T_final: float = 1.0
    f_source: Callable = _zero_vector
    F_source: Callable = _zero_tensor
    q: ExponentField | None = None
    eps_star: float = 0.1
    domain: str = "unit_square"
    rule: int = 3
    exact: Callable | None = None  # exact solution (t, x) -> (N, 2), if known

    def __post_init__(self):
        if not self.T_final > 0:
            raise ValueError("T_final must be positive")
        if self.q is None:
            self.q = ExponentField.constant(2.0, self.p.domain)
        self.check_q()

    @property
    def p(self) -> ExponentField:
        return self.flux.p

    def check_q(self):
        """Assert ``2 <= q <= max{2, p_* - eps}`` on the lattices of ``p`` and ``q``."""
        upper_eps = parabolic_star(self.p.p_minus) - 1.0
        if not 0 < self.eps_star <= upper_eps + 1e-12:
            raise ExponentOrderViolation(
                f"eps_star = {self.eps_star} must lie in (0, {upper_eps:g}]")
        for lat in (self.p.lattice, self.q.lattice):
            qv = self.q(lat.t, lat.x)
            upper = np.maximum(2.0, parabolic_star(self.p(lat.t, lat.x)) - self.eps_star)
            bad = (qv < 2.0 - 1e-12) | (qv > upper + 1e-12)
            if np.any(bad):
                i = int(np.argmax(bad))
                raise ExponentOrderViolation(
                    f"q = {qv[i]:g} outside [2, {upper[i]:g}] at t = {lat.t[i]:g}, "
                    f"x = ({lat.x[i, 0]:g}, {lat.x[i, 1]:g})")


@dataclass
class NewtonConfig:
    max_iter: int = 30
    tol_res: float = 1e-10
    damping: float = 1.0
    min_step: float = 2.0**-12

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iter < 1 or not self.tol_res > 0:
            raise ValueError("max_iter must be positive and tol_res > 0")


@dataclass
class GalerkinState:
    level: int
    mesh: MeshLevel
    time_grid: np.ndarray
    trajectory: list
    newton_iterations: list = field(default_factory=list)

    def matrix(self) -> np.ndarray:
        """Coefficient vectors stacked as ``(K + 1, ndof)``."""
        return np.array([u.vector() for u in self.trajectory])


@dataclass
class EnergyLedger:
    """Per-step energy accounting of an implicit Euler run."""

    t: np.ndarray
    kinetic: np.ndarray
    dissipation: np.ndarray
    work: np.ndarray
    jump: np.ndarray  # 1/2 ||u^k - u^{k-1}||^2, the discrete strengthening term
    residual: np.ndarray  # dt * <R(u^k), u^k> left over by the nonlinear solve

    @property
    def slack(self) -> np.ndarray:
        """``1/2||u^0||^2 - 1/2||u^k||^2 - sum_{j<=k} (dissipation_j - work_j)``."""
        cum = np.cumsum(self.dissipation - self.work)
        return self.kinetic[0] - self.kinetic - np.concatenate([[0.0], cum])

    def tolerance(self) -> float:
        return TOL_ENERGY * (1.0 + self.kinetic[0])

    def rows(self):
        s = self.slack
        return [(k, self.t[k], self.kinetic[k], self.dissipation[k - 1] if k else 0.0,
                 self.work[k - 1] if k else 0.0, s[k]) for k in range(len(self.t))]


# ---------------------------------------------------------------- assembly


class _StepData:
    """Quadrature-point data of one space at one time level."""

    def __init__(self, space: FESpace, spec: ProblemSpec, t: float):
        self.space = space
        nt, nq = space.q_weights.shape
        self.nq = nq
        self.t = t
        self.pts = space.q_points.reshape(-1, 2)
        self.tt = np.full(nt * nq, t)
        self.w = space.q_weights  # (nt, nq)
        # local basis values: N[q, 2a + c, c] = lambda_a(q)
        N = np.zeros((nq, 6, 2))
        for a in range(3):
            for c in range(2):
                N[:, 2 * a + c, c] = space.q_bary[:, a]
        self.N = N
        f = np.asarray(spec.f_source(self.tt, self.pts), dtype=float).reshape(nt, nq, 2)
        F = np.asarray(spec.F_source(self.tt, self.pts), dtype=float).reshape(nt, nq, 2, 2)
        load = np.einsum("tq,tqk,qik->ti", self.w, f, N)
        load += np.einsum("tq,tqab,tiab->ti", self.w, F, space.eps_basis)
        self.load = space.scatter(load)

    def eps_q(self, vec):
        return np.repeat(self.space.eps_of(vec), self.nq, axis=0)

    def u_q(self, vec):
        return self.space.values_at_quadrature(vec).reshape(-1, 2)


def _check_finite(values, data: _StepData, what: str):
    bad = ~np.isfinite(values.reshape(len(values), -1)).all(axis=1)
    if np.any(bad):
        i = int(np.argmax(bad))
        point = (data.t, float(data.pts[i, 0]), float(data.pts[i, 1]))
        raise FluxEvalError(f"{what} evaluation produced a non-finite value at "
                            f"t = {point[0]:g}, x = ({point[1]:g}, {point[2]:g})", point)


def _operator(vec, data: _StepData, spec: ProblemSpec):
    """Global vector of ``<A(t) u, phi_i>``."""
    space = data.space
    nt = space.mesh.n_triangles
    S = spec.flux(data.tt, data.pts, data.eps_q(vec))
    _check_finite(S, data, "flux")
    S = S.reshape(nt, data.nq, 2, 2)
    local = np.einsum("tq,tqab,tiab->ti", data.w, S, space.eps_basis)
    b = spec.lower(data.tt, data.pts, data.u_q(vec))
    _check_finite(b, data, "lower-order term")
    local += np.einsum("tq,tqk,qik->ti", data.w, b.reshape(nt, data.nq, 2), data.N)
    return space.scatter(local)


def assemble_residual(state: FEFunction, prev: FEFunction, dt: float, spec: ProblemSpec,
                      t_k: float, data: _StepData | None = None) -> np.ndarray:
    """``R(u) = M (u - prev)/dt + <A(t_k) u, phi_i> - <J(f, F)(t_k), phi_i>``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if state.mesh is not prev.mesh:
        from .errors import LevelMismatch
        raise LevelMismatch("state and previous step live on different levels")
    space = fe_space(state.mesh, spec.rule)
    data = data or _StepData(space, spec, t_k)
    u = state.vector()
    return space.mass @ (u - prev.vector()) / dt + _operator(u, data, spec) - data.load


def assemble_jacobian(vec, dt: float, spec: ProblemSpec, data: _StepData):
    space = data.space
    nt = space.mesh.n_triangles
    D = spec.flux.tangent(data.tt, data.pts, data.eps_q(vec)).reshape(nt, data.nq, 2, 2, 2, 2)
    local = np.einsum("tq,tiab,tqabcd,tjcd->tij", data.w, space.eps_basis, D, space.eps_basis)
    Db = spec.lower.tangent(data.tt, data.pts, data.u_q(vec)).reshape(nt, data.nq, 2, 2)
    local += np.einsum("tq,qik,tqkl,qjl->tij", data.w, data.N, Db, data.N)
    return (space.mass / dt + space.scatter_matrix(local)).tocsc()


def _mass_lu(space: FESpace):
    lu = getattr(space, "_mass_lu", None)
    if lu is None:
        lu = splu(space.mass.tocsc())
        space._mass_lu = lu
    return lu


def _dual_norm(space: FESpace, R) -> float:
    if space.ndof == 0:
        return 0.0
    return math.sqrt(max(float(R @ _mass_lu(space).solve(R)), 0.0))


def newton_step_solve(prev: FEFunction, dt: float, spec: ProblemSpec, t_k: float,
                      cfg: NewtonConfig | None = None, data: _StepData | None = None):
    """Damped Newton for one implicit Euler step; returns ``(u, iterations, residual_norm)``."""
    cfg = cfg or NewtonConfig()
    space = fe_space(prev.mesh, spec.rule)
    data = data or _StepData(space, spec, t_k)
    if space.ndof == 0:
        return FEFunction.zero(prev.mesh), 0, 0.0
    u = prev.vector()
    uprev = prev.vector()

    def residual(vec):
        return space.mass @ (vec - uprev) / dt + _operator(vec, data, spec) - data.load

    R = residual(u)
    norm = _dual_norm(space, R)
    for it in range(cfg.max_iter + 1):
        if norm <= cfg.tol_res:
            return FEFunction(prev.mesh, u), it, norm
        if it == cfg.max_iter:
            break
        J = assemble_jacobian(u, dt, spec, data)
        du = splu(J).solve(-R)
        lam = cfg.damping
        while True:
            trial = u + lam * du
            Rt = residual(trial)
            nt_ = _dual_norm(space, Rt)
            if nt_ <= (1 - 1e-4 * lam) * norm or lam <= cfg.min_step:
                break
            lam *= 0.5
        if not nt_ < norm:
            break
        u, R, norm = trial, Rt, nt_
    raise NewtonFailure(f"Newton did not reach {cfg.tol_res:g} at t = {t_k:g}; "
                        f"last residual {norm:.3e}", residual=norm)


def project_initial(u0, mesh: MeshLevel, rule: int = 7) -> FEFunction:
    """``L^2`` projection of ``u0(x) -> (N, 2)`` (or an FE function) onto the level."""
    if isinstance(u0, FEFunction):
        if u0.mesh is mesh:
            return u0
        if mesh.is_descendant_of(u0.mesh):
            return prolong(u0, mesh)
        func = u0.evaluate
    else:
        func = u0
    space = fe_space(mesh, rule)
    if space.ndof == 0:
        return FEFunction.zero(mesh)
    vals = np.asarray(func(space.q_points.reshape(-1, 2)), dtype=float)
    vals = np.nan_to_num(vals).reshape(mesh.n_triangles, -1, 2)
    nq = vals.shape[1]
    N = np.zeros((nq, 6, 2))
    for a in range(3):
        for c in range(2):
            N[:, 2 * a + c, c] = space.q_bary[:, a]
    rhs = space.scatter(np.einsum("tq,tqk,qik->ti", space.q_weights, vals, N))
    coeffs = _mass_lu(space).solve(rhs)
    return FEFunction(mesh, coeffs)


def _mesh_for(spec: ProblemSpec, level) -> tuple[int, MeshLevel]:
    if isinstance(level, MeshLevel):
        return level.level_index, level
    meshes = build_mesh_hierarchy(spec.domain, int(level) + 1)
    return int(level), meshes[-1]


def run_galerkin(spec: ProblemSpec, level, K_steps: int, cfg: NewtonConfig | None = None):
    """Integrate on one level with ``K_steps`` uniform steps; returns ``(state, ledger)``."""
    if K_steps < 1:
        raise ValueError("K_steps must be at least 1")
    level_index, mesh = _mesh_for(spec, level)
    space = fe_space(mesh, spec.rule)
    dt = spec.T_final / K_steps
    ts = np.linspace(0.0, spec.T_final, K_steps + 1)
    u = project_initial(spec.u0, mesh)
    traj = [u]
    iters = []
    kin = [0.5 * float(u.vector() @ (space.mass @ u.vector()))]
    diss, work, jump, resid = [], [], [], []
    for k in range(1, K_steps + 1):
        data = _StepData(space, spec, ts[k])
        try:
            new, it, _ = newton_step_solve(u, dt, spec, ts[k], cfg, data)
        except NewtonFailure as exc:
            exc.step = k
            raise
        vec, prev = new.vector(), u.vector()
        Au = _operator(vec, data, spec) if space.ndof else np.zeros(0)
        R = space.mass @ (vec - prev) / dt + Au - data.load if space.ndof else np.zeros(0)
        diss.append(dt * float(Au @ vec))
        work.append(dt * float(data.load @ vec))
        d = vec - prev
        jump.append(0.5 * float(d @ (space.mass @ d)))
        resid.append(dt * float(R @ vec))
        kin.append(0.5 * float(vec @ (space.mass @ vec)))
        traj.append(new)
        iters.append(it)
        u = new
        log.debug("step %d t=%.4g newton=%d kinetic=%.6g", k, ts[k], it, kin[-1])
    state = GalerkinState(level_index, mesh, ts, traj, iters)
    ledger = EnergyLedger(ts, np.array(kin), np.array(diss), np.array(work), np.array(jump),
                          np.array(resid))
    return state, ledger


def summation_by_parts_defect(U: np.ndarray, V: np.ndarray, M) -> float:
    """``sum (u^k - u^{k-1}, v^k) + sum (v^k - v^{k-1}, u^{k-1}) - (u^K, v^K) + (u^0, v^0)``.

    ``U`` and ``V`` are ``(K + 1, ndof)`` coefficient histories; the value is zero
    up to rounding for any pair of trajectories.
    """
    U, V = np.asarray(U, dtype=float), np.asarray(V, dtype=float)
    MV = (M @ V.T).T
    MU = (M @ U.T).T
    lhs = np.sum((U[1:] - U[:-1]) * MV[1:]) + np.sum((V[1:] - V[:-1]) * MU[:-1])
    rhs = float(U[-1] @ MV[-1]) - float(U[0] @ MV[0])
    return float(lhs - rhs)


# ---------------------------------------------------------------- a-priori bounds


def poincare_korn_constant(mesh: MeshLevel, s: float, safety: float = 2.0, samples: int = 32,
                           seed: int = 0) -> float:
    """Estimate ``c`` with ``rho_s(u) <= c rho_s(eps u)`` on the zero-trace space.

    For ``s = 2`` the supremum is ``1 / lambda_min`` of the pencil
    ``(eps-stiffness, mass)``.  Otherwise the ratio is maximised over the lowest
    eigenvectors and random fields and inflated by ``safety``.
    """
    space = fe_space(mesh)
    if space.ndof == 0:
        return 0.0
    E = space.eps_basis
    K = space.scatter_matrix(np.einsum("tiab,tjab,t->tij", E, E, space.areas))
    k = min(6, space.ndof - 1) if space.ndof > 1 else 1
    if space.ndof <= 12:
        lam, vecs = _dense_eigh(K, space.mass)
        lam, vecs = lam[:k], vecs[:, :k]
    else:
        lam, vecs = eigsh(K, k=k, M=space.mass, sigma=-1.0, which="LM")
    if s == 2.0:
        return safety * float(1.0 / np.min(lam))
    rng = np.random.default_rng(seed)
    cands = [vecs[:, i] for i in range(vecs.shape[1])]
    cands += [rng.standard_normal(space.ndof) for _ in range(samples)]
    w = space.q_weights.ravel()
    best = 0.0
    for v in cands:
        uq = np.linalg.norm(space.values_at_quadrature(v).reshape(-1, 2), axis=1)
        en = np.sqrt(np.einsum("tij,tij->t", space.eps_of(v), space.eps_of(v)))
        ratio = float(np.sum(w * uq ** s)) / float(np.sum(space.areas * en ** s))
        best = max(best, ratio)
    return safety * best


def _dense_eigh(K, M):
    from scipy.linalg import eigh
    return eigh(K.toarray(), M.toarray())


def _space_time_modulars(spec: ProblemSpec, mesh: MeshLevel, ts, n_gauss: int = 2):
    """``rho_{nu'}(f)`` and ``rho_{p'}(F)`` over ``Q_T`` with Gauss points per step."""
    space = fe_space(mesh, 7)
    pts = space.q_points.reshape(-1, 2)
    w = space.q_weights.ravel()
    g, gw = np.polynomial.legendre.leggauss(n_gauss)
    nu = max(2.0, spec.p.p_minus)
    rho_f = rho_F = 0.0
    for a, b in zip(ts[:-1], ts[1:]):
        for gi, wi in zip(g, gw):
            t = a + (b - a) * (gi + 1) / 2
            tt = np.full(len(w), t)
            f = np.linalg.norm(np.asarray(spec.f_source(tt, pts)).reshape(-1, 2), axis=1)
            F = np.asarray(spec.F_source(tt, pts)).reshape(-1, 2, 2)
            Fn = np.sqrt(np.einsum("nij,nij->n", F, F))
            pc = conjugate(spec.p(tt, pts))
            scale = wi * (b - a) / 2
            rho_f += scale * float(np.sum(w * f ** conjugate(nu)))
            rho_F += scale * float(np.sum(w * Fn ** pc))
    return rho_f, rho_F


def gronwall_constants(spec: ProblemSpec, mesh: MeshLevel, ts, c_pminus: float | None = None):
    """``(M0, M1, M2, M)`` of the a-priori estimate, with ``M`` the bound on the proxy norm."""
    p = spec.p
    pm, pp = p.p_minus, p.p_plus
    if c_pminus is None:
        c_pminus = poincare_korn_constant(mesh, pm)
    c0 = spec.flux.c5_coefficient
    eps = min(c0 / (2 * (1 + c_pminus * 2**pp)), 1 / (2 * pm))
    nu = max(2.0, pm)
    nu_c = conjugate(nu)
    c_nu = (nu * eps) ** (1 - nu_c) / nu_c
    space = fe_space(mesh, 7)
    pts = space.q_points.reshape(-1, 2)
    w = space.q_weights.ravel()
    omega = float(np.sum(w))
    # pointwise Young constant (p eps)^{1 - p'} / p', maximised over a space-time sample
    sample_t = np.linspace(0, spec.T_final, 9)
    c_p = 0.0
    c2_int = 0.0
    for t in sample_t:
        pv = p(np.full(len(w), t), pts)
        c_p = max(c_p, float(np.max((pv * eps) ** (1 - conjugate(pv)) / conjugate(pv))))
    for a, b in zip(ts[:-1], ts[1:]):
        tm = 0.5 * (a + b)
        # offsets of the slice coercivity, flux plus lower-order term
        c2_t = spec.flux.c5_offset(tm, pts, w) + float(np.sum(w * spec.lower.c3(np.full(len(w), tm), pts)))
        c2_int += (b - a) * c2_t
    rho_f, rho_F = _space_time_modulars(spec, mesh, ts)
    u0 = project_initial(spec.u0, mesh)
    y0 = 0.5 * float(u0.vector() @ (fe_space(mesh).mass @ u0.vector()))
    QT = omega * spec.T_final
    M0 = y0 + c2_int + c_nu * rho_f + c_p * rho_F + eps * c_pminus * 2**pp * QT
    a_l1 = 2 * eps * spec.T_final  # c1 = 0: the lower-order term is bounded below by -c3
    M1 = 2 * M0 * math.exp(a_l1)
    M2 = 2 / c0 * (M0 + a_l1 * M1 / 2)
    M = (M2 + 1) ** (1 / pm) + math.sqrt(M1)
    return dict(M0=M0, M1=M1, M2=M2, M=M, eps=eps, c_pminus=c_pminus, a_l1=a_l1)


def proxy_norm(state: GalerkinState, spec: ProblemSpec) -> dict:
    """``(rho_p(eps u) + 1)^{1/p-} + ||u||_{Y^inf}`` with the right-endpoint rule in time."""
    space = fe_space(state.mesh, spec.rule)
    pts = space.q_points.reshape(-1, 2)
    w = space.q_weights.ravel()
    nq = space.q_weights.shape[1]
    ts = state.time_grid
    rho = 0.0
    ymax = 0.0
    for k, u in enumerate(state.trajectory):
        vec = u.vector()
        ymax = max(ymax, float(vec @ (space.mass @ vec)))
        if k == 0:
            continue
        e = np.repeat(space.eps_of(vec), nq, axis=0)
        en = np.sqrt(np.einsum("nij,nij->n", e, e))
        pv = spec.p(np.full(len(w), ts[k]), pts)
        rho += (ts[k] - ts[k - 1]) * float(np.sum(w * en ** pv))
    y_inf = math.sqrt(ymax)
    return dict(rho_eps=rho, y_inf=y_inf, proxy=(rho + 1) ** (1 / spec.p.p_minus) + y_inf)


def bochner_coercivity_monitor(state: GalerkinState, ledger: EnergyLedger, spec: ProblemSpec,
                               c_pminus: float | None = None) -> dict:
    """Energy slacks per step plus the Grönwall envelope check."""
    slack = ledger.slack
    g = gronwall_constants(spec, state.mesh, state.time_grid, c_pminus)
    y_inf_sq = 2 * float(np.max(ledger.kinetic))
    pn = proxy_norm(state, spec)
    tol = ledger.tolerance()
    return dict(slack=slack, min_slack=float(slack.min()), energy_ok=bool(slack.min() >= -tol),
                y_inf_sq=y_inf_sq, envelope_ok=bool(y_inf_sq <= g["M1"] + tol),
                proxy=pn["proxy"], proxy_ok=bool(pn["proxy"] <= g["M"]), **g)


# ---------------------------------------------------------------- studies


def l2_space_time_error(state: GalerkinState, exact: Callable, rule: int = 7) -> float:
    """``sqrt(sum_k dt ||u^k - u(t_k)||^2)`` over ``k >= 1`` with a 7-point rule."""
    space = fe_space(state.mesh, rule)
    pts = space.q_points.reshape(-1, 2)
    w = space.q_weights.ravel()
    ts = state.time_grid
    total = 0.0
    for k in range(1, len(ts)):
        uh = space.values_at_quadrature(state.trajectory[k].vector()).reshape(-1, 2)
        ue = np.asarray(exact(np.full(len(w), ts[k]), pts)).reshape(-1, 2)
        total += (ts[k] - ts[k - 1]) * float(np.sum(w * np.sum((uh - ue) ** 2, axis=1)))
    return math.sqrt(total)


def _difference_measures(fine: GalerkinState, coarse: GalerkinState, spec: ProblemSpec):
    space = fe_space(fine.mesh, spec.rule)
    pts = space.q_points.reshape(-1, 2)
    w = space.q_weights.ravel()
    nq = space.q_weights.shape[1]
    ts = fine.time_grid
    l2 = rho = 0.0
    for k in range(1, len(ts)):
        d = fine.trajectory[k].vector() - prolong(coarse.trajectory[k], fine.mesh).vector()
        dt = ts[k] - ts[k - 1]
        l2 += dt * float(d @ (space.mass @ d))
        e = np.repeat(space.eps_of(d), nq, axis=0)
        en = np.sqrt(np.einsum("nij,nij->n", e, e))
        rho += dt * float(np.sum(w * en ** spec.p(np.full(len(w), ts[k]), pts)))
    return math.sqrt(l2), rho


def galerkin_convergence_study(spec: ProblemSpec, levels: Sequence[int], K_steps: int,
                               cfg: NewtonConfig | None = None, c_pminus: float | None = None):
    """Solve on nested levels with a common time grid and compare consecutive levels."""
    levels = list(levels)
    if len(levels) < 3:
        raise ValueError("a convergence study needs at least three levels")
    meshes = build_mesh_hierarchy(spec.domain, max(levels) + 1)
    states, ledgers = [], []
    for L in levels:
        st, led = run_galerkin(spec, meshes[L], K_steps, cfg)
        states.append(st)
        ledgers.append(led)
    rows = []
    for i in range(1, len(levels)):
        l2, rho = _difference_measures(states[i], states[i - 1], spec)
        rows.append(dict(level=levels[i], l2_diff=l2, modular_diff=rho))
    proxies = [proxy_norm(s, spec)["proxy"] for s in states]
    if c_pminus is None:
        c_pminus = poincare_korn_constant(meshes[max(levels)], spec.p.p_minus)
    bound = gronwall_constants(spec, meshes[max(levels)], states[-1].time_grid, c_pminus)["M"]
    l2d = np.array([r["l2_diff"] for r in rows])
    md = np.array([r["modular_diff"] for r in rows])
    errors = None
    if spec.exact is not None:
        errors = [l2_space_time_error(s, spec.exact) for s in states]
    return dict(levels=levels, differences=rows, proxies=proxies, bound=bound,
                non_increasing=bool(np.all(np.diff(l2d) <= 1e-14) and np.all(np.diff(md) <= 1e-14)),
                bounded=bool(max(proxies) <= bound), errors=errors, states=states,
                ledgers=ledgers)


def dense_linear_euler(mesh: MeshLevel, T: float, K: int, u0, c2: float = 1.0,
                       f_source: Callable = _zero_vector):
    """Independent dense solver for ``p = 2``, ``S(A) = A``, ``b(a) = c2 a``.

    Element matrices are built triangle by triangle from explicit strain
    matrices, then each implicit Euler step is a dense linear solve.
    """
    free = np.flatnonzero(~mesh.boundary_mask)
    index = -np.ones(mesh.n_vertices, dtype=int)
    index[free] = np.arange(free.size)
    n = 2 * free.size
    Kmat = np.zeros((n, n))
    Mmat = np.zeros((n, n))
    load_pts, load_w, load_tri = [], [], []
    for tri in mesh.triangles:
        P = mesh.vertices[tri]
        area = 0.5 * abs(np.linalg.det(np.column_stack([P[1] - P[0], P[2] - P[0]])))
        C = np.linalg.inv(np.column_stack([np.ones(3), P]))  # rows: constant, d/dx1, d/dx2
        gx, gy = C[1], C[2]
        # strain rows (e11, e22, sqrt(2) e12) so that B^T B reproduces eps:eps
        B = np.zeros((3, 6))
        B[0, 0::2] = gx
        B[1, 1::2] = gy
        B[2, 0::2] = gy / math.sqrt(2)
        B[2, 1::2] = gx / math.sqrt(2)
        Ke = area * B.T @ B
        Me1 = area / 12 * (np.ones((3, 3)) + np.eye(3))
        Me = np.kron(Me1, np.eye(2))
        dofs = np.array([2 * index[v] + c if index[v] >= 0 else -1 for v in tri for c in range(2)])
        for i, di in enumerate(dofs):
            if di < 0:
                continue
            for j, dj in enumerate(dofs):
                if dj < 0:
                    continue
                Kmat[di, dj] += Ke[i, j]
                Mmat[di, dj] += Me[i, j]
    dt = T / K
    # L2 projection of u0 via nodal interpolation consistency: use the same projection as the solver
    u = project_initial(u0, mesh).vector()
    out = [u.copy()]
    A = Mmat / dt + Kmat + c2 * Mmat
    for k in range(1, K + 1):
        rhs = Mmat @ u / dt
        if f_source is not _zero_vector:
            # nodal-interpolated source, integrated with the consistent mass matrix
            vals = np.asarray(f_source(np.full(free.size, k * dt), mesh.vertices[free]))
            rhs += Mmat @ vals.reshape(-1)
        u = np.linalg.solve(A, rhs)
        out.append(u.copy())
    return np.array(out)


def manufactured_linear_problem(c2: float = 0.0, T: float = 1.0) -> ProblemSpec:
    """``p = 2`` problem on the unit square with ``u = e^{-t} sin(pi x1) sin(pi x2) (1, 1)``.

    The source ``f = du/dt - div eps(u) + c2 u`` is derived symbolically.
    """
    import sympy

    from .exponent import ExponentField
    from .models import default_lower_order, prototype_flux

    t, x1, x2 = sympy.symbols("t x1 x2")
    X = (x1, x2)
    phi = sympy.exp(-t) * sympy.sin(sympy.pi * x1) * sympy.sin(sympy.pi * x2)
    u = (phi, phi)
    eps = [[(sympy.diff(u[i], X[j]) + sympy.diff(u[j], X[i])) / 2 for j in range(2)]
           for i in range(2)]
    f = [sympy.simplify(sympy.diff(u[i], t) - sum(sympy.diff(eps[i][j], X[j]) for j in range(2))
                        + c2 * u[i]) for i in range(2)]
    f_num = sympy.lambdify((t, x1, x2), f, "numpy")
    u_num = sympy.lambdify((t, x1, x2), list(u), "numpy")

    def _vec(func):
        def out(tt, x):
            tt = np.broadcast_to(np.asarray(tt, dtype=float), (len(x),))
            vals = func(tt, x[:, 0], x[:, 1])
            return np.column_stack([np.broadcast_to(v, (len(x),)) for v in vals])
        return out

    exact = _vec(u_num)
    p = ExponentField.constant(2.0)
    mode = "linear_damping" if c2 > 0 else "zero"
    lower = default_lower_order(ExponentField.constant(2.0), c2, mode)
    return ProblemSpec(flux=prototype_flux(p, 0.1), lower=lower,
                       u0=lambda x: exact(np.zeros(len(x)), x), T_final=T, f_source=_vec(f_num),
                       exact=exact, domain="unit_square")
