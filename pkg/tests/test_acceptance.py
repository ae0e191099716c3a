"""Acceptance gate: one test per criterion, each at its stated tolerance and time budget."""
import math
import time

import numpy as np
import pytest

from varexp.exponent import ExponentField
from varexp.inequalities import (build_counterexample, calibrate_poincare_repair,
                                 calibrate_variable_interpolation, counterexample_exponent,
                                 divergence_certificate, naive_poincare_ratio,
                                 poincare_failure_run, poincare_repair_check,
                                 random_trajectories, variable_interpolation_check)
from varexp.mesh_fem import build_mesh_hierarchy, fe_space
from varexp.models import (check_growth_coercivity, check_lower_order, check_monotone,
                           default_lower_order, flux_from_function, prototype_flux)
from varexp.solver import (ProblemSpec, galerkin_convergence_study, l2_space_time_error,
                           manufactured_linear_problem, run_galerkin,
                           summation_by_parts_defect)
from varexp.spaces import embedding_check, gauss_box_quadrature, holder_check, luxemburg_norm, modular

from fieldgen import ordered_affine_pair, piecewise_field, random_affine

P2 = ExponentField.constant(2.0)


class Budget:
    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f}s > {self.seconds}s"


def test_criterion_1_counterexample_divergence():
    with Budget(30):
        cx = build_counterexample()[0]
        table = poincare_failure_run(cx, 10.0 ** -np.arange(1, 6))
        cert = divergence_certificate(table, rel_tol=0.1, grad_tol=1e-3)
    assert cert["A"] > 0
    assert cert["u_linear"], (
        f"u increments {cert['u_increments']} deviate {cert['max_rel_deviation']:.3f} from A ln 10")
    assert cert["grad_converged"], f"last gradient increment {cert['last_grad_increment']:.3g}"


def _sine(a):
    return lambda x: a * np.column_stack([np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])] * 2)


def _bump(a):
    def f(x):
        w = a * np.maximum(0.0, 1 - np.sum(x**2, axis=1) / 1.5**2) ** 2
        return np.column_stack([w, 0.5 * w])
    return f


def _suite():
    bumpp = counterexample_exponent()
    rng = np.random.default_rng(2024)
    out = []
    # linear problems, with and without damping, on the unit square
    for c2, mode in ((0.0, "zero"), (1.0, "linear_damping"), (3.0, "linear_damping")):
        src = rng.uniform(-1, 1, 2)
        out.append(dict(spec=ProblemSpec(prototype_flux(P2, 0.1), default_lower_order(P2, c2, mode),
                                         _sine(rng.uniform(0.5, 2)),
                                         f_source=lambda t, x, s=src: np.broadcast_to(s, (len(x), 2))),
                        level=4, K=32))
    out.append(dict(spec=manufactured_linear_problem(1.0), level=4, K=64))
    # prototype flux with the counterexample exponent on the disk
    for mode, c2 in (("zero", 0.0), ("linear_damping", 1.0), ("saturating", 2.0),
                     ("zero", 0.0), ("saturating", 0.5), ("linear_damping", 0.2)):
        amp = rng.uniform(1, 8)
        delta = rng.uniform(0.05, 0.5)
        F = rng.uniform(-0.5, 0.5, (2, 2))
        F = F + F.T
        out.append(dict(spec=ProblemSpec(
            prototype_flux(bumpp, delta),
            default_lower_order(p=bumpp, eps_star=0.1, c2=c2, mode=mode), _bump(amp),
            F_source=lambda t, x, F=F: np.cos(t)[:, None, None] * F,
            domain="disk(2.5)"), level=3, K=32))
    return out


def test_criterion_2_energy_inequality_suite():
    problems = _suite()
    assert len(problems) == 10
    worst = []
    with Budget(120):
        for prob in problems:
            _, ledger = run_galerkin(prob["spec"], prob["level"], prob["K"])
            tol = 1e-8 * (1 + ledger.kinetic[0])
            worst.append(float(ledger.slack.min() / tol))
    assert min(worst) >= -1.0, worst


def test_criterion_3_manufactured_convergence():
    spec = manufactured_linear_problem()
    with Budget(60):
        errs = [l2_space_time_error(run_galerkin(spec, L, K)[0], spec.exact)
                for L, K in ((2, 4), (3, 16), (4, 64), (5, 256))]
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios >= 2.0), ratios


def test_criterion_4_structure_sweeps():
    p = counterexample_exponent()
    with Budget(10):
        S = prototype_flux(p, 0.1)
        b = default_lower_order(p=p, eps_star=0.1)
        reports = [*check_growth_coercivity(S, 10_000, seed=42), check_monotone(S, 10_000, seed=42),
                   *check_lower_order(b, 10_000, seed=42)]
        bad = check_monotone(flux_from_function(lambda t, x, A: -np.asarray(A), p), 10_000, seed=42)
    assert [r.condition_id for r in reports] == ["S2", "S3", "S4", "B2", "B3"]
    assert all(r.worst_slack >= -1e-9 for r in reports), [r.row() for r in reports]
    assert bad.worst_slack < -1e-9


def test_criterion_5_function_space_kernel():
    rng = np.random.default_rng(5)
    pts, w = gauss_box_quadrature(8)
    with Budget(10):
        for _ in range(20):
            p = random_affine(rng)
            rank = rng.choice(["scalar", "vector", "sym_tensor"])
            f = piecewise_field(rng, pts, w, rank)
            nf = luxemburg_norm(f, p)
            for alpha in (-2.5, 0.1, 40.0):
                assert abs(luxemburg_norm(alpha * f, p) - abs(alpha) * nf) <= 1e-8 * abs(alpha) * nf
            assert 1 - 1e-6 <= modular(f / nf, p).value <= 1.0
            p0 = rng.uniform(1.1, 5.0)
            classical = np.sum(w * np.abs(f.values.reshape(len(w), -1) ** 2).sum(axis=1)
                               ** (p0 / 2)) ** (1 / p0)
            assert luxemburg_norm(f, ExponentField.constant(p0)) == pytest.approx(classical,
                                                                                 rel=1e-10)
        holder = []
        for _ in range(200):
            rank = rng.choice(["scalar", "vector", "sym_tensor"])
            holder.append(holder_check(piecewise_field(rng, pts, w, rank),
                                       piecewise_field(rng, pts, w, rank), random_affine(rng)).slack)
        emb = []
        for _ in range(100):
            q, p = ordered_affine_pair(rng)
            emb.append(embedding_check(piecewise_field(rng, pts, w, "vector"), q, p))
    assert min(holder) >= 0 and min(emb) >= 0


def test_criterion_6_repair_and_interpolation():
    mesh = build_mesh_hierarchy("unit_square", 4)[-1]
    p = ExponentField.affine(1.3, 0.5, 0.3, 0.2)
    with Budget(60):
        calib = random_trajectories(mesh, 200, seed=100)
        fresh = random_trajectories(mesh, 200, seed=200)
        rc = calibrate_poincare_repair(calib, p, seed=100)
        repair = poincare_repair_check(fresh, p, rc)
        ic = calibrate_variable_interpolation(calib, p, eps_star=0.1, seed=100)
        interp = variable_interpolation_check(fresh, p, ic)
        cx = build_counterexample()[0]
        stats = [cx.slice_stats(10.0 ** -k) for k in range(1, 13)]
        cx_repair = poincare_repair_check([stats], cx.p, rc)
    assert repair.passed, repair.row()
    assert interp.passed, interp.row()
    assert cx_repair.passed, cx_repair.row()
    assert max(naive_poincare_ratio(s) for s in stats) > 1e3


def test_criterion_7_galerkin_boundedness_and_cauchy():
    p = counterexample_exponent()
    spec = ProblemSpec(prototype_flux(p, 0.1), default_lower_order(p=p, eps_star=0.1, c2=1.0),
                       _bump(5.0), domain="disk(2.5)")
    with Budget(180):
        rep = galerkin_convergence_study(spec, [1, 2, 3, 4], 16)
    assert len(rep["proxies"]) == 4 and math.isfinite(rep["bound"])
    assert rep["bounded"], (rep["proxies"], rep["bound"])
    assert rep["non_increasing"], rep["differences"]


def test_criterion_8_summation_by_parts():
    mesh = build_mesh_hierarchy("unit_square", 4)[-1]
    M = fe_space(mesh).mass
    worst = 0.0
    for seed in range(20):
        trajs = random_trajectories(mesh, 2, seed=seed, slices=8, amplitude=(0.1, 1.0))
        U = np.array([u.vector() for _, u in trajs[0]])
        V = np.array([v.vector() for _, v in trajs[1]])
        worst = max(worst, abs(summation_by_parts_defect(U, V, M)))
    assert worst <= 1e-12
