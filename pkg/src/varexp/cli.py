"""Command-line entry point.

Usage::

    python -m varexp solve --config run.cfg --out results/
    python -m varexp verify-structure --exponent bump --samples 10000 --seed 42
    python -m varexp inequalities --suite all --seed 42
    python -m varexp counterexample --truncations 5
    python -m varexp convergence --config study.cfg

Configs are flat ``key = value`` documents with ``#`` comments.  Every run
writes ``manifest.csv`` (file name and data row count of each emitted CSV) and
exits 0 only when every pass flag of the command is true.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadSpec, ConfigError, VarExpError
from .exponent import ExponentField, SpaceTimeBox
from .inequalities import (CounterexampleSpec, build_counterexample,
                           calibrate_gn, calibrate_poincare_repair,
                           calibrate_variable_interpolation, counterexample_exponent,
                           divergence_certificate, gn_check, korn_check, korn_ratios,
                           naive_poincare_ratio, poincare_failure_run, poincare_repair_check,
                           random_fe_fields, random_trajectories, variable_interpolation_check)
from .mesh_fem import build_mesh_hierarchy, parse_domain
from .models import (check_growth_coercivity, check_lower_order, check_monotone,
                     default_lower_order, prototype_flux)
from .solver import (NewtonConfig, ProblemSpec, bochner_coercivity_monitor,
                     galerkin_convergence_study, l2_space_time_error,
                     manufactured_linear_problem, run_galerkin)

log = logging.getLogger("varexp")

COMMANDS = ("solve", "verify-structure", "inequalities", "counterexample", "convergence")

# key -> (type, default)
KEYS = {
    "domain": (str, "unit_square"),
    "levels": (int, 3),
    "steps": (int, 32),
    "T": (float, 1.0),
    "exponent": (str, "constant 2"),
    "flux": (str, "prototype"),
    "delta": (float, 0.1),
    "lower": (str, "zero"),
    "c2": (float, 1.0),
    "eps_star": (float, 0.1),
    "q": (str, "constant 2"),
    "source": (str, "zero"),
    "u0": (str, "sine 1"),
    "tol_res": (float, 1e-10),
    "max_iter": (int, 30),
    "damping": (float, 1.0),
    "tol_energy": (float, 1e-8),
    "stride": (int, 0),
    "study_levels": (str, ""),
    "seed": (int, 0),
    "samples": (int, 10_000),
    "truncations": (int, 5),
    "suite": (str, "all"),
    "model": (str, "prototype"),
    "fields": (int, 200),
    "output_dir": (str, "out"),
}
LOWER_MODES = ("zero", "linear_damping", "saturating")
SUITES = ("all", "repair", "interpolation", "korn", "gn")


@dataclass
class RunConfig:
    command: str
    params: dict
    lines: dict = field(default_factory=dict)
    quiet: bool = False

    def __getitem__(self, key):
        return self.params[key]

    def line(self, key):
        return self.lines.get(key)

    @property
    def output_dir(self) -> Path:
        return Path(self.params["output_dir"])


# ---------------------------------------------------------------- parsing


def _coerce(key, raw, line):
    kind = KEYS[key][0]
    try:
        if kind is int:
            value = int(raw, 0)
        elif kind is float:
            value = float(raw)
        else:
            value = raw
    except ValueError:
        raise ConfigError(f"{key} expects {kind.__name__}, got {raw!r}", line) from None
    if kind is float and not math.isfinite(value):
        raise ConfigError(f"{key} must be finite", line)
    return value


def _domain_box(domain: str, T: float) -> SpaceTimeBox:
    kind, radius = parse_domain(domain)
    if kind == "disk":
        return SpaceTimeBox(0.0, T, (-radius, -radius), (radius, radius))
    return SpaceTimeBox(0.0, T)


def parse_exponent(text: str, box: SpaceTimeBox | None = None) -> ExponentField:
    """``constant <v>``, ``affine <a> <b1> <b2> [<bt>]`` or ``bump``."""
    parts = text.split()
    if not parts:
        raise BadSpec("empty exponent spec")
    head, args = parts[0], parts[1:]
    try:
        nums = [float(a) for a in args]
    except ValueError:
        raise BadSpec(f"non-numeric exponent parameters in {text!r}") from None
    if head == "constant" and len(nums) == 1:
        return ExponentField.constant(nums[0], box)
    if head == "affine" and len(nums) in (3, 4):
        return ExponentField.affine(*nums, domain=box)
    if head == "bump" and not nums:
        return counterexample_exponent()
    raise BadSpec(f"unknown exponent spec {text!r}")


def _checked(cfg_lines, key, fn):
    """Run ``fn`` and turn module errors into a ConfigError on ``key``'s line."""
    try:
        return fn()
    except ConfigError:
        raise
    except (VarExpError, ValueError) as exc:
        reason = type(exc).__name__ if isinstance(exc, VarExpError) else "ConfigError"
        raise ConfigError(str(exc), cfg_lines.get(key), reason) from exc


def parse_config(text: str, command: str = "solve", overrides: dict | None = None) -> RunConfig:
    """Parse and validate a ``key = value`` document; the first error wins."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    params = {k: v for k, (_, v) in KEYS.items()}
    lines = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"expected 'key = value', got {body!r}", n)
        key, value = (s.strip() for s in body.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", n)
        if key in lines:
            raise ConfigError(f"duplicate key {key!r} (first on line {lines[key]})", n)
        params[key] = _coerce(key, value, n)
        lines[key] = n
    for key, value in (overrides or {}).items():
        if value is not None:
            params[key] = value
    cfg = RunConfig(command, params, lines)
    validate(cfg)
    return cfg


def _range(cfg, key, ok, what):
    if not ok(cfg[key]):
        raise ConfigError(f"{key} = {cfg[key]!r} {what}", cfg.line(key), "ConfigError")


def validate(cfg: RunConfig):
    """Check every parameter against the module preconditions before dispatch."""
    L = cfg.lines
    _range(cfg, "levels", lambda v: 1 <= v <= 8, "must lie in 1..8")
    _range(cfg, "steps", lambda v: v >= 1, "must be at least 1")
    _range(cfg, "T", lambda v: v > 0, "must be positive")
    _range(cfg, "delta", lambda v: v >= 0, "must be non-negative")
    _range(cfg, "c2", lambda v: v >= 0, "must be non-negative")
    _range(cfg, "tol_res", lambda v: v > 0, "must be positive")
    _range(cfg, "tol_energy", lambda v: v > 0, "must be positive")
    _range(cfg, "max_iter", lambda v: v >= 1, "must be at least 1")
    _range(cfg, "damping", lambda v: 0 < v <= 1, "must lie in (0, 1]")
    _range(cfg, "stride", lambda v: v >= 0, "must be non-negative")
    _range(cfg, "samples", lambda v: v >= 1, "must be at least 1")
    _range(cfg, "truncations", lambda v: 2 <= v <= 16, "must lie in 2..16")
    _range(cfg, "fields", lambda v: v >= 4, "must be at least 4")
    _range(cfg, "seed", lambda v: 0 <= v < 2**64, "must be an unsigned 64-bit integer")
    _range(cfg, "lower", lambda v: v in LOWER_MODES, f"must be one of {LOWER_MODES}")
    _range(cfg, "flux", lambda v: v == "prototype", "must be 'prototype'")
    _range(cfg, "model", lambda v: v == "prototype", "must be 'prototype'")
    _range(cfg, "suite", lambda v: v in SUITES, f"must be one of {SUITES}")
    _checked(L, "domain", lambda: parse_domain(cfg["domain"]))
    if cfg.command in ("solve", "convergence", "verify-structure"):
        build_problem(cfg)
    if cfg.command == "convergence":
        _checked(L, "study_levels", lambda: _study_levels(cfg))


def _study_levels(cfg):
    if cfg["study_levels"]:
        levels = [int(v) for v in cfg["study_levels"].split()]
    else:
        top = cfg["levels"] - 1
        levels = list(range(max(0, top - 3), top + 1))
    if len(levels) < 3 or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("a convergence study needs at least three increasing levels")
    if levels[0] < 0 or levels[-1] > 7:
        raise ValueError("study levels must lie in 0..7")
    return levels


def _u0(spec_text: str, domain: str):
    parts = spec_text.split()
    kind = parts[0] if parts else ""
    amp = float(parts[1]) if len(parts) > 1 else 1.0
    box_kind, radius = parse_domain(domain)
    lo = np.array([-radius, -radius]) if box_kind == "disk" else np.zeros(2)
    width = 2 * radius if box_kind == "disk" else 1.0
    if kind == "zero":
        return lambda x: np.zeros((len(x), 2))
    if kind == "sine":
        def sine(x):
            s = np.prod(np.sin(np.pi * (x - lo) / width), axis=1)
            return amp * np.column_stack([s, s])
        return sine
    if kind == "bump":
        centre, rho = lo + width / 2, 0.6 * width / 2

        def bump(x):
            w = amp * np.maximum(0.0, 1 - np.sum((x - centre) ** 2, axis=1) / rho**2) ** 2
            return np.column_stack([w, 0.5 * w])
        return bump
    raise BadSpec(f"unknown u0 spec {spec_text!r}")


def _source(spec_text: str):
    parts = spec_text.split()
    if parts == ["zero"]:
        return lambda t, x: np.zeros((len(x), 2))
    if parts and parts[0] == "constant" and len(parts) == 3:
        f = np.array([float(parts[1]), float(parts[2])])
        return lambda t, x: np.broadcast_to(f, (len(x), 2)).copy()
    raise BadSpec(f"unknown source spec {spec_text!r}")


def build_problem(cfg: RunConfig) -> ProblemSpec:
    L = cfg.lines
    box = _checked(L, "T", lambda: _domain_box(cfg["domain"], cfg["T"]))
    p = _checked(L, "exponent", lambda: parse_exponent(cfg["exponent"], box))
    q = _checked(L, "q", lambda: parse_exponent(cfg["q"], box))
    if cfg["source"] == "manufactured":
        if cfg["domain"] != "unit_square" or getattr(p, "value", None) != 2.0:
            raise ConfigError("the manufactured source needs domain = unit_square and "
                              "exponent = constant 2", L.get("source"), "BadSpec")
        c2 = cfg["c2"] if cfg["lower"] == "linear_damping" else 0.0
        spec = manufactured_linear_problem(c2, cfg["T"])
        _checked(L, "q", lambda: ProblemSpec(spec.flux, spec.lower, spec.u0, spec.T_final,
                                             spec.f_source, q=q, eps_star=cfg["eps_star"]))
        return spec
    flux = _checked(L, "delta", lambda: prototype_flux(p, cfg["delta"]))
    lower = _checked(L, "lower", lambda: default_lower_order(
        p=p, eps_star=cfg["eps_star"], c2=cfg["c2"], mode=cfg["lower"]))
    u0 = _checked(L, "u0", lambda: _u0(cfg["u0"], cfg["domain"]))
    f = _checked(L, "source", lambda: _source(cfg["source"]))
    return _checked(L, "q", lambda: ProblemSpec(flux, lower, u0, cfg["T"], f, q=q,
                                                eps_star=cfg["eps_star"],
                                                domain=cfg["domain"]))


# ---------------------------------------------------------------- output


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


class Emitter:
    """Writes CSVs into the output directory and remembers row counts."""

    def __init__(self, out: Path):
        self.out = out
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = []

    def write(self, name: str, header, rows):
        rows = list(rows)
        with open(self.out / name, "w", newline="", encoding="ascii") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        self.files.append((name, len(rows)))

    def manifest(self):
        with open(self.out / "manifest.csv", "w", newline="", encoding="ascii") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("file", "rows"))
            w.writerows(self.files)


# ---------------------------------------------------------------- commands


def _newton(cfg):
    return NewtonConfig(max_iter=cfg["max_iter"], tol_res=cfg["tol_res"], damping=cfg["damping"])


def cmd_solve(cfg: RunConfig, em: Emitter) -> bool:
    spec = build_problem(cfg)
    meshes = build_mesh_hierarchy(cfg["domain"], cfg["levels"])
    state, ledger = run_galerkin(spec, meshes[-1], cfg["steps"], _newton(cfg))
    slack = ledger.slack
    em.write("energy.csv", ("k", "t", "kinetic", "dissipation", "work", "slack"), ledger.rows())
    stride = cfg["stride"] or cfg["steps"]
    mesh = state.mesh
    for k in range(0, cfg["steps"] + 1, stride):
        vals = state.trajectory[k].vertex_values()
        em.write(f"snapshot_{k:05d}.csv", ("vertex_id", "x1", "x2", "u1", "u2"),
                 ((i, *mesh.vertices[i], *vals[i]) for i in range(mesh.n_vertices)))
    mon = bochner_coercivity_monitor(state, ledger, spec)
    tol = cfg["tol_energy"] * (1 + ledger.kinetic[0])
    energy_ok = bool(slack.min() >= -tol)
    rows = [("min_slack", slack.min()), ("energy_ok", energy_ok),
            ("max_newton_iterations", max(state.newton_iterations)),
            ("M1", mon["M1"]), ("y_inf_sq", mon["y_inf_sq"]), ("envelope_ok", mon["envelope_ok"]),
            ("proxy", mon["proxy"]), ("proxy_bound", mon["M"]), ("proxy_ok", mon["proxy_ok"])]
    if spec.exact is not None:
        rows.append(("l2_error", l2_space_time_error(state, spec.exact)))
    em.write("summary.csv", ("quantity", "value"), rows)
    return energy_ok and mon["envelope_ok"] and mon["proxy_ok"]


def cmd_convergence(cfg: RunConfig, em: Emitter) -> bool:
    spec = build_problem(cfg)
    levels = _study_levels(cfg)
    rep = galerkin_convergence_study(spec, levels, cfg["steps"], _newton(cfg))
    rows = [(levels[0], float("nan"), float("nan"), rep["proxies"][0], rep["bound"])]
    for d, proxy in zip(rep["differences"], rep["proxies"][1:]):
        rows.append((d["level"], d["l2_diff"], d["modular_diff"], proxy, rep["bound"]))
    em.write("convergence.csv", ("level", "l2_diff", "modular_diff", "proxy", "bound"), rows)
    return rep["non_increasing"] and rep["bounded"]


def cmd_verify_structure(cfg: RunConfig, em: Emitter) -> bool:
    spec = build_problem(cfg)
    n, seed = cfg["samples"], cfg["seed"]
    reports = [*check_growth_coercivity(spec.flux, n, seed), check_monotone(spec.flux, n, seed),
               *check_lower_order(spec.lower, n, seed)]
    em.write("structure.csv", ("condition_id", "samples", "worst_slack", "t", "x1", "x2"),
             (r.row() for r in reports))
    return all(r.passed for r in reports)


def cmd_counterexample(cfg: RunConfig, em: Emitter) -> bool:
    cx, p, _ = build_counterexample(CounterexampleSpec())
    taus = 10.0 ** -np.arange(1, cfg["truncations"] + 1)
    table = poincare_failure_run(cx, taus)
    em.write("counterexample.csv", ("tau", "rho_p_u", "rho_p_grad_u", "rho_pminus_u"), table)
    em.write("figure1.csv", ("r", "eta", "abs_grad_eta", "p"), cx.radial_table())
    cert = divergence_certificate(table)
    em.write("certificate.csv", ("quantity", "value"),
             [("A", cert["A"]), ("max_rel_deviation", cert["max_rel_deviation"]),
              ("last_grad_increment", cert["last_grad_increment"]),
              ("u_linear", cert["u_linear"]), ("grad_converged", cert["grad_converged"])])
    return cert["u_linear"] and cert["grad_converged"]


def cmd_inequalities(cfg: RunConfig, em: Emitter) -> bool:
    seed, n = cfg["seed"], cfg["fields"]
    mesh = build_mesh_hierarchy(cfg["domain"], cfg["levels"])[-1]
    box = _domain_box(cfg["domain"], cfg["T"])
    p = parse_exponent(cfg["exponent"], box)
    suite = cfg["suite"]
    header = ("name", "samples", "constants", "worst_ratio", "bound", "passed")
    ok = True
    if suite in ("all", "repair"):
        consts = calibrate_poincare_repair(random_trajectories(mesh, n, seed), p, seed=seed)
        rep = poincare_repair_check(random_trajectories(mesh, n, seed + 1), p, consts)
        cx = build_counterexample()[0]
        stats = [cx.slice_stats(10.0 ** -k) for k in range(1, 17)]
        cx_rep = poincare_repair_check([stats], cx.p, consts)
        em.write("repair.csv", header, [rep.row(), cx_rep.row()])
        em.write("repair_counterexample.csv", ("t", "naive_ratio", "repair_ratio"),
                 ((s.t, naive_poincare_ratio(s),
                   s.rho_u / (1 + s.rho_eps + s.y_norm ** consts.gamma)) for s in stats))
        ok &= rep.passed and cx_rep.passed
    if suite in ("all", "interpolation"):
        eps = cfg["eps_star"]
        consts = calibrate_variable_interpolation(random_trajectories(mesh, n, seed), p, eps,
                                                  seed=seed)
        rep = variable_interpolation_check(random_trajectories(mesh, n, seed + 1), p, consts)
        em.write("interpolation.csv", header, [rep.row()])
        ok &= rep.passed
    if suite in ("all", "korn"):
        fields = random_fe_fields(mesh, 2 * n, seed)
        rows = []
        for s in (1.5, 2.0, 3.0):
            bound = 2.0 * korn_ratios(fields[:n], s).max()
            rep = korn_check(fields[n:], s, bound)
            rows.append(rep.row())
            ok &= rep.passed
        em.write("korn.csv", header, rows)
    if suite in ("all", "gn"):
        fields = random_fe_fields(mesh, 2 * n, seed + 7)
        c1, c2 = calibrate_gn(fields[:n], 2.0, 2.0, 0.5)
        rep = gn_check(fields[n:], 2.0, 2.0, 0.5, c1, c2)
        em.write("gn.csv", header, [rep.row()])
        ok &= rep.passed
    return bool(ok)


DISPATCH = {
    "solve": cmd_solve,
    "convergence": cmd_convergence,
    "verify-structure": cmd_verify_structure,
    "counterexample": cmd_counterexample,
    "inequalities": cmd_inequalities,
}


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    em = Emitter(cfg.output_dir)
    try:
        ok = DISPATCH[cfg.command](cfg, em)
    except VarExpError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    finally:
        em.manifest()
    if not cfg.quiet:
        for name, rows in em.files:
            print(f"{name}: {rows} rows")
        print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="varexp", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", type=Path)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", type=str)
    ap.add_argument("--quiet", action="store_true")
    ap.add_argument("--samples", type=int)
    ap.add_argument("--truncations", type=int)
    ap.add_argument("--suite", choices=SUITES)
    ap.add_argument("--model")
    ap.add_argument("--exponent")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = dict(seed=args.seed, output_dir=args.out, samples=args.samples,
                     truncations=args.truncations, suite=args.suite, model=args.model,
                     exponent=args.exponent)
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else ""
        cfg = parse_config(text, args.command, overrides)
    except OSError as exc:
        print(f"ConfigError: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"{exc.reason}: {exc}", file=sys.stderr)
        return 2
    cfg.quiet = args.quiet
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
