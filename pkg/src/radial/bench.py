"""Benchmark orchestration on random QPs: reference solve, method runs, CSV output."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .algorithms import (
    ConfigurationError, SolveTrace, StepPolicy, accelerated_projected, default_L_eta,
    frank_wolfe, linprog_lmo, projected_gradient, radial_accelerated, radial_smoothing,
    radial_subgradient,
)
from .conditioning import certify
from .problems import QpInstance, generate_qp

METHODS = ("radial_subgradient", "radial_smoothing", "radial_accelerated",
           "projected_gradient", "accelerated_gradient", "frank_wolfe")
SEED_ENV = "RADIAL_SEED"


@dataclass
class BenchConfig:
    sizes: list = field(default_factory=lambda: [(50, 200, 20)])
    seed: int = 0
    methods: list = field(default_factory=lambda: list(METHODS))
    iterations: int = 10_000
    seconds: Optional[float] = None
    eta: Optional[float] = None
    eps: float = 1e-3
    stop_tol: Optional[float] = None
    momentum_clip: bool = False
    reference_eta: float = 1e-9
    reference_max_iter: int = 1_000_000
    out_dir: str = "bench_out"

    def __post_init__(self):
        self.sizes = [tuple(int(v) for v in s) for s in self.sizes]
        for s in self.sizes:
            if len(s) != 3 or min(s) <= 0:
                raise ValueError(f"sizes: each entry needs three positive integers (n, m, r), got {s}")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"methods: unknown {unknown}; choose from {list(METHODS)}")
        if self.iterations <= 0 or (self.seconds is not None and self.seconds <= 0):
            raise ValueError("budget must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")
        self.seed = int(self.seed)

    def eta_for(self, m: int) -> float:
        """``eps / (2 log(m1 + m2))`` unless ``eta`` is set."""
        return self.eta if self.eta is not None else self.eps / (2.0 * math.log(m + 1))


_FIELD_TYPES = {"iterations": int, "seed": int, "seconds": float, "eta": float, "eps": float,
                "stop_tol": float, "reference_eta": float, "reference_max_iter": int,
                "out_dir": str}


def _parse_kv_value(key, text):
    text = text.strip()
    if key == "sizes":
        return [tuple(int(v) for v in part.lower().split("x")) for part in text.replace(";", ",").split(",")
                if part.strip()]
    if key == "methods":
        return [m.strip() for m in text.split(",") if m.strip()]
    if key == "momentum_clip":
        return text.lower() in ("1", "true", "yes", "on")
    if text.lower() in ("none", ""):
        return None
    return _FIELD_TYPES[key](float(text) if _FIELD_TYPES[key] is int else text)


def load_config(path=None, overrides: Optional[dict] = None, env=None) -> BenchConfig:
    """Config from a JSON/YAML or ``key=value`` file, then ``RADIAL_SEED``, then overrides."""
    env = os.environ if env is None else env
    data: dict = {}
    known = {f.name for f in fields(BenchConfig)}
    if path is not None:
        text = Path(path).read_text()
        if Path(path).suffix.lower() in (".json", ".yaml", ".yml") or text.lstrip().startswith("{"):
            import yaml
            try:
                data = yaml.safe_load(text) or {}
            except yaml.YAMLError as e:
                raise ValueError(f"{path}: parse error: {e}") from None
            if not isinstance(data, dict):
                raise ValueError(f"{path}: expected a mapping")
        else:
            for lineno, line in enumerate(text.splitlines(), 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value")
                key, val = (s.strip() for s in line.split("=", 1))
                if key not in known:
                    raise ValueError(f"{path}:{lineno}: unknown field '{key}'")
                try:
                    data[key] = _parse_kv_value(key, val)
                except (ValueError, KeyError):
                    raise ValueError(f"{path}:{lineno}: bad value for '{key}': {val!r}") from None
        bad = set(data) - known
        if bad:
            raise ValueError(f"{path}: unknown field(s) {sorted(bad)}")
        for key, val in data.items():
            # YAML 1.1 reads exponents without a dot, such as 1e-09, as strings
            if key in _FIELD_TYPES and isinstance(val, str) and _FIELD_TYPES[key] is not str:
                try:
                    data[key] = _parse_kv_value(key, val)
                except ValueError:
                    raise ValueError(f"{path}: bad value for '{key}': {val!r}") from None
    if env.get(SEED_ENV):
        try:
            data["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ValueError(f"{SEED_ENV} must be an integer") from None
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    return BenchConfig(**data)


# --------------------------------------------------------------------------
# Reference solve


@dataclass(frozen=True)
class Reference:
    p_star: float
    x_star: np.ndarray
    iterations: int
    max_violation: float


def reference_solve(inst: QpInstance, eta_final: float = 1e-9, max_iter: int = 1_000_000,
                    window: int = 2000) -> Reference:
    """``p*`` by radial smoothing with ``eta`` decreasing tenfold per stage.

    A stage ends once a ``window`` of iterations improves the best primal
    value by less than ``1e-3 * eta`` (relative), or at its iteration cap
    ``30 sqrt(L_eta)``. The smoothing bias is ``O(eta)``, so the final stage
    sets the accuracy.
    """
    rep = certify(inst)
    etas = []
    eta = 1e-2
    while eta > eta_final * 1.0001:
        etas.append(eta)
        eta /= 10.0
    etas.append(eta_final)
    y = None
    best, best_x, used = -math.inf, None, 0
    for eta in etas:
        L = default_L_eta(eta, rep.smooth_dual_bound, rep.lipschitz_dual, inst.rows)
        cap = int(min(max_iter - used, 30 * math.sqrt(L)))
        stage_best = -math.inf
        while cap > 0:
            T = min(window, cap)
            tr = radial_smoothing(inst, np.zeros(inst.dim), eta, L, T, y0=y)
            used += T
            cap -= T
            y = tr.y
            if tr.best_primal > best:
                best, best_x = tr.best_primal, tr.x_best
            improved = best - stage_best
            stage_best = best
            if improved <= 1e-3 * eta * abs(best):
                break
        if used >= max_iter:
            break
    viol = float(max(0.0, np.max(inst.A @ best_x - inst.b))) if inst.m else 0.0
    return Reference(best, best_x, used, viol)


# --------------------------------------------------------------------------
# Runs


def run_method(method: str, inst: QpInstance, cfg: BenchConfig, p_star: Optional[float],
               report=None) -> SolveTrace:
    report = report or certify(inst)
    x0 = np.zeros(inst.dim)
    T, tl, tol = cfg.iterations, cfg.seconds, cfg.stop_tol
    if method == "radial_subgradient":
        return radial_subgradient(inst, x0, StepPolicy.relative_eps(cfg.eps), T, stop_tol=tol,
                                  p_star=p_star, time_limit=tl)
    if method == "radial_smoothing":
        eta = cfg.eta_for(inst.m)
        L = default_L_eta(eta, report.smooth_dual_bound, report.lipschitz_dual, inst.rows)
        return radial_smoothing(inst, x0, eta, L, T, p_star=p_star, stop_tol=tol,
                                momentum_clip=cfg.momentum_clip, time_limit=tl)
    if method == "radial_accelerated":
        if inst.m:
            raise ConfigurationError("radial_accelerated needs a smooth dual; "
                                     "constrained QPs have a finite-max dual")
        return radial_accelerated(inst, x0, report.L, report.D, report.safe_R, T, p_star=p_star,
                                  stop_tol=tol, momentum_clip=cfg.momentum_clip, time_limit=tl)
    L = inst.smoothness()
    if method in ("projected_gradient", "accelerated_gradient"):
        fn = projected_gradient if method == "projected_gradient" else accelerated_projected
        kw = {"momentum_clip": cfg.momentum_clip} if method == "accelerated_gradient" else {}
        return fn(inst, x0, L, T, p_star=p_star, stop_tol=tol, time_limit=tl, **kw)
    if method == "frank_wolfe":
        return frank_wolfe(inst, linprog_lmo(inst.A, inst.b), x0, T, p_star=p_star,
                           stop_tol=tol, time_limit=tl)
    raise ConfigurationError(f"unknown method {method!r}")


SUMMARY_COLUMNS = ("method", "instance", "iterations", "best_rel_gap", "seconds", "status")


def run_benchmark(cfg: BenchConfig, log=print) -> list:
    """One CSV per (instance, method) plus ``summary.csv``; returns summary rows."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for n, m, r in cfg.sizes:
        inst = generate_qp(n, m, r, cfg.seed)
        report = certify(inst)
        ref = reference_solve(inst, cfg.reference_eta, cfg.reference_max_iter)
        header = (f"instance={inst.name}\nseed={cfg.seed}\np_star={ref.p_star!r}\n"
                  f"reference_iterations={ref.iterations}\n"
                  f"reference_max_violation={ref.max_violation!r}")
        log(f"{inst.name}: p*={ref.p_star:.12g} ({ref.iterations} reference iterations)")
        for method in cfg.methods:
            t0 = time.perf_counter()
            try:
                trace = run_method(method, inst, cfg, ref.p_star, report)
            except (ArithmeticError, ValueError, RuntimeError) as e:
                trace = SolveTrace(method, p_star=ref.p_star, status="error", message=str(e))
            secs = time.perf_counter() - t0
            trace.write_csv(out / f"{inst.name}__{method}.csv",
                            header + f"\nmethod={method}\nstatus={trace.status}"
                            + (f"\nmessage={trace.message}" if trace.message else ""))
            best = trace.best_rel_gap
            rows.append({"method": method, "instance": inst.name,
                         "iterations": trace.iterations,
                         "best_rel_gap": "" if best is None else repr(best),
                         "seconds": f"{secs:.3f}", "status": trace.status})
            log(f"  {method}: {trace.status}, {trace.iterations} iterations, best rel_gap {best}")
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return rows


def config_to_json(cfg: BenchConfig) -> str:
    d = {f.name: getattr(cfg, f.name) for f in fields(BenchConfig)}
    d["sizes"] = [list(s) for s in cfg.sizes]
    return json.dumps(d, indent=2)
