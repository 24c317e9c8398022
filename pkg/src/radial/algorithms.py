"""Radial subgradient, smoothing and accelerated solvers plus projection baselines."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog

from .core import RadialProblem
from .problems import _min_norm_convex_combination

TRACE_COLUMNS = ("k", "dual_value", "primal_value", "rel_gap", "subgrad_norm", "step",
                 "elapsed_seconds")


class ConfigurationError(ValueError):
    pass


class ProjectionFailure(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Step sizes


@dataclass(frozen=True)
class StepPolicy:
    kind: str
    param: Optional[float] = None

    KINDS = ("polyak_gap", "relative_eps", "nonconvex_eps", "constant")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ConfigurationError(f"unknown step policy {self.kind!r}")
        if self.kind == "polyak_gap" and self.param is None:
            raise ConfigurationError("polyak_gap needs the optimal dual value d*")
        if self.kind != "polyak_gap" and not (self.param is not None and self.param > 0):
            raise ConfigurationError(f"{self.kind} needs a positive parameter")

    @classmethod
    def polyak_gap(cls, d_star):
        return cls("polyak_gap", d_star)

    @classmethod
    def relative_eps(cls, eps):
        return cls("relative_eps", eps)

    @classmethod
    def nonconvex_eps(cls, eps):
        return cls("nonconvex_eps", eps)

    @classmethod
    def constant(cls, alpha):
        return cls("constant", alpha)

    def __call__(self, dual_value: float, gnorm2: float) -> float:
        if self.kind == "constant":
            return self.param
        if gnorm2 <= 0:
            return 0.0
        if self.kind == "polyak_gap":
            return max(dual_value - self.param, 0.0) / gnorm2
        if self.kind == "relative_eps":
            return self.param * dual_value / gnorm2
        return self.param / gnorm2


# --------------------------------------------------------------------------
# Traces


@dataclass
class TraceRecord:
    k: int
    dual_value: float
    primal_value: float
    rel_gap: Optional[float]
    subgrad_norm: float
    step: float
    elapsed_seconds: float

    def row(self):
        def num(v):
            return "" if v is None else repr(float(v))
        return [str(self.k), num(self.dual_value), num(self.primal_value), num(self.rel_gap),
                num(self.subgrad_norm), num(self.step), f"{self.elapsed_seconds:.6f}"]


@dataclass
class SolveTrace:
    """Per-iteration records plus the terminal status.

    ``rel_gap`` in each record is the best-so-far ``(p* - f)/f``; the raw
    primal values are kept so other accuracy measures can be derived.
    """

    method: str
    records: list = field(default_factory=list)
    status: str = "iters_exhausted"
    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    p_star: Optional[float] = None
    certificate: Optional[np.ndarray] = None
    message: str = ""
    min_stationarity: float = math.inf
    x_best: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def primal_values(self) -> np.ndarray:
        return np.array([r.primal_value for r in self.records])

    @property
    def dual_values(self) -> np.ndarray:
        return np.array([r.dual_value for r in self.records])

    @property
    def best_primal(self) -> float:
        vals = self.primal_values
        return float(vals.max()) if vals.size else -math.inf

    @property
    def best_rel_gap(self) -> Optional[float]:
        if self.p_star is None or not self.records:
            return None
        return self.records[-1].rel_gap

    def averaged_rel_gap(self, T: Optional[int] = None) -> float:
        """``(1/T) sum_k (p* - f(x_k)) / p*`` over the first ``T`` iterates."""
        vals = self.primal_values[:T]
        return float(np.mean((self.p_star - vals) / self.p_star))

    def first_iteration_below(self, tol: float) -> Optional[int]:
        for r in self.records:
            if r.rel_gap is not None and r.rel_gap <= tol:
                return r.k
        return None

    def write_csv(self, path, header_comment: Optional[str] = None):
        with open(path, "w", newline="") as fh:
            if header_comment:
                for line in header_comment.splitlines():
                    fh.write(f"# {line}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for r in self.records:
                w.writerow(r.row())


class _Recorder:
    def __init__(self, trace: SolveTrace, p_star, time_limit=None):
        self.trace = trace
        self.p_star = p_star
        self.best = -math.inf
        self.t0 = time.perf_counter()
        self.time_limit = time_limit

    def expired(self) -> bool:
        if self.time_limit is None or time.perf_counter() - self.t0 < self.time_limit:
            return False
        self.trace.status, self.trace.message = "iters_exhausted", "time budget reached"
        return True

    def add(self, k, dual_value, primal_value, subgrad_norm, step, x=None):
        primal_value = float(primal_value)
        if primal_value > self.best:
            self.best = primal_value
            if x is not None:
                self.trace.x_best = np.array(x, dtype=float)
        gap = None
        if self.p_star is not None:
            gap = (self.p_star - self.best) / self.best if self.best > 0 else math.inf
        rec = TraceRecord(k, float(dual_value), primal_value, gap, float(subgrad_norm),
                          float(step), time.perf_counter() - self.t0)
        self.trace.records.append(rec)
        return rec


def _start(f, x0):
    x0 = np.asarray(x0, dtype=float)
    f0 = f.eval(x0)
    if not f0.is_finite:
        raise ConfigurationError(f"f(x0) must be finite positive, got {f0}")
    return x0 / float(f0), float(f0)


def _stationarity(problem, y, delta):
    """Norm of the min-norm convex combination of the ``delta``-active piece gradients."""
    vals, grad = problem.dual_pieces(y)
    top = vals.max()
    idx = [i for i in range(vals.size) if vals[i] >= top - delta and vals[i] > 0]
    G = np.array([grad(i) for i in idx])
    return float(np.linalg.norm(_min_norm_convex_combination(G)))


# --------------------------------------------------------------------------
# Radial subgradient


def radial_subgradient(f: RadialProblem, x0, policy: StepPolicy, T: int,
                       stop_tol: Optional[float] = None, p_star: Optional[float] = None,
                       lipschitz_dual: Optional[float] = None, nonconvex: bool = False,
                       stationarity_delta: Optional[float] = None,
                       time_limit: Optional[float] = None, callback=None) -> SolveTrace:
    """Subgradient descent on ``f^Gamma`` started at ``y0 = x0 / f(x0)``.

    Records ``k = 0..T-1`` and the final point ``y_T``. In nonconvex mode
    the recorded ``subgrad_norm`` is the stationarity measure (min-norm
    element of the hull of near-active piece gradients) and the run stops once
    it drops below ``stop_tol * lipschitz_dual``. ``callback(k, y, v, g, step)``
    sees every iterate.
    """
    if not isinstance(policy, StepPolicy):
        raise ConfigurationError("policy must be a StepPolicy")
    if nonconvex and stationarity_delta is None:
        stationarity_delta = policy.param if policy.kind == "nonconvex_eps" else 1e-2
    trace = SolveTrace("radial_subgradient", p_star=p_star)
    rec = _Recorder(trace, p_star, time_limit)
    y, _ = _start(f, x0)
    warm = None
    for k in range(T + 1):
        dp = f.dual_point(y, warm=warm)
        if dp.value.is_zero:
            trace.status, trace.certificate, trace.y = "unbounded_certificate", y.copy(), y.copy()
            trace.message = "dual value zero: primal unbounded along the ray through (y, 1)"
            return trace
        if dp.value.is_inf:
            trace.status, trace.y = "error", y.copy()
            trace.message = "dual value infinite at an iterate"
            return trace
        v = float(dp.value)
        warm = v
        g = dp.subgradient
        gnorm = float(np.linalg.norm(g))
        measure = _stationarity(f, y, stationarity_delta) if nonconvex else gnorm
        trace.min_stationarity = min(trace.min_stationarity, measure)
        trace.x, trace.y = y / v, y.copy()
        step = policy(v, gnorm**2) if k < T else 0.0
        r = rec.add(k, v, float(dp.primal), measure, step, y / v)
        if callback is not None:
            callback(k, y, v, g, step)
        if k == T or rec.expired():
            break
        if gnorm == 0.0:
            trace.status = "stationary"
            return trace
        if stop_tol is not None:
            if p_star is not None and not nonconvex and r.rel_gap <= stop_tol:
                trace.status = "tol_reached"
                return trace
            if nonconvex and lipschitz_dual is not None and measure <= stop_tol * lipschitz_dual:
                trace.status = "stationary"
                return trace
        y = y - step * g
    trace.status = "iters_exhausted"
    return trace


# --------------------------------------------------------------------------
# Smoothing


def softmax_eval_grad(values, grads, eta: float):
    """``eta * log(sum exp(values / eta))`` and its gradient ``sum w_i grads_i``."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    values = np.asarray(values, dtype=float)
    top = values.max()
    w = np.exp((values - top) / eta)
    s = w.sum()
    w /= s
    return float(top + eta * math.log(s)), np.asarray(grads, dtype=float).T @ w


@dataclass(frozen=True)
class SmoothedDual:
    """Soft-max of the smooth piece duals and the linear gauge rows."""

    problem: RadialProblem
    eta: float
    L_eta: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.L_eta > 0:
            raise ValueError("L_eta must be positive")

    @property
    def n_pieces(self) -> int:
        return len(self.problem.finite_max_parts(np.zeros(self.problem.dim))[0]) + self.problem.rows.shape[0]

    def parts(self, y):
        sv, sg, rv, extra = self.problem.finite_max_parts(y)
        vals = np.concatenate([sv, rv])
        grads = np.vstack([sg, self.problem.rows]) if rv.size else sg
        return vals, grads, sv, rv, extra

    def eval_grad(self, y):
        vals, grads, *_ = self.parts(y)
        return softmax_eval_grad(vals, grads, self.eta)


def default_L_eta(eta, smooth_dual_bound, lipschitz_dual, rows, reading="squared"):
    """``smooth_dual_bound + max(lipschitz_dual^2, max ||a_i/b_i||^2) / eta``.

    ``reading="linear"`` uses ``max ||a_i/b_i||`` (unsquared) instead.
    """
    rn = float(np.linalg.norm(rows, axis=1).max()) if len(rows) else 0.0
    row_term = rn**2 if reading == "squared" else rn
    return smooth_dual_bound + max(lipschitz_dual**2, row_term) / eta


def _momentum(k, clip):
    beta = (k - 1) / (k + 2)
    return max(beta, 0.0) if clip else beta


def radial_smoothing(problem: RadialProblem, x0, eta: float, L_eta: float, T: int,
                     p_star: Optional[float] = None, stop_tol: Optional[float] = None,
                     momentum_clip: bool = False, y0=None,
                     time_limit: Optional[float] = None, callback=None) -> SolveTrace:
    """Accelerated gradient on the soft-max smoothing of a finite-max dual.

    ``problem`` must expose ``finite_max_parts``, ``rows`` and
    ``primal_from_parts`` (as :class:`~radial.problems.QpInstance` and
    min-composites do). ``y0`` overrides the start ``x0 / f(x0)``.
    """
    if not hasattr(problem, "finite_max_parts"):
        raise ConfigurationError("smoothing needs a finite-max dual with piece gradients")
    sd = SmoothedDual(problem, eta, L_eta)
    trace = SolveTrace("radial_smoothing", p_star=p_star)
    rec = _Recorder(trace, p_star, time_limit)
    y = _start(problem, x0)[0] if y0 is None else np.asarray(y0, dtype=float).copy()
    y_tilde_prev = y.copy()
    step = 1.0 / L_eta
    for k in range(T + 1):
        vals, grads, sv, rv, extra = sd.parts(y)
        v = float(vals.max())
        if not v > 0:
            trace.status, trace.certificate = "unbounded_certificate", y.copy()
            return trace
        _, grad = softmax_eval_grad(vals, grads, eta)
        primal = problem.primal_from_parts(y, v, extra, rv)
        trace.x, trace.y = y / v, y.copy()
        r = rec.add(k, v, float(primal), float(np.linalg.norm(grad)), step if k < T else 0.0, y / v)
        if callback is not None:
            callback(k, y, v, grad, step)
        if k == T or rec.expired():
            break
        if stop_tol is not None and p_star is not None and r.rel_gap <= stop_tol:
            trace.status = "tol_reached"
            return trace
        y_tilde = y - step * grad
        y = y_tilde + _momentum(k, momentum_clip) * (y_tilde - y_tilde_prev)
        y_tilde_prev = y_tilde
    trace.status = "iters_exhausted"
    return trace


# --------------------------------------------------------------------------
# Accelerated gradient on smooth duals


def radial_accelerated(f: RadialProblem, x0, L: float, D: float, R: float, T: int,
                       p_star: Optional[float] = None, stop_tol: Optional[float] = None,
                       momentum_clip: bool = False,
                       time_limit: Optional[float] = None, callback=None) -> SolveTrace:
    """Accelerated gradient on a smooth dual with step ``1/((1 + D/R)^3 L)``."""
    if not (R > 0 and math.isfinite(D) and L > 0):
        raise ConfigurationError("need R > 0, finite D and L > 0")
    step = 1.0 / ((1.0 + D / R) ** 3 * L)
    trace = SolveTrace("radial_accelerated", p_star=p_star)
    rec = _Recorder(trace, p_star, time_limit)
    y, _ = _start(f, x0)
    y_tilde_prev = y.copy()
    warm = None
    for k in range(T + 1):
        dp = f.dual_point(y, warm=warm)
        if not dp.value.is_finite:
            trace.status = "unbounded_certificate" if dp.value.is_zero else "error"
            trace.certificate = y.copy()
            return trace
        v = warm = float(dp.value)
        g = dp.subgradient
        if not np.all(np.isfinite(g)):
            trace.status, trace.message = "error", "non-finite dual gradient"
            return trace
        trace.x, trace.y = y / v, y.copy()
        r = rec.add(k, v, float(dp.primal), float(np.linalg.norm(g)), step if k < T else 0.0, y / v)
        if callback is not None:
            callback(k, y, v, g, step)
        if k == T or rec.expired():
            break
        if stop_tol is not None and p_star is not None and r.rel_gap <= stop_tol:
            trace.status = "tol_reached"
            return trace
        y_tilde = y - step * g
        y = y_tilde + _momentum(k, momentum_clip) * (y_tilde - y_tilde_prev)
        y_tilde_prev = y_tilde
    trace.status = "iters_exhausted"
    return trace


# --------------------------------------------------------------------------
# Projection baselines


def dykstra_project(point, A, b, max_iter: int = 10_000, tol: float = 1e-12):
    """Euclidean projection onto ``{A x <= b}`` by cyclic Dykstra.

    Returns ``(x, cycles)``; raises :class:`ProjectionFailure` when the
    budget runs out.
    """
    x = np.array(point, dtype=float)
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float)
    if A.shape[0] == 0:
        raise ValueError("need at least one halfspace")
    if np.all(A @ x <= b):
        return x, 0
    norms2 = np.einsum("ij,ij->i", A, A)
    incr = np.zeros_like(A)
    for cycle in range(1, max_iter + 1):
        start = x.copy()
        for i in range(A.shape[0]):
            z = x + incr[i]
            viol = A[i] @ z - b[i]
            x = z - (viol / norms2[i]) * A[i] if viol > 0 else z
            incr[i] = z - x
        if np.linalg.norm(x - start) <= tol * max(1.0, np.linalg.norm(x)):
            return x, cycle
    raise ProjectionFailure(f"Dykstra did not converge in {max_iter} cycles")


def _baseline_record(rec, k, fx, gm, step):
    rec.add(k, 1.0 / fx if fx > 0 else 0.0, fx, gm, step)


def projected_gradient(problem, x0, L: float, T: int, p_star=None, stop_tol=None,
                       accelerated: bool = False, momentum_clip: bool = False,
                       proj_iter: int = 10_000, proj_tol: float = 1e-12,
                       time_limit: Optional[float] = None) -> SolveTrace:
    """Projected gradient ascent ``x <- proj(x + grad f(x) / L)`` on ``{A x <= b}``.

    ``accelerated=True`` adds the ``(k-1)/(k+2)`` momentum. Inner Dykstra
    cycles are tallied in ``trace.extra['projection_cycles']``.
    """
    name = "accelerated_gradient" if accelerated else "projected_gradient"
    trace = SolveTrace(name, p_star=p_star)
    rec = _Recorder(trace, p_star, time_limit)
    A, b = problem.A, problem.b
    x = np.asarray(x0, dtype=float).copy()  # gradient is taken here
    x_tilde_prev = x.copy()  # last projected (feasible) point, which is what gets recorded
    cycles = 0
    for k in range(T + 1):
        fx = problem.quad_value(x_tilde_prev)
        if k == T:
            trace.x = x_tilde_prev
            _baseline_record(rec, k, fx, 0.0, 0.0)
            break
        g = problem.grad(x)
        try:
            x_tilde, c = dykstra_project(x + g / L, A, b, proj_iter, proj_tol)
        except ProjectionFailure as e:
            trace.status, trace.message, trace.x = "projection_failure", str(e), x_tilde_prev
            return trace
        cycles += c
        _baseline_record(rec, k, fx, L * float(np.linalg.norm(x_tilde - x)), 1.0 / L)
        trace.x = x_tilde_prev
        if stop_tol is not None and p_star is not None and trace.records[-1].rel_gap <= stop_tol:
            trace.status = "tol_reached"
            break
        if rec.expired():
            break
        if accelerated:
            # the extrapolated point may leave the polyhedron; only x_tilde is projected
            x = x_tilde + _momentum(k, momentum_clip) * (x_tilde - x_tilde_prev)
        else:
            x = x_tilde
        x_tilde_prev = x_tilde
    trace.extra["projection_cycles"] = cycles
    if trace.status not in ("tol_reached", "projection_failure"):
        trace.status = "iters_exhausted"
    return trace


def accelerated_projected(problem, x0, L, T, **kw) -> SolveTrace:
    return projected_gradient(problem, x0, L, T, accelerated=True, **kw)


def box_lmo(lo, hi) -> Callable:
    """``argmax_{lo <= s <= hi} g^T s`` (lower bound on ties)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    return lambda g: np.where(g > 0, hi, lo)


def linprog_lmo(A, b) -> Callable:
    """``argmax g^T s`` over ``{A s <= b}`` with the HiGHS LP solver."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)

    def lmo(g):
        res = linprog(-g, A_ub=A, b_ub=b, bounds=[(None, None)] * A.shape[1], method="highs")
        if res.status != 0:
            raise RuntimeError(f"LP oracle failed: {res.message}")
        return res.x

    return lmo


def frank_wolfe(problem, lmo: Callable, x0, T: int, p_star=None, stop_tol=None,
                time_limit: Optional[float] = None) -> SolveTrace:
    """Frank-Wolfe ascent with exact linesearch on the concave quadratic."""
    trace = SolveTrace("frank_wolfe", p_star=p_star)
    rec = _Recorder(trace, p_star, time_limit)
    x = np.asarray(x0, dtype=float).copy()
    for k in range(T + 1):
        g = problem.grad(x)
        fx = problem.quad_value(x)
        trace.x = x
        if k == T or rec.expired():
            _baseline_record(rec, k, fx, 0.0, 0.0)
            break
        s = lmo(g)
        d = s - x
        slope = float(g @ d)
        _, curv = problem.Qv(d)
        curv *= problem.lam
        if slope <= 0:
            beta = 0.0
        elif curv <= 0:
            beta = 1.0
        else:
            beta = min(slope / curv, 1.0)
        _baseline_record(rec, k, fx, slope, beta)
        if stop_tol is not None and p_star is not None and trace.records[-1].rel_gap <= stop_tol:
            trace.status = "tol_reached"
            return trace
        if beta == 0.0:
            trace.status = "stationary"
            return trace
        x = x + beta * d
    trace.status = "iters_exhausted"
    return trace
