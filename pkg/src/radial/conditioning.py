"""Geometric constants R, D, L and the dual Lipschitz/smoothness/growth quantities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import PrimalObjective, default_directions, dual_gradient
from .problems import CompositeObjective, QpInstance

EXACT, SAMPLED_UPPER, SAMPLED_LOWER, USER = "exact", "sampled-upper", "sampled-lower", "user"
SAMPLED_R_SHRINK = 0.9


@dataclass(frozen=True)
class ConditioningReport:
    R: float
    D: float
    L: float | None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError(f"R must be positive, got {self.R}")

    @property
    def lipschitz_dual(self) -> float:
        return 1.0 / self.R

    @property
    def smooth_dual_bound(self) -> float | None:
        if self.L is None:
            return None
        return smoothness_bound(self.L, self.D, self.R)

    @property
    def safe_R(self) -> float:
        """``R`` for step-size use: sampled estimates are shrunk."""
        if self.provenance.get("R") in (EXACT, USER):
            return self.R
        return SAMPLED_R_SHRINK * self.R

    def lines(self):
        def fmt(v):
            return "unknown" if v is None else f"{v:.10g}"
        out = [f"R={fmt(self.R)}", f"R_provenance={self.provenance.get('R', 'unknown')}",
               f"D={fmt(self.D)}", f"D_provenance={self.provenance.get('D', 'unknown')}",
               f"L={fmt(self.L)}", f"L_provenance={self.provenance.get('L', 'unknown')}",
               f"lipschitz_dual={fmt(self.lipschitz_dual)}",
               f"smooth_dual_bound={fmt(self.smooth_dual_bound)}"]
        return out


@dataclass(frozen=True)
class GrowthCertificate:
    kind: str
    C: float
    theta: float
    r: float
    x_star: np.ndarray
    f_star: float

    def __post_init__(self):
        if self.kind not in ("sharp", "lojasiewicz"):
            raise ValueError(f"unknown growth kind {self.kind!r}")
        if self.kind == "sharp" and self.theta != 0:
            raise ValueError("sharp growth has theta = 0")
        if not 0 <= self.theta < 1:
            raise ValueError("theta must lie in [0, 1)")
        if not (self.C > 0 and self.f_star > 0):
            raise ValueError("C and f_star must be positive")

    def dual_constant(self) -> float:
        return sharpness_dual_constant(self.C, self.x_star, self.f_star)


# --------------------------------------------------------------------------
# Radius and diameter


def _crossing(f, u, tol, cap):
    """Radius where ``t -> f(t u)`` first hits zero (``inf`` if never below ``cap``)."""
    lo, hi = 0.0, 1.0
    while f.eval(hi * u).tag != 0:
        lo, hi = hi, 2.0 * hi
        if hi > cap:
            return math.inf
    while hi - lo > tol * max(hi, 1e-300):
        mid = 0.5 * (lo + hi)
        if f.eval(mid * u).tag != 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def qp_exact_radius(inst: QpInstance, tol: float = 1e-13) -> float:
    """Distance from 0 to ``{f = 0}`` for a concave QP.

    The quadratic part ``h(x) = lam(x^T Q x / 2 + c^T x)`` reaches 1 nearest
    the origin at ``x(s) = (s I - H)^{-1} g`` with ``s > max eig(H)`` solving
    ``h(x(s)) = 1`` (a trust-region type secular equation).
    """
    if not inst.is_concave():
        raise ValueError("exact radius needs a concave instance")
    lin = float(np.min(inst.b / np.linalg.norm(inst.A, axis=1))) if inst.m else math.inf
    H = inst.lam * inst.Q_dense()
    lam_vals, V = np.linalg.eigh(0.5 * (H + H.T))
    lam_vals = np.maximum(lam_vals, 0.0)
    gt = V.T @ (inst.lam * inst.c)
    top = lam_vals.max()

    def h_of(s):
        z = gt / (s - lam_vals)
        return 0.5 * float(z @ (lam_vals * z)) + float(gt @ z), z

    tiny = 1e-14 * max(1.0, top)
    big_g = np.abs(gt) > 1e-14 * max(1.0, np.abs(gt).max(initial=0.0))
    top_mask = lam_vals >= top - tiny
    if not np.any(big_g) and top <= tiny:
        return lin
    if top > tiny and not np.any(big_g & top_mask):
        # hard case: limit at s -> top may stay below 1
        rest = ~top_mask
        z = np.zeros_like(gt)
        z[rest] = gt[rest] / (top - lam_vals[rest])
        h0 = 0.5 * float(z @ (lam_vals * z)) + float(gt @ z)
        if h0 <= 1.0:
            tau2 = 2.0 * (1.0 - h0) / top
            return min(lin, math.sqrt(float(z @ z) + tau2))
    lo = top if top > tiny else 0.0
    hi = max(2.0 * lo, 1.0)
    while h_of(hi)[0] > 1.0:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if h_of(mid)[0] > 1.0:
            lo = mid
        else:
            hi = mid
    _, z = h_of(0.5 * (lo + hi))
    return min(lin, float(np.linalg.norm(z)))


def radius_R(f, directions=None, tol: float = 1e-10, bracket_cap: float = 1e12):
    """``R(f) = inf{||x|| : f(x) = 0}`` and its provenance tag."""
    if isinstance(f, QpInstance) and f.is_concave():
        return qp_exact_radius(f), EXACT
    if isinstance(f, PrimalObjective) and "R" in f.meta:
        return float(f.meta["R"]), EXACT
    if isinstance(f, CompositeObjective) and f.rule == "min":
        if all("R" in p.meta for p in f.pieces):
            return min(float(p.meta["R"]) for p in f.pieces), EXACT
    if directions is None:
        directions = default_directions(f.dim)
    est = min(_crossing(f, u / np.linalg.norm(u), tol, bracket_cap) for u in directions)
    return est, SAMPLED_UPPER


def diameter_D(f, directions=None, tol: float = 1e-10, bracket_cap: float = 1e12):
    """Largest sampled norm of ``dom f``; ``inf`` if some direction never leaves it."""
    if isinstance(f, PrimalObjective) and "D" in f.meta:
        return float(f.meta["D"]), EXACT
    if directions is None:
        directions = default_directions(f.dim)
    est = max(_crossing(f, u / np.linalg.norm(u), tol, bracket_cap) for u in directions)
    return est, SAMPLED_LOWER


def radius_from_tangents(f: PrimalObjective, samples) -> float:
    """Smallest distance from 0 to the tangent hyperplanes of ``f`` at the samples.

    For differentiable, possibly nonconcave ``f`` this is
    ``min |grad f(x)^T x - f(x)| / ||grad f(x)||`` over the cloud.
    """
    best = math.inf
    for x in np.atleast_2d(samples):
        fx = float(f.eval(x))
        if not 0 < fx < math.inf:
            continue
        g = np.asarray(f.supgradient(x), dtype=float)
        gn = np.linalg.norm(g)
        if gn > 0:
            best = min(best, abs(float(g @ x) - fx) / gn)
    return best


def smoothness_bound(L: float, D: float, R: float) -> float:
    """``(1 + D/R)^3 L``."""
    if L == 0:
        return 0.0
    return (1.0 + D / R) ** 3 * L


def sharpness_dual_constant(C: float, x_star, f_star: float) -> float:
    """``C / (C ||x*|| + f*)``."""
    return C / (C * float(np.linalg.norm(x_star)) + f_star)


def certify(f, directions=None, R=None, D=None, L=None) -> ConditioningReport:
    """Collect ``R``, ``D``, ``L``; explicit arguments win and are tagged ``user``."""
    prov = {}
    if R is None:
        R, prov["R"] = radius_R(f, directions)
    else:
        prov["R"] = USER
    if D is None:
        D, prov["D"] = diameter_D(f, directions)
    else:
        prov["D"] = USER
    if L is None:
        if isinstance(f, QpInstance):
            L, prov["L"] = f.smoothness(), EXACT
        elif isinstance(f, PrimalObjective) and "L" in f.meta:
            L, prov["L"] = float(f.meta["L"]), EXACT
        elif isinstance(f, CompositeObjective):
            Ls = [p.meta.get("L") for p in f.pieces if p.dual_row is None]
            if Ls and all(v is not None for v in Ls):
                L, prov["L"] = max(Ls), EXACT
    else:
        prov["L"] = USER
    if L is None:
        prov["L"] = "unknown"
    return ConditioningReport(R, D, L, prov)


# --------------------------------------------------------------------------
# Growth exponent


@dataclass(frozen=True)
class GrowthProbe:
    theta_primal: float
    theta_dual: float

    @property
    def transfer_gap(self) -> float:
        return abs(self.theta_primal - self.theta_dual)

    def transfers(self, tol: float = 0.1) -> bool:
        return self.transfer_gap <= tol


def _fit_exponent(gaps, norms, floor=1e-12):
    gaps, norms = np.asarray(gaps), np.asarray(norms)
    keep = (gaps > floor) & (norms > 0)
    if keep.sum() < 2:
        raise ValueError("too few nondegenerate gaps for a regression")
    slope, _ = np.polyfit(np.log(gaps[keep]), np.log(norms[keep]), 1)
    return float(slope)


def growth_exponent_probe(f: PrimalObjective, x_star, radii=None, n_directions: int = 8,
                          seed: int = 0, eval_tolerance: float = 1e-14) -> GrowthProbe:
    """Regress ``log ||supgradient||`` on ``log gap`` near ``x*`` and ``y* = x*/f(x*)``.

    The slope estimates the Lojasiewicz exponent ``theta`` on each side.
    """
    from dataclasses import replace

    x_star = np.asarray(x_star, dtype=float)
    if radii is None:
        radii = np.geomspace(1e-2, 0.2, 12)
    f_tight = replace(f, eval_tolerance=eval_tolerance, closed_dual=None, closed_dual_grad=None)
    p_star = float(f.eval(x_star))
    y_star = x_star / p_star
    d_star = float(f_tight.dual_eval(y_star))
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((n_directions, f.dim))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    pg, pn, dg, dn = [], [], [], []
    for u in U:
        for r in radii:
            x = x_star + r * u
            pg.append(p_star - float(f.eval(x)))
            pn.append(np.linalg.norm(f.supgradient(x)))
            y = y_star + r * u
            v = float(f_tight.dual_eval(y))
            dg.append(v - d_star)
            dn.append(np.linalg.norm(dual_gradient(f, y, v)))
    return GrowthProbe(_fit_exponent(pg, pn), _fit_exponent(dg, dn))
