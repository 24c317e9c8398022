"""Structured objectives whose radial duals are known in closed form or by parts.

Everything here speaks the :class:`~radial.core.RadialProblem` surface, so
the solvers in :mod:`radial.algorithms` can run on any of it.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import nnls

from .core import (
    BRACKET_CAP, EVAL_TOLERANCE, DualPoint, ExtReal, PrimalObjective,
    RadialProblem, check_upper_radial, ext_max, ext_min,
)


# --------------------------------------------------------------------------
# Elementary objectives


def halfspace(a, b: float) -> PrimalObjective:
    """Indicator of ``{a^T x <= b}``: ``+inf`` inside and ``0`` outside."""
    a = np.asarray(a, dtype=float).ravel()
    if not b > 0:
        raise ValueError("halfspace offsets must be strictly positive (0 interior)")
    row = a / b

    def value(x):
        return math.inf if a @ x <= b else 0.0

    return PrimalObjective(
        a.size, value, is_concave=True,
        closed_dual=lambda y: max(float(row @ y), 0.0),
        closed_dual_grad=lambda y, v: row.copy(),
        dual_row=row, name="halfspace",
        meta={"R": b / np.linalg.norm(a)},
    )


def sqrt_quadratic(Q) -> PrimalObjective:
    """``sqrt(1 - x^T Q x)_+``; its dual is ``sqrt(1 + y^T Q y)``."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = Q.shape[0]

    def value(x):
        s = 1.0 - x @ Q @ x
        return math.sqrt(s) if s > 0 else 0.0

    def grad(x):
        return -(Q @ x) / value(x)

    def hess(x):
        fx = value(x)
        Qx = Q @ x
        return -Q / fx - np.outer(Qx, Qx) / fx**3

    def cdual(y):
        s = 1.0 + y @ Q @ y
        return math.sqrt(s) if s > 0 else 0.0

    meta = {}
    if np.allclose(Q, np.eye(n)):
        meta = {"R": 1.0, "D": 1.0, "L": math.inf}
    return PrimalObjective(
        n, value, grad, hess, is_concave=bool(np.all(np.linalg.eigvalsh(0.5 * (Q + Q.T)) >= -1e-12)),
        is_differentiable=True, closed_dual=cdual,
        closed_dual_grad=lambda y, v: (Q @ y) / v, name="sqrt_quadratic", meta=meta,
    )


def ball_sqrt(n: int) -> PrimalObjective:
    """``sqrt(1 - ||x||^2)_+``."""
    f = sqrt_quadratic(np.eye(n))
    return _renamed(f, "ball_sqrt")


def _renamed(f: PrimalObjective, name: str, **meta) -> PrimalObjective:
    from dataclasses import replace
    return replace(f, name=name, meta={**f.meta, **meta})


def norm_power_cap(n: int, p: float, scale: float = 1.0) -> PrimalObjective:
    """``(1 - scale * ||x||^p)_+`` for ``p >= 1``.

    ``p = 1`` is sharp at the origin, ``p = 2`` has quadratic growth and
    ``p = 4`` is the quartic member of the growth family.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    s = float(scale)

    def value(x):
        return 1.0 - s * np.linalg.norm(x) ** p

    def grad(x):
        r = np.linalg.norm(x)
        if r == 0.0:
            return np.zeros_like(x)
        return -s * p * r ** (p - 2) * x

    hess = None
    if p >= 2:
        def hess(x):
            r = np.linalg.norm(x)
            H = -s * p * r ** (p - 2) * np.eye(x.size)
            if p != 2 and r > 0:
                H -= s * p * (p - 2) * r ** (p - 4) * np.outer(x, x)
            return H

    closed, closed_grad = None, None
    if p == 1:
        closed = lambda y: 1.0 + s * np.linalg.norm(y)

        def closed_grad(y, v):
            r = np.linalg.norm(y)
            return s * y / r if r > 0 else np.zeros_like(y)
    elif p == 2:
        closed = lambda y: 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * s * (y @ y)))
        closed_grad = lambda y, v: 2.0 * s * y / math.sqrt(1.0 + 4.0 * s * (y @ y))

    R = s ** (-1.0 / p)
    L = s * p * (p - 1) * R ** (p - 2) if p >= 2 else math.inf
    return PrimalObjective(
        n, value, grad, hess, is_concave=True, is_differentiable=p > 1,
        closed_dual=closed, closed_dual_grad=closed_grad,
        name=f"norm_power_cap(p={p:g}, scale={s:g})",
        meta={"R": R, "D": R, "L": L, "x_star": np.zeros(n), "p_star": 1.0},
    )


def quad_cap(n: int) -> PrimalObjective:
    """``(1 - ||x||^2 / 2)_+`` with ``R = D = sqrt(2)`` and ``L = 1``."""
    return norm_power_cap(n, 2, 0.5)


def cone(n: int) -> PrimalObjective:
    """``(1 - ||x||)_+``, sharp with ``C = 1`` at ``x* = 0``."""
    return norm_power_cap(n, 1, 1.0)


def affine(c, const: float = 1.0) -> PrimalObjective:
    """``(const + c^T x)_+``; concave, unbounded above when ``c != 0``."""
    c = np.asarray(c, dtype=float).ravel()

    def cdual(y):
        return max((1.0 - c @ y) / const, 0.0)

    return PrimalObjective(
        c.size, lambda x: const + c @ x, lambda x: c.copy(), lambda x: np.zeros((c.size, c.size)),
        is_concave=True, is_differentiable=True,
        closed_dual=cdual if const > 0 else None,
        closed_dual_grad=(lambda y, v: -c / const) if const > 0 else None,
        name="affine",
    )


def shifted_linear(n: int = 1) -> PrimalObjective:
    """``(x_1 + 1)_+``, whose dual ``(1 - y_1)_+`` certifies unboundedness."""
    return affine(np.eye(n)[0], 1.0)


def quadratic(const: float, c, Q) -> PrimalObjective:
    """Generic ``(const + c^T x + x^T Q x / 2)_+``; no closed-form dual assumed."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    c = np.asarray(c, dtype=float).ravel()
    n = Q.shape[0]
    if c.size != n:
        raise ValueError("c and Q dimensions differ")
    concave = bool(np.all(np.linalg.eigvalsh(0.5 * (Q + Q.T)) <= 1e-12)) and const > 0
    return PrimalObjective(
        n, lambda x: const + c @ x + 0.5 * x @ Q @ x, lambda x: c + Q @ x, lambda x: Q.copy(),
        is_concave=concave, is_differentiable=True, name="quadratic",
        meta={"L": float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (Q + Q.T)))))},
    )


# --------------------------------------------------------------------------
# Quadratic programs


def _qp_quad_dual(s: float, q: float) -> float:
    disc = s * s + 2.0 * q
    if disc < 0:
        return 0.0
    return max(0.5 * (s + math.sqrt(disc)), 0.0)


@dataclass(frozen=True, eq=False)
class QpInstance(RadialProblem):
    """``max 1 - lam (x^T Q x / 2 + c^T x)  s.t.  A x <= b`` with ``b > 0``.

    ``Q`` may be given through a factor ``P`` with ``Q = P P^T``. ``counter``
    (a :class:`collections.Counter`) tallies matrix-vector products with
    ``A`` and ``Q`` when supplied.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    Q: Optional[np.ndarray] = None
    P: Optional[np.ndarray] = None
    lam: float = 1.0
    feas_tol: float = 1e-12
    counter: Optional[Counter] = None
    name: str = "qp"

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        n = c.size
        A = np.asarray(self.A, dtype=float).reshape(-1, n)
        b = np.asarray(self.b, dtype=float).ravel()
        if A.shape[0] != b.size:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.size} entries")
        if np.any(b <= 0):
            raise ValueError("all b_i must be strictly positive")
        if (self.Q is None) == (self.P is None):
            raise ValueError("give exactly one of Q or P")
        if self.Q is not None:
            Q = np.asarray(self.Q, dtype=float).reshape(n, n)
            object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        else:
            object.__setattr__(self, "P", np.asarray(self.P, dtype=float).reshape(n, -1))
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "rows", A / b[:, None])

    @property
    def dim(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.b.size

    def _tick(self, key):
        if self.counter is not None:
            self.counter[key] += 1

    def Q_dense(self) -> np.ndarray:
        return self.Q if self.Q is not None else self.P @ self.P.T

    def Qv(self, y):
        """``(Q y, y^T Q y)``, counted as one Q-product."""
        self._tick("Q")
        if self.P is not None:
            z = self.P.T @ y
            return self.P @ z, float(z @ z)
        Qy = self.Q @ y
        return Qy, float(y @ Qy)

    def Av(self, y):
        self._tick("A")
        return self.A @ y

    def ATv(self, w):
        self._tick("AT")
        return self.A.T @ w

    def quad_value(self, x) -> float:
        Qx, q = self.Qv(x)
        return 1.0 - self.lam * (0.5 * q + self.c @ x)

    def feasible(self, x, tol: Optional[float] = None) -> bool:
        tol = self.feas_tol if tol is None else tol
        return bool(np.all(self.Av(x) <= self.b * (1.0 + tol)))

    def eval(self, x) -> ExtReal:
        x = np.asarray(x, dtype=float)
        if not self.feasible(x):
            return ExtReal.zero()
        return ExtReal.from_float(self.quad_value(x))

    __call__ = eval

    def grad(self, x):
        """Gradient of the (untruncated) quadratic objective."""
        Qx, _ = self.Qv(np.asarray(x, dtype=float))
        return -self.lam * (Qx + self.c)

    # dual side

    def _parts(self, y):
        Ay = self.Av(y)
        Qy, q = self.Qv(y)
        s = self.lam * (self.c @ y) + 1.0
        return Ay, Qy, q, s

    def _quad_grad(self, s, q, Qy):
        disc = s * s + 2.0 * self.lam * q
        if disc <= 0.0:
            raise ArithmeticError("boundary of the quadratic piece (s^2 + 2q = 0)")
        lc = self.lam * self.c
        return 0.5 * (lc + (s * lc + 2.0 * self.lam * Qy) / math.sqrt(disc))

    def dual_eval(self, y, warm=None) -> ExtReal:
        return qp_dual_value(self, y)

    def dual_subgradient(self, y, v=None) -> np.ndarray:
        return qp_dual_subgradient(self, y)

    def dual_pieces(self, y):
        y = np.asarray(y, dtype=float)
        Ay, Qy, q, s = self._parts(y)
        vals = np.concatenate([[_qp_quad_dual(s, self.lam * q)], Ay / self.b])

        def grad(i):
            return self._quad_grad(s, q, Qy) if i == 0 else self.rows[i - 1].copy()

        return vals, grad

    def dual_point(self, y, warm=None) -> DualPoint:
        """Dual value, subgradient and primal value from one ``Ay`` and one ``Qy``."""
        y = np.asarray(y, dtype=float)
        Ay, Qy, q, s = self._parts(y)
        quad = _qp_quad_dual(s, self.lam * q)
        lin = Ay / self.b
        j = int(np.argmax(lin)) if lin.size else -1
        lmax = lin[j] if lin.size else -math.inf
        v = max(quad, lmax)
        if not v > 0:
            return DualPoint(y, ExtReal.zero(), None, None)
        if quad >= lmax:
            g = self._quad_grad(s, q, Qy)
        else:
            g = self.rows[j].copy()
        # f(y/v) from the cached products
        if lin.size and lmax > v * (1.0 + self.feas_tol):
            primal = ExtReal.zero()
        else:
            primal = ExtReal.from_float(1.0 - self.lam * (0.5 * q / v**2 + (self.c @ y) / v))
        return DualPoint(y, ExtReal.of(v), g, primal)

    def finite_max_parts(self, y):
        """``(smooth values, smooth gradients, row values)`` for smoothing."""
        y = np.asarray(y, dtype=float)
        Ay, Qy, q, s = self._parts(y)
        quad = _qp_quad_dual(s, self.lam * q)
        return (np.array([quad]), self._quad_grad(s, q, Qy)[None, :], Ay / self.b,
                dict(q=q, cy=float(self.c @ y)))

    def primal_from_parts(self, y, v, extra, row_vals) -> ExtReal:
        if row_vals.size and row_vals.max() > v * (1.0 + self.feas_tol):
            return ExtReal.zero()
        return ExtReal.from_float(1.0 - self.lam * (0.5 * extra["q"] / v**2 + extra["cy"] / v))

    # views

    def quad_piece(self) -> PrimalObjective:
        """The truncated quadratic alone, with its closed-form dual."""
        lam, c = self.lam, self.c

        def value(x):
            _, q = self.Qv(x)
            return 1.0 - lam * (0.5 * q + c @ x)

        def cdual(y):
            _, q = self.Qv(y)
            return _qp_quad_dual(lam * (c @ y) + 1.0, lam * q)

        def cgrad(y, v):
            Qy, q = self.Qv(y)
            return self._quad_grad(lam * (c @ y) + 1.0, q, Qy)

        return PrimalObjective(
            self.dim, value, lambda x: -lam * (self.Qv(x)[0] + c),
            lambda x: -lam * self.Q_dense(), is_concave=self.is_concave(),
            is_differentiable=True, closed_dual=cdual, closed_dual_grad=cgrad,
            name="qp_quadratic", meta={"L": self.smoothness()},
        )

    def as_composite(self) -> "CompositeObjective":
        return min_compose([self.quad_piece()] + [halfspace(a, bi) for a, bi in zip(self.A, self.b)])

    def is_concave(self) -> bool:
        if self.P is not None:
            return True
        return bool(np.linalg.eigvalsh(self.Q).min() >= -1e-12)

    def smoothness(self) -> float:
        """``L = lam * ||Q||``, the primal Hessian norm."""
        return float(self.lam * np.abs(np.linalg.eigvalsh(self.Q_dense())).max())

    def with_lam(self, lam: float) -> "QpInstance":
        from dataclasses import replace
        return replace(self, lam=lam)


def qp_dual_value(inst: QpInstance, y) -> ExtReal:
    """Closed-form QP dual: ``max{((s + sqrt(s^2 + 2q))/2)_+, a_i^T y / b_i}``.

    Here ``s = lam c^T y + 1`` and ``q = lam y^T Q y``; the quadratic piece is
    zero when ``s^2 + 2q < 0`` (possible for nonconcave instances).
    """
    y = np.asarray(y, dtype=float)
    Ay, _, q, s = inst._parts(y)
    v = _qp_quad_dual(s, inst.lam * q)
    if Ay.size:
        v = max(v, float((Ay / inst.b).max()))
    return ExtReal.from_float(v)


def qp_dual_subgradient(inst: QpInstance, y) -> np.ndarray:
    """Gradient of the active piece (lowest index on ties, quadratic first)."""
    y = np.asarray(y, dtype=float)
    vals, grad = inst.dual_pieces(y)
    if not vals.max() > 0:
        raise ArithmeticError("dual value is zero; no subgradient of a positive piece")
    return grad(int(np.argmax(vals)))


# --------------------------------------------------------------------------
# Gauges


@dataclass(frozen=True)
class PolyhedralGauge:
    """Gauge of ``{x : A x <= b}`` stored as the rows ``a_i / b_i``."""

    rows: np.ndarray

    @classmethod
    def from_constraints(cls, A, b) -> "PolyhedralGauge":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).ravel()
        if np.any(b <= 0):
            raise ValueError("all b_i must be strictly positive")
        return cls(A / b[:, None])


def polyhedral_gauge_eval(g: PolyhedralGauge, y):
    """``max_i (a_i^T y / b_i)_+`` and the argmax row (lowest index on ties)."""
    y = np.asarray(y, dtype=float)
    vals = g.rows @ y
    i = int(np.argmax(vals))
    if vals[i] <= 0:
        return 0.0, np.zeros_like(y)
    return float(vals[i]), g.rows[i].copy()


@dataclass(frozen=True)
class StarConvexSet:
    """A set given by a membership oracle, star-convex about the origin."""

    dim: int
    contains: Callable[[np.ndarray], bool]
    name: str = "set"

    def spot_check(self, samples, lambdas=(0.0, 0.25, 0.5, 0.75, 0.9)) -> bool:
        """``x in S`` implies ``t x in S`` on the sampled points and factors."""
        for x in np.atleast_2d(samples):
            if self.contains(x) and not all(self.contains(t * x) for t in lambdas):
                return False
        return True


def ball_set(dim: int, radius: float = 1.0) -> StarConvexSet:
    return StarConvexSet(dim, lambda x: float(np.linalg.norm(x)) <= radius, "ball")


def polyhedron_set(A, b) -> StarConvexSet:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    return StarConvexSet(A.shape[1], lambda x: bool(np.all(A @ x <= b)), "polyhedron")


def gauge_of_set(S: StarConvexSet, y, tol: float = EVAL_TOLERANCE,
                 bracket_cap: float = BRACKET_CAP) -> float:
    """Minkowski gauge ``inf{lam >= 0 : y in lam S}`` by bisection on ``lam``.

    Star-convexity makes ``lam -> [y/lam in S]`` monotone. Returns ``inf``
    when ``y`` is outside ``lam S`` for every ``lam <= bracket_cap``.
    """
    y = np.asarray(y, dtype=float)
    if not np.any(y):
        return 0.0
    inside = lambda lam: S.contains(y / lam)
    if inside(1.0):
        hi = 1.0
        while True:
            lo = 0.5 * hi
            if lo < 1.0 / bracket_cap:
                return 0.0
            if not inside(lo):
                break
            hi = lo
    else:
        lo = 1.0
        while True:
            hi = 2.0 * lo
            if hi > bracket_cap:
                return math.inf
            if inside(hi):
                break
            lo = hi
    while hi - lo > tol * lo:
        mid = 0.5 * (lo + hi)
        if inside(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def set_indicator(S: StarConvexSet, tol: float = EVAL_TOLERANCE) -> PrimalObjective:
    """Indicator of ``S`` (``+inf`` inside); its dual is the gauge of ``S``."""
    return PrimalObjective(
        S.dim, lambda x: math.inf if S.contains(x) else 0.0,
        closed_dual=lambda y: gauge_of_set(S, y, tol), name=f"indicator({S.name})",
    )


# --------------------------------------------------------------------------
# Translation, Poisson likelihood, regularizers


def translate_truncate(f_raw: PrimalObjective, x0, u0: float) -> PrimalObjective:
    """``g(x) = (f_raw(x + x0) - u0)_+`` with ``g(0) > 0``.

    ``f_raw.value`` is read as the untruncated function (``-inf`` allowed).
    """
    x0 = np.asarray(x0, dtype=float)
    f0 = f_raw.value(x0)
    if not f0 > u0:
        raise ValueError(f"invalid anchor: f_raw(x0) = {f0} must exceed u0 = {u0}")
    sg = f_raw.supgradient
    H = f_raw.hessian
    return PrimalObjective(
        f_raw.dim, lambda x: f_raw.value(x + x0) - u0,
        (lambda x: sg(x + x0)) if sg is not None else None,
        (lambda x: H(x + x0)) if H is not None else None,
        is_concave=f_raw.is_concave, is_differentiable=f_raw.is_differentiable,
        name=f"translated({f_raw.name})",
        meta={"x0": x0, "u0": float(u0)},
    )


def poisson_loglik(A, b) -> PrimalObjective:
    """``sum_i b_i log(a_i^T x) - a_i^T x``, ``-inf`` off ``{A x > 0}``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    if np.any(b < 0):
        raise ValueError("Poisson counts must be nonnegative")

    def value(x):
        ax = A @ x
        if np.any(ax <= 0):
            return -math.inf
        return float(b @ np.log(ax) - ax.sum())

    def grad(x):
        return A.T @ (b / (A @ x) - 1.0)

    def hess(x):
        ax = A @ x
        return -(A.T * (b / ax**2)) @ A

    return PrimalObjective(A.shape[1], value, grad, hess, is_concave=True,
                           is_differentiable=True, name="poisson_loglik")


def scad_penalty(t, a: float = 3.7, lam: float = 1.0):
    """Smoothly clipped absolute deviation, elementwise."""
    if not a > 2 or not lam > 0:
        raise ValueError("SCAD needs a > 2 and lam > 0")
    t = np.abs(np.asarray(t, dtype=float))
    mid = (-t**2 + 2 * a * lam * t - lam**2) / (2 * (a - 1))
    out = np.where(t <= lam, lam * t, np.where(t <= a * lam, mid, (1 + a) * lam**2 / 2))
    return out if out.ndim else float(out)


def scad_derivative(t, a: float = 3.7, lam: float = 1.0):
    t = np.asarray(t, dtype=float)
    s, at = np.sign(t), np.abs(t)
    d = np.where(at <= lam, lam, np.where(at <= a * lam, (a * lam - at) / (a - 1), 0.0))
    return s * d


def lq_penalty(t, q: float = 0.5, lam: float = 1.0):
    """``lam |t|^q`` for ``0 < q < 1``."""
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    out = lam * np.abs(np.asarray(t, dtype=float)) ** q
    return out if out.ndim else float(out)


def lq_derivative(t, q: float = 0.5, lam: float = 1.0):
    # zero at t = 0 by convention; the true slope is unbounded there
    t = np.asarray(t, dtype=float)
    at = np.abs(t)
    with np.errstate(divide="ignore"):
        d = np.where(at > 0, lam * q * at ** (q - 1), 0.0)
    return np.sign(t) * d


@dataclass(frozen=True)
class SeparablePenalty:
    """``r(x) = sum_i sigma(x_i)`` with optional derivative ``dsigma``."""

    sigma: Callable
    dsigma: Optional[Callable] = None
    name: str = "penalty"

    def __call__(self, x) -> float:
        return float(np.sum(self.sigma(np.asarray(x, dtype=float))))

    def gradient(self, x):
        if self.dsigma is None:
            raise ValueError(f"{self.name} has no derivative")
        return np.asarray(self.dsigma(np.asarray(x, dtype=float)), dtype=float)

    @classmethod
    def scad(cls, a=3.7, lam=1.0):
        return cls(lambda t: scad_penalty(t, a, lam), lambda t: scad_derivative(t, a, lam), "scad")

    @classmethod
    def lq(cls, q=0.5, lam=1.0):
        return cls(lambda t: lq_penalty(t, q, lam), lambda t: lq_derivative(t, q, lam), "lq")

    @classmethod
    def zero(cls):
        return cls(lambda t: np.zeros_like(t), lambda t: np.zeros_like(t), "zero")


def regularized_objective(f: PrimalObjective, r: SeparablePenalty) -> PrimalObjective:
    """``(f - r)_+``; upper radial when ``f`` is and ``r(y/v)`` is nonincreasing in ``v``."""
    sg = None
    if f.supgradient is not None and r.dsigma is not None:
        sg = lambda x: f.supgradient(x) - r.gradient(x)
    return PrimalObjective(
        f.dim, lambda x: f.value(x) - r(x), sg, name=f"{f.name}-{r.name}",
        is_differentiable=False,
    )


# --------------------------------------------------------------------------
# Compositions


def _min_norm_convex_combination(G: np.ndarray) -> np.ndarray:
    """Minimum-norm point of the convex hull of the rows of ``G``."""
    if G.shape[0] == 1:
        return G[0].copy()
    # min ||G^T w|| over the simplex, via NNLS with a heavily weighted sum row
    big = 1e3 * max(1.0, float(np.abs(G).max()))
    M = np.vstack([G.T, big * np.ones((1, G.shape[0]))])
    rhs = np.concatenate([np.zeros(G.shape[1]), [big]])
    w, _ = nnls(M, rhs)
    w /= w.sum()
    return G.T @ w


@dataclass(frozen=True, eq=False)
class CompositeObjective(RadialProblem):
    """``min_j f_j`` (rule ``"min"``) or the mean of the best ``s - t`` pieces.

    For the min rule the dual is ``max_j f_j^Gamma``; the trimmed rule is
    dualized by bisection through :meth:`as_primal`.
    """

    pieces: tuple
    rule: str = "min"
    t: int = 0

    def __post_init__(self):
        pieces = tuple(self.pieces)
        if not pieces:
            raise ValueError("need at least one piece")
        dims = {p.dim for p in pieces}
        if len(dims) != 1:
            raise ValueError(f"pieces disagree on dimension: {sorted(dims)}")
        if self.rule not in ("min", "trimmed"):
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.rule == "trimmed" and not 0 <= self.t < len(pieces):
            raise ValueError("trimmed rule needs 0 <= t < number of pieces")
        object.__setattr__(self, "pieces", pieces)

    @property
    def dim(self) -> int:
        return self.pieces[0].dim

    def eval(self, x) -> ExtReal:
        x = np.asarray(x, dtype=float)
        if self.rule == "min":
            return ext_min([p.eval(x) for p in self.pieces])
        return self.as_primal().eval(x)

    __call__ = eval

    def as_primal(self) -> PrimalObjective:
        if self.rule == "trimmed":
            return trimmed_objective(self.pieces, self.t)
        pieces = self.pieces
        return PrimalObjective(self.dim, lambda x: float(ext_min([p.eval(x) for p in pieces])),
                               name="min_composite")

    def dual_eval(self, y, warm=None) -> ExtReal:
        y = np.asarray(y, dtype=float)
        if self.rule == "trimmed":
            return self.as_primal().dual_eval(y, warm=warm)
        return ext_max([p.dual_eval(y) for p in self.pieces])

    def dual_values(self, y) -> list:
        y = np.asarray(y, dtype=float)
        return [p.dual_eval(y) for p in self.pieces]

    def dual_subgradient(self, y, v=None) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.rule == "trimmed":
            return self.as_primal().dual_subgradient(y, float(self.dual_eval(y)) if v is None else v)
        vals = self.dual_values(y)
        j = max(range(len(vals)), key=lambda i: (vals[i]._key(), -i))
        return self.pieces[j].dual_subgradient(y, float(vals[j]))

    def dual_pieces(self, y):
        y = np.asarray(y, dtype=float)
        vals = self.dual_values(y)
        return (np.array([float(v) for v in vals]),
                lambda i: self.pieces[i].dual_subgradient(y, float(vals[i])))

    def finite_max_parts(self, y):
        y = np.asarray(y, dtype=float)
        smooth = [p for p in self.pieces if p.dual_row is None]
        rows = self.rows
        sv, sg = [], []
        for p in smooth:
            v = p.dual_eval(y)
            if not v.is_finite:
                raise ArithmeticError(f"piece {p.name} has non-finite dual {v}")
            sv.append(float(v))
            sg.append(p.dual_subgradient(y, float(v)))
        return (np.array(sv), np.array(sg).reshape(len(sv), self.dim),
                rows @ y if rows.size else np.zeros(0), {})

    def primal_from_parts(self, y, v, extra, row_vals) -> ExtReal:
        return self.eval(np.asarray(y, dtype=float) / v)

    @property
    def rows(self) -> np.ndarray:
        r = [p.dual_row for p in self.pieces if p.dual_row is not None]
        return np.array(r) if r else np.zeros((0, self.dim))

    def ATv(self, w):
        return self.rows.T @ w


def min_compose(pieces: Sequence[PrimalObjective]) -> CompositeObjective:
    """Pointwise minimum; its radial dual is the max of the piece duals."""
    return CompositeObjective(tuple(pieces), "min")


def trimmed_objective(pieces: Sequence[PrimalObjective], t: int) -> PrimalObjective:
    """Mean of the ``s - t`` largest piece values (lowest index wins ties)."""
    pieces = tuple(pieces)
    s = len(pieces)
    if not 0 <= t < s:
        raise ValueError("need 0 <= t < number of samples")
    keep = s - t

    def select(x):
        vals = np.array([float(p.eval(x)) for p in pieces])
        order = np.lexsort((np.arange(s), -vals))
        return vals, order[:keep]

    def value(x):
        vals, idx = select(x)
        return float(vals[idx].mean())

    sg = None
    if all(p.supgradient is not None for p in pieces):
        def sg(x):
            _, idx = select(x)
            return np.mean([pieces[i].supgradient(x) for i in idx], axis=0)

    return PrimalObjective(pieces[0].dim, value, sg, name=f"trimmed(t={t})")


def lambda_rescale(f: PrimalObjective, samples, safety: float = 0.5):
    """Pick ``lam`` so that ``(1 + lam f)_+`` is strictly upper radial on the samples.

    With ``m = max (grad f(x), -1)^T (x, f(x))`` over the sample cloud,
    ``lam = safety / m`` (``lam = 1`` when ``m <= 0``).
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] == 0 or samples.size == 0:
        raise ValueError("empty sample cloud")
    if f.supgradient is None:
        raise ValueError("lambda_rescale needs a gradient oracle")
    worst = max(float(f.supgradient(x) @ x) - f.value(x) for x in samples)
    lam = safety / worst if worst > 0 else 1.0
    H = f.hessian
    g = PrimalObjective(
        f.dim, lambda x: 1.0 + lam * f.value(x), lambda x: lam * f.supgradient(x),
        (lambda x: lam * H(x)) if H is not None else None,
        is_differentiable=f.is_differentiable, name=f"rescaled({f.name})",
        meta={"lam": lam, "worst_denominator": worst},
    )
    return lam, g


def box_constraints(n: int, half_width: float = 1.0):
    """``(A, b)`` for the box ``|x_i| <= half_width``."""
    eye = np.eye(n)
    return np.vstack([eye, -eye]), np.full(2 * n, float(half_width))


def radiality_on_samples(f, samples, v_grid=None):
    """:func:`check_upper_radial` along the directions of a sample cloud."""
    samples = np.atleast_2d(samples)
    norms = np.linalg.norm(samples, axis=1)
    dirs = samples[norms > 0] / norms[norms > 0, None]
    return check_upper_radial(f, dirs, v_grid)


# --------------------------------------------------------------------------
# Instance generation and problem files


def generate_qp(n: int, m: int, r: int = 100, seed: int = 0, lam: float = 1.0,
                counter: Optional[Counter] = None) -> QpInstance:
    """Random QP: ``A`` (m x n), ``P`` (n x r), ``c`` standard normal, ``b = 1``.

    Draws come from ``numpy.random.default_rng(seed)`` (PCG64) in the order
    ``A``, ``P``, ``c``, so instances are reproducible across platforms.
    """
    for name, val in (("n", n), ("m", m), ("r", r)):
        if int(val) <= 0:
            raise ValueError(f"{name} must be positive, got {val}")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    P = rng.standard_normal((n, r))
    c = rng.standard_normal(n)
    return QpInstance(c=c, A=A, b=np.ones(m), P=P, lam=lam, counter=counter,
                      name=f"qp_n{n}_m{m}_r{r}_s{seed}")


class ProblemFileError(ValueError):
    """Malformed problem file; the message names the offending field."""


@dataclass
class ProblemSpec:
    """A loaded problem plus optional solve hints from the file."""

    problem: object
    x0: np.ndarray
    p_star: Optional[float] = None
    d_star: Optional[float] = None
    meta: dict = field(default_factory=dict)


def _matrix(raw, where: str, base_dir, ndim: int):
    import os

    if isinstance(raw, dict):
        if set(raw) != {"csv"}:
            raise ProblemFileError(f"{where}: expected a nested array or {{csv: path}}")
        path = raw["csv"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        try:
            arr = np.loadtxt(path, delimiter=",", ndmin=ndim)
        except (OSError, ValueError) as e:
            raise ProblemFileError(f"{where}: cannot read CSV {path}: {e}") from None
    else:
        try:
            arr = np.array(raw, dtype=float)
        except (TypeError, ValueError):
            raise ProblemFileError(f"{where}: not a numeric array") from None
        if ndim == 2:
            arr = np.atleast_2d(arr)
    if arr.ndim != ndim:
        raise ProblemFileError(f"{where}: expected {ndim}-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ProblemFileError(f"{where}: entries must be finite")
    return arr


def _need(doc, key, where):
    if key not in doc:
        raise ProblemFileError(f"{where}: missing field '{key}'")
    return doc[key]


def _piece(doc, i, base_dir):
    where = f"pieces[{i}]"
    if not isinstance(doc, dict):
        raise ProblemFileError(f"{where}: expected a mapping")
    kind = _need(doc, "kind", where)
    get = lambda k, nd: _matrix(_need(doc, k, where), f"{where}.{k}", base_dir, nd)
    if kind == "quadratic":
        return quadratic(float(doc.get("const", 1.0)), get("c", 1), get("Q", 2))
    if kind == "halfspace":
        return halfspace(get("a", 1), float(_need(doc, "b", where)))
    if kind == "ball_sqrt":
        return ball_sqrt(int(_need(doc, "n", where)))
    if kind == "sqrt_quadratic":
        return sqrt_quadratic(get("Q", 2))
    if kind == "norm_power_cap":
        return norm_power_cap(int(_need(doc, "n", where)), float(_need(doc, "p", where)),
                              float(doc.get("scale", 1.0)))
    if kind == "affine":
        return affine(get("c", 1), float(doc.get("const", 1.0)))
    raise ProblemFileError(f"{where}.kind: unknown piece kind {kind!r}")


def parse_problem(doc, base_dir=".") -> ProblemSpec:
    """Build a problem from an already-parsed document (see the README for the schema)."""
    if not isinstance(doc, dict):
        raise ProblemFileError("top level: expected a mapping")
    kind = _need(doc, "type", "top level")
    try:
        if kind == "qp":
            lam = float(doc.get("lambda", 1.0))
            if "A" not in doc and "seed" in doc:
                prob = generate_qp(int(_need(doc, "n", "qp")), int(_need(doc, "m", "qp")),
                                   int(doc.get("r", 100)), int(doc["seed"]), lam)
            else:
                c = _matrix(_need(doc, "c", "qp"), "c", base_dir, 1)
                A = _matrix(_need(doc, "A", "qp"), "A", base_dir, 2)
                b = _matrix(_need(doc, "b", "qp"), "b", base_dir, 1)
                Q = _matrix(doc["Q"], "Q", base_dir, 2) if "Q" in doc else None
                P = _matrix(doc["P"], "P", base_dir, 2) if "P" in doc else None
                for key in ("n", "m"):
                    if key in doc and int(doc[key]) != (c.size if key == "n" else b.size):
                        raise ProblemFileError(f"{key}: declared {doc[key]} disagrees with the data")
                prob = QpInstance(c=c, A=A, b=b, Q=Q, P=P, lam=lam)
        elif kind == "poisson":
            A = _matrix(_need(doc, "A", "poisson"), "A", base_dir, 2)
            b = _matrix(_need(doc, "b", "poisson"), "b", base_dir, 1)
            x0 = _matrix(_need(doc, "anchor", "poisson"), "anchor", base_dir, 1)
            prob = translate_truncate(poisson_loglik(A, b), x0, float(_need(doc, "u0", "poisson")))
        elif kind == "composite":
            raw = _need(doc, "pieces", "composite")
            if not isinstance(raw, list) or not raw:
                raise ProblemFileError("pieces: expected a nonempty list")
            pieces = [_piece(p, i, base_dir) for i, p in enumerate(raw)]
            rule = doc.get("rule", "min")
            prob = CompositeObjective(tuple(pieces), rule, int(doc.get("t", 0)))
        else:
            raise ProblemFileError(f"type: unknown problem type {kind!r}")
    except ProblemFileError:
        raise
    except (ValueError, TypeError) as e:
        raise ProblemFileError(f"{kind}: {e}") from None
    x0 = np.zeros(prob.dim)
    if "x0" in doc:
        x0 = _matrix(doc["x0"], "x0", base_dir, 1)
        if x0.size != prob.dim:
            raise ProblemFileError(f"x0: length {x0.size} but the problem has dimension {prob.dim}")
    opt = lambda k: float(doc[k]) if k in doc else None
    return ProblemSpec(prob, x0, opt("p_star"), opt("d_star"),
                       {k: doc[k] for k in ("R", "D", "L") if k in doc})


def load_problem(path) -> ProblemSpec:
    """Read a YAML or JSON problem file."""
    import os

    import yaml

    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as e:
        raise ProblemFileError(f"{path}: {e.strerror}") from None
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        loc = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ProblemFileError(f"{path}: parse error at {loc}") from None
    return parse_problem(doc, os.path.dirname(os.path.abspath(path)))
