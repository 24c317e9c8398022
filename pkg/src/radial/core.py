"""Radial point transform, perspective functions and generic radial duals.

Objectives map into the extended positive reals: every evaluation returns an
:class:`ExtReal`, which keeps ``0`` and ``+inf`` as tags instead of floats.
A raw objective value ``<= 0`` (or ``-inf``/``nan``) is read as the zero tag,
so a :class:`PrimalObjective` built from ``g`` always means ``g_+``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

EVAL_TOLERANCE = 1e-10
BRACKET_CAP = 1e12
EPS_DEN = 1e-12
EPS_MONO = 1e-9


class DomainError(ValueError):
    """Argument outside the domain of a transform (e.g. a nonpositive height)."""


class RadialityError(ArithmeticError):
    """The perspective ``v -> v f(y/v)`` was found to decrease.

    ``witness`` holds ``(y, v1, v2)`` with ``v1 < v2`` and
    ``f^p(y, v1) > f^p(y, v2)``.
    """

    def __init__(self, y, v1, v2, p1=None, p2=None):
        self.witness = (np.array(y, dtype=float), float(v1), float(v2))
        self.values = (p1, p2)
        super().__init__(
            f"perspective decreases between v={v1:.6g} and v={v2:.6g} ({p1} > {p2})"
        )


class SingularityError(ArithmeticError):
    """Denominator ``(grad f(x), -1)^T (x, f(x))`` is not safely negative."""


class BracketError(RuntimeError):
    """The bisection bracket grew past ``bracket_cap`` without a verdict."""


class NoPrimalPoint(ValueError):
    """A zero or infinite dual value has no finite primal counterpart."""

    def __init__(self, kind: str, y=None):
        self.kind = kind
        self.y = y
        super().__init__(f"no finite primal point: {kind}")


# --------------------------------------------------------------------------
# Extended positive reals


_ZERO, _FINITE, _INF = 0, 1, 2


@dataclass(frozen=True, slots=True)
class ExtReal:
    """A value in ``R_{++} U {0, +inf}``.

    Construct with :meth:`zero`, :meth:`inf`, :meth:`of` (strictly positive
    finite) or :meth:`from_float` (which truncates at zero).
    """

    tag: int
    value: Optional[float] = None

    def __post_init__(self):
        if self.tag == _FINITE:
            if self.value is None or not (0.0 < self.value < math.inf):
                raise ValueError(f"finite ExtReal needs a value in (0, inf), got {self.value}")
        elif self.tag in (_ZERO, _INF):
            if self.value is not None:
                raise ValueError("zero/inf ExtReal carries no value")
        else:
            raise ValueError(f"unknown tag {self.tag}")

    @classmethod
    def zero(cls) -> "ExtReal":
        return _ZERO_VALUE

    @classmethod
    def inf(cls) -> "ExtReal":
        return _INF_VALUE

    @classmethod
    def of(cls, value: float) -> "ExtReal":
        return cls(_FINITE, float(value))

    @classmethod
    def from_float(cls, value: float) -> "ExtReal":
        """Positive part of a raw real: ``<= 0`` and ``nan`` become zero."""
        value = float(value)
        if value == math.inf:
            return _INF_VALUE
        if not value > 0.0:
            return _ZERO_VALUE
        return cls(_FINITE, value)

    @property
    def is_zero(self) -> bool:
        return self.tag == _ZERO

    @property
    def is_inf(self) -> bool:
        return self.tag == _INF

    @property
    def is_finite(self) -> bool:
        return self.tag == _FINITE

    def __float__(self) -> float:
        if self.tag == _ZERO:
            return 0.0
        if self.tag == _INF:
            return math.inf
        return self.value

    def scale(self, v: float) -> "ExtReal":
        """``v * self`` for ``v > 0`` (``v*0 = 0``, ``v*inf = inf``)."""
        if not v > 0:
            raise DomainError(f"scale factor must be positive, got {v}")
        if self.tag != _FINITE:
            return self
        return ExtReal.from_float(v * self.value)

    __rmul__ = scale

    def _key(self):
        return (self.tag, self.value if self.tag == _FINITE else 0.0)

    @staticmethod
    def _coerce(other):
        if isinstance(other, ExtReal):
            return other
        return ExtReal.from_float(other)

    def __lt__(self, other):
        return self._key() < self._coerce(other)._key()

    def __le__(self, other):
        return self._key() <= self._coerce(other)._key()

    def __gt__(self, other):
        return self._key() > self._coerce(other)._key()

    def __ge__(self, other):
        return self._key() >= self._coerce(other)._key()

    def __repr__(self):
        if self.tag == _ZERO:
            return "ExtReal(0)"
        if self.tag == _INF:
            return "ExtReal(inf)"
        return f"ExtReal({self.value!r})"


_ZERO_VALUE = ExtReal(_ZERO)
_INF_VALUE = ExtReal(_INF)


def ext_min(values: Sequence[ExtReal]) -> ExtReal:
    return min(values, key=ExtReal._key)


def ext_max(values: Sequence[ExtReal]) -> ExtReal:
    return max(values, key=ExtReal._key)


# --------------------------------------------------------------------------
# Points and objectives


@dataclass(frozen=True)
class RadialPoint:
    x: np.ndarray
    u: float

    def __post_init__(self):
        if not self.u > 0:
            raise DomainError(f"height must be positive, got {self.u}")

    def __iter__(self):
        return iter((self.x, self.u))


def gamma_point(x, u: float) -> RadialPoint:
    """Radial point transform ``(x, u) -> (x, 1) / u``."""
    if not u > 0:
        raise DomainError(f"gamma_point needs u > 0, got {u}")
    x = np.asarray(x, dtype=float)
    return RadialPoint(x / u, 1.0 / u)


class RadialProblem:
    """Shared solver-facing surface of objectives with radial duals.

    Subclasses provide ``dim``, ``eval``, ``dual_eval`` and
    ``dual_subgradient``; solvers only talk to this surface.
    """

    dim: int

    def dual_point(self, y, warm: Optional[float] = None) -> "DualPoint":
        y = np.asarray(y, dtype=float)
        v = self.dual_eval(y, warm=warm)
        if not v.is_finite:
            return DualPoint(y, v, None, None)
        vf = float(v)
        g = self.dual_subgradient(y, vf)
        return DualPoint(y, v, g, self.eval(y / vf))

    def dual_pieces(self, y):
        """Values and gradient callback of the pieces of a finite-max dual."""
        y = np.asarray(y, dtype=float)
        v = self.dual_eval(y)
        return np.array([float(v)]), (lambda i: self.dual_subgradient(y, float(v)))


@dataclass(frozen=True)
class DualPoint:
    """Dual value, chosen subgradient and the recovered primal value at ``y``."""

    y: np.ndarray
    value: ExtReal
    subgradient: Optional[np.ndarray]
    primal: Optional[ExtReal]


@dataclass(frozen=True, eq=False)
class PrimalObjective(RadialProblem):
    """A nonnegative objective ``f = g_+`` with optional derivative oracles.

    Parameters
    ----------
    dim : int
        Dimension of the domain.
    value : callable
        Raw value ``g(x)`` as a float; ``+inf`` is allowed (indicators),
        anything ``<= 0`` reads as the zero tag.
    supgradient, hessian : callable, optional
        ``x -> ndarray`` supgradient (gradient where differentiable) and
        Hessian of ``g`` on ``{g > 0}``.
    closed_dual, closed_dual_grad : callable, optional
        Known closed form ``y -> float`` of the radial dual and its gradient
        ``(y, v) -> ndarray``. Used instead of bisection when present.
    dual_row : ndarray, optional
        Set for halfspace indicators, whose dual is ``(row^T y)_+``.
    meta : dict
        Known constants (``R``, ``D``, ``L``) and descriptive fields.
    """

    dim: int
    value: Callable[[np.ndarray], float]
    supgradient: Optional[Callable[[np.ndarray], np.ndarray]] = None
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    is_concave: bool = False
    is_differentiable: bool = False
    closed_dual: Optional[Callable[[np.ndarray], float]] = None
    closed_dual_grad: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    dual_row: Optional[np.ndarray] = None
    name: str = "objective"
    meta: dict = field(default_factory=dict)
    eval_tolerance: float = EVAL_TOLERANCE
    bracket_cap: float = BRACKET_CAP

    def __post_init__(self):
        if int(self.dim) <= 0:
            raise ValueError("dim must be a positive integer")

    def eval(self, x) -> ExtReal:
        return ExtReal.from_float(self.value(np.asarray(x, dtype=float)))

    __call__ = eval

    def dual(self, **kwargs) -> "DualObjective":
        kwargs.setdefault("eval_tolerance", self.eval_tolerance)
        kwargs.setdefault("bracket_cap", self.bracket_cap)
        return DualObjective(self, **kwargs)

    def dual_eval(self, y, warm: Optional[float] = None) -> ExtReal:
        y = np.asarray(y, dtype=float)
        if self.closed_dual is not None:
            return ExtReal.from_float(self.closed_dual(y))
        return dual_eval(DualObjective(self, self.eval_tolerance, self.bracket_cap), y, warm=warm)

    def dual_subgradient(self, y, v: float) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.closed_dual_grad is not None:
            return np.asarray(self.closed_dual_grad(y, v), dtype=float)
        return dual_gradient(self, y, v)


# --------------------------------------------------------------------------
# Perspective and the dual


def perspective(f: PrimalObjective, y, v: float) -> ExtReal:
    """``v * f(y / v)`` in extended positive arithmetic."""
    if not v > 0:
        raise DomainError(f"perspective needs v > 0, got {v}")
    y = np.asarray(y, dtype=float)
    return f.eval(y / v).scale(v)


@dataclass(frozen=True)
class DualObjective:
    """The radial dual ``f^Gamma(y) = sup{v > 0 : v f(y/v) <= 1}`` of ``source``."""

    source: PrimalObjective
    eval_tolerance: float = EVAL_TOLERANCE
    bracket_cap: float = BRACKET_CAP

    def __post_init__(self):
        if not self.eval_tolerance > 0 or not self.bracket_cap > 1:
            raise ValueError("eval_tolerance must be > 0 and bracket_cap > 1")

    def __call__(self, y, warm: Optional[float] = None) -> ExtReal:
        return dual_eval(self, y, warm=warm)


def _check_pair(y, v1, p1: ExtReal, v2, p2: ExtReal, eps: float):
    # requires v1 < v2
    if float(p1) > float(p2) + eps:
        raise RadialityError(y, v1, v2, p1, p2)


def dual_eval(d: DualObjective, y, warm: Optional[float] = None) -> ExtReal:
    """Evaluate the radial dual by bracketing and bisection on ``v``.

    The bracket starts at ``warm`` (default 1) and doubles or halves until
    membership in ``{v : f^p(y, v) <= 1}`` flips. Returns the zero tag when no
    ``v >= 1/bracket_cap`` qualifies and the infinite tag when every
    ``v <= bracket_cap`` qualifies and the perspective has stopped growing.
    A decrease of the perspective seen along the way raises
    :class:`RadialityError`.
    """
    f = d.source
    y = np.asarray(y, dtype=float)
    cap = d.bracket_cap
    floor = 1.0 / cap

    v0 = 1.0 if warm is None or not (floor < warm < cap) else float(warm)
    p0 = perspective(f, y, v0)
    if p0 <= 1.0:
        lo, p_lo = v0, p0
        while True:
            hi = 2.0 * lo
            if hi > cap:
                p_cap = perspective(f, y, cap)
                _check_pair(y, lo, p_lo, cap, p_cap, EPS_MONO)
                if p_cap > 1.0:
                    hi, p_hi = cap, p_cap
                    break
                half = perspective(f, y, cap / 2)
                _check_pair(y, cap / 2, half, cap, p_cap, EPS_MONO)
                if p_cap.is_zero or float(p_cap) - float(half) <= EPS_MONO:
                    return ExtReal.inf()
                raise BracketError(
                    f"perspective still growing at bracket_cap={cap:g} ({p_cap})"
                )
            p_hi = perspective(f, y, hi)
            _check_pair(y, lo, p_lo, hi, p_hi, EPS_MONO)
            if p_hi > 1.0:
                break
            lo, p_lo = hi, p_hi
    else:
        hi, p_hi = v0, p0
        while True:
            lo = 0.5 * hi
            if lo < floor:
                return ExtReal.zero()
            p_lo = perspective(f, y, lo)
            _check_pair(y, lo, p_lo, hi, p_hi, EPS_MONO)
            if p_lo <= 1.0:
                break
            hi, p_hi = lo, p_lo

    tol = d.eval_tolerance
    while hi - lo > tol * lo:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break  # bracket is down to adjacent floats
        pm = perspective(f, y, mid)
        _check_pair(y, lo, p_lo, mid, pm, EPS_MONO)
        _check_pair(y, mid, pm, hi, p_hi, EPS_MONO)
        if pm <= 1.0:
            lo, p_lo = mid, pm
        else:
            hi, p_hi = mid, pm
    return ExtReal.of(0.5 * (lo + hi))


def dual_of(f: PrimalObjective, eval_tolerance: Optional[float] = None,
            bracket_cap: Optional[float] = None) -> PrimalObjective:
    """Wrap ``f^Gamma`` as an objective so it can itself be dualized.

    Dualizing the wrapper probes ``y / v`` down to ``v = 1/cap'``; the wrapper
    advertises ``cap' = sqrt(cap)`` so those probes stay inside the inner
    bracket.
    """
    d = DualObjective(f, eval_tolerance if eval_tolerance is not None else f.eval_tolerance,
                      bracket_cap if bracket_cap is not None else f.bracket_cap)

    def value(y):
        return float(dual_eval(d, y))

    return PrimalObjective(
        f.dim, value, name=f"dual({f.name})",
        eval_tolerance=d.eval_tolerance, bracket_cap=math.sqrt(d.bracket_cap),
    )


def _denominator(f: PrimalObjective, x: np.ndarray):
    if f.supgradient is None:
        raise ValueError(f"{f.name} has no supgradient oracle")
    fx = float(f.eval(x))
    if not 0.0 < fx < math.inf:
        raise SingularityError(f"f(x) = {fx} is not finite positive at the recovered point")
    g = np.asarray(f.supgradient(x), dtype=float)
    den = float(g @ x) - fx
    if den >= -EPS_DEN:
        raise SingularityError(f"denominator {den:.3g} >= -{EPS_DEN:g}; strict radiality fails")
    return fx, g, den


def dual_gradient(f: PrimalObjective, y, v: float) -> np.ndarray:
    """Gradient of ``f^Gamma`` at ``y`` given ``v = f^Gamma(y)``.

    With ``x = y / v`` this is ``grad f(x) / ((grad f(x), -1)^T (x, f(x)))``.
    Passing a supgradient oracle gives an element of the dual subdifferential.
    """
    y = np.asarray(y, dtype=float)
    x = y / v
    _, g, den = _denominator(f, x)
    return g / den


def dual_hessian(f: PrimalObjective, y, v: float) -> np.ndarray:
    """Hessian of ``f^Gamma`` at ``y`` from the primal Hessian at ``x = y/v``."""
    if f.hessian is None:
        raise ValueError(f"{f.name} has no Hessian oracle")
    y = np.asarray(y, dtype=float)
    x = y / v
    fx, g, den = _denominator(f, x)
    J = np.eye(x.size) - np.outer(g, x) / den
    H = (fx / den) * (J @ np.asarray(f.hessian(x), dtype=float) @ J.T)
    return 0.5 * (H + H.T)


def primal_recover(y, dual_value: ExtReal) -> RadialPoint:
    """``Gamma(y, f^Gamma(y))``; the ``x`` part is primal feasible."""
    if not isinstance(dual_value, ExtReal):
        dual_value = ExtReal.from_float(dual_value)
    if dual_value.is_zero:
        raise NoPrimalPoint("unbounded", np.asarray(y, dtype=float))
    if dual_value.is_inf:
        raise NoPrimalPoint("exterior", np.asarray(y, dtype=float))
    return gamma_point(y, float(dual_value))


# --------------------------------------------------------------------------
# Radiality check


@dataclass
class RadialityReport:
    passed: bool
    witnesses: list = field(default_factory=list)
    strictness_failures: list = field(default_factory=list)
    checked_pairs: int = 0

    def lines(self):
        out = ["PASS" if self.passed else "FAIL"]
        for y, v1, v2, p1, p2 in self.witnesses[:5]:
            out.append(
                f"witness y={np.array2string(y, precision=4)} v1={v1:.6g} v2={v2:.6g} "
                f"f^p(v1)={float(p1):.6g} f^p(v2)={float(p2):.6g}"
            )
        if self.strictness_failures:
            out.append(f"strictness failures: {len(self.strictness_failures)}")
        return out


def default_directions(dim: int, n_random: int = 512, seed: int = 0) -> np.ndarray:
    """``2*dim`` signed axes followed by seeded uniform unit vectors."""
    eye = np.eye(dim)
    rng = np.random.default_rng(seed)
    r = rng.standard_normal((n_random, dim))
    r /= np.linalg.norm(r, axis=1, keepdims=True)
    return np.vstack([eye, -eye, r])


def check_upper_radial(f, directions=None, v_grid=None, eps: float = EPS_MONO,
                       require_strict: bool = True) -> RadialityReport:
    """Scan ``v -> f^p(y, v)`` on a grid for every direction ``y``.

    A pair ``v1 < v2`` with ``f^p(y, v1) > f^p(y, v2) + eps`` is a violation.
    Pairs where both values are finite positive but not increasing are
    recorded as strictness failures (and fail the check if ``require_strict``).
    """
    if directions is None:
        directions = default_directions(f.dim, n_random=64)
    if v_grid is None:
        v_grid = np.geomspace(1e-3, 1e3, 121)
    report = RadialityReport(True)
    for y in np.atleast_2d(np.asarray(directions, dtype=float)):
        vals = [f.eval(y / v).scale(v) for v in v_grid]
        for v1, v2, p1, p2 in zip(v_grid[:-1], v_grid[1:], vals[:-1], vals[1:]):
            report.checked_pairs += 1
            if float(p1) > float(p2) + eps:
                report.witnesses.append((y.copy(), float(v1), float(v2), p1, p2))
            elif p1.is_finite and p2.is_finite and not p2.value > p1.value:
                report.strictness_failures.append((y.copy(), float(v1), float(v2), p1, p2))
    report.passed = not report.witnesses and not (require_strict and report.strictness_failures)
    return report
