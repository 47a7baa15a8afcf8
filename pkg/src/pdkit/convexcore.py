"""Cones, projections, proximal maps and Fenchel conjugates.

Every supported cone is a coordinatewise interval, so projection is a clip
and every function in the :class:`SeparableFn` family separates across
coordinates.  Extended-real results (conjugates of indicators, values outside
a domain) are returned as ``math.inf``; ``inf + finite`` saturates naturally
in IEEE arithmetic.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch
from .numkit import as_matrix, as_vector

INF = math.inf


# --------------------------------------------------------------------- cones

@dataclass(frozen=True)
class NonnegOrthant:
    n: int


@dataclass(frozen=True)
class Free:
    n: int


@dataclass(frozen=True, eq=False)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = as_vector(self.lower, "lower")
        hi = as_vector(self.upper, "upper")
        if lo.shape != hi.shape:
            raise DimensionMismatch("Box bounds differ in length")
        if np.any(lo > hi):
            raise ValueError("Box requires lower <= upper elementwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n(self) -> int:
        return self.lower.shape[0]


@dataclass(frozen=True, eq=False)
class LinfBall:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", as_vector(self.center, "center"))
        if not self.radius >= 0:
            raise ValueError("LinfBall radius must be nonnegative")

    @property
    def n(self) -> int:
        return self.center.shape[0]


Cone = NonnegOrthant | Free | Box | LinfBall


def cone_bounds(cone: Cone) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper coordinate bounds describing ``cone`` (may be infinite)."""
    if isinstance(cone, NonnegOrthant):
        return np.zeros(cone.n), np.full(cone.n, INF)
    if isinstance(cone, Free):
        return np.full(cone.n, -INF), np.full(cone.n, INF)
    if isinstance(cone, Box):
        return cone.lower, cone.upper
    if isinstance(cone, LinfBall):
        return cone.center - cone.radius, cone.center + cone.radius
    raise TypeError(f"unsupported cone {cone!r}")


def _check_dim(n: int, v: np.ndarray, what: str = "vector"):
    if v.shape != (n,):
        raise DimensionMismatch(f"{what} has shape {v.shape}, expected ({n},)")


def project(cone: Cone, v) -> np.ndarray:
    """Euclidean projection onto ``cone``.

    >>> project(NonnegOrthant(3), [-1.0, 2.0, 0.0])
    array([0., 2., 0.])
    """
    v = np.asarray(v, dtype=np.float64)
    _check_dim(cone.n, v)
    if isinstance(cone, NonnegOrthant):
        return np.maximum(v, 0.0)
    if isinstance(cone, Free):
        return v.copy()
    lo, hi = cone_bounds(cone)
    return np.clip(v, lo, hi)


def in_cone(cone: Cone, v, tol: float = 0.0) -> bool:
    lo, hi = cone_bounds(cone)
    v = np.asarray(v, dtype=np.float64)
    return bool(np.all(v >= lo - tol) and np.all(v <= hi + tol))


# --------------------------------------------------------- separable functions

@dataclass(frozen=True)
class Zero:
    n: int


@dataclass(frozen=True)
class IndicatorCone:
    cone: Cone

    @property
    def n(self) -> int:
        return self.cone.n


@dataclass(frozen=True, eq=False)
class QuadLin:
    """``scale/2 * ||y||^2 + linear^T y``, optionally restricted to a cone.

    The cone restriction turns e.g. ``F*(y) = -b^T y + indicator(y >= 0)`` into
    a single member of the family, which the LP saddle form needs.
    """

    scale: float
    linear: np.ndarray
    cone: Cone | None = field(default=None)

    def __post_init__(self):
        if not self.scale >= 0:
            raise ValueError("QuadLin scale must be nonnegative for convexity")
        lin = as_vector(self.linear, "linear")
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "scale", float(self.scale))
        if self.cone is not None and self.cone.n != lin.shape[0]:
            raise DimensionMismatch("QuadLin cone and linear term differ in length")

    @property
    def n(self) -> int:
        return self.linear.shape[0]


SeparableFn = Zero | IndicatorCone | QuadLin


def _as_quadlin(f: SeparableFn) -> QuadLin:
    """Express any family member as a (possibly cone-restricted) QuadLin."""
    if isinstance(f, QuadLin):
        return f
    if isinstance(f, Zero):
        return QuadLin(0.0, np.zeros(f.n))
    if isinstance(f, IndicatorCone):
        return QuadLin(0.0, np.zeros(f.n), f.cone)
    raise TypeError(f"unsupported function {f!r}")


def _bounds(q: QuadLin) -> tuple[np.ndarray, np.ndarray]:
    if q.cone is None:
        return np.full(q.n, -INF), np.full(q.n, INF)
    return cone_bounds(q.cone)


def value(f: SeparableFn, x) -> float:
    """Evaluate ``f(x)``; returns ``inf`` outside the domain."""
    x = np.asarray(x, dtype=np.float64)
    _check_dim(f.n, x)
    q = _as_quadlin(f)
    if q.cone is not None and not in_cone(q.cone, x):
        return INF
    return float(0.5 * q.scale * (x @ x) + q.linear @ x)


def prox(f: SeparableFn, q, sigma: float) -> np.ndarray:
    """``argmin_y 0.5*||y - q||^2 + sigma * f(y)``.

    For ``QuadLin(a, l)`` this is ``(q - sigma*l) / (1 + sigma*a)`` followed by
    the coordinatewise clip of an optional cone; for an indicator it reduces
    to projection, and for ``Zero`` to the identity.

    >>> prox(QuadLin(1.0, [1.0]), [2.0], 1.0)
    array([0.5])
    """
    if not sigma > 0:
        raise ValueError("prox step must be positive")
    q_arr = np.asarray(q, dtype=np.float64)
    _check_dim(f.n, q_arr)
    if isinstance(f, Zero):
        return q_arr.copy()
    if isinstance(f, IndicatorCone):
        return project(f.cone, q_arr)
    y = (q_arr - sigma * f.linear) / (1.0 + sigma * f.scale)
    if f.cone is not None:
        y = project(f.cone, y)
    return y


def conjugate_value(f: SeparableFn, y) -> float:
    """Fenchel conjugate ``f*(y) = sup_x y^T x - f(x)`` in closed form.

    Each coordinate is a one-dimensional problem ``sup_{x in [lo, hi]} t x - a x^2/2``
    with ``t = y_i - l_i``.  With ``a > 0`` the maximizer is ``clip(t/a, lo, hi)``;
    with ``a = 0`` the supremum is the support function of the interval,
    infinite when ``t`` points toward an unbounded side.
    """
    y = np.asarray(y, dtype=np.float64)
    _check_dim(f.n, y)
    q = _as_quadlin(f)
    lo, hi = _bounds(q)
    t = y - q.linear
    if q.scale > 0:
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            x = np.clip(t / q.scale, lo, hi)
            # an overflowing maximizer on an unbounded side: use t^2/(2a) directly
            huge = ~np.isfinite(x)
            xs = np.where(huge, 0.0, x)
            total = float(np.sum(t * xs - 0.5 * q.scale * xs * xs)
                          + np.sum(t[huge] ** 2) / (2 * q.scale))
        return total if np.isfinite(total) else INF
    total = 0.0
    for ti, li, hi_i in zip(t, lo, hi):
        if ti > 0:
            if hi_i == INF:
                return INF
            total += ti * hi_i
        elif ti < 0:
            if li == -INF:
                return INF
            total += ti * li
    return float(total)


def fenchel_young_residual(f: SeparableFn, x, y) -> float:
    """``f(x) + f*(y) - y^T x``, nonnegative by the Fenchel-Young inequality."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    fx = value(f, x)
    fy = conjugate_value(f, y)
    if fx == INF or fy == INF:
        return INF
    return fx + fy - float(y @ x)


# ------------------------------------------------------------- cone programs

@dataclass(frozen=True, eq=False)
class ConeProgram:
    """``min c^T x  s.t.  A x (rel) b,  x in cone``.

    ``rel`` is ``"eq"`` for equality rows or ``"ge"`` for ``A x >= b`` rows.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    cone: Cone
    rel: str = "eq"

    def __post_init__(self):
        c = as_vector(self.c, "c")
        A = as_matrix(self.A, "A")
        b = as_vector(self.b, "b")
        if A.shape != (b.shape[0], c.shape[0]) or self.cone.n != c.shape[0]:
            raise DimensionMismatch(f"inconsistent shapes A{A.shape}, b{b.shape}, c{c.shape}")
        if self.rel not in ("eq", "ge"):
            raise ValueError("rel must be 'eq' or 'ge'")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)


def composite_dual_value(f: SeparableFn, A, b, nu, lam) -> float:
    """Dual function ``-b^T nu - f*(lam - A^T nu)`` of ``min f(x) s.t. Ax = b, x >= 0``.

    ``lam >= 0`` is the multiplier of ``x >= 0``; returns ``-inf`` when the
    conjugate is infinite.
    """
    A = np.asarray(A, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0):
        raise ValueError("lam must be nonnegative")
    conj = conjugate_value(f, lam - A.T @ nu)
    return -INF if conj == INF else float(-np.asarray(b) @ nu - conj)
