"""Diet linear program ``min c^T x  s.t.  A x >= b, x >= 0``."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..certificates import lp_certificate
from ..convexcore import ConeProgram, NonnegOrthant, QuadLin
from ..errors import DimensionMismatch, OracleFailure
from ..numkit import as_matrix, as_vector
from ..solvers import SaddleProblem, StepConfig, solve_pdhg


@dataclass(frozen=True, eq=False)
class DietInstance:
    """Food costs ``c``, nutrient table ``A`` (nutrients by foods) and requirements ``b``."""

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        c = as_vector(self.c, "c")
        A = as_matrix(self.A, "A")
        b = as_vector(self.b, "b")
        if A.shape != (b.shape[0], c.shape[0]):
            raise DimensionMismatch(f"A{A.shape} incompatible with c{c.shape}, b{b.shape}")
        if np.any(A < 0) or np.any(b < 0):
            raise ValueError("diet data must be nonnegative")
        if np.any(A.max(axis=1, initial=0.0) <= 0):
            raise ValueError("every nutrient row needs a positive entry")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    def as_cone_program(self) -> ConeProgram:
        return ConeProgram(self.c, self.A, self.b, NonnegOrthant(self.c.shape[0]), rel="ge")


def diet_as_saddle(inst: DietInstance) -> SaddleProblem:
    """Saddle form of ``L(x, lam, nu) = c^T x + lam^T (b - A x) - nu^T x``.

    The dual variable is ``y = (lam, nu) >= 0``, ``K = [-A; -I]``, ``G(x) = c^T x``
    with ``x`` free, and ``F*(y) = -b^T lam`` restricted to ``y >= 0``.
    """
    m, n = inst.A.shape
    K = np.vstack([-inst.A, -np.eye(n)])
    G = QuadLin(0.0, inst.c)
    Fstar = QuadLin(0.0, np.concatenate([-inst.b, np.zeros(n)]), NonnegOrthant(m + n))
    return SaddleProblem(K, G, Fstar)


def split_dual(inst: DietInstance, y):
    m = inst.A.shape[0]
    return y[:m], y[m:]


def lp_primal_dual(inst: DietInstance, cfg: StepConfig = StepConfig(), observer=None,
                   check_every: int = 10):
    """Projected primal-dual (PDHG) iteration on the diet saddle, certified by :func:`lp_certificate`.

    The returned report carries ``state.lam`` and ``state.mu`` (the ``nu``
    multipliers of ``x >= 0``).
    """
    lp = inst.as_cone_program()

    def certify(x, y):
        lam, nu = split_dual(inst, y)
        return lp_certificate(lp, x, lam, nu)

    cfg = cfg if cfg.max_iters is not None else cfg.with_overrides(max_iters=500_000)
    report = solve_pdhg(diet_as_saddle(inst), cfg, observer, certify=certify,
                        check_every=check_every)
    report.state.lam, report.state.mu = split_dual(inst, report.state.y)
    return report


def diet_vertex_oracle(inst: DietInstance, tol: float = 1e-9):
    """Optimal cost by enumerating basic feasible solutions of the standard form.

    Surplus variables give ``[A, -I] (x, s) = b`` with ``(x, s) >= 0``; every
    choice of ``m`` linearly independent columns is a candidate basis.
    Returns ``(cost, x)``.
    """
    A, b, c = inst.A, inst.b, inst.c
    m, n = A.shape
    M = np.hstack([A, -np.eye(m)])
    cost = np.concatenate([c, np.zeros(m)])
    best, best_x = np.inf, None
    for basis in itertools.combinations(range(n + m), m):
        cols = list(basis)
        B = M[:, cols]
        if abs(np.linalg.det(B)) < 1e-12:
            continue
        xb = np.linalg.solve(B, b)
        if np.any(xb < -tol):
            continue
        val = float(cost[cols] @ xb)
        if val < best:
            full = np.zeros(n + m)
            full[cols] = np.maximum(xb, 0.0)
            best, best_x = val, full[:n]
    if best_x is None:
        raise OracleFailure("no basic feasible solution found")
    return best, best_x
