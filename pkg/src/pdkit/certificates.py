"""Duality-gap and KKT-residual certificates, plus stopping rules."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from .convexcore import ConeProgram
from .errors import DimensionMismatch


def _inf_norm(v) -> float:
    v = np.asarray(v, dtype=np.float64)
    return float(np.max(np.abs(v), initial=0.0))


def _neg_part(v) -> float:
    return float(np.max(-np.asarray(v, dtype=np.float64), initial=0.0)) + 0.0


@dataclass(frozen=True)
class Certificate:
    """Primal/dual objectives with their gap and KKT residuals (all infinity norms)."""

    primal_obj: float
    dual_obj: float
    gap: float
    rel_gap: float
    stationarity_res: float
    primal_feas_res: float
    dual_feas_res: float
    compl_slack_res: float

    @classmethod
    def build(cls, primal_obj, dual_obj, stationarity_res, primal_feas_res,
              dual_feas_res, compl_slack_res) -> "Certificate":
        gap = float(primal_obj) - float(dual_obj)
        return cls(float(primal_obj), float(dual_obj), gap, abs(gap) / (1.0 + abs(primal_obj)),
                   float(stationarity_res) + 0.0, float(primal_feas_res) + 0.0,
                   float(dual_feas_res) + 0.0, float(compl_slack_res) + 0.0)

    @property
    def kkt_residual(self) -> float:
        return max(self.stationarity_res, self.primal_feas_res, self.dual_feas_res,
                   self.compl_slack_res)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kkt_residual"] = self.kkt_residual
        return d


class StopMode(str, Enum):
    RESIDUALS_ONLY = "residuals"
    GAP_ONLY = "gap"
    BOTH = "both"


@dataclass(frozen=True)
class StopRule:
    tol_primal: float = 1e-8
    tol_dual: float = 1e-8
    tol_gap: float = 1e-9
    mode: StopMode = StopMode.BOTH

    def __post_init__(self):
        if min(self.tol_primal, self.tol_dual, self.tol_gap) <= 0:
            raise ValueError("stopping tolerances must be positive")


def check_stop(measure, rule: StopRule) -> bool:
    """Decide termination; every comparison is inclusive (``<=``).

    ``measure`` is a :class:`Certificate` or a pair ``(r, s)`` of primal and
    dual residual vectors or norms.  A residual pair carries no gap, so only
    the residual part of ``rule`` applies to it.
    """
    if isinstance(measure, Certificate):
        res_ok = (max(measure.primal_feas_res, measure.compl_slack_res) <= rule.tol_primal
                  and max(measure.stationarity_res, measure.dual_feas_res) <= rule.tol_dual)
        gap_ok = measure.rel_gap <= rule.tol_gap
    else:
        r, s = measure
        res_ok = _inf_norm(r) <= rule.tol_primal and _inf_norm(s) <= rule.tol_dual
        gap_ok = True
    if rule.mode == StopMode.RESIDUALS_ONLY:
        return res_ok
    if rule.mode == StopMode.GAP_ONLY:
        return gap_ok
    return res_ok and gap_ok


def nnls_certificate(A, b, x, lam, mu=None) -> Certificate:
    """Certificate for ``min_{x>=0} 0.5||Ax-b||^2`` and its dual.

    The dual is ``max -0.5||lam||^2 - b^T lam  s.t.  A^T lam >= 0``; ``mu``
    defaults to ``A^T lam``.

    >>> import numpy as np
    >>> c = nnls_certificate(np.eye(2), [1.0, -1.0], [1.0, 0.0], [0.0, 1.0])
    >>> c.gap, c.kkt_residual
    (0.0, 0.0)
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    m, n = A.shape
    if b.shape != (m,) or x.shape != (n,) or lam.shape != (m,):
        raise DimensionMismatch(f"A{A.shape}, b{b.shape}, x{x.shape}, lam{lam.shape}")
    r = A @ x - b
    Atl = A.T @ lam
    if mu is None:
        mu = Atl
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != (n,):
        raise DimensionMismatch(f"mu has shape {mu.shape}, expected ({n},)")
    return Certificate.build(
        primal_obj=0.5 * (r @ r),
        dual_obj=-0.5 * (lam @ lam) - b @ lam,
        stationarity_res=_inf_norm(A.T @ r - mu),
        primal_feas_res=_neg_part(x),
        dual_feas_res=_neg_part(Atl),
        compl_slack_res=_inf_norm(x * Atl),
    )


def nnls_gap_terms(A, b, x, lam) -> tuple[float, float]:
    """The two nonnegative pieces of the NNLS duality gap.

    ``gap = 0.5||r - lam||^2 + x^T A^T lam`` with ``r = Ax - b``; both terms are
    nonnegative whenever ``x >= 0`` and ``A^T lam >= 0``.
    """
    r = A @ x - b
    d = r - lam
    return 0.5 * float(d @ d), float(x @ (A.T @ lam))


def admm_residuals(A, b, x, y, y_prev, rho: float) -> tuple[np.ndarray, np.ndarray]:
    """Primal residual ``Ax - b - y`` and dual residual ``rho A^T (y - y_prev)``."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    y_prev = np.asarray(y_prev, dtype=np.float64)
    if y.shape != (A.shape[0],) or y_prev.shape != y.shape or np.shape(x) != (A.shape[1],):
        raise DimensionMismatch("admm_residuals: inconsistent shapes")
    return A @ x - b - y, rho * (A.T @ (y - y_prev))


def lp_certificate(lp: ConeProgram, x, lam, nu) -> Certificate:
    """Certificate for ``min c^T x  s.t.  Ax >= b, x >= 0`` with multipliers ``lam, nu >= 0``.

    Dual: ``max b^T lam  s.t.  A^T lam + nu = c``.  Primal feasibility folds in
    ``||min(Ax-b, 0)||`` and ``||min(x, 0)||``; dual feasibility folds in the
    equality residual and the signs of ``lam`` and ``nu``.
    """
    x = np.asarray(x, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    m, n = lp.A.shape
    if x.shape != (n,) or lam.shape != (m,) or nu.shape != (n,):
        raise DimensionMismatch(f"x{x.shape}, lam{lam.shape}, nu{nu.shape} vs A{lp.A.shape}")
    slack = lp.A @ x - lp.b
    eq_res = lp.A.T @ lam + nu - lp.c
    return Certificate.build(
        primal_obj=lp.c @ x,
        dual_obj=lp.b @ lam,
        stationarity_res=_inf_norm(eq_res),
        primal_feas_res=max(_neg_part(slack), _neg_part(x)),
        dual_feas_res=max(_neg_part(lam), _neg_part(nu)),
        compl_slack_res=max(_inf_norm(lam * slack), _inf_norm(nu * x)),
    )
