"""Nonnegative least squares: instance type, solver adapters and an exact oracle."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..certificates import nnls_certificate
from ..convexcore import IndicatorCone, NonnegOrthant, QuadLin
from ..errors import DimensionMismatch, OracleFailure
from ..numkit import as_matrix, as_vector
from ..solvers import SaddleProblem, SplitProblem, StepConfig, solve_pdhg


@dataclass(frozen=True, eq=False)
class NnlsInstance:
    """``min_{x >= 0} 0.5 * ||A x - b||^2``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        b = as_vector(self.b, "b")
        if A.shape[0] != b.shape[0] or min(A.shape) < 1:
            raise DimensionMismatch(f"A{A.shape} incompatible with b{b.shape}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    def objective(self, x) -> float:
        r = self.A @ x - self.b
        return 0.5 * float(r @ r)

    def certificate(self, x, lam=None):
        """Certificate at ``x``; ``lam`` defaults to the residual ``Ax - b``."""
        if lam is None:
            lam = self.A @ x - self.b
        return nnls_certificate(self.A, self.b, x, lam)


def nnls_as_saddle(inst: NnlsInstance) -> SaddleProblem:
    """``K = A``, ``G = indicator(x >= 0)``, ``F*(y) = 0.5||y||^2 + b^T y``.

    With this choice the PDHG dual step is ``(y + sigma(A xbar - b)) / (1 + sigma)``
    and the primal step is ``max(x - tau A^T y, 0)``.
    """
    n = inst.A.shape[1]
    return SaddleProblem(inst.A, IndicatorCone(NonnegOrthant(n)), QuadLin(1.0, inst.b))


def nnls_as_split(inst: NnlsInstance) -> SplitProblem:
    return SplitProblem(inst.A, inst.b)


def solve_nnls_pdhg(inst: NnlsInstance, cfg: StepConfig = StepConfig(), observer=None):
    """PDHG on the NNLS saddle with the dual iterate ``y`` certified as ``lam``."""
    saddle = nnls_as_saddle(inst)
    report = solve_pdhg(saddle, cfg, observer,
                        certify=lambda x, y: nnls_certificate(inst.A, inst.b, x, y))
    report.state.lam = report.state.y
    return report


def pdhg_nnls_updates(A, b, x, y, xbar, tau, sigma, theta=1.0):
    """One PDHG step written with the NNLS closed forms instead of generic prox calls."""
    y_new = (y + sigma * (A @ xbar - b)) / (1.0 + sigma)
    x_new = np.maximum(x - tau * (A.T @ y_new), 0.0)
    return x_new, y_new, x_new + theta * (x_new - x)


def nnls_active_set_oracle(inst: NnlsInstance, tol: float = 1e-9):
    """Exact NNLS solution by enumerating every support set.

    Supports are visited in order of increasing size.  For each, the
    least-squares problem restricted to the support is solved and the first
    candidate meeting the KKT conditions (``x_S >= 0``, zero gradient on
    ``S``, nonnegative gradient off ``S``) within ``tol`` is returned as
    ``(x, lam, mu)`` with ``lam = Ax - b`` and ``mu = A^T lam``.

    Raises
    ------
    ValueError
        If ``n > 16``.
    OracleFailure
        If no support passes (numerically degenerate data).
    """
    A, b = inst.A, inst.b
    n = A.shape[1]
    if n > 16:
        raise ValueError("the enumeration oracle is limited to n <= 16")
    for size in range(n + 1):
        for support in itertools.combinations(range(n), size):
            x = np.zeros(n)
            if size:
                cols = list(support)
                x[cols] = np.linalg.lstsq(A[:, cols], b, rcond=None)[0]
            if np.any(x < -tol):
                continue
            x = np.maximum(x, 0.0)
            lam = A @ x - b
            grad = A.T @ lam
            on = np.zeros(n, dtype=bool)
            on[list(support)] = True
            if np.all(np.abs(grad[on]) <= tol) and np.all(grad[~on] >= -tol):
                return x, lam, grad
    raise OracleFailure("no support set satisfies the KKT conditions")
