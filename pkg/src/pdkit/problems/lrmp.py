"""Laplacian-regularized minimization, unconstrained and nonnegative least squares.

Both duals involve ``L^+``, the pseudoinverse of a graph Laplacian.  Since
``L`` is singular, the inner minimizations defining the dual functions are
finite only when the linear term lies in ``range(L)``.  The dual ascent loops
below therefore project onto that subspace (for LRMP) or onto the
corresponding polyhedron (for LR-NNLS), which makes the primal recovery
exact, including the component along the all-ones null vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..certificates import Certificate
from ..errors import DimensionMismatch, SingularComposite
from ..numkit import (EPS, as_matrix, as_vector, lstsq_min_norm, null_space_basis, pinv,
                      spd_factor, spd_solve)
from ..solvers import IterateState, SolveReport, StepConfig, Termination


def _check_laplacian(L) -> np.ndarray:
    L = as_matrix(L, "L")
    if L.shape[0] != L.shape[1]:
        raise DimensionMismatch("L must be square")
    if not np.allclose(L, L.T, rtol=0, atol=1e-12 * max(1.0, np.abs(L).max())):
        raise ValueError("L must be symmetric")
    return L


def laplacian_from_edges(n: int, edges) -> np.ndarray:
    """Weighted Laplacian from ``(i, j, w)`` triples; symmetric with zero row sums."""
    L = np.zeros((n, n))
    for i, j, w in edges:
        L[i, i] += w
        L[j, j] += w
        L[i, j] -= w
        L[j, i] -= w
    return L


@dataclass(frozen=True, eq=False)
class LrmpInstance:
    """``min_z q ||y - z||^2 + z^T L z``."""

    q: float
    y: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        if not self.q > 0:
            raise ValueError("q must be positive")
        y = as_vector(self.y, "y")
        L = _check_laplacian(self.L)
        if L.shape[0] != y.shape[0]:
            raise DimensionMismatch("L and y differ in size")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "L", L)
        object.__setattr__(self, "q", float(self.q))

    def objective(self, z) -> float:
        r = self.y - z
        return float(self.q * (r @ r) + z @ self.L @ z)


@dataclass(frozen=True, eq=False)
class LrNnlsInstance:
    """``min_{x >= 0} 0.5 ||A x - b||^2 + 0.5 x^T L x``."""

    A: np.ndarray
    b: np.ndarray
    L: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        b = as_vector(self.b, "b")
        L = _check_laplacian(self.L)
        if A.shape[0] != b.shape[0] or L.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A{A.shape}, b{b.shape}, L{L.shape} inconsistent")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "L", L)

    def objective(self, x) -> float:
        r = self.A @ x - self.b
        return float(0.5 * (r @ r) + 0.5 * x @ self.L @ x)


def lrmp_closed_form(inst: LrmpInstance) -> np.ndarray:
    """``z* = (q I + L)^{-1} q y`` through a Cholesky factor."""
    n = inst.y.shape[0]
    return spd_solve(spd_factor(inst.q * np.eye(n) + inst.L), inst.q * inst.y)


def lrmp_dual_value(inst: LrmpInstance, lam, Lp=None) -> float:
    """``-||lam||^2/(4q) - lam^T L^+ lam / 4 + lam^T y``."""
    Lp = pinv(inst.L) if Lp is None else Lp
    return float(-(lam @ lam) / (4 * inst.q) - 0.25 * lam @ Lp @ lam + lam @ inst.y)


def lrmp_certificate(inst: LrmpInstance, z, lam, Lp=None) -> Certificate:
    """Gap between ``objective(z)`` and the dual value at ``lam``.

    Stationarity is ``||2q(z - y) + 2Lz||_inf``; dual feasibility measures how
    far ``lam`` sits from ``range(L)``, where the dual function is finite.
    """
    z = as_vector(z, "z")
    lam = as_vector(lam, "lam")
    if z.shape != inst.y.shape or lam.shape != inst.y.shape:
        raise DimensionMismatch(f"z{z.shape}, lam{lam.shape} vs y{inst.y.shape}")
    Lp = pinv(inst.L) if Lp is None else Lp
    stat = np.max(np.abs(2 * inst.q * (z - inst.y) + 2 * inst.L @ z), initial=0.0)
    off_range = float(np.max(np.abs(lam - inst.L @ (Lp @ lam)), initial=0.0))
    return Certificate.build(inst.objective(z), lrmp_dual_value(inst, lam, Lp), stat, 0.0,
                             off_range, 0.0)


def lrmp_dual_solve(inst: LrmpInstance, cfg: StepConfig = StepConfig()):
    """Projected gradient ascent on the LRMP dual over ``lam in range(L)``.

    The ascent direction is ``-lam/(2q) - L^+ lam / 2 + y`` projected by
    ``P = L L^+``.  Returns ``(lam, z, report)`` with ``z = y - lam/(2q)``;
    ``report.extra["z_range"]`` holds the alternative ``L^+ lam / 2``, which
    agrees with ``z`` up to a multiple of the null vector.
    """
    Lp = pinv(inst.L)
    P = inst.L @ Lp
    H_norm = 1.0 / (2 * inst.q) + 0.5 * np.linalg.eigvalsh(Lp).max(initial=0.0)
    step = cfg.tau if cfg.tau is not None else 1.0 / H_norm
    lam = np.zeros_like(inst.y)
    term = Termination.MAX_ITERS
    tol = cfg.tol_dual * (1.0 + np.abs(inst.y).max(initial=0.0))
    k = 0
    for k in range(1, cfg.budget(200_000) + 1):
        grad = P @ (-lam / (2 * inst.q) - 0.5 * (Lp @ lam) + inst.y)
        lam = P @ (lam + step * grad)
        if np.max(np.abs(grad), initial=0.0) <= tol:
            term = Termination.CONVERGED
            break
        if np.max(np.abs(lam)) > 1e12:
            term = Termination.DIVERGED
            break
    z = inst.y - lam / (2 * inst.q)
    cert = lrmp_certificate(inst, z, lam, Lp)
    report = SolveReport(IterateState(x=z, lam=lam, iter=k), cert, term, k,
                         {"z_range": 0.5 * Lp @ lam})
    return lam, z, report


def _composite_check(inst: LrNnlsInstance):
    M = inst.A.T @ inst.A + inst.L
    w = np.linalg.eigvalsh(0.5 * (M + M.T))
    if w.min() <= M.shape[0] * EPS * max(w.max(), 1.0) * 10:
        raise SingularComposite("A^T A + L is not positive definite")


def lr_nnls_dual_value(inst: LrNnlsInstance, lam, mu, Lp=None) -> float:
    Lp = pinv(inst.L) if Lp is None else Lp
    r = inst.A.T @ lam - mu
    return float(-0.5 * lam @ lam - lam @ inst.b - 0.5 * r @ Lp @ r)


def _project_dual(A, N, lam0, mu0, tol=1e-13, max_iters=100):
    """Project ``(lam0, mu0)`` onto ``{mu >= 0, N^T (A^T lam - mu) = 0}``.

    The multiplier ``s`` of the linear constraint gives
    ``lam = lam0 - A N s`` and ``mu = max(mu0 + N s, 0)``; ``s`` solves the
    monotone piecewise-linear equation ``N^T (A^T lam(s) - mu(s)) = 0`` by
    semismooth Newton with backtracking.
    """
    if N.shape[1] == 0:
        return lam0, np.maximum(mu0, 0.0)
    AN = A @ N
    s = np.zeros(N.shape[1])

    def resid(s):
        lam = lam0 - AN @ s
        mu = np.maximum(mu0 + N @ s, 0.0)
        return N.T @ (A.T @ lam - mu), lam, mu

    r, lam, mu = resid(s)
    for _ in range(max_iters):
        if np.max(np.abs(r)) <= tol:
            break
        active = (mu0 + N @ s) > 0
        J = -(AN.T @ AN) - N[active].T @ N[active]
        ds = np.linalg.lstsq(J, -r, rcond=None)[0]
        t, norm0 = 1.0, np.linalg.norm(r)
        while True:
            r_new, lam_new, mu_new = resid(s + t * ds)
            if np.linalg.norm(r_new) < norm0 or t < 1e-12:
                break
            t *= 0.5
        s = s + t * ds
        r, lam, mu = r_new, lam_new, mu_new
    return lam, mu


def lr_nnls_recover(inst: LrNnlsInstance, lam, mu, Lp=None, N=None) -> np.ndarray:
    """``x = L^+ (mu - A^T lam) + N t`` with ``t`` fitting ``A x = b + lam``, clamped to ``x >= 0``."""
    Lp = pinv(inst.L) if Lp is None else Lp
    N = null_space_basis(inst.L) if N is None else N
    x = Lp @ (mu - inst.A.T @ lam)
    if N.shape[1]:
        t = lstsq_min_norm(inst.A @ N, inst.b + lam - inst.A @ x)
        x = x + N @ t
    return np.maximum(x, 0.0)


def lr_nnls_certificate(inst: LrNnlsInstance, x, lam, mu, Lp=None) -> Certificate:
    grad = inst.A.T @ (inst.A @ x - inst.b) + inst.L @ x
    return Certificate.build(
        primal_obj=inst.objective(x),
        dual_obj=lr_nnls_dual_value(inst, lam, mu, Lp),
        stationarity_res=np.max(np.abs(grad - mu), initial=0.0),
        primal_feas_res=float(np.max(-x, initial=0.0)),
        dual_feas_res=float(np.max(-mu, initial=0.0)),
        compl_slack_res=np.max(np.abs(x * mu), initial=0.0),
    )


def lr_nnls_dual_solve(inst: LrNnlsInstance, cfg: StepConfig = StepConfig(),
                       observer=None) -> SolveReport:
    """Projected gradient ascent on the LR-NNLS dual.

    Maximizes ``-||lam||^2/2 - lam^T b - (A^T lam - mu)^T L^+ (A^T lam - mu)/2`` over
    ``mu >= 0`` and ``N^T (A^T lam - mu) = 0`` (``N`` spans ``ker L``), the
    region where the dual function is finite.  Converged when the primal-dual
    gap at the recovered ``x`` is within ``cfg.tol_gap`` (relative) and the
    iterate has stopped moving.

    Raises
    ------
    SingularComposite
        If ``A^T A + L`` is not positive definite.
    """
    _composite_check(inst)
    A, b = inst.A, inst.b
    m, n = A.shape
    Lp = pinv(inst.L)
    N = null_space_basis(inst.L)
    H = np.block([[np.eye(m) + A @ Lp @ A.T, -A @ Lp], [-Lp @ A.T, Lp]])
    step = cfg.tau if cfg.tau is not None else 1.0 / np.linalg.eigvalsh(H).max()
    lam, mu = _project_dual(A, N, np.zeros(m), np.zeros(n))
    cert = None
    term = Termination.MAX_ITERS
    k = 0
    for k in range(1, cfg.budget(100_000) + 1):
        r = Lp @ (A.T @ lam - mu)
        g_lam = -lam - b - A @ r
        g_mu = r
        lam_new, mu_new = _project_dual(A, N, lam + step * g_lam, mu + step * g_mu)
        move = max(np.max(np.abs(lam_new - lam)), np.max(np.abs(mu_new - mu), initial=0.0)) / step
        lam, mu = lam_new, mu_new
        if observer is not None:
            observer(k, IterateState(x=lr_nnls_recover(inst, lam, mu, Lp, N), lam=lam, mu=mu, iter=k))
        if np.max(np.abs(lam)) > 1e12:
            term = Termination.DIVERGED
            break
        if move <= cfg.tol_dual or k % 50 == 0:
            x = lr_nnls_recover(inst, lam, mu, Lp, N)
            cert = lr_nnls_certificate(inst, x, lam, mu, Lp)
            if move <= cfg.tol_dual and cert.rel_gap <= cfg.tol_gap:
                term = Termination.CONVERGED
                break
    x = lr_nnls_recover(inst, lam, mu, Lp, N)
    cert = lr_nnls_certificate(inst, x, lam, mu, Lp)
    return SolveReport(IterateState(x=x, lam=lam, mu=mu, iter=k), cert, term, k)
