"""First-order primal-dual solvers.

Every solver takes immutable problem data plus a :class:`StepConfig`, runs a
deterministic loop and returns a :class:`SolveReport`.  An optional
``observer(iter, state)`` callback sees each iterate; the harness uses it to
record convergence traces.

A report is marked ``CONVERGED`` only when the solver's own residual test and
the problem certificate (gap and KKT residuals) both pass, so convergence
always comes with a checkable optimality certificate.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Optional

import numpy as np

from . import adlite
from .certificates import Certificate, StopMode, StopRule, check_stop, nnls_certificate
from .convexcore import SeparableFn, prox
from .errors import DimensionMismatch, StepSizeViolation
from .numkit import as_matrix, as_vector, lstsq_min_norm, op_norm_estimate, spd_factor, spd_solve

DIVERGENCE_LIMIT = 1e12

RECOVERY_MODES = ("support", "paper-faithful", "multiplier")
CONSENSUS_MODES = ("shared", "replicated-dual")


class Termination(str, Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"
    DIVERGED = "Diverged"


@dataclass(frozen=True)
class StepConfig:
    """Step sizes, penalties, budgets and tolerances shared by all solvers.

    ``tau``/``sigma`` left as ``None`` are chosen per solver (``1/||A^T A||``
    for PDG, ``0.95/||K||`` for PDHG).  ``max_iters=None`` selects the solver's
    own default budget.
    """

    tau: Optional[float] = None
    sigma: Optional[float] = None
    theta: float = 1.0
    rho: float = 1.0
    rho_c: float = 1.0
    max_iters: Optional[int] = None
    tol_primal: float = 1e-8
    tol_dual: float = 1e-8
    tol_gap: float = 1e-9
    lr: float = 1e-2
    inner_max_iters: int = 500
    inner_tol: float = 1e-10
    recovery: str = "support"
    consensus_mode: str = "shared"
    parallel: bool = False
    engine: str = "chain"

    def __post_init__(self):
        for name in ("rho", "rho_c", "lr", "tol_primal", "tol_dual", "tol_gap", "inner_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("tau", "sigma"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.recovery not in RECOVERY_MODES:
            raise ValueError(f"recovery must be one of {RECOVERY_MODES}")
        if self.consensus_mode not in CONSENSUS_MODES:
            raise ValueError(f"consensus_mode must be one of {CONSENSUS_MODES}")
        if self.engine not in ("chain", "adjoint"):
            raise ValueError("engine must be 'chain' or 'adjoint'")

    def stop_rule(self) -> StopRule:
        return StopRule(self.tol_primal, self.tol_dual, self.tol_gap, StopMode.BOTH)

    def budget(self, default: int) -> int:
        return default if self.max_iters is None else self.max_iters

    def with_overrides(self, **kw) -> "StepConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass
class IterateState:
    """Iterates of a solve; each solver fills the subset it uses."""

    x: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    lam: Optional[np.ndarray] = None
    mu: Optional[np.ndarray] = None
    u: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    xbar: Optional[np.ndarray] = None
    iter: int = 0

    def max_abs(self) -> float:
        worst = 0.0
        for name in ("x", "y", "z", "lam", "mu", "u", "v", "xbar"):
            arr = getattr(self, name)
            if arr is not None and arr.size:
                m = float(np.max(np.abs(arr)))
                if not np.isfinite(m):
                    return np.inf
                worst = max(worst, m)
        return worst


@dataclass
class SolveReport:
    state: IterateState
    certificate: Optional[Certificate]
    termination: Termination
    iterations: int
    extra: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.termination == Termination.CONVERGED

    def summary(self) -> dict:
        out = {"termination": self.termination.value, "iterations": self.iterations}
        if self.certificate is not None:
            out.update(self.certificate.to_dict())
        return out


Observer = Optional[Callable[[int, IterateState], None]]


def _diverged(state: IterateState) -> bool:
    return state.max_abs() > DIVERGENCE_LIMIT


def _nnls_data(A, b):
    A = as_matrix(A, "A")
    b = as_vector(b, "b")
    if A.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"A has {A.shape[0]} rows but b has length {b.shape[0]}")
    return A, b


def _finish(state, cert, term, it, **extra) -> SolveReport:
    state.iter = it
    return SolveReport(state, cert, term, it, dict(extra))


# ---------------------------------------------------------------------- PDG

def solve_pdg(A, b, cfg: StepConfig = StepConfig(), observer: Observer = None) -> SolveReport:
    """Projected primal-dual gradient method for NNLS.

    Iterates ``x <- P+(x - tau(A^T(Ax-b) - mu))`` and ``mu <- P+(mu - sigma x)``.
    Because ``x >= 0`` after projection, the ``mu`` update can never leave
    zero from a zero start, and the scheme acts as projected gradient descent.
    The reported multiplier ``state.mu`` is therefore the KKT estimate
    ``A^T(Ax-b)``, while the raw iterate is kept in ``extra["mu_iterate"]``.
    """
    A, b = _nnls_data(A, b)
    n = A.shape[1]
    AtA = A.T @ A
    Atb = A.T @ b
    tau = cfg.tau if cfg.tau is not None else 1.0 / max(np.linalg.norm(AtA, 2), 1e-300)
    sigma = cfg.sigma if cfg.sigma is not None else tau
    rule = cfg.stop_rule()
    x = np.zeros(n)
    mu = np.zeros(n)
    state = IterateState(x=x, mu=mu)
    cert = None
    for k in range(1, cfg.budget(10_000) + 1):
        x = np.maximum(x - tau * (AtA @ x - Atb - mu), 0.0)
        mu = np.maximum(mu - sigma * x, 0.0)
        lam = A @ x - b
        state = IterateState(x=x, lam=lam, mu=A.T @ lam, iter=k)
        if observer is not None:
            observer(k, state)
        if _diverged(state):
            return _finish(state, None, Termination.DIVERGED, k, mu_iterate=mu)
        cert = nnls_certificate(A, b, x, lam)
        if check_stop(cert, rule):
            return _finish(state, cert, Termination.CONVERGED, k, mu_iterate=mu)
    return _finish(state, cert, Termination.MAX_ITERS, k, mu_iterate=mu)


# --------------------------------------------------------------------- ADMM

@dataclass(frozen=True, eq=False)
class SplitProblem:
    """``min 0.5||y||^2  s.t.  Ax - b = y, x >= 0``."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A, b = _nnls_data(self.A, self.b)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)


def _nnls_inner(Q, q, x0, step, max_iters, tol):
    """Projected gradient on ``0.5 x^T Q x - q^T x`` over ``x >= 0``."""
    x = x0
    used = 0
    for used in range(1, max_iters + 1):
        grad = Q @ x - q
        x_new = np.maximum(x - step * grad, 0.0)
        stationarity = np.max(np.abs(x_new - x), initial=0.0) / step
        x = x_new
        if stationarity <= tol:
            break
    return x, used


def solve_admm(split: SplitProblem, cfg: StepConfig = StepConfig(),
               observer: Observer = None) -> SolveReport:
    """ADMM on the split NNLS primal with scaled-free multiplier ``lam``.

    The x-subproblem ``min_{x>=0} rho/2 ||Ax - b - y + lam/rho||^2`` has no
    closed form and is solved by warm-started projected gradient (at most
    ``cfg.inner_max_iters`` steps, stationarity ``cfg.inner_tol``).
    """
    A, b, rho = split.A, split.b, cfg.rho
    m, n = A.shape
    Q = A.T @ A
    step = 1.0 / max(np.linalg.norm(Q, 2), 1e-300)
    rule = cfg.stop_rule()
    x = np.zeros(n)
    y = np.zeros(m)
    lam = np.zeros(m)
    inner_total = 0
    state = IterateState(x=x, y=y, lam=lam)
    cert = None
    for k in range(1, cfg.budget(10_000) + 1):
        target = b + y - lam / rho
        x, used = _nnls_inner(Q, A.T @ target, x, step, cfg.inner_max_iters, cfg.inner_tol)
        inner_total += used
        Ax_b = A @ x - b
        y_prev = y
        y = (lam + rho * Ax_b) / (1.0 + rho)
        r = Ax_b - y
        lam = lam + rho * r
        s = rho * (A.T @ (y - y_prev))
        state = IterateState(x=x, y=y, lam=lam, iter=k)
        if observer is not None:
            observer(k, state)
        if _diverged(state):
            return _finish(state, None, Termination.DIVERGED, k, inner_iters=inner_total)
        if check_stop((r, s), rule):
            cert = nnls_certificate(A, b, x, lam)
            if check_stop(cert, rule):
                return _finish(state, cert, Termination.CONVERGED, k, inner_iters=inner_total,
                               r_norm=float(np.max(np.abs(r))), s_norm=float(np.max(np.abs(s))))
    cert = nnls_certificate(A, b, x, lam)
    return _finish(state, cert, Termination.MAX_ITERS, k, inner_iters=inner_total)


# ---------------------------------------------------------------- dual ADMM

def recover_primal(A, b, lam, mode: str = "support", upsilon=None, rho: float = 1.0) -> np.ndarray:
    """Map NNLS dual iterates back to a primal point.

    ``support``
        Active set ``S = {i : (A^T lam)_i <= 1e-6 (1 + ||A^T lam||_inf)}``;
        solve ``A_S x_S = b + lam`` in the least-squares sense, zero the
        rest, clamp negatives.  Justified by ``x_i (A^T lam)_i = 0`` and
        ``A x* = b + lam*``.
    ``paper-faithful``
        ``clamp(A^T lam, 0)``, kept for comparison although it is not a KKT map.
    ``multiplier``
        ``clamp(-rho * upsilon, 0)``: the scaled multiplier of the constraint
        ``A^T lam = mu`` converges to ``-x* / rho``.
    """
    A = np.asarray(A, dtype=np.float64)
    Atl = A.T @ lam
    if mode == "paper-faithful":
        return np.maximum(Atl, 0.0)
    if mode == "multiplier":
        if upsilon is None:
            raise ValueError("multiplier recovery needs the scaled multiplier upsilon")
        return np.maximum(-rho * np.asarray(upsilon), 0.0)
    if mode != "support":
        raise ValueError(f"unknown recovery mode {mode!r}")
    tol = 1e-6 * (1.0 + np.max(np.abs(Atl), initial=0.0))
    support = np.flatnonzero(Atl <= tol)
    x = np.zeros(A.shape[1])
    if support.size:
        x[support] = lstsq_min_norm(A[:, support], b + lam)
    return np.maximum(x, 0.0)


def solve_admm_dual_nnls(A, b, cfg: StepConfig = StepConfig(),
                         observer: Observer = None) -> SolveReport:
    """Scaled-form ADMM on the NNLS dual ``min 0.5||lam||^2 + b^T lam s.t. A^T lam = mu >= 0``.

    ``lam`` solves ``(I + rho A A^T) lam = -b + rho A (mu - upsilon)`` with a
    Cholesky factor computed once; ``mu`` is a clamp and ``upsilon`` a running
    sum.  The primal point comes from :func:`recover_primal` with
    ``cfg.recovery``.
    """
    A, b = _nnls_data(A, b)
    rho = cfg.rho
    m, n = A.shape
    factor = spd_factor(np.eye(m) + rho * (A @ A.T))
    rule = cfg.stop_rule()
    lam = np.zeros(m)
    mu = np.zeros(n)
    ups = np.zeros(n)
    x = np.zeros(n)
    state = IterateState(x=x, lam=lam, mu=mu, u=ups)
    cert = None
    for k in range(1, cfg.budget(20_000) + 1):
        lam = spd_solve(factor, -b + rho * (A @ (mu - ups)))
        Atl = A.T @ lam
        mu_prev = mu
        mu = np.maximum(Atl + ups, 0.0)
        r = Atl - mu
        ups = ups + r
        s = rho * (A @ (mu - mu_prev))
        state = IterateState(x=x, lam=lam, mu=mu, u=ups, iter=k)
        if observer is not None:
            state.x = x = recover_primal(A, b, lam, cfg.recovery, ups, rho)
            observer(k, state)
        if _diverged(state):
            return _finish(state, None, Termination.DIVERGED, k)
        if check_stop((r, s), rule):
            state.x = x = recover_primal(A, b, lam, cfg.recovery, ups, rho)
            cert = nnls_certificate(A, b, x, lam)
            if check_stop(cert, rule):
                return _finish(state, cert, Termination.CONVERGED, k)
    state.x = recover_primal(A, b, lam, cfg.recovery, ups, rho)
    cert = nnls_certificate(A, b, state.x, lam)
    return _finish(state, cert, Termination.MAX_ITERS, k)


# --------------------------------------------------------------------- PDHG

@dataclass(frozen=True, eq=False)
class SaddleProblem:
    """``min_x max_y <Kx, y> + G(x) - F*(y)``."""

    K: np.ndarray
    G: SeparableFn
    Fstar: SeparableFn

    def __post_init__(self):
        K = as_matrix(self.K, "K")
        if self.G.n != K.shape[1] or self.Fstar.n != K.shape[0]:
            raise DimensionMismatch(
                f"K{K.shape} does not match G (n={self.G.n}) and F* (n={self.Fstar.n})")
        object.__setattr__(self, "K", K)


Certifier = Callable[[np.ndarray, np.ndarray], Certificate]


def pdhg_steps(K, cfg: StepConfig) -> tuple[float, float]:
    """Resolve PDHG step sizes and enforce ``tau * sigma * ||K||^2 <= 1``."""
    est = op_norm_estimate(K, iters=50)
    default = 0.95 / est if est > 0 else 1.0
    tau = cfg.tau if cfg.tau is not None else default
    sigma = cfg.sigma if cfg.sigma is not None else default
    norm = float(np.linalg.norm(K, 2)) if np.size(K) else 0.0
    if tau * sigma * norm**2 > 1.0:
        raise StepSizeViolation(f"tau*sigma*||K||^2 = {tau * sigma * norm**2:.6g} > 1")
    return tau, sigma


def solve_pdhg(saddle: SaddleProblem, cfg: StepConfig = StepConfig(),
               observer: Observer = None, certify: Optional[Certifier] = None,
               check_every: int = 1) -> SolveReport:
    """Primal-dual hybrid gradient with extrapolation ``theta``.

    ``y <- prox_{sigma F*}(y + sigma K xbar)``, ``x <- prox_{tau G}(x - tau K^T y)``,
    ``xbar <- x+ + theta (x+ - x)``.  Convergence needs the fixed-point
    residuals ``(x_prev - x)/tau - K^T(y_prev - y)`` and
    ``(y_prev - y)/sigma - K(x_prev - x)`` within tolerance and, when a
    ``certify`` callback is given, a passing certificate at ``(x, y)``.
    """
    K = saddle.K
    tau, sigma = pdhg_steps(K, cfg)
    rule = cfg.stop_rule()
    x = np.zeros(K.shape[1])
    y = np.zeros(K.shape[0])
    xbar = x.copy()
    state = IterateState(x=x, y=y, xbar=xbar)
    cert = None
    for k in range(1, cfg.budget(100_000) + 1):
        y_new = prox(saddle.Fstar, y + sigma * (K @ xbar), sigma)
        x_new = prox(saddle.G, x - tau * (K.T @ y_new), tau)
        xbar = x_new + cfg.theta * (x_new - x)
        dx = x - x_new
        dy = y - y_new
        x, y = x_new, y_new
        state = IterateState(x=x, y=y, xbar=xbar, iter=k)
        if observer is not None:
            observer(k, state)
        if _diverged(state):
            return _finish(state, None, Termination.DIVERGED, k, tau=tau, sigma=sigma)
        if k % check_every:
            continue
        p_res = dx / tau - K.T @ dy
        d_res = dy / sigma - K @ dx
        if check_stop((p_res, d_res), rule):
            if certify is None:
                return _finish(state, None, Termination.CONVERGED, k, tau=tau, sigma=sigma)
            cert = certify(x, y)
            if check_stop(cert, rule):
                return _finish(state, cert, Termination.CONVERGED, k, tau=tau, sigma=sigma)
    if certify is not None:
        cert = certify(x, y)
    return _finish(state, cert, Termination.MAX_ITERS, k, tau=tau, sigma=sigma)


# ---------------------------------------------------------------------- GDA

def solve_gda(A, b, cfg: StepConfig = StepConfig(), observer: Observer = None) -> SolveReport:
    """Dual learning by gradient descent-ascent on the NNLS dual Lagrangian.

    ``L(lam, mu; z) = 0.5||lam||^2 + b^T lam + z^T (A^T lam - mu)`` is built
    once as an :mod:`adlite` graph.  Each step descends on ``(lam, mu)``,
    clamps ``mu >= 0`` outside the differentiated loss, then ascends on ``z``
    with a gradient re-evaluated at the new ``(lam, mu)``.  The loop exits
    once ``||A^T lam - mu||_2 <= tol_primal`` and the certificate at the
    recovered primal ``x = max(-z, 0)`` passes; otherwise the report ends in
    ``MaxIters``.
    """
    A, b = _nnls_data(A, b)
    m, n = A.shape
    graph = adlite.nnls_dual_lagrangian_graph(A)
    grad = adlite.grad_chain if cfg.engine == "chain" else adlite.grad_adjoint
    lr = cfg.lr
    rule = cfg.stop_rule()
    lam = np.zeros(m)
    mu = np.zeros(n)
    z = np.zeros(n)
    state = IterateState(x=np.zeros(n), lam=lam, mu=mu, z=z)
    cert = None
    for k in range(1, cfg.budget(30_000) + 1):
        g = grad(graph, {"lam": lam, "mu": mu, "z": z, "b": b})
        lam = lam - lr * g["lam"]
        mu = np.maximum(mu - lr * g["mu"], 0.0)
        g = grad(graph, {"lam": lam, "mu": mu, "z": z, "b": b})
        z = z + lr * g["z"]
        state = IterateState(x=np.maximum(-z, 0.0), lam=lam, mu=mu, z=z, iter=k)
        if observer is not None:
            observer(k, state)
        if _diverged(state):
            return _finish(state, None, Termination.DIVERGED, k)
        if np.linalg.norm(A.T @ lam - mu) <= cfg.tol_primal:
            cert = nnls_certificate(A, b, state.x, lam)
            if check_stop(cert, rule):
                return _finish(state, cert, Termination.CONVERGED, k)
    cert = nnls_certificate(A, b, state.x, lam)
    return _finish(state, cert, Termination.MAX_ITERS, k)


# ----------------------------------------------------------- consensus ADMM

def _blocks_data(blocks):
    out = []
    for i, (Ai, bi) in enumerate(blocks):
        Ai, bi = _nnls_data(Ai, bi)
        out.append((Ai, bi))
    if not out:
        raise DimensionMismatch("at least one block is required")
    n = out[0][0].shape[1]
    if any(Ai.shape[1] != n for Ai, _ in out):
        raise DimensionMismatch("all blocks must share the column dimension")
    return out


def _map_blocks(fn, count: int, pool: Optional[ThreadPoolExecutor]):
    if pool is None:
        return [fn(i) for i in range(count)]
    return list(pool.map(fn, range(count)))


def solve_consensus_admm(blocks, cfg: StepConfig = StepConfig(),
                         observer: Observer = None) -> SolveReport:
    """Consensus ADMM for NNLS split into row blocks ``(A_i, b_i)``.

    ``cfg.consensus_mode == "shared"`` (default) solves the stacked problem
    ``min_{x>=0} sum_i 0.5||A_i x - b_i||^2``.  Each block keeps a local
    estimate ``w_i`` tied to a local copy ``z_i`` (penalty ``rho``) that is tied
    to the global ``z >= 0`` (penalty ``rho_c``).  The local step is solved
    through its dual, ``(I + A_i A_i^T / rho) lam_i = A_i (z_i - u_i) - b_i``,
    with one cached factor per block; ``z_i`` mixes with weights
    ``alpha = rho/(rho+rho_c)`` and ``beta = rho_c/(rho+rho_c)``; ``z`` is the
    clamped mean of ``z_i + v_i``.  The ``(w, z)`` pair is updated jointly
    before ``z_i`` so the scheme is a two-block ADMM.

    ``"replicated-dual"`` runs the dual-space variant that equates every ``A_i^T lam_i``
    with one nonnegative ``z``.  It coincides with the stacked problem only
    for a single block and is kept for comparison.

    With ``cfg.parallel`` the block steps run on a thread pool; results are
    gathered in block order so the reduction is identical to serial mode.
    """
    data = _blocks_data(blocks)
    if cfg.consensus_mode == "replicated-dual":
        return _consensus_dual(data, cfg, observer)
    return _consensus_shared(data, cfg, observer)


def _stacked(data):
    return np.vstack([Ai for Ai, _ in data]), np.concatenate([bi for _, bi in data])


def _consensus_shared(data, cfg, observer) -> SolveReport:
    N = len(data)
    n = data[0][0].shape[1]
    rho, rho_c = cfg.rho, cfg.rho_c
    alpha, beta = rho / (rho + rho_c), rho_c / (rho + rho_c)
    factors = [spd_factor(np.eye(Ai.shape[0]) + (Ai @ Ai.T) / rho) for Ai, _ in data]
    A_all, b_all = _stacked(data)
    rule = cfg.stop_rule()
    zi = np.zeros((N, n))
    u = np.zeros((N, n))
    v = np.zeros((N, n))
    z = np.zeros(n)
    lams = [np.zeros(Ai.shape[0]) for Ai, _ in data]

    def local(i):
        Ai, bi = data[i]
        center = zi[i] - u[i]
        lam_i = spd_solve(factors[i], Ai @ center - bi)
        return lam_i, center - (Ai.T @ lam_i) / rho

    pool = ThreadPoolExecutor(max_workers=min(N, 8)) if cfg.parallel and N > 1 else None
    cert = None
    try:
        for k in range(1, cfg.budget(20_000) + 1):
            results = _map_blocks(local, N, pool)
            lams = [r[0] for r in results]
            w = np.stack([r[1] for r in results])
            z_prev = z
            z = np.maximum(np.mean(zi + v, axis=0), 0.0)
            zi_prev = zi
            zi = alpha * (w + u) + beta * (z - v)
            u = u + w - zi
            v = v + zi - z
            state = IterateState(x=z, z=z, u=u, v=v, lam=np.concatenate(lams), iter=k)
            if observer is not None:
                observer(k, state)
            if _diverged(state):
                return _finish(state, None, Termination.DIVERGED, k)
            r = max(np.max(np.abs(w - zi)), np.max(np.abs(zi - z)))
            s = max(rho * np.max(np.abs(zi - zi_prev)), rho_c * np.max(np.abs(z - z_prev)))
            if check_stop((r, s), rule):
                cert = nnls_certificate(A_all, b_all, z, A_all @ z - b_all)
                if check_stop(cert, rule):
                    return _finish(state, cert, Termination.CONVERGED, k, blocks=N)
    finally:
        if pool is not None:
            pool.shutdown()
    cert = nnls_certificate(A_all, b_all, z, A_all @ z - b_all)
    return _finish(state, cert, Termination.MAX_ITERS, k, blocks=N)


def _consensus_dual(data, cfg, observer) -> SolveReport:
    N = len(data)
    n = data[0][0].shape[1]
    rho, rho_c = cfg.rho, cfg.rho_c
    alpha, beta = rho / (rho + rho_c), rho_c / (rho + rho_c)
    factors = [spd_factor(np.eye(Ai.shape[0]) + rho * (Ai @ Ai.T)) for Ai, _ in data]
    A_all, b_all = _stacked(data)
    rule = cfg.stop_rule()
    zi = np.zeros((N, n))
    u = np.zeros((N, n))
    v = np.zeros((N, n))
    z = np.zeros(n)

    def local(i):
        Ai, bi = data[i]
        lam_i = spd_solve(factors[i], -bi - rho * (Ai @ (u[i] - zi[i])))
        return lam_i, Ai.T @ lam_i

    def recover(lams):
        xs = [np.maximum(lstsq_min_norm(Ai, bi + li), 0.0) for (Ai, bi), li in zip(data, lams)]
        return np.mean(xs, axis=0), xs

    pool = ThreadPoolExecutor(max_workers=min(N, 8)) if cfg.parallel and N > 1 else None
    try:
        for k in range(1, cfg.budget(20_000) + 1):
            results = _map_blocks(local, N, pool)
            lams = [r[0] for r in results]
            Atl = np.stack([r[1] for r in results])
            zi_prev = zi
            zi = alpha * (Atl + u) + beta * (z - v)
            z = np.maximum(np.mean(zi + v, axis=0), 0.0)
            u = u + Atl - zi
            v = v + zi - z
            state = IterateState(z=z, u=u, v=v, lam=np.concatenate(lams), iter=k)
            if observer is not None:
                state.x = recover(lams)[0]
                observer(k, state)
            if _diverged(state):
                return _finish(state, None, Termination.DIVERGED, k)
            r = max(np.max(np.abs(Atl - zi)), np.max(np.abs(zi - z)))
            s = rho * np.max(np.abs(zi - zi_prev))
            if check_stop((r, s), rule):
                x, xs = recover(lams)
                state.x = x
                cert = nnls_certificate(A_all, b_all, x, np.concatenate(lams))
                if check_stop(cert, rule):
                    return _finish(state, cert, Termination.CONVERGED, k, blocks=N, x_blocks=xs)
    finally:
        if pool is not None:
            pool.shutdown()
    x, xs = recover(lams)
    state.x = x
    cert = nnls_certificate(A_all, b_all, x, np.concatenate(lams))
    return _finish(state, cert, Termination.MAX_ITERS, k, blocks=N, x_blocks=xs)
