"""Resistive optimal-power-flow surrogate solved by projected primal-dual gradients.

Buses carry voltages ``v`` in a box; the objective is the network loss
``v^T G v`` with ``G`` the conductance Laplacian.  Load buses need
``p_i(v) = v_i (G v)_i >= d_i``, generator buses ``p_i(v) <= pmax_i`` and every
line ``|g_ij (v_i - v_j)| <= I_ij``.  The problem is nonconvex, so the
certificate reports KKT residuals at the final iterate rather than a global
duality gap.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..certificates import Certificate
from ..convexcore import Box, project
from ..errors import DimensionMismatch, InfeasibleStart
from ..numkit import as_vector
from ..solvers import IterateState, SolveReport, StepConfig, Termination


@dataclass(frozen=True)
class Line:
    i: int
    j: int
    g: float
    limit: float = np.inf

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError("line conductance must be positive")
        if not self.limit >= 0:
            raise ValueError("line limit must be nonnegative")


@dataclass(frozen=True, eq=False)
class OpfInstance:
    n_bus: int
    lines: tuple
    vmin: np.ndarray
    vmax: np.ndarray
    loads: dict = field(default_factory=dict)       # bus -> demand d_i
    generators: dict = field(default_factory=dict)  # bus -> capacity pmax_i
    G: np.ndarray = field(init=False)

    def __post_init__(self):
        lines = tuple(self.lines)
        vmin = as_vector(self.vmin, "vmin")
        vmax = as_vector(self.vmax, "vmax")
        if vmin.shape != (self.n_bus,) or vmax.shape != (self.n_bus,):
            raise DimensionMismatch("voltage bounds must have one entry per bus")
        if np.any(vmin > vmax):
            raise ValueError("vmin must not exceed vmax")
        G = np.zeros((self.n_bus, self.n_bus))
        for ln in lines:
            if not (0 <= ln.i < self.n_bus and 0 <= ln.j < self.n_bus) or ln.i == ln.j:
                raise ValueError(f"invalid line endpoints ({ln.i}, {ln.j})")
            G[ln.i, ln.i] += ln.g
            G[ln.j, ln.j] += ln.g
            G[ln.i, ln.j] -= ln.g
            G[ln.j, ln.i] -= ln.g
        for bus in list(self.loads) + list(self.generators):
            if not 0 <= bus < self.n_bus:
                raise ValueError(f"bus {bus} out of range")
        object.__setattr__(self, "lines", lines)
        object.__setattr__(self, "vmin", vmin)
        object.__setattr__(self, "vmax", vmax)
        object.__setattr__(self, "loads", {int(k): float(v) for k, v in self.loads.items()})
        object.__setattr__(self, "generators",
                           {int(k): float(v) for k, v in self.generators.items()})
        object.__setattr__(self, "G", G)

    @property
    def box(self) -> Box:
        return Box(self.vmin, self.vmax)

    def loss(self, v) -> float:
        return float(v @ self.G @ v)

    def power(self, v) -> np.ndarray:
        return v * (self.G @ v)

    def currents(self, v) -> np.ndarray:
        return np.array([ln.g * (v[ln.i] - v[ln.j]) for ln in self.lines])

    def violations(self, v) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Constraint values ``d - p`` (loads), ``p - pmax`` (generators), ``|i| - I`` (lines)."""
        p = self.power(v)
        load = np.array([d - p[i] for i, d in self.loads.items()])
        gen = np.array([p[i] - cap for i, cap in self.generators.items()])
        line = np.array([abs(c) - ln.limit for c, ln in zip(self.currents(v), self.lines)])
        return load, gen, line

    def max_violation(self, v) -> float:
        box = max(np.max(self.vmin - v), np.max(v - self.vmax), 0.0)
        vals = [x for arr in self.violations(v) for x in arr if np.isfinite(x)]
        return float(max([box, 0.0] + vals))

    def lagrangian_grad(self, v, lam, gam, mu) -> np.ndarray:
        """Gradient of the Lagrangian in ``v``; ``sign(0) = 0`` for the line terms."""
        Gv = self.G @ v
        grad = 2.0 * Gv
        for (bus, _), li in zip(self.loads.items(), lam):
            grad = grad - li * self._dpower(v, Gv, bus)
        for (bus, _), gi in zip(self.generators.items(), gam):
            grad = grad + gi * self._dpower(v, Gv, bus)
        for ln, mi in zip(self.lines, mu):
            if mi == 0.0:
                continue
            s = np.sign(v[ln.i] - v[ln.j]) * ln.g * mi
            grad[ln.i] += s
            grad[ln.j] -= s
        return grad

    def _dpower(self, v, Gv, bus) -> np.ndarray:
        d = v[bus] * self.G[bus]
        d[bus] += Gv[bus]
        return d


def _finite_limits(inst: OpfInstance) -> np.ndarray:
    return np.array([np.isfinite(ln.limit) for ln in inst.lines], dtype=bool)


def opf_certificate(inst: OpfInstance, v, lam, gam, mu) -> Certificate:
    """KKT residuals of the surrogate at ``(v, lam, gam, mu)``.

    Stationarity is the projected-gradient residual ``||v - P_box(v - grad L)||``;
    the reported dual objective is the Lagrangian value, so the gap equals the
    complementarity sum (not a global bound, the problem being nonconvex).
    """
    load, gen, line = inst.violations(v)
    finite = _finite_limits(inst)
    line_f = np.where(finite, line, 0.0)
    mu_f = np.where(finite, mu, 0.0)
    grad = inst.lagrangian_grad(v, lam, gam, mu_f)
    stat = np.max(np.abs(v - project(inst.box, v - grad)), initial=0.0)
    primal = inst.loss(v)
    lagr = primal + float(lam @ load + gam @ gen + mu_f @ line_f)
    compl = max(np.max(np.abs(lam * load), initial=0.0), np.max(np.abs(gam * gen), initial=0.0),
                np.max(np.abs(mu_f * line_f), initial=0.0))
    duals = np.concatenate([lam, gam, mu_f])
    return Certificate.build(primal, lagr, stat, inst.max_violation(v),
                             float(np.max(-duals, initial=0.0)), compl)


def opf_primal_dual(inst: OpfInstance, cfg: StepConfig = StepConfig(), v0=None,
                    observer=None) -> SolveReport:
    """Projected primal-dual gradient on the OPF Lagrangian.

    ``v <- P_box(v - tau grad_v L)`` then, at the new ``v``, each multiplier takes
    a projected ascent step of size ``eta = cfg.sigma``:
    ``lam <- [lam + eta (d - p)]_+``, ``gam <- [gam + eta (p - pmax)]_+``,
    ``mu <- [mu + eta (|i| - I)]_+``.  Stops when the certificate residuals
    fall below ``cfg.tol_primal`` (feasibility and complementarity) and
    ``cfg.tol_dual`` (stationarity).

    Raises
    ------
    InfeasibleStart
        If ``v0`` lies outside the voltage box.
    """
    tau = cfg.tau if cfg.tau is not None else 0.05
    eta = cfg.sigma if cfg.sigma is not None else 0.5
    if v0 is None:
        v = 0.5 * (inst.vmin + inst.vmax)
    else:
        v = as_vector(v0, "v0").copy()
        if v.shape != (inst.n_bus,):
            raise DimensionMismatch("v0 must have one entry per bus")
        if np.any(v < inst.vmin) or np.any(v > inst.vmax):
            raise InfeasibleStart("initial voltages lie outside the box")
    lam = np.zeros(len(inst.loads))
    gam = np.zeros(len(inst.generators))
    mu = np.zeros(len(inst.lines))
    finite = _finite_limits(inst)
    rule_p, rule_d = cfg.tol_primal, cfg.tol_dual
    cert = None
    state = IterateState(x=v)
    for k in range(1, cfg.budget(200_000) + 1):
        v = project(inst.box, v - tau * inst.lagrangian_grad(v, lam, gam, mu))
        load, gen, line = inst.violations(v)
        lam = np.maximum(lam + eta * load, 0.0)
        gam = np.maximum(gam + eta * gen, 0.0)
        mu = np.where(finite, np.maximum(mu + eta * np.where(finite, line, 0.0), 0.0), 0.0)
        state = IterateState(x=v, lam=lam, mu=mu, y=gam, iter=k)
        if observer is not None:
            observer(k, state)
        if max(np.max(np.abs(v)), np.max(np.abs(np.concatenate([lam, gam, mu])), initial=0.0)) > 1e12:
            return SolveReport(state, None, Termination.DIVERGED, k)
        if k % 10 == 0:
            cert = opf_certificate(inst, v, lam, gam, mu)
            if (max(cert.primal_feas_res, cert.compl_slack_res) <= rule_p
                    and cert.stationarity_res <= rule_d):
                return SolveReport(state, cert, Termination.CONVERGED, k, {"gamma": gam})
    cert = opf_certificate(inst, v, lam, gam, mu)
    return SolveReport(state, cert, Termination.MAX_ITERS, k, {"gamma": gam})


def opf_grid_oracle(inst: OpfInstance, step: float = 1e-3, feas_tol: float = 1e-9):
    """Best feasible points of a uniform grid over the voltage box (two buses only).

    Returns ``(loss, minimizers)`` where ``minimizers`` stacks every feasible
    grid point attaining the minimal loss (the loss depends on voltage
    differences only, so ties are common); ``None`` when no grid point is
    feasible.
    """
    if inst.n_bus != 2:
        raise ValueError("grid oracle is limited to two buses")
    axes = []
    for lo, hi in zip(inst.vmin, inst.vmax):
        count = int(round((hi - lo) / step)) + 1
        axes.append(np.linspace(lo, hi, count))
    V1, V2 = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([V1.ravel(), V2.ravel()], axis=1)
    Gv = pts @ inst.G.T
    p = pts * Gv
    ok = np.ones(len(pts), dtype=bool)
    for bus, d in inst.loads.items():
        ok &= p[:, bus] >= d - feas_tol
    for bus, cap in inst.generators.items():
        ok &= p[:, bus] <= cap + feas_tol
    for ln in inst.lines:
        ok &= np.abs(ln.g * (pts[:, ln.i] - pts[:, ln.j])) <= ln.limit + feas_tol
    if not ok.any():
        return None
    losses = np.einsum("ij,ij->i", pts, Gv)
    losses[~ok] = np.inf
    best = float(np.min(losses))
    ties = losses <= best + 1e-15 * max(1.0, abs(best))
    return best, pts[ties]
