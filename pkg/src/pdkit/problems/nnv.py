"""Neural-network verification by Lagrangian duality.

The question is whether ``c^T f(x) + d < 0`` for every input with
``||x - x_nom||_inf <= eps``, where ``f`` is a feed-forward ReLU network.
Any multiplier choice yields an upper bound on the worst case through the
dual function; a negative bound certifies the property.

Each layer ``(W, w, act)`` is expanded into an affine *stage* followed, for
ReLU layers, by an elementwise ReLU stage.  Every stage ``x_{j+1} = h_j(x_j)``
gets its own multiplier ``lam_j``, and every per-stage supremum in the dual
function then has an exact closed form.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from ..certificates import Certificate
from ..errors import DimensionMismatch, SpecMismatch, Unsupported
from ..numkit import as_matrix, as_vector
from ..solvers import IterateState, SolveReport, StepConfig, Termination

RELU = "relu"
IDENTITY = "identity"


@dataclass(frozen=True, eq=False)
class Layer:
    W: np.ndarray
    w: np.ndarray
    activation: str = RELU

    def __post_init__(self):
        W = as_matrix(self.W, "W")
        w = as_vector(self.w, "w")
        if W.shape[0] != w.shape[0]:
            raise DimensionMismatch(f"W{W.shape} incompatible with bias{w.shape}")
        if self.activation not in (RELU, IDENTITY):
            raise ValueError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "w", w)


@dataclass(frozen=True, eq=False)
class Stage:
    """Either an affine map ``W x + w`` or an elementwise ReLU (``W`` is ``None``)."""

    W: np.ndarray | None = None
    w: np.ndarray | None = None

    @property
    def is_relu(self) -> bool:
        return self.W is None

    def apply(self, x):
        return np.maximum(x, 0.0) if self.is_relu else self.W @ x + self.w

    def vjp(self, x, upstream):
        """``J_h(x)^T upstream`` with ReLU subgradient 0 at the kink."""
        return (x > 0) * upstream if self.is_relu else self.W.T @ upstream


@dataclass(frozen=True, eq=False)
class NnvInstance:
    layers: tuple
    x_nom: np.ndarray
    eps: float
    c: np.ndarray
    d: float
    stages: tuple = field(init=False)
    boxes: tuple = field(init=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("network needs at least one layer")
        x_nom = as_vector(self.x_nom, "x_nom")
        c = as_vector(self.c, "spec.c")
        if not self.eps >= 0:
            raise ValueError("eps must be nonnegative")
        width = x_nom.shape[0]
        stages = []
        for k, layer in enumerate(layers):
            if layer.W.shape[1] != width:
                raise DimensionMismatch(f"layer {k} expects {layer.W.shape[1]} inputs, gets {width}")
            width = layer.W.shape[0]
            stages.append(Stage(layer.W, layer.w))
            if layer.activation == RELU:
                stages.append(Stage())
        if c.shape[0] != width:
            raise DimensionMismatch(f"spec c has length {c.shape[0]}, network output has {width}")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "x_nom", x_nom)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", float(self.d))
        object.__setattr__(self, "eps", float(self.eps))
        object.__setattr__(self, "stages", tuple(stages))
        object.__setattr__(self, "boxes", tuple(interval_bounds(stages, x_nom - self.eps,
                                                                x_nom + self.eps)))

    def forward(self, x0) -> list[np.ndarray]:
        """Stage values ``x_0, ..., x_J`` for input ``x0``."""
        xs = [np.asarray(x0, dtype=np.float64)]
        for st in self.stages:
            xs.append(st.apply(xs[-1]))
        return xs

    def value(self, x0) -> float:
        """Property value ``c^T f(x0) + d``."""
        return float(self.c @ self.forward(x0)[-1] + self.d)


def interval_bounds(stages, lower, upper) -> list[tuple[np.ndarray, np.ndarray]]:
    """Sound boxes for every stage value by forward interval arithmetic."""
    boxes = [(np.asarray(lower, float), np.asarray(upper, float))]
    for st in stages:
        lo, hi = boxes[-1]
        if st.is_relu:
            boxes.append((np.maximum(lo, 0.0), np.maximum(hi, 0.0)))
        else:
            Wp = np.maximum(st.W, 0.0)
            Wn = np.minimum(st.W, 0.0)
            boxes.append((Wp @ lo + Wn @ hi + st.w, Wp @ hi + Wn @ lo + st.w))
    return boxes


def _phi_affine(st: Stage, lam_in, lam_out, lo, hi) -> float:
    """``sup_{x in [lo, hi]} lam_in^T x - lam_out^T (W x + w)``."""
    a = lam_in - st.W.T @ lam_out
    return float(-lam_out @ st.w + np.sum(np.maximum(a * lo, a * hi)))


def _phi_relu(lam_in, lam_out, lo, hi) -> float:
    """``sup_{x in [lo, hi]} lam_in^T x - lam_out^T relu(x)``, coordinatewise at breakpoints."""
    best = None
    for pt in (lo, np.clip(0.0, lo, hi), hi):
        val = lam_in * pt - lam_out * np.maximum(pt, 0.0)
        best = val if best is None else np.maximum(best, val)
    return float(np.sum(best))


def _psi0(inst: NnvInstance, lam0) -> float:
    """``sup over the input ball of -lam0^T h_0(x)``."""
    st = inst.stages[0]
    if not st.is_relu:
        return float(-lam0 @ (st.W @ inst.x_nom + st.w) + inst.eps * np.sum(np.abs(st.W.T @ lam0)))
    lo, hi = inst.boxes[0]
    return _phi_relu(np.zeros_like(lam0), lam0, lo, hi)


def nnv_dual_bound(inst: NnvInstance, lams) -> float:
    """Upper bound ``d + psi_0(lam_0) + sum_j phi_j(lam_{j-1}, lam_j)`` on ``max c^T f(x) + d``.

    ``lams`` holds one multiplier per stage; the last must equal ``-c``
    exactly, otherwise the supremum over the output is infinite.
    """
    lams = [np.asarray(l, dtype=np.float64) for l in lams]
    J = len(inst.stages)
    if len(lams) != J:
        raise DimensionMismatch(f"expected {J} stage multipliers, got {len(lams)}")
    for j, (lam, (lo, _)) in enumerate(zip(lams, inst.boxes[1:])):
        if lam.shape != lo.shape:
            raise DimensionMismatch(f"multiplier {j} has shape {lam.shape}, expected {lo.shape}")
    if not np.array_equal(lams[-1], -inst.c):
        raise SpecMismatch("last-stage multiplier must equal -c")
    total = inst.d + _psi0(inst, lams[0])
    for j in range(1, J):
        st = inst.stages[j]
        lo, hi = inst.boxes[j]
        if st.is_relu:
            total += _phi_relu(lams[j - 1], lams[j], lo, hi)
        else:
            total += _phi_affine(st, lams[j - 1], lams[j], lo, hi)
    return float(total)


def backprop_duals(inst: NnvInstance, x0) -> list[np.ndarray]:
    """Multipliers making the Lagrangian stationary along the forward pass at ``x0``."""
    xs = inst.forward(x0)
    J = len(inst.stages)
    lams = [None] * J
    lams[-1] = -inst.c
    for j in range(J - 1, 0, -1):
        lams[j - 1] = inst.stages[j].vjp(xs[j], lams[j])
    return lams


def nnv_primal_dual(inst: NnvInstance, cfg: StepConfig = StepConfig(), observer=None,
                    stop_when_decided: bool = True) -> SolveReport:
    """Projected primal-dual search on the verification Lagrangian.

    ``L = c^T x_J + d + sum_j lam_j^T (x_{j+1} - h_j(x_j))`` is maximized over
    boxed stage values ``x_j`` (input restricted to the eps-ball) and
    minimized over ``lam_j`` by ``lam_j <- lam_j - sigma (x_{j+1} - h_j(x_j))``.

    Every iteration yields two valid numbers: the property value at the
    forward pass of the current input (a lower bound on the worst case) and
    the dual bound at the current multipliers with the last one reset to
    ``-c`` (an upper bound).  The best of each is kept.  The run is
    ``Converged`` once the question is decided: the upper bound is negative
    (certified), the lower bound is nonnegative (counterexample), or the two
    meet within ``tol_gap``.  With ``stop_when_decided=False`` the loop runs
    the whole budget and only the final status reflects the decision.
    """
    tau = cfg.tau if cfg.tau is not None else 0.05
    sigma = cfg.sigma if cfg.sigma is not None else 0.05
    J = len(inst.stages)
    xs = inst.forward(inst.x_nom)
    lams = backprop_duals(inst, inst.x_nom)
    best_lo, best_x0 = inst.value(inst.x_nom), inst.x_nom.copy()
    best_hi, best_lams = nnv_dual_bound(inst, lams), [l.copy() for l in lams]
    term = Termination.MAX_ITERS

    def decided() -> bool:
        return best_hi < 0 or best_lo >= 0 or best_hi - best_lo <= cfg.tol_gap * (1 + abs(best_lo))

    k = 0
    for k in range(1, cfg.budget(2_000) + 1):
        if stop_when_decided and decided():
            term = Termination.CONVERGED
            k -= 1
            break
        new = []
        for j in range(J + 1):
            grad = np.zeros_like(xs[j])
            if j > 0:
                grad = grad + lams[j - 1]
            if j < J:
                grad = grad - inst.stages[j].vjp(xs[j], lams[j])
            else:
                grad = grad + inst.c
            lo, hi = inst.boxes[j]
            new.append(np.clip(xs[j] + tau * grad, lo, hi))
        xs = new
        lams = [lams[j] - sigma * (xs[j + 1] - inst.stages[j].apply(xs[j])) for j in range(J)]
        lams[-1] = -inst.c
        lo_val = inst.value(xs[0])
        hi_val = nnv_dual_bound(inst, lams)
        if lo_val > best_lo:
            best_lo, best_x0 = lo_val, xs[0].copy()
        if hi_val < best_hi:
            best_hi, best_lams = hi_val, [l.copy() for l in lams]
        state = IterateState(x=xs[0], lam=np.concatenate(lams), iter=k)
        if observer is not None:
            observer(k, state)
        if not all(np.all(np.isfinite(l)) for l in lams) or max(np.max(np.abs(l)) for l in lams) > 1e12:
            return SolveReport(state, None, Termination.DIVERGED, k)
    else:
        if decided():
            term = Termination.CONVERGED
    cert = Certificate.build(primal_obj=-best_lo, dual_obj=-best_hi, stationarity_res=0.0,
                             primal_feas_res=0.0, dual_feas_res=0.0, compl_slack_res=0.0)
    state = IterateState(x=best_x0, lam=np.concatenate(best_lams), iter=k)
    return SolveReport(state, cert, term, k, {
        "primal_value": best_lo, "dual_bound": best_hi, "certified": best_hi < 0,
        "counterexample": best_lo >= 0, "duals": best_lams,
    })


def nnv_grid_max(inst: NnvInstance, points: int = 201) -> float:
    """Maximum of the property over a uniform grid on the input box (inputs of dimension <= 2)."""
    dim = inst.x_nom.shape[0]
    if dim > 2:
        raise Unsupported("grid oracle supports at most two input dimensions")
    lo, hi = inst.boxes[0]
    axes = [np.linspace(lo[i], hi[i], points) for i in range(dim)]
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")])
    vals = grid
    for st in inst.stages:
        vals = np.maximum(vals, 0.0) if st.is_relu else st.W @ vals + st.w[:, None]
    return float(np.max(inst.c @ vals) + inst.d)


def nnv_exact_max(inst: NnvInstance) -> float:
    """Exact maximum for a two-input network with a single hidden ReLU layer.

    On each cell of the arrangement cut out by the hidden units' switching
    lines the network is affine, so the maximum sits at a cell vertex: a box
    corner, a switching line meeting a box edge, or two switching lines
    crossing inside the box.  A trailing ReLU on the output is monotone and
    does not move the maximizer.
    """
    if inst.x_nom.shape[0] != 2:
        raise Unsupported("exact oracle needs a two-dimensional input")
    acts = [layer.activation for layer in inst.layers]
    middle = acts[1:-1]
    last_ok = len(acts) == 1 or acts[-1] == IDENTITY or inst.layers[-1].W.shape[0] == 1
    if any(a == RELU for a in middle) or not last_ok:
        raise Unsupported("exact oracle supports one hidden ReLU layer (plus a scalar output ReLU)")
    lo, hi = inst.boxes[0]
    first = inst.layers[0]
    lines = list(zip(first.W, first.w)) if first.activation == RELU else []
    cands = [np.array(p) for p in itertools.product((lo[0], hi[0]), (lo[1], hi[1]))]
    for a, beta in lines:
        for axis in (0, 1):
            other = 1 - axis
            if a[other] == 0:
                continue
            for fixed in (lo[axis], hi[axis]):
                p = np.empty(2)
                p[axis] = fixed
                p[other] = -(beta + a[axis] * fixed) / a[other]
                cands.append(p)
    for (a1, b1), (a2, b2) in itertools.combinations(lines, 2):
        M = np.array([a1, a2])
        if abs(np.linalg.det(M)) > 1e-14:
            cands.append(np.linalg.solve(M, -np.array([b1, b2])))
    inside = [p for p in cands if np.all(p >= lo - 1e-12) and np.all(p <= hi + 1e-12)]
    return max(inst.value(np.clip(p, lo, hi)) for p in inside)
