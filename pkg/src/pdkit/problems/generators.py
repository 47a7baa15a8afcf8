"""Seeded random instance generators for every problem family."""
from __future__ import annotations

import numpy as np

from .diet import DietInstance
from .lrmp import LrmpInstance, LrNnlsInstance, laplacian_from_edges
from .nnls import NnlsInstance
from .nnv import IDENTITY, RELU, Layer, NnvInstance, backprop_duals, nnv_dual_bound
from .opf import Line, OpfInstance


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def random_nnls(m: int = 30, n: int = 10, seed=0, noise: float = 0.5) -> NnlsInstance:
    """Gaussian ``A``; ``b = A x_true - noise`` with half of ``x_true`` zero.

    The noise pushes several coordinates of the solution onto the bound.
    """
    if m < 1 or n < 1:
        raise ValueError("dimensions must be positive")
    rng = _rng(seed)
    A = rng.standard_normal((m, n))
    x_true = np.zeros(n)
    pos = rng.permutation(n)[: n - n // 2]
    x_true[pos] = rng.uniform(0.5, 2.0, pos.size)
    b = A @ x_true - noise * rng.standard_normal(m)
    return NnlsInstance(A, b)


def random_blocks(n_blocks: int, rows: int = 10, cols: int = 6, seed=0):
    """Row blocks ``(A_i, b_i)`` of one NNLS problem."""
    rng = _rng(seed)
    x_true = np.where(rng.random(cols) < 0.5, 0.0, rng.uniform(0.5, 2.0, cols))
    blocks = []
    for _ in range(n_blocks):
        A = rng.standard_normal((rows, cols))
        blocks.append((A, A @ x_true - 0.5 * rng.standard_normal(rows)))
    return blocks


def random_diet(m: int = 6, n: int = 8, seed=0) -> DietInstance:
    """Costs in ``[1, 10]``, nutrient densities in ``[0, 1]``, requirements met by a random diet."""
    if m < 1 or n < 1:
        raise ValueError("dimensions must be positive")
    rng = _rng(seed)
    c = rng.uniform(1.0, 10.0, n)
    A = rng.uniform(0.0, 1.0, (m, n))
    b = A @ rng.uniform(0.0, 1.0, n)
    return DietInstance(c, A, b)


def random_connected_laplacian(n: int, seed=0, extra_edges: int | None = None,
                               max_weight: int = 3) -> np.ndarray:
    """Laplacian of a random connected graph with integer edge weights.

    A random spanning tree guarantees connectivity; extra random edges are
    added on top.  Integer weights keep ``L 1 = 0`` exact in floating point.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = _rng(seed)
    order = rng.permutation(n)
    edges = {}
    for k in range(1, n):
        i, j = int(order[k]), int(order[rng.integers(k)])
        edges[(min(i, j), max(i, j))] = int(rng.integers(1, max_weight + 1))
    extra = n if extra_edges is None else extra_edges
    for _ in range(extra):
        i, j = rng.choice(n, 2, replace=False) if n > 1 else (0, 0)
        if i != j:
            edges[(min(i, j), max(i, j))] = int(rng.integers(1, max_weight + 1))
    return laplacian_from_edges(n, [(i, j, float(w)) for (i, j), w in sorted(edges.items())])


def random_lrmp(n: int = 8, seed=0, q: float | None = None) -> LrmpInstance:
    rng = _rng(seed)
    L = random_connected_laplacian(n, rng)
    q = float(rng.uniform(0.5, 2.0)) if q is None else q
    return LrmpInstance(q, rng.standard_normal(n), L)


def random_lr_nnls(m: int = 6, n: int = 6, seed=0) -> LrNnlsInstance:
    rng = _rng(seed)
    L = random_connected_laplacian(n, rng)
    A = rng.standard_normal((m, n))
    x_true = np.where(rng.random(n) < 0.5, 0.0, rng.uniform(0.5, 2.0, n))
    b = A @ x_true - 0.5 * rng.standard_normal(m)
    return LrNnlsInstance(A, b, L)


def random_nnv(widths=(2, 2, 1), eps: float = 0.1, seed=0, d: float | None = None,
               margin: float | None = None) -> NnvInstance:
    """Random ReLU network with an identity output layer.

    ``d`` defaults to a random offset.  With ``margin`` given, ``d`` is instead
    chosen so that the dual bound at the back-propagated multipliers equals
    ``-margin``, which produces an instance certified from the start.
    """
    rng = _rng(seed)
    layers = []
    for k in range(len(widths) - 1):
        W = rng.standard_normal((widths[k + 1], widths[k]))
        w = 0.5 * rng.standard_normal(widths[k + 1])
        act = IDENTITY if k == len(widths) - 2 else RELU
        layers.append(Layer(W, w, act))
    x_nom = rng.uniform(-1.0, 1.0, widths[0])
    c = rng.choice([-1.0, 1.0], widths[-1])
    d0 = float(rng.normal()) if d is None else float(d)
    inst = NnvInstance(tuple(layers), x_nom, eps, c, d0)
    if margin is not None:
        bound = nnv_dual_bound(inst, backprop_duals(inst, x_nom))
        inst = NnvInstance(tuple(layers), x_nom, eps, c, d0 - bound - margin)
    return inst


def toy_opf(demand: float = 0.05, line_limit: float = np.inf, g: float = 1.0,
            vmin: float = 0.9, vmax: float = 1.1) -> OpfInstance:
    """Two buses, one line, a load at bus 1 (zero-based) and no generator caps."""
    return OpfInstance(2, (Line(0, 1, g, line_limit),), np.full(2, vmin), np.full(2, vmax),
                       loads={1: demand})


def binding_line_opf() -> OpfInstance:
    """Two-bus case whose line limit is active at the optimum.

    With ``v`` in ``[0.9, 1.1]^2`` the load ``v_2 (v_2 - v_1) >= 0.11`` needs
    ``v_2 - v_1 >= 0.1`` even at ``v_2 = 1.1``, and the limit caps the current
    at ``0.1``; the only feasible point is ``(1.0, 1.1)``.
    """
    return toy_opf(demand=0.1 * 1.1, line_limit=0.1)


def random_opf(n_bus: int = 2, seed=0) -> OpfInstance:
    """Two buses give :func:`toy_opf`; larger sizes build a path with light random loads."""
    if n_bus < 2:
        raise ValueError("need at least two buses")
    if n_bus == 2:
        return toy_opf()
    rng = _rng(seed)
    lines = tuple(Line(i, i + 1, float(rng.uniform(0.5, 2.0))) for i in range(n_bus - 1))
    loads = {int(i): float(rng.uniform(0.0, 0.02)) for i in range(1, n_bus)}
    return OpfInstance(n_bus, lines, np.full(n_bus, 0.9), np.full(n_bus, 1.1), loads=loads)
