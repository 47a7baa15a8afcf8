"""Tiny reverse-mode automatic differentiation over an explicit graph.

A :class:`CompGraph` is built node by node, so parents always precede their
children and the graph is acyclic by construction.  Two backward engines are
provided:

* :func:`grad_chain` pushes adjoints from each node to its parents
  (``parent_adj += J^T node_adj``), the textbook chain-rule sweep.
* :func:`grad_adjoint` treats every non-input node as an equality constraint
  ``v_i = op_i(parents)`` and solves for the constraint multipliers by
  back-substitution.  Each multiplier is pulled from the multipliers of its
  children, which makes the triangular structure of the system explicit.

Both engines return the same numbers up to floating-point summation order.

Examples
--------
>>> import numpy as np
>>> g, _ = nnls_graph(np.array([[2.0]]), np.array([1.0]))
>>> grad_chain(g, {"x": np.array([1.0])})["x"]
array([2.])
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, UnboundInput

INPUT = "Input"
MATVEC = "MatVec"
ADD = "Add"
SUB = "Sub"
SCALE = "Scale"
DOT = "Dot"
HALF_SQ_NORM = "HalfSqNorm"
ADD_CONST = "AddConst"

_ARITY = {INPUT: 0, MATVEC: 1, ADD: 2, SUB: 2, SCALE: 1, DOT: 2, HALF_SQ_NORM: 1, ADD_CONST: 1}


@dataclass(frozen=True)
class GraphNode:
    id: int
    kind: str
    parents: tuple[int, ...]
    param: object = None  # matrix, scalar, constant vector or input name


@dataclass
class CompGraph:
    nodes: list[GraphNode] = field(default_factory=list)
    output: int | None = None
    _kids: list | None = field(default=None, init=False, repr=False, compare=False)

    def _add(self, kind: str, parents: tuple[int, ...], param=None) -> int:
        if len(parents) != _ARITY[kind]:
            raise ValueError(f"{kind} takes {_ARITY[kind]} parents, got {len(parents)}")
        nid = len(self.nodes)
        for p in parents:
            if not 0 <= p < nid:
                raise ValueError(f"parent {p} must precede node {nid}")
        self.nodes.append(GraphNode(nid, kind, tuple(parents), param))
        self._kids = None
        return nid

    def input(self, name: str) -> int:
        return self._add(INPUT, (), name)

    def matvec(self, M, p: int) -> int:
        return self._add(MATVEC, (p,), np.asarray(M, dtype=np.float64))

    def add(self, a: int, b: int) -> int:
        return self._add(ADD, (a, b))

    def sub(self, a: int, b: int) -> int:
        return self._add(SUB, (a, b))

    def scale(self, s: float, p: int) -> int:
        return self._add(SCALE, (p,), float(s))

    def dot(self, a: int, b: int) -> int:
        return self._add(DOT, (a, b))

    def half_sq_norm(self, p: int) -> int:
        return self._add(HALF_SQ_NORM, (p,))

    def add_const(self, p: int, c) -> int:
        return self._add(ADD_CONST, (p,), np.asarray(c, dtype=np.float64))

    def set_output(self, nid: int) -> "CompGraph":
        self.output = nid
        return self

    def input_names(self) -> list[str]:
        return [n.param for n in self.nodes if n.kind == INPUT]

    def children(self) -> list[list[int]]:
        """Child ids of every node (cached until the graph grows)."""
        if self._kids is None:
            kids: list[list[int]] = [[] for _ in self.nodes]
            for node in self.nodes:
                for p in node.parents:
                    kids[p].append(node.id)
            self._kids = kids
        return self._kids


def _shape_error(node: GraphNode, detail: str) -> DimensionMismatch:
    return DimensionMismatch(f"node {node.id} ({node.kind}): {detail}")


def _apply(node: GraphNode, args: list[np.ndarray]) -> np.ndarray:
    kind = node.kind
    if kind == MATVEC:
        M, (p,) = node.param, args
        if M.shape[1] != p.shape[0]:
            raise _shape_error(node, f"matrix {M.shape} times vector {p.shape}")
        return M @ p
    if kind in (ADD, SUB, DOT):
        a, b = args
        if a.shape != b.shape:
            raise _shape_error(node, f"operand shapes {a.shape} and {b.shape}")
        if kind == ADD:
            return a + b
        if kind == SUB:
            return a - b
        return np.asarray(a @ b) if a.ndim else a * b
    if kind == SCALE:
        return node.param * args[0]
    if kind == HALF_SQ_NORM:
        (a,) = args
        return np.asarray(0.5 * (a @ a)) if a.ndim else 0.5 * a * a
    if kind == ADD_CONST:
        (a,) = args
        if a.shape != node.param.shape:
            raise _shape_error(node, f"constant shape {node.param.shape} vs {a.shape}")
        return a + node.param
    raise ValueError(f"unknown op {kind}")


def _vjp(node: GraphNode, args: list[np.ndarray], upstream: np.ndarray) -> list[np.ndarray]:
    """Return ``J_p^T upstream`` for each parent ``p`` of ``node``."""
    kind = node.kind
    if kind == MATVEC:
        return [node.param.T @ upstream]
    if kind == ADD:
        return [upstream, upstream]
    if kind == SUB:
        return [upstream, -upstream]
    if kind == SCALE:
        return [node.param * upstream]
    if kind == DOT:
        a, b = args
        return [upstream * b, upstream * a]
    if kind == HALF_SQ_NORM:
        return [upstream * args[0]]
    if kind == ADD_CONST:
        return [upstream]
    raise ValueError(f"unknown op {kind}")


def forward(g: CompGraph, inputs: dict) -> tuple[float, list[np.ndarray]]:
    """Evaluate the graph; returns the scalar output and every node value."""
    if g.output is None:
        raise ValueError("graph has no output node")
    values: list[np.ndarray] = []
    for node in g.nodes:
        if node.kind == INPUT:
            if node.param not in inputs:
                raise UnboundInput(node.param)
            values.append(np.asarray(inputs[node.param], dtype=np.float64))
        else:
            values.append(_apply(node, [values[p] for p in node.parents]))
    out = values[g.output]
    if out.size != 1:
        raise DimensionMismatch(f"output node {g.output} is not scalar (shape {out.shape})")
    return float(out), values


def _input_grads(g: CompGraph, adj: list) -> dict[str, np.ndarray]:
    grads = {}
    for node, a in zip(g.nodes, adj):
        if node.kind == INPUT:
            grads[node.param] = a
    return grads


def grad_chain(g: CompGraph, inputs: dict, values: list | None = None) -> dict[str, np.ndarray]:
    """Gradient of the output with respect to every input by a reverse chain-rule sweep."""
    if values is None:
        _, values = forward(g, inputs)
    adj: list = [np.zeros_like(v) for v in values]
    adj[g.output] = np.ones_like(values[g.output])
    for node in reversed(g.nodes[: g.output + 1]):
        if node.kind == INPUT:
            continue
        up = adj[node.id]
        contribs = _vjp(node, [values[p] for p in node.parents], up)
        for p, c in zip(node.parents, contribs):
            adj[p] = adj[p] + c
    return _input_grads(g, adj)


@dataclass
class AdjointSystem:
    """Multipliers of the node-definition constraints ``v_i - op_i(parents) = 0``.

    ``multipliers[i]`` is ``None`` for input nodes.  The stationarity condition
    for a non-input node ``j`` reads
    ``[j is output] - nu_j + sum_{children i} J_ij^T nu_i = 0``.
    """

    multipliers: list
    solved: bool = False

    def stationarity_residual(self, g: CompGraph, values: list) -> float:
        kids = g.children()
        worst = 0.0
        for node in g.nodes:
            if node.kind == INPUT or node.id > g.output:
                continue
            total = np.ones_like(values[node.id]) if node.id == g.output else np.zeros_like(values[node.id])
            total = total - self.multipliers[node.id]
            for c in kids[node.id]:
                child = g.nodes[c]
                if c > g.output:
                    continue
                jt = _vjp(child, [values[p] for p in child.parents], self.multipliers[c])
                for slot, p in enumerate(child.parents):
                    if p == node.id:
                        total = total + jt[slot]
            worst = max(worst, float(np.max(np.abs(total), initial=0.0)))
        return worst


def solve_adjoint(g: CompGraph, values: list) -> AdjointSystem:
    """Back-substitute the multiplier equations in reverse topological order."""
    kids = g.children()
    mult: list = [None] * len(g.nodes)
    for node in reversed(g.nodes[: g.output + 1]):
        if node.kind == INPUT:
            continue
        nu = np.ones_like(values[node.id]) if node.id == g.output else np.zeros_like(values[node.id])
        for c in kids[node.id]:
            if c > g.output:
                continue
            child = g.nodes[c]
            jt = _vjp(child, [values[p] for p in child.parents], mult[c])
            for slot, p in enumerate(child.parents):
                if p == node.id:
                    nu = nu + jt[slot]
        mult[node.id] = nu
    return AdjointSystem(mult, solved=True)


def grad_adjoint(g: CompGraph, inputs: dict, values: list | None = None,
                 return_system: bool = False):
    """Gradient per input read off the solved multiplier system.

    For an input ``x`` the gradient is ``sum_{children i} J_ix^T nu_i``; on the
    NNLS graph this is ``A^T lambda`` with ``lambda = Ax - b``.
    """
    if values is None:
        _, values = forward(g, inputs)
    system = solve_adjoint(g, values)
    kids = g.children()
    grads = {}
    for node in g.nodes:
        if node.kind != INPUT:
            continue
        gx = np.zeros_like(values[node.id])
        for c in kids[node.id]:
            if c > g.output:
                continue
            child = g.nodes[c]
            jt = _vjp(child, [values[p] for p in child.parents], system.multipliers[c])
            for slot, p in enumerate(child.parents):
                if p == node.id:
                    gx = gx + jt[slot]
        grads[node.param] = gx
    if return_system:
        return grads, system
    return grads


def nnls_graph(A, b) -> tuple[CompGraph, dict[str, int]]:
    """Graph of ``f(x) = 0.5 * ||A x - b||^2`` with nodes ``z = Ax``, ``y = z - b``, ``f``."""
    g = CompGraph()
    x = g.input("x")
    z = g.matvec(A, x)
    y = g.add_const(z, -np.asarray(b, dtype=np.float64))
    f = g.half_sq_norm(y)
    g.set_output(f)
    return g, {"x": x, "z": z, "y": y, "f": f}


def nnls_dual_lagrangian_graph(A) -> CompGraph:
    """Graph of ``L(lam, mu, z; b) = 0.5||lam||^2 + b^T lam + z^T (A^T lam - mu)``."""
    A = np.asarray(A, dtype=np.float64)
    g = CompGraph()
    lam = g.input("lam")
    mu = g.input("mu")
    z = g.input("z")
    b = g.input("b")
    quad = g.half_sq_norm(lam)
    lin = g.dot(b, lam)
    resid = g.sub(g.matvec(A.T, lam), mu)
    coupling = g.dot(z, resid)
    g.set_output(g.add(g.add(quad, lin), coupling))
    return g
