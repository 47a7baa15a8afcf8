"""Traced solver runs, shared references and CSV output for convergence comparisons."""
from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .certificates import nnls_certificate
from .errors import EmptyComparison, OracleFailure
from .problems.nnls import NnlsInstance, nnls_active_set_oracle, nnls_as_split, solve_nnls_pdhg
from .solvers import (IterateState, SolveReport, StepConfig, solve_admm, solve_admm_dual_nnls,
                      solve_consensus_admm, solve_gda, solve_pdg)

SOLVER_IDS = ("pdg", "admm", "admm-dual", "pdhg", "gda", "consensus")
CSV_HEADER = ("solver", "iter", "objective", "dist_to_ref", "kkt_residual")
DUAL_SPACE_SOLVERS = ("gda",)


def resolve_seed(seed: int | None = None, default: int = 0) -> int:
    """Seed from the ``PDK_SEED`` environment variable, else ``seed``, else ``default``."""
    env = os.environ.get("PDK_SEED")
    if env not in (None, ""):
        return int(env)
    return default if seed is None else int(seed)


@dataclass(frozen=True)
class TraceRow:
    iter: int
    objective: float
    dist_to_ref: float
    kkt_residual: float


@dataclass
class Trace:
    solver: str
    rows: list[TraceRow] = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class ReferenceSolution:
    x_ref: np.ndarray
    dual_ref: np.ndarray
    source: str  # "oracle" or "admm(iters=..., tol=...)"


def make_reference(inst: NnlsInstance, kind: str = "auto") -> ReferenceSolution:
    """Reference solution for distance measurements.

    ``auto`` uses the enumeration oracle when ``n <= 16`` and a high-accuracy
    ADMM run (tolerance ``1e-10``, at most ``1e5`` iterations) otherwise;
    ``oracle`` and ``admm`` force one source.  The reference must pass its
    own KKT check at ``1e-8``.
    """
    n = inst.A.shape[1]
    if kind == "auto":
        kind = "oracle" if n <= 16 else "admm"
    if kind == "oracle":
        x, lam, _ = nnls_active_set_oracle(inst)
        source = "oracle"
    elif kind == "admm":
        cfg = StepConfig(max_iters=100_000, tol_primal=1e-10, tol_dual=1e-10, tol_gap=1e-12)
        rep = solve_admm(nnls_as_split(inst), cfg)
        x, lam = rep.state.x, rep.state.lam
        source = f"admm(iters={rep.iterations}, tol=1e-10)"
    else:
        raise ValueError(f"unknown reference kind {kind!r}")
    cert = nnls_certificate(inst.A, inst.b, x, lam)
    if cert.kkt_residual > 1e-8:
        raise OracleFailure(f"reference fails its KKT check ({cert.kkt_residual:.3g})")
    return ReferenceSolution(x, lam, source)


def solve_nnls(inst: NnlsInstance, solver: str, cfg: StepConfig = StepConfig(),
               observer=None, blocks: int = 2) -> SolveReport:
    """Dispatch an NNLS instance to one of the registered solvers.

    ``consensus`` splits the rows into ``blocks`` contiguous groups.
    """
    if solver == "pdg":
        return solve_pdg(inst.A, inst.b, cfg, observer)
    if solver == "admm":
        return solve_admm(nnls_as_split(inst), cfg, observer)
    if solver == "admm-dual":
        return solve_admm_dual_nnls(inst.A, inst.b, cfg, observer)
    if solver == "pdhg":
        return solve_nnls_pdhg(inst, cfg, observer)
    if solver == "gda":
        return solve_gda(inst.A, inst.b, cfg, observer)
    if solver == "consensus":
        parts = np.array_split(np.arange(inst.A.shape[0]), max(1, min(blocks, inst.A.shape[0])))
        return solve_consensus_admm([(inst.A[p], inst.b[p]) for p in parts], cfg, observer)
    raise ValueError(f"unknown solver {solver!r}; choose from {', '.join(SOLVER_IDS)}")


def trace_row(inst: NnlsInstance, solver: str, k: int, state: IterateState,
              ref: ReferenceSolution) -> TraceRow:
    """Objective, distance to reference and KKT residual for one iterate.

    Dual-space learners (``gda``) measure distance on the multiplier,
    ``||lam - lam_ref||``; all other solvers on the primal ``||x - x_ref||``.
    The KKT residual pairs ``x`` with the solver's own multiplier when it has
    one and with ``Ax - b`` otherwise.
    """
    x = state.x
    lam = state.lam if state.lam is not None and state.lam.shape == inst.b.shape else inst.A @ x - inst.b
    cert = nnls_certificate(inst.A, inst.b, x, lam)
    if solver in DUAL_SPACE_SOLVERS:
        dist = float(np.linalg.norm(lam - ref.dual_ref))
    else:
        dist = float(np.linalg.norm(x - ref.x_ref))
    return TraceRow(k, cert.primal_obj, dist, cert.kkt_residual)


def run_traced(inst: NnlsInstance, solver: str, cfg: StepConfig,
               ref: ReferenceSolution) -> tuple[Trace, SolveReport]:
    """Run ``solver`` recording one :class:`TraceRow` per iteration."""
    trace = Trace(solver)

    def observe(k, state):
        trace.rows.append(trace_row(inst, solver, k, state, ref))

    report = solve_nnls(inst, solver, cfg, observe)
    return trace, report


def compare(inst: NnlsInstance, solvers, cfg: StepConfig = StepConfig(),
            ref: ReferenceSolution | None = None, ref_kind: str = "auto",
            parallel: bool = False) -> list[tuple[Trace, SolveReport]]:
    """Traced runs of several solvers against one shared reference.

    Runs are independent, so ``parallel=True`` executes them on a thread pool;
    results keep the order of ``solvers`` either way.
    """
    solvers = list(solvers)
    if not solvers:
        raise EmptyComparison("at least one solver id is required")
    for sid in solvers:
        if sid not in SOLVER_IDS:
            raise ValueError(f"unknown solver {sid!r}; choose from {', '.join(SOLVER_IDS)}")
    if ref is None:
        ref = make_reference(inst, ref_kind)
    if parallel and len(solvers) > 1:
        with ThreadPoolExecutor(max_workers=len(solvers)) as pool:
            return list(pool.map(lambda s: run_traced(inst, s, cfg, ref), solvers))
    return [run_traced(inst, s, cfg, ref) for s in solvers]


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(traces, path) -> None:
    """Write traces as CSV, rows ordered by ``(solver, iter)``, floats to 17 significant digits."""
    rows = []
    for tr in traces:
        for r in tr.rows:
            rows.append((tr.solver, r.iter, r.objective, r.dist_to_ref, r.kkt_residual))
    rows.sort(key=lambda t: (t[0], t[1]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for s, k, obj, dist, kkt in rows:
            w.writerow([s, k, _fmt(obj), _fmt(dist), _fmt(kkt)])


def read_csv(path) -> list[Trace]:
    """Parse a trace CSV back into :class:`Trace` objects (one per solver)."""
    out: dict[str, Trace] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CSV_HEADER:
            raise ValueError(f"unexpected CSV header {header}")
        for s, k, obj, dist, kkt in reader:
            out.setdefault(s, Trace(s)).rows.append(
                TraceRow(int(k), float(obj), float(dist), float(kkt)))
    return list(out.values())
