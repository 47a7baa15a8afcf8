"""Command-line interface: ``pdkit solve | compare | certify | generate``.

Problem files are JSON objects with a ``type`` field.  Matrices are
row-major nested arrays.  Required fields per type:

========  ==========================================================
type      fields
========  ==========================================================
nnls      ``A`` (m x n), ``b`` (m)
diet      ``c`` (n), ``A`` (m x n), ``b`` (m)
nnv       ``layers`` (list of ``{"W", "w", "activation"}``), ``x_nom``,
          ``eps``, ``spec`` = ``{"c", "d"}``
opf       ``grid`` = ``{"n_bus", "lines", "vmin", "vmax"}`` with
          optional ``"loads"`` and ``"generators"`` lists of
          ``{"bus", "value"}``; a line is ``{"i", "j", "g"}`` plus an
          optional ``"limit"`` (omitted means unlimited)
lrmp      ``L`` (n x n) and either ``q``, ``y`` (``variant`` "mean", the
          default) or ``A``, ``b`` (``variant`` "nnls")
========  ==========================================================

Unknown fields are rejected.  Solution files written by ``solve --out`` hold
``type`` plus the primal and dual vectors (``x``, ``lam``, ``mu``, ``nu``,
``gam``, or ``duals`` for NNV) and are what ``certify`` consumes.

Exit codes: 0 converged or certified, 1 usage or data error (and divergence),
2 iteration budget exhausted, 3 valid input that is not certified.
"""
from __future__ import annotations

import argparse
import json
import sys

import jsonschema
import numpy as np

from . import harness
from .certificates import lp_certificate, nnls_certificate
from .errors import PdkitError
from .problems import generators
from .problems.diet import DietInstance, lp_primal_dual
from .problems.lrmp import (LrmpInstance, LrNnlsInstance, lr_nnls_certificate,
                            lr_nnls_dual_solve, lrmp_certificate, lrmp_dual_solve)
from .problems.nnls import NnlsInstance
from .problems.nnv import Layer, NnvInstance, nnv_dual_bound, nnv_primal_dual
from .problems.opf import Line, OpfInstance, opf_certificate, opf_primal_dual
from .solvers import StepConfig, Termination

EXIT_OK, EXIT_ERROR, EXIT_BUDGET, EXIT_UNCERTIFIED = 0, 1, 2, 3

_NUM = {"type": "number"}
_VEC = {"type": "array", "items": _NUM}
_MAT = {"type": "array", "items": _VEC, "minItems": 1}


def _obj(props: dict, required) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_BUS_VALUE = {"type": "array", "items": _obj({"bus": {"type": "integer"}, "value": _NUM},
                                             ["bus", "value"])}
_LINE = _obj({"i": {"type": "integer"}, "j": {"type": "integer"}, "g": _NUM, "limit": _NUM},
             ["i", "j", "g"])
_TYPE = lambda name: {"const": name}  # noqa: E731

PROBLEM_SCHEMAS = {
    "nnls": _obj({"type": _TYPE("nnls"), "A": _MAT, "b": _VEC}, ["type", "A", "b"]),
    "diet": _obj({"type": _TYPE("diet"), "c": _VEC, "A": _MAT, "b": _VEC},
                 ["type", "c", "A", "b"]),
    "nnv": _obj({
        "type": _TYPE("nnv"),
        "layers": {"type": "array", "minItems": 1, "items": _obj(
            {"W": _MAT, "w": _VEC, "activation": {"enum": ["relu", "identity"]}},
            ["W", "w", "activation"])},
        "x_nom": _VEC, "eps": {"type": "number", "minimum": 0},
        "spec": _obj({"c": _VEC, "d": _NUM}, ["c", "d"]),
    }, ["type", "layers", "x_nom", "eps", "spec"]),
    "opf": _obj({
        "type": _TYPE("opf"),
        "grid": _obj({"n_bus": {"type": "integer", "minimum": 2},
                      "lines": {"type": "array", "items": _LINE},
                      "vmin": _VEC, "vmax": _VEC, "loads": _BUS_VALUE, "generators": _BUS_VALUE},
                     ["n_bus", "lines", "vmin", "vmax"]),
    }, ["type", "grid"]),
    "lrmp": {
        "type": "object",
        "properties": {"type": _TYPE("lrmp"), "variant": {"enum": ["mean", "nnls"]},
                       "L": _MAT, "q": {"type": "number", "exclusiveMinimum": 0}, "y": _VEC,
                       "A": _MAT, "b": _VEC},
        "required": ["type", "L"],
        "additionalProperties": False,
        "if": {"properties": {"variant": {"const": "nnls"}}, "required": ["variant"]},
        "then": {"required": ["A", "b"], "not": {"anyOf": [{"required": ["q"]},
                                                           {"required": ["y"]}]}},
        "else": {"required": ["q", "y"], "not": {"anyOf": [{"required": ["A"]},
                                                           {"required": ["b"]}]}},
    },
}
PROBLEM_TYPES = tuple(PROBLEM_SCHEMAS)

SOLUTION_SCHEMA = {
    "type": "object",
    "properties": {"type": {"enum": list(PROBLEM_TYPES)}, "x": _VEC, "lam": _VEC, "mu": _VEC,
                   "nu": _VEC, "gam": _VEC, "duals": {"type": "array", "items": _VEC}},
    "required": ["type"],
    "additionalProperties": False,
}


class UsageError(PdkitError):
    """Bad command-line input or a file that fails schema validation."""


def _field_path(err: jsonschema.ValidationError) -> str:
    path = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)
    return path.lstrip(".") or "<root>"


def _validate(doc, schema, what: str) -> None:
    err = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(schema).iter_errors(doc))
    if err is not None:
        field = _field_path(err)
        if err.validator == "additionalProperties":
            extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
            field = ", ".join(extra)
        elif err.validator == "required":
            field = err.message.split("'")[1] if "'" in err.message else field
        raise UsageError(f"invalid {what}: field '{field}': {err.message}")


def _read_json(path: str, what: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{what} {path} is not valid JSON (line {exc.lineno}, "
                         f"column {exc.colno}): {exc.msg}") from None
    except OSError as exc:
        raise UsageError(f"cannot read {what} {path}: {exc.strerror}") from None


def validate_problem(doc) -> str:
    """Validate a problem document; return its type."""
    if not isinstance(doc, dict):
        raise UsageError("invalid problem: field '<root>': expected a JSON object")
    kind = doc.get("type")
    if kind not in PROBLEM_SCHEMAS:
        raise UsageError(f"invalid problem: field 'type': {kind!r} is not one of "
                         f"{', '.join(PROBLEM_TYPES)}")
    _validate(doc, PROBLEM_SCHEMAS[kind], "problem")
    return kind


def problem_from_json(doc):
    """Build the instance object described by a validated problem document."""
    kind = validate_problem(doc)
    if kind == "nnls":
        return NnlsInstance(doc["A"], doc["b"])
    if kind == "diet":
        return DietInstance(doc["c"], doc["A"], doc["b"])
    if kind == "nnv":
        layers = tuple(Layer(l["W"], l["w"], l["activation"]) for l in doc["layers"])
        return NnvInstance(layers, doc["x_nom"], doc["eps"], doc["spec"]["c"], doc["spec"]["d"])
    if kind == "opf":
        g = doc["grid"]
        lines = tuple(Line(l["i"], l["j"], l["g"], l.get("limit", np.inf)) for l in g["lines"])
        return OpfInstance(g["n_bus"], lines, g["vmin"], g["vmax"],
                           loads={e["bus"]: e["value"] for e in g.get("loads", [])},
                           generators={e["bus"]: e["value"] for e in g.get("generators", [])})
    if doc.get("variant", "mean") == "nnls":
        return LrNnlsInstance(doc["A"], doc["b"], doc["L"])
    return LrmpInstance(doc["q"], doc["y"], doc["L"])


def _tolist(a):
    return np.asarray(a, dtype=np.float64).tolist()


def problem_to_json(inst) -> dict:
    """Inverse of :func:`problem_from_json`."""
    if isinstance(inst, NnlsInstance):
        return {"type": "nnls", "A": _tolist(inst.A), "b": _tolist(inst.b)}
    if isinstance(inst, DietInstance):
        return {"type": "diet", "c": _tolist(inst.c), "A": _tolist(inst.A), "b": _tolist(inst.b)}
    if isinstance(inst, NnvInstance):
        return {"type": "nnv",
                "layers": [{"W": _tolist(l.W), "w": _tolist(l.w), "activation": l.activation}
                           for l in inst.layers],
                "x_nom": _tolist(inst.x_nom), "eps": inst.eps,
                "spec": {"c": _tolist(inst.c), "d": inst.d}}
    if isinstance(inst, OpfInstance):
        lines = []
        for ln in inst.lines:
            entry = {"i": ln.i, "j": ln.j, "g": float(ln.g)}
            if np.isfinite(ln.limit):
                entry["limit"] = float(ln.limit)
            lines.append(entry)
        grid = {"n_bus": inst.n_bus, "lines": lines, "vmin": _tolist(inst.vmin),
                "vmax": _tolist(inst.vmax)}
        if inst.loads:
            grid["loads"] = [{"bus": b, "value": v} for b, v in inst.loads.items()]
        if inst.generators:
            grid["generators"] = [{"bus": b, "value": v} for b, v in inst.generators.items()]
        return {"type": "opf", "grid": grid}
    if isinstance(inst, LrNnlsInstance):
        return {"type": "lrmp", "variant": "nnls", "L": _tolist(inst.L), "A": _tolist(inst.A),
                "b": _tolist(inst.b)}
    if isinstance(inst, LrmpInstance):
        return {"type": "lrmp", "L": _tolist(inst.L), "q": inst.q, "y": _tolist(inst.y)}
    raise TypeError(f"cannot serialize {type(inst).__name__}")


def load_problem(path: str):
    return problem_from_json(_read_json(path, "problem file"))


def _dump(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"


def _write(text: str, path: str | None) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


# --------------------------------------------------------------------------- solve

def _config(args) -> StepConfig:
    tol = getattr(args, "tol", None)
    return StepConfig().with_overrides(
        max_iters=args.max_iters, tau=args.tau, sigma=args.sigma, rho=args.rho, lr=args.lr,
        tol_primal=tol, tol_dual=tol, recovery=args.recovery,
        consensus_mode=args.consensus_mode, parallel=args.parallel or None)


def _run(inst, solver: str | None, cfg: StepConfig):
    """Solve ``inst``; return ``(report, solution document)``."""
    if isinstance(inst, NnlsInstance):
        report = harness.solve_nnls(inst, solver or "admm", cfg)
        st = report.state
        sol = {"x": st.x}
        if st.lam is not None and st.lam.shape == inst.b.shape:
            sol["lam"] = st.lam
        return report, sol
    if solver not in (None, "pdhg"):
        raise UsageError(f"solver {solver!r} applies to nnls problems only")
    if isinstance(inst, DietInstance):
        report = lp_primal_dual(inst, cfg)
        return report, {"x": report.state.x, "lam": report.state.lam, "nu": report.state.mu}
    if isinstance(inst, NnvInstance):
        report = nnv_primal_dual(inst, cfg)
        return report, {"x": report.state.x, "duals": report.extra["duals"]}
    if isinstance(inst, OpfInstance):
        report = opf_primal_dual(inst, cfg)
        st = report.state
        return report, {"x": st.x, "lam": st.lam, "gam": report.extra["gamma"], "mu": st.mu}
    if isinstance(inst, LrNnlsInstance):
        report = lr_nnls_dual_solve(inst, cfg)
        st = report.state
        return report, {"x": st.x, "lam": st.lam, "mu": st.mu}
    lam, z, report = lrmp_dual_solve(inst, cfg)
    return report, {"x": z, "lam": lam}


def _exit_for(term: Termination) -> int:
    return {Termination.CONVERGED: EXIT_OK, Termination.MAX_ITERS: EXIT_BUDGET}.get(term, EXIT_ERROR)


def cmd_solve(args) -> int:
    inst = load_problem(args.problem)
    report, sol = _run(inst, args.solver, _config(args))
    summary = report.summary()
    if isinstance(inst, NnvInstance):
        summary.update({k: report.extra[k] for k in ("primal_value", "dual_bound", "certified",
                                                      "counterexample")})
    print(json.dumps(summary, sort_keys=True))
    if args.out:
        doc = {"type": problem_to_json(inst)["type"]}
        for key, val in sol.items():
            doc[key] = [_tolist(v) for v in val] if key == "duals" else _tolist(val)
        _write(_dump(doc), args.out)
    return _exit_for(report.termination)


# --------------------------------------------------------------------------- compare

def cmd_compare(args) -> int:
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    unknown = [s for s in solvers if s not in harness.SOLVER_IDS]
    if unknown:
        raise UsageError(f"unknown solver id(s) {', '.join(unknown)}; choose from "
                         f"{', '.join(harness.SOLVER_IDS)}")
    if args.problem:
        inst = load_problem(args.problem)
        if not isinstance(inst, NnlsInstance):
            raise UsageError("compare runs on nnls problems")
    else:
        inst = generators.random_nnls(args.m, args.n, harness.resolve_seed(args.seed))
    results = harness.compare(inst, solvers, _config(args), ref_kind=args.ref,
                              parallel=args.parallel)
    harness.write_csv([tr for tr, _ in results], args.out)
    for tr, rep in results:
        last = tr.rows[-1] if tr.rows else None
        print(json.dumps({"solver": tr.solver, "termination": rep.termination.value,
                          "iterations": rep.iterations,
                          "dist_to_ref": last.dist_to_ref if last else None,
                          "kkt_residual": last.kkt_residual if last else None}))
    terms = [rep.termination for _, rep in results]
    if any(t == Termination.DIVERGED for t in terms):
        return EXIT_ERROR
    return EXIT_OK if all(t == Termination.CONVERGED for t in terms) else EXIT_BUDGET


# --------------------------------------------------------------------------- certify

def _vec(sol: dict, key: str, default=None):
    if key not in sol:
        if default is None:
            raise UsageError(f"invalid solution: field '{key}' is required for this problem type")
        return default
    return np.asarray(sol[key], dtype=np.float64)


def certify(inst, sol: dict) -> dict:
    """Certificate fields (plus ``certified`` for NNV) for a candidate solution."""
    if isinstance(inst, NnvInstance):
        if "duals" not in sol:
            raise UsageError("invalid solution: field 'duals' is required for nnv")
        bound = nnv_dual_bound(inst, [np.asarray(l, dtype=np.float64) for l in sol["duals"]])
        out = {"dual_bound": bound, "certified": bound < 0}
        if "x" in sol:
            x = _vec(sol, "x")
            if x.shape != inst.x_nom.shape:
                raise UsageError(f"x has length {x.size}, expected {inst.x_nom.size}")
            x = np.clip(x, inst.x_nom - inst.eps, inst.x_nom + inst.eps)
            out["primal_value"] = inst.value(x)
        return out
    x = _vec(sol, "x")
    if isinstance(inst, NnlsInstance):
        cert = nnls_certificate(inst.A, inst.b, x, _vec(sol, "lam", inst.A @ x - inst.b))
    elif isinstance(inst, DietInstance):
        m, n = inst.A.shape
        cert = lp_certificate(inst.as_cone_program(), x, _vec(sol, "lam", np.zeros(m)),
                              _vec(sol, "nu", np.zeros(n)))
    elif isinstance(inst, OpfInstance):
        if x.shape != (inst.n_bus,):
            raise UsageError(f"x has length {x.size}, expected {inst.n_bus}")
        cert = opf_certificate(inst, x, _vec(sol, "lam", np.zeros(len(inst.loads))),
                               _vec(sol, "gam", np.zeros(len(inst.generators))),
                               _vec(sol, "mu", np.zeros(len(inst.lines))))
    elif isinstance(inst, LrNnlsInstance):
        if x.shape != inst.L.shape[:1]:
            raise UsageError(f"x has length {x.size}, expected {inst.L.shape[0]}")
        lam = _vec(sol, "lam", np.zeros(inst.b.shape))
        mu = _vec(sol, "mu", np.zeros(x.shape))
        if lam.shape != inst.b.shape or mu.shape != x.shape:
            raise UsageError("lam or mu has the wrong length")
        cert = lr_nnls_certificate(inst, x, lam, mu)
    else:
        cert = lrmp_certificate(inst, x, _vec(sol, "lam", np.zeros(inst.y.shape)))
    return cert.to_dict()


def _passes(cert: dict, tol: float) -> bool:
    if "certified" in cert:
        return bool(cert["certified"])
    residuals = ("stationarity_res", "primal_feas_res", "dual_feas_res", "compl_slack_res")
    return abs(cert["rel_gap"]) <= tol and all(cert[k] <= tol for k in residuals)


def cmd_certify(args) -> int:
    inst = load_problem(args.problem)
    sol = _read_json(args.solution, "solution file")
    _validate(sol, SOLUTION_SCHEMA, "solution")
    kind = problem_to_json(inst)["type"]
    if sol["type"] != kind:
        raise UsageError(f"invalid solution: field 'type': {sol['type']!r} does not match "
                         f"problem type {kind!r}")
    cert = certify(inst, sol)
    print(json.dumps(cert, sort_keys=True))
    return EXIT_OK if _passes(cert, args.tol) else EXIT_UNCERTIFIED


# --------------------------------------------------------------------------- generate

def generate(kind: str, args):
    """Random instance of ``kind`` from the seeded generators."""
    seed = harness.resolve_seed(args.seed)
    if kind == "nnls":
        return generators.random_nnls(args.m or 30, args.n or 10, seed)
    if kind == "diet":
        return generators.random_diet(args.m or 6, args.n or 8, seed)
    if kind == "nnv":
        widths = tuple(int(w) for w in args.widths.split(","))
        if len(widths) < 2 or min(widths) < 1:
            raise UsageError("widths needs at least two positive entries")
        return generators.random_nnv(widths, args.eps, seed, margin=args.margin)
    if kind == "opf":
        return generators.random_opf(args.buses, seed)
    if args.variant == "nnls":
        return generators.random_lr_nnls(args.m or 6, args.n or 6, seed)
    return generators.random_lrmp(args.n or 8, seed)


def cmd_generate(args) -> int:
    for name in ("m", "n"):
        val = getattr(args, name)
        if val is not None and val < 1:
            raise UsageError(f"--{name} must be a positive integer")
    if args.buses < 2:
        raise UsageError("--buses must be at least 2")
    doc = problem_to_json(generate(args.type, args))
    validate_problem(doc)
    _write(_dump(doc), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------- parser

def _add_step_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("step configuration")
    g.add_argument("--max-iters", type=int)
    g.add_argument("--tau", type=float)
    g.add_argument("--sigma", type=float)
    g.add_argument("--rho", type=float)
    g.add_argument("--lr", type=float, help="GDA learning rate")
    g.add_argument("--tol", type=float, help="primal and dual residual tolerance")
    g.add_argument("--recovery", choices=("support", "paper-faithful", "multiplier"))
    g.add_argument("--consensus-mode", choices=("shared", "replicated-dual"))
    g.add_argument("--parallel", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pdkit", description="Primal-dual solvers with certificates.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a problem file")
    p.add_argument("--problem", required=True)
    p.add_argument("--solver", choices=harness.SOLVER_IDS,
                   help="nnls solver (default admm); other types use their own method")
    p.add_argument("--out", help="write the solution JSON here")
    _add_step_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("compare", help="traced comparison of nnls solvers")
    p.add_argument("--solvers", required=True, help="comma-separated solver ids")
    p.add_argument("--problem", help="nnls problem file (default: a random instance)")
    p.add_argument("--m", type=int, default=30)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed", type=int)
    p.add_argument("--ref", choices=("auto", "oracle", "admm"), default="auto")
    p.add_argument("--out", required=True, help="trace CSV path")
    _add_step_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("certify", help="certificate for a candidate solution")
    p.add_argument("--problem", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("generate", help="write a random problem file")
    p.add_argument("--type", required=True, choices=PROBLEM_TYPES)
    p.add_argument("--m", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--buses", type=int, default=2)
    p.add_argument("--widths", default="2,2,1", help="nnv layer widths")
    p.add_argument("--eps", type=float, default=0.1, help="nnv input radius")
    p.add_argument("--margin", type=float, default=0.1,
                   help="nnv: place the offset so the initial dual bound is -margin")
    p.add_argument("--variant", choices=("mean", "nnls"), default="mean", help="lrmp variant")
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_ERROR
    try:
        return args.func(args)
    except (PdkitError, ValueError) as exc:
        print(f"pdkit: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
