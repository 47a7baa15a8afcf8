"""Acceptance criteria 1-12, one test per criterion.

Each test prints a one-line verdict; the terminal summary repeats them.
Criterion 3 is defined last so that it sees every report built by the
other criteria.
"""
import time

import numpy as np
from scipy.optimize import minimize_scalar

import suite_registry
from pdkit import adlite, cli
from pdkit.certificates import nnls_certificate, nnls_gap_terms
from pdkit.convexcore import Box, IndicatorCone, NonnegOrthant, QuadLin, prox
from pdkit.harness import compare, make_reference, read_csv, write_csv
from pdkit.problems import generators
from pdkit.problems.diet import diet_vertex_oracle, lp_primal_dual
from pdkit.problems.lrmp import (LrmpInstance, lr_nnls_dual_solve, lrmp_closed_form,
                                 lrmp_dual_solve)
from pdkit.problems.nnls import (nnls_active_set_oracle, nnls_as_split, pdhg_nnls_updates,
                                 solve_nnls_pdhg)
from pdkit.problems.nnv import (backprop_duals, nnv_dual_bound, nnv_exact_max, nnv_grid_max,
                                nnv_primal_dual)
from pdkit.problems.opf import opf_grid_oracle, opf_primal_dual
from pdkit.solvers import (StepConfig, solve_admm, solve_admm_dual_nnls,
                           solve_consensus_admm, solve_gda, solve_pdg)


def verdict(num: int, ok: bool, detail: str) -> None:
    print(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# ------------------------------------------------------------------ 1

def test_criterion_01_gradient_engines_agree():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst_pair, worst_fd = 0.0, 0.0
    h = 1e-5
    for _ in range(100):
        m, n = rng.integers(1, 21, size=2)
        A = rng.standard_normal((m, n))
        b = rng.standard_normal(m)
        x = rng.standard_normal(n)
        g, _ = adlite.nnls_graph(A, b)
        gc = adlite.grad_chain(g, {"x": x})["x"]
        ga = adlite.grad_adjoint(g, {"x": x})["x"]
        analytic = A.T @ (A @ x - b)
        worst_pair = max(worst_pair, np.max(np.abs(gc - ga)), np.max(np.abs(gc - analytic)),
                         np.max(np.abs(ga - analytic)))
        fd = np.empty(n)
        for i in range(n):
            e = np.zeros(n)
            e[i] = h
            fd[i] = (adlite.forward(g, {"x": x + e})[0] - adlite.forward(g, {"x": x - e})[0]) / (2 * h)
        scale = np.max(np.abs(analytic))
        worst_fd = max(worst_fd, np.max(np.abs(gc - fd)) / scale, np.max(np.abs(ga - fd)) / scale)
    elapsed = time.perf_counter() - start
    verdict(1, worst_pair <= 1e-12 and worst_fd <= 1e-5 and elapsed < 1.0,
            f"pairwise {worst_pair:.2e}, finite-difference rel {worst_fd:.2e}, {elapsed:.2f}s")


# ------------------------------------------------------------------ 2

def test_criterion_02_nnls_solvers_match_oracle():
    start = time.perf_counter()
    cfg = StepConfig()
    worst = {"pdg": 0.0, "admm": 0.0, "admm-dual": 0.0, "pdhg": 0.0}
    for seed in range(50):
        inst = generators.random_nnls(30, 10, seed)
        x_o, _, _ = nnls_active_set_oracle(inst)
        scale = 1.0 + np.linalg.norm(x_o)
        xs = {
            "pdg": solve_pdg(inst.A, inst.b, cfg).state.x,
            "admm": solve_admm(nnls_as_split(inst), cfg).state.x,
            "admm-dual": solve_admm_dual_nnls(inst.A, inst.b, cfg).state.x,
            "pdhg": solve_nnls_pdhg(inst, cfg).state.x,
        }
        for name, x in xs.items():
            worst[name] = max(worst[name], np.linalg.norm(x - x_o) / scale)
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-4 and elapsed < 30.0
    verdict(2, ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f", {elapsed:.1f}s")


# ------------------------------------------------------------------ 4

def test_criterion_04_three_solver_comparison_csv(tmp_path):
    start = time.perf_counter()
    out = tmp_path / "fig4.csv"
    code = cli.main(["compare", "--solvers", "pdg,admm,pdhg", "--m", "30", "--n", "10",
                     "--seed", "4", "--out", str(out)])
    traces = {t.solver: t for t in read_csv(out)}
    elapsed = time.perf_counter() - start
    finals = {s: traces[s].rows[-1] for s in ("pdg", "admm", "pdhg")}
    ok = (code == 0 and all(r.dist_to_ref <= 1e-4 and r.kkt_residual <= 1e-6 and r.iter <= 10_000
                            for r in finals.values()) and elapsed < 10.0)
    verdict(4, ok, ", ".join(f"{s} it={r.iter} dist={r.dist_to_ref:.1e} kkt={r.kkt_residual:.1e}"
                             for s, r in finals.items()) + f", {elapsed:.1f}s")


# ------------------------------------------------------------------ 5

def test_criterion_05_dual_learning_against_admm_reference():
    start = time.perf_counter()
    inst = generators.random_nnls(20, 8, seed=5)
    ref = make_reference(inst, "admm")
    [(trace, report)] = compare(inst, ["gda"], StepConfig(max_iters=30_000), ref=ref)
    elapsed = time.perf_counter() - start
    final = trace.rows[-1]
    bound = 1e-3 * (1 + np.linalg.norm(ref.dual_ref))
    ok = final.dist_to_ref <= bound and len(trace.rows) <= 30_000 and elapsed < 10.0
    verdict(5, ok, f"{len(trace.rows)} steps, |lam - lam_ref| = {final.dist_to_ref:.2e} "
                   f"(bound {bound:.2e}), {report.termination.value}, {elapsed:.1f}s")


# ------------------------------------------------------------------ 6

def test_criterion_06_consensus_matches_stacked_dual_admm():
    worst_mono, worst_par = 0.0, 0.0
    for N in (1, 2, 4, 8):
        blocks = generators.random_blocks(N, 10, 6, seed=60 + N)
        A = np.vstack([a for a, _ in blocks])
        b = np.concatenate([bb for _, bb in blocks])
        serial = solve_consensus_admm(blocks, StepConfig())
        parallel = solve_consensus_admm(blocks, StepConfig(parallel=True))
        mono = solve_admm_dual_nnls(A, b, StepConfig())
        assert serial.converged and mono.converged
        worst_mono = max(worst_mono, np.linalg.norm(serial.state.x - mono.state.x))
        worst_par = max(worst_par, np.max(np.abs(serial.state.x - parallel.state.x)))
    verdict(6, worst_mono <= 1e-5 and worst_par <= 1e-12,
            f"consensus vs stacked {worst_mono:.1e}, parallel vs serial {worst_par:.1e}")


# ------------------------------------------------------------------ 7

def test_criterion_07_pdhg_closed_forms_and_prox_oracle():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        m, n = rng.integers(1, 12, size=2)
        A = rng.standard_normal((m, n))
        b = rng.standard_normal(m)
        x = np.maximum(rng.standard_normal(n), 0.0)
        y = rng.standard_normal(m)
        xbar = rng.standard_normal(n)
        tau, sigma, theta = rng.uniform(0.01, 1.0, 3)
        x1, y1, xb1 = pdhg_nnls_updates(A, b, x, y, xbar, tau, sigma, theta)
        y2 = prox(QuadLin(1.0, b), y + sigma * (A @ xbar), sigma)
        x2 = prox(IndicatorCone(NonnegOrthant(n)), x - tau * (A.T @ y2), tau)
        xb2 = x2 + theta * (x2 - x)
        worst = max(worst, np.max(np.abs(x1 - x2)), np.max(np.abs(y1 - y2)),
                    np.max(np.abs(xb1 - xb2)))

    worst_prox = 0.0
    for trial in range(50):
        n = 4
        a = rng.uniform(0.0, 3.0)
        lin = rng.standard_normal(n)
        q = 2 * rng.standard_normal(n)
        s = rng.uniform(0.1, 2.0)
        cone = None if trial % 2 == 0 else Box(-np.ones(n), np.ones(n))
        got = prox(QuadLin(a, lin, cone), q, s)
        lo, hi = (-50.0, 50.0) if cone is None else (-1.0, 1.0)
        for i in range(n):
            obj = lambda t: 0.5 * (t - q[i]) ** 2 + s * (0.5 * a * t * t + lin[i] * t)  # noqa: E731
            res = minimize_scalar(obj, bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-12, "maxiter": 2000})
            worst_prox = max(worst_prox, abs(res.x - got[i]))
    verdict(7, worst <= 1e-12 and worst_prox <= 1e-6,
            f"closed form vs generic prox {worst:.1e}, QuadLin prox vs argmin {worst_prox:.1e}")


# ------------------------------------------------------------------ 8

def test_criterion_08_diet_lp_matches_vertex_oracle():
    worst_cost, worst_gap, worst_cs = 0.0, 0.0, 0.0
    for seed in range(20):
        inst = generators.random_diet(6, 8, seed)
        best, _ = diet_vertex_oracle(inst)
        rep = lp_primal_dual(inst)
        assert rep.converged, f"seed {seed}: {rep.termination}"
        cert = rep.certificate
        cost = inst.c @ rep.state.x
        worst_cost = max(worst_cost, abs(cost - best) / max(abs(best), 1e-12))
        worst_gap = max(worst_gap, abs(cost - inst.b @ rep.state.lam) / (1 + abs(cost)))
        worst_cs = max(worst_cs, cert.compl_slack_res)
    verdict(8, worst_cost <= 1e-6 and worst_gap <= 1e-6 and worst_cs <= 1e-6,
            f"cost rel {worst_cost:.1e}, duality rel {worst_gap:.1e}, slackness {worst_cs:.1e}")


# ------------------------------------------------------------------ 9

def _grid_error_bound(inst, points: int = 201) -> float:
    """Rigorous bound on ``max - grid max``: l_inf-Lipschitz constant times half the spacing."""
    weights = np.abs(inst.c)
    for layer in reversed(inst.layers):
        weights = weights @ np.abs(layer.W)
    spacing = 2 * inst.eps / (points - 1)
    return float(weights.sum()) * spacing / 2


def _split_duals(inst, flat):
    sizes = [lo.shape[0] for lo, _ in inst.boxes[1:]]
    return np.split(flat, np.cumsum(sizes)[:-1])


def test_criterion_09_nnv_sandwich_and_soundness():
    start = time.perf_counter()
    rng = np.random.default_rng(9)
    issues, certified, tested = [], 0, 0
    for seed in range(20):
        for eps in (0.05, 0.1):
            inst = generators.random_nnv((2, 2, 1), eps, seed=seed)
            seen = []
            rep = nnv_primal_dual(inst, StepConfig(), stop_when_decided=False,
                                  observer=lambda k, st: seen.append(st.lam.copy()) if k % 100 == 0 else None)
            grid = nnv_grid_max(inst, 201)
            exact = nnv_exact_max(inst)
            primal = rep.extra["primal_value"]
            duals = [rep.extra["duals"], backprop_duals(inst, inst.x_nom)]
            duals += [_split_duals(inst, flat) for flat in seen]
            lo, hi = inst.boxes[0]
            for _ in range(5):
                duals.append(backprop_duals(inst, rng.uniform(lo, hi)))
            for _ in range(10):
                lams = [rng.standard_normal(l.shape[0]) for l, _ in inst.boxes[1:]]
                lams[-1] = -inst.c
                duals.append(lams)
            bounds = [nnv_dual_bound(inst, l) for l in duals]
            tested += len(bounds)
            if not primal <= exact + 1e-12:
                issues.append(f"seed {seed} eps {eps}: primal {primal} > exact max {exact}")
            if not primal <= grid + _grid_error_bound(inst) + 1e-12:
                issues.append(f"seed {seed} eps {eps}: primal {primal} beyond grid max {grid}")
            if not grid <= exact + 1e-12 <= min(bounds) + 2e-12:
                issues.append(f"seed {seed} eps {eps}: grid {grid}, exact {exact}, bound {min(bounds)}")
            for bnd in bounds:
                if bnd < 0:
                    certified += 1
                    if not (grid < 0 and exact < 0):
                        issues.append(f"seed {seed} eps {eps}: false certificate")
    elapsed = time.perf_counter() - start
    verdict(9, not issues and elapsed < 60.0,
            f"{tested} dual bounds checked, {certified} certifying, {elapsed:.1f}s"
            + ("; " + "; ".join(issues[:3]) if issues else ""))


# ------------------------------------------------------------------ 10

def test_criterion_10_opf_surrogate():
    inst = generators.toy_opf()
    rep = opf_primal_dual(inst)
    best, minimizers = opf_grid_oracle(inst, step=1e-3)
    dist = np.min(np.max(np.abs(minimizers - rep.state.x), axis=1))
    viol = inst.max_violation(rep.state.x)

    bind = generators.binding_line_opf()
    brep = opf_primal_dual(bind)
    current = abs(bind.currents(brep.state.x)[0])
    limit = bind.lines[0].limit
    mu = brep.state.mu[0]
    ok = (rep.converged and dist <= 1e-3 and viol <= 1e-6 and brep.converged
          and bind.max_violation(brep.state.x) <= 1e-6 and current <= limit + 1e-6 and mu > 0)
    verdict(10, ok, f"distance to grid optimum {dist:.1e}, violation {viol:.1e}; binding line "
                    f"current {current:.6f} <= {limit}, mu = {mu:.4f}")


# ------------------------------------------------------------------ 11

def test_criterion_11_laplacian_models():
    worst = 0.0
    for seed in range(20):
        n = 3 + seed % 10
        inst = generators.random_lrmp(n, seed)
        _, z, rep = lrmp_dual_solve(inst)
        assert rep.converged
        worst = max(worst, np.max(np.abs(z - lrmp_closed_form(inst))))
    two = LrmpInstance(1.0, [2.0, 0.0], [[1.0, -1.0], [-1.0, 1.0]])
    _, z2, _ = lrmp_dual_solve(two)
    err2 = np.max(np.abs(z2 - np.array([4 / 3, 2 / 3])))
    worst_gap = 0.0
    for seed in range(10):
        rep = lr_nnls_dual_solve(generators.random_lr_nnls(6, 6, seed))
        worst_gap = max(worst_gap, rep.certificate.gap)
    verdict(11, worst <= 1e-6 and err2 <= 1e-6 and worst_gap <= 1e-4,
            f"LRMP vs closed form {worst:.1e}, 2x2 error {err2:.1e}, LR-NNLS gap {worst_gap:.1e}")


# ------------------------------------------------------------------ 12

def test_criterion_12_cli_round_trip(tmp_path, capsys):
    codes = {}
    for kind in cli.PROBLEM_TYPES:
        prob, sol = tmp_path / f"{kind}.json", tmp_path / f"{kind}.sol.json"
        codes[kind] = (cli.main(["generate", "--type", kind, "--seed", "12", "--out", str(prob)]),
                       cli.main(["solve", "--problem", str(prob), "--out", str(sol)]),
                       cli.main(["certify", "--problem", str(prob), "--solution", str(sol)]))
    capsys.readouterr()

    inst = generators.random_nnls(30, 10, seed=12)
    results = compare(inst, ["pdg", "admm", "pdhg"])
    traces = [t for t, _ in results]
    path = tmp_path / "trace.csv"
    write_csv(traces, path)
    back = {t.solver: t.rows for t in read_csv(path)}
    exact = all(back[t.solver] == t.rows for t in traces)
    ok = all(c == (0, 0, 0) for c in codes.values()) and exact
    verdict(12, ok, f"exit codes {codes}, CSV parse-back exact: {exact}")


# ------------------------------------------------------------------ 3

def _nnls_weak_gap_sweep():
    """Weak duality at every recorded iterate whose (x, lam) pair is exactly feasible."""
    worst, feasible = np.inf, 0

    def watch(A, b):
        def observe(k, st):
            nonlocal worst, feasible
            if st.x is None or st.lam is None or st.lam.shape != b.shape:
                return
            if np.all(st.x >= 0) and np.all(A.T @ st.lam >= 0):
                feasible += 1
                cert = nnls_certificate(A, b, st.x, st.lam)
                worst = min(worst, cert.gap, sum(nnls_gap_terms(A, b, st.x, st.lam)))
        return observe

    for seed in range(5):
        inst = generators.random_nnls(30, 10, seed=300 + seed)
        A, b = inst.A, inst.b
        solve_pdg(A, b, StepConfig(), watch(A, b))
        solve_admm(nnls_as_split(inst), StepConfig(), watch(A, b))
        solve_admm_dual_nnls(A, b, StepConfig(), watch(A, b))
        solve_nnls_pdhg(inst, StepConfig(), watch(A, b))
        blocks = [(A[:15], b[:15]), (A[15:], b[15:])]
        solve_consensus_admm(blocks, StepConfig(), watch(A, b))
    small = generators.random_nnls(12, 5, seed=399)
    solve_gda(small.A, small.b, StepConfig(max_iters=5000), watch(small.A, small.b))
    return worst, feasible


def _diet_weak_gap_sweep():
    worst, feasible = np.inf, 0
    for seed in range(3):
        inst = generators.random_diet(6, 8, seed=310 + seed)
        m = inst.A.shape[0]

        def observe(k, st, inst=inst, m=m):
            nonlocal worst, feasible
            x, lam = st.x, st.y[:m]
            if (np.all(x >= 0) and np.all(inst.A @ x >= inst.b) and np.all(lam >= 0)
                    and np.all(inst.A.T @ lam <= inst.c)):
                feasible += 1
                worst = min(worst, inst.c @ x - inst.b @ lam)

        lp_primal_dual(inst, StepConfig(), observe)
    return worst, feasible


def test_criterion_03_certificate_soundness():
    nnls_worst, nnls_count = _nnls_weak_gap_sweep()
    diet_worst, diet_count = _diet_weak_gap_sweep()
    for seed in range(3):
        lr_nnls_dual_solve(generators.random_lr_nnls(6, 6, seed=320 + seed))
        lrmp_dual_solve(generators.random_lrmp(8, seed=330 + seed))
    reports = suite_registry.converged_convex_reports()
    with_cert = [r for r in reports if r.certificate is not None]
    bad = [r.certificate.rel_gap for r in with_cert if not r.certificate.rel_gap <= 1e-6]
    ok = (not bad and len(with_cert) == len(reports) and nnls_count > 0
          and nnls_worst >= -1e-9 and diet_worst >= -1e-9)
    verdict(3, ok, f"{len(with_cert)} converged reports, worst rel gap "
                   f"{max((r.certificate.rel_gap for r in with_cert), default=0):.1e}; "
                   f"weak gap min {min(nnls_worst, diet_worst):.1e} over {nnls_count} NNLS "
                   f"and {diet_count} LP exactly feasible iterates")
