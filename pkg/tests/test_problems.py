import numpy as np
import pytest

from pdkit.errors import (DimensionMismatch, InfeasibleStart, SingularComposite, SpecMismatch,
                          Unsupported)
from pdkit.problems import generators
from pdkit.problems.diet import DietInstance, diet_vertex_oracle, lp_primal_dual
from pdkit.problems.lrmp import (LrmpInstance, LrNnlsInstance, lr_nnls_dual_solve,
                                 lrmp_closed_form, lrmp_dual_solve, lrmp_dual_value)
from pdkit.problems.nnls import (NnlsInstance, nnls_active_set_oracle, nnls_as_saddle,
                                 solve_nnls_pdhg)
from pdkit.problems.nnv import (IDENTITY, RELU, Layer, NnvInstance, backprop_duals,
                                interval_bounds, nnv_dual_bound, nnv_exact_max, nnv_grid_max,
                                nnv_primal_dual)
from pdkit.problems.opf import opf_certificate, opf_grid_oracle, opf_primal_dual
from pdkit.solvers import SplitProblem, StepConfig, solve_admm, solve_pdg, solve_pdhg

B2 = np.array([1.0, -1.0])


# ------------------------------------------------------------------ NNLS

def test_nnls_saddle_examples():
    rep = solve_pdhg(nnls_as_saddle(NnlsInstance(np.eye(2), B2)))
    assert np.allclose(rep.state.x, [1.0, 0.0], atol=1e-7)
    rep = solve_pdhg(nnls_as_saddle(NnlsInstance(np.eye(2), np.zeros(2))))
    assert np.allclose(rep.state.x, 0) and np.allclose(rep.state.y, 0)


def test_three_solvers_agree():
    inst = generators.random_nnls(30, 10, seed=21)
    xs = [solve_nnls_pdhg(inst).state.x, solve_admm(SplitProblem(inst.A, inst.b)).state.x,
          solve_pdg(inst.A, inst.b).state.x]
    for a in xs:
        for b in xs:
            assert np.linalg.norm(a - b) <= 1e-5


def test_oracle_examples():
    x, lam, mu = nnls_active_set_oracle(NnlsInstance(np.eye(2), B2))
    assert np.array_equal(x, [1.0, 0.0]) and np.allclose(lam, [0.0, 1.0])
    x, _, _ = nnls_active_set_oracle(NnlsInstance(np.eye(3), [-1.0, 0.0, -2.0]))
    assert np.array_equal(x, np.zeros(3))
    with pytest.raises(ValueError):
        nnls_active_set_oracle(generators.random_nnls(20, 17, seed=0))


def test_oracle_lower_bounds_long_pdg_run():
    inst = generators.random_nnls(20, 8, seed=22)
    x, _, _ = nnls_active_set_oracle(inst)
    rep = solve_pdg(inst.A, inst.b, StepConfig(max_iters=1_000_000))
    assert inst.objective(x) <= inst.objective(rep.state.x) + 1e-9


def test_oracle_agrees_with_scipy_nnls():
    from scipy.optimize import nnls
    for seed in range(5):
        inst = generators.random_nnls(15, 7, seed)
        assert np.allclose(nnls_active_set_oracle(inst)[0], nnls(inst.A, inst.b)[0], atol=1e-9)


# ------------------------------------------------------------------ diet

def test_diet_one_food():
    inst = DietInstance([2.0], [[1.0]], [3.0])
    rep = lp_primal_dual(inst)
    assert rep.converged
    assert rep.state.x == pytest.approx([3.0], abs=1e-7)
    assert rep.state.lam == pytest.approx([2.0], abs=1e-7)
    assert diet_vertex_oracle(inst)[0] == pytest.approx(6.0)


def test_diet_no_requirements():
    inst = DietInstance([1.0, 2.0], [[1.0, 1.0]], [0.0])
    rep = lp_primal_dual(inst)
    assert np.allclose(rep.state.x, 0, atol=1e-8) and inst.c @ rep.state.x == pytest.approx(0, abs=1e-8)


def test_diet_random_matches_oracle_and_scipy():
    from scipy.optimize import linprog
    inst = generators.random_diet(6, 8, seed=23)
    best, _ = diet_vertex_oracle(inst)
    ref = linprog(inst.c, A_ub=-inst.A, b_ub=-inst.b, bounds=[(0, None)] * 8, method="highs")
    assert best == pytest.approx(ref.fun, rel=1e-9)
    assert inst.c @ lp_primal_dual(inst).state.x == pytest.approx(best, rel=1e-6)


def test_diet_validation():
    with pytest.raises(ValueError):
        DietInstance([1.0], [[-1.0]], [1.0])
    with pytest.raises(ValueError):
        DietInstance([1.0], [[0.0]], [1.0])
    with pytest.raises(DimensionMismatch):
        DietInstance([1.0, 1.0], [[1.0]], [1.0])


# ------------------------------------------------------------------ NNV

def _constant_net(w0, c, d):
    return NnvInstance((Layer(np.zeros((2, 2)), w0, RELU),), np.zeros(2), 0.3, c, d)


def test_constant_network_bound_is_exact():
    inst = _constant_net(np.array([0.5, -0.7]), np.array([1.0, 2.0]), -0.2)
    exact = -0.2 + 0.5
    lams = [np.zeros(2), -inst.c]
    assert nnv_dual_bound(inst, lams) == pytest.approx(exact)
    rep = nnv_primal_dual(inst)
    assert rep.iterations <= 2 and rep.extra["primal_value"] == pytest.approx(exact)


def test_zero_spec_certifies():
    inst = _constant_net(np.ones(2), np.zeros(2), -1.0)
    assert nnv_dual_bound(inst, [np.zeros(2), np.zeros(2)]) == -1.0
    assert nnv_primal_dual(inst).extra["certified"]


def test_last_multiplier_must_match_spec():
    inst = _constant_net(np.ones(2), np.ones(2), 0.0)
    with pytest.raises(SpecMismatch):
        nnv_dual_bound(inst, [np.zeros(2), np.zeros(2)])
    with pytest.raises(DimensionMismatch):
        nnv_dual_bound(inst, [np.zeros(2)])


def test_linear_spec_reaches_box_corner():
    inst = NnvInstance((Layer([[1.0]], [0.0], IDENTITY),), [0.0], 1.0, [1.0], 0.0)
    rep = nnv_primal_dual(inst, stop_when_decided=False)
    assert rep.state.x == pytest.approx([1.0]) and rep.extra["primal_value"] == pytest.approx(1.0)


def test_random_duals_bound_grid_max():
    inst = generators.random_nnv((2, 2, 1), 0.1, seed=24)
    grid = nnv_grid_max(inst)
    rng = np.random.default_rng(0)
    for _ in range(50):
        lams = [rng.standard_normal(lo.shape[0]) * 3 for lo, _ in inst.boxes[1:]]
        lams[-1] = -inst.c
        assert nnv_dual_bound(inst, lams) >= grid - 1e-12


def test_sandwich_on_one_net():
    inst = generators.random_nnv((2, 2, 1), 0.1, seed=25)
    rep = nnv_primal_dual(inst, stop_when_decided=False)
    exact = nnv_exact_max(inst)
    assert rep.extra["primal_value"] <= exact + 1e-12
    assert nnv_grid_max(inst) <= exact + 1e-12 <= rep.extra["dual_bound"] + 2e-12


def test_backprop_duals_give_valid_bound_and_margin_generator():
    inst = generators.random_nnv((2, 3, 1), 0.05, seed=26, margin=0.2)
    bound = nnv_dual_bound(inst, backprop_duals(inst, inst.x_nom))
    assert bound == pytest.approx(-0.2)
    assert nnv_grid_max(inst) <= bound


def test_interval_bounds_contain_samples():
    inst = generators.random_nnv((2, 3, 3, 1), 0.2, seed=27)
    rng = np.random.default_rng(1)
    lo0, hi0 = inst.boxes[0]
    for _ in range(200):
        xs = inst.forward(rng.uniform(lo0, hi0))
        for v, (lo, hi) in zip(xs, inst.boxes):
            assert np.all(v >= lo - 1e-12) and np.all(v <= hi + 1e-12)
    again = interval_bounds(inst.stages, lo0, hi0)
    assert all(np.array_equal(a[0], b[0]) for a, b in zip(again, inst.boxes))


def test_oracles_reject_unsupported_nets():
    deep = generators.random_nnv((2, 2, 2, 1), 0.1, seed=28)
    with pytest.raises(Unsupported):
        nnv_exact_max(deep)
    wide = generators.random_nnv((3, 2, 1), 0.1, seed=28)
    with pytest.raises(Unsupported):
        nnv_grid_max(wide)


# ------------------------------------------------------------------ OPF

def test_opf_zero_demand():
    inst = generators.toy_opf(demand=0.0)
    rep = opf_primal_dual(inst)
    v = rep.state.x
    assert rep.converged and abs(v[0] - v[1]) <= 1e-6 and inst.loss(v) <= 1e-10
    assert np.allclose(rep.state.lam, 0, atol=1e-6)


def test_opf_feasible_two_bus():
    inst = generators.toy_opf(demand=0.05)
    rep = opf_primal_dual(inst)
    assert inst.max_violation(rep.state.x) <= 1e-6
    assert rep.certificate.stationarity_res <= 1e-4
    # the optimum puts bus 2 at the upper bound and meets the load exactly
    assert rep.state.x == pytest.approx([1.1 - 0.05 / 1.1, 1.1], abs=1e-6)
    best, pts = opf_grid_oracle(inst)
    assert inst.loss(rep.state.x) <= best + 1e-6


def test_opf_binding_line():
    inst = generators.binding_line_opf()
    rep = opf_primal_dual(inst)
    cur = abs(inst.currents(rep.state.x)[0])
    assert cur <= inst.lines[0].limit + 1e-6 and rep.state.mu[0] > 0
    assert rep.state.x == pytest.approx([1.0, 1.1], abs=1e-5)
    cert = opf_certificate(inst, rep.state.x, rep.state.lam, rep.extra["gamma"], rep.state.mu)
    assert cert.primal_feas_res <= 1e-6


def test_opf_start_outside_box():
    with pytest.raises(InfeasibleStart):
        opf_primal_dual(generators.toy_opf(), v0=[1.5, 1.0])


def test_opf_larger_path_network():
    inst = generators.random_opf(4, seed=29)
    rep = opf_primal_dual(inst)
    assert rep.converged and inst.max_violation(rep.state.x) <= 1e-6


# ------------------------------------------------------------------ Laplacian models

L2 = np.array([[1.0, -1.0], [-1.0, 1.0]])


def test_lrmp_closed_form_examples():
    assert np.allclose(lrmp_closed_form(LrmpInstance(1.0, [2.0, 0.0], L2)), [4 / 3, 2 / 3])
    y = np.array([1.0, -2.0, 0.5])
    assert np.allclose(lrmp_closed_form(LrmpInstance(1.0, y, np.zeros((3, 3)))), y)
    big = LrmpInstance(1e6, y, generators.random_connected_laplacian(3, seed=0))
    assert np.max(np.abs(lrmp_closed_form(big) - y)) <= 1e-5


def test_lrmp_dual_examples():
    inst = LrmpInstance(1.0, [2.0, 0.0], L2)
    lam, z, rep = lrmp_dual_solve(inst)
    assert np.max(np.abs(z - [4 / 3, 2 / 3])) <= 1e-8
    assert rep.certificate.gap == pytest.approx(0.0, abs=1e-10)
    assert lrmp_dual_value(inst, lam) == pytest.approx(inst.objective(z), abs=1e-10)
    const = LrmpInstance(0.7, np.full(4, 1.5), generators.random_connected_laplacian(4, seed=1))
    _, z, _ = lrmp_dual_solve(const)
    assert np.allclose(z, 1.5)
    lam, z, _ = lrmp_dual_solve(LrmpInstance(1.0, np.zeros(2), L2))
    assert np.array_equal(lam, [0.0, 0.0]) and np.array_equal(z, [0.0, 0.0])


def test_lr_nnls_ridge_case_against_grid():
    inst = LrNnlsInstance([[1.0]], [-1.0], [[1.0]])
    rep = lr_nnls_dual_solve(inst)
    grid = np.linspace(0, 3, 300001)
    best = grid[np.argmin(0.5 * (grid + 1) ** 2 + 0.5 * grid**2)]
    assert rep.state.x == pytest.approx([best], abs=1e-5)


def test_lr_nnls_interior_closed_form():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((6, 4))
    L = generators.random_connected_laplacian(4, seed=2)
    x_t = rng.uniform(0.5, 1.5, 4)
    b = A @ np.linalg.solve(A.T @ A, (A.T @ A + L) @ x_t)
    rep = lr_nnls_dual_solve(LrNnlsInstance(A, b, L))
    assert np.allclose(rep.state.x, np.linalg.solve(A.T @ A + L, A.T @ b), atol=1e-6)


def test_lr_nnls_gap_on_random_instances():
    for seed in range(3):
        rep = lr_nnls_dual_solve(generators.random_lr_nnls(6, 6, seed=40 + seed))
        assert rep.certificate.gap <= 1e-4


def test_lr_nnls_singular_composite():
    with pytest.raises(SingularComposite):
        lr_nnls_dual_solve(LrNnlsInstance([[1.0, -1.0]], [1.0], L2))


def test_generators_are_deterministic():
    a, b = generators.random_nnls(5, 3, seed=9), generators.random_nnls(5, 3, seed=9)
    assert np.array_equal(a.A, b.A) and np.array_equal(a.b, b.b)
    L = generators.random_connected_laplacian(7, seed=3)
    assert np.allclose(L @ np.ones(7), 0) and np.linalg.matrix_rank(L) == 6
