"""Acceptance suite: one test per exit criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines and timings.
"""

import time

import numpy as np
import pytest

from conegraph import canon, linop
from conegraph.canon import (DeconvProblem, LassoProblem, build_deconv,
                             build_lasso, build_regls, deconv_dims,
                             gaussian_kernel, gen_data, gen_spike_data,
                             lasso_dims, lasso_lambda_max)
from conegraph.cg import CgSpec, cg_solve, operator_recipe
from conegraph.cones import (ConeProduct, NonNegCone, SecondOrderCone,
                             ZeroCone, contains, project)
from conegraph.scs import (ConeProblem, ScsSettings, build_scs_graph,
                           prepare_subspace, solve, subspace_project)
from oracles import (dense_embedding_matrix, fista_lasso,
                     projected_gradient_nonneg, random_operator)

LASSO_N = 50
LASSO_SEED = 3
DECONV_N = 100
DECONV_SEED = 5


def _report(name: str, detail: str = "") -> None:
    suffix = f"  [{detail}]" if detail else ""
    print(f"PASS  {name}{suffix}")


@pytest.fixture(scope="module")
def lasso_suite():
    """The three n=50 lasso instances solved once, with prox-gradient oracles."""
    runs = {}
    t0 = time.monotonic()
    for family in ("dense", "sparse", "conv"):
        A, b, _ = gen_data(family, LASSO_N, seed=LASSO_SEED)
        lam = 0.1 * lasso_lambda_max(A, b)
        prob = build_lasso(LassoProblem(A, b, lam))
        sol = solve(prob, ScsSettings(eps=1e-4, max_iters=20000))
        x_star = fista_lasso(linop.materialize_dense(A), b, lam)
        runs[family] = {
            "A": A, "b": b, "lam": lam, "sol": sol,
            "f_scs": canon.lasso_objective(A, b, lam, sol.x[:LASSO_N]),
            "f_star": canon.lasso_objective(A, b, lam, x_star),
        }
    runs["elapsed"] = time.monotonic() - t0
    return runs


def test_criterion_1_adjoint_identity_suite():
    t0 = time.monotonic()
    rng = np.random.default_rng(101)
    count = 0
    worst = 0.0
    while count < 120:
        op = random_operator(rng, max_dim=50, depth=4)
        x = rng.standard_normal(op.cols)
        y = rng.standard_normal(op.rows)
        ax = op.forward(x)
        aty = op.adjoint_apply(y)
        gap = abs(ax @ y - x @ aty)
        bound = 1e-10 * (1.0 + np.linalg.norm(ax) * np.linalg.norm(y))
        assert gap <= bound, f"adjoint identity violated: {gap} > {bound}"
        worst = max(worst, gap / bound)
        count += 1
    elapsed = time.monotonic() - t0
    assert elapsed < 10.0, f"adjoint suite took {elapsed:.1f}s"
    _report("criterion 1: adjoint identity (120 random operators)",
            f"worst ratio {worst:.2e}, {elapsed:.1f}s")


def test_criterion_2_cg_certificates():
    t0 = time.monotonic()
    rng = np.random.default_rng(202)
    slack = 1.0 + 1e-6

    for i in range(50):
        n = int(rng.integers(10, 201))
        M = rng.standard_normal((n, n)) / np.sqrt(n)
        Ad = M.T @ M + np.eye(n)
        b = rng.standard_normal(n)
        res = cg_solve(CgSpec(operator_recipe(linop.dense(Ad)), b, np.zeros(n)))
        assert res.converged, f"SPD system {i} (n={n}) did not converge"
        resid = np.linalg.norm(Ad @ res.x - b)
        assert resid <= 1e-8 * np.linalg.norm(b) * slack
        oracle = np.linalg.solve(Ad, b)
        assert (np.linalg.norm(res.x - oracle)
                <= 1e-6 * np.linalg.norm(oracle)), f"SPD oracle mismatch at {i}"

    families = (["dense"] * 7 + ["sparse"] * 7 + ["conv"] * 6)
    for i, family in enumerate(families):
        n = int(rng.integers(20, 121))
        A, b, _ = gen_data(family, n, seed=1000 + i)
        spec = build_regls(canon.RegLsProblem(A, b, 1.0))
        res = cg_solve(spec)
        assert res.converged, f"normal equations {family} n={n} did not converge"
        resid = res.x + A.adjoint_apply(A.forward(res.x)) - spec.b
        assert np.linalg.norm(resid) <= 1e-8 * np.linalg.norm(spec.b) * slack
        Ad = linop.materialize_dense(A)
        oracle = np.linalg.solve(np.eye(A.cols) + Ad.T @ Ad, spec.b)
        assert (np.linalg.norm(res.x - oracle)
                <= 1e-6 * np.linalg.norm(oracle)), f"normal-eq oracle mismatch at {i}"

    elapsed = time.monotonic() - t0
    assert elapsed < 30.0, f"CG suite took {elapsed:.1f}s"
    _report("criterion 2: CG residual certificates (50 SPD + 20 normal-eq)",
            f"{elapsed:.1f}s")


def test_criterion_3_cone_projection_properties():
    t0 = time.monotonic()
    rng = np.random.default_rng(303)
    cones = [ZeroCone(6), NonNegCone(6), SecondOrderCone(6)]
    for cone in cones:
        for _ in range(1000):
            v = 3.0 * rng.standard_normal(cone.dim)
            w = 3.0 * rng.standard_normal(cone.dim)
            pv, pw = project(cone, v), project(cone, w)
            assert np.max(np.abs(project(cone, pv) - pv)) <= 1e-12
            assert np.linalg.norm(pv - pw) <= np.linalg.norm(v - w) + 1e-12
            if not isinstance(cone, ZeroCone):  # self-dual factors
                assert np.max(np.abs((pv - project(cone, -v)) - v)) <= 1e-12
            assert contains(cone, pv, 1e-9)
    elapsed = time.monotonic() - t0
    assert elapsed < 5.0, f"cone suite took {elapsed:.1f}s"
    _report("criterion 3: cone projection properties (3x1000 points)",
            f"{elapsed:.1f}s")


def test_criterion_4_subspace_projection_oracle():
    rng = np.random.default_rng(404)
    for i in range(20):
        n = int(rng.integers(1, 11))
        m = int(rng.integers(1, 11))
        prob = ConeProblem(linop.dense(rng.standard_normal((m, n))),
                           rng.standard_normal(m), rng.standard_normal(n),
                           ConeProduct([NonNegCone(m)]))
        cached = prepare_subspace(prob)
        M = dense_embedding_matrix(prob)
        w = rng.standard_normal(n + m + 1)
        out = subspace_project(w, cached)
        oracle = np.linalg.solve(M, w)
        err = np.linalg.norm(out - oracle) / max(np.linalg.norm(oracle), 1e-30)
        assert err <= 1e-6, f"problem {i} (n={n}, m={m}): error {err:.2e}"
    _report("criterion 4: subspace projection vs dense factorization (20 problems)")


def test_criterion_5_lasso_end_to_end(lasso_suite):
    t0 = time.monotonic()
    for family in ("dense", "sparse", "conv"):
        run = lasso_suite[family]
        rel = abs(run["f_scs"] - run["f_star"]) / abs(run["f_star"])
        assert rel <= 1e-2, f"{family}: objective off by {rel:.2e}"

    # at lam = ||A'b||_inf the solution is zero and the objective 0.5*||b||^2
    for family in ("dense", "sparse", "conv"):
        A, b = lasso_suite[family]["A"], lasso_suite[family]["b"]
        lam_max = lasso_lambda_max(A, b)
        x_star = fista_lasso(linop.materialize_dense(A), b, lam_max)
        assert np.max(np.abs(x_star)) <= 1e-8
        prob = build_lasso(LassoProblem(A, b, lam_max))
        sol = solve(prob, ScsSettings(eps=1e-4, max_iters=20000))
        f_scs = canon.lasso_objective(A, b, lam_max, sol.x[:LASSO_N])
        target = 0.5 * float(b @ b)
        assert abs(f_scs - target) <= 1e-2 * target

    elapsed = time.monotonic() - t0 + lasso_suite["elapsed"]
    assert elapsed < 60.0, f"lasso suite took {elapsed:.1f}s"
    _report("criterion 5: lasso end-to-end vs prox-gradient oracle",
            f"3 families + lam_max variants, {elapsed:.1f}s")


def test_criterion_6_deconvolution_end_to_end():
    c, b, _ = gen_spike_data(DECONV_N, seed=DECONV_SEED)
    prob = build_deconv(DeconvProblem(c, b))
    assert prob.dims == (101, 300)
    sol = solve(prob, ScsSettings(eps=1e-4, max_iters=20000))
    f_scs = canon.deconv_objective(c, b, sol.x[:DECONV_N])
    Cd = linop.materialize_dense(linop.conv1d(c, DECONV_N))
    x_star = projected_gradient_nonneg(Cd, b)
    f_star = canon.deconv_objective(c, b, x_star)
    rel = abs(f_scs - f_star) / abs(f_star)
    assert rel <= 1e-2, f"objective off by {rel:.2e}"

    # noiseless variant: the true signal is feasible with objective zero
    rng = np.random.default_rng(3)
    x_hat = np.zeros(DECONV_N)
    x_hat[rng.choice(DECONV_N, 5, replace=False)] = rng.uniform(0, 10.0, 5)
    b0 = linop.conv_full(c, x_hat)
    sol0 = solve(build_deconv(DeconvProblem(c, b0)),
                 ScsSettings(eps=1e-4, max_iters=40000))
    f0 = canon.deconv_objective(c, b0, sol0.x[:DECONV_N])
    assert f0 <= 1e-3, f"noiseless objective {f0:.2e}"
    _report("criterion 6: deconvolution end-to-end",
            f"noisy rel {rel:.2e}, noiseless objective {f0:.2e}")


def test_criterion_7_stuffed_dimension_table():
    entries = []
    A = linop.dense(np.zeros((6000, 3000)))
    entries.append(build_lasso(LassoProblem(A, np.zeros(6000), 1.0)).dims)
    import scipy.sparse
    S = linop.sparse_csc(scipy.sparse.csc_matrix((6000, 3000)))
    entries.append(build_lasso(LassoProblem(S, np.zeros(6000), 1.0)).dims)
    C = linop.conv1d(gaussian_kernel(3000), 3000)
    entries.append(build_lasso(LassoProblem(C, np.zeros(5999), 1.0)).dims)
    for n in (100, 1000, 10000):
        kern = gaussian_kernel(n)
        entries.append(build_deconv(DeconvProblem(kern, np.zeros(2 * n - 1))).dims)
    assert entries == [(6001, 12002), (6001, 12002), (6001, 12001),
                       (101, 300), (1001, 3000), (10001, 30000)]
    # and the closed-form dimension rules they instantiate
    assert lasso_dims(3000, 6000) == (6001, 12002)
    assert lasso_dims(3000, 5999) == (6001, 12001)
    assert deconv_dims(100) == (101, 300)
    _report("criterion 7: all six stuffed-size table entries reproduced")


def test_criterion_8_matrix_free_scaling():
    n = 100_000
    c, b, _ = gen_spike_data(n, seed=8)
    t0 = time.monotonic()
    prob = build_deconv(DeconvProblem(c, b))
    graph = build_scs_graph(prob, ScsSettings(eps=1e-3, max_iters=100))
    build_time = time.monotonic() - t0
    assert build_time < 5.0, f"graph build took {build_time:.2f}s"
    # operator storage stays linear in n: no Toeplitz materialization
    nbytes = linop.storage_nbytes(prob.A)
    assert nbytes <= 64 * n, f"operator holds {nbytes} bytes"
    assert len(graph.nodes) < 500

    A = linop.dense(np.zeros((6000, 3000)))
    lasso = build_lasso(LassoProblem(A, np.zeros(6000), 1.0))
    assert linop.nnz_estimate(lasso.A) == 18_012_002
    _report("criterion 8: matrix-free scaling",
            f"n=1e5 build {build_time:.2f}s, operator {nbytes / 8 / n:.1f} floats/n")


def test_criterion_9_average_cg_iterations(lasso_suite):
    worst = 0.0
    for family in ("dense", "sparse", "conv"):
        sol = lasso_suite[family]["sol"]
        assert sol.avg_cg_iterations <= 10.0, (
            f"{family}: avg CG {sol.avg_cg_iterations:.2f}")
        worst = max(worst, sol.avg_cg_iterations)
    _report("criterion 9: average CG iterations per splitting iteration <= 10",
            f"worst {worst:.2f}")
