import math

import numpy as np
import pytest
import scipy.linalg as sla

from sausagelab import space as S
from sausagelab import spectral as P


def generator(g):
    """Dense -Delta as a rate matrix (independent of the package's symmetric form)."""
    W = g.conductance_matrix.toarray()
    Q = W / g.measure[:, None]
    np.fill_diagonal(Q, -W.sum(axis=1) / g.measure)
    return Q


def kernel_oracle(g, t):
    return sla.expm(t * generator(g)) / g.measure[None, :]


# -- operator -------------------------------------------------------------

def test_self_adjoint_and_form_consistency(rng):
    for _ in range(5):
        g = S.random_connected(int(rng.integers(5, 40)), rng, measure="random")
        for _ in range(20):
            f, h = rng.standard_normal((2, g.n))
            lhs = P.inner(g, P.laplacian_apply(g, f), h)
            rhs = P.inner(g, f, P.laplacian_apply(g, h))
            nf = math.sqrt(P.inner(g, f, f))
            nh = math.sqrt(P.inner(g, h, h))
            assert abs(lhs - rhs) <= 1e-12 * nf * nh * g.n
            E = P.dirichlet_form(g, f)
            assert P.inner(g, P.laplacian_apply(g, f), f) == pytest.approx(E, rel=1e-12, abs=1e-12)
            assert P.inner(g, P.gradient_sq(g, f), np.ones(g.n)) == pytest.approx(E, rel=1e-12)
        assert P.dirichlet_form(g, np.ones(g.n)) == 0.0


def test_spectrum_nonnegative(small_random):
    vals = P.spectrum(small_random)
    assert vals.min() > -1e-12
    assert abs(vals[0]) < 1e-12


# -- eigenvalues ------------------------------------------------------------

def test_single_vertex_eigenvalue(small_random):
    g = small_random
    for v in (0, 5, 11):
        assert P.dirichlet_eigenvalue(g, [v]).value == pytest.approx(g.weighted_degree[v] / g.measure[v])


def test_two_adjacent_interior_unit_measure():
    g = S.path_graph(6, measure="unit")
    r = P.dirichlet_eigenvalue(g, [2, 3])
    assert r.value == pytest.approx(1.0, abs=1e-12)  # [[2,-1],[-1,2]]
    assert r.residual < 1e-10


def test_empty_domain_error(small_random):
    with pytest.raises(P.SpectralError):
        P.dirichlet_eigenvalue(small_random, [])


def test_domain_monotonicity(rng):
    g = S.random_connected(50, rng, extra=0.08, measure="random")
    for _ in range(100):
        Up = S.random_connected_subset(g, int(rng.integers(2, 50)), rng)
        U = Up[rng.random(len(Up)) < 0.6]
        if len(U) == 0:
            continue
        assert P.dirichlet_eigenvalue(g, U).value >= P.dirichlet_eigenvalue(g, Up).value - 1e-10


def test_full_space_killed_is_zero(small_random):
    assert P.dirichlet_eigenvalue(small_random, np.arange(small_random.n)).value == pytest.approx(0, abs=1e-10)


def test_proper_subset_positive(small_random):
    assert P.dirichlet_eigenvalue(small_random, np.arange(small_random.n - 1)).value > 0


def test_lanczos_branch_matches_dense(monkeypatch):
    g = S.lattice_box(2, 30)
    U = S.ball(g, 465, 12)
    dense = P.dirichlet_eigenvalue(g, U)
    monkeypatch.setattr(P, "DENSE_CAP", 10)
    sparse = P.dirichlet_eigenvalue(g, U)
    assert sparse.method == "shift-invert-lanczos"
    assert sparse.value == pytest.approx(dense.value, rel=1e-9)


def test_eigenfunction_witness_rayleigh(small_random):
    g = small_random
    U = np.arange(3, 15)
    r = P.dirichlet_eigenvalue(g, U)
    f = np.zeros(g.n)
    f[r.domain] = r.eigenfunction
    assert P.inner(g, f, f) == pytest.approx(1.0)
    assert P.dirichlet_form(g, f) == pytest.approx(r.value, rel=1e-9)


# -- heat kernel ------------------------------------------------------------

def test_t0_identity(small_random):
    g = small_random
    hk = P.HeatKernel(g)
    for x, y in ((0, 0), (0, 3), (4, 4)):
        assert hk.value(0.0, x, y) == pytest.approx((x == y) / g.measure[x])
    assert P.heat_kernel(g, 0.0, 2, 2) == pytest.approx(1 / g.measure[2])


def test_negative_time_error(small_random):
    with pytest.raises(P.SpectralError):
        P.heat_kernel(small_random, -1.0, 0, 0)
    with pytest.raises(P.SpectralError):
        P.killed_kernel(small_random, [0, 1], -0.1, 0, 0)


def test_two_vertex_closed_form():
    w, ma, mb = 1.7, 0.6, 2.3
    g = S.explicit([(0, 1, w)], measure=[ma, mb])
    lam = w / ma + w / mb
    for t in (0.1, 0.5, 2.0):
        e = math.exp(-lam * t)
        paa = (ma + mb * e) / (ma + mb)
        pab = mb * (1 - e) / (ma + mb)
        assert P.heat_kernel(g, t, 0, 0) == pytest.approx(paa / ma, rel=1e-12)
        assert P.heat_kernel(g, t, 0, 1) == pytest.approx(pab / mb, rel=1e-12)


def test_semigroup_random50(rng):
    g = S.random_connected(50, rng, measure="random")
    hk = P.HeatKernel(g)
    comp = hk.matrix(0.3) @ np.diag(g.measure) @ hk.matrix(0.7)
    assert np.max(np.abs(comp - kernel_oracle(g, 1.0))) <= 1e-10


def test_krylov_mode_matches_dense(small_random):
    g = small_random
    f = np.random.default_rng(0).standard_normal(g.n)
    d = P.HeatKernel(g, mode="dense").apply(1.3, f)
    k = P.HeatKernel(g, mode="krylov").apply(1.3, f)
    assert np.linalg.norm(d - k) <= 1e-10 * np.linalg.norm(f)
    assert P.HeatKernel(g, mode="krylov").value(0.8, 2, 5) == pytest.approx(
        P.HeatKernel(g).value(0.8, 2, 5), rel=1e-9)


def test_semigroup_apply_matches_oracle(small_random):
    g = small_random
    f = np.arange(g.n, dtype=float)
    expect = sla.expm(0.9 * generator(g)) @ f
    assert np.allclose(P.heat_semigroup_apply(g, 0.9, f), expect, atol=1e-10)


def test_killed_kernel_properties(small_random):
    g = small_random
    U = np.arange(g.n)
    assert P.killed_kernel(g, U, 0.7, 1, 4) == pytest.approx(P.heat_kernel(g, 0.7, 1, 4), rel=1e-10)
    V = np.arange(2, 14)
    assert P.killed_kernel(g, V, 0.0, 3, 3) == pytest.approx(1 / g.measure[3])
    Kv = P.HeatKernel(g, V).matrix(1.1)
    K = P.HeatKernel(g).matrix(1.1)[np.ix_(V, V)]
    assert Kv.min() >= -1e-12 and np.all(Kv <= K + 1e-12)
    with pytest.raises(P.SpectralError):
        P.killed_kernel(g, V, 1.0, 0, 3)


def test_log_survival_matches_mass_and_tiny_values():
    g = S.path_graph(41)
    U = np.arange(15, 26)
    hk = P.HeatKernel(g, U)
    for s in (0.5, 3.0, 20.0):
        assert P.log_survival(g, U, 20, s) == pytest.approx(math.log(hk.mass(s, 20)), rel=1e-9)
    # far below double range, still finite and linear in s
    a, b = P.log_survival(g, U, 20, 1e5), P.log_survival(g, U, 20, 2e5)
    lam = P.dirichlet_eigenvalue(g, U).value
    assert b - a == pytest.approx(-1e5 * lam, rel=1e-9)
    assert P.log_survival(g, U, 3, 1.0) == -math.inf


def test_dynkin_hunt_trivial_cases(path21):
    r = P.dynkin_hunt_residual(path21, np.arange(21), 1.0, 10, 11, 2000, seed=1)
    assert r.expectation == 0.0 and r.residual < 1e-12
    r = P.dynkin_hunt_residual(path21, np.arange(5, 16), 0.01, 10, 10, 2000, seed=1)
    assert r.exit_fraction == 0.0 and r.residual <= 3 * r.se + 1e-12


# -- Poincare and Thirring ------------------------------------------------------

def test_poincare_two_vertex():
    w = 2.5
    g = S.explicit([(0, 1, w)], measure="unit")
    res = P.poincare_constant(g, 0, 1.0, 2.0)
    assert res.lambda_n == pytest.approx(2 * w)
    assert res.c_pi == pytest.approx(1 / (1.0 ** 2 * 2 * w))


def test_poincare_constant_function_and_random(rng):
    g = S.random_connected(60, rng, extra=0.05)
    B = S.ball(g, 0, 3)
    if len(B) < 40:
        B = S.random_connected_subset(g, 40, rng)
    res = P.poincare_constant(g, 0, 3.0, 2.0, vertices=B)
    lhs, rhs = P.poincare_sides(g, B, np.ones(len(B)))
    assert lhs == pytest.approx(0, abs=1e-20) and rhs == 0
    for _ in range(500):
        f = rng.standard_normal(len(B))
        lhs, rhs = P.poincare_sides(g, B, f)
        assert lhs <= res.c_pi * 3.0 ** 2 * rhs * (1 + 1e-9)
    lhs, rhs = P.poincare_sides(g, B, res.witness)
    assert lhs == pytest.approx(res.c_pi * 9 * rhs, rel=1e-8)


def test_poincare_disconnected_ball_error():
    g = S.path_graph(9)
    with pytest.raises(P.SpectralError, match="components"):
        P.poincare_constant(g, 0, 1.0, 2.0, vertices=[0, 1, 5, 6])


def test_thirring_edge_cases(small_random):
    g = small_random
    U = S.random_connected_subset(g, 12, np.random.default_rng(1))
    r = P.thirring_bound(g, U, [])
    assert r.rhs == 0 and r.holds
    r = P.thirring_bound(g, U, U)
    assert r.lambda_a == math.inf and r.holds


def test_thirring_random(rng):
    for _ in range(100):
        g = S.random_connected(int(rng.integers(2, 40)), rng, measure="random")
        U = S.random_connected_subset(g, int(rng.integers(1, g.n + 1)), rng)
        A = U[rng.random(len(U)) < rng.random()]
        assert P.thirring_bound(g, U, A).holds


# -- net bound ----------------------------------------------------------------

def test_net_bound_empty_and_full_obstacles():
    g = S.lattice_box(2, 11)
    net = S.build_net(g, 3)
    r = P.net_eigenvalue_lower_bound(g, np.arange(g.n), net, 2.0, [])
    assert r.bound == 0 and r.vacuous and r.holds
    r = P.net_eigenvalue_lower_bound(g, np.arange(g.n), net, 2.0, np.arange(g.n))
    assert r.bound == math.inf and r.lambda_direct == math.inf and r.holds


def test_net_bound_random_configs(rng):
    g = S.lattice_box(2, 15)
    net = S.build_net(g, 3)
    for _ in range(10):
        obs = np.flatnonzero(rng.random(g.n) < 0.3)
        r = P.net_eigenvalue_lower_bound(g, np.arange(g.n), net, 2.0, obs)
        assert r.holds and r.bound > 0


def test_eigenvalue_scaling_path():
    g = S.path_graph(201)
    vals = P.eigenvalue_scaling(g, 100, [4, 8, 16, 32], 2.0)
    # continuum limit: lambda(B(x, r)) r^2 -> pi^2 / 8 with unit rates
    assert vals[-1] == pytest.approx(math.pi ** 2 / 8, rel=0.1)


# -- GE fit ---------------------------------------------------------------------

def test_ge_fit_guards():
    g = S.complete_graph(2)
    with pytest.raises(P.GEFitError, match="finite-size"):
        P.fit_ge_beta(g, [0], [1, 10, 100])
    with pytest.raises(P.GEFitError, match="decade"):
        P.fit_ge_beta(S.lattice_box(2, 31), [480], [1, 2, 4])


def test_ge_fit_small_lattice():
    g = S.lattice_box(2, 41)
    fit = P.fit_ge_beta(g, [20 * 41 + 20], np.geomspace(1, 25, 20))
    assert 1.8 <= fit.beta <= 2.2
    assert fit.c_lower <= fit.C_upper
    assert 0 <= fit.violation_fraction <= 1
