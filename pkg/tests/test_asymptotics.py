import itertools
import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from sausagelab import asymptotics as A
from sausagelab import obstacles as O
from sausagelab import space as S
from sausagelab._core import compiled, fallback


def brute_moment(g, x, s, nu, eps):
    """E^x[exp(-nu mu(C_s^eps))] from the (position, visited set) chain via expm."""
    n = g.n
    W = g.conductance_matrix.toarray()
    states = [(v, m) for m in range(1, 1 << n) for v in range(n) if m >> v & 1]
    idx = {st_: i for i, st_ in enumerate(states)}
    Q = np.zeros((len(states), len(states)))
    for (v, m), i in idx.items():
        for u in range(n):
            if W[v, u] > 0:
                r = W[v, u] / g.measure[v]
                Q[i, idx[(u, m | 1 << u)]] += r
                Q[i, i] -= r
    p0 = np.zeros(len(states))
    p0[idx[(x, 1 << x)]] = 1.0
    p = p0 @ sla.expm(s * Q)
    D = g.dist_matrix() if hasattr(g, "dist_matrix") else np.array([g.dist_from(v) for v in range(n)])
    out = 0.0
    for (v, m), i in idx.items():
        vis = [u for u in range(n) if m >> u & 1]
        cover = np.any(D[vis] <= eps + 1e-12, axis=0)
        out += p[i] * math.exp(-nu * g.measure[cover].sum())
    return out


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.3, 3.0), min_size=1, max_size=5), st.data(),
       st.floats(0.0, 3.0), st.floats(0.05, 2.0), st.sampled_from([0.0, 1.0, 2.5]))
def test_dp_matches_brute_force(ws, data, s, nu, eps):
    g = S.explicit([(i, i + 1, w) for i, w in enumerate(ws)])
    x = data.draw(st.integers(0, g.n - 1))
    oracle = brute_moment(g, x, s, nu, eps)
    for be in filter(None, (compiled, fallback)):
        r = A.exact_interval_dp(g, x, s, nu, eps, backend=be)
        assert r.value == pytest.approx(oracle, rel=1e-9, abs=1e-300)


def test_dp_two_vertex_closed_form():
    g = S.explicit([(0, 1, 2.0)], measure=[1.0, 3.0])
    assert A.exact_interval_dp(g, 0, 1.3, 0.4, 0.0).value == pytest.approx(
        O.two_vertex_moment(2.0, 1.0, 3.0, 1.3, 0.4), rel=1e-12)


def test_dp_s_zero(path21):
    for eps in (0.0, 2.0):
        r = A.exact_interval_dp(path21, 10, 0.0, 0.3, eps)
        assert r.value == pytest.approx(math.exp(-0.3 * S.volume(path21, 10, eps)), rel=1e-12)


def test_dp_decreasing_in_nu_and_s(path21):
    vals = [A.exact_interval_dp(path21, 10, 3.0, nu, 1.0).value for nu in (0.0, 0.1, 0.5, 1.0)]
    assert vals[0] == 1.0 and np.all(np.diff(vals) < 0)
    vals = [A.exact_interval_dp(path21, 10, s, 0.3, 1.0).value for s in (0.5, 2.0, 8.0)]
    assert np.all(np.diff(vals) < 0)


def test_dp_truncation_reported():
    g = S.path_graph(401)
    r = A.exact_interval_dp(g, 200, 50.0, 0.5, 0.0)
    assert r.width_cap < 400 and r.error_bound <= 1e-10 * r.value
    full = A.exact_interval_dp(g, 200, 50.0, 0.5, 0.0, width=400)
    assert r.log_value == pytest.approx(full.log_value, rel=1e-10)


def test_dp_rejects_non_path_and_negative_s(path21):
    with pytest.raises(S.SpaceError):
        A.exact_interval_dp(S.lattice_box(2, 4), 0, 1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        A.exact_interval_dp(path21, 0, -1.0, 1.0, 0.0)


def test_path_order_shuffled_labels():
    g = S.explicit([(3, 0, 1.0), (0, 2, 1.0), (2, 1, 1.0)])
    order = A.path_order(g)
    assert list(order) in ([3, 0, 2, 1], [1, 2, 0, 3])
    assert A.exact_interval_dp(g, 0, 1.0, 0.5, 0.0).value == pytest.approx(brute_moment(g, 0, 1.0, 0.5, 0.0))


# -- configuration ------------------------------------------------------------

def test_config_errors_name_the_field():
    with pytest.raises(A.ConfigError) as e:
        A.ExperimentConfig.from_dict({"nu": 1})
    assert e.value.field == "space"
    with pytest.raises(A.ConfigError) as e:
        A.ExperimentConfig.from_dict({"space": {"kind": "path", "n": 5}, "bogus": 1})
    assert e.value.field == "bogus"
    for key, bad in (("t_grid", [3, 2]), ("beta", 1.0), ("nu", -1), ("eps", -0.1), ("N", 0.5),
                     ("mode", "fast"), ("n_paths", 1)):
        with pytest.raises(A.ConfigError) as e:
            A.ExperimentConfig.from_dict({"space": {"kind": "path", "n": 5}, key: bad})
        assert e.value.field == key


def test_resolve_vertex(path21):
    assert A.resolve_vertex(path21, "center") == 10
    with pytest.raises(A.ConfigError):
        A.resolve_vertex(path21, 99)


def test_band_diagnostics():
    assert A.band_diagnostics([1, 2, 4, 8])[4] is True
    assert A.band_diagnostics([1.0, 1.5, 1.7, 1.75])[4] is False
    assert A.band_diagnostics([1.0, 2.0, 1.5])[4] is False
    lo, hi, band, d, div = A.band_diagnostics([2.0, 3.0])
    assert (lo, hi, band, div) == (2.0, 3.0, 1.5, False)


def test_scaling_nu_zero():
    cfg = A.ExperimentConfig(space={"kind": "path", "n": 101}, nu=0.0, t_grid=[2, 3, 4])
    rep = A.run_scaling_experiment(cfg)
    assert all(r.L == 0.0 and r.ratio == 0.0 for r in rep.rows)
    assert rep.band_ratio == 1.0 and not rep.monotone_divergence


def test_scaling_both_modes_agree():
    cfg = A.ExperimentConfig(space={"kind": "path", "n": 101}, nu=0.5, eps=0.5, t_grid=[2, 3],
                             mode="both", n_paths=20000, seed=3)
    rep = A.run_scaling_experiment(cfg)
    assert rep.chain_holds
    for r in rep.rows:
        assert abs(r.mc_moment - r.moment) <= 4 * r.mc_se
        assert r.L <= r.upper_L + 1e-9
    assert "rows" in rep.as_dict()


def test_scaling_mc_flags_unusable():
    cfg = A.ExperimentConfig(space={"kind": "path", "n": 201}, nu=5.0, eps=0.5, t_grid=[8],
                             mode="mc", n_paths=200)
    rep = A.run_scaling_experiment(cfg)
    assert rep.rows[0].flag == "use exact-dp" and rep.rows[0].L is None


# -- certificates ---------------------------------------------------------------

def test_certificate_single_vertex_ball(path21):
    c = A.lower_bound_certificate(path21, 10, 1.0, 0.2, 0.5, 2.0)
    # B(x, 1/2) = {x}: P[tau > s] = exp(-q_x s), q_x = 1 for conductance measure
    assert c.log_exit_survival == pytest.approx(-path21.rates[10] * c.s)
    assert c.inequality_i and c.moment_mode == "exact-dp"


def test_certificate_saturating_ball():
    with pytest.raises(S.SpaceError):
        A.lower_bound_certificate(S.path_graph(5), 2, 10.0, 1.0, 0.0, 2.0)


def test_certificate_mc_on_lattice():
    g = S.lattice_box(2, 15)
    c = A.lower_bound_certificate(g, 7 * 15 + 7, 2.0, 0.3, 0.5, 2.0, n_paths=4000, seed=1)
    assert c.moment_mode == "mc" and c.inequality_i


def test_fit_survival_constants_small():
    g = S.path_graph(61)
    fit = A.fit_survival_constants(g, 30, [3.0, 5.0], 0.5, 2.0, nu=0.5)
    assert fit.passed and 0 < fit.A < 1 and fit.c >= 1e-3 and fit.C_prime >= 0
    assert len(fit.table) == 18


def test_upper_bound_empty_field():
    g = S.lattice_box(2, 15)
    x = 7 * 15 + 7
    f = O.field_from_counts(g, np.zeros(g.n, dtype=int), 0.3, 0.0)
    rec = A.upper_bound_diagnostic(g, x, 3.0, f, 2.0, 3.0, exit_fit=(0.1, 2.0))
    assert rec.net_vacuous and rec.net_bound == 0 and rec.holds


def test_upper_bound_start_covered():
    g = S.lattice_box(2, 15)
    x = 7 * 15 + 7
    counts = np.zeros(g.n, dtype=int)
    counts[x] = 1
    f = O.field_from_counts(g, counts, 0.3, 0.0)
    rec = A.upper_bound_diagnostic(g, x, 3.0, f, 2.0, 3.0)
    assert rec.log_survival == -math.inf and rec.flag and rec.holds


def test_upper_bound_random_fields():
    g = S.lattice_box(2, 21)
    x = 10 * 21 + 10
    for i in range(10):
        f = O.sample_field(g, 0.3, 0.0, seed=2, index=i)
        assert A.upper_bound_diagnostic(g, x, 3.0, f, 2.0, 3.0).holds
