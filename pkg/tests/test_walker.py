import io
import math

import numpy as np
import pytest

from sausagelab import space as S
from sausagelab import walker as W
from sausagelab.spectral import HeatKernel


def test_zero_horizon_single_event(path21):
    p = W.simulate_path(path21, 4, 0.0, seed=3)
    assert list(p.vertices) == [4] and list(p.times) == [0.0]
    assert p.position(0.0) == 4
    with pytest.raises(ValueError):
        W.simulate_path(path21, 4, -1.0)


def test_path_structure(small_random):
    g = small_random
    p = W.simulate_path(g, 0, 5.0, seed=1)
    assert p.times[0] == 0 and np.all(np.diff(p.times) > 0) and p.times[-1] <= 5.0
    A = g.conductance_matrix
    for a, b in zip(p.vertices[:-1], p.vertices[1:]):
        assert A[a, b] > 0
    assert p.holding_times().sum() == pytest.approx(5.0)
    buf = io.StringIO()
    p.dump(buf)
    assert len(buf.getvalue().splitlines()) == len(p.times)


def test_repeat_bit_identical(small_random):
    a = W.simulate_path(small_random, 2, 10.0, seed=9, index=4)
    b = W.simulate_path(small_random, 2, 10.0, seed=9, index=4)
    c = W.simulate_path(small_random, 2, 10.0, seed=9, index=5)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.vertices, b.vertices)
    assert not np.array_equal(a.times, c.times)


def test_first_jump_exponential_mean():
    w, ma, mb = 3.0, 1.5, 0.5
    g = S.explicit([(0, 1, w)], measure=[ma, mb])
    first = []
    for i in range(20000):
        p = W.simulate_path(g, 0, 50.0, seed=2, index=i)
        first.append(p.times[1])
    m = np.mean(first)
    # oracle: Exp(rate w / mu_a) has mean mu_a / w
    assert abs(m - ma / w) < 4 * (ma / w) / math.sqrt(len(first))


def test_positions_law_matches_kernel(small_random):
    g = small_random
    n = 40000
    pos = W.positions(g, 0, [0.7], n, seed=5)[:, 0]
    emp = np.bincount(pos, minlength=g.n) / n
    exact = HeatKernel(g).row(0.7, 0) * g.measure
    se = np.sqrt(exact * (1 - exact) / n)
    assert np.all(np.abs(emp - exact) <= 5 * se + 1e-12)


def test_positions_agree_with_simulate_path(path21):
    times = [0.5, 1.0, 3.0]
    pos = W.positions(path21, 10, times, 5, seed=11)
    for i in range(5):
        p = W.simulate_path(path21, 10, 3.0, seed=11, index=i)
        assert [p.position(t) for t in times] == list(pos[i])


def test_workers_invariance(small_random):
    g = small_random
    n = 3 * W.CHUNK + 17
    a = W.sausage_masses(g, 0, [1.0, 2.0], 0.0, n, seed=4, workers=1)
    b = W.sausage_masses(g, 0, [1.0, 2.0], 0.0, n, seed=4, workers=4)
    assert np.array_equal(a, b)
    t1, v1 = W.exit_times(g, 0, np.arange(g.n) < 10, 3.0, n, seed=4, workers=1)
    t3, v3 = W.exit_times(g, 0, np.arange(g.n) < 10, 3.0, n, seed=4, workers=3)
    assert np.array_equal(t1, t3) and np.array_equal(v1, v3)


# -- sausage ------------------------------------------------------------------

def test_sausage_monotone_and_bounded(small_random):
    g = small_random
    m = W.sausage_masses(g, 3, np.linspace(0, 5, 11), 0.0, 500, seed=1)
    assert np.all(np.diff(m, axis=1) >= 0)
    assert np.all(m[:, 0] == g.measure[3])
    assert np.all(m <= g.total_measure + 1e-12)


def test_sausage_eps_extremes(path21):
    g = path21
    p = W.simulate_path(g, 10, 4.0, seed=2)
    # eps below the minimum edge length: visited vertices only
    visited = np.unique(p.vertices)
    assert W.sausage_volume(g, p, 0.5, 4.0) == pytest.approx(g.measure[visited].sum())
    # eps beyond the diameter: whole space
    assert W.sausage_volume(g, p, 100.0, 0.0) == pytest.approx(g.total_measure)
    with pytest.raises(ValueError):
        W.sausage_volume(g, p, 0.5, 5.0)


def test_sausage_record_matches_batch(path21):
    g = path21
    times = [0.5, 1.5, 3.0]
    batch = W.sausage_masses(g, 10, times, 2.0, 4, seed=8)
    for i in range(4):
        p = W.simulate_path(g, 10, 3.0, seed=8, index=i)
        rec = W.sausage_record(g, p, 2.0)
        assert [rec.volume_at(t) for t in times] == pytest.approx(list(batch[i]))


def test_dilation_table_ball(small_random):
    g = small_random
    ip, ix = W.dilation_table(g, 1.3)
    for v in range(g.n):
        assert set(ix[ip[v]:ip[v + 1]]) == set(S.ball(g, v, 1.3))


# -- exit and hitting times ------------------------------------------------------

def test_exit_and_hitting_edge_cases(path21):
    p = W.simulate_path(path21, 10, 0.0)
    e = W.exit_time(p, range(21))
    assert e.censored and e.time == math.inf
    assert W.hitting_time(p, [10]).time == 0.0
    assert W.exit_time(p, [3]).time == 0.0
    assert W.hitting_time(p, [0]).censored


def test_exit_time_matches_batch(path21):
    inside = np.zeros(21, dtype=bool)
    inside[8:13] = True
    tau, vert = W.exit_times(path21, 10, inside, 3.0, 6, seed=1)
    for i in range(6):
        p = W.simulate_path(path21, 10, 3.0, seed=1, index=i)
        e = W.exit_time(p, np.flatnonzero(inside))
        assert e.time == tau[i] and e.vertex == vert[i]


def test_survival_vs_killed_mass(path21):
    U = np.arange(8, 13)
    inside = np.zeros(21, dtype=bool)
    inside[U] = True
    s, n = 2.0, 40000
    tau, _ = W.exit_times(path21, 10, inside, s, n, seed=12)
    emp = W.Estimate.from_samples(~np.isfinite(tau))
    exact = HeatKernel(path21, U).mass(s, 10)
    assert abs(emp.mean - exact) <= 4 * emp.se


def test_occupation_tv_small(small_random):
    tv, emp = W.occupation_tv(small_random, 0, 1.0, 20000, seed=3)
    assert emp.sum() == pytest.approx(1.0)
    assert tv < 0.03


# -- exit-tail bound -----------------------------------------------------------

def test_exit_tail_bound_function():
    assert W.exit_tail_bound(2.0, 1.0, 2.0, 1.0, 1.0) == pytest.approx(math.exp(-4.0))
    assert W.exit_tail_bound(0.5, 10.0, 2.0, 1.0, 3.0) < 3.0


def test_exit_tail_check_exact_agrees():
    g = S.lattice_box(2, 21)
    c = 10 * 21 + 10
    r = W.exit_tail_check(g, c, 4.0, 2.0, 20000, beta=2.0, c=0.1, C=2.0, seed=1)
    assert abs(r.empirical.mean - r.exact) <= 4 * r.empirical.se + 1e-3
    r0 = W.exit_tail_check(g, c, 0.0, 2.0, 100, beta=2.0, c=0.1, C=2.0)
    assert r0.exact == 1.0 and r0.bound == math.inf and not r0.in_regime


def test_estimate_helpers():
    e = W.Estimate.from_samples([1.0, 3.0])
    assert e.mean == 2.0 and e.se == pytest.approx(1.0)
    lo, hi = e.ci95()
    assert lo < 2 < hi
    assert W.Estimate.from_samples([1.0]).se == math.inf
    assert math.isnan(W.Estimate.from_samples([]).mean)
