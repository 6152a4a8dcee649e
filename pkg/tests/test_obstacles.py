import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sausagelab import obstacles as O
from sausagelab import space as S
from sausagelab.spectral import HeatKernel


def test_nu_zero_everything_trivial(path21):
    f = O.sample_field(path21, 0.0, 1.0, seed=1)
    assert not f.obstacle.any()
    assert O.negative_moment(path21, 10, 3.0, 0.0, 0.0, 100).mean == 1.0
    assert O.annealed_survival(path21, 10, 3.0, 0.0, 0.0, 50).estimate.mean == 1.0


def test_invalid_parameters(path21):
    with pytest.raises(ValueError):
        O.sample_field(path21, -1.0, 0.0)


def test_occupancy_frequency():
    g = S.path_graph(11)
    nu, n = 0.4, 5000
    hits = np.zeros(g.n)
    total = 0
    for i in range(n):
        f = O.sample_field(g, nu, 0.0, seed=3, index=i)
        hits += f.obstacle
        total += f.counts.sum()
    p = 1 - np.exp(-nu * g.measure)
    assert np.all(np.abs(hits / n - p) <= 5 * np.sqrt(p * (1 - p) / n))
    mean_total = nu * g.total_measure
    assert abs(total / n - mean_total) <= 5 * math.sqrt(mean_total / n)


def test_field_reproducible_and_dilated(small_random):
    g = small_random
    a = O.sample_field(g, 0.3, 1.0, seed=5, index=2)
    b = O.sample_field(g, 0.3, 1.0, seed=5, index=2)
    assert np.array_equal(a.counts, b.counts)
    expect = set()
    for v in a.arrivals:
        expect |= set(S.ball(g, v, 1.0).tolist())
    assert set(a.obstacle_set.tolist()) == expect


def test_field_dump_roundtrip(small_random):
    f = O.sample_field(small_random, 0.5, 0.0, seed=2)
    buf = io.StringIO()
    f.dump(buf)
    buf.seek(0)
    g = O.read_field(small_random, buf, 0.5, 0.0)
    assert np.array_equal(g.counts, f.counts) and np.array_equal(g.obstacle, f.obstacle)


def test_depleted_ball(path21):
    f = O.field_from_counts(path21, np.eye(21, dtype=int)[10], 1.0, 0.0)
    assert list(f.depleted(path21, 10, 2)) == [8, 9, 11, 12]


def test_field_survival_exact_vs_mc(path21):
    counts = np.zeros(21, dtype=int)
    counts[[6, 14]] = 1
    f = O.field_from_counts(path21, counts, 1.0, 0.0)
    exact = O.field_survival(path21, f, 10, 2.0, mode="exact")
    assert exact == pytest.approx(HeatKernel(path21, np.arange(7, 14)).mass(2.0, 10))
    mc = O.field_survival(path21, f, 10, 2.0, n_paths=20000, seed=1, mode="mc")
    assert abs(mc - exact) < 4 * math.sqrt(exact * (1 - exact) / 20000)
    assert O.field_survival(path21, f, 6, 2.0) == 0.0


def test_two_vertex_moment_mc():
    w, ma, mb, s, nu = 1.0, 1.0, 2.0, 0.8, 0.7
    g = S.explicit([(0, 1, w)], measure=[ma, mb])
    est = O.negative_moment(g, 0, s, nu, 0.0, 40000, seed=3)
    # oracle by conditioning on the first jump time
    stay = math.exp(-w / ma * s)
    oracle = stay * math.exp(-nu * ma) + (1 - stay) * math.exp(-nu * (ma + mb))
    assert O.two_vertex_moment(w, ma, mb, s, nu) == pytest.approx(oracle)
    assert abs(est.mean - oracle) <= 4 * est.se


def test_annealed_variance_fields(path21):
    a = O.annealed_survival(path21, 10, 2.0, 0.2, 0.0, 200, n_paths=1, mode="mc")
    assert math.isnan(a.environment_var) and math.isnan(a.path_var)
    b = O.annealed_survival(path21, 10, 2.0, 0.2, 0.0, 200, mode="exact")
    assert b.path_var == 0.0 and b.environment_var >= 0
    assert 0 < b.estimate.mean < 1
    c = O.annealed_survival(path21, 10, 2.0, 0.2, 0.0, 100, n_paths=20, mode="mc")
    assert c.path_var > 0 and set(c.as_dict()) >= {"estimate", "se", "environment_var", "path_var"}


def test_annealed_workers_invariant(path21):
    a = O.annealed_survival(path21, 10, 2.0, 0.2, 0.0, 5000, mode="exact", workers=1)
    b = O.annealed_survival(path21, 10, 2.0, 0.2, 0.0, 5000, mode="exact", workers=3)
    assert np.array_equal(a.per_field, b.per_field)


# -- Cramer tail ------------------------------------------------------------------

def test_cramer_trivial(path21):
    K = np.arange(5, 10)
    assert O.cramer_tail(path21, K, 0.5, 0.0, 1.0).probability == 1.0
    assert O.cramer_tail(path21, K, 0.5, 0.0, -0.1).probability == 0.0
    t = O.cramer_tail(path21, K, 0.5, 0.0, 0.0)
    # nothing occupied: prod exp(-nu mu)
    assert t.probability == pytest.approx(math.exp(-0.5 * path21.measure[K].sum()))
    assert t.rate == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=1, max_size=10), st.floats(0.05, 2.0), st.floats(0, 1))
def test_cramer_dp_vs_enumeration(ws, nu, frac):
    edges = [(i, i + 1, float(w)) for i, w in enumerate(ws)]
    g = S.explicit(edges)
    K = np.arange(g.n)
    t = O.cramer_tail(g, K, nu, 0.0, frac)
    p = O.occupancy_probabilities(g, K, nu)
    oracle = O.brute_force_tail(g.measure, p, frac * g.measure.sum())
    assert t.mode == "exact-dp"
    assert t.probability == pytest.approx(oracle, rel=1e-9, abs=1e-15)


def test_cramer_monotone_in_frac(path21):
    K = np.arange(21)
    vals = [O.cramer_tail(path21, K, 0.3, 0.0, f).probability for f in np.linspace(0, 1, 11)]
    assert np.all(np.diff(vals) >= -1e-15)


def test_cramer_mc_mode(path21):
    K = np.arange(5, 16)
    t = O.cramer_tail(path21, K, 0.3, 1.0, 0.3, n_mc=3000, seed=1)
    assert t.mode == "mc" and 0 <= t.probability <= 1


def test_cramer_family_rates_positive():
    g = S.path_graph(101)
    fam = O.cramer_family(g, 50, [4, 8, 16], 0.5, 0.0)
    assert all(0 < t.probability < 1 and t.rate > 0 for t in fam)
    assert fam[0].mass < fam[1].mass < fam[2].mass
