"""The compiled extension and the pure-Python fallback must agree."""
import math

import numpy as np
import pytest
import scipy.sparse as sp

from sausagelab import space as S
from sausagelab import walker as W
from sausagelab._core import compiled, fallback

needs_compiled = pytest.mark.skipif(compiled is None, reason="extension not built")


@pytest.fixture(scope="module")
def g():
    return S.random_connected(30, np.random.default_rng(3), extra=0.1, measure="random")


def test_fallback_name():
    assert fallback.NAME == "python"


@needs_compiled
def test_walk_trace_identical(g):
    for i in range(20):
        a = W.simulate_path(g, i % g.n, 6.0, seed=1, index=i, backend=compiled)
        b = W.simulate_path(g, i % g.n, 6.0, seed=1, index=i, backend=fallback)
        assert np.array_equal(a.vertices, b.vertices)
        assert np.array_equal(a.times, b.times)


@needs_compiled
def test_positions_identical(g):
    t = [0.1, 1.0, 4.0]
    a = W.positions(g, 0, t, 300, seed=2, backend=compiled)
    b = W.positions(g, 0, t, 300, seed=2, backend=fallback)
    assert np.array_equal(a, b)


@needs_compiled
def test_first_exit_identical(g):
    inside = np.arange(g.n) % 3 != 0
    a = W.exit_times(g, 1, inside, 5.0, 300, seed=3, backend=compiled)
    b = W.exit_times(g, 1, inside, 5.0, 300, seed=3, backend=fallback)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


@needs_compiled
@pytest.mark.parametrize("eps", [0.0, 1.5])
def test_sausage_identical(g, eps):
    t = [0.5, 2.0, 6.0]
    a = W.sausage_masses(g, 0, t, eps, 200, seed=4, backend=compiled)
    b = W.sausage_masses(g, 0, t, eps, 200, seed=4, backend=fallback)
    assert np.allclose(a, b, rtol=1e-13, atol=0)


def _chain(n, rng):
    P = sp.random(n, n, density=0.3, random_state=np.random.RandomState(int(rng.integers(1 << 30))),
                  format="csc")
    col = np.asarray(P.sum(axis=0)).ravel()
    P = P @ sp.diags(0.8 / np.maximum(col, 1e-12))
    drop = np.maximum(0.0, 1.0 - np.asarray(P.sum(axis=0)).ravel()) * 0.5
    P = P.tocsr()
    return P, drop


@needs_compiled
def test_uniformized_log_sum_agree(rng):
    for _ in range(5):
        P, drop = _chain(12, rng)
        init = rng.random(12)
        args = (P.indptr.astype(np.int64), P.indices.astype(np.int64), P.data, drop, init, 7.5, 80)
        a = compiled.uniformized_log_sum(*args)
        b = fallback.uniformized_log_sum(*args)
        assert a[0] == pytest.approx(b[0], rel=1e-12)
        assert a[1] == pytest.approx(b[1], rel=1e-12)


def test_uniformized_log_sum_oracle(rng):
    """Compare with a direct Poisson-weighted power series."""
    from scipy.stats import poisson

    P, drop = _chain(8, rng)
    init = rng.random(8)
    rt, K = 3.0, 60
    v = init.copy()
    acc = 0.0
    for k in range(K + 1):
        acc += poisson.pmf(k, rt) * v.sum()
        v = P @ v
    for be in filter(None, (compiled, fallback)):
        la, _ = be.uniformized_log_sum(P.indptr.astype(np.int64), P.indices.astype(np.int64),
                                       P.data, drop, init, rt, K)
        assert math.exp(la) == pytest.approx(acc, rel=1e-12)


def test_env_forces_fallback():
    import os
    import subprocess
    import sys

    env = dict(os.environ, SAUSAGELAB_BACKEND="python")
    r = subprocess.run([sys.executable, "-c", "import sausagelab; print(sausagelab.BACKEND)"],
                       capture_output=True, text=True, env=env)
    assert r.stdout.strip() == "python"
