"""Continuous-time variable-speed random walk on a metric measure graph.

At vertex ``x`` the walk waits an exponential time of rate
``q_x = sum_y w_xy / mu(x)`` and then jumps to ``y`` with probability
``w_xy / sum_z w_xz``.  Its transition semigroup is ``exp(-t Delta)`` for
the Laplacian of :mod:`sausagelab.spectral`.

Batch samplers split paths into fixed-size chunks; path ``i`` always uses
the counter-based stream ``path_key(base, i)``, so results do not depend
on the number of worker threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from . import rng as _rng
from ._core import backend as _default_backend
from .space import MetricMeasureGraph, ball

CHUNK = 4096


@dataclass
class Estimate:
    """Monte Carlo mean with standard error."""

    mean: float
    se: float
    n: int

    @classmethod
    def from_samples(cls, x) -> "Estimate":
        x = np.asarray(x, dtype=float)
        n = len(x)
        if n == 0:
            return cls(math.nan, math.nan, 0)
        se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
        return cls(float(np.mean(x)), se, n)

    def ci95(self) -> tuple[float, float]:
        return self.mean - 1.96 * self.se, self.mean + 1.96 * self.se

    def as_dict(self) -> dict:
        return {"estimate": self.mean, "se": self.se, "n": self.n}


def _run_chunks(fn, n_paths: int, workers: int = 1):
    chunks = [(lo, min(CHUNK, n_paths - lo)) for lo in range(0, n_paths, CHUNK)]
    if workers <= 1 or len(chunks) <= 1:
        return [fn(lo, cnt) for lo, cnt in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: fn(*c), chunks))


def _tables(space):
    return space.walk_tables()


# ---------------------------------------------------------------------------
# single paths

@dataclass
class PathSample:
    """Event list of one path: the walk sits at ``vertices[k]`` on ``[times[k], times[k+1])``."""

    start: int
    times: np.ndarray
    vertices: np.ndarray
    horizon: float
    key: int

    def position(self, t: float) -> int:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return int(self.vertices[k])

    def holding_times(self) -> np.ndarray:
        return np.diff(np.r_[self.times, self.horizon])

    def dump(self, fh) -> None:
        """One ``t vertex`` line per event."""
        for t, v in zip(self.times, self.vertices):
            fh.write(f"{t!r} {int(v)}\n")


def simulate_path(space: MetricMeasureGraph, x: int, horizon: float, seed: int = 0,
                  index: int = 0, label: str = "path", backend=None) -> PathSample:
    """Exact (Gillespie) sample of the walk from ``x`` on ``[0, horizon]``."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    be = backend or _default_backend
    key = _rng.path_key(_rng.stream_key(seed, label, 0), index)
    ip, ix, cp, rt = _tables(space)
    times, verts = be.walk_trace(ip, ix, cp, rt, int(x), float(horizon), key)
    return PathSample(int(x), times, verts, float(horizon), key)


def dilation_table(space: MetricMeasureGraph, eps: float):
    """CSR rows ``B(v, eps)`` for every vertex."""
    key = ("dil", float(eps))

    def build():
        n = space.n
        if eps < space.min_edge_length:
            return np.arange(n + 1, dtype=np.int64), np.arange(n, dtype=np.int64)
        rows = []
        for lo in range(0, n, 512):
            idx = np.arange(lo, min(n, lo + 512))
            D = dijkstra(space.length_matrix, directed=False, indices=idx, limit=eps + 1e-9)
            D = np.where(D <= eps + 1e-9 * max(1.0, eps), 1.0, 0.0)
            rows.append(sp.csr_matrix(D))
        M = sp.vstack(rows).tocsr()
        M.sort_indices()
        return M.indptr.astype(np.int64), M.indices.astype(np.int64)
    return space._cached(key, build)


@dataclass
class SausageRecord:
    """First visits of a path and the dilated-sausage volume after each one."""

    eps: float
    first_visit_times: np.ndarray
    first_visit_vertices: np.ndarray
    volumes: np.ndarray  # mu(C_t^eps) from first_visit_times[k] on

    def volume_at(self, t: float) -> float:
        k = int(np.searchsorted(self.first_visit_times, t, side="right")) - 1
        return float(self.volumes[k])


def sausage_record(space: MetricMeasureGraph, path: PathSample, eps: float) -> SausageRecord:
    ip, ix = dilation_table(space, eps)
    covered = np.zeros(space.n, dtype=bool)
    seen = np.zeros(space.n, dtype=bool)
    ft, fv, vols = [], [], []
    mass = 0.0
    for t, v in zip(path.times, path.vertices):
        if seen[v]:
            continue
        seen[v] = True
        nb = ix[ip[v]:ip[v + 1]]
        new = nb[~covered[nb]]
        covered[new] = True
        mass += float(space.measure[new].sum())
        ft.append(t)
        fv.append(int(v))
        vols.append(mass)
    return SausageRecord(eps, np.array(ft), np.array(fv, dtype=np.int64), np.array(vols))


def sausage_volume(space: MetricMeasureGraph, path: PathSample, eps: float, t: float) -> float:
    """``mu(C_t^eps)`` for one sampled path."""
    if t > path.horizon:
        raise ValueError("t beyond the simulated horizon")
    return sausage_record(space, path, eps).volume_at(t)


@dataclass
class ExitTime:
    time: float
    vertex: int
    censored: bool


def exit_time(path: PathSample, domain) -> ExitTime:
    """First event time with the walk outside ``domain`` (vertex collection)."""
    inside = set(int(v) for v in np.atleast_1d(domain))
    for t, v in zip(path.times, path.vertices):
        if int(v) not in inside:
            return ExitTime(float(t), int(v), False)
    return ExitTime(math.inf, -1, True)


def hitting_time(path: PathSample, target) -> ExitTime:
    """First event time with the walk in ``target``; 0 if it starts there."""
    tgt = set(int(v) for v in np.atleast_1d(target))
    for t, v in zip(path.times, path.vertices):
        if int(v) in tgt:
            return ExitTime(float(t), int(v), False)
    return ExitTime(math.inf, -1, True)


# ---------------------------------------------------------------------------
# batches

def _base(seed, label, stream):
    return _rng.stream_key(seed, label, stream)


def positions(space: MetricMeasureGraph, x: int, times, n_paths: int, seed: int = 0,
              stream: int = 0, workers: int = 1, backend=None) -> np.ndarray:
    """Positions ``X_t`` at the sorted ``times`` for ``n_paths`` independent paths."""
    be = backend or _default_backend
    times = np.ascontiguousarray(np.sort(np.asarray(times, dtype=float)))
    ip, ix, cp, rt = _tables(space)
    base = _base(seed, "path", stream)
    parts = _run_chunks(lambda lo, c: be.walk_positions(ip, ix, cp, rt, int(x), times, base, lo, c),
                        n_paths, workers)
    return np.concatenate(parts) if parts else np.empty((0, len(times)), dtype=np.int64)


def exit_times(space: MetricMeasureGraph, x: int, inside, horizon: float, n_paths: int,
               seed: int = 0, stream: int = 0, workers: int = 1, backend=None, label: str = "path"):
    """First time outside ``inside`` (boolean mask) before ``horizon``.

    Returns ``(tau, vertex)``; censored paths have ``tau = inf``, ``vertex = -1``.
    """
    be = backend or _default_backend
    mask = np.ascontiguousarray(np.asarray(inside, dtype=np.uint8))
    ip, ix, cp, rt = _tables(space)
    base = _base(seed, label, stream)
    parts = _run_chunks(
        lambda lo, c: be.walk_first_exit(ip, ix, cp, rt, int(x), mask, float(horizon), base, lo, c),
        n_paths, workers)
    if not parts:
        return np.empty(0), np.empty(0, dtype=np.int64)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def sausage_masses(space: MetricMeasureGraph, x: int, times, eps: float, n_paths: int,
                   seed: int = 0, stream: int = 0, workers: int = 1, backend=None) -> np.ndarray:
    """``mu(C_t^eps)`` at each sorted time, one row per path."""
    be = backend or _default_backend
    times = np.ascontiguousarray(np.sort(np.asarray(times, dtype=float)))
    ip, ix, cp, rt = _tables(space)
    dp, di = dilation_table(space, eps)
    mu = np.ascontiguousarray(space.measure, dtype=np.float64)
    base = _base(seed, "path", stream)
    parts = _run_chunks(
        lambda lo, c: be.walk_sausage(ip, ix, cp, rt, int(x), times, dp, di, mu, base, lo, c),
        n_paths, workers)
    return np.concatenate(parts) if parts else np.empty((0, len(times)))


def occupation_tv(space: MetricMeasureGraph, x: int, t: float, n_paths: int, seed: int = 0,
                  workers: int = 1) -> tuple[float, np.ndarray]:
    """Total variation between the empirical law of ``X_t`` and ``h_t(x, .) mu``."""
    from .spectral import HeatKernel

    pos = positions(space, x, [t], n_paths, seed=seed, workers=workers)[:, 0]
    emp = np.bincount(pos, minlength=space.n) / n_paths
    exact = HeatKernel(space).row(t, x) * space.measure
    return 0.5 * float(np.abs(emp - exact).sum()), emp


# ---------------------------------------------------------------------------
# exit-time tail bound

@dataclass
class ExitTail:
    sigma: float
    t: float
    empirical: Estimate
    exact: float | None
    bound: float
    passed: bool
    in_regime: bool
    exact_ok: bool | None = None


def exit_tail_bound(sigma: float, t: float, beta: float, c: float, C: float) -> float:
    """``C exp(-c (sigma^beta / t)^(1/(beta-1)))``."""
    return C * math.exp(-c * (sigma ** beta / t) ** (1.0 / (beta - 1.0)))


def exit_tail_check(space: MetricMeasureGraph, y: int, sigma: float, t: float, n_paths: int,
                    beta: float, c: float, C: float, seed: int = 0, workers: int = 1,
                    exact: bool = True, regime: float = 1.0) -> ExitTail:
    """Empirical ``P[sup_{s<=t} d(y, X_s) >= sigma]`` against the GE-form bound.

    The event is the exit from the open ball ``{d(y, .) < sigma}``.  With
    ``exact`` the probability is also computed from the killed semigroup.
    ``regime`` is the threshold on ``sigma^beta / t`` below which the bound
    is flagged out of regime.
    """
    d = space.dist_from(y)
    inside = d < sigma - 1e-9 * max(1.0, sigma)
    tau, _ = exit_times(space, y, inside, t, n_paths, seed=seed, workers=workers)
    est = Estimate.from_samples(np.isfinite(tau).astype(float))
    ex = None
    if exact:
        from .spectral import log_survival

        dom = np.flatnonzero(inside)
        ex = 1.0 if len(dom) == 0 else float(-np.expm1(log_survival(space, dom, y, t)))
    bound = exit_tail_bound(sigma, t, beta, c, C) if sigma > 0 else math.inf
    in_regime = sigma > 0 and sigma ** beta / t >= regime
    se = est.se if np.isfinite(est.se) else 0.0
    passed = est.mean <= bound + 3.0 * se
    exact_ok = None if ex is None else bool(ex <= bound * (1 + 1e-9))
    return ExitTail(float(sigma), float(t), est, ex, bound, bool(passed), bool(in_regime), exact_ok)


def calibrated_exit_constants(fit, margin: float = 0.5) -> tuple[float, float]:
    """``(c, C)`` for :func:`exit_tail_bound` from a heat-kernel fit.

    The exit-time constants are not the heat-kernel constants; the rate is
    scaled by ``margin`` and the prefactor taken from the upper bound.
    """
    return margin * fit.c_upper, max(fit.C_upper, 1.0)


def ball_mask(space: MetricMeasureGraph, x: int, r: float) -> np.ndarray:
    m = np.zeros(space.n, dtype=bool)
    m[ball(space, x, r)] = True
    return m
