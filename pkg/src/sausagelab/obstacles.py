"""Poisson hard obstacles, annealed survival and the occupancy (Cramer) tail.

A field places ``N_v ~ Poisson(nu mu(v))`` points at each vertex,
independently.  The obstacle set is the ``eps``-dilation of the vertices
that received at least one point.  Averaged over fields, the survival
probability of the walk among obstacles equals the negative exponential
moment of the sausage volume::

    E^x[exp(-nu mu(C_s^eps))] = E_nu[P^x[T > s]].

:func:`negative_moment` estimates the left side by path simulation;
:func:`annealed_survival` estimates the right side by sampling fields.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .space import MetricMeasureGraph, ball
from .spectral import log_survival
from .walker import Estimate, dilation_table, exit_times, sausage_masses, _run_chunks

EXACT_SURVIVAL_CAP = 200


@dataclass
class ObstacleField:
    """One realisation of the Poisson obstacle configuration."""

    nu: float
    eps: float
    counts: np.ndarray
    obstacle: np.ndarray  # boolean mask of the dilated obstacle set

    @property
    def arrivals(self) -> np.ndarray:
        return np.flatnonzero(self.counts > 0)

    @property
    def obstacle_set(self) -> np.ndarray:
        return np.flatnonzero(self.obstacle)

    def depleted(self, space: MetricMeasureGraph, x: int, r: float) -> np.ndarray:
        """``B(x, r)`` minus the obstacle set."""
        B = ball(space, x, r)
        return B[~self.obstacle[B]]

    def dump(self, fh) -> None:
        """``v count`` lines for vertices with at least one point."""
        for v in self.arrivals:
            fh.write(f"{int(v)} {int(self.counts[v])}\n")


def _dilate(space, eps, arrivals) -> np.ndarray:
    mask = np.zeros(space.n, dtype=bool)
    if len(arrivals) == 0:
        return mask
    ip, ix = dilation_table(space, eps)
    for v in arrivals:
        mask[ix[ip[v]:ip[v + 1]]] = True
    return mask


def field_from_counts(space: MetricMeasureGraph, counts, nu: float, eps: float) -> ObstacleField:
    counts = np.asarray(counts, dtype=np.int64)
    return ObstacleField(float(nu), float(eps), counts, _dilate(space, eps, np.flatnonzero(counts > 0)))


def read_field(space: MetricMeasureGraph, fh, nu: float, eps: float) -> ObstacleField:
    counts = np.zeros(space.n, dtype=np.int64)
    for line in fh:
        if line.strip():
            v, c = line.split()
            counts[int(v)] = int(c)
    return field_from_counts(space, counts, nu, eps)


def sample_field(space: MetricMeasureGraph, nu: float, eps: float, seed: int = 0,
                 index: int = 0) -> ObstacleField:
    """Field number ``index`` of the stream ``(seed, "field")``."""
    if nu < 0 or eps < 0:
        raise ValueError("nu and eps must be >= 0")
    if nu == 0:
        counts = np.zeros(space.n, dtype=np.int64)
    else:
        g = _rng.seed_stream(seed, "field", index)
        counts = g.poisson(nu * space.measure).astype(np.int64)
    return field_from_counts(space, counts, nu, eps)


# ---------------------------------------------------------------------------
# the two sides of the duality

def negative_moment(space: MetricMeasureGraph, x: int, s: float, nu: float, eps: float,
                    n_paths: int, seed: int = 0, stream: int = 0, workers: int = 1,
                    backend=None) -> Estimate:
    """Monte Carlo ``E^x[exp(-nu mu(C_s^eps))]``."""
    if nu == 0:
        return Estimate(1.0, 0.0, n_paths)
    m = sausage_masses(space, x, [s], eps, n_paths, seed=seed, stream=stream,
                       workers=workers, backend=backend)[:, 0]
    return Estimate.from_samples(np.exp(-nu * m))


@dataclass
class AnnealedEstimate:
    estimate: Estimate
    environment_var: float  # variance of the per-field survival probability
    path_var: float  # mean within-field Monte Carlo variance per field estimate
    mode: str
    per_field: np.ndarray

    def as_dict(self) -> dict:
        d = self.estimate.as_dict()
        d.update(environment_var=self.environment_var, path_var=self.path_var, mode=self.mode)
        return d


def field_survival(space: MetricMeasureGraph, field: ObstacleField, x: int, s: float,
                   n_paths: int = 0, seed: int = 0, index: int = 0, mode: str = "auto",
                   workers: int = 1) -> float:
    """``P^x[T > s]`` for one field; exact (killed semigroup) or by simulation."""
    if field.obstacle[x]:
        return 0.0
    if mode == "auto":
        mode = "exact" if space.n <= EXACT_SURVIVAL_CAP else "mc"
    free = ~field.obstacle
    if mode == "exact":
        return math.exp(log_survival(space, np.flatnonzero(free), x, s))
    tau, _ = exit_times(space, x, free, s, n_paths, seed=seed, stream=index, workers=workers,
                        label="sample")
    return float(np.mean(~np.isfinite(tau)))


def annealed_survival(space: MetricMeasureGraph, x: int, s: float, nu: float, eps: float,
                      n_fields: int, n_paths: int = 1, seed: int = 0, mode: str = "auto",
                      workers: int = 1) -> AnnealedEstimate:
    """Nested estimate of ``E_nu[P^x[T > s]]``.

    Fields come from ``(seed, "field", i)``; in simulation mode the paths
    for field ``i`` come from ``(seed, "sample", i)``.  The standard error
    is that of the per-field averages, which accounts for both levels.
    """
    if mode == "auto":
        mode = "exact" if space.n <= EXACT_SURVIVAL_CAP else "mc"
    if nu == 0:
        return AnnealedEstimate(Estimate(1.0, 0.0, n_fields), 0.0, 0.0, mode, np.ones(n_fields))

    def chunk(lo, cnt):
        out = np.empty(cnt)
        for k in range(cnt):
            f = sample_field(space, nu, eps, seed, lo + k)
            out[k] = field_survival(space, f, x, s, n_paths, seed, lo + k, mode)
        return out

    vals = np.concatenate(_run_chunks(chunk, n_fields, workers))
    est = Estimate.from_samples(vals)
    total_var = float(np.var(vals, ddof=1)) if n_fields > 1 else 0.0
    if mode == "exact":
        path_var = 0.0
    elif n_paths > 1:
        # unbiased within-field variance of each per-field mean
        path_var = float(np.mean(vals * (1 - vals)) / (n_paths - 1))
    else:
        # one path per field: the two levels cannot be separated
        return AnnealedEstimate(est, math.nan, math.nan, mode, vals)
    return AnnealedEstimate(est, max(total_var - path_var, 0.0), path_var, mode, vals)


def two_vertex_moment(w: float, mu_a: float, mu_b: float, s: float, nu: float) -> float:
    """Closed form of ``E^a[exp(-nu mu(C_s))]`` on a single edge ``{a, b}``."""
    q = w / mu_a
    stay = math.exp(-q * s)
    return math.exp(-nu * mu_a) * (stay + (1.0 - stay) * math.exp(-nu * mu_b))


# ---------------------------------------------------------------------------
# occupancy tail

@dataclass
class CramerTail:
    probability: float
    se: float
    rate: float  # -log(probability) / mu(K)
    mass: float
    mean_fraction: float
    mode: str
    grid_step: float | None = None


def _grid_masses(mu, step):
    r = mu / step
    k = np.floor(r + 1e-9)
    return np.where(np.abs(r - np.round(r)) < 1e-9 * np.maximum(1.0, r), np.round(r), k).astype(np.int64)


def occupancy_probabilities(space: MetricMeasureGraph, K, nu: float) -> np.ndarray:
    return -np.expm1(-nu * space.measure[np.asarray(K)])


def cramer_tail(space: MetricMeasureGraph, K, nu: float, eps: float, frac: float,
                n_mc: int = 20000, seed: int = 0) -> CramerTail:
    """``P[mu(Upsilon cap K) / mu(K) <= frac]``.

    For ``eps`` below the minimum edge length the occupancy indicators are
    independent and the law of ``sum_v mu(v) 1[N_v >= 1]`` is computed by a
    subset-sum recursion on the grid ``min mu / 100``.  Masses are rounded
    down and the threshold is ``floor(frac mu(K) / step)``, so the value is
    an upper bound on the true tail (exact when masses sit on the grid).
    Otherwise the tail is estimated from ``n_mc`` sampled fields.
    """
    K = np.unique(np.asarray(K, dtype=np.int64))
    mu = space.measure[K]
    total = float(mu.sum())
    p = occupancy_probabilities(space, K, nu)
    mean = float(np.sum(mu * p) / total)

    def done(prob, se, mode, step=None):
        rate = -math.log(prob) / total if prob > 0 else math.inf
        return CramerTail(float(prob), se, rate, total, mean, mode, step)

    if frac >= 1:
        return done(1.0, 0.0, "trivial")
    if frac < 0:
        return done(0.0, 0.0, "trivial")
    if eps < space.min_edge_length:
        step = float(mu.min()) / 100.0
        m = _grid_masses(mu, step)
        thr = int(math.floor(frac * total / step + 1e-9))
        dist = np.zeros(int(m.sum()) + 1)
        dist[0] = 1.0
        hi = 0
        for mi, pi in zip(m, p):
            new = dist[:hi + mi + 1] * 0.0
            new[:hi + 1] = dist[:hi + 1] * (1.0 - pi)
            new[mi:mi + hi + 1] += dist[:hi + 1] * pi
            hi += mi
            dist[:hi + 1] = new
        prob = float(min(1.0, dist[:min(thr, hi) + 1].sum()))
        return done(prob, 0.0, "exact-dp", step)
    inK = np.zeros(space.n, dtype=bool)
    inK[K] = True
    hits = np.empty(n_mc)
    for i in range(n_mc):
        f = sample_field(space, nu, eps, seed, i)
        hits[i] = float(space.measure[f.obstacle & inK].sum()) / total <= frac
    est = Estimate.from_samples(hits)
    return done(est.mean, est.se, "mc")


def brute_force_tail(mu, p, threshold: float) -> float:
    """``P[sum_v mu_v B_v <= threshold]`` by enumerating all occupancy patterns."""
    mu = np.asarray(mu, dtype=float)
    p = np.asarray(p, dtype=float)
    tot = 0.0
    for bits in itertools.product((0, 1), repeat=len(mu)):
        b = np.array(bits, dtype=bool)
        if float(mu[b].sum()) <= threshold + 1e-12:
            tot += float(np.prod(np.where(b, p, 1.0 - p)))
    return tot


def cramer_family(space: MetricMeasureGraph, x: int, radii, nu: float, eps: float,
                  frac_factor: float = 0.5) -> list[CramerTail]:
    """Tails on the balls ``B(x, r)`` with ``frac = frac_factor * mean proportion``."""
    out = []
    for r in radii:
        K = ball(space, x, r)
        mean = float(np.sum(space.measure[K] * occupancy_probabilities(space, K, nu))
                     / space.measure[K].sum())
        out.append(cramer_tail(space, K, nu, eps, frac_factor * mean))
    return out
