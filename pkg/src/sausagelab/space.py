"""Finite metric measure graphs: generators, balls, volumes, doubling and nets.

A :class:`MetricMeasureGraph` is a connected weighted graph carrying a
vertex measure ``mu``, symmetric edge conductances ``w`` and edge lengths
``l``.  Its metric is the weighted shortest-path distance.  Spaces are
immutable; derived data (sparse matrices, distance tables, walk tables) is
computed lazily and cached on the instance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

VERTEX_CAP = 10**6
ALL_PAIRS_CAP = 5000
_RTOL = 1e-9


class SpaceError(ValueError):
    """Invalid generator descriptor or graph data."""


class ResourceCapError(SpaceError):
    """A generator would exceed the vertex cap."""


def _within(d, r):
    return d <= r + _RTOL * max(1.0, abs(r))


@dataclass(eq=False)
class MetricMeasureGraph:
    """Discrete local Dirichlet space.

    Attributes
    ----------
    n : int
        Number of vertices, labelled ``0..n-1``.
    edges : ndarray (m, 2)
        Undirected edges with ``u < v``.
    conductance, length : ndarray (m,)
        Positive edge weights ``w_uv`` and lengths ``l_uv``.
    measure : ndarray (n,)
        Positive vertex measure ``mu``.
    """

    n: int
    edges: np.ndarray
    conductance: np.ndarray
    length: np.ndarray
    measure: np.ndarray
    name: str = "graph"
    coords: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    # -- construction ---------------------------------------------------
    @classmethod
    def from_edges(cls, n, edges, conductance=None, length=None, measure="conductance",
                   name="graph", coords=None, cap=VERTEX_CAP) -> "MetricMeasureGraph":
        n = int(n)
        if n < 1:
            raise SpaceError("a space needs at least one vertex")
        if n > cap:
            raise ResourceCapError(f"{name}: {n} vertices exceeds cap {cap}")
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        m = len(e)
        w = np.ones(m) if conductance is None else np.asarray(conductance, dtype=float).ravel()
        ln = np.ones(m) if length is None else np.asarray(length, dtype=float).ravel()
        if len(w) != m or len(ln) != m:
            raise SpaceError("conductance/length arrays must match the edge list")
        if m and (e.min() < 0 or e.max() >= n):
            raise SpaceError("edge endpoint out of range")
        if np.any(e[:, 0] == e[:, 1]):
            raise SpaceError("self-loops are not allowed")
        if np.any(~(w > 0)) or np.any(~(ln > 0)):
            raise SpaceError("conductances and lengths must be positive")
        lo = np.minimum(e[:, 0], e[:, 1])
        hi = np.maximum(e[:, 0], e[:, 1])
        e = np.stack([lo, hi], axis=1)
        order = np.lexsort((e[:, 1], e[:, 0]))
        e, w, ln = e[order], w[order], ln[order]
        if m > 1 and np.any(np.all(e[1:] == e[:-1], axis=1)):
            raise SpaceError("duplicate edges")
        deg_w = np.bincount(e[:, 0], weights=w, minlength=n) + np.bincount(
            e[:, 1], weights=w, minlength=n)
        if isinstance(measure, str):
            if measure == "conductance":
                mu = deg_w.copy()
                if n == 1:
                    mu = np.ones(1)
            elif measure == "unit":
                mu = np.ones(n)
            else:
                raise SpaceError(f"unknown measure rule {measure!r}")
        else:
            mu = np.asarray(measure, dtype=float).ravel()
            if len(mu) != n:
                raise SpaceError("measure array must have one entry per vertex")
        if np.any(~(mu > 0)):
            raise SpaceError("vertex measure must be positive (isolated vertex?)")
        space = cls(n, e, w, ln, mu, name, None if coords is None else np.asarray(coords))
        ncomp, labels = connected_components(space.conductance_matrix, directed=False)
        if ncomp > 1:
            sizes = np.bincount(labels)
            raise SpaceError(
                f"{name}: graph is disconnected ({ncomp} components, sizes {sorted(sizes.tolist())[:5]}...)")
        return space

    # -- derived matrices -----------------------------------------------
    def _cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def conductance_matrix(self) -> sp.csr_matrix:
        def build():
            u, v = self.edges[:, 0], self.edges[:, 1]
            W = sp.coo_matrix((np.r_[self.conductance, self.conductance], (np.r_[u, v], np.r_[v, u])),
                              shape=(self.n, self.n))
            return W.tocsr()
        return self._cached("W", build)

    @property
    def length_matrix(self) -> sp.csr_matrix:
        def build():
            u, v = self.edges[:, 0], self.edges[:, 1]
            L = sp.coo_matrix((np.r_[self.length, self.length], (np.r_[u, v], np.r_[v, u])),
                              shape=(self.n, self.n))
            return L.tocsr()
        return self._cached("L", build)

    @property
    def weighted_degree(self) -> np.ndarray:
        return self._cached("degw", lambda: np.asarray(self.conductance_matrix.sum(axis=1)).ravel())

    @property
    def rates(self) -> np.ndarray:
        """Holding rates ``q_x = sum_y w_xy / mu(x)`` of the walk."""
        return self._cached("rates", lambda: self.weighted_degree / self.measure)

    @property
    def total_measure(self) -> float:
        return float(self.measure.sum())

    @property
    def min_edge_length(self) -> float:
        return float(self.length.min()) if len(self.length) else math.inf

    def walk_tables(self):
        """CSR jump tables ``(indptr, indices, cumprob, rates)`` for the kernels."""
        def build():
            W = self.conductance_matrix
            indptr = W.indptr.astype(np.int64)
            indices = W.indices.astype(np.int64)
            cum = np.empty(len(W.data))
            for v in range(self.n):
                a, b = indptr[v], indptr[v + 1]
                if b > a:
                    c = np.cumsum(W.data[a:b])
                    cum[a:b] = c / c[-1]
                    cum[b - 1] = 1.0
            return indptr, indices, cum, np.ascontiguousarray(self.rates, dtype=np.float64)
        return self._cached("walk", build)

    # -- metric -----------------------------------------------------------
    def dist_from(self, x: int, limit: float = math.inf) -> np.ndarray:
        """Shortest-path distances from ``x`` (``inf`` beyond ``limit``)."""
        if "D" in self._cache:
            d = self._cache["D"][x]
            return d if limit == math.inf else np.where(d <= limit, d, np.inf)
        if limit == math.inf:
            key = ("d", int(x))
            cache = self._cache.setdefault("dsrc", {})
            if key not in cache:
                if len(cache) > 256:
                    cache.clear()
                cache[key] = dijkstra(self.length_matrix, directed=False, indices=int(x))
            return cache[key]
        return dijkstra(self.length_matrix, directed=False, indices=int(x), limit=limit)

    def distances(self) -> np.ndarray:
        """All-pairs distance table (only for ``n <= 5000``)."""
        if self.n > ALL_PAIRS_CAP:
            raise ResourceCapError(f"all-pairs distances refused for n={self.n} > {ALL_PAIRS_CAP}")
        return self._cached("D", lambda: dijkstra(self.length_matrix, directed=False))

    @property
    def diameter(self) -> float:
        def build():
            if self.n <= ALL_PAIRS_CAP:
                return float(self.distances().max())
            # double sweep lower bound, exact on trees and boxes
            d = self.dist_from(0)
            a = int(np.argmax(d))
            return float(self.dist_from(a).max())
        return self._cached("diam", build)

    def eccentricity(self, x: int) -> float:
        return float(self.dist_from(x).max())

    def __repr__(self):
        return f"MetricMeasureGraph(name={self.name!r}, n={self.n}, m={len(self.edges)})"


# ---------------------------------------------------------------------------
# generators

def lattice_box(dims: int, side: int, periodic: bool = False, measure="conductance",
                cap: int = VERTEX_CAP) -> MetricMeasureGraph:
    """Box ``{0..side-1}^dims`` of Z^dims with unit edges (torus if periodic)."""
    if dims < 1 or side < 1:
        raise SpaceError("lattice_box needs dims >= 1 and side >= 1")
    if side ** dims > cap:
        raise ResourceCapError(f"lattice_box({dims}, {side}) has {side**dims} vertices > cap {cap}")
    shape = (side,) * dims
    idx = np.arange(side ** dims).reshape(shape)
    edges = []
    for ax in range(dims):
        a = np.moveaxis(idx, ax, 0)
        edges.append(np.stack([a[:-1].ravel(), a[1:].ravel()], axis=1))
        if periodic and side > 2:
            edges.append(np.stack([a[-1].ravel(), a[0].ravel()], axis=1))
    e = np.concatenate(edges) if edges else np.empty((0, 2), dtype=np.int64)
    coords = np.stack(np.unravel_index(np.arange(side ** dims), shape), axis=1)
    kind = "torus" if periodic else "lattice_box"
    return MetricMeasureGraph.from_edges(side ** dims, e, measure=measure,
                                         name=f"{kind}({dims},{side})", coords=coords, cap=cap)


def path_graph(n: int, measure="conductance") -> MetricMeasureGraph:
    return lattice_box(1, n, measure=measure)


def sierpinski_gasket(level: int, measure="conductance", cap: int = VERTEX_CAP) -> MetricMeasureGraph:
    """Pre-gasket graph of the given level (level 0 is a triangle).

    Vertices sit on the triangular lattice in oblique integer coordinates;
    level ``k`` has ``3 (3^k + 1) / 2`` vertices and ``3^(k+1)`` edges.
    """
    if level < 0:
        raise SpaceError("gasket level must be >= 0")
    nv = 3 * (3 ** level + 1) // 2
    if nv > cap:
        raise ResourceCapError(f"sierpinski_gasket({level}) has {nv} vertices > cap {cap}")
    corners = np.zeros((1, 2), dtype=np.int64)
    for k in range(level):
        h = 2 ** k
        corners = np.concatenate([corners, corners + (h, 0), corners + (0, h)])
    pts = np.concatenate([corners, corners + (1, 0), corners + (0, 1)])
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    inv = inv.ravel()
    t = len(corners)
    a, b, c = inv[:t], inv[t:2 * t], inv[2 * t:]
    e = np.concatenate([np.stack(p, axis=1) for p in ((a, b), (b, c), (a, c))])
    return MetricMeasureGraph.from_edges(len(uniq), e, measure=measure,
                                         name=f"sierpinski_gasket({level})", coords=uniq, cap=cap)


def vicsek_tree(level: int, measure="conductance", cap: int = VERTEX_CAP) -> MetricMeasureGraph:
    """Plus-shaped Vicsek graph: cells of the 3^level grid whose base-3
    digit pairs all lie in the plus pattern, joined to grid neighbours.
    A tree with ``5^level`` vertices."""
    if level < 0:
        raise SpaceError("vicsek level must be >= 0")
    if 5 ** level > cap:
        raise ResourceCapError(f"vicsek_tree({level}) has {5**level} vertices > cap {cap}")
    plus = np.array([(1, 1), (0, 1), (1, 0), (2, 1), (1, 2)], dtype=np.int64)
    cells = np.zeros((1, 2), dtype=np.int64)
    for _ in range(level):
        cells = (cells[:, None, :] * 3 + plus[None, :, :]).reshape(-1, 2)
    cells = cells[np.lexsort((cells[:, 1], cells[:, 0]))]
    lookup = {(int(i), int(j)): k for k, (i, j) in enumerate(cells)}
    edges = []
    for k, (i, j) in enumerate(cells):
        for di, dj in ((1, 0), (0, 1)):
            q = lookup.get((int(i) + di, int(j) + dj))
            if q is not None:
                edges.append((k, q))
    return MetricMeasureGraph.from_edges(len(cells), np.array(edges, dtype=np.int64).reshape(-1, 2),
                                         measure=measure, name=f"vicsek_tree({level})",
                                         coords=cells, cap=cap)


def cable_refinement(base: MetricMeasureGraph, m: int, cap: int = VERTEX_CAP) -> MetricMeasureGraph:
    """Subdivide every edge of ``base`` into ``m`` segments.

    Segment lengths are ``l/m`` and segment conductances ``w*m`` (resistance
    is additive along the cable).  Each vertex receives, for every incident
    segment cut from an edge of conductance ``w``, mass ``w/(2m)``; interior
    cable vertices therefore carry ``w/m`` and all jump rates equal ``2m^2``
    on a unit-weight base.
    """
    if m < 1:
        raise SpaceError("refinement factor must be >= 1")
    nnew = base.n + len(base.edges) * (m - 1)
    if nnew > cap:
        raise ResourceCapError(f"cable_refinement would create {nnew} vertices > cap {cap}")
    edges, cond, lens = [], [], []
    nxt = base.n
    for (u, v), w, ln in zip(base.edges, base.conductance, base.length):
        chain = [int(u)] + list(range(nxt, nxt + m - 1)) + [int(v)]
        nxt += m - 1
        for a, b in zip(chain[:-1], chain[1:]):
            edges.append((a, b))
            cond.append(w * m)
            lens.append(ln / m)
    edges = np.array(edges, dtype=np.int64)
    cond = np.array(cond)
    seg_mass = cond / (2.0 * m * m)
    mu = np.bincount(edges[:, 0], weights=seg_mass, minlength=nxt) + np.bincount(
        edges[:, 1], weights=seg_mass, minlength=nxt)
    return MetricMeasureGraph.from_edges(nxt, edges, cond, np.array(lens), measure=mu,
                                         name=f"cable({base.name},{m})", cap=cap)


def star_graph(leaves: int, measure="conductance") -> MetricMeasureGraph:
    e = np.stack([np.zeros(leaves, dtype=np.int64), np.arange(1, leaves + 1)], axis=1)
    return MetricMeasureGraph.from_edges(leaves + 1, e, measure=measure, name=f"star({leaves})")


def complete_graph(n: int, conductance: float = 1.0, measure="conductance") -> MetricMeasureGraph:
    iu = np.triu_indices(n, 1)
    e = np.stack(iu, axis=1)
    return MetricMeasureGraph.from_edges(n, e, np.full(len(e), conductance), measure=measure,
                                         name=f"complete({n})")


def random_connected(n: int, rng: np.random.Generator, extra: float = 0.1,
                     weights: tuple[float, float] = (0.5, 2.0), measure="conductance",
                     lengths: bool = False) -> MetricMeasureGraph:
    """Random spanning tree plus each remaining pair with probability ``extra``."""
    perm = rng.permutation(n)
    edges = set()
    for i in range(1, n):
        j = int(rng.integers(0, i))
        a, b = int(perm[i]), int(perm[j])
        edges.add((min(a, b), max(a, b)))
    if n > 2 and extra > 0:
        iu, ju = np.triu_indices(n, 1)
        keep = rng.random(len(iu)) < extra
        edges.update(zip(iu[keep].tolist(), ju[keep].tolist()))
    e = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)
    w = rng.uniform(*weights, size=len(e))
    ln = rng.uniform(0.5, 1.5, size=len(e)) if lengths else None
    if measure == "random":
        measure = rng.uniform(0.5, 2.0, size=n)
    return MetricMeasureGraph.from_edges(n, e, w, ln, measure=measure, name=f"random({n})")


def explicit(edges: Sequence[Sequence[float]], n: int | None = None, measure="conductance",
             name: str = "explicit") -> MetricMeasureGraph:
    """Build from rows ``(u, v[, w[, l]])``."""
    rows = [tuple(r) for r in edges]
    if not rows:
        if n == 1:
            return MetricMeasureGraph.from_edges(1, np.empty((0, 2)), measure=measure, name=name)
        raise SpaceError("explicit: empty edge list")
    e = np.array([[r[0], r[1]] for r in rows], dtype=np.int64)
    w = np.array([r[2] if len(r) > 2 else 1.0 for r in rows], dtype=float)
    ln = np.array([r[3] if len(r) > 3 else 1.0 for r in rows], dtype=float)
    if n is None:
        n = int(e.max()) + 1
    return MetricMeasureGraph.from_edges(n, e, w, ln, measure=measure, name=name)


_GENERATORS = ("lattice_box", "torus", "path", "sierpinski_gasket", "vicsek_tree",
               "cable_refinement", "explicit", "star", "complete")


def build_space(desc: Mapping[str, Any]) -> MetricMeasureGraph:
    """Dispatch a generator descriptor such as ``{"kind": "lattice_box", "dims": 2, "side": 61}``."""
    if not isinstance(desc, Mapping) or "kind" not in desc:
        raise SpaceError("space descriptor needs a 'kind' field")
    kind = desc["kind"]
    measure = desc.get("measure", "conductance")
    cap = int(desc.get("cap", VERTEX_CAP))

    def need(key):
        if key not in desc:
            raise SpaceError(f"space descriptor of kind {kind!r} is missing field {key!r}")
        val = desc[key]
        if isinstance(val, (int, float)) and not isinstance(val, bool) and val <= 0:
            raise SpaceError(f"space field {key!r} must be positive, got {val}")
        return val

    if kind == "lattice_box":
        return lattice_box(int(need("dims")), int(need("side")), bool(desc.get("periodic", False)),
                           measure, cap)
    if kind == "torus":
        return lattice_box(int(need("dims")), int(need("side")), True, measure, cap)
    if kind == "path":
        return lattice_box(1, int(need("n")), False, measure, cap)
    if kind == "sierpinski_gasket":
        return sierpinski_gasket(int(need("level")), measure, cap)
    if kind == "vicsek_tree":
        return vicsek_tree(int(need("level")), measure, cap)
    if kind == "cable_refinement":
        return cable_refinement(build_space(need("base")), int(need("m")), cap)
    if kind == "explicit":
        return explicit(need("edges"), desc.get("n"), measure)
    if kind == "star":
        return star_graph(int(need("leaves")), measure)
    if kind == "complete":
        return complete_graph(int(need("n")), measure=measure)
    raise SpaceError(f"unknown space kind {kind!r}; expected one of {_GENERATORS}")


# ---------------------------------------------------------------------------
# I/O

def write_space(space: MetricMeasureGraph, edge_path, measure_path) -> None:
    """Edge list ``u v w_uv l_uv`` and measure file ``v mu_v``."""
    with open(edge_path, "w") as fh:
        for (u, v), w, ln in zip(space.edges, space.conductance, space.length):
            fh.write(f"{u} {v} {float(w)!r} {float(ln)!r}\n")
    with open(measure_path, "w") as fh:
        for v, m in enumerate(space.measure):
            fh.write(f"{v} {float(m)!r}\n")


def read_space(edge_path, measure_path, name="file") -> MetricMeasureGraph:
    rows = np.loadtxt(edge_path, ndmin=2)
    mrows = np.loadtxt(measure_path, ndmin=2)
    n = int(mrows[:, 0].max()) + 1
    mu = np.zeros(n)
    mu[mrows[:, 0].astype(int)] = mrows[:, 1]
    return MetricMeasureGraph.from_edges(n, rows[:, :2].astype(np.int64), rows[:, 2], rows[:, 3],
                                         measure=mu, name=name)


# ---------------------------------------------------------------------------
# balls and volumes

def ball(space: MetricMeasureGraph, x: int, r: float) -> np.ndarray:
    """Sorted vertex ids of ``B(x, r) = {y : d(x, y) <= r}``; empty for ``r < 0``."""
    if r < 0:
        return np.empty(0, dtype=np.int64)
    d = space.dist_from(x, limit=r if r < math.inf else math.inf)
    return np.flatnonzero(_within(d, r))


def volume(space: MetricMeasureGraph, x: int, r: float) -> float:
    return float(space.measure[ball(space, x, r)].sum())


@dataclass
class VolumeProfile:
    center: int
    radii: np.ndarray
    values: np.ndarray


def volume_profile(space: MetricMeasureGraph, x: int, radii: Iterable[float]) -> VolumeProfile:
    radii = np.asarray(sorted(radii), dtype=float)
    d = space.dist_from(x)
    order = np.argsort(d, kind="stable")
    ds = d[order]
    cm = np.cumsum(space.measure[order])
    idx = np.searchsorted(ds, radii + _RTOL * np.maximum(1.0, np.abs(radii)), side="right")
    vals = np.where(idx > 0, cm[np.maximum(idx - 1, 0)], 0.0)
    return VolumeProfile(int(x), radii, vals)


def all_volumes(space: MetricMeasureGraph, r: float) -> np.ndarray:
    """``V(y, r)`` for every vertex ``y``."""
    key = ("allvol", float(r))

    def build():
        if space.n <= ALL_PAIRS_CAP:
            D = space.distances()
            return (_within(D, r)).astype(float) @ space.measure
        out = np.empty(space.n)
        for lo in range(0, space.n, 256):
            idx = np.arange(lo, min(space.n, lo + 256))
            D = dijkstra(space.length_matrix, directed=False, indices=idx, limit=r + 1e-9)
            out[idx] = (_within(D, r)).astype(float) @ space.measure
        return out
    return space._cached(key, build)


def cable_volume(space: MetricMeasureGraph, x: int, radii) -> np.ndarray:
    """Volume of balls in the cable system of ``space``.

    Each vertex's mass is spread uniformly over the near halves of its
    incident edges, in proportion to conductance, so the total is
    ``mu(X)``.  Unlike the vertex-count volume this is continuous in ``r``
    and free of lattice-scale staircase effects; it is comparable to
    ``V(x, r)`` up to the doubling constant.
    """
    radii = np.atleast_1d(np.asarray(radii, dtype=float))
    d = space.dist_from(x)
    u, v = space.edges[:, 0], space.edges[:, 1]
    w, ln = space.conductance, space.length
    degw = space.weighted_degree
    out = np.zeros(len(radii))
    for p, q in ((u, v), (v, u)):
        mass = space.measure[p] * w / degw[p]
        half = ln / 2.0
        for k, r in enumerate(radii):
            a = np.clip(r - d[p], 0.0, half)
            sb = np.maximum(0.0, d[q] + ln - r)
            bl = np.clip(half - sb, 0.0, half)
            cover = np.where(a >= sb, half, a + bl)
            out[k] += float(np.sum(mass * cover / half))
    # isolated single vertex
    if len(space.edges) == 0:
        out[:] = space.measure[x]
    return out


# ---------------------------------------------------------------------------
# volume conditions

@dataclass
class DoublingEstimate:
    c_vd: float
    alpha: float
    witness: tuple[int, float]
    ratios: np.ndarray


def doubling_constant(space: MetricMeasureGraph, centers: Iterable[int],
                      radii: Iterable[float]) -> DoublingEstimate:
    """Max of ``V(x, 2r) / V(x, r)`` over the sampled ``(x, r)``."""
    centers = [int(c) for c in centers]
    radii = np.asarray(list(radii), dtype=float)
    if not centers or len(radii) == 0:
        raise SpaceError("doubling_constant needs non-empty centers and radii")
    ratios = np.empty((len(centers), len(radii)))
    for i, x in enumerate(centers):
        prof = volume_profile(space, x, np.r_[radii, 2 * radii])
        v = dict(zip(prof.radii.tolist(), prof.values.tolist()))
        ratios[i] = [v[2 * r] / v[r] for r in radii]
    i, j = np.unravel_index(int(np.argmax(ratios)), ratios.shape)
    c = float(ratios[i, j])
    return DoublingEstimate(c, math.log2(c), (centers[i], float(radii[j])), ratios)


@dataclass
class LinearGrowth:
    c_estimate: float
    sup_volume: float
    passed: bool
    witness: tuple[int, float]


def check_linear_growth(space: MetricMeasureGraph, centers: Iterable[int],
                        radii: Iterable[float]) -> LinearGrowth:
    """``inf V(x, r)/r`` and ``sup V(x, r)`` over samples; passes iff the inf is positive."""
    best = (math.inf, (-1, 0.0))
    sup = 0.0
    radii = [float(r) for r in radii if r > 0]
    for x in centers:
        prof = volume_profile(space, int(x), radii)
        for r, vol in zip(prof.radii, prof.values):
            sup = max(sup, float(vol))
            if vol / r < best[0]:
                best = (float(vol / r), (int(x), float(r)))
    return LinearGrowth(best[0], sup, best[0] > 0, best[1])


@dataclass
class RelativeVolume:
    value: float
    per_radius: np.ndarray
    radii: np.ndarray
    truncated: np.ndarray  # inner ball radius clipped to the space


def check_relative_volume(space: MetricMeasureGraph, x: int, beta: float,
                          radii: Iterable[float]) -> RelativeVolume:
    """Finite-range surrogate of the relative-volume condition.

    For each ``r`` computes ``min_{y in B(x, r^beta V(x,r))} V(y, r) / V(x, r)``
    with the inner ball intersected with the space; returns the minimum
    over the grid.
    """
    if beta <= 1:
        raise SpaceError("beta must exceed 1")
    radii = np.asarray(sorted(radii), dtype=float)
    dx = space.dist_from(x)
    ecc = float(dx.max())
    vals, trunc = [], []
    for r in radii:
        vx = volume(space, x, r)
        R = r ** beta * vx
        inner = np.flatnonzero(_within(dx, R))
        vy = all_volumes(space, r)[inner]
        vals.append(float(vy.min() / vx))
        trunc.append(R >= ecc)
    vals = np.array(vals)
    return RelativeVolume(float(vals.min()), vals, radii, np.array(trunc))


# ---------------------------------------------------------------------------
# nets

@dataclass
class NetCover:
    """Greedy t-net: centers pairwise more than ``t`` apart, elements ``B(k_i, t)``."""

    space: MetricMeasureGraph
    scale: float
    centers: np.ndarray
    elements: list
    multiplicity: np.ndarray

    @property
    def c_over(self) -> int:
        """Measured maximum number of elements containing one vertex."""
        return int(self.multiplicity.max())

    def c_over_bound(self, c_vd: float) -> float:
        """Doubling bound ``C_VD * ((t + 2t)/(t/2))^alpha = C_VD * 6^alpha``."""
        return c_vd * 6.0 ** math.log2(c_vd)

    def covers(self) -> bool:
        return bool(np.all(self.multiplicity >= 1))

    def half_balls_disjoint(self) -> bool:
        seen = np.zeros(self.space.n, dtype=np.int64)
        for k in self.centers:
            seen[ball(self.space, int(k), self.scale / 2.0)] += 1
        return bool(seen.max() <= 1)


def build_net(space: MetricMeasureGraph, t: float) -> NetCover:
    """Greedy maximal packing in vertex-id order with strict separation ``> t``."""
    if not t > 0:
        raise SpaceError("net scale must be positive")
    mind = np.full(space.n, np.inf)
    centers = []
    for v in range(space.n):
        if mind[v] > t + _RTOL * max(1.0, t):
            centers.append(v)
            d = space.dist_from(v, limit=t * 1.5 + 1e-9)
            np.minimum(mind, d, out=mind)
    elements = [ball(space, k, t) for k in centers]
    mult = np.zeros(space.n, dtype=np.int64)
    for el in elements:
        mult[el] += 1
    return NetCover(space, float(t), np.array(centers, dtype=np.int64), elements, mult)


@dataclass
class OverlapCount:
    count: int
    volume_bound: float
    vd_bound: float | None


def count_overlapping(net: NetCover, x: int, s: float, c_vd: float | None = None) -> OverlapCount:
    """Exact number of net elements meeting ``B(x, s)`` with two upper bounds.

    ``volume_bound`` packs the disjoint half-balls of the overlapping
    elements into ``B(x, s + 2t)``; ``vd_bound`` is the doubling polynomial
    ``C_VD ((2s + 3t) / (t/2))^alpha``.
    """
    space, t = net.space, net.scale
    inball = np.zeros(space.n, dtype=bool)
    inball[ball(space, x, s)] = True
    hits = [i for i, el in enumerate(net.elements) if inball[el].any()]
    if hits:
        floor = min(volume(space, int(net.centers[i]), t / 2.0) for i in hits)
        vb = volume(space, x, s + 2 * t) / floor
    else:
        vb = 0.0
    vd = None if c_vd is None else c_vd * ((2 * s + 3 * t) / (t / 2.0)) ** math.log2(c_vd)
    return OverlapCount(len(hits), vb, vd)


def central_vertices(space: MetricMeasureGraph, k: int = 1, probes: int = 8) -> np.ndarray:
    """Vertices of (approximately) minimal eccentricity.

    Eccentricity is measured against a set of peripheral probe vertices
    found by farthest-point sweeps, which is exact on boxes and gaskets.
    """
    d = space.dist_from(0)
    far = [int(np.argmax(d))]
    mind = space.dist_from(far[0]).copy()
    for _ in range(probes - 1):
        nxt = int(np.argmax(mind))
        if mind[nxt] == 0:
            break
        far.append(nxt)
        np.minimum(mind, space.dist_from(nxt), out=mind)
    ecc = np.max(np.stack([space.dist_from(p) for p in far]), axis=0)
    return np.argsort(ecc, kind="stable")[:k]


def random_connected_subset(space: MetricMeasureGraph, size: int, rng: np.random.Generator) -> np.ndarray:
    """Connected vertex set of ``size`` vertices grown by randomised breadth-first search."""
    size = max(1, min(int(size), space.n))
    W = space.conductance_matrix
    start = int(rng.integers(space.n))
    chosen = [start]
    member = np.zeros(space.n, dtype=bool)
    member[start] = True
    frontier = [start]
    while frontier and len(chosen) < size:
        v = frontier.pop(0)
        nb = W.indices[W.indptr[v]:W.indptr[v + 1]].copy()
        rng.shuffle(nb)
        for u in nb:
            if not member[u] and len(chosen) < size:
                member[u] = True
                chosen.append(int(u))
                frontier.append(int(u))
    return np.sort(np.array(chosen, dtype=np.int64))
