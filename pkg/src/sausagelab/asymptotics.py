"""Sausage scaling experiments, the exact path-graph oracle and bound certificates.

The quantity of interest is ``L(t) = -log E^x[exp(-nu mu(C_s^eps))]`` at
``s = t^beta V(x, t)``, which should stay comparable to ``V(x, t)``.  On
path graphs the visited set is an interval, so the moment is computed
exactly by :func:`exact_interval_dp`; elsewhere it is estimated by
simulation.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.stats import poisson

from ._core import backend as _default_backend
from .obstacles import ObstacleField, negative_moment
from .space import MetricMeasureGraph, SpaceError, ball, build_net, build_space, central_vertices, volume
from .spectral import dirichlet_eigenvalue, log_survival, net_eigenvalue_lower_bound
from .walker import exit_tail_bound

DP_REL_TOL = 1e-10
POISSON_TAIL = 1e-16


class ConfigError(ValueError):
    """Malformed experiment description; ``field`` names the offending entry."""

    def __init__(self, field_name: str, msg: str):
        super().__init__(f"{field_name}: {msg}")
        self.field = field_name


# ---------------------------------------------------------------------------
# exact interval DP

def path_order(space: MetricMeasureGraph) -> np.ndarray:
    """Vertices of a path graph listed from one end to the other."""
    deg = np.diff(space.conductance_matrix.indptr)
    if space.n == 1:
        return np.zeros(1, dtype=np.int64)
    if deg.max() > 2 or len(space.edges) != space.n - 1:
        raise SpaceError("space is not a path graph")
    W = space.conductance_matrix
    order = [int(np.flatnonzero(deg == 1)[0])]
    prev = -1
    while len(order) < space.n:
        v = order[-1]
        nb = [int(u) for u in W.indices[W.indptr[v]:W.indptr[v + 1]] if u != prev]
        prev = v
        order.append(nb[0])
    return np.array(order, dtype=np.int64)


@dataclass
class DPResult:
    value: float
    log_value: float
    error_bound: float  # absolute bound on the truncated mass
    width_cap: int
    n_states: int
    k_max: int


def _interval_chain(space, order, i0, nu, eps, L):
    """Substochastic uniformised chain on ``(l, r, j)`` states with Feynman-Kac weights."""
    n = len(order)
    mu = space.measure[order]
    W = space.conductance_matrix
    # coordinates and conductances along the path
    wl = np.zeros(n)  # conductance between i-1 and i
    for i in range(1, n):
        wl[i] = W[order[i - 1], order[i]]
    lm = space.length_matrix
    seg = np.array([lm[order[i - 1], order[i]] for i in range(1, n)])
    coord = np.r_[0.0, np.cumsum(seg)]
    tol = 1e-9 * max(1.0, eps)
    lo_of = np.searchsorted(coord, coord - eps - tol, side="left")
    hi_of = np.searchsorted(coord, coord + eps + tol, side="right") - 1
    cmu = np.r_[0.0, np.cumsum(mu)]

    def dmass(a, b):
        return cmu[hi_of[b] + 1] - cmu[lo_of[a]]

    rate_left = wl / mu  # i -> i-1
    rate_right = np.r_[wl[1:], 0.0] / mu  # i -> i+1
    q = rate_left + rate_right
    lmax = min(i0, L)
    rmax = min(n - 1 - i0, L)
    ls, rs, js = [], [], []
    for l in range(lmax + 1):
        for r in range(min(rmax, L - l) + 1):
            w = l + r
            ls.append(np.full(w + 1, l))
            rs.append(np.full(w + 1, r))
            js.append(np.arange(w + 1))
    ls, rs, js = np.concatenate(ls), np.concatenate(rs), np.concatenate(js)
    N = len(ls)
    index = -np.ones((lmax + 1, rmax + 1, L + 1), dtype=np.int64)
    index[ls, rs, js] = np.arange(N)
    a = i0 - ls
    b = i0 + rs
    v = a + js
    Lam = float(q[a.min():b.max() + 1].max())
    rows, cols, vals = [np.arange(N)], [np.arange(N)], [1.0 - q[v] / Lam]
    drop = np.zeros(N)
    base = dmass(a, b)
    # left jumps
    pl = rate_left[v] / Lam
    inner = (js > 0)
    rows.append(index[ls[inner], rs[inner], js[inner] - 1]); cols.append(np.flatnonzero(inner)); vals.append(pl[inner])
    ext = (js == 0) & (a > 0)
    grow = ext & (ls + 1 + rs <= L) & (ls + 1 <= lmax)
    cut = ext & ~grow
    src = np.flatnonzero(grow)
    fk = np.exp(-nu * (dmass(a[src] - 1, b[src]) - base[src]))
    rows.append(index[ls[src] + 1, rs[src], 0]); cols.append(src); vals.append(pl[src] * fk)
    src = np.flatnonzero(cut)
    drop[src] += pl[src] * np.exp(-nu * (dmass(a[src] - 1, b[src]) - base[src]))
    # right jumps
    pr = rate_right[v] / Lam
    inner = (js < ls + rs)
    rows.append(index[ls[inner], rs[inner], js[inner] + 1]); cols.append(np.flatnonzero(inner)); vals.append(pr[inner])
    ext = (js == ls + rs) & (b < n - 1)
    grow = ext & (ls + rs + 1 <= L) & (rs + 1 <= rmax)
    cut = ext & ~grow
    src = np.flatnonzero(grow)
    fk = np.exp(-nu * (dmass(a[src], b[src] + 1) - base[src]))
    rows.append(index[ls[src], rs[src] + 1, ls[src] + rs[src] + 1]); cols.append(src); vals.append(pr[src] * fk)
    src = np.flatnonzero(cut)
    drop[src] += pr[src] * np.exp(-nu * (dmass(a[src], b[src] + 1) - base[src]))
    P = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    P.sum_duplicates()
    P.sort_indices()
    init = np.zeros(N)
    i_start = index[0, 0, 0]
    init[i_start] = 1.0
    log_init = -nu * dmass(np.array([i0]), np.array([i0]))[0]
    return P, drop, init, Lam, log_init


def exact_interval_dp(space: MetricMeasureGraph, x: int, s: float, nu: float, eps: float,
                      width: int | None = None, rel_tol: float = DP_REL_TOL,
                      backend=None) -> DPResult:
    """Exact ``E^x[exp(-nu mu(C_s^eps))]`` on a path graph.

    The walk is lifted to states (leftmost visited, rightmost visited,
    position) and the weight ``exp(-nu mu)`` is charged incrementally each
    time the visited interval grows, so the expectation is the total mass
    of a substochastic chain at time ``s``.  That chain is evaluated by
    uniformisation with log-scale renormalisation, so values far below the
    double range are returned through ``log_value``.  Intervals wider than
    ``width`` are cut; the cut mass is tracked, and ``width`` is enlarged
    until it is below ``rel_tol`` times the value.
    """
    be = backend or _default_backend
    order = path_order(space)
    pos = np.empty(space.n, dtype=np.int64)
    pos[order] = np.arange(space.n)
    i0 = int(pos[x])
    n = space.n
    if s < 0:
        raise ValueError("s must be >= 0")
    if nu == 0:
        return DPResult(1.0, 0.0, 0.0, 0, 0, 0)
    if width is None:
        qbar = float(space.rates.mean())
        mbar = float(space.measure.mean())
        wstar = (max(s, 1.0) * qbar * math.pi ** 2 / max(nu * mbar, 1e-12)) ** (1.0 / 3.0)
        width = int(min(n - 1, math.ceil(1.5 * wstar) + 8))
    width = max(0, min(int(width), n - 1))
    while True:
        P, drop, init, Lam, log_init = _interval_chain(space, order, i0, nu, eps, width)
        rt = Lam * s
        k_max = int(poisson.isf(POISSON_TAIL, rt)) + 10 if rt > 0 else 0
        logacc, logdrop = be.uniformized_log_sum(
            P.indptr.astype(np.int64), P.indices.astype(np.int64), P.data.astype(np.float64),
            drop, init, float(rt), int(k_max))
        logv = log_init + logacc
        logerr = log_init + logdrop
        if width >= n - 1 or logerr - logv < math.log(rel_tol):
            break
        width = min(n - 1, int(math.ceil(width * 1.5)))
    return DPResult(math.exp(logv), logv, math.exp(logerr) if width < n - 1 else 0.0,
                    width, P.shape[0], k_max)


# ---------------------------------------------------------------------------
# configuration and scaling experiment

MODES = ("mc", "exact-dp", "both")


@dataclass
class ExperimentConfig:
    space: Mapping[str, Any]
    x: Any = "center"
    beta: float = 2.0
    nu: float = 1.0
    eps: float = 0.5
    t_grid: list = field(default_factory=lambda: [3, 4, 5, 6])
    N: float = 1.0
    n_paths: int = 10000
    seed: int = 0
    mode: str = "exact-dp"
    workers: int = 1

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ExperimentConfig":
        if "space" not in d:
            raise ConfigError("space", "missing space descriptor")
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(sorted(extra)[0], "unknown field")
        cfg = cls(**dict(d))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not isinstance(self.space, Mapping):
            raise ConfigError("space", "must be an object")
        tg = np.asarray(self.t_grid, dtype=float)
        if tg.ndim != 1 or len(tg) == 0 or np.any(tg <= 0) or np.any(np.diff(tg) <= 0):
            raise ConfigError("t_grid", "must be a nonempty positive increasing list")
        if not self.beta > 1:
            raise ConfigError("beta", "must be > 1")
        if self.nu < 0:
            raise ConfigError("nu", "must be >= 0")
        if self.eps < 0:
            raise ConfigError("eps", "must be >= 0")
        if self.N < 1:
            raise ConfigError("N", "must be >= 1")
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}")
        if int(self.n_paths) < 2:
            raise ConfigError("n_paths", "must be >= 2")


def resolve_vertex(space: MetricMeasureGraph, x) -> int:
    if x == "center" or x is None:
        return int(central_vertices(space, 1)[0])
    x = int(x)
    if not 0 <= x < space.n:
        raise ConfigError("x", f"vertex {x} outside 0..{space.n - 1}")
    return x


@dataclass
class ScalingRow:
    t: float
    s: float
    volume: float
    moment: float | None
    log_moment: float | None
    L: float | None
    ratio: float | None
    se: float | None
    ci_low: float | None
    ci_high: float | None
    mode: str
    flag: str
    exit_log_survival: float
    upper_L: float  # nu V - log P[tau > s] from the lower-bound chain
    mc_moment: float | None = None
    mc_se: float | None = None


@dataclass
class ScalingReport:
    x: int
    beta: float
    nu: float
    eps: float
    rows: list
    c_low: float | None
    c_high: float | None
    band_ratio: float | None
    differences: list
    monotone_divergence: bool
    chain_holds: bool

    def as_dict(self) -> dict:
        d = asdict(self)
        return d


def band_diagnostics(ratios) -> tuple[float, float, float, list, bool]:
    """Band ``[min, max]`` and the monotone-divergence flag.

    Divergence means the successive differences all share a sign and their
    magnitudes do not decrease, i.e. the sequence is moving away at a
    non-slowing pace rather than settling.
    """
    r = np.asarray(ratios, dtype=float)
    lo, hi = float(r.min()), float(r.max())
    d = np.diff(r)
    if len(d) < 2:
        return lo, hi, hi / lo if lo > 0 else math.inf, d.tolist(), False
    same_sign = bool(np.all(d > 0) or np.all(d < 0))
    growing = bool(np.all(np.diff(np.abs(d)) >= 0))
    return lo, hi, (hi / lo if lo > 0 else math.inf), d.tolist(), same_sign and growing


def run_scaling_experiment(config: ExperimentConfig, space: MetricMeasureGraph | None = None) -> ScalingReport:
    """``L(t)`` and ``L(t) / V(x, t)`` over the configured grid."""
    config.validate()
    space = build_space(config.space) if space is None else space
    x = resolve_vertex(space, config.x)
    rows = []
    for k, t in enumerate(config.t_grid):
        t = float(t)
        V = volume(space, x, t)
        s = t ** config.beta * V
        B = ball(space, x, t - config.eps)
        lsurv = log_survival(space, B, x, s)
        upper = config.nu * V - lsurv
        row = ScalingRow(t, s, V, None, None, None, None, None, None, None, config.mode, "", lsurv, upper)
        if config.mode in ("exact-dp", "both"):
            dp = exact_interval_dp(space, x, s, config.nu, config.eps)
            row.moment, row.log_moment = dp.value, dp.log_value
            row.L = -dp.log_value
            row.se, row.ci_low, row.ci_high = 0.0, row.L, row.L
        if config.mode in ("mc", "both"):
            est = negative_moment(space, x, s, config.nu, config.eps, config.n_paths,
                                  seed=config.seed, stream=k, workers=config.workers)
            row.mc_moment, row.mc_se = est.mean, est.se
            if config.mode == "mc":
                if est.mean <= 0 or est.mean - 3 * est.se <= 0:
                    row.flag = "use exact-dp"
                else:
                    row.moment = est.mean
                    row.log_moment = math.log(est.mean)
                    row.L = -row.log_moment
                    row.se = est.se / est.mean  # delta method on -log
                    lo, hi = est.ci95()
                    row.ci_low = -math.log(hi)
                    row.ci_high = -math.log(lo) if lo > 0 else math.inf
        if row.L is not None:
            row.L = max(row.L, 0.0)
            row.ratio = row.L / V
        rows.append(row)
    ratios = [r.ratio for r in rows if r.ratio is not None]
    if ratios and config.nu > 0:
        lo, hi, band, diffs, div = band_diagnostics(ratios)
    elif ratios:
        lo = hi = 0.0
        band, diffs, div = 1.0, [0.0] * (len(ratios) - 1), False
    else:
        lo = hi = band = None
        diffs, div = [], False
    chain = all(r.L is None or r.L <= r.upper_L + 1e-8 * max(1.0, r.upper_L) for r in rows)
    return ScalingReport(x, config.beta, config.nu, config.eps, rows, lo, hi, band, diffs, div, chain)


# ---------------------------------------------------------------------------
# lower bound

@dataclass
class LowerBoundCertificate:
    t: float
    rho: float
    s: float
    volume: float
    log_exit_survival: float  # log P^x[tau_B(x, rho) > s]
    log_moment: float
    moment_mode: str
    inequality_i: bool
    A: float | None = None
    C_prime: float | None = None
    c: float | None = None
    lambda_A: float | None = None
    scaled_lambda_A: float | None = None
    log_certificate: float | None = None
    passed: bool | None = None


def lower_bound_certificate(space: MetricMeasureGraph, x: int, t: float, nu: float, eps: float,
                            beta: float, n_paths: int = 20000, seed: int = 0,
                            workers: int = 1) -> LowerBoundCertificate:
    """Exact ``P^x[tau_{B(x, t - eps)} > s]`` and the check
    ``E^x[exp(-nu mu(C_s^eps))] >= exp(-nu V(x, t)) P^x[tau > s]``.

    The moment comes from :func:`exact_interval_dp` on path graphs and from
    simulation otherwise (then the check allows three standard errors).
    """
    rho = t - eps
    B = ball(space, x, rho)
    if len(B) == space.n:
        raise SpaceError("ball saturates the space; there is nothing to exit to")
    V = volume(space, x, t)
    s = t ** beta * V
    lsurv = log_survival(space, B, x, s)
    try:
        path_order(space)
        is_path = True
    except SpaceError:
        is_path = False
    if is_path:
        dp = exact_interval_dp(space, x, s, nu, eps)
        lm, mode = dp.log_value, "exact-dp"
        ok = lm >= -nu * V + lsurv - 1e-8 * max(1.0, abs(lm))
    else:
        est = negative_moment(space, x, s, nu, eps, n_paths, seed=seed, workers=workers)
        lm = math.log(est.mean) if est.mean > 0 else -math.inf
        mode = "mc"
        ok = est.mean + 3 * est.se >= math.exp(-nu * V + lsurv)
    return LowerBoundCertificate(t, rho, s, V, lsurv, lm, mode, bool(ok))


@dataclass
class SurvivalConstantsFit:
    A: float
    c: float
    C_prime: float
    passed: bool
    table: list  # per A: (A, c, C', min scaled eigenvalue, max scaled eigenvalue)
    certificates: list


def fit_survival_constants(space: MetricMeasureGraph, x: int, ts, eps: float, beta: float,
               A_grid=None, c_floor: float = 1e-3, nu: float = 1.0, sigma=None) -> SurvivalConstantsFit:
    """Constants making ``P^x[tau_{B(x,rho)} > sigma] >= c/(2V(x, rho^(1/beta))) e^{-C' rho} e^{-sigma lambda(B(x, A rho))}``
    hold for every ``t`` in ``ts`` (``rho = t - eps``, ``sigma = t^beta V(x, t)`` by default).

    For each ``A`` the exponent constant ``C' >= 0`` is the least-squares
    slope of the log-gap against ``rho`` and ``c`` the largest prefactor
    consistent with all grid points.  The reported ``A`` is the largest one
    in ``A_grid`` (all ``< 1``) whose ``c`` is at least ``c_floor``.
    """
    if A_grid is None:
        A_grid = np.round(np.arange(0.1, 0.951, 0.05), 3)
    certs = [lower_bound_certificate(space, x, float(t), nu, eps, beta) for t in ts]
    rhos = np.array([c.rho for c in certs])
    sig = np.array([c.s for c in certs]) if sigma is None else np.broadcast_to(np.asarray(sigma, float), rhos.shape)
    lsurv = np.array([log_survival(space, ball(space, x, r), x, sg) for r, sg in zip(rhos, sig)])
    vsmall = np.array([volume(space, x, r ** (1.0 / beta)) for r in rhos])
    table, best = [], None
    for A in A_grid:
        lam = np.array([dirichlet_eigenvalue(space, ball(space, x, A * r)).value for r in rhos])
        g = lsurv + np.log(2 * vsmall) + sig * lam
        if len(rhos) > 1 and np.ptp(rhos) > 0:
            slope = np.polyfit(rhos, g, 1)[0]
            Cp = max(0.0, -float(slope))
        else:
            Cp = 0.0
        logc = float(np.min(g + Cp * rhos))
        scaled = lam * (A * rhos) ** beta
        table.append((float(A), math.exp(logc), Cp, float(scaled.min()), float(scaled.max())))
        if math.exp(logc) >= c_floor:
            best = (float(A), math.exp(logc), Cp, lam, scaled)
    if best is None:
        return SurvivalConstantsFit(math.nan, 0.0, math.nan, False, table, certs)
    A, c, Cp, lam, scaled = best
    for cert, r, sg, lm, sc, vs, ls in zip(certs, rhos, sig, lam, scaled, vsmall, lsurv):
        cert.A, cert.C_prime, cert.c = A, Cp, c
        cert.lambda_A, cert.scaled_lambda_A = float(lm), float(sc)
        cert.log_certificate = math.log(c) - math.log(2 * vs) - Cp * r - sg * lm
        cert.passed = bool(cert.log_certificate <= ls + 1e-9 and cert.inequality_i)
    return SurvivalConstantsFit(A, c, Cp, all(ce.passed for ce in certs), table, certs)


# ---------------------------------------------------------------------------
# upper bound chain on one realisation

@dataclass
class UpperBoundRecord:
    s: float
    radius: float
    log_survival: float  # log P^x[T ~ > s], T~ = T ^ tau_B(x, Ns)
    eigenvalue: float  # lambda(B(x, Ns) minus obstacles)
    log_spectral_bound: float
    spectral_ok: bool
    net_bound: float
    net_ok: bool
    net_vacuous: bool
    exit_probability: float
    exit_bound: float | None
    exit_ok: bool | None
    flag: str

    @property
    def holds(self) -> bool:
        return self.spectral_ok and self.net_ok and self.exit_ok is not False


def upper_bound_diagnostic(space: MetricMeasureGraph, x: int, s: float, field: ObstacleField,
                           beta: float, net_scale: float, N: float = 1.0,
                           exit_fit: tuple[float, float] | None = None,
                           tol: float = 1e-9) -> UpperBoundRecord:
    """Exact check of the upper-bound chain on one obstacle realisation.

    * ``P[T~ > s] <= exp(-s lambda) sqrt(mu(D) / mu(x))`` where ``D`` is
      ``B(x, Ns)`` minus the obstacles and ``lambda = lambda(D)``;
    * ``lambda >= `` the net lower bound at scale ``net_scale``;
    * ``P[tau_B(x, Ns) < s] <= C exp(-c ((Ns)^beta / s)^(1/(beta-1)))`` when
      ``exit_fit = (c, C)`` is supplied.
    """
    R = N * s
    Bx = ball(space, x, R)
    # exit of the big ball
    if len(Bx) == space.n:
        pexit = 0.0
    else:
        pexit = float(-np.expm1(log_survival(space, Bx, x, s)))
    if exit_fit is not None:
        c, C = exit_fit
        eb = exit_tail_bound(R, s, beta, c, C)
        exit_ok = pexit <= eb + tol
    else:
        eb = exit_ok = None
    D = Bx[~field.obstacle[Bx]]
    if field.obstacle[x] or len(D) == 0:
        return UpperBoundRecord(s, R, -math.inf, math.inf, -math.inf, True, 0.0, True, True,
                                pexit, eb, exit_ok, "start covered by obstacles")
    lsurv = log_survival(space, D, x, s)
    lam = dirichlet_eigenvalue(space, D).value
    lbound = -s * lam + 0.5 * (math.log(space.measure[D].sum()) - math.log(space.measure[x]))
    spec_ok = lsurv <= lbound + tol * max(1.0, abs(lbound))
    net = build_net(space, net_scale)
    nb = net_eigenvalue_lower_bound(space, Bx, net, beta, field.obstacle_set, verify=False)
    net_ok = lam >= nb.bound - tol * max(1.0, nb.bound)
    return UpperBoundRecord(s, R, lsurv, lam, lbound, bool(spec_ok), nb.bound, bool(net_ok), nb.vacuous,
                            pexit, eb, exit_ok, "")
