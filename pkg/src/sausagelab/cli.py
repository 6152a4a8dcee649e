"""Command-line runner.

Usage::

    sausagelab <subcommand> --config run.json --out results/ [--workers N] [--seed S]

Subcommands: ``space-audit``, ``spectral-audit``, ``sausage``, ``survival``
and ``certify``.  Each run writes ``manifest.json`` first, then
``results_<subcommand>.csv`` (one measurement per row), a JSON summary and
``series_<name>.csv`` files for plotting.  ``SAUSAGELAB_SEED`` and
``SAUSAGELAB_WORKERS`` override the config; command-line flags override
both.

Exit status: 0 all assertions passed, 1 an assertion failed, 2 malformed
config, 3 resource cap exceeded.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import numpy as np

from . import __version__
from . import rng as _rng
from .asymptotics import (ConfigError, ExperimentConfig, fit_survival_constants, lower_bound_certificate,
                          resolve_vertex, run_scaling_experiment, upper_bound_diagnostic)
from .obstacles import annealed_survival, cramer_family, negative_moment, sample_field
from .space import (ResourceCapError, SpaceError, build_net, build_space, central_vertices,
                    check_linear_growth, check_relative_volume, doubling_constant, random_connected,
                    random_connected_subset, volume, volume_profile)
from .spectral import (GEFitError, eigenvalue_scaling, fit_ge_beta, poincare_constant,
                       poincare_sides, thirring_bound)
from .walker import exit_tail_check

SUBCOMMANDS = ("space-audit", "spectral-audit", "sausage", "survival", "certify")
SCHEMA_VERSION = 1
RESULT_COLUMNS = (("check", "str"), ("case", "str"), ("param", "float"), ("value", "float"),
                  ("reference", "float"), ("passed", "int"))

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_CAP = 0, 1, 2, 3


class AssertionFailure(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# manifest and output

@dataclass
class RunManifest:
    subcommand: str
    config_sha256: str
    master_seed: int
    version: str
    output_dir: str
    workers: int
    started: str
    seed_rule: str = _rng.DERIVATION_RULE
    schema_version: int = SCHEMA_VERSION
    finished: str | None = None
    status: str = "running"
    failures: list = field(default_factory=list)

    def write(self, out: Path) -> None:
        with open(out / "manifest.json", "w") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path: Path, columns, rows) -> None:
    """CSV with a ``name:type`` header."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{n}:{t}" for n, t in columns])
        for r in rows:
            w.writerow([_fmt(x) for x in r])


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (float, np.floating)):
        f = float(o)
        return f if math.isfinite(f) else str(f)
    return o


class Recorder:
    """Collects result rows, series and assertion outcomes for one run."""

    def __init__(self):
        self.rows = []
        self.series = {}
        self.summary = {}
        self.failures = []

    def row(self, check, case, param, value, reference=None, passed=None):
        self.rows.append((check, case, param, value, reference, passed))

    def expect(self, ok: bool, invariant: str, check: str = "", case: str = "", param=None, value=None,
               reference=None, record: bool = True):
        if record:
            self.row(check or invariant, case, param, value, reference, bool(ok))
        if not ok:
            self.failures.append(invariant)
        return ok

    def add_series(self, name: str, columns, rows):
        self.series[name] = (columns, rows)


# ---------------------------------------------------------------------------
# config helpers

def _get(cfg: Mapping, key: str, default=None, kind=None, required=False, path=""):
    name = f"{path}{key}"
    if key not in cfg:
        if required:
            raise ConfigError(name, "missing required field")
        return default
    v = cfg[key]
    if kind is not None:
        try:
            if kind is list:
                if not isinstance(v, list):
                    raise TypeError
            elif kind is dict:
                if not isinstance(v, dict):
                    raise TypeError
            elif kind is int:
                if isinstance(v, bool) or int(v) != v:
                    raise TypeError
                v = int(v)
            elif kind is float:
                if isinstance(v, bool):
                    raise TypeError
                v = float(v)
            else:
                v = kind(v)
        except (TypeError, ValueError):
            raise ConfigError(name, f"expected {getattr(kind, '__name__', kind)}, got {v!r}") from None
    return v


def _space(cfg):
    desc = _get(cfg, "space", kind=dict, required=True)
    if "kind" not in desc:
        raise ConfigError("space.kind", "missing required field")
    try:
        return build_space(desc)
    except ResourceCapError:
        raise
    except SpaceError as exc:
        raise ConfigError("space", str(exc)) from None


def _centers(space, cfg, key="centers", default=1):
    c = cfg.get(key, default)
    if isinstance(c, int) and not isinstance(c, bool):
        return [int(v) for v in central_vertices(space, c)]
    if isinstance(c, list):
        out = [int(v) for v in c]
        for v in out:
            if not 0 <= v < space.n:
                raise ConfigError(key, f"vertex {v} outside 0..{space.n - 1}")
        return out
    raise ConfigError(key, "expected an integer count or a list of vertices")


def _grid(cfg, key, default=None, required=False):
    g = cfg.get(key, default)
    if g is None:
        if required:
            raise ConfigError(key, "missing required field")
        return None
    if isinstance(g, dict):
        try:
            if "geom" in g:
                a, b, n = g["geom"]
                return np.geomspace(float(a), float(b), int(n))
            if "dyadic" in g:
                a, b = g["dyadic"]
                return np.array([2.0 ** k for k in range(int(a), int(b) + 1)])
        except (TypeError, ValueError):
            raise ConfigError(key, "bad grid specification") from None
        raise ConfigError(key, "grid object needs 'geom' or 'dyadic'")
    if not isinstance(g, list) or not g:
        raise ConfigError(key, "expected a nonempty list")
    try:
        return np.array([float(v) for v in g])
    except (TypeError, ValueError):
        raise ConfigError(key, "grid entries must be numbers") from None


# ---------------------------------------------------------------------------
# subcommands

def cmd_space_audit(cfg, rec: Recorder, seed: int, workers: int):
    space = _space(cfg)
    centers = _centers(space, cfg)
    radii = _grid(cfg, "radii", [1, 2, 4, 8])
    rec.summary["space"] = {"name": space.name, "n": space.n, "edges": int(len(space.edges)),
                            "total_measure": space.total_measure, "diameter": space.diameter}
    ser = []
    for x in centers:
        vp = volume_profile(space, x, radii)
        mono = bool(np.all(np.diff(vp.values) >= -1e-12))
        rec.expect(mono, "volume nondecreasing in r", "volume_monotone", str(x), None, None)
        for r, v in zip(vp.radii, vp.values):
            rec.row("volume", str(x), r, v)
            ser.append((x, r, v))
        sat = volume(space, x, space.diameter)
        rec.expect(abs(sat - space.total_measure) <= 1e-9 * space.total_measure,
                   "V(x, diameter) = mu(X)", "volume_saturation", str(x), space.diameter, sat,
                   space.total_measure)
    rec.add_series("volume", (("center", "int"), ("radius", "float"), ("volume", "float")), ser)
    dbl = doubling_constant(space, centers, radii)
    rec.row("doubling_constant", "", None, dbl.c_vd)
    rec.row("doubling_alpha", "", None, dbl.alpha)
    lg = check_linear_growth(space, centers, radii)
    rec.expect(lg.passed, "volume grows at least linearly", "linear_growth", "", None, lg.c_estimate)
    beta = cfg.get("beta")
    if beta is not None:
        for x in centers:
            rv = check_relative_volume(space, x, float(beta), radii)
            rec.row("relative_volume", str(x), float(beta), rv.value)
    for t in _grid(cfg, "net_scales", [2.0]):
        net = build_net(space, float(t))
        rec.expect(net.covers(), "net elements cover the space", "net_cover", "", t, len(net.centers))
        rec.expect(net.half_balls_disjoint(), "net half-balls disjoint", "net_packing", "", t, None)
        rec.row("net_c_over", "", t, net.c_over, net.c_over_bound(dbl.c_vd))
    ntri = int(cfg.get("metric_triples", 1000))
    if ntri > 0:
        g = _rng.seed_stream(seed, "test", 0)
        tri = g.integers(0, space.n, size=(ntri, 3))
        bad = 0
        for a, b, c in tri:
            da = space.dist_from(int(a))
            db = space.dist_from(int(b))
            if da[c] > da[b] + db[c] + 1e-9 or abs(da[b] - db[a]) > 1e-9:
                bad += 1
        rec.expect(bad == 0, "metric axioms on sampled triples", "metric_triples", "", ntri, bad, 0)


def _random_graph(seed, i, max_n):
    g = _rng.seed_stream(seed, "graph", i)
    n = int(g.integers(2, max_n + 1))
    return random_connected(n, g, measure="random"), g


def cmd_spectral_audit(cfg, rec: Recorder, seed: int, workers: int):
    space = _space(cfg)
    ge = cfg.get("ge_fit", {})
    if ge is not None:
        ge = _get(cfg, "ge_fit", {}, dict)
        centers = _centers(space, ge)
        t_grid = _grid(ge, "t_grid", required=True)
        try:
            fit = fit_ge_beta(space, centers, t_grid, beta_guess=float(ge.get("beta_guess", 2.0)))
        except GEFitError as exc:
            if ge.get("expect_reject"):
                rec.row("ge_fit_rejected", str(exc), None, None, None, True)
                fit = None
            else:
                raise AssertionFailure(f"GE(beta) fit rejected: {exc}") from None
        else:
            if ge.get("expect_reject"):
                rec.expect(False, "GE(beta) fit should have been rejected", "ge_fit_rejected")
        if fit is not None:
            rng_ = ge.get("beta_range")
            ok = True if rng_ is None else rng_[0] <= fit.beta <= rng_[1]
            rec.expect(ok, "fitted beta inside configured range", "beta", "", None, fit.beta,
                       None if rng_ is None else float(np.mean(rng_)))
            mv = float(ge.get("max_violation", 0.01))
            rec.expect(fit.violation_fraction <= mv, "GE(beta) violation fraction", "violation_fraction",
                       "", None, fit.violation_fraction, mv)
            for k in ("C_upper", "c_upper", "c_lower", "C_lower"):
                rec.row(k, "", None, getattr(fit, k))
            rec.summary["ge_fit"] = {"beta": fit.beta, "C_upper": fit.C_upper, "c_upper": fit.c_upper,
                                     "c_lower": fit.c_lower, "C_lower": fit.C_lower,
                                     "violation_fraction": fit.violation_fraction,
                                     "n_fit": fit.n_fit, "n_test": fit.n_test}
            rec.add_series("beta_residuals", (("beta", "float"), ("rss", "float")),
                           list(zip(fit.beta_grid, fit.beta_residuals)))
    pc = cfg.get("poincare")
    if pc is not None:
        beta = float(_get(pc, "beta", 2.0, float, path="poincare."))
        nf = int(pc.get("n_functions", 100))
        g = _rng.seed_stream(seed, "test", 1)
        for x in _centers(space, pc):
            for r in _grid(pc, "radii", [2, 4]):
                res = poincare_constant(space, x, float(r), beta)
                bad = 0
                for _ in range(nf):
                    f = g.standard_normal(len(res.vertices))
                    lhs, rhs = poincare_sides(space, res.vertices, f)
                    bad += lhs > res.c_pi * r ** beta * rhs * (1 + 1e-9) + 1e-12
                rec.row("poincare_c_pi", str(x), r, res.c_pi)
                rec.expect(bad == 0, "Poincare inequality on random functions", "poincare_violations",
                           str(x), r, bad, 0)
    th = cfg.get("thirring")
    if th is not None:
        cases = int(th.get("cases", 100))
        max_n = int(th.get("max_n", 60))
        fails = 0
        for i in range(cases):
            G, g = _random_graph(seed, i, max_n)
            U = random_connected_subset(G, int(g.integers(1, G.n + 1)), g)
            A = U[g.random(len(U)) < g.random()]
            fails += not thirring_bound(G, U, A).holds
        rec.expect(fails == 0, "Thirring inequality", "thirring_failures", "", cases, fails, 0)
    es = cfg.get("eigen_scaling")
    if es is not None:
        beta = float(_get(es, "beta", required=True, kind=float, path="eigen_scaling."))
        radii = _grid(es, "radii", required=True)
        for x in _centers(space, es):
            vals = eigenvalue_scaling(space, x, radii, beta)
            for r, v in zip(radii, vals):
                rec.row("scaled_eigenvalue", str(x), r, v)
            mr = float(es.get("max_ratio", 8.0))
            rec.expect(vals.max() / vals.min() <= mr, "lambda(B(x,r)) r^beta within window",
                       "scaled_eigenvalue_window", str(x), None, float(vals.max() / vals.min()), mr)
            rec.add_series(f"eigen_scaling_{x}", (("radius", "float"), ("scaled", "float")),
                           list(zip(radii, vals)))


def cmd_sausage(cfg, rec: Recorder, seed: int, workers: int):
    assertions = cfg.get("assertions", {})
    body = {k: v for k, v in cfg.items() if k not in ("assertions", "subcommand")}
    body["seed"] = seed
    body["workers"] = workers
    try:
        conf = ExperimentConfig.from_dict(body)
    except TypeError as exc:
        raise ConfigError("sausage", str(exc)) from None
    space = _space(cfg)
    rep = run_scaling_experiment(conf, space)
    ser = []
    for r in rep.rows:
        rec.row("s", r.mode, r.t, r.s)
        rec.row("volume", r.mode, r.t, r.volume)
        rec.row("L", r.flag or r.mode, r.t, r.L, r.upper_L, None if r.L is None else r.L <= r.upper_L + 1e-8)
        rec.row("ratio", r.flag or r.mode, r.t, r.ratio)
        if r.mc_moment is not None:
            rec.row("mc_moment", "mc", r.t, r.mc_moment, r.moment if conf.mode == "both" else None)
            rec.row("mc_se", "mc", r.t, r.mc_se)
            if conf.mode == "both" and r.moment is not None and r.moment >= 1e-3:
                rec.expect(abs(r.mc_moment - r.moment) <= 3 * r.mc_se + 1e-15,
                           "MC moment within 3 SE of exact value", "mc_vs_exact", "", r.t,
                           r.mc_moment, r.moment)
        if r.L is not None:
            rec.expect(r.L >= 0, "L(t) >= 0", record=False)
        ser.append((r.t, r.s, r.volume, r.L, r.ratio))
    rec.expect(rep.chain_holds, "lower-bound chain L(t) <= nu V(x,t) - log P[tau > s]", record=False)
    rec.add_series("scaling", (("t", "float"), ("s", "float"), ("volume", "float"), ("L", "float"),
                               ("ratio", "float")), ser)
    rec.row("band_low", "", None, rep.c_low)
    rec.row("band_high", "", None, rep.c_high)
    if "max_band" in assertions and rep.band_ratio is not None:
        mb = float(assertions["max_band"])
        rec.expect(rep.band_ratio <= mb, "scaling band c_high/c_low", "band_ratio", "", None,
                   rep.band_ratio, mb)
    if assertions.get("no_divergence"):
        rec.expect(not rep.monotone_divergence, "no monotone divergence of ratios", "monotone_divergence",
                   "", None, rep.monotone_divergence, 0)
    rec.summary["scaling"] = rep.as_dict()


def cmd_survival(cfg, rec: Recorder, seed: int, workers: int):
    space = _space(cfg)
    x = resolve_vertex(space, cfg.get("x", "center"))
    nu = float(_get(cfg, "nu", required=True, kind=float))
    eps = float(_get(cfg, "eps", 0.5, float))
    s = float(_get(cfg, "s", required=True, kind=float))
    n_paths = int(_get(cfg, "n_paths", 10000, int))
    n_fields = int(_get(cfg, "n_fields", 1000, int))
    ppf = int(_get(cfg, "paths_per_field", 20, int))
    mom = negative_moment(space, x, s, nu, eps, n_paths, seed=seed, workers=workers)
    ann = annealed_survival(space, x, s, nu, eps, n_fields, ppf, seed=seed, workers=workers)
    a_lo, a_hi = mom.ci95()
    b_lo, b_hi = ann.estimate.ci95()
    rec.row("negative_moment", "mc", s, mom.mean, mom.se)
    rec.row("annealed_survival", ann.mode, s, ann.estimate.mean, ann.estimate.se)
    rec.row("environment_var", ann.mode, s, ann.environment_var)
    rec.row("path_var", ann.mode, s, ann.path_var)
    if cfg.get("assert_overlap", True):
        rec.expect(a_lo <= b_hi and b_lo <= a_hi, "duality: 95% confidence intervals overlap",
                   "duality_overlap", "", s, mom.mean, ann.estimate.mean)
    rec.summary["duality"] = {"negative_moment": mom.as_dict(), "annealed": ann.as_dict()}
    cr = cfg.get("cramer")
    if cr is not None:
        radii = _grid(cr, "radii", [4, 8, 16])
        fam = cramer_family(space, x, radii, nu, eps, float(cr.get("frac_factor", 0.5)))
        mr = float(cr.get("min_rate", 0.05))
        for r, c in zip(radii, fam):
            rec.row("cramer_tail", c.mode, r, c.probability)
            rec.expect(c.rate >= mr, "Cramer rate bounded below", "cramer_rate", c.mode, r, c.rate, mr)
        rec.add_series("cramer", (("radius", "float"), ("tail", "float"), ("rate", "float")),
                       [(r, c.probability, c.rate) for r, c in zip(radii, fam)])
    fc = cfg.get("field_moments")
    if fc is not None:
        k = int(fc.get("n_fields", 2000))
        tot = np.array([sample_field(space, nu, eps, seed, 10**9 + i).counts.sum() for i in range(k)])
        mean = nu * space.total_measure
        se = math.sqrt(mean / k) if mean > 0 else 0.0
        rec.expect(abs(tot.mean() - mean) <= 3 * se + 1e-12, "Poisson total arrivals mean",
                   "field_total_mean", "", k, float(tot.mean()), mean)


def cmd_certify(cfg, rec: Recorder, seed: int, workers: int):
    space = _space(cfg)
    x = resolve_vertex(space, cfg.get("x", "center"))
    beta = float(_get(cfg, "beta", required=True, kind=float))
    nu = float(_get(cfg, "nu", 1.0, float))
    eps = float(_get(cfg, "eps", 0.5, float))
    lb = cfg.get("lower")
    if lb is not None:
        ts = _grid(lb, "t_grid", required=True)
        if lb.get("constants", True):
            fit = fit_survival_constants(space, x, ts, eps, beta, nu=nu, c_floor=float(lb.get("c_floor", 1e-3)))
            certs = fit.certificates
            rec.expect(fit.passed, "eigenvalue-survival lower bound with uniform constants", "constants", "", fit.A, fit.c,
                       fit.C_prime)
            rec.add_series("constants", (("A", "float"), ("c", "float"), ("C_prime", "float"),
                                      ("scaled_min", "float"), ("scaled_max", "float")), fit.table)
        else:
            certs = [lower_bound_certificate(space, x, float(t), nu, eps, beta, seed=seed, workers=workers)
                     for t in ts]
        for c in certs:
            rec.row("log_exit_survival", c.moment_mode, c.t, c.log_exit_survival)
            rec.expect(c.inequality_i, "E[exp(-nu mu(C))] >= exp(-nu V) P[tau > s]", "lower_chain",
                       c.moment_mode, c.t, c.log_moment, -nu * c.volume + c.log_exit_survival)
    ub = cfg.get("upper")
    if ub is not None:
        t = float(_get(ub, "t", required=True, kind=float, path="upper."))
        s = t ** beta * volume(space, x, t)
        nf = int(ub.get("n_fields", 50))
        unu = float(ub.get("nu", nu))
        fit = ub.get("exit_fit")
        ok_spec = ok_net = 0
        for i in range(nf):
            f = sample_field(space, unu, eps, seed, i)
            r = upper_bound_diagnostic(space, x, s, f, beta, float(ub.get("net_scale", t)),
                                       float(ub.get("N", 1.0)), None if fit is None else tuple(fit))
            ok_spec += r.spectral_ok
            ok_net += r.net_ok
            rec.row("upper_log_survival", r.flag or "field", i, r.log_survival, r.log_spectral_bound,
                    r.spectral_ok)
            rec.row("upper_eigenvalue", r.flag or "field", i, r.eigenvalue, r.net_bound, r.net_ok)
            if r.exit_ok is not None:
                rec.expect(r.exit_ok, "exit probability below tail bound", "upper_exit", "", i,
                           r.exit_probability, r.exit_bound)
        rec.expect(ok_spec == nf, "spectral-theorem bound on every field", "spectral_bound_count", "",
                   nf, ok_spec, nf)
        rec.expect(ok_net == nf, "net eigenvalue bound on every field", "net_bound_count", "", nf,
                   ok_net, nf)
    et = cfg.get("exit_tail")
    if et is not None:
        c, C = et["c"], et["C"]
        t = float(et["t"])
        for sigma in et["sigmas"]:
            r = exit_tail_check(space, x, float(sigma), t, int(et.get("n_paths", 100000)), beta, c, C,
                                seed=seed, workers=workers)
            rec.expect(r.passed, "exit tail below fitted bound", "exit_tail", "", sigma,
                       r.empirical.mean, r.bound)


COMMANDS: dict[str, Callable] = {
    "space-audit": cmd_space_audit,
    "spectral-audit": cmd_spectral_audit,
    "sausage": cmd_sausage,
    "survival": cmd_survival,
    "certify": cmd_certify,
}


# ---------------------------------------------------------------------------
# entry point

def _env_int(name):
    v = os.environ.get(name)
    if v is None or v == "":
        return None
    try:
        return int(v)
    except ValueError:
        raise ConfigError(name, f"environment override must be an integer, got {v!r}") from None


def run(subcommand: str, config_path, out_dir, workers: int | None = None, seed: int | None = None,
        stderr=None) -> int:
    """Execute one subcommand; returns the exit status."""
    stderr = stderr or sys.stderr
    out = Path(out_dir)
    try:
        raw = Path(config_path).read_bytes()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=stderr)
        return EXIT_CONFIG
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}",
              file=stderr)
        return EXIT_CONFIG
    if not isinstance(cfg, dict):
        print("error: config must be a JSON object", file=stderr)
        return EXIT_CONFIG
    try:
        seed = seed if seed is not None else _env_int("SAUSAGELAB_SEED")
        seed = seed if seed is not None else int(cfg.get("seed", 0))
        workers = workers if workers is not None else _env_int("SAUSAGELAB_WORKERS")
        workers = workers if workers is not None else int(cfg.get("workers", 1))
        if seed < 0:
            raise ConfigError("seed", "must be non-negative")
        if workers < 1:
            raise ConfigError("workers", "must be >= 1")
    except ConfigError as exc:
        print(f"error: malformed config: {exc}", file=stderr)
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(subcommand, hashlib.sha256(raw).hexdigest(), seed, __version__, str(out),
                           workers, _dt.datetime.now(_dt.timezone.utc).isoformat())
    manifest.write(out)
    rec = Recorder()
    status = EXIT_OK
    try:
        COMMANDS[subcommand](cfg, rec, seed, workers)
    except ConfigError as exc:
        print(f"error: malformed config: field {exc}", file=stderr)
        manifest.status = "config-error"
        status = EXIT_CONFIG
    except ResourceCapError as exc:
        print(f"error: resource cap exceeded: {exc}", file=stderr)
        manifest.status = "resource-cap"
        status = EXIT_CAP
    except AssertionFailure as exc:
        rec.failures.append(str(exc))
    if status == EXIT_OK:
        write_table(out / f"results_{subcommand}.csv", RESULT_COLUMNS, rec.rows)
        for name, (cols, rows) in sorted(rec.series.items()):
            write_table(out / f"series_{name}.csv", cols, rows)
        summary = {"subcommand": subcommand, "config_sha256": manifest.config_sha256, "seed": seed,
                   "version": __version__, "schema_version": SCHEMA_VERSION,
                   "failures": rec.failures, "results": rec.summary}
        with open(out / f"summary_{subcommand}.json", "w") as fh:
            json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
            fh.write("\n")
        if rec.failures:
            for f in rec.failures:
                print(f"assertion failed: {f}", file=stderr)
            status = EXIT_ASSERT
            manifest.status = "assertion-failure"
        else:
            manifest.status = "ok"
    manifest.failures = rec.failures
    manifest.finished = _dt.datetime.now(_dt.timezone.utc).isoformat()
    manifest.write(out)
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sausagelab", description="Wiener sausage and obstacle laboratory")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        sp_ = sub.add_parser(name)
        sp_.add_argument("--config", required=True)
        sp_.add_argument("--out", required=True)
        sp_.add_argument("--workers", type=int, default=None)
        sp_.add_argument("--seed", type=int, default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.subcommand, args.config, args.out, args.workers, args.seed)


if __name__ == "__main__":
    sys.exit(main())
