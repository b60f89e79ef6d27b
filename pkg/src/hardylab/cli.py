"""Command-line entry point: ``hardylab <command> [options]``.

Settings come from an optional INI file (``--config``; keys in ``[run]``
and in a section named after the command) and from flags, which win.
Results land in ``--output-dir`` or ``$HARDYLAB_OUTPUT/<command>``.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import os
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from importlib import metadata

import numpy as np

from . import control, elliptic, evolution, spectral
from .bessel import bessel_zero
from .grid import build_grid, critical_constant
from .operators import assemble, check_lambda
from .output import digest, face_table, field_table, series_table, to_json, write_outputs
from .spectral import ConvergenceError

log = logging.getLogger("hardylab")

COMMANDS = (
    "eig", "hardy-constants", "pohozaev", "trace-check", "ground-state",
    "evolve-wave", "evolve-schrodinger", "multiplier", "observability",
    "hum-wave", "hum-schrodinger", "e1-diagnostic", "tu8",
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_NOT_CONVERGED = 4
EXIT_IO = 5
EXIT_INTERNAL = 1

OUTPUT_ENV = "HARDYLAB_OUTPUT"

_GRID = ("dimension", "n_r", "n_theta")
REQUIRED = {
    "eig": _GRID,
    "hardy-constants": ("dimension", "n_r", "n_theta"),
    "pohozaev": _GRID,
    "trace-check": _GRID,
    "ground-state": _GRID + ("alpha",),
    "evolve-wave": _GRID + ("T",),
    "evolve-schrodinger": _GRID + ("T",),
    "multiplier": _GRID + ("T",),
    "observability": _GRID + ("T",),
    "hum-wave": _GRID + ("T",),
    "hum-schrodinger": _GRID + ("T",),
    "e1-diagnostic": _GRID,
    "tu8": _GRID,
}


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


@dataclass
class RunConfig:
    command: str
    dimension: int | None = None
    n_r: int | None = None
    n_theta: int | None = None
    radius: float = 1.0
    lam: float = 0.0
    alpha: float | None = None
    T: float | None = None
    dt: float | None = None
    tol: float = 1e-8
    max_iter: int = 500
    seed: int = 42
    k: int = 1
    mode: int = 0
    resolutions: list = field(default_factory=list)
    epsilons: list = field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])
    n_modes: int = 3
    n_random: int = 4
    n_basis: int = 12
    gramian_iterations: int = 0
    ramp: float = control.DEFAULT_RAMP
    filter_ratio: float | None = control.DEFAULT_FILTER
    source: str = "eigen"
    snapshot_every: int = 0
    output_dir: str | None = None
    overridden: list = field(default_factory=list)

    def echo(self) -> dict:
        out = asdict(self)
        out.pop("overridden")
        out["lambda"] = out.pop("lam")
        return out


# flag name -> (RunConfig field, type)
_OPTIONS = {
    "dim": ("dimension", int),
    "nr": ("n_r", int),
    "ntheta": ("n_theta", int),
    "radius": ("radius", float),
    "lambda": ("lam", float),
    "alpha": ("alpha", float),
    "T": ("T", float),
    "dt": ("dt", float),
    "tol": ("tol", float),
    "max-iter": ("max_iter", int),
    "seed": ("seed", int),
    "k": ("k", int),
    "mode": ("mode", int),
    "resolutions": ("resolutions", "ints"),
    "epsilons": ("epsilons", "floats"),
    "n-modes": ("n_modes", int),
    "n-random": ("n_random", int),
    "n-basis": ("n_basis", int),
    "gramian-iterations": ("gramian_iterations", int),
    "ramp": ("ramp", float),
    "filter": ("filter_ratio", "optfloat"),
    "source": ("source", str),
    "snapshot-every": ("snapshot_every", int),
    "output-dir": ("output_dir", str),
}
# config-file aliases accepted besides the flag and field names
_ALIASES = {"dimension": "dim", "n_r": "nr", "n_theta": "ntheta", "lam": "lambda",
            "max_iter": "max-iter", "filter_ratio": "filter", "output_dir": "output-dir"}


def _convert(kind, text):
    if isinstance(text, (list, tuple)):
        text = ",".join(str(t) for t in text)
    if kind == "ints":
        return [int(t) for t in str(text).replace(",", " ").split()]
    if kind == "floats":
        return [float(t) for t in str(text).replace(",", " ").split()]
    if kind == "optfloat":
        return None if str(text).strip().lower() in ("none", "off", "0") else float(text)
    return kind(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hardylab", description="Boundary-singular Hardy operator lab.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="INI file with [run] and per-command sections")
    p.add_argument("-v", "--verbose", action="store_true")
    for name in _OPTIONS:
        p.add_argument(f"--{name}", dest=name.replace("-", "_"), default=None)
    return p


def parse_config(argv=None) -> tuple[RunConfig, argparse.Namespace]:
    """Merge config file and flags into a validated :class:`RunConfig`."""
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        raise ConfigError("could not parse command line") from exc
    values: dict = {}
    if ns.config:
        ini = configparser.ConfigParser()
        ini.optionxform = str
        if not ini.read(ns.config):
            raise ConfigError(f"cannot read config file {ns.config}")
        for section in ("run", ns.command):
            if ini.has_section(section):
                for key, text in ini.items(section):
                    flag = _ALIASES.get(key, key.replace("_", "-"))
                    if flag not in _OPTIONS:
                        raise ConfigError(f"unknown config key {key!r} in [{section}]")
                    values[flag] = text
    overridden = []
    for flag in _OPTIONS:
        text = getattr(ns, flag.replace("-", "_"))
        if text is not None:
            if flag in values:
                overridden.append(flag)
            values[flag] = text
    cfg = RunConfig(command=ns.command, overridden=overridden)
    for flag, text in values.items():
        name, kind = _OPTIONS[flag]
        try:
            setattr(cfg, name, _convert(kind, text))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"--{flag}: cannot parse {text!r}") from exc
    validate(cfg)
    return cfg, ns


def validate(cfg: RunConfig) -> None:
    """Check every precondition before anything is allocated.

    All problems are collected, so one error lists every missing field and
    every out-of-range value.
    """
    if cfg.command not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.command!r}")
    problems = []
    missing = [f for f in REQUIRED[cfg.command] if getattr(cfg, f) is None]
    if missing:
        problems.append("missing required fields: " + ", ".join(missing))
    if cfg.dimension is not None:
        if cfg.dimension not in (2, 3):
            problems.append(f"dimension must be 2 or 3, got {cfg.dimension}")
        else:
            try:
                check_lambda(cfg.lam, cfg.dimension)
            except ValueError as exc:
                problems.append(str(exc))
    for name in ("n_r", "n_theta"):
        if getattr(cfg, name) is not None and getattr(cfg, name) < 4:
            problems.append(f"{name} must be >= 4")
    if not cfg.radius > 0:
        problems.append("radius must be positive")
    if cfg.T is not None:
        if not cfg.T > 0:
            problems.append("T must be positive")
        elif cfg.dt is None:
            cfg.dt = cfg.T / 400
        if cfg.dt is not None:
            if not cfg.dt > 0:
                problems.append("dt must be positive")
            elif cfg.T > 0 and cfg.T < cfg.dt:
                problems.append("T must be at least dt")
    if not cfg.tol > 0:
        problems.append("tol must be positive")
    if cfg.max_iter < 1:
        problems.append("max_iter must be >= 1")
    if cfg.alpha is not None and not cfg.alpha > 1:
        problems.append("alpha must exceed 1")
    if cfg.k < 1 or cfg.mode < 0:
        problems.append("k must be >= 1 and mode >= 0")
    if not 0 <= cfg.ramp <= 0.5:
        problems.append("ramp must lie in [0, 0.5]")
    if cfg.filter_ratio is not None and not cfg.filter_ratio > 0:
        problems.append("filter must be positive or 'none'")
    if cfg.source not in ("eigen", "constant"):
        problems.append("source must be 'eigen' or 'constant'")
    if any(r < 4 for r in cfg.resolutions):
        problems.append("resolutions must be >= 4")
    if problems:
        raise ConfigError("; ".join(problems))


class _Timer:
    def __init__(self):
        self.timings = {}

    def __call__(self, name, fn, *args, **kwargs):
        t0 = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0


class NotConverged(RuntimeError):
    """A solver finished without meeting its tolerance; outputs are written."""


# -- command implementations --------------------------------------------
# each returns (summary dict, {filename: text}, operations used)


def _setup(cfg, tm):
    g = build_grid(cfg.dimension, cfg.n_r, cfg.n_theta, cfg.radius)
    ops = tm("assemble", assemble, g, cfg.lam)
    return g, ops


def _mode(cfg, ops, tm, k=None):
    k = (cfg.mode + 1) if k is None else k
    pairs = tm("smallest_generalized_eigenpairs", spectral.smallest_generalized_eigenpairs,
               ops.K_lambda, ops.M, k)
    return pairs


def _eig(cfg, tm):
    g, ops = _setup(cfg, tm)
    pairs = _mode(cfg, ops, tm, cfg.k)
    files = {f"eigenvector_{i}.csv": field_table(g, p.vector) for i, p in enumerate(pairs)}
    summary = {"eigenpairs": [{"value": p.value, "residual": p.residual} for p in pairs]}
    return summary, files


def _trend(est):
    return [{"resolution": list(r), "value": v} for r, v in est.refinement_trend]


def _hardy_constants(cfg, tm):
    g = build_grid(cfg.dimension, cfg.n_r, cfg.n_theta, cfg.radius)
    res = cfg.resolutions or None
    best = tm("best_hardy_constant", spectral.best_hardy_constant, g, res)
    logc = tm("refined_log_constant", spectral.refined_log_constant, g, res)
    summary = {
        "critical_constant": critical_constant(cfg.dimension),
        "best_hardy_constant": best.value,
        "best_hardy_trend": _trend(best),
        "refined_log_constant": logc.value,
        "refined_log_trend": _trend(logc),
        "coarse": bool(best.coarse),
    }
    return summary, {"hardy_minimizer.csv": field_table(build_grid(
        cfg.dimension, *best.resolution, cfg.radius), best.minimizer)}


def _source(cfg, g, ops, tm):
    if cfg.source == "eigen":
        p = _mode(cfg, ops, tm)[cfg.mode]
        return p.vector, p.value * p.vector
    f = np.ones(g.size)
    u = tm("solve_dirichlet", elliptic.solve_dirichlet, ops, f, tol=min(cfg.tol, 1e-10),
           max_iter=max(cfg.max_iter, 5000), allow_critical=True)
    return u, f


def _pohozaev(cfg, tm):
    g, ops = _setup(cfg, tm)
    u, f = _source(cfg, g, ops, tm)
    rep = tm("pohozaev_report", elliptic.pohozaev_report, g, ops, u, f)
    summary = {"source": cfg.source, **asdict(rep)}
    return summary, {"solution.csv": field_table(g, u)}


def _trace_check(cfg, tm):
    g, ops = _setup(cfg, tm)
    pairs = _mode(cfg, ops, tm, 3)
    battery = [(f"eigenmode_{i}", p.vector, p.value * p.vector) for i, p in enumerate(pairs)]
    f = np.ones(g.size)
    u = tm("solve_dirichlet", elliptic.solve_dirichlet, ops, f, tol=1e-10, max_iter=5000,
           allow_critical=True)
    battery.append(("constant_source", u, f))
    ratios = {name: tm("trace_inequality_ratio", elliptic.trace_inequality_ratio, g, ops, u, f)
              for name, u, f in battery}
    return {"ratios": ratios, "max_ratio": max(ratios.values())}, {}


def _ground_state(cfg, tm):
    g, ops = _setup(cfg, tm)
    gs = tm("ground_state", elliptic.ground_state, ops, cfg.alpha, max_iter=cfg.max_iter,
            tol=min(cfg.tol, 1e-10), strict=True)
    bal = tm("nonlinear_balance", elliptic.nonlinear_balance, g, gs)
    summary = {
        "I_value": gs.I_value, "iterations": gs.iterations,
        "fixed_point_residual": gs.fixed_point_residual, "converged": gs.converged,
        **asdict(bal),
    }
    return summary, {"ground_state.csv": field_table(g, gs.u)}


def _wave_trace(cfg, g, ops, tm):
    phi = _mode(cfg, ops, tm)[cfg.mode].vector
    return tm("wave_evolve", evolution.wave_evolve, ops, phi, np.zeros_like(phi), cfg.T, cfg.dt,
              snapshot_every=cfg.snapshot_every or None)


def _evolve_wave(cfg, tm):
    g, ops = _setup(cfg, tm)
    tr = _wave_trace(cfg, g, ops, tm)
    e = tr.energy_series
    summary = {
        "steps": len(tr.times) - 1, "dt": tr.dt,
        "energy_initial": e[0], "energy_drift": evolution.relative_drift(e),
        "energy_max_over_min": float(e.max() / e.min()) if e.min() > 0 else 1.0,
    }
    files = {
        "series.csv": series_table(tr.times, e, tr.mass_series),
        "flux.csv": face_table(tr.times, tr.flux_record),
        "final_displacement.csv": field_table(g, tr.final_state[0]),
    }
    for i, (t, (v, _)) in enumerate(sorted(tr.snapshots.items())):
        files[f"snapshot_{i:04d}.csv"] = field_table(g, v)
    return summary, files


def _evolve_schrodinger(cfg, tm):
    g, ops = _setup(cfg, tm)
    phi = _mode(cfg, ops, tm)[cfg.mode].vector.astype(complex)
    tr = tm("schrodinger_evolve", evolution.schrodinger_evolve, ops, phi, cfg.T, cfg.dt)
    u = tr.final_state[0]
    summary = {
        "steps": len(tr.times) - 1, "dt": tr.dt,
        "mass_drift": evolution.relative_drift(tr.mass_series),
        "energy_drift": evolution.relative_drift(tr.energy_series),
    }
    files = {
        "series.csv": series_table(tr.times, tr.energy_series, tr.mass_series),
        "flux_abs.csv": face_table(tr.times, np.abs(tr.flux_record)),
        "final_real.csv": field_table(g, u.real),
        "final_imag.csv": field_table(g, u.imag),
    }
    return summary, files


def _multiplier(cfg, tm):
    g, ops = _setup(cfg, tm)
    tr = _wave_trace(cfg, g, ops, tm)
    rep = tm("multiplier_report", evolution.multiplier_report, g, ops, tr)
    hr = tm("hidden_regularity_ratio", evolution.hidden_regularity_ratio, g, ops, tr)
    summary = {**asdict(rep), "hidden_regularity_ratio": hr,
               "energy_drift": evolution.relative_drift(tr.energy_series)}
    return summary, {"flux.csv": face_table(tr.times, tr.flux_record)}


def _observability(cfg, tm):
    g, ops = _setup(cfg, tm)
    spec = evolution.SampleSpec(cfg.n_modes, cfg.n_random, cfg.n_basis, cfg.seed,
                                cfg.gramian_iterations)
    scan = tm("observability_scan", evolution.observability_scan, ops, cfg.T, cfg.dt, spec)
    summary = {"D1_estimate": scan.D1_estimate, "min_ratio": 1.0 / scan.D1_estimate,
               "ratios": scan.ratios, "skipped": scan.skipped,
               "gramian_ratios": scan.gramian_ratios}
    return summary, {"worst_datum_v0.csv": field_table(g, scan.worst_datum[0]),
                     "worst_datum_v1.csv": field_table(g, scan.worst_datum[1])}


def _hum_summary(res):
    return {
        "cg_iterations": res.cg_iterations, "cg_residual": res.cg_residual,
        "converged": res.converged, "J_value": res.J_value,
        "reduction_factor": res.reduction_factor, "filtered_modes": res.filtered_modes,
        "steps": len(res.control_times), "dt": res.dt,
    }


def _hum_wave(cfg, tm):
    g, ops = _setup(cfg, tm)
    phi = _mode(cfg, ops, tm)[cfg.mode].vector
    res = tm("hum_solve", control.hum_solve, ops, (phi, np.zeros_like(phi)), cfg.T, cfg.dt,
             tol=cfg.tol, max_iter=cfg.max_iter, ramp=cfg.ramp, filter_ratio=cfg.filter_ratio)
    summary = {**_hum_summary(res), "weak_reduction_factor": res.weak_reduction_factor}
    files = {"control.csv": face_table(res.control_times, res.control_trace, res.control_faces)}
    if not res.converged:
        return summary, files, NotConverged(f"CG stopped at residual {res.cg_residual:.2e}")
    return summary, files


def _hum_schrodinger(cfg, tm):
    g, ops = _setup(cfg, tm)
    phi = _mode(cfg, ops, tm)[cfg.mode].vector.astype(complex)
    res = tm("schrodinger_hum_solve", control.schrodinger_hum_solve, ops, phi, cfg.T, cfg.dt,
             tol=cfg.tol, max_iter=cfg.max_iter, ramp=cfg.ramp, filter_ratio=cfg.filter_ratio)
    files = {
        "control_real.csv": face_table(res.control_times, res.control_trace.real, res.control_faces),
        "control_imag.csv": face_table(res.control_times, res.control_trace.imag, res.control_faces),
    }
    if not res.converged:
        return _hum_summary(res), files, NotConverged(f"CG stopped at residual {res.cg_residual:.2e}")
    return _hum_summary(res), files


def _e1(cfg, tm):
    g = build_grid(cfg.dimension, cfg.n_r, cfg.n_theta, cfg.radius)
    rows = tm("critical_profile_diagnostic", spectral.critical_profile_diagnostic, g, cfg.epsilons)
    summary = {
        "rows": [r._asdict() for r in rows],
        "dirichlet_log_slope": spectral.dirichlet_log_slope(rows),
        "regularized_exact": spectral.critical_profile_regularized_exact(cfg.radius),
        "z01": tm("bessel_zero", bessel_zero, 0, 1),
    }
    return summary, {"e1.csv": field_table(g, spectral.critical_profile(g))}


def _tu8(cfg, tm):
    g = build_grid(cfg.dimension, cfg.n_r, cfg.n_theta, cfg.radius)
    est = tm("tu8_constant", spectral.tu8_constant, g, cfg.resolutions or None)
    vals = [v for _, v in est.refinement_trend]
    spread = abs(vals[-1] - vals[-2]) / max(abs(vals[-1]), abs(vals[-2])) if len(vals) > 1 else 0.0
    summary = {"value": est.value, "trend": _trend(est), "relative_change": spread,
               "radius_squared": cfg.radius**2}
    return summary, {}


DISPATCH = {
    "eig": _eig, "hardy-constants": _hardy_constants, "pohozaev": _pohozaev,
    "trace-check": _trace_check, "ground-state": _ground_state,
    "evolve-wave": _evolve_wave, "evolve-schrodinger": _evolve_schrodinger,
    "multiplier": _multiplier, "observability": _observability,
    "hum-wave": _hum_wave, "hum-schrodinger": _hum_schrodinger,
    "e1-diagnostic": _e1, "tu8": _tu8,
}


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def output_dir(cfg: RunConfig) -> str:
    if cfg.output_dir:
        return cfg.output_dir
    root = os.environ.get(OUTPUT_ENV, "hardylab-output")
    return os.path.join(root, cfg.command)


def run(cfg: RunConfig) -> int:
    """Dispatch one configured run and write its outputs; returns an exit code."""
    tm = _Timer()
    t0 = time.perf_counter()
    status, message = EXIT_OK, "ok"
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            out = DISPATCH[cfg.command](cfg, tm)
        except ConvergenceError as exc:
            print(f"hardylab: not converged: {exc}", file=sys.stderr)
            return EXIT_NOT_CONVERGED
        except (ValueError, ZeroDivisionError) as exc:
            print(f"hardylab: precondition failed: {exc}", file=sys.stderr)
            return EXIT_PRECONDITION
    for w in caught:
        print(f"hardylab: warning: {w.message}", file=sys.stderr)
    summary, files = out[0], out[1]
    if len(out) > 2:
        status, message = EXIT_NOT_CONVERGED, str(out[2])
        print(f"hardylab: not converged: {message}", file=sys.stderr)
    summary = {"command": cfg.command, "status": message, **summary}
    manifest = {
        "command": cfg.command,
        "config": cfg.echo(),
        "overridden_by_flags": cfg.overridden,
        "version": _version(),
        "wall_clock_seconds": time.perf_counter() - t0,
        "timings": tm.timings,
        "operations": sorted(tm.timings),
        "summary_keys": sorted(summary),
        "input_hash": digest(cfg.echo()),
        "warnings": [str(w.message) for w in caught],
    }
    files = {**files, "summary.json": to_json(summary), "manifest.json": to_json(manifest)}
    dest = output_dir(cfg)
    try:
        write_outputs(files, dest)
    except OSError as exc:
        print(f"hardylab: cannot write outputs to {dest}: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"hardylab: {cfg.command} -> {dest} ({message})")
    return status


def main(argv=None) -> int:
    try:
        cfg, ns = parse_config(argv)
    except ConfigError as exc:
        print(f"hardylab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(cfg)
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to an exit code
        log.exception("unexpected failure")
        print(f"hardylab: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
