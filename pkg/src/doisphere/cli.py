"""Command-line front end: single runs, sweeps and rate regression.

Subcommands: equilibrium, solve, circle, particles, sweep, rates.
Configuration precedence is flags > config file > defaults; the config file
holds ``key = value`` lines with ``#`` comments and only keys that are valid
flags for the chosen subcommand.  Exit codes: 0 success, 2 usage error,
3 numerical abort (a diagnostic dump path is printed).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import io as dio
from ._stepper import BlowUpError
from .circle import CircleConfig, circle_ic, run_circle
from .diagnostics import fit_critical_slope, fit_exponential_rate, trailing_window
from .equilibria import RegimeError, equilibrium_summary
from .particles import run_particles, write_positions_dump
from .zonal import IcSpec, SolverConfig, run

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


def _parse_sigma(text: str):
    if text == "critical":
        return "critical"
    try:
        v = float(text)
    except ValueError:
        raise UsageError(f"--sigma must be a number or 'critical', got {text!r}")
    if v <= 0:
        raise UsageError("--sigma must be positive")
    return v


def _parse_grid(text: str) -> np.ndarray:
    try:
        lo_s, hi_s, cnt_s = text.split(":")
        lo, hi, cnt = float(lo_s), float(hi_s), int(cnt_s)
    except ValueError:
        raise UsageError(f"grid must be LO:HI:COUNT, got {text!r}")
    if cnt < 1 or not (0 < lo <= hi):
        raise UsageError(f"bad grid {text!r}")
    return np.linspace(lo, hi, cnt)


def _parse_ic(text: str) -> IcSpec:
    if text == "uniform":
        return IcSpec.uniform()
    if text.startswith("fvm:"):
        return IcSpec.fvm(float(text[4:]))
    if text.startswith("perturbed:"):
        parts = text[len("perturbed:"):].split(",")
        eps = float(parts[0])
        modes = tuple(int(p) for p in parts[1:]) or (1, 2)
        return IcSpec.perturbed(eps, modes)
    if text.startswith("coeffs:"):
        return IcSpec.from_coeffs(dio.read_coeff_file(text[len("coeffs:"):]))
    raise UsageError(f"unknown --ic {text!r}")


def _parse_circle_ic(text: str, K: int):
    if text == "uniform":
        return circle_ic("uniform", K)
    if text.startswith("fvm:"):
        parts = text[4:].split(",")
        kappa = float(parts[0])
        phi = float(parts[1]) if len(parts) > 1 else 0.0
        return circle_ic("fvm", K, kappa=kappa, phi=phi)
    if text.startswith("perturbed:"):
        parts = text[len("perturbed:"):].split(",")
        eps = float(parts[0])
        modes = tuple(int(p) for p in parts[1:]) or (1, 2)
        return circle_ic("perturbed", K, eps=eps, modes=modes)
    raise UsageError(f"unknown --ic {text!r}")


# per-subcommand option registry: name -> (type conversion, default)
_OPTIONS = {
    "equilibrium": {
        "n": (int, 3), "sigma": (str, None), "sigma_grid": (str, None),
        "out": (str, "."),
    },
    "solve": {
        "n": (int, 3), "L": (int, 64), "sigma": (str, None),
        "t_end": (float, 10.0), "dt": (float, 1e-3), "rel_tol": (str, "1e-8"),
        "stride": (float, 0.1), "ic": (str, "perturbed:0.1"), "seed": (int, 0),
        "out": (str, "."), "dump_coeffs": (bool, False), "dt_max": (str, None),
    },
    "circle": {
        "K": (int, 64), "sigma": (str, None), "t_end": (float, 10.0),
        "dt": (float, 1e-3), "rel_tol": (str, "1e-8"), "stride": (float, 0.1),
        "ic": (str, "perturbed:0.1"), "seed": (int, 0), "out": (str, "."),
        "dt_max": (str, None),
    },
    "particles": {
        "n": (int, 3), "N": (int, 10000), "sigma": (str, None),
        "t_end": (float, 10.0), "dt": (float, 1e-3), "seed": (int, 0),
        "ic": (str, "uniform"), "record_stride": (int, 10), "out": (str, "."),
        "dump_positions": (bool, False),
    },
    "sweep": {
        "n": (int, 3), "L": (int, 64), "sigma_grid": (str, None),
        "t_end": (float, 80.0), "dt": (float, 1e-3), "rel_tol": (str, "1e-8"),
        "stride": (float, 0.5), "ic": (str, "perturbed:0.1"), "out": (str, "."),
    },
    "rates": {
        "csv": (str, None), "window": (int, 0), "critical": (bool, False),
        "out": (str, None),
    },
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="doisphere",
        description="Doi-Onsager dipolar alignment dynamics on the sphere: "
                    "equilibria, spectral solvers, particles, rate fits.")
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd, opts in _OPTIONS.items():
        p = sub.add_parser(cmd)
        p.add_argument("--config", default=None, help="key = value config file")
        for name, (typ, _default) in opts.items():
            flag = "--" + name.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, action="store_true", dest=name, default=None)
            else:
                p.add_argument(flag, type=str, dest=name, default=None)
    return parser


def _read_config_file(path: str, allowed: dict) -> dict:
    values = {}
    try:
        fh = open(path, "r", encoding="ascii")
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}")
    with fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key = key.strip().replace("-", "_")
            if key not in allowed:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = val.strip()
    return values


def _coerce(cmd: str, raw: dict) -> dict:
    out = {}
    for name, (typ, default) in _OPTIONS[cmd].items():
        val = raw.get(name)
        if val is None:
            out[name] = default
            continue
        if typ is bool:
            out[name] = val in (True, "true", "1", "yes")
            continue
        try:
            out[name] = typ(val)
        except (TypeError, ValueError):
            raise UsageError(f"bad value for --{name.replace('_', '-')}: {val!r}")
    return out


def _effective_options(cmd: str, args: argparse.Namespace) -> dict:
    file_vals = {}
    if args.config:
        file_vals = _read_config_file(args.config, _OPTIONS[cmd])
    flag_vals = {k: getattr(args, k) for k in _OPTIONS[cmd] if getattr(args, k) is not None}
    merged = dict(file_vals)
    merged.update(flag_vals)
    return _coerce(cmd, merged)


def _rel_tol(text) -> float | None:
    if text is None:
        return None
    if isinstance(text, str) and text.lower() in ("none", "fixed"):
        return None
    v = float(text)
    if v <= 0:
        raise UsageError("--rel-tol must be positive or 'none'")
    return v


def _ensure_outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def cmd_equilibrium(opts: dict) -> int:
    n = opts["n"]
    if opts["sigma_grid"]:
        grid = _parse_grid(opts["sigma_grid"])
    elif opts["sigma"]:
        s = _parse_sigma(opts["sigma"])
        grid = np.array([1.0 / n if s == "critical" else s])
    else:
        raise UsageError("equilibrium needs --sigma or --sigma-grid")
    if np.any(grid <= 0) or np.any(grid > 2.0 / n):
        raise UsageError(f"sigma grid must lie in (0, 2/n] = (0, {2.0 / n:g}]")
    lines = ["sigma,regime,kappa,c,beta,rate_sub,rate_heat,rate_super_lb,rate_crit_slope"]
    for s in grid:
        es = equilibrium_summary(n, float(s))
        lines.append(",".join([
            dio.fmt(es.sigma), es.regime, dio.fmt(es.kappa), dio.fmt(es.c),
            dio.fmt(es.beta), dio.fmt(es.rates.subcritical), dio.fmt(es.rates.heat),
            dio.fmt(es.rates.supercritical_lower), dio.fmt(es.rates.critical_slope),
        ]))
    out = os.path.join(_ensure_outdir(opts["out"]), "equilibrium.csv")
    dio.atomic_write_text(out, "\n".join(lines) + "\n")
    print(out)
    return EXIT_OK


def _solver_config(opts: dict) -> SolverConfig:
    if not opts["sigma"]:
        raise UsageError("--sigma is required")
    sigma = _parse_sigma(opts["sigma"])
    return SolverConfig(
        n=opts["n"], L=opts["L"],
        sigma=None if sigma == "critical" else sigma,
        critical=sigma == "critical",
        t_end=opts["t_end"], dt_init=opts["dt"], rel_tol=_rel_tol(opts["rel_tol"]),
        dt_max=None if opts.get("dt_max") in (None, "") else float(opts["dt_max"]),
        output_stride=opts["stride"], ic=_parse_ic(opts["ic"]),
    )


def _dump_abort(outdir: str, exc: Exception) -> str:
    path = os.path.join(outdir, "abort_dump.json")
    state = getattr(exc, "state", None)
    payload = {
        "error": str(exc),
        "t": getattr(exc, "t", None),
        "state": None if state is None else [float(v) for v in np.asarray(state)],
    }
    dio.write_summary_json(payload, path)
    return path


def cmd_solve(opts: dict) -> int:
    config = _solver_config(opts)
    outdir = _ensure_outdir(opts["out"])
    try:
        config.validate()
    except ValueError as exc:
        raise UsageError(str(exc))
    try:
        series = run(config)
    except (BlowUpError, RuntimeError) as exc:
        path = _dump_abort(outdir, exc)
        print(f"numerical abort: {exc}\ndump: {path}", file=sys.stderr)
        return EXIT_NUMERICAL
    dio.write_series_csv(series, os.path.join(outdir, "series.csv"))
    dio.write_summary_json(series.summary(), os.path.join(outdir, "summary.json"))
    if opts["dump_coeffs"]:
        dio.write_coeff_tsv(series.t, series.coefs, os.path.join(outdir, "coeffs.tsv"))
    s = series.summary()
    print(json.dumps({k: s[k] for k in ("regime", "t_final", "j_final", "l2_final",
                                        "fitted_rate")}, default=str))
    return EXIT_OK


def cmd_circle(opts: dict) -> int:
    if not opts["sigma"]:
        raise UsageError("--sigma is required")
    sigma = _parse_sigma(opts["sigma"])
    config = CircleConfig(
        K=opts["K"], sigma=None if sigma == "critical" else sigma,
        critical=sigma == "critical", t_end=opts["t_end"], dt_init=opts["dt"],
        rel_tol=_rel_tol(opts["rel_tol"]),
        dt_max=None if opts.get("dt_max") in (None, "") else float(opts["dt_max"]),
        output_stride=opts["stride"],
    )
    outdir = _ensure_outdir(opts["out"])
    try:
        config.validate()
        ic = _parse_circle_ic(opts["ic"], config.K)
    except ValueError as exc:
        raise UsageError(str(exc))
    try:
        series = run_circle(config, ic)
    except (BlowUpError, RuntimeError) as exc:
        path = _dump_abort(outdir, exc)
        print(f"numerical abort: {exc}\ndump: {path}", file=sys.stderr)
        return EXIT_NUMERICAL
    dio.write_series_csv(series, os.path.join(outdir, "series.csv"), circle=True)
    dio.write_summary_json(series.summary(), os.path.join(outdir, "summary.json"))
    s = series.summary()
    print(json.dumps({k: s[k] for k in ("regime", "t_final", "j_final", "l2_final")},
                     default=str))
    return EXIT_OK


def cmd_particles(opts: dict) -> int:
    if not opts["sigma"]:
        raise UsageError("--sigma is required")
    sigma = _parse_sigma(opts["sigma"])
    if sigma == "critical":
        sigma = 1.0 / opts["n"]
    ic = opts["ic"]
    kappa = None
    if ic.startswith("fvm:"):
        kappa = float(ic[4:])
        ic = "fvm"
    if ic not in ("uniform", "fvm", "aligned"):
        raise UsageError(f"unknown particle --ic {opts['ic']!r}")
    outdir = _ensure_outdir(opts["out"])
    series = run_particles(n=opts["n"], N=opts["N"], sigma=sigma, dt=opts["dt"],
                           t_end=opts["t_end"], seed=opts["seed"], ic=ic,
                           kappa=kappa, record_stride=opts["record_stride"])
    dio.write_particle_csv(series, os.path.join(outdir, "particles.csv"))
    if opts["dump_positions"]:
        write_positions_dump(os.path.join(outdir, "positions.bin"),
                             series.final_positions)
    print(json.dumps({"J_final": float(series.J_norm[-1]),
                      "t_final": float(series.t[-1])}))
    return EXIT_OK


def _sweep_one(payload: tuple) -> dict:
    sigma, base = payload
    n = base["n"]
    row = {"sigma": sigma, "j_final": float("nan"), "c_kappa_predicted": 0.0,
           "abs_error": float("nan"), "status": "ok"}
    try:
        es = equilibrium_summary(n, sigma)
        row["c_kappa_predicted"] = es.c
        config = SolverConfig(n=n, L=base["L"], sigma=sigma, t_end=base["t_end"],
                              dt_init=base["dt"], rel_tol=base["rel_tol"],
                              output_stride=base["stride"], ic=base["ic"])
        series = run(config)
        row["j_final"] = abs(float(series.records[-1].j))
        row["abs_error"] = abs(row["j_final"] - row["c_kappa_predicted"])
    except Exception as exc:   # per-run failures recorded, sweep continues
        row["status"] = f"failed:{type(exc).__name__}"
    return row


def cmd_sweep(opts: dict) -> int:
    if not opts["sigma_grid"]:
        raise UsageError("sweep needs --sigma-grid LO:HI:COUNT")
    grid = _parse_grid(opts["sigma_grid"])
    n = opts["n"]
    if np.any(grid <= 0) or np.any(grid > 2.0 / n):
        raise UsageError(f"sigma grid must lie in (0, 2/n] = (0, {2.0 / n:g}]")
    base = {"n": n, "L": opts["L"], "t_end": opts["t_end"], "dt": opts["dt"],
            "rel_tol": _rel_tol(opts["rel_tol"]), "stride": opts["stride"],
            "ic": _parse_ic(opts["ic"])}
    payloads = [(float(s), base) for s in grid]
    workers = int(os.environ.get("DOI_NUM_THREADS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_one, payloads))
    else:
        rows = [_sweep_one(p) for p in payloads]
    lines = ["sigma,j_final,c_kappa_predicted,abs_error,status"]
    for row in rows:
        lines.append(",".join([dio.fmt(row["sigma"]), dio.fmt(row["j_final"]),
                               dio.fmt(row["c_kappa_predicted"]),
                               dio.fmt(row["abs_error"]), row["status"]]))
    out = os.path.join(_ensure_outdir(opts["out"]), "sweep.csv")
    dio.atomic_write_text(out, "\n".join(lines) + "\n")
    print(out)
    return EXIT_OK


def cmd_rates(opts: dict) -> int:
    if not opts["csv"]:
        raise UsageError("rates needs --csv PATH")
    cols = dio.read_csv_columns(opts["csv"])
    if "t" not in cols or "l2" not in cols:
        raise UsageError("rates expects a series CSV with t and l2 columns")
    t, l2 = cols["t"], cols["l2"]
    result: dict = {"source": opts["csv"], "snapshots": int(t.size)}
    window = slice(-opts["window"], None) if opts["window"] else None
    try:
        if window is None:
            window = trailing_window(t, l2, threshold=math.inf if opts["critical"] else 1e-2)
        fit = fit_exponential_rate(t, l2, window=window)
        result["fitted_rate"] = fit.rate
        result["fitted_rate_r2"] = fit.r2
        result["window"] = [fit.t_span[0], fit.t_span[1]]
    except ValueError as exc:
        result["fitted_rate"] = None
        result["error"] = str(exc)
    if opts["critical"]:
        fit = fit_critical_slope(t, l2, window=window)
        result["critical_slope"] = fit.rate
        result["critical_slope_r2"] = fit.r2
    text = json.dumps(result, indent=2)
    if opts["out"]:
        dio.atomic_write_text(opts["out"], text + "\n")
    print(text)
    return EXIT_OK


_DISPATCH = {
    "equilibrium": cmd_equilibrium,
    "solve": cmd_solve,
    "circle": cmd_circle,
    "particles": cmd_particles,
    "sweep": cmd_sweep,
    "rates": cmd_rates,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        opts = _effective_options(args.command, args)
        return _DISPATCH[args.command](opts)
    except (UsageError, RegimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
