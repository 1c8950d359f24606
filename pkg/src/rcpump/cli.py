"""Command-line front end: scenario configs, sweeps, and CSV emission.

A scenario is an INI file with three sections::

    [scenario]
    regime = floquet            ; floquet | adiabatic | oracle

    [parameters]
    omega = 1.9                 ; driving frequency
    a0 = 2.5                    ; dot-energy driving amplitude
    phi = 1.5707963267948966    ; driving phase
    coupling = 0.25             ; three-site tunneling amplitude (lambda)
    ; gamma = 2.5               ; alternatively: bare bath coupling strength
    width = 0.05                ; Lorentzian width of the bath density
    bias = 0.0                  ; center offset between the two baths
    beta = 3.3
    mu = 1.0
    eps0 = 1.0
    a_left = 1.0
    a_right = 1.0

    [sweep]
    axis1 = bias : -6 : 6 : 25
    axis2 = phi : 0 : 6.2832 : 25

    [numerics]                  ; optional, regime-specific knobs
    noise = on                  ; compute charge fluctuations (slow in floquet)

    [output]
    path = out.csv

Subcommands: ``run``, ``rc-info``, ``compare``.  Exit code 0 on success,
2 when individual sweep points failed (their rows carry the error in the
``status`` column), 1 on configuration errors.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import os
import sys
import tempfile
import time
import warnings
from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np

from . import __version__
from .adiabatic import (DEFAULT_METRIC_THRESHOLD, adiabaticity_metric,
                        decompose_channels, total_cumulants)
from .fcs import cumulants_periodic, from_liouvillian, state_vector
from .floquet import floquet_modes, propagate_period
from .fme import (build_dressed_rates, build_liouvillian, matter_current,
                  pumped_charge, solve_periodic_state)
from .hamiltonian import (D_LEFT, D_RIGHT, NUMBER_SECTORS, TQDParams,
                          fock_hamiltonian, number_diagonal_indices)
from .model import (DrivingProtocol, LorentzianSD, ReservoirSpec,
                    rc_map_lorentzian)

__all__ = [
    "Scenario",
    "ConfigError",
    "load_scenario",
    "sweep_grid",
    "evaluate_point",
    "run_scenario",
    "write_csv",
    "rc_info_report",
    "compare_reports",
    "main",
]

CSV_COLUMNS = [
    "axis1", "axis2", "Q", "dQ2", "Q_u", "Q_c", "Q_d",
    "dQ2_u", "dQ2_c", "dQ2_d", "tail_norm", "min_pop",
    "adiab_metric", "status", "wall_ms",
]

REGIMES = ("floquet", "adiabatic", "oracle")

_PARAM_DEFAULTS = {
    "omega": None, "a0": None, "phi": 0.0, "coupling": None,
    "width": None, "bias": 0.0, "beta": None, "mu": None,
    "eps0": 1.0, "a_left": 1.0, "a_right": 1.0,
}

_NUMERIC_DEFAULTS = {
    "floquet": {
        "n_t": 512.0, "n_h": 0.0, "tail_tol": 1e-8, "noise": 0.0,
        "x_tol": 1e-8, "max_periods": 500.0,
    },
    "adiabatic": {
        "grid": 4097.0, "metric_max": DEFAULT_METRIC_THRESHOLD,
        "force": 0.0,
    },
    "oracle": {
        "n_k": 400.0, "window": 4.0, "n_relax": 30.0, "n_steps": 512.0,
    },
}

_BOOL_KEYS = {"noise", "force"}


class ConfigError(ValueError):
    """Raised for malformed or inconsistent scenario files."""


@dataclass(frozen=True)
class Scenario:
    """Fully resolved sweep description."""

    regime: str
    parameters: dict
    axes: tuple  # up to two (name, values) pairs
    numerics: dict
    output: str

    def resolved(self) -> list[tuple[str, str]]:
        """Flat (key, value) view, used for the CSV header."""
        items = [("regime", self.regime)]
        items += [(k, _fmt(v)) for k, v in sorted(self.parameters.items())]
        for j, (name, values) in enumerate(self.axes, start=1):
            items.append((f"axis{j}",
                          f"{name} : {_fmt(values[0])} : {_fmt(values[-1])} "
                          f": {values.size}"))
        items += [(k, _fmt(v)) for k, v in sorted(self.numerics.items())]
        return items


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def _parse_axis(name: str, text: str) -> tuple[str, np.ndarray]:
    parts = [p.strip() for p in text.split(":")]
    if len(parts) != 4:
        raise ConfigError(
            f"{name}: expected 'parameter : start : stop : count', got {text!r}")
    param = parts[0]
    if param not in _PARAM_DEFAULTS:
        raise ConfigError(f"{name}: unknown parameter {param!r}")
    try:
        start, stop = float(parts[1]), float(parts[2])
        count = int(parts[3])
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None
    if count < 1:
        raise ConfigError(f"{name}: count must be >= 1")
    return param, np.linspace(start, stop, count)


def load_scenario(path: str) -> Scenario:
    """Parse and validate a scenario file."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh, source=path)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None

    if not cp.has_section("scenario") or not cp.has_option("scenario", "regime"):
        raise ConfigError(f"{path}: missing [scenario] regime")
    regime = cp.get("scenario", "regime").strip().lower()
    if regime not in REGIMES:
        raise ConfigError(f"{path}: regime must be one of {REGIMES}")

    if not cp.has_section("parameters"):
        raise ConfigError(f"{path}: missing [parameters] section")
    params = dict(_PARAM_DEFAULTS)
    gamma = None
    for key, raw in cp.items("parameters"):
        if key == "gamma":
            gamma = _parse_float("parameters.gamma", raw)
            continue
        if key not in _PARAM_DEFAULTS:
            raise ConfigError(f"{path}: unknown parameter {key!r}")
        params[key] = _parse_float(f"parameters.{key}", raw)
    if gamma is not None:
        if params["coupling"] is not None:
            raise ConfigError(f"{path}: give either coupling or gamma, not both")
        if params["width"] is None:
            raise ConfigError(f"{path}: gamma requires width")
        params["coupling"] = math.sqrt(gamma * params["width"] / 2.0)
    axes = []
    if cp.has_section("sweep"):
        for key in ("axis1", "axis2"):
            if cp.has_option("sweep", key):
                axes.append(_parse_axis(key, cp.get("sweep", key)))
        extra = set(cp.options("sweep")) - {"axis1", "axis2"}
        if extra:
            raise ConfigError(f"{path}: unknown sweep keys {sorted(extra)}")
        if len(axes) == 2 and axes[0][0] == axes[1][0]:
            raise ConfigError(f"{path}: both axes sweep {axes[0][0]!r}")

    # a parameter swept by an axis needs no static value
    swept = {name for name, _ in axes}
    missing = [k for k, v in params.items() if v is None and k not in swept]
    if missing:
        raise ConfigError(f"{path}: missing parameters {missing}")

    numerics = dict(_NUMERIC_DEFAULTS[regime])
    if cp.has_section("numerics"):
        for key, raw in cp.items("numerics"):
            if key not in numerics:
                raise ConfigError(
                    f"{path}: unknown numerics key {key!r} for regime {regime}")
            if key in _BOOL_KEYS:
                try:
                    numerics[key] = 1.0 if cp.getboolean("numerics", key) else 0.0
                except ValueError:
                    raise ConfigError(
                        f"{path}: numerics.{key} must be a boolean") from None
            else:
                numerics[key] = _parse_float(f"numerics.{key}", raw)

    output = "sweep.csv"
    if cp.has_section("output") and cp.has_option("output", "path"):
        output = cp.get("output", "path").strip()

    return Scenario(regime=regime, parameters=params, axes=tuple(axes),
                    numerics=numerics, output=output)


def _parse_float(label: str, raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"{label}: not a number: {raw!r}") from None


def sweep_grid(scenario: Scenario) -> list[dict]:
    """Row-major list of parameter dictionaries, one per grid point."""
    points = []
    if not scenario.axes:
        return [dict(scenario.parameters, _axis1=math.nan, _axis2=math.nan)]
    if len(scenario.axes) == 1:
        name, values = scenario.axes[0]
        for v in values:
            points.append(dict(scenario.parameters, _axis1=float(v),
                               _axis2=math.nan, **{name: float(v)}))
        return points
    (n1, v1), (n2, v2) = scenario.axes
    for a in v1:
        for b in v2:
            points.append(dict(scenario.parameters, _axis1=float(a),
                               _axis2=float(b),
                               **{n1: float(a), n2: float(b)}))
    return points


def build_tqd_params(params: dict) -> tuple[TQDParams, LorentzianSD, LorentzianSD]:
    """Physical objects for one grid point."""
    drv = DrivingProtocol(omega=params["omega"], a0=params["a0"],
                          phi=params["phi"], a_left=params["a_left"],
                          a_right=params["a_right"], eps0=params["eps0"])
    lam, width = params["coupling"], params["width"]
    gamma = 2.0 * lam**2 / width
    bias = params["bias"]
    sd_left = LorentzianSD(coupling=gamma, width=width,
                           center=params["eps0"] - bias / 2.0)
    sd_right = LorentzianSD(coupling=gamma, width=width,
                            center=params["eps0"] + bias / 2.0)
    p = TQDParams(driving=drv, rc_left=rc_map_lorentzian(sd_left),
                  rc_right=rc_map_lorentzian(sd_right), bias=bias)
    return p, sd_left, sd_right


def _reservoirs(params: dict, p: TQDParams):
    res_l = ReservoirSpec(beta=params["beta"], mu=params["mu"],
                          sd=p.rc_left.residual, label="L")
    res_r = ReservoirSpec(beta=params["beta"], mu=params["mu"],
                          sd=p.rc_right.residual, label="R")
    return res_l, res_r


def _blank_row() -> dict:
    row = {c: math.nan for c in CSV_COLUMNS}
    row["status"] = "ok"
    return row


def _floquet_point(params: dict, numerics: dict) -> dict:
    p, _, _ = build_tqd_params(params)
    res_l, res_r = _reservoirs(params, p)
    h_func = lambda t: fock_hamiltonian(p, t)
    omega = p.driving.omega
    u_period, u_grid = propagate_period(h_func, omega,
                                        n_t=int(numerics["n_t"]))
    basis = floquet_modes(u_period, u_grid, omega, blocks=NUMBER_SECTORS)
    n_h = int(numerics["n_h"]) or None
    rates = build_dressed_rates(basis, {"L": D_LEFT, "R": D_RIGHT},
                                {"L": res_l, "R": res_r}, n_h=n_h)
    liouv = build_liouvillian(rates, h_func)
    state = solve_periodic_state(liouv, tail_tol=numerics["tail_tol"],
                                 subspace=number_diagonal_indices())
    current = matter_current(state, rates, "L")
    row = _blank_row()
    row["Q"] = pumped_charge(current, omega)
    row["tail_norm"] = state.tail_norm
    row["min_pop"] = state.min_population(basis.n_t)
    if numerics["noise"]:
        gen = from_liouvillian(liouv)
        rec = cumulants_periodic(gen, state_vector(state), omega,
                                 x_tol=numerics["x_tol"],
                                 max_periods=int(numerics["max_periods"]))
        row["dQ2"] = rec.variance
    return row


def _adiabatic_point(params: dict, numerics: dict) -> dict:
    p, _, _ = build_tqd_params(params)
    res_l, res_r = _reservoirs(params, p)
    dec = decompose_channels(p, grid=int(numerics["grid"]))
    metric = adiabaticity_metric(dec)
    q_total, dq2_total, records = total_cumulants(
        dec, res_l, res_r, metric=metric,
        max_metric=numerics["metric_max"], force=bool(numerics["force"]))
    row = _blank_row()
    row["Q"] = q_total
    row["dQ2"] = dq2_total
    for ch in ("u", "c", "d"):
        row[f"Q_{ch}"] = records[ch].charge
        row[f"dQ2_{ch}"] = records[ch].variance
    row["adiab_metric"] = metric
    return row


def _oracle_point(params: dict, numerics: dict) -> dict:
    from .oracle import compare_representations

    p, sd_left, sd_right = build_tqd_params(params)
    res_l, res_r = _reservoirs(params, p)
    report = compare_representations(
        sd_left, sd_right, p, res_l, res_r,
        n_k=int(numerics["n_k"]), window=numerics["window"],
        n_relax=int(numerics["n_relax"]), n_steps=int(numerics["n_steps"]))
    row = _blank_row()
    row["Q"] = report.mapped.charge_left
    row["min_pop"] = float(report.mapped.occupation_sys.min())
    # mapping-fidelity diagnostic: relative charge deviation between the
    # original and mapped exact runs
    scale = max(abs(report.original.charge_left), 1e-12)
    row["adiab_metric"] = report.charge_deviation / scale
    return row


_POINT_RUNNERS = {
    "floquet": _floquet_point,
    "adiabatic": _adiabatic_point,
    "oracle": _oracle_point,
}


def evaluate_point(task: tuple) -> dict:
    """Run one grid point; never raises (errors land in ``status``)."""
    regime, params, numerics = task
    start = time.perf_counter()
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            row = _POINT_RUNNERS[regime](params, numerics)
    except Exception as exc:  # per-point failures must not kill the sweep
        row = _blank_row()
        row["status"] = f"error:{type(exc).__name__}"
    row["axis1"] = params["_axis1"]
    row["axis2"] = params["_axis2"]
    row["wall_ms"] = 1000.0 * (time.perf_counter() - start)
    return row


def run_scenario(scenario: Scenario, threads: int = 1,
                 verbose: bool = False) -> list[dict]:
    """Evaluate every grid point in deterministic row-major order."""
    tasks = [(scenario.regime, pt, scenario.numerics)
             for pt in sweep_grid(scenario)]
    if threads > 1 and len(tasks) > 1:
        with get_context("fork").Pool(threads) as pool:
            rows = pool.map(evaluate_point, tasks)
    else:
        rows = []
        for j, task in enumerate(tasks):
            rows.append(evaluate_point(task))
            if verbose:
                print(f"  point {j + 1}/{len(tasks)}: "
                      f"Q={_cell(rows[-1]['Q'])} {rows[-1]['status']}",
                      file=sys.stderr)
    return rows


def _cell(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, float) and math.isnan(x):
        return ""
    return format(x, ".12g")


def write_csv(path: str, scenario: Scenario, rows: list[dict]) -> None:
    """Atomically write header comments plus one line per grid point."""
    buf = io.StringIO()
    buf.write(f"# version = {__version__}\n")
    buf.write(f"# generated = {time.strftime('%Y-%m-%dT%H:%M:%S%z')}\n")
    for key, value in scenario.resolved():
        buf.write(f"# {key} = {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_cell(row[c]) for c in CSV_COLUMNS])
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def rc_info_report(scenario: Scenario) -> str:
    """Mapping report: bath coupling <-> three-site tunneling amplitude."""
    params = scenario.parameters
    lam, width = params["coupling"], params["width"]
    gamma = 2.0 * lam**2 / width
    lines = [
        "reaction-coordinate mapping report",
        f"  width (delta)      : {_fmt(width)}",
        f"  bath coupling Gamma: {_fmt(gamma)}",
        f"  tunneling lambda   : {_fmt(lam)}   [lambda = sqrt(Gamma*width/2)]",
        f"  residual density   : flat, value {_fmt(2.0 * width)} (= 2*delta)",
        f"  site energies      : left {_fmt(params['eps0'] - params['bias'] / 2)}"
        f", right {_fmt(params['eps0'] + params['bias'] / 2)}",
    ]
    return "\n".join(lines)


def read_csv(path: str) -> tuple[list[str], list[dict]]:
    """Read a sweep CSV back; returns (header comment lines, rows)."""
    comments, rows = [], []
    with open(path, encoding="utf-8") as fh:
        data_lines = []
        for line in fh:
            if line.startswith("#"):
                comments.append(line.rstrip("\n"))
            else:
                data_lines.append(line)
    reader = csv.DictReader(data_lines)
    for rec in reader:
        row = {}
        for key, val in rec.items():
            if key == "status":
                row[key] = val
            else:
                row[key] = float(val) if val else math.nan
        rows.append(row)
    return comments, rows


def compare_reports(path_a: str, path_b: str) -> str:
    """Per-point relative differences of two sweeps sharing the same axes."""
    _, rows_a = read_csv(path_a)
    _, rows_b = read_csv(path_b)
    if len(rows_a) != len(rows_b):
        raise ConfigError(
            f"row count mismatch: {len(rows_a)} vs {len(rows_b)}")
    diffs = []
    for ra, rb in zip(rows_a, rows_b):
        for ax in ("axis1", "axis2"):
            same = (math.isnan(ra[ax]) and math.isnan(rb[ax])) or \
                np.isclose(ra[ax], rb[ax], rtol=1e-12, atol=1e-12)
            if not same:
                raise ConfigError(
                    f"axis mismatch at row {len(diffs)}: "
                    f"{ra[ax]} vs {rb[ax]}")
        scale = max(abs(ra["Q"]), abs(rb["Q"]), 1e-12)
        diffs.append(abs(ra["Q"] - rb["Q"]) / scale)
    arr = np.asarray(diffs)
    lines = [f"points compared : {arr.size}",
             f"max relative dQ : {arr.max():.6g}",
             f"mean relative dQ: {arr.mean():.6g}"]
    worst = int(arr.argmax())
    lines.append(f"worst point     : row {worst} "
                 f"(axis1={_cell(rows_a[worst]['axis1'])}, "
                 f"axis2={_cell(rows_a[worst]['axis2'])})")
    return "\n".join(lines)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rcpump",
        description="Driven three-site charge pump: sweeps and reports.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="evaluate a sweep and write a CSV")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="override the output path")
    p_run.add_argument("--threads", type=int, default=1)
    p_run.add_argument("--verbose", action="store_true")

    p_info = sub.add_parser("rc-info", help="print the mapping report")
    p_info.add_argument("config")

    p_cmp = sub.add_parser("compare", help="diff two sweep CSVs")
    p_cmp.add_argument("csv_a")
    p_cmp.add_argument("csv_b")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            scenario = load_scenario(args.config)
            out = args.out or scenario.output
            rows = run_scenario(scenario, threads=args.threads,
                                verbose=args.verbose)
            write_csv(out, scenario, rows)
            failed = sum(1 for r in rows if r["status"] != "ok")
            if args.verbose or failed:
                print(f"{len(rows)} points -> {out} ({failed} failed)",
                      file=sys.stderr)
            return 2 if failed else 0
        if args.command == "rc-info":
            print(rc_info_report(load_scenario(args.config)))
            return 0
        if args.command == "compare":
            print(compare_reports(args.csv_a, args.csv_b))
            return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
