"""Rendering of sweep CSV files into publication-style figures.

Input is the fixed-schema CSV emitted by the sweep CLI (``axis1, axis2,
Q, dQ2, Q_u, Q_c, Q_d, dQ2_u, dQ2_c, dQ2_d, ...``).  Three styles:

- ``density``: a two-axis sweep pivoted into a heat map of the pumped
  charge, drawn with a diverging colormap whose zero point sits exactly
  at Q = 0.
- ``lines``: charge (and, when present, its variance) against the sweep
  axis, with the per-channel breakdown overlaid.
- ``rates``: same panels on a logarithmic sweep axis, for coupling scans
  spanning decades.

Rendering is deterministic: fixed style, fixed dpi, no timestamps or
software metadata in the output file.
"""

from __future__ import annotations

import configparser
import csv
import math
import re
from dataclasses import dataclass, field

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = [
    "PlotError",
    "PlotSpec",
    "Table",
    "load_table",
    "load_spec",
    "symmetric_range",
    "render",
]

STYLES = ("density", "lines", "rates")
CHANNEL_COLUMNS = {"u": ("Q_u", "dQ2_u"), "c": ("Q_c", "dQ2_c"),
                   "d": ("Q_d", "dQ2_d")}
_DPI = 150


class PlotError(ValueError):
    """Raised for malformed specs or unusable CSV input."""


@dataclass(frozen=True)
class PlotSpec:
    """Resolved description of one figure."""

    style: str
    inputs: tuple
    output: str
    xlabel: str | None = None
    ylabel: str | None = None
    range_policy: str = "per-panel"  # or "fixed"
    vmax: float | None = None

    def __post_init__(self):
        if self.style not in STYLES:
            raise PlotError(f"style must be one of {STYLES}, got {self.style!r}")
        if not self.inputs:
            raise PlotError("at least one input CSV is required")
        if self.range_policy not in ("per-panel", "fixed"):
            raise PlotError(
                f"range must be 'per-panel' or 'fixed', got {self.range_policy!r}")
        if self.range_policy == "fixed" and self.vmax is None:
            raise PlotError("fixed color range requires vmax")


@dataclass(frozen=True)
class Table:
    """One parsed sweep CSV: header metadata plus typed columns."""

    path: str
    columns: tuple
    rows: tuple
    meta: dict = field(default_factory=dict)

    def values(self, column: str) -> np.ndarray:
        if column not in self.columns:
            raise PlotError(
                f"{self.path}: column {column!r} not in {self.columns}")
        i = self.columns.index(column)
        return np.array([r[i] for r in self.rows])

    def axis_name(self, which: str) -> str:
        """Swept parameter name recorded in the header, e.g. 'phi'."""
        line = self.meta.get(which)
        if line:
            return line.split(":")[0].strip()
        return which


def load_table(path: str) -> Table:
    """Parse a sweep CSV; numeric cells become floats, blanks become NaN."""
    comments, data_lines = [], []
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                (comments if line.startswith("#") else data_lines).append(line)
    except OSError as exc:
        raise PlotError(f"cannot read {path}: {exc}") from None
    meta = {}
    for line in comments:
        m = re.match(r"#\s*([^=]+?)\s*=\s*(.*)", line)
        if m:
            meta[m.group(1)] = m.group(2).strip()
    reader = csv.reader(data_lines)
    try:
        columns = tuple(next(reader))
    except StopIteration:
        raise PlotError(f"{path}: no header row") from None
    rows = []
    for rec in reader:
        if len(rec) != len(columns):
            raise PlotError(
                f"{path}: row {len(rows) + 1} has {len(rec)} cells, "
                f"expected {len(columns)}")
        row = []
        for name, cell in zip(columns, rec):
            if name == "status":
                row.append(cell)
            else:
                row.append(float(cell) if cell else math.nan)
        rows.append(tuple(row))
    if not rows:
        raise PlotError(f"{path}: no data rows")
    return Table(path=path, columns=columns, rows=tuple(rows), meta=meta)


def load_spec(path: str) -> PlotSpec:
    """Read a figure description from an INI file with a [plot] section."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh, source=path)
    except (OSError, configparser.Error) as exc:
        raise PlotError(f"cannot read spec {path}: {exc}") from None
    if not cp.has_section("plot"):
        raise PlotError(f"{path}: missing [plot] section")
    known = {"style", "input", "output", "xlabel", "ylabel", "range", "vmax"}
    extra = set(cp.options("plot")) - known
    if extra:
        raise PlotError(f"{path}: unknown keys {sorted(extra)}")
    get = lambda key, default=None: cp.get("plot", key, fallback=default)
    if not get("style") or not get("input") or not get("output"):
        raise PlotError(f"{path}: style, input and output are required")
    inputs = tuple(p for p in get("input").split() if p)
    vmax = get("vmax")
    return PlotSpec(
        style=get("style").strip().lower(),
        inputs=inputs,
        output=get("output").strip(),
        xlabel=get("xlabel"),
        ylabel=get("ylabel"),
        range_policy=get("range", "per-panel").strip().lower(),
        vmax=float(vmax) if vmax is not None else None,
    )


def symmetric_range(values: np.ndarray) -> tuple[float, float]:
    """Color limits (-m, m) with m the largest finite magnitude (min 1e-12)."""
    finite = np.asarray(values, dtype=float)
    finite = finite[np.isfinite(finite)]
    m = float(np.max(np.abs(finite))) if finite.size else 0.0
    m = max(m, 1e-12)
    return -m, m


def _pivot(table: Table, column: str):
    """(x, y, Z) grids for a complete two-axis sweep, row-major order."""
    a1, a2 = table.values("axis1"), table.values("axis2")
    if np.isnan(a1).any() or np.isnan(a2).any():
        raise PlotError(
            f"{table.path}: density mode needs a two-axis sweep "
            "(axis1 and axis2 filled on every row)")
    x = np.unique(a1)
    y = np.unique(a2)
    if x.size * y.size != a1.size:
        raise PlotError(
            f"{table.path}: ragged grid ({x.size} x {y.size} != {a1.size} rows)")
    z = table.values(column).reshape(x.size, y.size)
    return x, y, z.T


def _new_figure(n_panels: int):
    fig, axes = plt.subplots(n_panels, 1, figsize=(5.2, 3.4 * n_panels),
                             squeeze=False, sharex=True,
                             constrained_layout=True)
    return fig, [ax for (ax,) in axes]


def _render_density(spec: PlotSpec, fig, ax):
    if len(spec.inputs) != 1:
        raise PlotError("density mode takes exactly one input CSV")
    table = load_table(spec.inputs[0])
    x, y, z = _pivot(table, "Q")
    if spec.range_policy == "fixed":
        lo, hi = -abs(spec.vmax), abs(spec.vmax)
    else:
        lo, hi = symmetric_range(z)
    mesh = ax.pcolormesh(x, y, z, cmap="RdBu", vmin=lo, vmax=hi,
                         shading="nearest", rasterized=True)
    fig.colorbar(mesh, ax=ax, label="Q per period")
    ax.set_xlabel(spec.xlabel or table.axis_name("axis1"))
    ax.set_ylabel(spec.ylabel or table.axis_name("axis2"))
    ax.set_xlim(x.min(), x.max())
    ax.set_ylim(y.min(), y.max())


def _render_lines(spec: PlotSpec, fig, axes, logx: bool):
    tables = [load_table(p) for p in spec.inputs]
    has_noise = any(np.isfinite(t.values("dQ2")).any() for t in tables)
    ax_q = axes[0]
    ax_n = axes[1] if has_noise and len(axes) > 1 else None
    for table in tables:
        x = table.values("axis1")
        if np.isnan(x).all():
            x = np.zeros(len(table.rows))
        style = "o-" if x.size > 1 else "o"
        label = table.path if len(tables) > 1 else None
        ax_q.plot(x, table.values("Q"), style, color="black",
                  label=label or "total")
        for ch, (q_col, n_col) in sorted(CHANNEL_COLUMNS.items()):
            q_ch = table.values(q_col)
            if np.isfinite(q_ch).any():
                ax_q.plot(x, q_ch, "--", label=f"channel {ch}")
                if ax_n is not None:
                    ax_n.plot(x, table.values(n_col), "--",
                              label=f"channel {ch}")
        if ax_n is not None:
            ax_n.plot(x, table.values("dQ2"), "o-", color="black",
                      label="total")
    ax_q.set_ylabel(spec.ylabel or "Q per period")
    ax_q.legend(loc="best", fontsize=8)
    bottom = ax_n if ax_n is not None else ax_q
    bottom.set_xlabel(spec.xlabel or tables[0].axis_name("axis1"))
    if ax_n is not None:
        ax_n.set_ylabel("dQ2 per period")
    if logx:
        for ax in axes:
            ax.set_xscale("log")


def render(spec: PlotSpec) -> str:
    """Draw the figure described by ``spec`` and write it; returns the path."""
    if spec.style == "density":
        fig, (ax,) = _new_figure(1)
        _render_density(spec, fig, ax)
    else:
        tables_have_noise = any(
            np.isfinite(load_table(p).values("dQ2")).any()
            for p in spec.inputs)
        fig, axes = _new_figure(2 if tables_have_noise else 1)
        _render_lines(spec, fig, axes, logx=spec.style == "rates")
    try:
        fig.savefig(spec.output, dpi=_DPI,
                    metadata={"Software": None, "CreationDate": None})
    finally:
        plt.close(fig)
    return spec.output
