"""Figure rendering for the four CSV schemas the simulation side emits.

Figure kinds:

* ``trace``   - objective trajectory of one estimation run, inner-iteration
  view plus the outer-round view (rows at inner-loop boundaries).
* ``heatmap`` - position error bound over an xy grid, log color scale.
* ``cdf``     - empirical CDFs per sweep group.
* ``sweep``   - aggregated metric against transmit power, one line per
  RIS size.

Rendering is deterministic: identical inputs produce byte-identical PNG
files (fixed metadata, no timestamps).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.colors import LogNorm, Normalize  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["SchemaError", "FigureSpec", "RenderInfo", "render",
           "render_spec_file"]

KINDS = ("trace", "heatmap", "cdf", "sweep")

REQUIRED_COLUMNS = {
    "trace": ["outer_iter", "inner_iter", "objective"],
    "heatmap": ["x", "y", "peb"],
    "cdf": ["n_ris", "power_dbm", "pn_var", "metric", "value", "cdf"],
    "sweep": ["n_ris", "power_dbm", "pn_var"],
}

_SAVE_KW = dict(dpi=110, metadata={"Software": "risplots"})


class SchemaError(ValueError):
    """Raised when an input CSV does not carry the expected columns."""


@dataclass
class FigureSpec:
    """One figure description; see the README for the JSON file format."""

    kind: str
    input: str
    output: str
    title: str = ""
    value_column: str = "rmse"   # sweep figures: which aggregated column
    log_y: bool = True           # cdf x-scale / sweep and trace y-scale
    extra_inputs: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")


@dataclass
class RenderInfo:
    """What was drawn, for callers and tests to inspect."""

    output: str
    kind: str
    n_points: int
    color_span_decades: float | None = None
    terminal_cdf: float | None = None


def _read(path, kind, value_column=None):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        fields = reader.fieldnames or []
    needed = list(REQUIRED_COLUMNS[kind])
    if kind == "sweep" and value_column:
        needed.append(value_column)
    missing = [c for c in needed if c not in fields]
    if missing:
        raise SchemaError(
            f"{path}: missing required column(s) {missing} for a "
            f"{kind} figure (found {fields})")
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def render(spec: FigureSpec) -> RenderInfo:
    """Render one figure; returns inspection info. Never emits an image
    when the input fails validation."""
    rows = _read(spec.input, spec.kind, spec.value_column)
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    if spec.kind == "trace":
        return _render_trace(spec, rows, out)
    if spec.kind == "heatmap":
        return _render_heatmap(spec, rows, out)
    if spec.kind == "cdf":
        return _render_cdf(spec, rows, out)
    return _render_sweep(spec, rows, out)


def _render_trace(spec, rows, out):
    objective = np.array([float(r["objective"]) for r in rows])
    outer = np.array([int(r["outer_iter"]) for r in rows])
    inner = np.array([int(r["inner_iter"]) for r in rows])
    step = np.arange(1, objective.size + 1)
    # outer view: the last row of every round (inner-loop boundary)
    boundary = np.zeros(objective.size, dtype=bool)
    boundary[-1] = True
    boundary[:-1] = (outer[1:] != outer[:-1])

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.6))
    axes[0].plot(step, objective, lw=1.0)
    axes[0].set_xlabel("inner iteration (cumulative)")
    axes[0].set_ylabel("objective")
    axes[1].plot(np.arange(1, boundary.sum() + 1), objective[boundary],
                 marker="o", ms=3, lw=1.0)
    axes[1].set_xlabel("outer round")
    axes[1].set_ylabel("objective")
    for ax in axes:
        if spec.log_y and objective.min() > 0:
            ax.set_yscale("log")
        ax.grid(True, alpha=0.3)
    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    fig.savefig(out, **_SAVE_KW)
    plt.close(fig)
    return RenderInfo(str(out), "trace", int(objective.size))


def _render_heatmap(spec, rows, out):
    xs = np.array([float(r["x"]) for r in rows])
    ys = np.array([float(r["y"]) for r in rows])
    vals = np.array([float(r["peb"]) for r in rows])
    finite = vals[np.isfinite(vals) & (vals > 0)]
    if finite.size == 0:
        raise SchemaError(f"{spec.input}: heatmap has no positive finite values")
    vmin, vmax = float(finite.min()), float(finite.max())
    span = math.log10(vmax / vmin) if vmin > 0 else 0.0
    norm = LogNorm(vmin=vmin, vmax=vmax) if span >= 0.5 else Normalize(vmin, vmax)

    ux, uy = np.unique(xs), np.unique(ys)
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    if ux.size * uy.size == xs.size:
        grid = np.full((uy.size, ux.size), np.nan)
        ix = np.searchsorted(ux, xs)
        iy = np.searchsorted(uy, ys)
        grid[iy, ix] = vals
        mesh = ax.pcolormesh(ux, uy, grid, norm=norm, shading="nearest",
                             cmap="viridis")
    else:  # scattered points
        mesh = ax.scatter(xs, ys, c=vals, norm=norm, cmap="viridis", s=18)
    fig.colorbar(mesh, ax=ax, label="PEB [m]")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    if spec.title:
        ax.set_title(spec.title)
    fig.tight_layout()
    fig.savefig(out, **_SAVE_KW)
    plt.close(fig)
    return RenderInfo(str(out), "heatmap", int(vals.size),
                      color_span_decades=span)


def _render_cdf(spec, rows, out):
    groups = {}
    for r in rows:
        key = (r["n_ris"], r["power_dbm"], r["pn_var"], r["metric"])
        groups.setdefault(key, []).append((float(r["value"]), float(r["cdf"])))
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    terminal = 0.0
    for key in sorted(groups, key=str):
        pts = sorted(groups[key])
        vals = [p[0] for p in pts]
        cdf = [p[1] for p in pts]
        label = f"N={key[0]}, {key[1]} dBm"
        ax.step(vals, cdf, where="post", label=label, lw=1.2)
        terminal = max(terminal, cdf[-1])
    if spec.log_y:
        ax.set_xscale("log")
    ax.set_ylim(0, 1.05)
    ax.set_xlabel(rows[0]["metric"])
    ax.set_ylabel("empirical CDF")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    if spec.title:
        ax.set_title(spec.title)
    fig.tight_layout()
    fig.savefig(out, **_SAVE_KW)
    plt.close(fig)
    return RenderInfo(str(out), "cdf", len(rows), terminal_cdf=terminal)


def _render_sweep(spec, rows, out):
    col = spec.value_column
    groups = {}
    for r in rows:
        key = (r["n_ris"], r["pn_var"])
        groups.setdefault(key, []).append((float(r["power_dbm"]),
                                           float(r[col])))
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    for key in sorted(groups, key=str):
        pts = sorted(groups[key])
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=4,
                lw=1.2, label=f"N={key[0]}, var={key[1]}")
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel("transmit power [dBm]")
    ax.set_ylabel(col)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    if spec.title:
        ax.set_title(spec.title)
    fig.tight_layout()
    fig.savefig(out, **_SAVE_KW)
    plt.close(fig)
    return RenderInfo(str(out), "sweep", len(rows))


def render_spec_file(path) -> list:
    """Render every figure described in a JSON spec file.

    Format: {"figures": [{"kind": ..., "input": ..., "output": ...,
    optional "title", "value_column", "log_y"}, ...]}. Relative paths are
    resolved against the spec file's directory.
    """
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    base = path.parent
    infos = []
    for entry in doc["figures"]:
        entry = dict(entry)
        for key in ("input", "output"):
            p = Path(entry[key])
            if not p.is_absolute():
                entry[key] = str(base / p)
        infos.append(render(FigureSpec(**entry)))
    return infos
