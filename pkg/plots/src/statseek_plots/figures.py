"""Figure regeneration from experiment CSV/JSON outputs.

Reads only the files the experiment CLI writes (trace.csv, verdict.json,
grid.csv) and renders three figure kinds: query trajectories with the
warm-up region shaded, hyperparameter sweep curves on a log residual axis,
and per-agent parameter trajectories. Styling is pinned so a fixed input
always produces byte-identical raster and vector files.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

RC = {
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "figure.figsize": (6.4, 3.8),
    "font.family": "DejaVu Sans",
    "font.size": 9.0,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "svg.hashsalt": "statseek-plots",
    "svg.fonttype": "none",
}
PNG_METADATA = {"Software": "statseek-plots"}
SVG_METADATA = {"Date": None, "Creator": "statseek-plots"}
SHADE = {"color": "0.85", "zorder": 0.5, "linewidth": 0.0}

_KINDS = ("trace", "sweep", "params")
_THETA_COLUMN = re.compile(r"^theta_(\d+)_(\d+)$")


class PlotInputError(ValueError):
    """Unusable figure spec or input file; the message says what and where."""


@dataclass(frozen=True)
class FigureSpec:
    """One figure request: input paths, kind, shading boundary, output stem."""

    kind: str
    out: Path
    trace: Path | None = None
    grid: Path | None = None
    verdict: Path | None = None
    k_in: int | None = None
    agent: int | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "FigureSpec":
        if not isinstance(d, dict):
            raise PlotInputError("figure spec must be a JSON object")
        allowed = {"kind", "out", "trace", "grid", "verdict", "k_in", "agent"}
        unknown = sorted(set(d) - allowed)
        if unknown:
            raise PlotInputError(f"unknown spec keys {unknown}; allowed: {sorted(allowed)}")
        kind = d.get("kind")
        if kind not in _KINDS:
            raise PlotInputError(f"kind must be one of {list(_KINDS)}, got {kind!r}")
        if "out" not in d:
            raise PlotInputError("spec needs an 'out' image path")
        need = "grid" if kind == "sweep" else "trace"
        if need not in d:
            raise PlotInputError(f"kind {kind!r} needs a {need!r} input path")
        k_in = d.get("k_in")
        if k_in is not None and (not isinstance(k_in, int) or k_in < 0):
            raise PlotInputError("k_in must be a nonnegative integer")
        agent = d.get("agent")
        if kind == "params":
            if not isinstance(agent, int) or agent < 1:
                raise PlotInputError("kind 'params' needs a positive integer 'agent'")
        return cls(
            kind=kind,
            out=Path(d["out"]),
            trace=Path(d["trace"]) if "trace" in d else None,
            grid=Path(d["grid"]) if "grid" in d else None,
            verdict=Path(d["verdict"]) if "verdict" in d else None,
            k_in=k_in,
            agent=agent,
        )


# ---------------------------------------------------------------------------
# input tables

def read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.exists():
        raise PlotInputError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PlotInputError(f"{path}: file is empty") from None
        rows = [row for row in reader if row]
    if not rows:
        raise PlotInputError(f"{path}: no data rows")
    return header, rows


def require_columns(header: list[str], names: list[str], path: Path) -> None:
    missing = [n for n in names if n not in header]
    if missing:
        raise PlotInputError(
            f"{path}: missing columns {missing}; available: {header}"
        )


def float_column(header: list[str], rows: list[list[str]], name: str) -> np.ndarray:
    j = header.index(name)
    return np.array([float(row[j]) for row in rows])


def _load_verdict(spec: FigureSpec) -> dict | None:
    path = spec.verdict
    if path is None and spec.trace is not None:
        sibling = spec.trace.parent / "verdict.json"
        path = sibling if sibling.exists() else None
    if path is None:
        return None
    path = Path(path)
    if not path.exists():
        raise PlotInputError(f"verdict file not found: {path}")
    return json.loads(path.read_text())


def _resolve_k_in(spec: FigureSpec, header, rows, path) -> int:
    if spec.k_in is not None:
        if spec.k_in > len(rows):
            raise PlotInputError(
                f"k_in {spec.k_in} exceeds the trace length {len(rows)} in {path}"
            )
        return spec.k_in
    j = header.index("phase")
    return sum(1 for row in rows if row[j] == "init")


def _shade_warmup(ax, k: np.ndarray, k_in: int) -> None:
    if k_in > 0:
        ax.axvspan(float(k[0]) - 0.5, float(k[k_in - 1]) + 0.5, **SHADE)


# ---------------------------------------------------------------------------
# figure builders (pure: table in, matplotlib figure out)

def build_trace_figure(spec: FigureSpec):
    header, rows = read_table(spec.trace)
    require_columns(header, ["k", "phase"], spec.trace)
    comps = [c for c in header if c.startswith("x_hat_")]
    if not comps:
        raise PlotInputError(
            f"{spec.trace}: missing columns ['x_hat_*']; available: {header}"
        )
    k = float_column(header, rows, "k")
    k_in = _resolve_k_in(spec, header, rows, spec.trace)
    verdict = _load_verdict(spec)

    fig, ax = plt.subplots()
    _shade_warmup(ax, k, k_in)
    for name in comps:
        vals = float_column(header, rows, name)
        (line,) = ax.plot(k, vals, solid_capstyle="round")
        if verdict is not None and verdict.get("converged"):
            # dashed reference at the verified stationary level
            ax.axhline(
                float(vals[-1]), linestyle="--", linewidth=0.8,
                color=line.get_color(), alpha=0.55,
            )
    ax.set_xlabel("iteration k")
    ax.set_ylabel("query components")
    ax.set_title("query trajectory")
    fig.tight_layout()
    return fig


def build_sweep_figure(spec: FigureSpec):
    header, rows = read_table(spec.grid)
    require_columns(header, ["beta", "K_in", "k", "mean_residual"], spec.grid)
    jb, jk = header.index("beta"), header.index("K_in")
    cells: dict[tuple[str, str], list[list[str]]] = {}
    for row in rows:
        cells.setdefault((row[jb], row[jk]), []).append(row)

    fig, ax = plt.subplots()
    for (beta, k_in), cell_rows in cells.items():
        k = float_column(header, cell_rows, "k")
        res = float_column(header, cell_rows, "mean_residual")
        ax.plot(k, res, label=f"beta={float(beta):g}, K_in={int(k_in)}")
    ax.set_yscale("log")
    ax.set_xlabel("iteration k")
    ax.set_ylabel("mean residual")
    ax.set_title("hyperparameter sweep")
    ax.legend(fontsize=5.5, ncol=2, framealpha=0.85)
    fig.tight_layout()
    return fig


def build_params_figure(spec: FigureSpec):
    header, rows = read_table(spec.trace)
    require_columns(header, ["k", "phase"], spec.trace)
    prefix = f"theta_{spec.agent}_"
    comps = [c for c in header if c.startswith(prefix) and _THETA_COLUMN.match(c)]
    if not comps:
        agents = sorted(
            {int(m.group(1)) for c in header if (m := _THETA_COLUMN.match(c))}
        )
        raise PlotInputError(
            f"{spec.trace}: no parameter columns for agent {spec.agent}; "
            f"available agents: {agents}"
        )
    k = float_column(header, rows, "k")
    k_in = _resolve_k_in(spec, header, rows, spec.trace)

    fig, ax = plt.subplots()
    _shade_warmup(ax, k, k_in)
    for name in comps:
        ax.plot(k, float_column(header, rows, name))
    ax.set_xlabel("iteration k")
    ax.set_ylabel("parameter estimates")
    ax.set_title(f"parameter trajectory, agent {spec.agent}")
    fig.tight_layout()
    return fig


# ---------------------------------------------------------------------------
# rendering

def _save_dual(fig, out: Path) -> tuple[Path, Path]:
    out = Path(out)
    stem = out.with_suffix("") if out.suffix in (".png", ".svg") else out
    stem.parent.mkdir(parents=True, exist_ok=True)
    png, svg = stem.with_suffix(".png"), stem.with_suffix(".svg")
    fig.savefig(png, metadata=PNG_METADATA)
    fig.savefig(svg, metadata=SVG_METADATA)
    plt.close(fig)
    return png, svg


_BUILDERS = {
    "trace": build_trace_figure,
    "sweep": build_sweep_figure,
    "params": build_params_figure,
}


def render(spec: FigureSpec) -> tuple[Path, Path]:
    """Build the requested figure and write the raster/vector pair."""
    with plt.rc_context(RC):
        fig = _BUILDERS[spec.kind](spec)
        return _save_dual(fig, spec.out)


def plot_trace(spec: FigureSpec) -> tuple[Path, Path]:
    if spec.kind != "trace":
        raise PlotInputError(f"expected kind 'trace', got {spec.kind!r}")
    return render(spec)


def plot_sweep(spec: FigureSpec) -> tuple[Path, Path]:
    if spec.kind != "sweep":
        raise PlotInputError(f"expected kind 'sweep', got {spec.kind!r}")
    return render(spec)


def plot_params(spec: FigureSpec) -> tuple[Path, Path]:
    if spec.kind != "params":
        raise PlotInputError(f"expected kind 'params', got {spec.kind!r}")
    return render(spec)
