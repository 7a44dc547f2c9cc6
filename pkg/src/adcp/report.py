"""Serialization of ablation grids and attack artifacts.

Three machine-readable forms plus figures:

* CSV, one data row per cell with columns w, ts_or_color, asr, mean_query,
  n. Floats carry exactly 4 fractional digits; cell values are rounded to
  that precision when the grid is built, so a re-parse reproduces the grid
  bit-exactly.
* JSON, the full grid plus a config echo, re-parseable into an equal grid.
* SVG heatmap written by hand: exactly one rect element per grid cell. The
  fill ramps linearly per channel from rgb(247,251,255) at ASR 0 to
  rgb(8,48,107) at ASR 1.
* PNG figures rendered with matplotlib for eyeballing results.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)
import numpy as np  # noqa: E402

from .evaluator import AblationGrid, CellResult, ColorGrid  # noqa: E402

Grid = Union[AblationGrid, ColorGrid]

ASR_RAMP_LO = (247, 251, 255)
ASR_RAMP_HI = (8, 48, 107)


def asr_fill(value: float) -> str:
    """Map an ASR in [0,1] onto the documented linear color ramp."""
    v = min(1.0, max(0.0, value))
    rgb = tuple(round(lo + (hi - lo) * v) for lo, hi in zip(ASR_RAMP_LO, ASR_RAMP_HI))
    return "rgb({},{},{})".format(*rgb)


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def _color_key(color: Tuple[int, int, int]) -> str:
    return "{}:{}:{}".format(*color)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def write_csv(grid: Grid, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["w", "ts_or_color", "asr", "mean_query", "n"])
        if isinstance(grid, AblationGrid):
            for i_w, wv in enumerate(grid.w_values):
                for i_ts, tsv in enumerate(grid.ts_values):
                    c = grid.cells[i_w][i_ts]
                    w.writerow([_fmt(wv), _fmt(tsv), _fmt(c.asr),
                                _fmt(c.mean_query), c.n_images])
        else:
            for color, c in zip(grid.colors, grid.cells):
                w.writerow(["", _color_key(color), _fmt(c.asr),
                            _fmt(c.mean_query), c.n_images])


def read_csv(path) -> Grid:
    """Rebuild a grid from its CSV. Inverse of write_csv for rounded grids."""
    with open(path, encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != ["w", "ts_or_color", "asr", "mean_query", "n"]:
        raise ValueError(f"{path} is not a grid CSV")
    body = rows[1:]
    if not body:
        raise ValueError(f"{path} has no data rows")
    if body[0][0] == "":
        colors, cells = [], []
        for _, key, a, q, n in body:
            colors.append(tuple(int(v) for v in key.split(":")))
            cells.append(CellResult(asr=float(a), mean_query=float(q), n_images=int(n)))
        return ColorGrid(colors=tuple(colors), cells=tuple(cells))
    by_cell: Dict[Tuple[float, float], CellResult] = {}
    for wv, tsv, a, q, n in body:
        by_cell[(float(wv), float(tsv))] = CellResult(
            asr=float(a), mean_query=float(q), n_images=int(n))
    w_values = tuple(sorted({k[0] for k in by_cell}))
    ts_values = tuple(sorted({k[1] for k in by_cell}))
    cells = tuple(tuple(by_cell[(wv, tsv)] for tsv in ts_values) for wv in w_values)
    return AblationGrid(w_values=w_values, ts_values=ts_values, cells=cells)


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------

def _cell_dict(c: CellResult) -> dict:
    return {"asr": c.asr, "mean_query": c.mean_query, "n": c.n_images}


def _cell_from(d: dict) -> CellResult:
    return CellResult(asr=float(d["asr"]), mean_query=float(d["mean_query"]),
                      n_images=int(d["n"]))


def grid_to_dict(grid: Grid) -> dict:
    if isinstance(grid, AblationGrid):
        return {"kind": "width_opacity",
                "w_values": list(grid.w_values),
                "ts_values": list(grid.ts_values),
                "cells": [[_cell_dict(c) for c in row] for row in grid.cells]}
    return {"kind": "color",
            "colors": [list(c) for c in grid.colors],
            "cells": [_cell_dict(c) for c in grid.cells]}


def grid_from_dict(d: dict) -> Grid:
    kind = d.get("kind")
    if kind == "width_opacity":
        return AblationGrid(
            w_values=tuple(float(v) for v in d["w_values"]),
            ts_values=tuple(float(v) for v in d["ts_values"]),
            cells=tuple(tuple(_cell_from(c) for c in row) for row in d["cells"]))
    if kind == "color":
        return ColorGrid(
            colors=tuple(tuple(int(v) for v in c) for c in d["colors"]),
            cells=tuple(_cell_from(c) for c in d["cells"]))
    raise ValueError(f"unknown grid kind: {kind!r}")


def write_json(grid: Grid, path, config: Optional[dict] = None) -> None:
    payload = {"grid": grid_to_dict(grid), "config": config or {}}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path) -> Tuple[Grid, dict]:
    with open(path, encoding="utf-8") as f:
        payload = json.load(f)
    return grid_from_dict(payload["grid"]), payload.get("config", {})


# ---------------------------------------------------------------------------
# SVG heatmap
# ---------------------------------------------------------------------------

_CELL = 44
_PAD_L = 76
_PAD_T = 48
_PAD_B = 12
_PAD_R = 16


def _color_grid_layout(grid: ColorGrid) -> Tuple[int, int]:
    n = round(len(grid.colors) ** (1.0 / 3.0))
    if n ** 3 == len(grid.colors):
        return n, n * n  # rows over the first channel, columns over the rest
    return 1, len(grid.colors)


def write_svg(grid: Grid, path) -> None:
    """Hand-rolled heatmap: one rect per cell, nothing else uses rect."""
    if isinstance(grid, AblationGrid):
        n_rows, n_cols = len(grid.w_values), len(grid.ts_values)
        row_labels = [_fmt(v) for v in grid.w_values]
        col_labels = [_fmt(v) for v in grid.ts_values]
        row_title, col_title = "width", "opacity"
        flat = [(i, j, grid.cells[i][j]) for i in range(n_rows) for j in range(n_cols)]
        tooltips = {(i, j): f"w={grid.w_values[i]} ts={grid.ts_values[j]}"
                    for i, j, _ in flat}
    else:
        n_rows, n_cols = _color_grid_layout(grid)
        row_labels = [str(grid.colors[r * n_cols][0]) for r in range(n_rows)]
        col_labels = ["{}:{}".format(grid.colors[c][1], grid.colors[c][2])
                      for c in range(n_cols)]
        row_title, col_title = "r", "g:b"
        flat = [(idx // n_cols, idx % n_cols, cell)
                for idx, cell in enumerate(grid.cells)]
        tooltips = {(idx // n_cols, idx % n_cols): _color_key(color)
                    for idx, color in enumerate(grid.colors)}

    width = _PAD_L + n_cols * _CELL + _PAD_R
    height = _PAD_T + n_rows * _CELL + _PAD_B
    parts: List[str] = []
    parts.append(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
                 f'height="{height}" viewBox="0 0 {width} {height}" '
                 f'font-family="monospace" font-size="11">')
    parts.append(f"<!-- fill ramps linearly from rgb{ASR_RAMP_LO} at asr=0 "
                 f"to rgb{ASR_RAMP_HI} at asr=1 -->")
    parts.append(f'<text x="{_PAD_L}" y="16">ASR by {row_title} (rows) and '
                 f'{col_title} (columns)</text>')
    for j, lab in enumerate(col_labels):
        x = _PAD_L + j * _CELL + _CELL // 2
        parts.append(f'<text x="{x}" y="{_PAD_T - 8}" text-anchor="middle">{lab}</text>')
    for i, lab in enumerate(row_labels):
        y = _PAD_T + i * _CELL + _CELL // 2 + 4
        parts.append(f'<text x="{_PAD_L - 8}" y="{y}" text-anchor="end">{lab}</text>')
    for i, j, cell in flat:
        x = _PAD_L + j * _CELL
        y = _PAD_T + i * _CELL
        parts.append(
            f'<rect x="{x}" y="{y}" width="{_CELL}" height="{_CELL}" '
            f'fill="{asr_fill(cell.asr)}" stroke="white">'
            f'<title>{tooltips[(i, j)]} asr={_fmt(cell.asr)} '
            f'q={_fmt(cell.mean_query)}</title></rect>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# matplotlib figures
# ---------------------------------------------------------------------------

def _heatmap(ax, matrix: np.ndarray, row_labels, col_labels, title: str,
             vmin=None, vmax=None) -> None:
    im = ax.imshow(matrix, cmap="Blues", vmin=vmin, vmax=vmax, aspect="auto")
    ax.set_xticks(range(len(col_labels)), labels=[str(v) for v in col_labels])
    ax.set_yticks(range(len(row_labels)), labels=[str(v) for v in row_labels])
    ax.set_title(title)
    for i in range(matrix.shape[0]):
        for j in range(matrix.shape[1]):
            v = matrix[i, j]
            ax.text(j, i, f"{v:.2f}", ha="center", va="center",
                    color="white" if im.norm(v) > 0.6 else "black", fontsize=8)
    ax.figure.colorbar(im, ax=ax, shrink=0.85)


def write_figures(grid: Grid, out_dir) -> List[Path]:
    out_dir = Path(out_dir)
    paths = []
    if isinstance(grid, AblationGrid):
        asr_m = np.array([[c.asr for c in row] for row in grid.cells])
        q_m = np.array([[c.mean_query for c in row] for row in grid.cells])
        for name, matrix, kw in (("asr.png", asr_m, {"vmin": 0.0, "vmax": 1.0}),
                                 ("mean_query.png", q_m, {})):
            fig, ax = plt.subplots(figsize=(1.0 + 0.9 * len(grid.ts_values),
                                            1.0 + 0.7 * len(grid.w_values)))
            _heatmap(ax, matrix, grid.w_values, grid.ts_values,
                     name.rsplit(".", 1)[0].replace("_", " "), **kw)
            ax.set_xlabel("opacity")
            ax.set_ylabel("width")
            fig.tight_layout()
            p = out_dir / name
            fig.savefig(p, dpi=120)
            plt.close(fig)
            paths.append(p)
    else:
        labels = [_color_key(c) for c in grid.colors]
        bar_colors = [tuple(ch / 255.0 for ch in c) for c in grid.colors]
        for name, values, ylim in (("asr.png", [c.asr for c in grid.cells], (0, 1.05)),
                                   ("mean_query.png",
                                    [c.mean_query for c in grid.cells], None)):
            fig, ax = plt.subplots(figsize=(0.4 * len(labels) + 2.0, 4.0))
            ax.bar(range(len(labels)), values, color=bar_colors, edgecolor="black")
            ax.set_xticks(range(len(labels)), labels=labels, rotation=90, fontsize=7)
            ax.set_ylabel(name.rsplit(".", 1)[0].replace("_", " "))
            ax.set_xlabel("patch color r:g:b")
            if ylim:
                ax.set_ylim(*ylim)
            fig.tight_layout()
            p = out_dir / name
            fig.savefig(p, dpi=120)
            plt.close(fig)
            paths.append(p)
    return paths


# ---------------------------------------------------------------------------
# top-level entry points
# ---------------------------------------------------------------------------

def write_report(grid: Grid, out_dir, formats: Sequence[str] = ("csv", "json", "svg", "png"),
                 config: Optional[dict] = None) -> List[Path]:
    """Emit the selected artifact formats into out_dir; returns written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    unknown = set(formats) - {"csv", "json", "svg", "png"}
    if unknown:
        raise ValueError(f"unknown report formats: {sorted(unknown)}")
    paths: List[Path] = []
    if "csv" in formats:
        p = out_dir / "report.csv"
        write_csv(grid, p)
        paths.append(p)
    if "json" in formats:
        p = out_dir / "report.json"
        write_json(grid, p, config=config)
        paths.append(p)
    if "svg" in formats:
        p = out_dir / "asr_heatmap.svg"
        write_svg(grid, p)
        paths.append(p)
    if "png" in formats:
        paths.extend(write_figures(grid, out_dir))
    return paths


def write_trace_csv(trace: Sequence[float], path) -> None:
    """Fitness trace as (iteration, gbest_fitness) rows, full float precision."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iteration", "gbest_fitness"])
        for i, v in enumerate(trace, start=1):
            w.writerow([i, repr(float(v))])
