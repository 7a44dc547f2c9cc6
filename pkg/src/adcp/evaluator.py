"""Dataset-level attack runs, the success-rate metric, and ablation grids.

The attack success rate (ASR) is computed over the images the detector
actually finds when unattacked: images failing that clean pass are excluded
from the denominator. ASR = 1 - (still detected) / N. Queries count oracle
calls made while attacking; the clean filtering pass is not charged.
Mean query is averaged over all attacked images, charging failed attacks
their full spent budget.

Grids pin a subset of patch dimensions per cell (width and opacity for the
width/opacity sweep, the color channels for the color sweep) and let the
swarm optimize the rest. Per-cell and per-image seeds are derived from the
master seed with an iterated splitmix64 fold, so any cell or image can be
reproduced in isolation and results do not depend on execution order or
pool size.
"""

from __future__ import annotations

import itertools
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .compositor import load_image
from .eot import EotConfig
from .oracle import DetectorOracle, GroundTruth, OracleError, adversarial_loss
from .pso import AttackOutcome, SwarmConfig, run_attack

log = logging.getLogger("adcp")

W_DEFAULT_AXIS: Tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
TS_DEFAULT_AXIS: Tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
COLOR_DEFAULT_VALUES: Tuple[int, ...] = (0, 127, 255)

_MASK64 = (1 << 64) - 1


class UndefinedMetricError(ValueError):
    """ASR requested over an empty true-positive set."""


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(master: int, *indices: int) -> int:
    """Fold indices into a master seed, one splitmix64 round per index.

    state starts as splitmix64(master); each index is mixed on its own and
    xor-folded before the next round, so (cell, image) tuples land on
    independent streams without structural collisions.
    """
    state = _splitmix64(master & _MASK64)
    for idx in indices:
        state = _splitmix64(state ^ _splitmix64(idx & _MASK64))
    return state


@dataclass(frozen=True)
class ManifestEntry:
    image_path: Path
    gt: GroundTruth


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    entries: Tuple[ManifestEntry, ...]


def load_manifest(path) -> DatasetManifest:
    """Read a dataset manifest JSON file.

    Format: {"name": s, "entries": [{"image": path, "class_id": i,
    "box": [x0, y0, x1, y1] | null}]}. Relative image paths resolve
    against the manifest's directory. Every image must exist.
    """
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        raw = json.load(f)
    try:
        name = raw["name"]
        raw_entries = raw["entries"]
    except (KeyError, TypeError) as e:
        raise ValueError(f"manifest {path} missing field: {e}") from e
    base = path.parent
    entries = []
    for i, e in enumerate(raw_entries):
        try:
            img = Path(e["image"])
            if not img.is_absolute():
                img = base / img
            box = e.get("box")
            gt = GroundTruth(class_id=int(e["class_id"]),
                             box=None if box is None else tuple(float(v) for v in box))
        except (KeyError, TypeError, ValueError) as err:
            raise ValueError(f"manifest {path} entry {i} is malformed: {err}") from err
        if not img.is_file():
            raise FileNotFoundError(f"manifest {path} entry {i}: no such image {img}")
        entries.append(ManifestEntry(image_path=img, gt=gt))
    return DatasetManifest(name=str(name), entries=tuple(entries))


def write_manifest(manifest: DatasetManifest, path) -> None:
    payload = {"name": manifest.name,
               "entries": [{"image": str(e.image_path),
                            "class_id": e.gt.class_id,
                            "box": None if e.gt.box is None else list(e.gt.box)}
                           for e in manifest.entries]}
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")


def asr(still_detected: Sequence[bool]) -> float:
    """Attack success rate over attacked true positives: 1 - surviving/N."""
    n = len(still_detected)
    if n == 0:
        raise UndefinedMetricError("ASR undefined: no attacked true positives")
    return 1.0 - sum(1 for s in still_detected if s) / n


@dataclass(frozen=True)
class ImageRecord:
    entry: ManifestEntry
    outcome: Optional[AttackOutcome]
    skipped: Optional[str]  # reason this image is outside the denominator


@dataclass(frozen=True)
class DatasetResult:
    records: Tuple[ImageRecord, ...]
    asr: float
    mean_query: float
    n_attacked: int


def _attack_one(entry: ManifestEntry, oracle: DetectorOracle, eot_cfg: EotConfig,
                cfg: SwarmConfig) -> ImageRecord:
    image = load_image(entry.image_path)
    try:
        clean = oracle.detect(image)
    except OracleError as e:
        log.warning("clean pass failed on %s: %s", entry.image_path, e)
        return ImageRecord(entry, None, f"oracle error on clean pass: {e}")
    _, fooled_clean = adversarial_loss(clean, entry.gt)
    if fooled_clean:
        return ImageRecord(entry, None, "not a true positive on the clean image")
    try:
        outcome = run_attack(image, entry.gt, oracle, eot_cfg, cfg)
    except OracleError as e:
        log.warning("attack aborted on %s after %d queries: %s",
                    entry.image_path, e.queries, e)
        return ImageRecord(entry, None, f"oracle error during attack: {e}")
    return ImageRecord(entry, outcome, None)


def run_dataset_attack(manifest: DatasetManifest, oracle: DetectorOracle,
                       eot_cfg: EotConfig, swarm_cfg: SwarmConfig,
                       pool: int = 1) -> DatasetResult:
    """Attack every true positive in the manifest and aggregate the metrics.

    Per-image seeds are derive_seed(swarm_cfg.seed, image_index), so the
    result is identical for any pool size. Images the oracle errors on are
    logged and left out of the denominator.
    """
    if not manifest.entries:
        raise ValueError("manifest is empty")
    jobs = [(entry, replace(swarm_cfg, seed=derive_seed(swarm_cfg.seed, i)))
            for i, entry in enumerate(manifest.entries)]
    if pool <= 1:
        records = [_attack_one(entry, oracle, eot_cfg, cfg) for entry, cfg in jobs]
    else:
        with ThreadPoolExecutor(max_workers=pool) as ex:
            records = list(ex.map(
                lambda job: _attack_one(job[0], oracle, eot_cfg, job[1]), jobs))
    outcomes = [r.outcome for r in records if r.outcome is not None]
    if not outcomes:
        raise UndefinedMetricError("ASR undefined: no attacked true positives")
    return DatasetResult(
        records=tuple(records),
        asr=asr([not o.success for o in outcomes]),
        mean_query=float(np.mean([o.queries for o in outcomes])),
        n_attacked=len(outcomes),
    )


@dataclass(frozen=True)
class CellResult:
    asr: float
    mean_query: float
    n_images: int

    def __post_init__(self):
        if not 0.0 <= self.asr <= 1.0:
            raise ValueError(f"asr outside [0,1]: {self.asr}")


@dataclass(frozen=True)
class AblationGrid:
    w_values: Tuple[float, ...]
    ts_values: Tuple[float, ...]
    cells: Tuple[Tuple[CellResult, ...], ...]  # indexed [i_w][i_ts]

    def __post_init__(self):
        if len(self.cells) != len(self.w_values) or any(
                len(row) != len(self.ts_values) for row in self.cells):
            raise ValueError("cell matrix does not match the axes")


@dataclass(frozen=True)
class ColorGrid:
    colors: Tuple[Tuple[int, int, int], ...]
    cells: Tuple[CellResult, ...]

    def __post_init__(self):
        if len(self.cells) != len(self.colors):
            raise ValueError("cell list does not match the color list")


def _cell_result(res: DatasetResult) -> CellResult:
    # Values are rounded here, once, so every downstream serialization
    # (CSV with 4 fractional digits, JSON) reproduces them bit-exactly.
    return CellResult(asr=round(res.asr, 4),
                      mean_query=round(res.mean_query, 4),
                      n_images=res.n_attacked)


def run_ablation_grid(manifest: DatasetManifest, oracle: DetectorOracle,
                      w_values: Sequence[float] = W_DEFAULT_AXIS,
                      ts_values: Sequence[float] = TS_DEFAULT_AXIS,
                      eot_cfg: EotConfig = EotConfig(),
                      swarm_cfg: SwarmConfig = SwarmConfig(),
                      pool: int = 1) -> AblationGrid:
    """Sweep fixed (width, opacity) cells; the swarm optimizes position and color.

    Cell seeds are derive_seed(master, cell_index) with cells flattened
    row-major over (w, ts).
    """
    if not manifest.entries:
        raise ValueError("manifest is empty")
    w_values = tuple(sorted(float(v) for v in w_values))
    ts_values = tuple(sorted(float(v) for v in ts_values))
    rows = []
    for i_w, w in enumerate(w_values):
        row = []
        for i_ts, ts in enumerate(ts_values):
            cell_idx = i_w * len(ts_values) + i_ts
            cell_cfg = replace(swarm_cfg,
                               bounds=swarm_cfg.bounds.pin(width=w, opacity=ts),
                               seed=derive_seed(swarm_cfg.seed, cell_idx))
            res = run_dataset_attack(manifest, oracle, eot_cfg, cell_cfg, pool=pool)
            row.append(_cell_result(res))
        rows.append(tuple(row))
    return AblationGrid(w_values=w_values, ts_values=ts_values, cells=tuple(rows))


def color_combinations(channel_values: Sequence[int] = COLOR_DEFAULT_VALUES
                       ) -> Tuple[Tuple[int, int, int], ...]:
    vals = tuple(int(v) for v in channel_values)
    return tuple(itertools.product(vals, vals, vals))


def run_color_ablation(manifest: DatasetManifest, oracle: DetectorOracle,
                       channel_values: Sequence[int] = COLOR_DEFAULT_VALUES,
                       eot_cfg: EotConfig = EotConfig(),
                       swarm_cfg: SwarmConfig = SwarmConfig(),
                       pool: int = 1) -> ColorGrid:
    """Sweep fixed patch colors; the swarm optimizes position, width, opacity.

    Cell seeds are derive_seed(master, color_index) over the (r, g, b)
    product enumerated r-major.
    """
    if not manifest.entries:
        raise ValueError("manifest is empty")
    colors = color_combinations(channel_values)
    cells = []
    for idx, (r, g, b) in enumerate(colors):
        cell_cfg = replace(swarm_cfg,
                           bounds=swarm_cfg.bounds.pin(r=r, g=g, b=b),
                           seed=derive_seed(swarm_cfg.seed, idx))
        res = run_dataset_attack(manifest, oracle, eot_cfg, cell_cfg, pool=pool)
        cells.append(_cell_result(res))
    return ColorGrid(colors=colors, cells=tuple(cells))
