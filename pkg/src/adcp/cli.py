"""Command-line entry point.

Subcommands:

* composite      render a patch onto an image and report its coverage
* attack         search patch parameters against one image
* ablate         run the width/opacity or color grid over a dataset manifest
* oracle-check   probe a detector oracle and verify the wire protocol

Configuration comes from a TOML file (JSON with the same structure is also
accepted); individual flags override file values, and the ADCP_ORACLE
environment variable overrides the oracle choice from either source.
Every attack or ablate run writes a config-echo JSON holding all effective
parameters and seeds; re-running with that file reproduces the results
bit-identically.

Exit codes: 0 success, 2 usage or configuration error, 3 attack failed,
4 oracle or protocol failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shlex
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import evaluator, report
from .compositor import composite, coverage_fraction, load_image, patch_mask, save_png
from .eot import EotConfig
from .evaluator import UndefinedMetricError, load_manifest
from .oracle import (DetectorOracle, OracleError, OracleSpec, ProtocolError,
                     external_oracle_connect, mock_always_fooled,
                     mock_coverage_detector, mock_hue_blind_detector,
                     mock_never_fooled)
from .patch_model import DEFAULT_BOUNDS, DIM_NAMES, ParamBounds, PatchParams
from .pso import SwarmConfig, run_attack

ORACLE_ENV_VAR = "ADCP_ORACLE"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    oracle: dict
    swarm: SwarmConfig
    eot: EotConfig
    out_dir: Path
    seed: int
    pool: int


# ---------------------------------------------------------------------------
# configuration assembly
# ---------------------------------------------------------------------------

def load_config_file(path) -> dict:
    path = Path(path)
    try:
        if path.suffix.lower() == ".json":
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        else:
            with open(path, "rb") as f:
                data = tomllib.load(f)
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} is not a table")
    return data


def parse_oracle_string(s: str) -> dict:
    """Compact oracle spec: mock:<kind>[:threshold] | cmd:<argv> | tcp:<host>:<port>."""
    parts = s.split(":", 1)
    if parts[0] == "mock":
        rest = (parts[1] if len(parts) > 1 else "").split(":")
        kind = rest[0]
        if kind in ("coverage", "hueblind"):
            if len(rest) != 2:
                raise ConfigError(f"mock:{kind} needs a threshold, got {s!r}")
            return {"kind": f"mock-{kind}", "threshold": float(rest[1])}
        if kind in ("always", "never"):
            return {"kind": f"mock-{kind}"}
        raise ConfigError(f"unknown mock oracle kind {kind!r}")
    if parts[0] == "cmd":
        if len(parts) != 2 or not parts[1].strip():
            raise ConfigError(f"cmd oracle needs a command line, got {s!r}")
        return {"kind": "command", "command": shlex.split(parts[1])}
    if parts[0] == "tcp":
        rest = parts[1].rsplit(":", 1) if len(parts) > 1 else []
        if len(rest) != 2:
            raise ConfigError(f"tcp oracle needs host:port, got {s!r}")
        return {"kind": "tcp", "host": rest[0], "port": int(rest[1])}
    raise ConfigError(f"unknown oracle spec {s!r}")


def build_oracle(cfg: dict) -> DetectorOracle:
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    try:
        if kind == "mock-coverage":
            cfg.pop("timeout", None)
            if "background" in cfg:
                cfg["background"] = tuple(cfg["background"])
            if cfg.get("box") is not None:
                cfg["box"] = tuple(cfg["box"])
            return mock_coverage_detector(**cfg)
        if kind == "mock-hueblind":
            cfg.pop("timeout", None)
            if "background" in cfg:
                cfg["background"] = tuple(cfg["background"])
            if cfg.get("box") is not None:
                cfg["box"] = tuple(cfg["box"])
            return mock_hue_blind_detector(**cfg)
        if kind == "mock-always":
            return mock_always_fooled(**{k: tuple(v) if k in ("background", "box") else v
                                         for k, v in cfg.items()})
        if kind == "mock-never":
            return mock_never_fooled(**{k: tuple(v) if k == "box" else v
                                        for k, v in cfg.items()})
        if kind == "command":
            spec = OracleSpec(command=tuple(cfg["command"]),
                              timeout=float(cfg.get("timeout", 30.0)),
                              n_classes=cfg.get("n_classes"))
            return external_oracle_connect(spec)
        if kind == "tcp":
            spec = OracleSpec(host=cfg["host"], port=int(cfg["port"]),
                              timeout=float(cfg.get("timeout", 30.0)),
                              n_classes=cfg.get("n_classes"))
            return external_oracle_connect(spec)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad oracle config ({kind}): {e}") from e
    raise ConfigError(f"oracle config needs a known 'kind', got {kind!r}")


def _build_bounds(table: dict) -> ParamBounds:
    ranges = {}
    for name, rng in table.items():
        if name not in DIM_NAMES:
            raise ConfigError(f"unknown bounds dimension {name!r} "
                              f"(expected one of {', '.join(DIM_NAMES)})")
        if not (isinstance(rng, (list, tuple)) and len(rng) == 2):
            raise ConfigError(f"bounds.{name} must be [lo, hi], got {rng!r}")
        ranges[name] = (float(rng[0]), float(rng[1]))
    try:
        return DEFAULT_BOUNDS.replace(**ranges)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _build_section(cls, table: dict, section: str, **extra):
    table = dict(table)
    for key in list(table):
        if isinstance(table[key], list):
            table[key] = tuple(table[key])
    try:
        return cls(**table, **extra)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad [{section}] section: {e}") from e


def resolve_config(args) -> RunConfig:
    """Merge config file, flags, and environment into one effective config."""
    file_cfg = load_config_file(args.config) if getattr(args, "config", None) else {}

    oracle_cfg = file_cfg.get("oracle")
    if getattr(args, "oracle", None):
        oracle_cfg = parse_oracle_string(args.oracle)
    env_spec = os.environ.get(ORACLE_ENV_VAR)
    if env_spec:
        oracle_cfg = parse_oracle_string(env_spec)
    if not oracle_cfg:
        raise ConfigError("no oracle configured: use [oracle] in the config file, "
                          f"--oracle, or ${ORACLE_ENV_VAR}")

    seed = args.seed if getattr(args, "seed", None) is not None \
        else int(file_cfg.get("seed", 0))
    pool = args.pool if getattr(args, "pool", None) is not None \
        else int(file_cfg.get("pool", 1))
    if pool < 1:
        raise ConfigError(f"pool must be >= 1, got {pool}")
    out_dir = Path(args.out_dir) if getattr(args, "out_dir", None) \
        else Path(file_cfg.get("out_dir", "adcp-out"))

    bounds = _build_bounds(file_cfg.get("bounds", {}))
    swarm = _build_section(SwarmConfig, file_cfg.get("swarm", {}), "swarm",
                           bounds=bounds, seed=seed)
    eot_cfg = _build_section(EotConfig, file_cfg.get("eot", {}), "eot")
    return RunConfig(oracle=dict(oracle_cfg), swarm=swarm, eot=eot_cfg,
                     out_dir=out_dir, seed=seed, pool=pool)


def config_echo_dict(cfg: RunConfig) -> dict:
    swarm = asdict(cfg.swarm)
    swarm["bounds"] = {name: [cfg.swarm.bounds.min_vec[d], cfg.swarm.bounds.max_vec[d]]
                       for d, name in enumerate(DIM_NAMES)}
    return {"oracle": cfg.oracle,
            "swarm": swarm,
            "eot": asdict(cfg.eot),
            "seed": cfg.seed,
            "pool": cfg.pool,
            "out_dir": str(cfg.out_dir)}


def write_config_echo(cfg: RunConfig, extra: dict) -> Path:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / "config_echo.json"
    payload = dict(config_echo_dict(cfg), **extra)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _parse_box(s: str) -> Tuple[float, float, float, float]:
    parts = s.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("box must be x0,y0,x1,y1")
    return tuple(float(v) for v in parts)


def cmd_composite(args) -> int:
    image = load_image(args.image)
    with open(args.theta, encoding="utf-8") as f:
        theta = PatchParams.from_json_dict(json.load(f), bounds=None)
    out = composite(image, theta)
    save_png(out, args.out)
    h, w = image.shape[:2]
    cov = coverage_fraction(patch_mask(theta, (w, h)))
    print(f"coverage_fraction: {cov:.6f}")
    print(f"wrote {args.out}")
    return 0


def cmd_attack(args) -> int:
    cfg = resolve_config(args)
    image = load_image(args.image)
    gt = evaluator.GroundTruth(class_id=args.class_id, box=args.box)
    oracle = build_oracle(cfg.oracle)
    try:
        outcome = run_attack(image, gt, oracle, cfg.eot, cfg.swarm)
    finally:
        oracle.close()

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_config_echo(cfg, {"command": "attack", "image": str(args.image),
                            "class_id": args.class_id,
                            "box": list(args.box) if args.box else None})
    payload = {"success": outcome.success,
               "theta": outcome.theta.to_json_dict(),
               "queries": outcome.queries,
               "evaluations": outcome.evaluations,
               "iterations_used": outcome.iterations_used,
               "final_fitness": outcome.fitness_trace[-1]}
    with open(cfg.out_dir / "outcome.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    report.write_trace_csv(outcome.fitness_trace, cfg.out_dir / "trace.csv")
    save_png(composite(image, outcome.theta), cfg.out_dir / "adversarial.png")

    status = "success" if outcome.success else "failed"
    print(f"attack {status}: queries={outcome.queries} "
          f"iterations={outcome.iterations_used} "
          f"final_fitness={outcome.fitness_trace[-1]:.6f}")
    print(f"artifacts in {cfg.out_dir}")
    return 0 if outcome.success else 3


def cmd_ablate(args) -> int:
    cfg = resolve_config(args)
    manifest = load_manifest(args.manifest)
    oracle = build_oracle(cfg.oracle)
    try:
        if args.grid == "w":
            w_values = args.w_values or evaluator.W_DEFAULT_AXIS
            ts_values = args.ts_values or evaluator.TS_DEFAULT_AXIS
            grid = evaluator.run_ablation_grid(
                manifest, oracle, w_values=w_values, ts_values=ts_values,
                eot_cfg=cfg.eot, swarm_cfg=cfg.swarm, pool=cfg.pool)
        else:
            channel_values = args.channel_values or evaluator.COLOR_DEFAULT_VALUES
            grid = evaluator.run_color_ablation(
                manifest, oracle, channel_values=channel_values,
                eot_cfg=cfg.eot, swarm_cfg=cfg.swarm, pool=cfg.pool)
    finally:
        oracle.close()

    echo = config_echo_dict(cfg)
    echo.update({"command": "ablate", "grid": args.grid,
                 "manifest": str(args.manifest), "dataset": manifest.name})
    paths = report.write_report(grid, cfg.out_dir, formats=args.formats, config=echo)
    write_config_echo(cfg, {"command": "ablate", "grid": args.grid,
                            "manifest": str(args.manifest)})
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_oracle_check(args) -> int:
    cfg = resolve_config(args)
    oracle = build_oracle(cfg.oracle)
    try:
        probe = _probe_image()
        t0 = time.perf_counter()
        dets = oracle.detect(probe)
        latency_first = (time.perf_counter() - t0) * 1000.0
        dets2 = oracle.detect(probe)  # second call checks id sequencing
        try:
            labels = str(oracle.label_space())
        except OracleError:
            labels = "unreported"
        print(f"round_trip_ok latency_ms={latency_first:.2f} "
              f"detections={len(dets)}/{len(dets2)} label_space={labels}")
        return 0
    finally:
        oracle.close()


def _probe_image(size: int = 64) -> np.ndarray:
    yy, xx = np.indices((size, size))
    img = np.stack([xx * 255 // (size - 1),
                    yy * 255 // (size - 1),
                    (xx + yy) * 255 // (2 * size - 2)], axis=2)
    return img.astype(np.uint8)


# ---------------------------------------------------------------------------
# parser and dispatch
# ---------------------------------------------------------------------------

def _csv_floats(s: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in s.split(","))


def _csv_ints(s: str) -> Tuple[int, ...]:
    return tuple(int(v) for v in s.split(","))


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML (or JSON) run configuration file")
    p.add_argument("--oracle", help="oracle spec string, e.g. mock:coverage:0.5, "
                                    "cmd:<argv>, tcp:<host>:<port>")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--pool", type=int, help="worker pool size, default 1")
    p.add_argument("--out-dir", help="artifact output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adcp",
        description="Black-box translucent-band patch attacks on object detectors.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("composite", help="render a patch onto an image")
    p.add_argument("--image", required=True, help="input PNG or JPEG")
    p.add_argument("--theta", required=True, help="patch parameter JSON file")
    p.add_argument("--out", required=True, help="output PNG path")
    p.set_defaults(func=cmd_composite)

    p = sub.add_parser("attack", help="attack a single image")
    _add_run_flags(p)
    p.add_argument("--image", required=True)
    p.add_argument("--class-id", type=int, required=True,
                   help="class the detector must lose")
    p.add_argument("--box", type=_parse_box,
                   help="ground-truth box x0,y0,x1,y1 (optional)")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("ablate", help="run an ablation grid over a manifest")
    _add_run_flags(p)
    p.add_argument("--manifest", required=True, help="dataset manifest JSON")
    p.add_argument("--grid", choices=("w", "color"), default="w",
                   help="w: width/opacity sweep; color: fixed-color sweep")
    p.add_argument("--w-values", type=_csv_floats, help="override width axis")
    p.add_argument("--ts-values", type=_csv_floats, help="override opacity axis")
    p.add_argument("--channel-values", type=_csv_ints,
                   help="override color channel values")
    p.add_argument("--formats", type=lambda s: tuple(s.split(",")),
                   default=("csv", "json", "svg", "png"),
                   help="comma-separated subset of csv,json,svg,png")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("oracle-check", help="probe the configured oracle")
    _add_run_flags(p)
    p.set_defaults(func=cmd_oracle_check)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UndefinedMetricError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ProtocolError, OracleError) as e:
        print(f"oracle failure: {e}", file=sys.stderr)
        return 4
    except (ConfigError, FileNotFoundError, IsADirectoryError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
