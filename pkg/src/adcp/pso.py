"""Particle swarm search and the single-image attack driver.

The optimizer only ever sees a scalar loss per candidate, which is what a
black-box setting permits. Velocities follow the classic two-term update

    v' = omega * v + c1 * r1 * (pbest - x) + c2 * r2 * (gbest - x)

with fixed acceleration coefficients by default (r1 and r2 are constants,
not draws, unless resampling is switched on). Velocities are clamped per
dimension to a fraction of that dimension's range and positions are clipped
back into the box, so pinned dimensions (lo == hi) stay put.

The objective may signal early termination: when a candidate already defeats
the detector there is no reason to keep polling it. Objectives can return a
bare float or a (loss, stop) pair.

Seeding: the master seed spawns k + 1 independent streams. Stream 0 drives
swarm initialization (and coefficient resampling when enabled); streams
1..k belong to the particles and are passed into the objective, so a
stochastic objective stays reproducible per particle regardless of
evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Tuple, Union

import numpy as np

from .compositor import require_rgb8
from .eot import EotConfig, expected_loss
from .oracle import DetectorOracle, GroundTruth, OracleError
from .patch_model import DEFAULT_BOUNDS, ParamBounds, PatchParams, decode

ObjectiveReturn = Union[float, Tuple[float, bool]]
Objective = Callable[[np.ndarray, np.random.Generator], ObjectiveReturn]


@dataclass(frozen=True)
class SwarmConfig:
    k: int = 20
    step_max: int = 500
    omega: float = 0.9
    c1: float = 1.6
    r1: float = 1.0
    c2: float = 2.0
    r2: float = 1.0
    v_max_frac: float = 0.25
    resample_coefficients: bool = False
    bounds: ParamBounds = DEFAULT_BOUNDS
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.step_max < 1:
            raise ValueError(f"step_max must be >= 1, got {self.step_max}")
        for name in ("omega", "c1", "r1", "c2", "r2", "v_max_frac"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.v_max_frac == 0.0:
            raise ValueError("v_max_frac must be positive or the swarm cannot move")


@dataclass(frozen=True)
class PsoResult:
    best_x: np.ndarray
    best_f: float
    trace: List[float]
    n_evals: int
    n_iters: int
    early_exit: bool


@dataclass(frozen=True)
class AttackOutcome:
    success: bool
    theta: PatchParams
    queries: int
    evaluations: int
    iterations_used: int
    fitness_trace: List[float]


def velocity_update(vel: np.ndarray, pos: np.ndarray, pbest: np.ndarray,
                    gbest: np.ndarray, cfg: SwarmConfig,
                    v_max: np.ndarray) -> np.ndarray:
    """One velocity step with the per-dimension clamp applied."""
    v_new = (cfg.omega * vel
             + cfg.c1 * cfg.r1 * (pbest - pos)
             + cfg.c2 * cfg.r2 * (gbest - pos))
    return np.clip(v_new, -v_max, v_max)


def position_update(pos: np.ndarray, vel: np.ndarray, lb: np.ndarray,
                    ub: np.ndarray) -> np.ndarray:
    return np.clip(pos + vel, lb, ub)


def _as_eval(ret: ObjectiveReturn) -> Tuple[float, bool]:
    if isinstance(ret, tuple):
        loss, stop = ret
        return float(loss), bool(stop)
    return float(ret), False


def minimize(objective: Objective, lb: np.ndarray, ub: np.ndarray,
             cfg: SwarmConfig, seed: int) -> PsoResult:
    """Run the swarm until step_max sweeps or an early stop signal.

    Fitness is only computed inside the sweep loop: a run that never stops
    early performs exactly k * step_max evaluations. On an early stop the
    position that triggered it is returned, not the running global best.
    """
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if lb.shape != ub.shape or lb.ndim != 1:
        raise ValueError(f"bad bounds shapes: {lb.shape} vs {ub.shape}")
    if np.any(lb > ub):
        raise ValueError("lower bounds exceed upper bounds")
    d = lb.size
    v_max = cfg.v_max_frac * (ub - lb)

    streams = np.random.SeedSequence(seed).spawn(cfg.k + 1)
    init_rng = np.random.default_rng(streams[0])
    particle_rngs = [np.random.default_rng(s) for s in streams[1:]]

    pos = lb + init_rng.random((cfg.k, d)) * (ub - lb)
    vel = -v_max + init_rng.random((cfg.k, d)) * (2.0 * v_max)
    pbest = pos.copy()
    pbest_f = np.full(cfg.k, np.inf)
    gbest = pos[0].copy()
    gbest_f = np.inf

    trace: List[float] = []
    n_evals = 0
    for it in range(cfg.step_max):
        for i in range(cfg.k):
            loss, stop = _as_eval(objective(pos[i], particle_rngs[i]))
            n_evals += 1
            if loss < pbest_f[i]:
                pbest_f[i] = loss
                pbest[i] = pos[i]
            if loss < gbest_f:
                gbest_f = loss
                gbest = pos[i].copy()
            if stop:
                trace.append(float(gbest_f))
                return PsoResult(best_x=pos[i].copy(), best_f=loss, trace=trace,
                                 n_evals=n_evals, n_iters=it + 1, early_exit=True)
        trace.append(float(gbest_f))

        if cfg.resample_coefficients:
            r1 = init_rng.random((cfg.k, d))
            r2 = init_rng.random((cfg.k, d))
            vel = np.clip(cfg.omega * vel + cfg.c1 * r1 * (pbest - pos)
                          + cfg.c2 * r2 * (gbest - pos), -v_max, v_max)
        else:
            vel = velocity_update(vel, pos, pbest, gbest, cfg, v_max)
        pos = position_update(pos, vel, lb, ub)

    return PsoResult(best_x=gbest, best_f=float(gbest_f), trace=trace,
                     n_evals=n_evals, n_iters=cfg.step_max, early_exit=False)


def run_attack(image: np.ndarray, gt: GroundTruth, oracle: DetectorOracle,
               eot_cfg: EotConfig, cfg: SwarmConfig) -> AttackOutcome:
    """Search patch parameters until the detector loses the target.

    Each fitness evaluation renders the candidate patch and polls the oracle
    over one transformation batch; the swarm stops as soon as any candidate
    fools every variant in its batch. On exhaustion the lowest-loss
    parameters found are returned with success=False. All oracle calls are
    counted; an oracle failure propagates with the spent query count on the
    exception.
    """
    image = require_rgb8(image)
    lb, ub = cfg.bounds.as_arrays()
    spent = 0

    def objective(x: np.ndarray, rng: np.random.Generator) -> Tuple[float, bool]:
        nonlocal spent
        params = decode(x, bounds=cfg.bounds)
        try:
            ev = expected_loss(image, params, oracle, gt, eot_cfg, rng)
        except OracleError as e:
            e.queries += spent
            raise
        spent += ev.queries
        return ev.loss, ev.fooled

    result = minimize(objective, lb, ub, cfg, cfg.seed)
    return AttackOutcome(success=result.early_exit,
                         theta=decode(result.best_x, bounds=cfg.bounds),
                         queries=spent,
                         evaluations=result.n_evals,
                         iterations_used=result.n_iters,
                         fitness_trace=result.trace)
