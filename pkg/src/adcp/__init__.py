"""Black-box translucent-band patch attacks on object detectors.

The package simulates a sticker placed on a camera lens: a translucent
colored band across the image, parameterized by its two edge anchor
positions, color, width, and opacity. A particle swarm searches those
parameters, querying only the detector's final detections, until the
detector loses the target object under a batch of random viewpoint and
photometric perturbations.
"""

from .compositor import composite, coverage_fraction, load_image, patch_mask, save_png
from .eot import EotConfig, LossEval, Transform, apply_transform, expected_loss
from .evaluator import (AblationGrid, CellResult, ColorGrid,
                        COLOR_DEFAULT_VALUES, DatasetManifest, ManifestEntry,
                        TS_DEFAULT_AXIS, UndefinedMetricError, W_DEFAULT_AXIS,
                        asr, color_combinations, derive_seed, load_manifest,
                        run_ablation_grid, run_color_ablation,
                        run_dataset_attack, write_manifest)
from .oracle import (Detection, DetectorOracle, GroundTruth, OracleError,
                     OracleSpec, ProtocolError, adversarial_loss, box_iou,
                     external_oracle_connect, mock_always_fooled,
                     mock_coverage_detector, mock_hue_blind_detector,
                     mock_never_fooled)
from .patch_model import (DEFAULT_BOUNDS, DIM_NAMES, N_DIMS, ParamBounds,
                          PatchParams, clamp, decode, encode, sample_uniform)
from .pso import (AttackOutcome, PsoResult, SwarmConfig, minimize,
                  position_update, run_attack, velocity_update)

__version__ = "0.1.0"

__all__ = [
    "AblationGrid", "AttackOutcome", "COLOR_DEFAULT_VALUES", "CellResult",
    "ColorGrid", "DEFAULT_BOUNDS", "DIM_NAMES", "DatasetManifest", "Detection",
    "DetectorOracle", "EotConfig", "GroundTruth", "LossEval", "ManifestEntry",
    "N_DIMS", "OracleError", "OracleSpec", "ParamBounds", "PatchParams",
    "ProtocolError", "PsoResult", "SwarmConfig", "TS_DEFAULT_AXIS",
    "Transform", "UndefinedMetricError", "W_DEFAULT_AXIS", "adversarial_loss",
    "apply_transform", "asr", "box_iou", "clamp", "color_combinations",
    "composite", "coverage_fraction", "decode", "derive_seed", "encode",
    "expected_loss", "external_oracle_connect", "load_image", "load_manifest",
    "minimize", "mock_always_fooled", "mock_coverage_detector",
    "mock_hue_blind_detector", "mock_never_fooled", "patch_mask",
    "position_update", "run_attack", "run_ablation_grid", "run_color_ablation",
    "run_dataset_attack", "sample_uniform", "save_png", "velocity_update",
    "write_manifest",
]
