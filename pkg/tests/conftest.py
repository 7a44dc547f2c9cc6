import json
import sys
from pathlib import Path

import numpy as np
import pytest

from adcp import save_png

FIXTURE_DIR = Path(__file__).parent / "fixtures"
ECHO_SERVER = FIXTURE_DIR / "echo_server.py"


def random_image(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    return rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)


def echo_server_cmd(*extra: str):
    return (sys.executable, str(ECHO_SERVER), *extra)


def build_constant_manifest(dirpath: Path, n: int, size: int = 32,
                            value: int = 0, name: str = "synthetic",
                            class_id: int = 0) -> Path:
    """Write n constant-color images plus a manifest pointing at them."""
    dirpath.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n):
        img = np.full((size, size, 3), value, dtype=np.uint8)
        fname = f"img_{i:03d}.png"
        save_png(img, dirpath / fname)
        entries.append({"image": fname, "class_id": class_id, "box": None})
    path = dirpath / "manifest.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"name": name, "entries": entries}, f, indent=2)
    return path


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)


@pytest.fixture
def black_image() -> np.ndarray:
    return np.zeros((32, 32, 3), dtype=np.uint8)
