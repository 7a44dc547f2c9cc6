"""Black-box detector oracles.

A detector is observed only through its final outputs: for each detection a
bounding box, an objectness confidence in [0, 1], and a class id. No logits,
no gradients. The adversarial loss of an image is the highest confidence
among detections that still match the ground truth; zero confidence (no
matching detection) means the detector was fooled.

Besides the abstract interface this module ships an in-process mock detector
family for desk-scale testing, and a client for external detector servers
speaking newline-delimited JSON over a child process's stdio or a TCP socket:

    request:  {"id": u64, "image_png_b64": string}\\n
    response: {"id": u64, "detections": [{"box": [x0, y0, x1, y1],
               "objectness": f, "class_id": i}]}\\n
    error:    {"id": u64, "error": string}\\n

Ids increase monotonically per connection and one request is in flight at a
time.
"""

from __future__ import annotations

import base64
import json
import queue
import socket
import subprocess
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .compositor import png_bytes, require_rgb8

Box = Tuple[float, float, float, float]


class OracleError(Exception):
    """Oracle call failed. ``queries`` counts calls completed before the failure."""

    def __init__(self, message: str, queries: int = 0):
        super().__init__(message)
        self.queries = queries


class ProtocolError(OracleError):
    """Malformed frame from an external oracle; carries the raw payload."""

    def __init__(self, message: str, raw: Optional[str] = None):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class Detection:
    box: Box
    objectness: float
    class_id: int

    def __post_init__(self):
        x0, y0, x1, y1 = self.box
        if not (x0 < x1 and y0 < y1):
            raise ValueError(f"degenerate box {self.box}")
        if not 0.0 <= self.objectness <= 1.0:
            raise ValueError(f"objectness outside [0,1]: {self.objectness}")


@dataclass(frozen=True)
class GroundTruth:
    class_id: int
    box: Optional[Box] = None


class DetectorOracle(ABC):
    """Interface every oracle implements; ``detect`` is a pure observation."""

    @abstractmethod
    def detect(self, image: np.ndarray) -> List[Detection]:
        ...

    @abstractmethod
    def label_space(self) -> int:
        """Number of classes the detector can output."""
        ...

    def close(self) -> None:
        pass


def box_iou(a: Box, b: Box) -> float:
    ix0, iy0 = max(a[0], b[0]), max(a[1], b[1])
    ix1, iy1 = min(a[2], b[2]), min(a[3], b[3])
    iw, ih = max(0.0, ix1 - ix0), max(0.0, iy1 - iy0)
    inter = iw * ih
    if inter == 0.0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def adversarial_loss(dets: Sequence[Detection], gt: GroundTruth) -> Tuple[float, bool]:
    """(loss, fooled) for a detection list against the ground truth.

    A detection matches when its class equals the ground-truth class and,
    if a ground-truth box is given, overlaps it with IoU >= 0.5. The loss is
    the maximum objectness over matching detections; with no match the
    detector lost the object and the attack succeeded.
    """
    matching = [d.objectness for d in dets
                if d.class_id == gt.class_id
                and (gt.box is None or box_iou(d.box, gt.box) >= 0.5)]
    if not matching:
        return 0.0, True
    return max(matching), False


# ---------------------------------------------------------------------------
# Mock detector family
# ---------------------------------------------------------------------------

def _effective_box(box: Optional[Box], image: np.ndarray) -> Box:
    if box is not None:
        return box
    h, w = image.shape[:2]
    return (w / 4.0, h / 4.0, 3.0 * w / 4.0, 3.0 * h / 4.0)


def _box_slices(box: Box, image: np.ndarray):
    h, w = image.shape[:2]
    x0 = int(np.clip(np.floor(box[0]), 0, w))
    y0 = int(np.clip(np.floor(box[1]), 0, h))
    x1 = int(np.clip(np.ceil(box[2]), 0, w))
    y1 = int(np.clip(np.ceil(box[3]), 0, h))
    return slice(y0, y1), slice(x0, x1)


@dataclass
class CoverageMockOracle(DetectorOracle):
    """Synthetic detector whose confidence decays with inferred patch occlusion.

    It assumes the clean scene is a constant background color and reads the
    effective blend weight of each pixel back from its deviation:
    a pixel observed at v against background b must have been blended with
    weight at least max_ch |v - b| / max(b, 255 - b). Occlusion is the mean
    of that estimate over the target box; objectness = max(0, 1 - occlusion).
    The estimate is exact when the patch color saturates a channel, and it is
    monotone in both patch width and opacity wherever the band overlaps the
    box. Below ``threshold`` the mock reports nothing at all.
    """

    threshold: float
    background: Tuple[int, int, int] = (0, 0, 0)
    box: Optional[Box] = None
    class_id: int = 0
    n_classes: int = 1

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0,1): {self.threshold}")

    def occlusion(self, image: np.ndarray) -> float:
        image = require_rgb8(image)
        ys, xs = _box_slices(_effective_box(self.box, image), image)
        patch = image[ys, xs].astype(float)
        bg = np.array(self.background, dtype=float)
        denom = np.maximum(bg, 255.0 - bg)
        alpha_hat = np.max(np.abs(patch - bg) / denom, axis=2)
        return float(np.mean(alpha_hat))

    def objectness(self, image: np.ndarray) -> float:
        return max(0.0, 1.0 - self.occlusion(image))

    def detect(self, image: np.ndarray) -> List[Detection]:
        obj = self.objectness(image)
        if obj < self.threshold:
            return []
        return [Detection(box=_effective_box(self.box, image), objectness=obj,
                          class_id=self.class_id)]

    def label_space(self) -> int:
        return self.n_classes


@dataclass
class HueBlindMockOracle(DetectorOracle):
    """Occlusion counts deviating pixels only, so patch color plays no role.

    A box pixel is occluded when any channel deviates from the constant
    background by at least ``min_step`` (one 8-bit step by default, so any
    visible patch trips it regardless of hue). Objectness = 1 - occluded
    fraction of the box.
    """

    threshold: float
    background: Tuple[int, int, int] = (100, 100, 100)
    box: Optional[Box] = None
    class_id: int = 0
    n_classes: int = 1
    min_step: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must be in (0,1): {self.threshold}")

    def objectness(self, image: np.ndarray) -> float:
        image = require_rgb8(image)
        ys, xs = _box_slices(_effective_box(self.box, image), image)
        patch = image[ys, xs].astype(float)
        bg = np.array(self.background, dtype=float)
        occluded = np.any(np.abs(patch - bg) >= self.min_step, axis=2)
        return max(0.0, 1.0 - float(np.mean(occluded)))

    def detect(self, image: np.ndarray) -> List[Detection]:
        obj = self.objectness(image)
        if obj < self.threshold:
            return []
        return [Detection(box=_effective_box(self.box, image), objectness=obj,
                          class_id=self.class_id)]

    def label_space(self) -> int:
        return self.n_classes


@dataclass
class FragileMockOracle(DetectorOracle):
    """Detects perfectly on pristine frames, fooled by any visible perturbation.

    Useful as the "always fooled" degenerate oracle: the clean-image pass
    still finds the object (so images count as true positives), while every
    attacked variant deviates somewhere in the frame and kills the detection.
    """

    background: Tuple[int, int, int] = (0, 0, 0)
    box: Optional[Box] = None
    class_id: int = 0
    n_classes: int = 1

    def detect(self, image: np.ndarray) -> List[Detection]:
        image = require_rgb8(image)
        bg = np.array(self.background, dtype=np.uint8)
        if np.array_equal(image, np.broadcast_to(bg, image.shape)):
            return [Detection(box=_effective_box(self.box, image), objectness=1.0,
                              class_id=self.class_id)]
        return []

    def label_space(self) -> int:
        return self.n_classes


@dataclass
class ConstantMockOracle(DetectorOracle):
    """Returns the same detection list for every input; never fooled.

    The degenerate "constant loss" oracle: with default arguments the
    adversarial loss is 1.0 regardless of the image.
    """

    objectness_value: float = 1.0
    class_id: int = 0
    box: Box = (8.0, 8.0, 24.0, 24.0)
    n_classes: int = 1

    def detect(self, image: np.ndarray) -> List[Detection]:
        require_rgb8(image)
        return [Detection(box=self.box, objectness=self.objectness_value,
                          class_id=self.class_id)]

    def label_space(self) -> int:
        return self.n_classes


def mock_coverage_detector(threshold: float, **kwargs) -> CoverageMockOracle:
    return CoverageMockOracle(threshold=threshold, **kwargs)


def mock_hue_blind_detector(threshold: float, **kwargs) -> HueBlindMockOracle:
    return HueBlindMockOracle(threshold=threshold, **kwargs)


def mock_always_fooled(**kwargs) -> FragileMockOracle:
    return FragileMockOracle(**kwargs)


def mock_never_fooled(**kwargs) -> ConstantMockOracle:
    return ConstantMockOracle(**kwargs)


# ---------------------------------------------------------------------------
# External oracle client
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleSpec:
    """Address of an external detector: a child-process command or a TCP endpoint."""

    command: Optional[Tuple[str, ...]] = None
    host: Optional[str] = None
    port: Optional[int] = None
    timeout: float = 30.0
    n_classes: Optional[int] = None

    def __post_init__(self):
        has_cmd = self.command is not None
        has_tcp = self.host is not None and self.port is not None
        if has_cmd == has_tcp:
            raise ValueError("specify exactly one of: command, host+port")


class ExternalOracle(DetectorOracle):
    """Serializes detect() calls over the newline-delimited JSON protocol.

    One request is in flight per connection; responses are matched to
    requests by id. Any protocol violation or timeout raises and marks the
    connection dead.
    """

    def __init__(self, spec: OracleSpec):
        self.spec = spec
        self._lock = threading.Lock()
        self._next_id = 1
        self._dead: Optional[str] = None
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self._proc: Optional[subprocess.Popen] = None
        self._sock: Optional[socket.socket] = None
        try:
            if spec.command is not None:
                self._proc = subprocess.Popen(
                    list(spec.command), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                    text=True, bufsize=1)
                self._write = self._write_proc
                reader_src = self._proc.stdout
            else:
                self._sock = socket.create_connection((spec.host, spec.port),
                                                      timeout=spec.timeout)
                self._sock_file = self._sock.makefile("rw", encoding="utf-8", newline="\n")
                self._write = self._write_sock
                reader_src = self._sock_file
        except OSError as e:
            raise OracleError(f"cannot reach oracle: {e}") from e
        self._reader = threading.Thread(target=self._read_loop, args=(reader_src,),
                                        daemon=True)
        self._reader.start()

    def _write_proc(self, line: str) -> None:
        try:
            self._proc.stdin.write(line)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise OracleError(f"oracle process closed stdin: {e}") from e

    def _write_sock(self, line: str) -> None:
        try:
            self._sock_file.write(line)
            self._sock_file.flush()
        except OSError as e:
            raise OracleError(f"oracle connection lost: {e}") from e

    def _read_loop(self, src) -> None:
        try:
            for line in src:
                self._lines.put(line)
        except (OSError, ValueError):
            pass
        self._lines.put(None)  # EOF sentinel

    def detect(self, image: np.ndarray) -> List[Detection]:
        with self._lock:
            if self._dead:
                raise OracleError(f"oracle connection is dead: {self._dead}")
            req_id = self._next_id
            self._next_id += 1
            payload = {"id": req_id,
                       "image_png_b64": base64.b64encode(png_bytes(image)).decode("ascii")}
            try:
                self._write(json.dumps(payload) + "\n")
                reply = self._read_reply(req_id)
            except OracleError as e:
                self._dead = str(e)
                raise
            return reply

    def _read_reply(self, req_id: int) -> List[Detection]:
        try:
            line = self._lines.get(timeout=self.spec.timeout)
        except queue.Empty:
            raise OracleError(f"oracle timed out after {self.spec.timeout}s")
        if line is None:
            raise OracleError("oracle closed the connection")
        return parse_response_frame(line, req_id)

    def label_space(self) -> int:
        if self.spec.n_classes is None:
            raise OracleError("label space not configured for this external oracle")
        return self.spec.n_classes

    def close(self) -> None:
        if self._proc is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass


def parse_response_frame(line: str, expect_id: int) -> List[Detection]:
    """Validate one response line and convert it to detections."""
    try:
        frame = json.loads(line)
    except json.JSONDecodeError as e:
        raise ProtocolError(f"invalid JSON from oracle: {e}", raw=line)
    if not isinstance(frame, dict):
        raise ProtocolError("response frame is not an object", raw=line)
    if "id" not in frame:
        raise ProtocolError("response frame missing field 'id'", raw=line)
    if frame["id"] != expect_id:
        raise ProtocolError(f"response id {frame['id']!r} does not match request id {expect_id}",
                            raw=line)
    if "error" in frame:
        raise OracleError(f"oracle reported error: {frame['error']}")
    if "detections" not in frame:
        raise ProtocolError("response frame missing field 'detections'", raw=line)
    dets = frame["detections"]
    if not isinstance(dets, list):
        raise ProtocolError("'detections' is not a list", raw=line)
    out = []
    for d in dets:
        try:
            out.append(Detection(box=tuple(float(v) for v in d["box"]),
                                 objectness=float(d["objectness"]),
                                 class_id=int(d["class_id"])))
        except (KeyError, TypeError, ValueError) as e:
            raise ProtocolError(f"bad detection entry: {e}", raw=line)
    return out


def external_oracle_connect(spec: OracleSpec) -> ExternalOracle:
    return ExternalOracle(spec)
