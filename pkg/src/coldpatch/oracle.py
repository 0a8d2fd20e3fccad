"""Black-box detector oracles.

The only thing the optimizer may ask a detector is "score these boxes on
this image"; everything else (architecture, gradients, training data) stays
behind the interface. Two oracles ship here: a deterministic toy thermal
detector for desk-scale runs and tests, and a wire client that forwards the
same queries to an external detector process.

The toy detector is template matching: crop the queried box, resize to the
canonical pedestrian template, take zero-mean normalized cross-correlation,
squash through a logistic. The template's silhouette contrast is deliberately
muted and most of its variance lives in a warm chest core (thermal hot
spot), so the score keys on the torso: clean pedestrians still correlate
almost perfectly (correlation is contrast-invariant), while anything cold
placed over the chest collapses the score, the way a real detector's
confidence collapses when its key features disappear.
"""

from __future__ import annotations

import io
import json
import os
import socket
import subprocess
import tempfile
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .imaging import BBox, GrayImage, encode_pgm, parse_pgm, resize_bilinear
from .scene import body_values, silhouette_mask

TEMPLATE_W = 32
TEMPLATE_H = 64
LOGISTIC_A = 6.0
LOGISTIC_B = -2.2

# Template construction constants. The silhouette is rendered at a reference
# height and resampled into the 32x64 box exactly the way score() resamples
# a queried crop. The chest core is an elliptic warm bump centered where the
# patch anchor sits, entirely inside the patch footprint for default sizes.
_TEMPLATE_REF_HEIGHT = 320
_TEMPLATE_BG = 0.68
_TEMPLATE_BODY = 0.80
_TEMPLATE_GRADIENT = 0.06
CORE_CX_FRAC = 0.5  # of template width
CORE_CY_FRAC = 0.40  # of template height, matches the patch anchor
CORE_RX_FRAC = 0.27  # of template width
CORE_RY_FRAC = 0.105  # of template height
CORE_BOOST = 0.50

_TEMPLATE_ASSET = "person_template_v1.pgm"


@dataclass(frozen=True)
class Detection:
    """One detector hit: location, objectness confidence, class label."""

    box: BBox
    objectness: float
    class_id: int = 0

    def __post_init__(self):
        if not (0.0 <= self.objectness <= 1.0):
            raise ValueError(f"objectness must be in [0, 1], got {self.objectness}")


def build_template() -> GrayImage:
    """Procedurally build the canonical warm-pedestrian template.

    Fully closed-form (no randomness): silhouette on flat background,
    body gradient, warm chest core, quantized to the 8-bit lattice so the
    stored asset reproduces this function byte-for-byte.
    """
    mask = silhouette_mask(_TEMPLATE_REF_HEIGHT)
    values = body_values(mask, _TEMPLATE_BODY, _TEMPLATE_GRADIENT)
    region = np.full(mask.shape, _TEMPLATE_BG)
    region[mask] = np.broadcast_to(values[:, None], mask.shape)[mask]
    tmpl = resize_bilinear(region, TEMPLATE_W, TEMPLATE_H)
    xs = (np.arange(TEMPLATE_W) + 0.5)[None, :]
    ys = (np.arange(TEMPLATE_H) + 0.5)[:, None]
    q = ((xs - CORE_CX_FRAC * TEMPLATE_W) / (CORE_RX_FRAC * TEMPLATE_W)) ** 2 + (
        (ys - CORE_CY_FRAC * TEMPLATE_H) / (CORE_RY_FRAC * TEMPLATE_H)
    ) ** 2
    tmpl = tmpl + CORE_BOOST * np.clip(1.0 - q, 0.0, 1.0)
    tmpl = np.floor(np.clip(tmpl, 0.0, 1.0) * 255.0 + 0.5) / 255.0
    return GrayImage(tmpl)


_template_cache: GrayImage | None = None


def load_default_template() -> GrayImage:
    """The template asset shipped with the package (identical to
    build_template(), stored so scores stay frozen across code changes)."""
    global _template_cache
    if _template_cache is None:
        data = resources.files("coldpatch").joinpath("assets", _TEMPLATE_ASSET).read_bytes()
        _template_cache = parse_pgm(data)
    return _template_cache


@dataclass(frozen=True)
class ToyDetectorConfig:
    template: GrayImage
    logistic_a: float = LOGISTIC_A
    logistic_b: float = LOGISTIC_B

    def __post_init__(self):
        if (self.template.width, self.template.height) != (TEMPLATE_W, TEMPLATE_H):
            raise ValueError(
                f"template must be {TEMPLATE_W}x{TEMPLATE_H}, "
                f"got {self.template.width}x{self.template.height}"
            )

    @staticmethod
    def default() -> "ToyDetectorConfig":
        return ToyDetectorConfig(template=load_default_template())


def zncc(a: np.ndarray, b: np.ndarray) -> float:
    """Zero-mean normalized cross-correlation in [-1, 1]; defined as 0 when
    either side has zero variance."""
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt((da * da).sum() * (db * db).sum())
    if denom == 0.0:
        return 0.0
    return float((da * db).sum() / denom)


def _logistic(x: float) -> float:
    return 1.0 / (1.0 + np.exp(-x))


def toy_score(cfg: ToyDetectorConfig, image: GrayImage, box: BBox) -> float:
    """Objectness of one box under the toy detector."""
    box.require_inside(image, "query box")
    region = image.pixels[box.y : box.y + box.h, box.x : box.x + box.w]
    crop = resize_bilinear(region, TEMPLATE_W, TEMPLATE_H)
    rho = zncc(crop, cfg.template.pixels)
    return float(_logistic(cfg.logistic_a * rho + cfg.logistic_b))


class ToyOracle:
    """In-process deterministic oracle. Pure function of (image, boxes)."""

    def __init__(self, cfg: ToyDetectorConfig | None = None):
        self.cfg = cfg or ToyDetectorConfig.default()

    def score(self, image: GrayImage, boxes: list[BBox]) -> list[float]:
        return [toy_score(self.cfg, image, box) for box in boxes]

    def close(self) -> None:
        pass


class BridgeError(Exception):
    """Base class for external-detector failures."""

    retriable = False


class BridgeTransportError(BridgeError):
    """Connection-level failure (EOF, broken pipe, socket error).
    Safe to retry on a fresh connection."""

    retriable = True


class BridgeProtocolError(BridgeError):
    """Peer answered, but not in protocol: bad JSON, wrong id, wrong arity,
    or out-of-range scores."""


class BridgeRemoteError(BridgeError):
    """Peer reported a detector-side error for this request."""


class BridgeOracle:
    """Oracle over the newline-delimited JSON wire protocol.

    Request:  {"id": int, "image_path": str, "boxes": [[x,y,w,h], ...]}
    Response: {"id": int, "objectness": [float, ...]}
              or {"id": int, "error": str}

    One request in flight per connection; the image travels by temp-file
    path, so peer and client must share a filesystem.
    """

    def __init__(self, reader: io.BufferedIOBase, writer: io.BufferedIOBase,
                 process: subprocess.Popen | None = None, temp_dir: str | None = None):
        self._reader = reader
        self._writer = writer
        self._process = process
        self._temp_dir = temp_dir
        self._next_id = 1
        self._sock = None

    @classmethod
    def spawn(cls, cmd: list[str], temp_dir: str | None = None) -> "BridgeOracle":
        """Start the detector as a child process speaking on stdio."""
        proc = subprocess.Popen(cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        return cls(proc.stdout, proc.stdin, process=proc, temp_dir=temp_dir)

    @classmethod
    def connect(cls, host: str, port: int, temp_dir: str | None = None) -> "BridgeOracle":
        """Connect to a detector serving the protocol on a TCP port."""
        sock = socket.create_connection((host, port))
        oracle = cls(sock.makefile("rb"), sock.makefile("wb"), temp_dir=temp_dir)
        oracle._sock = sock
        return oracle

    def _round_trip(self, request: dict) -> dict:
        line = json.dumps(request, separators=(",", ":")) + "\n"
        try:
            self._writer.write(line.encode("utf-8"))
            self._writer.flush()
            raw = self._reader.readline()
        except (OSError, ValueError) as exc:
            raise BridgeTransportError(f"bridge connection failed: {exc}") from exc
        if not raw:
            raise BridgeTransportError("bridge closed the connection (EOF)")
        try:
            resp = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BridgeProtocolError(f"bridge sent malformed JSON: {raw[:200]!r}") from exc
        if not isinstance(resp, dict):
            raise BridgeProtocolError(f"bridge response is not an object: {resp!r}")
        return resp

    def score(self, image: GrayImage, boxes: list[BBox]) -> list[float]:
        if not boxes:
            return []
        for box in boxes:
            box.require_inside(image, "query box")
        rid = self._next_id
        self._next_id += 1
        fd, path = tempfile.mkstemp(suffix=".pgm", dir=self._temp_dir)
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(encode_pgm(image))
            request = {"id": rid, "image_path": path, "boxes": [b.as_list() for b in boxes]}
            resp = self._round_trip(request)
        finally:
            try:
                os.unlink(path)
            except OSError:
                pass
        if resp.get("error") is not None:
            raise BridgeRemoteError(f"request {rid}: {resp['error']}")
        if resp.get("id") != rid:
            raise BridgeProtocolError(f"response id {resp.get('id')!r} does not match request {rid}")
        scores = resp.get("objectness")
        if not isinstance(scores, list) or len(scores) != len(boxes):
            raise BridgeProtocolError(
                f"expected {len(boxes)} objectness values, got {scores!r}"
            )
        out = []
        for s in scores:
            if not isinstance(s, (int, float)) or not (0.0 <= float(s) <= 1.0):
                raise BridgeProtocolError(f"objectness {s!r} outside [0, 1]")
            out.append(float(s))
        return out

    def close(self) -> None:
        for stream in (self._writer, self._reader):
            try:
                stream.close()
            except OSError:
                pass
        if self._sock is not None:
            try:
                self._sock.close()
            except OSError:
                pass
        if self._process is not None:
            self._process.terminate()
            try:
                self._process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._process.kill()
                self._process.wait()

    def __enter__(self) -> "BridgeOracle":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def make_oracle(kind: str, **kwargs):
    """Factory used by the CLI: kind is 'toy', 'bridge-cmd', or 'bridge-tcp'."""
    if kind == "toy":
        return ToyOracle()
    if kind == "bridge-cmd":
        return BridgeOracle.spawn(kwargs["cmd"], temp_dir=kwargs.get("temp_dir"))
    if kind == "bridge-tcp":
        return BridgeOracle.connect(kwargs["host"], kwargs["port"], temp_dir=kwargs.get("temp_dir"))
    raise ValueError(f"unknown oracle kind {kind!r}")
