"""Scoring backends: deterministic mock, toy-detector mirror, and an adapter
wrapping a user-supplied detection callable.

Every scorer exposes score_request(image_path, boxes) -> list[float] and
raises ScorerError for request-level problems (missing image, box outside
the image, adapter failure); the server turns that into an error response
echoing the request id.
"""

from __future__ import annotations

import hashlib
import math
import os
from importlib import import_module

from .matching import IOU_THRESHOLD, match_detections
from .pgm import PgmError, load_pgm

LOGISTIC_A = 6.0
LOGISTIC_B = -2.2


class ScorerError(Exception):
    """This request cannot be scored; the message goes in the response."""


def _require_image(image_path: str) -> None:
    if not os.path.isfile(image_path):
        raise ScorerError(f"image not found: {image_path}")


class MockScorer:
    """Deterministic stand-in detector: each (image_path, box) hashes to a
    stable objectness in [0, 1]. No image decoding, no dependencies; useful
    for exercising the protocol and client plumbing."""

    def score_request(self, image_path: str, boxes) -> list[float]:
        _require_image(image_path)
        out = []
        for x, y, w, h in boxes:
            digest = hashlib.sha256(f"{image_path}|{x},{y},{w},{h}".encode()).hexdigest()
            out.append(int(digest[:8], 16) / 0xFFFFFFFF)
        return out


def _resize_bilinear(pixels, in_w, in_h, out_w, out_h, off_x, off_y, img_w):
    """Bilinear resample of the in_w x in_h window at (off_x, off_y) of a
    flat row-major image, pixel-center convention: output center (i + 0.5)
    maps to window coordinate (i + 0.5) * in/out, reads clamped to the
    window."""
    rx = in_w / out_w
    ry = in_h / out_h
    out = []
    for i in range(out_h):
        sy = (i + 0.5) * ry - 0.5
        y0 = math.floor(sy)
        ty = sy - y0
        ya = min(max(y0, 0), in_h - 1)
        yb = min(max(y0 + 1, 0), in_h - 1)
        row_a = (off_y + ya) * img_w + off_x
        row_b = (off_y + yb) * img_w + off_x
        for j in range(out_w):
            sx = (j + 0.5) * rx - 0.5
            x0 = math.floor(sx)
            tx = sx - x0
            xa = min(max(x0, 0), in_w - 1)
            xb = min(max(x0 + 1, 0), in_w - 1)
            a = pixels[row_a + xa]
            b = pixels[row_a + xb]
            c = pixels[row_b + xa]
            d = pixels[row_b + xb]
            out.append((1.0 - ty) * ((1.0 - tx) * a + tx * b) + ty * ((1.0 - tx) * c + tx * d))
    return out


def _zncc(a, b) -> float:
    """Zero-mean normalized cross-correlation in [-1, 1]; 0 when either side
    has zero variance."""
    n = len(a)
    ma = math.fsum(a) / n
    mb = math.fsum(b) / n
    da = [v - ma for v in a]
    db = [v - mb for v in b]
    denom = math.sqrt(math.fsum(x * x for x in da) * math.fsum(y * y for y in db))
    if denom == 0.0:
        return 0.0
    return math.fsum(x * y for x, y in zip(da, db)) / denom


class ToyMirrorScorer:
    """Mirror of the client's built-in toy detector: crop each box, resample
    it to the template's size, correlate (ZNCC), squash through
    logistic(a * rho + b). Configured with the same template PGM the client
    ships, it reproduces the client's scores."""

    def __init__(self, template_path: str,
                 logistic_a: float = LOGISTIC_A, logistic_b: float = LOGISTIC_B):
        try:
            self.template, self.tw, self.th = load_pgm(template_path)
        except OSError as exc:
            raise ScorerError(f"cannot read template: {exc}") from exc
        except PgmError as exc:
            raise ScorerError(f"bad template PGM: {exc}") from exc
        self.logistic_a = logistic_a
        self.logistic_b = logistic_b

    def score_request(self, image_path: str, boxes) -> list[float]:
        _require_image(image_path)
        try:
            pixels, img_w, img_h = load_pgm(image_path)
        except (OSError, PgmError) as exc:
            raise ScorerError(f"cannot read image: {exc}") from exc
        out = []
        for x, y, w, h in boxes:
            if x < 0 or y < 0 or x + w > img_w or y + h > img_h:
                raise ScorerError(
                    f"box [{x}, {y}, {w}, {h}] extends outside the {img_w}x{img_h} image"
                )
            crop = _resize_bilinear(pixels, w, h, self.tw, self.th, x, y, img_w)
            rho = _zncc(crop, self.template)
            out.append(1.0 / (1.0 + math.exp(-(self.logistic_a * rho + self.logistic_b))))
        return out


class AdapterScorer:
    """Wrap a user-supplied detection callable: detect(image_path) returns an
    iterable of (x, y, w, h, objectness); queried boxes get the best
    IoU-matched objectness. This is the hook for real pretrained detectors:
    the callable owns the model, this class owns the protocol."""

    def __init__(self, detect, iou_threshold: float = IOU_THRESHOLD):
        if not callable(detect):
            raise TypeError(f"detect must be callable, got {detect!r}")
        self.detect = detect
        self.iou_threshold = iou_threshold

    def score_request(self, image_path: str, boxes) -> list[float]:
        _require_image(image_path)
        try:
            detections = list(self.detect(image_path))
        except Exception as exc:
            raise ScorerError(f"adapter failed: {exc}") from exc
        try:
            return match_detections(detections, boxes, self.iou_threshold)
        except (TypeError, ValueError, IndexError) as exc:
            raise ScorerError(f"adapter returned malformed detections: {exc}") from exc


def load_adapter(spec: str):
    """Resolve a 'package.module:callable' spec to the callable."""
    mod_name, sep, attr = spec.partition(":")
    if not sep or not mod_name or not attr:
        raise ValueError(f"adapter spec must look like 'package.module:callable', got {spec!r}")
    module = import_module(mod_name)
    try:
        return getattr(module, attr)
    except AttributeError:
        raise ValueError(f"module {mod_name!r} has no attribute {attr!r}") from None
