"""Grayscale images, binary PGM I/O, and bilinear crop-resize.

Intensities live in [0, 1] as float64 everywhere inside the pipeline;
quantization to 8 bits happens only at file boundaries. PGM support is
deliberately narrow: binary P5 with maxval 255, which is all the synthetic
scene generator and the detector bridge ever exchange.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_WHITESPACE = frozenset(b" \t\n\r\x0b\x0c")


class PgmError(ValueError):
    """Malformed PGM data: bad magic, unsupported maxval, or truncation."""


class GrayImage:
    """Immutable single-channel image. ``pixels`` is a read-only (h, w)
    float64 array with every value in [0, 1]."""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.array(pixels, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-d pixel array, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("pixel intensities must be finite")
        lo, hi = float(arr.min()), float(arr.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"pixel intensities outside [0, 1]: min {lo}, max {hi}")
        arr.flags.writeable = False
        object.__setattr__(self, "pixels", arr)

    def __setattr__(self, name, value):
        raise AttributeError("GrayImage is immutable")

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other) -> bool:
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)

    def __repr__(self) -> str:
        return f"GrayImage({self.width}x{self.height})"


@dataclass(frozen=True)
class BBox:
    """Integer pixel-aligned box. (x, y) is the top-left corner."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)):
                raise ValueError(f"BBox.{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"BBox needs positive extent, got w={self.w}, h={self.h}")

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    def inside(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.x + self.w <= width and self.y + self.h <= height

    def require_inside(self, image: GrayImage, what: str = "box") -> None:
        if not self.inside(image.width, image.height):
            raise ValueError(
                f"{what} {self} extends outside the {image.width}x{image.height} image"
            )

    def as_list(self) -> list[int]:
        return [self.x, self.y, self.w, self.h]


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos]
        if c in _WHITESPACE:
            pos += 1
        elif c == 0x23:  # '#' comment runs to end of line
            while pos < n and data[pos] not in (0x0A, 0x0D):
                pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos] not in _WHITESPACE and data[pos] != 0x23:
        pos += 1
    if start == pos:
        raise PgmError("truncated header")
    return data[start:pos], pos


def parse_pgm(data: bytes) -> GrayImage:
    """Decode a binary (P5) PGM byte string with maxval 255."""
    magic, pos = _next_token(data, 0)
    if magic != b"P5":
        raise PgmError(f"not a binary PGM: bad magic {magic!r}")
    fields = []
    for name in ("width", "height", "maxval"):
        tok, pos = _next_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise PgmError(f"non-numeric {name} field {tok!r}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise PgmError(f"bad dimensions {width}x{height}")
    if maxval != 255:
        raise PgmError(f"unsupported maxval {maxval} (only 255 is accepted)")
    # exactly one whitespace byte separates the header from the payload
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise PgmError("missing whitespace after maxval")
    pos += 1
    need = width * height
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise PgmError(f"truncated pixel data: expected {need} bytes, found {len(payload)}")
    arr = np.frombuffer(payload, dtype=np.uint8).reshape(height, width)
    return GrayImage(arr / 255.0)


def load_pgm(path) -> GrayImage:
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def encode_pgm(image: GrayImage) -> bytes:
    """Encode to binary PGM. Quantization is round-half-up on v*255, so a
    round trip perturbs any intensity by at most 1/510."""
    data = np.floor(image.pixels * 255.0 + 0.5).astype(np.uint8)
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + data.tobytes()


def save_pgm(path, image: GrayImage) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(image))


def resize_bilinear(region: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Resample a 2-d array to (out_h, out_w) with the pixel-center
    convention: output center (i + 0.5) maps to input coordinate
    (i + 0.5) * in/out. Reads are clamped to the region, so the output never
    leaves [region.min(), region.max()]."""
    in_h, in_w = region.shape
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    tx = xs - x0
    ty = ys - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    x1 = np.clip(x0 + 1, 0, in_w - 1)
    y1 = np.clip(y0 + 1, 0, in_h - 1)
    x0 = np.clip(x0, 0, in_w - 1)
    y0 = np.clip(y0, 0, in_h - 1)
    a = region[np.ix_(y0, x0)]
    b = region[np.ix_(y0, x1)]
    c = region[np.ix_(y1, x0)]
    d = region[np.ix_(y1, x1)]
    tx = tx[None, :]
    ty = ty[:, None]
    return (1.0 - ty) * ((1.0 - tx) * a + tx * b) + ty * ((1.0 - tx) * c + tx * d)


def sample_bilinear_clamped(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear point samples at continuous array-index coordinates with
    edge clamping. ``xs``/``ys`` are index-space (pixel center == integer)."""
    h, w = arr.shape
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    tx = xs - x0
    ty = ys - y0
    x0 = np.clip(x0.astype(np.int64), 0, w - 1)
    y0 = np.clip(y0.astype(np.int64), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    return (1.0 - ty) * ((1.0 - tx) * arr[y0, x0] + tx * arr[y0, x1]) + ty * (
        (1.0 - tx) * arr[y1, x0] + tx * arr[y1, x1]
    )


def sample_bilinear_zero(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear point samples where reads outside the array contribute 0."""
    h, w = arr.shape
    x0f = np.floor(xs)
    y0f = np.floor(ys)
    tx = xs - x0f
    ty = ys - y0f
    x0 = x0f.astype(np.int64)
    y0 = y0f.astype(np.int64)
    out = np.zeros(np.broadcast(xs, ys).shape, dtype=np.float64)
    for xi, yi, wgt in (
        (x0, y0, (1.0 - tx) * (1.0 - ty)),
        (x0 + 1, y0, tx * (1.0 - ty)),
        (x0, y0 + 1, (1.0 - tx) * ty),
        (x0 + 1, y0 + 1, tx * ty),
    ):
        valid = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
        vals = arr[np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
        out += wgt * np.where(valid, vals, 0.0)
    return out


def crop_resize(image: GrayImage, box: BBox, out_w: int, out_h: int) -> GrayImage:
    """Crop ``box`` and resample it to (out_w, out_h) bilinearly.

    Only pixels inside the box are ever read, so the output stays within the
    intensity range of the source region.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be positive, got {out_w}x{out_h}")
    box.require_inside(image, "crop box")
    region = image.pixels[box.y : box.y + box.h, box.x : box.x + box.w]
    return GrayImage(resize_bilinear(region, out_w, out_h))
