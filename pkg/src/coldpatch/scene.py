"""Synthetic thermal pedestrian scenes and dataset I/O.

Scenes are a flat warm-ish background with Gaussian sensor noise plus one
noise-free pedestrian silhouette (head disc, rounded-rectangle torso, two
splayed legs) whose body intensity falls linearly from head to feet. The
silhouette is rasterized on the integer pixel lattice from closed-form
shapes, so a seed reproduces scenes bit-identically across platforms.

Dataset layout on disk: ``images/*.pgm`` plus ``annotations.json`` holding
{"samples": [{"id", "image", "boxes": [[x, y, w, h], ...]}, ...]}.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imaging import BBox, GrayImage, load_pgm, save_pgm
from .streams import as_generator

log = logging.getLogger(__name__)

# Silhouette proportions, all relative to total body height. The legs splay
# outward toward the feet, so the tight bounding box is about 0.41 h wide.
HEAD_R = 0.085
HEAD_CY = 0.085
NECK_Y = 0.16
HIP_Y = 0.575
TORSO_HALFW = 0.13
TORSO_CORNER = 0.05
LEG_HALFW = 0.045
LEG_SPREAD_HIP = 0.055
LEG_SPREAD_FOOT = 0.16

# Boxes shorter than this are not usable targets and are filtered on load.
MIN_PERSON_HEIGHT = 120


@dataclass(frozen=True)
class SceneConfig:
    image_w: int = 640
    image_h: int = 512
    bg_level: float = 0.25
    bg_noise: float = 0.02
    body_level: float = 0.8
    body_gradient: float = 0.15
    height_range: tuple[int, int] = (140, 360)
    count: int = 30

    def __post_init__(self):
        lo, hi = self.height_range
        object.__setattr__(self, "height_range", (int(lo), int(hi)))
        if not (0.0 <= self.bg_level < self.body_level <= 1.0):
            raise ValueError(
                f"need 0 <= bg_level < body_level <= 1, got {self.bg_level}, {self.body_level}"
            )
        if lo < MIN_PERSON_HEIGHT:
            raise ValueError(f"height_range low {lo} below minimum {MIN_PERSON_HEIGHT}")
        if lo > hi:
            raise ValueError(f"height_range low {lo} exceeds high {hi}")
        if self.bg_noise < 0:
            raise ValueError(f"bg_noise must be >= 0, got {self.bg_noise}")
        if self.count < 0:
            raise ValueError(f"count must be >= 0, got {self.count}")
        if self.image_w < 16 or self.image_h < 16:
            raise ValueError(f"image too small: {self.image_w}x{self.image_h}")


@dataclass(frozen=True)
class SceneSample:
    id: str
    image: GrayImage
    boxes: tuple[BBox, ...]

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if not self.boxes:
            raise ValueError(f"scene {self.id!r} has no target boxes")
        for b in self.boxes:
            b.require_inside(self.image, f"scene {self.id!r} box")


def silhouette_mask(height: int) -> np.ndarray:
    """Boolean pedestrian mask of exactly ``height`` rows, tight-cropped in
    both axes. Pixel centers are tested against the closed-form shapes."""
    if height < 16:
        raise ValueError(f"silhouette height {height} too small")
    w = int(np.ceil(0.46 * height)) | 1  # odd, so the axis is a pixel column
    cx = w / 2.0
    yy = (np.arange(height) + 0.5)[:, None] / height  # vertical position in [0,1]
    xx = ((np.arange(w) + 0.5) - cx)[None, :] / height  # signed offset in height units

    head = xx**2 + (yy - HEAD_CY) ** 2 <= HEAD_R**2

    # rounded-rectangle torso: full half-width in the middle band, quarter
    # circles of radius TORSO_CORNER at the four corners
    dy_top = (NECK_Y + TORSO_CORNER) - yy
    dy_bot = yy - (HIP_Y - TORSO_CORNER)
    dy = np.maximum(np.maximum(dy_top, dy_bot), 0.0)
    inset = TORSO_CORNER - np.sqrt(np.maximum(TORSO_CORNER**2 - dy**2, 0.0))
    torso = (
        (yy >= NECK_Y)
        & (yy <= HIP_Y)
        & (dy <= TORSO_CORNER)
        & (np.abs(xx) <= TORSO_HALFW - inset)
    )

    s = np.clip((yy - HIP_Y) / (1.0 - HIP_Y), 0.0, 1.0)
    spread = LEG_SPREAD_HIP + (LEG_SPREAD_FOOT - LEG_SPREAD_HIP) * s
    legs = (yy >= HIP_Y) & (np.minimum(np.abs(xx - spread), np.abs(xx + spread)) <= LEG_HALFW)

    mask = head | torso | legs
    cols = np.nonzero(mask.any(axis=0))[0]
    rows = np.nonzero(mask.any(axis=1))[0]
    mask = mask[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    if mask.shape[0] != height:
        # shapes are built tangent to v=0 and v=1, so the crop keeps every row
        raise AssertionError(f"silhouette rows {mask.shape[0]} != height {height}")
    return mask


def body_values(mask: np.ndarray, body_level: float, body_gradient: float) -> np.ndarray:
    """Per-row body intensity: linear head-to-feet drop of ``body_gradient``
    centered on ``body_level``."""
    h = mask.shape[0]
    vv = (np.arange(h) + 0.5) / h
    return body_level + body_gradient * (0.5 - vv)


def quantize_levels(pixels: np.ndarray) -> np.ndarray:
    """Snap to the 8-bit intensity lattice, the precision everything leaves
    or enters a PGM file with. Generated scenes are quantized up front so
    in-memory evaluation matches byte-for-byte what a dataset round-trip or
    an external detector process would see."""
    return np.floor(np.clip(pixels, 0.0, 1.0) * 255.0 + 0.5) / 255.0


def generate_scene(rng, cfg: SceneConfig, scene_id: str = "scene") -> SceneSample:
    """One scene: noisy background, one pedestrian at a uniform random
    position and height, tight target box. Draw order (height, x, y, noise
    field) is fixed for determinism."""
    gen = as_generator(rng)
    lo, hi = cfg.height_range
    height = int(gen.integers(lo, hi + 1))
    mask = silhouette_mask(height)
    mh, mw = mask.shape
    if mw > cfg.image_w or mh > cfg.image_h:
        raise ValueError(
            f"silhouette {mw}x{mh} cannot fit a {cfg.image_w}x{cfg.image_h} image"
        )
    x0 = int(gen.integers(0, cfg.image_w - mw + 1))
    y0 = int(gen.integers(0, cfg.image_h - mh + 1))
    pixels = np.full((cfg.image_h, cfg.image_w), cfg.bg_level)
    if cfg.bg_noise > 0:
        pixels += gen.normal(0.0, cfg.bg_noise, size=pixels.shape)
    values = body_values(mask, cfg.body_level, cfg.body_gradient)
    region = pixels[y0 : y0 + mh, x0 : x0 + mw]
    region[mask] = np.broadcast_to(values[:, None], mask.shape)[mask]
    image = GrayImage(quantize_levels(pixels))
    return SceneSample(id=scene_id, image=image, boxes=(BBox(x0, y0, mw, mh),))


def generate_dataset(rng, cfg: SceneConfig, out_dir) -> list[SceneSample]:
    """Write cfg.count scenes as PGM files plus the annotations manifest.
    Returns the samples exactly as a reload would produce them."""
    gen = as_generator(rng)
    root = Path(out_dir)
    images = root / "images"
    images.mkdir(parents=True, exist_ok=True)
    samples = []
    manifest = []
    for i in range(cfg.count):
        sid = f"scene_{i:04d}"
        sample = generate_scene(gen, cfg, sid)
        save_pgm(images / f"{sid}.pgm", sample.image)
        samples.append(sample)
        manifest.append(
            {"id": sid, "image": f"images/{sid}.pgm", "boxes": [b.as_list() for b in sample.boxes]}
        )
    with open(root / "annotations.json", "w", encoding="utf-8") as fh:
        json.dump({"samples": manifest}, fh, indent=2)
    return samples


def load_dataset(root, min_height: int = MIN_PERSON_HEIGHT) -> list[SceneSample]:
    """Load a dataset directory. Target boxes shorter than ``min_height``
    are skipped (too small to attack or train on); samples left with no
    usable box are dropped. Skip counts go to the module logger."""
    root = Path(root)
    manifest_path = root / "annotations.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no annotations.json under {root}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    entries = doc.get("samples")
    if not isinstance(entries, list):
        raise ValueError(f"malformed manifest {manifest_path}: missing 'samples' list")
    samples = []
    skipped_boxes = 0
    dropped_samples = 0
    for entry in entries:
        try:
            sid = entry["id"]
            rel = entry["image"]
            raw_boxes = entry["boxes"]
        except (TypeError, KeyError) as exc:
            raise ValueError(f"malformed manifest entry {entry!r}: missing {exc}") from exc
        image_path = root / rel
        if not image_path.exists():
            raise FileNotFoundError(f"dataset entry {sid!r}: image file {image_path} is missing")
        image = load_pgm(image_path)
        boxes = []
        for b in raw_boxes:
            box = BBox(*b)
            if box.h < min_height:
                skipped_boxes += 1
                continue
            box.require_inside(image, f"dataset entry {sid!r} box")
            boxes.append(box)
        if not boxes:
            dropped_samples += 1
            continue
        samples.append(SceneSample(id=sid, image=image, boxes=tuple(boxes)))
    if skipped_boxes or dropped_samples:
        log.warning(
            "load_dataset(%s): skipped %d boxes shorter than %d px (%d samples dropped entirely)",
            root, skipped_boxes, min_height, dropped_samples,
        )
    return samples
