"""Stochastic physical-robustness transforms.

Two families are modeled. Thin-plate-spline warps deform the patch layer
itself (clothing wrinkles move the printed patch non-rigidly), and
expectation-over-transformation draws scale/translate/sensor-noise the whole
composed scene (camera distance, framing jitter, thermal sensor noise).
The patch warp runs before compositing, the scene transform after; tests pin
that order by checking the two compositions disagree.

Every random quantity is drawn from an explicitly passed stream, so a fixed
seed reproduces a fixed transform sequence regardless of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .imaging import BBox, GrayImage, sample_bilinear_clamped, sample_bilinear_zero
from .patchgen import PatchRaster
from .streams import as_generator

MIN_BOX_SIDE = 8


class EotError(ValueError):
    """Transform left the target box too small or inverted."""


class TpsSingularError(ValueError):
    """TPS system could not be solved (collinear or duplicated controls)."""


@dataclass(frozen=True)
class EotConfig:
    """Ranges of the transform distribution. All fields are overridable from
    the experiment config; these defaults are deliberately mild."""

    scale_range: tuple[float, float] = (0.85, 1.15)
    translate_frac: float = 0.05
    noise_sigma_max: float = 0.02
    tps_grid: int = 4
    tps_offset_frac: float = 0.02
    draws_per_eval: int = 4

    def __post_init__(self):
        lo, hi = self.scale_range
        if not (0 < lo <= hi):
            raise ValueError(f"scale_range must satisfy 0 < lo <= hi, got {self.scale_range}")
        object.__setattr__(self, "scale_range", (float(lo), float(hi)))
        if self.translate_frac < 0:
            raise ValueError(f"translate_frac must be >= 0, got {self.translate_frac}")
        if self.noise_sigma_max < 0:
            raise ValueError(f"noise_sigma_max must be >= 0, got {self.noise_sigma_max}")
        if self.tps_grid < 2:
            raise ValueError(f"tps_grid must be >= 2, got {self.tps_grid}")
        if self.tps_offset_frac < 0:
            raise ValueError(f"tps_offset_frac must be >= 0, got {self.tps_offset_frac}")
        if self.draws_per_eval < 1:
            raise ValueError(f"draws_per_eval must be >= 1, got {self.draws_per_eval}")


@dataclass(frozen=True)
class TransformSample:
    """One concrete draw from the transform distribution."""

    scale: float
    dx: float
    dy: float
    noise_sigma: float
    tps_offsets: np.ndarray = field(repr=False)  # (grid*grid, 2) pixels

    def __post_init__(self):
        off = np.asarray(self.tps_offsets, dtype=np.float64)
        if off.ndim != 2 or off.shape[1] != 2:
            raise ValueError(f"tps_offsets must be (n, 2), got {off.shape}")
        g = int(round(np.sqrt(off.shape[0])))
        if g * g != off.shape[0] or g < 2:
            raise ValueError(f"tps_offsets count {off.shape[0]} is not a square lattice")
        off = off.copy()
        off.flags.writeable = False
        object.__setattr__(self, "tps_offsets", off)


def sample_transform(rng, cfg: EotConfig, target: BBox, patch_side: int) -> TransformSample:
    """Draw one transform. Translation is proportional to the target box,
    TPS control offsets to the patch side (they act on the patch raster).
    Draw order is fixed (scale, dx, dy, sigma, offsets) so a given stream
    always yields the same sample."""
    gen = as_generator(rng)
    lo, hi = cfg.scale_range
    scale = float(gen.uniform(lo, hi))
    t = cfg.translate_frac
    dx = float(gen.uniform(-t, t) * target.w)
    dy = float(gen.uniform(-t, t) * target.h)
    sigma = float(gen.uniform(0.0, cfg.noise_sigma_max))
    f = cfg.tps_offset_frac * patch_side
    offsets = gen.uniform(-f, f, size=(cfg.tps_grid * cfg.tps_grid, 2))
    return TransformSample(scale=scale, dx=dx, dy=dy, noise_sigma=sigma, tps_offsets=offsets)


@dataclass(frozen=True)
class TpsModel:
    """Solved thin-plate interpolant x -> affine(x) + sum_i w_i U(|x - s_i|)."""

    source: np.ndarray = field(repr=False)  # (n, 2)
    affine: np.ndarray = field(repr=False)  # (3, 2) rows: const, x, y
    weights: np.ndarray = field(repr=False)  # (n, 2)


def _tps_kernel(r2: np.ndarray) -> np.ndarray:
    # U(r) = r^2 log(r^2) with the removable singularity U(0) = 0
    out = np.zeros_like(r2)
    np.log(r2, out=out, where=r2 > 0)
    return r2 * out


def tps_fit(source: np.ndarray, target: np.ndarray) -> TpsModel:
    """Solve the standard thin-plate system mapping source points onto
    target points exactly (interpolating spline, no regularization)."""
    src = np.asarray(source, dtype=np.float64)
    tgt = np.asarray(target, dtype=np.float64)
    if src.ndim != 2 or src.shape[1] != 2 or src.shape != tgt.shape:
        raise ValueError(f"need matching (n, 2) point arrays, got {src.shape} and {tgt.shape}")
    n = src.shape[0]
    if n < 3:
        raise ValueError(f"need at least 3 control points, got {n}")
    diff = src[:, None, :] - src[None, :, :]
    k = _tps_kernel(np.einsum("ijk,ijk->ij", diff, diff))
    p = np.concatenate([np.ones((n, 1)), src], axis=1)
    sys = np.zeros((n + 3, n + 3))
    sys[:n, :n] = k
    sys[:n, n:] = p
    sys[n:, :n] = p.T
    rhs = np.zeros((n + 3, 2))
    rhs[:n] = tgt
    try:
        sol = np.linalg.solve(sys, rhs)
    except np.linalg.LinAlgError as exc:
        raise TpsSingularError(f"thin-plate system is singular: {exc}") from exc
    model = TpsModel(source=src, affine=sol[n:], weights=sol[:n])
    mapped = tps_apply(model, src)
    resid = float(np.abs(mapped - tgt).max())
    if not np.isfinite(resid) or resid > 1e-6:
        raise TpsSingularError(
            f"thin-plate fit failed the interpolation condition (residual {resid:.3g}); "
            "control points are likely collinear or duplicated"
        )
    return model


def tps_apply(model: TpsModel, points: np.ndarray) -> np.ndarray:
    """Evaluate the interpolant at (m, 2) query points."""
    pts = np.asarray(points, dtype=np.float64)
    diff = pts[:, None, :] - model.source[None, :, :]
    u = _tps_kernel(np.einsum("ijk,ijk->ij", diff, diff))
    p = np.concatenate([np.ones((pts.shape[0], 1)), pts], axis=1)
    return p @ model.affine + u @ model.weights


def tps_lattice(side: int, grid: int) -> np.ndarray:
    """Regular control lattice over the raster, spanning the outermost pixel
    centers (0.5 .. side - 0.5) in both axes."""
    ticks = 0.5 + np.arange(grid) * (side - 1) / (grid - 1)
    gx, gy = np.meshgrid(ticks, ticks)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def tps_warp(raster: PatchRaster, sample: TransformSample) -> PatchRaster:
    """Warp patch coverage by the control-point displacements via backward
    mapping: fit displaced lattice -> original lattice, evaluate at output
    pixel centers, sample the input bilinearly with zero outside."""
    offsets = sample.tps_offsets
    if np.all(offsets == 0.0):
        return raster
    g = int(round(np.sqrt(offsets.shape[0])))
    side = raster.side
    lattice = tps_lattice(side, g)
    model = tps_fit(lattice + offsets, lattice)
    centers = 0.5 + np.arange(side)
    gx, gy = np.meshgrid(centers, centers)
    query = np.stack([gx.ravel(), gy.ravel()], axis=1)
    src = tps_apply(model, query)
    # pixel-center (k + 0.5) corresponds to array index k
    vals = sample_bilinear_zero(raster.coverage, src[:, 0] - 0.5, src[:, 1] - 0.5)
    coverage = np.clip(vals.reshape(side, side), 0.0, 1.0)
    return PatchRaster(side=side, coverage=coverage)


def transform_box(target: BBox, sample: TransformSample, width: int, height: int) -> BBox:
    """Where the target box lands after scaling about its center and
    translating, rounded to pixels and clipped to the image."""
    if sample.scale <= 0:
        raise EotError(f"scale must be positive, got {sample.scale}")
    cx, cy = target.cx, target.cy
    s = sample.scale
    x0 = cx + s * (target.x - cx) + sample.dx
    y0 = cy + s * (target.y - cy) + sample.dy
    nx = int(np.floor(x0 + 0.5))
    ny = int(np.floor(y0 + 0.5))
    nw = int(np.floor(s * target.w + 0.5))
    nh = int(np.floor(s * target.h + 0.5))
    cx0, cy0 = max(0, nx), max(0, ny)
    cx1, cy1 = min(width, nx + nw), min(height, ny + nh)
    if cx1 - cx0 < MIN_BOX_SIDE or cy1 - cy0 < MIN_BOX_SIDE:
        raise EotError(
            f"transformed box degenerates to {cx1 - cx0}x{cy1 - cy0} "
            f"(minimum {MIN_BOX_SIDE}x{MIN_BOX_SIDE})"
        )
    return BBox(cx0, cy0, cx1 - cx0, cy1 - cy0)


def apply_eot(scene: GrayImage, target: BBox, sample: TransformSample, rng) -> tuple[GrayImage, BBox]:
    """Scale the scene about the target center, translate, and add Gaussian
    sensor noise. The identity sample is a bit-exact no-op."""
    if sample.scale <= 0:
        raise EotError(f"scale must be positive, got {sample.scale}")
    new_box = transform_box(target, sample, scene.width, scene.height)
    identity_warp = sample.scale == 1.0 and sample.dx == 0.0 and sample.dy == 0.0
    if identity_warp:
        pixels = scene.pixels
    else:
        h, w = scene.pixels.shape
        cx, cy = target.cx, target.cy
        # backward map: output pixel p reads input (c + (p - c - t) / s);
        # coordinates are pixel centers, i.e. array index + 0.5
        px = np.arange(w) + 0.5
        py = np.arange(h) + 0.5
        sx = cx + (px - cx - sample.dx) / sample.scale
        sy = cy + (py - cy - sample.dy) / sample.scale
        gx, gy = np.meshgrid(sx - 0.5, sy - 0.5)
        pixels = sample_bilinear_clamped(scene.pixels, gx, gy)
    if sample.noise_sigma > 0:
        gen = as_generator(rng)
        pixels = pixels + gen.normal(0.0, sample.noise_sigma, size=pixels.shape)
        pixels = np.clip(pixels, 0.0, 1.0)
    elif identity_warp:
        return scene, new_box
    return GrayImage(pixels), new_box


def identity_sample(grid: int = 4) -> TransformSample:
    return TransformSample(scale=1.0, dx=0.0, dy=0.0, noise_sigma=0.0,
                           tps_offsets=np.zeros((grid * grid, 2)))
