"""Curved-block patch parameterization, rasterization, and compositing.

A patch is a D x D grid of square cells whose grid edges may bow outward:
each edge carries one scalar delta, and the edge's midpoint control point is
displaced by delta * d along the axis perpendicular to the edge (d = grid
spacing). Interior edges are shared, so adjacent cells always agree on their
common boundary and the union of cells keeps tiling the square without
cracks or overlaps as long as |delta| stays within the feasible bound.

Cell visibility is a separate D x D bit mask; hiding a cell removes its fill
but leaves the shared edge geometry in force for its neighbors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .imaging import BBox, GrayImage

# Feasibility clamp for per-edge deltas, in grid-spacing units. Two
# perpendicular edges meeting at a corner and bowing toward each other
# become tangent at |delta| = 0.5; 0.45 keeps a safety margin.
TAU = 0.45

SEGMENTS_PER_EDGE = 16
SUPERSAMPLE = 2

# Patch anchor: horizontally centered, 40% down the target box (chest).
ANCHOR_FRAC = 0.40

BOUNDARY_KINDS = ("bezier", "straight", "polyline", "catmull_rom")

_THETA_FIELDS = ("dim", "width_frac", "gray", "boundary_kind", "deltas", "mask")


@dataclass(frozen=True)
class EdgeId:
    """One geometric grid edge. Horizontal edges lie between vertically
    adjacent cells (row 0..dim inclusive, col 0..dim-1); vertical edges lie
    between horizontally adjacent cells (row 0..dim-1, col 0..dim inclusive).
    """

    orientation: str  # "h" or "v"
    row: int
    col: int

    def __post_init__(self):
        if self.orientation not in ("h", "v"):
            raise ValueError(f"orientation must be 'h' or 'v', got {self.orientation!r}")


def n_edges(dim: int) -> int:
    return 2 * dim * (dim + 1)


def edge_index(edge: EdgeId, dim: int) -> int:
    """Flatten an EdgeId into the deltas vector: all horizontal edges first,
    row-major, then all vertical edges, row-major."""
    if edge.orientation == "h":
        if not (0 <= edge.row <= dim and 0 <= edge.col < dim):
            raise ValueError(f"horizontal edge out of range for dim {dim}: {edge}")
        return edge.row * dim + edge.col
    if not (0 <= edge.row < dim and 0 <= edge.col <= dim):
        raise ValueError(f"vertical edge out of range for dim {dim}: {edge}")
    return dim * (dim + 1) + edge.row * (dim + 1) + edge.col


def edge_at(index: int, dim: int) -> EdgeId:
    """Inverse of edge_index."""
    nh = dim * (dim + 1)
    if not (0 <= index < n_edges(dim)):
        raise ValueError(f"edge index {index} out of range for dim {dim}")
    if index < nh:
        return EdgeId("h", index // dim, index % dim)
    index -= nh
    return EdgeId("v", index // (dim + 1), index % (dim + 1))


@dataclass(frozen=True)
class PatchTheta:
    """Full patch parameter vector: grid size, physical width as a fraction
    of target box height, per-edge deflections, cell visibility bits, patch
    intensity, and the edge-flattening family."""

    dim: int
    width_frac: float
    deltas: np.ndarray
    mask: np.ndarray
    gray: float = 0.0
    boundary_kind: str = "bezier"

    def __post_init__(self):
        object.__setattr__(self, "dim", int(self.dim))
        d = np.asarray(self.deltas, dtype=np.float64).reshape(-1).copy()
        m = np.asarray(self.mask).reshape(-1).astype(np.int64).copy()
        d.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "deltas", d)
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "width_frac", float(self.width_frac))
        object.__setattr__(self, "gray", float(self.gray))

    def delta_of(self, edge: EdgeId) -> float:
        return float(self.deltas[edge_index(edge, self.dim)])

    def mask_bit(self, row: int, col: int) -> int:
        return int(self.mask[row * self.dim + col])

    def to_json(self) -> str:
        doc = {
            "dim": self.dim,
            "width_frac": self.width_frac,
            "gray": self.gray,
            "boundary_kind": self.boundary_kind,
            "deltas": [float(v) for v in self.deltas],
            "mask": [
                [int(self.mask[r * self.dim + c]) for c in range(self.dim)]
                for r in range(self.dim)
            ],
        }
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_json(text: str) -> "PatchTheta":
        doc = json.loads(text)
        if not isinstance(doc, dict):
            raise ValueError("patch parameter document must be a JSON object")
        unknown = set(doc) - set(_THETA_FIELDS)
        if unknown:
            raise ValueError(f"unknown patch parameter fields: {sorted(unknown)}")
        missing = set(_THETA_FIELDS) - set(doc)
        if missing:
            raise ValueError(f"missing patch parameter fields: {sorted(missing)}")
        mask_rows = doc["mask"]
        if not isinstance(mask_rows, list) or not all(isinstance(r, list) for r in mask_rows):
            raise ValueError("mask must be a list of rows")
        theta = PatchTheta(
            dim=doc["dim"],
            width_frac=doc["width_frac"],
            gray=doc["gray"],
            boundary_kind=doc["boundary_kind"],
            deltas=np.asarray(doc["deltas"], dtype=np.float64),
            mask=np.asarray(mask_rows, dtype=np.int64),
        )
        violations = validate_theta(theta)
        if violations:
            raise ValueError("invalid patch parameters: " + "; ".join(violations))
        return theta


def bezier_point(p0, p1, p2, t: float):
    """Quadratic Bezier point (1-t)^2 p0 + 2t(1-t) p1 + t^2 p2."""
    t = float(t)
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"t must be in [0, 1], got {t}")
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    s = 1.0 - t
    return s * s * p0 + 2.0 * t * s * p1 + t * t * p2


def edge_geometry(theta: PatchTheta, edge: EdgeId, spacing: float):
    """Control points (p0, p1, p2) of one grid edge at grid spacing d.

    p0 and p2 are the regular lattice endpoints; p1 is the edge midpoint
    displaced by delta * d along +y for horizontal edges and +x for vertical
    edges.
    """
    d = float(spacing)
    delta = theta.delta_of(edge)
    if edge.orientation == "h":
        p0 = np.array([edge.col * d, edge.row * d])
        p2 = np.array([(edge.col + 1) * d, edge.row * d])
        normal = np.array([0.0, 1.0])
    else:
        p0 = np.array([edge.col * d, edge.row * d])
        p2 = np.array([edge.col * d, (edge.row + 1) * d])
        normal = np.array([1.0, 0.0])
    p1 = (p0 + p2) / 2.0 + delta * d * normal
    return p0, p1, p2


def project_delta(delta: float, tau: float = TAU) -> float:
    """Clamp a deflection back into the feasible band [-tau, tau],
    preserving sign. Idempotent."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    delta = float(delta)
    return float(np.sign(delta) * min(abs(delta), tau))


def validate_theta(theta: PatchTheta) -> list[str]:
    """Structural checks; returns human-readable violations (empty = valid)."""
    out: list[str] = []
    dim = theta.dim
    if dim < 1:
        out.append(f"dim must be >= 1, got {dim}")
        return out
    if not (0.0 < theta.width_frac <= 1.0):
        out.append(f"width_frac must be in (0, 1], got {theta.width_frac}")
    if not (0.0 <= theta.gray <= 1.0):
        out.append(f"gray must be in [0, 1], got {theta.gray}")
    if theta.boundary_kind not in BOUNDARY_KINDS:
        out.append(f"boundary_kind must be one of {BOUNDARY_KINDS}, got {theta.boundary_kind!r}")
    if theta.deltas.shape != (n_edges(dim),):
        out.append(f"deltas must have length {n_edges(dim)}, got {theta.deltas.shape[0]}")
    else:
        bad = np.nonzero(np.abs(theta.deltas) > TAU)[0]
        for idx in bad:
            out.append(f"|delta| exceeds {TAU} at edge {edge_at(int(idx), dim)}: {theta.deltas[idx]}")
    if theta.mask.shape != (dim * dim,):
        out.append(f"mask must have {dim * dim} entries, got {theta.mask.shape[0]}")
    elif not np.isin(theta.mask, (0, 1)).all():
        out.append("mask entries must be 0 or 1")
    return out


def _flatten_params(segments: int) -> np.ndarray:
    return np.arange(segments + 1, dtype=np.float64) / segments


def _flatten_bezier(p0, p1, p2, segments: int) -> np.ndarray:
    t = _flatten_params(segments)[:, None]
    s = 1.0 - t
    return s * s * p0[None, :] + 2.0 * t * s * p1[None, :] + t * t * p2[None, :]


def _flatten_straight(p0, p1, p2, segments: int) -> np.ndarray:
    t = _flatten_params(segments)[:, None]
    return (1.0 - t) * p0[None, :] + t * p2[None, :]


def _flatten_polyline(p0, p1, p2, segments: int) -> np.ndarray:
    # two chords p0 -> p1 -> p2; u <= 0.5 walks the first chord
    u = _flatten_params(segments)[:, None]
    first = p0[None, :] + (2.0 * u) * (p1 - p0)[None, :]
    second = p1[None, :] + (2.0 * u - 1.0) * (p2 - p1)[None, :]
    return np.where(u <= 0.5, first, second)


def _flatten_catmull_rom(p0, p1, p2, segments: int) -> np.ndarray:
    """Centripetal Catmull-Rom through p0, p1, p2 with duplicated endpoint
    phantoms, sampled uniformly in the global knot parameter."""
    d01 = float(np.linalg.norm(p1 - p0))
    d12 = float(np.linalg.norm(p2 - p1))
    if d01 == 0.0 and d12 == 0.0:
        return np.repeat(p0[None, :], segments + 1, axis=0)
    t0 = 0.0
    t1 = t0 + np.sqrt(d01)
    t2 = t1 + np.sqrt(d12)
    # duplicated phantoms collapse the one-sided tangents to finite
    # differences; the interior tangent is the standard weighted blend
    if t1 > t0:
        m0 = (p1 - p0) / (t1 - t0)
    else:
        m0 = np.zeros(2)
    if t2 > t1:
        m2 = (p2 - p1) / (t2 - t1)
    else:
        m2 = np.zeros(2)
    if t1 > t0 and t2 > t1:
        m1 = ((p1 - p0) / (t1 - t0) * (t2 - t1) + (p2 - p1) / (t2 - t1) * (t1 - t0)) / (t2 - t0)
    else:
        m1 = m0 + m2
    ts = t0 + _flatten_params(segments) * (t2 - t0)
    pts = np.empty((segments + 1, 2))
    for i, t in enumerate(ts):
        if t <= t1:
            a, b, ma, mb, ta, tb = p0, p1, m0, m1, t0, t1
        else:
            a, b, ma, mb, ta, tb = p1, p2, m1, m2, t1, t2
        h = tb - ta
        if h == 0.0:
            pts[i] = b
            continue
        u = (t - ta) / h
        h00 = 2 * u**3 - 3 * u**2 + 1
        h10 = u**3 - 2 * u**2 + u
        h01 = -2 * u**3 + 3 * u**2
        h11 = u**3 - u**2
        pts[i] = h00 * a + h10 * h * ma + h01 * b + h11 * h * mb
    return pts


_FLATTENERS = {
    "bezier": _flatten_bezier,
    "straight": _flatten_straight,
    "polyline": _flatten_polyline,
    "catmull_rom": _flatten_catmull_rom,
}


def flatten_edge(theta: PatchTheta, edge: EdgeId, spacing: float,
                 segments: int = SEGMENTS_PER_EDGE, *, force_straight: bool = False) -> np.ndarray:
    """Polyline approximation of one edge, p0-first. ``force_straight``
    renders the chord regardless of delta (used for perimeter edges, which
    must stay straight so the union of cells still fills the patch square).
    """
    p0, p1, p2 = edge_geometry(theta, edge, spacing)
    if force_straight:
        return _flatten_straight(p0, p1, p2, segments)
    return _FLATTENERS[theta.boundary_kind](p0, p1, p2, segments)


def _is_perimeter(edge: EdgeId, dim: int) -> bool:
    if edge.orientation == "h":
        return edge.row == 0 or edge.row == dim
    return edge.col == 0 or edge.col == dim


def cell_outline(theta: PatchTheta, row: int, col: int, spacing: float,
                 segments_per_edge: int = SEGMENTS_PER_EDGE,
                 edge_cache: dict | None = None) -> np.ndarray:
    """Closed counterclockwise outline of one cell (y axis pointing down, so
    traversal order top, right, bottom reversed, left reversed).

    Perimeter edges of the whole patch are rendered as straight chords no
    matter their delta: bowing them inward would eat into the patch square
    and break the exact tiling of the cell union.

    Pass the same ``edge_cache`` dict across calls for one theta to flatten
    each shared edge once instead of once per adjacent cell.

    Returns 4 * segments_per_edge vertices (last point of each edge dropped,
    the closing vertex is implicit).
    """
    dim = theta.dim
    if not (0 <= row < dim and 0 <= col < dim):
        raise ValueError(f"cell ({row}, {col}) out of range for dim {dim}")
    if segments_per_edge < 1:
        raise ValueError("segments_per_edge must be >= 1")
    top = EdgeId("h", row, col)
    bottom = EdgeId("h", row + 1, col)
    left = EdgeId("v", row, col)
    right = EdgeId("v", row, col + 1)
    parts = []
    for edge, reverse in ((top, False), (right, False), (bottom, True), (left, True)):
        pts = None if edge_cache is None else edge_cache.get(edge)
        if pts is None:
            pts = flatten_edge(theta, edge, spacing, segments_per_edge,
                               force_straight=_is_perimeter(edge, dim))
            if edge_cache is not None:
                edge_cache[edge] = pts
        if reverse:
            pts = pts[::-1]
        parts.append(pts[:-1])
    return np.concatenate(parts, axis=0)


@dataclass(frozen=True)
class PatchRaster:
    """Supersampled occupancy of the visible cells: ``coverage`` is a
    side x side array of per-pixel covered fractions in [0, 1]."""

    side: int
    coverage: np.ndarray = field(repr=False)

    def __post_init__(self):
        cov = np.asarray(self.coverage, dtype=np.float64)
        if cov.shape != (self.side, self.side):
            raise ValueError(f"coverage must be {self.side}x{self.side}, got {cov.shape}")
        if cov.min() < 0.0 or cov.max() > 1.0:
            raise ValueError("coverage fractions must lie in [0, 1]")
        cov = cov.copy()
        cov.flags.writeable = False
        object.__setattr__(self, "coverage", cov)


def _canonical_segments(poly: np.ndarray) -> np.ndarray:
    """Closed polyline -> (n, 4) array of segments (x1, y1, x2, y2), each
    oriented so y1 < y2, or y1 == y2 and x1 <= x2. Both cells adjacent to a
    shared edge then perform bit-identical crossing arithmetic on it, which
    is what makes the first-claim rule airtight at the shared boundary."""
    a = poly
    b = np.roll(poly, -1, axis=0)
    swap = (b[:, 1] < a[:, 1]) | ((b[:, 1] == a[:, 1]) & (b[:, 0] < a[:, 0]))
    lo = np.where(swap[:, None], b, a)
    hi = np.where(swap[:, None], a, b)
    return np.concatenate([lo, hi], axis=1)


def _scan_fill(segs: np.ndarray, side: int, sub: int) -> np.ndarray:
    """Even-odd fill of one polygon on the (side*sub)^2 subsample grid.
    Subsample centers sit at (k + 0.5) / sub in pixel units; the polygon is
    in patch coordinates [0, side].

    A center is inside when an odd number of crossings lie strictly left of
    it, i.e. when it falls in a half-open span (xc_even, xc_odd] of the
    sorted crossings. Because sub is a power of two, (k + 0.5)/sub > xc is
    exactly equivalent to k >= floor(xc*sub - 0.5) + 1 in doubles, so the
    spans convert to integer column ranges with no change in which centers
    they claim, and the fill reduces to a vectorized run-length paint."""
    n = side * sub
    inside = np.zeros((n, n), dtype=bool)
    ymin, xmin, band = _scan_fill_band(segs, side, sub)
    if band is not None:
        inside[ymin : ymin + band.shape[0], xmin : xmin + band.shape[1]] = band
    return inside


def _scan_fill_band(segs: np.ndarray, side: int, sub: int):
    """Core of _scan_fill: returns (ymin, xmin, band) where ``band`` covers
    only the subgrid rectangle the polygon can claim, or (0, 0, None) for an
    empty fill."""
    n = side * sub
    x1, y1, x2, y2 = segs[:, 0], segs[:, 1], segs[:, 2], segs[:, 3]
    keep = y1 != y2
    x1, y1, x2, y2 = x1[keep], y1[keep], x2[keep], y2[keep]
    if x1.size == 0:
        return 0, 0, None
    ymin = max(0, int(np.floor(y1.min() * sub - 0.5)))
    ymax = min(n - 1, int(np.ceil(y2.max() * sub - 0.5)))
    if ymin > ymax:
        return 0, 0, None
    ys = (np.arange(ymin, ymax + 1) + 0.5) / sub
    # half-open rule [y1, y2): each scanline counts every segment once
    hits = (y1[None, :] <= ys[:, None]) & (ys[:, None] < y2[None, :])
    invdy = 1.0 / (y2 - y1)
    xc = x1[None, :] + (ys[:, None] - y1[None, :]) * invdy[None, :] * (x2 - x1)[None, :]
    xc = np.where(hits, xc, np.inf)
    xc.sort(axis=1)
    lo, hi = xc[:, 0::2], xc[:, 1::2]
    valid = np.isfinite(lo) & np.isfinite(hi)
    rows, cols = np.nonzero(valid)
    if not rows.size:
        return 0, 0, None
    starts = np.clip(np.floor(lo[rows, cols] * sub - 0.5).astype(np.int64) + 1, 0, n)
    stops = np.clip(np.floor(hi[rows, cols] * sub - 0.5).astype(np.int64) + 1, 0, n)
    xmin = int(starts.min())
    xmax = int(stops.max())
    if xmin >= xmax:
        return 0, 0, None
    width = xmax - xmin
    paint = np.zeros((len(ys), width + 1), dtype=np.int32)
    np.add.at(paint, (rows, starts - xmin), 1)
    np.add.at(paint, (rows, stops - xmin), -1)
    return ymin, xmin, np.cumsum(paint[:, :width], axis=1) > 0


def _cell_bounds(poly: np.ndarray, side: int, sub: int) -> tuple[int, int, int, int]:
    n = side * sub
    x_lo = max(0, int(np.floor(poly[:, 0].min() * sub - 0.5)))
    x_hi = min(n - 1, int(np.ceil(poly[:, 0].max() * sub + 0.5)))
    y_lo = max(0, int(np.floor(poly[:, 1].min() * sub - 0.5)))
    y_hi = min(n - 1, int(np.ceil(poly[:, 1].max() * sub + 0.5)))
    return x_lo, x_hi, y_lo, y_hi


def rasterize_cells(theta: PatchTheta, side: int,
                    segments_per_edge: int = SEGMENTS_PER_EDGE):
    """Fill every visible cell on the supersample grid with first-claim
    ownership. Returns (claimed, double_claims): ``claimed`` is the boolean
    union over the (side*SUPERSAMPLE)^2 subsample grid; ``double_claims``
    counts subsamples that more than one cell tried to own (0 for any
    feasible theta; the count exists to expose infeasible geometry)."""
    dim = theta.dim
    if side < dim:
        raise ValueError(f"raster side {side} smaller than grid dim {dim}")
    sub = SUPERSAMPLE
    n = side * sub
    spacing = side / dim
    claimed = np.zeros((n, n), dtype=bool)
    double = 0
    edge_cache: dict = {}
    for row in range(dim):
        for col in range(dim):
            if theta.mask_bit(row, col) != 1:
                continue
            poly = cell_outline(theta, row, col, spacing, segments_per_edge,
                                edge_cache=edge_cache)
            segs = _canonical_segments(poly)
            ymin, xmin, band = _scan_fill_band(segs, side, sub)
            if band is None:
                continue
            window = claimed[ymin : ymin + band.shape[0], xmin : xmin + band.shape[1]]
            double += int((band & window).sum())
            window |= band
    return claimed, double


def rasterize_patch(theta: PatchTheta, side: int) -> PatchRaster:
    """Rasterize the visible cells to per-pixel coverage fractions by 2x2
    supersampling under the even-odd fill rule."""
    claimed, _ = rasterize_cells(theta, side)
    sub = SUPERSAMPLE
    coverage = claimed.reshape(side, sub, side, sub).mean(axis=(1, 3))
    return PatchRaster(side=side, coverage=coverage)


def patch_side_for(width_frac: float, target_h: int) -> int:
    """Pixel side length of the patch square on a target of height h."""
    return int(round(width_frac * target_h))


def patch_origin(target: BBox, side: int) -> tuple[int, int]:
    """Top-left pixel of the patch square, centered horizontally and
    anchored at ANCHOR_FRAC of the target height."""
    cx = target.x + target.w / 2.0
    cy = target.y + ANCHOR_FRAC * target.h
    x0 = int(np.floor(cx - side / 2.0 + 0.5))
    y0 = int(np.floor(cy - side / 2.0 + 0.5))
    return x0, y0


def compose(scene: GrayImage, target: BBox, theta: PatchTheta, raster: PatchRaster) -> GrayImage:
    """Blend the patch into the scene over the target pedestrian: each
    covered pixel moves toward theta.gray by its coverage fraction,
    out = (1 - c) * scene + c * gray. Placement outside the image is
    clipped; pixels outside the patch square are untouched."""
    expected = patch_side_for(theta.width_frac, target.h)
    if raster.side != expected:
        raise ValueError(
            f"raster side {raster.side} does not match width_frac {theta.width_frac} "
            f"of target height {target.h} (expected {expected})"
        )
    x0, y0 = patch_origin(target, raster.side)
    h, w = scene.pixels.shape
    sx0, sy0 = max(0, x0), max(0, y0)
    sx1, sy1 = min(w, x0 + raster.side), min(h, y0 + raster.side)
    if sx0 >= sx1 or sy0 >= sy1:
        return scene
    out = scene.pixels.copy()
    cov = raster.coverage[sy0 - y0 : sy1 - y0, sx0 - x0 : sx1 - x0]
    region = out[sy0:sy1, sx0:sx1]
    out[sy0:sy1, sx0:sx1] = (1.0 - cov) * region + cov * theta.gray
    return GrayImage(out)
