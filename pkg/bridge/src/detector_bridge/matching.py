"""Reduce raw detections to per-queried-box objectness by IoU matching."""

from __future__ import annotations

IOU_THRESHOLD = 0.5


def box_iou(a, b) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    if union <= 0:
        return 0.0
    return inter / union


def match_detections(detections, boxes, iou_threshold: float = IOU_THRESHOLD) -> list[float]:
    """For each queried (x, y, w, h) box, the maximum objectness among
    detections (x, y, w, h, objectness) overlapping it with IoU >= threshold,
    or 0.0 when nothing overlaps enough."""
    dets = [(tuple(d[:4]), float(d[4])) for d in detections]
    out = []
    for box in boxes:
        best = 0.0
        for dbox, conf in dets:
            if box_iou(dbox, box) >= iou_threshold and conf > best:
                best = conf
        out.append(best)
    return out
