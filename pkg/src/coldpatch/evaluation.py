"""Attack success rate and evaluation reports.

A target is a ground-truth box the detector finds on the clean scene
(confidence >= 0.5). The attack succeeds on a target when, with the patch
composed on, confidence falls below that same 0.5 threshold. ASR is the
fraction of targets attacked successfully; it is undefined (reported as
null, never a crash) when the detector finds no clean targets at all.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

from .patchgen import PatchTheta, compose, patch_side_for, rasterize_patch
from .scene import SceneSample
from .streams import NS_EVAL, RngStream
from .transforms import EotConfig, apply_eot, identity_sample, sample_transform, tps_warp

DETECTION_THRESHOLD = 0.5


@dataclass(frozen=True)
class TargetRow:
    sample_id: str
    box_index: int
    clean_conf: float
    attacked_conf: float
    success: bool


@dataclass(frozen=True)
class EvalReport:
    n_clean_detected: int
    n_successful: int
    asr: float | None  # None when no clean detections exist
    per_target: tuple[TargetRow, ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_clean_detected": self.n_clean_detected,
                "n_successful": self.n_successful,
                "asr": self.asr,
                "per_target": [
                    {
                        "sample_id": r.sample_id,
                        "box_index": r.box_index,
                        "clean_conf": r.clean_conf,
                        "attacked_conf": r.attacked_conf,
                        "success": r.success,
                    }
                    for r in self.per_target
                ],
            },
            indent=2,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["sample_id", "box_index", "clean_conf", "attacked_conf", "success"])
        for r in self.per_target:
            writer.writerow([r.sample_id, r.box_index, f"{r.clean_conf:.6f}",
                             f"{r.attacked_conf:.6f}", int(r.success)])
        return buf.getvalue()


def asr(attacked_confidences) -> float:
    """Fraction of confidences knocked below the detection threshold.
    Counted in integer arithmetic so e.g. 2 of 3 gives exactly 2/3."""
    confs = list(attacked_confidences)
    if not confs:
        raise ValueError("asr needs at least one confidence")
    for c in confs:
        if not (0.0 <= c <= 1.0):
            raise ValueError(f"confidence {c} outside [0, 1]")
    hits = sum(1 for c in confs if c >= DETECTION_THRESHOLD)
    return (len(confs) - hits) / len(confs)


def evaluate(theta: PatchTheta, dataset: list[SceneSample], oracle,
             eot: EotConfig | None = None, rng: RngStream | None = None) -> EvalReport:
    """Score every ground-truth box clean, keep the detected ones as
    targets, then rescore each target with the patch composed on (one
    TPS/EOT draw per target when ``eot`` is given, identity otherwise)."""
    if not dataset:
        raise ValueError("evaluate needs a non-empty dataset")
    if rng is None:
        rng = RngStream(0)
    eval_root = rng.child(NS_EVAL)
    raster_cache: dict[int, object] = {}
    rows: list[TargetRow] = []
    for si, sample in enumerate(dataset):
        clean_scores = oracle.score(sample.image, list(sample.boxes))
        for bi, box in enumerate(sample.boxes):
            clean = clean_scores[bi]
            if clean < DETECTION_THRESHOLD:
                continue
            side = patch_side_for(theta.width_frac, box.h)
            if side not in raster_cache:
                raster_cache[side] = rasterize_patch(theta, side)
            raster = raster_cache[side]
            if eot is None:
                draw = identity_sample()
                gen = None
            else:
                gen = eval_root.child(si, bi).generator()
                draw = sample_transform(gen, eot, box, side)
            warped = tps_warp(raster, draw)
            attacked_img = compose(sample.image, box, theta, warped)
            timg, tbox = apply_eot(attacked_img, box, draw, gen)
            attacked = oracle.score(timg, [tbox])[0]
            rows.append(TargetRow(
                sample_id=sample.id,
                box_index=bi,
                clean_conf=float(clean),
                attacked_conf=float(attacked),
                success=attacked < DETECTION_THRESHOLD,
            ))
    n_detected = len(rows)
    n_success = sum(1 for r in rows if r.success)
    return EvalReport(
        n_clean_detected=n_detected,
        n_successful=n_success,
        asr=(n_success / n_detected) if n_detected else None,
        per_target=tuple(rows),
    )
