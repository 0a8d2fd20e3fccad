"""IoU matching of raw detections to queried boxes, and toy-mode box checks."""

import json

import pytest

from detector_bridge import (
    AdapterScorer,
    ScorerError,
    ToyMirrorScorer,
    box_iou,
    handle_line,
    match_detections,
)


def test_box_iou_values():
    assert box_iou((0, 0, 10, 10), (0, 0, 10, 10)) == 1.0
    assert box_iou((0, 0, 10, 10), (20, 20, 5, 5)) == 0.0
    assert box_iou((0, 0, 10, 10), (5, 0, 10, 10)) == pytest.approx(50 / 150)


def test_exact_match_returns_confidence():
    assert match_detections([(3, 4, 10, 20, 0.9)], [(3, 4, 10, 20)]) == [0.9]


def test_no_overlap_returns_zero():
    assert match_detections([(100, 100, 5, 5, 0.99)], [(0, 0, 10, 10)]) == [0.0]


def test_max_rule_over_overlapping_detections():
    dets = [(0, 0, 10, 10, 0.6), (1, 0, 10, 10, 0.8)]
    assert match_detections(dets, [(0, 0, 10, 10)]) == [0.8]


def test_threshold_is_inclusive():
    # IoU exactly 0.5: two 10x10 boxes overlapping 10x... needs ratio 0.5
    # inter / (200 - inter) = 0.5 -> inter = 200/3, not integral; use custom
    # threshold instead to pin inclusivity
    dets = [(5, 0, 10, 10, 0.7)]
    iou = box_iou((5, 0, 10, 10), (0, 0, 10, 10))
    assert match_detections(dets, [(0, 0, 10, 10)], iou_threshold=iou) == [0.7]
    assert match_detections(dets, [(0, 0, 10, 10)], iou_threshold=iou + 1e-9) == [0.0]


def test_empty_inputs():
    assert match_detections([], [(0, 0, 4, 4)]) == [0.0]
    assert match_detections([(0, 0, 4, 4, 0.5)], []) == []


def test_adapter_scorer_end_to_end(tmp_path):
    img = tmp_path / "img.pgm"
    img.write_bytes(b"P5\n1 1\n255\n\x00")

    def detect(image_path):
        return [(0, 0, 10, 10, 0.85), (50, 50, 8, 8, 0.4)]

    scorer = AdapterScorer(detect)
    req = {"id": 5, "image_path": str(img), "boxes": [[0, 0, 10, 10], [0, 0, 1, 1]]}
    resp = handle_line(json.dumps(req).encode(), scorer)
    assert resp == {"id": 5, "objectness": [0.85, 0.0]}


def test_adapter_failure_becomes_error_response(tmp_path):
    img = tmp_path / "img.pgm"
    img.write_bytes(b"P5\n1 1\n255\n\x00")

    def detect(image_path):
        raise RuntimeError("weights not loaded")

    req = {"id": 6, "image_path": str(img), "boxes": [[0, 0, 1, 1]]}
    resp = handle_line(json.dumps(req).encode(), AdapterScorer(detect))
    assert resp["id"] == 6
    assert "weights not loaded" in resp["error"]


def test_toy_mode_rejects_box_outside_image(tmp_path):
    tmpl = tmp_path / "t.pgm"
    tmpl.write_bytes(b"P5\n2 2\n255\n\x00\x40\x80\xff")
    img = tmp_path / "img.pgm"
    img.write_bytes(b"P5\n4 4\n255\n" + bytes(range(16)))
    scorer = ToyMirrorScorer(str(tmpl))
    with pytest.raises(ScorerError, match="outside"):
        scorer.score_request(str(img), [(2, 2, 4, 4)])
    req = {"id": 8, "image_path": str(img), "boxes": [[2, 2, 4, 4]]}
    assert handle_line(json.dumps(req).encode(), scorer)["id"] == 8
