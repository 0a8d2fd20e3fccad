"""Reference external-detector server for the newline-JSON wire protocol.

A client sends one JSON object per line:

    {"id": 1, "image_path": "/tmp/scene.pgm", "boxes": [[x, y, w, h], ...]}

and receives one JSON object per line back:

    {"id": 1, "objectness": [0.91, ...]}        on success
    {"id": 1, "error": "..."}                   when this request failed
    {"id": -1, "error": "..."}                  when the line wasn't a request

Three scoring backends ship here: a dependency-free deterministic mock, a
mirror of the template-correlation toy detector (point it at the shared
template PGM), and an adapter that wraps any user-supplied detection callable
and reduces its output to per-box objectness by IoU matching.
"""

from .matching import box_iou, match_detections
from .scorers import (
    AdapterScorer,
    MockScorer,
    ScorerError,
    ToyMirrorScorer,
    load_adapter,
)
from .server import handle_line, serve_stdio, serve_stream, serve_tcp

__version__ = "0.1.0"

__all__ = [
    "AdapterScorer",
    "MockScorer",
    "ScorerError",
    "ToyMirrorScorer",
    "box_iou",
    "handle_line",
    "load_adapter",
    "match_detections",
    "serve_stdio",
    "serve_stream",
    "serve_tcp",
]
