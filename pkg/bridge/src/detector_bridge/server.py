"""Wire-protocol server loop: newline-delimited JSON, strictly sequential.

One connection is served at a time and requests are answered in arrival
order; scorers hold no per-request state, so the server is stateless between
requests. A line that cannot be parsed as a request is answered with
{"id": -1, "error": ...}; a parseable request that fails (missing image,
bad box) is answered with an error echoing its id.
"""

from __future__ import annotations

import json
import socket
import sys

from .scorers import ScorerError


class _BadLine(Exception):
    """Line is not a well-formed request; carries the id to blame (-1 when
    the id itself could not be recovered)."""

    def __init__(self, rid: int, message: str):
        super().__init__(message)
        self.rid = rid


def _parse_request(line: bytes) -> tuple[int, str, list[tuple[int, int, int, int]]]:
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise _BadLine(-1, f"malformed JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise _BadLine(-1, f"request must be a JSON object, got {type(obj).__name__}")
    rid = obj.get("id")
    if isinstance(rid, bool) or not isinstance(rid, int):
        raise _BadLine(-1, f"request id must be an integer, got {rid!r}")
    path = obj.get("image_path")
    if not isinstance(path, str) or not path:
        raise _BadLine(rid, "image_path must be a non-empty string")
    raw_boxes = obj.get("boxes")
    if not isinstance(raw_boxes, list):
        raise _BadLine(rid, "boxes must be a list")
    boxes = []
    for i, raw in enumerate(raw_boxes):
        if (not isinstance(raw, list) or len(raw) != 4
                or any(isinstance(v, bool) or not isinstance(v, int) for v in raw)):
            raise _BadLine(rid, f"boxes[{i}] must be [x, y, w, h] integers, got {raw!r}")
        x, y, w, h = raw
        if w < 1 or h < 1:
            raise _BadLine(rid, f"boxes[{i}] needs positive extent, got {raw!r}")
        boxes.append((x, y, w, h))
    return rid, path, boxes


def handle_line(line: bytes, scorer) -> dict:
    """One request line -> one response object (never raises for request
    problems; those become error responses)."""
    try:
        rid, path, boxes = _parse_request(line)
    except _BadLine as exc:
        return {"id": exc.rid, "error": str(exc)}
    try:
        scores = scorer.score_request(path, boxes)
    except ScorerError as exc:
        return {"id": rid, "error": str(exc)}
    return {"id": rid, "objectness": [float(s) for s in scores]}


def serve_stream(reader, writer, scorer) -> int:
    """Answer requests from a binary reader on a binary writer until EOF.
    Returns the number of lines handled."""
    handled = 0
    while True:
        line = reader.readline()
        if not line:
            return handled
        if line.strip() == b"":
            continue
        response = handle_line(line, scorer)
        writer.write((json.dumps(response, separators=(",", ":")) + "\n").encode("utf-8"))
        writer.flush()
        handled += 1


def serve_stdio(scorer) -> int:
    return serve_stream(sys.stdin.buffer, sys.stdout.buffer, scorer)


def serve_tcp(host: str, port: int, scorer, max_connections: int | None = None,
              ready_callback=None) -> None:
    """Accept connections one at a time and serve each until its EOF.
    ``ready_callback`` (if given) receives the bound (host, port) once
    listening; tests use it to learn an ephemeral port."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as srv:
        srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        srv.bind((host, port))
        srv.listen(1)
        if ready_callback is not None:
            ready_callback(srv.getsockname()[:2])
        served = 0
        while max_connections is None or served < max_connections:
            conn, _ = srv.accept()
            with conn:
                reader = conn.makefile("rb")
                writer = conn.makefile("wb")
                try:
                    serve_stream(reader, writer, scorer)
                except (OSError, ValueError):
                    pass  # client vanished mid-request; move on
                finally:
                    reader.close()
                    writer.close()
            served += 1
