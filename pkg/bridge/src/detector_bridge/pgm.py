"""Minimal binary PGM (P5, maxval 255) reader, standard library only.

Images are returned as a flat row-major list of float intensities in [0, 1]
plus their dimensions; that is all the scoring code needs.
"""

from __future__ import annotations

_WHITESPACE = frozenset(b" \t\n\r\x0b\x0c")


class PgmError(ValueError):
    """Malformed PGM data: bad magic, unsupported maxval, or truncation."""


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


def parse_pgm(data: bytes) -> tuple[list[float], int, int]:
    """Decode P5 bytes -> (pixels, width, height), intensities byte/255."""
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
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise PgmError("missing whitespace after maxval")
    pos += 1
    need = width * height
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise PgmError(f"truncated pixel data: expected {need} bytes, found {len(payload)}")
    return [b / 255.0 for b in payload], width, height


def load_pgm(path) -> tuple[list[float], int, int]:
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())
