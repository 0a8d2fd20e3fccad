"""Command-line entry point: pick a scorer, pick a transport, serve."""

from __future__ import annotations

import argparse
import sys

from .matching import IOU_THRESHOLD
from .scorers import AdapterScorer, MockScorer, ScorerError, ToyMirrorScorer, load_adapter
from .server import serve_stdio, serve_tcp


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="detector-bridge",
        description="Serve the newline-JSON box-scoring protocol on stdio or TCP.",
    )
    parser.add_argument("--mode", choices=("mock", "toy", "adapter"), default="mock",
                        help="scoring backend (default: mock)")
    parser.add_argument("--template", metavar="PGM",
                        help="template image for --mode toy")
    parser.add_argument("--adapter", metavar="MODULE:CALLABLE",
                        help="detection callable for --mode adapter")
    parser.add_argument("--iou-threshold", type=float, default=IOU_THRESHOLD,
                        help="IoU needed to match a detection to a queried box "
                             f"in adapter mode (default: {IOU_THRESHOLD})")
    parser.add_argument("--listen", metavar="tcp://HOST:PORT",
                        help="serve on TCP instead of stdio")
    return parser


def _parse_listen(value: str) -> tuple[str, int]:
    if not value.startswith("tcp://"):
        raise ValueError(f"--listen must look like tcp://HOST:PORT, got {value!r}")
    hostport = value[len("tcp://"):]
    host, sep, port = hostport.rpartition(":")
    if not sep or not host:
        raise ValueError(f"--listen must look like tcp://HOST:PORT, got {value!r}")
    try:
        return host, int(port)
    except ValueError:
        raise ValueError(f"--listen port must be an integer, got {port!r}") from None


def _build_scorer(args):
    if args.mode == "toy":
        if not args.template:
            raise ValueError("--mode toy requires --template")
        return ToyMirrorScorer(args.template)
    if args.mode == "adapter":
        if not args.adapter:
            raise ValueError("--mode adapter requires --adapter MODULE:CALLABLE")
        return AdapterScorer(load_adapter(args.adapter), iou_threshold=args.iou_threshold)
    return MockScorer()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        scorer = _build_scorer(args)
        if args.listen:
            host, port = _parse_listen(args.listen)
            serve_tcp(host, port, scorer)
        else:
            serve_stdio(scorer)
    except (ValueError, ScorerError, ImportError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130
    return 0


if __name__ == "__main__":
    sys.exit(main())
