"""Command-line entry point.

Subcommands cover the full pipeline: ``synth`` writes a synthetic dataset,
``optimize`` searches for a patch against the configured oracle, ``eval``
scores a patch, ``render`` draws the standalone patch image, and ``preview``
composites a patch onto an image under transform draws.

Exit codes: 0 success, 1 usage or precondition error, 2 runtime failure.
Every command is deterministic given identical flags, config file, and seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_config, open_oracle
from .evaluation import evaluate
from .imaging import BBox, GrayImage, load_pgm, save_pgm
from .optimizer import optimize
from .oracle import BridgeError
from .patchgen import PatchTheta, compose, patch_side_for, rasterize_patch, validate_theta
from .scene import generate_dataset, load_dataset
from .streams import RngStream
from .transforms import sample_transform, apply_eot, tps_warp


class UsageError(Exception):
    """Bad flags or unmet preconditions; exits with status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _load_theta(path) -> PatchTheta:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"theta file not found: {p}")
    try:
        return PatchTheta.from_json(p.read_text(encoding="utf-8"))
    except (ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad theta file {p}: {exc}") from exc


def _load_cfg(path) -> ExperimentConfig:
    if path is not None and not Path(path).exists():
        raise UsageError(f"config file not found: {path}")
    try:
        return load_config(path)
    except (ValueError, json.JSONDecodeError) as exc:
        raise UsageError(f"bad config file {path}: {exc}") from exc


def _load_samples(dataset_dir):
    p = Path(dataset_dir)
    if not p.exists():
        raise UsageError(f"dataset directory not found: {p}")
    try:
        samples = load_dataset(p)
    except (FileNotFoundError, ValueError) as exc:
        raise UsageError(f"cannot load dataset {p}: {exc}") from exc
    if not samples:
        raise UsageError(f"dataset {p} has no usable samples")
    return samples


def cmd_synth(args) -> int:
    cfg = _load_cfg(args.config)
    scene_cfg = cfg.scene
    if args.count is not None:
        scene_cfg = dataclasses.replace(scene_cfg, count=args.count)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory {out} is not writable: {exc}") from exc
    samples = generate_dataset(RngStream(args.seed), scene_cfg, out)
    print(f"wrote {len(samples)} scenes to {out}")
    return 0


def cmd_optimize(args) -> int:
    cfg = _load_cfg(args.config)
    swarm_cfg = cfg.swarm
    if args.seed is not None:
        swarm_cfg = dataclasses.replace(swarm_cfg, seed=args.seed)
    samples = _load_samples(args.dataset)
    out = Path(args.out)
    history_path = Path(args.history) if args.history else out.parent / "history.json"
    oracle = open_oracle(cfg.oracle)
    try:
        result = optimize(
            samples, oracle, swarm_cfg, cfg.eot, cfg.patch, threads=args.threads,
            on_iteration=lambda it, best: print(
                f"iteration {it + 1}/{swarm_cfg.iters}: best fitness {best:.4f}",
                file=sys.stderr,
            ),
        )
    finally:
        oracle.close()
    out.write_text(result.best_theta.to_json() + "\n", encoding="utf-8")
    history_path.write_text(result.to_json() + "\n", encoding="utf-8")
    print(f"best fitness {result.best_fitness:.4f}; theta -> {out}, history -> {history_path}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args.config)
    theta = _load_theta(args.theta)
    samples = _load_samples(args.dataset)
    report_path = Path(args.report)
    csv_path = report_path.with_suffix(".csv")
    oracle = open_oracle(cfg.oracle)
    try:
        report = evaluate(
            theta, samples, oracle,
            eot=cfg.eot if args.eot else None,
            rng=RngStream(args.seed),
        )
    finally:
        oracle.close()
    report_path.write_text(report.to_json() + "\n", encoding="utf-8")
    csv_path.write_text(report.to_csv(), encoding="utf-8")
    asr_text = "undefined" if report.asr is None else f"{report.asr:.4f}"
    print(f"targets {report.n_clean_detected}, successes {report.n_successful}, "
          f"asr {asr_text}; reports -> {report_path}, {csv_path}")
    return 0


def cmd_render(args) -> int:
    theta = _load_theta(args.theta)
    if args.size < theta.dim:
        raise UsageError(f"--size {args.size} is smaller than the patch grid dim {theta.dim}")
    raster = rasterize_patch(theta, args.size)
    pixels = (1.0 - raster.coverage) * 1.0 + raster.coverage * theta.gray
    save_pgm(args.out, GrayImage(pixels))
    print(f"rendered {args.size}x{args.size} patch -> {args.out}")
    return 0


def _parse_box(text: str) -> BBox:
    parts = text.split(",")
    if len(parts) != 4:
        raise UsageError(f"--box must be X,Y,W,H, got {text!r}")
    try:
        x, y, w, h = (int(p) for p in parts)
        return BBox(x, y, w, h)
    except ValueError as exc:
        raise UsageError(f"--box must be four integers with positive size: {exc}") from exc


def cmd_preview(args) -> int:
    cfg = _load_cfg(args.config)
    theta = _load_theta(args.theta)
    image_path = Path(args.image)
    if not image_path.exists():
        raise UsageError(f"image not found: {image_path}")
    image = load_pgm(image_path)
    box = _parse_box(args.box)
    if not box.inside(image.width, image.height):
        raise UsageError(f"box {args.box} extends outside the {image.width}x{image.height} image")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    side = patch_side_for(theta.width_frac, box.h)
    raster = rasterize_patch(theta, side)
    written = []
    if args.draws == 0:
        composed = compose(image, box, theta, raster)
        path = out / "composed.pgm"
        save_pgm(path, composed)
        written.append(path)
    else:
        root = RngStream(args.seed)
        for d in range(args.draws):
            gen = root.child(d).generator()
            draw = sample_transform(gen, cfg.eot, box, side)
            warped = tps_warp(raster, draw)
            composed = compose(image, box, theta, warped)
            timg, _ = apply_eot(composed, box, draw, gen)
            path = out / f"draw_{d:02d}.pgm"
            save_pgm(path, timg)
            written.append(path)
    print(f"wrote {len(written)} preview image(s) to {out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="coldpatch",
                     description="Curved-block adversarial patches against thermal detectors")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic pedestrian dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.set_defaults(run=cmd_synth)

    p = sub.add_parser("optimize", help="search for an adversarial patch")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output theta JSON path")
    p.add_argument("--history", default=None, help="history JSON path (default: history.json next to --out)")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None, help="override swarm seed")
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(run=cmd_optimize)

    p = sub.add_parser("eval", help="evaluate a patch, write JSON + CSV reports")
    p.add_argument("--dataset", required=True)
    p.add_argument("--theta", required=True)
    p.add_argument("--report", required=True, help="report JSON path (CSV written alongside)")
    p.add_argument("--config", default=None)
    p.add_argument("--eot", action="store_true", help="use one transform draw per target")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(run=cmd_eval)

    p = sub.add_parser("render", help="render the standalone patch to a PGM")
    p.add_argument("--theta", required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(run=cmd_render)

    p = sub.add_parser("preview", help="composite a patch onto an image under transform draws")
    p.add_argument("--image", required=True)
    p.add_argument("--box", required=True, help="target box as X,Y,W,H")
    p.add_argument("--theta", required=True)
    p.add_argument("--draws", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(run=cmd_preview)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.run(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except BridgeError as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure of any other kind
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
