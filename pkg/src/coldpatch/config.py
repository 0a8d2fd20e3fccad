"""Experiment configuration: one JSON file drives every command.

Schema (all sections and fields optional, defaults shown in the README):

    {
      "patch":  {"dim", "width_frac", "gray", "boundary_kind"},
      "swarm":  {"pop", "iters", "inertia", "cognitive", "social",
                  "r1", "r2", "seed", "tau", "redraw_r"},
      "eot":    {"scale_range", "translate_frac", "noise_sigma_max",
                  "tps_grid", "tps_offset_frac", "draws_per_eval"},
      "scene":  {"image_w", "image_h", "bg_level", "bg_noise", "body_level",
                  "body_gradient", "height_range", "count"},
      "oracle": {"kind": "toy" | "bridge", "endpoint": ...}
    }

Unknown sections or fields are rejected: a typo should fail loudly, not
silently fall back to a default. Command-line flags override file values,
which override defaults.
"""

from __future__ import annotations

import dataclasses
import json
import shlex
from dataclasses import dataclass
from pathlib import Path

from .optimizer import PatchConstants, SwarmConfig
from .oracle import BridgeOracle, ToyOracle
from .scene import SceneConfig
from .transforms import EotConfig

_SECTIONS = ("patch", "swarm", "eot", "scene", "oracle")


@dataclass(frozen=True)
class OracleConfig:
    kind: str = "toy"
    endpoint: object = None  # argv list, "tcp://host:port", or command string

    def __post_init__(self):
        if self.kind not in ("toy", "bridge"):
            raise ValueError(f"oracle kind must be 'toy' or 'bridge', got {self.kind!r}")
        if self.kind == "bridge" and not self.endpoint:
            raise ValueError("bridge oracle needs an endpoint")
        if self.kind == "toy" and self.endpoint:
            raise ValueError("toy oracle takes no endpoint")


@dataclass(frozen=True)
class ExperimentConfig:
    patch: PatchConstants = PatchConstants()
    swarm: SwarmConfig = SwarmConfig()
    eot: EotConfig = EotConfig()
    scene: SceneConfig = SceneConfig()
    oracle: OracleConfig = OracleConfig()


def _build_section(cls, data: dict, name: str):
    if not isinstance(data, dict):
        raise ValueError(f"config section {name!r} must be a JSON object, got {data!r}")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown fields in config section {name!r}: {sorted(unknown)}")
    kwargs = dict(data)
    for key in ("scale_range", "height_range"):
        if key in kwargs and isinstance(kwargs[key], list):
            kwargs[key] = tuple(kwargs[key])
    return cls(**kwargs)


def parse_config(text: str) -> ExperimentConfig:
    doc = json.loads(text)
    if not isinstance(doc, dict):
        raise ValueError("experiment config must be a JSON object")
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    return ExperimentConfig(
        patch=_build_section(PatchConstants, doc.get("patch", {}), "patch"),
        swarm=_build_section(SwarmConfig, doc.get("swarm", {}), "swarm"),
        eot=_build_section(EotConfig, doc.get("eot", {}), "eot"),
        scene=_build_section(SceneConfig, doc.get("scene", {}), "scene"),
        oracle=_build_section(OracleConfig, doc.get("oracle", {}), "oracle"),
    )


def load_config(path=None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return parse_config(Path(path).read_text(encoding="utf-8"))


def open_oracle(cfg: OracleConfig):
    """Instantiate the configured oracle. Callers own close()."""
    if cfg.kind == "toy":
        return ToyOracle()
    ep = cfg.endpoint
    if isinstance(ep, str) and ep.startswith("tcp://"):
        hostport = ep[len("tcp://"):]
        host, _, port = hostport.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"bad tcp endpoint {ep!r}, expected tcp://host:port")
        return BridgeOracle.connect(host, int(port))
    if isinstance(ep, str):
        argv = shlex.split(ep)
    elif isinstance(ep, list) and all(isinstance(a, str) for a in ep):
        argv = ep
    else:
        raise ValueError(f"bridge endpoint must be an argv list or command string, got {ep!r}")
    if not argv:
        raise ValueError("bridge endpoint command is empty")
    return BridgeOracle.spawn(argv)
