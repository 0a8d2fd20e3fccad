"""Black-box swarm search over patch parameters.

The particle position is the concatenation [edge deltas | mask logits]: the
continuous channel is clamped back into the feasible band after every move,
and the binary visibility channel lives as logits in [0, 1] thresholded at
0.5 when a position is decoded into patch parameters. Grid size, patch
width, intensity, and the edge family are experiment constants, not search
dimensions.

Fitness of a position is one minus the mean detector objectness over every
(scene, box, transform draw) triple. Each particle evaluates its draws from
a stream derived from (seed, particle index), constant across iterations:
particles are compared on common random numbers, which makes fitness a
deterministic function of position and the global-best history monotone.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .patchgen import (PatchTheta, TAU, compose, n_edges, patch_side_for,
                       rasterize_patch, validate_theta)
from .scene import SceneSample
from .streams import NS_FITNESS, NS_STEP, NS_SWARM_INIT, RngStream
from .transforms import EotConfig, apply_eot, sample_transform, tps_warp

V_MAX = 0.5
MASK_THRESHOLD = 0.5


@dataclass(frozen=True)
class SwarmConfig:
    pop: int = 50
    iters: int = 10
    inertia: float = 0.9
    cognitive: float = 1.6
    social: float = 1.4
    r1: float = 0.5
    r2: float = 0.5
    seed: int = 0
    tau: float = TAU
    # The update factors are printed as constants in the reference setup;
    # standard swarm practice redraws them uniformly each step. Default
    # follows the constants, the flag restores the standard behavior.
    redraw_r: bool = False

    def __post_init__(self):
        if self.pop < 2:
            raise ValueError(f"pop must be >= 2, got {self.pop}")
        if self.iters < 1:
            raise ValueError(f"iters must be >= 1, got {self.iters}")
        if self.tau <= 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    pbest_position: np.ndarray
    pbest_fitness: float

    def __post_init__(self):
        if not (len(self.position) == len(self.velocity) == len(self.pbest_position)):
            raise ValueError("particle vectors must share one length")


@dataclass(frozen=True)
class PatchConstants:
    """The non-searched half of the patch parameters."""

    dim: int = 6
    width_frac: float = 0.25
    gray: float = 0.0
    boundary_kind: str = "bezier"

    @property
    def n_deltas(self) -> int:
        return n_edges(self.dim)

    @property
    def n_logits(self) -> int:
        return self.dim * self.dim


@dataclass(frozen=True)
class FitnessReport:
    mean_objectness: float
    fitness: float
    per_sample: tuple[float, ...]


@dataclass(frozen=True)
class OptimizeResult:
    best_theta: PatchTheta
    best_fitness: float
    history: tuple[float, ...]
    init_fitness_mean: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "best_fitness": self.best_fitness,
                "init_fitness_mean": self.init_fitness_mean,
                "history": list(self.history),
                "theta": json.loads(self.best_theta.to_json()),
            },
            indent=2,
        )


def decode(position: np.ndarray, consts: PatchConstants) -> PatchTheta:
    """Position vector -> feasible patch parameters. Delta coordinates are
    projected into [-tau, tau]; logits become visibility bits at the
    inclusive 0.5 threshold."""
    position = np.asarray(position, dtype=np.float64)
    nd, nl = consts.n_deltas, consts.n_logits
    if position.shape != (nd + nl,):
        raise ValueError(f"position must have length {nd + nl}, got {position.shape}")
    deltas = np.clip(position[:nd], -TAU, TAU)
    mask = (position[nd:] >= MASK_THRESHOLD).astype(np.int64)
    return PatchTheta(
        dim=consts.dim,
        width_frac=consts.width_frac,
        gray=consts.gray,
        boundary_kind=consts.boundary_kind,
        deltas=deltas,
        mask=mask,
    )


def fitness(theta: PatchTheta, dataset: list[SceneSample], oracle,
            eot: EotConfig, rng: RngStream) -> FitnessReport:
    """Robust-expectation fitness: mean objectness of the patched target
    over every (sample, box, draw) triple, under TPS-warped patches and
    EOT-transformed scenes. Higher fitness = lower detector confidence.

    Detector transport failures propagate to the caller (they carry their
    own retriable flag); nothing here is retried silently.
    """
    if not dataset:
        raise ValueError("fitness needs a non-empty dataset")
    raster_cache: dict[int, object] = {}
    all_scores: list[float] = []
    per_sample: list[float] = []
    for si, sample in enumerate(dataset):
        sample_scores: list[float] = []
        for bi, box in enumerate(sample.boxes):
            side = patch_side_for(theta.width_frac, box.h)
            if side not in raster_cache:
                raster_cache[side] = rasterize_patch(theta, side)
            raster = raster_cache[side]
            for di in range(eot.draws_per_eval):
                gen = rng.child(si, bi, di).generator()
                draw = sample_transform(gen, eot, box, side)
                warped = tps_warp(raster, draw)
                attacked = compose(sample.image, box, theta, warped)
                timg, tbox = apply_eot(attacked, box, draw, gen)
                score = oracle.score(timg, [tbox])[0]
                sample_scores.append(score)
        per_sample.append(float(np.mean(sample_scores)))
        all_scores.extend(sample_scores)
    mean_obj = float(np.mean(all_scores))
    return FitnessReport(mean_objectness=mean_obj, fitness=1.0 - mean_obj,
                         per_sample=tuple(per_sample))


def velocity_update(velocity: np.ndarray, position: np.ndarray, pbest: np.ndarray,
                    gbest: np.ndarray, cfg: SwarmConfig, r1=None, r2=None) -> np.ndarray:
    """Raw (unclamped) velocity update: inertia plus cognitive pull toward
    the particle's own best plus social pull toward the global best."""
    if r1 is None:
        r1 = cfg.r1
    if r2 is None:
        r2 = cfg.r2
    return (cfg.inertia * velocity
            + cfg.cognitive * r1 * (pbest - position)
            + cfg.social * r2 * (gbest - position))


def apply_move(position: np.ndarray, raw_velocity: np.ndarray, n_deltas: int,
               tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Move by the raw velocity, then repair: delta coordinates projected
    into the feasible band, logits clamped to [0, 1], stored velocity
    clamped to +-V_MAX. The move itself uses the unclamped velocity."""
    moved = position + raw_velocity
    new_pos = moved.copy()
    new_pos[..., :n_deltas] = np.clip(moved[..., :n_deltas], -tau, tau)
    new_pos[..., n_deltas:] = np.clip(moved[..., n_deltas:], 0.0, 1.0)
    return new_pos, np.clip(raw_velocity, -V_MAX, V_MAX)


def _step_factors(cfg: SwarmConfig, shape, step_gen) -> tuple:
    if cfg.redraw_r:
        if step_gen is None:
            raise ValueError("redraw_r requires a per-step generator")
        return step_gen.uniform(0.0, 1.0, shape), step_gen.uniform(0.0, 1.0, shape)
    return cfg.r1, cfg.r2


def pso_step(particles: list[Particle], gbest_position: np.ndarray, cfg: SwarmConfig,
             n_deltas: int, step_gen=None) -> list[Particle]:
    """One swarm move over explicit particles (array-kernel wrapper)."""
    pos = np.stack([p.position for p in particles])
    vel = np.stack([p.velocity for p in particles])
    pb = np.stack([p.pbest_position for p in particles])
    r1, r2 = _step_factors(cfg, pos.shape, step_gen)
    raw = velocity_update(vel, pos, pb, np.asarray(gbest_position), cfg, r1, r2)
    new_pos, new_vel = apply_move(pos, raw, n_deltas, cfg.tau)
    return [
        Particle(position=new_pos[i], velocity=new_vel[i],
                 pbest_position=p.pbest_position, pbest_fitness=p.pbest_fitness)
        for i, p in enumerate(particles)
    ]


def init_positions(cfg: SwarmConfig, n_deltas: int, n_logits: int) -> np.ndarray:
    """Uniform start: deltas over the feasible band, logits over [0, 1]."""
    gen = RngStream(cfg.seed).child(NS_SWARM_INIT).generator()
    pos = np.empty((cfg.pop, n_deltas + n_logits))
    pos[:, :n_deltas] = gen.uniform(-cfg.tau, cfg.tau, (cfg.pop, n_deltas))
    pos[:, n_deltas:] = gen.uniform(0.0, 1.0, (cfg.pop, n_logits))
    return pos


def run_swarm(fitness_fn, cfg: SwarmConfig, n_deltas: int, n_logits: int,
              threads: int = 1, on_iteration=None):
    """Generic swarm driver. ``fitness_fn(position, particle_index)`` must be
    a deterministic function of its arguments; evaluations may then run on
    any number of threads without changing the result.

    Returns (gbest_position, gbest_fitness, history, init_mean).
    """
    positions = init_positions(cfg, n_deltas, n_logits)
    velocities = np.zeros_like(positions)
    pbest_pos = positions.copy()
    pbest_fit = np.full(cfg.pop, -np.inf)
    gbest_pos = positions[0].copy()
    gbest_fit = -np.inf
    history: list[float] = []
    init_mean = 0.0
    step_root = RngStream(cfg.seed).child(NS_STEP)

    def eval_all(pos_matrix: np.ndarray) -> np.ndarray:
        if threads <= 1:
            return np.array([fitness_fn(pos_matrix[i], i) for i in range(cfg.pop)])
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(fitness_fn, pos_matrix[i], i) for i in range(cfg.pop)]
            return np.array([f.result() for f in futures])

    for it in range(cfg.iters):
        fits = eval_all(positions)
        if it == 0:
            init_mean = float(fits.mean())
        improved = fits > pbest_fit
        pbest_fit = np.where(improved, fits, pbest_fit)
        pbest_pos[improved] = positions[improved]
        best_i = int(np.argmax(fits))
        if fits[best_i] > gbest_fit:
            gbest_fit = float(fits[best_i])
            gbest_pos = positions[best_i].copy()
        history.append(gbest_fit)
        if on_iteration is not None:
            on_iteration(it, gbest_fit)
        r1, r2 = _step_factors(cfg, positions.shape, step_root.child(it).generator())
        raw = velocity_update(velocities, positions, pbest_pos, gbest_pos, cfg, r1, r2)
        positions, velocities = apply_move(positions, raw, n_deltas, cfg.tau)
    return gbest_pos, gbest_fit, history, init_mean


def optimize(dataset: list[SceneSample], oracle, swarm_cfg: SwarmConfig,
             eot: EotConfig, consts: PatchConstants, threads: int = 1,
             on_iteration=None) -> OptimizeResult:
    """Full black-box search: swarm over [deltas | logits], fitness from the
    robust expectation over the dataset, decoded global best returned."""
    if not dataset:
        raise ValueError("optimize needs a non-empty dataset")
    root = RngStream(swarm_cfg.seed)

    def fitness_fn(position: np.ndarray, particle_idx: int) -> float:
        theta = decode(position, consts)
        report = fitness(theta, dataset, oracle, eot, root.child(NS_FITNESS, particle_idx))
        return report.fitness

    gbest_pos, gbest_fit, history, init_mean = run_swarm(
        fitness_fn, swarm_cfg, consts.n_deltas, consts.n_logits,
        threads=threads, on_iteration=on_iteration,
    )
    best_theta = decode(gbest_pos, consts)
    assert not validate_theta(best_theta)
    return OptimizeResult(
        best_theta=best_theta,
        best_fitness=gbest_fit,
        history=tuple(history),
        init_fitness_mean=init_mean,
    )
