"""Realization runner: scene, visibility evolution and channel snapshots."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .channel import ChannelConfig, CirSnapshot, LinkPhases, PhaseTracker, assemble_cir
from .evolution import EvolutionConfig, step
from .registry import ParamTable, Vtd, builtin_table
from .scene import SceneConfig, SceneState, Track, Trajectory, advance_to, init_scene
from .streams import make_stream

__all__ = ["Scenario", "Realization", "run_realization", "run_ensemble", "sample_times", "Evolver", "vr_evolver"]

# Stream coordinates below the realization index.
STAGE_SCENE = 0
STAGE_EVOLUTION = 1
STAGE_LINK = 2

Evolver = Callable[[SceneState, np.random.Generator], tuple[SceneState, set, list]]


@dataclass(frozen=True)
class Scenario:
    vtd: Vtd
    tx: Track
    rx: Track
    table: ParamTable = field(default_factory=builtin_table)
    scene: SceneConfig = field(default_factory=SceneConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    include_ground: bool = True

    def __post_init__(self):
        object.__setattr__(self, "vtd", Vtd(self.vtd))
        # Scene draws the NLoS initial phases and virtual delays; keep them in
        # step with the channel settings.
        sc = replace(
            self.scene,
            initial_phase=self.channel.initial_phase,
            virtual_delay_mean=self.channel.virtual_delay_mean,
        )
        object.__setattr__(self, "scene", sc)

    @classmethod
    def straight(
        cls,
        vtd,
        distance: float,
        v_tx: float,
        v_rx: float,
        *,
        height: float = 1.5,
        **kwargs,
    ) -> "Scenario":
        """Tx at the origin and Rx ``distance`` metres ahead on +x, both driving +x."""
        tx = Track((0.0, 0.0, height), Trajectory.constant((v_tx, 0.0, 0.0)))
        rx = Track((distance, 0.0, height), Trajectory.constant((v_rx, 0.0, 0.0)))
        return cls(vtd, tx, rx, **kwargs)


@dataclass
class Realization:
    snapshots: list[CirSnapshot]
    visibility: list[tuple[float, int, str, int, int]]
    initial_scene: SceneState
    final_scene: SceneState


def sample_times(duration: float, interval: float, t0: float = 0.0) -> np.ndarray:
    n = int(round(duration / interval))
    return t0 + interval * np.arange(n)


def vr_evolver(scenario: Scenario, *, log: bool = True) -> Evolver:
    def evolve(scene: SceneState, stream: np.random.Generator):
        new, report = step(scene, scenario.table, scenario.evolution.eps, stream, scenario.evolution)
        rows = report.log_rows(new) if log else []
        return new, report.visible_ids(), rows

    return evolve


def run_realization(
    scenario: Scenario,
    seed: int,
    realization: int,
    times: Sequence[float],
    *,
    evolution_interval: float | None = None,
    evolver: Evolver | None = None,
    log_visibility: bool = True,
) -> Realization:
    """Simulate one realization at the requested snapshot times.

    Visibility is re-evaluated at the first snapshot and then whenever at
    least ``evolution_interval`` seconds have passed (every snapshot when
    it is ``None``).  Phases are accumulated at every snapshot.
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        raise ValueError("no snapshot times")
    if np.any(np.diff(times) <= 0):
        raise ValueError("snapshot times must be strictly increasing")
    scene_stream = make_stream(seed, realization, STAGE_SCENE)
    evo_stream = make_stream(seed, realization, STAGE_EVOLUTION)
    link_stream = make_stream(seed, realization, STAGE_LINK)

    cfg = scenario.channel
    if cfg.initial_phase is None:
        phases = LinkPhases(*link_stream.uniform(0.0, 2.0 * math.pi, size=2))
    else:
        phases = LinkPhases(cfg.initial_phase, cfg.initial_phase)

    scene = init_scene(
        scenario.table, scenario.vtd, scenario.tx, scenario.rx, scene_stream,
        config=scenario.scene, time=float(times[0]),
    )
    initial = scene
    evolve = evolver or vr_evolver(scenario, log=log_visibility)
    tracker = PhaseTracker()
    snapshots = []
    log: list = []
    visible: set = set()
    next_evolution = -math.inf
    for t in times:
        scene = advance_to(scene, float(t))
        if t >= next_evolution - 1e-12 * max(1.0, abs(t)):
            scene, visible, rows = evolve(scene, evo_stream)
            log.extend(rows)
            next_evolution = t + (evolution_interval or 0.0)
        snapshots.append(
            assemble_cir(
                scene, visible, cfg, scenario.table, scenario.vtd,
                tracker=tracker, link_phases=phases, include_ground=scenario.include_ground,
            )
        )
    return Realization(snapshots, log, initial, scene)


def run_ensemble(
    scenario: Scenario,
    seed: int,
    realizations: int,
    times: Sequence[float],
    *,
    workers: int = 1,
    evolution_interval: float | None = None,
    log_visibility: bool = True,
) -> list[Realization]:
    """Realizations ``0 .. realizations-1`` in order.

    Each realization draws only from its own streams, so the result does not
    depend on ``workers``.
    """
    if realizations < 1:
        raise ValueError("realizations must be >= 1")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    job = partial(
        run_realization, scenario, seed,
        times=np.asarray(times, dtype=float),
        evolution_interval=evolution_interval,
        log_visibility=log_visibility,
    )
    if workers == 1 or realizations == 1:
        return [job(r) for r in range(realizations)]
    with ProcessPoolExecutor(max_workers=min(workers, realizations)) as pool:
        return list(pool.map(job, range(realizations)))
