"""Cluster visibility and cluster spawning over time.

Each class gets an ellipsoidal visibility region with the transmitter and
receiver as foci.  Its major axis is the ``eps`` quantile of the class's
excess-path distribution scaled back to metres, so a freshly drawn path is
inside with probability ``eps``.  Per step, clusters outside the region stop
contributing; then a cluster count is drawn from the Logistic law and, if it
exceeds the visible count, the shortfall is spawned as new clusters.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass, field, replace

import numpy as np

from .registry import (
    Family,
    GammaParams,
    ParamTable,
    ProbabilityDomainError,
    RayleighParams,
    ScattererClass,
    inverse_cdf,
    sample,
)
from .scene import SceneState, TwinCluster, make_twins, scatterer_count

__all__ = [
    "VisibilityRegion",
    "VisibilityFactor",
    "EvolutionConfig",
    "StepReport",
    "major_axis_dynamic",
    "major_axis_static",
    "major_axis",
    "build_regions",
    "spawn_counts",
    "twin_visible",
    "step",
    "DEFAULT_EPSILON",
    "GRACE_SNAPSHOTS",
]

DEFAULT_EPSILON = 0.95
GRACE_SNAPSHOTS = 20


def _check_eps(eps: float) -> None:
    if not (0.0 < eps < 1.0):
        raise ProbabilityDomainError(f"visibility factor must lie in (0, 1), got {eps!r}")


def _check_distance(d_cen: float) -> None:
    if not d_cen > 0:
        raise ValueError("transceiver distance must be > 0")


def major_axis_dynamic(params: RayleighParams, eps: float, d_cen: float) -> float:
    """Closed form ``sqrt(-2 sigma^2 ln(1 - eps)) * d_cen + d_cen``."""
    _check_eps(eps)
    _check_distance(d_cen)
    ratio = math.sqrt(-2.0 * params.sigma**2 * math.log1p(-eps))
    return ratio * d_cen + d_cen


def major_axis_static(params: GammaParams, eps: float, d_cen: float) -> float:
    """Numeric root of ``GammaCDF((2a - d_cen) / d_cen) = eps``."""
    _check_eps(eps)
    _check_distance(d_cen)
    return _gamma_quantile(params, eps) * d_cen + d_cen


@lru_cache(maxsize=256)
def _gamma_quantile(params: GammaParams, eps: float) -> float:
    return float(inverse_cdf(params, eps))


def major_axis(params, eps: float, d_cen: float) -> float:
    if isinstance(params, RayleighParams):
        return major_axis_dynamic(params, eps, d_cen)
    if isinstance(params, GammaParams):
        return major_axis_static(params, eps, d_cen)
    raise TypeError(f"no visibility region for {type(params).__name__}")


@dataclass(frozen=True)
class VisibilityRegion:
    """Ellipsoid with foci at Tx and Rx.

    The minor axis is recorded as the transceiver distance but containment
    only uses the focal-sum test against the major axis.
    """

    tx: np.ndarray
    rx: np.ndarray
    major_axis: float

    @property
    def focal_length(self) -> float:
        return float(np.linalg.norm(self.rx - self.tx))

    @property
    def minor_axis(self) -> float:
        return self.focal_length

    @property
    def max_excess_ratio(self) -> float:
        d = self.focal_length
        return (self.major_axis - d) / d

    def contains(self, point) -> bool | np.ndarray:
        p = np.asarray(point, dtype=float)
        s = np.linalg.norm(p - self.tx, axis=-1) + np.linalg.norm(p - self.rx, axis=-1)
        return s <= self.major_axis

    def contains_twin(self, tx_point, rx_point) -> bool:
        """Focal-sum test for a twin pair: ``|T - c_T| + |R - c_R| <= 2a``."""
        s = np.linalg.norm(np.asarray(tx_point) - self.tx) + np.linalg.norm(np.asarray(rx_point) - self.rx)
        return bool(s <= self.major_axis)


@dataclass(frozen=True)
class VisibilityFactor:
    eps_static: float = DEFAULT_EPSILON
    eps_dynamic: float = DEFAULT_EPSILON

    def __post_init__(self):
        _check_eps(self.eps_static)
        _check_eps(self.eps_dynamic)

    def of(self, cls: ScattererClass) -> float:
        return self.eps_static if cls is ScattererClass.STATIC else self.eps_dynamic


def build_regions(scene: SceneState, table: ParamTable, eps: VisibilityFactor) -> dict:
    tx, rx = scene.tx.position, scene.rx.position
    d_cen = float(np.linalg.norm(rx - tx))
    regions = {}
    for cls in ScattererClass:
        params = table[(scene.vtd, cls, Family.DISTANCE)]
        regions[cls] = VisibilityRegion(tx, rx, major_axis(params, eps.of(cls), d_cen))
    return regions


def twin_visible(region: VisibilityRegion, twin: TwinCluster) -> bool:
    return region.contains_twin(twin.tx_centroid, twin.rx_centroid)


def spawn_counts(drawn: int, visible: int) -> tuple[int, int]:
    """(clusters to spawn, clusters contributing) for one class."""
    if drawn > visible:
        return drawn - visible, drawn
    return 0, visible


@dataclass(frozen=True)
class EvolutionConfig:
    eps: VisibilityFactor = field(default_factory=VisibilityFactor)
    grace: int = GRACE_SNAPSHOTS
    max_spawn_attempts: int = 100


@dataclass
class StepReport:
    time: float
    visible: dict  # class -> list of pair ids
    spawned: dict  # class -> list of pair ids
    drawn: dict  # class -> N^L
    n_visible: dict  # class -> N^v before spawning
    removed: list
    regions: dict

    def visible_ids(self) -> set[int]:
        return {pid for ids in self.visible.values() for pid in ids}

    def log_rows(self, scene: SceneState) -> list[tuple[float, int, str, int, int]]:
        vis = self.visible_ids()
        new = {pid for ids in self.spawned.values() for pid in ids}
        return [
            (self.time, tw.pair_id, tw.cls.value, int(tw.pair_id in vis), int(tw.pair_id in new))
            for tw in scene.twins
        ]


def step(
    scene: SceneState,
    table: ParamTable,
    eps: VisibilityFactor | float,
    stream: np.random.Generator,
    config: EvolutionConfig | None = None,
) -> tuple[SceneState, StepReport]:
    """One visibility update followed by cluster spawning."""
    if not isinstance(eps, VisibilityFactor):
        eps = VisibilityFactor(float(eps), float(eps))
    config = config or EvolutionConfig(eps=eps)
    regions = build_regions(scene, table, eps)
    tx, rx = scene.tx, scene.rx
    d_cen = float(np.linalg.norm(rx.position - tx.position))

    kept: list[TwinCluster] = []
    removed = []
    visible = {cls: [] for cls in ScattererClass}
    for tw in scene.twins:
        if twin_visible(regions[tw.cls], tw):
            kept.append(replace(tw, invisible_count=0) if tw.invisible_count else tw)
            visible[tw.cls].append(tw.pair_id)
        else:
            count = tw.invisible_count + 1
            if count > config.grace:
                removed.append(tw.pair_id)
            else:
                kept.append(replace(tw, invisible_count=count))

    pair_id, path_id = scene.next_pair_id, scene.next_path_id
    spawned = {cls: [] for cls in ScattererClass}
    drawn = {}
    n_visible = {cls: len(ids) for cls, ids in visible.items()}
    for cls in (ScattererClass.STATIC, ScattererClass.DYNAMIC):
        k_ratio = float(sample(table[(scene.vtd, cls, Family.CLUSTER_NUMBER)], stream, 1, truncate_at_zero=True)[0])
        n_l = scatterer_count(k_ratio, d_cen)
        drawn[cls] = n_l
        n_new, _ = spawn_counts(n_l, n_visible[cls])
        if n_new == 0:
            continue
        s_ratio = float(
            sample(table[(scene.vtd, cls, Family.SCATTERER_NUMBER)], stream, 1, truncate_at_zero=True)[0]
        )
        per_cluster = max(1, int(round(scatterer_count(s_ratio, d_cen) / n_l)))
        region = regions[cls]
        for _ in range(config.max_spawn_attempts):
            new = make_twins(
                table, scene.vtd, cls, tx, rx, stream,
                n_paths=n_new * per_cluster, n_clusters=n_new, config=scene.config,
                first_pair_id=pair_id, first_path_id=path_id, time=scene.time,
                max_ratio=region.max_excess_ratio, spawned=True,
            )
            if all(twin_visible(region, tw) for tw in new):
                break
        else:
            raise RuntimeError("could not place spawned clusters inside the visibility region")
        kept.extend(new)
        spawned[cls] = [tw.pair_id for tw in new]
        visible[cls].extend(spawned[cls])
        pair_id += len(new)
        path_id += n_new * per_cluster

    new_scene = replace(scene, twins=tuple(kept), next_pair_id=pair_id, next_path_id=path_id)
    report = StepReport(scene.time, visible, spawned, drawn, n_visible, removed, regions)
    return new_scene, report
