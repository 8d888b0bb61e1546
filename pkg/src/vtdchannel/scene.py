"""Geometric world of the channel model.

A scene holds the transmitter and receiver, each following a piecewise
constant-velocity trajectory, and a set of twin clusters.  Every twin
cluster pairs a Tx-side cluster with an Rx-side cluster; member ``n`` of the
Tx side and member ``n`` of the Rx side form one propagation path
``T -> S_T ... S_R -> R`` whose two geometric legs add up to ``(D + 1) *
D_cen`` for the drawn excess-path ratio ``D``.

Dynamic clusters translate with their own velocity; static clusters never
move.  All draws come from an explicit generator, so a scene is a pure
function of its inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from enum import Enum

import numpy as np

from .registry import (
    Family,
    GammaParams,
    ParamTable,
    RayleighParams,
    ScattererClass,
    Vtd,
    sample,
)

__all__ = [
    "Side",
    "Trajectory",
    "Track",
    "TransceiverState",
    "TwinCluster",
    "Cluster",
    "Scatterer",
    "SceneConfig",
    "SceneState",
    "init_scene",
    "place_scatterer",
    "draw_paths",
    "make_twins",
    "kmeans",
    "advance",
    "advance_to",
    "scatterer_count",
]

VIRTUAL_DELAY_MEAN = 80e-9


class Side(str, Enum):
    TX = "tx"
    RX = "rx"


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-constant velocity: ``segments[i] = (start_time, velocity)``.

    The first segment also applies before its start time.
    """

    segments: tuple

    def __post_init__(self):
        segs = tuple((float(t), tuple(float(v) for v in vel)) for t, vel in self.segments)
        if not segs:
            raise ValueError("a trajectory needs at least one segment")
        starts = [t for t, _ in segs]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("segment start times must be strictly increasing")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def constant(cls, velocity) -> "Trajectory":
        return cls(((0.0, tuple(velocity)),))

    def velocity_at(self, t: float) -> np.ndarray:
        vel = self.segments[0][1]
        for start, v in self.segments:
            if t >= start:
                vel = v
            else:
                break
        return np.asarray(vel, dtype=float)

    def displacement(self, t0: float, t1: float) -> np.ndarray:
        """Exact integral of the velocity over ``[t0, t1]``."""
        if t1 < t0:
            return -self.displacement(t1, t0)
        out = np.zeros(3)
        starts = [-math.inf] + [s for s, _ in self.segments[1:]]
        ends = starts[1:] + [math.inf]
        for (_, vel), start, end in zip(self.segments, starts, ends):
            lo = max(t0, start)
            hi = min(t1, end)
            if hi > lo:
                out += np.asarray(vel) * (hi - lo)
        return out


@dataclass(frozen=True)
class TransceiverState:
    position: np.ndarray
    velocity: np.ndarray


@dataclass(frozen=True)
class Track:
    """A terminal: position at ``origin_time`` plus a trajectory."""

    origin: tuple
    trajectory: Trajectory
    origin_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))

    def state(self, t: float) -> TransceiverState:
        pos = np.asarray(self.origin) + self.trajectory.displacement(self.origin_time, t)
        return TransceiverState(pos, self.trajectory.velocity_at(t))


@dataclass(frozen=True)
class TwinCluster:
    """A Tx-side/Rx-side cluster pair and its member paths.

    ``shadow_db`` and ``phase0`` are drawn once per path at birth so the
    path keeps its identity across snapshots.
    """

    pair_id: int
    cls: ScattererClass
    tx_points: np.ndarray
    rx_points: np.ndarray
    path_ids: np.ndarray
    shadow_db: np.ndarray
    phase0: np.ndarray
    tx_velocity: np.ndarray
    rx_velocity: np.ndarray
    virtual_delay: float
    born: float = 0.0
    spawned: bool = False
    invisible_count: int = 0

    @property
    def size(self) -> int:
        return len(self.path_ids)

    @cached_property
    def tx_centroid(self) -> np.ndarray:
        return self.tx_points.mean(axis=0)

    @cached_property
    def rx_centroid(self) -> np.ndarray:
        return self.rx_points.mean(axis=0)

    @property
    def tx_cluster_id(self) -> int:
        return 2 * self.pair_id

    @property
    def rx_cluster_id(self) -> int:
        return 2 * self.pair_id + 1


@dataclass(frozen=True)
class Cluster:
    """Per-side view of a twin cluster."""

    id: int
    cls: ScattererClass
    side: Side
    members: np.ndarray
    centroid: np.ndarray
    velocity: np.ndarray
    twin: int
    virtual_delay: float


@dataclass(frozen=True)
class Scatterer:
    id: int
    side: Side
    cls: ScattererClass
    position: np.ndarray
    velocity: np.ndarray
    cluster_id: int


@dataclass(frozen=True)
class SceneConfig:
    """Scenario knobs that the parameter table does not cover."""

    cluster_speed_tx: float = 8.0
    cluster_speed_rx: float = 8.0
    speed_spread: tuple[float, float] = (0.8, 1.2)
    rho_range: tuple[float, float] = (0.3, 0.7)
    virtual_delay_mean: float = VIRTUAL_DELAY_MEAN
    # None draws a uniform initial phase per path; a float fixes it.
    initial_phase: float | None = None


@dataclass(frozen=True)
class SceneState:
    time: float
    vtd: Vtd
    tx_track: Track
    rx_track: Track
    twins: tuple
    config: SceneConfig = field(default_factory=SceneConfig)
    next_pair_id: int = 0
    next_path_id: int = 0
    generation: tuple = ()

    @property
    def tx(self) -> TransceiverState:
        return self.tx_track.state(self.time)

    @property
    def rx(self) -> TransceiverState:
        return self.rx_track.state(self.time)

    @property
    def d_cen_vector(self) -> np.ndarray:
        return self.rx.position - self.tx.position

    @property
    def d_cen(self) -> float:
        return float(np.linalg.norm(self.d_cen_vector))

    def twins_of(self, cls: ScattererClass) -> list[TwinCluster]:
        return [tw for tw in self.twins if tw.cls is cls]

    def clusters(self) -> list[Cluster]:
        out = []
        for tw in self.twins:
            out.append(
                Cluster(tw.tx_cluster_id, tw.cls, Side.TX, tw.path_ids, tw.tx_centroid,
                        tw.tx_velocity, tw.rx_cluster_id, tw.virtual_delay)
            )
            out.append(
                Cluster(tw.rx_cluster_id, tw.cls, Side.RX, tw.path_ids, tw.rx_centroid,
                        tw.rx_velocity, tw.tx_cluster_id, tw.virtual_delay)
            )
        return out

    def scatterers(self) -> list[Scatterer]:
        out = []
        for tw in self.twins:
            for n, pid in enumerate(tw.path_ids):
                out.append(Scatterer(int(pid), Side.TX, tw.cls, tw.tx_points[n], tw.tx_velocity, tw.tx_cluster_id))
                out.append(Scatterer(int(pid), Side.RX, tw.cls, tw.rx_points[n], tw.rx_velocity, tw.rx_cluster_id))
        return out


def scatterer_count(ratio: float, d_cen: float) -> int:
    """Count from a per-metre ratio: ``round(ratio * d_cen)`` but at least one."""
    return max(1, int(round(ratio * d_cen)))


# --------------------------------------------------------------------------
# K-means
# --------------------------------------------------------------------------


def _sq_dist(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def kmeans(points, k: int, stream: np.random.Generator, *, max_iter: int = 300) -> np.ndarray:
    """Lloyd's algorithm from distance-weighted (k-means++) seeds.

    Iterates until the assignment stops changing.  An emptied cluster is
    re-seeded at the point farthest from its current centre, so every label
    in ``0..k-1`` is used.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = len(pts)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points ({n})")
    if k == 1:
        return np.zeros(n, dtype=np.int64)

    centers = np.empty((k, pts.shape[1]))
    centers[0] = pts[stream.integers(n)]
    d2 = _sq_dist(pts, centers[:1])[:, 0]
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(d2), stream.random() * total, side="right"))
            idx = min(idx, n - 1)
        else:
            idx = int(stream.integers(n))
        centers[j] = pts[idx]
        d2 = np.minimum(d2, _sq_dist(pts, centers[j : j + 1])[:, 0])

    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        new = np.argmin(_sq_dist(pts, centers), axis=1)
        counts = np.bincount(new, minlength=k)
        for j in np.flatnonzero(counts == 0):
            # Take the worst-fitted point from a cluster that can spare one.
            spread = ((pts - centers[new]) ** 2).sum(axis=1)
            spread[counts[new] < 2] = -1.0
            far = int(np.argmax(spread))
            counts[new[far]] -= 1
            counts[j] += 1
            new[far] = j
        if np.array_equal(new, labels):
            break
        labels = new
        for j in range(k):
            centers[j] = pts[labels == j].mean(axis=0)
    return labels


# --------------------------------------------------------------------------
# Path geometry
# --------------------------------------------------------------------------


def _direction(azimuth, elevation) -> np.ndarray:
    ce = np.cos(elevation)
    return np.stack([ce * np.cos(azimuth), ce * np.sin(azimuth), np.sin(elevation)], axis=-1)


@dataclass(frozen=True)
class PathDraws:
    """Per-path draws: excess ratio and the four angles in radians."""

    excess: np.ndarray
    aaod: np.ndarray
    aaoa: np.ndarray
    eaod: np.ndarray
    eaoa: np.ndarray

    def __len__(self) -> int:
        return len(self.excess)

    def tx_points(self, tx, d_cen: float, rho) -> np.ndarray:
        r = np.asarray(rho) * (self.excess + 1.0) * d_cen
        return np.asarray(tx) + r[:, None] * _direction(self.aaod, self.eaod)

    def rx_points(self, rx, d_cen: float, rho) -> np.ndarray:
        r = (1.0 - np.asarray(rho)) * (self.excess + 1.0) * d_cen
        return np.asarray(rx) + r[:, None] * _direction(self.aaoa, self.eaoa)


def _sample_excess(params, stream, n: int, max_ratio: float | None) -> np.ndarray:
    if max_ratio is None:
        return sample(params, stream, n)
    # Inverse transform restricted to [0, max_ratio]; equivalent to redrawing
    # until the draw falls inside.
    top = float(params.cdf(max_ratio))
    u = stream.random(n) * top
    u = np.where(u <= 0.0, np.nextafter(0.0, 1.0), u)
    return np.minimum(params.ppf(u), max_ratio)


def draw_paths(
    table: ParamTable,
    vtd: Vtd,
    cls: ScattererClass,
    d_cen: float,
    stream: np.random.Generator,
    n: int,
    *,
    max_ratio: float | None = None,
) -> PathDraws:
    """Draw ``n`` excess ratios and angle sets; angles are ratio * ``d_cen``."""
    dist = table[(vtd, cls, Family.DISTANCE)]
    assert isinstance(dist, (GammaParams, RayleighParams))
    excess = _sample_excess(dist, stream, n, max_ratio)
    ang = {
        fam: sample(table[(vtd, cls, fam)], stream, n) * d_cen
        for fam in (Family.AAOD, Family.AAOA, Family.EAOD, Family.EAOA)
    }
    return PathDraws(excess, ang[Family.AAOD], ang[Family.AAOA], ang[Family.EAOD], ang[Family.EAOA])


def place_scatterer(
    table: ParamTable,
    vtd: Vtd,
    cls: ScattererClass,
    side: Side,
    tx: TransceiverState,
    rx: TransceiverState,
    stream: np.random.Generator,
    *,
    rho: float | None = None,
    rho_range: tuple[float, float] = (0.3, 0.7),
) -> np.ndarray:
    """Position of one freshly drawn scatterer on the requested side."""
    d_cen = float(np.linalg.norm(rx.position - tx.position))
    if not d_cen > 0:
        raise ValueError("transceiver distance must be > 0")
    draws = draw_paths(table, vtd, cls, d_cen, stream, 1)
    if rho is None:
        rho = stream.uniform(*rho_range)
    if Side(side) is Side.TX:
        return draws.tx_points(tx.position, d_cen, [rho])[0]
    return draws.rx_points(rx.position, d_cen, [rho])[0]


def _cluster_velocity(stream, mean_speed: float, spread) -> np.ndarray:
    speed = mean_speed * stream.uniform(*spread)
    heading = stream.uniform(0.0, 2.0 * math.pi)
    return np.array([speed * math.cos(heading), speed * math.sin(heading), 0.0])


def make_twins(
    table: ParamTable,
    vtd: Vtd,
    cls: ScattererClass,
    tx: TransceiverState,
    rx: TransceiverState,
    stream: np.random.Generator,
    *,
    n_paths: int,
    n_clusters: int,
    config: SceneConfig,
    first_pair_id: int,
    first_path_id: int,
    time: float = 0.0,
    max_ratio: float | None = None,
    spawned: bool = False,
) -> list[TwinCluster]:
    """Draw ``n_paths`` paths and group them into ``n_clusters`` twin clusters.

    Paths are grouped by K-means on provisional Tx-side positions (even
    split of the path length).  Each cluster then draws its own split factor
    and the final positions follow.  Cluster order is a random permutation,
    which realises the random Tx/Rx matching.
    """
    d_cen = float(np.linalg.norm(rx.position - tx.position))
    k = min(n_clusters, n_paths)
    draws = draw_paths(table, vtd, cls, d_cen, stream, n_paths, max_ratio=max_ratio)
    provisional = draws.tx_points(tx.position, d_cen, np.full(n_paths, 0.5))
    labels = kmeans(provisional, k, stream)
    order = stream.permutation(k)
    rho = stream.uniform(*config.rho_range, size=k)
    tx_all = draws.tx_points(tx.position, d_cen, rho[labels])
    rx_all = draws.rx_points(rx.position, d_cen, rho[labels])
    pd = table[(vtd, cls, Family.POWER_DELAY)]
    shadow = pd.sample_shadowing(stream, n_paths)
    if config.initial_phase is None:
        phase0 = stream.uniform(0.0, 2.0 * math.pi, size=n_paths)
    else:
        phase0 = np.full(n_paths, float(config.initial_phase))
    delays = stream.exponential(config.virtual_delay_mean, size=k)
    path_ids = first_path_id + np.arange(n_paths)

    twins = []
    for slot, j in enumerate(order):
        members = np.flatnonzero(labels == j)
        if cls is ScattererClass.DYNAMIC:
            v_tx = _cluster_velocity(stream, config.cluster_speed_tx, config.speed_spread)
            v_rx = _cluster_velocity(stream, config.cluster_speed_rx, config.speed_spread)
        else:
            v_tx = np.zeros(3)
            v_rx = np.zeros(3)
        twins.append(
            TwinCluster(
                pair_id=first_pair_id + slot,
                cls=cls,
                tx_points=tx_all[members],
                rx_points=rx_all[members],
                path_ids=path_ids[members],
                shadow_db=shadow[members],
                phase0=phase0[members],
                tx_velocity=v_tx,
                rx_velocity=v_rx,
                virtual_delay=float(delays[slot]),
                born=time,
                spawned=spawned,
            )
        )
    return twins


@dataclass(frozen=True)
class GenerationRecord:
    cls: ScattererClass
    scatterer_ratio: float
    scatterers: int
    cluster_ratio: float
    clusters: int


def init_scene(
    table: ParamTable,
    vtd: Vtd,
    tx: Track,
    rx: Track,
    stream: np.random.Generator,
    *,
    config: SceneConfig | None = None,
    time: float = 0.0,
) -> SceneState:
    """Initial scene: counts, positions, clusters and twin pairing."""
    config = config or SceneConfig()
    vtd = Vtd(vtd)
    tx_state, rx_state = tx.state(time), rx.state(time)
    d_cen = float(np.linalg.norm(rx_state.position - tx_state.position))
    if not d_cen > 0:
        raise ValueError("transceiver distance must be > 0")
    twins: list[TwinCluster] = []
    records = []
    pair_id = path_id = 0
    for cls in (ScattererClass.STATIC, ScattererClass.DYNAMIC):
        n_ratio = float(sample(table[(vtd, cls, Family.SCATTERER_NUMBER)], stream, 1, truncate_at_zero=True)[0])
        k_ratio = float(sample(table[(vtd, cls, Family.CLUSTER_NUMBER)], stream, 1, truncate_at_zero=True)[0])
        n = scatterer_count(n_ratio, d_cen)
        k = min(scatterer_count(k_ratio, d_cen), n)
        new = make_twins(
            table, vtd, cls, tx_state, rx_state, stream,
            n_paths=n, n_clusters=k, config=config,
            first_pair_id=pair_id, first_path_id=path_id, time=time,
        )
        twins.extend(new)
        pair_id += len(new)
        path_id += n
        records.append(GenerationRecord(cls, n_ratio, n, k_ratio, k))
    return SceneState(
        time=time,
        vtd=vtd,
        tx_track=tx,
        rx_track=rx,
        twins=tuple(twins),
        config=config,
        next_pair_id=pair_id,
        next_path_id=path_id,
        generation=tuple(records),
    )


def _move(tw: TwinCluster, dt: float) -> TwinCluster:
    if tw.cls is ScattererClass.STATIC:
        return tw
    return replace(tw, tx_points=tw.tx_points + tw.tx_velocity * dt, rx_points=tw.rx_points + tw.rx_velocity * dt)


def advance(scene: SceneState, dt: float) -> SceneState:
    """Move the scene forward by ``dt`` seconds."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    return replace(scene, time=scene.time + dt, twins=tuple(_move(tw, dt) for tw in scene.twins))


def advance_to(scene: SceneState, t: float) -> SceneState:
    if t == scene.time:
        return scene
    return advance(scene, t - scene.time)
