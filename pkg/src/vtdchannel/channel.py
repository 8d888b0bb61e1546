"""Channel impulse response and time-variant transfer function.

Four kinds of component make up a snapshot:

* LoS, weight ``Omega / (Omega + 1)``,
* ground reflection (image method on ``z = 0``), weight ``eta_gr / (Omega + 1)``,
* static and dynamic NLoS paths through twin clusters, class weights
  ``eta_sta / (Omega + 1)`` and ``eta_dyn / (Omega + 1)`` shared by the
  paths of the class in proportion to their exponential power-delay law.

Every component carries the phase ``phi0 + 2 pi d / lambda + 2 pi * int f_D dt``
where ``d`` is its geometric length (plus ``c * tau_virtual`` for NLoS) and
the Doppler integral is accumulated by the trapezoidal rule across snapshots.
The transfer function evaluates ``sum gain * (f / f_c)^chi * exp(-j 2 pi f tau)``
at absolute RF frequencies, with no frequency factor on the LoS term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .registry import Family, ParamTable, PowerDelayParams, ScattererClass, Vtd
from .scene import SceneState, TwinCluster

__all__ = [
    "SPEED_OF_LIGHT",
    "PathKind",
    "ChannelConfig",
    "PathComponent",
    "CirSnapshot",
    "PhaseTracker",
    "ChannelConfigError",
    "los_geometry",
    "ground_reflection_geometry",
    "nlos_geometry",
    "los_component",
    "ground_reflection_component",
    "nlos_component",
    "normalize_powers",
    "class_weights",
    "assemble_cir",
    "tvtf",
    "frequency_factor",
    "phase_cycles",
    "LOS_PATH_ID",
    "GR_PATH_ID",
]

SPEED_OF_LIGHT = 299_792_458.0
LOS_PATH_ID = -1
GR_PATH_ID = -2
LN10_OVER_10 = math.log(10.0) / 10.0


class ChannelConfigError(ValueError):
    """A channel configuration value violates its constraint."""


class PathKind(str, Enum):
    LOS = "los"
    GROUND_REFLECTION = "gr"
    STATIC_NLOS = "static"
    DYNAMIC_NLOS = "dynamic"


_KIND_CODE = {PathKind.LOS: 0, PathKind.GROUND_REFLECTION: 1, PathKind.STATIC_NLOS: 2, PathKind.DYNAMIC_NLOS: 3}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}


@dataclass(frozen=True)
class ChannelConfig:
    """Carrier, weighting and window settings.

    ``ricean_db`` is the Ricean factor in dB, or a callable of time returning
    it.  ``eta_static`` and ``eta_dynamic`` left as ``None`` split
    ``1 - eta_gr`` in proportion to the visible static and dynamic path
    counts.  ``initial_phase`` of ``None`` means a uniform random phase per
    path, drawn by the scene (NLoS) or the caller (LoS, GR).
    """

    carrier_hz: float = 28e9
    bandwidth_hz: float = 2e9
    speed_of_light: float = SPEED_OF_LIGHT
    ricean_db: float | Callable[[float], float] = 3.0
    eta_gr: float = 0.2
    eta_static: float | None = None
    eta_dynamic: float | None = None
    chi: float = 1.35
    window: tuple[float, float] = (0.0, math.inf)
    virtual_delay_mean: float = 80e-9
    initial_phase: float | None = None

    def __post_init__(self):
        if not self.carrier_hz > 0:
            raise ChannelConfigError("carrier_hz: carrier frequency must be > 0")
        if not self.speed_of_light > 0:
            raise ChannelConfigError("speed_of_light: must be > 0")
        if not self.bandwidth_hz > 0:
            raise ChannelConfigError("bandwidth_hz: must be > 0")
        etas = [self.eta_gr, self.eta_static, self.eta_dynamic]
        if any(e is not None and not (0.0 <= e <= 1.0) for e in etas):
            raise ChannelConfigError("eta: each power ratio must lie in [0, 1]")
        if (self.eta_static is None) != (self.eta_dynamic is None):
            raise ChannelConfigError("eta: give both eta_static and eta_dynamic, or neither")
        if self.eta_static is not None:
            total = self.eta_gr + self.eta_static + self.eta_dynamic
            if abs(total - 1.0) > 1e-9:
                raise ChannelConfigError(f"eta: eta_gr + eta_static + eta_dynamic must equal 1, got {total!r}")
        if not callable(self.ricean_db) and not math.isfinite(self.ricean_db):
            raise ChannelConfigError("ricean_db: must be finite")
        if not self.window[0] <= self.window[1]:
            raise ChannelConfigError("window: start must not exceed end")
        if not self.virtual_delay_mean >= 0:
            raise ChannelConfigError("virtual_delay_mean: must be >= 0")

    @property
    def wavelength(self) -> float:
        return self.speed_of_light / self.carrier_hz

    def ricean(self, t: float) -> float:
        """Linear Ricean factor at time ``t``."""
        db = self.ricean_db(t) if callable(self.ricean_db) else self.ricean_db
        return 10.0 ** (db / 10.0)

    def q(self, t: float) -> int:
        return int(self.window[0] <= t <= self.window[1])


@dataclass(frozen=True)
class PathComponent:
    kind: PathKind
    gain: complex
    delay: float
    doppler: float
    phase: float
    cluster_id: int = -1
    path_id: int = LOS_PATH_ID

    @property
    def power(self) -> float:
        return abs(self.gain) ** 2


@dataclass
class CirSnapshot:
    """One snapshot, stored column-wise for speed."""

    time: float
    kinds: np.ndarray  # int codes, see PathKind
    gains: np.ndarray
    delays: np.ndarray
    dopplers: np.ndarray
    phases: np.ndarray
    cluster_ids: np.ndarray
    path_ids: np.ndarray
    q: int = 1

    @property
    def components(self) -> list[PathComponent]:
        return [
            PathComponent(_CODE_KIND[int(k)], complex(g), float(d), float(f), float(p), int(c), int(i))
            for k, g, d, f, p, c, i in zip(
                self.kinds, self.gains, self.delays, self.dopplers, self.phases, self.cluster_ids, self.path_ids
            )
        ]

    @property
    def total_power(self) -> float:
        return float(np.sum(np.abs(self.gains) ** 2))

    def kind_mask(self, kind: PathKind) -> np.ndarray:
        return self.kinds == _KIND_CODE[PathKind(kind)]

    @classmethod
    def from_components(cls, time: float, comps: Sequence[PathComponent], q: int = 1) -> "CirSnapshot":
        return cls(
            time,
            np.array([_KIND_CODE[c.kind] for c in comps], dtype=np.int8),
            np.array([c.gain for c in comps], dtype=complex),
            np.array([c.delay for c in comps], dtype=float),
            np.array([c.doppler for c in comps], dtype=float),
            np.array([c.phase for c in comps], dtype=float),
            np.array([c.cluster_id for c in comps], dtype=np.int64),
            np.array([c.path_id for c in comps], dtype=np.int64),
            q,
        )


class PhaseTracker:
    """Trapezoidal running integral of each path's Doppler frequency.

    Each update carries the full set of live paths; paths missing from it
    are forgotten and a path seen for the first time starts at zero.
    """

    def __init__(self):
        self._ids = np.empty(0, dtype=np.int64)
        self._last_t = np.empty(0)
        self._last_f = np.empty(0)
        self._integral = np.empty(0)

    def update(self, t: float, path_ids, dopplers) -> np.ndarray:
        ids = np.asarray(path_ids, dtype=np.int64)
        f = np.asarray(dopplers, dtype=float)
        pos = np.searchsorted(self._ids, ids)
        pos_c = np.minimum(pos, max(len(self._ids) - 1, 0))
        found = (pos < len(self._ids)) & (self._ids[pos_c] == ids) if len(self._ids) else np.zeros(len(ids), bool)
        integ = np.zeros(len(ids))
        if found.any():
            k = pos_c[found]
            integ[found] = self._integral[k] + 0.5 * (self._last_f[k] + f[found]) * (t - self._last_t[k])
        order = np.argsort(ids, kind="stable")
        self._ids = ids[order]
        self._last_t = np.full(len(ids), float(t))
        self._last_f = f[order]
        self._integral = integ[order]
        return integ


# --------------------------------------------------------------------------
# Geometry
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Geometry:
    """Length (m), delay (s) and Doppler (Hz) of one or more paths."""

    length: np.ndarray | float
    delay: np.ndarray | float
    doppler: np.ndarray | float


def los_geometry(tx_pos, tx_vel, rx_pos, rx_vel, cfg: ChannelConfig) -> Geometry:
    d = np.asarray(rx_pos, dtype=float) - np.asarray(tx_pos, dtype=float)
    dist = float(np.linalg.norm(d))
    if not dist > 0:
        raise ValueError("transceiver distance must be > 0")
    rel = np.asarray(rx_vel, dtype=float) - np.asarray(tx_vel, dtype=float)
    doppler = float(d @ rel) / (cfg.wavelength * dist)
    return Geometry(dist, dist / cfg.speed_of_light, doppler)


def ground_reflection_point(tx_pos, rx_pos) -> np.ndarray:
    t = np.asarray(tx_pos, dtype=float)
    r = np.asarray(rx_pos, dtype=float)
    if not (t[2] > 0 and r[2] > 0):
        raise ValueError("ground reflection needs both antenna heights > 0")
    frac = t[2] / (t[2] + r[2])
    p = t + frac * (r - t)
    p[2] = 0.0
    return p


def ground_reflection_geometry(tx_pos, tx_vel, rx_pos, rx_vel, cfg: ChannelConfig) -> Geometry:
    t = np.asarray(tx_pos, dtype=float)
    r = np.asarray(rx_pos, dtype=float)
    p = ground_reflection_point(t, r)
    dt_vec, dr_vec = t - p, r - p
    lt, lr = float(np.linalg.norm(dt_vec)), float(np.linalg.norm(dr_vec))
    length = lt + lr
    # The reflection point is stationary for the path length, so the rate
    # splits into the two end terms.
    f_t = float(dt_vec @ np.asarray(tx_vel, dtype=float)) / (cfg.wavelength * lt)
    f_r = float(dr_vec @ np.asarray(rx_vel, dtype=float)) / (cfg.wavelength * lr)
    return Geometry(length, length / cfg.speed_of_light, f_t + f_r)


def nlos_geometry(
    tx_pos, tx_vel, rx_pos, rx_vel, tx_points, rx_points, tx_cluster_vel, rx_cluster_vel,
    virtual_delay, cfg: ChannelConfig,
) -> Geometry:
    """Twin-cluster paths ``T -> S_T``, virtual link, ``S_R -> R``.

    Cluster velocities and virtual delays may be given per path.  ``length``
    includes ``c * virtual_delay`` so the phase term uses it directly.
    """
    dT = np.asarray(tx_pos, dtype=float) - np.asarray(tx_points, dtype=float).reshape(-1, 3)
    dR = np.asarray(rx_pos, dtype=float) - np.asarray(rx_points, dtype=float).reshape(-1, 3)
    nT = np.sqrt(np.einsum("ij,ij->i", dT, dT))
    nR = np.sqrt(np.einsum("ij,ij->i", dR, dR))
    vT = np.broadcast_to(np.asarray(tx_vel, dtype=float) - np.asarray(tx_cluster_vel, dtype=float), dT.shape)
    vR = np.broadcast_to(np.asarray(rx_vel, dtype=float) - np.asarray(rx_cluster_vel, dtype=float), dR.shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        fT = np.where(nT > 0, np.einsum("ij,ij->i", dT, vT) / (cfg.wavelength * nT), 0.0)
        fR = np.where(nR > 0, np.einsum("ij,ij->i", dR, vR) / (cfg.wavelength * nR), 0.0)
    geo = nT + nR
    virtual_delay = np.asarray(virtual_delay, dtype=float)
    delay = geo / cfg.speed_of_light + virtual_delay
    return Geometry(geo + cfg.speed_of_light * virtual_delay, delay, fT + fR)


def _phase(phi0, length, doppler_integral, cfg: ChannelConfig):
    return phi0 + 2.0 * math.pi / cfg.wavelength * length + 2.0 * math.pi * doppler_integral


def los_component(
    scene: SceneState, cfg: ChannelConfig, *, phi0: float = 0.0, doppler_integral: float = 0.0,
    weight: float | None = None,
) -> PathComponent:
    tx, rx = scene.tx, scene.rx
    g = los_geometry(tx.position, tx.velocity, rx.position, rx.velocity, cfg)
    if weight is None:
        om = cfg.ricean(scene.time)
        weight = om / (om + 1.0)
    phase = _phase(phi0, g.length, doppler_integral, cfg)
    gain = cfg.q(scene.time) * math.sqrt(weight) * complex(math.cos(phase), math.sin(phase))
    return PathComponent(PathKind.LOS, gain, g.delay, g.doppler, phase, -1, LOS_PATH_ID)


def ground_reflection_component(
    scene: SceneState, cfg: ChannelConfig, *, phi0: float = 0.0, doppler_integral: float = 0.0,
    weight: float | None = None,
) -> PathComponent:
    tx, rx = scene.tx, scene.rx
    g = ground_reflection_geometry(tx.position, tx.velocity, rx.position, rx.velocity, cfg)
    if weight is None:
        weight = cfg.eta_gr / (cfg.ricean(scene.time) + 1.0)
    phase = _phase(phi0, g.length, doppler_integral, cfg)
    gain = cfg.q(scene.time) * math.sqrt(weight) * complex(math.cos(phase), math.sin(phase))
    return PathComponent(PathKind.GROUND_REFLECTION, gain, g.delay, g.doppler, phase, -1, GR_PATH_ID)


def nlos_component(
    scene: SceneState, twin: TwinCluster, member: int, cfg: ChannelConfig, *,
    power: float = 1.0, doppler_integral: float = 0.0,
) -> PathComponent:
    """One NLoS component with an already-normalised power."""
    if twin not in scene.twins:
        raise ValueError(f"twin cluster {twin.pair_id} is not part of the scene")
    tx, rx = scene.tx, scene.rx
    g = nlos_geometry(
        tx.position, tx.velocity, rx.position, rx.velocity,
        twin.tx_points[member], twin.rx_points[member], twin.tx_velocity, twin.rx_velocity,
        twin.virtual_delay, cfg,
    )
    phase = float(_phase(twin.phase0[member], g.length[0], doppler_integral, cfg))
    kind = PathKind.STATIC_NLOS if twin.cls is ScattererClass.STATIC else PathKind.DYNAMIC_NLOS
    gain = cfg.q(scene.time) * math.sqrt(power) * complex(math.cos(phase), math.sin(phase))
    return PathComponent(kind, gain, float(g.delay[0]), float(g.doppler[0]), phase, twin.pair_id,
                         int(twin.path_ids[member]))


# --------------------------------------------------------------------------
# Powers and weights
# --------------------------------------------------------------------------


def normalize_powers(delays, shadow_db, params: PowerDelayParams) -> tuple[np.ndarray, np.ndarray]:
    """Raw powers ``exp(-xi tau - eta) 10^(-Z/10)`` and the class-normalised share.

    The share is computed in the log domain because raw powers sit near
    ``1e-14``.
    """
    logp = params.log_power(delays, shadow_db)
    logp = np.atleast_1d(logp)
    if logp.size == 0:
        return np.empty(0), np.empty(0)
    top = logp.max()
    w = np.exp(logp - top)
    return np.exp(logp), w / w.sum()


def class_weights(cfg: ChannelConfig, t: float, n_static: int, n_dynamic: int) -> dict[str, float]:
    """Component-class weights; they sum to one.

    A class with no visible path hands its share to the other NLoS class,
    or to the ground reflection when neither class has visible paths.
    """
    om = cfg.ricean(t)
    if cfg.eta_static is None:
        n = n_static + n_dynamic
        diffuse = 1.0 - cfg.eta_gr
        eta_s = diffuse * n_static / n if n else 0.0
        eta_d = diffuse * n_dynamic / n if n else 0.0
    else:
        eta_s, eta_d = cfg.eta_static, cfg.eta_dynamic
        if n_static == 0 and n_dynamic == 0:
            eta_s = eta_d = 0.0
        elif n_static == 0:
            eta_s, eta_d = 0.0, eta_d + eta_s
        elif n_dynamic == 0:
            eta_s, eta_d = eta_s + eta_d, 0.0
    eta_gr = 1.0 - eta_s - eta_d
    return {
        "los": om / (om + 1.0) if math.isfinite(om) else 1.0,
        "gr": eta_gr / (om + 1.0),
        "static": eta_s / (om + 1.0),
        "dynamic": eta_d / (om + 1.0),
    }


# --------------------------------------------------------------------------
# Snapshot assembly
# --------------------------------------------------------------------------


@dataclass
class LinkPhases:
    """Initial phases of the LoS and ground-reflection components."""

    los: float = 0.0
    gr: float = 0.0


def assemble_cir(
    scene: SceneState,
    visible: Iterable[int],
    cfg: ChannelConfig,
    table: ParamTable,
    vtd: Vtd | None = None,
    *,
    tracker: PhaseTracker | None = None,
    link_phases: LinkPhases | None = None,
    include_ground: bool = True,
) -> CirSnapshot:
    """Build one snapshot from the visible twin clusters.

    Every path in the scene (visible or not) advances its Doppler integral,
    so a cluster that re-enters keeps a continuous phase.
    """
    vtd = Vtd(vtd) if vtd is not None else scene.vtd
    tracker = tracker if tracker is not None else PhaseTracker()
    link_phases = link_phases or LinkPhases()
    visible = set(int(v) for v in visible)
    t = scene.time
    tx, rx = scene.tx, scene.rx
    q = cfg.q(t)

    twins = scene.twins
    static_code = _KIND_CODE[PathKind.STATIC_NLOS]
    dynamic_code = _KIND_CODE[PathKind.DYNAMIC_NLOS]
    if twins:
        sizes = np.array([tw.size for tw in twins])
        ids_a = np.concatenate([tw.path_ids for tw in twins])
        g = nlos_geometry(
            tx.position, tx.velocity, rx.position, rx.velocity,
            np.concatenate([tw.tx_points for tw in twins]),
            np.concatenate([tw.rx_points for tw in twins]),
            np.repeat(np.array([tw.tx_velocity for tw in twins]), sizes, axis=0),
            np.repeat(np.array([tw.rx_velocity for tw in twins]), sizes, axis=0),
            np.repeat(np.array([tw.virtual_delay for tw in twins]), sizes),
            cfg,
        )
        dops_a, lens_a, dels_a = g.doppler, g.length, g.delay
        phi0_a = np.concatenate([tw.phase0 for tw in twins])
        shadow_a = np.concatenate([tw.shadow_db for tw in twins])
        code_a = np.repeat(
            np.array([static_code if tw.cls is ScattererClass.STATIC else dynamic_code for tw in twins], dtype=np.int8),
            sizes,
        )
        pair_a = np.repeat(np.array([tw.pair_id for tw in twins], dtype=np.int64), sizes)
        vis_a = np.repeat(np.array([tw.pair_id in visible for tw in twins]), sizes)
    else:
        ids_a = np.empty(0, dtype=np.int64)
        dops_a = np.empty(0)

    los = los_geometry(tx.position, tx.velocity, rx.position, rx.velocity, cfg)
    head_ids = [LOS_PATH_ID]
    head_dops = [los.doppler]
    if include_ground:
        gr = ground_reflection_geometry(tx.position, tx.velocity, rx.position, rx.velocity, cfg)
        head_ids.append(GR_PATH_ID)
        head_dops.append(gr.doppler)
    integ = tracker.update(t, np.concatenate([head_ids, ids_a]), np.concatenate([head_dops, dops_a]))

    if twins:
        n_static = int(np.sum(vis_a & (code_a == static_code)))
        n_dynamic = int(np.sum(vis_a & (code_a == dynamic_code)))
    else:
        n_static = n_dynamic = 0
    w = class_weights(cfg, t, n_static, n_dynamic)
    if not include_ground:
        # Without a ground path its share goes to LoS so the total stays one.
        w["los"] += w["gr"]
        w["gr"] = 0.0

    kinds, gains, delays, dopplers, phases, cids, pids = [], [], [], [], [], [], []

    def add(kind_code, power, delay, doppler, phase, cid, pid):
        kinds.append(np.atleast_1d(np.asarray(kind_code, dtype=np.int8)))
        amp = np.sqrt(np.atleast_1d(power)) * q
        ph = np.atleast_1d(phase)
        gains.append(amp * np.exp(1j * ph))
        delays.append(np.atleast_1d(delay))
        dopplers.append(np.atleast_1d(doppler))
        phases.append(ph)
        cids.append(np.atleast_1d(np.asarray(cid, dtype=np.int64)))
        pids.append(np.atleast_1d(np.asarray(pid, dtype=np.int64)))

    add(_KIND_CODE[PathKind.LOS], w["los"], los.delay, los.doppler,
        _phase(link_phases.los, los.length, integ[0], cfg), -1, LOS_PATH_ID)
    if include_ground:
        add(_KIND_CODE[PathKind.GROUND_REFLECTION], w["gr"], gr.delay, gr.doppler,
            _phase(link_phases.gr, gr.length, integ[1], cfg), -1, GR_PATH_ID)

    if twins:
        off = len(head_ids)
        for kind, cls in ((PathKind.STATIC_NLOS, ScattererClass.STATIC), (PathKind.DYNAMIC_NLOS, ScattererClass.DYNAMIC)):
            sel = vis_a & (code_a == _KIND_CODE[kind])
            if not sel.any():
                continue
            _, share = normalize_powers(dels_a[sel], shadow_a[sel], table[(vtd, cls, Family.POWER_DELAY)])
            ph = _phase(phi0_a[sel], lens_a[sel], integ[off:][sel], cfg)
            add(np.full(sel.sum(), _KIND_CODE[kind]), w[cls.value] * share, dels_a[sel], dops_a[sel], ph,
                pair_a[sel], ids_a[sel])

    return CirSnapshot(
        t,
        np.concatenate(kinds),
        np.concatenate(gains),
        np.concatenate(delays),
        np.concatenate(dopplers),
        np.concatenate(phases),
        np.concatenate(cids),
        np.concatenate(pids),
        q,
    )


# --------------------------------------------------------------------------
# Transfer function
# --------------------------------------------------------------------------


def frequency_factor(freqs, cfg: ChannelConfig) -> np.ndarray:
    return (np.asarray(freqs, dtype=float) / cfg.carrier_hz) ** cfg.chi


def _check_grid(freqs: np.ndarray, cfg: ChannelConfig) -> None:
    half = cfg.bandwidth_hz / 2.0
    lo, hi = cfg.carrier_hz - half, cfg.carrier_hz + half
    tol = 1e-9 * cfg.carrier_hz
    if np.any(freqs < lo - tol) or np.any(freqs > hi + tol):
        raise ValueError(f"frequency grid must lie within [{lo:.6g}, {hi:.6g}] Hz")


_SPLIT = 134217729.0  # 2**27 + 1


def _split(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = _SPLIT * a
    hi = c - (c - a)
    return hi, a - hi


def phase_cycles(freqs, delays) -> np.ndarray:
    """``outer(delays, freqs)`` reduced modulo one cycle.

    The product is formed exactly as a sum of two doubles (Dekker), so the
    fractional part stays accurate even when ``f * tau`` is tens of
    thousands of cycles.
    """
    f = np.asarray(freqs, dtype=float)[None, :]
    tau = np.asarray(delays, dtype=float)[:, None]
    p = tau * f
    th, tl = _split(tau)
    fh, fl = _split(f)
    err = ((th * fh - p) + th * fl + tl * fh) + tl * fl
    return (p - np.round(p)) + err


def snapshot_tvtf(snap: CirSnapshot, freqs, cfg: ChannelConfig, *, check: bool = True) -> np.ndarray:
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    if check:
        _check_grid(freqs, cfg)
    factor = frequency_factor(freqs, cfg)
    scaled = np.where(snap.kinds[:, None] == _KIND_CODE[PathKind.LOS], 1.0, factor[None, :])
    phase = -2.0 * np.pi * phase_cycles(freqs, snap.delays)
    return np.sum(snap.gains[:, None] * scaled * np.exp(1j * phase), axis=0)


def tvtf(snapshots: Sequence[CirSnapshot], freqs, cfg: ChannelConfig) -> np.ndarray:
    """``H[t, f]`` for a series of snapshots."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    _check_grid(freqs, cfg)
    return np.stack([snapshot_tvtf(s, freqs, cfg, check=False) for s in snapshots])
