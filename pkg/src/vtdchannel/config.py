"""YAML run configuration for the command-line front end.

The file is a tree of four sections (``scenario``, ``channel``,
``evolution``, ``sampling``) plus top-level ``seed``, ``realizations`` and
``workers``.  Every key is optional; missing keys take the defaults below.
Unknown keys and out-of-range values raise :class:`ConfigError` naming the
dotted key.
"""

from __future__ import annotations

import copy
import hashlib
import math
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .channel import ChannelConfig, ChannelConfigError
from .evolution import EvolutionConfig, VisibilityFactor
from .registry import ParamTable, ProbabilityDomainError, Vtd, builtin_table
from .scene import SceneConfig
from .simulate import Scenario, sample_times

__all__ = ["ConfigError", "DEFAULTS", "load_config", "merge_config", "config_digest", "build_run", "RunSpec"]


class ConfigError(ValueError):
    """A configuration key is unknown or its value violates a constraint."""


DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "realizations": 1,
    "workers": 1,
    "scenario": {
        "vtd": "medium",
        "distance_m": 80.0,
        "tx_speed_mps": 18.0,
        "rx_speed_mps": 15.0,
        "antenna_height_m": 1.5,
        "cluster_speed_tx_mps": 14.0,
        "cluster_speed_rx_mps": 15.0,
        "include_ground": True,
        "table": None,
    },
    "channel": {
        "carrier_hz": 28e9,
        "bandwidth_hz": 2e9,
        "ricean_db": 3.0,
        "eta_gr": 0.2,
        "eta_static": None,
        "eta_dynamic": None,
        "chi": 1.35,
        "window_s": [0.0, None],
        "virtual_delay_mean_s": 80e-9,
        "initial_phase_rad": None,
    },
    "evolution": {
        "eps_static": 0.95,
        "eps_dynamic": 0.95,
        "grace_snapshots": 20,
        "interval_s": None,
    },
    "sampling": {
        "start_s": 0.0,
        "duration_s": 3.0,
        "interval_s": 0.01,
        "tvtf_points": 65,
    },
}


def _merge(base: dict, override: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        name = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"{name}: unknown key")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{name}: expected a mapping")
            out[key] = _merge(base[key], value, name + ".")
        else:
            out[key] = value
    return out


def merge_config(override: dict | None) -> dict:
    return _merge(DEFAULTS, override or {})


def load_config(path) -> tuple[dict, bytes]:
    """Parse a YAML file and merge it over the defaults."""
    raw = Path(path).read_bytes()
    try:
        tree = yaml.safe_load(raw) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: not valid YAML ({exc})") from exc
    if not isinstance(tree, dict):
        raise ConfigError("config: top level must be a mapping")
    return merge_config(tree), raw


def config_digest(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def _float(cfg: dict, dotted: str, *, optional: bool = False, positive: bool = False, nonneg: bool = False):
    node = cfg
    for part in dotted.split("."):
        node = node[part]
    if node is None:
        if optional:
            return None
        raise ConfigError(f"{dotted}: a number is required")
    try:
        value = float(node)
    except (TypeError, ValueError):
        raise ConfigError(f"{dotted}: expected a number, got {node!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"{dotted}: must be finite")
    if positive and not value > 0:
        raise ConfigError(f"{dotted}: must be > 0")
    if nonneg and not value >= 0:
        raise ConfigError(f"{dotted}: must be >= 0")
    return value


def _int(cfg: dict, dotted: str, *, minimum: int) -> int:
    node = cfg
    for part in dotted.split("."):
        node = node[part]
    if isinstance(node, bool) or not isinstance(node, (int, float)) or int(node) != node:
        raise ConfigError(f"{dotted}: expected an integer, got {node!r}")
    if node < minimum:
        raise ConfigError(f"{dotted}: must be >= {minimum}")
    return int(node)


class RunSpec:
    """Everything a simulate run needs, resolved from a merged config."""

    def __init__(self, scenario: Scenario, times: np.ndarray, freqs: np.ndarray, seed: int,
                 realizations: int, workers: int, evolution_interval: float | None):
        self.scenario = scenario
        self.times = times
        self.freqs = freqs
        self.seed = seed
        self.realizations = realizations
        self.workers = workers
        self.evolution_interval = evolution_interval


def build_run(cfg: dict) -> RunSpec:
    """Validate a merged config and build the scenario and sampling grids."""
    sc = cfg["scenario"]
    try:
        vtd = Vtd(str(sc["vtd"]).lower())
    except ValueError:
        raise ConfigError(f"scenario.vtd: must be one of high, medium, low; got {sc['vtd']!r}") from None
    table = builtin_table()
    if sc["table"] is not None:
        table = ParamTable.load(sc["table"])

    ch = cfg["channel"]
    window = ch["window_s"]
    if not isinstance(window, (list, tuple)) or len(window) != 2:
        raise ConfigError("channel.window_s: expected [start, end]")
    w0 = 0.0 if window[0] is None else float(window[0])
    w1 = math.inf if window[1] is None else float(window[1])
    try:
        channel = ChannelConfig(
            carrier_hz=_float(cfg, "channel.carrier_hz"),
            bandwidth_hz=_float(cfg, "channel.bandwidth_hz"),
            ricean_db=_float(cfg, "channel.ricean_db"),
            eta_gr=_float(cfg, "channel.eta_gr"),
            eta_static=_float(cfg, "channel.eta_static", optional=True),
            eta_dynamic=_float(cfg, "channel.eta_dynamic", optional=True),
            chi=_float(cfg, "channel.chi"),
            window=(w0, w1),
            virtual_delay_mean=_float(cfg, "channel.virtual_delay_mean_s"),
            initial_phase=_float(cfg, "channel.initial_phase_rad", optional=True),
        )
    except ChannelConfigError as exc:
        raise ConfigError(f"channel.{exc}") from None

    try:
        eps = VisibilityFactor(_float(cfg, "evolution.eps_static"), _float(cfg, "evolution.eps_dynamic"))
    except ProbabilityDomainError as exc:
        raise ConfigError(f"evolution.eps: {exc}") from None
    evolution = EvolutionConfig(eps=eps, grace=_int(cfg, "evolution.grace_snapshots", minimum=0))
    scene = SceneConfig(
        cluster_speed_tx=_float(cfg, "scenario.cluster_speed_tx_mps", nonneg=True),
        cluster_speed_rx=_float(cfg, "scenario.cluster_speed_rx_mps", nonneg=True),
    )
    scenario = Scenario.straight(
        vtd,
        _float(cfg, "scenario.distance_m", positive=True),
        _float(cfg, "scenario.tx_speed_mps"),
        _float(cfg, "scenario.rx_speed_mps"),
        height=_float(cfg, "scenario.antenna_height_m", positive=True),
        table=table,
        scene=scene,
        channel=channel,
        evolution=evolution,
        include_ground=bool(sc["include_ground"]),
    )

    times = sample_times(
        _float(cfg, "sampling.duration_s", positive=True),
        _float(cfg, "sampling.interval_s", positive=True),
        _float(cfg, "sampling.start_s", nonneg=True),
    )
    if times.size == 0:
        raise ConfigError("sampling.duration_s: shorter than one interval")
    n_f = _int(cfg, "sampling.tvtf_points", minimum=1)
    half = channel.bandwidth_hz / 2.0
    freqs = np.array([channel.carrier_hz]) if n_f == 1 else np.linspace(
        channel.carrier_hz - half, channel.carrier_hz + half, n_f
    )
    return RunSpec(
        scenario, times, freqs,
        seed=_int(cfg, "seed", minimum=0),
        realizations=_int(cfg, "realizations", minimum=1),
        workers=_int(cfg, "workers", minimum=1),
        evolution_interval=_float(cfg, "evolution.interval_s", optional=True, positive=True),
    )

