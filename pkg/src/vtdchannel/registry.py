"""Scatterer statistics: distribution families and the parameter table.

Five families describe every scatterer statistic the simulator consumes:

* Logistic -- scatterer and cluster numbers per metre of link distance,
* Gamma -- excess-path ratio of static scatterers,
* Rayleigh -- excess-path ratio of dynamic scatterers,
* Gaussian -- azimuth/elevation angles per metre of link distance,
* exponential power-delay law ``P = exp(-xi*tau - eta) * 10**(-Z/10)`` with
  ``Z ~ N(0, sigma_shadow**2)`` (dB).

The first four expose :func:`cdf`, :func:`inverse_cdf` and :func:`sample`;
sampling is inverse-transform on the analytic CDF.  A :class:`ParamTable`
maps ``(Vtd, ScattererClass, Family)`` to one parameter object and
round-trips through a plain-text file, so a fitted table can replace the
built-in one.
"""

from __future__ import annotations

import math
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, fields
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Callable, Union

import numpy as np
from scipy import special

__all__ = [
    "Vtd",
    "ScattererClass",
    "Family",
    "LogisticParams",
    "GammaParams",
    "RayleighParams",
    "GaussianParams",
    "PowerDelayParams",
    "ParamTable",
    "ParameterDomainError",
    "ProbabilityDomainError",
    "TableFormatError",
    "builtin_table",
    "cdf",
    "inverse_cdf",
    "sample",
    "numeric_inverse_cdf",
    "BUILTIN_TABLE_FILE",
    "builtin_table_text",
]


class ParameterDomainError(ValueError):
    """Distribution parameters violate their positivity constraints."""


class ProbabilityDomainError(ValueError):
    """A probability argument lies outside the open interval (0, 1)."""


class TableFormatError(ValueError):
    """A parameter-table file could not be parsed."""


class Vtd(str, Enum):
    """Vehicular traffic density condition."""

    HIGH = "high"
    MEDIUM = "medium"
    LOW = "low"


class ScattererClass(str, Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


class Family(str, Enum):
    SCATTERER_NUMBER = "scatterer-number"
    CLUSTER_NUMBER = "cluster-number"
    DISTANCE = "distance"
    AAOD = "aaod"
    AAOA = "aaoa"
    EAOD = "eaod"
    EAOA = "eaoa"
    POWER_DELAY = "power-delay"


ANGLE_FAMILIES = (Family.AAOD, Family.AAOA, Family.EAOD, Family.EAOA)
NUMBER_FAMILIES = (Family.SCATTERER_NUMBER, Family.CLUSTER_NUMBER)


def _require_positive(name: str, value: float) -> None:
    if not (math.isfinite(value) and value > 0):
        raise ParameterDomainError(f"{name} must be finite and > 0, got {value!r}")


def _require_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ParameterDomainError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class LogisticParams:
    mu: float
    gamma: float

    distribution = "logistic"

    def __post_init__(self):
        _require_finite("mu", self.mu)
        _require_positive("gamma", self.gamma)

    def cdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.gamma
        return special.expit(z)

    def ppf(self, p):
        p = np.asarray(p, dtype=float)
        return self.mu + self.gamma * (np.log(p) - np.log1p(-p))

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.gamma
        s = special.expit(z)
        return s * (1.0 - s) / self.gamma


@dataclass(frozen=True)
class GammaParams:
    """Gamma law with shape ``alpha`` and rate ``beta``."""

    alpha: float
    beta: float

    distribution = "gamma"

    def __post_init__(self):
        _require_positive("alpha", self.alpha)
        _require_positive("beta", self.beta)

    @property
    def mean(self) -> float:
        return self.alpha / self.beta

    @property
    def std(self) -> float:
        return math.sqrt(self.alpha) / self.beta

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return special.gammainc(self.alpha, self.beta * np.maximum(x, 0.0))

    def ppf(self, p):
        # Bisection from [0, mean + 20 std]; the bracket is widened if needed.
        hi = self.mean + 20.0 * self.std
        return _bisect_inverse(self.cdf, p, 0.0, hi)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            logp = (
                self.alpha * math.log(self.beta)
                + (self.alpha - 1.0) * np.log(x)
                - self.beta * x
                - special.gammaln(self.alpha)
            )
        return np.where(x > 0, np.exp(logp), 0.0)


@dataclass(frozen=True)
class RayleighParams:
    sigma: float

    distribution = "rayleigh"

    def __post_init__(self):
        _require_positive("sigma", self.sigma)

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return -np.expm1(-(x * x) / (2.0 * self.sigma**2))

    def ppf(self, p):
        p = np.asarray(p, dtype=float)
        return self.sigma * np.sqrt(-2.0 * np.log1p(-p))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        s2 = self.sigma**2
        return np.where(x >= 0, x / s2 * np.exp(-(x * x) / (2.0 * s2)), 0.0)


@dataclass(frozen=True)
class GaussianParams:
    """Normal law; for angle families the units are rad per metre."""

    mu: float
    sigma: float

    distribution = "gaussian"

    def __post_init__(self):
        _require_finite("mu", self.mu)
        _require_positive("sigma", self.sigma)

    def cdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / (self.sigma * math.sqrt(2.0))
        return 0.5 * (1.0 + special.erf(z))

    def ppf(self, p):
        return self.mu + self.sigma * special.ndtri(np.asarray(p, dtype=float))

    def pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mu) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2.0 * math.pi))


@dataclass(frozen=True)
class PowerDelayParams:
    """Exponential power-delay law with log-normal shadowing.

    ``xi`` is in 1/s, ``eta`` is dimensionless and ``sigma_shadow`` in dB.
    """

    xi: float
    eta: float
    sigma_shadow: float

    distribution = "exponential"

    def __post_init__(self):
        _require_positive("xi", self.xi)
        _require_finite("eta", self.eta)
        if not (math.isfinite(self.sigma_shadow) and self.sigma_shadow >= 0):
            raise ParameterDomainError(f"sigma_shadow must be >= 0, got {self.sigma_shadow!r}")

    def log_power(self, delays, shadow_db=0.0):
        """Natural log of the raw path power."""
        delays = np.asarray(delays, dtype=float)
        return -self.xi * delays - self.eta - np.asarray(shadow_db, dtype=float) * (math.log(10.0) / 10.0)

    def power(self, delays, shadow_db=0.0):
        return np.exp(self.log_power(delays, shadow_db))

    def sample_shadowing(self, stream: np.random.Generator, n: int) -> np.ndarray:
        return self.sigma_shadow * stream.standard_normal(n)

    def sample_powers(self, delays, stream: np.random.Generator) -> np.ndarray:
        delays = np.asarray(delays, dtype=float)
        return self.power(delays, self.sample_shadowing(stream, delays.size))


Distribution = Union[LogisticParams, GammaParams, RayleighParams, GaussianParams]
Params = Union[Distribution, PowerDelayParams]

_PARAM_TYPES: dict[str, type] = {
    cls.distribution: cls
    for cls in (LogisticParams, GammaParams, RayleighParams, GaussianParams, PowerDelayParams)
}


def _check_distribution(params) -> None:
    if not isinstance(params, (LogisticParams, GammaParams, RayleighParams, GaussianParams)):
        raise ParameterDomainError(f"{type(params).__name__} is not a univariate distribution")


def cdf(params: Distribution, x):
    """CDF of ``params`` at ``x`` (scalar or array)."""
    _check_distribution(params)
    out = params.cdf(x)
    return float(out) if np.ndim(out) == 0 else out


def inverse_cdf(params: Distribution, p):
    """Quantile function; ``p`` must lie strictly inside (0, 1)."""
    _check_distribution(params)
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0.0) | ~(arr < 1.0)):
        raise ProbabilityDomainError("probabilities must lie in the open interval (0, 1)")
    out = params.ppf(arr)
    return float(out) if np.ndim(out) == 0 else out


def sample(
    params: Distribution,
    stream: np.random.Generator,
    n: int,
    *,
    truncate_at_zero: bool = False,
) -> np.ndarray:
    """Draw ``n`` values by inverse-transform sampling.

    With ``truncate_at_zero`` negative draws are rejected and redrawn, which
    is how count ratios (Logistic) are kept non-negative.
    """
    _check_distribution(params)
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return np.empty(0)
    u = _open_uniform(stream, n)
    x = params.ppf(u)
    if truncate_at_zero:
        bad = x < 0
        while np.any(bad):
            x[bad] = params.ppf(_open_uniform(stream, int(bad.sum())))
            bad = x < 0
    return np.asarray(x, dtype=float)


def _open_uniform(stream: np.random.Generator, n: int) -> np.ndarray:
    u = stream.random(n)
    # random() is on [0, 1); zero has probability 2**-53 but must not reach ppf.
    zero = u == 0.0
    while np.any(zero):
        u[zero] = stream.random(int(zero.sum()))
        zero = u == 0.0
    return u


def _bisect_inverse(
    fn: Callable[[np.ndarray], np.ndarray],
    p,
    lo: float,
    hi: float,
    *,
    xtol: float = 1e-10,
    ftol: float = 1e-13,
    max_iter: int = 400,
):
    """Vectorised bisection for ``fn(x) = p`` with ``fn`` nondecreasing."""
    p = np.asarray(p, dtype=float)
    scalar = p.ndim == 0
    p = np.atleast_1d(p)
    lo_arr = np.full(p.shape, float(lo))
    hi_arr = np.full(p.shape, float(hi))
    short = fn(hi_arr) < p
    while np.any(short):
        lo_arr[short] = hi_arr[short]
        hi_arr[short] *= 2.0
        short = fn(hi_arr) < p
    mid = 0.5 * (lo_arr + hi_arr)
    for _ in range(max_iter):
        mid = 0.5 * (lo_arr + hi_arr)
        val = fn(mid)
        below = val < p
        lo_arr = np.where(below, mid, lo_arr)
        hi_arr = np.where(below, hi_arr, mid)
        width = hi_arr - lo_arr
        # The x tolerance is relative near zero, where steep CDFs need it.
        done = (np.abs(val - p) <= ftol) | (width <= xtol * np.maximum(mid, 1e-300))
        if np.all(done):
            break
    mid = 0.5 * (lo_arr + hi_arr)
    return float(mid[0]) if scalar else mid


def numeric_inverse_cdf(params: Distribution, p, *, lo: float = 0.0, hi: float | None = None):
    """Quantile by bracketed bisection on the analytic CDF.

    Works for any family; used to cross-check closed-form quantiles.
    """
    _check_distribution(params)
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0.0) | ~(arr < 1.0)):
        raise ProbabilityDomainError("probabilities must lie in the open interval (0, 1)")
    if hi is None:
        hi = max(1.0, abs(lo) * 2.0)
    if isinstance(params, (LogisticParams, GaussianParams)):
        spread = params.gamma if isinstance(params, LogisticParams) else params.sigma
        lo = min(lo, params.mu - 60.0 * spread)
        hi = max(hi, params.mu + 60.0 * spread)
    return _bisect_inverse(params.cdf, arr, lo, hi)


# --------------------------------------------------------------------------
# Parameter table
# --------------------------------------------------------------------------

Key = tuple[Vtd, ScattererClass, Family]


def expected_type(cls: ScattererClass, family: Family) -> type:
    if family in NUMBER_FAMILIES:
        return LogisticParams
    if family is Family.DISTANCE:
        return GammaParams if cls is ScattererClass.STATIC else RayleighParams
    if family is Family.POWER_DELAY:
        return PowerDelayParams
    return GaussianParams


def all_keys() -> list[Key]:
    return [(v, c, f) for v in Vtd for c in ScattererClass for f in Family]


class ParamTable(Mapping):
    """Immutable map from ``(vtd, class, family)`` to parameters.

    All 48 entries must be present and each must have the type its family
    requires (e.g. Gamma for static distance, Rayleigh for dynamic).
    """

    def __init__(self, entries: Mapping[Key, Params]):
        data: dict[Key, Params] = {}
        for (vtd, cls, family), params in entries.items():
            key = (Vtd(vtd), ScattererClass(cls), Family(family))
            want = expected_type(key[1], key[2])
            if not isinstance(params, want):
                raise ParameterDomainError(
                    f"{'/'.join(k.value for k in key)} needs {want.__name__}, got {type(params).__name__}"
                )
            data[key] = params
        missing = [k for k in all_keys() if k not in data]
        if missing:
            listing = ", ".join("/".join(x.value for x in k) for k in missing)
            raise TableFormatError(f"parameter table is missing {len(missing)} entries: {listing}")
        self._data = data

    def __getitem__(self, key):
        vtd, cls, family = key
        return self._data[(Vtd(vtd), ScattererClass(cls), Family(family))]

    def __iter__(self) -> Iterator[Key]:
        return iter(all_keys())

    def __len__(self) -> int:
        return len(self._data)

    def __eq__(self, other):
        if not isinstance(other, ParamTable):
            return NotImplemented
        return self._data == other._data

    def __hash__(self):
        return hash(tuple(self._data[k] for k in all_keys()))

    def get_params(self, vtd, cls, family) -> Params:
        return self[(vtd, cls, family)]

    def dumps(self) -> str:
        lines = ["# vtd class family distribution name=value ..."]
        for key in all_keys():
            params = self._data[key]
            values = "  ".join(f"{f.name}={getattr(params, f.name)!r}" for f in fields(params))
            lines.append(f"{key[0].value} {key[1].value} {key[2].value} {params.distribution}  {values}")
        return "\n".join(lines) + "\n"

    def dump(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "ParamTable":
        entries: dict[Key, Params] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) < 5:
                raise TableFormatError(f"line {lineno}: expected 'vtd class family distribution k=v ...'")
            try:
                key = (Vtd(parts[0]), ScattererClass(parts[1]), Family(parts[2]))
                ptype = _PARAM_TYPES[parts[3]]
                kwargs = {}
                for item in parts[4:]:
                    name, _, value = item.partition("=")
                    kwargs[name] = float(value)
                params = ptype(**kwargs)
            except (KeyError, ValueError, TypeError) as exc:
                raise TableFormatError(f"line {lineno}: {exc}") from exc
            if key in entries:
                raise TableFormatError(f"line {lineno}: duplicate entry {'/'.join(k.value for k in key)}")
            entries[key] = params
        return cls(entries)

    @classmethod
    def load(cls, path) -> "ParamTable":
        return cls.loads(Path(path).read_text())


BUILTIN_TABLE_FILE = "builtin_params.txt"


def builtin_table_text() -> str:
    return resources.files("vtdchannel").joinpath("data").joinpath(BUILTIN_TABLE_FILE).read_text()


_V, _C, _F = Vtd, ScattererClass, Family


def _builtin_entries() -> dict[Key, Params]:
    e: dict[Key, Params] = {}
    logistic = {
        (_C.STATIC, _F.SCATTERER_NUMBER): {_V.HIGH: (0.45, 0.15), _V.MEDIUM: (0.82, 0.23), _V.LOW: (0.49, 0.16)},
        (_C.DYNAMIC, _F.SCATTERER_NUMBER): {_V.HIGH: (0.53, 0.25), _V.MEDIUM: (0.44, 0.18), _V.LOW: (0.28, 0.17)},
        (_C.STATIC, _F.CLUSTER_NUMBER): {_V.HIGH: (0.09, 0.03), _V.MEDIUM: (0.14, 0.04), _V.LOW: (0.08, 0.03)},
        (_C.DYNAMIC, _F.CLUSTER_NUMBER): {_V.HIGH: (0.12, 0.06), _V.MEDIUM: (0.09, 0.03), _V.LOW: (0.06, 0.03)},
    }
    for (cls, fam), per_vtd in logistic.items():
        for vtd, (mu, gamma) in per_vtd.items():
            e[(vtd, cls, fam)] = LogisticParams(mu, gamma)

    for vtd, (alpha, beta) in {_V.HIGH: (0.68, 1.74), _V.MEDIUM: (0.83, 1.71), _V.LOW: (0.59, 2.08)}.items():
        e[(vtd, _C.STATIC, _F.DISTANCE)] = GammaParams(alpha, beta)
    for vtd, sigma in {_V.HIGH: 0.55, _V.MEDIUM: 0.37, _V.LOW: 0.30}.items():
        e[(vtd, _C.DYNAMIC, _F.DISTANCE)] = RayleighParams(sigma)

    angles = {
        _F.AAOD: {
            _C.STATIC: {_V.HIGH: (-0.48, 1.85), _V.MEDIUM: (-0.12, 2.08), _V.LOW: (0.26, 1.76)},
            _C.DYNAMIC: {_V.HIGH: (-0.72, 1.98), _V.MEDIUM: (-0.54, 1.78), _V.LOW: (-0.09, 1.73)},
        },
        _F.AAOA: {
            _C.STATIC: {_V.HIGH: (0.28, 1.89), _V.MEDIUM: (0.52, 1.95), _V.LOW: (0.35, 1.71)},
            _C.DYNAMIC: {_V.HIGH: (0.62, 1.98), _V.MEDIUM: (0.81, 1.61), _V.LOW: (1.01, 1.58)},
        },
        # Elevation of departure and arrival carry identical values; they are
        # stored as separate entries all the same.
        _F.EAOD: {
            _C.STATIC: {_V.HIGH: (0.06, 0.09), _V.MEDIUM: (0.07, 0.16), _V.LOW: (0.06, 0.10)},
            _C.DYNAMIC: {_V.HIGH: (0.57, 0.62), _V.MEDIUM: (0.66, 0.59), _V.LOW: (0.80, 0.56)},
        },
        _F.EAOA: {
            _C.STATIC: {_V.HIGH: (0.06, 0.09), _V.MEDIUM: (0.07, 0.16), _V.LOW: (0.06, 0.10)},
            _C.DYNAMIC: {_V.HIGH: (0.57, 0.62), _V.MEDIUM: (0.66, 0.59), _V.LOW: (0.80, 0.56)},
        },
    }
    for fam, per_cls in angles.items():
        for cls, per_vtd in per_cls.items():
            for vtd, (mu, sigma) in per_vtd.items():
                e[(vtd, cls, fam)] = GaussianParams(mu, sigma)

    power_delay = {
        _C.STATIC: {
            _V.HIGH: (7.75e6, 30.28, 9.81),
            _V.MEDIUM: (8e6, 31.90, 11.10),
            _V.LOW: (10e6, 29.38, 9.71),
        },
        _C.DYNAMIC: {
            _V.HIGH: (4.54e6, 31.08, 9.60),
            _V.MEDIUM: (1.50e6, 32.80, 10.90),
            _V.LOW: (4.47e6, 30.17, 8.72),
        },
    }
    for cls, per_vtd in power_delay.items():
        for vtd, (xi, eta, sig) in per_vtd.items():
            e[(vtd, cls, _F.POWER_DELAY)] = PowerDelayParams(xi, eta, sig)
    return e


_BUILTIN: ParamTable | None = None


def builtin_table() -> ParamTable:
    """The measured statistics for high/medium/low traffic density."""
    global _BUILTIN
    if _BUILTIN is None:
        _BUILTIN = ParamTable(_builtin_entries())
    return _BUILTIN
