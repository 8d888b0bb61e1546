"""Scatterer statistics from labeled links, and distribution fitting.

Per link we extract
  * scatterer and cluster counts divided by the Tx-Rx distance,
  * the excess-path ratio ``(|T-S| + |R-S| - |T-R|) / |T-R|`` per scatterer,
  * departure/arrival azimuth and elevation divided by the Tx-Rx distance,
  * (power, delay) pairs for the exponential power-delay regression,
then fit one distribution per (traffic density, class, family) and return a
complete :class:`~vtdchannel.registry.ParamTable`.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special, stats

from .registry import (
    ANGLE_FAMILIES,
    Family,
    GammaParams,
    GaussianParams,
    LogisticParams,
    ParamTable,
    PowerDelayParams,
    RayleighParams,
    ScattererClass,
    Vtd,
)
from .scene import SceneState, kmeans
from .streams import make_stream

__all__ = [
    "LinkRecord",
    "DegenerateLinkError",
    "DegenerateFitError",
    "RegressionError",
    "MissingBucketsError",
    "LinkFormatError",
    "number_params",
    "distance_param",
    "twin_distance_param",
    "angle_params",
    "fit_logistic",
    "fit_gaussian",
    "fit_rayleigh",
    "fit_gamma",
    "fit_power_delay",
    "standard_errors",
    "ks_statistic",
    "gap_statistic_k",
    "collect_samples",
    "build_table",
    "read_links",
    "write_links",
    "link_from_scene",
    "MIN_FIT_SAMPLES",
]

MIN_FIT_SAMPLES = 30
LN10_OVER_10 = math.log(10.0) / 10.0


class DegenerateLinkError(ValueError):
    """Transmitter and receiver coincide."""


class DegenerateFitError(ValueError):
    """Too few samples, or samples without spread."""


class RegressionError(ValueError):
    """The power-delay design matrix is singular."""


class LinkFormatError(ValueError):
    """A link-record file line could not be parsed."""


class MissingBucketsError(ValueError):
    def __init__(self, buckets: Sequence[tuple[str, str, str, int]]):
        self.buckets = list(buckets)
        listing = ", ".join(f"{v}/{c}/{f} (n={n})" for v, c, f, n in self.buckets)
        super().__init__(
            f"{len(self.buckets)} parameter buckets have fewer than {MIN_FIT_SAMPLES} samples: {listing}"
        )


@dataclass
class LinkRecord:
    """One Tx-Rx link at one snapshot and the scatterers that produced its paths.

    ``cluster_ids`` is optional; when absent, cluster counts are estimated by
    K-means with the gap statistic.
    """

    tx: np.ndarray
    rx: np.ndarray
    positions: np.ndarray
    classes: list[ScattererClass]
    powers: np.ndarray
    delays: np.ndarray
    cluster_ids: np.ndarray | None = None
    link_id: int = 0
    snapshot: int = 0

    def __post_init__(self):
        self.tx = np.asarray(self.tx, dtype=float).reshape(3)
        self.rx = np.asarray(self.rx, dtype=float).reshape(3)
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.classes = [ScattererClass(c) for c in self.classes]
        self.powers = np.asarray(self.powers, dtype=float).reshape(-1)
        self.delays = np.asarray(self.delays, dtype=float).reshape(-1)
        n = len(self.positions)
        if not (len(self.classes) == len(self.powers) == len(self.delays) == n):
            raise ValueError("positions, classes, powers and delays must have equal length")
        if self.cluster_ids is not None:
            self.cluster_ids = np.asarray(self.cluster_ids, dtype=np.int64).reshape(-1)
            if len(self.cluster_ids) != n:
                raise ValueError("cluster_ids must match the scatterer count")
        if np.any(self.powers <= 0):
            raise ValueError("path powers must be > 0")

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.rx - self.tx))

    def mask(self, cls: ScattererClass) -> np.ndarray:
        return np.array([c is cls for c in self.classes], dtype=bool)


def _link_distance(link: LinkRecord) -> float:
    d = link.distance
    if not d > 0:
        raise DegenerateLinkError("transmitter and receiver are colocated")
    return d


def number_params(link: LinkRecord) -> tuple[float, float]:
    """(static count, dynamic count) divided by the Tx-Rx distance."""
    d = _link_distance(link)
    n_static = sum(c is ScattererClass.STATIC for c in link.classes)
    n_dynamic = sum(c is ScattererClass.DYNAMIC for c in link.classes)
    return n_static / d, n_dynamic / d


def distance_param(link: LinkRecord, scatterer) -> float | np.ndarray:
    """Excess-path ratio of single-bounce scatterer(s); never negative."""
    d = _link_distance(link)
    s = np.asarray(scatterer, dtype=float)
    pts = s.reshape(-1, 3)
    excess = np.linalg.norm(pts - link.tx, axis=1) + np.linalg.norm(pts - link.rx, axis=1) - d
    # Rounding can push collinear points a hair below zero.
    out = np.maximum(excess, 0.0) / d
    return float(out[0]) if s.ndim == 1 else out


def twin_distance_param(link: LinkRecord, tx_side, rx_side) -> float | np.ndarray:
    """Excess-path ratio of a twin-cluster path, ``|T-S_T| + |R-S_R|`` long."""
    d = _link_distance(link)
    a = np.asarray(tx_side, dtype=float)
    b = np.asarray(rx_side, dtype=float).reshape(-1, 3)
    length = np.linalg.norm(a.reshape(-1, 3) - link.tx, axis=1) + np.linalg.norm(b - link.rx, axis=1)
    out = (length - d) / d
    return float(out[0]) if a.ndim == 1 else out


def _azimuth_elevation(vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    az = np.arctan2(vec[:, 1], vec[:, 0])
    # atan2 returns -pi for (-x, -0.0); fold onto the half-open (-pi, pi].
    az = np.where(az <= -np.pi, np.pi, az)
    el = np.arctan2(vec[:, 2], np.hypot(vec[:, 0], vec[:, 1]))
    return az, el


def angle_params(link: LinkRecord, scatterer):
    """(AAoD, AAoA, EAoD, EAoA) in radians divided by the Tx-Rx distance.

    Departure vectors point from Tx to the scatterer, arrival vectors from
    Rx to the scatterer, both in the global frame with azimuth from +x.
    """
    d = _link_distance(link)
    s = np.asarray(scatterer, dtype=float)
    pts = s.reshape(-1, 3)
    dep = pts - link.tx
    arr = pts - link.rx
    if np.any(np.all(dep == 0, axis=1)) or np.any(np.all(arr == 0, axis=1)):
        raise DegenerateLinkError("scatterer is colocated with a transceiver")
    aaod, eaod = _azimuth_elevation(dep)
    aaoa, eaoa = _azimuth_elevation(arr)
    out = np.stack([aaod, aaoa, eaod, eaoa]) / d
    if s.ndim == 1:
        return tuple(float(v) for v in out[:, 0])
    return out


# --------------------------------------------------------------------------
# Fitting
# --------------------------------------------------------------------------


def _check_samples(samples, *, nonnegative: bool = False) -> np.ndarray:
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size < MIN_FIT_SAMPLES:
        raise DegenerateFitError(f"need at least {MIN_FIT_SAMPLES} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise DegenerateFitError("samples must be finite")
    if nonnegative and np.any(x < 0):
        raise DegenerateFitError("samples must be >= 0")
    if np.ptp(x) == 0:
        raise DegenerateFitError("all samples are identical (zero variance)")
    return x


def fit_gaussian(samples) -> GaussianParams:
    x = _check_samples(samples)
    return GaussianParams(float(x.mean()), float(x.std()))


def fit_rayleigh(samples) -> RayleighParams:
    x = _check_samples(samples, nonnegative=True)
    return RayleighParams(float(math.sqrt(np.mean(x * x) / 2.0)))


def fit_gamma(samples) -> GammaParams:
    """Shape from ``ln a - digamma(a) = ln mean - mean(ln x)``, rate = shape / mean."""
    x = _check_samples(samples, nonnegative=True)
    # Exact zeros have zero density for shape > 1 and break the log-mean.
    x = np.maximum(x, np.finfo(float).tiny)
    mean = float(x.mean())
    s = math.log(mean) - float(np.mean(np.log(x)))
    if not s > 0:
        raise DegenerateFitError("samples have no spread in log space")

    def score(log_a: float) -> float:
        a = math.exp(log_a)
        return math.log(a) - float(special.digamma(a)) - s

    # Closed-form start (Minka) and a wide bracket around it.
    a0 = (3.0 - s + math.sqrt((s - 3.0) ** 2 + 24.0 * s)) / (12.0 * s)
    lo, hi = math.log(a0) - 5.0, math.log(a0) + 5.0
    while score(lo) < 0:
        lo -= 5.0
    while score(hi) > 0:
        hi += 5.0
    alpha = math.exp(optimize.brentq(score, lo, hi, xtol=1e-14, rtol=1e-14))
    return GammaParams(alpha, alpha / mean)


def _logistic_nll(theta, x, lower):
    mu, log_g = theta
    g = math.exp(log_g)
    z = (x - mu) / g
    # log pdf = -z - log g - 2 log(1 + e^-z), written stably via logaddexp.
    ll = -z - log_g - 2.0 * np.logaddexp(0.0, -z)
    total = -float(ll.sum())
    if lower is not None:
        tail = float(special.log_expit(-(lower - mu) / g))  # log(1 - F(lower))
        total += x.size * tail
    return total


def fit_logistic(samples, *, lower: float | None = None) -> LogisticParams:
    """Numeric maximum likelihood.

    ``lower`` fits the law left-truncated at that value, for data generated
    by rejecting draws below it.
    """
    x = _check_samples(samples)
    med = float(np.median(x))
    scale0 = max(float(x.std()) * math.sqrt(3.0) / math.pi, 1e-12)
    res = optimize.minimize(
        _logistic_nll,
        x0=np.array([med, math.log(scale0)]),
        args=(x, lower),
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000},
    )
    res = optimize.minimize(_logistic_nll, res.x, args=(x, lower), method="BFGS", options={"gtol": 1e-9})
    mu, log_g = res.x
    return LogisticParams(float(mu), float(math.exp(log_g)))


@dataclass(frozen=True)
class PowerDelayFit:
    params: PowerDelayParams
    residuals: np.ndarray
    slope_se: float
    intercept_se: float


def fit_power_delay(powers, delays, *, full: bool = False):
    """OLS of ``-ln P`` on delay.

    Slope is ``xi``, intercept ``eta``; the residual standard deviation
    (divisor n) converted to dB is ``sigma_shadow``.
    """
    p = np.asarray(powers, dtype=float).reshape(-1)
    tau = np.asarray(delays, dtype=float).reshape(-1)
    if p.size != tau.size:
        raise ValueError("powers and delays must have equal length")
    if p.size < 2 or np.ptp(tau) == 0:
        raise RegressionError("need at least two distinct delays")
    if np.any(p <= 0):
        raise ValueError("powers must be > 0")
    y = -np.log(p)
    # Centre the delays so the normal equations stay well conditioned at ns scale.
    t_mean = float(tau.mean())
    tc = tau - t_mean
    sxx = float(tc @ tc)
    slope = float(tc @ (y - y.mean())) / sxx
    intercept = float(y.mean()) - slope * t_mean
    resid = y - (slope * tau + intercept)
    sigma_ln = float(math.sqrt(np.mean(resid * resid)))
    if slope <= 0:
        raise RegressionError(f"fitted decay rate is not positive ({slope!r})")
    params = PowerDelayParams(slope, intercept, sigma_ln / LN10_OVER_10)
    if not full:
        return params
    n = p.size
    s2 = float(resid @ resid) / max(n - 2, 1)
    slope_se = math.sqrt(s2 / sxx)
    intercept_se = math.sqrt(s2 * (1.0 / n + t_mean**2 / sxx))
    return PowerDelayFit(params, resid, slope_se, intercept_se)


def standard_errors(params, n: int) -> dict[str, float]:
    """Asymptotic standard errors of the maximum-likelihood estimates."""
    if n <= 0:
        raise ValueError("n must be > 0")
    if isinstance(params, GaussianParams):
        return {"mu": params.sigma / math.sqrt(n), "sigma": params.sigma / math.sqrt(2.0 * n)}
    if isinstance(params, RayleighParams):
        return {"sigma": params.sigma / (2.0 * math.sqrt(n))}
    if isinstance(params, LogisticParams):
        g = params.gamma
        return {"mu": g * math.sqrt(3.0 / n), "gamma": g * math.sqrt(9.0 / ((math.pi**2 + 3.0) * n))}
    if isinstance(params, GammaParams):
        a, b = params.alpha, params.beta
        info = np.array([[float(special.polygamma(1, a)), -1.0 / b], [-1.0 / b, a / b**2]]) * n
        cov = np.linalg.inv(info)
        return {"alpha": math.sqrt(cov[0, 0]), "beta": math.sqrt(cov[1, 1])}
    raise TypeError(f"no standard errors for {type(params).__name__}")


def ks_statistic(samples, params) -> float:
    """Kolmogorov-Smirnov distance between samples and the analytic CDF."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    return float(stats.kstest(x, params.cdf).statistic)


# --------------------------------------------------------------------------
# Cluster-count estimation
# --------------------------------------------------------------------------


def _within_dispersion(points: np.ndarray, labels: np.ndarray) -> float:
    total = 0.0
    for k in np.unique(labels):
        sub = points[labels == k]
        total += float(((sub - sub.mean(axis=0)) ** 2).sum())
    return total


def gap_statistic_k(points, stream: np.random.Generator, *, k_max: int = 10, n_ref: int = 10) -> int:
    """Number of clusters by the gap statistic.

    Picks the smallest k with ``gap(k) >= gap(k+1) - s(k+1)``; reference
    sets are uniform over the bounding box of ``points``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    if n == 0:
        return 0
    if n == 1:
        return 1
    k_top = min(k_max, n)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    gaps, sks = [], []
    for k in range(1, k_top + 1):
        w = _within_dispersion(pts, kmeans(pts, k, stream))
        ref = []
        for _ in range(n_ref):
            sample = lo + (hi - lo) * stream.random((n, 3))
            ref.append(math.log(max(_within_dispersion(sample, kmeans(sample, k, stream)), 1e-300)))
        ref = np.asarray(ref)
        gaps.append(float(ref.mean()) - math.log(max(w, 1e-300)))
        sks.append(float(ref.std()) * math.sqrt(1.0 + 1.0 / n_ref))
    for k in range(1, k_top):
        if gaps[k - 1] >= gaps[k] - sks[k]:
            return k
    return k_top


# --------------------------------------------------------------------------
# Table construction
# --------------------------------------------------------------------------


@dataclass
class BucketSamples:
    values: dict[tuple[Vtd, ScattererClass, Family], list] = field(default_factory=dict)
    pairs: dict[tuple[Vtd, ScattererClass], tuple[list, list]] = field(default_factory=dict)

    def add(self, key, vals) -> None:
        self.values.setdefault(key, []).extend(np.atleast_1d(np.asarray(vals, dtype=float)).tolist())

    def add_pairs(self, key, powers, delays) -> None:
        p, t = self.pairs.setdefault(key, ([], []))
        p.extend(np.asarray(powers, dtype=float).tolist())
        t.extend(np.asarray(delays, dtype=float).tolist())

    def count(self, vtd, cls, family) -> int:
        if family is Family.POWER_DELAY:
            return len(self.pairs.get((vtd, cls), ([], []))[0])
        return len(self.values.get((vtd, cls, family), []))


def _cluster_count(link: LinkRecord, mask: np.ndarray, stream) -> int:
    if link.cluster_ids is not None:
        return int(np.unique(link.cluster_ids[mask]).size)
    return gap_statistic_k(link.positions[mask], stream)


def collect_samples(links_by_vtd: Mapping[Vtd, Sequence[LinkRecord]], *, seed: int = 0) -> BucketSamples:
    """Run every per-link extractor and pool the values by bucket."""
    out = BucketSamples()
    for vtd_key, links in links_by_vtd.items():
        vtd = Vtd(vtd_key)
        for n_link, link in enumerate(links):
            d = _link_distance(link)
            ratios = number_params(link)
            for cls, ratio in zip(ScattererClass, ratios):
                mask = link.mask(cls)
                out.add((vtd, cls, Family.SCATTERER_NUMBER), ratio)
                stream = make_stream(seed, list(Vtd).index(vtd), n_link, list(ScattererClass).index(cls))
                out.add((vtd, cls, Family.CLUSTER_NUMBER), _cluster_count(link, mask, stream) / d)
                if not mask.any():
                    continue
                pos = link.positions[mask]
                out.add((vtd, cls, Family.DISTANCE), distance_param(link, pos))
                ang = angle_params(link, pos)
                for fam, vals in zip(ANGLE_FAMILIES, ang):
                    out.add((vtd, cls, fam), vals)
                out.add_pairs((vtd, cls), link.powers[mask], link.delays[mask])
    return out


@dataclass
class FitReport:
    """Per-bucket sample count and KS statistic (NaN for the regression)."""

    rows: list[tuple[Vtd, ScattererClass, Family, int, float]]

    def lines(self) -> list[str]:
        return [f"{v.value} {c.value} {f.value} n={n} ks={ks:.6g}" for v, c, f, n, ks in self.rows]


def build_table(
    links_by_vtd: Mapping[Vtd, Sequence[LinkRecord]],
    *,
    seed: int = 0,
    truncate_numbers: bool = True,
) -> tuple[ParamTable, FitReport]:
    """Fit every (traffic density, class, family) bucket.

    Number ratios are fitted as a Logistic left-truncated at zero when
    ``truncate_numbers`` is set, mirroring how the generator draws them.
    """
    if not links_by_vtd or all(len(v) == 0 for v in links_by_vtd.values()):
        raise MissingBucketsError(
            [(v.value, c.value, f.value, 0) for v in Vtd for c in ScattererClass for f in Family]
        )
    samples = collect_samples(links_by_vtd, seed=seed)
    missing = []
    for v in Vtd:
        for c in ScattererClass:
            for f in Family:
                n = samples.count(v, c, f)
                need = 2 if f is Family.POWER_DELAY else MIN_FIT_SAMPLES
                if n < need:
                    missing.append((v.value, c.value, f.value, n))
    if missing:
        raise MissingBucketsError(missing)

    entries = {}
    rows = []
    for v in Vtd:
        for c in ScattererClass:
            for f in Family:
                if f is Family.POWER_DELAY:
                    p, t = samples.pairs[(v, c)]
                    entries[(v, c, f)] = fit_power_delay(p, t)
                    rows.append((v, c, f, len(p), float("nan")))
                    continue
                x = np.asarray(samples.values[(v, c, f)])
                if f in (Family.SCATTERER_NUMBER, Family.CLUSTER_NUMBER):
                    params = fit_logistic(x, lower=0.0 if truncate_numbers else None)
                elif f is Family.DISTANCE:
                    params = fit_gamma(x) if c is ScattererClass.STATIC else fit_rayleigh(x)
                else:
                    params = fit_gaussian(x)
                entries[(v, c, f)] = params
                rows.append((v, c, f, x.size, ks_statistic(x, params)))
    return ParamTable(entries), FitReport(rows)


def link_from_scene(
    scene: SceneState,
    table: ParamTable,
    *,
    link_id: int = 0,
    snapshot: int = 0,
    speed_of_light: float = 299_792_458.0,
) -> LinkRecord:
    """Express a generated scene as a labelled link record.

    Each twin-cluster path becomes one single-bounce scatterer on the
    departure ray, at the point of the Tx-Rx ellipse with the same total
    length, so its excess-path ratio equals the path's.  Delays include the
    virtual-link delay and powers follow the class's power-delay law with
    the path's own shadowing; cluster ids are the twin pair ids.
    """
    tx, rx = scene.tx.position, scene.rx.position
    w = rx - tx
    d = float(np.linalg.norm(w))
    positions, classes, powers, delays, cids = [], [], [], [], []
    for tw in scene.twins:
        dep = tw.tx_points - tx
        r_dep = np.linalg.norm(dep, axis=1)
        length = r_dep + np.linalg.norm(tw.rx_points - rx, axis=1)
        u = dep / r_dep[:, None]
        r = (length**2 - d**2) / (2.0 * (length - u @ w))
        positions.append(tx + r[:, None] * u)
        tau = length / speed_of_light + tw.virtual_delay
        delays.append(tau)
        powers.append(table[(scene.vtd, tw.cls, Family.POWER_DELAY)].power(tau, tw.shadow_db))
        classes.extend([tw.cls] * tw.size)
        cids.extend([tw.pair_id] * tw.size)
    if not positions:
        return LinkRecord(tx, rx, np.empty((0, 3)), [], np.empty(0), np.empty(0), [], link_id, snapshot)
    return LinkRecord(
        tx, rx, np.concatenate(positions), classes, np.concatenate(powers), np.concatenate(delays),
        cids, link_id, snapshot,
    )


# --------------------------------------------------------------------------
# Link-record files
# --------------------------------------------------------------------------

def read_links(path) -> list[LinkRecord]:
    """Parse a link file.

    One scatterer per line: ``link_id snapshot tx_x tx_y tx_z rx_x rx_y rx_z
    s_x s_y s_z class power_dB delay_ns [cluster_id]``.  Lines sharing
    (link_id, snapshot) form one record.
    """
    groups: dict[tuple[int, int], dict] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) not in (14, 15):
                raise LinkFormatError(f"{path}:{lineno}: expected 14 or 15 fields, got {len(parts)}")
            try:
                key = (int(parts[0]), int(parts[1]))
                nums = [float(p) for p in parts[2:11]]
                cls = ScattererClass(parts[11].lower())
                power_db = float(parts[12])
                delay_ns = float(parts[13])
                cid = int(parts[14]) if len(parts) == 15 else None
            except ValueError as exc:
                raise LinkFormatError(f"{path}:{lineno}: {exc}") from exc
            g = groups.setdefault(
                key, {"tx": nums[0:3], "rx": nums[3:6], "pos": [], "cls": [], "p": [], "t": [], "cid": []}
            )
            if g["tx"] != nums[0:3] or g["rx"] != nums[3:6]:
                raise LinkFormatError(f"{path}:{lineno}: transceiver positions differ within link {key}")
            g["pos"].append(nums[6:9])
            g["cls"].append(cls)
            g["p"].append(10.0 ** (power_db / 10.0))
            g["t"].append(delay_ns * 1e-9)
            g["cid"].append(cid)
    if not groups:
        raise LinkFormatError(f"{path}: no link records")
    links = []
    for (lid, snap), g in groups.items():
        cids = g["cid"]
        if any(c is None for c in cids):
            if not all(c is None for c in cids):
                raise LinkFormatError(f"{path}: link {lid}/{snap} mixes lines with and without cluster ids")
            cids = None
        links.append(LinkRecord(g["tx"], g["rx"], g["pos"], g["cls"], g["p"], g["t"], cids, lid, snap))
    return links


def write_links(path, links: Sequence[LinkRecord]) -> None:
    with open(path, "w") as fh:
        fh.write("# link_id snapshot tx_x tx_y tx_z rx_x rx_y rx_z s_x s_y s_z class power_dB delay_ns cluster_id\n")
        for link in links:
            head = " ".join(f"{v:.17g}" for v in (*link.tx, *link.rx))
            for i in range(len(link.positions)):
                s = " ".join(f"{v:.17g}" for v in link.positions[i])
                tail = ""
                if link.cluster_ids is not None:
                    tail = f" {int(link.cluster_ids[i])}"
                fh.write(
                    f"{link.link_id} {link.snapshot} {head} {s} {link.classes[i].value} "
                    f"{10.0 * math.log10(link.powers[i]):.17g} {link.delays[i] * 1e9:.17g}{tail}\n"
                )
