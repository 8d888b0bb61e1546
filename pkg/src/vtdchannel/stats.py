"""Correlation statistics over an ensemble of channel realizations.

``tf_cf`` is the plain Monte-Carlo estimate of ``E[H*(t, f) H(t+dt, f+df)]``
from transfer-function samples.  ``path_tf_cf`` forms the same expectation
path by path: within one realization only components present at both
instants are correlated with themselves, which is what the expectation over
independent uniform phases leaves behind, without the ``1/sqrt(R)`` cross
terms.  It also splits the result by component kind.

The TACF and FCF are the ``df = 0`` and ``dt = 0`` slices.  The DPSD is the
Fourier transform of the TACF over lag, extended to negative lags by
Hermitian symmetry and tapered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import ChannelConfig, CirSnapshot, PathKind, frequency_factor, phase_cycles

__all__ = [
    "CorrelationSurface",
    "DopplerSpectrum",
    "LagRangeError",
    "tf_cf",
    "path_tf_cf",
    "tacf",
    "fcf",
    "dpsd",
    "taper_window",
    "spectral_flatness",
    "mean_abs_normalized",
    "grid_index",
]


class LagRangeError(ValueError):
    """An anchor or lag falls outside the simulated grid."""


@dataclass
class CorrelationSurface:
    """Correlation values over a (dt, df) lag grid at one anchor.

    ``per_realization`` holds each realization's contribution (shape
    ``(R, n_dt, n_df)``) when the estimator provides it; ``values`` is its
    mean.  ``per_kind`` maps a component kind to its own mean surface.
    """

    anchor_time: float
    anchor_freq: float
    dt_lags: np.ndarray
    df_lags: np.ndarray
    values: np.ndarray
    realizations: int
    per_realization: np.ndarray | None = None
    per_kind: dict = field(default_factory=dict)

    def zero_lag(self) -> complex:
        i = int(np.flatnonzero(self.dt_lags == 0)[0])
        j = int(np.flatnonzero(self.df_lags == 0)[0])
        return complex(self.values[i, j])


@dataclass
class DopplerSpectrum:
    anchor_time: float
    freqs: np.ndarray
    psd: np.ndarray

    @property
    def bin_width(self) -> float:
        return float(self.freqs[1] - self.freqs[0])

    def integral(self) -> float:
        return float(np.sum(self.psd) * self.bin_width)

    def flatness(self, max_abs_freq: float | None = None) -> float:
        """Spectral flatness, optionally over ``|f_D| <= max_abs_freq`` only."""
        p = self.psd
        if max_abs_freq is not None:
            p = p[np.abs(self.freqs) <= max_abs_freq]
        return spectral_flatness(np.clip(p, 0.0, None))

    def peak_freqs(self, count: int = 1) -> np.ndarray:
        """Frequencies of the ``count`` largest local maxima."""
        p = self.psd
        interior = (p[1:-1] >= p[:-2]) & (p[1:-1] >= p[2:])
        idx = np.flatnonzero(interior) + 1
        idx = idx[np.argsort(p[idx])[::-1][:count]]
        return np.sort(self.freqs[idx])


def grid_index(grid: np.ndarray, value: float, *, name: str = "value") -> int:
    """Index of ``value`` on ``grid``; it must coincide with a grid point."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise LagRangeError(f"{name} {value!r}: empty grid")
    i = int(np.argmin(np.abs(grid - value)))
    scale = max(abs(value), float(np.max(np.abs(grid))), 1e-300)
    spacing = float(np.min(np.diff(grid))) if grid.size > 1 else scale
    if abs(grid[i] - value) > 1e-6 * spacing:
        raise LagRangeError(f"{name} {value!r} is not on the simulated grid [{grid[0]!r}, {grid[-1]!r}]")
    return i


def tf_cf(H, times, freqs, anchor: tuple[float, float], dt_lags, df_lags) -> CorrelationSurface:
    """Ensemble mean of ``conj(H(t, f)) * H(t + dt, f + df)``.

    ``H`` has shape ``(realizations, n_times, n_freqs)``.
    """
    H = np.asarray(H)
    if H.ndim != 3:
        raise ValueError("H must have shape (realizations, times, freqs)")
    if H.shape[0] < 2:
        raise ValueError("at least two realizations are needed for an expectation")
    times = np.asarray(times, dtype=float)
    freqs = np.asarray(freqs, dtype=float)
    dt_lags = np.atleast_1d(np.asarray(dt_lags, dtype=float))
    df_lags = np.atleast_1d(np.asarray(df_lags, dtype=float))
    it = grid_index(times, anchor[0], name="anchor time")
    jf = grid_index(freqs, anchor[1], name="anchor frequency")
    ti = [grid_index(times, anchor[0] + d, name="time lag") for d in dt_lags]
    fj = [grid_index(freqs, anchor[1] + d, name="frequency lag") for d in df_lags]
    ref = np.conj(H[:, it, jf])
    per = ref[:, None, None] * H[:, ti][:, :, fj]
    return CorrelationSurface(anchor[0], anchor[1], dt_lags, df_lags, per.mean(axis=0), H.shape[0], per)


def _terms(snap: CirSnapshot, freqs: np.ndarray, cfg: ChannelConfig) -> np.ndarray:
    factor = frequency_factor(freqs, cfg)
    is_los = snap.kinds == 0
    scaled = np.where(is_los[:, None], 1.0, factor[None, :])
    return snap.gains[:, None] * scaled * np.exp(-2j * np.pi * phase_cycles(freqs, snap.delays))


def path_tf_cf(
    ensemble: Sequence[Sequence[CirSnapshot]],
    anchor: tuple[float, float],
    dt_lags,
    df_lags,
    cfg: ChannelConfig,
) -> CorrelationSurface:
    """Path-resolved TF-CF.

    ``ensemble[r]`` is realization ``r``'s snapshot series; snapshot times
    must include the anchor and every anchor + lag.
    """
    if len(ensemble) < 2:
        raise ValueError("at least two realizations are needed for an expectation")
    dt_lags = np.atleast_1d(np.asarray(dt_lags, dtype=float))
    df_lags = np.atleast_1d(np.asarray(df_lags, dtype=float))
    t0, f0 = anchor
    lo = cfg.carrier_hz - cfg.bandwidth_hz / 2.0
    hi = cfg.carrier_hz + cfg.bandwidth_hz / 2.0
    for f in (f0, *(f0 + df_lags)):
        if not lo - 1e-9 * hi <= f <= hi + 1e-9 * hi:
            raise LagRangeError(f"frequency {f!r} Hz lies outside the simulated band [{lo!r}, {hi!r}]")
    kinds = list(PathKind)
    per = np.zeros((len(ensemble), dt_lags.size, df_lags.size), dtype=complex)
    per_kind = {k: np.zeros_like(per) for k in kinds}
    freqs_b = f0 + df_lags
    for r, series in enumerate(ensemble):
        times = np.array([s.time for s in series])
        a = series[grid_index(times, t0, name="anchor time")]
        ref = _terms(a, np.array([f0]), cfg)[:, 0]
        ref_index = {int(p): n for n, p in enumerate(a.path_ids)}
        for i, dt in enumerate(dt_lags):
            b = series[grid_index(times, t0 + dt, name="time lag")]
            cols = _terms(b, freqs_b, cfg)
            pos_a, pos_b = [], []
            for n, pid in enumerate(b.path_ids):
                m = ref_index.get(int(pid))
                if m is not None:
                    pos_a.append(m)
                    pos_b.append(n)
            if not pos_a:
                continue
            pa = np.asarray(pos_a)
            pb = np.asarray(pos_b)
            prod = np.conj(ref[pa])[:, None] * cols[pb]
            per[r, i] = prod.sum(axis=0)
            codes = a.kinds[pa]
            for code, kind in enumerate(kinds):
                sel = codes == code
                if sel.any():
                    per_kind[kind][r, i] = prod[sel].sum(axis=0)
    return CorrelationSurface(
        t0, f0, dt_lags, df_lags, per.mean(axis=0), len(ensemble), per,
        {k: v.mean(axis=0) for k, v in per_kind.items()},
    )


def _zero(lags: np.ndarray, name: str) -> int:
    hits = np.flatnonzero(lags == 0)
    if hits.size == 0:
        raise LagRangeError(f"the {name} lags must contain zero")
    return int(hits[0])


def tacf(surface: CorrelationSurface, *, normalize: bool = True) -> np.ndarray:
    """The ``df = 0`` slice over ``dt``, divided by its zero-lag value."""
    j = _zero(surface.df_lags, "frequency")
    curve = surface.values[:, j].copy()
    if normalize:
        curve = curve / curve[_zero(surface.dt_lags, "time")]
    return curve


def fcf(surface: CorrelationSurface, *, normalize: bool = True) -> np.ndarray:
    """The ``dt = 0`` slice over ``df``, divided by its zero-lag value."""
    i = _zero(surface.dt_lags, "time")
    curve = surface.values[i, :].copy()
    if normalize:
        curve = curve / curve[_zero(surface.df_lags, "frequency")]
    return curve


def mean_abs_normalized(per_realization: np.ndarray, zero_index: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of ``|Y_r(lag) / Y_r(0)|`` over realizations.

    ``per_realization`` is ``(R, n_lags)``.
    """
    y = np.asarray(per_realization)
    ratio = np.abs(y / y[:, zero_index : zero_index + 1])
    return ratio.mean(axis=0), ratio.std(axis=0, ddof=1) / math.sqrt(y.shape[0])


def taper_window(n_lags: int, kind: str = "raised-cosine") -> np.ndarray:
    """Taper over the symmetric lag sequence of length ``2 n_lags - 1``.

    ``raised-cosine`` is the normalised autocorrelation of a Hann window of
    ``n_lags`` points: a smooth bell with a non-negative spectrum, so a
    positive-definite TACF keeps a non-negative DPSD.
    """
    if n_lags < 1:
        raise ValueError("need at least one lag")
    if kind == "none":
        return np.ones(2 * n_lags - 1)
    if kind == "bartlett":
        k = np.arange(-(n_lags - 1), n_lags)
        return 1.0 - np.abs(k) / n_lags
    if kind == "raised-cosine":
        m = np.arange(n_lags)
        hann = 0.5 - 0.5 * np.cos(2.0 * np.pi * (m + 1) / (n_lags + 1))
        w = np.correlate(hann, hann, mode="full")
        return w / w[n_lags - 1]
    raise ValueError(f"unknown taper {kind!r}")


def dpsd(curve, lags, *, anchor_time: float = 0.0, taper: str = "raised-cosine") -> DopplerSpectrum:
    """Doppler spectrum from a TACF sampled at non-negative, uniform lags.

    Scaled so that ``sum(psd) * bin_width`` equals ``curve[0]``.
    """
    curve = np.asarray(curve, dtype=complex)
    lags = np.asarray(lags, dtype=float)
    if curve.shape != lags.shape or lags.ndim != 1:
        raise ValueError("curve and lags must be 1-D and of equal length")
    if lags[0] != 0:
        raise ValueError("lags must start at zero")
    n = lags.size
    if n < 2:
        raise ValueError("need at least two lags")
    step = lags[1] - lags[0]
    if not step > 0 or np.max(np.abs(np.diff(lags) - step)) > 1e-9 * step:
        raise ValueError("lag grid must be uniform")
    full = np.concatenate([np.conj(curve[:0:-1]), curve])
    full = full * taper_window(n, taper)
    size = full.size
    # Put lag 0 at index 0 for the FFT, then centre the frequency axis.
    spec = np.fft.fft(np.fft.ifftshift(full)) * step
    freqs = np.fft.fftshift(np.fft.fftfreq(size, d=step))
    psd = np.fft.fftshift(spec)
    return DopplerSpectrum(anchor_time, freqs, psd.real)


def spectral_flatness(psd, floor: float = 1e-12) -> float:
    """Geometric over arithmetic mean; values are clipped at ``floor * max``."""
    p = np.asarray(psd, dtype=float)
    if p.size == 0:
        raise ValueError("empty spectrum")
    top = float(p.max())
    if not top > 0:
        return 0.0
    p = np.maximum(p, floor * top)
    return float(np.exp(np.mean(np.log(p))) / np.mean(p))
