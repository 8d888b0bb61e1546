"""Acceptance criteria 1-13.

Each test records a one-line verdict in ``RESULTS``; ``conftest.py`` prints
them in the terminal summary.  Runtime limits are part of every verdict.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from birth_death import birth_death_evolver
from crossroad import build_crossroad
from vtdchannel.channel import ChannelConfig, CirSnapshot, PathComponent, PathKind, PhaseTracker
from vtdchannel.charfit import (
    fit_gamma,
    fit_gaussian,
    fit_logistic,
    fit_power_delay,
    fit_rayleigh,
    ks_statistic,
    standard_errors,
)
from vtdchannel.cli import main
from vtdchannel.evolution import major_axis, major_axis_dynamic, spawn_counts, step
from vtdchannel.pointcloud import align_frame, detect_objects, label_scatterers, remove_ground
from vtdchannel.registry import (
    Family,
    GammaParams,
    GaussianParams,
    LogisticParams,
    ParamTable,
    PowerDelayParams,
    RayleighParams,
    ScattererClass,
    Vtd,
    all_keys,
    builtin_table,
    builtin_table_text,
    numeric_inverse_cdf,
    sample,
)
from vtdchannel.scene import SceneConfig, Track, Trajectory, init_scene
from vtdchannel.simulate import Scenario, run_realization
from vtdchannel.stats import dpsd, mean_abs_normalized, path_tf_cf, spectral_flatness, tacf
from vtdchannel.streams import make_stream

RESULTS: dict[int, str] = {}
FC = 28e9


def _verdict(number: int, ok: bool, detail: str, elapsed: float, limit: float) -> None:
    in_time = elapsed < limit
    passed = ok and in_time
    RESULTS[number] = (
        f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}  "
        f"[{elapsed:.2f} s, limit {limit:g} s]"
    )
    assert ok, RESULTS[number]
    assert in_time, RESULTS[number]


def _z(a_mean, a_se, b_mean, b_se):
    return (a_mean - b_mean) / math.hypot(a_se, b_se)


# --- 1 ------------------------------------------------------------------------


def test_criterion_01_builtin_table():
    t0 = time.perf_counter()
    from_file = ParamTable.loads(builtin_table_text())
    table = builtin_table()
    same = sum(from_file[k] == table[k] for k in all_keys())
    elapsed = time.perf_counter() - t0
    _verdict(1, same == 48 and len(table) == 48 and from_file == table, f"{same}/48 entries equal", elapsed, 1.0)


# --- 2 ------------------------------------------------------------------------

_FITTERS = {LogisticParams: fit_logistic, GammaParams: fit_gamma, RayleighParams: fit_rayleigh,
            GaussianParams: fit_gaussian}


def _power_delay_round_trip(params: PowerDelayParams, stream, n):
    delays = stream.uniform(0.0, 1e-6, n)
    powers = params.sample_powers(delays, stream)
    fitted = fit_power_delay(powers, delays)
    # OLS standard errors in the -ln P domain.
    s = params.sigma_shadow * math.log(10.0) / 10.0
    sxx = float(np.sum((delays - delays.mean()) ** 2))
    se = {
        "xi": s / math.sqrt(sxx),
        "eta": s * math.sqrt(1.0 / n + delays.mean() ** 2 / sxx),
        "sigma_shadow": params.sigma_shadow / math.sqrt(2.0 * n),
    }
    resid_db = -10.0 / math.log(10.0) * (np.log(powers) + params.xi * delays + params.eta)
    ks = ks_statistic(resid_db, GaussianParams(0.0, params.sigma_shadow))
    return fitted, se, ks


def test_criterion_02_distribution_round_trip():
    t0 = time.perf_counter()
    table = builtin_table()
    n = 100_000
    worst_z, worst_ks, failures = 0.0, 0.0, []
    for i, key in enumerate(all_keys()):
        params = table[key]
        stream = make_stream(2024, i)
        if isinstance(params, PowerDelayParams):
            fitted, se, ks = _power_delay_round_trip(params, stream, n)
        else:
            x = sample(params, stream, n)
            fitted = _FITTERS[type(params)](x)
            se = standard_errors(params, n)
            ks = ks_statistic(x, params)
        for name, err in se.items():
            z = abs(getattr(fitted, name) - getattr(params, name)) / err
            worst_z = max(worst_z, z)
            if z > 4:
                failures.append((key, name, z))
        worst_ks = max(worst_ks, ks)
        if ks >= 0.01:
            failures.append((key, "ks", ks))
    elapsed = time.perf_counter() - t0
    _verdict(2, not failures, f"48 sets, worst |z|={worst_z:.2f} (<4), worst KS={worst_ks:.4f} (<0.01)"
             + (f", failures {failures}" if failures else ""), elapsed, 60.0)


# --- 3 ------------------------------------------------------------------------


def test_criterion_03_power_delay_regression():
    t0 = time.perf_counter()
    params = builtin_table()[(Vtd.HIGH, ScattererClass.STATIC, Family.POWER_DELAY)]
    stream = make_stream(3)
    delays = stream.uniform(0.0, 1e-6, 10_000)
    fitted = fit_power_delay(params.sample_powers(delays, stream), delays)
    rel = {name: abs(getattr(fitted, name) / getattr(params, name) - 1) for name in ("xi", "eta", "sigma_shadow")}
    elapsed = time.perf_counter() - t0
    detail = ", ".join(f"{k} {100 * v:.2f}%" for k, v in rel.items())
    _verdict(3, max(rel.values()) < 0.05, f"relative errors {detail} (<5%)", elapsed, 5.0)


# --- 4 ------------------------------------------------------------------------


def test_criterion_04_visibility_axes():
    t0 = time.perf_counter()
    table = builtin_table()
    d = 80.0
    worst_cdf = worst_inv = 0.0
    for vtd in Vtd:
        for cls in ScattererClass:
            params = table[(vtd, cls, Family.DISTANCE)]
            for eps in (0.5, 0.9, 0.99):
                ratio = (major_axis(params, eps, d) - d) / d
                worst_cdf = max(worst_cdf, abs(float(params.cdf(ratio)) - eps))
                if isinstance(params, RayleighParams):
                    closed = (major_axis_dynamic(params, eps, d) - d) / d
                    worst_inv = max(worst_inv, abs(closed - float(numeric_inverse_cdf(params, eps))))
    elapsed = time.perf_counter() - t0
    _verdict(4, worst_cdf < 1e-9 and worst_inv < 1e-9,
             f"max |CDF-eps|={worst_cdf:.1e}, closed vs numeric inverse {worst_inv:.1e} (<1e-9)", elapsed, 5.0)


# --- 5 ------------------------------------------------------------------------


def test_criterion_05_spawn_branches():
    t0 = time.perf_counter()
    exact = 0
    for n_l in range(11):
        for n_v in range(11):
            expected = (n_l - n_v, n_l) if n_l > n_v else (0, n_v)
            exact += spawn_counts(n_l, n_v) == expected
    elapsed = time.perf_counter() - t0
    _verdict(5, exact == 121, f"{exact}/121 fixtures exact", elapsed, 1.0)


# --- 6 ------------------------------------------------------------------------


def test_criterion_06_normalization_and_delay_order():
    t0 = time.perf_counter()
    table = builtin_table()
    cfg = ChannelConfig()
    worst_power, order_ok = 0.0, 0
    from vtdchannel.channel import assemble_cir

    vtds = list(Vtd)
    for seed in range(100):
        stream = make_stream(606, seed)
        d = stream.uniform(30, 150)
        tx = Track((0.0, 0.0, 1.5), Trajectory.constant((stream.uniform(0, 30), 0.0, 0.0)))
        rx = Track((d, stream.uniform(-5, 5), 1.5), Trajectory.constant((stream.uniform(0, 30), 0.0, 0.0)))
        scene = init_scene(table, vtds[seed % 3], tx, rx, stream)
        scene, report = step(scene, table, 0.95, stream)
        snap = assemble_cir(scene, report.visible_ids(), cfg, table)
        worst_power = max(worst_power, abs(snap.total_power - 1.0))
        los = snap.delays[snap.kind_mask(PathKind.LOS)][0]
        order_ok += bool(np.all(snap.delays[~snap.kind_mask(PathKind.LOS)] >= los))
    elapsed = time.perf_counter() - t0
    _verdict(6, worst_power <= 1e-12 and order_ok == 100,
             f"max |power-1|={worst_power:.1e} (<=1e-12), delay order {order_ok}/100", elapsed, 10.0)


# --- 7 ------------------------------------------------------------------------


def test_criterion_07_two_path_oracle():
    t0 = time.perf_counter()
    cfg = ChannelConfig()
    n, step_s = 128, 1e-4
    lags = np.arange(n) * step_s
    width = 1.0 / ((2 * n - 1) * step_s)
    p = (0.65, 0.35)
    f = (30 * width, -55 * width)
    tau = (150e-9, 410e-9)
    ensemble = []
    for r in range(20):
        stream = make_stream(707, r)
        phi = stream.uniform(0, 2 * math.pi, 2)
        tracker = PhaseTracker()
        series = []
        for t in lags:
            integ = tracker.update(t, [0, 1], f)
            comps = [
                PathComponent(PathKind.STATIC_NLOS, math.sqrt(p[k]) * np.exp(1j * (phi[k] + 2 * math.pi * integ[k])),
                              tau[k], f[k], 0.0, k, k)
                for k in range(2)
            ]
            series.append(CirSnapshot.from_components(float(t), comps))
        ensemble.append(series)
    curve = tacf(path_tf_cf(ensemble, (0.0, FC), lags, [0.0], cfg))
    oracle = p[0] * np.exp(2j * np.pi * f[0] * lags) + p[1] * np.exp(2j * np.pi * f[1] * lags)
    err_tacf = float(np.max(np.abs(curve - oracle)))
    spec = dpsd(curve, lags)
    ref = dpsd(oracle, lags)
    err_dpsd = float(np.max(np.abs(spec.psd - ref.psd)) / np.max(ref.psd))
    peaks = spec.peak_freqs(2)
    peaks_ok = np.allclose(peaks, sorted(f), atol=spec.bin_width / 2)
    elapsed = time.perf_counter() - t0
    _verdict(7, err_tacf < 1e-9 and err_dpsd < 1e-9 and peaks_ok,
             f"TACF err {err_tacf:.1e}, DPSD rel err {err_dpsd:.1e} (<1e-9), peaks {peaks.round(2).tolist()} "
             f"vs {np.round(sorted(f), 2).tolist()} Hz", elapsed, 5.0)


# --- 8 ------------------------------------------------------------------------


def test_criterion_08_tacf_ordering_and_nonstationarity():
    t0 = time.perf_counter()
    R = 200
    fine = np.arange(0, 21) * 250e-6
    times = np.unique(np.round(np.concatenate([fine, np.arange(1, 200) * 0.01, 2.0 + fine]), 12))
    i_1ms = 4
    res = {}
    for vtd in Vtd:
        scenario = Scenario.straight(vtd, 80.0, 18.0, 15.0, scene=SceneConfig(14.0, 15.0))
        ens = [run_realization(scenario, 8, r, times, evolution_interval=0.01, log_visibility=False).snapshots
               for r in range(R)]
        for anchor in (0.0, 2.0):
            s = path_tf_cf(ens, (anchor, FC), fine, [0.0], scenario.channel)
            res[(vtd, anchor)] = mean_abs_normalized(s.per_realization[:, :, 0])
    m = {v: res[(v, 0.0)][0][i_1ms] for v in Vtd}
    se = {v: res[(v, 0.0)][1][i_1ms] for v in Vtd}
    z_hm = _z(m[Vtd.MEDIUM], se[Vtd.MEDIUM], m[Vtd.HIGH], se[Vtd.HIGH])
    z_ml = _z(m[Vtd.LOW], se[Vtd.LOW], m[Vtd.MEDIUM], se[Vtd.MEDIUM])
    ordering = z_hm > 3 and z_ml > 3
    z_time = {}
    for v in Vtd:
        (a, sa), (b, sb) = res[(v, 0.0)], res[(v, 2.0)]
        z_time[v] = float(np.max(np.abs(a[1:] - b[1:]) / np.hypot(sa[1:], sb[1:])))
    nonstationary = all(z > 3 for z in z_time.values())
    elapsed = time.perf_counter() - t0
    detail = (
        f"|TACF(1 ms)| high {m[Vtd.HIGH]:.4f}+-{se[Vtd.HIGH]:.4f}, medium {m[Vtd.MEDIUM]:.4f}+-{se[Vtd.MEDIUM]:.4f}, "
        f"low {m[Vtd.LOW]:.4f}+-{se[Vtd.LOW]:.4f}; gaps z={z_hm:.2f}, {z_ml:.2f} (need >3): "
        f"{'ok' if ordering else 'ordering not reproduced'}; t=0 vs t=2 s max z "
        + ", ".join(f"{v.value} {z:.1f}" for v, z in z_time.items())
    )
    _verdict(8, ordering and nonstationary, detail, elapsed, 300.0)


# --- 9 ------------------------------------------------------------------------


def test_criterion_09_fcf_frequency_nonstationarity():
    t0 = time.perf_counter()
    R = 200
    df = 20e6
    scenario = Scenario.straight(Vtd.MEDIUM, 50.0, 15.0, 17.0, scene=SceneConfig(8.0, 8.0))
    ens = [run_realization(scenario, 9, r, [0.0], log_visibility=False).snapshots for r in range(R)]
    # Both lags stay inside the 27-29 GHz band; |FCF| is even in the lag sign.
    lo = path_tf_cf(ens, (0.0, 27e9), [0.0], [0.0, df], scenario.channel)
    hi = path_tf_cf(ens, (0.0, 29e9), [0.0], [0.0, -df], scenario.channel)
    m27, s27 = mean_abs_normalized(lo.per_realization[:, 0, :])
    m29, s29 = mean_abs_normalized(hi.per_realization[:, 0, :])
    z = _z(m27[1], s27[1], m29[1], s29[1])
    elapsed = time.perf_counter() - t0
    _verdict(9, z > 3, f"|FCF(20 MHz)| 27 GHz {m27[1]:.4f}+-{s27[1]:.4f} > 29 GHz {m29[1]:.4f}+-{s29[1]:.4f}, "
             f"z={z:.2f} (need >3)", elapsed, 300.0)


# --- 10 -----------------------------------------------------------------------


def _flatness_batches(vtd, R=200, batches=20):
    lags = np.arange(64) * 100e-6
    scenario = Scenario.straight(vtd, 83.6, 10.0, 6.0, scene=SceneConfig(8.0, 8.0))
    ens = [run_realization(scenario, 10, r, lags, evolution_interval=1e-3, log_visibility=False).snapshots
           for r in range(R)]
    f_max = max(float(np.abs(s.dopplers).max()) for series in ens for s in series)
    per = path_tf_cf(ens, (0.0, FC), lags, [0.0], scenario.channel).per_realization[:, :, 0]
    values = []
    for b in range(batches):
        y = per[b::batches].mean(axis=0)
        values.append(dpsd(y / y[0], lags).flatness(max_abs_freq=f_max))
    values = np.array(values)
    return values.mean(), values.std(ddof=1) / math.sqrt(batches)


def test_criterion_10_dpsd_flatness():
    t0 = time.perf_counter()
    high = _flatness_batches(Vtd.HIGH)
    low = _flatness_batches(Vtd.LOW)
    z = _z(*high, *low)
    elapsed = time.perf_counter() - t0
    _verdict(10, z > 3, f"DPSD flatness high {high[0]:.4f}+-{high[1]:.4f} vs low {low[0]:.4f}+-{low[1]:.4f}, "
             f"z={z:.2f} (need >3)", elapsed, 300.0)


# --- 11 -----------------------------------------------------------------------


def test_criterion_11_consistency_vs_birth_death():
    t0 = time.perf_counter()
    R = 200
    lags = np.arange(11) * 50e-6
    scenario = Scenario.straight(Vtd.LOW, 54.8, 8.33, 10.0, scene=SceneConfig(12.0, 12.0))
    out = {}
    for name in ("vr", "birth-death"):
        ens = []
        for r in range(R):
            evolver = None if name == "vr" else birth_death_evolver(scenario.table, 12.0)
            ens.append(run_realization(scenario, 12, r, lags, evolver=evolver, log_visibility=False).snapshots)
        s = path_tf_cf(ens, (0.0, FC), lags, [0.0], scenario.channel)
        mean, se = mean_abs_normalized(s.per_realization[:, :, 0])
        out[name] = (mean[10], se[10])
    z = _z(*out["vr"], *out["birth-death"])
    elapsed = time.perf_counter() - t0
    _verdict(11, z > 3, f"|TACF(0.5 ms)| VR {out['vr'][0]:.4f}+-{out['vr'][1]:.4f} vs birth-death "
             f"{out['birth-death'][0]:.4f}+-{out['birth-death'][1]:.4f}, z={z:.2f} (need >3)", elapsed, 300.0)


# --- 12 -----------------------------------------------------------------------


def test_criterion_12_crossroad_labels():
    t0 = time.perf_counter()
    frame = build_crossroad()
    pts = align_frame(frame.relative_points, frame.pose)
    above = remove_ground(pts)
    labels = [s.label for s in label_scatterers(frame.scatterers, detect_objects(above), above)]
    known = [(got, want) for got, want in zip(labels, frame.expected) if want.value != "unknown"]
    unknown = [(got, want) for got, want in zip(labels, frame.expected) if want.value == "unknown"]
    n_known = sum(g == w for g, w in known)
    n_unknown = sum(g == w for g, w in unknown)
    elapsed = time.perf_counter() - t0
    _verdict(12, len(known) == 20 and n_known == 20 and len(unknown) == 2 and n_unknown == 2,
             f"{n_known}/{len(known)} static/dynamic labels, {n_unknown}/{len(unknown)} Unknown", elapsed, 5.0)


# --- 13 -----------------------------------------------------------------------


def _tree_bytes(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


def test_criterion_13_end_to_end_determinism(tmp_path):
    cfg = tmp_path / "run.yaml"
    cfg.write_text("seed: 13\nrealizations: 8\nscenario:\n  vtd: medium\n")
    timings = []
    for name, workers in (("a", 1), ("b", 1), ("c", 8)):
        t0 = time.perf_counter()
        rc = main(["simulate", "--config", str(cfg), "--out", str(tmp_path / name), "--workers", str(workers)])
        timings.append((time.perf_counter() - t0) / 8)
        assert rc == 0
    a, b, c = (_tree_bytes(tmp_path / n) for n in "abc")
    snapshots = {len({line.split(b",")[0] for line in a["realization_0000/cir.csv"].splitlines()[1:]})}
    same = a == b and a == c and len(a) == 24
    per_realization = max(timings)
    _verdict(13, same and snapshots == {300},
             f"{len(a)} CSV files byte-identical across 2 runs and 1 vs 8 workers: {same}; "
             f"{snapshots.pop()} snapshots; worst {per_realization:.2f} s per realization (<10 s)",
             per_realization, 10.0)
