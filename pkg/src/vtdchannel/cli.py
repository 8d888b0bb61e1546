"""Command-line entry point: ``vtdchannel {simulate,fit,pointcloud,stats}``.

Exit codes: 0 on success, 2 for invalid configuration or arguments, 3 for
unreadable or inconsistent input data.  Every command writes a
``manifest.json`` into its output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .channel import PathKind, tvtf
from .charfit import LinkFormatError, MissingBucketsError, build_table, read_links
from .config import ConfigError, build_run, config_digest, load_config, merge_config
from .pointcloud import (
    DEFAULT_EPS,
    DEFAULT_MIN_PTS,
    DEFAULT_R_COINCIDE,
    DEFAULT_Z_CUT,
    PointFormatError,
    align_frame,
    detect_objects,
    label_scatterers,
    read_frame_manifest,
    read_points,
    remove_ground,
)
from .registry import ParameterDomainError, ProbabilityDomainError, TableFormatError, Vtd
from .simulate import run_ensemble
from .stats import LagRangeError, dpsd, fcf, tacf, tf_cf

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DATA = 3

MANIFEST = "manifest.json"
_KIND_NAMES = [PathKind.LOS, PathKind.GROUND_REFLECTION, PathKind.STATIC_NLOS, PathKind.DYNAMIC_NLOS]


class DataError(ValueError):
    """Input files are missing, malformed or mutually inconsistent."""


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _write_manifest(out: Path, command: str, args: argparse.Namespace, *, config_path=None,
                    raw: bytes | None = None, effective: dict | None = None, extra: dict | None = None,
                    seed: int | None = None) -> None:
    manifest = {
        "tool": "vtdchannel",
        "version": __version__,
        "subcommand": command,
        "config_path": None if config_path is None else str(config_path),
        "config_sha256": None if raw is None else config_digest(raw),
        "seed": seed if seed is not None else getattr(args, "seed", None),
        "output_dir": str(args.out),
        "arguments": {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")},
    }
    if effective is not None:
        manifest["effective_config"] = effective
    if extra:
        manifest.update(extra)
    (out / MANIFEST).write_text(json.dumps(manifest, sort_keys=True, indent=2, default=str) + "\n")


# --------------------------------------------------------------------------
# simulate
# --------------------------------------------------------------------------


def _resolve_config(args) -> tuple[dict, bytes | None]:
    if args.config is not None:
        cfg, raw = load_config(args.config)
    else:
        cfg, raw = merge_config({}), None
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "realizations", None) is not None:
        cfg["realizations"] = args.realizations
    if getattr(args, "workers", None) is not None:
        cfg["workers"] = args.workers
    if getattr(args, "vtd", None) is not None:
        cfg["scenario"]["vtd"] = args.vtd
    if getattr(args, "eps_static", None) is not None:
        cfg["evolution"]["eps_static"] = args.eps_static
    if getattr(args, "eps_dynamic", None) is not None:
        cfg["evolution"]["eps_dynamic"] = args.eps_dynamic
    return cfg, raw


def write_cir(path: Path, snapshots) -> None:
    with open(path, "w") as fh:
        fh.write("t,kind,cluster_id,scatterer_id,re,im,delay_ns,doppler_hz\n")
        for s in snapshots:
            t = _fmt(s.time)
            for k, g, d, f, c, p in zip(s.kinds, s.gains, s.delays, s.dopplers, s.cluster_ids, s.path_ids):
                fh.write(
                    f"{t},{_KIND_NAMES[k].value},{int(c)},{int(p)},{_fmt(g.real)},{_fmt(g.imag)},"
                    f"{_fmt(d * 1e9)},{_fmt(f)}\n"
                )


def write_tvtf(path: Path, times, freqs, H) -> None:
    tt, ff = np.meshgrid(times, freqs, indexing="ij")
    rows = np.column_stack([tt.ravel(), ff.ravel(), H.real.ravel(), H.imag.ravel()])
    np.savetxt(path, rows, fmt="%.17g", delimiter=",", header="t,f,re,im", comments="")


def write_visibility(path: Path, rows) -> None:
    with open(path, "w") as fh:
        fh.write("t,cluster_id,class,visible,spawned\n")
        for t, pid, cls, vis, new in rows:
            fh.write(f"{_fmt(t)},{pid},{cls},{vis},{new}\n")


def realization_dir(out: Path, r: int) -> Path:
    return out / f"realization_{r:04d}"


def cmd_simulate(args) -> int:
    cfg, raw = _resolve_config(args)
    run = build_run(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ensemble = run_ensemble(
        run.scenario, run.seed, run.realizations, run.times,
        workers=run.workers, evolution_interval=run.evolution_interval,
    )
    for r, real in enumerate(ensemble):
        d = realization_dir(out, r)
        d.mkdir(exist_ok=True)
        write_cir(d / "cir.csv", real.snapshots)
        write_tvtf(d / "tvtf.csv", run.times, run.freqs, tvtf(real.snapshots, run.freqs, run.scenario.channel))
        write_visibility(d / "visibility.csv", real.visibility)
    _write_manifest(out, "simulate", args, config_path=args.config, raw=raw, effective=cfg, seed=run.seed,
                    extra={"realizations": run.realizations, "snapshots": int(run.times.size)})
    return EXIT_OK


# --------------------------------------------------------------------------
# fit
# --------------------------------------------------------------------------


def _link_inputs(items: Sequence[str], default_vtd: str | None) -> dict:
    groups: dict = {}
    for item in items:
        if "=" in item:
            label, path = item.split("=", 1)
        elif default_vtd is not None:
            label, path = default_vtd, item
        else:
            raise ConfigError(f"links: {item!r} has no traffic-density label; use VTD=PATH or --vtd")
        try:
            vtd = Vtd(label.lower())
        except ValueError:
            raise ConfigError(f"vtd: must be one of high, medium, low; got {label!r}") from None
        groups.setdefault(vtd, []).extend(read_links(path))
    return groups


def cmd_fit(args) -> int:
    groups = _link_inputs(args.links, args.vtd)
    table, report = build_table(groups, seed=args.seed or 0, truncate_numbers=not args.no_truncate)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table.dump(out / "param_table.txt")
    with open(out / "fit_report.csv", "w") as fh:
        fh.write("vtd,class,family,n,ks\n")
        for v, c, f, n, ks in report.rows:
            fh.write(f"{v.value},{c.value},{f.value},{n},{_fmt(ks)}\n")
    _write_manifest(out, "fit", args, extra={"inputs": [str(x) for x in args.links]})
    return EXIT_OK


# --------------------------------------------------------------------------
# pointcloud
# --------------------------------------------------------------------------


def cmd_pointcloud(args) -> int:
    entries = read_frame_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "detections.csv", "w") as det:
        det.write("frame,t,object,class,points,min_x,min_y,min_z,max_x,max_y,max_z\n")
        for i, entry in enumerate(entries):
            pts = align_frame(read_points(entry.points_path), entry.pose)
            above = remove_ground(pts, args.z_cut) if len(pts) else pts
            objects = detect_objects(above, args.eps, args.min_pts) if len(above) else []
            for j, obj in enumerate(objects):
                box = ",".join(_fmt(v) for v in (*obj.bbox_min, *obj.bbox_max))
                det.write(f"{i},{_fmt(entry.timestamp)},{j},{obj.cls.value},{len(obj.members)},{box}\n")
            scat = read_points(entry.scatterers_path) if entry.scatterers_path else np.empty((0, 3))
            labels = label_scatterers(scat, objects, above, args.r_coincide) if len(scat) else []
            with open(out / f"frame_{i:04d}_labels.csv", "w") as fh:
                fh.write("x,y,z,label\n")
                for s in labels:
                    fh.write(f"{_fmt(s.position[0])},{_fmt(s.position[1])},{_fmt(s.position[2])},{s.label.value}\n")
    _write_manifest(out, "pointcloud", args, extra={"frames": len(entries)})
    return EXIT_OK


# --------------------------------------------------------------------------
# stats
# --------------------------------------------------------------------------


def read_tvtf(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Times, frequencies and ``H[t, f]`` from a TVTF CSV."""
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    if data.shape[1] != 4:
        raise DataError(f"{path}: expected 4 columns t,f,re,im")
    times = np.unique(data[:, 0])
    freqs = np.unique(data[:, 1])
    if times.size * freqs.size != data.shape[0]:
        raise DataError(f"{path}: rows do not form a full time-frequency grid")
    order = np.lexsort((data[:, 1], data[:, 0]))
    H = (data[order, 2] + 1j * data[order, 3]).reshape(times.size, freqs.size)
    return times, freqs, H


def cmd_stats(args) -> int:
    sim = Path(args.simulation)
    dirs = sorted(p for p in sim.glob("realization_*") if p.is_dir())
    if len(dirs) < 2:
        raise DataError(f"{sim}: found {len(dirs)} realization directories; at least 2 are needed")
    times = freqs = None
    stack = []
    for d in dirs:
        t, f, H = read_tvtf(d / "tvtf.csv")
        if times is None:
            times, freqs = t, f
        elif t.shape != times.shape or f.shape != freqs.shape or np.any(t != times) or np.any(f != freqs):
            raise DataError(f"{d}: time-frequency grid differs from {dirs[0]}")
        stack.append(H)
    H = np.stack(stack)
    anchor_f = args.anchor_freq if args.anchor_freq is not None else float(freqs[freqs.size // 2])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    anchors = args.anchor_time or [float(times[0])]
    written = []
    for i, t0 in enumerate(anchors):
        dt = times[(times >= t0 - 1e-12) & (times <= t0 + args.max_dt + 1e-12)] - t0
        df = freqs[(freqs >= anchor_f - 1e-3) & (freqs <= anchor_f + args.max_df + 1e-3)] - anchor_f
        if dt.size == 0 or df.size == 0:
            raise LagRangeError(f"anchor ({t0!r} s, {anchor_f!r} Hz) lies outside the simulated grid")
        dt[0] = 0.0
        df[0] = 0.0
        surface = tf_cf(H, times, freqs, (t0, anchor_f), dt, df)
        curve_t = tacf(surface)
        curve_f = fcf(surface)
        np.savetxt(out / f"tacf_{i}.csv", np.column_stack([dt, curve_t.real, curve_t.imag]),
                   fmt="%.17g", delimiter=",", header="dt_s,re,im", comments="")
        np.savetxt(out / f"fcf_{i}.csv", np.column_stack([df, curve_f.real, curve_f.imag]),
                   fmt="%.17g", delimiter=",", header="df_hz,re,im", comments="")
        if dt.size >= 2:
            spec = dpsd(curve_t, dt, anchor_time=t0, taper=args.taper)
            np.savetxt(out / f"dpsd_{i}.csv", np.column_stack([spec.freqs, spec.psd]),
                       fmt="%.17g", delimiter=",", header="fd_hz,psd", comments="")
        written.append({"index": i, "anchor_time_s": t0, "anchor_freq_hz": anchor_f})
    _write_manifest(out, "stats", args, extra={"anchors": written, "realizations": len(dirs)})
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vtdchannel", description="Vehicular mmWave channel simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate CIR, TVTF and visibility logs")
    p.add_argument("--config", type=Path, help="YAML run configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--realizations", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--vtd", choices=[v.value for v in Vtd])
    p.add_argument("--eps-static", type=float)
    p.add_argument("--eps-dynamic", type=float)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a parameter table from labelled link files")
    p.add_argument("links", nargs="+", help="VTD=PATH, or PATH together with --vtd")
    p.add_argument("--vtd", choices=[v.value for v in Vtd])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--no-truncate", action="store_true", help="fit number ratios without the zero truncation")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("pointcloud", help="label scatterers from LiDAR frames")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--eps", type=float, default=DEFAULT_EPS)
    p.add_argument("--min-pts", type=int, default=DEFAULT_MIN_PTS)
    p.add_argument("--r-coincide", type=float, default=DEFAULT_R_COINCIDE)
    p.add_argument("--z-cut", type=float, default=DEFAULT_Z_CUT)
    p.set_defaults(func=cmd_pointcloud)

    p = sub.add_parser("stats", help="TACF, FCF and DPSD from a simulation directory")
    p.add_argument("simulation", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--anchor-time", type=float, action="append")
    p.add_argument("--anchor-freq", type=float)
    p.add_argument("--max-dt", type=float, default=0.05)
    p.add_argument("--max-df", type=float, default=2e8)
    p.add_argument("--taper", choices=["raised-cosine", "bartlett", "none"], default="raised-cosine")
    p.set_defaults(func=cmd_stats)
    return parser


_VALIDATION_ERRORS = (ConfigError, ParameterDomainError, ProbabilityDomainError)
_DATA_ERRORS = (DataError, LinkFormatError, MissingBucketsError, PointFormatError, TableFormatError,
                LagRangeError, OSError)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
