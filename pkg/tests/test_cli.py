import csv
import json
from pathlib import Path

import numpy as np
import pytest

from crossroad import build_crossroad
from vtdchannel.charfit import link_from_scene, write_links
from vtdchannel.cli import main
from vtdchannel.config import build_run, load_config
from vtdchannel.registry import ParamTable, Vtd, builtin_table
from vtdchannel.scene import Track, Trajectory, init_scene
from vtdchannel.streams import make_stream


def _write(path, text):
    path.write_text(text)
    return path


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


SMALL = """\
seed: 3
realizations: 2
scenario:
  vtd: medium
  distance_m: 60
sampling:
  duration_s: 0.1
  interval_s: 0.01
  tvtf_points: 5
"""


# --- simulate -----------------------------------------------------------------


def test_simulate_default_emits_300_snapshots(tmp_path):
    assert main(["simulate", "--out", str(tmp_path / "run"), "--seed", "1"]) == 0
    rows = _rows(tmp_path / "run" / "realization_0000" / "cir.csv")
    assert rows[0] == ["t", "kind", "cluster_id", "scatterer_id", "re", "im", "delay_ns", "doppler_hz"]
    assert len({r[0] for r in rows[1:]}) == 300
    vis = _rows(tmp_path / "run" / "realization_0000" / "visibility.csv")
    assert vis[0] == ["t", "cluster_id", "class", "visible", "spawned"]
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    assert manifest["subcommand"] == "simulate" and manifest["seed"] == 1
    assert manifest["snapshots"] == 300


def test_simulate_is_byte_identical(tmp_path):
    cfg = _write(tmp_path / "run.yaml", SMALL)
    for name in ("a", "b"):
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    for r in range(2):
        for f in ("cir.csv", "tvtf.csv", "visibility.csv"):
            a = (tmp_path / "a" / f"realization_{r:04d}" / f).read_bytes()
            b = (tmp_path / "b" / f"realization_{r:04d}" / f).read_bytes()
            assert a == b
    ma = json.loads((tmp_path / "a" / "manifest.json").read_text())
    mb = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert ma["config_sha256"] == mb["config_sha256"] and len(ma["config_sha256"]) == 64
    ma.pop("output_dir"), mb.pop("output_dir")
    assert ma == mb


def test_tvtf_grid_shape(tmp_path):
    cfg = _write(tmp_path / "run.yaml", SMALL)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = _rows(tmp_path / "o" / "realization_0001" / "tvtf.csv")
    assert rows[0] == ["t", "f", "re", "im"]
    assert len(rows) - 1 == 10 * 5
    freqs = sorted({float(r[1]) for r in rows[1:]})
    assert freqs[0] == 27e9 and freqs[-1] == 29e9


@pytest.mark.parametrize(
    "text, key",
    [
        ("channel:\n  eta_gr: 0.2\n  eta_static: 0.4\n  eta_dynamic: 0.3\n", "eta"),
        ("evolution:\n  eps_static: 1.5\n", "evolution.eps"),
        ("scenario:\n  vtd: rush-hour\n", "scenario.vtd"),
        ("scenario:\n  speed: 3\n", "scenario.speed"),
        ("sampling:\n  interval_s: -1\n", "sampling.interval_s"),
        ("- just\n- a list\n", "config"),
    ],
)
def test_simulate_validation_errors(tmp_path, capsys, text, key):
    cfg = _write(tmp_path / "bad.yaml", text)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert key in err


def test_eta_error_names_constraint(tmp_path, capsys):
    cfg = _write(tmp_path / "bad.yaml", "channel:\n  eta_gr: 0.2\n  eta_static: 0.4\n  eta_dynamic: 0.3\n")
    main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert "must equal 1" in capsys.readouterr().err


def test_command_line_overrides(tmp_path):
    cfg = _write(tmp_path / "run.yaml", SMALL)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--realizations", "1",
                 "--vtd", "high", "--eps-static", "0.9"]) == 0
    m = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert m["effective_config"]["scenario"]["vtd"] == "high"
    assert m["effective_config"]["evolution"]["eps_static"] == 0.9
    assert not (tmp_path / "o" / "realization_0001").exists()


def test_unknown_subcommand_is_usage_error():
    assert main(["teleport"]) == 2


# --- fit ----------------------------------------------------------------------


def _links_file(path, vtd, n, seed):
    table = builtin_table()
    links = []
    for k in range(n):
        s = make_stream(seed, k)
        d = s.uniform(40, 120)
        tx = Track((0, 0, 1.5), Trajectory.constant((0, 0, 0)))
        rx = Track((d, 0, 1.5), Trajectory.constant((0, 0, 0)))
        links.append(link_from_scene(init_scene(table, vtd, tx, rx, s), table, link_id=k))
    write_links(path, links)
    return path


def test_fit_emits_table_and_report(tmp_path):
    args = [f"{v.value}={_links_file(tmp_path / f'{v.value}.txt', v, 60, i)}" for i, v in enumerate(Vtd)]
    assert main(["fit", *args, "--out", str(tmp_path / "fit")]) == 0
    table = ParamTable.load(tmp_path / "fit" / "param_table.txt")
    assert len(table) == 48
    report = _rows(tmp_path / "fit" / "fit_report.csv")
    assert report[0] == ["vtd", "class", "family", "n", "ks"]
    assert len(report) - 1 == 48


def test_fit_missing_buckets(tmp_path, capsys):
    path = _links_file(tmp_path / "high.txt", Vtd.HIGH, 5, 0)
    assert main(["fit", str(path), "--vtd", "high", "--out", str(tmp_path / "fit")]) == 3
    assert "medium" in capsys.readouterr().err


def test_fit_empty_file(tmp_path):
    path = _write(tmp_path / "empty.txt", "")
    assert main(["fit", f"low={path}", "--out", str(tmp_path / "fit")]) == 3


def test_fit_needs_vtd_label(tmp_path):
    path = _write(tmp_path / "x.txt", "")
    assert main(["fit", str(path), "--out", str(tmp_path / "fit")]) == 2


# --- pointcloud ---------------------------------------------------------------


def _pointcloud_inputs(tmp_path):
    frame = build_crossroad()
    np.savetxt(tmp_path / "f0.xyz", frame.relative_points, fmt="%.17g")
    np.savetxt(tmp_path / "s0.xyz", frame.scatterers, fmt="%.17g")
    (tmp_path / "empty.xyz").write_text("")
    x, y, z = frame.pose.position
    heading = frame.pose.heading.value
    manifest = _write(
        tmp_path / "frames.txt",
        f"0.0 {x!r} {y!r} {z!r} {heading} f0.xyz s0.xyz\n0.1 {x!r} {y!r} {z!r} {heading} empty.xyz\n",
    )
    return frame, manifest


def test_pointcloud_labels_crossroad(tmp_path):
    frame, manifest = _pointcloud_inputs(tmp_path)
    assert main(["pointcloud", str(manifest), "--out", str(tmp_path / "pc")]) == 0
    rows = _rows(tmp_path / "pc" / "frame_0000_labels.csv")
    assert rows[0] == ["x", "y", "z", "label"]
    assert [r[3] for r in rows[1:]] == [lbl.value for lbl in frame.expected]
    det = _rows(tmp_path / "pc" / "detections.csv")
    assert sorted(r[3] for r in det[1:] if r[0] == "0") == ["static-object", "vehicle", "vehicle"]
    # The empty frame yields no detections and an empty label file.
    assert not [r for r in det[1:] if r[0] == "1"]
    assert _rows(tmp_path / "pc" / "frame_0001_labels.csv") == [["x", "y", "z", "label"]]


def test_pointcloud_malformed_line(tmp_path, capsys):
    (tmp_path / "bad.xyz").write_text("1 2 3\n4 5\n")
    manifest = _write(tmp_path / "frames.txt", "0 0 0 1.8 +x bad.xyz\n")
    assert main(["pointcloud", str(manifest), "--out", str(tmp_path / "pc")]) == 3
    assert "bad.xyz:2" in capsys.readouterr().err


def test_pointcloud_bad_heading(tmp_path):
    manifest = _write(tmp_path / "frames.txt", "0 0 0 1.8 north f.xyz\n")
    assert main(["pointcloud", str(manifest), "--out", str(tmp_path / "pc")]) == 3


# --- stats --------------------------------------------------------------------


@pytest.fixture()
def small_run(tmp_path):
    cfg = _write(tmp_path / "run.yaml", SMALL.replace("realizations: 2", "realizations: 4"))
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "sim")]) == 0
    return tmp_path / "sim"


def test_stats_outputs(small_run, tmp_path):
    out = tmp_path / "st"
    assert main(["stats", str(small_run), "--out", str(out), "--anchor-time", "0", "--anchor-time", "0.05",
                 "--anchor-freq", "27.5e9", "--max-dt", "0.04", "--max-df", "1e9"]) == 0
    for i in range(2):
        tacf_rows = _rows(out / f"tacf_{i}.csv")
        assert tacf_rows[0] == ["dt_s", "re", "im"] and len(tacf_rows) - 1 == 5
        assert float(tacf_rows[1][1]) == 1.0 and float(tacf_rows[1][2]) == 0.0
        fcf_rows = _rows(out / f"fcf_{i}.csv")
        assert fcf_rows[0] == ["df_hz", "re", "im"] and len(fcf_rows) - 1 == 3
        dp = _rows(out / f"dpsd_{i}.csv")
        assert dp[0] == ["fd_hz", "psd"] and len(dp) - 1 == 9


def test_stats_errors(small_run, tmp_path):
    assert main(["stats", str(small_run), "--out", str(tmp_path / "x"), "--anchor-time", "9"]) == 3
    assert main(["stats", str(small_run), "--out", str(tmp_path / "x"), "--anchor-freq", "30e9"]) == 3
    empty = tmp_path / "none"
    empty.mkdir()
    assert main(["stats", str(empty), "--out", str(tmp_path / "x")]) == 3


def test_shipped_config_is_valid():
    cfg, _ = load_config(Path(__file__).parent.parent / "configs" / "medium.yaml")
    run = build_run(cfg)
    assert run.times.size == 300 and run.freqs.size == 65 and run.seed == 7
