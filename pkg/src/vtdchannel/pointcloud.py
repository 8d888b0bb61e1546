"""LiDAR frame processing: alignment, ground removal, object detection and
scatterer labeling.

A frame holds points relative to the sensor.  ``align_frame`` maps them to
the global frame using the sensor position and one of four axis-aligned
headings.  Ground points are removed by a z-histogram, the remainder is
grouped with DBSCAN and each group is classified by its bounding box: small
objects are vehicles, anything exceeding a threshold on some axis is a
static object (building, tree, ...).  Scatterers are then labeled by the
class of the nearest detected point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

__all__ = [
    "Heading",
    "SensorPose",
    "PointCloudFrame",
    "ObjectClass",
    "ScattererLabel",
    "DetectedObject",
    "LabeledScatterer",
    "DbscanResult",
    "PointFormatError",
    "align_frame",
    "invert_alignment",
    "remove_ground",
    "dbscan",
    "classify",
    "detect_objects",
    "label_scatterers",
    "read_points",
    "read_frame_manifest",
    "DEFAULT_SIZE_THRESHOLDS",
]

DEFAULT_SIZE_THRESHOLDS = (6.0, 3.0, 2.5)
DEFAULT_EPS = 1.5
DEFAULT_MIN_PTS = 5
DEFAULT_R_COINCIDE = 0.5
DEFAULT_Z_CUT = 0.3
DEFAULT_BIN_WIDTH = 0.1


class PointFormatError(ValueError):
    """A point or manifest file line could not be parsed."""


class Heading(str, Enum):
    """Sensor motion direction."""

    POS_X = "+x"
    NEG_X = "-x"
    POS_Y = "+y"
    NEG_Y = "-y"


@dataclass(frozen=True)
class SensorPose:
    position: tuple[float, float, float]
    heading: Heading

    def __post_init__(self):
        object.__setattr__(self, "heading", Heading(self.heading))
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))


@dataclass
class PointCloudFrame:
    timestamp: float
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        self.points = pts


class ObjectClass(str, Enum):
    VEHICLE = "vehicle"
    STATIC_OBJECT = "static-object"


class ScattererLabel(str, Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"
    UNKNOWN = "unknown"


@dataclass
class DetectedObject:
    members: np.ndarray
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    cls: ObjectClass

    @property
    def extent(self) -> np.ndarray:
        return self.bbox_max - self.bbox_min


@dataclass(frozen=True)
class LabeledScatterer:
    position: tuple[float, float, float]
    label: ScattererLabel


@dataclass
class DbscanResult:
    clusters: list[np.ndarray]
    noise: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    def labels(self, n: int) -> np.ndarray:
        """Per-point cluster index, -1 for noise."""
        out = np.full(n, -1, dtype=int)
        for k, members in enumerate(self.clusters):
            out[members] = k
        return out


def _as_points(points) -> np.ndarray:
    return np.asarray(points, dtype=float).reshape(-1, 3)


def align_frame(frame: PointCloudFrame | np.ndarray, pose: SensorPose) -> np.ndarray:
    """Map sensor-relative points to absolute coordinates.

    The vertical axis is flipped (``z = -z_rel - z_sen``) for every heading.
    """
    pts = _as_points(frame.points if isinstance(frame, PointCloudFrame) else frame)
    xs, ys, zs = pose.position
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    h = Heading(pose.heading)
    if h is Heading.POS_X:
        out = (x + xs, -y - ys, -z - zs)
    elif h is Heading.NEG_X:
        out = (-x + xs, y + ys, -z - zs)
    elif h is Heading.POS_Y:
        out = (y + xs, x + ys, -z - zs)
    else:
        out = (-y + xs, -x + ys, -z - zs)
    return np.column_stack(out)


def invert_alignment(points, pose: SensorPose) -> np.ndarray:
    """Inverse of :func:`align_frame`: absolute points back to sensor-relative."""
    pts = _as_points(points)
    xs, ys, zs = pose.position
    X, Y, Z = pts[:, 0], pts[:, 1], pts[:, 2]
    h = Heading(pose.heading)
    z = -Z - zs
    if h is Heading.POS_X:
        x, y = X - xs, -Y - ys
    elif h is Heading.NEG_X:
        x, y = -(X - xs), Y - ys
    elif h is Heading.POS_Y:
        x, y = Y - ys, X - xs
    else:
        x, y = -(Y - ys), -(X - xs)
    return np.column_stack((x, y, z))


def estimate_ground(points, bin_width: float = DEFAULT_BIN_WIDTH) -> float:
    """Ground height: median z of the most populated z-histogram bin."""
    z = _as_points(points)[:, 2]
    if z.size == 0:
        raise ValueError("cannot estimate ground from an empty point set")
    lo = np.floor(z.min() / bin_width) * bin_width
    idx = np.floor((z - lo) / bin_width).astype(np.int64)
    counts = np.bincount(idx)
    mode_bin = int(np.argmax(counts))
    return float(np.median(z[idx == mode_bin]))


def remove_ground(
    points,
    z_cut: float = DEFAULT_Z_CUT,
    bin_width: float = DEFAULT_BIN_WIDTH,
    *,
    return_mask: bool = False,
):
    """Drop points within ``z_cut`` of the estimated ground height."""
    if not np.isfinite(z_cut):
        raise ValueError("z_cut must be finite")
    pts = _as_points(points)
    if len(pts) == 0:
        mask = np.zeros(0, dtype=bool)
        return (pts, mask) if return_mask else pts
    ground = estimate_ground(pts, bin_width)
    mask = pts[:, 2] - ground > z_cut
    return (pts[mask], mask) if return_mask else pts[mask]


def dbscan(points, eps: float = DEFAULT_EPS, min_pts: int = DEFAULT_MIN_PTS) -> DbscanResult:
    """Density-based clustering.

    Core points have at least ``min_pts`` neighbours within ``eps`` (the
    point itself included).  Clusters are the connected components of core
    points under the ``eps`` relation, so they do not depend on input order.
    A border point joins the cluster of its nearest core neighbour; exact
    distance ties go to the cluster whose lowest-index member comes first.
    Clusters are listed in order of their lowest member index.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    pts = _as_points(points)
    n = len(pts)
    if n == 0:
        return DbscanResult([], np.empty(0, dtype=int))

    tree = cKDTree(pts)
    pairs = tree.query_pairs(eps, output_type="ndarray")
    degree = np.ones(n, dtype=np.int64)
    if len(pairs):
        np.add.at(degree, pairs[:, 0], 1)
        np.add.at(degree, pairs[:, 1], 1)
    core = degree >= min_pts

    labels = np.full(n, -1, dtype=np.int64)
    core_idx = np.flatnonzero(core)
    if core_idx.size:
        both = core[pairs[:, 0]] & core[pairs[:, 1]] if len(pairs) else np.zeros(0, dtype=bool)
        cp = pairs[both] if len(pairs) else np.empty((0, 2), dtype=np.int64)
        graph = sparse.coo_matrix((np.ones(len(cp)), (cp[:, 0], cp[:, 1])), shape=(n, n))
        _, comp = connected_components(graph, directed=False)
        # Renumber components by their lowest core index (core_idx is ascending).
        order: dict[int, int] = {}
        for i in core_idx:
            order.setdefault(int(comp[i]), len(order))
        labels[core_idx] = [order[int(comp[i])] for i in core_idx]

        border = np.flatnonzero(~core)
        if border.size and len(pairs):
            core_tree = cKDTree(pts[core_idx])
            for i in border:
                hits = core_tree.query_ball_point(pts[i], eps)
                if not hits:
                    continue
                hits = core_idx[np.asarray(hits)]
                d = np.linalg.norm(pts[hits] - pts[i], axis=1)
                nearest = hits[d == d.min()]
                labels[i] = int(min(labels[nearest]))

    n_clusters = int(labels.max()) + 1 if n else 0
    clusters = [np.flatnonzero(labels == k) for k in range(n_clusters)]
    clusters.sort(key=lambda m: int(m[0]))
    return DbscanResult(clusters, np.flatnonzero(labels < 0))


def classify(bbox_extent, thresholds=DEFAULT_SIZE_THRESHOLDS) -> ObjectClass:
    """Vehicle iff the extent is below the threshold on every axis."""
    ext = np.asarray(bbox_extent, dtype=float)
    thr = np.asarray(thresholds, dtype=float)
    if np.any(thr <= 0):
        raise ValueError("size thresholds must be > 0")
    return ObjectClass.VEHICLE if bool(np.all(ext < thr)) else ObjectClass.STATIC_OBJECT


def detect_objects(
    points,
    eps: float = DEFAULT_EPS,
    min_pts: int = DEFAULT_MIN_PTS,
    thresholds=DEFAULT_SIZE_THRESHOLDS,
) -> list[DetectedObject]:
    pts = _as_points(points)
    result = dbscan(pts, eps, min_pts)
    objects = []
    for members in result.clusters:
        lo = pts[members].min(axis=0)
        hi = pts[members].max(axis=0)
        objects.append(DetectedObject(members, lo, hi, classify(hi - lo, thresholds)))
    return objects


def label_scatterers(
    scatterers,
    objects: Sequence[DetectedObject],
    points,
    r_coincide: float = DEFAULT_R_COINCIDE,
) -> list[LabeledScatterer]:
    """Label each scatterer by the class of the nearest object point.

    Only points within ``r_coincide`` count; with none the scatterer is
    Unknown.  When a vehicle point and a static-object point are exactly
    equally near, the label is Dynamic.
    """
    if not r_coincide > 0:
        raise ValueError("r_coincide must be > 0")
    pts = _as_points(points)
    sc = _as_points(scatterers)
    member_idx = [obj.members for obj in objects]
    if member_idx:
        idx = np.concatenate(member_idx)
        is_vehicle = np.concatenate(
            [np.full(len(obj.members), obj.cls is ObjectClass.VEHICLE) for obj in objects]
        )
    else:
        idx = np.empty(0, dtype=int)
        is_vehicle = np.empty(0, dtype=bool)

    out = []
    tree = cKDTree(pts[idx]) if idx.size else None
    for s in sc:
        label = ScattererLabel.UNKNOWN
        if tree is not None:
            hits = tree.query_ball_point(s, r_coincide)
            if hits:
                hits = np.asarray(hits)
                d = np.linalg.norm(pts[idx[hits]] - s, axis=1)
                nearest = hits[d == d.min()]
                label = ScattererLabel.DYNAMIC if is_vehicle[nearest].any() else ScattererLabel.STATIC
        out.append(LabeledScatterer(tuple(float(v) for v in s), label))
    return out


# --------------------------------------------------------------------------
# File formats
# --------------------------------------------------------------------------


def read_points(path) -> np.ndarray:
    """Read ``x y z`` lines; blank lines and ``#`` comments are skipped."""
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 3:
                raise PointFormatError(f"{path}:{lineno}: expected 3 coordinates, got {len(parts)}")
            try:
                xyz = [float(p) for p in parts]
            except ValueError as exc:
                raise PointFormatError(f"{path}:{lineno}: {exc}") from exc
            if not all(np.isfinite(xyz)):
                raise PointFormatError(f"{path}:{lineno}: non-finite coordinate")
            rows.append(xyz)
    return np.asarray(rows, dtype=float).reshape(-1, 3)


@dataclass(frozen=True)
class ManifestEntry:
    timestamp: float
    pose: SensorPose
    points_path: Path
    scatterers_path: Path | None


def read_frame_manifest(path) -> list[ManifestEntry]:
    """Parse a frame manifest.

    One frame per line: ``timestamp x_sen y_sen z_sen heading points_file
    [scatterers_file]``.  File paths are relative to the manifest.
    """
    base = Path(path).parent
    entries = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (6, 7):
                raise PointFormatError(f"{path}:{lineno}: expected 6 or 7 fields, got {len(parts)}")
            try:
                t = float(parts[0])
                pos = (float(parts[1]), float(parts[2]), float(parts[3]))
                pose = SensorPose(pos, Heading(parts[4]))
            except ValueError as exc:
                raise PointFormatError(f"{path}:{lineno}: {exc}") from exc
            scat = base / parts[6] if len(parts) == 7 else None
            entries.append(ManifestEntry(t, pose, base / parts[5], scat))
    return entries
