"""Reconstruction comparison metrics and SWC import/export.

Both metrics operate on discrete polylines in µm and expect inputs resampled
at 1 µm: the discrete Frechet distance is the minimax distance over monotone
couplings, spatial distance the symmetrized mean nearest-point distance.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

SWC_AXON_TYPE = 2
DEFAULT_RADIUS_UM = 1.0


def as_polyline(points) -> np.ndarray:
    """Validate an (N, 3) point list; drops nothing, raises on duplicates."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
        raise ValueError("polyline must be an (N, 3) array with N >= 1")
    if pts.shape[0] > 1 and (np.linalg.norm(np.diff(pts, axis=0), axis=1) == 0).any():
        raise ValueError("polyline has consecutive duplicate points")
    return pts


def dedupe_polyline(points) -> np.ndarray:
    """Drop consecutive duplicates so arbitrary point lists become valid polylines."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    keep = [0]
    for i in range(1, pts.shape[0]):
        if np.linalg.norm(pts[i] - pts[keep[-1]]) > 0:
            keep.append(i)
    return pts[keep]


def polyline_length(points: np.ndarray) -> float:
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())


def resample_polyline(points, step_um: float = 1.0) -> np.ndarray:
    """Arc-length resampling that preserves every original vertex.

    Each segment is subdivided into ceil(len / step) equal pieces, so
    consecutive samples are at most ``step_um`` apart and the resampled curve
    traces exactly the same path (arc length unchanged). A single-point
    polyline is returned unchanged; a segment shorter than one step gains no
    interior points.
    """
    if step_um <= 0:
        raise ValueError("step must be positive")
    pts = as_polyline(points)
    if pts.shape[0] == 1:
        return pts.copy()
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        length = float(np.linalg.norm(b - a))
        n = max(1, int(np.ceil(length / step_um - 1e-12)))
        fracs = np.arange(1, n + 1, dtype=float) / n
        out.extend(a + f * (b - a) for f in fracs)
    return np.asarray(out)


def frechet_discrete(p, q) -> float:
    """Discrete Frechet distance (Euclidean norm) via the standard DP.

    d(i, j) = max(|P_i - Q_j|, min(d(i-1, j), d(i, j-1), d(i-1, j-1)))
    """
    p = as_polyline(p)
    q = as_polyline(q)
    dist = cdist(p, q)
    n, m = dist.shape
    row = np.empty(m)
    row[0] = dist[0, 0]
    for j in range(1, m):
        row[j] = max(dist[0, j], row[j - 1])
    for i in range(1, n):
        prev = row
        row = np.empty(m)
        row[0] = max(dist[i, 0], prev[0])
        for j in range(1, m):
            row[j] = max(dist[i, j], min(prev[j], row[j - 1], prev[j - 1]))
    return float(row[-1])


def directed_divergence(p, q) -> float:
    """Mean over points of P of the distance to the closest point of Q."""
    p = as_polyline(p)
    q = as_polyline(q)
    return float(cdist(p, q).min(axis=1).mean())


def spatial_distance(p, q) -> float:
    """Average of the two directed divergences."""
    return 0.5 * (directed_divergence(p, q) + directed_divergence(q, p))


def swc_text(points, radius_um: float = DEFAULT_RADIUS_UM) -> str:
    """Render a non-branching chain as SWC rows ``id type x y z radius parent``."""
    pts = as_polyline(points)
    lines = []
    for i, (x, y, z) in enumerate(pts, start=1):
        parent = i - 1 if i > 1 else -1
        lines.append(f"{i} {SWC_AXON_TYPE} {x:.6f} {y:.6f} {z:.6f} {radius_um:.6f} {parent}")
    return "\n".join(lines) + "\n"


def export_swc(path, points, radius_um: float = DEFAULT_RADIUS_UM) -> None:
    Path(path).write_text(swc_text(points, radius_um))


def import_swc(path) -> np.ndarray:
    """Read a chain SWC back into a polyline; branching files are rejected."""
    points = []
    prev_id = None
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 7:
            raise ValueError(f"malformed SWC row: {raw!r}")
        node_id, _type = int(fields[0]), int(fields[1])
        x, y, z = (float(v) for v in fields[2:5])
        parent = int(fields[6])
        if prev_id is None:
            if parent != -1:
                raise ValueError("first SWC row must have parent -1")
        elif parent != prev_id:
            raise ValueError(f"row {node_id} is not a chain continuation")
        points.append((x, y, z))
        prev_id = node_id
    if not points:
        raise ValueError("SWC file holds no nodes")
    return np.asarray(points, dtype=float)
