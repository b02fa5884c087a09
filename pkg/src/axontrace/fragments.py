"""Turn a thresholded probability map into oriented supervoxel fragments.

Pipeline: threshold -> 26-connected components -> greedy 7 µm ball covering of
each component (centers at the highest-probability remaining voxel) ->
nearest-center partition -> endpoint and tangent estimation. All distances are
physical (µm), so anisotropic spacing is respected throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .volume import (
    BinaryMask,
    ProbabilityMap,
    load_container,
    save_container,
    threshold_probability,
    voxels_to_physical,
)

COVER_RADIUS_UM = 7.0
DEFAULT_MIN_VOXELS = 5

_STRUCTURE_26 = np.ones((3, 3, 3), dtype=bool)


@dataclass
class Fragment:
    """A supervoxel with physical endpoints and unit endpoint tangents.

    ``x0``/``x1`` are µm positions of the two endpoint voxels (``e0``/``e1``
    their integer indices); ``tau0 = (x0 - x1)/|x0 - x1|`` and
    ``tau1 = -tau0``. ``center`` is the covering-ball center the fragment grew
    from; every member voxel lies within COVER_RADIUS_UM of it.
    """

    id: int
    voxels: np.ndarray  # (N, 3) int indices
    x0: np.ndarray
    x1: np.ndarray
    tau0: np.ndarray
    tau1: np.ndarray
    e0: np.ndarray  # voxel index of x0
    e1: np.ndarray  # voxel index of x1
    center: np.ndarray  # voxel index of the generating center

    @property
    def n_voxels(self) -> int:
        return self.voxels.shape[0]


@dataclass
class FragmentSet:
    fragments: list[Fragment]
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float]

    def __len__(self) -> int:
        return len(self.fragments)

    def by_id(self, fragment_id: int) -> Fragment:
        for f in self.fragments:
            if f.id == fragment_id:
                return f
        raise KeyError(f"no fragment with id {fragment_id}")

    def label_volume(self) -> np.ndarray:
        """u32 grid mapping each voxel to its fragment id (0 = background)."""
        labels = np.zeros(self.dims, dtype=np.uint32)
        for f in self.fragments:
            labels[f.voxels[:, 0], f.voxels[:, 1], f.voxels[:, 2]] = f.id
        return labels


def connected_components(mask: BinaryMask) -> tuple[np.ndarray, int]:
    """Label 26-connected components; labels contiguous from 1."""
    labels, n = ndimage.label(mask.data, structure=_STRUCTURE_26)
    return labels, int(n)


def split_component(
    component_voxels: np.ndarray,
    prob_map: ProbabilityMap,
    radius_um: float = COVER_RADIUS_UM,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Greedy ball cover of one component, then nearest-center partition.

    Returns [(voxel_subset, center_index), ...] in center-selection order.
    Probability ties are broken lexicographically by (i, j, k) so builds are
    deterministic.
    """
    vox = np.asarray(component_voxels, dtype=np.intp).reshape(-1, 3)
    if vox.shape[0] == 0:
        raise ValueError("component must be nonempty")
    probs = prob_map.data[vox[:, 0], vox[:, 1], vox[:, 2]].astype(float)
    pos = voxels_to_physical(vox, prob_map.spacing)

    # visit order: descending probability, ascending (i, j, k) on ties
    order = np.lexsort((vox[:, 2], vox[:, 1], vox[:, 0], -probs))
    alive = np.ones(vox.shape[0], dtype=bool)
    centers: list[int] = []
    cursor = 0
    while True:
        while cursor < order.size and not alive[order[cursor]]:
            cursor += 1
        if cursor == order.size:
            break
        c = order[cursor]
        centers.append(c)
        within = np.linalg.norm(pos - pos[c], axis=1) <= radius_um
        alive &= ~within

    center_pos = pos[centers]
    assignment = np.empty(vox.shape[0], dtype=np.intp)
    for lo in range(0, vox.shape[0], 8192):  # bound the distance-matrix memory
        block = pos[lo : lo + 8192]
        d = np.linalg.norm(block[:, None, :] - center_pos[None, :, :], axis=2)
        assignment[lo : lo + 8192] = np.argmin(d, axis=1)  # ties: earliest center
    cells = []
    for ci in range(len(centers)):
        members = vox[assignment == ci]
        if members.shape[0] > 0:
            cells.append((members, vox[centers[ci]].copy()))
    return cells


def estimate_endpoints(
    voxels: np.ndarray, spacing, radius: float | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Pick the two endpoint voxels of a fragment.

    The neighborhood radius R defaults to half the physical bounding-box
    diagonal. The first endpoint is the voxel with the fewest fragment voxels
    within R of it; the second minimizes the same count among voxels farther
    than R from the first, falling back to the farthest voxel for compact
    blobs where no such voxel exists. Count ties break lexicographically by
    index.
    """
    vox = np.asarray(voxels, dtype=np.intp).reshape(-1, 3)
    if vox.shape[0] < 2:
        raise ValueError("need at least 2 voxels to estimate endpoints")
    pos = voxels_to_physical(vox, spacing)
    if radius is None:
        extent = pos.max(axis=0) - pos.min(axis=0)
        radius = 0.5 * float(np.linalg.norm(extent))

    tree = cKDTree(pos)
    counts = tree.query_ball_point(pos, r=radius, return_length=True)

    def lex_min(candidate_mask: np.ndarray, key: np.ndarray) -> int:
        ids = np.flatnonzero(candidate_mask)
        sub = np.lexsort((vox[ids, 2], vox[ids, 1], vox[ids, 0], key[ids]))
        return int(ids[sub[0]])

    first = lex_min(np.ones(len(vox), dtype=bool), counts)
    dist_from_first = np.linalg.norm(pos - pos[first], axis=1)
    far = dist_from_first > radius
    if far.any():
        second = lex_min(far, counts)
    else:
        second = lex_min(np.ones(len(vox), dtype=bool), -dist_from_first)
    return vox[first].copy(), vox[second].copy()


def estimate_tangents(x0: np.ndarray, x1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unit tangents from the endpoint difference: tau0 points x1 -> x0."""
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    gap = x0 - x1
    norm = np.linalg.norm(gap)
    if norm == 0:
        raise ValueError("coincident endpoints have no tangent")
    tau0 = gap / norm
    return tau0, -tau0


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def bresenham3d(a, b) -> np.ndarray:
    """Rasterize the voxel line from a to b, inclusive.

    Steps one voxel at a time along the driving axis (largest absolute
    coordinate range, ties x < y < z); the other coordinates follow the
    continuous segment rounded to nearest with halves away from zero. The
    result is direction-dependent: swapping a and b may pick different
    off-axis voxels.
    """
    a = np.asarray(a, dtype=np.intp)
    b = np.asarray(b, dtype=np.intp)
    delta = b - a
    span = np.abs(delta)
    if span.max() == 0:
        return a.reshape(1, 3).copy()
    axis = int(np.argmax(span))  # argmax takes the first max: x < y < z
    n = int(span[axis])
    t = np.arange(n + 1, dtype=float) / n
    line = a[None, :] + t[:, None] * delta[None, :].astype(float)
    out = _round_half_away(line).astype(np.intp)
    out[:, axis] = a[axis] + np.sign(delta[axis]) * np.arange(n + 1, dtype=np.intp)
    return out


def generate_fragments(
    prob_map: ProbabilityMap,
    threshold: float = 0.9,
    min_voxels: int = DEFAULT_MIN_VOXELS,
    radius_um: float = COVER_RADIUS_UM,
) -> FragmentSet:
    """Full fragment pipeline for one probability map.

    Fragments smaller than ``min_voxels`` are dropped as dust (they would
    degenerate endpoint estimation; cells below 2 voxels are always dropped
    for the same reason). Ids are assigned 1..K in (component label, center
    order), after the dust filter.
    """
    mask = threshold_probability(prob_map, threshold)
    labels, n_components = connected_components(mask)
    fragments: list[Fragment] = []
    next_id = 1
    all_voxels = np.argwhere(labels > 0)
    component_of = labels[all_voxels[:, 0], all_voxels[:, 1], all_voxels[:, 2]]
    for comp in range(1, n_components + 1):
        comp_voxels = all_voxels[component_of == comp]
        for cell_voxels, center in split_component(comp_voxels, prob_map, radius_um):
            if cell_voxels.shape[0] < max(min_voxels, 2):
                continue
            e0, e1 = estimate_endpoints(cell_voxels, prob_map.spacing)
            x0 = voxels_to_physical(e0, prob_map.spacing)
            x1 = voxels_to_physical(e1, prob_map.spacing)
            tau0, tau1 = estimate_tangents(x0, x1)
            fragments.append(
                Fragment(next_id, cell_voxels, x0, x1, tau0, tau1, e0, e1, center)
            )
            next_id += 1
    return FragmentSet(fragments, prob_map.dims, prob_map.spacing)


def save_fragment_set(fragset: FragmentSet, json_path, labels_path=None) -> None:
    """Write the fragment JSON plus (optionally) the u32 label container."""
    payload = {
        "spacing": list(fragset.spacing),
        "fragments": [
            {
                "id": f.id,
                "x0": f.x0.tolist(),
                "x1": f.x1.tolist(),
                "tau0": f.tau0.tolist(),
                "tau1": f.tau1.tolist(),
                "n_voxels": f.n_voxels,
            }
            for f in fragset.fragments
        ],
    }
    Path(json_path).write_text(json.dumps(payload, sort_keys=True))
    if labels_path is not None:
        save_container(labels_path, fragset.label_volume(), fragset.spacing, "u32")


def load_fragment_set(json_path, labels_path) -> FragmentSet:
    """Rebuild a FragmentSet from the JSON + label-volume pair."""
    payload = json.loads(Path(json_path).read_text())
    labels, spacing, dtype_key = load_container(labels_path)
    if dtype_key != "u32":
        raise ValueError(f"expected u32 label volume, got {dtype_key}")
    spacing = tuple(float(s) for s in payload["spacing"])
    lookup: dict[int, np.ndarray] = {}
    nonzero = np.argwhere(labels > 0)
    ids = labels[nonzero[:, 0], nonzero[:, 1], nonzero[:, 2]]
    for fid in np.unique(ids):
        lookup[int(fid)] = nonzero[ids == fid]
    fragments = []
    for item in payload["fragments"]:
        x0 = np.asarray(item["x0"], dtype=float)
        x1 = np.asarray(item["x1"], dtype=float)
        spacing_arr = np.asarray(spacing)
        e0 = np.asarray(np.rint(x0 / spacing_arr), dtype=np.intp)
        e1 = np.asarray(np.rint(x1 / spacing_arr), dtype=np.intp)
        voxels = lookup.get(int(item["id"]), np.empty((0, 3), dtype=np.intp))
        fragments.append(
            Fragment(
                int(item["id"]),
                voxels,
                x0,
                x1,
                np.asarray(item["tau0"], dtype=float),
                np.asarray(item["tau1"], dtype=float),
                e0,
                e1,
                e0.copy(),
            )
        )
    return FragmentSet(fragments, labels.shape, spacing)
