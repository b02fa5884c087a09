"""Synthetic tube phantoms with exact ground truth.

A parametric space curve (helix or explicit polyline) is rasterized as a tube
of configurable radius into an intensity volume and a matching probability
map. Foreground and background intensities are drawn from two Gaussians whose
separation controls the appearance-model KL divergence ((mean gap)^2 / (2
sigma^2) for equal sigmas). Arc-length windows can be censored, zeroing both
the intensity and the probability map there, which reproduces fragment
dropout. The generating curve doubles as the ground-truth reconstruction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fragments import FragmentSet
from .metrics import dedupe_polyline, resample_polyline
from .transitions import FORWARD, REVERSED
from .volume import ProbabilityMap, Volume

CURVE_STEP_UM = 0.1  # sampling step of the continuous curve
CENSOR_MARGIN_UM = 0.5


@dataclass
class PhantomSpec:
    kind: str = "helix"  # "helix" or "polyline"
    dims: tuple[int, int, int] = (256, 256, 256)
    spacing: tuple[float, float, float] = (0.3, 0.3, 1.0)
    radius_um: float = 1.0
    helix_radius_um: float = 30.0
    turns: float = 2.0
    center_xy_um: tuple[float, float] | None = None
    z_range_um: tuple[float, float] | None = None
    points_um: list | None = None  # for kind="polyline"
    fg_mean: float = 1800.0
    fg_std: float = 400.0
    bg_mean: float = 1000.0
    bg_std: float = 400.0
    censor_arcs_um: list = field(default_factory=list)  # [(arc_start, length), ...]
    n_labels: int = 2000
    seed: int = 0

    @classmethod
    def from_dict(cls, payload: dict) -> "PhantomSpec":
        known = {f: payload[f] for f in cls.__dataclass_fields__ if f in payload}
        return cls(**known)

    def to_dict(self) -> dict:
        out = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if isinstance(value, tuple):
                value = list(value)
            out[name] = value
        return out


@dataclass
class Phantom:
    volume: Volume
    prob_map: ProbabilityMap
    fg_labels: np.ndarray  # (N, 3) labeled foreground voxels
    bg_labels: np.ndarray
    curve: np.ndarray  # densely sampled generating curve, µm
    ground_truth: np.ndarray  # curve resampled at 1 µm

    def labels_json(self) -> str:
        return json.dumps(
            {"fg": self.fg_labels.tolist(), "bg": self.bg_labels.tolist()},
            sort_keys=True,
        )


def _curve_points(spec: PhantomSpec) -> np.ndarray:
    extent = np.asarray(spec.dims) * np.asarray(spec.spacing)
    if spec.kind == "helix":
        cx, cy = spec.center_xy_um or (extent[0] / 2, extent[1] / 2)
        z0, z1 = spec.z_range_um or (0.08 * extent[2], 0.92 * extent[2])
        # estimate length to pick a t-resolution near CURVE_STEP_UM
        approx = np.hypot(2 * np.pi * spec.helix_radius_um * spec.turns, z1 - z0)
        n = max(64, int(approx / CURVE_STEP_UM))
        t = np.linspace(0.0, 1.0, n)
        theta = 2.0 * np.pi * spec.turns * t
        pts = np.column_stack([
            cx + spec.helix_radius_um * np.cos(theta),
            cy + spec.helix_radius_um * np.sin(theta),
            z0 + (z1 - z0) * t,
        ])
    elif spec.kind == "polyline":
        if not spec.points_um:
            raise ValueError("polyline phantom needs points_um")
        pts = resample_polyline(dedupe_polyline(spec.points_um), CURVE_STEP_UM)
    else:
        raise ValueError(f"unknown phantom kind {spec.kind!r}")
    margin = spec.radius_um
    if (pts - margin < 0).any() or (pts + margin > extent).any():
        raise ValueError("curve tube does not fit inside the volume")
    return pts


def _arc_lengths(curve: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(curve, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def _stamp_distance(
    dims, spacing, curve: np.ndarray, radius: float, sample_mask: np.ndarray
) -> np.ndarray:
    """Min distance from voxel centers to the selected curve samples.

    Only voxels within ``radius`` of some sample get a finite value; the grid
    is filled incrementally with small blocks around each sample.
    """
    spacing = np.asarray(spacing, dtype=float)
    dims = np.asarray(dims)
    dist = np.full(tuple(dims), np.inf, dtype=np.float32)
    reach = np.ceil((radius + 0.5 * spacing.max()) / spacing).astype(int)
    axes = [np.arange(d) for d in dims]
    for p in curve[sample_mask]:
        center = p / spacing
        lo = np.maximum(0, np.ceil(center - reach - 0.5).astype(int))
        hi = np.minimum(dims, np.floor(center + reach + 1.5).astype(int))
        if (lo >= hi).any():
            continue
        gx = (axes[0][lo[0] : hi[0]] * spacing[0] - p[0]) ** 2
        gy = (axes[1][lo[1] : hi[1]] * spacing[1] - p[1]) ** 2
        gz = (axes[2][lo[2] : hi[2]] * spacing[2] - p[2]) ** 2
        block = np.sqrt(gx[:, None, None] + gy[None, :, None] + gz[None, None, :])
        view = dist[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]
        np.minimum(view, block.astype(np.float32), out=view)
    return dist


def generate_phantom(spec: PhantomSpec) -> Phantom:
    rng = np.random.default_rng(spec.seed)
    curve = _curve_points(spec)
    arcs = _arc_lengths(curve)

    censored = np.zeros(curve.shape[0], dtype=bool)
    for start, length in spec.censor_arcs_um:
        censored |= (arcs >= start) & (arcs <= start + length)

    dist_fg = _stamp_distance(spec.dims, spec.spacing, curve, spec.radius_um, ~censored)
    inside_fg = dist_fg <= spec.radius_um
    if censored.any():
        dist_cn = _stamp_distance(
            spec.dims, spec.spacing, curve,
            spec.radius_um + CENSOR_MARGIN_UM, censored,
        )
        cut = dist_cn <= spec.radius_um + CENSOR_MARGIN_UM
        inside_fg &= ~cut

    data = rng.normal(spec.bg_mean, spec.bg_std, size=spec.dims)
    n_fg = int(inside_fg.sum())
    data[inside_fg] = rng.normal(spec.fg_mean, spec.fg_std, size=n_fg)
    volume = Volume(np.clip(np.rint(data), 0, 65535).astype(np.uint16), spec.spacing)

    # probability peaks on the centerline so covering centers hug the curve
    probs = np.full(spec.dims, 0.02, dtype=np.float32)
    d_norm = np.where(inside_fg, dist_fg / spec.radius_um, 0.0).astype(np.float32)
    probs[inside_fg] = (0.98 - 0.07 * d_norm * d_norm)[inside_fg]
    prob_map = ProbabilityMap(probs, spec.spacing)

    fg_idx = np.argwhere(inside_fg)
    bg_idx = np.argwhere(~inside_fg)
    n = min(spec.n_labels, fg_idx.shape[0], bg_idx.shape[0])
    fg_labels = fg_idx[rng.choice(fg_idx.shape[0], size=n, replace=False)]
    bg_labels = bg_idx[rng.choice(bg_idx.shape[0], size=n, replace=False)]

    ground_truth = resample_polyline(dedupe_polyline(curve), 1.0)
    return Phantom(volume, prob_map, fg_labels, bg_labels, curve, ground_truth)


def terminal_states_for_curve(
    fragset: FragmentSet, start_point, end_point
) -> tuple[int, int]:
    """State ids whose tail/head best match the curve's two ends.

    The start state is the one whose tail endpoint lies closest to
    ``start_point`` (so travel leaves it), the end state the one whose head
    lies closest to ``end_point``.
    """
    if not fragset.fragments:
        raise ValueError("fragment set is empty")
    start_point = np.asarray(start_point, dtype=float)
    end_point = np.asarray(end_point, dtype=float)

    def best(point, want_tail: bool) -> int:
        chosen, chosen_d = None, np.inf
        for idx, f in enumerate(fragset.fragments):
            d0 = float(np.linalg.norm(f.x0 - point))
            d1 = float(np.linalg.norm(f.x1 - point))
            if want_tail:
                orient, d = (FORWARD, d0) if d0 <= d1 else (REVERSED, d1)
            else:
                orient, d = (FORWARD, d1) if d1 <= d0 else (REVERSED, d0)
            if d < chosen_d:
                chosen, chosen_d = 2 * idx + orient, d
        return chosen

    return best(start_point, True), best(end_point, False)


def write_phantom(spec: PhantomSpec, out_dir) -> dict:
    """Materialize a phantom to disk; returns the written paths."""
    from .metrics import export_swc
    from .volume import save_probability_map, save_volume

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    phantom = generate_phantom(spec)
    paths = {
        "volume": str(out / "volume.json"),
        "probability_map": str(out / "probability.json"),
        "labels": str(out / "labels.json"),
        "ground_truth_swc": str(out / "ground_truth.swc"),
        "spec": str(out / "phantom_spec.json"),
    }
    save_volume(out / "volume", phantom.volume)
    save_probability_map(out / "probability", phantom.prob_map)
    (out / "labels.json").write_text(phantom.labels_json())
    export_swc(out / "ground_truth.swc", phantom.ground_truth)
    (out / "phantom_spec.json").write_text(json.dumps(spec.to_dict(), sort_keys=True))
    return paths
