"""3D intensity volumes, probability maps and masks with physical voxel spacing.

The on-disk container is a pair of files sharing a base name: ``<name>.json``
holds ``{"dims": [nx, ny, nz], "spacing": [sx, sy, sz], "dtype": ...}`` and
``<name>.raw`` holds the little-endian samples in x-fastest order, i.e. voxel
(i, j, k) sits at linear offset ``i + nx * (j + ny * k)``.

In memory every grid is a numpy array of shape (nx, ny, nz) indexed as
``data[i, j, k]``. Coordinates are voxel centers; index (0, 0, 0) maps to the
physical origin. All objects are treated as immutable after construction and
are safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

_DTYPES = {"u16": np.dtype("<u2"), "f32": np.dtype("<f4"), "u32": np.dtype("<u4")}

_AXES = {"x": 0, "y": 1, "z": 2}


class VolumeFormatError(ValueError):
    """Raised for a missing/corrupt header or a payload that contradicts it."""


def _check_spacing(spacing) -> tuple[float, float, float]:
    spacing = tuple(float(s) for s in spacing)
    if len(spacing) != 3 or any(s <= 0 for s in spacing):
        raise VolumeFormatError(f"spacing must be 3 positive values, got {spacing}")
    return spacing


def _check_dims(dims) -> tuple[int, int, int]:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise VolumeFormatError(f"dims must be 3 values >= 1, got {dims}")
    return dims


@dataclass
class Volume:
    """Intensity grid (unsigned 16-bit semantic range) with µm spacing."""

    data: np.ndarray  # shape (nx, ny, nz), uint16
    spacing: tuple[float, float, float]

    def __post_init__(self):
        self.spacing = _check_spacing(self.spacing)
        if self.data.ndim != 3:
            raise VolumeFormatError("volume data must be 3-dimensional")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass
class ProbabilityMap:
    """Per-voxel foreground probability in [0, 1]."""

    data: np.ndarray  # shape (nx, ny, nz), float32
    spacing: tuple[float, float, float]

    def __post_init__(self):
        self.spacing = _check_spacing(self.spacing)
        if self.data.ndim != 3:
            raise VolumeFormatError("probability data must be 3-dimensional")
        lo, hi = float(self.data.min()), float(self.data.max())
        if lo < 0.0 or hi > 1.0:
            raise VolumeFormatError(f"probabilities outside [0, 1]: min={lo}, max={hi}")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass
class BinaryMask:
    """Boolean grid derived from a probability map or label volume."""

    data: np.ndarray  # shape (nx, ny, nz), bool
    spacing: tuple[float, float, float]

    def __post_init__(self):
        self.spacing = _check_spacing(self.spacing)
        self.data = np.asarray(self.data, dtype=bool)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape


def _paths(path) -> tuple[Path, Path]:
    base = Path(path)
    if base.suffix in (".json", ".raw"):
        base = base.with_suffix("")
    return base.with_suffix(".json"), base.with_suffix(".raw")


def load_container(path) -> tuple[np.ndarray, tuple[float, float, float], str]:
    """Load a raw grid from the two-file container.

    Returns (data, spacing, dtype_key) where data has shape (nx, ny, nz).
    """
    header_path, raw_path = _paths(path)
    if not header_path.exists():
        raise VolumeFormatError(f"missing header file {header_path}")
    try:
        header = json.loads(header_path.read_text())
        dims = _check_dims(header["dims"])
        spacing = _check_spacing(header["spacing"])
        dtype_key = header["dtype"]
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise VolumeFormatError(f"corrupt header {header_path}: {exc}") from exc
    if dtype_key not in _DTYPES:
        raise VolumeFormatError(f"unsupported dtype {dtype_key!r}")
    dtype = _DTYPES[dtype_key]
    if not raw_path.exists():
        raise VolumeFormatError(f"missing payload file {raw_path}")
    payload = np.fromfile(raw_path, dtype=dtype)
    n_expected = dims[0] * dims[1] * dims[2]
    if payload.size != n_expected:
        raise VolumeFormatError(
            f"payload holds {payload.size} samples, header declares {n_expected}"
        )
    data = payload.reshape(dims, order="F")  # x-fastest linear layout
    return data, spacing, dtype_key


def save_container(path, data: np.ndarray, spacing, dtype_key: str) -> None:
    """Write a grid to the two-file container (x-fastest raw order)."""
    if dtype_key not in _DTYPES:
        raise VolumeFormatError(f"unsupported dtype {dtype_key!r}")
    header_path, raw_path = _paths(path)
    spacing = _check_spacing(spacing)
    dims = _check_dims(data.shape)
    header = {"dims": list(dims), "spacing": list(spacing), "dtype": dtype_key}
    header_path.write_text(json.dumps(header, sort_keys=True))
    np.asarray(data, dtype=_DTYPES[dtype_key]).flatten(order="F").tofile(raw_path)


def load_volume(path) -> Volume:
    data, spacing, dtype_key = load_container(path)
    if dtype_key != "u16":
        raise VolumeFormatError(f"expected u16 volume, got {dtype_key}")
    return Volume(data, spacing)


def save_volume(path, volume: Volume) -> None:
    save_container(path, volume.data, volume.spacing, "u16")


def load_probability_map(path) -> ProbabilityMap:
    data, spacing, dtype_key = load_container(path)
    if dtype_key != "f32":
        raise VolumeFormatError(f"expected f32 probability map, got {dtype_key}")
    return ProbabilityMap(data, spacing)


def save_probability_map(path, pmap: ProbabilityMap) -> None:
    save_container(path, pmap.data, pmap.spacing, "f32")


def linear_offset(index, dims) -> int:
    """Linear offset of voxel (i, j, k) in the x-fastest layout."""
    i, j, k = index
    nx, ny, nz = dims
    if not (0 <= i < nx and 0 <= j < ny and 0 <= k < nz):
        raise IndexError(f"voxel {index} out of bounds for dims {dims}")
    return i + nx * (j + ny * k)


def offset_to_index(offset: int, dims) -> tuple[int, int, int]:
    """Inverse of :func:`linear_offset`."""
    nx, ny, nz = dims
    if not 0 <= offset < nx * ny * nz:
        raise IndexError(f"offset {offset} out of bounds for dims {dims}")
    i = offset % nx
    j = (offset // nx) % ny
    k = offset // (nx * ny)
    return i, j, k


def voxel_to_physical(index, spacing) -> np.ndarray:
    """Physical µm position of a voxel center; origin at index (0, 0, 0)."""
    return np.asarray(index, dtype=float) * np.asarray(spacing, dtype=float)


def voxels_to_physical(indices: np.ndarray, spacing) -> np.ndarray:
    """Vectorized voxel-center positions for an (N, 3) index array."""
    return np.asarray(indices, dtype=float) * np.asarray(spacing, dtype=float)


def threshold_probability(pmap: ProbabilityMap, t: float) -> BinaryMask:
    """Mask of voxels whose foreground probability is >= t."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {t}")
    return BinaryMask(pmap.data >= t, pmap.spacing)


def mip(volume, axis: str = "z") -> np.ndarray:
    """Maximum intensity projection along one axis.

    Accepts a Volume, ProbabilityMap, BinaryMask or bare 3-D array. The output
    keeps the remaining two axes in (x, y, z) order, e.g. axis="z" yields an
    array indexed [i, j].
    """
    if axis not in _AXES:
        raise ValueError(f"axis must be one of {sorted(_AXES)}, got {axis!r}")
    data = volume if isinstance(volume, np.ndarray) else volume.data
    return data.max(axis=_AXES[axis])
