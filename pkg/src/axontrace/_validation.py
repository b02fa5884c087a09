"""Input validation helpers shared by the estimator, CLI and service."""

from __future__ import annotations

import numpy as np

from .volume import ProbabilityMap, Volume


def check_volume_pair(volume: Volume, prob_map: ProbabilityMap) -> None:
    if volume.dims != prob_map.dims:
        raise ValueError(
            f"volume dims {volume.dims} do not match probability map {prob_map.dims}"
        )
    if volume.spacing != prob_map.spacing:
        raise ValueError(
            f"volume spacing {volume.spacing} does not match probability map "
            f"{prob_map.spacing}"
        )


def check_voxel_indices(indices, dims, name: str = "voxels") -> np.ndarray:
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 2 or idx.shape[1] != 3:
        raise ValueError(f"{name} must be an (N, 3) index array")
    if idx.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if (idx < 0).any() or (idx >= np.asarray(dims)).any():
        raise ValueError(f"{name} contains out-of-bounds indices for dims {dims}")
    return idx


def check_is_fitted(estimator, attribute: str = "graph_") -> None:
    if not hasattr(estimator, attribute):
        raise RuntimeError(
            f"{type(estimator).__name__} is not fitted yet; call fit() first"
        )


def check_orientation(value) -> int:
    if value in (0, 1):
        return int(value)
    if isinstance(value, str):
        lowered = value.lower()
        if lowered == "forward":
            return 0
        if lowered == "reversed":
            return 1
    raise ValueError(f"orientation must be 0/1 or 'forward'/'reversed', got {value!r}")
