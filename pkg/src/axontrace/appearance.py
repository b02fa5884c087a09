"""Foreground/background intensity appearance model.

Two nonparametric densities are fitted to labeled voxel intensities: one for
voxels on a neuronal process (foreground) and one for everything else. Both
are Gaussian kernel density estimates with the 1-D Scott bandwidth
``h = sigma_hat * n**(-1/5)``. Evaluated densities are clamped into
``[alpha_floor, 1]``: the unit cap is what keeps every path-graph edge weight
nonnegative downstream, the floor avoids -inf logs in far tails.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist

from .volume import BinaryMask, Volume, voxels_to_physical

_SQRT_2PI = np.sqrt(2.0 * np.pi)

# Bandwidth fallback for degenerate (constant) sample sets, in intensity units.
MIN_BANDWIDTH = 0.5

DEFAULT_ALPHA_FLOOR = 1e-12


def scott_bandwidth(samples: np.ndarray) -> float:
    """1-D Scott's rule, sample std (ddof=1) times n**(-1/5).

    Saturated/constant labeled regions have zero sample std; they fall back
    to MIN_BANDWIDTH instead of a degenerate zero bandwidth.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    if n < 2:
        raise ValueError(f"need at least 2 samples to fit a KDE, got {n}")
    h = samples.std(ddof=1) * n ** (-1.0 / 5.0)
    return h if h > 0 else MIN_BANDWIDTH


def fit_kde(samples) -> tuple[float, "KDE"]:
    """Fit a Gaussian KDE, returning (bandwidth, evaluator)."""
    kde = KDE(samples)
    return kde.bandwidth, kde


class KDE:
    """Gaussian kernel density estimate over 1-D samples."""

    def __init__(self, samples, bandwidth: float | None = None):
        self.samples = np.asarray(samples, dtype=float).ravel()
        if self.samples.size < 2:
            raise ValueError("need at least 2 samples to fit a KDE")
        self.bandwidth = float(bandwidth) if bandwidth else scott_bandwidth(self.samples)

    def __call__(self, x) -> np.ndarray:
        """Density (1/(n h)) sum phi((x - x_i)/h), vectorized over x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n, h = self.samples.size, self.bandwidth
        out = np.empty(x.shape, dtype=float)
        # chunked so 65536-point grids times 10^4 samples stay in memory
        step = max(1, int(4e6 // n))
        for lo in range(0, x.size, step):
            chunk = x.flat[lo : lo + step]
            z = (chunk[:, None] - self.samples[None, :]) / h
            out.flat[lo : lo + step] = np.exp(-0.5 * z * z).sum(axis=1) / (n * h * _SQRT_2PI)
        return out

    def grid(self, pad_bandwidths: float = 6.0, n_points: int = 4096) -> np.ndarray:
        lo = self.samples.min() - pad_bandwidths * self.bandwidth
        hi = self.samples.max() + pad_bandwidths * self.bandwidth
        return np.linspace(lo, hi, n_points)


@dataclass
class IntensityModel:
    """Fitted foreground/background densities with clamped evaluation."""

    fg_samples: np.ndarray
    bg_samples: np.ndarray
    h_fg: float = field(init=False)
    h_bg: float = field(init=False)
    alpha_floor: float = DEFAULT_ALPHA_FLOOR
    alpha_cap: float = 1.0

    def __post_init__(self):
        self.fg_samples = np.asarray(self.fg_samples, dtype=float).ravel()
        self.bg_samples = np.asarray(self.bg_samples, dtype=float).ravel()
        self._kde_fg = KDE(self.fg_samples)
        self._kde_bg = KDE(self.bg_samples)
        self.h_fg = self._kde_fg.bandwidth
        self.h_bg = self._kde_bg.bandwidth
        self._log_tables: dict[str, np.ndarray] = {}

    def _kde(self, which: str) -> KDE:
        if which == "fg":
            return self._kde_fg
        if which == "bg":
            return self._kde_bg
        raise ValueError(f"class must be 'fg' or 'bg', got {which!r}")

    def eval_alpha(self, intensity, which: str = "fg") -> np.ndarray:
        """Clamped density alpha_1 (fg) or alpha_0 (bg) at the intensities."""
        raw = self._kde(which)(intensity)
        return np.clip(raw, self.alpha_floor, self.alpha_cap)

    def eval_alpha_raw(self, intensity, which: str = "fg") -> np.ndarray:
        """Unclamped KDE density; used for diagnostics and quadrature."""
        return self._kde(which)(intensity)

    def _log_table(self, which: str) -> np.ndarray:
        # u16 intensities make a 65536-entry lookup table worthwhile: graph
        # construction evaluates alpha over every fragment and gap voxel.
        if which not in self._log_tables:
            table = np.log(self.eval_alpha(np.arange(65536, dtype=float), which))
            self._log_tables[which] = table
        return self._log_tables[which]

    def log_alpha_sum(self, volume: Volume, voxels: np.ndarray, which: str = "fg") -> float:
        """Sum of log clamped densities over a set of voxel indices.

        Always <= 0 for the fg class thanks to the unit cap; the empty set
        contributes 0 (empty product).
        """
        voxels = np.asarray(voxels, dtype=np.intp).reshape(-1, 3)
        if voxels.size == 0:
            return 0.0
        dims = volume.dims
        if (voxels < 0).any() or (voxels >= np.asarray(dims)).any():
            raise IndexError("voxel index out of bounds")
        intensities = volume.data[voxels[:, 0], voxels[:, 1], voxels[:, 2]]
        if volume.data.dtype == np.uint16:
            return float(self._log_table(which)[intensities].sum())
        return float(np.log(self.eval_alpha(intensities.astype(float), which)).sum())

    def log_alpha1_sum(self, volume: Volume, voxels: np.ndarray) -> float:
        return self.log_alpha_sum(volume, voxels, "fg")

    def to_json(self) -> str:
        return json.dumps(
            {
                "fg_samples": self.fg_samples.tolist(),
                "bg_samples": self.bg_samples.tolist(),
                "h_fg": self.h_fg,
                "h_bg": self.h_bg,
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "IntensityModel":
        payload = json.loads(text)
        return cls(payload["fg_samples"], payload["bg_samples"])


def kl_divergence(model: IntensityModel, n_points: int = 4096) -> float:
    """Estimate D(alpha_1 || alpha_0) in nats by trapezoid quadrature.

    The integrand alpha_1(x) * log(alpha_1(x) / alpha_0(x)) is integrated over
    the union of both sample ranges extended by 6 bandwidths; alpha_0 is
    floored at the model's alpha_floor so empty-background regions do not blow
    up the integral.
    """
    pad = 6.0
    lo = min(
        model.fg_samples.min() - pad * model.h_fg,
        model.bg_samples.min() - pad * model.h_bg,
    )
    hi = max(
        model.fg_samples.max() + pad * model.h_fg,
        model.bg_samples.max() + pad * model.h_bg,
    )
    x = np.linspace(lo, hi, n_points)
    p = model.eval_alpha_raw(x, "fg")
    q = np.maximum(model.eval_alpha_raw(x, "bg"), model.alpha_floor)
    integrand = np.where(p > 0, p * (np.log(np.maximum(p, 1e-300)) - np.log(q)), 0.0)
    return float(np.trapezoid(integrand, x))


def kde_mass(kde: KDE, pad_bandwidths: float = 6.0, n_points: int = 4096) -> float:
    """Trapezoid quadrature of a KDE over its padded sample range."""
    x = kde.grid(pad_bandwidths, n_points)
    return float(np.trapezoid(kde(x), x))


@dataclass
class AutocorrCurve:
    """Distance-binned Pearson correlation of voxel intensities."""

    bin_centers: np.ndarray  # µm
    rho: np.ndarray  # nan where a bin is empty
    se: np.ndarray  # Fisher-z standard error, nan where empty
    n_pairs: np.ndarray


def autocorrelation(
    volume: Volume,
    class_mask: BinaryMask,
    n_samples: int,
    bin_edges,
    seed: int = 0,
) -> AutocorrCurve:
    """Intensity autocorrelation vs. physical distance within one class.

    Samples up to ``n_samples`` in-class voxels uniformly without replacement,
    forms all unordered pairs, bins them by µm distance, and reports the
    Pearson correlation per bin. Each pair enters the correlation twice, once
    as (a, b) and once as (b, a), which symmetrizes the estimate; bins with
    fewer than 4 pairs are reported empty (nan) rather than failing.
    """
    if n_samples < 2:
        raise ValueError("need n_samples >= 2")
    idx = np.argwhere(class_mask.data)
    if idx.shape[0] < 2:
        raise ValueError("class mask must contain at least 2 voxels")
    rng = np.random.default_rng(seed)
    take = min(n_samples, idx.shape[0])
    chosen = idx[rng.choice(idx.shape[0], size=take, replace=False)]
    pos = voxels_to_physical(chosen, volume.spacing)
    vals = volume.data[chosen[:, 0], chosen[:, 1], chosen[:, 2]].astype(float)

    dists = pdist(pos)
    ii, jj = np.triu_indices(take, k=1)
    a, b = vals[ii], vals[jj]

    bin_edges = np.asarray(bin_edges, dtype=float)
    centers = 0.5 * (bin_edges[:-1] + bin_edges[1:])
    which = np.digitize(dists, bin_edges) - 1

    rho = np.full(centers.size, np.nan)
    se = np.full(centers.size, np.nan)
    n_pairs = np.zeros(centers.size, dtype=int)
    for bi in range(centers.size):
        sel = which == bi
        n = int(sel.sum())
        n_pairs[bi] = n
        if n < 4:
            continue
        u = np.concatenate([a[sel], b[sel]])
        v = np.concatenate([b[sel], a[sel]])
        su, sv = u.std(), v.std()
        if su == 0 or sv == 0:
            continue
        rho[bi] = float(np.corrcoef(u, v)[0, 1])
        se[bi] = 1.0 / np.sqrt(n - 3)
    return AutocorrCurve(centers, rho, se, n_pairs)


def load_label_sidecar(path) -> tuple[np.ndarray, np.ndarray]:
    """Read the {"fg": [[i,j,k],...], "bg": [...]} training-label JSON."""
    payload = json.loads(Path(path).read_text())
    fg = np.asarray(payload["fg"], dtype=np.intp).reshape(-1, 3)
    bg = np.asarray(payload["bg"], dtype=np.intp).reshape(-1, 3)
    return fg, bg


def fit_from_labels(volume: Volume, fg_voxels, bg_voxels, **kwargs) -> IntensityModel:
    """Fit the model from labeled voxel indices on a volume."""
    fg_voxels = np.asarray(fg_voxels, dtype=np.intp).reshape(-1, 3)
    bg_voxels = np.asarray(bg_voxels, dtype=np.intp).reshape(-1, 3)
    fg = volume.data[fg_voxels[:, 0], fg_voxels[:, 1], fg_voxels[:, 2]].astype(float)
    bg = volume.data[bg_voxels[:, 0], bg_voxels[:, 1], bg_voxels[:, 2]].astype(float)
    return IntensityModel(fg, bg, **kwargs)
