"""State space and weighted transition graph over oriented fragments.

Each fragment yields two states, one per travel direction. A transition's
prior is a Boltzmann distribution over the allowed successors with energy

    U = alpha_d * |gap|^2 + alpha_kappa * kappa^2,

where the squared curvature is the mean of two finite-difference terms built
from the endpoint tangents and the normalized gap vector. Transitions are
pruned when the gap exceeds d_max or the bend angle exceeds theta_max, and
between the two orientations of one fragment. Edge weights combine the
negative log prior with the negative log clamped foreground density of the
successor fragment and of the rasterized line of voxels imputed across the
gap, so they are nonnegative by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .appearance import IntensityModel
from .fragments import FragmentSet, bresenham3d
from .volume import Volume

GAP_EPS_UM = 1e-6

FORWARD, REVERSED = 0, 1
_ORIENTATION_NAMES = {FORWARD: "forward", REVERSED: "reversed"}


@dataclass
class State:
    """Oriented fragment: travel enters at tail x0 and exits at head x1.

    Tangents follow the endpoint-difference convention of fragments
    (tau0 = (x0 - x1)/|..|, tau1 = -tau0), so -tau0 is the direction of travel
    at the tail and tau1 the direction of travel at the head. Reversing a
    state swaps the endpoints and negates both tangents, which is exactly the
    endpoint-difference tangent recomputed for the opposite travel direction;
    reversing twice is the identity.
    """

    state_id: int
    fragment_id: int
    orientation: int  # FORWARD or REVERSED
    x0: np.ndarray
    x1: np.ndarray
    tau0: np.ndarray
    tau1: np.ndarray
    e0: np.ndarray | None = None  # tail voxel index
    e1: np.ndarray | None = None  # head voxel index

    @property
    def orientation_name(self) -> str:
        return _ORIENTATION_NAMES[self.orientation]

    def reversed_state(self) -> "State":
        return State(
            state_id=self.state_id ^ 1,
            fragment_id=self.fragment_id,
            orientation=self.orientation ^ 1,
            x0=self.x1,
            x1=self.x0,
            tau0=-self.tau0,
            tau1=-self.tau1,
            e0=self.e1,
            e1=self.e0,
        )


def make_states(fragset: FragmentSet) -> list[State]:
    """Two states per fragment; state_id = 2 * fragment_index + orientation."""
    states = []
    for idx, f in enumerate(fragset.fragments):
        fwd = State(2 * idx, f.id, FORWARD, f.x0, f.x1, f.tau0, f.tau1, f.e0, f.e1)
        states.append(fwd)
        states.append(fwd.reversed_state())
    return states


@dataclass
class Hyperparams:
    """Geometric prior weights and pruning thresholds."""

    alpha_d: float = 10.0  # 1/µm^2
    alpha_kappa: float = 1000.0
    d_max_um: float = 15.0
    theta_max_deg: float = 150.0
    # Off by default: also prune on the successor-side entry angle.
    prune_successor_angle: bool = False

    def __post_init__(self):
        if self.alpha_d < 0 or self.alpha_kappa < 0:
            raise ValueError("alpha_d and alpha_kappa must be nonnegative")
        if self.d_max_um <= 0:
            raise ValueError("d_max_um must be positive")
        if not 0 < self.theta_max_deg <= 180:
            raise ValueError("theta_max_deg must lie in (0, 180]")

    @classmethod
    def from_dict(cls, payload: dict) -> "Hyperparams":
        known = {k: payload[k] for k in (
            "alpha_d", "alpha_kappa", "d_max_um", "theta_max_deg",
            "prune_successor_angle",
        ) if k in payload}
        return cls(**known)

    def to_dict(self) -> dict:
        return {
            "alpha_d": self.alpha_d,
            "alpha_kappa": self.alpha_kappa,
            "d_max_um": self.d_max_um,
            "theta_max_deg": self.theta_max_deg,
        }


def _gap_direction(s_prev: State, s_next: State) -> tuple[np.ndarray, float]:
    gap = s_next.x0 - s_prev.x1
    dist = float(np.linalg.norm(gap))
    if dist < GAP_EPS_UM:
        # touching fragments: treat the connector as continuing straight out
        # of the predecessor, so only the successor's alignment is scored
        return np.asarray(s_prev.tau1, dtype=float), dist
    return gap / dist, dist


def curvature_sq(s_prev: State, s_next: State) -> float:
    """Mean of the two finite-difference squared-curvature terms."""
    tau_c, _ = _gap_direction(s_prev, s_next)
    k1 = 1.0 - float(np.dot(s_prev.tau1, tau_c))
    k2 = 1.0 - float(np.dot(tau_c, -np.asarray(s_next.tau0)))
    return 0.5 * (k1 + k2)


def energy(s_prev: State, s_next: State, hyper: Hyperparams) -> float:
    """Transition energy alpha_d * gap^2 + alpha_kappa * kappa^2 (gap in µm)."""
    _, dist = _gap_direction(s_prev, s_next)
    return hyper.alpha_d * dist * dist + hyper.alpha_kappa * curvature_sq(s_prev, s_next)


def _bend_angle_deg(tau: np.ndarray, tau_c: np.ndarray) -> float:
    return float(np.degrees(np.arccos(np.clip(np.dot(tau, tau_c), -1.0, 1.0))))


def allowed(s_prev: State, s_next: State, hyper: Hyperparams) -> bool:
    """Transition pruning: self/same-fragment, long gaps and sharp bends."""
    if s_prev.state_id == s_next.state_id or s_prev.fragment_id == s_next.fragment_id:
        return False
    tau_c, dist = _gap_direction(s_prev, s_next)
    if dist > hyper.d_max_um:
        return False
    if _bend_angle_deg(np.asarray(s_prev.tau1, dtype=float), tau_c) > hyper.theta_max_deg:
        return False
    if hyper.prune_successor_angle:
        if _bend_angle_deg(-np.asarray(s_next.tau0, dtype=float), tau_c) > hyper.theta_max_deg:
            return False
    return True


def transition_log_prob(
    s_prev: State, successors: list[State], hyper: Hyperparams
) -> dict[int, float]:
    """Boltzmann log transition probabilities over the allowed successors.

    Normalizes over the support only; a state without allowed successors is a
    sink and yields an empty map.
    """
    if not successors:
        return {}
    energies = np.array([energy(s_prev, s, hyper) for s in successors])
    neg = -energies
    m = neg.max()
    log_z = m + np.log(np.exp(neg - m).sum())
    return {s.state_id: float(neg[i] - log_z) for i, s in enumerate(successors)}


@dataclass
class Edge:
    log_prior: float  # <= 0
    log_lik_gap: float = 0.0  # <= 0, imputed gap voxels


@dataclass
class TransitionGraph:
    """Directed trellis over states with decomposed edge terms.

    ``log_a1_frag[s]`` is the log clamped foreground likelihood of state s's
    whole fragment (identical for both orientations); edges carry the prior
    and the gap-imputation likelihood. The scalar weight of edge (u, v) is
    ``-log_a1_frag[v] - log_lik_gap - log_prior`` and is always >= 0.
    ``log_a0_frag`` (background likelihood per fragment) is optional and only
    needed for the full joint probability used in diagnostics.
    """

    fragment_of: list[int]
    log_a1_frag: list[float]
    edges: dict[tuple[int, int], Edge]
    states: list[State] | None = None
    log_a0_frag: list[float] | None = None
    _adjacency: dict[int, list[int]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._adjacency = {}
        for (u, v) in sorted(self.edges):
            self._adjacency.setdefault(u, []).append(v)

    @property
    def n_states(self) -> int:
        return len(self.fragment_of)

    def successors(self, state_id: int) -> list[int]:
        return self._adjacency.get(state_id, [])

    def edge(self, u: int, v: int) -> Edge:
        return self.edges[(u, v)]

    def log_likelihood(self, u: int, v: int) -> float:
        e = self.edges[(u, v)]
        return self.log_a1_frag[v] + e.log_lik_gap

    def weight(self, u: int, v: int) -> float:
        e = self.edges[(u, v)]
        return -(self.log_a1_frag[v] + e.log_lik_gap) - e.log_prior

    def to_jsonl(self, path) -> None:
        """Debug export, one edge per line."""
        with Path(path).open("w") as fh:
            for (u, v) in sorted(self.edges):
                e = self.edges[(u, v)]
                fh.write(json.dumps({
                    "from": u,
                    "to": v,
                    "log_prior": e.log_prior,
                    "log_lik": self.log_likelihood(u, v),
                    "w": self.weight(u, v),
                }) + "\n")


def imputed_gap_voxels(
    s_prev: State, s_next: State, frag_labels: np.ndarray
) -> np.ndarray:
    """Voxels of the Bresenham line bridging the gap between two states.

    Voxels belonging to either endpoint fragment are excluded (their
    likelihood is already counted with the fragments), as are any voxels
    falling outside the label volume.
    """
    line = bresenham3d(s_prev.e1, s_next.e0)
    dims = np.asarray(frag_labels.shape)
    in_bounds = ((line >= 0) & (line < dims)).all(axis=1)
    line = line[in_bounds]
    labels = frag_labels[line[:, 0], line[:, 1], line[:, 2]]
    keep = (labels != s_prev.fragment_id) & (labels != s_next.fragment_id)
    return line[keep]


def edge_weight(
    s_prev: State,
    s_next: State,
    model: IntensityModel,
    volume: Volume,
    frag_labels: np.ndarray,
    log_prior: float,
) -> float:
    """Weight of one edge: -log alpha_1(next fragment + gap) - log prior."""
    voxels = np.argwhere(frag_labels == s_next.fragment_id)
    log_frag = model.log_alpha1_sum(volume, voxels)
    gap = imputed_gap_voxels(s_prev, s_next, frag_labels)
    log_gap = model.log_alpha1_sum(volume, gap)
    return -log_frag - log_gap - log_prior


def build_graph(
    states: list[State],
    model: IntensityModel,
    volume: Volume,
    frag_labels: np.ndarray,
    hyper: Hyperparams,
    fragset: FragmentSet | None = None,
) -> TransitionGraph:
    """Assemble the full transition graph.

    Candidate successors are found with a spatial index on state tail points
    within d_max of each head, then filtered by the pruning rules. Passing the
    originating FragmentSet avoids re-deriving fragment voxels from labels.
    """
    n = len(states)
    by_id = {s.state_id: s for s in states}
    if sorted(by_id) != list(range(n)):
        raise ValueError("state ids must be contiguous from 0")

    if fragset is not None:
        frag_voxels = {f.id: f.voxels for f in fragset.fragments}
    else:
        frag_voxels = {}
        nonzero = np.argwhere(frag_labels > 0)
        ids = frag_labels[nonzero[:, 0], nonzero[:, 1], nonzero[:, 2]]
        for fid in np.unique(ids):
            frag_voxels[int(fid)] = nonzero[ids == fid]

    log_a1_by_fragment = {
        fid: model.log_alpha_sum(volume, vox, "fg") for fid, vox in frag_voxels.items()
    }
    log_a0_by_fragment = {
        fid: model.log_alpha_sum(volume, vox, "bg") for fid, vox in frag_voxels.items()
    }
    fragment_of = [by_id[i].fragment_id for i in range(n)]
    log_a1 = [log_a1_by_fragment[f] for f in fragment_of]
    log_a0 = [log_a0_by_fragment[f] for f in fragment_of]

    tails = np.array([by_id[i].x0 for i in range(n)], dtype=float)
    tail_tree = cKDTree(tails)

    edges: dict[tuple[int, int], Edge] = {}
    for u in range(n):
        s_prev = by_id[u]
        candidates = sorted(tail_tree.query_ball_point(np.asarray(s_prev.x1, float), hyper.d_max_um))
        successors = [by_id[v] for v in candidates if allowed(s_prev, by_id[v], hyper)]
        log_priors = transition_log_prob(s_prev, successors, hyper)
        for s_next in successors:
            gap = imputed_gap_voxels(s_prev, s_next, frag_labels)
            log_gap = model.log_alpha1_sum(volume, gap)
            edges[(u, s_next.state_id)] = Edge(log_priors[s_next.state_id], log_gap)
    return TransitionGraph(
        fragment_of=fragment_of,
        log_a1_frag=log_a1,
        edges=edges,
        states=[by_id[i] for i in range(n)],
        log_a0_frag=log_a0,
    )
