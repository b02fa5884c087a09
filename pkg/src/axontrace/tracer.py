"""High-level estimator tying the whole pipeline together.

``NeuronTracer`` follows the scikit-learn estimator protocol: hyperparameters
are constructor arguments mirrored as attributes (get_params/set_params work
out of the box), ``fit`` consumes a volume plus probability map and builds the
appearance model, fragments and transition graph, and ``predict`` answers
endpoint queries with most-probable paths.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import (
    check_is_fitted,
    check_orientation,
    check_volume_pair,
    check_voxel_indices,
)
from .appearance import IntensityModel, fit_from_labels
from .fragments import generate_fragments
from .solver import NoPathError, TracePath, shortest_path
from .transitions import Hyperparams, build_graph, make_states
from .volume import ProbabilityMap, Volume


class NeuronTracer(BaseEstimator):
    """Fit an image + segmentation into a queryable path-tracing session.

    Parameters mirror the pipeline knobs: ``threshold`` binarizes the
    probability map, ``min_voxels`` filters dust fragments, the remaining
    parameters shape the transition prior (see Hyperparams).
    """

    def __init__(
        self,
        threshold: float = 0.9,
        min_voxels: int = 5,
        alpha_d: float = 10.0,
        alpha_kappa: float = 1000.0,
        d_max_um: float = 15.0,
        theta_max_deg: float = 150.0,
        prune_successor_angle: bool = False,
    ):
        self.threshold = threshold
        self.min_voxels = min_voxels
        self.alpha_d = alpha_d
        self.alpha_kappa = alpha_kappa
        self.d_max_um = d_max_um
        self.theta_max_deg = theta_max_deg
        self.prune_successor_angle = prune_successor_angle

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(
            alpha_d=self.alpha_d,
            alpha_kappa=self.alpha_kappa,
            d_max_um=self.d_max_um,
            theta_max_deg=self.theta_max_deg,
            prune_successor_angle=self.prune_successor_angle,
        )

    def fit(self, volume: Volume, prob_map: ProbabilityMap, labels=None, model=None):
        """Build the session: appearance model, fragments, states, graph.

        ``labels`` is a pair (fg_voxels, bg_voxels) of (N, 3) index arrays;
        alternatively pass an already fitted IntensityModel via ``model``.
        """
        check_volume_pair(volume, prob_map)
        if model is None:
            if labels is None:
                raise ValueError("fit needs labels=(fg_voxels, bg_voxels) or model=")
            fg, bg = labels
            fg = check_voxel_indices(fg, volume.dims, "fg labels")
            bg = check_voxel_indices(bg, volume.dims, "bg labels")
            model = fit_from_labels(volume, fg, bg)
        elif not isinstance(model, IntensityModel):
            raise TypeError("model must be an IntensityModel")

        self.volume_ = volume
        self.model_ = model
        self.fragments_ = generate_fragments(
            prob_map, threshold=self.threshold, min_voxels=self.min_voxels
        )
        self.label_volume_ = self.fragments_.label_volume()
        self.states_ = make_states(self.fragments_)
        self.graph_ = build_graph(
            self.states_,
            model,
            volume,
            self.label_volume_,
            self.hyperparams(),
            fragset=self.fragments_,
        )
        self._state_of_fragment = {
            (s.fragment_id, s.orientation): s.state_id for s in self.states_
        }
        return self

    def state_id(self, fragment_id: int, orientation) -> int:
        check_is_fitted(self)
        key = (int(fragment_id), check_orientation(orientation))
        if key not in self._state_of_fragment:
            raise KeyError(f"unknown fragment id {fragment_id}")
        return self._state_of_fragment[key]

    def trace(
        self,
        start_fragment: int,
        start_orientation,
        end_fragment: int,
        end_orientation,
    ) -> TracePath:
        """Most probable path between two oriented fragments.

        Raises NoPathError when the end state is unreachable (for example
        when every route crosses a gap longer than d_max_um).
        """
        check_is_fitted(self)
        start = self.state_id(start_fragment, start_orientation)
        end = self.state_id(end_fragment, end_orientation)
        result = shortest_path(self.graph_, start, end)
        if result is None:
            raise NoPathError(
                f"no path from fragment {start_fragment} to {end_fragment}"
            )
        return result

    def predict(self, queries) -> list[TracePath | None]:
        """Vectorized trace: rows of (start_frag, start_orient, end_frag, end_orient).

        Unreachable queries yield None instead of raising, so batch use stays
        simple.
        """
        check_is_fitted(self)
        queries = np.asarray(queries, dtype=object).reshape(-1, 4)
        out = []
        for sf, so, ef, eo in queries:
            start = self.state_id(int(sf), so)
            end = self.state_id(int(ef), eo)
            out.append(shortest_path(self.graph_, start, end))
        return out
