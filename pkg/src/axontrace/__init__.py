"""Assemble segmentation fragments of axons into most-probable 3D paths."""

from .volume import (
    BinaryMask,
    ProbabilityMap,
    Volume,
    load_probability_map,
    load_volume,
    mip,
    save_probability_map,
    save_volume,
    threshold_probability,
    voxel_to_physical,
)
from .appearance import IntensityModel, fit_kde, kl_divergence
from .fragments import Fragment, FragmentSet, generate_fragments
from .transitions import Hyperparams, State, TransitionGraph, build_graph, make_states
from .solver import NoPathError, TracePath, shortest_path
from .metrics import frechet_discrete, resample_polyline, spatial_distance
from .tracer import NeuronTracer

__version__ = "0.1.0"

__all__ = [
    "BinaryMask",
    "Fragment",
    "FragmentSet",
    "Hyperparams",
    "IntensityModel",
    "NeuronTracer",
    "NoPathError",
    "ProbabilityMap",
    "State",
    "TracePath",
    "TransitionGraph",
    "Volume",
    "build_graph",
    "fit_kde",
    "frechet_discrete",
    "generate_fragments",
    "kl_divergence",
    "load_probability_map",
    "load_volume",
    "make_states",
    "mip",
    "resample_polyline",
    "save_probability_map",
    "save_volume",
    "shortest_path",
    "spatial_distance",
    "threshold_probability",
    "voxel_to_physical",
]
