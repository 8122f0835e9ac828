"""Distributed dense n-dimensional arrays with a loopback message-passing runtime.

Arrays are decomposed along at most one split axis across the ranks of a
communicator. On top of the array layer sit single-pass moments, ring-based
pairwise distances, Lloyd's k-means and LASSO coordinate descent.
"""
from .cluster import KMeans, KMeansModel
from .distribution import ChunkMap, chunk_map
from .moments import MomentState, mean, std, var
from .ndcore import (
    DndArray,
    arange,
    array,
    full,
    map_elementwise,
    ones,
    random_uniform,
    reduce,
    resplit,
    sqrt,
    zeros,
    zip_elementwise,
)
from .pairwise import cdist, cdist_xy
from .regression import Lasso, LassoModel
from .transport import Communicator, LoopbackComm, get_comm, run_loopback

__version__ = "0.1.0"

__all__ = [
    "ChunkMap",
    "Communicator",
    "DndArray",
    "KMeans",
    "KMeansModel",
    "Lasso",
    "LassoModel",
    "LoopbackComm",
    "MomentState",
    "arange",
    "array",
    "cdist",
    "cdist_xy",
    "chunk_map",
    "full",
    "get_comm",
    "map_elementwise",
    "mean",
    "ones",
    "random_uniform",
    "reduce",
    "resplit",
    "run_loopback",
    "sqrt",
    "std",
    "var",
    "zeros",
    "zip_elementwise",
]
