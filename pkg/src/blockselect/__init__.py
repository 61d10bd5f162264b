"""Likelihood-based selection of the number of blocks in (degree-corrected) SBMs."""
from .graph import (
    BlockParams,
    CountStats,
    DcsbmSample,
    Graph,
    agreement,
    confusion,
    count_stats,
    is_refinement,
    sample_dcsbm,
    sample_labels,
    sample_sbm,
    spawn_seeds,
)

__version__ = "0.1.0"

__all__ = [
    "BlockParams",
    "CountStats",
    "DcsbmSample",
    "Graph",
    "agreement",
    "confusion",
    "count_stats",
    "is_refinement",
    "sample_dcsbm",
    "sample_labels",
    "sample_sbm",
    "spawn_seeds",
]
