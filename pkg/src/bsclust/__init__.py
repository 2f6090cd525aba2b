"""Density-based clustering with best-scored random forest density estimation.

The package is organised around a handful of building blocks:

- :mod:`bsclust.partition` -- purely random / adaptive axis-parallel partitions
- :mod:`bsclust.density` -- histogram density trees and best-scored forests
- :mod:`bsclust.graph` -- epsilon graphs, connected components, k-NN voting
- :mod:`bsclust.clustering` -- the level-scan clusterers
- :mod:`bsclust.setops` -- grid-based geometric oracles (tubes, thickness, ...)
- :mod:`bsclust.evaluation` -- ARI, baselines and the benchmark harness
- :mod:`bsclust.data` -- synthetic generators and CSV ingestion
"""

from .partition import Box, Partition, SplitRecord, build_partition, init_partition, locate, split_once
from .density import (
    DensityForest,
    DensityTree,
    ForestDensity,
    ForestParams,
    anll,
    best_scored_tree,
    eval_forest,
    eval_tree,
    fit_forest,
    fit_tree,
)
from .graph import EpsGraph, ComponentLabels, connected_components, eps_graph, knn_classify, tau_components
from .clustering import (
    ClusterResult,
    ForestLevelClustering,
    LevelSetPoints,
    NoValidLevelError,
    algorithm1_scan,
    assign_background,
    cluster_forest,
    level_points,
)
from .evaluation import ari, dbscan, kmeans, benchmark
from .data import Dataset, gen_synthetic, load_iris, scale_to_box

__version__ = "0.1.0"

__all__ = [
    "Box", "Partition", "SplitRecord", "init_partition", "split_once", "build_partition", "locate",
    "DensityTree", "DensityForest", "ForestParams", "ForestDensity",
    "fit_tree", "eval_tree", "anll", "best_scored_tree", "fit_forest", "eval_forest",
    "EpsGraph", "ComponentLabels", "eps_graph", "connected_components", "tau_components", "knn_classify",
    "LevelSetPoints", "ClusterResult", "NoValidLevelError", "ForestLevelClustering",
    "level_points", "algorithm1_scan", "cluster_forest", "assign_background",
    "ari", "dbscan", "kmeans", "benchmark",
    "Dataset", "gen_synthetic", "scale_to_box", "load_iris",
]
