"""Mode-collapse diagnostic: single-linkage clustering of generated images."""

from __future__ import annotations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components


def pairwise_distances(images: np.ndarray) -> np.ndarray:
    """Root-mean-square pixel distance between every pair of images."""
    x = np.asarray(images, dtype=np.float64).reshape(len(images), -1)
    sq = (x * x).sum(axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * x @ x.T, 0.0)
    np.fill_diagonal(d2, 0.0)
    return np.sqrt(d2 / x.shape[1])


def calibrate_rho(images: np.ndarray) -> float:
    """Largest threshold that keeps every clean render in its own cluster."""
    if len(images) < 2:
        raise ValueError("need at least two images to calibrate the cluster threshold")
    d = pairwise_distances(images)
    iu = np.triu_indices(len(images), 1)
    return float(d[iu].min())


def distinct_count(images: np.ndarray, rho: float) -> int:
    """Number of clusters when images closer than ``rho`` are linked."""
    d = pairwise_distances(images)
    adj = csr_matrix(d < rho)
    n, _ = connected_components(adj, directed=False)
    return int(n)


def diversity(images: np.ndarray, rho: float) -> tuple[int, float]:
    if len(images) < 2:
        raise ValueError("diversity needs a batch of at least 2 images")
    d = pairwise_distances(images)
    iu = np.triu_indices(len(images), 1)
    return distinct_count(images, rho), float(d[iu].mean())
