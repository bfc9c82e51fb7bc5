"""Normalized-cuts segmentation of an affinity graph."""

import logging
from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import InvalidInput

__all__ = ["ClusterAssignment", "normalized_cuts", "ncut_value"]

log = logging.getLogger(__name__)


@dataclass
class ClusterAssignment:
    labels: np.ndarray
    k: int
    embedding: np.ndarray
    eigenvalues: np.ndarray
    degenerate: bool = False


def normalized_cuts(A, k, seed=0, restarts=10):
    """Spectral k-way partition of a symmetric nonnegative affinity.

    Embeds vertices with the ``k`` bottom eigenvectors of
    ``I - D^{-1/2} A D^{-1/2}``, scales each embedding row to unit length
    (zero rows stay zero) and runs seeded k-means on the rows. Vertices of
    zero degree are given degree 1 so they still receive a label.

    The result is flagged ``degenerate`` when some label in ``[0, k)`` is
    unused, or when the k-th smallest Laplacian eigenvalue is >= 1, i.e.
    no k-way cut beats a structureless graph (the complete graph sits at
    ``m / (m - 1)``).
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInput("affinity must be square")
    m = A.shape[0]
    if k < 2:
        raise InvalidInput("k must be >= 2")
    if k > m:
        raise InvalidInput(f"k={k} exceeds the number of vertices {m}")
    if (A < 0).any():
        raise InvalidInput("affinity must be nonnegative")

    deg = A.sum(axis=1)
    isolated = deg <= 0
    deg[isolated] = 1.0
    inv_sqrt = 1.0 / np.sqrt(deg)
    L = np.eye(m) - inv_sqrt[:, None] * A * inv_sqrt[None, :]
    vals, vecs = numerics.eigh(L, k, which="smallest")
    vecs[isolated] = 0.0

    norms = np.linalg.norm(vecs, axis=1)
    emb = np.where(norms[:, None] > 0, vecs / np.where(norms > 0, norms, 1.0)[:, None], 0.0)
    labels = numerics.kmeans(emb, k, seed=seed, restarts=restarts)

    degenerate = np.unique(labels).size < k or vals[k - 1] >= 1.0
    if degenerate:
        log.info("normalized cuts: degenerate partition for k=%d", k)
    return ClusterAssignment(labels, k, emb, vals, bool(degenerate))


def ncut_value(A, labels):
    """``sum_c cut(S_c, ~S_c) / vol(S_c)`` for a given partition."""
    A = np.asarray(A, dtype=np.float64)
    labels = np.asarray(labels)
    total = 0.0
    for c in np.unique(labels):
        inside = labels == c
        vol = A[inside].sum()
        cut = A[np.ix_(inside, ~inside)].sum()
        total += cut / vol if vol > 0 else 0.0
    return total
