"""Dense linear-algebra kernels: pseudoinverse, Sylvester solver,
partial symmetric eigendecomposition and seeded k-means.

All routines are pure functions of their inputs.
"""

import numpy as np
from scipy import linalg as sla

from .errors import InvalidInput, SingularSylvester

__all__ = ["pinv", "sylvester_solve", "eigh", "kmeans", "wcss"]

PINV_RCOND = 1e-12
SYLVESTER_SEP_TOL = 1e-12


def _as_finite_matrix(M, name="M"):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise InvalidInput(f"{name} must be a non-empty 2-D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInput(f"{name} contains NaN or Inf")
    return M


def pinv(M, rcond=PINV_RCOND):
    """Moore-Penrose pseudoinverse through a thin SVD.

    Singular values at or below ``rcond * sigma_max`` are treated as zero.
    """
    M = _as_finite_matrix(M)
    if rcond < 0:
        raise InvalidInput("rcond must be nonnegative")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((M.shape[1], M.shape[0]))
    keep = s > rcond * s[0]
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (Vt.T * s_inv) @ U.T


def sylvester_solve(A, B, Q):
    """Solve ``A @ W + W @ B = Q`` for W (Bartels-Stewart, complex Schur form).

    Both coefficient matrices are reduced to upper-triangular Schur form,
    ``A = U S U^H`` and ``B = V T V^H``; the transformed system
    ``S Y + Y T = U^H Q V`` is then solved one column at a time by
    triangular back-substitution, because column j only couples to
    columns ``< j`` through ``T``.

    Parameters
    ----------
    A : (n, n) array_like
    B : (m, m) array_like
    Q : (n, m) array_like

    Returns
    -------
    W : (n, m) ndarray
        Real whenever all inputs are real.

    Raises
    ------
    SingularSylvester
        If some eigenvalue of A is within ``1e-12`` (relative to the
        spectral scale) of the negative of an eigenvalue of B.

    Notes
    -----
    Cost is O(n^3 + m^3 + n m^2); the m^3 Schur factorization of B is
    the scaling wall when B is the pixel-by-pixel coupling matrix.
    """
    A = _as_finite_matrix(A, "A")
    B = _as_finite_matrix(B, "B")
    Q = _as_finite_matrix(Q, "Q")
    n, m = Q.shape
    if A.shape != (n, n) or B.shape != (m, m):
        raise InvalidInput(f"shape mismatch: A {A.shape}, B {B.shape}, Q {Q.shape}")

    S, U = sla.schur(A, output="complex")
    T, V = sla.schur(B, output="complex")
    sa = np.diag(S)
    tb = np.diag(T)
    scale = max(1.0, np.abs(sa).max(), np.abs(tb).max())
    sep = np.abs(sa[:, None] + tb[None, :]).min()
    if sep <= SYLVESTER_SEP_TOL * scale:
        raise SingularSylvester(
            f"spectra of A and -B overlap (min |a_i + b_j| = {sep:.3e})"
        )

    F = U.conj().T @ Q @ V
    Y = np.empty((n, m), dtype=np.complex128)
    for j in range(m):
        rhs = F[:, j]
        if j:
            rhs = rhs - Y[:, :j] @ T[:j, j]
        Sj = S.copy()
        Sj[np.diag_indices(n)] += tb[j]
        Y[:, j] = sla.solve_triangular(Sj, rhs, lower=False, check_finite=False)
    W = U @ Y @ V.conj().T
    if not (np.iscomplexobj(A) or np.iscomplexobj(B) or np.iscomplexobj(Q)):
        W = W.real.copy()
    return W


def eigh(S, k=None, which="smallest"):
    """Partial eigendecomposition of a symmetric matrix.

    Returns the ``k`` smallest (or largest) eigenpairs, eigenvalues in
    ascending order and eigenvectors as columns. The input is symmetrized
    as ``(S + S.T) / 2`` first; relative asymmetry above 1e-6 is rejected.
    """
    S = _as_finite_matrix(S, "S")
    n = S.shape[0]
    if S.shape[1] != n:
        raise InvalidInput("S must be square")
    if k is None:
        k = n
    if not 1 <= k <= n:
        raise InvalidInput(f"k must lie in [1, {n}], got {k}")
    if which not in ("smallest", "largest"):
        raise InvalidInput(f"which must be 'smallest' or 'largest', got {which!r}")
    norm = np.linalg.norm(S)
    if norm > 0 and np.linalg.norm(S - S.T) > 1e-6 * norm:
        raise InvalidInput("S is not symmetric")
    S = 0.5 * (S + S.T)
    w, v = np.linalg.eigh(S)
    if which == "smallest":
        return w[:k].copy(), v[:, :k].copy()
    return w[n - k:].copy(), v[:, n - k:].copy()


def wcss(points, labels):
    """Within-cluster sum of squared distances to cluster means."""
    points = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    total = 0.0
    for lab in np.unique(labels):
        block = points[labels == lab]
        total += float(((block - block.mean(axis=0)) ** 2).sum())
    return total


def _kmeanspp(points, k, rng):
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[c] = points[idx]
        d2 = np.minimum(d2, ((points - centers[c]) ** 2).sum(axis=1))
    return centers


def _sq_dists(points, centers):
    return (
        (points ** 2).sum(axis=1)[:, None]
        - 2.0 * points @ centers.T
        + (centers ** 2).sum(axis=1)[None, :]
    )


def _lloyd(points, centers, max_iter):
    k = centers.shape[0]
    labels = None
    for _ in range(max_iter):
        d2 = _sq_dists(points, centers)
        new = d2.argmin(axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = points[members].mean(axis=0)
            else:
                # empty cluster: steal the point worst served by its center
                far = int(d2[np.arange(len(labels)), labels].argmax())
                centers[c] = points[far]
                labels[far] = c
                d2[far] = 0.0
    return labels


def kmeans(points, clusters, seed=0, restarts=10, max_iter=300):
    """Lloyd's k-means with k-means++ seeding and several restarts.

    Each restart draws from its own child of ``np.random.SeedSequence(seed)``,
    so restarts are independent of evaluation order. The restart with the
    lowest within-cluster sum of squares wins; ties go to the lowest index.

    Returns
    -------
    labels : (n,) ndarray of int
    """
    points = _as_finite_matrix(points, "points")
    n = points.shape[0]
    if clusters < 1 or clusters > n:
        raise InvalidInput(f"clusters must lie in [1, {n}], got {clusters}")
    if restarts < 1:
        raise InvalidInput("restarts must be >= 1")

    best_labels, best_cost = None, np.inf
    for child in np.random.SeedSequence(seed).spawn(restarts):
        rng = np.random.default_rng(child)
        centers = _kmeanspp(points, clusters, rng)
        labels = _lloyd(points, centers, max_iter)
        cost = wcss(points, labels)
        if cost < best_cost:
            best_labels, best_cost = labels, cost
    return best_labels.astype(np.int64)
