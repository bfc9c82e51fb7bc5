"""Sparse self-expression: per-sample lasso codes, the zero-diagonal code
matrix, the symmetric affinity and the outer-loop change statistic.

Every lasso minimizes ``||y - D c||_2^2 + lam * ||c||_1`` (no 1/2 factor),
so soft thresholds are at ``lam / 2`` in correlation units.
"""

import itertools
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import InvalidInput

__all__ = [
    "lasso_solve",
    "lasso_objective",
    "build_code_matrix",
    "affinity",
    "code_delta",
    "soft_threshold",
    "power_lipschitz",
]

BLOCK_COLUMNS = 128
# columns whose objective has stalled are certified on every this many iterations
CERTIFY_EVERY = 4
# every this many iterations, unfinished columns try a least-squares solve on their support
SUPPORT_EVERY = 25
# candidate supports keep coefficients at or above these fractions of the column's largest
SUPPORT_CUTS = (1e-4, 1e-2, 1e-1, 3e-1)
# supports up to this size also try every subset
SUPPORT_SUBSETS = 6
_TINY = 1e-300


def soft_threshold(a, t):
    return np.sign(a) * np.maximum(np.abs(a) - t, 0.0)


def lasso_objective(y, D, c, lam):
    r = np.asarray(y) - np.asarray(D) @ np.asarray(c)
    return float(r @ r + lam * np.abs(c).sum())


def power_lipschitz(D, iters=50, safety=1.01):
    """``safety * sigma_max(D)^2`` estimated by power iteration on the
    smaller Gram matrix, from a fixed start vector."""
    D = np.asarray(D, dtype=np.float64)
    G = D @ D.T if D.shape[0] <= D.shape[1] else D.T @ D
    v = np.random.default_rng(0).standard_normal(G.shape[0])
    est = 0.0
    for _ in range(iters):
        w = G @ v
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        est = float(v @ w) / float(v @ v)
        v = w / nrm
    return safety * max(est, float(v @ G @ v))


def _objectives(Y, D, X, lam):
    R = Y - D @ X
    return (R * R).sum(axis=0) + lam * np.abs(X).sum(axis=0)


def _certificate(Y, D, X, lam, pinned=None):
    """Duality gap and KKT violation of each column.

    With ``r = y - D x`` the point ``theta = s r``, ``s = min(1, lam / (2 ||D^T r||_inf))``,
    is dual feasible, giving ``f(x) - f* <= f(x) - (2 theta^T y - ||theta||^2)``.
    The KKT violation is the largest breach of ``2 d_j^T r = lam sign(x_j)``
    on the support and ``|2 d_j^T r| <= lam`` off it. Pinned coefficients
    are not part of the problem and are ignored by both.
    """
    R = Y - D @ X
    G = 2.0 * (D.T @ R)
    if pinned is not None:
        sel = pinned >= 0
        G[pinned[sel], np.nonzero(sel)[0]] = 0.0
    corr = np.abs(G).max(axis=0)
    s = np.minimum(1.0, lam / np.maximum(corr, _TINY))
    primal = (R * R).sum(axis=0) + lam * np.abs(X).sum(axis=0)
    dual = 2.0 * s * (R * Y).sum(axis=0) - s * s * (R * R).sum(axis=0)
    on = X != 0
    breach = np.where(on, np.abs(G - lam * np.sign(X)), np.maximum(np.abs(G) - lam, 0.0))
    if pinned is not None:
        breach[pinned[sel], np.nonzero(sel)[0]] = 0.0
    return primal - dual, breach.max(axis=0)


def _fista_block(Y, D, lam, tol, max_iter, lip, X0=None, zero_rows=None):
    """FISTA with monotone restarts on the columns of ``Y`` at once.

    ``zero_rows[j]`` (or -1) is a coefficient pinned to zero for column j.
    Each column stops on its own once its relative objective decrease
    drops below ``tol``, its duality gap is at most ``tol * (1 + f)`` and
    its KKT violation is at most ``10 * tol * lam``; the certificate keeps
    a slow stretch of iterations from passing for convergence.

    Every ``SUPPORT_EVERY`` iterations the unfinished columns also try
    sign-fixed least-squares points on subsets of their current support
    (see ``_support_search``). A column takes such a point and stops only
    if it passes the same certificate, so this shortcut never loosens the
    result. It spares the slow tail of FISTA when atoms nearly tied with
    the optimal ones leave small coefficients that decay very slowly.
    """
    p, b = D.shape[1], Y.shape[1]
    cols = np.arange(b)
    pinned = None
    if zero_rows is not None:
        pinned = np.asarray(zero_rows)
        has_pin = pinned >= 0

    def pin(Xb, idx):
        if pinned is not None:
            sel = has_pin[idx]
            Xb[pinned[idx][sel], np.nonzero(sel)[0]] = 0.0
        return Xb

    X = np.zeros((p, b)) if X0 is None else np.array(X0, dtype=np.float64)
    X = pin(X, cols)
    if lip <= 0.0:
        return np.zeros((p, b))
    L = np.full(b, lip)
    Yk = X.copy()
    t = np.ones(b)
    f = _objectives(Y, D, X, lam)
    active = cols.copy()
    DtY = D.T @ Y
    # support of each column at the last check; a warm start counts as one
    seen = {} if X0 is None else {j: np.flatnonzero(X[:, j]).tobytes() for j in cols}

    for it in range(1, max_iter + 1):
        if active.size == 0:
            break
        Ya, Xa, Ka, La = Y[:, active], X[:, active], Yk[:, active], L[active]
        G = D.T @ (D @ Ka) - DtY[:, active]
        Xn = pin(soft_threshold(Ka - G / La, lam / (2.0 * La)), active)
        fn = _objectives(Ya, D, Xn, lam)

        # momentum overshoot: fall back to a plain prox step from X and restart
        bad = fn > f[active]
        if bad.any():
            ib = np.nonzero(bad)[0]
            for _ in range(30):
                Gb = D.T @ (D @ Xa[:, ib]) - DtY[:, active[ib]]
                Lb = La[ib]
                Xb = pin(soft_threshold(Xa[:, ib] - Gb / Lb, lam / (2.0 * Lb)), active[ib])
                fb = _objectives(Ya[:, ib], D, Xb, lam)
                worse = fb > f[active[ib]] * (1 + 1e-15)
                Xn[:, ib[~worse]] = Xb[:, ~worse]
                fn[ib[~worse]] = fb[~worse]
                if not worse.any():
                    break
                # Lipschitz estimate too low for these columns
                La[ib[worse]] *= 2.0
                ib = ib[worse]
            else:
                Xn[:, ib] = Xa[:, ib]
                fn[ib] = f[active[ib]]
            L[active] = La
            t[active[bad]] = 1.0

        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t[active] ** 2))
        Yk[:, active] = Xn + ((t[active] - 1.0) / t_new) * (Xn - Xa)
        t[active] = t_new
        dec = (f[active] - fn) / np.maximum(f[active], _TINY)
        X[:, active] = Xn
        f[active] = fn
        done = (dec >= 0) & (dec < tol)
        if it % CERTIFY_EVERY:
            done[:] = False
        elif done.any():
            idx = np.nonzero(done)[0]
            pins = None if pinned is None else pinned[active[idx]]
            gap, kkt = _certificate(Ya[:, idx], D, Xn[:, idx], lam, pins)
            done[idx] = (gap <= tol * (1.0 + fn[idx])) & (kkt <= 10.0 * tol * lam)
        active = active[~done]

        if it % SUPPORT_EVERY == 1 and active.size:
            keep = np.ones(active.size, dtype=bool)
            for j, col in enumerate(active):
                # only a support that has held since the last check is worth solving on
                sig = np.flatnonzero(X[:, col]).tobytes()
                if seen.get(col) != sig:
                    seen[col] = sig
                    continue
                forbid = None if pinned is None or pinned[col] < 0 else int(pinned[col])
                hit = _support_search(Y[:, col], D, X[:, col], lam, tol, forbid)
                if hit is not None:
                    X[:, col], f[col] = hit
                    keep[j] = False
            active = active[keep]
    return X


def _support_search(y, D, x, lam, tol, forbid):
    """Look for a certified optimum among least-squares points on subsets of the support of ``x``.

    Candidates are the supports left after dropping entries below
    ``SUPPORT_CUTS`` fractions of the largest coefficient, then, for
    supports of at most ``SUPPORT_SUBSETS`` entries, every subset from
    largest to smallest. On a support S with signs s the candidate solves
    ``D_S^T D_S c = D_S^T y - lam s / 2`` and must keep the signs s. It is
    returned as ``(point, objective)`` if it passes the stopping
    certificate (see ``_certificate``), else the search returns None.
    """
    mag = np.abs(x)
    big = mag.max()
    if big == 0.0:
        return None
    supports = [tuple(np.flatnonzero(mag >= cut * big)) for cut in SUPPORT_CUTS]
    S = supports[0]
    if len(S) <= SUPPORT_SUBSETS:
        for r in range(len(S) - 1, 0, -1):
            supports.extend(itertools.combinations(S, r))
    tried = set()
    for sup in supports:
        if sup in tried or len(sup) > D.shape[0]:
            continue
        tried.add(sup)
        idx = list(sup)
        DS = D[:, idx]
        sg = np.sign(x[idx])
        try:
            cS = np.linalg.solve(DS.T @ DS, DS.T @ y - 0.5 * lam * sg)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.sign(cS) == sg):
            continue
        r = y - DS @ cS
        g = 2.0 * (D.T @ r)
        if forbid is not None:
            g[forbid] = 0.0
        on_breach = np.abs(g[idx] - lam * sg).max()
        g[idx] = 0.0
        corr = np.abs(g).max()
        if max(on_breach, corr - lam) > 10.0 * tol * lam:
            continue
        rr = r @ r
        fc = rr + lam * np.abs(cS).sum()
        sc = min(1.0, lam / max(corr, on_breach + lam, _TINY))
        if fc - (2.0 * sc * (r @ y) - sc * sc * rr) <= tol * (1.0 + fc):
            cand = np.zeros_like(x)
            cand[idx] = cS
            return cand, fc
    return None


def _polish(y, D, c, lam, forbid=None):
    """Re-solve on the support with signs fixed; keep if it lowers f."""
    S = np.nonzero(c)[0]
    if S.size == 0 or S.size > D.shape[0]:
        return c
    DS = D[:, S]
    s = np.sign(c[S])
    try:
        cS = np.linalg.solve(DS.T @ DS, DS.T @ y - 0.5 * lam * s)
    except np.linalg.LinAlgError:
        return c
    if not np.all(np.sign(cS) == s):
        return c
    cand = np.zeros_like(c)
    cand[S] = cS
    if forbid is not None:
        cand[forbid] = 0.0
    if lasso_objective(y, D, cand, lam) <= lasso_objective(y, D, c, lam):
        return cand
    return c


def lasso_solve(y, D, lam, tol=1e-6, max_iter=2000, polish=True):
    """Minimize ``||y - D c||^2 + lam ||c||_1`` by accelerated proximal gradient.

    Step ``1/L`` with ``L`` a power-iteration estimate of ``sigma_max(D)^2``
    (50 iterations, 1.01 safety factor); the step is halved whenever a
    plain proximal step fails to descend. Stops when the relative
    objective decrease falls below ``tol`` or after ``max_iter`` steps.
    A final sign-fixed least-squares pass on the support is kept only
    if it lowers the objective.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != y.size:
        raise InvalidInput(f"D must be {y.size} x p, got {D.shape}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(D))):
        raise InvalidInput("lasso inputs must be finite")
    if lam <= 0 or tol <= 0:
        raise InvalidInput("lam and tol must be positive")
    lip = power_lipschitz(D)
    if lip == 0.0:
        return np.zeros(D.shape[1])
    c = _fista_block(y[:, None], D, lam, tol, max_iter, lip)[:, 0]
    return _polish(y, D, c, lam) if polish else c


def _code_block(Z, cols, lam, tol, max_iter, lip, C0, polish):
    X0 = None if C0 is None else C0[:, cols]
    X = _fista_block(Z[:, cols], Z, lam, tol, max_iter, lip, X0=X0, zero_rows=cols)
    if polish:
        for j, i in enumerate(cols):
            X[:, j] = _polish(Z[:, i], Z, X[:, j], lam, forbid=i)
    X[cols, np.arange(len(cols))] = 0.0
    return X


def build_code_matrix(Z, lam=1.0, tol=1e-6, max_iter=2000, n_jobs=1, C0=None,
                      normalize=False, polish=True):
    """Self-expression codes for every column of Z.

    Column i of the result solves the lasso of ``z_i`` over all other
    columns, with entry i set to zero. Columns are solved in fixed blocks
    of ``BLOCK_COLUMNS``; ``n_jobs`` threads only change scheduling, never
    the arithmetic, so the result is identical for any worker count.

    Parameters
    ----------
    Z : (n, m) array_like
    C0 : (m, m) array_like, optional
        Warm start.
    normalize : bool
        Solve on unit-norm columns of Z instead of Z itself.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.ndim != 2 or Z.shape[1] < 2:
        raise InvalidInput("Z must be 2-D with at least two columns")
    if not np.all(np.isfinite(Z)):
        raise InvalidInput("Z must be finite")
    if normalize:
        norms = np.linalg.norm(Z, axis=0)
        norms[norms == 0] = 1.0
        Z = Z / norms
    m = Z.shape[1]
    C = np.zeros((m, m))
    # sigma_max(Z) bounds sigma_max of every leave-one-out dictionary
    lip = power_lipschitz(Z)
    if lip == 0.0:
        return C
    blocks = [np.arange(s, min(s + BLOCK_COLUMNS, m)) for s in range(0, m, BLOCK_COLUMNS)]

    def work(cols):
        return cols, _code_block(Z, cols, lam, tol, max_iter, lip, C0, polish)

    if n_jobs == 1:
        results = map(work, blocks)
    else:
        pool = ThreadPoolExecutor(max_workers=max(1, n_jobs))
        results = pool.map(work, blocks)
    for cols, X in results:
        C[:, cols] = X
    if n_jobs != 1:
        pool.shutdown()
    return C


def affinity(C):
    """``|C| + |C|^T``."""
    A = np.abs(np.asarray(C, dtype=np.float64))
    return A + A.T


def code_delta(C_new, C_old):
    """``||C_new - C_old||_F / max(||C_old||_F, 1e-12)``."""
    C_new = np.asarray(C_new, dtype=np.float64)
    C_old = np.asarray(C_old, dtype=np.float64)
    if C_new.shape != C_old.shape:
        raise InvalidInput("code matrices differ in shape")
    return float(np.linalg.norm(C_new - C_old) / max(np.linalg.norm(C_old), 1e-12))
