"""Independent reference computations used by the tests.

Each oracle takes a different route from the library code it checks:
brute-force enumeration, dense Kronecker systems, coordinate descent,
plain gradient descent, exact polynomial arithmetic.
"""

import itertools
import math
from collections import Counter

import mpmath
import numpy as np


# --- linear algebra ----------------------------------------------------------

def kron_sylvester(A, B, Q):
    """Solve AW + WB = Q via (I_m (x) A + B^T (x) I_n) vec(W) = vec(Q)."""
    n, m = Q.shape
    K = np.kron(np.eye(m), A) + np.kron(B.T, np.eye(n))
    w = np.linalg.solve(K, Q.reshape(-1, order="F"))
    return w.reshape((n, m), order="F")


def charpoly_eigenvalues(S, dps=50):
    """Eigenvalues as roots of the characteristic polynomial.

    Coefficients come from the Faddeev-LeVerrier recursion in
    multiprecision arithmetic; roots from mpmath's polynomial solver.
    """
    mpmath.mp.dps = dps
    n = S.shape[0]
    M = mpmath.matrix(S.tolist())
    I = mpmath.eye(n)
    coeffs = [mpmath.mpf(1)]
    Mk = mpmath.zeros(n, n)
    for k in range(1, n + 1):
        Mk = M * Mk + coeffs[-1] * I
        ck = -sum((M * Mk)[i, i] for i in range(n)) / k
        coeffs.append(ck)
    roots = mpmath.polyroots(coeffs, maxsteps=500, extraprec=200)
    return np.sort(np.array([float(mpmath.re(r)) for r in roots]))


# --- lasso -------------------------------------------------------------------

def cd_lasso(y, D, lam, tol=1e-10, max_sweeps=200000):
    """Cyclic coordinate descent on ||y - Dc||^2 + lam ||c||_1."""
    n, p = D.shape
    col_sq = (D ** 2).sum(axis=0)
    c = np.zeros(p)
    r = y.astype(float).copy()
    for _ in range(max_sweeps):
        biggest = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            old = c[j]
            rho = D[:, j] @ r + col_sq[j] * old
            new = np.sign(rho) * max(abs(rho) - lam / 2.0, 0.0) / col_sq[j]
            if new != old:
                r -= D[:, j] * (new - old)
                c[j] = new
                biggest = max(biggest, abs(new - old))
        if biggest < tol:
            break
    return c


def lasso_value(y, D, c, lam):
    r = y - D @ c
    return float(r @ r + lam * np.abs(c).sum())


# --- block oracles by gradient descent ---------------------------------------

def gd_minimize(grad, f, x0, lip, iters=200000, tol=1e-13):
    """Nesterov-accelerated gradient descent with restart; returns argmin."""
    x = x0.copy()
    yk = x.copy()
    t = 1.0
    fx = f(x)
    for _ in range(iters):
        xn = yk - grad(yk) / lip
        fn = f(xn)
        if fn > fx:
            yk, t = x.copy(), 1.0
            continue
        tn = 0.5 * (1 + math.sqrt(1 + 4 * t * t))
        yk = xn + ((t - 1) / tn) * (xn - x)
        if fx - fn <= tol * max(1.0, abs(fx)):
            x, fx = xn, fn
            break
        x, fx, t = xn, fn, tn
    return x


def dictionary_block_oracle(X, P, Q, D0):
    """min_D ||X - P D Q||_F^2 by gradient descent from D0."""
    def f(D):
        return float(np.sum((X - P @ D @ Q) ** 2))

    def grad(D):
        return -2.0 * P.T @ (X - P @ D @ Q) @ Q.T

    lip = 2.0 * np.linalg.norm(P, 2) ** 2 * np.linalg.norm(Q, 2) ** 2
    return gd_minimize(grad, f, D0, lip)


def z_block_oracle(X, Dt, C, mu, Z0, symmetric_penalty=False):
    """min_Z ||X - Dt Z||^2 + mu ||Z - Z C||^2 by gradient descent.

    With ``symmetric_penalty`` the penalty is ``mu tr(Z (I - C) Z^T)``
    for a symmetric C instead.
    """
    m = C.shape[0]
    IC = np.eye(m) - C
    if symmetric_penalty:
        M = IC
    else:
        M = IC @ IC.T

    def f(Z):
        return float(np.sum((X - Dt @ Z) ** 2) + mu * np.trace(Z @ M @ Z.T))

    def grad(Z):
        return -2.0 * Dt.T @ (X - Dt @ Z) + mu * Z @ (M + M.T)

    lip = 2.0 * np.linalg.norm(Dt, 2) ** 2 + 2.0 * mu * np.linalg.norm(M, 2)
    return gd_minimize(grad, f, Z0, lip), f


def finite_difference_grad(f, Z, h=1e-6):
    G = np.zeros_like(Z)
    for idx in np.ndindex(Z.shape):
        E = np.zeros_like(Z)
        E[idx] = h
        G[idx] = (f(Z + E) - f(Z - E)) / (2 * h)
    return G


# --- partitions ----------------------------------------------------------------

def exhaustive_min_wcss(points, k):
    n = len(points)
    best = np.inf
    for labels in itertools.product(range(k), repeat=n):
        if len(set(labels)) < k:
            continue
        labels = np.array(labels)
        cost = sum(((points[labels == c] - points[labels == c].mean(axis=0)) ** 2).sum()
                   for c in range(k))
        best = min(best, cost)
    return best


def ncut_bipartition(A):
    """Minimum of cut/vol(S) + cut/vol(~S) over all bipartitions."""
    n = A.shape[0]
    best, best_set = np.inf, None
    for mask in range(1, 2 ** (n - 1)):
        S = np.array([(mask >> i) & 1 for i in range(n)], dtype=bool)
        cut = A[np.ix_(S, ~S)].sum()
        val = cut / A[S].sum() + cut / A[~S].sum()
        if val < best:
            best, best_set = val, S
    return best, best_set


def same_partition(a, b):
    a, b = list(a), list(b)
    fwd, back = {}, {}
    for x, y in zip(a, b):
        if fwd.setdefault(x, y) != y or back.setdefault(y, x) != x:
            return False
    return True


# --- clustering metrics by direct counting ---------------------------------------

def _h(counter, n):
    return -sum(v / n * math.log(v / n) for v in counter.values())


def nmi_by_counting(pred, truth):
    n = len(pred)
    cp, ct, joint = Counter(pred), Counter(truth), Counter(zip(pred, truth))
    hp, ht = _h(cp, n), _h(ct, n)
    if hp == 0 or ht == 0:
        return 1.0 if hp == ht else 0.0
    mi = sum(v / n * math.log((v / n) / ((cp[a] / n) * (ct[b] / n))) for (a, b), v in joint.items())
    return mi / math.sqrt(hp * ht)


def ari_by_pairs(pred, truth):
    """Hubert-Arabie ARI from explicit pair enumeration."""
    n = len(pred)
    a = b = c = d = 0
    for i, j in itertools.combinations(range(n), 2):
        sp, st = pred[i] == pred[j], truth[i] == truth[j]
        if sp and st:
            a += 1
        elif sp:
            b += 1
        elif st:
            c += 1
        else:
            d += 1
    pairs = a + b + c + d
    if pairs == 0:
        return 1.0
    same_pred, same_true = a + b, a + c
    expected = same_pred * same_true / pairs
    maximum = 0.5 * (same_pred + same_true)
    if maximum == expected:
        return 1.0 if same_partition(pred, truth) else 0.0
    return (a - expected) / (maximum - expected)


def purity_entropy_by_counting(pred, truth):
    n = len(pred)
    classes = sorted(set(truth))
    purity = 0
    ent = 0.0
    for cl in sorted(set(pred)):
        members = [t for p, t in zip(pred, truth) if p == cl]
        cnt = Counter(members)
        purity += max(cnt.values())
        ni = len(members)
        ent += ni / n * -sum(v / ni * math.log2(v / ni) for v in cnt.values())
    if len(classes) < 2:
        return purity / n, 0.0
    return purity / n, ent / math.log2(len(classes))


def best_map_weight(pred, truth):
    """Max matched count over all injective maps of predicted clusters."""
    P, T = sorted(set(pred)), sorted(set(truth))
    counts = Counter(zip(pred, truth))
    best = 0
    if len(P) <= len(T):
        for perm in itertools.permutations(T, len(P)):
            best = max(best, sum(counts[(p, t)] for p, t in zip(P, perm)))
    else:
        for perm in itertools.permutations(P, len(T)):
            best = max(best, sum(counts[(p, t)] for p, t in zip(perm, T)))
    return best
