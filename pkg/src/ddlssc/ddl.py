"""Deep dictionary model ``X ~ D_1 D_2 ... D_L Z`` and its block updates.

Dictionary blocks are refit by pseudoinverses, ``D_l = P^+ X Q^+`` with
``P = D_1...D_{l-1}`` and ``Q = D_{l+1}...D_L Z``. The representation is
refit against the self-expression penalty ``mu * ||Z - Z C||_F^2`` by
solving a Sylvester equation.
"""

import json
import logging
import warnings
from dataclasses import dataclass, replace
from functools import reduce
from pathlib import Path

import numpy as np

from . import numerics
from .dataio import read_matrix_csv, write_matrix_csv
from .errors import InvalidInput, SingularSylvester

__all__ = [
    "LayerSchedule",
    "DdlState",
    "ObjectiveBreakdown",
    "init_state",
    "update_dictionary",
    "update_z",
    "objective",
    "compose",
    "save_checkpoint",
    "load_checkpoint",
    "Z_MODES",
]

log = logging.getLogger(__name__)

Z_MODES = ("paper_exact", "gradient_exact")
MAX_DEPTH = 4


@dataclass(frozen=True)
class LayerSchedule:
    """Atom counts per layer; each layer keeps half of the previous width."""

    depth: int
    atoms: tuple

    def __post_init__(self):
        if not 1 <= self.depth <= MAX_DEPTH:
            raise InvalidInput(f"depth must lie in [1, {MAX_DEPTH}], got {self.depth}")
        if len(self.atoms) != self.depth:
            raise InvalidInput("atoms must list one count per layer")
        if self.atoms[-1] < 2:
            raise InvalidInput(f"innermost layer needs >= 2 atoms, got {self.atoms}")

    @classmethod
    def halving(cls, dim, depth):
        atoms, width = [], dim
        for _ in range(depth):
            width //= 2
            atoms.append(width)
        return cls(depth, tuple(atoms))

    def shapes(self, dim):
        widths = (dim,) + tuple(self.atoms)
        return [(widths[i], widths[i + 1]) for i in range(self.depth)]


@dataclass(frozen=True)
class DdlState:
    dictionaries: tuple
    Z: np.ndarray
    mu: float = 1.0
    iteration: int = 0
    seed: int = 0

    @property
    def depth(self):
        return len(self.dictionaries)

    @property
    def atoms(self):
        return tuple(D.shape[1] for D in self.dictionaries)


@dataclass(frozen=True)
class ObjectiveBreakdown:
    recon: float
    ssc: float
    l1: float
    total: float


def _chain(mats):
    return reduce(np.matmul, mats)


def compose(dictionaries):
    """The composed dictionary ``D_1 @ ... @ D_L``."""
    return _chain(dictionaries)


def _data(X):
    return X.data if hasattr(X, "data") else np.asarray(X, dtype=np.float64)


def init_state(X, schedule, seed=0, mu=1.0):
    """Gaussian unit-column dictionaries, least-squares representation."""
    X = _data(X)
    d, m = X.shape
    if schedule.atoms[0] > d:
        raise InvalidInput(f"first layer width {schedule.atoms[0]} exceeds input dim {d}")
    if mu < 0:
        raise InvalidInput("mu must be nonnegative")
    if schedule.atoms[-1] >= m:
        warnings.warn(
            f"representation width {schedule.atoms[-1]} >= sample count {m}",
            RuntimeWarning,
            stacklevel=2,
        )
    rng = np.random.default_rng(seed)
    dictionaries = []
    for shape in schedule.shapes(d):
        D = rng.standard_normal(shape)
        D /= np.linalg.norm(D, axis=0)
        dictionaries.append(D)
    Z = numerics.pinv(compose(dictionaries)) @ X
    return DdlState(tuple(dictionaries), Z, float(mu), 0, seed)


def update_dictionary(state, X, layer):
    """Refit dictionary ``layer`` (1-based) with every other block fixed.

    ``D_l = pinv(D_1...D_{l-1}) @ X @ pinv(D_{l+1}...D_L Z)``; the left
    factor is dropped for the outermost layer.
    """
    X = _data(X)
    L = state.depth
    if not 1 <= layer <= L:
        raise InvalidInput(f"layer must lie in [1, {L}], got {layer}")
    Ds = state.dictionaries
    Q = _chain(list(Ds[layer:]) + [state.Z])
    D_new = X @ numerics.pinv(Q)
    if layer > 1:
        D_new = numerics.pinv(_chain(Ds[: layer - 1])) @ D_new
    Ds = Ds[: layer - 1] + (D_new,) + Ds[layer:]
    return replace(state, dictionaries=Ds)


def update_z(state, X, C, mode="paper_exact", nonneg_project=False):
    """Refit Z against reconstruction plus self-expression.

    Solves ``A Z + Z B = Q`` with ``A = Dt^T Dt``, ``Q = Dt^T X`` and
    ``Dt`` the composed dictionary. ``B = mu (I - C)`` in ``paper_exact``
    mode; ``B = mu (I - C)(I - C)^T`` in ``gradient_exact`` mode, which is
    the actual stationarity condition of
    ``||X - Dt Z||^2 + mu ||Z - Z C||^2``. With ``mu == 0`` this reduces
    to ``Z = pinv(Dt) X``.

    If the Sylvester system is singular, ``A`` receives a ridge of
    ``1e-8 * trace(A) / n`` and the solve is retried once.
    """
    if mode not in Z_MODES:
        raise InvalidInput(f"mode must be one of {Z_MODES}, got {mode!r}")
    X = _data(X)
    Dt = compose(state.dictionaries)
    if state.mu == 0:
        Z = numerics.pinv(Dt) @ X
    else:
        C = np.asarray(C, dtype=np.float64)
        m = X.shape[1]
        if C.shape != (m, m):
            raise InvalidInput(f"C must be {m}x{m}, got {C.shape}")
        if np.any(np.diag(C) != 0):
            raise InvalidInput("C must have a zero diagonal")
        A = Dt.T @ Dt
        Q = Dt.T @ X
        IC = np.eye(m) - C
        B = state.mu * (IC if mode == "paper_exact" else IC @ IC.T)
        try:
            Z = numerics.sylvester_solve(A, B, Q)
        except SingularSylvester:
            ridge = 1e-8 * np.trace(A) / A.shape[0]
            log.warning("singular Sylvester system, retrying with ridge %.3e", ridge)
            Z = numerics.sylvester_solve(A + ridge * np.eye(A.shape[0]), B, Q)
    if nonneg_project:
        Z = np.maximum(Z, 0.0)
    return replace(state, Z=Z)


def objective(state, X, C, lam=1.0):
    """Evaluate reconstruction, self-expression and l1 terms.

    ``C`` has a zero diagonal, so ``||Z - Z C||_F^2`` equals the sum over
    samples of ``||z_i - Z_{-i} c_i||^2``.
    """
    X = _data(X)
    C = np.asarray(C, dtype=np.float64)
    Z = state.Z
    recon = float(np.sum((X - compose(state.dictionaries) @ Z) ** 2))
    ssc = float(np.sum((Z - Z @ C) ** 2))
    l1 = float(np.abs(C).sum())
    return ObjectiveBreakdown(recon, ssc, l1, recon + state.mu * ssc + lam * l1)


def save_checkpoint(state, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, D in enumerate(state.dictionaries, start=1):
        write_matrix_csv(directory / f"D{i}.csv", D)
    write_matrix_csv(directory / "Z.csv", state.Z)
    manifest = {
        "depth": state.depth,
        "atoms": list(state.atoms),
        "mu": state.mu,
        "iteration": state.iteration,
        "seed": state.seed,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_checkpoint(directory):
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    Ds = tuple(read_matrix_csv(directory / f"D{i}.csv") for i in range(1, manifest["depth"] + 1))
    Z = read_matrix_csv(directory / "Z.csv")
    return DdlState(Ds, Z, manifest["mu"], manifest["iteration"], manifest["seed"])
