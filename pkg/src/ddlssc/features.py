"""Spatio-spectral features: a w x w window of full spectra around each
pixel, flattened into a column, followed by PCA over the columns."""

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.linalg import null_space

from . import numerics
from .dataio import FeatureMatrix, HyperCube, LabelMap
from .errors import DegenerateData, InvalidInput

__all__ = ["PcaModel", "extract_patches", "pca_fit_transform", "retained_components", "normalize_columns"]


@dataclass
class PcaModel:
    mean: np.ndarray  # (d_raw,)
    basis: np.ndarray  # (d_raw, d), orthonormal columns
    explained: np.ndarray  # (d,), descending covariance eigenvalues

    def transform(self, raw):
        return self.basis.T @ (np.asarray(raw) - self.mean[:, None])

    def inverse_transform(self, reduced):
        return self.basis @ np.asarray(reduced) + self.mean[:, None]


def extract_patches(cube, window, mask=None):
    """Vectorize the ``window x window x B`` neighbourhood of every pixel.

    Column layout: spatial offsets in row-major order, and for each offset
    its B bands contiguously (i.e. a C-order flatten of the patch). Image
    borders are mirror padded without repeating the edge pixel. Columns
    follow row-major pixel order; with ``mask`` only pixels whose label
    is nonzero are kept.

    Raises
    ------
    InvalidInput
        If ``window`` is even, < 1, or larger than ``2*min(H, W) - 1``.
    """
    if isinstance(cube, np.ndarray):
        cube = HyperCube(cube)
    H, W, B = cube.values.shape
    if window < 1 or window % 2 == 0:
        raise InvalidInput(f"window must be a positive odd integer, got {window}")
    if window > 2 * min(H, W) - 1:
        raise InvalidInput(f"window {window} too large for a {H}x{W} image")
    half = window // 2

    if mask is None:
        keep = np.ones((H, W), dtype=bool)
    else:
        labels = mask.labels if isinstance(mask, LabelMap) else np.asarray(mask)
        if labels.shape != (H, W):
            raise InvalidInput("mask does not match cube geometry")
        keep = labels != 0
    rows, cols = np.nonzero(keep)

    padded = np.pad(cube.values, ((half, half), (half, half), (0, 0)), mode="reflect")
    # (H, W, B, w, w) view; reorder to (H, W, w, w, B) before flattening
    windows = sliding_window_view(padded, (window, window), axis=(0, 1))
    patches = windows[rows, cols].transpose(0, 2, 3, 1).reshape(len(rows), -1)
    return FeatureMatrix(patches.T.copy(), np.column_stack([rows, cols]), shape=(H, W))


def retained_components(d_raw, keep_fraction):
    """``ceil(keep_fraction * d_raw)``, immune to float noise such as 0.1*1800."""
    if not 0 < keep_fraction <= 1:
        raise InvalidInput(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    return max(1, min(d_raw, math.ceil(round(keep_fraction * d_raw, 9))))


def _fix_signs(basis):
    idx = np.abs(basis).argmax(axis=0)
    signs = np.sign(basis[idx, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


def pca_fit_transform(raw, keep_fraction=0.10):
    """Project centred columns onto the leading principal directions.

    Keeps ``ceil(keep_fraction * d_raw)`` components. The decomposition
    runs on the ``d_raw x d_raw`` covariance or the ``m x m`` Gram matrix,
    whichever is smaller. Each direction's largest-magnitude entry is
    made positive.

    Returns
    -------
    (FeatureMatrix, PcaModel)
    """
    if isinstance(raw, np.ndarray):
        raw = FeatureMatrix.from_array(raw)
    Xr = raw.data
    d_raw, m = Xr.shape
    if m < 2:
        raise InvalidInput("PCA needs at least two samples")
    d = retained_components(d_raw, keep_fraction)

    mean = Xr.mean(axis=1)
    Xc = Xr - mean[:, None]
    if not np.any(Xc):
        raise DegenerateData("all feature columns are identical")

    if d_raw <= m:
        cov = Xc @ Xc.T / (m - 1)
        vals, vecs = numerics.eigh(cov, d, which="largest")
        vals, basis = vals[::-1], vecs[:, ::-1]
    else:
        gram = Xc.T @ Xc
        kk = min(d, m)
        vals, vecs = numerics.eigh(gram, kk, which="largest")
        vals, vecs = vals[::-1], vecs[:, ::-1]
        tol = max(vals[0], 0.0) * m * np.finfo(float).eps
        good = vals > tol
        basis = Xc @ vecs[:, good] / np.sqrt(vals[good])
        vals = vals[good] / (m - 1)
        if basis.shape[1] < d:
            # rank < d: pad with an orthonormal complement, zero variance
            extra = null_space(basis.T)[:, : d - basis.shape[1]]
            basis = np.hstack([basis, extra])
            vals = np.concatenate([vals, np.zeros(extra.shape[1])])
    vals = np.clip(vals, 0.0, None)
    basis = _fix_signs(basis)
    model = PcaModel(mean=mean, basis=basis, explained=vals)
    out = FeatureMatrix(basis.T @ Xc, raw.pixel_index, shape=raw.shape)
    return out, model


def normalize_columns(features):
    """Scale every column to unit l2 norm (zero columns left untouched)."""
    data = features.data
    norms = np.linalg.norm(data, axis=0)
    norms[norms == 0] = 1.0
    return FeatureMatrix(data / norms, features.pixel_index, shape=features.shape)
