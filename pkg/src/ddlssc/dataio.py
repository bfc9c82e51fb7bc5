"""Readers and writers for cubes, label maps, matrices and run artifacts,
plus the seeded union-of-subspaces generator used as a test oracle.

Cube container
--------------
A JSON header::

    {"height": H, "width": W, "bands": B, "dtype": "f64le", "order": "bip",
     "data": "cube.bin", "labels": "labels.bin"}

``data`` holds ``H*W*B`` little-endian float64 values, band-interleaved by
pixel, pixels in row-major order. ``labels`` (optional) holds ``H*W``
little-endian int32 values in row-major order, 0 meaning unlabeled.
Paths are relative to the header's directory.

Converting from ENVI/MAT: load the array with your tool of choice, drop
the absorption bands, then call :func:`write_cube`.
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInput, IoError

__all__ = [
    "HyperCube",
    "LabelMap",
    "FeatureMatrix",
    "SyntheticSpec",
    "read_cube",
    "write_cube",
    "write_cluster_map",
    "write_cluster_csv",
    "read_cluster_csv",
    "write_pgm",
    "read_pgm",
    "write_feature_csv",
    "read_feature_csv",
    "write_matrix_csv",
    "read_matrix_csv",
    "write_triplets_csv",
    "write_trace_csv",
    "synth_subspaces",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = ("iter", "recon_term", "ssc_term", "l1_term", "total", "delta_C")


@dataclass
class HyperCube:
    """An ``(height, width, bands)`` image volume."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or min(self.values.shape) < 1:
            raise InvalidInput(f"cube must be H x W x B, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise InvalidInput("cube contains NaN or Inf")

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def bands(self):
        return self.values.shape[2]


@dataclass
class LabelMap:
    """Per-pixel ground truth; 0 is unlabeled, classes are 1..K."""

    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 2:
            raise InvalidInput("label map must be 2-D")
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise InvalidInput("label map must be integer valued")
        if (self.labels < 0).any():
            raise InvalidInput("labels must be >= 0")
        self.labels = self.labels.astype(np.int64)

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]


@dataclass
class FeatureMatrix:
    """``d x m`` matrix with one column per pixel.

    ``pixel_index[j]`` is the ``(row, col)`` the column came from. ``shape``
    is the source image geometry when known.
    """

    data: np.ndarray
    pixel_index: np.ndarray
    shape: tuple = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.pixel_index = np.asarray(self.pixel_index, dtype=np.int64).reshape(-1, 2)
        if self.data.ndim != 2:
            raise InvalidInput("feature data must be 2-D")
        if self.pixel_index.shape[0] != self.data.shape[1]:
            raise InvalidInput(
                f"pixel_index has {self.pixel_index.shape[0]} entries for "
                f"{self.data.shape[1]} columns"
            )
        if not np.all(np.isfinite(self.data)):
            raise InvalidInput("feature matrix contains NaN or Inf")
        if self.shape is not None:
            self.shape = tuple(int(s) for s in self.shape)

    @property
    def dim(self):
        return self.data.shape[0]

    @property
    def samples(self):
        return self.data.shape[1]

    @classmethod
    def from_array(cls, data):
        """Wrap a bare array, indexing columns as pixels ``(0, j)``."""
        data = np.asarray(data, dtype=np.float64)
        m = data.shape[1]
        idx = np.column_stack([np.zeros(m, dtype=np.int64), np.arange(m)])
        return cls(data, idx)


@dataclass(frozen=True)
class SyntheticSpec:
    clusters: int
    subspace_dim: int
    ambient_dim: int
    points_per_cluster: int
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.clusters < 2:
            raise InvalidInput("clusters must be >= 2")
        if not 1 <= self.subspace_dim < self.ambient_dim:
            raise InvalidInput("need 1 <= subspace_dim < ambient_dim")
        if self.points_per_cluster < 1:
            raise InvalidInput("points_per_cluster must be >= 1")
        if self.noise_sigma < 0:
            raise InvalidInput("noise_sigma must be >= 0")


# --- cube container -------------------------------------------------------

_HEADER_KEYS = {"height": int, "width": int, "bands": int, "dtype": str, "order": str, "data": str}


def _check_header(hdr):
    if not isinstance(hdr, dict):
        raise FormatError("header must be a JSON object")
    for key, typ in _HEADER_KEYS.items():
        if key not in hdr:
            raise FormatError(f"header missing {key!r}")
        if not isinstance(hdr[key], typ) or isinstance(hdr[key], bool):
            raise FormatError(f"header field {key!r} must be {typ.__name__}")
    for key in ("height", "width", "bands"):
        if hdr[key] < 1:
            raise FormatError(f"header field {key!r} must be positive")
    if hdr["dtype"] != "f64le":
        raise FormatError(f"unsupported dtype {hdr['dtype']!r}")
    if hdr["order"] != "bip":
        raise FormatError(f"unsupported order {hdr['order']!r}")
    if "labels" in hdr and hdr["labels"] is not None and not isinstance(hdr["labels"], str):
        raise FormatError("header field 'labels' must be a string path")


def _read_payload(path, dtype, count, what):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {what} payload {path}: {exc}") from exc
    itemsize = np.dtype(dtype).itemsize
    if len(raw) != count * itemsize:
        raise FormatError(
            f"{what} payload {path} holds {len(raw) / itemsize:g} values, header implies {count}"
        )
    return np.frombuffer(raw, dtype=dtype).copy()


def read_cube(header_path):
    """Load a cube container; returns ``(HyperCube, LabelMap or None)``."""
    header_path = Path(header_path)
    try:
        hdr = json.loads(header_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot parse header {header_path}: {exc}") from exc
    _check_header(hdr)
    H, W, B = hdr["height"], hdr["width"], hdr["bands"]
    base = header_path.parent
    values = _read_payload(base / hdr["data"], "<f8", H * W * B, "cube")
    if not np.all(np.isfinite(values)):
        raise FormatError("cube payload contains NaN or Inf")
    cube = HyperCube(values.reshape(H, W, B))
    labels = None
    if hdr.get("labels"):
        lab = _read_payload(base / hdr["labels"], "<i4", H * W, "label")
        if (lab < 0).any():
            raise FormatError("label payload contains negative values")
        labels = LabelMap(lab.reshape(H, W).astype(np.int64))
    return cube, labels


def write_cube(header_path, cube, labels=None):
    """Write ``cube`` (and optional ``labels``) as a container next to ``header_path``."""
    header_path = Path(header_path)
    stem = header_path.stem
    hdr = {
        "height": cube.height,
        "width": cube.width,
        "bands": cube.bands,
        "dtype": "f64le",
        "order": "bip",
        "data": f"{stem}.bin",
    }
    try:
        header_path.parent.mkdir(parents=True, exist_ok=True)
        (header_path.parent / hdr["data"]).write_bytes(cube.values.astype("<f8").tobytes())
        if labels is not None:
            if (labels.height, labels.width) != (cube.height, cube.width):
                raise InvalidInput("label map does not match cube geometry")
            hdr["labels"] = f"{stem}_labels.bin"
            (header_path.parent / hdr["labels"]).write_bytes(labels.labels.astype("<i4").tobytes())
        header_path.write_text(json.dumps(hdr, indent=2))
    except OSError as exc:
        raise IoError(str(exc)) from exc


# --- cluster maps -----------------------------------------------------------

def write_cluster_csv(path, labels, pixel_index):
    labels = np.asarray(labels)
    pixel_index = np.asarray(pixel_index).reshape(-1, 2)
    if len(labels) != len(pixel_index):
        raise InvalidInput("labels and pixel_index lengths differ")
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "col", "label"])
            for (r, c), lab in zip(pixel_index.tolist(), labels.tolist()):
                w.writerow([r, c, lab])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_cluster_csv(path):
    """Read a ``row,col,label`` CSV; returns ``(pixel_index, labels)``."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if not rows or [h.strip() for h in rows[0]] != ["row", "col", "label"]:
        raise FormatError(f"{path}: expected header row,col,label")
    try:
        body = np.array([[int(v) for v in r] for r in rows[1:] if r], dtype=np.int64)
    except ValueError as exc:
        raise FormatError(f"{path}: non-integer entry ({exc})") from exc
    if body.size == 0:
        return np.zeros((0, 2), dtype=np.int64), np.zeros(0, dtype=np.int64)
    if body.shape[1] != 3:
        raise FormatError(f"{path}: every line needs exactly 3 fields")
    return body[:, :2], body[:, 2]


def write_pgm(path, image):
    """Binary P5 graymap, maxval 255."""
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(image.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_pgm(path):
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    pos += 1
    if tokens[0] != "P5":
        raise FormatError(f"{path}: not a binary graymap")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255 or len(data) - pos != w * h:
        raise FormatError(f"{path}: unexpected payload")
    return np.frombuffer(data[pos:], dtype=np.uint8).reshape(h, w)


def _scale_labels(values):
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros(values.shape, dtype=np.uint8)
    return np.rint((values - lo) * 255.0 / (hi - lo)).astype(np.uint8)


def write_cluster_map(labels, height, width, path, pixel_index=None):
    """Write ``<path>.csv`` (row,col,label) and ``<path>.pgm``.

    Without ``pixel_index`` the labels cover the full image in row-major
    order. With it, pixels not listed are drawn as 0 in the graymap and
    listed labels are scaled into 1..255.
    """
    labels = np.asarray(labels, dtype=np.int64)
    stem = Path(path)
    if stem.suffix in (".csv", ".pgm"):
        stem = stem.with_suffix("")
    if pixel_index is None:
        if labels.size != height * width:
            raise InvalidInput(f"{labels.size} labels for a {height}x{width} map")
        rr, cc = np.divmod(np.arange(height * width), width)
        pixel_index = np.column_stack([rr, cc])
        image = _scale_labels(labels).reshape(height, width)
    else:
        pixel_index = np.asarray(pixel_index, dtype=np.int64).reshape(-1, 2)
        image = np.zeros((height, width), dtype=np.uint8)
        if labels.size:
            scaled = _scale_labels(labels).astype(np.float64)
            image[pixel_index[:, 0], pixel_index[:, 1]] = np.rint(1 + scaled * 254 / 255)
    write_cluster_csv(f"{stem}.csv", labels, pixel_index)
    write_pgm(f"{stem}.pgm", image)


# --- matrices ---------------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def write_matrix_csv(path, M):
    """Plain numeric CSV, one matrix row per line, round-trip exact."""
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    try:
        with open(path, "w") as fh:
            for row in M:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_matrix_csv(path):
    try:
        M = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read matrix {path}: {exc}") from exc
    return M


def write_feature_csv(path, features):
    """Feature per row, sample per column, header row of ``r:c`` pixel ids."""
    try:
        with open(path, "w") as fh:
            fh.write(",".join(f"{r}:{c}" for r, c in features.pixel_index.tolist()) + "\n")
            for row in features.data:
                fh.write(",".join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def read_feature_csv(path):
    try:
        with open(path) as fh:
            header = fh.readline().strip()
            lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    try:
        idx = [tuple(int(t) for t in h.split(":")) for h in header.split(",")]
        if any(len(t) != 2 for t in idx):
            raise ValueError("pixel id must look like r:c")
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != len(idx):
        raise FormatError(f"{path}: {len(idx)} pixel ids but rows of differing width")
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite feature value")
    return FeatureMatrix(data, np.array(idx, dtype=np.int64))


def write_triplets_csv(path, M, threshold=1e-12):
    """Sparse ``i,j,value`` export of entries with ``|value| > threshold``."""
    M = np.asarray(M)
    ii, jj = np.nonzero(np.abs(M) > threshold)
    try:
        with open(path, "w") as fh:
            fh.write("i,j,value\n")
            for i, j in zip(ii.tolist(), jj.tolist()):
                fh.write(f"{i},{j},{_fmt(M[i, j])}\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_trace_csv(path, rows):
    """``rows`` are mappings or sequences ordered as ``TRACE_COLUMNS``."""
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for row in rows:
                if isinstance(row, dict):
                    row = [row[c] for c in TRACE_COLUMNS]
                w.writerow([int(row[0])] + [_fmt(v) for v in row[1:]])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# --- synthetic data ---------------------------------------------------------

def synth_subspaces(spec):
    """Sample a union of random linear subspaces.

    Returns ``(FeatureMatrix, labels)`` with labels in ``1..clusters`` and
    unit-norm columns, cluster blocks contiguous.
    """
    rng = np.random.default_rng(spec.seed)
    n, p, k = spec.ambient_dim, spec.subspace_dim, spec.clusters
    blocks, labels = [], []
    for j in range(k):
        U, _ = np.linalg.qr(rng.standard_normal((n, p)))
        W = rng.standard_normal((p, spec.points_per_cluster))
        E = rng.standard_normal((n, spec.points_per_cluster))
        blocks.append(U @ W + spec.noise_sigma * E)
        labels.append(np.full(spec.points_per_cluster, j + 1, dtype=np.int64))
    X = np.hstack(blocks)
    norms = np.linalg.norm(X, axis=0)
    norms[norms == 0] = 1.0
    X = X / norms
    return FeatureMatrix.from_array(X), np.concatenate(labels)
