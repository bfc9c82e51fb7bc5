"""End-to-end clustering: features, the alternating DDL + SSC loop,
affinity, normalized cuts and scoring, plus the piecemeal baseline."""

import json
import logging
import platform
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__, dataio, ddl, features, ncuts, ssc
from . import metrics as scoring
from .errors import DdlSscError, InvalidInput

__all__ = [
    "PipelineConfig",
    "TraceRow",
    "RunResult",
    "PipelineError",
    "run_joint",
    "run_piecemeal",
    "run",
    "cube_features",
    "write_run_outputs",
    "MAX_SAMPLES",
]

log = logging.getLogger(__name__)

MAX_SAMPLES = 20000


class PipelineError(DdlSscError):
    """A module failed inside the outer loop; ``iteration`` says where."""

    def __init__(self, message, iteration=None):
        super().__init__(message if iteration is None else f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass
class PipelineConfig:
    window: int = 3
    pca_fraction: float = 0.10
    depth: int = 3
    mu: float = 1.0
    lam: float = 1.0
    max_outer_iters: int = 100
    stop_tol: float = 1e-4
    mode: str = "joint"
    z_mode: str = "paper_exact"
    nonneg_project: bool = False
    seed: int = 0
    k_clusters: int = None
    normalize_codes: bool = True
    rescale_atoms: bool = False
    normalize_features: bool = True
    include_unlabeled: bool = False
    lasso_tol: float = 1e-6
    lasso_max_iter: int = 2000
    n_jobs: int = 1
    nmi_average: str = "geometric"

    def validate(self):
        if self.window < 1 or self.window % 2 == 0:
            raise InvalidInput(f"window must be odd, got {self.window}")
        if not 0 < self.pca_fraction <= 1:
            raise InvalidInput("pca_fraction must lie in (0, 1]")
        if self.mode not in ("joint", "piecemeal"):
            raise InvalidInput(f"mode must be joint or piecemeal, got {self.mode!r}")
        # depth 0 = cluster the features directly (classical SSC control)
        lo = 0 if self.mode == "piecemeal" else 1
        if not lo <= self.depth <= ddl.MAX_DEPTH:
            raise InvalidInput(f"depth must lie in [{lo}, {ddl.MAX_DEPTH}] for {self.mode} mode")
        if self.mu < 0 or self.lam <= 0:
            raise InvalidInput("need mu >= 0 and lambda > 0")
        if self.max_outer_iters < 1 or self.stop_tol <= 0:
            raise InvalidInput("need max_outer_iters >= 1 and stop_tol > 0")
        if self.z_mode not in ddl.Z_MODES:
            raise InvalidInput(f"z_mode must be one of {ddl.Z_MODES}")
        if self.k_clusters is not None and self.k_clusters < 2:
            raise InvalidInput("k_clusters must be >= 2")
        if self.n_jobs < 1:
            raise InvalidInput("n_jobs must be >= 1")
        return self

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        d = {("lam" if k == "lambda" else k).replace("-", "_"): v for k, v in d.items()}
        unknown = set(d) - names
        if unknown:
            raise InvalidInput(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        return asdict(self)


@dataclass
class TraceRow:
    iter: int
    recon_term: float
    ssc_term: float
    l1_term: float
    total: float
    delta_C: float


@dataclass
class RunResult:
    assignment: ncuts.ClusterAssignment
    trace: list
    wall_time: float
    stopped_by: str  # "tolerance" or "max_iter"
    config: PipelineConfig
    metrics: scoring.MetricReport = None
    codes: np.ndarray = field(default=None, repr=False)
    state: ddl.DdlState = field(default=None, repr=False)

    @property
    def labels(self):
        return self.assignment.labels

    @property
    def iterations(self):
        return len(self.trace)


def _prepare(X, cfg, truth):
    cfg.validate()
    if not isinstance(X, dataio.FeatureMatrix):
        X = dataio.FeatureMatrix.from_array(X)
    m = X.samples
    if m > MAX_SAMPLES:
        raise InvalidInput(
            f"{m} samples exceed the desk-scale limit of {MAX_SAMPLES} "
            "(the m x m code matrix and m^3 Sylvester solve dominate)"
        )
    k = cfg.k_clusters
    if k is None and truth is not None:
        k = int(np.unique(np.asarray(truth)[np.asarray(truth) != 0]).size)
    if k is None or k < 2:
        raise InvalidInput("k_clusters >= 2 is required")
    if k > m:
        raise InvalidInput(f"k_clusters={k} exceeds sample count {m}")
    return X, replace(cfg, k_clusters=k)


def _rescale_atoms(state):
    """Give the composed dictionary unit-norm columns by rescaling D_L
    (and Z inversely). ``D_1...D_L Z`` is unchanged."""
    norms = np.linalg.norm(ddl.compose(state.dictionaries), axis=0)
    norms[norms == 0] = 1.0
    Ds = state.dictionaries[:-1] + (state.dictionaries[-1] / norms,)
    return replace(state, dictionaries=Ds, Z=state.Z * norms[:, None])


def _finish(X, C, cfg, truth, trace, stopped_by, t0, state):
    A = ssc.affinity(C)
    assignment = ncuts.normalized_cuts(A, cfg.k_clusters, seed=cfg.seed)
    report = None
    if truth is not None:
        report = scoring.evaluate(assignment.labels, truth, cfg.nmi_average)
    return RunResult(
        assignment=assignment,
        trace=trace,
        wall_time=time.perf_counter() - t0,
        stopped_by=stopped_by,
        config=cfg,
        metrics=report,
        codes=C,
        state=state,
    )


def _codes(Z, cfg, C0=None):
    return ssc.build_code_matrix(
        Z,
        cfg.lam,
        tol=cfg.lasso_tol,
        max_iter=cfg.lasso_max_iter,
        n_jobs=cfg.n_jobs,
        C0=C0,
        normalize=cfg.normalize_codes,
    )


def run_joint(X, cfg, truth=None):
    """Alternate dictionary, representation and code updates until the
    code matrix stops changing, then segment its affinity.

    Each outer iteration refits ``D_1 .. D_L`` in order, solves the
    Sylvester equation for Z against the previous codes, and rebuilds the
    codes from the new Z. The loop stops when the relative change of the
    code matrix drops below ``cfg.stop_tol`` or after
    ``cfg.max_outer_iters`` iterations.
    """
    t0 = time.perf_counter()
    X, cfg = _prepare(X, cfg, truth)
    Xd = X.data
    m = X.samples
    schedule = ddl.LayerSchedule.halving(X.dim, cfg.depth)
    state = ddl.init_state(Xd, schedule, seed=cfg.seed, mu=cfg.mu)
    C = np.zeros((m, m))
    trace = []
    stopped_by = "max_iter"
    for it in range(1, cfg.max_outer_iters + 1):
        try:
            for layer in range(1, schedule.depth + 1):
                state = ddl.update_dictionary(state, Xd, layer)
            if cfg.rescale_atoms:
                state = _rescale_atoms(state)
            state = ddl.update_z(state, Xd, C, cfg.z_mode, cfg.nonneg_project)
            state = replace(state, iteration=it)
            C_new = _codes(state.Z, cfg, C0=C)
        except DdlSscError as exc:
            raise PipelineError(str(exc), iteration=it) from exc
        if not np.all(np.isfinite(state.Z)):
            raise PipelineError("representation became non-finite", iteration=it)
        delta = ssc.code_delta(C_new, C)
        C = C_new
        ob = ddl.objective(state, Xd, C, cfg.lam)
        trace.append(TraceRow(it, ob.recon, ob.ssc, ob.l1, ob.total, delta))
        log.debug("iter %d total %.6g delta_C %.3e", it, ob.total, delta)
        if delta < cfg.stop_tol:
            stopped_by = "tolerance"
            break
    return _finish(X, C, cfg, truth, trace, stopped_by, t0, state)


def run_piecemeal(X, cfg, truth=None):
    """Learn the dictionaries without the clustering loss, then cluster.

    Phase one alternates dictionary updates with ``Z = pinv(D) X`` until
    the relative change of the reconstruction error drops below
    ``cfg.stop_tol``. Phase two builds the code matrix once on the final
    Z and segments it. ``depth == 0`` skips phase one and clusters the
    features themselves.
    """
    t0 = time.perf_counter()
    X, cfg = _prepare(X, cfg, truth)
    Xd = X.data
    trace = []
    state = None
    stopped_by = "tolerance"
    if cfg.depth == 0:
        Z = Xd
    else:
        schedule = ddl.LayerSchedule.halving(X.dim, cfg.depth)
        state = ddl.init_state(Xd, schedule, seed=cfg.seed, mu=0.0)
        empty = np.zeros((X.samples, X.samples))
        prev = None
        stopped_by = "max_iter"
        for it in range(1, cfg.max_outer_iters + 1):
            try:
                for layer in range(1, schedule.depth + 1):
                    state = ddl.update_dictionary(state, Xd, layer)
                if cfg.rescale_atoms:
                    state = _rescale_atoms(state)
                state = replace(ddl.update_z(state, Xd, empty, nonneg_project=cfg.nonneg_project),
                                iteration=it)
            except DdlSscError as exc:
                raise PipelineError(str(exc), iteration=it) from exc
            recon = ddl.objective(state, Xd, empty, cfg.lam).recon
            trace.append(TraceRow(it, recon, 0.0, 0.0, recon, 0.0))
            if prev is not None and abs(prev - recon) / max(prev, 1e-12) < cfg.stop_tol:
                stopped_by = "tolerance"
                break
            prev = recon
        Z = state.Z
    try:
        C = _codes(Z, cfg)
    except DdlSscError as exc:
        raise PipelineError(str(exc)) from exc
    return _finish(X, C, cfg, truth, trace, stopped_by, t0, state)


def run(X, cfg, truth=None):
    return (run_joint if cfg.mode == "joint" else run_piecemeal)(X, cfg, truth)


def cube_features(cube, labels, cfg):
    """Windowed patches + PCA (+ optional unit-norm columns).

    Returns the feature matrix and the matching truth vector (or None).
    Only labeled pixels are used unless ``cfg.include_unlabeled``.
    """
    mask = None
    if labels is not None and not cfg.include_unlabeled:
        mask = labels
    raw = features.extract_patches(cube, cfg.window, mask=mask)
    X, _ = features.pca_fit_transform(raw, cfg.pca_fraction)
    if cfg.normalize_features:
        X = features.normalize_columns(X)
    truth = None
    if labels is not None:
        truth = labels.labels[X.pixel_index[:, 0], X.pixel_index[:, 1]]
    return X, truth


def write_run_outputs(result, outdir, X):
    """metrics.json, trace.csv, clusters.csv, clusters.pgm, manifest.json."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    dataio.write_trace_csv(outdir / "trace.csv", [asdict(r) for r in result.trace])
    if X.shape is not None:
        h, w = X.shape
        dataio.write_cluster_map(result.labels, h, w, outdir / "clusters", pixel_index=X.pixel_index)
    else:
        dataio.write_cluster_csv(outdir / "clusters.csv", result.labels, X.pixel_index)
    if result.metrics is not None:
        (outdir / "metrics.json").write_text(result.metrics.to_json(indent=2))
    manifest = {
        "config": result.config.to_dict(),
        "seed": result.config.seed,
        "iterations": result.iterations,
        "stopped_by": result.stopped_by,
        "wall_time": result.wall_time,
        "degenerate_partition": result.assignment.degenerate,
        "versions": {
            "ddlssc": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2))
