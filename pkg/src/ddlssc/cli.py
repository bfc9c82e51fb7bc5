"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import dataio, features, metrics
from .errors import DegenerateData, FormatError, InvalidInput, IoError, SingularSylvester
from .pipeline import PipelineConfig, PipelineError, cube_features, run, write_run_outputs

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


_FLAG_TYPES = {int: int, float: float, str: str}


def _add_config_flags(p):
    for f in fields(PipelineConfig):
        flag = "--" + ("lambda" if f.name == "lam" else f.name.replace("_", "-"))
        if f.type is bool or isinstance(f.default, bool):
            p.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        elif f.name == "k_clusters":
            p.add_argument(flag, "--k", dest=f.name, type=int, default=None)
        else:
            typ = type(f.default) if f.default is not None else str
            p.add_argument(flag, dest=f.name, type=_FLAG_TYPES.get(typ, str), default=None)
    p.add_argument("--config", type=Path, help="JSON object with PipelineConfig fields")


def _config_from_args(args):
    values = {}
    if args.config is not None:
        try:
            values = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot load config {args.config}: {exc}") from exc
        if not isinstance(values, dict):
            raise UsageError("config file must hold a JSON object")
    overrides = {f.name: getattr(args, f.name) for f in fields(PipelineConfig)
                 if getattr(args, f.name, None) is not None}
    try:
        cfg = PipelineConfig.from_dict(values)
        cfg = PipelineConfig.from_dict({**cfg.to_dict(), **overrides})
        return cfg.validate()
    except (InvalidInput, TypeError) as exc:
        raise UsageError(f"invalid configuration: {exc}") from exc


def _load_truth(path, pixel_index):
    """Truth labels aligned to ``pixel_index`` from a CSV or a cube header."""
    path = Path(path)
    if path.suffix == ".json":
        _, labels = dataio.read_cube(path)
        if labels is None:
            raise FormatError(f"{path} references no label payload")
        lab = labels.labels
        r, c = pixel_index[:, 0], pixel_index[:, 1]
        if r.max() >= lab.shape[0] or c.max() >= lab.shape[1]:
            raise FormatError("prediction coordinates fall outside the label map")
        return lab[r, c]
    idx, lab = dataio.read_cluster_csv(path)
    lookup = {(int(r), int(c)): int(v) for (r, c), v in zip(idx.tolist(), lab.tolist())}
    try:
        return np.array([lookup[(int(r), int(c))] for r, c in pixel_index.tolist()], dtype=np.int64)
    except KeyError as exc:
        raise FormatError(f"truth file {path} has no entry for pixel {exc.args[0]}") from exc


def cmd_cluster(args):
    cfg = _config_from_args(args)
    if (args.cube is None) == (args.features is None):
        raise UsageError("cluster: give exactly one of --cube or --features")
    truth = None
    if args.cube is not None:
        cube, labels = dataio.read_cube(args.cube)
        X, truth = cube_features(cube, labels, cfg)
    else:
        X = dataio.read_feature_csv(args.features)
    if args.truth is not None:
        truth = _load_truth(args.truth, X.pixel_index)
    result = run(X, cfg, truth)
    write_run_outputs(result, args.output, X)
    summary = {
        "iterations": result.iterations,
        "stopped_by": result.stopped_by,
        "wall_time": result.wall_time,
    }
    if result.metrics is not None:
        summary["metrics"] = result.metrics.to_dict()
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_features(args):
    cube, labels = dataio.read_cube(args.cube)
    mask = None if args.include_unlabeled or labels is None else labels
    raw = features.extract_patches(cube, args.window, mask=mask)
    X, _ = features.pca_fit_transform(raw, args.pca_fraction)
    if args.normalize_features:
        X = features.normalize_columns(X)
    dataio.write_feature_csv(args.output, X)
    print(f"wrote {X.dim} x {X.samples} features to {args.output}", file=sys.stderr)
    return EXIT_OK


def cmd_synth(args):
    spec = dataio.SyntheticSpec(
        clusters=args.clusters,
        subspace_dim=args.subspace_dim,
        ambient_dim=args.ambient,
        points_per_cluster=args.per_cluster,
        noise_sigma=args.sigma,
        seed=args.seed,
    )
    X, y = dataio.synth_subspaces(spec)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    dataio.write_feature_csv(out / "X.csv", X)
    dataio.write_cluster_csv(out / "y.csv", y, X.pixel_index)
    print(f"wrote {out / 'X.csv'} and {out / 'y.csv'}", file=sys.stderr)
    return EXIT_OK


def cmd_metrics(args):
    idx, pred = dataio.read_cluster_csv(args.pred)
    truth = _load_truth(args.truth, idx)
    report = metrics.evaluate(pred, truth, args.nmi_average)
    text = report.to_json(indent=2)
    if args.output:
        Path(args.output).write_text(text)
    print(text)
    return EXIT_OK


def build_parser():
    p = _Parser(prog="ddlssc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    c = sub.add_parser("cluster", help="run the full pipeline")
    c.add_argument("--cube", type=Path, help="cube container header (.json)")
    c.add_argument("--features", type=Path, help="feature matrix CSV")
    c.add_argument("--truth", type=Path, help="truth labels: row,col,label CSV or cube header")
    c.add_argument("-o", "--output", type=Path, default=Path("run"), help="run directory")
    _add_config_flags(c)
    c.set_defaults(func=cmd_cluster)

    f = sub.add_parser("features", help="extract patch + PCA features")
    f.add_argument("--cube", type=Path, required=True)
    f.add_argument("--window", type=int, default=3)
    f.add_argument("--pca-fraction", type=float, default=0.10)
    f.add_argument("--include-unlabeled", action="store_true")
    f.add_argument("--normalize-features", action=argparse.BooleanOptionalAction, default=True)
    f.add_argument("-o", "--output", type=Path, required=True)
    f.set_defaults(func=cmd_features)

    s = sub.add_parser("synth", help="generate a union-of-subspaces dataset")
    s.add_argument("--clusters", type=int, required=True)
    s.add_argument("--subspace-dim", type=int, required=True)
    s.add_argument("--ambient", type=int, required=True)
    s.add_argument("--per-cluster", type=int, required=True)
    s.add_argument("--sigma", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", type=Path, required=True)
    s.set_defaults(func=cmd_synth)

    m = sub.add_parser("metrics", help="score predictions against truth")
    m.add_argument("--pred", type=Path, required=True)
    m.add_argument("--truth", type=Path, required=True)
    m.add_argument("--nmi-average", choices=("geometric", "arithmetic"), default="geometric")
    m.add_argument("-o", "--output", type=Path)
    m.set_defaults(func=cmd_metrics)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("ddlssc: a subcommand is required (cluster, features, synth, metrics)")
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (SingularSylvester, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except PipelineError as exc:
        cause = exc.__cause__
        numeric = isinstance(cause, SingularSylvester) or "non-finite" in str(exc)
        print(f"{'numerical failure' if numeric else 'error'}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC if numeric else EXIT_DATA
    except (FormatError, InvalidInput, DegenerateData, IoError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
