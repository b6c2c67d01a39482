"""Command-line interface: extraction, training, prediction, experiments,
ablations and error analysis.

Feature extraction dominates runtime, so it is a separate command that
persists an FMX1 matrix; the experiment commands re-load that matrix. Exit
codes: 0 success, 1 configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .descriptors import DESCRIPTOR_KINDS, DescriptorConfig, extract_descriptor, rgb_to_gray
from .errors import ConfigurationError, DataError
from .features import (
    feature_mapping,
    fuse_taps,
    fused_dim,
    read_feature_matrix,
    write_feature_matrix,
)
from .harness import (
    DEFAULT_TAU1,
    DEFAULT_TAU2,
    PredefinedSplitProtocol,
    RandomSplitProtocol,
    ablation_suite,
    epsilon_analysis,
    load_manifest,
    make_splits,
    report_from_json,
    run_experiment,
)
from .nn import TAP_NAMES, forward_taps, load_weights
from .preprocess import (
    FaceAnnotation,
    PreprocessConfig,
    eye_angle,
    gray_to_rgb,
    load_annotations,
    load_image,
    preprocess,
    rotate_align,
    rotate_annotation,
    square_crop,
    square_pad,
    square_warp,
)
from .ridge import fit, load_model, predict, save_model


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); flag misuse is exit 1
        raise ConfigurationError(message)


def _echo_config(args: argparse.Namespace) -> dict:
    config = {
        k: v for k, v in sorted(vars(args).items()) if k != "func" and v is not None
    }
    print(json.dumps({"config": config}, sort_keys=True))
    return config


def _parse_list(text: str) -> list[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(s) for s in _parse_list(text))
    except ValueError:
        raise ConfigurationError(f"bad seed list {text!r}") from None


def _resolve_image_path(manifest_path: str, image_path: str) -> Path:
    p = Path(image_path)
    return p if p.is_absolute() else Path(manifest_path).parent / p


def _load_annotation_map(args) -> dict[str, FaceAnnotation]:
    if getattr(args, "annotations", None):
        return load_annotations(args.annotations)
    return {}


def _squared_image(img, ann, mode: str, align: str):
    """Shared squaring path for the descriptor route (no standardization)."""
    img = gray_to_rgb(img)
    if align == "eyes" and ann is not None and ann.has_eyes():
        theta = eye_angle(ann)
        _, h, w = img.shape
        img = rotate_align(img, ann)
        ann = rotate_annotation(ann, -theta, ((w - 1) / 2.0, (h - 1) / 2.0))
    if mode == "crop":
        return square_crop(img, ann)
    if mode == "warp":
        return square_warp(img)
    return square_pad(img)


def _extract_rows(manifest, annotations, args, taps, descriptor, weights):
    """Feature rows per image; undecodable images are warned about and skipped."""
    rows = []
    ids = []
    excluded = []
    config = PreprocessConfig(mode=args.mode, align=args.align)
    for row in manifest.rows:
        path = _resolve_image_path(args.manifest, row.path)
        try:
            img = load_image(path)
        except (OSError, ValueError) as exc:
            print(f"warning: skipping {row.image_id}: {exc}", file=sys.stderr)
            excluded.append(row.image_id)
            continue
        ann = annotations.get(row.image_id)
        if taps:
            tensor = preprocess(img, ann, config)
            tap_maps = forward_taps(tensor, weights, taps, pre_relu=args.pre_relu)
            rows.append(fuse_taps(tap_maps, post_relu=not args.pre_relu).values)
        else:
            squared = _squared_image(img, ann, args.mode, args.align)
            rows.append(extract_descriptor(rgb_to_gray(squared), descriptor).values)
        ids.append(row.image_id)
    return rows, ids, excluded


def cmd_extract(args) -> int:
    _echo_config(args)
    if bool(args.taps) == bool(args.descriptor):
        raise ConfigurationError("exactly one of --taps or --descriptor is required")
    taps = _parse_list(args.taps) if args.taps else []
    for tap in taps:
        if tap not in TAP_NAMES:
            raise ConfigurationError(f"unknown tap name {tap!r}")
    descriptor = args.descriptor
    if descriptor and descriptor not in DESCRIPTOR_KINDS:
        raise ConfigurationError(f"unknown descriptor {descriptor!r}")

    weights = None
    if taps:
        if not args.weights:
            raise ConfigurationError("--weights is required when extracting taps")
        try:
            weights = load_weights(args.weights)
        except OSError as exc:
            raise DataError(f"cannot read weights: {exc}") from None

    manifest = load_manifest(args.manifest)
    annotations = _load_annotation_map(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows, ids, excluded = _extract_rows(manifest, annotations, args, taps, descriptor, weights)
    dim = fused_dim(taps) if taps else DescriptorConfig(descriptor).dim
    matrix = (
        np.stack(rows) if rows else np.zeros((0, dim), dtype=np.float32)
    )
    if not manifest.rows:
        print("warning: empty manifest, writing an empty feature matrix", file=sys.stderr)
    write_feature_matrix(out_dir / "features.fmx", matrix, ids)
    (out_dir / "exclusions.txt").write_text("".join(f"{i}\n" for i in excluded))
    (out_dir / "extract_config.json").write_text(
        json.dumps(
            {
                "taps": taps or None,
                "descriptor": descriptor,
                "mode": args.mode,
                "align": args.align,
                "pre_relu": args.pre_relu,
            },
            indent=2,
            sort_keys=True,
        )
        + "\n"
    )
    print(f"extracted {matrix.shape[0]} rows of dim {matrix.shape[1]}")
    if excluded:
        print(f"excluded {len(excluded)} unreadable image(s)", file=sys.stderr)
    return 0


def _load_feature_map(path):
    matrix, ids = read_feature_matrix(path)
    return feature_mapping(matrix, ids)


def _splits_from_args(manifest, args):
    if args.split_dir:
        base = Path(args.split_dir)
        pairs = tuple(
            (str(base / f"train_{i}.txt"), str(base / f"test_{i}.txt"))
            for i in range(1, args.rounds + 1)
        )
        return make_splits(manifest, PredefinedSplitProtocol(pairs=pairs))
    protocol = RandomSplitProtocol(
        seeds=_parse_seeds(args.seeds),
        train_size=args.train_size,
        test_size=args.test_size,
    )
    return make_splits(manifest, protocol)


def _experiment_config(args, extra=None):
    config = {
        "manifest": args.manifest,
        "features": args.features,
        "seeds": list(_parse_seeds(args.seeds)) if args.seeds else None,
        "train_size": getattr(args, "train_size", None),
        "test_size": getattr(args, "test_size", None),
        "split_dir": getattr(args, "split_dir", None),
    }
    sidecar = Path(args.features).parent / "extract_config.json"
    if sidecar.exists():
        config["extraction"] = json.loads(sidecar.read_text())
    if extra:
        config.update(extra)
    return config


def cmd_experiment(args) -> int:
    _echo_config(args)
    manifest = load_manifest(args.manifest)
    features = _load_feature_map(args.features)
    splits = _splits_from_args(manifest, args)
    report = run_experiment(
        manifest, splits, features, config=_experiment_config(args)
    )
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json() + "\n")
    (out_dir / "report.csv").write_text(report.summary_csv())
    print(
        f"rounds={len(report.rounds)} mae={report.mae:.4f} "
        f"rmse={report.rmse:.4f} pc={report.pc:.4f}"
    )
    return 0


def cmd_train(args) -> int:
    _echo_config(args)
    manifest = load_manifest(args.manifest)
    features = _load_feature_map(args.features)
    scores = manifest.scores()
    ids = [i for i in manifest.ids if i in features]
    if not ids:
        raise DataError("no manifest ids with extracted features")
    x = np.stack([features[i] for i in ids])
    y = np.array([scores[i] for i in ids])
    model = fit(x, y)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    print(
        f"trained on {len(ids)} rows: alpha={model.alpha:.6g} "
        f"lambda={model.lambda_:.6g} iterations={model.n_iter} "
        f"converged={model.converged}"
    )
    return 0


def cmd_predict(args) -> int:
    _echo_config(args)
    model = load_model(args.model)
    matrix, ids = read_feature_matrix(args.features)
    predictions = predict(model, matrix) if len(ids) else np.zeros(0)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("id,predicted\n")
        for image_id, value in zip(ids, predictions):
            fh.write(f"{image_id},{float(value)!r}\n")
    print(f"predicted {len(ids)} rows")
    return 0


def _variant_features(args, manifest, annotations, values):
    """Lazy feature source per ablation variant."""
    taps = _parse_list(args.taps) if args.taps else []
    weights = load_weights(args.weights) if args.weights else None

    def with_args(**overrides):
        clone = argparse.Namespace(**vars(args))
        for key, value in overrides.items():
            setattr(clone, key, value)
        return clone

    sources = {}
    if args.vary == "mode":
        for mode in values:
            if mode not in ("crop", "warp", "padding"):
                raise ConfigurationError(f"unknown preprocessing mode {mode!r}")

            def source(mode=mode):
                rows, ids, _ = _extract_rows(
                    manifest, annotations, with_args(mode=mode),
                    taps, args.descriptor, weights,
                )
                return dict(zip(ids, rows))

            sources[mode] = source
    elif args.vary == "descriptor":
        for kind in values:
            if kind not in DESCRIPTOR_KINDS:
                raise ConfigurationError(f"unknown descriptor {kind!r}")

            def source(kind=kind):
                rows, ids, _ = _extract_rows(
                    manifest, annotations, args, [], kind, None
                )
                return dict(zip(ids, rows))

            sources[kind] = source
    elif args.vary == "layer":
        for layer in values:
            if layer not in TAP_NAMES:
                raise ConfigurationError(f"unknown tap name {layer!r}")
        if weights is None:
            raise ConfigurationError("--weights is required for a layer sweep")

        def all_layers():
            config = PreprocessConfig(mode=args.mode, align=args.align)
            per_layer = {layer: {} for layer in values}
            for row in manifest.rows:
                img = load_image(_resolve_image_path(args.manifest, row.path))
                tensor = preprocess(img, annotations.get(row.image_id), config)
                tap_maps = forward_taps(tensor, weights, values, pre_relu=args.pre_relu)
                for layer in values:
                    per_layer[layer][row.image_id] = fuse_taps(
                        {layer: tap_maps[layer]}, post_relu=not args.pre_relu
                    ).values
            return per_layer

        cache = {}

        def source_for(layer):
            def source():
                if not cache:
                    cache.update(all_layers())
                return cache[layer]

            return source

        sources = {layer: source_for(layer) for layer in values}
    else:
        raise ConfigurationError(f"unknown ablation axis {args.vary!r}")
    return sources


def cmd_ablate(args) -> int:
    _echo_config(args)
    values = _parse_list(args.values)
    if not values:
        raise ConfigurationError("--values must name at least one variant")
    manifest = load_manifest(args.manifest)
    annotations = _load_annotation_map(args)
    if args.vary != "descriptor" and bool(args.taps) == bool(args.descriptor):
        raise ConfigurationError("exactly one of --taps or --descriptor is required")
    sources = _variant_features(args, manifest, annotations, values)
    splits = _splits_from_args(manifest, args)
    table = ablation_suite(manifest, splits, sources)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "ablation.csv").write_text(table.to_csv())
    (out_dir / "pc_series.csv").write_text(table.pc_series_csv())
    for variant, report in table.reports.items():
        (out_dir / f"report_{variant}.json").write_text(report.to_json() + "\n")
    print(f"best variant: {table.best_variant()}")
    return 0


def cmd_error_analysis(args) -> int:
    _echo_config(args)
    report = report_from_json(Path(args.report).read_text())
    bad, good = epsilon_analysis(report, tau1=args.tau1, tau2=args.tau2)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = f"# tau1={args.tau1!r},tau2={args.tau2!r}\nid,actual,predicted,eps\n"
    for name, group in (("bad.csv", bad), ("good.csv", good)):
        with open(out_dir / name, "w", encoding="utf-8") as fh:
            fh.write(header)
            for s in group:
                fh.write(f"{s.image_id},{s.actual!r},{s.predicted!r},{s.eps!r}\n")
    print(
        f"thresholds tau1={args.tau1}/tau2={args.tau2}: "
        f"{len(bad)} badly predicted, {len(good)} well fitted"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fbp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common_extraction(p):
        p.add_argument("--manifest", required=True, help="CSV of id,path,score")
        p.add_argument("--annotations", help="JSON sidecar of face geometry")
        p.add_argument("--weights", help="BWF1 weight file")
        p.add_argument("--mode", choices=("crop", "warp", "padding"), default="crop")
        p.add_argument("--align", choices=("none", "eyes"), default="none")
        p.add_argument("--taps", help="comma-separated tap names, e.g. conv4_1,conv5_1")
        p.add_argument("--descriptor", choices=DESCRIPTOR_KINDS)
        p.add_argument("--pre-relu", action="store_true", dest="pre_relu")

    def add_protocol(p):
        p.add_argument("--seeds", default="1,2,3,4,5", help="comma-separated round seeds")
        p.add_argument("--train-size", type=int, default=400, dest="train_size")
        p.add_argument("--test-size", type=int, default=100, dest="test_size")
        p.add_argument("--split-dir", dest="split_dir",
                       help="directory of predefined train_i.txt/test_i.txt files")
        p.add_argument("--rounds", type=int, default=5,
                       help="number of predefined split pairs in --split-dir")

    p = sub.add_parser("extract", help="extract a feature matrix from images")
    add_common_extraction(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("experiment", help="run the multi-round protocol")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True, help="FMX1 feature matrix")
    add_protocol(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("train", help="fit a model on all extracted rows")
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="model file to write")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict scores for a feature matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="predictions CSV to write")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ablate", help="compare preprocessing/descriptor/layer variants")
    add_common_extraction(p)
    add_protocol(p)
    p.add_argument("--vary", required=True, choices=("mode", "descriptor", "layer"))
    p.add_argument("--values", required=True, help="comma-separated variant values")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("error-analysis", help="partition test samples by |error|")
    p.add_argument("--report", required=True, help="report.json from an experiment")
    p.add_argument("--tau1", type=float, default=DEFAULT_TAU1)
    p.add_argument("--tau2", type=float, default=DEFAULT_TAU2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_error_analysis)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
