"""Command-line pipeline: extract -> analyze -> train -> predict -> evaluate,
plus the synthetic dataset generator.

Defaults come from the RunConfig dataclass; a JSON config file overrides the
defaults and CLI flags override the config file. Every run's seed is recorded
in the JSON outputs it produces.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import features, geodata, network, synth, training
from .errors import BuildtypeError, DivergedLoss

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DIVERGED = 2

ANALYZE_FEATURES = ["zonal_mean", "floor", "ht", "area_sqft", "area_sqm", "nodes"]


@dataclass
class RunConfig:
    """Training-run settings; file defaults mirror the published recipe."""

    seed: int = 42
    learning_rate: float = 0.001
    batch_size: int = 8
    max_epochs: int = 500
    patience: int = 50
    threshold: float = 0.5
    monitor: str = "weighted"
    alpha: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    bias_correction: bool = True
    hidden_layers: list[int] = field(
        default_factory=lambda: [1024, 512, 128, 64, 32, 16, 8]
    )
    numeric_features: list[str] = field(
        default_factory=lambda: ["ht", "area_sqft", "nodes"]
    )
    categorical_features: list[str] = field(default_factory=lambda: ["roof_color"])
    standardize: bool = True
    ground_elev: float = 17.5
    floor_height: float = 3.0
    prune_threshold: float = 0.9
    keep_features: list[str] = field(default_factory=lambda: ["ht", "area_sqft"])

    @classmethod
    def load(cls, path: str | None, overrides: dict | None = None) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        values: dict = {}
        if path is not None:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
            if not isinstance(doc, dict):
                raise BuildtypeError("config file must hold a JSON object")
            unknown = set(doc) - known
            if unknown:
                raise BuildtypeError(f"unknown config keys: {sorted(unknown)}")
            values.update(doc)
        for key, val in (overrides or {}).items():
            if val is not None:
                values[key] = val
        config = cls(**values)
        if config.learning_rate < 0:
            raise BuildtypeError("learning_rate must be >= 0")
        if config.batch_size < 1 or config.patience < 1 or config.max_epochs < 1:
            raise BuildtypeError("batch_size, patience, and max_epochs must be >= 1")
        return config


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write_text(path: str, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _json_dumps(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def _print_err(message: str) -> None:
    print(f"error: {message}", file=sys.stderr)


# --- extract -------------------------------------------------------------------


def cmd_extract(args) -> int:
    try:
        grid = geodata.parse_ascii_grid(_read_text(args.dem))
        footprints = geodata.parse_footprints(_read_text(args.footprints))
        config = features.FeatureConfig(
            ground_elev=args.ground_elev,
            floor_height=args.floor_height,
            floor_source=args.floor_source,
            require_labels=args.require_labels,
        )
        table, failures = features.build_attribute_table(grid, footprints, config)
        _write_text(args.out, features.write_table_csv(table))
    except (OSError, BuildtypeError) as exc:
        _print_err(str(exc))
        return EXIT_ERROR
    for uid, reason in failures:
        print(f"warning: skipped {uid}: {reason}", file=sys.stderr)
    print(f"extracted {len(table)} rows to {args.out} ({len(failures)} skipped)")
    return EXIT_OK


# --- analyze -------------------------------------------------------------------


def cmd_analyze(args) -> int:
    try:
        table = features.read_table_csv(_read_text(args.features_csv))
        names = [s for s in args.features.split(",") if s]
        keep = {s for s in args.keep.split(",") if s}
        corr = features.correlation_matrix(table, names)
        kept = features.prune_features(corr, names, args.threshold, keep)
        dropped = [name for name in names if name not in kept]
        report = {
            "feature_names": names,
            "correlation": [
                [None if math.isnan(v) else v for v in row] for row in corr.tolist()
            ],
            "dropped": dropped,
            "kept": kept,
            "threshold": args.threshold,
        }
        _write_text(args.out, _json_dumps(report))
    except (OSError, BuildtypeError) as exc:
        _print_err(str(exc))
        return EXIT_ERROR
    print(f"kept {kept}; dropped {dropped}")
    return EXIT_OK


# --- train ---------------------------------------------------------------------


def _encode_for_training(table, config: RunConfig):
    labels = table.labels()
    split = features.stratified_split(labels, seed=config.seed)
    spec = features.EncodingSpec(
        numeric=list(config.numeric_features),
        categorical=list(config.categorical_features),
        standardize=config.standardize,
    )
    matrix = features.encode_features(table, spec, fit_indices=split.train)
    return matrix, split


def _feature_spec_doc(matrix: features.FeatureMatrix) -> dict:
    return {
        "numeric": matrix.spec.numeric,
        "categorical": matrix.spec.categorical,
        "standardize": matrix.spec.standardize,
        "categories": matrix.categories,
        "feature_names": matrix.feature_names,
    }


def cmd_train(args) -> int:
    try:
        config = RunConfig.load(args.config, {"seed": args.seed})
        table = features.read_table_csv(_read_text(args.features_csv))
        matrix, split = _encode_for_training(table, config)
        d_in = matrix.x.shape[1]
        mlp = network.init_mlp(
            [d_in] + list(config.hidden_layers) + [1],
            alpha=config.alpha,
            seed=config.seed,
        )
        state = network.init_optimizer(
            mlp,
            lr=config.learning_rate,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.epsilon,
            bias_correction=config.bias_correction,
        )
        train_config = training.TrainConfig(
            learning_rate=config.learning_rate,
            batch_size=config.batch_size,
            max_epochs=config.max_epochs,
            patience=config.patience,
            threshold=config.threshold,
            monitor=config.monitor,
            seed=config.seed,
        )
        best, history = training.train(mlp, state, matrix, split, train_config)

        probs, classes = training.predict(best, matrix.x[split.test], config.threshold)
        y_test = matrix.y[split.test]
        report = training.classification_report(
            y_test, classes, network.bce_loss(probs, y_test)
        )
        model_text = network.save_model(
            best,
            feature_spec=_feature_spec_doc(matrix),
            standardization={"mean": matrix.mean.tolist(), "std": matrix.std.tolist()},
            extra={"seed": config.seed},
        )
        _write_text(args.model, model_text)
        metrics = report.to_dict()
        metrics["seed"] = config.seed
        metrics["best_epoch"] = history.best_epoch
        metrics["stopped_epoch"] = history.stopped_epoch
        _write_text(args.metrics, _json_dumps(metrics))
        _write_text(args.history, history.to_csv())
    except DivergedLoss as exc:
        _print_err(str(exc))
        return EXIT_DIVERGED
    except (OSError, BuildtypeError, json.JSONDecodeError) as exc:
        _print_err(str(exc))
        return EXIT_ERROR
    print(
        f"best epoch {history.best_epoch}; "
        f"test weighted F1 {report.weighted_f1:.6f}; "
        f"test non-residential F1 {report.non_residential.f1:.6f}"
    )
    return EXIT_OK


# --- predict -------------------------------------------------------------------


def _load_model_bundle(path: str):
    mlp, feature_spec, standardization = network.load_model(_read_text(path))
    if feature_spec is None or standardization is None:
        raise BuildtypeError("model file lacks feature_spec/standardization")
    spec = features.EncodingSpec(
        numeric=list(feature_spec["numeric"]),
        categorical=list(feature_spec["categorical"]),
        standardize=bool(feature_spec["standardize"]),
    )
    categories = {k: list(v) for k, v in feature_spec["categories"].items()}
    mean = np.asarray(standardization["mean"], dtype=np.float64)
    std = np.asarray(standardization["std"], dtype=np.float64)
    return mlp, spec, categories, mean, std


def _check_columns(table: features.AttributeTable, spec: features.EncodingSpec) -> None:
    # Numeric columns always exist on parsed tables; guard the spec names.
    for name in spec.numeric:
        if name not in features.NUMERIC_FEATURES:
            raise BuildtypeError(f"model requires unknown feature column {name!r}")
    for name in spec.categorical:
        if name not in features.CATEGORICAL_FEATURES:
            raise BuildtypeError(f"model requires unknown feature column {name!r}")


def cmd_predict(args) -> int:
    try:
        mlp, spec, categories, mean, std = _load_model_bundle(args.model)
        if args.input.endswith((".geojson", ".json")):
            if not args.dem:
                raise BuildtypeError("GeoJSON input requires --dem")
            grid = geodata.parse_ascii_grid(_read_text(args.dem))
            footprints = geodata.parse_footprints(_read_text(args.input))
            config = features.FeatureConfig(
                ground_elev=args.ground_elev, floor_height=args.floor_height
            )
            table, failures = features.build_attribute_table(grid, footprints, config)
            for uid, reason in failures:
                print(f"warning: skipped {uid}: {reason}", file=sys.stderr)
            kept_uids = {r.uid for r in table.rows}
            footprints = [f for f in footprints if f.uid in kept_uids]
            _check_columns(table, spec)
            x = features.apply_encoding(table, spec, categories, mean, std)
            probs, classes = training.predict(mlp, x, args.threshold)
            labels = [
                (float(p), "residential" if c == 1 else "non_residential")
                for p, c in zip(probs, classes)
            ]
            _write_text(args.out, geodata.write_predictions(footprints, labels))
        else:
            table = features.read_table_csv(_read_text(args.input))
            _check_columns(table, spec)
            x = features.apply_encoding(table, spec, categories, mean, std)
            probs, classes = training.predict(mlp, x, args.threshold)
            _write_text(
                args.out, _predictions_csv(table, probs, classes)
            )
    except (OSError, BuildtypeError, json.JSONDecodeError, KeyError) as exc:
        _print_err(str(exc))
        return EXIT_ERROR
    print(f"wrote predictions for {len(probs)} buildings to {args.out}")
    return EXIT_OK


def _predictions_csv(table, probs, classes) -> str:
    import csv
    import io

    base = features.write_table_csv(table)
    reader = csv.reader(io.StringIO(base))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(next(reader) + ["pred_prob", "pred_class"])
    for row, p, c in zip(reader, probs, classes):
        writer.writerow(
            row + [repr(float(p)), "residential" if c == 1 else "non_residential"]
        )
    return buf.getvalue()


# --- evaluate ------------------------------------------------------------------


def _read_label_map(path: str) -> dict[str, int]:
    import csv
    import io

    text = _read_text(path)
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    try:
        uid_col = header.index("UID")
    except ValueError:
        raise BuildtypeError(f"{path}: no UID column") from None
    label_col = None
    for name in ("res", "pred_class"):
        if name in header:
            label_col = header.index(name)
            break
    if label_col is None:
        raise BuildtypeError(f"{path}: no res column")
    out = {}
    for row in reader:
        if not row:
            continue
        out[row[uid_col]] = features.parse_label(row[label_col])
    return out


def cmd_evaluate(args) -> int:
    try:
        import csv
        import io

        text = _read_text(args.predictions_csv)
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        for col in ("UID", "pred_class"):
            if col not in header:
                raise BuildtypeError(f"predictions file lacks {col!r} column")
        uid_col = header.index("UID")
        class_col = header.index("pred_class")
        prob_col = header.index("pred_prob") if "pred_prob" in header else None
        res_col = header.index("res") if "res" in header else None
        preds: dict[str, int] = {}
        probs: dict[str, float] = {}
        inline_labels: dict[str, int] = {}
        for row in reader:
            if not row:
                continue
            uid = row[uid_col]
            preds[uid] = features.parse_label(row[class_col])
            if prob_col is not None:
                probs[uid] = float(row[prob_col])
            if res_col is not None and row[res_col] != "":
                inline_labels[uid] = int(row[res_col])

        if args.labels_csv:
            labels = _read_label_map(args.labels_csv)
        else:
            labels = inline_labels
        if set(labels) != set(preds) or not preds:
            raise BuildtypeError("prediction and label uid sets differ")

        uids = sorted(preds)
        y_true = np.array([labels[u] for u in uids])
        y_pred = np.array([preds[u] for u in uids])
        if probs and set(probs) == set(preds):
            y_prob = np.array([probs[u] for u in uids], dtype=np.float64)
            loss = network.bce_loss(y_prob, y_true.astype(np.float64))
        else:
            loss = 0.0
        report = training.classification_report(y_true, y_pred, loss)
        _write_text(args.out, _json_dumps(report.to_dict()))
    except (OSError, BuildtypeError, json.JSONDecodeError, ValueError) as exc:
        _print_err(str(exc))
        return EXIT_ERROR
    print(
        f"accuracy {report.accuracy:.4f}; weighted F1 {report.weighted_f1:.4f}; "
        f"non-residential F1 {report.non_residential.f1:.4f}"
    )
    return EXIT_OK


# --- synth ---------------------------------------------------------------------


def cmd_synth(args) -> int:
    try:
        config = synth.SynthConfig(
            n=args.n,
            minority_fraction=args.imbalance,
            seed=args.seed,
            noise_rate=args.noise,
        )
        if args.scene:
            if not (args.out_dem and args.out_geojson):
                raise BuildtypeError("--scene requires --out-dem and --out-geojson")
            config.scene.buildings = args.buildings
            result = synth.rasterize_synthetic_scene(config)
            _write_text(args.out_dem, geodata.serialize_ascii_grid(result.grid))
            _write_text(args.out_geojson, geodata.serialize_footprints(result.footprints))
            _write_text(args.out, features.write_table_csv(result.table))
            print(
                f"scene: {len(result.footprints)} buildings; DEM {args.out_dem}; "
                f"footprints {args.out_geojson}; table {args.out}"
            )
        else:
            result = synth.generate(config)
            _write_text(args.out, features.write_table_csv(result.table))
            nonres = sum(1 for r in result.table.rows if r.res == 0)
            print(f"wrote {len(result.table)} rows ({nonres} non-residential) to {args.out}")
    except (OSError, BuildtypeError) as exc:
        _print_err(str(exc))
        return EXIT_ERROR
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="buildtype",
        description="Classify buildings as residential or non-residential "
        "from a DEM raster and footprint polygons.",
        epilog="Precedence: built-in defaults < --config file < command-line flags.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="derive the per-building feature CSV")
    p.add_argument("dem", help="ESRI ASCII Grid DEM path")
    p.add_argument("footprints", help="GeoJSON footprint path")
    p.add_argument("out", help="output feature CSV path")
    p.add_argument("--ground-elev", type=float, default=17.5,
                   help="ground elevation subtracted from zonal means (default 17.5)")
    p.add_argument("--floor-height", type=float, default=3.0,
                   help="meters per floor (default 3.0)")
    p.add_argument("--floor-source", choices=["zonal_mean", "ht"], default="zonal_mean",
                   help="numerator of the floor count (default zonal_mean)")
    p.add_argument("--require-labels", action="store_true",
                   help="skip rows without a parseable res/BuildType label")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("analyze", help="correlation matrix and feature pruning")
    p.add_argument("features_csv")
    p.add_argument("out", help="output EDA report JSON path")
    p.add_argument("--threshold", type=float, default=0.9,
                   help="|correlation| above which a feature is dropped (default 0.9)")
    p.add_argument("--keep", default="ht,area_sqft",
                   help="comma-separated features never dropped (default ht,area_sqft)")
    p.add_argument("--features", default=",".join(ANALYZE_FEATURES),
                   help="comma-separated feature list to analyze")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("train", help="train the classifier on a feature CSV")
    p.add_argument("features_csv")
    p.add_argument("--config", help="JSON run-config path")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--model", default="model.json", help="output model path")
    p.add_argument("--metrics", default="metrics.json", help="output metrics path")
    p.add_argument("--history", default="history.csv", help="output history path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="classify a feature CSV or GeoJSON+DEM")
    p.add_argument("model", help="model JSON path")
    p.add_argument("input", help="feature CSV or GeoJSON footprints")
    p.add_argument("out", help="output path (CSV or GeoJSON)")
    p.add_argument("--dem", help="DEM path (required for GeoJSON input)")
    p.add_argument("--threshold", type=float, default=0.5,
                   help="residential probability threshold (default 0.5)")
    p.add_argument("--ground-elev", type=float, default=17.5)
    p.add_argument("--floor-height", type=float, default=3.0)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against labels")
    p.add_argument("predictions_csv")
    p.add_argument("out", help="output report JSON path")
    p.add_argument("--labels-csv", help="label CSV (default: res column of predictions)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="generate a synthetic dataset (and scene)")
    p.add_argument("out", help="output feature CSV path")
    p.add_argument("--n", type=int, default=15999, help="row count (default 15999)")
    p.add_argument("--imbalance", type=float, default=0.0261,
                   help="non-residential fraction (default 0.0261)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--noise", type=float, default=0.0, help="label flip probability")
    p.add_argument("--scene", action="store_true",
                   help="also rasterize a DEM + GeoJSON scene")
    p.add_argument("--buildings", type=int, default=12, help="scene building count")
    p.add_argument("--out-dem", help="scene DEM output path")
    p.add_argument("--out-geojson", help="scene footprints output path")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
