"""Derived per-building attribute table, EDA, feature encoding, and splits.

The attribute table carries one row per footprint with the elevation
statistics, height, floor count, areas, node count, and the binary
residential label. Its CSV form has the fixed header

    UID,BuildType,RoofColor,zonal_mean,zonal_max,zonal_std,floor,area_sqft,area_sqm,nodes,res,ht

with full-precision decimal floats and '\\n' line endings.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ClassTooSmall,
    DuplicateUid,
    EmptyFitSet,
    InsufficientRows,
    MissingLabel,
    NoCellsCovered,
    NonNumericFeature,
    TableFormatError,
    UnknownFeature,
    UnknownKeepFeature,
)
from .geodata import DemGrid, FootprintRecord
from .geometry import node_count, polygon_area_sqm, zonal_stats

CSV_HEADER = [
    "UID", "BuildType", "RoofColor", "zonal_mean", "zonal_max", "zonal_std",
    "floor", "area_sqft", "area_sqm", "nodes", "res", "ht",
]

NUMERIC_FEATURES = (
    "zonal_mean", "zonal_max", "zonal_std", "floor",
    "area_sqft", "area_sqm", "nodes", "ht",
)
CATEGORICAL_FEATURES = ("roof_color", "build_type")

SQFT_PER_SQM = 10.76391

_POSITIVE_LABELS = {"1", "residential", "yes"}
_NEGATIVE_LABELS = {"0", "non-residential", "no"}


@dataclass
class AttributeRow:
    uid: str
    build_type: str | None
    roof_color: str | None
    zonal_mean: float
    zonal_max: float
    zonal_std: float
    floor: float
    area_sqft: float
    area_sqm: float
    nodes: int
    res: int | None
    ht: float


@dataclass
class AttributeTable:
    rows: list[AttributeRow] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        """Numeric column as float64 (res included, None mapped to nan)."""
        if name == "res":
            return np.array(
                [np.nan if r.res is None else float(r.res) for r in self.rows]
            )
        if name not in NUMERIC_FEATURES:
            raise NonNumericFeature(f"{name!r} is not a numeric column")
        return np.array([float(getattr(r, name)) for r in self.rows])

    def text_column(self, name: str) -> list[str | None]:
        if name not in CATEGORICAL_FEATURES:
            raise UnknownFeature(f"{name!r} is not a categorical column")
        return [getattr(r, name) for r in self.rows]

    def labels(self) -> np.ndarray:
        """Binary label vector; raises MissingLabel when any row is unlabeled."""
        out = np.empty(len(self.rows), dtype=np.float64)
        for i, r in enumerate(self.rows):
            if r.res is None:
                raise MissingLabel(f"row {r.uid} has no label")
            out[i] = r.res
        return out


@dataclass
class FeatureConfig:
    """Knobs for attribute derivation.

    floor_source selects the numerator of the floor count; the default
    reproduces the source data's floor = zonal_mean / floor_height
    arithmetic rather than the physically cleaner ht / floor_height.
    """

    ground_elev: float = 17.5
    floor_height: float = 3.0
    sqft_per_sqm: float = SQFT_PER_SQM
    floor_source: str = "zonal_mean"  # or "ht"
    require_labels: bool = False


def parse_label(value) -> int:
    """Map a raw res/BuildType attribute value to the binary label."""
    if isinstance(value, bool):
        raise MissingLabel(f"unparseable label {value!r}")
    if isinstance(value, (int, float)):
        if value == 1:
            return 1
        if value == 0:
            return 0
        raise MissingLabel(f"unparseable label {value!r}")
    if isinstance(value, str):
        norm = value.strip().lower().replace("_", "-")
        if norm in _POSITIVE_LABELS:
            return 1
        if norm in _NEGATIVE_LABELS:
            return 0
    raise MissingLabel(f"unparseable label {value!r}")


def _label_from_attributes(attrs: dict, uid: str, required: bool) -> int | None:
    for key in ("res", "BuildType"):
        if key in attrs and attrs[key] is not None:
            try:
                return parse_label(attrs[key])
            except MissingLabel:
                if required:
                    raise MissingLabel(
                        f"{uid}: unparseable {key} value {attrs[key]!r}"
                    ) from None
                return None
    if required:
        raise MissingLabel(f"{uid}: no res/BuildType attribute")
    return None


def build_attribute_table(
    grid: DemGrid,
    footprints: list[FootprintRecord],
    config: FeatureConfig | None = None,
) -> tuple[AttributeTable, list[tuple[str, str]]]:
    """Derive the per-building attribute table from a DEM and footprints.

    Row-level failures (no covered cells, missing required label) are
    collected as (uid, reason) pairs rather than aborting the run.
    Duplicate uids are a hard error.
    """
    config = config or FeatureConfig()
    seen: set[str] = set()
    table = AttributeTable()
    failures: list[tuple[str, str]] = []
    for rec in footprints:
        if rec.uid in seen:
            raise DuplicateUid(f"duplicate uid {rec.uid!r}")
        seen.add(rec.uid)
        try:
            stats = zonal_stats(grid, rec.parts)
        except NoCellsCovered as exc:
            failures.append((rec.uid, str(exc)))
            continue
        try:
            res = _label_from_attributes(rec.attributes, rec.uid, config.require_labels)
        except MissingLabel as exc:
            failures.append((rec.uid, str(exc)))
            continue
        area_sqm = polygon_area_sqm(rec.parts)
        ht = stats.mean - config.ground_elev
        floor_basis = stats.mean if config.floor_source == "zonal_mean" else ht
        roof = rec.attributes.get("RoofColor")
        table.rows.append(
            AttributeRow(
                uid=rec.uid,
                build_type=str(rec.attributes["BuildType"]) if rec.attributes.get("BuildType") is not None else None,
                roof_color=str(roof) if roof is not None else None,
                zonal_mean=stats.mean,
                zonal_max=stats.max,
                zonal_std=stats.std,
                floor=floor_basis / config.floor_height,
                area_sqft=area_sqm * config.sqft_per_sqm,
                area_sqm=area_sqm,
                nodes=node_count(rec.parts),
                res=res,
                ht=ht,
            )
        )
    return table, failures


# --- CSV round trip -----------------------------------------------------------

def write_table_csv(table: AttributeTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in table.rows:
        writer.writerow([
            r.uid,
            r.build_type if r.build_type is not None else "",
            r.roof_color if r.roof_color is not None else "",
            repr(float(r.zonal_mean)), repr(float(r.zonal_max)), repr(float(r.zonal_std)),
            repr(float(r.floor)), repr(float(r.area_sqft)), repr(float(r.area_sqm)),
            int(r.nodes),
            int(r.res) if r.res is not None else "",
            repr(float(r.ht)),
        ])
    return buf.getvalue()


def read_table_csv(text: str) -> AttributeTable:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise TableFormatError("empty CSV") from None
    if header != CSV_HEADER:
        raise TableFormatError(f"unexpected header {header!r}")
    table = AttributeTable()
    seen: set[str] = set()
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise TableFormatError(f"line {lineno}: expected {len(CSV_HEADER)} fields")
        try:
            table.rows.append(
                AttributeRow(
                    uid=row[0],
                    build_type=row[1] or None,
                    roof_color=row[2] or None,
                    zonal_mean=float(row[3]),
                    zonal_max=float(row[4]),
                    zonal_std=float(row[5]),
                    floor=float(row[6]),
                    area_sqft=float(row[7]),
                    area_sqm=float(row[8]),
                    nodes=int(row[9]),
                    res=int(row[10]) if row[10] != "" else None,
                    ht=float(row[11]),
                )
            )
        except ValueError as exc:
            raise TableFormatError(f"line {lineno}: {exc}") from None
        if row[0] in seen:
            raise DuplicateUid(f"duplicate uid {row[0]!r}")
        seen.add(row[0])
    return table


# --- EDA ----------------------------------------------------------------------

def correlation_matrix(table: AttributeTable, features: list[str]) -> np.ndarray:
    """Pearson correlation of the selected numeric columns.

    Entries involving a zero-variance column are NaN (flagged undefined)
    except the diagonal, which is 1 by convention.
    """
    if len(table) < 2:
        raise InsufficientRows(f"need >= 2 rows, have {len(table)}")
    cols = np.column_stack([table.column(name) for name in features])
    centered = cols - cols.mean(axis=0)
    std = cols.std(axis=0)
    d = len(features)
    corr = np.empty((d, d))
    cov = centered.T @ centered / len(table)
    for i in range(d):
        for j in range(d):
            if i == j:
                corr[i, j] = 1.0
            elif std[i] == 0.0 or std[j] == 0.0:
                corr[i, j] = np.nan
            else:
                corr[i, j] = np.clip(cov[i, j] / (std[i] * std[j]), -1.0, 1.0)
    return corr


def prune_features(
    corr: np.ndarray,
    names: list[str],
    threshold: float,
    keep: set[str] | None = None,
) -> list[str]:
    """Greedy correlation pruning: drop any feature whose |corr| with an
    already-kept feature exceeds the threshold.

    Features named in ``keep`` count as kept from the start and are never
    dropped. Returns the kept names in input order.
    """
    keep = set(keep or ())
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    unknown = keep - set(names)
    if unknown:
        raise UnknownKeepFeature(f"keep names not in feature list: {sorted(unknown)}")
    index = {name: i for i, name in enumerate(names)}
    kept = [name for name in names if name in keep]
    for name in names:
        if name in keep:
            continue
        i = index[name]
        high = any(abs(corr[i, index[k]]) > threshold for k in kept)
        if not high:
            kept.append(name)
    return [name for name in names if name in set(kept)]


# --- encoding -----------------------------------------------------------------

@dataclass
class EncodingSpec:
    numeric: list[str] = field(default_factory=lambda: ["ht", "area_sqft", "nodes"])
    categorical: list[str] = field(default_factory=lambda: ["roof_color"])
    standardize: bool = True


@dataclass
class FeatureMatrix:
    """Encoded model inputs plus everything needed to re-apply the encoding."""

    x: np.ndarray
    y: np.ndarray | None
    feature_names: list[str]
    mean: np.ndarray
    std: np.ndarray
    spec: EncodingSpec
    categories: dict[str, list[str]]


def _validate_spec(spec: EncodingSpec) -> None:
    for name in spec.numeric:
        if name not in NUMERIC_FEATURES:
            raise UnknownFeature(f"unknown numeric feature {name!r}")
    for name in spec.categorical:
        if name not in CATEGORICAL_FEATURES:
            raise UnknownFeature(f"unknown categorical feature {name!r}")


def _raw_matrix(
    table: AttributeTable, spec: EncodingSpec, categories: dict[str, list[str]]
) -> tuple[np.ndarray, list[str]]:
    blocks = []
    names: list[str] = []
    for name in spec.numeric:
        blocks.append(table.column(name)[:, None])
        names.append(name)
    for name in spec.categorical:
        values = table.text_column(name)
        cats = categories[name]
        onehot = np.zeros((len(table), len(cats)))
        pos = {c: k for k, c in enumerate(cats)}
        for i, v in enumerate(values):
            k = pos.get(v)
            if k is not None:
                onehot[i, k] = 1.0
        blocks.append(onehot)
        names.extend(f"{name}={c}" for c in cats)
    x = np.hstack(blocks) if blocks else np.zeros((len(table), 0))
    return x, names


def encode_features(
    table: AttributeTable,
    spec: EncodingSpec | None = None,
    fit_indices: np.ndarray | list[int] | None = None,
) -> FeatureMatrix:
    """Build the model input matrix: numeric columns then one-hot blocks.

    Category order is first appearance over the fit rows; unseen categories
    at transform time encode as all zeros. Standardization statistics are
    fitted on fit_indices only (all rows by default) and applied everywhere;
    zero-variance columns clamp std to 1 so they standardize to zeros.
    """
    spec = spec or EncodingSpec()
    _validate_spec(spec)
    fit_idx = np.arange(len(table)) if fit_indices is None else np.asarray(fit_indices, dtype=int)
    if fit_idx.size == 0:
        raise EmptyFitSet("fit_indices is empty")

    categories: dict[str, list[str]] = {}
    for name in spec.categorical:
        values = table.text_column(name)
        seen: list[str] = []
        for i in fit_idx:
            v = values[i]
            if v is not None and v not in seen:
                seen.append(v)
        categories[name] = seen

    x, names = _raw_matrix(table, spec, categories)
    if spec.standardize:
        mean = x[fit_idx].mean(axis=0)
        std = x[fit_idx].std(axis=0)
        std = np.where(std == 0.0, 1.0, std)
        x = (x - mean) / std
    else:
        mean = np.zeros(x.shape[1])
        std = np.ones(x.shape[1])

    has_labels = all(r.res is not None for r in table.rows)
    y = table.labels() if has_labels and len(table) else None
    return FeatureMatrix(
        x=x, y=y, feature_names=names, mean=mean, std=std, spec=spec,
        categories=categories,
    )


def apply_encoding(
    table: AttributeTable,
    spec: EncodingSpec,
    categories: dict[str, list[str]],
    mean: np.ndarray,
    std: np.ndarray,
) -> np.ndarray:
    """Re-encode a table with an already-fitted encoding (predict path)."""
    _validate_spec(spec)
    x, _ = _raw_matrix(table, spec, categories)
    if x.shape[1] != len(mean):
        raise UnknownFeature(
            f"encoded width {x.shape[1]} != fitted width {len(mean)}"
        )
    return (x - np.asarray(mean)) / np.asarray(std)


# --- splits ---------------------------------------------------------------

@dataclass
class SplitIndices:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def stratified_split(
    labels: np.ndarray,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> SplitIndices:
    """Per-class shuffle then floor-sized test/val slices, remainder to train.

    Deterministic for a fixed seed. Each class needs >= 3 members.
    """
    labels = np.asarray(labels)
    _, val_frac, test_frac = ratios
    rng = np.random.default_rng(seed)
    train_parts, val_parts, test_parts = [], [], []
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        if idx.size < 3:
            raise ClassTooSmall(f"class {cls} has {idx.size} members, need >= 3")
        perm = rng.permutation(idx)
        n_test = int(np.floor(test_frac * idx.size))
        n_val = int(np.floor(val_frac * idx.size))
        test_parts.append(perm[:n_test])
        val_parts.append(perm[n_test:n_test + n_val])
        train_parts.append(perm[n_test + n_val:])
    return SplitIndices(
        train=np.sort(np.concatenate(train_parts)),
        val=np.sort(np.concatenate(val_parts)),
        test=np.sort(np.concatenate(test_parts)),
    )
