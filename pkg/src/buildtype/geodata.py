"""Readers and writers for the two geodata inputs and the prediction output.

Rasters use the ESRI ASCII Grid format: a six-line header (ncols, nrows,
xllcorner, yllcorner, cellsize, NODATA_value; keys case-insensitive, any
order) followed by whitespace-separated values, northernmost row first.

Footprints use a GeoJSON subset: a FeatureCollection whose features are
Polygon or MultiPolygon. Coordinates are assumed to be in a projected CRS
with meter units; no reprojection is performed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CountMismatch,
    IndexOutOfRange,
    InvalidHeaderValue,
    LengthMismatch,
    MalformedDocument,
    MissingHeaderKey,
    NonNumericToken,
    UnclosedRing,
    UnsupportedGeometryType,
)

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")

# A ring is a closed list of (x, y) pairs; a part is [exterior, *holes];
# a geometry is a list of parts (one part for Polygon inputs).
Ring = list[tuple[float, float]]


@dataclass
class DemGrid:
    """Georeferenced elevation raster with a nodata sentinel.

    ``values`` is an (nrows, ncols) float64 array whose first row is the
    northernmost row, matching ASCII Grid storage order. Cells equal to
    ``nodata`` (exact comparison) carry no measurement.
    """

    ncols: int
    nrows: int
    xll: float
    yll: float
    cellsize: float
    nodata: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.nrows, self.ncols):
            raise CountMismatch(
                f"values shape {self.values.shape} != ({self.nrows}, {self.ncols})"
            )
        if self.cellsize <= 0:
            raise InvalidHeaderValue(f"cellsize must be positive, got {self.cellsize}")

    def is_nodata(self, row: int, col: int) -> bool:
        return self.values[row, col] == self.nodata

    def __eq__(self, other) -> bool:
        if not isinstance(other, DemGrid):
            return NotImplemented
        return (
            self.ncols == other.ncols
            and self.nrows == other.nrows
            and self.xll == other.xll
            and self.yll == other.yll
            and self.cellsize == other.cellsize
            and self.nodata == other.nodata
            and np.array_equal(self.values, other.values)
        )


@dataclass
class FootprintRecord:
    """One building footprint: an id, polygon geometry, and raw attributes."""

    uid: str
    parts: list[list[Ring]]
    attributes: dict = field(default_factory=dict)
    geometry_type: str = "Polygon"  # "Polygon" or "MultiPolygon", as parsed


def parse_ascii_grid(text: str) -> DemGrid:
    """Parse ESRI ASCII Grid text into a DemGrid.

    Raises MissingHeaderKey, NonNumericToken, or CountMismatch.
    """
    lines = text.splitlines()
    if len(lines) < 6:
        raise MissingHeaderKey("expected a 6-line header")

    header: dict[str, float] = {}
    for line in lines[:6]:
        fields = line.split()
        if len(fields) != 2:
            raise MissingHeaderKey(f"malformed header line: {line!r}")
        key = fields[0].lower()
        if key not in _HEADER_KEYS:
            raise MissingHeaderKey(f"unrecognized header key: {fields[0]!r}")
        try:
            header[key] = float(fields[1])
        except ValueError:
            raise NonNumericToken(f"non-numeric header value: {fields[1]!r}") from None
    for key in _HEADER_KEYS:
        if key not in header:
            raise MissingHeaderKey(f"header key missing: {key}")

    ncols = int(header["ncols"])
    nrows = int(header["nrows"])
    if ncols <= 0 or nrows <= 0 or ncols != header["ncols"] or nrows != header["nrows"]:
        raise InvalidHeaderValue("ncols/nrows must be positive integers")
    if header["cellsize"] <= 0:
        raise InvalidHeaderValue(f"cellsize must be positive, got {header['cellsize']}")

    tokens = " ".join(lines[6:]).split()
    if len(tokens) != nrows * ncols:
        raise CountMismatch(
            f"expected {nrows * ncols} values, found {len(tokens)}"
        )
    try:
        flat = np.array([float(t) for t in tokens], dtype=np.float64)
    except ValueError:
        bad = next(t for t in tokens if not _is_number(t))
        raise NonNumericToken(f"non-numeric data token: {bad!r}") from None
    values = flat.reshape(nrows, ncols)
    nodata = header["nodata_value"]
    if not np.all(np.isfinite(values) | (values == nodata)):
        raise NonNumericToken("grid contains non-finite values that are not nodata")

    return DemGrid(
        ncols=ncols,
        nrows=nrows,
        xll=header["xllcorner"],
        yll=header["yllcorner"],
        cellsize=header["cellsize"],
        nodata=nodata,
        values=values,
    )


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def serialize_ascii_grid(grid: DemGrid) -> str:
    """Render a DemGrid back to ASCII Grid text; parse(serialize(g)) == g."""
    out = [
        f"ncols {grid.ncols}",
        f"nrows {grid.nrows}",
        f"xllcorner {float(grid.xll)!r}",
        f"yllcorner {float(grid.yll)!r}",
        f"cellsize {float(grid.cellsize)!r}",
        f"NODATA_value {float(grid.nodata)!r}",
    ]
    for row in grid.values:
        out.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(out) + "\n"


def cell_center(grid: DemGrid, row: int, col: int) -> tuple[float, float]:
    """Projected coordinates of a cell's center. Row 0 is the north row."""
    if not (0 <= row < grid.nrows and 0 <= col < grid.ncols):
        raise IndexOutOfRange(f"cell ({row}, {col}) outside {grid.nrows}x{grid.ncols}")
    x = grid.xll + (col + 0.5) * grid.cellsize
    y = grid.yll + (grid.nrows - row - 0.5) * grid.cellsize
    return x, y


def _parse_ring(raw, where: str) -> Ring:
    if not isinstance(raw, list) or len(raw) < 4:
        raise UnclosedRing(f"{where}: ring needs >= 4 coordinate pairs")
    ring = []
    for pt in raw:
        if not isinstance(pt, list) or len(pt) < 2:
            raise MalformedDocument(f"{where}: bad coordinate {pt!r}")
        ring.append((float(pt[0]), float(pt[1])))
    if ring[0] != ring[-1]:
        raise UnclosedRing(f"{where}: first coordinate != last")
    return ring


def parse_footprints(text: str) -> list[FootprintRecord]:
    """Parse a GeoJSON FeatureCollection of Polygon/MultiPolygon features.

    The uid comes from the "UID" property when present, else "fid-<index>".
    Raises MalformedDocument, UnsupportedGeometryType, or UnclosedRing.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise MalformedDocument("document is not a FeatureCollection")
    features = doc.get("features")
    if not isinstance(features, list):
        raise MalformedDocument("FeatureCollection has no features list")

    records = []
    for i, feat in enumerate(features):
        if not isinstance(feat, dict) or feat.get("type") != "Feature":
            raise MalformedDocument(f"feature {i} is not a Feature object")
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        coords = geom.get("coordinates")
        where = f"feature {i}"
        if gtype == "Polygon":
            parts = [[_parse_ring(ring, where) for ring in coords]]
        elif gtype == "MultiPolygon":
            parts = [[_parse_ring(ring, where) for ring in part] for part in coords]
        else:
            raise UnsupportedGeometryType(f"{where}: geometry type {gtype!r}")
        if not parts or any(not part for part in parts):
            raise MalformedDocument(f"{where}: empty geometry")
        props = feat.get("properties") or {}
        uid = props.get("UID")
        uid = str(uid) if uid is not None else f"fid-{i}"
        records.append(
            FootprintRecord(uid=uid, parts=parts, attributes=dict(props), geometry_type=gtype)
        )
    return records


def _feature_object(rec: FootprintRecord, props: dict) -> dict:
    if rec.geometry_type == "Polygon":
        coords = [[list(pt) for pt in ring] for ring in rec.parts[0]]
    else:
        coords = [[[list(pt) for pt in ring] for ring in part] for part in rec.parts]
    return {
        "type": "Feature",
        "properties": props,
        "geometry": {"type": rec.geometry_type, "coordinates": coords},
    }


def serialize_footprints(records: list[FootprintRecord]) -> str:
    """Render footprints back to GeoJSON with their attributes unchanged."""
    features = [_feature_object(rec, dict(rec.attributes)) for rec in records]
    return json.dumps({"type": "FeatureCollection", "features": features})


def write_predictions(records: list[FootprintRecord], labels: list[tuple[float, str]]) -> str:
    """Render footprints plus (pred_prob, pred_class) pairs as GeoJSON text.

    Original properties are preserved; coordinates round-trip bit-exactly
    through parse_footprints.
    """
    if len(records) != len(labels):
        raise LengthMismatch(f"{len(records)} records vs {len(labels)} labels")
    features = []
    for rec, (prob, cls) in zip(records, labels):
        props = dict(rec.attributes)
        props["pred_prob"] = float(prob)
        props["pred_class"] = str(cls)
        features.append(_feature_object(rec, props))
    return json.dumps({"type": "FeatureCollection", "features": features})
