"""Reading and writing trajectory datasets, splines and reports."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np

from .bezier import BezierSpline, SplineSpec
from .errors import DomainError, GeometryError
from .manifolds import Euclidean, Manifold, Sphere, manifold_from_string

__all__ = [
    "DataFormatError",
    "TrajectoryDataset",
    "latlon_to_unit",
    "unit_to_latlon",
    "ingest_csv",
    "export_csv",
    "ingest_hurdat2",
    "intensity_class",
    "spline_to_dict",
    "spline_from_dict",
    "dumps_report",
]

# stored sphere coordinates further than this from unit norm are rejected
UNIT_NORM_TOL = 1e-3


class DataFormatError(ValueError):
    """Malformed input file."""


@dataclass
class TrajectoryDataset:
    """Time-indexed samples per subject, each subject sorted by strictly increasing time."""

    manifold: Manifold
    subjects: dict  # id -> (t array, q array)
    metadata: dict = field(default_factory=dict)  # id -> {name: array or scalar}

    def __post_init__(self):
        if not self.subjects:
            raise DataFormatError("no subjects")

    def __len__(self):
        return len(self.subjects)

    def __eq__(self, other):
        if not isinstance(other, TrajectoryDataset) or self.manifold != other.manifold:
            return False
        if list(self.subjects) != list(other.subjects):
            return False
        return all(
            np.array_equal(self.subjects[k][0], other.subjects[k][0])
            and np.array_equal(self.subjects[k][1], other.subjects[k][1])
            for k in self.subjects
        )

    def items(self):
        return self.subjects.items()


def latlon_to_unit(lat, lon):
    """Degrees to ``(cos lat cos lon, cos lat sin lon, sin lat)``."""
    la, lo = np.radians(lat), np.radians(lon)
    return np.stack([np.cos(la) * np.cos(lo), np.cos(la) * np.sin(lo), np.sin(la)], axis=-1)


def unit_to_latlon(x):
    x = np.asarray(x, dtype=float)
    return np.degrees(np.arcsin(np.clip(x[..., 2], -1, 1))), np.degrees(np.arctan2(x[..., 1], x[..., 0]))


def _finish(manifold, rows, where):
    """Group rows ``(subject, t, q, meta)`` into a dataset with per-subject checks."""
    subjects, meta = {}, {}
    for subject, t, q, extra, line in rows:
        subjects.setdefault(subject, []).append((t, q, extra, line))
    out = {}
    for subject, recs in subjects.items():
        recs.sort(key=lambda r: r[0])
        ts = np.array([r[0] for r in recs])
        dup = np.flatnonzero(np.diff(ts) == 0)
        if dup.size:
            raise DataFormatError(
                f"{where}: duplicate time {ts[dup[0]]!r} for subject {subject!r} "
                f"(line {recs[dup[0] + 1][3]})"
            )
        qs = np.array([r[1] for r in recs])
        try:
            manifold.guard.check(manifold, qs, f"samples of subject {subject!r}")
        except DomainError as exc:
            raise DomainError(f"{where}: {exc}") from None
        out[subject] = (ts, qs)
        if recs[0][2]:
            meta[subject] = {k: np.array([r[2][k] for r in recs]) for k in recs[0][2]}
    return out, meta


def _as_float(token, line, what):
    try:
        x = float(token)
    except ValueError:
        raise DataFormatError(f"line {line}: {what} {token!r} is not a number") from None
    if not math.isfinite(x):
        raise DataFormatError(f"line {line}: {what} {token!r} is not finite")
    return x


def ingest_csv(path, manifold: Manifold | str | None = None) -> TrajectoryDataset:
    """Read ``subject,t,<coords>`` rows.

    Coordinates are ``x0..`` (ambient coordinates) or ``lat,lon`` in degrees
    (points of the 2-sphere). Without an explicit ``manifold``, ``x`` columns are
    read as sphere points when every row has unit norm and as Euclidean otherwise.
    Sphere rows are renormalized.
    """
    path = Path(path)
    if isinstance(manifold, str):
        manifold = manifold_from_string(manifold)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataFormatError(f"{path}: no subjects")
        header = [h.strip() for h in header]
        if header[:2] != ["subject", "t"] or len(header) < 3:
            raise DataFormatError(f"{path}: header must start with 'subject,t' followed by coordinates")
        coords = header[2:]
        latlon = coords == ["lat", "lon"]
        if not latlon and coords != [f"x{i}" for i in range(len(coords))]:
            raise DataFormatError(f"{path}: coordinate columns must be x0..x{{n-1}} or lat,lon")
        raw = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(f"{path}: line {line}: expected {len(header)} fields, got {len(row)}")
            subject = row[0].strip()
            if not subject:
                raise DataFormatError(f"{path}: line {line}: empty subject id")
            t = _as_float(row[1], line, "time")
            vals = [_as_float(c, line, name) for c, name in zip(row[2:], coords)]
            raw.append((subject, t, vals, line))
    if not raw:
        raise DataFormatError(f"{path}: no subjects")
    if latlon:
        pts = latlon_to_unit(*np.array([r[2] for r in raw]).T)
        if manifold is None:
            manifold = Sphere(2)
        elif manifold != Sphere(2):
            raise GeometryError(f"lat,lon columns describe sphere:2, not {manifold}")
    else:
        pts = np.array([r[2] for r in raw])
        norms = np.linalg.norm(pts, axis=1)
        if manifold is None:
            unit = pts.shape[1] >= 2 and np.all(np.abs(norms - 1) <= 1e-6)
            manifold = Sphere(pts.shape[1] - 1) if unit else Euclidean(pts.shape[1])
        if pts.shape[1] != manifold.ambient_dim:
            raise GeometryError(f"{path}: {pts.shape[1]} coordinates do not fit {manifold}")
        if isinstance(manifold, Sphere):
            bad = np.flatnonzero(np.abs(norms - 1) > UNIT_NORM_TOL)
            if bad.size:
                r = raw[bad[0]]
                raise DataFormatError(f"{path}: line {r[3]}: point has norm {norms[bad[0]]:.6g}, not 1")
            # leave rows that are unit to rounding untouched so exports re-read bit-identically
            off = np.abs(norms - 1) > 4 * np.finfo(float).eps
            pts[off] /= norms[off, None]
    rows = [(r[0], r[1], q, None, r[3]) for r, q in zip(raw, pts)]
    subjects, meta = _finish(manifold, rows, str(path))
    return TrajectoryDataset(manifold, subjects, meta)


def export_csv(dataset: TrajectoryDataset, path) -> None:
    """Write ``subject,t,x0..`` rows that :func:`ingest_csv` reads back to an equal dataset."""
    n = dataset.manifold.ambient_dim
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", "t"] + [f"x{i}" for i in range(n)])
        for subject, (ts, qs) in dataset.items():
            for t, q in zip(ts, qs):
                w.writerow([subject, repr(float(t))] + [repr(float(x)) for x in q])


# -- HURDAT2 ------------------------------------------------------------------------


def _hurdat_coord(token, line, pos, neg, what):
    token = token.strip()
    if len(token) < 2 or token[-1] not in (pos, neg):
        raise DataFormatError(f"line {line}: malformed {what} {token!r}")
    value = _as_float(token[:-1], line, what)
    return value if token[-1] == pos else -value


def intensity_class(max_wind) -> int:
    """Three Saffir-Simpson bins of a storm's peak wind in knots.

    0: below category 1 (< 64 kt); 1: categories 1-3 (64-112 kt); 2: categories 4-5 (>= 113 kt).
    """
    w = float(np.max(max_wind))
    return 0 if w < 64 else (1 if w < 113 else 2)


def ingest_hurdat2(path) -> TrajectoryDataset:
    """Read best-track records in the HURDAT2 text layout.

    Each storm becomes a subject with times in days since its first record,
    rescaled to [0, 1]; the original span in days, the storm name and the
    per-record maximum wind are kept as metadata.
    """
    path = Path(path)
    rows = []
    header = None
    expected = {}
    counts = {}
    names = {}
    with path.open(encoding="utf-8") as fh:
        lines = list(enumerate(fh, start=1))
    for line, text in lines:
        if not text.strip():
            continue
        fields = [f.strip() for f in text.rstrip("\n").split(",")]
        if len(fields) >= 3 and fields[0][:2].isalpha() and len(fields[0]) == 8 and fields[2].isdigit():
            header = fields[0]
            if header in expected:
                raise DataFormatError(f"{path}: line {line}: storm {header} appears twice")
            names[header] = fields[1]
            expected[header] = int(fields[2])
            counts[header] = 0
            continue
        if header is None:
            raise DataFormatError(f"{path}: line {line}: data row before any storm header")
        if len(fields) < 7:
            raise DataFormatError(f"{path}: line {line}: expected at least 7 fields, got {len(fields)}")
        try:
            when = datetime.strptime(fields[0] + fields[1].zfill(4), "%Y%m%d%H%M")
        except ValueError:
            raise DataFormatError(f"{path}: line {line}: bad date/time {fields[0]!r} {fields[1]!r}") from None
        try:
            lat = _hurdat_coord(fields[4], line, "N", "S", "latitude")
            lon = _hurdat_coord(fields[5], line, "E", "W", "longitude")
        except DataFormatError as exc:
            raise DataFormatError(f"{path}: {exc}") from None
        wind = _as_float(fields[6], line, "max wind")
        counts[header] += 1
        rows.append((header, when, lat, lon, wind, line))
    if not rows:
        raise DataFormatError(f"{path}: no subjects")
    for storm, n in expected.items():
        if counts[storm] != n:
            warnings.warn(f"{path}: storm {storm} header announces {n} rows, found {counts[storm]}",
                          stacklevel=2)
    start = {}
    for storm, when, *_ in rows:
        start[storm] = min(start.get(storm, when), when)
    days = {storm: 0.0 for storm in start}
    for storm, when, *_ in rows:
        days[storm] = max(days[storm], (when - start[storm]).total_seconds() / 86400.0)
    sphere = Sphere(2)
    recs = []
    for storm, when, lat, lon, wind, line in rows:
        d = (when - start[storm]).total_seconds() / 86400.0
        t = d / days[storm] if days[storm] > 0 else 0.0
        recs.append((storm, t, latlon_to_unit(lat, lon), {"max_wind": wind}, line))
    subjects, meta = _finish(sphere, recs, str(path))
    for storm in subjects:
        meta[storm]["name"] = names.get(storm, "")
        meta[storm]["span_days"] = days[storm]
    return TrajectoryDataset(sphere, subjects, meta)


# -- splines and reports --------------------------------------------------------------


def spline_to_dict(spline: BezierSpline) -> dict:
    return {
        "manifold": str(spline.manifold),
        "degrees": list(spline.spec.degrees),
        "closed": spline.spec.closed,
        "control_points": spline.points.tolist(),
    }


def spline_from_dict(d: dict) -> BezierSpline:
    try:
        M = manifold_from_string(d["manifold"])
        spec = SplineSpec(tuple(d["degrees"]), bool(d.get("closed", False)))
        return BezierSpline(M, spec, np.array(d["control_points"], dtype=float))
    except KeyError as exc:
        raise DataFormatError(f"stored spline lacks field {exc}") from None


def _emit(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format(x, ".17g") if math.isfinite(x) else "null"
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        return _emit(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_emit(str(k), indent, level + 1)}: {_emit(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(x, (dict, list, tuple, np.ndarray)) for x in obj):
            return "[" + ", ".join(_emit(x, indent, level + 1) for x in obj) + "]"
        return "[\n" + ",\n".join(pad + _emit(x, indent, level + 1) for x in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_report(obj, indent: int = 2) -> str:
    """JSON text with dict order kept and floats written with 17 significant digits."""
    return _emit(obj, indent, 0) + "\n"
