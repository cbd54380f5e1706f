"""Command-line driver: GeoJSON/CSV ingestion plus build, join, stats and bench."""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import sys
import time
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .cellgrid import DomainError, LatLng
from .geometry import MAX_POLYGON_ID, Polygon, PolygonError
from .join import (
    JoinConfig,
    build_index,
    collect_metrics,
    count_stream,
    join_arrays,
    load_bundle,
    save_bundle,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
CHUNK = 65536


class DataError(ValueError):
    """Bad input data: unreadable files, unsupported geometry, bad rows."""


# -- polygons ---------------------------------------------------------------

def _feature_name(feat: dict, index: int) -> str:
    fid = feat.get("id", (feat.get("properties") or {}).get("id"))
    return f"feature #{index}" + (f" (id {fid!r})" if fid is not None else "")


def load_geojson(path) -> list[Polygon]:
    """Read a FeatureCollection of simple polygons (outer ring only).

    Feature ids come from the feature's ``id`` or ``properties.id``; features
    without one are numbered sequentially after the largest explicit id.
    """
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}") from None
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise DataError(f"{path}: expected a GeoJSON FeatureCollection")
    features = doc.get("features")
    if not isinstance(features, list):
        raise DataError(f"{path}: FeatureCollection has no features list")

    rings = []
    for i, feat in enumerate(features):
        name = _feature_name(feat, i) if isinstance(feat, dict) else f"feature #{i}"
        geom = feat.get("geometry") if isinstance(feat, dict) else None
        if not isinstance(geom, dict):
            raise DataError(f"{path}: {name} has no geometry")
        if geom.get("type") != "Polygon":
            raise DataError(f"{path}: {name} has unsupported geometry type {geom.get('type')!r}")
        coords = geom.get("coordinates")
        if not isinstance(coords, list) or not coords:
            raise DataError(f"{path}: {name} has no coordinates")
        if len(coords) > 1:
            raise DataError(f"{path}: {name} has holes, which are not supported")
        fid = feat.get("id", (feat.get("properties") or {}).get("id"))
        if fid is not None and (isinstance(fid, bool) or not isinstance(fid, (int, float)) or fid != int(fid)):
            raise DataError(f"{path}: {name} has a non-integer id")
        try:
            ring = [(float(pt[1]), float(pt[0])) for pt in coords[0]]
        except (TypeError, ValueError, IndexError):
            raise DataError(f"{path}: {name} has malformed coordinates") from None
        rings.append((name, None if fid is None else int(fid), ring))

    explicit = [fid for _, fid, _ in rings if fid is not None]
    next_id = max(explicit, default=-1) + 1
    seen: set[int] = set()
    out = []
    for name, fid, ring in rings:
        if fid is None:
            fid, next_id = next_id, next_id + 1
        if fid in seen:
            raise DataError(f"{path}: duplicate polygon id {fid} ({name})")
        if not 0 <= fid <= MAX_POLYGON_ID:
            raise DataError(f"{path}: {name} id {fid} is outside [0, 2^30)")
        seen.add(fid)
        try:
            out.append(Polygon(fid, ring))
        except (PolygonError, DomainError) as exc:
            raise DataError(f"{path}: {name}: {exc}") from None
    return out


def dump_geojson(polygons, path) -> None:
    """Write polygons as a FeatureCollection with closed outer rings."""
    feats = []
    for p in polygons:
        ring = [[v.lng, v.lat] for v in p.vertices]
        ring.append(ring[0])
        feats.append({"type": "Feature", "id": p.id, "properties": {},
                      "geometry": {"type": "Polygon", "coordinates": [ring]}})
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"type": "FeatureCollection", "features": feats}, f)


# -- points -----------------------------------------------------------------

@dataclass
class CsvReport:
    rows: int = 0
    skipped: int = 0
    first_error: str | None = None


def load_points_csv(path, lat_col: str = "lat", lng_col: str = "lng", strict: bool = False,
                    report: CsvReport | None = None) -> Iterator[LatLng]:
    """Stream points from a CSV file with a header row.

    Bad rows are skipped and counted in ``report``; with ``strict=True`` the
    first bad row raises :class:`DataError` naming its line number.
    """
    report = report if report is not None else CsvReport()
    try:
        f = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    with f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            return
        header = [h.strip() for h in header]
        try:
            ia, io_ = header.index(lat_col), header.index(lng_col)
        except ValueError:
            raise DataError(f"{path}: header needs columns {lat_col!r} and {lng_col!r}") from None
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            report.rows += 1
            try:
                lat, lng = float(row[ia]), float(row[io_])
                if not (-90.0 <= lat <= 90.0 and -180.0 <= lng <= 180.0):
                    raise ValueError("coordinate out of range")
            except (ValueError, IndexError) as exc:
                msg = f"{path}:{line}: bad row ({exc})"
                if strict:
                    raise DataError(msg) from None
                report.skipped += 1
                report.first_error = report.first_error or msg
                continue
            yield LatLng(lat, lng)


def _point_chunks(points: Iterator[LatLng], size: int = CHUNK) -> Iterator[np.ndarray]:
    while True:
        block = list(itertools.islice(points, size))
        if not block:
            return
        yield np.asarray(block, dtype=np.float64)


def _read_all(points: Iterator[LatLng]) -> np.ndarray:
    arr = np.asarray(list(points), dtype=np.float64)
    return arr.reshape(-1, 2)


# -- commands ---------------------------------------------------------------

def _warn_skipped(rep: CsvReport) -> None:
    if rep.skipped:
        print(f"warning: skipped {rep.skipped} of {rep.rows} rows; first: {rep.first_error}", file=sys.stderr)


def _points(args, rep: CsvReport, path=None) -> Iterator[LatLng]:
    return load_points_csv(path or args.points, args.lat_col, args.lng_col, args.strict, rep)


def _cmd_build(args) -> int:
    polygons = load_geojson(args.polygons)
    cfg = JoinConfig(mode=args.mode, precision=args.precision, memory_budget=args.memory_budget,
                     training_limit=args.train_limit)
    training = None
    if args.train:
        rep = CsvReport()
        pts = _points(args, rep, args.train)
        if args.train_limit is not None:
            pts = itertools.islice(pts, args.train_limit)
        training = _read_all(pts)
        _warn_skipped(rep)
    bundle = build_index(polygons, cfg, training)
    save_bundle(bundle, args.out)
    info = {"mode": bundle.mode.value, "precision_m": bundle.precision,
            "tree_nodes": bundle.act.node_count, "memory_bytes": bundle.memory_usage()}
    if bundle.training is not None:
        info["cells_split"] = bundle.training.cells_split
    print(json.dumps(info), file=sys.stderr)
    return EXIT_OK


def _cmd_join(args) -> int:
    bundle = load_bundle(args.index)
    exact = bundle.mode.value == "exact"
    rep = CsvReport()
    chunks = _point_chunks(_points(args, rep))
    if args.pairs_out:
        counts: dict[int, int] = {}
        base = 0
        with open(args.pairs_out, "w", encoding="utf-8", newline="") as pf:
            pf.write("point_index,polygon_id\n")
            for chunk in chunks:
                p, q = join_arrays(bundle, chunk, exact)
                for a, b in zip((p + base).tolist(), q.tolist()):
                    pf.write(f"{a},{b}\n")
                for b in q.tolist():
                    counts[b] = counts.get(b, 0) + 1
                base += len(chunk)
        counts = dict(sorted(counts.items()))
    else:
        counts = count_stream(bundle, chunks, exact, args.threads)
    _warn_skipped(rep)
    text = "polygon_id,count\n" + "".join(f"{k},{v}\n" for k, v in counts.items())
    if args.counts_out:
        with open(args.counts_out, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_stats(args) -> int:
    bundle = load_bundle(args.index)
    rep = CsvReport()
    pts = _read_all(_points(args, rep))
    _warn_skipped(rep)
    sys.stdout.write(json.dumps(collect_metrics(bundle, pts).as_table_row(), sort_keys=True) + "\n")
    return EXIT_OK


def _cmd_bench(args) -> int:
    bundle = load_bundle(args.index)
    rep = CsvReport()
    pts = _read_all(_points(args, rep))
    _warn_skipped(rep)
    exact = bundle.mode.value == "exact"
    if args.batch:
        chunks = [pts[i:i + CHUNK] for i in range(0, len(pts), CHUNK)]
        t0 = time.perf_counter()
        count_stream(bundle, chunks, exact, args.threads)
    else:
        # one scalar probe per point, for comparison with the lockstep path
        from .cellgrid import cells_from_points
        keys = cells_from_points(pts[:, 0], pts[:, 1], bundle.act.max_level).tolist()
        t0 = time.perf_counter()
        for k in keys:
            bundle.act.resolve(bundle.act.probe(k))
    dt = time.perf_counter() - t0
    rate = len(pts) / dt if dt > 0 else float("inf")
    print(f"{rate:.0f} points/s ({len(pts)} points, {dt:.3f} s, threads={args.threads}, "
          f"{'lockstep' if args.batch else 'scalar'})")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _positive_int(s: str) -> int:
    v = int(s)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _byte_size(s: str) -> int:
    units = {"k": 1 << 10, "m": 1 << 20, "g": 1 << 30}
    s = s.strip().lower().rstrip("b")
    mult = units.get(s[-1:], 1)
    try:
        v = int(float(s[:-1] if s[-1:] in units else s) * mult)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a byte size: {s!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="actjoin", description="Point-polygon join over a cell trie.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def csv_opts(p):
        p.add_argument("--lat-col", default="lat")
        p.add_argument("--lng-col", default="lng")
        p.add_argument("--strict", action="store_true", help="abort on the first bad CSV row")

    b = sub.add_parser("build", help="build and save an index")
    b.add_argument("--polygons", required=True)
    b.add_argument("--mode", choices=["exact", "approx"], default="exact")
    b.add_argument("--precision", type=float, help="approximate-mode distance bound in meters")
    b.add_argument("--memory-budget", type=_byte_size, default=256 << 20, help="bytes; k/m/g suffixes allowed")
    b.add_argument("--train", help="CSV of historical points for training")
    b.add_argument("--train-limit", type=_positive_int)
    b.add_argument("--out", required=True)
    csv_opts(b)

    j = sub.add_parser("join", help="count points per polygon")
    j.add_argument("--index", required=True)
    j.add_argument("--points", required=True)
    j.add_argument("--counts-out")
    j.add_argument("--pairs-out")
    j.add_argument("--threads", type=_positive_int, default=1)
    csv_opts(j)

    s = sub.add_parser("stats", help="index quality metrics as JSON")
    s.add_argument("--index", required=True)
    s.add_argument("--points", required=True)
    csv_opts(s)

    r = sub.add_parser("bench", help="probe throughput")
    r.add_argument("--index", required=True)
    r.add_argument("--points", required=True)
    r.add_argument("--threads", type=_positive_int, default=1)
    r.add_argument("--batch", action="store_true", help="use the lockstep batch probe")
    csv_opts(r)
    return parser


_COMMANDS = {"build": _cmd_build, "join": _cmd_join, "stats": _cmd_stats, "bench": _cmd_bench}


def run_cli(args=None) -> int:
    try:
        ns = make_parser().parse_args(args)
    except _UsageError:
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    if ns.command == "build" and ns.mode == "approx" and not ns.precision:
        print("actjoin build: error: --mode approx needs --precision", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _COMMANDS[ns.command](ns)
    except (ValueError, OSError) as exc:
        # DataError, DomainError, PolygonError, CorruptIndexError and
        # MemoryBudgetError are all ValueErrors
        print(f"actjoin {ns.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run_cli())
