"""Command-line surface for the road-network pipeline.

Artifacts go to files under --out; logs go to stderr. Exit codes: 0 on
success, 2 for missing inputs or invalid configuration, 3 for internal
invariant violations. All randomness flows from --seed, and parallel
stages are chunked so results are identical for any --workers value.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from . import analytics, bench, boundary, convert, spatial
from .geo import BBox, GeoPoint
from .graphbuild import InvariantError, build_graph, clean_graph, detect_intersections, split_ways
from .osmxml import OsmParseError, filter_roads, parse_osm_xml

log = logging.getLogger("roadnet")


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    input: str | None = None
    out: str = "."
    snap_radius: float = 5.0
    component_min_length: float = 100.0
    grid_resolution: float = 0.01
    kde_bandwidth_h: float = 500.0
    kde_sample_rate: float = 1.0
    kde_truncation: float | None = 4.0
    boundary_resolution: float = 0.01
    boundary_threshold: float | None = None  # None: 90th percentile of nonzero cells
    workers: int = 0  # 0: use the CPU count
    seed: int = 0

    def validate(self) -> None:
        if self.snap_radius < 0:
            raise ConfigError("snap_radius must be >= 0")
        if self.component_min_length < 0:
            raise ConfigError("component_min_length must be >= 0")
        if self.grid_resolution <= 0 or self.boundary_resolution <= 0:
            raise ConfigError("resolutions must be > 0")
        if self.kde_bandwidth_h <= 0:
            raise ConfigError("kde_bandwidth_h must be > 0")
        if not 0.0 < self.kde_sample_rate <= 1.0:
            raise ConfigError("kde_sample_rate must be in (0, 1]")
        if self.kde_truncation is not None and self.kde_truncation <= 0:
            raise ConfigError("kde_truncation must be > 0 or none")
        if self.boundary_threshold is not None and self.boundary_threshold <= 0:
            raise ConfigError("boundary_threshold must be > 0")
        if self.workers < 0:
            raise ConfigError("workers must be >= 0")

    @property
    def effective_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)


def _parse_optional_float(raw: str) -> float | None:
    return None if raw.lower() in ("none", "off") else float(raw)


_CONFIG_PARSERS = {
    "input": str,
    "out": str,
    "snap_radius": float,
    "component_min_length": float,
    "grid_resolution": float,
    "kde_bandwidth_h": float,
    "kde_sample_rate": float,
    "kde_truncation": _parse_optional_float,
    "boundary_resolution": float,
    "boundary_threshold": _parse_optional_float,
    "workers": int,
    "seed": int,
}


def load_config_file(path: str) -> dict:
    """Flat key=value config document; # starts a comment."""
    values = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _CONFIG_PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _CONFIG_PARSERS[key](raw)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    """Precedence: command-line flags, then config file, then defaults."""
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        for key, value in load_config_file(args.config).items():
            setattr(cfg, key, value)
    for f in fields(PipelineConfig):
        flag_value = getattr(args, f.name, None)
        if flag_value is not None:
            setattr(cfg, f.name, flag_value)
    cfg.validate()
    return cfg


def _out_dir(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, data: bytes) -> None:
    path.write_bytes(data)
    log.info("wrote %s (%d bytes)", path, len(data))


def _dump_json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")


def _load_graph_dir(path: str):
    gdir = Path(path)
    files = {}
    for name in ("vertices.csv", "split_edges.csv"):
        fpath = gdir / name
        if not fpath.is_file():
            raise FileNotFoundError(f"{fpath} not found (not a graph directory?)")
        files[name] = fpath.read_bytes()
    return convert.load_graph(files, "csv")


def cmd_ingest(args, cfg: PipelineConfig) -> int:
    if not cfg.input:
        raise ConfigError("ingest requires --input")
    result = parse_osm_xml(cfg.input)
    roads = filter_roads(result.ways)
    nodes = result.node_lookup()
    intersections = detect_intersections(roads)
    raw_edges = split_ways(roads, intersections, nodes)
    graph = clean_graph(raw_edges, cfg.snap_radius, cfg.component_min_length)
    out = _out_dir(cfg)
    for name, data in convert.export_graph(graph, "csv").items():
        _write(out / name, data)
    build_info = {
        "node_count_raw": len(result.nodes),
        "way_count_raw": len(result.ways),
        "road_way_count": len(roads),
        "split_edge_count_raw": len(raw_edges),
        "vertex_count": len(graph.vertices),
        "split_edge_count": len(graph.edges),
        "dropped_ways": len(result.report.dropped_ways),
        "unresolved_refs": len(result.report.unresolved),
        "snap_radius": cfg.snap_radius,
        "component_min_length": cfg.component_min_length,
    }
    _write(out / "build_info.json", _dump_json(build_info))
    return 0


def cmd_stats(args, cfg: PipelineConfig) -> int:
    graph = _load_graph_dir(args.graph_dir)
    regions = None
    if args.regions:
        with open(args.regions, encoding="utf-8") as fh:
            regions = boundary.admin_regions_from_geojson(json.load(fh))
    report = analytics.compute_stats(graph, regions)
    doc = report.to_dict()
    # the serialized tables carry no way provenance; recover the source way
    # count from the ingest metadata when it is available
    info_path = Path(args.graph_dir) / "build_info.json"
    if info_path.is_file():
        info = json.loads(info_path.read_text(encoding="utf-8"))
        doc["way_count"] = info.get("road_way_count", doc["way_count"])
        doc["split_edge_count_raw"] = info.get("split_edge_count_raw")
    _write(_out_dir(cfg) / "stats.json", _dump_json(doc))
    return 0


def cmd_query(args, cfg: PipelineConfig) -> int:
    graph = _load_graph_dir(args.graph_dir)
    points = spatial.PointSet.from_graph(graph)
    naive = args.engine == "naive"
    lines = []
    if args.mode in ("radius", "bbox"):
        if args.mode == "radius":
            if args.lat is None or args.lon is None or args.radius is None:
                raise ConfigError("radius query needs --lat, --lon, --radius")
            engine = spatial.NaiveScan(points) if naive else spatial.GridIndex(
                points, cfg.grid_resolution)
            ids = engine.query_radius(GeoPoint(args.lat, args.lon), args.radius)
        else:
            if None in (args.min_lat, args.min_lon, args.max_lat, args.max_lon):
                raise ConfigError("bbox query needs --min-lat/--min-lon/--max-lat/--max-lon")
            engine = spatial.NaiveScan(points) if naive else spatial.GridIndex(
                points, cfg.grid_resolution)
            ids = engine.query_bbox(
                BBox(args.min_lat, args.min_lon, args.max_lat, args.max_lon))
        lines = ["vertex_id"] + [str(int(i)) for i in ids]
    else:
        if args.lat is None or args.lon is None:
            raise ConfigError(f"{args.mode} query needs --lat and --lon")
        engine = spatial.NaiveScan(points) if naive else spatial.KdIndex(points)
        q = GeoPoint(args.lat, args.lon)
        if args.mode == "nn":
            results = [engine.query_nearest(q)]
        else:
            if args.k is None:
                raise ConfigError("knn query needs --k")
            results = engine.query_knn(q, args.k)
        lines = ["vertex_id,distance_m"] + [f"{vid},{dist!r}" for vid, dist in results]
    _write(_out_dir(cfg) / "query.csv", ("\n".join(lines) + "\n").encode("utf-8"))
    return 0


def cmd_kde(args, cfg: PipelineConfig) -> int:
    graph = _load_graph_dir(args.graph_dir)
    index = spatial.build_grid(graph, cfg.grid_resolution)
    params = analytics.KdeParams(
        bandwidth_h=cfg.kde_bandwidth_h,
        sample_rate=cfg.kde_sample_rate,
        truncation=cfg.kde_truncation,
        seed=cfg.seed,
    )
    field = analytics.kde_field(graph, index, params, workers=cfg.effective_workers)
    lines = ["vertex_id,density_per_m2"]
    lines += [f"{vid},{field[vid]!r}" for vid in sorted(field)]
    _write(_out_dir(cfg) / "kde.csv", ("\n".join(lines) + "\n").encode("utf-8"))
    return 0


def cmd_boundary(args, cfg: PipelineConfig) -> int:
    graph = _load_graph_dir(args.graph_dir)
    extent = graph.bounds()
    raster = boundary.rasterize(graph, extent, cfg.boundary_resolution, mode=args.mode)
    threshold = cfg.boundary_threshold
    if threshold is None:
        threshold = boundary.default_threshold(raster)
    labeling = boundary.cluster_dense_cells(raster, threshold)
    polygons = boundary.polygonize(labeling, raster)
    out = _out_dir(cfg)
    _write(out / "boundary.geojson", _dump_json(boundary.boundaries_to_geojson(polygons)))
    if args.admin:
        with open(args.admin, encoding="utf-8") as fh:
            admin = boundary.admin_regions_from_geojson(json.load(fh))
        report = boundary.compare_boundaries(polygons, admin, cfg.boundary_resolution)
        _write(out / "boundary_report.json", _dump_json(report))
    return 0


def cmd_export_graph(args, cfg: PipelineConfig) -> int:
    graph = _load_graph_dir(args.graph_dir)
    out = _out_dir(cfg)
    for name, data in convert.export_graph(graph, args.format).items():
        _write(out / name, data)
    return 0


def cmd_export_simnet(args, cfg: PipelineConfig) -> int:
    graph = _load_graph_dir(args.graph_dir)
    simnet = convert.export_simnet(graph)
    _write(_out_dir(cfg) / "simnet.json", _dump_json(simnet))
    return 0


def cmd_gen_demand(args, cfg: PipelineConfig) -> int:
    with open(args.simnet, encoding="utf-8") as fh:
        simnet = json.load(fh)
    demand = convert.generate_demand(simnet, args.trips, args.horizon, cfg.seed)
    _write(_out_dir(cfg) / "demand.json", _dump_json(demand))
    return 0


def cmd_map_sensors(args, cfg: PipelineConfig) -> int:
    graph = _load_graph_dir(args.graph_dir)
    sensors = convert.sensors_from_csv(Path(args.sensors).read_bytes())
    index = spatial.build_kd(graph)
    mapping = convert.map_sensors(sensors, index, args.max_match_distance)
    _write(_out_dir(cfg) / "sensor_map.csv", convert.sensor_mapping_to_csv(mapping))
    return 0


def cmd_bench(args, cfg: PipelineConfig) -> int:
    rows = bench.run_benchmark(
        n_points=args.n_points,
        n_queries=args.n_queries,
        runs=args.runs,
        backends=args.backends,
        seed=cfg.seed,
        radius_m=args.radius,
    )
    _write(_out_dir(cfg) / "bench.csv", bench.rows_to_csv(rows))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadnet",
        description="Road-network extraction, spatial queries, and exports.",
    )
    parser.add_argument("--version", action="version", version="roadnet 0.1.0")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--out", help="output directory (default .)")
        p.add_argument("--seed", type=int, help="seed for all randomness")
        p.add_argument("--workers", type=int, help="worker count, 0 = auto")
        p.add_argument("--verbose", action="store_true", help="info-level logs to stderr")

    p = sub.add_parser("ingest", help="parse OSM XML and build the cleaned graph")
    common(p)
    p.add_argument("--input", help="OSM XML file")
    p.add_argument("--snap-radius", type=float, dest="snap_radius")
    p.add_argument("--component-min-length", type=float, dest="component_min_length")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="dataset statistics for a graph directory")
    common(p)
    p.add_argument("graph_dir")
    p.add_argument("--regions", help="GeoJSON regions for per-region stats")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("query", help="run one spatial query")
    common(p)
    p.add_argument("graph_dir")
    p.add_argument("--mode", choices=("radius", "bbox", "nn", "knn"), required=True)
    p.add_argument("--engine", choices=("indexed", "naive"), default="indexed")
    p.add_argument("--lat", type=float)
    p.add_argument("--lon", type=float)
    p.add_argument("--radius", type=float, help="meters (radius mode)")
    p.add_argument("--k", type=int, help="result count (knn mode)")
    p.add_argument("--min-lat", type=float, dest="min_lat")
    p.add_argument("--min-lon", type=float, dest="min_lon")
    p.add_argument("--max-lat", type=float, dest="max_lat")
    p.add_argument("--max-lon", type=float, dest="max_lon")
    p.add_argument("--grid-resolution", type=float, dest="grid_resolution")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("kde", help="vertex density field")
    common(p)
    p.add_argument("graph_dir")
    p.add_argument("--kde-bandwidth-h", type=float, dest="kde_bandwidth_h")
    p.add_argument("--kde-sample-rate", type=float, dest="kde_sample_rate")
    p.add_argument("--kde-truncation", type=_parse_optional_float, dest="kde_truncation")
    p.add_argument("--grid-resolution", type=float, dest="grid_resolution")
    p.set_defaults(func=cmd_kde)

    p = sub.add_parser("boundary", help="detect dense-region boundaries")
    common(p)
    p.add_argument("graph_dir")
    p.add_argument("--mode", choices=("counts", "kde"), default="counts")
    p.add_argument("--boundary-resolution", type=float, dest="boundary_resolution")
    p.add_argument("--boundary-threshold", type=float, dest="boundary_threshold")
    p.add_argument("--admin", help="GeoJSON admin boundaries to compare against")
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("export-graph", help="serialize a graph directory")
    common(p)
    p.add_argument("graph_dir")
    p.add_argument("--format", choices=convert.GRAPH_FORMATS, default="csv")
    p.set_defaults(func=cmd_export_graph)

    p = sub.add_parser("export-simnet", help="lane-level simulator network")
    common(p)
    p.add_argument("graph_dir")
    p.set_defaults(func=cmd_export_simnet)

    p = sub.add_parser("gen-demand", help="seeded origin-destination demand")
    common(p)
    p.add_argument("simnet", help="simnet.json produced by export-simnet")
    p.add_argument("--trips", type=int, default=10)
    p.add_argument("--horizon", type=float, default=3600.0)
    p.set_defaults(func=cmd_gen_demand)

    p = sub.add_parser("map-sensors", help="assign sensors to nearest vertices")
    common(p)
    p.add_argument("graph_dir")
    p.add_argument("--sensors", required=True, help="CSV sensor_id,lat,lon")
    p.add_argument("--max-match-distance", type=float, dest="max_match_distance",
                   default=convert.DEFAULT_MAX_MATCH_DISTANCE_M)
    p.set_defaults(func=cmd_map_sensors)

    p = sub.add_parser("bench", help="query engine benchmark CSV")
    common(p)
    p.add_argument("--n-points", type=int, dest="n_points", default=bench.DEFAULT_N_POINTS)
    p.add_argument("--n-queries", type=int, dest="n_queries", default=bench.DEFAULT_N_QUERIES)
    p.add_argument("--runs", type=int, default=bench.DEFAULT_RUNS)
    p.add_argument("--radius", type=float, default=bench.DEFAULT_RADIUS_M)
    p.add_argument("--backends", choices=("active", "both", "compiled", "fallback"),
                   default="active")
    p.set_defaults(func=cmd_bench)

    return parser


def _fail(exc: Exception, code: int) -> int:
    payload = {"error": str(exc), "error_type": type(exc).__name__, "exit_code": code}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except InvariantError as exc:
        return _fail(exc, 3)
    except (ConfigError, OsmParseError, FileNotFoundError, NotADirectoryError,
            IsADirectoryError, KeyError, ValueError) as exc:
        return _fail(exc, 2)


if __name__ == "__main__":
    sys.exit(main())
