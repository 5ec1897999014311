"""Scene model, deterministic synthetic generator and scene files."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import textio
from .errors import CrosswalkError, GenerationFailed, ParseError, SchemaVersionMismatch
from .geometry import (
    GridSpec,
    Point2,
    Polygon,
    Polyline,
    clip_lines,
    convex_hull,
    convex_overlap,
    corridor_polygon,
    crosswalk_polygon,
    fold_angle,
    polyline_exit,
)

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RoadCenterline:
    id: str
    centerline: Polyline
    width: float

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"road {self.id}: width must be positive")

    @property
    def half_width(self) -> float:
        return self.width / 2


@dataclass(frozen=True)
class CrosswalkGT:
    road_id: str
    s1: float
    s2: float
    beta: float
    polygon: Polygon


@dataclass(frozen=True)
class Scene:
    grid: GridSpec
    intersection: Polygon
    roads: tuple[RoadCenterline, ...]
    crosswalks: tuple[CrosswalkGT, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "roads", tuple(self.roads))
        object.__setattr__(self, "crosswalks", tuple(self.crosswalks))
        ids = [r.id for r in self.roads]
        if len(set(ids)) != len(ids):
            raise ValueError("road ids must be unique")
        seen = set()
        for cw in self.crosswalks:
            if cw.road_id not in ids:
                raise ValueError(f"crosswalk references unknown road {cw.road_id!r}")
            if cw.road_id in seen:
                raise ValueError(f"more than one crosswalk on road {cw.road_id!r}")
            seen.add(cw.road_id)

    def road(self, road_id: str) -> RoadCenterline:
        for r in self.roads:
            if r.id == road_id:
                return r
        raise KeyError(road_id)

    def crosswalk_for(self, road_id: str) -> CrosswalkGT | None:
        for cw in self.crosswalks:
            if cw.road_id == road_id:
                return cw
        return None

    def without_gt(self) -> "Scene":
        return Scene(self.grid, self.intersection, self.roads, ())


# --------------------------------------------------------------------------
# generator


@dataclass(frozen=True)
class GeneratorConfig:
    n_roads: tuple[int, int] = (3, 6)
    road_width: tuple[float, float] = (5.0, 9.0)
    crosswalk_width: tuple[float, float] = (2.0, 5.0)
    crosswalk_offset: tuple[float, float] = (0.5, 3.0)
    angle_jitter: float = 10.0  # degrees, max deviation of beta from perpendicular
    p_no_crosswalk: float = 0.1
    seed: int = 0
    resolution: float = 0.04
    approach_length: float = 17.0  # centerline length beyond the intersection exit
    min_separation: float = 25.0  # degrees between road directions
    margin: float = 1.0

    def __post_init__(self):
        lo, hi = self.n_roads
        if not 3 <= lo <= hi <= 8:
            raise ValueError(f"n_roads must be a range within 3..8, got {self.n_roads}")
        for name in ("road_width", "crosswalk_width", "crosswalk_offset"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ValueError(f"{name} must be a nonempty positive range, got {(lo, hi)}")
        if self.angle_jitter < 0:
            raise ValueError("angle_jitter must be >= 0")
        if not 0 <= self.p_no_crosswalk <= 1:
            raise ValueError("p_no_crosswalk must be in [0, 1]")
        if not self.resolution > 0 or not self.approach_length > 0:
            raise ValueError("resolution and approach_length must be positive")


def scene_rng(seed: int, index: int) -> np.random.Generator:
    """Independent RNG stream for scene ``index`` of a dataset seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed & (2**64 - 1), spawn_key=(index,)))


def _stub_radii(angles, widths):
    n = len(angles)
    radii = np.zeros(n)
    for i in range(n):
        for j in ((i - 1) % n, (i + 1) % n):
            gap = abs(angles[j] - angles[i]) % (2 * math.pi)
            gap = min(gap, 2 * math.pi - gap)
            need = (widths[i] / 2 + widths[j] / 2) / math.sin(min(gap, math.pi / 2))
            radii[i] = max(radii[i], need)
    return 1.1 * radii + 0.5


def _clear_start(cl: Polyline, s_from: float, beta: float, half_width: float, hull: Polygon) -> float:
    """Smallest arclength (1 cm steps) where a boundary segment no longer enters ``hull``."""
    d = (math.cos(beta), math.sin(beta))
    s = s_from + np.arange(0, 2000) * 0.01
    s = s[s < cl.length]
    inter = clip_lines(cl.point_at(s), d, hull)
    lo = np.where(np.isfinite(inter[:, 0]), inter[:, 0], np.inf)
    hi = np.where(np.isfinite(inter[:, 1]), inter[:, 1], -np.inf)
    overlap = np.minimum(hi, half_width) - np.maximum(lo, -half_width) > 1e-9
    free = np.flatnonzero(~overlap)
    if free.size == 0:
        raise GenerationFailed("no room for a crosswalk outside the intersection")
    return float(s[free[0]])


def _attempt(cfg: GeneratorConfig, rng: np.random.Generator) -> Scene | None:
    n = int(rng.integers(cfg.n_roads[0], cfg.n_roads[1] + 1))
    angles = np.sort(rng.uniform(0, 2 * math.pi, n))
    gaps = np.diff(np.concatenate([angles, [angles[0] + 2 * math.pi]]))
    if gaps.min() < math.radians(cfg.min_separation):
        return None
    widths = rng.uniform(*cfg.road_width, n)
    radii = _stub_radii(angles, widths)

    corners = []
    for th, w, r in zip(angles, widths, radii):
        u = np.array([math.cos(th), math.sin(th)])
        nrm = np.array([-u[1], u[0]])
        corners += [r * u + w / 2 * nrm, r * u - w / 2 * nrm]
    ring = widths.max() / 2
    corners += [ring * np.array([math.cos(k * math.pi / 4), math.sin(k * math.pi / 4)]) for k in range(8)]
    hull = convex_hull(np.array(corners))

    roads = []
    windows = []
    for k, (th, w) in enumerate(zip(angles, widths)):
        u = np.array([math.cos(th), math.sin(th)])
        ray = Polyline((Point2(0.0, 0.0), Point2(*(u * (radii[k] * 3 + 100)))))
        s_exit = polyline_exit(ray, hull)
        cl = Polyline((Point2(0.0, 0.0), Point2(*(u * (s_exit + cfg.approach_length)))))
        road = RoadCenterline(f"r{k}", cl, float(w))
        roads.append(road)
        windows.append((s_exit, corridor_polygon(cl, w / 2, s_exit, cl.length)))

    crosswalks = []
    jitter = math.radians(cfg.angle_jitter)
    for road, (s_exit, _) in zip(roads, windows):
        if rng.random() < cfg.p_no_crosswalk:
            continue
        th = road.centerline.chord_angle()
        beta = fold_angle(th + math.pi / 2 + rng.uniform(-jitter, jitter))
        offset = rng.uniform(*cfg.crosswalk_offset)
        width = rng.uniform(*cfg.crosswalk_width)
        s_clear = _clear_start(road.centerline, s_exit, beta, road.half_width, hull)
        s1 = s_clear + offset
        s2 = s1 + width
        if s2 > road.centerline.length - 1.0:
            return None
        poly = crosswalk_polygon(road.centerline, s1, s2, beta, road.half_width)
        if convex_overlap(poly, hull):
            return None
        crosswalks.append(CrosswalkGT(road.id, s1, s2, beta, poly))

    for i, cw in enumerate(crosswalks):
        for other in crosswalks[i + 1 :]:
            if convex_overlap(cw.polygon, other.polygon):
                return None
        for road, (_, window) in zip(roads, windows):
            if road.id != cw.road_id and convex_overlap(cw.polygon, window):
                return None

    pts = [hull.array] + [w.array for _, w in windows]
    pts = np.concatenate(pts)
    res = cfg.resolution
    lo = pts.min(axis=0) - cfg.margin
    hi = pts.max(axis=0) + cfg.margin
    origin = np.floor(lo / res) * res
    size = np.ceil((hi - origin) / res).astype(int) + 1
    grid = GridSpec(Point2(*origin), res, int(size[0]), int(size[1]))
    return Scene(grid, hull, tuple(roads), tuple(crosswalks))


def generate_scene(cfg: GeneratorConfig, index: int) -> Scene:
    """Scene ``index`` of the dataset described by ``cfg``; a pure function of both."""
    rng = scene_rng(cfg.seed, index)
    for _ in range(100):
        scene = _attempt(cfg, rng)
        if scene is not None:
            return scene
    raise GenerationFailed(f"no valid scene for index {index} after 100 attempts")


# --------------------------------------------------------------------------
# files


def _pts(poly_or_line) -> list[list[float]]:
    return [[float(x), float(y)] for x, y in poly_or_line.vertices]


def scene_to_doc(scene: Scene) -> dict:
    g = scene.grid
    return {
        "version": SCHEMA_VERSION,
        "grid": {
            "origin_x": g.origin.x,
            "origin_y": g.origin.y,
            "resolution": g.resolution,
            "width_px": g.width_px,
            "height_px": g.height_px,
        },
        "intersection": _pts(scene.intersection),
        "roads": [{"id": r.id, "centerline": _pts(r.centerline), "width": r.width} for r in scene.roads],
        "crosswalks": [
            {"road_id": c.road_id, "s1": c.s1, "s2": c.s2, "beta": c.beta, "polygon": _pts(c.polygon)}
            for c in scene.crosswalks
        ],
    }


def _polygon(doc, key, where) -> Polygon:
    try:
        return Polygon(tuple(textio.points(doc, key, where)))
    except CrosswalkError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"{where}.{key}: {exc}") from None


def grid_from_doc(doc, where="grid") -> GridSpec:
    try:
        return GridSpec(
            Point2(textio.number(doc, "origin_x", where), textio.number(doc, "origin_y", where)),
            textio.number(doc, "resolution", where),
            textio.integer(doc, "width_px", where),
            textio.integer(doc, "height_px", where),
        )
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError(f"{where}: {exc}") from None


def check_version(doc, path) -> None:
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be an object")
    version = doc.get("version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"{path}: unsupported version {version!r} (expected {SCHEMA_VERSION})")


def scene_from_doc(doc, path="<scene>") -> Scene:
    check_version(doc, path)
    grid = grid_from_doc(textio.field(doc, "grid", "scene"), "grid")
    intersection = _polygon(doc, "intersection", "scene")
    roads = []
    raw_roads = textio.field(doc, "roads", "scene")
    if not isinstance(raw_roads, list):
        raise ParseError("scene.roads: expected a list")
    for i, r in enumerate(raw_roads):
        where = f"roads[{i}]"
        rid = textio.field(r, "id", where)
        if not isinstance(rid, str):
            raise ParseError(f"{where}.id: expected a string")
        try:
            cl = Polyline(tuple(textio.points(r, "centerline", where)))
            roads.append(RoadCenterline(rid, cl, textio.number(r, "width", where)))
        except ValueError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"{where}: {exc}") from None
    ids = [r.id for r in roads]
    if len(set(ids)) != len(ids):
        raise ParseError("scene.roads: duplicate road id")
    crosswalks = []
    raw_cw = textio.field(doc, "crosswalks", "scene")
    if not isinstance(raw_cw, list):
        raise ParseError("scene.crosswalks: expected a list")
    for i, c in enumerate(raw_cw):
        where = f"crosswalks[{i}]"
        rid = textio.field(c, "road_id", where)
        if rid not in ids:
            raise ParseError(f"{where}.road_id: unknown road {rid!r}")
        if any(cw.road_id == rid for cw in crosswalks):
            raise ParseError(f"{where}.road_id: second crosswalk on road {rid!r}")
        crosswalks.append(
            CrosswalkGT(
                rid,
                textio.number(c, "s1", where),
                textio.number(c, "s2", where),
                textio.number(c, "beta", where),
                _polygon(c, "polygon", where),
            )
        )
    return Scene(grid, intersection, tuple(roads), tuple(crosswalks))


def save_scene(scene: Scene, path) -> None:
    textio.write_document(path, scene_to_doc(scene))


def load_scene(path) -> Scene:
    return scene_from_doc(textio.read_document(path), str(path))
