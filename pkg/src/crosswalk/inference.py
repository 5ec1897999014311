"""Structured inference: draw one crosswalk per road centerline.

For every road a set of boundary-angle hypotheses is built from the angle
map; for each hypothesis the segmentation and inverse-DT maps are collapsed
into per-position slice statistics along the centerline (a 1-D integral
accumulator at that angle), and the boundary pair ``(s1, s2)`` maximizing

    E = lambda_i * (prefix_seg[s2] - prefix_seg[s1])
        + (1 - lambda_i) * (slice_dt[s2] + slice_dt[s1])

is found exactly in linear time.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import textio
from .errors import EmptyCorridor, GridMismatch, ParseError, SliceDegenerate, WindowTooShort
from .featuremaps import DT_PEAK, FeatureMaps
from .geometry import (
    Polygon,
    angle_difference,
    clip_lines,
    corridor_polygon,
    crosswalk_polygon,
    fold_angle,
    fold_vector_angle,
    polyline_exit,
    rasterize_polygon,
    slice_offsets,
)
from .scene import RoadCenterline, Scene, check_version

POLICIES = ("full", "no_offsets", "no_centerline", "perpendicular_only")


@dataclass(frozen=True)
class EnergyConfig:
    lambda_i: float = 0.2  # calibrated, see scripts/calibrate_lambda.py
    min_width: float = 1.0
    max_width: float = 10.0
    position_step: float = 0.04
    slice_step: float = 0.04
    search_window: float = 15.0
    presence_threshold: float = 0.5
    angle_offsets: tuple[float, ...] = (-5.0, -2.0, 0.0, 2.0, 5.0)  # degrees around the mode

    def __post_init__(self):
        object.__setattr__(self, "angle_offsets", tuple(float(a) for a in self.angle_offsets))
        if not 0 <= self.lambda_i <= 1:
            raise ValueError("lambda_i must be in [0, 1]")
        if not 0 < self.min_width < self.max_width:
            raise ValueError("need 0 < min_width < max_width")
        if not (self.position_step > 0 and self.slice_step > 0 and self.search_window > 0):
            raise ValueError("steps and search_window must be positive")


@dataclass(frozen=True, eq=False)
class Accumulator1D:
    positions: np.ndarray  # arclength of each slice, uniform step
    slice_seg: np.ndarray  # mean signed score 2p - 1, in [-1, 1]
    slice_dt: np.ndarray  # mean inverse DT / DT_PEAK, in [0, 1]
    prefix_seg: np.ndarray  # running sum of slice_seg * step
    slice_prob: np.ndarray  # mean raw segmentation probability
    counts: np.ndarray  # samples per slice
    beta: float = 0.0

    @property
    def step(self) -> float:
        if len(self.positions) < 2:
            return 0.0
        return float(self.positions[1] - self.positions[0])

    @classmethod
    def from_slices(cls, positions, slice_seg, slice_dt, slice_prob=None, beta=0.0) -> "Accumulator1D":
        positions = np.asarray(positions, dtype=np.float64)
        slice_seg = np.asarray(slice_seg, dtype=np.float64)
        step = positions[1] - positions[0] if len(positions) > 1 else 0.0
        if slice_prob is None:
            slice_prob = (slice_seg + 1) / 2
        return cls(
            positions,
            slice_seg,
            np.asarray(slice_dt, dtype=np.float64),
            np.cumsum(slice_seg * step),
            np.asarray(slice_prob, dtype=np.float64),
            np.ones(len(positions), dtype=np.int64),
            beta,
        )


@dataclass(frozen=True)
class CrosswalkPrediction:
    road_id: str
    s1: float | None
    s2: float | None
    beta: float | None
    energy: float | None
    polygon: Polygon | None
    present: bool
    mode_angle: float | None = None  # angle-map mode alone, before the candidate search


# --------------------------------------------------------------------------
# angle hypotheses


def extract_angle_mode(maps: FeatureMaps, corridor: Polygon) -> float | None:
    """dt-weighted 1-degree histogram mode of the predicted angles inside ``corridor``."""
    inside = rasterize_polygon(corridor, maps.spec)
    on = inside & (maps.angle_mask > 0) & (maps.dt > 0)
    if not on.any():
        return None
    deg = np.degrees(fold_vector_angle(maps.angle_x[on], maps.angle_y[on]))
    bins = np.clip(np.floor(deg).astype(np.int64), 0, 179)
    hist = np.bincount(bins, weights=maps.dt[on].astype(np.float64), minlength=180)
    if not hist.max() > 0:
        return None
    return math.radians(int(np.argmax(hist)) + 0.5)


def candidate_angles(cl, mode: float | None, cfg: EnergyConfig, policy: str = "full") -> list[float]:
    """Boundary-angle hypotheses, folded and deduplicated at 0.5 degree."""
    if policy not in POLICIES:
        raise ValueError(f"unknown candidate policy {policy!r}")
    perp = fold_angle(cl.chord_angle() + math.pi / 2)
    raw = []
    if policy != "no_centerline":
        raw.append(perp)
    if mode is not None and policy != "perpendicular_only":
        offsets = (0.0,) if policy == "no_offsets" else cfg.angle_offsets
        raw += [fold_angle(mode + math.radians(d)) for d in offsets]
    out: list[float] = []
    tol = math.radians(0.5) + 1e-12
    for a in raw:
        if all(abs(angle_difference(a, b)) > tol for b in out):
            out.append(a)
    return out


# --------------------------------------------------------------------------
# accumulators


def build_accumulator(
    maps: FeatureMaps,
    road: RoadCenterline,
    intersection: Polygon,
    beta: float,
    cfg: EnergyConfig,
    corridor: Polygon | None = None,
    s_exit: float | None = None,
) -> Accumulator1D:
    """Slice statistics at angle ``beta`` for every search position along ``road``."""
    cl = road.centerline
    if abs(angle_difference(beta, cl.chord_angle())) < math.radians(5):
        raise SliceDegenerate(f"road {road.id}: angle {math.degrees(beta):.2f} deg is parallel to the centerline")
    if corridor is None:
        corridor = corridor_polygon(cl, road.half_width)
    if s_exit is None:
        s_exit = polyline_exit(cl, intersection)
    s_end = min(s_exit + cfg.search_window, cl.length)
    n = int(math.floor((s_end - s_exit) / cfg.position_step + 1e-9)) + 1
    positions = s_exit + np.arange(n) * cfg.position_step
    centers = cl.point_at(positions)

    step = cfg.slice_step
    d = (math.cos(beta), math.sin(beta))
    ks, mask = slice_offsets(clip_lines(centers, d, corridor), step)
    xs = centers[:, 0, None] + ks[None, :] * step * d[0]
    ys = centers[:, 1, None] + ks[None, :] * step * d[1]
    g = maps.spec
    rows, cols, inside = g.pixel_indices(xs, ys)
    valid = mask & inside
    counts = valid.sum(axis=1)
    if counts.sum() == 0:
        raise EmptyCorridor(f"road {road.id}: search window has no samples inside the grid")
    rows = np.where(valid, rows, 0)
    cols = np.where(valid, cols, 0)
    seg = np.where(valid, maps.seg[rows, cols], 0.0).astype(np.float64)
    dt = np.where(valid, maps.dt[rows, cols], 0.0).astype(np.float64)
    signed = np.where(valid, 2.0 * seg - 1.0, 0.0)

    nonempty = counts > 0
    denom = np.maximum(counts, 1)
    slice_seg = np.where(nonempty, signed.sum(axis=1) / denom, 0.0)
    slice_prob = np.where(nonempty, seg.sum(axis=1) / denom, 0.0)
    slice_dt = np.where(nonempty, dt.sum(axis=1) / denom / DT_PEAK, 0.0)
    prefix = np.cumsum(slice_seg * cfg.position_step)
    return Accumulator1D(positions, slice_seg, slice_dt, prefix, slice_prob, counts, fold_angle(beta))


# --------------------------------------------------------------------------
# exact maximization


def width_bounds(step: float, cfg: EnergyConfig) -> tuple[int, int]:
    """Allowed index gaps ``j - i`` for the width constraint."""
    return math.ceil(cfg.min_width / step - 1e-9), math.floor(cfg.max_width / step + 1e-9)


def pair_terms(acc: Accumulator1D, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Split the energy into ``E(i, j) = outer[j] + inner[i]``."""
    outer = lam * acc.prefix_seg + (1 - lam) * acc.slice_dt
    inner = (1 - lam) * acc.slice_dt - lam * acc.prefix_seg
    return outer, inner


def maximize_indices(acc: Accumulator1D, cfg: EnergyConfig) -> tuple[int, int, float]:
    """Exact argmax ``(i, j, energy)``; ties go to the smallest ``i`` then smallest ``j``.

    A sliding-window maximum of ``inner`` gives the best energy for every
    ``j`` in O(n).  Two ``inner`` values one ulp apart can round to the same
    energy, so ties are settled on the rounded energies themselves: only the
    ``j`` reaching the global maximum are rescanned for their smallest ``i``.
    """
    n = len(acc.positions)
    if n < 2:
        raise WindowTooShort("accumulator needs at least 2 positions")
    kmin, kmax = width_bounds(acc.step, cfg)
    kmin = max(kmin, 1)
    if n - 1 < kmin:
        raise WindowTooShort(f"search window spans {acc.positions[-1] - acc.positions[0]:.3f} m < min_width")
    outer, inner = (a.tolist() for a in pair_terms(acc, cfg.lambda_i))

    window: deque[int] = deque()  # candidate i's with inner[] non-increasing
    best_per_j = []
    for j in range(kmin, n):
        i_new = j - kmin
        while window and inner[window[-1]] < inner[i_new]:
            window.pop()
        window.append(i_new)
        while window[0] < j - kmax:
            window.popleft()
        best_per_j.append(outer[j] + inner[window[0]])
    best_e = max(best_per_j)

    best_i, best_j = n, n
    for j in range(kmin, n):
        if best_per_j[j - kmin] != best_e:
            continue
        start = max(0, j - kmax)
        if start >= best_i:
            break  # later windows cannot reach a smaller i
        o = outer[j]
        for i in range(start, min(j - kmin, best_i - 1) + 1):
            if o + inner[i] == best_e:
                best_i, best_j = i, j
                break
    return best_i, best_j, best_e


def maximize_energy(acc: Accumulator1D, cfg: EnergyConfig) -> tuple[float, float, float]:
    i, j, e = maximize_indices(acc, cfg)
    return float(acc.positions[i]), float(acc.positions[j]), e


# --------------------------------------------------------------------------
# scene inference


@dataclass(frozen=True, eq=False)
class RoadHypotheses:
    """Everything about one road that does not depend on ``lambda_i``."""

    road: RoadCenterline
    mode: float | None
    accumulators: tuple[Accumulator1D, ...]  # in candidate order, failed candidates dropped


def prepare_road(
    maps: FeatureMaps, road: RoadCenterline, intersection: Polygon, cfg: EnergyConfig, policy: str = "full"
) -> RoadHypotheses:
    cl = road.centerline
    s_exit = polyline_exit(cl, intersection)
    window = corridor_polygon(cl, road.half_width, s_exit, min(s_exit + cfg.search_window, cl.length))
    mode = extract_angle_mode(maps, window)
    corridor = corridor_polygon(cl, road.half_width)
    accs = []
    for beta in candidate_angles(cl, mode, cfg, policy):
        try:
            accs.append(build_accumulator(maps, road, intersection, beta, cfg, corridor=corridor, s_exit=s_exit))
        except (SliceDegenerate, EmptyCorridor):
            continue
    return RoadHypotheses(road, mode, tuple(accs))


def select_crosswalk(hyp: RoadHypotheses, cfg: EnergyConfig) -> CrosswalkPrediction:
    """Best boundary pair over all angle hypotheses (ties keep the earlier candidate)."""
    road = hyp.road
    best = None
    for acc in hyp.accumulators:
        try:
            i, j, e = maximize_indices(acc, cfg)
        except WindowTooShort:
            continue
        if best is None or e > best[0]:
            best = (e, acc, i, j)
    if best is None:
        return CrosswalkPrediction(road.id, None, None, None, None, None, False, hyp.mode)
    e, acc, i, j = best
    s1, s2 = float(acc.positions[i]), float(acc.positions[j])
    present = bool(np.mean(acc.slice_prob[i : j + 1]) >= cfg.presence_threshold)
    polygon = crosswalk_polygon(road.centerline, s1, s2, acc.beta, road.half_width)
    return CrosswalkPrediction(road.id, s1, s2, acc.beta, e, polygon, present, hyp.mode)


def infer_road(
    maps: FeatureMaps, road: RoadCenterline, intersection: Polygon, cfg: EnergyConfig, policy: str = "full"
) -> CrosswalkPrediction:
    return select_crosswalk(prepare_road(maps, road, intersection, cfg, policy), cfg)


def check_grid(scene: Scene, maps: FeatureMaps) -> None:
    if maps.spec != scene.grid:
        raise GridMismatch(
            f"feature maps are {maps.spec.width_px}x{maps.spec.height_px}, "
            f"scene grid is {scene.grid.width_px}x{scene.grid.height_px}"
        )


def infer_scene(scene: Scene, maps: FeatureMaps, cfg: EnergyConfig = EnergyConfig(), policy: str = "full"):
    """One prediction per road, in road order. Ground truth in ``scene`` is ignored."""
    check_grid(scene, maps)
    return [infer_road(maps, road, scene.intersection, cfg, policy) for road in scene.roads]


# --------------------------------------------------------------------------
# prediction files


def predictions_to_doc(preds) -> dict:
    items = []
    for p in preds:
        items.append(
            {
                "road_id": p.road_id,
                "s1": p.s1,
                "s2": p.s2,
                "beta": p.beta,
                "polygon": None if p.polygon is None else [[v.x, v.y] for v in p.polygon.vertices],
                "energy": p.energy,
                "present": p.present,
                "mode_angle": p.mode_angle,
            }
        )
    return {"version": 1, "predictions": items}


def save_predictions(preds, path) -> None:
    textio.write_document(path, predictions_to_doc(preds))


def load_predictions(path) -> list[CrosswalkPrediction]:
    doc = textio.read_document(path)
    check_version(doc, path)
    raw = textio.field(doc, "predictions", "document")
    if not isinstance(raw, list):
        raise ParseError(f"{path}: predictions must be a list")
    out = []
    for k, item in enumerate(raw):
        where = f"predictions[{k}]"

        def opt(key):
            return None if textio.field(item, key, where) is None else textio.number(item, key, where)

        present = textio.field(item, "present", where)
        if not isinstance(present, bool):
            raise ParseError(f"{where}.present: expected true/false")
        poly = None
        if textio.field(item, "polygon", where) is not None:
            poly = Polygon(tuple(textio.points(item, "polygon", where)))
        mode = item.get("mode_angle")
        out.append(
            CrosswalkPrediction(
                str(textio.field(item, "road_id", where)),
                opt("s1"),
                opt("s2"),
                opt("beta"),
                opt("energy"),
                poly,
                present,
                None if mode is None else float(mode),
            )
        )
    return out
