"""Planar primitives, raster/world transforms, rasterization and slice sampling.

Conventions used throughout the package:

* world coordinates are meters; ``x`` maps to raster columns, ``y`` to rows;
* a ``GridSpec`` origin is the world position of the *center* of pixel (0, 0);
* undirected angles are folded into ``[0, pi)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.spatial import ConvexHull

from .errors import DegeneratePolygon, InvalidInterval, OutOfBounds


class Point2(NamedTuple):
    x: float
    y: float


def fold_angle(a):
    """Fold an angle (scalar or array) into ``[0, pi)``."""
    out = np.mod(a, np.pi)
    # np.mod can return exactly pi for tiny negative inputs
    out = np.where(out >= np.pi, 0.0, out)
    if np.ndim(out) == 0:
        return float(out)
    return out


def fold_vector_angle(vx, vy):
    """Undirected angle in ``[0, pi)`` of the vector ``(vx, vy)``.

    The vector is flipped into the upper half plane before ``atan2`` so that
    ``v`` and ``-v`` map to bit-identical angles.
    """
    vx = np.asarray(vx, dtype=np.float64)
    vy = np.asarray(vy, dtype=np.float64)
    flip = (vy < 0) | ((vy == 0) & (vx < 0))
    ax = np.where(flip, -vx, vx)
    ay = np.where(flip, -vy, vy)
    ang = np.arctan2(ay, ax)
    ang = np.where(ang >= np.pi, 0.0, ang)
    if ang.ndim == 0:
        return float(ang)
    return ang


def angle_difference(a, b):
    """Signed difference between undirected angles, wrapped to (-pi/2, pi/2]."""
    d = np.mod(np.asarray(a, dtype=np.float64) - b, np.pi)
    d = np.where(d > np.pi / 2, d - np.pi, d)
    if d.ndim == 0:
        return float(d)
    return d


# --------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class GridSpec:
    origin: Point2
    resolution: float = 0.04
    width_px: int = 1
    height_px: int = 1

    def __post_init__(self):
        object.__setattr__(self, "origin", Point2(float(self.origin[0]), float(self.origin[1])))
        if not self.resolution > 0:
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        if self.width_px < 1 or self.height_px < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.width_px}x{self.height_px}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height_px, self.width_px)

    def pixel_indices(self, xs, ys):
        """Vectorized nearest-pixel lookup; returns ``(rows, cols, inside)``."""
        cols = np.floor((np.asarray(xs) - self.origin.x) / self.resolution + 0.5).astype(np.int64)
        rows = np.floor((np.asarray(ys) - self.origin.y) / self.resolution + 0.5).astype(np.int64)
        inside = (cols >= 0) & (cols < self.width_px) & (rows >= 0) & (rows < self.height_px)
        return rows, cols, inside

    def world_to_pixel(self, p: Point2) -> tuple[int, int]:
        rows, cols, inside = self.pixel_indices(p[0], p[1])
        if not inside:
            raise OutOfBounds(f"point ({p[0]:.6g}, {p[1]:.6g}) lies outside the grid")
        return int(rows), int(cols)

    def pixel_to_world(self, row: int, col: int) -> Point2:
        return Point2(self.origin.x + col * self.resolution, self.origin.y + row * self.resolution)

    def pixel_centers(self, r0=0, r1=None, c0=0, c1=None):
        """World coordinates of pixel centers over ``[r0, r1) x [c0, c1)``."""
        r1 = self.height_px if r1 is None else r1
        c1 = self.width_px if c1 is None else c1
        xs = self.origin.x + np.arange(c0, c1) * self.resolution
        ys = self.origin.y + np.arange(r0, r1) * self.resolution
        return np.meshgrid(xs, ys)

    def pixel_window(self, xmin, ymin, xmax, ymax):
        """Row/col index ranges (half-open, clipped) whose centers may fall in a box."""
        res = self.resolution
        c0 = max(0, math.floor((xmin - self.origin.x) / res))
        c1 = min(self.width_px, math.ceil((xmax - self.origin.x) / res) + 1)
        r0 = max(0, math.floor((ymin - self.origin.y) / res))
        r1 = min(self.height_px, math.ceil((ymax - self.origin.y) / res) + 1)
        return r0, max(r0, r1), c0, max(c0, c1)


# --------------------------------------------------------------------------
# polylines and polygons


@dataclass(frozen=True)
class Polyline:
    vertices: tuple[Point2, ...]
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        verts = tuple(Point2(float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 2:
            raise ValueError("polyline needs at least 2 vertices")
        arr = np.array(verts, dtype=np.float64)
        seg = np.hypot(*np.diff(arr, axis=0).T)
        if np.any(seg <= 0):
            raise ValueError("consecutive polyline vertices must be distinct")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "_cum", np.concatenate([[0.0], np.cumsum(seg)]))

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    @property
    def array(self) -> np.ndarray:
        return np.array(self.vertices, dtype=np.float64)

    def point_at(self, s):
        """Point(s) at arclength ``s``; array input gives an ``(n, 2)`` array."""
        arr = self.array
        x = np.interp(s, self._cum, arr[:, 0])
        y = np.interp(s, self._cum, arr[:, 1])
        if np.ndim(s) == 0:
            return Point2(float(x), float(y))
        return np.stack([x, y], axis=-1)

    def chord_angle(self) -> float:
        """Direction (radians) of the straight line from first to last vertex."""
        (x0, y0), (x1, y1) = self.vertices[0], self.vertices[-1]
        return math.atan2(y1 - y0, x1 - x0)

    def sub(self, s0: float, s1: float) -> "Polyline":
        """Portion of the polyline between arclengths ``s0 < s1``."""
        s0 = max(0.0, s0)
        s1 = min(self.length, s1)
        inner = [Point2(*v) for v, c in zip(self.vertices, self._cum) if s0 < c < s1]
        return Polyline((self.point_at(s0), *inner, self.point_at(s1)))


def signed_area(vertices) -> float:
    v = np.asarray(vertices, dtype=np.float64)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


@dataclass(frozen=True)
class Polygon:
    """Simple polygon, counter-clockwise, implicitly closed."""

    vertices: tuple[Point2, ...]

    def __post_init__(self):
        verts = tuple(Point2(float(x), float(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise DegeneratePolygon("polygon needs at least 3 vertices")
        if not all(math.isfinite(c) for v in verts for c in v):
            raise DegeneratePolygon("polygon has non-finite coordinates")
        if signed_area(verts) <= 0:
            raise DegeneratePolygon("polygon must be counter-clockwise with positive area")
        if not self._is_simple():
            raise DegeneratePolygon("polygon is self-intersecting")

    @classmethod
    def ccw(cls, vertices) -> "Polygon":
        """Build a polygon from vertices in either orientation."""
        verts = [tuple(v) for v in vertices]
        if signed_area(verts) < 0:
            verts = verts[::-1]
        return cls(tuple(verts))

    def _is_simple(self) -> bool:
        v = self.vertices
        n = len(v)
        if n <= 3:
            return True
        for i in range(n):
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue
                if _segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                    return False
        return True

    @property
    def array(self) -> np.ndarray:
        return np.array(self.vertices, dtype=np.float64)

    @property
    def area(self) -> float:
        return signed_area(self.vertices)

    @property
    def perimeter(self) -> float:
        a = self.array
        return float(np.hypot(*(np.roll(a, -1, axis=0) - a).T).sum())

    def edges(self) -> list[tuple[Point2, Point2]]:
        v = self.vertices
        return [(v[i], v[(i + 1) % len(v)]) for i in range(len(v))]

    def bounds(self) -> tuple[float, float, float, float]:
        a = self.array
        return float(a[:, 0].min()), float(a[:, 1].min()), float(a[:, 0].max()), float(a[:, 1].max())

    def centroid(self) -> Point2:
        a = self.array
        x, y = a[:, 0], a[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cr = x * yn - xn * y
        area = cr.sum() / 2
        return Point2(float(((x + xn) * cr).sum() / (6 * area)), float(((y + yn) * cr).sum() / (6 * area)))

    def contains(self, p: Point2) -> bool:
        return bool(points_in_polygon(np.array([p[0]]), np.array([p[1]]), self)[0])


def convex_hull(points) -> Polygon:
    pts = np.asarray(points, dtype=np.float64)
    hull = ConvexHull(pts)
    # scipy returns 2-D hull vertices in counter-clockwise order
    return Polygon(tuple(Point2(*pts[i]) for i in hull.vertices))


def convex_overlap(a: Polygon, b: Polygon, tol: float = 1e-9) -> bool:
    """True when two convex polygons share interior area (touching is not overlap)."""
    pa, pb = a.array, b.array
    for poly in (pa, pb):
        edges = np.roll(poly, -1, axis=0) - poly
        normals = np.stack([-edges[:, 1], edges[:, 0]], axis=1)
        for n in normals:
            ra, rb = pa @ n, pb @ n
            scale = np.linalg.norm(n)
            if ra.max() <= rb.min() + tol * scale or rb.max() <= ra.min() + tol * scale:
                return False
    return True


def points_in_polygon(xs, ys, poly: Polygon, tol: float = 1e-9) -> np.ndarray:
    """Boundary-inclusive point-in-polygon test (crossing number + on-edge check)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    inside = np.zeros(xs.shape, dtype=bool)
    on_edge = np.zeros(xs.shape, dtype=bool)
    for (x1, y1), (x2, y2) in poly.edges():
        ex, ey = x2 - x1, y2 - y1
        crosses = (y1 > ys) != (y2 > ys)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (ys - y1) * ex / (ey if ey != 0 else np.inf)
        inside ^= crosses & (xs < xint)
        elen = math.hypot(ex, ey)
        cross = ex * (ys - y1) - ey * (xs - x1)
        dot = ex * (xs - x1) + ey * (ys - y1)
        on_edge |= (np.abs(cross) <= tol * elen) & (dot >= -tol * elen) & (dot <= elen * elen + tol * elen)
    return inside | on_edge


def rasterize_polygon(poly: Polygon, g: GridSpec) -> np.ndarray:
    """Boolean ``(height, width)`` mask of pixels whose centers lie in ``poly``."""
    if poly.area < g.resolution**2:
        raise DegeneratePolygon(f"polygon area {poly.area:.3g} m^2 is below one pixel")
    mask = np.zeros(g.shape, dtype=bool)
    r0, r1, c0, c1 = g.pixel_window(*poly.bounds())
    if r1 <= r0 or c1 <= c0:
        return mask
    xs, ys = g.pixel_centers(r0, r1, c0, c1)
    mask[r0:r1, c0:c1] = points_in_polygon(xs, ys, poly)
    return mask


def segment_distance(xs, ys, a, b) -> np.ndarray:
    """Euclidean distance from points to the closed segment ``a``-``b``."""
    ax, ay = a
    ex, ey = b[0] - ax, b[1] - ay
    l2 = ex * ex + ey * ey
    dx, dy = xs - ax, ys - ay
    if l2 == 0:
        return np.hypot(dx, dy)
    t = np.clip((dx * ex + dy * ey) / l2, 0.0, 1.0)
    return np.hypot(dx - t * ex, dy - t * ey)


def brute_force_distance_field(segments: Sequence[tuple[Point2, Point2]], g: GridSpec) -> np.ndarray:
    """Exact distance (meters) from every pixel center to the nearest segment.

    O(pixels x segments); meant as a test oracle.
    """
    if not segments:
        raise ValueError("need at least one segment")
    xs, ys = g.pixel_centers()
    out = np.full(g.shape, np.inf)
    for a, b in segments:
        np.minimum(out, segment_distance(xs, ys, a, b), out=out)
    return out


# --------------------------------------------------------------------------
# slices


def clip_lines(centers: np.ndarray, direction, poly: Polygon) -> np.ndarray:
    """Intersect lines ``c + u * direction`` with a polygon.

    Returns an ``(n, 2m)`` array (``m >= 1``) of sorted crossing parameters padded with
    ``inf``; consecutive pairs ``[u0, u1], [u2, u3], ...`` are the inside
    intervals of each line.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    dx, dy = direction
    a = poly.array
    e = np.roll(a, -1, axis=0) - a
    denom = dx * e[:, 1] - dy * e[:, 0]
    usable = np.abs(denom) > 1e-12 * np.hypot(e[:, 0], e[:, 1])
    a, e, denom = a[usable], e[usable], denom[usable]
    wx = a[None, :, 0] - centers[:, 0, None]
    wy = a[None, :, 1] - centers[:, 1, None]
    u = (wx * e[:, 1] - wy * e[:, 0]) / denom
    v = (wx * dy - wy * dx) / denom
    u = np.where((v >= 0) & (v < 1), u, np.inf)
    u.sort(axis=1)
    count = np.isfinite(u).sum(axis=1)
    # a line grazing a vertex can yield an odd count; drop the unpaired crossing
    odd = count % 2 == 1
    if odd.any():
        u[odd, count[odd] - 1] = np.inf
    m = int(np.isfinite(u).sum(axis=1).max(initial=0))
    m = max(2, m + m % 2)  # always at least one (possibly empty) interval column pair
    if u.shape[1] < m:
        u = np.concatenate([u, np.full((u.shape[0], m - u.shape[1]), np.inf)], axis=1)
    return u[:, :m]


def slice_offsets(intervals: np.ndarray, step: float):
    """Integer sample indices ``k`` (offsets ``k * step``) inside clipped intervals.

    Returns ``(ks, mask)`` with ``ks`` a shared 1-D index range and ``mask`` an
    ``(n, len(ks))`` boolean selecting the samples of each line.
    """
    n = intervals.shape[0]
    lo = intervals[:, 0::2]
    hi = intervals[:, 1::2]
    finite = np.isfinite(lo) & np.isfinite(hi)
    kmin = np.where(finite, np.ceil(np.where(finite, lo, 0) / step - 1e-9), 0).astype(np.int64)
    kmax = np.where(finite, np.floor(np.where(finite, hi, 0) / step + 1e-9), -1).astype(np.int64)
    if not finite.any():
        return np.zeros(0, dtype=np.int64), np.zeros((n, 0), dtype=bool)
    k_lo = int(kmin[finite].min())
    k_hi = int(kmax[finite].max())
    ks = np.arange(k_lo, max(k_lo, k_hi + 1), dtype=np.int64)
    mask = np.zeros((n, ks.size), dtype=bool)
    for m in range(lo.shape[1]):
        mask |= (ks[None, :] >= kmin[:, m, None]) & (ks[None, :] <= kmax[:, m, None])
    return ks, mask


def sample_slice(center: Point2, angle: float, corridor: Polygon, g: GridSpec, step: float) -> list[Point2]:
    """Evenly spaced samples on the line through ``center`` at ``angle``, clipped to ``corridor``.

    Samples sit at ``center + k * step * (cos angle, sin angle)`` for integer
    ``k``; samples falling outside the grid are dropped.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    d = (math.cos(angle), math.sin(angle))
    intervals = clip_lines(np.array([center], dtype=np.float64), d, corridor)
    ks, mask = slice_offsets(intervals, step)
    ks = ks[mask[0]]
    xs = center[0] + ks * step * d[0]
    ys = center[1] + ks * step * d[1]
    _, _, inside = g.pixel_indices(xs, ys)
    return [Point2(float(x), float(y)) for x, y in zip(xs[inside], ys[inside])]


# --------------------------------------------------------------------------
# crosswalk construction


def crosswalk_boundaries(cl: Polyline, s1: float, s2: float, beta: float, half_width: float):
    """The two crossing boundary segments through ``cl(s1)`` and ``cl(s2)``."""
    d = np.array([math.cos(beta), math.sin(beta)]) * half_width
    out = []
    for s in (s1, s2):
        p = np.asarray(cl.point_at(s))
        out.append((Point2(*(p - d)), Point2(*(p + d))))
    return out


def crosswalk_polygon(cl: Polyline, s1: float, s2: float, beta: float, half_width: float) -> Polygon:
    if not s1 < s2:
        raise InvalidInterval(f"need s1 < s2, got s1={s1}, s2={s2}")
    if s1 < 0 or s2 > cl.length + 1e-9:
        raise InvalidInterval(f"[{s1}, {s2}] outside centerline length {cl.length}")
    if not half_width > 0:
        raise ValueError("half_width must be positive")
    (a1, b1), (a2, b2) = crosswalk_boundaries(cl, s1, s2, beta, half_width)
    return Polygon.ccw([a1, b1, b2, a2])


def corridor_polygon(cl: Polyline, half_width: float, s_from: float = 0.0, s_to: float | None = None) -> Polygon:
    """Strip of ``+-half_width`` around the centerline between two arclengths."""
    s_to = cl.length if s_to is None else s_to
    part = cl.sub(s_from, s_to)
    v = part.array
    seg = np.diff(v, axis=0)
    seg /= np.hypot(seg[:, 0], seg[:, 1])[:, None]
    normals = np.stack([-seg[:, 1], seg[:, 0]], axis=1)
    # miter offsets at interior vertices
    vn = np.empty_like(v)
    vn[0], vn[-1] = normals[0], normals[-1]
    for i in range(1, len(v) - 1):
        m = normals[i - 1] + normals[i]
        m /= np.linalg.norm(m)
        vn[i] = m / max(float(m @ normals[i]), 0.2)
    left = v + half_width * vn
    right = v - half_width * vn
    return Polygon.ccw(np.concatenate([left, right[::-1]]))


def polyline_exit(cl: Polyline, poly: Polygon) -> float:
    """Arclength where the centerline first leaves ``poly`` (0 if it starts outside)."""
    if not poly.contains(cl.vertices[0]):
        return 0.0
    v = cl.array
    best = math.inf
    for i in range(len(v) - 1):
        p, q = v[i], v[i + 1]
        d = q - p
        seglen = float(np.hypot(*d))
        inter = clip_lines(p[None, :], d / seglen, poly)[0]
        for u in inter[np.isfinite(inter)]:
            if 0 < u <= seglen:
                best = min(best, float(cl._cum[i] + u))
        if best < math.inf:
            break
    return cl.length if best == math.inf else best
