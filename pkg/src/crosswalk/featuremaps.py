"""Feature maps: oracle rendering from ground truth, corruption models, grid files."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .crc64 import crc64
from .errors import BadMagic, ChecksumMismatch, GridMismatch, IoError, ParseError, TruncatedFile
from .geometry import GridSpec, crosswalk_boundaries, fold_angle, fold_vector_angle, rasterize_polygon, segment_distance
from .scene import Scene

DT_PEAK = 30.0  # inverse distance transform threshold, pixels
ANGLE_RADIUS = 15.0  # angle channels live on a 30 px diameter band around boundaries
CHANNELS = ("seg", "dt", "angle_x", "angle_y", "angle_mask")


@dataclass(frozen=True, eq=False)
class FeatureMaps:
    """The three predicted maps (angle as two channels) plus the angle support mask.

    All channels are ``(height, width)`` float32 arrays, row ``r`` / column ``c``
    being the pixel centered at ``spec.pixel_to_world(r, c)``.
    """

    spec: GridSpec
    seg: np.ndarray
    dt: np.ndarray
    angle_x: np.ndarray
    angle_y: np.ndarray
    angle_mask: np.ndarray

    def __post_init__(self):
        for name in CHANNELS:
            arr = np.asarray(getattr(self, name), dtype=np.float32)
            if arr.shape != self.spec.shape:
                raise GridMismatch(f"{name} has shape {arr.shape}, grid is {self.spec.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def stack(self) -> np.ndarray:
        return np.stack([getattr(self, c) for c in CHANNELS])

    @classmethod
    def from_stack(cls, spec: GridSpec, arr: np.ndarray) -> "FeatureMaps":
        if arr.shape[0] != len(CHANNELS):
            raise GridMismatch(f"expected {len(CHANNELS)} channels, got {arr.shape[0]}")
        return cls(spec, *[arr[i] for i in range(len(CHANNELS))])

    def replace(self, **channels) -> "FeatureMaps":
        return replace(self, **channels)

    def equals(self, other: "FeatureMaps") -> bool:
        """Bit-exact equality of grid and every channel."""
        return self.spec == other.spec and all(
            np.array_equal(getattr(self, c).view(np.uint32), getattr(other, c).view(np.uint32)) for c in CHANNELS
        )


def render_oracle(scene: Scene) -> FeatureMaps:
    """Render exact maps from the scene's ground-truth crosswalks."""
    g = scene.grid
    res = g.resolution
    seg = np.zeros(g.shape, dtype=bool)
    dist = np.full(g.shape, np.inf)
    beta_map = np.zeros(g.shape)
    reach = (DT_PEAK + 1) * res
    for cw in sorted(scene.crosswalks, key=lambda c: c.road_id):
        road = scene.road(cw.road_id)
        seg |= rasterize_polygon(cw.polygon, g)
        for a, b in crosswalk_boundaries(road.centerline, cw.s1, cw.s2, cw.beta, road.half_width):
            r0, r1, c0, c1 = g.pixel_window(
                min(a.x, b.x) - reach, min(a.y, b.y) - reach, max(a.x, b.x) + reach, max(a.y, b.y) + reach
            )
            if r1 <= r0 or c1 <= c0:
                continue
            xs, ys = g.pixel_centers(r0, r1, c0, c1)
            d = segment_distance(xs, ys, a, b) / res
            win = dist[r0:r1, c0:c1]
            closer = d < win  # strict: earlier (lower) road id wins ties
            win[closer] = d[closer]
            beta_map[r0:r1, c0:c1][closer] = fold_angle(cw.beta)
    dt = np.maximum(0.0, DT_PEAK - dist)
    mask = dist <= ANGLE_RADIUS
    ax = np.where(mask, np.cos(beta_map), 0.0)
    ay = np.where(mask, np.sin(beta_map), 0.0)
    return FeatureMaps(g, seg, dt, ax, ay, mask)


# --------------------------------------------------------------------------
# corruption


@dataclass(frozen=True)
class CorruptionConfig:
    blur_sigma: float = 0.0  # pixels
    noise_sigma: float = 0.0  # fraction of each channel's range
    hole_rate: float = 0.0  # fraction of the grid area
    hole_size: tuple[int, int] = (20, 80)  # rectangle side range, pixels
    erosion: float = 0.0  # pixels, applied to the segmentation foreground
    angle_jitter: float = 0.0  # degrees, per masked pixel
    seed: int = 0
    angle_drift: float = 0.0  # degrees, std of a spatially smooth angle bias
    drift_scale: int = 150  # pixels, correlation length of the drift field

    def __post_init__(self):
        for name in ("blur_sigma", "noise_sigma", "hole_rate", "erosion", "angle_jitter", "angle_drift"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.drift_scale < 1:
            raise ValueError("drift_scale must be >= 1")
        if self.hole_rate > 1:
            raise ValueError("hole_rate must be <= 1")
        lo, hi = self.hole_size
        if not 1 <= lo <= hi:
            raise ValueError(f"hole_size must be a range of positive pixel sizes, got {self.hole_size}")

    @property
    def is_clean(self) -> bool:
        return not (
            self.blur_sigma or self.noise_sigma or self.hole_rate or self.erosion or self.angle_jitter or self.angle_drift
        )


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = max(1, math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur truncated at 3 sigma, edge-replicated borders."""
    k = gaussian_kernel(sigma)
    out = ndimage.correlate1d(np.asarray(img, dtype=np.float64), k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


def _disk(radius: float) -> np.ndarray:
    r = math.floor(radius)
    y, x = np.mgrid[-r : r + 1, -r : r + 1]
    return x * x + y * y <= radius * radius


def _holes(shape, cfg: CorruptionConfig, rng: np.random.Generator) -> np.ndarray:
    h, w = shape
    holes = np.zeros(shape, dtype=bool)
    target = cfg.hole_rate * h * w
    covered = 0
    lo, hi = cfg.hole_size
    for _ in range(1_000_000):
        if covered >= target:
            break
        hh, hw = rng.integers(lo, hi + 1, size=2)
        r = int(rng.integers(0, h))
        c = int(rng.integers(0, w))
        win = holes[r : r + hh, c : c + hw]
        covered += int(win.size - np.count_nonzero(win))
        win[...] = True
    return holes


def _drift_field(shape, cfg: CorruptionConfig, rng: np.random.Generator) -> np.ndarray:
    """Smooth angle offsets (radians): coarse Gaussian lattice, bilinearly upsampled."""
    h, w = shape
    s = cfg.drift_scale
    coarse = rng.normal(0.0, math.radians(cfg.angle_drift), (h // s + 2, w // s + 2))
    rows = np.arange(h) / s
    cols = np.arange(w) / s
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return ndimage.map_coordinates(coarse, [rr, cc], order=1)


def corrupt(maps: FeatureMaps, cfg: CorruptionConfig) -> FeatureMaps:
    """Simulate prediction error; deterministic in ``(maps, cfg)``.

    Applied in order: segmentation erosion, Gaussian blur of seg and dt,
    additive noise (clamped), rectangular holes zeroing every channel, then
    angle perturbation (smooth drift plus per-pixel jitter) on masked pixels.
    """
    if cfg.is_clean:
        return maps
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed & (2**64 - 1)))
    seg = maps.seg.astype(np.float64)
    dt = maps.dt.astype(np.float64)
    ax = maps.angle_x.astype(np.float64)
    ay = maps.angle_y.astype(np.float64)
    am = maps.angle_mask.astype(np.float64)

    if cfg.erosion > 0:
        seg = ndimage.grey_erosion(seg, footprint=_disk(cfg.erosion), mode="nearest")
    if cfg.blur_sigma > 0:
        seg = gaussian_blur(seg, cfg.blur_sigma)
        dt = gaussian_blur(dt, cfg.blur_sigma)
    if cfg.noise_sigma > 0:
        seg = np.clip(seg + rng.normal(0.0, cfg.noise_sigma, seg.shape), 0.0, 1.0)
        dt = np.clip(dt + rng.normal(0.0, cfg.noise_sigma * DT_PEAK, dt.shape), 0.0, DT_PEAK)
    if cfg.hole_rate >= 1:
        seg, dt, ax, ay, am = (np.zeros_like(seg) for _ in range(5))
    elif cfg.hole_rate > 0:
        holes = _holes(seg.shape, cfg, rng)
        for arr in (seg, dt, ax, ay, am):
            arr[holes] = 0.0
    if cfg.angle_jitter > 0 or cfg.angle_drift > 0:
        on = am > 0
        theta = fold_vector_angle(ax[on], ay[on])
        if cfg.angle_drift > 0:
            theta = theta + _drift_field(am.shape, cfg, rng)[on]
        if cfg.angle_jitter > 0:
            theta = theta + rng.normal(0.0, math.radians(cfg.angle_jitter), theta.shape)
        theta = fold_angle(theta)
        ax[on] = np.cos(theta)
        ay[on] = np.sin(theta)
    return FeatureMaps(maps.spec, seg, dt, ax, ay, am)


# --------------------------------------------------------------------------
# files

MAGIC = b"CWGRID1\n"


def write_grids(path, channels: np.ndarray) -> None:
    """Write a ``(channels, height, width)`` stack as a CWGRID1 file."""
    arr = np.asarray(channels)
    if arr.ndim == 2:
        arr = arr[None]
    c, h, w = arr.shape
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(f"{w} {h} {c}\n".encode("ascii"))
            fh.write(payload)
            fh.write(crc64(payload).to_bytes(8, "little"))
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_grids(path) -> np.ndarray:
    """Read a CWGRID1 file into a float32 ``(channels, height, width)`` array."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if not data.startswith(MAGIC):
        raise BadMagic(f"{path}: not a CWGRID1 file")
    end = data.find(b"\n", len(MAGIC))
    if end < 0:
        raise TruncatedFile(f"{path}: header line is incomplete")
    try:
        w, h, c = (int(t) for t in data[len(MAGIC) : end].decode("ascii").split())
    except ValueError:
        raise ParseError(f"{path}: malformed header {data[len(MAGIC):end]!r}") from None
    if min(w, h, c) < 1:
        raise ParseError(f"{path}: bad dimensions {w}x{h}x{c}")
    start = end + 1
    n = w * h * c * 4
    if len(data) < start + n + 8:
        raise TruncatedFile(f"{path}: expected {n + 8} payload bytes, found {len(data) - start}")
    if len(data) > start + n + 8:
        raise ParseError(f"{path}: {len(data) - start - n - 8} trailing bytes")
    payload = data[start : start + n]
    stored = int.from_bytes(data[start + n : start + n + 8], "little")
    if crc64(payload) != stored:
        raise ChecksumMismatch(f"{path}: CRC-64 mismatch")
    return np.frombuffer(payload, dtype="<f4").reshape(c, h, w).astype(np.float32)


def write_feature_maps(path, maps: FeatureMaps) -> None:
    write_grids(path, maps.stack())


def read_feature_maps(path, spec: GridSpec) -> FeatureMaps:
    arr = read_grids(path)
    if arr.shape[1:] != spec.shape:
        raise GridMismatch(f"{path}: grid is {arr.shape[2]}x{arr.shape[1]}, scene expects {spec.width_px}x{spec.height_px}")
    return FeatureMaps.from_stack(spec, arr)


def export_pgm(grid: np.ndarray, path, scale: float) -> None:
    """Binary graymap (P5, maxval 255); row 0 of the grid is the first image line."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    v = np.asarray(grid, dtype=np.float64)
    px = np.clip(np.floor(255.0 * v / scale + 0.5), 0, 255).astype(np.uint8)
    h, w = px.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(px.tobytes())
    except OSError as exc:
        raise IoError(str(exc)) from exc
