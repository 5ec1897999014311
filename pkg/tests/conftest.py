import numpy as np
import pytest

from crosswalk.geometry import GridSpec, Polygon


def square(cx, cy, side):
    h = side / 2
    return Polygon(((cx - h, cy - h), (cx + h, cy - h), (cx + h, cy + h), (cx - h, cy + h)))


def centered_grid(width_m, height_m, res=0.04):
    w, h = int(round(width_m / res)), int(round(height_m / res))
    return GridSpec((-(w - 1) * res / 2, -(h - 1) * res / 2), res, w, h)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def cross_scene(betas=(None, None, None, None), res=0.04, extent=14.0, s1=5.0, s2=8.0):
    """Four straight roads along the axes; ``betas[k]`` (None = no crosswalk) per road."""
    import math

    from crosswalk.geometry import Polyline, crosswalk_polygon
    from crosswalk.scene import CrosswalkGT, RoadCenterline, Scene

    n = int(round(2 * extent / res)) + 1
    grid = GridSpec((-extent, -extent), res, n, n)
    roads, cws = [], []
    for k, beta in enumerate(betas):
        a = k * math.pi / 2
        cl = Polyline(((0.0, 0.0), (13.0 * math.cos(a), 13.0 * math.sin(a))))
        road = RoadCenterline(f"r{k}", cl, 6.0)
        roads.append(road)
        if beta is not None:
            cws.append(CrosswalkGT(road.id, s1, s2, beta, crosswalk_polygon(cl, s1, s2, beta, road.half_width)))
    return Scene(grid, square(0.0, 0.0, 7.0), tuple(roads), tuple(cws))
