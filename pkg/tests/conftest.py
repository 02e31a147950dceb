import numpy as np
import pytest

from oie.path_geometry import DISTANCE_UNIT_M


def arc_polyline(radius_du, turn="right", length_du=60.0, step_du=0.05, straight_du=0.0):
    """Dense world polyline starting at the origin heading +y.

    An optional straight lead-in of ``straight_du`` precedes a circular arc of
    radius ``radius_du`` (both in distance units); coordinates are meters.
    """
    m = DISTANCE_UNIT_M
    pts = []
    if straight_du > 0:
        s = np.arange(0.0, straight_du, step_du)
        pts.append(np.stack([np.zeros_like(s), s], axis=1))
    theta = np.arange(0.0, length_du, step_du) / radius_du
    side = 1.0 if turn == "right" else -1.0
    arc = np.stack([side * radius_du * (1 - np.cos(theta)), straight_du + radius_du * np.sin(theta)], axis=1)
    pts.append(arc)
    return np.concatenate(pts) * m


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
