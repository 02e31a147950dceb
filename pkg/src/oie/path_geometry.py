"""Goal geometry: planned paths, signed curvature and inverse-radius profiles.

Coordinates in the vehicle-centric frame are ``x`` (meters, positive to the
right) and ``y`` (meters, forward). Curvature is reported in inverse distance
units, where one distance unit is 1/3.6 m. Sign convention: negative while
turning left, positive while turning right.
"""

from dataclasses import dataclass

import numpy as np

from oie import kernels
from oie.errors import (
    DegeneratePolyline,
    IndexOutOfStencil,
    PathTooShort,
    VerticalTangent,
    ZeroVelocity,
)

DISTANCE_UNIT_M = 1.0 / 3.6
DEFAULT_HORIZON = 40


@dataclass(frozen=True)
class PlannedPath:
    """Waypoints sampled every ``spacing`` distance units, starting at the origin."""

    points: np.ndarray  # (N, 2) meters, vehicle-centric
    spacing: float = 1.0

    @property
    def points_du(self):
        return self.points / DISTANCE_UNIT_M

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True)
class IrProfile:
    values: np.ndarray  # values[l - 1] = IR at l distance units ahead

    @property
    def L(self):
        return len(self.values)


@dataclass(frozen=True)
class CanTrace:
    """Per-distance-unit records ahead of the current position.

    ``yaw_rate`` is in degrees per second (negative = turning left) and
    ``velocity`` in kilometers per hour. Record ``k`` belongs to ``l = k + 1``.
    """

    yaw_rate: np.ndarray
    velocity: np.ndarray

    def __len__(self):
        return len(self.yaw_rate)


def world_to_vehicle(points, origin, heading):
    """Express world points in the frame of a vehicle at ``origin`` facing ``heading``.

    ``heading`` is the world yaw in radians, counterclockwise from +x.
    """
    d = np.asarray(points, dtype=float) - np.asarray(origin, dtype=float)
    c, s = np.cos(heading), np.sin(heading)
    x = d[..., 0] * s - d[..., 1] * c
    y = d[..., 0] * c + d[..., 1] * s
    return np.stack([x, y], axis=-1)


def resample_by_arclength(waypoints, spacing=1.0, L=DEFAULT_HORIZON, heading=None):
    """Resample a polyline at uniform arc length and move it into the vehicle frame.

    The first waypoint becomes the origin. The forward axis is ``heading``
    (world yaw, radians) when given, otherwise the direction of the first
    segment.

    Raises:
        PathTooShort: fewer than two waypoints, or not enough arc length for
            ``L + 3`` stencil points.
        DegeneratePolyline: two consecutive waypoints coincide.
    """
    pts = np.asarray(waypoints, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise PathTooShort("need at least two waypoints")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    seg = np.diff(pts, axis=0)
    seglen = np.hypot(seg[:, 0], seg[:, 1])
    if np.any(seglen == 0.0):
        raise DegeneratePolyline("consecutive waypoints coincide")
    if heading is None:
        heading = float(np.arctan2(seg[0, 1], seg[0, 0]))
    local = world_to_vehicle(pts, pts[0], heading)

    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    step = spacing * DISTANCE_UNIT_M
    total = cum[-1]
    if total < (L + 3) * step * (1.0 - 1e-12):
        raise PathTooShort(
            f"arc length {total:.3f} m below {(L + 3) * step:.3f} m needed for L={L}"
        )
    count = int(np.floor(total / step + 1e-9)) + 1
    s = np.arange(count) * step
    s[-1] = min(s[-1], total)
    x = np.interp(s, cum, local[:, 0])
    y = np.interp(s, cum, local[:, 1])
    return PlannedPath(points=np.stack([x, y], axis=1), spacing=float(spacing))


def signed_curvature(path, index):
    """Signed curvature (1 / distance unit) at ``path.points[index]``."""
    n = len(path)
    if index < 1 or index > n - 2:
        raise IndexOutOfStencil(f"index {index} needs neighbours in [0, {n - 1}]")
    P = path.points_du
    kappa, status = kernels.curvature_stencils(
        P[index - 1 : index], P[index : index + 1], P[index + 1 : index + 2]
    )
    if status[0]:
        raise VerticalTangent(f"stencil at index {index} folds back on itself")
    return float(kappa[0])


def ir_profile_from_path(path, L=DEFAULT_HORIZON):
    """IR at 1..L distance units ahead, from the path geometry."""
    if len(path) < L + 3:
        raise PathTooShort(f"path has {len(path)} points, need {L + 3}")
    idx = np.rint(np.arange(1, L + 1) / path.spacing).astype(np.int64)
    if idx[-1] > len(path) - 2:
        raise PathTooShort("horizon runs past the end of the path")
    P = path.points_du
    kappa, status = kernels.curvature_stencils(
        np.ascontiguousarray(P[idx - 1]),
        np.ascontiguousarray(P[idx]),
        np.ascontiguousarray(P[idx + 1]),
    )
    if np.any(status):
        raise VerticalTangent(f"stencil folds back at index {int(idx[np.argmax(status)])}")
    return IrProfile(values=kappa)


def ir_profile_from_can(trace, alpha=1.0, L=DEFAULT_HORIZON):
    """Offline IR approximation: ``alpha * yaw_rate / velocity`` per record."""
    if len(trace) < L:
        raise PathTooShort(f"trace has {len(trace)} records, need {L}")
    yr = np.asarray(trace.yaw_rate[:L], dtype=float)
    v = np.asarray(trace.velocity[:L], dtype=float)
    if np.any(~(v > 0.0)):
        raise ZeroVelocity("velocity must be positive over the horizon")
    return IrProfile(values=alpha * yr / v)


# ---------------------------------------------------------------------------
# plain-text tables: one record per line, comma separated, '#' comments
# ---------------------------------------------------------------------------


def _write_table(fname, rows, columns, meta=None):
    lines = []
    for key, value in (meta or {}).items():
        lines.append(f"# {key}={value!r}" if not isinstance(value, str) else f"# {key}={value}")
    lines.append("# " + ",".join(columns))
    for row in np.atleast_2d(rows):
        lines.append(",".join(repr(float(v)) for v in row))
    with open(fname, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _read_table(fname):
    meta = {}
    rows = []
    with open(fname) as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, value = body.split("=", 1)
                    meta[key.strip()] = value.strip()
                continue
            rows.append([float(v) for v in line.split(",")])
    return np.array(rows, dtype=float).reshape(len(rows), -1), meta


def save_path(fname, path):
    _write_table(fname, path.points, ["x_m", "y_m"], {"spacing": float(path.spacing)})


def load_path(fname):
    rows, meta = _read_table(fname)
    return PlannedPath(points=rows, spacing=float(meta.get("spacing", 1.0)))


def save_trace(fname, trace):
    _write_table(fname, np.stack([trace.yaw_rate, trace.velocity], axis=1), ["yaw_rate_deg_s", "velocity_kmh"])


def load_trace(fname):
    rows, _ = _read_table(fname)
    return CanTrace(yaw_rate=rows[:, 0].copy(), velocity=rows[:, 1].copy())


def save_profile(fname, profile):
    L = profile.L
    _write_table(fname, np.stack([np.arange(1, L + 1), profile.values], axis=1), ["l", "ir"])


def load_profile(fname):
    rows, _ = _read_table(fname)
    return IrProfile(values=rows[:, 1].copy())
