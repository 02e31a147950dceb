"""Per-object visual features and the clip-shared goal input.

A visual row is ``[motion histogram (12), location (4), appearance (k)?]``.
Frames before a track starts are zero rows. Motion comes from a synthetic
flow field: every point of a box moves with the box's affine change between
consecutive frames, plus Gaussian noise.
"""

from dataclasses import dataclass

import numpy as np

from oie import kernels
from oie.errors import DimensionMismatch, NoPredecessor
from oie.path_geometry import (
    DEFAULT_HORIZON,
    ir_profile_from_can,
    ir_profile_from_path,
    resample_by_arclength,
)
from oie.scenario_sim import derive_can

HIST_BINS = 12
LOCATION_DIM = 4


@dataclass(frozen=True)
class FeatureConfig:
    bins: int = HIST_BINS
    samples_per_box: int = 16
    flow_sigma: float = 2.0
    seed: int = 0
    horizon: int = DEFAULT_HORIZON
    alpha: float = 1.0
    goal_source: str = "can"  # "can" (yaw rate / velocity) or "path" (route geometry)


@dataclass(frozen=True)
class FeatureSequence:
    link_id: int
    rows: np.ndarray  # (n, dim)
    mask: np.ndarray  # (n,) bool

    @property
    def dim(self):
        return self.rows.shape[1]


@dataclass(frozen=True)
class GoalInput:
    """IR profiles for every frame of one clip; shared by all its objects."""

    ir: np.ndarray  # (n, L)
    clip_end: int


def location_feature(box, W, H):
    """(left/W, top/H, width/W, height/H); zeros for a padded frame."""
    if box is None:
        return np.zeros(LOCATION_DIM)
    box = np.asarray(box, dtype=float)
    return np.array([box[0] / W, box[1] / H, box[2] / W, box[3] / H])


def motion_histogram(flow, bins=HIST_BINS):
    """Magnitude-weighted orientation histogram, L1-normalised (zeros if static)."""
    flow = np.asarray(flow, dtype=float).reshape(-1, 2)
    return kernels.orientation_histogram(
        np.ascontiguousarray(flow[:, 0]), np.ascontiguousarray(flow[:, 1]), bins
    )


def synth_flow(link, index, samples_per_box=16, seed=0, sigma=0.0):
    """Flow vectors sampled inside the box at clip position ``index``.

    Raises NoPredecessor when ``index`` is the first valid frame of the link.
    """
    if not link.mask[index]:
        raise ValueError(f"frame {index} is padded")
    if index == 0 or not link.mask[index - 1]:
        raise NoPredecessor(f"frame {index} has no valid predecessor")
    prev = link.boxes[index - 1]
    cur = link.boxes[index]
    rng = np.random.default_rng([int(seed), int(link.clip_end), int(link.link_id), int(index)])
    ab = rng.uniform(-0.5, 0.5, size=(samples_per_box, 2))
    noise = rng.normal(0.0, 1.0, size=(samples_per_box, 2))
    centre_prev = prev[:2] + 0.5 * prev[2:]
    centre_cur = cur[:2] + 0.5 * cur[2:]
    flow = (centre_cur - centre_prev)[None, :] + ab * (cur[2:] - prev[2:])[None, :]
    if sigma > 0:
        flow = flow + sigma * noise
    return flow


def assemble_sequence(link, W, H, config=None, appearance=None):
    """Per-frame visual rows for one tracklink."""
    cfg = config or FeatureConfig()
    n = link.n
    app_dim = 0
    if appearance is not None:
        appearance = np.asarray(appearance, dtype=float)
        if appearance.ndim != 2 or appearance.shape[0] != n:
            raise DimensionMismatch(f"appearance must be ({n}, k), got {appearance.shape}")
        app_dim = appearance.shape[1]
    rows = np.zeros((n, cfg.bins + LOCATION_DIM + app_dim))
    for k in range(n):
        if not link.mask[k]:
            continue
        if k > 0 and link.mask[k - 1]:
            flow = synth_flow(link, k, cfg.samples_per_box, cfg.seed, cfg.flow_sigma)
            rows[k, : cfg.bins] = motion_histogram(flow, cfg.bins)
        rows[k, cfg.bins : cfg.bins + LOCATION_DIM] = location_feature(link.boxes[k], W, H)
        if app_dim:
            rows[k, cfg.bins + LOCATION_DIM :] = appearance[k]
    return FeatureSequence(link_id=link.link_id, rows=rows, mask=link.mask.copy())


def stack_sequences(sequences):
    """(N, n, dim) array; every sequence must share one feature dimension."""
    dims = {s.dim for s in sequences}
    if len(dims) > 1:
        raise DimensionMismatch(f"mixed feature dimensions {sorted(dims)}")
    return np.stack([s.rows for s in sequences])


def goal_input(scenario, clip_end, n, config=None):
    """IR profile at every frame of the clip ending at ``clip_end``."""
    cfg = config or FeatureConfig()
    frames = range(clip_end - n + 1, clip_end + 1)
    if cfg.goal_source == "can":
        rows = [
            ir_profile_from_can(derive_can(scenario.ego, f, cfg.horizon), cfg.alpha, cfg.horizon).values
            for f in frames
        ]
    elif cfg.goal_source == "path":
        rows = [ir_profile_from_path(planned_path(scenario, f, cfg.horizon), cfg.horizon).values for f in frames]
    else:
        raise ValueError(f"unknown goal source {cfg.goal_source!r}")
    return GoalInput(ir=np.array(rows), clip_end=clip_end)


def planned_path(scenario, frame, L=DEFAULT_HORIZON, spacing=1.0):
    """Vehicle-centric resampled route ahead of the ego at ``frame``."""
    ego = scenario.ego
    s0 = ego.arclen[frame]
    rs = ego.route_arclen
    ahead = rs > s0
    wp = ego.planned_waypoints
    start = np.array([np.interp(s0, rs, wp[:, 0]), np.interp(s0, rs, wp[:, 1])])
    pts = np.vstack([start, wp[ahead]])
    return resample_by_arclength(pts, spacing=spacing, L=L, heading=ego.pose[frame, 2])
