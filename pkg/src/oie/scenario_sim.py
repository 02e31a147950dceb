"""Synthetic four-way intersection episodes.

World frame: x east, y north (meters), yaw counterclockwise from +x. The
intersection is centered at the origin; traffic keeps to the right. The ego
always approaches from the south in the northbound lane and either turns left
(exit west), goes straight (exit north) or turns right (exit east).

Each scenario carries everything the downstream stages need: per-frame ego
poses, actor poses and projected boxes, per-frame importance and brake
labels, and the dense planned route used for goal encoding.
"""

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from oie.errors import InvalidConfig, ZeroVelocity
from oie.path_geometry import DISTANCE_UNIT_M, CanTrace, world_to_vehicle

FRAME_RATE = 30
GOALS = ("Lt", "St", "Rt")
BEHAVIORS = (
    "crossing-pedestrian",
    "oncoming-vehicle",
    "lead-vehicle",
    "parked-vehicle",
    "crossing-vehicle",
)

INTERSECTION_HALF = 7.5
LANE_CENTER = 1.75
APPROACH_M = 25.0
CROSSWALK_OFFSET = 9.5
ROUTE_TAIL_M = 45.0
HESITANT_APPROACH_M = 4.0
STOP_LINE = CROSSWALK_OFFSET + 1.5 + 2.25  # waiting vehicle centre, behind the crosswalk
ROUTE_STEP_M = 0.1

PEDESTRIAN_EXTENT = (0.6, 0.6, 1.7)
VEHICLE_EXTENT = (4.5, 1.8, 1.5)


@dataclass(frozen=True)
class Camera:
    focal: float = 700.0
    width: int = 1280
    height: int = 720
    mount_height: float = 1.4
    mount_forward: float = 1.5
    near: float = 0.5
    max_range: float = 80.0

    @property
    def cx(self):
        return self.width / 2.0

    @property
    def cy(self):
        return self.height / 2.0


@dataclass(frozen=True)
class ScenarioConfig:
    goal_mix: dict = field(default_factory=lambda: {"Lt": 1 / 3, "St": 1 / 3, "Rt": 1 / 3})
    actor_count: tuple = (3, 7)
    behavior_weights: dict = field(
        default_factory=lambda: {
            "crossing-pedestrian": 0.45,
            "oncoming-vehicle": 0.15,
            "lead-vehicle": 0.04,
            "parked-vehicle": 0.06,
            "crossing-vehicle": 0.30,
        }
    )
    narrow_road_prob: float = 0.3
    pedestrian_speed: tuple = (1.0, 1.8)
    standing_pedestrian_prob: float = 0.05
    hesitant_pedestrian_prob: float = 0.55
    pedestrian_race_s: float = 4.5  # spread of walker arrival around the ego's passage
    vehicle_speed: tuple = (3.0, 12.0)
    crossing_yield_prob: float = 0.75
    ego_speed_straight: tuple = (5.5, 7.5)
    ego_speed_turn: tuple = (4.0, 5.5)
    position_noise_m: float = 0.0
    conflict_radius_m: float = 2.5
    horizon_s: float = 5.0
    brake_threshold_s: float = 3.0
    focal: float = 700.0
    image_width: int = 1280
    image_height: int = 720

    def validate(self):
        weights = {k: float(v) for k, v in self.behavior_weights.items()}
        if not weights or sum(weights.values()) <= 0 or any(v < 0 for v in weights.values()):
            raise InvalidConfig("behavior set is empty")
        unknown = set(weights) - set(BEHAVIORS)
        if unknown:
            raise InvalidConfig(f"unknown behaviors {sorted(unknown)}")
        mix = {k: float(v) for k, v in self.goal_mix.items()}
        if set(mix) - set(GOALS) or sum(mix.values()) <= 0 or any(v < 0 for v in mix.values()):
            raise InvalidConfig("goal mix must weight Lt/St/Rt non-negatively")
        lo, hi = self.actor_count
        if lo < 0 or hi < 1 or hi < lo:
            raise InvalidConfig("actor_count must be a non-empty positive range")
        for name in ("pedestrian_speed", "vehicle_speed", "ego_speed_straight", "ego_speed_turn"):
            lo, hi = getattr(self, name)
            if lo <= 0 or hi < lo:
                raise InvalidConfig(f"{name} must be a positive range")
        for name in ("conflict_radius_m", "horizon_s", "brake_threshold_s", "focal"):
            if getattr(self, name) <= 0:
                raise InvalidConfig(f"{name} must be positive")
        if self.image_width <= 0 or self.image_height <= 0:
            raise InvalidConfig("image size must be positive")
        for name in ("narrow_road_prob", "standing_pedestrian_prob", "hesitant_pedestrian_prob", "crossing_yield_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1]")
        if self.standing_pedestrian_prob + self.hesitant_pedestrian_prob > 1.0:
            raise InvalidConfig("standing and hesitant pedestrian shares exceed 1")
        if self.pedestrian_race_s < 0:
            raise InvalidConfig("pedestrian_race_s must be non-negative")
        if self.position_noise_m < 0:
            raise InvalidConfig("position_noise_m must be non-negative")


@dataclass
class EgoTrack:
    """Ego states for every simulated frame, including look-ahead frames."""

    pose: np.ndarray  # (F, 3) x, y, yaw
    speed: np.ndarray  # (F,) m/s
    yaw_rate: np.ndarray  # (F,) rad/s, counterclockwise positive
    arclen: np.ndarray  # (F,) position along the planned route, m
    planned_waypoints: np.ndarray  # (K, 2) dense world polyline of the route
    route_arclen: np.ndarray  # (K,)


@dataclass
class ActorTrack:
    actor_id: int
    category: str  # person | vehicle
    behavior: str
    extent: tuple  # length, width, height (m)
    pose: np.ndarray  # (F, 3)
    velocity: np.ndarray  # (F, 2)
    boxes: np.ndarray  # (F, 4) left, top, width, height; NaN row when absent

    def box(self, frame):
        row = self.boxes[frame]
        return None if np.isnan(row[0]) else row


@dataclass(frozen=True)
class FrameAnnotation:
    frame_index: int
    important_actor_ids: frozenset
    brake_label: int
    goal_label: str


@dataclass
class Scenario:
    id: str
    seed: int
    frame_rate: int
    frames: int
    maneuver: str
    goal_labels: list
    ego: EgoTrack
    actors: list
    camera: Camera
    narrow_road: bool
    conflict_radius_m: float
    horizon_s: float
    brake_threshold_s: float
    goal_mix: dict
    annotations: list = field(default_factory=list)

    def actor(self, actor_id):
        for a in self.actors:
            if a.actor_id == actor_id:
                return a
        raise KeyError(actor_id)

    def visible_ids(self, frame):
        return [a.actor_id for a in self.actors if a.box(frame) is not None]


# ---------------------------------------------------------------------------
# routes
# ---------------------------------------------------------------------------


def _route_segments(maneuver):
    """Analytic route as (kind, length, radius, turn) pieces; turn +1 = left."""
    if maneuver == "St":
        return [("line", APPROACH_M + 2 * INTERSECTION_HALF + APPROACH_M + ROUTE_TAIL_M, 0.0, 0)]
    if maneuver == "Lt":
        radius = INTERSECTION_HALF + LANE_CENTER
        turn = 1
    elif maneuver == "Rt":
        radius = INTERSECTION_HALF - LANE_CENTER
        turn = -1
    else:
        raise InvalidConfig(f"unknown maneuver {maneuver!r}")
    return [
        ("line", APPROACH_M, 0.0, 0),
        ("arc", 0.5 * np.pi * radius, radius, turn),
        ("line", APPROACH_M + ROUTE_TAIL_M, 0.0, 0),
    ]


def route_states(maneuver, s):
    """World (x, y, yaw, signed curvature) at arc lengths ``s`` along the route."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    x0, y0, yaw0 = LANE_CENTER, -(INTERSECTION_HALF + APPROACH_M), 0.5 * np.pi
    out = np.empty((len(s), 4))
    start = 0.0
    segments = _route_segments(maneuver)
    for k, (kind, length, radius, turn) in enumerate(segments):
        last = k == len(segments) - 1
        sel = (s >= start) & ((s < start + length) | last)
        u = s[sel] - start
        if kind == "line":
            out[sel, 0] = x0 + u * np.cos(yaw0)
            out[sel, 1] = y0 + u * np.sin(yaw0)
            out[sel, 2] = yaw0
            out[sel, 3] = 0.0
            x1, y1, yaw1 = x0 + length * np.cos(yaw0), y0 + length * np.sin(yaw0), yaw0
        else:
            cxr = x0 - turn * radius * np.sin(yaw0)
            cyr = y0 + turn * radius * np.cos(yaw0)
            phi = yaw0 + turn * u / radius
            out[sel, 0] = cxr + turn * radius * np.sin(phi)
            out[sel, 1] = cyr - turn * radius * np.cos(phi)
            out[sel, 2] = phi
            out[sel, 3] = turn / radius
            yaw1 = yaw0 + turn * length / radius
            x1 = cxr + turn * radius * np.sin(yaw1)
            y1 = cyr - turn * radius * np.cos(yaw1)
        x0, y0, yaw0 = x1, y1, yaw1
        start += length
    return out


def route_length(maneuver):
    return sum(seg[1] for seg in _route_segments(maneuver))


def trimmed_length(maneuver):
    """Arc length of the recorded part: 25 m before to 25 m after the box."""
    return route_length(maneuver) - ROUTE_TAIL_M


def turn_interval(maneuver):
    """(start, end) arc length of the turning arc, or None when straight."""
    segs = _route_segments(maneuver)
    if len(segs) == 1:
        return None
    return segs[0][1], segs[0][1] + segs[1][1]


# ---------------------------------------------------------------------------
# camera projection
# ---------------------------------------------------------------------------


def _corners(pose, extent):
    """(F, 8, 3) world corners of oriented boxes resting on the ground."""
    pose = np.atleast_2d(pose)
    length, width, height = extent
    lx = np.array([1, 1, -1, -1, 1, 1, -1, -1]) * 0.5 * length
    ly = np.array([1, -1, 1, -1, 1, -1, 1, -1]) * 0.5 * width
    lz = np.array([0, 0, 0, 0, 1, 1, 1, 1]) * height
    c, s = np.cos(pose[:, 2:3]), np.sin(pose[:, 2:3])
    wx = pose[:, 0:1] + c * lx - s * ly
    wy = pose[:, 1:2] + s * lx + c * ly
    wz = np.broadcast_to(lz, wx.shape)
    return np.stack([wx, wy, wz], axis=-1)


def project_boxes(actor_pose, extent, ego_pose, camera):
    """Vectorised projection: (F, 4) boxes with NaN rows where absent."""
    actor_pose = np.atleast_2d(np.asarray(actor_pose, dtype=float))
    ego_pose = np.atleast_2d(np.asarray(ego_pose, dtype=float))
    corners = _corners(actor_pose, extent)
    F = len(actor_pose)
    local = world_to_vehicle(corners[..., :2], ego_pose[:, None, :2], ego_pose[:, None, 2])
    X = local[..., 0]
    Z = local[..., 1] - camera.mount_forward
    Y = camera.mount_height - corners[..., 2]
    ok = np.all(Z >= camera.near, axis=1) & (np.min(Z, axis=1) <= camera.max_range)
    Zs = np.where(ok[:, None], Z, 1.0)
    u = camera.cx + camera.focal * X / Zs
    v = camera.cy + camera.focal * Y / Zs
    left = np.maximum(u.min(axis=1), 0.0)
    right = np.minimum(u.max(axis=1), float(camera.width))
    top = np.maximum(v.min(axis=1), 0.0)
    bottom = np.minimum(v.max(axis=1), float(camera.height))
    ok &= (right - left > 0.0) & (bottom - top > 0.0)
    out = np.full((F, 4), np.nan)
    out[ok] = np.column_stack([left, top, right - left, bottom - top])[ok]
    return out


def project_to_image(actor_pose, extent, ego_pose, camera):
    """Pinhole projection of one actor's bounding volume; None when not visible."""
    row = project_boxes(actor_pose, extent, ego_pose, camera)[0]
    return None if np.isnan(row[0]) else row


# ---------------------------------------------------------------------------
# importance and brake oracles
# ---------------------------------------------------------------------------


def _route_ahead(ego, frame, horizon):
    s0 = ego.arclen[frame]
    v = ego.speed[frame]
    reach = v * horizon
    rs = ego.route_arclen
    inside = (rs > s0) & (rs <= s0 + reach)
    s = np.concatenate([[s0], rs[inside]])
    x = np.interp(s, rs, ego.planned_waypoints[:, 0])
    y = np.interp(s, rs, ego.planned_waypoints[:, 1])
    return np.stack([x, y], axis=1), (s - s0) / v


def conflict_times(scenario, frame, horizon=None):
    """Time until the ego reaches each visible actor's conflict zone.

    An actor conflicts with the ego when its constant-velocity extrapolation
    comes within the conflict radius of a point on the planned route no later
    than the ego reaches that point, and the ego gets there within the
    horizon. Returns ``{actor_id: seconds}`` for conflicting visible actors.
    """
    horizon = scenario.horizon_s if horizon is None else horizon
    if not scenario.actors:
        return {}
    ego = scenario.ego
    if ego.speed[frame] <= 0:
        raise ZeroVelocity("ego must move to define arrival times")
    P, t_e = _route_ahead(ego, frame, horizon)
    r = scenario.conflict_radius_m
    out = {}
    for actor in scenario.actors:
        if actor.box(frame) is None:
            continue
        a0 = actor.pose[frame, :2]
        vel = actor.velocity[frame]
        rel = a0[None, :] - P
        vv = float(vel @ vel)
        if actor.behavior == "parked-vehicle" or vv == 0.0:
            tau = np.zeros(len(P))
        else:
            tau = np.clip(-(rel @ vel) / vv, 0.0, t_e)
        closest = rel + tau[:, None] * vel[None, :]
        hit = np.hypot(closest[:, 0], closest[:, 1]) < r
        if np.any(hit):
            out[actor.actor_id] = float(t_e[hit].min())
    return out


def label_importance(scenario, frame_index, horizon=None):
    """Ids of visible actors the ego has to account for at this frame."""
    if not 0 <= frame_index < scenario.frames:
        raise IndexError(frame_index)
    return frozenset(conflict_times(scenario, frame_index, horizon))


def label_brake(scenario, frame_index):
    """1 when an important actor's time-to-conflict is below the brake threshold."""
    times = conflict_times(scenario, frame_index)
    if not times:
        return 0
    return int(min(times.values()) < scenario.brake_threshold_s)


def derive_can(ego, frame, count=40):
    """CAN-style records at 1..count distance units ahead of ``frame``.

    Yaw rate is converted to degrees per second with left turns negative;
    velocity to kilometers per hour.
    """
    if np.any(ego.speed <= 0):
        raise ZeroVelocity("ego speed must stay positive")
    s = ego.arclen[frame] + np.arange(1, count + 1) * DISTANCE_UNIT_M
    yaw = np.interp(s, ego.arclen, ego.yaw_rate)
    v = np.interp(s, ego.arclen, ego.speed)
    return CanTrace(yaw_rate=-np.degrees(yaw), velocity=3.6 * v)


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def _uniform(rng, bounds):
    lo, hi = bounds
    return float(rng.uniform(lo, hi))


def _choice(rng, weights):
    keys = sorted(weights)
    p = np.array([float(weights[k]) for k in keys])
    return keys[int(rng.choice(len(keys), p=p / p.sum()))]


def _crossing_arm_entry(maneuver, arm):
    """Arc length where the ego route crosses a crosswalk, or None."""
    if arm == "S":
        return APPROACH_M - (CROSSWALK_OFFSET - INTERSECTION_HALF)
    exits = {"N": "St", "E": "Rt", "W": "Lt"}
    if exits[arm] != maneuver:
        return None
    start, end = turn_interval(maneuver) or (APPROACH_M, APPROACH_M + 2 * INTERSECTION_HALF)
    return end + (CROSSWALK_OFFSET - INTERSECTION_HALF)


def _pedestrian(rng, cfg, maneuver, v_ego, t):
    arm = _choice(rng, {"S": 0.2, "N": 0.2, "E": 0.3, "W": 0.3})
    span = INTERSECTION_HALF + 1.0
    sign = 1.0 if rng.random() < 0.5 else -1.0
    along = np.array([-span, span]) * sign
    if arm in ("N", "S"):
        c = CROSSWALK_OFFSET if arm == "N" else -CROSSWALK_OFFSET
        start = np.array([along[0], c])
        direction = np.array([np.sign(along[1] - along[0]), 0.0])
    else:
        c = CROSSWALK_OFFSET if arm == "E" else -CROSSWALK_OFFSET
        start = np.array([c, along[0]])
        direction = np.array([0.0, np.sign(along[1] - along[0])])
    speed = _uniform(rng, cfg.pedestrian_speed)
    s_cross = _crossing_arm_entry(maneuver, arm)
    t_ref = (s_cross if s_cross is not None else APPROACH_M + INTERSECTION_HALF) / v_ego
    # walkers reach the ego's lane close to when the ego passes, so whether
    # they conflict is decided by their speed rather than by where they stand
    lane = {"S": LANE_CENTER, "N": LANE_CENTER, "E": -LANE_CENTER, "W": LANE_CENTER}[arm]
    t_arrive = t_ref + float(rng.uniform(-cfg.pedestrian_race_s, cfg.pedestrian_race_s))
    t_start = t_arrive - abs(lane - along[0]) / speed
    mode = rng.random()
    t_halt = t_ref + float(rng.uniform(-4.0, 1.0))
    reach = np.inf
    if mode < cfg.standing_pedestrian_prob:
        t_start = np.inf
    elif mode < cfg.standing_pedestrian_prob + cfg.hesitant_pedestrian_prob:
        # walks up along the crosswalk line and halts at the kerb to let traffic pass
        start = start - HESITANT_APPROACH_M * direction
        reach = HESITANT_APPROACH_M + span - INTERSECTION_HALF - 0.3
        t_start = t_halt - reach / speed
    walking = (t >= t_start) & (t < t_start + reach / speed)
    dist = np.clip((t - t_start) * speed, 0.0, reach)
    pos = start[None, :] + dist[:, None] * direction[None, :]
    vel = np.where(walking[:, None], speed * direction[None, :], 0.0)
    yaw = np.full(len(t), np.arctan2(direction[1], direction[0]))
    return pos, vel, yaw


def _straight_mover(start, yaw, speed, t):
    d = np.array([np.cos(yaw), np.sin(yaw)])
    pos = start[None, :] + (speed * t)[:, None] * d[None, :]
    vel = np.broadcast_to(speed * d, (len(t), 2)).copy()
    return pos, vel, np.full(len(t), yaw)


def _yielding_mover(stop, yaw, speed, decel, t_stop, t):
    """Constant speed, then constant braking to rest at ``stop`` at ``t_stop``."""
    d = np.array([np.cos(yaw), np.sin(yaw)])
    t_brake = speed / decel
    left = t_stop - t  # time until standstill
    braking = (left > 0) & (left <= t_brake)
    cruising = left > t_brake
    remaining = np.where(braking, 0.5 * decel * left**2, 0.0)
    remaining = np.where(cruising, 0.5 * speed * t_brake + speed * (left - t_brake), remaining)
    v = np.where(braking, decel * left, np.where(cruising, speed, 0.0))
    pos = stop[None, :] - remaining[:, None] * d[None, :]
    return pos, v[:, None] * d[None, :], np.full(len(t), yaw)


def _actor_motion(rng, cfg, behavior, maneuver, v_ego, narrow, t):
    t_int = APPROACH_M / v_ego
    if behavior == "crossing-pedestrian":
        return _pedestrian(rng, cfg, maneuver, v_ego, t)
    speed = _uniform(rng, cfg.vehicle_speed)
    if behavior == "oncoming-vehicle":
        t_pass = t_int + float(rng.uniform(-3.0, 5.0))
        start = np.array([-LANE_CENTER, speed * t_pass])
        return _straight_mover(start, -0.5 * np.pi, speed, t)
    if behavior == "crossing-vehicle":
        t_pass = t_int + float(rng.uniform(-3.0, 5.0))
        from_west = rng.random() < 0.5
        yields = rng.random() < cfg.crossing_yield_prob
        decel = float(rng.uniform(2.0, 4.0))
        t_stop = t_int + float(rng.uniform(-4.0, 1.0))
        sign = -1.0 if from_west else 1.0
        yaw = 0.0 if from_west else np.pi
        lane = -LANE_CENTER if from_west else LANE_CENTER
        if yields:
            stop = np.array([sign * STOP_LINE, lane])
            return _yielding_mover(stop, yaw, speed, decel, t_stop, t)
        return _straight_mover(np.array([sign * speed * t_pass, lane]), yaw, speed, t)
    if behavior == "lead-vehicle":
        gap = float(rng.uniform(8.0, 25.0))
        speed = v_ego * float(rng.uniform(0.8, 1.2))
        start = np.array([LANE_CENTER, -(INTERSECTION_HALF + APPROACH_M) + gap])
        return _straight_mover(start, 0.5 * np.pi, speed, t)
    if behavior == "parked-vehicle":
        offset = float(rng.uniform(1.6, 2.3) if narrow else rng.uniform(3.4, 4.2))
        along = float(rng.uniform(11.0, 30.0))
        arm = _choice(rng, {"S": 0.4, "N": 0.2, "E": 0.2, "W": 0.2})
        if arm == "S":
            start, yaw = np.array([LANE_CENTER + offset, -along]), 0.5 * np.pi
        elif arm == "N":
            start, yaw = np.array([LANE_CENTER + offset, along]), 0.5 * np.pi
        elif arm == "E":
            start, yaw = np.array([along, -LANE_CENTER - offset]), 0.0
        else:
            start, yaw = np.array([-along, LANE_CENTER + offset]), np.pi
        return _straight_mover(start, yaw, 0.0, t)
    raise InvalidConfig(f"unknown behavior {behavior!r}")


def _build_ego(maneuver, v_ego):
    total = route_length(maneuver)
    trimmed = trimmed_length(maneuver)
    frames = int(np.floor(trimmed / v_ego * FRAME_RATE)) + 1
    total_frames = int(np.floor((total - 1.0) / v_ego * FRAME_RATE)) + 1
    s = np.arange(total_frames) * v_ego / FRAME_RATE
    st = route_states(maneuver, s)
    rs = np.arange(0.0, total + 1e-9, ROUTE_STEP_M)
    wp = route_states(maneuver, rs)[:, :2]
    ego = EgoTrack(
        pose=st[:, :3].copy(),
        speed=np.full(total_frames, v_ego),
        yaw_rate=v_ego * st[:, 3],
        arclen=s,
        planned_waypoints=wp,
        route_arclen=rs,
    )
    return ego, frames


def annotate(scenario):
    """Per-frame importance, brake and goal labels (every frame)."""
    out = []
    for f in range(scenario.frames):
        times = conflict_times(scenario, f)
        brake = int(bool(times) and min(times.values()) < scenario.brake_threshold_s)
        out.append(FrameAnnotation(f, frozenset(times), brake, scenario.goal_labels[f]))
    return out


def generate_scenario(seed, config=None):
    """Deterministic synthetic episode for ``(seed, config)``."""
    cfg = config or ScenarioConfig()
    cfg.validate()
    rng = np.random.default_rng(seed)
    maneuver = _choice(rng, cfg.goal_mix)
    speed_range = cfg.ego_speed_straight if maneuver == "St" else cfg.ego_speed_turn
    v_ego = _uniform(rng, speed_range)
    ego, frames = _build_ego(maneuver, v_ego)
    narrow = bool(rng.random() < cfg.narrow_road_prob)
    camera = Camera(focal=cfg.focal, width=cfg.image_width, height=cfg.image_height)

    t = np.arange(frames) / FRAME_RATE
    n_actors = int(rng.integers(cfg.actor_count[0], cfg.actor_count[1] + 1))
    weights = {k: v for k, v in cfg.behavior_weights.items() if v > 0}
    actors = []
    for actor_id in range(n_actors):
        behavior = _choice(rng, weights)
        pos, vel, yaw = _actor_motion(rng, cfg, behavior, maneuver, v_ego, narrow, t)
        if cfg.position_noise_m > 0:
            pos = pos + rng.normal(0.0, cfg.position_noise_m, size=pos.shape)
        category = "person" if behavior == "crossing-pedestrian" else "vehicle"
        extent = PEDESTRIAN_EXTENT if category == "person" else VEHICLE_EXTENT
        pose = np.column_stack([pos, yaw])
        boxes = project_boxes(pose, extent, ego.pose[:frames], camera)
        actors.append(ActorTrack(actor_id, category, behavior, extent, pose, vel, boxes))

    sc = Scenario(
        id=f"s{int(seed):05d}",
        seed=int(seed),
        frame_rate=FRAME_RATE,
        frames=frames,
        maneuver=maneuver,
        goal_labels=[maneuver] * frames,
        ego=ego,
        actors=actors,
        camera=camera,
        narrow_road=narrow,
        conflict_radius_m=cfg.conflict_radius_m,
        horizon_s=cfg.horizon_s,
        brake_threshold_s=cfg.brake_threshold_s,
        goal_mix={k: float(cfg.goal_mix[k]) for k in sorted(cfg.goal_mix)},
    )
    sc.annotations = annotate(sc)
    return sc


def labeled_frames(scenario, n=30, every=30):
    """Frames with a full n-frame history on the every-``every`` cadence."""
    return [f for f in range(scenario.frames) if f >= n - 1 and (f + 1) % every == 0]


# ---------------------------------------------------------------------------
# mirroring (left-right reflection of the whole scene)
# ---------------------------------------------------------------------------

_MIRROR_GOAL = {"Lt": "Rt", "St": "St", "Rt": "Lt"}


def _mirror_pose(pose):
    out = pose.copy()
    out[..., 0] = -pose[..., 0]
    out[..., 2] = np.pi - pose[..., 2]
    return out


def mirror_scenario(sc):
    """Reflect x -> -x; turn labels swap and image boxes flip horizontally."""
    ego = dataclasses.replace(
        sc.ego,
        pose=_mirror_pose(sc.ego.pose),
        yaw_rate=-sc.ego.yaw_rate,
        planned_waypoints=sc.ego.planned_waypoints * np.array([-1.0, 1.0]),
    )
    actors = []
    for a in sc.actors:
        boxes = a.boxes.copy()
        boxes[:, 0] = sc.camera.width - a.boxes[:, 0] - a.boxes[:, 2]
        actors.append(
            dataclasses.replace(
                a,
                pose=_mirror_pose(a.pose),
                velocity=a.velocity * np.array([-1.0, 1.0]),
                boxes=boxes,
            )
        )
    out = dataclasses.replace(
        sc,
        id=sc.id + "m",
        maneuver=_MIRROR_GOAL[sc.maneuver],
        goal_labels=[_MIRROR_GOAL[g] for g in sc.goal_labels],
        ego=ego,
        actors=actors,
    )
    out.annotations = annotate(out)
    return out


# ---------------------------------------------------------------------------
# serialization: line-delimited JSON records
# ---------------------------------------------------------------------------


def _f(x):
    return None if x is None or (isinstance(x, float) and np.isnan(x)) else float(x)


def scenario_lines(sc):
    header = {
        "type": "header",
        "id": sc.id,
        "seed": sc.seed,
        "frame_rate": sc.frame_rate,
        "frames": sc.frames,
        "maneuver": sc.maneuver,
        "goal_mix": sc.goal_mix,
        "camera": dataclasses.asdict(sc.camera),
        "narrow_road": sc.narrow_road,
        "conflict_radius_m": sc.conflict_radius_m,
        "horizon_s": sc.horizon_s,
        "brake_threshold_s": sc.brake_threshold_s,
        "route": sc.ego.planned_waypoints.tolist(),
        "route_arclen": sc.ego.route_arclen.tolist(),
        "actors": [
            {"id": a.actor_id, "category": a.category, "behavior": a.behavior, "extent": list(a.extent)}
            for a in sc.actors
        ],
    }
    yield json.dumps(header, sort_keys=True)
    e = sc.ego
    for f in range(len(e.speed)):
        yield json.dumps(
            {
                "type": "ego",
                "f": f,
                "pose": e.pose[f].tolist(),
                "speed": float(e.speed[f]),
                "yaw_rate": float(e.yaw_rate[f]),
                "s": float(e.arclen[f]),
            },
            sort_keys=True,
        )
    for f in range(sc.frames):
        for a in sc.actors:
            box = a.box(f)
            yield json.dumps(
                {
                    "type": "actor",
                    "f": f,
                    "id": a.actor_id,
                    "pose": a.pose[f].tolist(),
                    "velocity": a.velocity[f].tolist(),
                    "box": None if box is None else box.tolist(),
                },
                sort_keys=True,
            )
    for ann in sc.annotations:
        yield json.dumps(
            {
                "type": "annotation",
                "f": ann.frame_index,
                "important": sorted(ann.important_actor_ids),
                "brake": ann.brake_label,
                "goal": ann.goal_label,
            },
            sort_keys=True,
        )


def dumps_scenario(sc):
    return "\n".join(scenario_lines(sc)) + "\n"


def loads_scenario(text):
    records = [json.loads(line) for line in text.splitlines() if line.strip()]
    header = records[0]
    if header.get("type") != "header":
        raise ValueError("first record must be the scenario header")
    egos = [r for r in records if r["type"] == "ego"]
    ego = EgoTrack(
        pose=np.array([r["pose"] for r in egos], dtype=float),
        speed=np.array([r["speed"] for r in egos], dtype=float),
        yaw_rate=np.array([r["yaw_rate"] for r in egos], dtype=float),
        arclen=np.array([r["s"] for r in egos], dtype=float),
        planned_waypoints=np.array(header["route"], dtype=float),
        route_arclen=np.array(header["route_arclen"], dtype=float),
    )
    frames = header["frames"]
    actors = {}
    for spec in header["actors"]:
        actors[spec["id"]] = ActorTrack(
            actor_id=spec["id"],
            category=spec["category"],
            behavior=spec["behavior"],
            extent=tuple(spec["extent"]),
            pose=np.zeros((frames, 3)),
            velocity=np.zeros((frames, 2)),
            boxes=np.full((frames, 4), np.nan),
        )
    annotations = []
    for r in records:
        if r["type"] == "actor":
            a = actors[r["id"]]
            a.pose[r["f"]] = r["pose"]
            a.velocity[r["f"]] = r["velocity"]
            if r["box"] is not None:
                a.boxes[r["f"]] = r["box"]
        elif r["type"] == "annotation":
            annotations.append(FrameAnnotation(r["f"], frozenset(r["important"]), r["brake"], r["goal"]))
    annotations.sort(key=lambda a: a.frame_index)
    return Scenario(
        id=header["id"],
        seed=header["seed"],
        frame_rate=header["frame_rate"],
        frames=frames,
        maneuver=header["maneuver"],
        goal_labels=[a.goal_label for a in annotations] or [header["maneuver"]] * frames,
        ego=ego,
        actors=[actors[k] for k in sorted(actors)],
        camera=Camera(**header["camera"]),
        narrow_road=header["narrow_road"],
        conflict_radius_m=header["conflict_radius_m"],
        horizon_s=header["horizon_s"],
        brake_threshold_s=header["brake_threshold_s"],
        goal_mix=header["goal_mix"],
        annotations=annotations,
    )
