import dataclasses
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oie.errors import InvalidConfig, ZeroVelocity
from oie.path_geometry import ir_profile_from_can
from oie.scenario_sim import (
    FRAME_RATE,
    GOALS,
    PEDESTRIAN_EXTENT,
    VEHICLE_EXTENT,
    ActorTrack,
    Camera,
    Scenario,
    ScenarioConfig,
    _build_ego,
    annotate,
    conflict_times,
    derive_can,
    dumps_scenario,
    generate_scenario,
    label_brake,
    label_importance,
    labeled_frames,
    loads_scenario,
    mirror_scenario,
    project_boxes,
    project_to_image,
    turn_interval,
)


def hand_scenario(maneuver, v_ego, movers, frames=None):
    """Scenario with an analytic ego route and hand-specified actors.

    ``movers`` holds ``(category, behavior, start_xy, velocity_xy)`` tuples for
    constant-velocity actors.
    """
    ego, n = _build_ego(maneuver, v_ego)
    frames = frames or n
    camera = Camera()
    t = np.arange(frames) / FRAME_RATE
    actors = []
    for k, (category, behavior, start, vel) in enumerate(movers):
        vel = np.asarray(vel, dtype=float)
        pos = np.asarray(start, dtype=float)[None, :] + t[:, None] * vel[None, :]
        yaw = np.full(frames, np.arctan2(vel[1], vel[0]) if vel.any() else 0.5 * np.pi)
        pose = np.column_stack([pos, yaw])
        extent = PEDESTRIAN_EXTENT if category == "person" else VEHICLE_EXTENT
        boxes = project_boxes(pose, extent, ego.pose[:frames], camera)
        actors.append(ActorTrack(k, category, behavior, extent, pose, np.tile(vel, (frames, 1)), boxes))
    sc = Scenario(
        id="hand",
        seed=0,
        frame_rate=FRAME_RATE,
        frames=frames,
        maneuver=maneuver,
        goal_labels=[maneuver] * frames,
        ego=ego,
        actors=actors,
        camera=camera,
        narrow_road=False,
        conflict_radius_m=2.5,
        horizon_s=5.0,
        brake_threshold_s=3.0,
        goal_mix={maneuver: 1.0},
    )
    sc.annotations = annotate(sc)
    return sc


def brute_force_conflicts(sc, frame, dt=0.01):
    """Independent time-stepped check of the route-conflict rule."""
    ego = sc.ego
    s0, v = ego.arclen[frame], ego.speed[frame]
    out = {}
    for a in sc.actors:
        if a.box(frame) is None:
            continue
        a0, vel = a.pose[frame, :2], a.velocity[frame]
        parked = a.behavior == "parked-vehicle" or not vel.any()
        for te in np.arange(0.0, sc.horizon_s + 1e-12, dt):
            p = np.array([np.interp(s0 + v * te, ego.route_arclen, ego.planned_waypoints[:, k]) for k in (0, 1)])
            taus = np.array([0.0]) if parked else np.arange(0.0, te + 1e-12, dt)
            pos = a0[None, :] + taus[:, None] * vel[None, :]
            if np.min(np.hypot(*(pos - p).T)) < sc.conflict_radius_m:
                out[a.actor_id] = te
                break
    return out


@pytest.fixture(scope="module")
def default_scenarios():
    return [generate_scenario(s) for s in range(300)]


class TestGeneration:
    def test_deterministic_bytes(self):
        assert dumps_scenario(generate_scenario(7)) == dumps_scenario(generate_scenario(7))

    def test_different_seeds_differ(self):
        assert dumps_scenario(generate_scenario(7)) != dumps_scenario(generate_scenario(8))

    def test_serialization_round_trip(self):
        sc = generate_scenario(3)
        text = dumps_scenario(sc)
        assert dumps_scenario(loads_scenario(text)) == text

    def test_right_turn_mix_yaws_right(self):
        cfg = ScenarioConfig(goal_mix={"Rt": 1.0})
        for seed in range(5):
            sc = generate_scenario(seed, cfg)
            assert sc.maneuver == "Rt"
            start, end = turn_interval("Rt")
            f = int(np.argmax(sc.ego.arclen > 0.5 * (start + end)))
            assert derive_can(sc.ego, f, 1).yaw_rate[0] > 0

    def test_goal_frame_proportions(self, default_scenarios):
        counts = Counter(g for sc in default_scenarios for g in sc.goal_labels)
        total = sum(counts.values())
        for g in GOALS:
            assert abs(counts[g] / total - 1 / 3) < 0.10

    def test_frames_cover_a_clip(self, default_scenarios):
        assert min(sc.frames for sc in default_scenarios) >= 30
        assert all(set(sc.goal_labels) <= set(GOALS) for sc in default_scenarios)

    @pytest.mark.parametrize(
        "change",
        [
            {"behavior_weights": {}},
            {"behavior_weights": {"crossing-pedestrian": 0.0}},
            {"actor_count": (3, 1)},
            {"pedestrian_speed": (0.0, 1.0)},
            {"horizon_s": 0.0},
            {"crossing_yield_prob": 1.5},
            {"standing_pedestrian_prob": 0.7, "hesitant_pedestrian_prob": 0.7},
        ],
    )
    def test_invalid_config(self, change):
        with pytest.raises(InvalidConfig):
            generate_scenario(0, dataclasses.replace(ScenarioConfig(), **change))

    def test_ego_kinematics_consistent(self, default_scenarios):
        for sc in default_scenarios[:30]:
            e = sc.ego
            dyaw = np.diff(np.unwrap(e.pose[:, 2])) * FRAME_RATE
            mid = 0.5 * (e.yaw_rate[1:] + e.yaw_rate[:-1])
            turning = np.abs(mid) > 1e-6
            # away from the arc ends the rate is constant
            inner = turning & np.roll(turning, 1) & np.roll(turning, -1)
            if inner.any():
                assert np.all(np.abs(dyaw[inner] - mid[inner]) <= 0.05 * np.abs(mid[inner]))
            assert np.all(np.abs(dyaw[~turning & ~np.roll(turning, 1) & ~np.roll(turning, -1)]) < 1e-9)


class TestProjection:
    ego = np.array([0.0, 0.0, 0.5 * np.pi])

    def test_behind_is_absent(self):
        assert project_to_image(np.array([0.0, -10.0, 0.5 * np.pi]), VEHICLE_EXTENT, self.ego, Camera()) is None

    def test_centered_ahead(self):
        box = project_to_image(np.array([0.0, 10.0, 0.5 * np.pi]), VEHICLE_EXTENT, self.ego, Camera())
        assert abs(box[0] + 0.5 * box[2] - Camera().cx) < 1.0

    def test_similar_triangles(self):
        cam = Camera(focal=600.0)
        box = project_to_image(np.array([0.0, 10.0, 0.5 * np.pi]), VEHICLE_EXTENT, self.ego, cam)
        length, width, height = VEHICLE_EXTENT
        near = 10.0 - 0.5 * length - cam.mount_forward
        assert abs(box[2] - 600.0 * width / near) < 1.0
        assert abs(box[3] - 600.0 * height / near) < 1.0

    def test_boxes_inside_image(self, default_scenarios):
        for sc in default_scenarios[:40]:
            W, H = sc.camera.width, sc.camera.height
            for a in sc.actors:
                b = a.boxes[~np.isnan(a.boxes[:, 0])]
                assert np.all(b[:, 2] > 0) and np.all(b[:, 3] > 0)
                assert np.all(b[:, 0] >= 0) and np.all(b[:, 1] >= 0)
                assert np.all(b[:, 0] + b[:, 2] <= W + 1e-9) and np.all(b[:, 1] + b[:, 3] <= H + 1e-9)


class TestImportance:
    def test_no_actors(self):
        sc = hand_scenario("St", 6.0, [])
        assert label_importance(sc, 10) == frozenset()
        assert label_brake(sc, 10) == 0

    def test_pedestrian_on_right_exit_arm(self):
        # walker on the east crosswalk, in the middle of the ego's right-turn exit lane
        walker = ("person", "crossing-pedestrian", (9.5, -1.75), (0.0, 0.0))
        rt = hand_scenario("Rt", 5.0, [walker])
        lt = hand_scenario("Lt", 5.0, [walker])
        f = int(np.argmax(rt.ego.arclen > 20.0))
        assert 0 in label_importance(rt, f)
        assert 0 not in label_importance(lt, f)

    @pytest.mark.parametrize(
        "movers",
        [
            [
                ("person", "crossing-pedestrian", (-6.0, 10.0), (1.4, 0.0)),
                ("vehicle", "crossing-vehicle", (30.0, 1.75), (-8.0, 0.0)),
            ],
            [
                ("vehicle", "oncoming-vehicle", (-1.75, 40.0), (0.0, -6.0)),
                ("person", "crossing-pedestrian", (12.0, -9.5), (0.0, 1.2)),
            ],
        ],
    )
    @pytest.mark.parametrize("maneuver", ["Lt", "St", "Rt"])
    def test_brute_force_oracle(self, movers, maneuver):
        sc = hand_scenario(maneuver, 5.0, movers)
        for f in range(0, sc.frames, 45):
            fast = conflict_times(sc, f)
            slow = brute_force_conflicts(sc, f)
            assert set(fast) == set(slow)
            for k in fast:
                assert abs(fast[k] - slow[k]) < 0.05

    def test_brake_flips_at_threshold(self):
        # a stopped car straight ahead; time to conflict shrinks at the ego speed
        v = 6.0
        sc = hand_scenario("St", v, [("vehicle", "lead-vehicle", (1.75, 20.0), (0.0, 0.0))])
        seen = []
        for f in range(sc.frames):
            times = conflict_times(sc, f)
            if 0 not in times:
                continue
            assert label_brake(sc, f) == int(times[0] < 3.0)
            seen.append((times[0], label_brake(sc, f)))
        ys = {b for _, b in seen}
        assert ys == {0, 1}
        # closed form: the ego reaches the conflict disc at 20 - r + 32.5 m of route
        s_hit = 20.0 - 2.5 + 32.5
        for f in range(sc.frames):
            ttc = (s_hit - sc.ego.arclen[f]) / v
            visible = sc.actors[0].box(f) is not None
            if visible and 0 < ttc < 5.0 and abs(ttc - 3.0) > 0.05:
                assert label_brake(sc, f) == int(ttc < 3.0)

    def test_important_actors_are_visible(self, default_scenarios):
        for sc in default_scenarios[:100]:
            for ann in sc.annotations:
                assert ann.important_actor_ids <= set(sc.visible_ids(ann.frame_index))
                if ann.brake_label:
                    assert ann.important_actor_ids

    def test_zero_velocity_ego_rejected(self):
        sc = hand_scenario("St", 6.0, [("vehicle", "lead-vehicle", (1.75, 20.0), (0.0, 0.0))])
        sc.ego.speed[5] = 0.0
        with pytest.raises(ZeroVelocity):
            conflict_times(sc, 5)


class TestCan:
    def test_straight_zero_yaw(self):
        ego, _ = _build_ego("St", 6.0)
        assert np.all(derive_can(ego, 10).yaw_rate == 0.0)

    def test_unit_conversion(self):
        ego, _ = _build_ego("St", 5.0)
        assert np.all(derive_can(ego, 0).velocity == 18.0)

    @pytest.mark.parametrize("maneuver", ["Lt", "Rt"])
    def test_turn_yaw_rate(self, maneuver):
        from oie.scenario_sim import INTERSECTION_HALF, LANE_CENTER

        v = 4.5
        R = INTERSECTION_HALF + (LANE_CENTER if maneuver == "Lt" else -LANE_CENTER)
        ego, _ = _build_ego(maneuver, v)
        start, end = turn_interval(maneuver)
        f = int(np.argmax(ego.arclen > start + 1.0))
        yaw = derive_can(ego, f, 5).yaw_rate
        expected = np.degrees(v / R) * (-1 if maneuver == "Lt" else 1)
        assert np.all(np.abs(yaw - expected) <= 0.02 * abs(expected))

    def test_zero_speed_rejected(self):
        ego, _ = _build_ego("St", 5.0)
        ego.speed[3] = 0.0
        with pytest.raises(ZeroVelocity):
            derive_can(ego, 0)


class TestInvariants:
    def test_goal_label_signatures(self, default_scenarios):
        for sc in default_scenarios[:60]:
            interval = turn_interval(sc.maneuver)
            lo, hi = interval if interval else (25.0, 40.0)
            frames = [f for f in range(sc.frames) if lo <= sc.ego.arclen[f] <= hi - 1.0]
            means = [ir_profile_from_can(derive_can(sc.ego, f)).values.mean() for f in frames]
            label = sc.goal_labels[frames[0]]
            if label == "Lt":
                assert max(means) < 0
            elif label == "Rt":
                assert min(means) > 0
            else:
                assert max(abs(m) for m in means) <= 0.002

    @settings(max_examples=12, deadline=None)
    @given(st.integers(0, 10_000))
    def test_mirror_symmetry(self, seed):
        sc = generate_scenario(seed)
        m = mirror_scenario(sc)
        swap = {"Lt": "Rt", "St": "St", "Rt": "Lt"}
        assert m.goal_labels == [swap[g] for g in sc.goal_labels]
        for a, b in zip(sc.annotations, m.annotations):
            assert a.important_actor_ids == b.important_actor_ids
            assert a.brake_label == b.brake_label

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 10_000))
    def test_determinism_property(self, seed):
        assert dumps_scenario(generate_scenario(seed)) == dumps_scenario(generate_scenario(seed))

    def test_labeled_frames_cadence(self):
        sc = generate_scenario(1)
        frames = labeled_frames(sc, 30, 30)
        assert frames and all((f + 1) % 30 == 0 and f >= 29 for f in frames)
        assert frames[-1] < sc.frames
