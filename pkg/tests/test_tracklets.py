from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oie.errors import InvalidNoise
from oie.scenario_sim import generate_scenario, labeled_frames
from oie.tracklets import (
    Detection,
    NoiseConfig,
    associate,
    build_proposals,
    clip_proposals,
    corrupt_detections,
)


class _Actor:
    def __init__(self, actor_id, box):
        self.actor_id = actor_id
        self._box = np.asarray(box, dtype=float)

    def box(self, frame):
        return self._box


def box_scene(count, W=1280, H=720):
    """Minimal scenario stand-in: ``count`` actors with fixed boxes."""
    rng = np.random.default_rng(0)
    actors = [_Actor(k, [rng.uniform(0, 1000), rng.uniform(0, 500), 50.0, 80.0]) for k in range(count)]
    return SimpleNamespace(actors=actors, camera=SimpleNamespace(width=W, height=H))


def moving(frames, start, step, actor_id=0, gaps=()):
    """Per-frame detection lists for one box moving by ``step`` each frame."""
    frames = list(frames)
    step = np.concatenate([np.asarray(step, float), [0.0, 0.0]])
    out = []
    for f in frames:
        if f in gaps:
            out.append([])
            continue
        box = np.asarray(start, float) + step * (f - frames[0])
        out.append([Detection(f, box, 1.0, actor_id)])
    return out


def merge(*tracks):
    return [sum(parts, []) for parts in zip(*tracks)]


class TestCorruptDetections:
    def test_zero_noise_is_identity(self):
        sc = generate_scenario(4)
        f = labeled_frames(sc)[0]
        dets = corrupt_detections(sc, f, NoiseConfig(), seed=1)
        assert sorted(d.true_actor_id for d in dets) == sorted(sc.visible_ids(f))
        for d in dets:
            np.testing.assert_array_equal(d.box, sc.actor(d.true_actor_id).box(f))

    def test_full_miss_rate(self):
        sc = box_scene(20)
        assert corrupt_detections(sc, 0, NoiseConfig(miss_rate=1.0), seed=1) == []

    def test_drop_fraction(self):
        sc = box_scene(100)
        kept = sum(len(corrupt_detections(sc, f, NoiseConfig(miss_rate=0.2), seed=3)) for f in range(100))
        assert abs(1.0 - kept / 10_000 - 0.2) < 0.01

    def test_seeded(self):
        sc = box_scene(10)
        noise = NoiseConfig(0.3, 2.0, 0.5)
        a = corrupt_detections(sc, 5, noise, seed=9)
        b = corrupt_detections(sc, 5, noise, seed=9)
        assert [d.box.tolist() for d in a] == [d.box.tolist() for d in b]

    def test_jittered_boxes_inside_image(self):
        sc = box_scene(50)
        for f in range(20):
            for d in corrupt_detections(sc, f, NoiseConfig(0.0, 30.0, 1.0), seed=2):
                assert d.box[0] >= 0 and d.box[1] >= 0 and d.box[2] > 0 and d.box[3] > 0
                assert d.box[0] + d.box[2] <= 1280 and d.box[1] + d.box[3] <= 720
                assert 0.0 <= d.confidence <= 1.0

    @pytest.mark.parametrize("noise", [NoiseConfig(miss_rate=1.2), NoiseConfig(false_positive_rate=-0.1)])
    def test_invalid_noise(self, noise):
        with pytest.raises(InvalidNoise):
            corrupt_detections(box_scene(1), 0, noise, seed=0)


class TestAssociate:
    def test_single_actor_one_track(self):
        tracks = associate(moving(range(30), [100, 100, 50, 80], [3, 0]))
        assert len(tracks) == 1
        assert sorted(tracks[0].boxes) == list(range(30))

    def test_two_crossing_actors_no_switch(self):
        # vertical offset keeps their mutual IoU below the threshold
        a = moving(range(30), [100, 100, 50, 80], [10, 0], actor_id=0)
        b = moving(range(30), [400, 160, 50, 80], [-10, 0], actor_id=1)
        tracks = associate(merge(a, b))
        assert len(tracks) == 2
        for trk in tracks:
            assert len(set(trk.true_ids.values())) == 1

    def test_one_frame_gap_is_bridged(self):
        dets = moving(range(10), [100, 100, 50, 80], [4, 2], gaps={5})
        tracks = associate(dets, max_age=2)
        assert len(tracks) == 1
        trk = tracks[0]
        assert 5 in trk.predicted
        np.testing.assert_allclose(trk.boxes[5], [120, 110, 50, 80])

    def test_long_gap_splits(self):
        dets = moving(range(12), [100, 100, 50, 80], [0, 0], gaps={4, 5, 6})
        assert len(associate(dets, max_age=2)) == 2

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_order_invariance(self, seed):
        rng = np.random.default_rng(seed)
        base = [moving(range(15), [rng.uniform(0, 900), rng.uniform(0, 500), 60, 90], rng.normal(0, 5, 2), k) for k in range(4)]
        frames = merge(*base)
        shuffled = [[f[i] for i in rng.permutation(len(f))] for f in frames]
        a = associate(frames)
        b = associate(shuffled)
        assert len(a) == len(b)
        for x, y in zip(a, b):
            assert sorted(x.boxes) == sorted(y.boxes)
            for k in x.boxes:
                np.testing.assert_array_equal(x.boxes[k], y.boxes[k])


class TestBuildProposals:
    def test_full_track(self):
        links = build_proposals(associate(moving(range(30), [100, 100, 50, 80], [1, 0])), 29, 30)
        assert len(links) == 1 and links[0].mask.all()

    def test_late_start_is_front_padded(self):
        dets = [[] for _ in range(25)] + moving(range(25, 30), [100, 100, 50, 80], [1, 0])
        link = build_proposals(associate(dets), 29, 30)[0]
        assert link.mask.tolist() == [False] * 25 + [True] * 5
        assert np.all(link.boxes[:25] == 0.0)

    def test_track_ending_early_excluded(self):
        dets = moving(range(20), [100, 100, 50, 80], [1, 0]) + [[] for _ in range(10)]
        assert build_proposals(associate(dets), 29, 30) == []


class TestInvariants:
    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 500), st.floats(0.0, 0.4), st.floats(0.0, 4.0), st.floats(0.0, 1.0))
    def test_prefix_mask_and_real_last_box(self, seed, miss, jitter, fp):
        sc = generate_scenario(seed)
        noise = NoiseConfig(miss, jitter, fp)
        for end in labeled_frames(sc)[:3]:
            frames = range(end - 29, end + 1)
            tracks = associate([corrupt_detections(sc, f, noise, seed) for f in frames])
            links = build_proposals(tracks, end, 30)
            assert len(links) <= len(tracks)
            for lk in links:
                first = lk.first_valid
                assert not lk.mask[:first].any() and lk.mask[first:].all()
                assert np.all(lk.boxes[~lk.mask] == 0.0)
                assert lk.last_frame_box[2] > 0 and lk.last_frame_box[3] > 0

    @settings(max_examples=15, deadline=None)
    @given(st.integers(0, 500))
    def test_zero_noise_bijection(self, seed):
        sc = generate_scenario(seed)
        for end in labeled_frames(sc):
            links = clip_proposals(sc, end, 30, NoiseConfig(), seed)
            ids = [lk.true_actor_id for lk in links]
            assert sorted(ids) == sorted(sc.visible_ids(end))
