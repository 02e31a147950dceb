"""Object proposals: corrupted detections, greedy IoU tracking and tracklinks.

The tracker is deliberately small: constant-velocity box prediction, greedy
IoU matching and a fixed miss budget. Proposals keep only tracks alive at
the clip's last frame and zero-pad the frames before a track starts.
"""

from dataclasses import dataclass, field

import numpy as np

from oie import kernels
from oie.errors import InvalidNoise


@dataclass(frozen=True)
class NoiseConfig:
    miss_rate: float = 0.0
    jitter_px: float = 0.0
    false_positive_rate: float = 0.0  # probability of one spurious box per frame

    def validate(self):
        for name in ("miss_rate", "false_positive_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidNoise(f"{name}={value} outside [0, 1]")
        if self.jitter_px < 0:
            raise InvalidNoise("jitter_px must be non-negative")


@dataclass(frozen=True)
class Detection:
    frame_index: int
    box: np.ndarray  # left, top, width, height
    confidence: float
    true_actor_id: object = None  # hidden from the model; None for false positives


@dataclass
class RawTrack:
    track_id: int
    boxes: dict = field(default_factory=dict)  # frame -> box
    true_ids: dict = field(default_factory=dict)  # frame -> actor id or None
    predicted: set = field(default_factory=set)  # frames filled by prediction
    last_frame: int = -1
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(4))
    misses: int = 0

    def predict(self, frame):
        last = self.boxes[self.last_frame]
        return last + self.velocity * (frame - self.last_frame)


@dataclass(frozen=True)
class TrackLink:
    link_id: int
    clip_end: int
    boxes: np.ndarray  # (n, 4), zero rows where padded
    mask: np.ndarray  # (n,) bool
    true_actor_id: object = None

    @property
    def n(self):
        return len(self.mask)

    @property
    def last_frame_box(self):
        return self.boxes[-1]

    @property
    def first_valid(self):
        return int(np.argmax(self.mask))


def _clip_box(box, width, height):
    left = min(max(box[0], 0.0), width)
    top = min(max(box[1], 0.0), height)
    right = min(max(box[0] + box[2], 0.0), width)
    bottom = min(max(box[1] + box[3], 0.0), height)
    return np.array([left, top, right - left, bottom - top])


def corrupt_detections(scenario, frame_index, noise, seed):
    """Detections at one frame: drops, jitter and false positives, seeded."""
    noise.validate()
    rng = np.random.default_rng([int(seed), int(frame_index)])
    W, H = scenario.camera.width, scenario.camera.height
    out = []
    for actor in scenario.actors:
        box = actor.box(frame_index)
        drop = rng.random() < noise.miss_rate
        jitter = rng.normal(0.0, 1.0, size=4)
        conf = float(rng.uniform(0.5, 1.0))
        if box is None or drop:
            continue
        if noise.jitter_px > 0:
            x0, y0 = box[0] + noise.jitter_px * jitter[0], box[1] + noise.jitter_px * jitter[1]
            x1 = box[0] + box[2] + noise.jitter_px * jitter[2]
            y1 = box[1] + box[3] + noise.jitter_px * jitter[3]
            x0, x1 = min(x0, x1 - 1.0), max(x1, x0 + 1.0)
            y0, y1 = min(y0, y1 - 1.0), max(y1, y0 + 1.0)
            box = _clip_box(np.array([x0, y0, x1 - x0, y1 - y0]), W, H)
            if box[2] <= 0 or box[3] <= 0:
                continue
        else:
            box = np.array(box, dtype=float)
        out.append(Detection(frame_index, box, conf, actor.actor_id))
    if rng.random() < noise.false_positive_rate:
        w = float(rng.uniform(20.0, 120.0))
        h = float(rng.uniform(20.0, 120.0))
        left = float(rng.uniform(0.0, W - w))
        top = float(rng.uniform(0.0, H - h))
        out.append(Detection(frame_index, np.array([left, top, w, h]), float(rng.uniform(0.0, 0.6)), None))
    return out


def _det_key(det):
    b = det.box
    tid = -1 if det.true_actor_id is None else det.true_actor_id
    return (float(b[0]), float(b[1]), float(b[2]), float(b[3]), tid)


def associate(detections_per_frame, match_threshold=0.3, max_age=2):
    """Greedy IoU tracking over an ordered sequence of per-frame detection lists.

    Returns every track ever created, ordered by creation.
    """
    tracks = []
    active = []
    for dets in detections_per_frame:
        if not dets:
            frame = None
        else:
            frame = dets[0].frame_index
        dets = sorted(dets, key=_det_key)
        if frame is not None and active:
            pred = np.array([t.predict(frame) for t in active])
            boxes = np.array([d.box for d in dets])
            iou = kernels.iou_matrix(pred, boxes)
            pairs = [
                (-iou[i, j], j, i)
                for i in range(len(active))
                for j in range(len(dets))
                if iou[i, j] >= match_threshold
            ]
            pairs.sort()
            used_t, used_d = set(), set()
            for _, j, i in pairs:
                if i in used_t or j in used_d:
                    continue
                used_t.add(i)
                used_d.add(j)
                _update(active[i], dets[j])
        else:
            used_t, used_d = set(), set()
        survivors = []
        for i, trk in enumerate(active):
            if i not in used_t:
                trk.misses += 1
            if trk.misses <= max_age:
                survivors.append(trk)
        for j, det in enumerate(dets):
            if j in used_d:
                continue
            trk = RawTrack(track_id=len(tracks))
            trk.boxes[det.frame_index] = np.array(det.box, dtype=float)
            trk.true_ids[det.frame_index] = det.true_actor_id
            trk.last_frame = det.frame_index
            tracks.append(trk)
            survivors.append(trk)
        active = survivors
    return tracks


def _update(trk, det):
    frame = det.frame_index
    box = np.array(det.box, dtype=float)
    gap = frame - trk.last_frame
    last = trk.boxes[trk.last_frame]
    # fill skipped frames with the constant-velocity prediction
    for k in range(1, gap):
        trk.boxes[trk.last_frame + k] = last + trk.velocity * k
        trk.true_ids[trk.last_frame + k] = trk.true_ids[trk.last_frame]
        trk.predicted.add(trk.last_frame + k)
    trk.velocity = (box - last) / gap
    trk.boxes[frame] = box
    trk.true_ids[frame] = det.true_actor_id
    trk.last_frame = frame
    trk.misses = 0


def build_proposals(tracks, clip_end, n):
    """Tracklinks for the n-frame clip ending at ``clip_end``."""
    if n < 1:
        raise ValueError("clip length must be at least 1")
    start = clip_end - n + 1
    links = []
    for trk in tracks:
        if trk.last_frame != clip_end or clip_end not in trk.boxes:
            continue
        boxes = np.zeros((n, 4))
        mask = np.zeros(n, dtype=bool)
        for k in range(n):
            box = trk.boxes.get(start + k)
            if box is not None:
                boxes[k] = box
                mask[k] = True
        # a track is contiguous from its first box to clip_end
        first = int(np.argmax(mask))
        mask[first:] = True
        links.append(
            TrackLink(
                link_id=len(links),
                clip_end=clip_end,
                boxes=boxes,
                mask=mask,
                true_actor_id=trk.true_ids.get(clip_end),
            )
        )
    return links


def clip_proposals(scenario, clip_end, n, noise, seed, match_threshold=0.3, max_age=2):
    """Detection, association and proposal building for one clip."""
    frames = range(clip_end - n + 1, clip_end + 1)
    per_frame = [corrupt_detections(scenario, f, noise, seed) for f in frames]
    tracks = associate(per_frame, match_threshold=match_threshold, max_age=max_age)
    links = build_proposals(tracks, clip_end, n)
    # gap-filling predictions can drift past the image border
    W, H = scenario.camera.width, scenario.camera.height
    for lk in links:
        for k in np.flatnonzero(lk.mask):
            lk.boxes[k] = _clip_box(lk.boxes[k], W, H)
    return links
