"""Ranking metrics and the per-goal / per-category evaluation protocol."""

from dataclasses import dataclass, field

import numpy as np

from oie import kernels
from oie.errors import LengthMismatch, NoPositives

MATCH_IOU = 0.5
SUBSETS = ("Lt", "St", "Rt", "All")
CATEGORIES = ("person", "vehicle")


@dataclass(frozen=True)
class Prediction:
    clip_id: str
    link_id: int
    importance_prob: float
    last_frame_box: np.ndarray
    goal_tag: str

    def __post_init__(self):
        if not 0.0 <= self.importance_prob <= 1.0:
            raise ValueError(f"probability {self.importance_prob} outside [0, 1]")


@dataclass(frozen=True)
class MatchResult:
    link_index: int
    gt_index: object  # int, or None when unmatched
    iou: float


@dataclass
class MetricsReport:
    baseline: str
    fold: str
    ap: dict = field(default_factory=dict)  # subset -> percent or None
    category_ap: dict = field(default_factory=dict)  # person/vehicle/mAP -> percent or None
    counts: dict = field(default_factory=dict)  # subset -> (positives, items)


def iou(box_a, box_b):
    """Intersection over union of two (left, top, width, height) boxes."""
    a = np.asarray(box_a, dtype=float).reshape(1, 4)
    b = np.asarray(box_b, dtype=float).reshape(1, 4)
    return float(kernels.iou_matrix(a, b)[0, 0])


def match_predictions(pred_boxes, gt_boxes, threshold=MATCH_IOU):
    """Greedy one-to-one matching in descending IoU; IoU must exceed ``threshold``."""
    P = np.asarray(pred_boxes, dtype=float).reshape(-1, 4)
    G = np.asarray(gt_boxes, dtype=float).reshape(-1, 4)
    M = kernels.iou_matrix(P, G)
    pairs = [(-M[i, j], i, j) for i in range(len(P)) for j in range(len(G)) if M[i, j] > threshold]
    pairs.sort()
    used_p, used_g = {}, set()
    for neg, i, j in pairs:
        if i in used_p or j in used_g:
            continue
        used_p[i] = (j, -neg)
        used_g.add(j)
    out = []
    for i in range(len(P)):
        if i in used_p:
            j, v = used_p[i]
            out.append(MatchResult(i, j, v))
        else:
            best = float(M[i].max()) if len(G) else 0.0
            out.append(MatchResult(i, None, best))
    return out


def average_precision(scores, labels):
    """Non-interpolated AP in percent; ties keep input order."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=np.float64)
    if len(scores) != len(labels):
        raise LengthMismatch("scores and labels differ in length")
    npos = labels.sum()
    if npos <= 0:
        raise NoPositives("average precision needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    return 100.0 * kernels.ranked_precision_sum(np.ascontiguousarray(labels[order])) / npos


def precision_recall_curve(scores, labels):
    """(recall, precision) after each rank of the stable descending order."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    order = np.argsort(-scores, kind="stable")
    hits = np.cumsum(labels[order])
    ranks = np.arange(1, len(labels) + 1)
    return hits / max(labels.sum(), 1.0), hits / ranks


def brake_fuse(weights, scores):
    """Importance-weighted sum of per-object brake scores (0 for no objects)."""
    weights = np.asarray(weights, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if weights.shape != scores.shape:
        raise LengthMismatch(f"{weights.shape} weights vs {scores.shape} scores")
    if weights.size == 0:
        return 0.0
    return float(np.dot(weights, scores))


# ---------------------------------------------------------------------------
# protocol
# ---------------------------------------------------------------------------


@dataclass
class ClipTruth:
    """Ground truth needed to score one clip's proposals."""

    clip_id: str
    goal: str
    important_boxes: np.ndarray  # (k, 4) at the clip's last frame
    visible_boxes: np.ndarray  # (m, 4)
    visible_categories: list
    brake: int = 0


def link_labels(link_boxes, truth):
    """1 for links matched to an important object, plus the unmatched-GT count."""
    matches = match_predictions(link_boxes, truth.important_boxes)
    labels = np.array([0 if m.gt_index is None else 1 for m in matches], dtype=np.int64)
    missed = len(truth.important_boxes) - int(labels.sum())
    return labels, missed


def link_categories(link_boxes, truth):
    matches = match_predictions(link_boxes, truth.visible_boxes)
    return [None if m.gt_index is None else truth.visible_categories[m.gt_index] for m in matches]


def build_items(truths, link_boxes, scores):
    """Flatten clips into scored items.

    Each item is ``(score, label, goal, category)``; unmatched important objects
    become zero-score positives with category None.
    """
    items = []
    for truth, boxes, sc in zip(truths, link_boxes, scores):
        boxes = np.asarray(boxes, dtype=float).reshape(-1, 4)
        sc = np.asarray(sc, dtype=float)
        if len(sc) != len(boxes):
            raise LengthMismatch(f"clip {truth.clip_id}: {len(sc)} scores for {len(boxes)} links")
        labels, missed = link_labels(boxes, truth)
        cats = link_categories(boxes, truth)
        for s, lab, cat in zip(sc.tolist(), labels.tolist(), cats):
            items.append((s, lab, truth.goal, cat))
        items.extend((0.0, 1, truth.goal, None) for _ in range(missed))
    return items


def _ap_or_none(items):
    if not items:
        return None, (0, 0)
    scores = [it[0] for it in items]
    labels = [it[1] for it in items]
    pos = int(sum(labels))
    try:
        return average_precision(scores, labels), (pos, len(items))
    except NoPositives:
        return None, (pos, len(items))


def evaluate(truths, link_boxes, scores, split_by="goal", baseline="", fold=""):
    """AP per goal subset (and All) and per-category AP / mAP."""
    items = build_items(truths, link_boxes, scores)
    report = MetricsReport(baseline=baseline, fold=fold)
    if split_by in ("goal", "none"):
        groups = {"All": items}
        if split_by == "goal":
            for g in ("Lt", "St", "Rt"):
                groups[g] = [it for it in items if it[2] == g]
        for name in SUBSETS:
            if name in groups:
                report.ap[name], report.counts[name] = _ap_or_none(groups[name])
    if split_by in ("goal", "category"):
        aps = []
        for cat in CATEGORIES:
            value, _ = _ap_or_none([it for it in items if it[3] == cat])
            report.category_ap[cat] = value
            if value is not None:
                aps.append(value)
        report.category_ap["mAP"] = float(np.mean(aps)) if aps else None
    if split_by not in ("goal", "none", "category"):
        raise ValueError(f"unknown split {split_by!r}")
    return report
