"""Text artifacts shared by the pipeline stages.

Every artifact starts with a ``# key=value`` provenance header carrying the
hash of the configuration that produced it. JSON floats use the shortest
round-trip repr, so reading and rewriting an artifact is byte-stable.
"""

import json
from pathlib import Path

import numpy as np

from oie.errors import IoFailure, MissingPrerequisite, ProvenanceMismatch
from oie.evaluation import ClipTruth
from oie.experiments import ClipRecord


def header(**meta):
    return "".join(f"# {k}={meta[k]}\n" for k in sorted(meta))


def read_header(text):
    meta = {}
    for line in text.splitlines():
        if not line.startswith("# "):
            break
        key, _, value = line[2:].partition("=")
        meta[key] = value
    return meta


def _body(text):
    return [line for line in text.splitlines() if line and not line.startswith("#")]


def read_text(path, what=None):
    path = Path(path)
    if not path.exists():
        raise MissingPrerequisite(f"missing {what or 'artifact'}: {path}")
    try:
        return path.read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def require_hash(meta, key, expected, path):
    found = meta.get(key)
    if found != expected:
        raise ProvenanceMismatch(f"{path}: {key}={found}, expected {expected}")


# ---------------------------------------------------------------------------
# clips
# ---------------------------------------------------------------------------


def _arr(a):
    return np.asarray(a).tolist()


def clip_record(clip):
    t = clip.truth
    return {
        "clip_id": clip.clip_id,
        "scenario_id": clip.scenario_id,
        "fold": clip.fold,
        "goal": clip.goal,
        "clip_end": clip.clip_end,
        "ir": _arr(clip.ir),
        "link_boxes": _arr(clip.link_boxes),
        "link_masks": _arr(clip.link_masks.astype(int)),
        "features": _arr(clip.features),
        "link_true_ids": clip.link_true_ids,
        "labels": _arr(clip.labels),
        "truth": {
            "important_boxes": _arr(t.important_boxes),
            "visible_boxes": _arr(t.visible_boxes),
            "visible_categories": list(t.visible_categories),
            "brake": int(t.brake),
        },
    }


def clip_from_record(rec):
    k = len(rec["labels"])
    n, L = len(rec["ir"]), len(rec["ir"][0]) if rec["ir"] else 0
    feats = np.array(rec["features"], dtype=float)
    dim = feats.shape[2] if feats.ndim == 3 else 0
    t = rec["truth"]
    truth = ClipTruth(
        clip_id=rec["clip_id"],
        goal=rec["goal"],
        important_boxes=np.array(t["important_boxes"], dtype=float).reshape(-1, 4),
        visible_boxes=np.array(t["visible_boxes"], dtype=float).reshape(-1, 4),
        visible_categories=list(t["visible_categories"]),
        brake=int(t["brake"]),
    )
    return ClipRecord(
        clip_id=rec["clip_id"],
        scenario_id=rec["scenario_id"],
        fold=rec["fold"],
        goal=rec["goal"],
        clip_end=int(rec["clip_end"]),
        ir=np.array(rec["ir"], dtype=float).reshape(n, L),
        link_boxes=np.array(rec["link_boxes"], dtype=float).reshape(k, n, 4),
        link_masks=np.array(rec["link_masks"], dtype=bool).reshape(k, n),
        features=feats.reshape(k, n, dim) if k else np.zeros((0, n, dim)),
        truth=truth,
        link_true_ids=list(rec["link_true_ids"]),
        labels=np.array(rec["labels"], dtype=np.int64).reshape(k),
    )


def dumps_clips(clips, **meta):
    lines = [json.dumps(clip_record(c), sort_keys=True) for c in clips]
    return header(**meta) + "".join(line + "\n" for line in lines)


def loads_clips(text):
    return [clip_from_record(json.loads(line)) for line in _body(text)]


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def dumps_key_values(values, **meta):
    """``key = value`` lines; values are JSON (null for undefined AP)."""
    return header(**meta) + "".join(f"{k} = {json.dumps(values[k])}\n" for k in sorted(values))


def loads_key_values(text):
    out = {}
    for line in _body(text):
        key, _, raw = line.partition(" = ")
        out[key] = json.loads(raw)
    return out
