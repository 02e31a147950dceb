"""Benchmark assembly: clips from scenarios, folds, baselines, brake fusion."""

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from oie import model as M
from oie.errors import UnknownBaseline
from oie.evaluation import ClipTruth, average_precision, brake_fuse, evaluate, link_labels
from oie.features import FeatureConfig, assemble_sequence, goal_input
from oie.scenario_sim import labeled_frames
from oie.tracklets import NoiseConfig, clip_proposals

PARTS = ("P1", "P2", "P3")
BASELINES = ("upperBound", "randomChance", "visual", "visualImage", "goalGeometry", "goalVisual")
TRAINED = {
    # name -> (variant, use_goal, target)
    "goalVisual": ("recurrent", True, "importance"),
    "visual": ("recurrent", False, "importance"),
    "visualImage": ("image", False, "importance"),
    "brake": ("recurrent", False, "brake"),
}


@dataclass(frozen=True)
class DataSettings:
    n: int = 30
    label_every: int = 30
    noise: NoiseConfig = field(default_factory=lambda: NoiseConfig(0.05, 2.0, 0.1))
    features: FeatureConfig = field(default_factory=FeatureConfig)
    match_threshold: float = 0.3
    max_age: int = 2
    noise_seed: int = 0


@dataclass
class ClipRecord:
    clip_id: str
    scenario_id: str
    fold: str
    goal: str
    clip_end: int
    ir: np.ndarray  # (n, L)
    link_boxes: np.ndarray  # (k, n, 4)
    link_masks: np.ndarray  # (k, n) bool
    features: np.ndarray  # (k, n, F)
    truth: ClipTruth
    link_true_ids: list
    labels: np.ndarray  # (k,) importance label of each link

    @property
    def last_boxes(self):
        return self.link_boxes[:, -1, :]

    @property
    def brake(self):
        return self.truth.brake


def assign_folds(seeds):
    """Round-robin over sorted seeds: P1, P2, P3, P1, ..."""
    return {int(s): PARTS[i % 3] for i, s in enumerate(sorted(int(s) for s in seeds))}


def _scenario_noise_seed(noise_seed, scenario_seed):
    return int(np.random.SeedSequence([int(noise_seed), int(scenario_seed)]).generate_state(1)[0])


def build_clips(scenario, settings=None, fold="", appearance=None):
    """Proposals, features, goal input and ground truth for each labeled frame.

    ``appearance``, when given, is called as ``appearance(scenario, link)`` and
    must return an ``(n, k)`` array with the same ``k`` for every link.
    """
    st = settings or DataSettings()
    n = st.n
    seed = _scenario_noise_seed(st.noise_seed, scenario.seed)
    W, H = scenario.camera.width, scenario.camera.height
    bins = st.features.bins
    out = []
    for end in labeled_frames(scenario, n, st.label_every):
        links = clip_proposals(scenario, end, n, st.noise, seed, st.match_threshold, st.max_age)
        ann = scenario.annotations[end]
        imp = sorted(ann.important_actor_ids)
        vis = scenario.visible_ids(end)
        truth = ClipTruth(
            clip_id=f"{scenario.id}_{end:04d}",
            goal=ann.goal_label,
            important_boxes=np.array([scenario.actor(a).box(end) for a in imp]).reshape(-1, 4),
            visible_boxes=np.array([scenario.actor(a).box(end) for a in vis]).reshape(-1, 4),
            visible_categories=[scenario.actor(a).category for a in vis],
            brake=ann.brake_label,
        )
        seqs = [
            assemble_sequence(
                lk, W, H, st.features, None if appearance is None else appearance(scenario, lk)
            )
            for lk in links
        ]
        dim = bins + 4 if not seqs else seqs[0].dim
        feats = np.array([s.rows for s in seqs]).reshape(len(links), n, dim)
        boxes = np.array([lk.boxes for lk in links]).reshape(len(links), n, 4)
        masks = np.array([lk.mask for lk in links], dtype=bool).reshape(len(links), n)
        labels, _ = link_labels(boxes[:, -1, :], truth)
        out.append(
            ClipRecord(
                clip_id=truth.clip_id,
                scenario_id=scenario.id,
                fold=fold,
                goal=ann.goal_label,
                clip_end=end,
                ir=goal_input(scenario, end, n, st.features).ir,
                link_boxes=boxes,
                link_masks=masks,
                features=feats,
                truth=truth,
                link_true_ids=[lk.true_actor_id for lk in links],
                labels=labels,
            )
        )
    return out


def to_dataset(clips, target="importance"):
    """Flatten clip links into a model dataset; IR rows are shared per clip."""
    clips = [c for c in clips if len(c.labels)]
    if not clips:
        return M.Dataset(np.zeros((0, 1, 1)), None, np.zeros((0, 1), bool), np.zeros(0, np.int64))
    X = np.concatenate([c.features for c in clips])
    mask = np.concatenate([c.link_masks for c in clips])
    IR = np.concatenate([np.broadcast_to(c.ir, (len(c.labels),) + c.ir.shape) for c in clips])
    if target == "importance":
        y = np.concatenate([c.labels for c in clips])
    elif target == "brake":
        y = np.concatenate([np.full(len(c.labels), c.brake) for c in clips])
    else:
        raise ValueError(f"unknown target {target!r}")
    return M.Dataset(X=X, IR=IR, mask=mask, y=y.astype(np.int64))


def split(clips, fold):
    train = [c for c in clips if c.fold != fold]
    test = [c for c in clips if c.fold == fold]
    return train, test


def check_hygiene(clips, fold):
    """No scenario contributes to both the train and the test part."""
    train, test = split(clips, fold)
    overlap = {c.scenario_id for c in train} & {c.scenario_id for c in test}
    if overlap:
        raise AssertionError(f"scenarios in both parts of {fold}: {sorted(overlap)[:5]}")


def model_config_for(kind, feature_dim, horizon, hidden=64, goal_dim=16, image_dim=1024):
    variant, use_goal, _ = TRAINED[kind]
    return M.ModelConfig(
        variant=variant,
        use_goal=use_goal,
        feature_dim=feature_dim,
        horizon=horizon,
        goal_dim=goal_dim,
        hidden=hidden,
        image_dim=image_dim,
    )


def train_kind(kind, train_clips, train_config, hidden=64, log=None):
    """Train one of the learnable models on the given clips."""
    if kind not in TRAINED:
        raise UnknownBaseline(kind)
    data = to_dataset(train_clips, TRAINED[kind][2])
    cfg = model_config_for(kind, data.X.shape[2], data.IR.shape[2], hidden=hidden)
    return M.train(data, cfg, train_config, log=log)


def score_clips(params, clips):
    """Per-clip arrays of importance (or brake) probabilities."""
    data = to_dataset(clips)
    probs = M.predict(params, data) if len(data) else np.zeros(0)
    out, start = [], 0
    for c in clips:
        k = len(c.labels)
        out.append(probs[start : start + k])
        start += k
    return out


def baseline_scores(name, test_clips, models=None, seed=0):
    """Scores for every test link under the named baseline."""
    if name not in BASELINES:
        raise UnknownBaseline(name)
    if name == "upperBound":
        return [c.labels.astype(float) for c in test_clips]
    if name == "randomChance":
        rng = np.random.default_rng(seed)
        return [rng.uniform(0.0, 1.0, size=len(c.labels)) for c in test_clips]
    # appearance is never injected here, so goalGeometry shares goalVisual's weights
    kind = "goalVisual" if name == "goalGeometry" else name
    return score_clips(models[kind], test_clips)


def run_baseline(name, fold, clips, models=None, seed=0, train_config=None, hidden=64):
    """Train on the other two parts (when learnable) and evaluate on ``fold``."""
    if name not in BASELINES:
        raise UnknownBaseline(name)
    if fold not in PARTS:
        raise ValueError(f"fold must be one of {PARTS}")
    check_hygiene(clips, fold)
    train, test = split(clips, fold)
    models = dict(models or {})
    kind = "goalVisual" if name == "goalGeometry" else name
    if kind in TRAINED and kind not in models:
        models[kind], _ = train_kind(kind, train, train_config or M.TrainConfig(seed=seed), hidden)
    scores = baseline_scores(name, test, models, seed)
    return evaluate(
        [c.truth for c in test], [c.last_boxes for c in test], scores, "goal", baseline=name, fold=fold
    )


def fused_brake_scores(clips, importance, brake_scores):
    """Per-clip fused brake scores with given per-link weights."""
    return np.array([brake_fuse(w, s) for w, s in zip(importance, brake_scores)])


def brake_experiment(test_clips, importance, brake_scores):
    """Brake AP with importance weights versus uniform 0.5 weights.

    ``importance`` and ``brake_scores`` are per-clip arrays over links.
    """
    labels = np.array([c.brake for c in test_clips])
    weighted = fused_brake_scores(test_clips, importance, brake_scores)
    uniform = fused_brake_scores(test_clips, [np.full(len(s), 0.5) for s in brake_scores], brake_scores)
    return average_precision(weighted, labels), average_precision(uniform, labels)


# ---------------------------------------------------------------------------
# the multi-seed benchmark
# ---------------------------------------------------------------------------


def _scenario_clips(args):
    seed, scenario_config, settings, fold = args
    from oie.scenario_sim import generate_scenario

    return build_clips(generate_scenario(seed, scenario_config), settings, fold=fold)


def benchmark_clips(seeds, scenario_config=None, settings=None, jobs=1):
    """Clips for every scenario seed, tagged with its round-robin fold."""
    from oie.scenario_sim import ScenarioConfig

    scenario_config = scenario_config or ScenarioConfig()
    settings = settings or DataSettings()
    folds = assign_folds(seeds)
    work = [(int(s), scenario_config, settings, folds[int(s)]) for s in sorted(seeds)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            parts = list(pool.map(_scenario_clips, work))
    else:
        parts = [_scenario_clips(w) for w in work]
    return [c for part in parts for c in part]


@dataclass
class FoldResult:
    seed: int
    fold: str
    reports: dict  # baseline name -> MetricsReport
    brake_weighted: float = float("nan")
    brake_uniform: float = float("nan")


def run_fold(clips, fold, seed, train_config=None, hidden=64, baselines=BASELINES, brake=True):
    """Train the learnable models once for this fold and score every baseline."""
    train_config = dataclasses.replace(train_config or M.TrainConfig(), seed=seed)
    check_hygiene(clips, fold)
    train, test = split(clips, fold)
    needed = {"goalVisual" if b == "goalGeometry" else b for b in baselines} & set(TRAINED)
    if brake:
        needed |= {"goalVisual", "brake"}
    models = {k: train_kind(k, train, train_config, hidden)[0] for k in sorted(needed)}
    reports = {b: run_baseline(b, fold, clips, models=models, seed=seed) for b in baselines}
    out = FoldResult(seed=seed, fold=fold, reports=reports)
    if brake:
        imp = score_clips(models["goalVisual"], test)
        br = score_clips(models["brake"], test)
        out.brake_weighted, out.brake_uniform = brake_experiment(test, imp, br)
    return out


def mean_ap(results, baseline, subset="All"):
    values = [r.reports[baseline].ap[subset] for r in results if r.reports[baseline].ap.get(subset) is not None]
    return float(np.mean(values)) if values else float("nan")
