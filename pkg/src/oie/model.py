"""Recurrent importance classifier with analytic backpropagation through time.

Two variants share the scoring head ``logits = W h + b``:

* ``recurrent``: a one-layer LSTM runs over all n rows (zero initial state)
  and the head reads the final hidden state.
* ``image``: a rectified dense layer replaces the LSTM and only sees the
  clip's last row.

With ``use_goal`` a rectified dense layer maps each frame's IR profile to a
goal vector that is appended to the visual row of every object in the clip.
Padded frames are fed as all-zero rows, goal part included.
"""

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from oie import kernels
from oie.errors import DimensionMismatch, EmptyBatch, NonFiniteGradient


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "recurrent"  # recurrent | image
    use_goal: bool = True
    feature_dim: int = 16
    horizon: int = 40
    goal_dim: int = 16
    hidden: int = 64
    image_dim: int = 1024

    @property
    def input_dim(self):
        return self.feature_dim + (self.goal_dim if self.use_goal else 0)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-3
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    class_weighting: str = "perBatchInverse"  # perBatchInverse | none
    gradient_clip: float = 5.0

    def validate(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.class_weighting not in ("perBatchInverse", "none"):
            raise ValueError(f"unknown class weighting {self.class_weighting!r}")


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict = field(default_factory=dict)

    def copy(self):
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def __getitem__(self, name):
        return self.tensors[name]


@dataclass(frozen=True)
class GoFSequence:
    """Ingredients of one object's goal-oriented feature sequence."""

    visual: np.ndarray  # (n, feature_dim)
    ir: np.ndarray  # (n, L); shared by every object of the clip
    mask: np.ndarray  # (n,) bool
    label: int = 0
    goal: str = "St"


def param_shapes(cfg):
    shapes = {}
    if cfg.use_goal:
        shapes["goal_W"] = (cfg.horizon, cfg.goal_dim)
        shapes["goal_b"] = (cfg.goal_dim,)
    if cfg.variant == "recurrent":
        H = cfg.hidden
        shapes["lstm_Wx"] = (cfg.input_dim, 4 * H)
        shapes["lstm_Wh"] = (H, 4 * H)
        shapes["lstm_b"] = (4 * H,)
        shapes["head_W"] = (H, 2)
    elif cfg.variant == "image":
        shapes["img_W"] = (cfg.input_dim, cfg.image_dim)
        shapes["img_b"] = (cfg.image_dim,)
        shapes["head_W"] = (cfg.image_dim, 2)
    else:
        raise ValueError(f"unknown variant {cfg.variant!r}")
    shapes["head_b"] = (2,)
    return shapes


_FAN_IN = {
    "goal_W": lambda c: c.horizon,
    "goal_b": lambda c: c.horizon,
    "lstm_Wx": lambda c: c.input_dim + c.hidden,
    "lstm_Wh": lambda c: c.input_dim + c.hidden,
    "lstm_b": lambda c: c.input_dim + c.hidden,
    "img_W": lambda c: c.input_dim,
    "img_b": lambda c: c.input_dim,
}


def init_params(cfg, seed=0):
    """Uniform(+-1/sqrt(fan_in)) weights; LSTM forget-gate bias starts at +1."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in param_shapes(cfg).items():
        if name.startswith("head"):
            fan = cfg.hidden if cfg.variant == "recurrent" else cfg.image_dim
        else:
            fan = _FAN_IN[name](cfg)
        bound = 1.0 / np.sqrt(fan)
        tensors[name] = rng.uniform(-bound, bound, size=shape)
    if cfg.variant == "recurrent":
        H = cfg.hidden
        tensors["lstm_b"][H : 2 * H] = 1.0
    return ModelParams(cfg, tensors)


def zero_params(cfg):
    return ModelParams(cfg, {k: np.zeros(s) for k, s in param_shapes(cfg).items()})


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------


def _check_batch(params, X, IR, mask):
    cfg = params.config
    if X.ndim != 3 or X.shape[2] != cfg.feature_dim:
        raise DimensionMismatch(f"visual rows must be (B, n, {cfg.feature_dim}), got {X.shape}")
    if mask.shape != X.shape[:2]:
        raise DimensionMismatch("mask must be (B, n)")
    if cfg.use_goal and (IR is None or IR.shape != X.shape[:2] + (cfg.horizon,)):
        raise DimensionMismatch(f"IR must be (B, n, {cfg.horizon})")


def goal_features(params, IR):
    """Rectified goal vectors for IR profiles of any leading shape."""
    pre = IR @ params["goal_W"] + params["goal_b"]
    return np.maximum(pre, 0.0)


def model_inputs(params, X, IR, mask):
    """Per-row model input ``[f, g] * mask`` and the goal pre-activation."""
    m = mask[..., None].astype(float)
    if not params.config.use_goal:
        return X * m, None
    pre = IR @ params["goal_W"] + params["goal_b"]
    inp = np.concatenate([X, np.maximum(pre, 0.0)], axis=-1) * m
    return inp, pre


def forward_batch(params, X, IR, mask):
    """Logits (B, 2) plus the cache needed for the backward pass."""
    _check_batch(params, X, IR, mask)
    cfg = params.config
    inp, goal_pre = model_inputs(params, X, IR, mask)
    inp = np.ascontiguousarray(inp)
    cache = {"inp": inp, "goal_pre": goal_pre}
    if cfg.variant == "recurrent":
        Hs, Cs, G = kernels.lstm_forward(inp, params["lstm_Wx"], params["lstm_Wh"], params["lstm_b"])
        feat = Hs[:, -1]
        cache.update(Hs=Hs, Cs=Cs, G=G)
    else:
        last = inp[:, -1]
        pre = last @ params["img_W"] + params["img_b"]
        feat = np.maximum(pre, 0.0)
        cache["img_pre"] = pre
    cache["feat"] = feat
    logits = feat @ params["head_W"] + params["head_b"]
    return logits, cache


def forward(params, sequence):
    """Logits for a single GoFSequence."""
    ir = None if sequence.ir is None else sequence.ir[None]
    logits, _ = forward_batch(params, sequence.visual[None], ir, np.asarray(sequence.mask)[None])
    return logits[0]


def softmax(logits):
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def importance_prob(logits):
    """Probability of the important class (index 1)."""
    return softmax(logits)[..., 1]


def class_weights(labels, scheme="perBatchInverse"):
    """Per-sample weights ``w(c) ~ 1/count(c)`` with sum_c w(c) count(c) = B."""
    labels = np.asarray(labels, dtype=np.int64)
    B = len(labels)
    if B == 0:
        raise EmptyBatch("batch is empty")
    if scheme == "none":
        return np.ones(B)
    classes, counts = np.unique(labels, return_counts=True)
    per_class = B / (len(classes) * counts.astype(float))
    lookup = dict(zip(classes.tolist(), per_class.tolist()))
    return np.array([lookup[c] for c in labels.tolist()])


def weighted_ce_loss(probs, labels, scheme="perBatchInverse"):
    """Mean of ``-w(y) log p(y)`` over the batch; ``probs`` is (B, 2)."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise EmptyBatch("batch is empty")
    w = class_weights(labels, scheme)
    p = probs[np.arange(len(labels)), labels]
    return float(np.mean(-w * np.log(p)))


def _loss_from_logits(logits, labels, w):
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(np.mean(-w * logp[np.arange(len(labels)), labels]))


def loss_and_grads(params, X, IR, mask, labels, scheme="perBatchInverse"):
    """Weighted cross-entropy and its exact gradient for every tensor."""
    labels = np.asarray(labels, dtype=np.int64)
    B = len(labels)
    if B == 0:
        raise EmptyBatch("batch is empty")
    cfg = params.config
    logits, cache = forward_batch(params, X, IR, mask)
    w = class_weights(labels, scheme)
    loss = _loss_from_logits(logits, labels, w)
    P = softmax(logits)
    P[np.arange(B), labels] -= 1.0
    dlogits = P * (w / B)[:, None]

    grads = {}
    feat = cache["feat"]
    grads["head_W"] = feat.T @ dlogits
    grads["head_b"] = dlogits.sum(axis=0)
    dfeat = dlogits @ params["head_W"].T
    inp = cache["inp"]
    if cfg.variant == "recurrent":
        dinp, dWx, dWh, db = kernels.lstm_backward(
            inp, params["lstm_Wx"], params["lstm_Wh"], cache["Hs"], cache["Cs"], cache["G"],
            np.ascontiguousarray(dfeat),
        )
        grads["lstm_Wx"], grads["lstm_Wh"], grads["lstm_b"] = dWx, dWh, db
    else:
        dpre = dfeat * (cache["img_pre"] > 0)
        grads["img_W"] = inp[:, -1].T @ dpre
        grads["img_b"] = dpre.sum(axis=0)
        dinp = np.zeros_like(inp)
        dinp[:, -1] = dpre @ params["img_W"].T
    if cfg.use_goal:
        F = cfg.feature_dim
        dg = dinp[..., F:] * mask[..., None] * (cache["goal_pre"] > 0)
        Lh = cfg.horizon
        grads["goal_W"] = IR.reshape(-1, Lh).T @ dg.reshape(-1, cfg.goal_dim)
        grads["goal_b"] = dg.reshape(-1, cfg.goal_dim).sum(axis=0)
    return loss, grads


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0


def adam_state(params):
    return AdamState(
        m={k: np.zeros_like(v) for k, v in params.tensors.items()},
        v={k: np.zeros_like(v) for k, v in params.tensors.items()},
    )


def backward_and_step(params, state, batch, config):
    """One optimiser step on ``batch = (X, IR, mask, labels)``; returns (params, loss)."""
    X, IR, mask, labels = batch
    loss, grads = loss_and_grads(params, X, IR, mask, labels, config.class_weighting)
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if not np.isfinite(norm) or not np.isfinite(loss):
        bad = sorted(k for k, g in grads.items() if not np.all(np.isfinite(g)))
        raise NonFiniteGradient(f"loss={loss} grad_norm={norm} non-finite tensors={bad}")
    if config.learning_rate == 0:
        return params, loss
    scale = 1.0
    if config.gradient_clip and norm > config.gradient_clip:
        scale = config.gradient_clip / norm
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    corr1 = 1.0 - b1**state.step
    corr2 = 1.0 - b2**state.step
    for name in sorted(params.tensors):
        g = grads[name] * scale
        state.m[name] = b1 * state.m[name] + (1 - b1) * g
        state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        mhat = state.m[name] / corr1
        vhat = state.v[name] / corr2
        params.tensors[name] = params.tensors[name] - config.learning_rate * mhat / (np.sqrt(vhat) + config.eps)
    return params, loss


@dataclass
class Dataset:
    """Training arrays; ``IR`` may be None for goal-free models."""

    X: np.ndarray  # (N, n, F)
    IR: np.ndarray  # (N, n, L) or None
    mask: np.ndarray  # (N, n)
    y: np.ndarray  # (N,)

    def __len__(self):
        return len(self.y)

    def take(self, idx):
        return (
            self.X[idx],
            None if self.IR is None else self.IR[idx],
            self.mask[idx],
            self.y[idx],
        )


def train(dataset, model_config, config=None, log=None):
    """Mini-batch training; deterministic for a fixed ``config.seed``."""
    cfg = config or TrainConfig()
    cfg.validate()
    if len(dataset) == 0:
        raise EmptyBatch("training set is empty")
    init_seq, shuffle_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    params = init_params(model_config, seed=init_seq)
    shuffle = np.random.default_rng(shuffle_seq)
    state = adam_state(params)
    history = []
    N = len(dataset)
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = shuffle.permutation(N)
        total = 0.0
        for start in range(0, N, cfg.batch_size):
            idx = np.sort(order[start : start + cfg.batch_size])
            params, loss = backward_and_step(params, state, dataset.take(idx), cfg)
            total += loss * len(idx)
        record = {"epoch": epoch, "loss": total / N, "wall_time": time.perf_counter() - t0}
        history.append(record)
        if log is not None:
            log(record)
    return params, history


def predict(params, dataset, batch_size=512):
    """Importance probabilities for every sample."""
    out = np.empty(len(dataset))
    for start in range(0, len(dataset), batch_size):
        idx = np.arange(start, min(start + batch_size, len(dataset)))
        X, IR, mask, _ = dataset.take(idx)
        logits, _ = forward_batch(params, X, IR, mask)
        out[idx] = importance_prob(logits)
    return out


# ---------------------------------------------------------------------------
# checkpoints: text header + flat base-10 dump, exact to 17 digits
# ---------------------------------------------------------------------------


def config_hash(obj):
    text = json.dumps(obj, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def dumps_checkpoint(params, run_hash="", extra=None):
    cfg = params.config
    header = {
        "model": asdict(cfg),
        "config_hash": run_hash,
        "tensors": {k: list(v.shape) for k, v in sorted(params.tensors.items())},
    }
    if extra:
        header["extra"] = extra
    lines = ["# oie-checkpoint v1", "# " + json.dumps(header, sort_keys=True)]
    for name in sorted(params.tensors):
        flat = params.tensors[name].ravel()
        lines.append(f"{name} " + " ".join(f"{x:.17g}" for x in flat))
    return "\n".join(lines) + "\n"


def loads_checkpoint(text):
    lines = text.splitlines()
    if not lines or lines[0] != "# oie-checkpoint v1":
        raise ValueError("not an oie checkpoint")
    header = json.loads(lines[1][2:])
    cfg = ModelConfig(**header["model"])
    shapes = header["tensors"]
    tensors = {}
    for line in lines[2:]:
        if not line.strip():
            continue
        name, _, rest = line.partition(" ")
        values = np.array([float(x) for x in rest.split()]) if rest.strip() else np.zeros(0)
        tensors[name] = values.reshape(shapes[name])
    return ModelParams(cfg, tensors), header
