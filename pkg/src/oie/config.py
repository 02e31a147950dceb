"""Run configuration: a sectioned text file, its hash, and atomic writes."""

import configparser
import dataclasses
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from oie.errors import InvalidConfig, InvalidNoise, IoFailure
from oie.features import FeatureConfig
from oie.model import TrainConfig
from oie.scenario_sim import ScenarioConfig
from oie.tracklets import NoiseConfig


@dataclass(frozen=True)
class PipelineConfig:
    n: int = 30
    label_every: int = 30
    hidden: int = 64
    match_threshold: float = 0.3
    max_age: int = 2
    noise_seed: int = 0


def _default_noise():
    return NoiseConfig(miss_rate=0.05, jitter_px=2.0, false_positive_rate=0.1)


@dataclass(frozen=True)
class RunConfig:
    root: str = "run"
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    noise: NoiseConfig = field(default_factory=_default_noise)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    @property
    def scenarios_dir(self):
        return Path(self.root) / "scenarios"

    @property
    def features_dir(self):
        return Path(self.root) / "features"

    @property
    def checkpoints_dir(self):
        return Path(self.root) / "checkpoints"

    @property
    def reports_dir(self):
        return Path(self.root) / "reports"

    def data_settings(self):
        from oie.experiments import DataSettings

        p = self.pipeline
        return DataSettings(
            n=p.n,
            label_every=p.label_every,
            noise=self.noise,
            features=self.features,
            match_threshold=p.match_threshold,
            max_age=p.max_age,
            noise_seed=p.noise_seed,
        )

    def validate(self):
        self.scenario.validate()
        try:
            self.noise.validate()
            self.train.validate()
        except (ValueError, InvalidNoise) as exc:
            raise InvalidConfig(str(exc)) from exc
        p = self.pipeline
        if p.n < 2 or p.label_every < 1 or p.hidden < 1 or p.max_age < 0:
            raise InvalidConfig("pipeline sizes must be positive")
        if self.features.horizon < 1 or self.features.bins < 1:
            raise InvalidConfig("feature sizes must be positive")
        return self


SECTIONS = ("pipeline", "scenario", "noise", "features", "train")


def _section_values(obj):
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}


def dumps_config(cfg):
    """Sectioned key = value text; values are JSON so types survive."""
    lines = ["[paths]", f"root = {json.dumps(cfg.root)}", ""]
    for name in SECTIONS:
        lines.append(f"[{name}]")
        for key, value in _section_values(getattr(cfg, name)).items():
            lines.append(f"{key} = {json.dumps(value, sort_keys=True)}")
        lines.append("")
    return "\n".join(lines)


def _coerce(default, value):
    if isinstance(default, tuple):
        return tuple(value)
    if isinstance(default, float) and isinstance(value, int):
        return float(value)
    return value


def loads_config(text):
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise InvalidConfig(f"unreadable config: {exc}") from exc
    base = RunConfig()
    kwargs = {}
    if parser.has_option("paths", "root"):
        kwargs["root"] = json.loads(parser.get("paths", "root"))
    for name in SECTIONS:
        default = getattr(base, name)
        values = _section_values(default)
        if parser.has_section(name):
            for key, raw in parser.items(name):
                if key not in values:
                    raise InvalidConfig(f"unknown key {name}.{key}")
                try:
                    values[key] = _coerce(values[key], json.loads(raw))
                except json.JSONDecodeError as exc:
                    raise InvalidConfig(f"{name}.{key}: {exc}") from exc
        kwargs[name] = type(default)(**values)
    unknown = set(parser.sections()) - set(SECTIONS) - {"paths"}
    if unknown:
        raise InvalidConfig(f"unknown sections {sorted(unknown)}")
    return RunConfig(**kwargs)


def load_config(path):
    try:
        return loads_config(Path(path).read_text())
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc


def _hash(payload):
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def scenario_hash(cfg):
    """Identifies the simulator settings alone."""
    return _hash({"scenario": _section_values(cfg.scenario)})


def data_hash(cfg):
    """Identifies everything that shapes scenarios, proposals and features."""
    payload = {name: _section_values(getattr(cfg, name)) for name in ("scenario", "noise", "features")}
    payload["pipeline"] = {k: v for k, v in _section_values(cfg.pipeline).items() if k != "hidden"}
    return _hash(payload)


def train_hash(cfg):
    """Data hash plus the model and optimizer settings (the seed excluded)."""
    train = {k: v for k, v in _section_values(cfg.train).items() if k != "seed"}
    return _hash({"data": data_hash(cfg), "train": train, "hidden": cfg.pipeline.hidden})


def atomic_write(path, text):
    """Write ``text`` to a temp file beside ``path`` and rename it into place."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
