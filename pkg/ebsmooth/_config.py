import copy
import dataclasses
import enum
import hashlib
import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ebsmooth._adversarial import AttackSpec, TrainConfig
from ebsmooth._datasets import DatasetSpec
from ebsmooth._energy import DeenConfig
from ebsmooth._errors import ConfigError, DomainError
from ebsmooth._sampler import WalkJumpConfig
from ebsmooth._stats import ConfidenceSpec

PIPELINES = ("eb", "vanilla", "oracle", "compare")

# nested sections of the configuration file
_SECTIONS = {
    "dataset": DatasetSpec,
    "confidence": ConfidenceSpec,
    "attack": AttackSpec,
    "train": TrainConfig,
    "deen": DeenConfig,
    "walk_jump": WalkJumpConfig,
}

_PATH_KEYS = {
    "dataset": ("train_images", "train_labels", "test_images", "test_labels"),
    None: ("output_dir", "classifier", "energy", "energy_fine"),
}

# entries that do not influence any result
_UNHASHED = ("output_dir", "workers")


@dataclass(frozen=True)
class ExperimentConfig:
    """everything an experiment run depends on

    Parameters
    ----------
    sigma : float
        Noise scale of smoothing and of the Bayes estimator.
    dataset : DatasetSpec
    seed : int, default: 0
    output_dir : str, default: "out"
        Directory for checkpoints, CSVs and the run manifest.
    workers : int, default: 1
        Processes used for certification.
    radii : tuple of float, default: (0.5, 1.0, 1.5, 2.0)
        Radius grid of certified-accuracy curves.
    pipeline : {"eb", "vanilla", "oracle", "compare"}, default: "eb"
        Smoothed classifier of curve runs: ``g[pi]`` with the energy checkpoint,
        ``g[h]``, ``g[pi]`` with the closed-form estimator of the data model, or both
        ``g[h]`` and ``g[pi]``.
    classifier, energy, energy_fine : str, optional
        Checkpoint files. Default to ``classifier.ckpt``, ``energy.ckpt`` and
        ``energy_fine.ckpt`` in ``output_dir``. The fine energy (at
        ``walk_jump.sigma_prime``) is only used by walk-jump runs.
    record_timing : bool, default: False
        Add wall-time columns to CSVs (which then differ between reruns).
    walk_chains : int, default: 1000
        Number of independent walk-jump runs.
    trajectory : bool, default: False
        Also write the walks of walk-jump runs.
    confidence, attack, train, deen, walk_jump
        Nested configurations; ``train`` and ``deen`` inherit ``sigma``, all seeds
        default to the top-level ``seed``.
    """

    sigma: float
    dataset: DatasetSpec
    seed: int = 0
    output_dir: str = "out"
    workers: int = 1
    radii: tuple = (0.5, 1.0, 1.5, 2.0)
    pipeline: str = "eb"
    classifier: str | None = None
    energy: str | None = None
    energy_fine: str | None = None
    record_timing: bool = False
    walk_chains: int = 1000
    trajectory: bool = False
    confidence: ConfidenceSpec = field(default_factory=ConfidenceSpec)
    attack: AttackSpec = field(default_factory=AttackSpec)
    train: TrainConfig | None = None
    deen: DeenConfig | None = None
    walk_jump: WalkJumpConfig = field(default_factory=WalkJumpConfig)

    def __post_init__(self):
        if self.sigma <= 0:
            raise DomainError(f"sigma must be positive, got {self.sigma}")
        if self.workers < 1:
            raise DomainError(f"workers must be a positive integer, got {self.workers}")
        if self.walk_chains < 1:
            raise DomainError("walk_chains must be a positive integer")
        if self.pipeline not in PIPELINES:
            raise DomainError(
                f"pipeline must be one of {PIPELINES}, got {self.pipeline!r}"
            )

        radii = tuple(sorted(float(r) for r in self.radii))
        if not radii or radii[0] < 0:
            raise DomainError("radii must be a non-empty list of non-negative numbers")
        object.__setattr__(self, "radii", radii)

        out = Path(self.output_dir)
        if self.classifier is None:
            object.__setattr__(self, "classifier", str(out / "classifier.ckpt"))
        if self.energy is None:
            object.__setattr__(self, "energy", str(out / "energy.ckpt"))
        if self.energy_fine is None:
            object.__setattr__(self, "energy_fine", str(out / "energy_fine.ckpt"))
        if self.train is None:
            object.__setattr__(self, "train", TrainConfig(self.sigma, seed=self.seed))
        if self.deen is None:
            object.__setattr__(self, "deen", DeenConfig(self.sigma, seed=self.seed))

    def require(self, *names):
        """raise a ConfigError unless the files ``names`` (e.g. "energy") exist"""
        for name in names:
            path = getattr(self, name)
            if not Path(path).exists():
                raise ConfigError(f"{name}: file {path!r} does not exist")


def _build(cls, data, path):
    if not isinstance(data, Mapping):
        kind = type(data).__name__
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {kind}")

    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        name = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(f"Unknown configuration key '{name}'")

    try:
        return cls(**data)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{path or 'config'}: {err}") from err


def _resolve_paths(raw, root):
    for section, keys in _PATH_KEYS.items():
        target = raw if section is None else raw.get(section)
        if not isinstance(target, Mapping):
            continue
        for key in keys:
            value = target.get(key)
            if value is not None and not Path(value).is_absolute():
                target[key] = str(root / value)


def parse_override(text):
    """split ``"section.key=value"``; the value is parsed as a YAML scalar"""

    key, sep, value = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"Expected an override of the form key=value, got {text!r}")
    return key.strip(), yaml.safe_load(value)


def apply_overrides(raw, overrides):
    """set the dotted keys of ``overrides`` in the nested mapping ``raw``"""

    for dotted, value in overrides:
        *parents, key = dotted.split(".")
        node = raw
        for i, name in enumerate(parents):
            node = node.setdefault(name, {})
            if not isinstance(node, dict):
                raise ConfigError(f"'{'.'.join(parents[: i + 1])}' is not a section")
        node[key] = value
    return raw


def config_from_dict(raw, root=None):
    """build an ExperimentConfig from nested mappings

    Parameters
    ----------
    raw : dict
        The parsed configuration; unknown keys raise a ConfigError naming their
        dotted path.
    root : Path, optional
        Directory relative file names are resolved against.
    """

    if not isinstance(raw, Mapping):
        raise ConfigError("The configuration must be a mapping")

    raw = copy.deepcopy(dict(raw))
    if root is not None:
        _resolve_paths(raw, Path(root))

    if "sigma" not in raw:
        raise ConfigError("Missing required key 'sigma'")
    if "dataset" not in raw:
        raise ConfigError("Missing required key 'dataset'")

    inherited = {
        "train": ("sigma", "seed"),
        "deen": ("sigma", "seed"),
        "walk_jump": ("seed",),
    }
    for key in inherited:
        raw.setdefault(key, {})

    top = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            value = {} if value is None else value
            value = dict(value) if isinstance(value, Mapping) else value
            if isinstance(value, dict):
                for name in inherited.get(key, ()):
                    if name in raw:
                        value.setdefault(name, raw[name])
            top[key] = _build(_SECTIONS[key], value, key)
        else:
            top[key] = value

    return _build(ExperimentConfig, top, "")


def load_config(path, overrides=()):
    """read an experiment configuration from a YAML file

    Parameters
    ----------
    path : str or Path
        YAML file. Relative file names inside are relative to its directory.
    overrides : iterable of (str, object)
        Dotted keys and values applied on top of the file, see ``parse_override``.

    Returns
    -------
    ExperimentConfig
    """

    path = Path(path)
    try:
        with open(path) as f:
            raw = yaml.safe_load(f)
    except yaml.YAMLError as err:
        raise ConfigError(f"{path}: invalid YAML: {err}") from err

    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: the configuration must be a mapping")

    apply_overrides(raw, overrides)
    return config_from_dict(raw, root=path.parent)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, enum.Enum):
        return obj.value
    return obj


def config_hash(cfg):
    """sha256 of the resolved configuration, ignoring output location and workers"""

    data = _jsonable(dataclasses.asdict(cfg))
    for key in _UNHASHED:
        data.pop(key)

    # checkpoints default to the output directory
    out = Path(cfg.output_dir)
    for key in ("classifier", "energy", "energy_fine"):
        path = Path(data[key])
        if path.parent == out:
            data[key] = path.name

    text = json.dumps(data, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()
