"""Experiment configuration: model registry, defaults, and INI parsing.

An experiment is one of three kinds:

* ``baseline``: fine-tune one pretrained model on raw (argument, key point)
  pairs, with no template text around the inputs;
* ``approach1``: classify pairs through a prompt template (t1..t5);
* ``approach2``: generate intermediary texts from polarity-paired templates
  (t6/t7), then classify (argument, intermediary, key point) triples.

Configs are INI files. A preset catalog covering every experiment row ships
with the package; any file with the same sections works.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigInvalid
from .prompts import CLASSIFICATION_TEMPLATES, GENERATION_TEMPLATE_PAIRS
from .runtime import (
    FAMILY_ENCODER_CLASSIFIER,
    FAMILY_ENCODER_DECODER,
    CheckpointRef,
    TrainConfig,
)

CHECKPOINTS: dict[str, CheckpointRef] = {
    "bert-base": CheckpointRef(
        "bert-base", "bert-base-uncased", FAMILY_ENCODER_CLASSIFIER, "[MASK]", "[SEP]"
    ),
    "bert-large": CheckpointRef(
        "bert-large", "bert-large-uncased", FAMILY_ENCODER_CLASSIFIER, "[MASK]", "[SEP]"
    ),
    "t5-small": CheckpointRef(
        "t5-small", "t5-small", FAMILY_ENCODER_DECODER, "<extra_id_0>", "</s>"
    ),
    "t5-base": CheckpointRef(
        "t5-base", "t5-base", FAMILY_ENCODER_DECODER, "<extra_id_0>", "</s>"
    ),
    "bart-large": CheckpointRef(
        "bart-large", "facebook/bart-large", FAMILY_ENCODER_DECODER, "<mask>", "</s>"
    ),
}

# Reference fine-tuning settings per model line. t5-base trains its soft
# prompt (embedding matrix) at soft_lr and the rest of the model at
# learning_rate.
TRAIN_DEFAULTS: dict[str, dict] = {
    "bert-base": {"learning_rate": 2e-5, "epochs": 3},
    "bert-large": {"learning_rate": 2e-5, "epochs": 3},
    "t5-base": {"learning_rate": 1e-4, "epochs": 3, "soft_lr": 1e-3},
    "t5-small": {"learning_rate": 3e-4, "epochs": 4},
    "bart-large": {"learning_rate": 2e-5, "epochs": 5},
}

BASELINE_FAMILIES = ("t5-small", "t5-base", "bert-base", "bert-large")
GENERATOR_FAMILIES = ("t5-small", "bart-large")
CLASSICAL_CLASSIFIERS = ("naive_bayes", "svm", "decision_tree")
PLM_TRIPLE_CLASSIFIERS = ("t5-small", "bert-base")

# Accepted short spellings for classifier kinds in config files.
CLASSIFIER_ALIASES = {"nb": "naive_bayes", "dt": "decision_tree"}

EXPERIMENT_KINDS = ("baseline", "approach1", "approach2")

DEFAULT_RATIOS = (71.0, 12.0, 17.0)
DEFAULT_TOPIC_COUNTS = (19, 4, 5)
DEFAULT_SPLIT_SEED = 13

_TRAIN_KEYS = (
    "learning_rate", "epochs", "optimizer_name", "batch_size",
    "max_input_length", "seed", "max_steps", "soft_lr",
)
_TRAIN_INT_KEYS = {"epochs", "batch_size", "max_input_length", "seed", "max_steps"}
_TRAIN_STR_KEYS = {"optimizer_name"}


@dataclass
class ExperimentConfig:
    kind: str
    name: str
    family: str
    split_mode: str
    split_seed: int = DEFAULT_SPLIT_SEED
    ratios: tuple[float, float, float] = DEFAULT_RATIOS
    topic_counts: tuple[int, int, int] = DEFAULT_TOPIC_COUNTS
    data_path: str | None = None
    data_format: str = "pair_csv"
    add_full_stops: bool = True
    template: str | None = None
    classifier: str | None = None
    train_overrides: dict = field(default_factory=dict)
    threshold: float = 0.5
    threshold_learning: bool = False
    max_new_tokens: int = 32

    def __post_init__(self) -> None:
        if self.classifier in CLASSIFIER_ALIASES:
            self.classifier = CLASSIFIER_ALIASES[self.classifier]
        _validate(self)


def checkpoint_for(family: str) -> CheckpointRef:
    if family not in CHECKPOINTS:
        raise ConfigInvalid(
            f"unknown model family {family!r}; choose from {', '.join(CHECKPOINTS)}"
        )
    return CHECKPOINTS[family]


def train_config_for(family: str, overrides: dict | None = None) -> TrainConfig:
    """Reference defaults for the model line, with explicit overrides on top."""
    checkpoint_for(family)
    settings = dict(TRAIN_DEFAULTS[family])
    for key, value in (overrides or {}).items():
        if key not in _TRAIN_KEYS:
            raise ConfigInvalid(f"unknown training setting {key!r}")
        settings[key] = value
    return TrainConfig(**settings)


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.kind not in EXPERIMENT_KINDS:
        raise ConfigInvalid(f"unknown experiment kind {cfg.kind!r}")
    if cfg.split_mode not in ("cross_domain", "in_domain"):
        raise ConfigInvalid(f"unknown split mode {cfg.split_mode!r}")
    checkpoint = checkpoint_for(cfg.family)

    if cfg.kind == "baseline":
        if cfg.template is not None:
            raise ConfigInvalid("baseline runs take no template; remove it")
        if cfg.classifier is not None:
            raise ConfigInvalid("baseline runs take no triple classifier")
    elif cfg.kind == "approach1":
        if checkpoint.family != FAMILY_ENCODER_DECODER:
            raise ConfigInvalid(
                f"prompt-template classification needs an encoder-decoder family, got {cfg.family!r}"
            )
        if cfg.template not in CLASSIFICATION_TEMPLATES:
            raise ConfigInvalid(
                f"template must be one of {', '.join(CLASSIFICATION_TEMPLATES)}, got {cfg.template!r}"
            )
        if cfg.classifier is not None:
            raise ConfigInvalid("prompt-template classification takes no triple classifier")
    else:  # approach2
        if checkpoint.family != FAMILY_ENCODER_DECODER:
            raise ConfigInvalid(
                f"intermediary-text generation needs an encoder-decoder family, got {cfg.family!r}"
            )
        if cfg.template not in GENERATION_TEMPLATE_PAIRS:
            raise ConfigInvalid(
                f"template must be one of {', '.join(GENERATION_TEMPLATE_PAIRS)}, got {cfg.template!r}"
            )
        valid = CLASSICAL_CLASSIFIERS + PLM_TRIPLE_CLASSIFIERS
        if cfg.classifier not in valid:
            raise ConfigInvalid(
                f"classifier must be one of {', '.join(valid)}, got {cfg.classifier!r}"
            )

    if not (0.0 <= cfg.threshold <= 1.0):
        raise ConfigInvalid(f"threshold must be in [0, 1], got {cfg.threshold}")
    if cfg.max_new_tokens < 1:
        raise ConfigInvalid(f"max_new_tokens must be >= 1, got {cfg.max_new_tokens}")
    if cfg.split_mode == "in_domain":
        if abs(sum(cfg.ratios) - 100.0) > 0.5:
            raise ConfigInvalid(f"split ratios {cfg.ratios} do not sum to 100")
    else:
        if any(n < 1 for n in cfg.topic_counts):
            raise ConfigInvalid(f"topic counts must be positive, got {cfg.topic_counts}")
    # surfaces bad numeric settings at load time rather than mid-run
    train_config_for(cfg.family, cfg.train_overrides)


def _get(parser: configparser.ConfigParser, section: str, option: str, default=None):
    if parser.has_option(section, option):
        return parser.get(section, option)
    return default


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse an experiment INI file. Raises ConfigInvalid on any problem."""
    path = Path(path)
    if not path.exists():
        raise ConfigInvalid(f"config file does not exist: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc

    for section in ("experiment", "model", "split"):
        if not parser.has_section(section):
            raise ConfigInvalid(f"{path}: missing [{section}] section")

    try:
        kind = parser.get("experiment", "kind")
        name = _get(parser, "experiment", "name", path.stem)
        family = parser.get("model", "family")
        template = _get(parser, "model", "template")
        classifier = _get(parser, "classifier", "kind") if parser.has_section("classifier") else None

        split_mode = parser.get("split", "mode")
        split_seed = int(_get(parser, "split", "seed", DEFAULT_SPLIT_SEED))
        ratios = DEFAULT_RATIOS
        topic_counts = DEFAULT_TOPIC_COUNTS
        if parser.has_option("split", "ratios"):
            parts = parser.get("split", "ratios").split()
            if len(parts) != 3:
                raise ConfigInvalid(f"{path}: ratios needs three numbers, got {parts}")
            ratios = tuple(float(p) for p in parts)
        if parser.has_option("split", "train_topics"):
            topic_counts = (
                parser.getint("split", "train_topics"),
                parser.getint("split", "dev_topics"),
                parser.getint("split", "test_topics"),
            )

        data_path = _get(parser, "data", "path") if parser.has_section("data") else None
        data_format = (_get(parser, "data", "format", "pair_csv")
                       if parser.has_section("data") else "pair_csv")
        add_stops = (parser.getboolean("data", "add_full_stops", fallback=True)
                     if parser.has_section("data") else True)

        overrides = {}
        if parser.has_section("train"):
            for key in parser.options("train"):
                if key not in _TRAIN_KEYS:
                    raise ConfigInvalid(f"{path}: unknown [train] setting {key!r}")
                raw = parser.get("train", key)
                if key in _TRAIN_STR_KEYS:
                    overrides[key] = raw
                elif key in _TRAIN_INT_KEYS:
                    overrides[key] = int(raw)
                else:
                    overrides[key] = float(raw)

        threshold = 0.5
        threshold_learning = False
        max_new_tokens = 32
        if parser.has_section("infer"):
            threshold = parser.getfloat("infer", "threshold", fallback=0.5)
            mode = _get(parser, "infer", "threshold_learning", "off")
            if mode not in ("on", "off"):
                raise ConfigInvalid(f"{path}: threshold_learning must be on or off, got {mode!r}")
            threshold_learning = mode == "on"
            max_new_tokens = parser.getint("infer", "max_new_tokens", fallback=32)
    except (configparser.Error, ValueError) as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc

    return ExperimentConfig(
        kind=kind,
        name=name,
        family=family,
        split_mode=split_mode,
        split_seed=split_seed,
        ratios=ratios,
        topic_counts=topic_counts,
        data_path=data_path,
        data_format=data_format,
        add_full_stops=add_stops,
        template=template,
        classifier=classifier,
        train_overrides=overrides,
        threshold=threshold,
        threshold_learning=threshold_learning,
        max_new_tokens=max_new_tokens,
    )


def preset_names() -> list[str]:
    """Names of the shipped experiment presets, sorted."""
    root = resources.files("kpmatch").joinpath("presets")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def load_preset(name: str) -> ExperimentConfig:
    root = resources.files("kpmatch").joinpath("presets")
    target = root.joinpath(f"{name}.ini")
    if not target.is_file():
        raise ConfigInvalid(
            f"no preset named {name!r}; run 'kpmatch run --list-presets' to see them"
        )
    with resources.as_file(target) as real_path:
        cfg = load_config(real_path)
    cfg.name = name
    return cfg
