"""Model runtime contract shared by the stub and transformers backends.

A runtime fine-tunes a checkpoint for one of three tasks:

* ``pair_classification``: (text_a, text_b) -> probability of label 1;
* ``prompted_classification``: masked prompt + candidate answer words ->
  per-word scores at the mask;
* ``conditional_generation``: masked prompt -> generated span.

``finetune`` dispatches on the task name and returns a
:class:`ModelArtifact` carrying the per-epoch metrics, the selected best
epoch, and a runtime-specific payload. Epoch selection prefers the highest
dev macro-F1 (classification tasks) or the lowest dev loss (generation);
ties go to the later epoch. Artifacts round-trip through
``save_artifact``/``load_artifact`` as a directory holding the weights
blob, ``train_config.json``, ``metrics.jsonl``, and ``fingerprint.txt``.
"""

from __future__ import annotations

import hashlib
import json
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from ..errors import ConfigInvalid, IncompatibleTask, KindMismatch, UnknownTask

FAMILY_ENCODER_CLASSIFIER = "encoder_classifier"
FAMILY_ENCODER_DECODER = "encoder_decoder"

TASK_CLASSIFY = "pair_classification"
TASK_PROMPTED = "prompted_classification"
TASK_GENERATE = "conditional_generation"

_TASKS = (TASK_CLASSIFY, TASK_PROMPTED, TASK_GENERATE)

OPTIMIZERS = ("adam",)

DECODE_GREEDY = "greedy"
DECODE_BEAM = "beam"
DEFAULT_BEAM_WIDTH = 4


@dataclass(frozen=True)
class CheckpointRef:
    """A pretrained checkpoint and how to drive it.

    ``family`` selects the usable tasks: encoder classifiers do pair
    classification, encoder-decoders do prompted classification and
    generation. ``mask_marker`` is the model line's fill-in token as it
    appears in prompt text; ``sep_token`` joins text segments that must
    stay distinguishable.
    """

    name: str
    model_id: str
    family: str
    mask_marker: str
    sep_token: str


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for one training run.

    ``max_steps`` caps total optimizer steps; 0 skips training entirely and
    yields an artifact that behaves like the raw checkpoint. ``soft_lr``
    gives trainable prompt tokens their own learning rate; the rest of the
    model keeps ``learning_rate``.
    """

    learning_rate: float
    epochs: int
    optimizer_name: str = "adam"
    batch_size: int = 16
    max_input_length: int = 256
    seed: int = 0
    max_steps: int | None = None
    soft_lr: float | None = None

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigInvalid(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigInvalid(f"epochs must be >= 1, got {self.epochs}")
        if self.optimizer_name not in OPTIMIZERS:
            raise ConfigInvalid(
                f"optimizer_name must be one of {', '.join(OPTIMIZERS)}, got {self.optimizer_name!r}"
            )
        if self.batch_size < 1:
            raise ConfigInvalid(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_input_length < 8:
            raise ConfigInvalid(f"max_input_length must be >= 8, got {self.max_input_length}")
        if self.max_steps is not None and self.max_steps < 0:
            raise ConfigInvalid(f"max_steps must be >= 0, got {self.max_steps}")
        if self.soft_lr is not None and self.soft_lr <= 0:
            raise ConfigInvalid(f"soft_lr must be positive, got {self.soft_lr}")


@dataclass(frozen=True)
class TextPairExample:
    """A two-segment classification input; label is None at inference."""

    text_a: str
    text_b: str
    label: int | None = None


@dataclass(frozen=True)
class PromptedExample:
    """A prompt containing the mask marker; answer is None at inference."""

    masked_text: str
    answer: str | None = None


@dataclass
class ModelArtifact:
    """A trained (or deliberately untrained) model plus its training trace.

    ``history`` holds one dict per completed epoch with keys ``epoch``,
    ``train_loss``, ``dev_loss``, and ``dev_macro_f1`` (None for generation,
    where no label-level metric exists). ``best_epoch`` is 1-based and 0
    when no training happened. ``tags`` records caller provenance, e.g.
    which matcher kind produced the artifact.
    """

    task: str
    checkpoint: CheckpointRef
    config: TrainConfig
    runtime_kind: str
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    tags: dict[str, str] = field(default_factory=dict)
    payload: Any = None

    def require_task(self, task: str) -> None:
        if self.task != task:
            raise UnknownTask(
                f"artifact was trained for {self.task!r}, not {task!r}"
            )


def require_family(checkpoint: CheckpointRef, family: str, op: str) -> None:
    if checkpoint.family != family:
        raise IncompatibleTask(
            f"{op} needs a {family} checkpoint; {checkpoint.name} is {checkpoint.family}"
        )


def pick_best_epoch(history: list[dict]) -> int:
    """1-based epoch with the best dev metric; ties go to the later epoch.

    Rows carrying ``dev_macro_f1`` are ranked by it (higher is better);
    otherwise the lowest ``dev_loss`` wins.
    """
    best, best_key = 0, None
    for row in history:
        f1 = row.get("dev_macro_f1")
        key = f1 if f1 is not None else -row["dev_loss"]
        if best_key is None or key >= best_key:
            best, best_key = int(row["epoch"]), key
    return best


def macro_f1_multiclass(gold: list, pred: list) -> float:
    """Mean per-class F1 over the union of observed classes; 0/0 counts as 0.

    Used for per-epoch dev tracking where "classes" may be answer words.
    """
    classes = sorted(set(gold) | set(pred), key=str)
    scores = []
    for c in classes:
        tp = sum(1 for g, p in zip(gold, pred) if g == c and p == c)
        fp = sum(1 for g, p in zip(gold, pred) if g != c and p == c)
        fn = sum(1 for g, p in zip(gold, pred) if g == c and p != c)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        scores.append(2 * precision * recall / (precision + recall) if precision + recall else 0.0)
    return sum(scores) / len(scores) if scores else 0.0


def parse_decode(decode: str) -> tuple[str, int]:
    """Split a decode directive into (strategy, beam width).

    Accepts ``greedy``, ``beam`` (width 4), or ``beam:<width>``.
    """
    if decode == DECODE_GREEDY:
        return DECODE_GREEDY, 1
    if decode == DECODE_BEAM:
        return DECODE_BEAM, DEFAULT_BEAM_WIDTH
    if decode.startswith(f"{DECODE_BEAM}:"):
        raw = decode.split(":", 1)[1]
        try:
            width = int(raw)
        except ValueError:
            raise ConfigInvalid(f"beam width must be an integer, got {raw!r}") from None
        if width < 1:
            raise ConfigInvalid(f"beam width must be >= 1, got {width}")
        return DECODE_BEAM, width
    raise ConfigInvalid(f"decode must be 'greedy', 'beam', or 'beam:<width>', got {decode!r}")


class Runtime(ABC):
    """Backend-neutral training and inference interface."""

    kind: str

    def finetune(
        self,
        checkpoint: CheckpointRef,
        task: str,
        train: list,
        dev: list,
        config: TrainConfig,
    ) -> ModelArtifact:
        """Fine-tune ``checkpoint`` for ``task`` and return the artifact.

        Examples are :class:`TextPairExample` for pair classification and
        :class:`PromptedExample` for the other tasks.
        """
        if task == TASK_CLASSIFY:
            return self.train_classifier(checkpoint, train, dev, config)
        if task == TASK_PROMPTED:
            return self.train_scorer(checkpoint, train, dev, config)
        if task == TASK_GENERATE:
            return self.train_generator(checkpoint, train, dev, config)
        raise UnknownTask(f"unknown task {task!r}; choose from {', '.join(_TASKS)}")

    @abstractmethod
    def train_classifier(
        self,
        checkpoint: CheckpointRef,
        train: list[TextPairExample],
        dev: list[TextPairExample],
        config: TrainConfig,
    ) -> ModelArtifact:
        """Fine-tune a pair classifier. Needs an encoder_classifier line."""

    @abstractmethod
    def classify(self, artifact: ModelArtifact, examples: list[TextPairExample]) -> list[float]:
        """Probability of label 1 for each example, in order."""

    def predict_class(self, artifact: ModelArtifact, text_a: str, text_b: str) -> tuple[int, float]:
        """(label, probability) for one pair, thresholded strictly at 0.5."""
        prob = self.classify(artifact, [TextPairExample(text_a, text_b)])[0]
        return (1 if prob > 0.5 else 0, prob)

    @abstractmethod
    def train_scorer(
        self,
        checkpoint: CheckpointRef,
        train: list[PromptedExample],
        dev: list[PromptedExample],
        config: TrainConfig,
    ) -> ModelArtifact:
        """Fine-tune a model to produce answer words at the mask. Needs an
        encoder_decoder line; training examples must carry answers."""

    @abstractmethod
    def score_answers(
        self,
        artifact: ModelArtifact,
        masked_texts: list[str],
        candidate_words: list[str],
    ) -> list[dict[str, float]]:
        """Per-text score of each candidate word at the mask position."""

    @abstractmethod
    def train_generator(
        self,
        checkpoint: CheckpointRef,
        train: list[PromptedExample],
        dev: list[PromptedExample],
        config: TrainConfig,
    ) -> ModelArtifact:
        """Fine-tune a model to fill the mask with free text."""

    @abstractmethod
    def generate(
        self,
        artifact: ModelArtifact,
        masked_texts: list[str],
        decode: str = DECODE_GREEDY,
        max_new_tokens: int = 32,
    ) -> list[str]:
        """Generated span for each masked prompt, in order."""

    # --- persistence -------------------------------------------------------

    @abstractmethod
    def _save_weights(self, artifact: ModelArtifact, out_dir: Path) -> None:
        """Write the weights blob under ``out_dir``."""

    @abstractmethod
    def _load_weights(self, meta: dict, in_dir: Path) -> Any:
        """Read the weights blob back into a payload."""

    @abstractmethod
    def _weight_bytes(self, artifact: ModelArtifact) -> bytes:
        """Canonical byte view of the weights, for fingerprinting."""

    def fingerprint(self, artifact: ModelArtifact) -> str:
        """sha256 hex digest of the artifact's weights."""
        return hashlib.sha256(self._weight_bytes(artifact)).hexdigest()

    def save_artifact(self, artifact: ModelArtifact, out_dir: str | Path) -> str:
        """Write the artifact directory; returns the weight fingerprint."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        meta = {
            "task": artifact.task,
            "checkpoint": asdict(artifact.checkpoint),
            "config": asdict(artifact.config),
            "runtime_kind": artifact.runtime_kind,
            "best_epoch": artifact.best_epoch,
            "tags": artifact.tags,
        }
        with open(out_dir / "train_config.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(out_dir / "metrics.jsonl", "w", encoding="utf-8") as fh:
            for row in artifact.history:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        self._save_weights(artifact, out_dir)
        digest = self.fingerprint(artifact)
        (out_dir / "fingerprint.txt").write_text(digest + "\n", encoding="utf-8")
        return digest

    def load_artifact(self, in_dir: str | Path) -> ModelArtifact:
        in_dir = Path(in_dir)
        meta = json.loads((in_dir / "train_config.json").read_text("utf-8"))
        if meta["runtime_kind"] != self.kind:
            raise KindMismatch(
                f"artifact was saved by the {meta['runtime_kind']!r} runtime; "
                f"this is the {self.kind!r} runtime"
            )
        if meta["task"] not in _TASKS:
            raise UnknownTask(f"artifact has unknown task {meta['task']!r}")
        history = [
            json.loads(line)
            for line in (in_dir / "metrics.jsonl").read_text("utf-8").splitlines()
            if line.strip()
        ]
        artifact = ModelArtifact(
            task=meta["task"],
            checkpoint=CheckpointRef(**meta["checkpoint"]),
            config=TrainConfig(**meta["config"]),
            runtime_kind=meta["runtime_kind"],
            history=history,
            best_epoch=meta["best_epoch"],
            tags=meta.get("tags", {}),
        )
        artifact.payload = self._load_weights(meta, in_dir)
        return artifact
