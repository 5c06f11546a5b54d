"""Pair matchers: plain fine-tuned baselines and prompt-template classifiers.

A matcher spec names a checkpoint, a training config, and one of two kinds:

* ``baseline`` feeds raw texts to the model. Encoder classifiers see
  (argument, key point) segment pairs; encoder-decoders see the two texts
  joined by the checkpoint's separator and emit a label word. No template
  text touches the inputs on either route.
* ``prompted`` renders each pair through one of the built-in classification
  templates (t1..t5) and scores the template's answer words at the mask;
  training targets the gold label's word.

``train_matcher`` fine-tunes as its ``MatcherSpec`` directs and tags the
artifact with that shape; ``predict_matcher`` refuses artifacts trained under
a different shape and emits one :class:`Prediction` per record, thresholded
strictly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .corpus import ArgKPRecord
from .errors import EmptySplit, KindMismatch, SpecInvalid
from .evaluation import Prediction
from .prompts import (
    BUILTIN_ANSWER_WORDS,
    CLASSIFICATION_TEMPLATES,
    builtin_template,
    render,
    verbalize,
)
from .runtime import (
    FAMILY_ENCODER_CLASSIFIER,
    FAMILY_ENCODER_DECODER,
    TASK_CLASSIFY,
    TASK_PROMPTED,
    CheckpointRef,
    ModelArtifact,
    PromptedExample,
    Runtime,
    TextPairExample,
    TrainConfig,
)

KIND_BASELINE = "baseline"
KIND_PROMPTED = "prompted"
MATCHER_KINDS = (KIND_BASELINE, KIND_PROMPTED)

# Answer words for the no-template seq2seq route, one per label.
SEQ2SEQ_LABEL_WORDS: dict[int, tuple[str, ...]] = {0: ("no",), 1: ("yes",)}


@dataclass(frozen=True)
class MatcherSpec:
    """What to train: kind, checkpoint, optional template and verbalizer."""

    kind: str
    checkpoint: CheckpointRef
    train_config: TrainConfig
    template: str | None = None
    verbalizer: dict[int, tuple[str, ...]] | None = None

    def __post_init__(self) -> None:
        if self.kind not in MATCHER_KINDS:
            raise SpecInvalid(f"matcher kind must be one of {', '.join(MATCHER_KINDS)}, got {self.kind!r}")
        if self.kind == KIND_BASELINE:
            if self.template is not None:
                raise SpecInvalid("baseline matchers take no template")
            if self.verbalizer is not None:
                raise SpecInvalid("baseline matchers take no verbalizer")
            return
        if self.checkpoint.family != FAMILY_ENCODER_DECODER:
            raise SpecInvalid(
                f"prompted classification needs an encoder-decoder family, got {self.checkpoint.name}"
            )
        if self.template not in CLASSIFICATION_TEMPLATES:
            raise SpecInvalid(
                f"prompted matcher template must be one of {', '.join(CLASSIFICATION_TEMPLATES)}, "
                f"got {self.template!r}"
            )
        if self.verbalizer is None:
            object.__setattr__(self, "verbalizer", BUILTIN_ANSWER_WORDS[self.template])
        if set(self.verbalizer) != {0, 1}:
            raise SpecInvalid(f"verbalizer must map labels 0 and 1, got {sorted(self.verbalizer)}")

    @property
    def spec_name(self) -> str:
        if self.kind == KIND_BASELINE:
            return f"baseline-{self.checkpoint.name}"
        return f"prompted-{self.template}-{self.checkpoint.name}"


def _pair(record: ArgKPRecord) -> TextPairExample:
    return TextPairExample(record.argument, record.key_point, record.label)


def _seq2seq_text(spec: MatcherSpec, record: ArgKPRecord) -> str:
    return (
        f"{record.argument} {spec.checkpoint.sep_token} {record.key_point} "
        f"{spec.checkpoint.mask_marker}"
    )


def _prompt_text(spec: MatcherSpec, record: ArgKPRecord) -> str:
    template = builtin_template(spec.template)
    if set(template.input_slots) != {"X1", "X2"}:
        raise SpecInvalid(
            f"pair classification template must use X1 and X2, got {template.input_slots}"
        )
    return render(
        template,
        {"X1": record.argument, "X2": record.key_point},
        answer_text=None,
        mask_marker=spec.checkpoint.mask_marker,
    )


def _prompted_examples(spec: MatcherSpec, records: list[ArgKPRecord], with_answers: bool):
    words = spec.verbalizer if spec.kind == KIND_PROMPTED else SEQ2SEQ_LABEL_WORDS
    text_of = _prompt_text if spec.kind == KIND_PROMPTED else _seq2seq_text
    out = []
    for record in records:
        answer = words[record.label][0] if with_answers else None
        out.append(PromptedExample(text_of(spec, record), answer))
    return out


def train_matcher(
    runtime: Runtime,
    spec: MatcherSpec,
    train: list[ArgKPRecord],
    dev: list[ArgKPRecord],
) -> ModelArtifact:
    """Fine-tune as ``spec`` directs; the artifact is tagged with its shape."""
    if not train:
        raise EmptySplit("cannot fit a matcher on an empty training split")
    if spec.kind == KIND_BASELINE and spec.checkpoint.family == FAMILY_ENCODER_CLASSIFIER:
        artifact = runtime.finetune(
            spec.checkpoint, TASK_CLASSIFY,
            [_pair(r) for r in train], [_pair(r) for r in dev],
            spec.train_config,
        )
    else:
        artifact = runtime.finetune(
            spec.checkpoint, TASK_PROMPTED,
            _prompted_examples(spec, train, with_answers=True),
            _prompted_examples(spec, dev, with_answers=True),
            spec.train_config,
        )
    artifact.tags.update({"matcher_kind": spec.kind, "template": spec.template or ""})
    return artifact


def _require_same_shape(artifact: ModelArtifact, spec: MatcherSpec) -> None:
    got_kind = artifact.tags.get("matcher_kind")
    got_template = artifact.tags.get("template") or None
    if got_kind != spec.kind or got_template != spec.template:
        raise KindMismatch(
            f"artifact was trained as {got_kind!r} (template {got_template!r}); "
            f"spec asks for {spec.kind!r} (template {spec.template!r})"
        )


def predict_proba_matcher(
    runtime: Runtime,
    artifact: ModelArtifact,
    spec: MatcherSpec,
    records: list[ArgKPRecord],
) -> list[float]:
    """Match probability per record, in order."""
    _require_same_shape(artifact, spec)
    if spec.kind == KIND_BASELINE and spec.checkpoint.family == FAMILY_ENCODER_CLASSIFIER:
        return runtime.classify(artifact, [_pair(r) for r in records])
    words_by_label = spec.verbalizer if spec.kind == KIND_PROMPTED else SEQ2SEQ_LABEL_WORDS
    flat_words = [w for ws in words_by_label.values() for w in ws]
    texts = [e.masked_text for e in _prompted_examples(spec, records, with_answers=False)]
    scored = runtime.score_answers(artifact, texts, flat_words)
    return [verbalize(s, words_by_label)[1] for s in scored]


def predict_matcher(
    runtime: Runtime,
    artifact: ModelArtifact,
    spec: MatcherSpec,
    records: list[ArgKPRecord],
    threshold: float = 0.5,
) -> list[Prediction]:
    """One prediction per record; label 1 iff probability strictly exceeds
    the threshold."""
    probs = predict_proba_matcher(runtime, artifact, spec, records)
    return [
        Prediction(r.pair_id, 1 if p > threshold else 0, p)
        for r, p in zip(records, probs)
    ]


def write_predictions(
    path: str | Path,
    predictions: list[Prediction],
    spec_name: str,
    split_name: str,
    append: bool = False,
) -> Path:
    """Append predictions to a JSON-lines file, one object per pair."""
    path = Path(path)
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8") as fh:
        for p in predictions:
            fh.write(json.dumps({
                "pair_id": p.pair_id,
                "label": p.label,
                "match_probability": p.match_probability,
                "spec_name": spec_name,
                "split_name": split_name,
            }, sort_keys=True) + "\n")
    return path
