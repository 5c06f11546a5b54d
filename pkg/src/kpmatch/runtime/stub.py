"""Deterministic in-process runtime for tests and dry runs.

No real model is involved. Predictions are derived from sha256 hashes of
the inputs, so every op is reproducible across machines and runs. Training
"learns" by memorizing its training set: predictions on training inputs are
blended from a hash-derived prior toward the correct output, with the blend
weight growing linearly in optimizer steps. Dev inputs drift toward their
targets at 0.8x that weight, imitating generalization, so loss curves fall,
dev macro-F1 climbs, and best-epoch selection has something to select over.
Inference uses the blend weight of the selected best epoch.

The constructor accepts optional overrides (``classify_fn``, ``score_fn``,
``generate_fn``) so tests can pin exact model behavior, and every public op
appends to ``call_log`` so tests can assert what a caller sent to the model.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any, Callable

from ..errors import (
    DivergedLoss,
    EmptySplit,
    MissingLabelInTrainPhase,
    NoMaskFound,
)
from .base import (
    FAMILY_ENCODER_CLASSIFIER,
    FAMILY_ENCODER_DECODER,
    TASK_CLASSIFY,
    TASK_GENERATE,
    TASK_PROMPTED,
    CheckpointRef,
    ModelArtifact,
    PromptedExample,
    Runtime,
    TextPairExample,
    TrainConfig,
    macro_f1_multiclass,
    parse_decode,
    pick_best_epoch,
    require_family,
)

_PAIR_SEP = "\x1f"

# Learning rates above this threshold make the simulated loss diverge.
DIVERGENCE_LR = 1.0

# Dev inputs move toward the target slower than memorized training inputs.
_DEV_ALPHA_FACTOR = 0.8

_SCORE_HIT = 2.0
_SCORE_MISS = -2.0


def _hash01(key: str) -> float:
    """Deterministic float in [0, 1) from a string."""
    digest = hashlib.sha256(key.encode("utf-8")).hexdigest()
    return int(digest[:12], 16) / float(16 ** 12)


def _truncate(text: str, max_tokens: int) -> str:
    tokens = text.split()
    if len(tokens) <= max_tokens:
        return text
    return " ".join(tokens[:max_tokens])


def _blend(p0: float, target: float, alpha: float) -> float:
    return p0 + alpha * (target - p0)


class StubRuntime(Runtime):
    kind = "stub"

    def __init__(
        self,
        classify_fn: Callable[[TextPairExample], float] | None = None,
        score_fn: Callable[[str, str], float] | None = None,
        generate_fn: Callable[[str], str] | None = None,
    ) -> None:
        self.classify_fn = classify_fn
        self.score_fn = score_fn
        self.generate_fn = generate_fn
        self.call_log: list[dict[str, Any]] = []

    # --- shared helpers ------------------------------------------------------

    def _log(self, op: str, **payload: Any) -> None:
        self.call_log.append({"op": op, **payload})

    def _prior(self, artifact_key: str, example_key: str) -> float:
        return 0.05 + 0.90 * _hash01(f"{artifact_key}|{example_key}")

    @staticmethod
    def _artifact_key(task: str, checkpoint: CheckpointRef, config: TrainConfig) -> str:
        return f"{task}|{checkpoint.name}|{config.seed}"

    def _train(
        self,
        task: str,
        checkpoint: CheckpointRef,
        config: TrainConfig,
        n_train: int,
        gold_probs: list[Callable[[float], float]],
        dev_gold_probs: list[Callable[[float], float]],
        dev_metric: Callable[[float], float] | None,
        memorized: dict[str, Any],
        memorized_dev: dict[str, Any],
    ) -> ModelArtifact:
        """Shared alpha-schedule training loop.

        ``gold_probs``/``dev_gold_probs`` hold one callable per example that
        maps a blend weight alpha to the probability assigned to the correct
        output; the loss is the mean negative log of those probabilities.
        ``dev_metric`` maps the dev-side alpha to a macro-F1 and is None for
        generation, which has no label-level dev metric.
        """
        if n_train == 0:
            raise EmptySplit(f"cannot train {task} on an empty training set")
        if config.learning_rate > DIVERGENCE_LR:
            raise DivergedLoss(
                f"loss diverged at learning_rate={config.learning_rate} "
                f"(stub divergence threshold is {DIVERGENCE_LR})"
            )

        steps_per_epoch = math.ceil(n_train / config.batch_size)
        planned = config.epochs * steps_per_epoch
        cap = planned if config.max_steps is None else min(config.max_steps, planned)

        artifact = ModelArtifact(
            task=task,
            checkpoint=checkpoint,
            config=config,
            runtime_kind=self.kind,
        )
        if cap == 0:
            artifact.payload = {"memorized": {}, "memorized_dev": {}, "alpha": 0.0}
            return artifact

        history = []
        for epoch in range(1, config.epochs + 1):
            steps_done = min(epoch * steps_per_epoch, cap)
            alpha = steps_done / planned
            train_loss = -sum(math.log(p(alpha)) for p in gold_probs) / len(gold_probs)
            dev_alpha = alpha * _DEV_ALPHA_FACTOR
            if dev_gold_probs:
                dev_loss = -sum(math.log(p(dev_alpha)) for p in dev_gold_probs) / len(dev_gold_probs)
            else:
                dev_loss = train_loss
            history.append({
                "epoch": float(epoch),
                "train_loss": train_loss,
                "dev_loss": dev_loss,
                "dev_macro_f1": dev_metric(dev_alpha) if dev_metric else None,
            })
        artifact.history = history
        artifact.best_epoch = pick_best_epoch(history)
        best_alpha = min(artifact.best_epoch * steps_per_epoch, cap) / planned
        artifact.payload = {
            "memorized": memorized,
            "memorized_dev": memorized_dev,
            "alpha": best_alpha,
        }
        return artifact

    # --- pair classification -------------------------------------------------

    @staticmethod
    def _pair_key(example: TextPairExample, max_len: int) -> str:
        return _truncate(example.text_a, max_len) + _PAIR_SEP + _truncate(example.text_b, max_len)

    def _prob_of_one(self, akey: str, key: str, label: int) -> Callable[[float], float]:
        """alpha -> probability assigned to class 1, drifting toward the label."""
        p0 = self._prior(akey, key)
        target = max(0.9, p0) if label == 1 else min(0.1, p0)
        return lambda a: _blend(p0, target, a)

    def train_classifier(self, checkpoint, train, dev, config):
        require_family(checkpoint, FAMILY_ENCODER_CLASSIFIER, "train_classifier")
        self._log("train_classifier", checkpoint=checkpoint.name,
                  n_train=len(train), n_dev=len(dev), config=config)
        akey = self._artifact_key(TASK_CLASSIFY, checkpoint, config)

        def rows(examples, what):
            out = []
            for ex in examples:
                if ex.label is None:
                    raise MissingLabelInTrainPhase(f"unlabeled {what} pair: {ex.text_a[:40]!r}")
                key = self._pair_key(ex, config.max_input_length)
                out.append((key, ex.label, self._prob_of_one(akey, key, ex.label)))
            return out

        train_rows = rows(train, "training")
        dev_rows = rows(dev, "dev")

        def dev_metric(alpha: float) -> float:
            gold = [label for _, label, _ in dev_rows]
            pred = [1 if p1(alpha) > 0.5 else 0 for _, _, p1 in dev_rows]
            return macro_f1_multiclass(gold, pred) if gold else 0.0

        def gold_prob(label, p1):
            return p1 if label == 1 else (lambda a: 1.0 - p1(a))

        return self._train(
            TASK_CLASSIFY, checkpoint, config,
            n_train=len(train_rows),
            gold_probs=[gold_prob(label, p1) for _, label, p1 in train_rows],
            dev_gold_probs=[gold_prob(label, p1) for _, label, p1 in dev_rows],
            dev_metric=dev_metric if dev_rows else None,
            memorized={key: label for key, label, _ in train_rows},
            memorized_dev={key: label for key, label, _ in dev_rows},
        )

    def classify(self, artifact, examples):
        artifact.require_task(TASK_CLASSIFY)
        self._log("classify", checkpoint=artifact.checkpoint.name,
                  texts=[(e.text_a, e.text_b) for e in examples])
        if self.classify_fn is not None:
            return [self.classify_fn(e) for e in examples]
        akey = self._artifact_key(TASK_CLASSIFY, artifact.checkpoint, artifact.config)
        memorized = artifact.payload["memorized"]
        memorized_dev = artifact.payload["memorized_dev"]
        alpha = artifact.payload["alpha"]
        out = []
        for ex in examples:
            key = self._pair_key(ex, artifact.config.max_input_length)
            p0 = self._prior(akey, key)
            if key in memorized:
                label, a = memorized[key], alpha
            elif key in memorized_dev:
                label, a = memorized_dev[key], alpha * _DEV_ALPHA_FACTOR
            else:
                out.append(p0)
                continue
            target = max(0.9, p0) if label == 1 else min(0.1, p0)
            out.append(_blend(p0, target, a))
        return out

    # --- prompted classification ----------------------------------------------

    def _check_masked(self, checkpoint: CheckpointRef, texts: list[str]) -> None:
        for text in texts:
            if checkpoint.mask_marker not in text:
                raise NoMaskFound(
                    f"prompt lacks mask marker {checkpoint.mask_marker!r}: {text[:60]!r}"
                )

    def _word_score(self, akey: str, key: str, word: str, answer: str | None, alpha: float) -> float:
        base = _SCORE_MISS + (_SCORE_HIT - _SCORE_MISS) * _hash01(f"{akey}|{key}|{word}")
        if answer is None:
            return base
        target = _SCORE_HIT if word == answer else _SCORE_MISS
        return _blend(base, target, alpha)

    def _train_prompted(self, task, checkpoint, train, dev, config, op):
        require_family(checkpoint, FAMILY_ENCODER_DECODER, op)
        self._check_masked(checkpoint, [ex.masked_text for ex in train + dev])
        akey = self._artifact_key(task, checkpoint, config)
        for ex in train:
            if ex.answer is None:
                raise MissingLabelInTrainPhase(
                    f"training prompt lacks an answer: {ex.masked_text[:40]!r}"
                )
        train_rows = [(_truncate(ex.masked_text, config.max_input_length), ex.answer) for ex in train]
        dev_rows = [
            (_truncate(ex.masked_text, config.max_input_length), ex.answer)
            for ex in dev
            if ex.answer is not None
        ]

        def gold_prob(key):
            p0 = self._prior(akey, key)
            target = max(0.9, p0)
            return lambda a: _blend(p0, target, a)

        vocabulary = sorted({answer for _, answer in train_rows + dev_rows})

        def dev_metric(alpha: float) -> float:
            gold, pred = [], []
            for key, answer in dev_rows:
                scores = {w: self._word_score(akey, key, w, answer, alpha) for w in vocabulary}
                gold.append(answer)
                pred.append(max(vocabulary, key=lambda w: (scores[w], w)))
            return macro_f1_multiclass(gold, pred) if gold else 0.0

        want_metric = task == TASK_PROMPTED and bool(dev_rows)
        return self._train(
            task, checkpoint, config,
            n_train=len(train_rows),
            gold_probs=[gold_prob(key) for key, _ in train_rows],
            dev_gold_probs=[gold_prob(key) for key, _ in dev_rows],
            dev_metric=dev_metric if want_metric else None,
            memorized=dict(train_rows),
            memorized_dev=dict(dev_rows),
        )

    def train_scorer(self, checkpoint, train, dev, config):
        self._log("train_scorer", checkpoint=checkpoint.name,
                  n_train=len(train), n_dev=len(dev), config=config)
        return self._train_prompted(TASK_PROMPTED, checkpoint, train, dev, config, "train_scorer")

    def score_answers(self, artifact, masked_texts, candidate_words):
        artifact.require_task(TASK_PROMPTED)
        self._log("score_answers", checkpoint=artifact.checkpoint.name,
                  texts=list(masked_texts), words=list(candidate_words))
        self._check_masked(artifact.checkpoint, masked_texts)
        if self.score_fn is not None:
            return [{w: self.score_fn(t, w) for w in candidate_words} for t in masked_texts]
        akey = self._artifact_key(TASK_PROMPTED, artifact.checkpoint, artifact.config)
        memorized = artifact.payload["memorized"]
        memorized_dev = artifact.payload["memorized_dev"]
        alpha = artifact.payload["alpha"]
        out = []
        for text in masked_texts:
            key = _truncate(text, artifact.config.max_input_length)
            if key in memorized:
                answer, a = memorized[key], alpha
            elif key in memorized_dev:
                answer, a = memorized_dev[key], alpha * _DEV_ALPHA_FACTOR
            else:
                answer, a = None, 0.0
            out.append({w: self._word_score(akey, key, w, answer, a) for w in candidate_words})
        return out

    # --- generation -------------------------------------------------------------

    def train_generator(self, checkpoint, train, dev, config):
        self._log("train_generator", checkpoint=checkpoint.name,
                  n_train=len(train), n_dev=len(dev), config=config)
        return self._train_prompted(TASK_GENERATE, checkpoint, train, dev, config, "train_generator")

    def _pseudo_text(self, akey: str, prompt: str, mask_marker: str) -> str:
        """Deterministic stand-in generation built from the prompt's words."""
        words = [w.strip(".,:;?!\"'") for w in prompt.replace(mask_marker, " ").split()]
        words = [w for w in words if len(w) > 2]
        seen = sorted(set(words), key=lambda w: _hash01(f"{akey}|{prompt}|{w}"))
        picked = seen[:4]
        return " ".join(picked) if picked else "no content"

    def generate(self, artifact, masked_texts, decode="greedy", max_new_tokens=32):
        artifact.require_task(TASK_GENERATE)
        strategy, width = parse_decode(decode)
        self._log("generate", checkpoint=artifact.checkpoint.name,
                  texts=list(masked_texts), decode=decode,
                  strategy=strategy, beam_width=width, max_new_tokens=max_new_tokens)
        self._check_masked(artifact.checkpoint, masked_texts)
        if self.generate_fn is not None:
            return [self.generate_fn(t) for t in masked_texts]
        akey = self._artifact_key(TASK_GENERATE, artifact.checkpoint, artifact.config)
        memorized = artifact.payload["memorized"]
        memorized_dev = artifact.payload["memorized_dev"]
        alpha = artifact.payload["alpha"]
        out = []
        for text in masked_texts:
            key = _truncate(text, artifact.config.max_input_length)
            answer = memorized.get(key, memorized_dev.get(key))
            if answer is not None and alpha > 0:
                generated = answer
            else:
                generated = self._pseudo_text(akey, key, artifact.checkpoint.mask_marker)
            out.append(" ".join(generated.split()[:max_new_tokens]))
        return out

    # --- persistence --------------------------------------------------------------

    def _weight_bytes(self, artifact: ModelArtifact) -> bytes:
        return json.dumps(artifact.payload, sort_keys=True).encode("utf-8")

    def _save_weights(self, artifact: ModelArtifact, out_dir: Path) -> None:
        (out_dir / "weights.json").write_bytes(self._weight_bytes(artifact) + b"\n")

    def _load_weights(self, meta: dict, in_dir: Path) -> Any:
        return json.loads((in_dir / "weights.json").read_text("utf-8"))
