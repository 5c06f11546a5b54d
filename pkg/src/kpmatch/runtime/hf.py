"""Transformers-backed runtime (optional dependency).

Encoder classifiers fine-tune a two-label sequence classification head on
(text_a, text_b) pairs. Encoder-decoder families fine-tune with the masked
prompt as input and the answer span as target; answer scoring ranks
candidate words by mean target log-probability, generation decodes
greedily or with beam search.

Per epoch the loop records train loss, dev loss, and a dev macro-F1
(classification tasks only); the weights from the best dev epoch are
restored before returning. Soft prompt tokens are approximated as ordinary
words under full fine-tuning; when ``soft_lr`` is set, the input embedding
matrix (where those word vectors live) gets its own learning rate.

Everything runs with plain Adam, per the experiment defaults. A
``model_loader`` override lets tests supply local models instead of hub
checkpoints.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Any, Callable

from ..errors import (
    DivergedLoss,
    EmptySplit,
    MissingLabelInTrainPhase,
    NoMaskFound,
    ResourceExhausted,
    RuntimeUnavailable,
)
from .base import (
    DECODE_BEAM,
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

try:
    import torch

    _IMPORT_ERROR: Exception | None = None
except Exception as exc:  # pragma: no cover - depends on environment
    torch = None
    _IMPORT_ERROR = exc

# (tokenizer, model) given a checkpoint and task
ModelLoader = Callable[[CheckpointRef, str], tuple[Any, Any]]


def _default_loader(checkpoint: CheckpointRef, task: str) -> tuple[Any, Any]:
    from transformers import (
        AutoModelForSeq2SeqLM,
        AutoModelForSequenceClassification,
        AutoTokenizer,
    )

    tokenizer = AutoTokenizer.from_pretrained(checkpoint.model_id)
    if task == TASK_CLASSIFY:
        model = AutoModelForSequenceClassification.from_pretrained(
            checkpoint.model_id, num_labels=2
        )
    else:
        model = AutoModelForSeq2SeqLM.from_pretrained(checkpoint.model_id)
    return tokenizer, model


class HFRuntime(Runtime):
    kind = "hf"

    def __init__(self, device: str = "cpu", model_loader: ModelLoader | None = None) -> None:
        if torch is None:
            raise RuntimeUnavailable(
                f"torch/transformers are not importable: {_IMPORT_ERROR}"
            )
        self.device = torch.device(device)
        self.model_loader = model_loader or _default_loader

    # --- shared training loop ------------------------------------------------

    def _optimizer(self, model: Any, config: TrainConfig) -> Any:
        if config.soft_lr is None:
            return torch.optim.Adam(model.parameters(), lr=config.learning_rate)
        embeddings = model.get_input_embeddings()
        soft_params = list(embeddings.parameters())
        soft_ids = {id(p) for p in soft_params}
        rest = [p for p in model.parameters() if id(p) not in soft_ids]
        return torch.optim.Adam(
            [{"params": soft_params, "lr": config.soft_lr}, {"params": rest}],
            lr=config.learning_rate,
        )

    def _fit(
        self,
        task: str,
        checkpoint: CheckpointRef,
        tokenizer: Any,
        model: Any,
        train_batches: list[dict],
        dev_batches: list[dict],
        config: TrainConfig,
        dev_eval: Callable[[], float] | None = None,
    ) -> ModelArtifact:
        """Epoch loop with best-dev checkpoint selection.

        ``*_batches`` are lists of tokenized tensor dicts. Pair
        classification derives its dev macro-F1 from the dev logits;
        prompted classification supplies a ``dev_eval`` closure; generation
        tracks dev loss only. The best epoch's weights (highest dev
        macro-F1 where tracked, lowest dev loss otherwise; ties to the
        later epoch) are restored before returning.
        """
        artifact = ModelArtifact(
            task=task, checkpoint=checkpoint, config=config, runtime_kind=self.kind
        )
        planned = config.epochs * len(train_batches)
        cap = planned if config.max_steps is None else min(config.max_steps, planned)
        if cap == 0:
            artifact.payload = {"tokenizer": tokenizer, "model": model.eval()}
            return artifact

        torch.manual_seed(config.seed)
        model.to(self.device).train()
        optimizer = self._optimizer(model, config)
        history: list[dict] = []
        best_state: dict | None = None
        best_key: float | None = None
        steps = 0
        try:
            for epoch in range(1, config.epochs + 1):
                model.train()
                losses = []
                for batch in train_batches:
                    if steps >= cap:
                        break
                    optimizer.zero_grad()
                    out = model(**{k: v.to(self.device) for k, v in batch.items()})
                    loss = out.loss
                    if not math.isfinite(loss.item()):
                        raise DivergedLoss(
                            f"non-finite training loss at epoch {epoch}: {loss.item()}"
                        )
                    loss.backward()
                    optimizer.step()
                    losses.append(loss.item())
                    steps += 1
                if not losses:
                    break
                model.eval()
                dev_losses: list[float] = []
                dev_gold: list[int] = []
                dev_pred: list[int] = []
                with torch.no_grad():
                    for batch in dev_batches:
                        out = model(**{k: v.to(self.device) for k, v in batch.items()})
                        dev_losses.append(out.loss.item())
                        if task == TASK_CLASSIFY:
                            dev_pred.extend(out.logits.argmax(dim=-1).tolist())
                            dev_gold.extend(batch["labels"].tolist())
                train_loss = sum(losses) / len(losses)
                dev_loss = sum(dev_losses) / len(dev_losses) if dev_losses else train_loss
                if task == TASK_CLASSIFY and dev_gold:
                    f1 = macro_f1_multiclass(dev_gold, dev_pred)
                elif dev_eval is not None:
                    f1 = dev_eval()
                else:
                    f1 = None
                history.append({
                    "epoch": float(epoch),
                    "train_loss": train_loss,
                    "dev_loss": dev_loss,
                    "dev_macro_f1": f1,
                })
                key = f1 if f1 is not None else -dev_loss
                if best_key is None or key >= best_key:
                    best_key = key
                    best_state = {k: v.detach().clone() for k, v in model.state_dict().items()}
        except torch.cuda.OutOfMemoryError as exc:  # pragma: no cover - needs GPU
            raise ResourceExhausted(f"out of device memory: {exc}") from exc
        except MemoryError as exc:  # pragma: no cover - hard to trigger reliably
            raise ResourceExhausted(f"out of host memory: {exc}") from exc

        if best_state is not None:
            model.load_state_dict(best_state)
        artifact.history = history
        artifact.best_epoch = pick_best_epoch(history)
        artifact.payload = {"tokenizer": tokenizer, "model": model.eval()}
        return artifact

    @staticmethod
    def _chunk(items: list, size: int) -> list[list]:
        return [items[i:i + size] for i in range(0, len(items), size)]

    # --- pair classification ---------------------------------------------------

    def _encode_pairs(
        self, tokenizer: Any, examples: list[TextPairExample], config: TrainConfig,
        with_labels: bool,
    ) -> list[dict]:
        batches = []
        for chunk in self._chunk(examples, config.batch_size):
            enc = tokenizer(
                [e.text_a for e in chunk],
                [e.text_b for e in chunk],
                truncation=True,
                padding=True,
                max_length=config.max_input_length,
                return_tensors="pt",
            )
            if with_labels:
                enc["labels"] = torch.tensor([e.label for e in chunk])
            batches.append(dict(enc))
        return batches

    def train_classifier(self, checkpoint, train, dev, config):
        require_family(checkpoint, FAMILY_ENCODER_CLASSIFIER, "train_classifier")
        if not train:
            raise EmptySplit("cannot train a classifier on an empty training set")
        for ex in train + dev:
            if ex.label is None:
                raise MissingLabelInTrainPhase(f"unlabeled pair: {ex.text_a[:40]!r}")
        tokenizer, model = self.model_loader(checkpoint, TASK_CLASSIFY)
        train_batches = self._encode_pairs(tokenizer, train, config, with_labels=True)
        dev_batches = self._encode_pairs(tokenizer, dev, config, with_labels=True)
        return self._fit(TASK_CLASSIFY, checkpoint, tokenizer, model, train_batches, dev_batches, config)

    def classify(self, artifact, examples):
        artifact.require_task(TASK_CLASSIFY)
        tokenizer = artifact.payload["tokenizer"]
        model = artifact.payload["model"].to(self.device).eval()
        probs: list[float] = []
        with torch.no_grad():
            for batch in self._encode_pairs(tokenizer, examples, artifact.config, with_labels=False):
                logits = model(**{k: v.to(self.device) for k, v in batch.items()}).logits
                probs.extend(torch.softmax(logits, dim=-1)[:, 1].tolist())
        return probs

    # --- prompted classification ------------------------------------------------

    def _check_masked(self, checkpoint: CheckpointRef, texts: list[str]) -> None:
        for text in texts:
            if checkpoint.mask_marker not in text:
                raise NoMaskFound(
                    f"prompt lacks mask marker {checkpoint.mask_marker!r}: {text[:60]!r}"
                )

    def _encode_prompted(
        self, tokenizer: Any, examples: list[PromptedExample], config: TrainConfig
    ) -> list[dict]:
        batches = []
        for chunk in self._chunk(examples, config.batch_size):
            enc = tokenizer(
                [e.masked_text for e in chunk],
                truncation=True,
                padding=True,
                max_length=config.max_input_length,
                return_tensors="pt",
            )
            labels = tokenizer(
                text_target=[e.answer for e in chunk],
                truncation=True,
                padding=True,
                max_length=config.max_input_length,
                return_tensors="pt",
            ).input_ids
            labels[labels == tokenizer.pad_token_id] = -100
            enc["labels"] = labels
            batches.append(dict(enc))
        return batches

    def _score_one(
        self, tokenizer: Any, model: Any, text: str, words: list[str], max_input_length: int
    ) -> dict[str, float]:
        """Mean per-token target log-probability of each candidate word."""
        log_softmax = torch.nn.functional.log_softmax
        enc = tokenizer(
            [text] * len(words),
            truncation=True,
            max_length=max_input_length,
            padding=True,
            return_tensors="pt",
        )
        labels = tokenizer(
            text_target=list(words),
            padding=True,
            return_tensors="pt",
        ).input_ids
        mask = labels != tokenizer.pad_token_id
        out = model(
            **{k: v.to(self.device) for k, v in enc.items()},
            labels=labels.to(self.device),
        )
        logprobs = log_softmax(out.logits, dim=-1).cpu()
        token_lp = logprobs.gather(-1, labels.unsqueeze(-1)).squeeze(-1)
        token_lp = token_lp * mask
        mean_lp = token_lp.sum(dim=1) / mask.sum(dim=1).clamp(min=1)
        return {w: mean_lp[i].item() for i, w in enumerate(words)}

    def _train_prompted(self, task, checkpoint, train, dev, config, op):
        require_family(checkpoint, FAMILY_ENCODER_DECODER, op)
        if not train:
            raise EmptySplit(f"cannot run {op} on an empty training set")
        for ex in train:
            if ex.answer is None:
                raise MissingLabelInTrainPhase(
                    f"training prompt lacks an answer: {ex.masked_text[:40]!r}"
                )
        self._check_masked(checkpoint, [ex.masked_text for ex in train + dev])
        tokenizer, model = self.model_loader(checkpoint, task)
        train_batches = self._encode_prompted(tokenizer, train, config)
        dev_with_answers = [ex for ex in dev if ex.answer is not None]
        dev_batches = self._encode_prompted(tokenizer, dev_with_answers, config)

        dev_eval = None
        if task == TASK_PROMPTED and dev_with_answers:
            vocabulary = sorted({ex.answer for ex in train + dev_with_answers if ex.answer})

            def dev_eval() -> float:
                gold, pred = [], []
                with torch.no_grad():
                    for ex in dev_with_answers:
                        scores = self._score_one(
                            tokenizer, model, ex.masked_text, vocabulary, config.max_input_length
                        )
                        gold.append(ex.answer)
                        pred.append(max(vocabulary, key=lambda w: (scores[w], w)))
                return macro_f1_multiclass(gold, pred)

        return self._fit(task, checkpoint, tokenizer, model, train_batches, dev_batches, config, dev_eval)

    def train_scorer(self, checkpoint, train, dev, config):
        return self._train_prompted(TASK_PROMPTED, checkpoint, train, dev, config, "train_scorer")

    def score_answers(self, artifact, masked_texts, candidate_words):
        artifact.require_task(TASK_PROMPTED)
        self._check_masked(artifact.checkpoint, masked_texts)
        tokenizer = artifact.payload["tokenizer"]
        model = artifact.payload["model"].to(self.device).eval()
        words = list(candidate_words)
        results: list[dict[str, float]] = []
        with torch.no_grad():
            for text in masked_texts:
                results.append(
                    self._score_one(tokenizer, model, text, words, artifact.config.max_input_length)
                )
        return results

    # --- generation ---------------------------------------------------------------

    def train_generator(self, checkpoint, train, dev, config):
        return self._train_prompted(TASK_GENERATE, checkpoint, train, dev, config, "train_generator")

    def generate(self, artifact, masked_texts, decode="greedy", max_new_tokens=32):
        artifact.require_task(TASK_GENERATE)
        strategy, width = parse_decode(decode)
        self._check_masked(artifact.checkpoint, masked_texts)
        tokenizer = artifact.payload["tokenizer"]
        model = artifact.payload["model"].to(self.device).eval()
        config = artifact.config
        num_beams = width if strategy == DECODE_BEAM else 1
        outputs: list[str] = []
        with torch.no_grad():
            for chunk in self._chunk(list(masked_texts), config.batch_size):
                enc = tokenizer(
                    chunk,
                    truncation=True,
                    padding=True,
                    max_length=config.max_input_length,
                    return_tensors="pt",
                )
                ids = model.generate(
                    **{k: v.to(self.device) for k, v in enc.items()},
                    max_new_tokens=max_new_tokens,
                    do_sample=False,
                    num_beams=num_beams,
                    early_stopping=num_beams > 1,
                )
                outputs.extend(
                    tokenizer.batch_decode(ids, skip_special_tokens=True)
                )
        return [o.strip() for o in outputs]

    # --- persistence ----------------------------------------------------------------

    def _weight_chunks(self, artifact: ModelArtifact):
        state = artifact.payload["model"].state_dict()
        for name in sorted(state):
            tensor = state[name].detach().cpu().contiguous()
            yield name.encode("utf-8")
            yield tensor.numpy().tobytes()

    def _weight_bytes(self, artifact: ModelArtifact) -> bytes:
        return b"".join(self._weight_chunks(artifact))

    def fingerprint(self, artifact: ModelArtifact) -> str:
        import hashlib

        digest = hashlib.sha256()
        for chunk in self._weight_chunks(artifact):
            digest.update(chunk)
        return digest.hexdigest()

    def _save_weights(self, artifact: ModelArtifact, out_dir: Path) -> None:
        artifact.payload["model"].save_pretrained(out_dir / "model")
        artifact.payload["tokenizer"].save_pretrained(out_dir / "tokenizer")

    def _load_weights(self, meta: dict, in_dir: Path) -> Any:
        from transformers import (
            AutoModelForSeq2SeqLM,
            AutoModelForSequenceClassification,
            AutoTokenizer,
        )

        tokenizer = AutoTokenizer.from_pretrained(in_dir / "tokenizer")
        if meta["task"] == TASK_CLASSIFY:
            model = AutoModelForSequenceClassification.from_pretrained(in_dir / "model")
        else:
            model = AutoModelForSeq2SeqLM.from_pretrained(in_dir / "model")
        return {"tokenizer": tokenizer, "model": model.eval()}
