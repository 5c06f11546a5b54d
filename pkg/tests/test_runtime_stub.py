from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import f1_score

from kpmatch.config import CHECKPOINTS
from kpmatch.errors import (
    ConfigInvalid,
    DivergedLoss,
    EmptySplit,
    IncompatibleTask,
    KindMismatch,
    MissingLabelInTrainPhase,
    NoMaskFound,
    UnknownTask,
)
from kpmatch.runtime import (
    StubRuntime,
    TASK_CLASSIFY,
    TASK_GENERATE,
    TASK_PROMPTED,
    PromptedExample,
    TextPairExample,
    TrainConfig,
    get_runtime,
    macro_f1_multiclass,
    parse_decode,
    pick_best_epoch,
)

BERT = CHECKPOINTS["bert-base"]
T5 = CHECKPOINTS["t5-small"]


def pair_examples(n, start=0):
    return [
        TextPairExample(f"argument {i} with several words", f"key point {i}", i % 2)
        for i in range(start, start + n)
    ]


def prompted_examples(n, marker, start=0):
    return [
        PromptedExample(
            f"prompt {i} asks something {marker}",
            "yes" if i % 2 else "no",
        )
        for i in range(start, start + n)
    ]


class TestTrainConfig:
    def test_defaults(self):
        c = TrainConfig(learning_rate=1e-4, epochs=3)
        assert c.optimizer_name == "adam"
        assert c.batch_size == 16
        assert c.max_input_length == 256
        assert c.seed == 0
        assert c.max_steps is None and c.soft_lr is None

    @pytest.mark.parametrize("kwargs", [
        {"learning_rate": 0.0},
        {"learning_rate": -1e-5},
        {"epochs": 0},
        {"optimizer_name": "sgd"},
        {"batch_size": 0},
        {"max_input_length": 4},
        {"max_steps": -1},
        {"soft_lr": 0.0},
    ])
    def test_invalid(self, kwargs):
        base = {"learning_rate": 1e-4, "epochs": 2}
        with pytest.raises(ConfigInvalid):
            TrainConfig(**{**base, **kwargs})


class TestParseDecode:
    @pytest.mark.parametrize("decode,want", [
        ("greedy", ("greedy", 1)),
        ("beam", ("beam", 4)),
        ("beam:2", ("beam", 2)),
        ("beam:10", ("beam", 10)),
    ])
    def test_valid(self, decode, want):
        assert parse_decode(decode) == want

    @pytest.mark.parametrize("decode", ["beam:0", "beam:x", "sampling", "", "BEAM"])
    def test_invalid(self, decode):
        with pytest.raises(ConfigInvalid):
            parse_decode(decode)


class TestBestEpoch:
    def test_f1_ties_go_later(self):
        history = [
            {"epoch": 1, "dev_loss": 0.5, "dev_macro_f1": 0.8},
            {"epoch": 2, "dev_loss": 0.4, "dev_macro_f1": 0.9},
            {"epoch": 3, "dev_loss": 0.3, "dev_macro_f1": 0.9},
        ]
        assert pick_best_epoch(history) == 3

    def test_loss_fallback(self):
        history = [
            {"epoch": 1, "dev_loss": 0.5, "dev_macro_f1": None},
            {"epoch": 2, "dev_loss": 0.2, "dev_macro_f1": None},
            {"epoch": 3, "dev_loss": 0.4, "dev_macro_f1": None},
        ]
        assert pick_best_epoch(history) == 2

    def test_empty(self):
        assert pick_best_epoch([]) == 0

    @given(st.lists(st.integers(0, 3), min_size=1, max_size=30),
           st.lists(st.integers(0, 3), min_size=1, max_size=30))
    @settings(max_examples=80, deadline=None)
    def test_multiclass_macro_matches_sklearn(self, gold, pred):
        n = min(len(gold), len(pred))
        gold, pred = gold[:n], pred[:n]
        want = f1_score(gold, pred, average="macro",
                        labels=sorted(set(gold) | set(pred)), zero_division=0)
        assert macro_f1_multiclass(gold, pred) == pytest.approx(want, abs=1e-12)


class TestGetRuntime:
    def test_stub(self):
        assert get_runtime("stub").kind == "stub"

    def test_unknown(self):
        with pytest.raises(ConfigInvalid):
            get_runtime("mock")


class TestClassifierTraining:
    CONFIG = TrainConfig(learning_rate=2e-5, epochs=3, batch_size=4, seed=1)

    def test_history_and_memorization(self, stub):
        train, dev = pair_examples(8), pair_examples(4, start=8)
        artifact = stub.finetune(BERT, TASK_CLASSIFY, train, dev, self.CONFIG)
        assert artifact.task == TASK_CLASSIFY
        assert artifact.runtime_kind == "stub"
        assert len(artifact.history) == 3
        losses = [row["train_loss"] for row in artifact.history]
        assert losses == sorted(losses, reverse=True)  # loss falls as alpha grows
        assert all(row["dev_macro_f1"] is not None for row in artifact.history)
        assert 1 <= artifact.best_epoch <= 3
        # memorized training pairs come back with the right label
        for ex in train:
            label, p = stub.predict_class(artifact, ex.text_a, ex.text_b)
            assert label == ex.label
            assert (p > 0.5) == (ex.label == 1)

    def test_dev_examples_also_recovered(self, stub):
        train, dev = pair_examples(8), pair_examples(4, start=8)
        artifact = stub.finetune(BERT, TASK_CLASSIFY, train, dev, self.CONFIG)
        for ex in dev:
            label, _ = stub.predict_class(artifact, ex.text_a, ex.text_b)
            assert label == ex.label

    def test_unseen_pairs_get_prior(self, stub):
        artifact = stub.finetune(BERT, TASK_CLASSIFY, pair_examples(4),
                                 pair_examples(2, start=4), self.CONFIG)
        probs = stub.classify(artifact, pair_examples(5, start=100))
        assert all(0.05 <= p <= 0.95 for p in probs)

    def test_deterministic_across_instances(self):
        train, dev = pair_examples(6), pair_examples(3, start=6)
        a = StubRuntime().finetune(BERT, TASK_CLASSIFY, train, dev, self.CONFIG)
        b = StubRuntime().finetune(BERT, TASK_CLASSIFY, train, dev, self.CONFIG)
        assert a.history == b.history
        queries = pair_examples(10, start=50)
        assert StubRuntime().classify(a, queries) == StubRuntime().classify(b, queries)

    def test_seed_changes_predictions(self, stub):
        train, dev = pair_examples(6), pair_examples(3, start=6)
        a = stub.finetune(BERT, TASK_CLASSIFY, train, dev, self.CONFIG)
        other = TrainConfig(learning_rate=2e-5, epochs=3, batch_size=4, seed=2)
        b = stub.finetune(BERT, TASK_CLASSIFY, train, dev, other)
        queries = pair_examples(10, start=50)
        assert stub.classify(a, queries) != stub.classify(b, queries)

    def test_empty_split(self, stub):
        with pytest.raises(EmptySplit):
            stub.finetune(BERT, TASK_CLASSIFY, [], pair_examples(2), self.CONFIG)

    def test_missing_label(self, stub):
        bad = [TextPairExample("a", "b", None)]
        with pytest.raises(MissingLabelInTrainPhase):
            stub.finetune(BERT, TASK_CLASSIFY, bad, [], self.CONFIG)

    def test_diverged_loss_above_threshold(self, stub):
        config = TrainConfig(learning_rate=1.5, epochs=1)
        with pytest.raises(DivergedLoss):
            stub.finetune(BERT, TASK_CLASSIFY, pair_examples(4), [], config)

    def test_wrong_family(self, stub):
        with pytest.raises(IncompatibleTask):
            stub.finetune(T5, TASK_CLASSIFY, pair_examples(4), [], self.CONFIG)

    def test_max_steps_zero_keeps_prior(self, stub):
        config = TrainConfig(learning_rate=2e-5, epochs=3, max_steps=0)
        train = pair_examples(4)
        artifact = stub.finetune(BERT, TASK_CLASSIFY, train, [], config)
        assert artifact.best_epoch == 0
        assert artifact.history == []
        probs = stub.classify(artifact, train)
        assert all(0.05 <= p <= 0.95 for p in probs)

    def test_max_steps_caps_alpha(self, stub):
        full = stub.finetune(BERT, TASK_CLASSIFY, pair_examples(8),
                             pair_examples(2, start=8), self.CONFIG)
        capped_config = TrainConfig(learning_rate=2e-5, epochs=3, batch_size=4,
                                    seed=1, max_steps=1)
        capped = stub.finetune(BERT, TASK_CLASSIFY, pair_examples(8),
                               pair_examples(2, start=8), capped_config)
        assert capped.payload["alpha"] < full.payload["alpha"]

    def test_unknown_task(self, stub):
        with pytest.raises(UnknownTask):
            stub.finetune(BERT, "ranking", pair_examples(2), [], self.CONFIG)

    def test_classify_fn_override(self):
        runtime = StubRuntime(classify_fn=lambda ex: 0.25)
        artifact = runtime.finetune(BERT, TASK_CLASSIFY, pair_examples(2), [],
                                    self.CONFIG)
        assert runtime.classify(artifact, pair_examples(3)) == [0.25] * 3

    def test_call_log_records_ops(self, stub):
        stub.finetune(BERT, TASK_CLASSIFY, pair_examples(2), [], self.CONFIG)
        ops = [entry["op"] for entry in stub.call_log]
        assert "train_classifier" in ops


class TestPromptedTraining:
    CONFIG = TrainConfig(learning_rate=1e-4, epochs=4, batch_size=2, seed=3)

    def test_scores_and_memorization(self, stub):
        train = prompted_examples(6, T5.mask_marker)
        dev = prompted_examples(3, T5.mask_marker, start=6)
        artifact = stub.finetune(T5, TASK_PROMPTED, train, dev, self.CONFIG)
        assert len(artifact.history) == 4
        assert all(row["dev_macro_f1"] is not None for row in artifact.history)
        scored = stub.score_answers(artifact, [ex.masked_text for ex in train],
                                    ["yes", "no"])
        for ex, scores in zip(train, scored):
            assert set(scores) == {"yes", "no"}
            best = max(scores, key=scores.get)
            assert best == ex.answer

    def test_requires_encoder_decoder(self, stub):
        with pytest.raises(IncompatibleTask):
            stub.finetune(BERT, TASK_PROMPTED,
                          prompted_examples(2, BERT.mask_marker), [], self.CONFIG)

    def test_no_mask_found(self, stub):
        bad = [PromptedExample("no marker here", "yes")]
        with pytest.raises(NoMaskFound):
            stub.finetune(T5, TASK_PROMPTED, bad, [], self.CONFIG)

    def test_train_answer_required(self, stub):
        bad = [PromptedExample(f"prompt {T5.mask_marker}", None)]
        with pytest.raises(MissingLabelInTrainPhase):
            stub.finetune(T5, TASK_PROMPTED, bad, [], self.CONFIG)

    def test_unanswered_dev_rows_are_skipped(self, stub):
        train = prompted_examples(4, T5.mask_marker)
        dev = [PromptedExample(f"open question {T5.mask_marker}", None)]
        artifact = stub.finetune(T5, TASK_PROMPTED, train, dev, self.CONFIG)
        assert artifact.payload["memorized_dev"] == {}


class TestGeneration:
    CONFIG = TrainConfig(learning_rate=3e-4, epochs=2, batch_size=2, seed=7)

    def _train(self, stub, n=4):
        train = [
            PromptedExample(f"argument {i} {T5.mask_marker}", f"generated text {i}")
            for i in range(n)
        ]
        artifact = stub.finetune(T5, TASK_GENERATE, train, train[:1], self.CONFIG)
        return train, artifact

    def test_dev_metric_absent_for_generation(self, stub):
        _, artifact = self._train(stub)
        assert all(row["dev_macro_f1"] is None for row in artifact.history)

    def test_memorized_answers_returned(self, stub):
        train, artifact = self._train(stub)
        out = stub.generate(artifact, [ex.masked_text for ex in train])
        assert out == [ex.answer for ex in train]

    def test_unseen_prompts_get_pseudo_text(self, stub):
        _, artifact = self._train(stub)
        out = stub.generate(artifact, [f"brand new prompt words {T5.mask_marker}"])
        assert out[0]
        assert out[0] == stub.generate(artifact, [f"brand new prompt words {T5.mask_marker}"])[0]

    def test_max_new_tokens_truncates(self, stub):
        train = [PromptedExample(f"arg {T5.mask_marker}", "one two three four five")]
        artifact = stub.finetune(T5, TASK_GENERATE, train, [], self.CONFIG)
        out = stub.generate(artifact, [train[0].masked_text], max_new_tokens=2)
        assert out == ["one two"]

    def test_decode_is_validated_and_logged(self, stub):
        train, artifact = self._train(stub)
        stub.generate(artifact, [train[0].masked_text], decode="beam:6")
        entry = [e for e in stub.call_log if e["op"] == "generate"][-1]
        assert entry["strategy"] == "beam"
        assert entry["beam_width"] == 6
        with pytest.raises(ConfigInvalid):
            stub.generate(artifact, [train[0].masked_text], decode="nucleus")

    def test_generate_fn_override(self):
        runtime = StubRuntime(generate_fn=lambda text: "fixed output")
        train = [PromptedExample(f"arg {T5.mask_marker}", "target")]
        artifact = runtime.finetune(T5, TASK_GENERATE, train, [], self.CONFIG)
        assert runtime.generate(artifact, [train[0].masked_text]) == ["fixed output"]

    def test_wrong_task_artifact(self, stub):
        _, artifact = self._train(stub)
        with pytest.raises(UnknownTask):
            stub.classify(artifact, pair_examples(1))


class TestPersistence:
    CONFIG = TrainConfig(learning_rate=2e-5, epochs=2, batch_size=2, seed=5)

    def _artifact(self, stub):
        return stub.finetune(BERT, TASK_CLASSIFY, pair_examples(4),
                             pair_examples(2, start=4), self.CONFIG)

    def test_round_trip(self, stub, tmp_path):
        artifact = self._artifact(stub)
        digest = stub.save_artifact(artifact, tmp_path / "model")
        assert (tmp_path / "model" / "train_config.json").exists()
        assert (tmp_path / "model" / "metrics.jsonl").exists()
        assert (tmp_path / "model" / "fingerprint.txt").read_text("utf-8").strip() == digest

        loaded = stub.load_artifact(tmp_path / "model")
        assert loaded.task == artifact.task
        assert loaded.best_epoch == artifact.best_epoch
        assert loaded.history == artifact.history
        assert loaded.config == artifact.config
        assert stub.fingerprint(loaded) == digest
        queries = pair_examples(6, start=20)
        assert stub.classify(loaded, queries) == stub.classify(artifact, queries)

    def test_metrics_jsonl_one_row_per_epoch(self, stub, tmp_path):
        artifact = self._artifact(stub)
        stub.save_artifact(artifact, tmp_path / "model")
        lines = (tmp_path / "model" / "metrics.jsonl").read_text("utf-8").splitlines()
        assert len(lines) == 2

    def test_kind_mismatch_on_load(self, stub, tmp_path):
        import json

        artifact = self._artifact(stub)
        stub.save_artifact(artifact, tmp_path / "model")
        meta_path = tmp_path / "model" / "train_config.json"
        meta = json.loads(meta_path.read_text("utf-8"))
        meta["runtime_kind"] = "real"
        meta_path.write_text(json.dumps(meta), encoding="utf-8")
        with pytest.raises(KindMismatch):
            stub.load_artifact(tmp_path / "model")

    def test_fingerprint_tracks_payload(self, stub):
        a = self._artifact(stub)
        b = stub.finetune(BERT, TASK_CLASSIFY, pair_examples(5),
                          pair_examples(2, start=5), self.CONFIG)
        assert stub.fingerprint(a) == stub.fingerprint(a)
        assert stub.fingerprint(a) != stub.fingerprint(b)
