from __future__ import annotations

import pytest

torch = pytest.importorskip("torch")
transformers = pytest.importorskip("transformers")

from transformers import (
    BertConfig,
    BertForSequenceClassification,
    BertTokenizer,
    ByT5Tokenizer,
    T5Config,
    T5ForConditionalGeneration,
)

from kpmatch.config import CHECKPOINTS
from kpmatch.errors import EmptySplit, IncompatibleTask, MissingLabelInTrainPhase, NoMaskFound
from kpmatch.runtime import (
    TASK_CLASSIFY,
    TASK_GENERATE,
    TASK_PROMPTED,
    PromptedExample,
    TextPairExample,
    TrainConfig,
)
from kpmatch.runtime.hf import HFRuntime

BERT = CHECKPOINTS["bert-base"]
T5 = CHECKPOINTS["t5-small"]

BERT_VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "argument", "key", "point", "words", "with", "several", "a", "b", "the",
    "0", "1", "2", "3", "4", "5",
]


@pytest.fixture(scope="module")
def bert_runtime(tmp_path_factory):
    vocab_path = tmp_path_factory.mktemp("vocab") / "vocab.txt"
    vocab_path.write_text("\n".join(BERT_VOCAB) + "\n", encoding="utf-8")
    tokenizer = BertTokenizer(str(vocab_path))
    config = BertConfig(
        vocab_size=tokenizer.vocab_size, hidden_size=32, num_hidden_layers=1,
        num_attention_heads=2, intermediate_size=37, max_position_embeddings=64,
    )

    def loader(checkpoint, task):
        torch.manual_seed(0)
        return tokenizer, BertForSequenceClassification(config)

    return HFRuntime(model_loader=loader)


@pytest.fixture(scope="module")
def t5_runtime():
    tokenizer = ByT5Tokenizer()
    config = T5Config(
        vocab_size=384, d_model=32, d_ff=37, num_layers=1, num_heads=2,
        d_kv=16, decoder_start_token_id=0,
    )

    def loader(checkpoint, task):
        torch.manual_seed(0)
        return tokenizer, T5ForConditionalGeneration(config)

    return HFRuntime(model_loader=loader)


PAIR_CONFIG = TrainConfig(learning_rate=1e-3, epochs=2, batch_size=2,
                          max_input_length=32, seed=0)
GEN_CONFIG = TrainConfig(learning_rate=1e-3, epochs=1, batch_size=2,
                         max_input_length=32, seed=0)

PAIRS = [
    TextPairExample("argument a with several words", "key point 0", 0),
    TextPairExample("argument b with several words", "key point 1", 1),
    TextPairExample("argument a with the words", "key point 2", 0),
    TextPairExample("argument b with the words", "key point 3", 1),
]
PROMPTS = [
    PromptedExample(f"argument {i} {T5.mask_marker}", "yes" if i % 2 else "no")
    for i in range(4)
]


class TestClassifier:
    def test_finetune_and_classify(self, bert_runtime):
        artifact = bert_runtime.finetune(BERT, TASK_CLASSIFY, PAIRS, PAIRS[:2], PAIR_CONFIG)
        assert artifact.task == TASK_CLASSIFY
        assert artifact.runtime_kind == "hf"
        assert len(artifact.history) == 2
        for row in artifact.history:
            assert set(row) == {"epoch", "train_loss", "dev_loss", "dev_macro_f1"}
            assert row["dev_macro_f1"] is not None
        assert artifact.best_epoch in (1, 2)
        probs = bert_runtime.classify(artifact, PAIRS)
        assert len(probs) == len(PAIRS)
        assert all(0.0 <= p <= 1.0 for p in probs)

    def test_empty_train(self, bert_runtime):
        with pytest.raises(EmptySplit):
            bert_runtime.finetune(BERT, TASK_CLASSIFY, [], PAIRS[:1], PAIR_CONFIG)

    def test_unlabeled_pair(self, bert_runtime):
        bad = [TextPairExample("a", "b", None)]
        with pytest.raises(MissingLabelInTrainPhase):
            bert_runtime.finetune(BERT, TASK_CLASSIFY, bad, [], PAIR_CONFIG)

    def test_wrong_family(self, t5_runtime):
        with pytest.raises(IncompatibleTask):
            t5_runtime.finetune(T5, TASK_CLASSIFY, PAIRS, [], PAIR_CONFIG)

    def test_max_steps_zero_skips_training(self, bert_runtime):
        config = TrainConfig(learning_rate=1e-3, epochs=2, batch_size=2,
                             max_input_length=32, max_steps=0)
        artifact = bert_runtime.finetune(BERT, TASK_CLASSIFY, PAIRS, [], config)
        assert artifact.best_epoch == 0
        assert artifact.history == []
        assert len(bert_runtime.classify(artifact, PAIRS)) == len(PAIRS)


class TestPrompted:
    def test_finetune_and_score(self, t5_runtime):
        artifact = t5_runtime.finetune(T5, TASK_PROMPTED, PROMPTS, PROMPTS[:2], GEN_CONFIG)
        assert all(row["dev_macro_f1"] is not None for row in artifact.history)
        scored = t5_runtime.score_answers(
            artifact, [ex.masked_text for ex in PROMPTS[:2]], ["yes", "no"]
        )
        assert len(scored) == 2
        for scores in scored:
            assert set(scores) == {"yes", "no"}
            assert all(s <= 0.0 for s in scores.values())  # log-probabilities

    def test_missing_mask(self, t5_runtime):
        bad = [PromptedExample("prompt without a marker", "yes")]
        with pytest.raises(NoMaskFound):
            t5_runtime.finetune(T5, TASK_PROMPTED, bad, [], GEN_CONFIG)


class TestGeneration:
    def test_finetune_and_generate(self, t5_runtime):
        artifact = t5_runtime.finetune(T5, TASK_GENERATE, PROMPTS, PROMPTS[:1], GEN_CONFIG)
        assert all(row["dev_macro_f1"] is None for row in artifact.history)
        out = t5_runtime.generate(
            artifact, [ex.masked_text for ex in PROMPTS[:2]],
            decode="beam:2", max_new_tokens=4,
        )
        assert len(out) == 2
        assert all(isinstance(text, str) for text in out)


class TestOptimizer:
    def test_soft_lr_gets_own_param_group(self, t5_runtime):
        config = TrainConfig(learning_rate=1e-4, epochs=1, soft_lr=1e-3)
        model = T5ForConditionalGeneration(T5Config(
            vocab_size=384, d_model=32, d_ff=37, num_layers=1, num_heads=2,
            d_kv=16, decoder_start_token_id=0,
        ))
        optimizer = t5_runtime._optimizer(model, config)
        assert len(optimizer.param_groups) == 2
        assert optimizer.param_groups[0]["lr"] == 1e-3
        assert optimizer.param_groups[1]["lr"] == 1e-4

    def test_plain_lr_single_group(self, t5_runtime):
        config = TrainConfig(learning_rate=1e-4, epochs=1)
        model = T5ForConditionalGeneration(T5Config(
            vocab_size=384, d_model=32, d_ff=37, num_layers=1, num_heads=2,
            d_kv=16, decoder_start_token_id=0,
        ))
        optimizer = t5_runtime._optimizer(model, config)
        assert len(optimizer.param_groups) == 1


class TestPersistence:
    def test_round_trip(self, bert_runtime, tmp_path):
        artifact = bert_runtime.finetune(BERT, TASK_CLASSIFY, PAIRS, PAIRS[:2], PAIR_CONFIG)
        digest = bert_runtime.save_artifact(artifact, tmp_path / "model")
        assert (tmp_path / "model" / "fingerprint.txt").read_text("utf-8").strip() == digest

        loaded = bert_runtime.load_artifact(tmp_path / "model")
        assert loaded.task == artifact.task
        assert loaded.config == artifact.config
        assert bert_runtime.fingerprint(loaded) == digest
        want = bert_runtime.classify(artifact, PAIRS)
        got = bert_runtime.classify(loaded, PAIRS)
        assert got == pytest.approx(want, abs=1e-6)
