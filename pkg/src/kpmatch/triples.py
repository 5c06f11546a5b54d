"""Triple classification for generated intermediary texts.

A triple is (argument, intermediary text, key point) plus a label. Classical
learners work on TF-IDF vectors of the three texts joined by " | " into one
document: term frequency is the raw count, idf is ln((1+N)/(1+df)) + 1, and
rows are L2-normalized. Tokens come from ``tokenize_and_filter`` (the
separator never survives tokenization), so stopwords and punctuation are
gone before counting; the featurizer can cap the vocabulary and emit word
n-grams.

Three classical learners are supported; probabilities are deterministic:

* ``naive_bayes``: multinomial naive Bayes with add-one smoothing (an
  all-unknown-words row falls back to the class priors);
* ``svm``: a linear-kernel SVM whose decision margin is squashed through a
  sigmoid (not Platt scaling, which would resample);
* ``decision_tree``: a decision tree with at least two samples per leaf.

The ``plm`` kind fine-tunes a pretrained checkpoint instead: encoder
classifiers read (argument + separator + intermediary, key point) segment
pairs; encoder-decoders read the three texts joined by the separator token
and emit a label word.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import joblib
import numpy as np
from scipy.special import expit
from sklearn.feature_extraction.text import TfidfVectorizer
from sklearn.naive_bayes import MultinomialNB
from sklearn.svm import SVC
from sklearn.tree import DecisionTreeClassifier

from .corpus import load_default_stopwords, tokenize_and_filter
from .errors import (
    EmptySplit,
    EmptyVocabulary,
    MissingLabelInTrainPhase,
    NotFitted,
    SingleClassTraining,
    SpecInvalid,
    WrongModelFamily,
)
from .evaluation import Prediction
from .generation import Triple
from .matchers import SEQ2SEQ_LABEL_WORDS
from .prompts import verbalize
from .runtime import (
    FAMILY_ENCODER_CLASSIFIER,
    TASK_CLASSIFY,
    TASK_PROMPTED,
    CheckpointRef,
    ModelArtifact,
    PromptedExample,
    Runtime,
    TextPairExample,
    TrainConfig,
)

CLASSICAL_KINDS = ("naive_bayes", "svm", "decision_tree")
PLM_KIND = "plm"
TRIPLE_CLASSIFIER_KINDS = CLASSICAL_KINDS + (PLM_KIND,)

CLASSICAL_SEPARATOR = " | "

STOPWORD_LISTS = ("english", "none")


@dataclass(frozen=True)
class FeaturizerConfig:
    """TF-IDF settings for the classical kinds."""

    max_vocab: int | None = None
    ngram_min: int = 1
    ngram_max: int = 1
    stopword_list: str = "english"

    def __post_init__(self) -> None:
        if self.max_vocab is not None and self.max_vocab < 1:
            raise SpecInvalid(f"max_vocab must be >= 1, got {self.max_vocab}")
        if not (1 <= self.ngram_min <= self.ngram_max):
            raise SpecInvalid(
                f"need 1 <= ngram_min <= ngram_max, got ({self.ngram_min}, {self.ngram_max})"
            )
        if self.stopword_list not in STOPWORD_LISTS:
            raise SpecInvalid(
                f"stopword_list must be one of {', '.join(STOPWORD_LISTS)}, got {self.stopword_list!r}"
            )


@dataclass(frozen=True)
class TripleClassifierSpec:
    """Which triple classifier to build.

    Classical kinds use ``featurizer`` and ``seed``; the ``plm`` kind needs
    a checkpoint and a train config instead.
    """

    kind: str
    checkpoint: CheckpointRef | None = None
    featurizer: FeaturizerConfig = field(default_factory=FeaturizerConfig)
    train_config: TrainConfig | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in TRIPLE_CLASSIFIER_KINDS:
            raise SpecInvalid(
                f"triple classifier kind must be one of {', '.join(TRIPLE_CLASSIFIER_KINDS)}, "
                f"got {self.kind!r}"
            )
        if self.kind == PLM_KIND:
            if self.checkpoint is None or self.train_config is None:
                raise WrongModelFamily(
                    "a plm triple classifier needs a checkpoint and a train config"
                )
        elif self.checkpoint is not None:
            raise WrongModelFamily(
                f"classical kind {self.kind!r} takes no checkpoint; got {self.checkpoint.name}"
            )

    @property
    def spec_name(self) -> str:
        if self.kind == PLM_KIND:
            return f"triples-plm-{self.checkpoint.name}"
        return f"triples-{self.kind}"


class _TokenAnalyzer:
    """Picklable token/n-gram extractor for the TF-IDF vectorizer."""

    def __init__(self, stopwords: frozenset[str], ngram_min: int, ngram_max: int) -> None:
        self.stopwords = stopwords
        self.ngram_min = ngram_min
        self.ngram_max = ngram_max

    def __call__(self, text: str) -> list[str]:
        tokens = tokenize_and_filter(text, self.stopwords)
        if (self.ngram_min, self.ngram_max) == (1, 1):
            return tokens
        grams = []
        for n in range(self.ngram_min, self.ngram_max + 1):
            grams.extend(
                " ".join(tokens[i:i + n]) for i in range(len(tokens) - n + 1)
            )
        return grams


def triple_text(triple: Triple) -> str:
    """The one-document view the classical featurizer consumes."""
    return CLASSICAL_SEPARATOR.join((triple.argument, triple.intermediary, triple.key_point))


def _build_vectorizer(config: FeaturizerConfig) -> TfidfVectorizer:
    stopwords = load_default_stopwords() if config.stopword_list == "english" else frozenset()
    return TfidfVectorizer(
        analyzer=_TokenAnalyzer(stopwords, config.ngram_min, config.ngram_max),
        max_features=config.max_vocab,
    )


def featurize_triples(
    triples: list[Triple],
    config: FeaturizerConfig | None = None,
    vectorizer: TfidfVectorizer | None = None,
):
    """(matrix, vectorizer) for a list of triples.

    Without a ``vectorizer`` this fits a new one (learning the vocabulary
    and idf weights); with one it only transforms, leaving the fitted
    vocabulary untouched.
    """
    texts = [triple_text(t) for t in triples]
    if vectorizer is not None:
        return vectorizer.transform(texts), vectorizer
    vectorizer = _build_vectorizer(config or FeaturizerConfig())
    try:
        matrix = vectorizer.fit_transform(texts)
    except ValueError as exc:
        if "empty vocabulary" in str(exc):
            raise EmptyVocabulary(
                "no usable tokens in the training triples after stopword removal"
            ) from exc
        raise
    return matrix, vectorizer


@dataclass
class TripleModel:
    """A fitted triple classifier: classical pieces or a runtime artifact."""

    spec: TripleClassifierSpec
    vectorizer: TfidfVectorizer | None = None
    learner: object | None = None
    artifact: ModelArtifact | None = None
    runtime: Runtime | None = None


def _check_train_labels(train: list[Triple]) -> list[int]:
    if not train:
        raise EmptySplit("cannot fit a triple classifier on an empty training set")
    labels = []
    for t in train:
        if t.label is None:
            raise MissingLabelInTrainPhase(f"unlabeled training triple: {t.argument[:40]!r}")
        labels.append(t.label)
    if len(set(labels)) < 2:
        raise SingleClassTraining(
            f"training triples all have label {labels[0]}; need both classes"
        )
    return labels


def _make_learner(spec: TripleClassifierSpec):
    if spec.kind == "naive_bayes":
        return MultinomialNB(alpha=1.0)
    if spec.kind == "svm":
        return SVC(kernel="linear")
    return DecisionTreeClassifier(min_samples_leaf=2, random_state=spec.seed)


def _plm_pair(spec: TripleClassifierSpec, t: Triple) -> TextPairExample:
    sep = spec.checkpoint.sep_token
    return TextPairExample(f"{t.argument} {sep} {t.intermediary}", t.key_point, t.label)


def _plm_prompt(spec: TripleClassifierSpec, t: Triple, with_answer: bool) -> PromptedExample:
    sep = spec.checkpoint.sep_token
    text = (
        f"{t.argument} {sep} {t.intermediary} {sep} {t.key_point} "
        f"{spec.checkpoint.mask_marker}"
    )
    answer = SEQ2SEQ_LABEL_WORDS[t.label][0] if with_answer else None
    return PromptedExample(text, answer)


def train_triple_classifier(
    spec: TripleClassifierSpec,
    train: list[Triple],
    dev: list[Triple],
    runtime: Runtime | None = None,
) -> TripleModel:
    """Fit the classifier that ``spec`` describes.

    The dev split feeds epoch selection on the plm route; classical kinds
    accept it for interface symmetry but have no epoch loop to select over.
    """
    labels = _check_train_labels(train)
    if spec.kind in CLASSICAL_KINDS:
        matrix, vectorizer = featurize_triples(train, spec.featurizer)
        learner = _make_learner(spec)
        learner.fit(matrix, np.asarray(labels))
        return TripleModel(spec=spec, vectorizer=vectorizer, learner=learner)

    if runtime is None:
        raise SpecInvalid("a plm triple classifier needs a runtime")
    if spec.checkpoint.family == FAMILY_ENCODER_CLASSIFIER:
        artifact = runtime.finetune(
            spec.checkpoint, TASK_CLASSIFY,
            [_plm_pair(spec, t) for t in train],
            [_plm_pair(spec, t) for t in dev],
            spec.train_config,
        )
    else:
        artifact = runtime.finetune(
            spec.checkpoint, TASK_PROMPTED,
            [_plm_prompt(spec, t, True) for t in train],
            [_plm_prompt(spec, t, True) for t in dev],
            spec.train_config,
        )
    artifact.tags.update({"triple_classifier": spec.checkpoint.name})
    return TripleModel(spec=spec, artifact=artifact, runtime=runtime)


def predict_proba_triples(model: TripleModel, triples: list[Triple]) -> list[float]:
    """Probability of label 1 per triple, in order."""
    spec = model.spec
    if spec.kind in CLASSICAL_KINDS:
        if model.vectorizer is None or model.learner is None:
            raise NotFitted("triple classifier has not been fit")
        matrix, _ = featurize_triples(triples, vectorizer=model.vectorizer)
        if spec.kind == "svm":
            return expit(model.learner.decision_function(matrix)).tolist()
        column = list(model.learner.classes_).index(1)
        return model.learner.predict_proba(matrix)[:, column].tolist()

    if model.artifact is None or model.runtime is None:
        raise NotFitted("triple classifier has not been fit")
    if spec.checkpoint.family == FAMILY_ENCODER_CLASSIFIER:
        return model.runtime.classify(model.artifact, [_plm_pair(spec, t) for t in triples])
    words = [w for ws in SEQ2SEQ_LABEL_WORDS.values() for w in ws]
    scored = model.runtime.score_answers(
        model.artifact, [_plm_prompt(spec, t, False).masked_text for t in triples], words
    )
    return [verbalize(s, SEQ2SEQ_LABEL_WORDS)[1] for s in scored]


def predict_triples(
    model: TripleModel, triples: list[Triple], threshold: float = 0.5
) -> list[Prediction]:
    """One prediction per triple; label 1 iff probability strictly exceeds
    the threshold."""
    probs = predict_proba_triples(model, triples)
    return [
        Prediction(t.pair_id, 1 if p > threshold else 0, p)
        for t, p in zip(triples, probs)
    ]


# --- classical persistence -------------------------------------------------------

def _vocabulary_rows(model: TripleModel) -> list[tuple[str, int, float]]:
    vocabulary = model.vectorizer.vocabulary_
    idf = model.vectorizer.idf_
    return sorted(
        ((word, int(index), float(idf[index])) for word, index in vocabulary.items()),
        key=lambda row: row[1],
    )


def classical_fingerprint(model: TripleModel) -> str:
    """Deterministic digest over the fitted vocabulary, idf, and settings."""
    if model.vectorizer is None or model.learner is None:
        raise NotFitted("triple classifier has not been fit")
    payload = {
        "kind": model.spec.kind,
        "seed": model.spec.seed,
        "featurizer": {
            "max_vocab": model.spec.featurizer.max_vocab,
            "ngram_min": model.spec.featurizer.ngram_min,
            "ngram_max": model.spec.featurizer.ngram_max,
            "stopword_list": model.spec.featurizer.stopword_list,
        },
        "vocabulary": [
            (word, index, f"{idf:.12f}") for word, index, idf in _vocabulary_rows(model)
        ],
    }
    blob = json.dumps(payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def save_classical(model: TripleModel, out_dir: str | Path) -> str:
    """Write vocabulary.tsv, learner.bin, and spec.json; returns the digest."""
    if model.spec.kind not in CLASSICAL_KINDS:
        raise SpecInvalid("only classical triple classifiers use this layout")
    if model.vectorizer is None or model.learner is None:
        raise NotFitted("triple classifier has not been fit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "vocabulary.tsv", "w", encoding="utf-8") as fh:
        fh.write("word\tindex\tidf\n")
        for word, index, idf in _vocabulary_rows(model):
            fh.write(f"{word}\t{index}\t{idf:.12f}\n")
    joblib.dump({"vectorizer": model.vectorizer, "learner": model.learner},
                out_dir / "learner.bin")
    digest = classical_fingerprint(model)
    spec_doc = {
        "kind": model.spec.kind,
        "seed": model.spec.seed,
        "featurizer": {
            "max_vocab": model.spec.featurizer.max_vocab,
            "ngram_min": model.spec.featurizer.ngram_min,
            "ngram_max": model.spec.featurizer.ngram_max,
            "stopword_list": model.spec.featurizer.stopword_list,
        },
        "fingerprint": digest,
    }
    with open(out_dir / "spec.json", "w", encoding="utf-8") as fh:
        json.dump(spec_doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return digest


def load_classical(in_dir: str | Path) -> TripleModel:
    in_dir = Path(in_dir)
    spec_doc = json.loads((in_dir / "spec.json").read_text("utf-8"))
    spec = TripleClassifierSpec(
        kind=spec_doc["kind"],
        featurizer=FeaturizerConfig(**spec_doc["featurizer"]),
        seed=spec_doc["seed"],
    )
    stored = joblib.load(in_dir / "learner.bin")
    return TripleModel(spec=spec, vectorizer=stored["vectorizer"], learner=stored["learner"])
