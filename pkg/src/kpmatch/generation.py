"""Intermediary-text generation from polarity-paired templates.

The generate-then-classify experiments fine-tune a sequence-to-sequence
model to produce a short intermediary text for each argument. Each template
family (t6, t7) is a pair of nearly identical prompts whose connotations
are opposite: the positive wording for matching pairs, the negative wording
for non-matching pairs. Training picks the polarity from the gold label and
targets the pair's key point; at inference labels are hidden, so every
record goes through the positive prompt.

``generate_intermediaries`` returns finished :class:`Triple` rows: the
generated text is stripped of mask scaffolding, whitespace-collapsed, given
a terminal full stop, and slotted between the argument and the key point.
Decoding defaults to beam search of width 4 with at most 32 new tokens.

``negation_divergence`` measures how differently the trained generator
responds to the two polarities of the same argument. A high exact-match
fraction means negation is being ignored, which caps what any downstream
classifier can recover from the generated texts.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .corpus import ArgKPRecord, add_full_stops
from .errors import (
    EmptyGeneration,
    KindMismatch,
    MissingLabelInTrainPhase,
    SpecInvalid,
    WrongModelFamily,
)
from .evaluation import DivergenceReport, divergence_report
from .prompts import GENERATION_TEMPLATE_PAIRS, Template, builtin_template, render
from .runtime import (
    DECODE_BEAM,
    FAMILY_ENCODER_DECODER,
    CheckpointRef,
    ModelArtifact,
    PromptedExample,
    Runtime,
    TrainConfig,
)

TRAIN_PHASE = "train"
INFER_PHASE = "infer"

#: Wording that distinguishes the two polarities of each template pair.
POLARITY_MARKERS = {
    "t6": ("This means", "This does not mean"),
    "t7": ("The correct keypoint", "The wrong keypoint"),
}

DEFAULT_DECODE = DECODE_BEAM  # beam search, width 4
DEFAULT_MAX_NEW_TOKENS = 32


@dataclass(frozen=True)
class Triple:
    """An (argument, intermediary, key point) row for triple classification."""

    pair_id: str
    argument: str
    intermediary: str
    key_point: str
    label: int | None
    topic: str = ""


def template_pair(family: str) -> tuple[Template, Template]:
    """(positive, negative) templates for a generation template family."""
    if family not in GENERATION_TEMPLATE_PAIRS:
        raise SpecInvalid(
            f"unknown generation template family {family!r}; "
            f"choose from {', '.join(GENERATION_TEMPLATE_PAIRS)}"
        )
    pos_name, neg_name = GENERATION_TEMPLATE_PAIRS[family]
    return builtin_template(pos_name), builtin_template(neg_name)


def select_generation_template(family: str, label: int | None, phase: str) -> Template:
    """The template a record renders through.

    Train phase: the positive wording for label 1, the negative for label 0;
    an absent label is an error. Infer phase: always the positive wording,
    so predictions cannot leak the gold label.
    """
    if phase not in (TRAIN_PHASE, INFER_PHASE):
        raise SpecInvalid(f"phase must be {TRAIN_PHASE!r} or {INFER_PHASE!r}, got {phase!r}")
    positive, negative = template_pair(family)
    if phase == INFER_PHASE:
        return positive
    if label is None:
        raise MissingLabelInTrainPhase(
            f"template family {family!r} needs a gold label in the train phase"
        )
    return positive if label == 1 else negative


def _prompt(template: Template, record: ArgKPRecord, mask_marker: str) -> str:
    return render(template, {"X1": record.argument}, answer_text=None, mask_marker=mask_marker)


def build_generation_examples(
    records: list[ArgKPRecord],
    family: str,
    mask_marker: str,
    phase: str,
) -> list[PromptedExample]:
    """Prompts (and targets, in the train phase) for each record."""
    examples = []
    for record in records:
        template = select_generation_template(family, record.label, phase)
        answer = record.key_point if phase == TRAIN_PHASE else None
        examples.append(PromptedExample(_prompt(template, record, mask_marker), answer))
    return examples


def train_generator(
    runtime: Runtime,
    checkpoint: CheckpointRef,
    family: str,
    train: list[ArgKPRecord],
    dev: list[ArgKPRecord],
    config: TrainConfig,
) -> ModelArtifact:
    """Fine-tune the generator on label-polarity prompts targeting key points."""
    if checkpoint.family != FAMILY_ENCODER_DECODER:
        raise WrongModelFamily(
            f"generation needs an encoder-decoder checkpoint; "
            f"{checkpoint.name} is {checkpoint.family}"
        )
    artifact = runtime.train_generator(
        checkpoint,
        build_generation_examples(train, family, checkpoint.mask_marker, TRAIN_PHASE),
        build_generation_examples(dev, family, checkpoint.mask_marker, TRAIN_PHASE),
        config,
    )
    artifact.tags.update({"generation_family": family})
    return artifact


def _require_same_family(artifact: ModelArtifact, family: str) -> None:
    got = artifact.tags.get("generation_family")
    if got != family:
        raise KindMismatch(
            f"generator was trained for template family {got!r}, not {family!r}"
        )


def _clean_generated(text: str, mask_marker: str, pair_id: str) -> str:
    """Strip mask scaffolding, collapse whitespace, ensure a full stop."""
    cleaned = " ".join(text.replace(mask_marker, " ").split())
    if not cleaned:
        raise EmptyGeneration(f"model produced no text for pair {pair_id!r}")
    return add_full_stops(cleaned)


def generate_intermediaries(
    runtime: Runtime,
    artifact: ModelArtifact,
    family: str,
    records: list[ArgKPRecord],
    phase: str = INFER_PHASE,
    decode: str = DEFAULT_DECODE,
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS,
) -> list[Triple]:
    """One finished triple per record, in order."""
    _require_same_family(artifact, family)
    examples = build_generation_examples(
        records, family, artifact.checkpoint.mask_marker, phase
    )
    texts = runtime.generate(
        artifact, [e.masked_text for e in examples], decode=decode, max_new_tokens=max_new_tokens
    )
    marker = artifact.checkpoint.mask_marker
    return [
        Triple(
            pair_id=r.pair_id,
            argument=r.argument,
            intermediary=_clean_generated(text, marker, r.pair_id),
            key_point=r.key_point,
            label=r.label,
            topic=r.topic,
        )
        for r, text in zip(records, texts)
    ]


def write_triples(
    path: str | Path,
    triples: list[Triple],
    family: str,
    generator_fingerprint: str,
) -> Path:
    """JSON-lines dump of generated triples with their provenance."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for t in triples:
            fh.write(json.dumps({
                "pair_id": t.pair_id,
                "argument": t.argument,
                "intermediary": t.intermediary,
                "key_point": t.key_point,
                "label": t.label,
                "family": family,
                "generator_fingerprint": generator_fingerprint,
            }, sort_keys=True) + "\n")
    return path


def negation_divergence(
    runtime: Runtime,
    artifact: ModelArtifact,
    family: str,
    records: list[ArgKPRecord],
    sample_size: int = 50,
    seed: int = 0,
    decode: str = DEFAULT_DECODE,
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS,
    max_examples: int = 5,
) -> DivergenceReport:
    """Generate under both polarities and compare the outputs.

    Samples up to ``sample_size`` records (seeded, so repeatable), renders
    each through the positive and the negative template, and reports the
    exact-match fraction plus the mean token-Jaccard similarity.
    """
    _require_same_family(artifact, family)
    if not records:
        raise SpecInvalid("negation divergence needs at least one record")
    pool = list(records)
    if len(pool) > sample_size:
        pool = random.Random(seed).sample(pool, sample_size)
    positive, negative = template_pair(family)
    marker = artifact.checkpoint.mask_marker
    pos_prompts = [_prompt(positive, r, marker) for r in pool]
    neg_prompts = [_prompt(negative, r, marker) for r in pool]
    pos_texts = runtime.generate(artifact, pos_prompts, decode=decode, max_new_tokens=max_new_tokens)
    neg_texts = runtime.generate(artifact, neg_prompts, decode=decode, max_new_tokens=max_new_tokens)
    pos_texts = [_clean_generated(t, marker, r.pair_id) for t, r in zip(pos_texts, pool)]
    neg_texts = [_clean_generated(t, marker, r.pair_id) for t, r in zip(neg_texts, pool)]
    return divergence_report(
        family,
        [r.argument for r in pool],
        pos_texts,
        neg_texts,
        max_examples=max_examples,
    )
