"""Model runtimes: a deterministic stub and an optional transformers backend."""

from __future__ import annotations

from ..errors import ConfigInvalid
from .base import (
    DECODE_BEAM,
    DECODE_GREEDY,
    DEFAULT_BEAM_WIDTH,
    FAMILY_ENCODER_CLASSIFIER,
    FAMILY_ENCODER_DECODER,
    OPTIMIZERS,
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
from .stub import StubRuntime

__all__ = [
    "DECODE_BEAM",
    "DECODE_GREEDY",
    "DEFAULT_BEAM_WIDTH",
    "FAMILY_ENCODER_CLASSIFIER",
    "FAMILY_ENCODER_DECODER",
    "OPTIMIZERS",
    "TASK_CLASSIFY",
    "TASK_GENERATE",
    "TASK_PROMPTED",
    "CheckpointRef",
    "ModelArtifact",
    "PromptedExample",
    "Runtime",
    "StubRuntime",
    "TextPairExample",
    "TrainConfig",
    "get_runtime",
    "macro_f1_multiclass",
    "parse_decode",
    "pick_best_epoch",
    "require_family",
]


def get_runtime(kind: str, **kwargs) -> Runtime:
    """Build a runtime by name: ``stub`` or ``real`` (transformers)."""
    if kind == "stub":
        return StubRuntime(**kwargs)
    if kind == "real":
        from .hf import HFRuntime

        return HFRuntime(**kwargs)
    raise ConfigInvalid(f"unknown runtime {kind!r}; choose 'stub' or 'real'")
