"""Prompt templates: parsing, rendering, and answer mapping.

A template is a sequence of parts: literal text, input slots, one answer
slot, and optional soft tokens. Templates are written in a small brace
language:

* ``{X1}`` / ``{X2}``: input slots (argument and key point, by convention);
* ``{Z}`` / ``{Z1}``: the answer slot (classification / generation flavor);
* ``{soft:word}``: a soft token initialized from ``word``;
* ``{soft:word#3}``: the same, registered under share id 3;
* ``{soft:#3}``: a reference to the soft token with share id 3;
* ``{{`` and ``}}``: literal braces.

``serialize`` writes a template back in display notation (``[X1]``,
``{"soft": "the", "soft_id": 1}``), which is how the built-in templates are
compared against their expected forms in tests.

Answer mapping turns per-word scores from a model into a binary label and a
match probability (``verbalize``).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .errors import (
    DanglingShareId,
    DuplicateAnswerSlot,
    MissingAnswerSlot,
    MissingBinding,
    MissingWordScore,
    UnexpectedBinding,
    UnknownSlot,
)

INPUT_SLOT_NAMES = ("X1", "X2")
ANSWER_SLOT_NAMES = ("Z", "Z1")

DEFAULT_MASK_MARKER = "<mask>"

CLOZE = "cloze"
PREFIX = "prefix"


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class InputSlot:
    name: str  # "X1" or "X2"


@dataclass(frozen=True)
class AnswerSlot:
    name: str  # "Z" or "Z1"


@dataclass(frozen=True)
class SoftToken:
    """A trainable token. ``init_text`` seeds it; ``soft_id`` shares it."""

    init_text: str | None = None
    soft_id: int | None = None


Part = TextPart | InputSlot | AnswerSlot | SoftToken


@dataclass(frozen=True)
class Template:
    parts: tuple[Part, ...]
    name: str | None = None

    def __post_init__(self) -> None:
        answers = [p for p in self.parts if isinstance(p, AnswerSlot)]
        if not answers:
            raise MissingAnswerSlot(f"template {self.name or ''!r} has no answer slot")
        if len(answers) > 1:
            raise DuplicateAnswerSlot(
                f"template {self.name or ''!r} has {len(answers)} answer slots"
            )
        introduced = {
            p.soft_id for p in self.parts
            if isinstance(p, SoftToken) and p.soft_id is not None and p.init_text is not None
        }
        for p in self.parts:
            if isinstance(p, SoftToken) and p.init_text is None:
                if p.soft_id not in introduced:
                    raise DanglingShareId(
                        f"soft_id {p.soft_id} is referenced but never initialized"
                    )

    @property
    def input_slots(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.parts if isinstance(p, InputSlot))

    @property
    def answer_slot(self) -> str:
        return next(p.name for p in self.parts if isinstance(p, AnswerSlot))

    @property
    def has_soft_tokens(self) -> bool:
        return any(isinstance(p, SoftToken) for p in self.parts)

    @property
    def style(self) -> str:
        """``prefix`` when the answer slot ends the template, else ``cloze``.

        Trailing whitespace-only text does not count as content after the
        slot; a trailing full stop does.
        """
        idx = next(i for i, p in enumerate(self.parts) if isinstance(p, AnswerSlot))
        for p in self.parts[idx + 1:]:
            if isinstance(p, TextPart) and not p.text.strip():
                continue
            return CLOZE
        return PREFIX

    def soft_init_texts(self) -> dict[int, str]:
        """Map each share id to the init text that introduced it."""
        out: dict[int, str] = {}
        for p in self.parts:
            if isinstance(p, SoftToken) and p.soft_id is not None and p.init_text is not None:
                out.setdefault(p.soft_id, p.init_text)
        return out


_SLOT_RE = re.compile(r"\{\{|\}\}|\{([^{}]*)\}")
_SOFT_RE = re.compile(r"soft:(?:(?P<text>[^#]*))?(?:#(?P<id>\d+))?$")


def _parse_slot(body: str, source: str) -> Part:
    if body in INPUT_SLOT_NAMES:
        return InputSlot(body)
    if body in ANSWER_SLOT_NAMES:
        return AnswerSlot(body)
    if body.startswith("soft:"):
        m = _SOFT_RE.match(body)
        if not m:
            raise UnknownSlot(f"malformed soft token {{{body}}} in {source!r}")
        text = m.group("text") or None
        soft_id = int(m.group("id")) if m.group("id") is not None else None
        if text is None and soft_id is None:
            raise UnknownSlot(f"soft token needs init text or a share id: {{{body}}}")
        return SoftToken(init_text=text, soft_id=soft_id)
    raise UnknownSlot(f"unknown slot {{{body}}} in {source!r}")


def parse_template(source: str, name: str | None = None) -> Template:
    """Parse the brace mini-language into a Template.

    Adjacent literal runs are merged into single text parts. Raises
    :class:`UnknownSlot` for unrecognized slot names, unterminated braces,
    or malformed soft tokens.
    """
    parts: list[Part] = []
    buf: list[str] = []

    def flush() -> None:
        if buf:
            parts.append(TextPart("".join(buf)))
            buf.clear()

    pos = 0
    for m in _SLOT_RE.finditer(source):
        # braces between matches are neither escaped nor part of a slot
        segment = source[pos:m.start()]
        if "{" in segment or "}" in segment:
            raise UnknownSlot(f"unterminated brace in template {source!r}")
        buf.append(segment)
        pos = m.end()
        token = m.group(0)
        if token == "{{":
            buf.append("{")
        elif token == "}}":
            buf.append("}")
        else:
            flush()
            parts.append(_parse_slot(m.group(1), source))
    tail = source[pos:]
    if "{" in tail or "}" in tail:
        raise UnknownSlot(f"unterminated brace in template {source!r}")
    buf.append(tail)
    flush()
    return Template(parts=tuple(parts), name=name)


def render(
    template: Template,
    bindings: dict[str, str],
    answer_text: str | None = None,
    mask_marker: str = DEFAULT_MASK_MARKER,
) -> str:
    """Fill the template's slots and return the flat prompt string.

    ``bindings`` must cover exactly the template's input slots. The answer
    slot renders as ``answer_text`` when given (training) and as
    ``mask_marker`` otherwise (inference). Soft tokens render as their init
    text, so a model without dedicated soft-token support sees plain words.
    """
    needed = set(template.input_slots)
    given = set(bindings)
    if needed - given:
        raise MissingBinding(f"missing bindings for {sorted(needed - given)}")
    if given - needed:
        raise UnexpectedBinding(f"unexpected bindings {sorted(given - needed)}")

    shared = template.soft_init_texts()
    out: list[str] = []
    for part in template.parts:
        if isinstance(part, TextPart):
            out.append(part.text)
        elif isinstance(part, InputSlot):
            out.append(bindings[part.name])
        elif isinstance(part, AnswerSlot):
            out.append(answer_text if answer_text is not None else mask_marker)
        else:
            out.append(part.init_text if part.init_text is not None else shared[part.soft_id])
    return "".join(out)


def split_at_answer(template: Template, bindings: dict[str, str]) -> tuple[str, str]:
    """Rendered text before and after the answer slot."""
    rendered = render(template, bindings, answer_text="\x00", mask_marker="\x00")
    before, _, after = rendered.partition("\x00")
    return before, after


def _serialize_soft(part: SoftToken) -> str:
    fields = []
    if part.init_text is not None:
        fields.append(f'"soft": "{part.init_text}"')
    if part.soft_id is not None:
        fields.append(f'"soft_id": {part.soft_id}')
    return "{" + ", ".join(fields) + "}"


def serialize(template: Template) -> str:
    """Render the template structure in display notation.

    Input and answer slots print as ``[X1]``/``[Z]``; soft tokens print as
    JSON-ish objects. Inverse of ``parse_template`` up to brace escaping.
    """
    out: list[str] = []
    for part in template.parts:
        if isinstance(part, TextPart):
            out.append(part.text)
        elif isinstance(part, (InputSlot, AnswerSlot)):
            out.append(f"[{part.name}]")
        else:
            out.append(_serialize_soft(part))
    return "".join(out)


# --- built-in templates ----------------------------------------------------

#: Classification templates (two input slots, answer slot Z).
CLASSIFICATION_TEMPLATES = ("t1", "t2", "t3", "t4", "t5")

#: Generation templates come in positive/negative polarity pairs.
GENERATION_TEMPLATE_PAIRS = {
    "t6": ("t6_pos", "t6_neg"),
    "t7": ("t7_pos", "t7_neg"),
}

#: Answer words per label for each classification template. Statement-style
#: templates complete with a verb phrase; question-style ones with Yes/No.
BUILTIN_ANSWER_WORDS: dict[str, dict[int, tuple[str, ...]]] = {
    "t1": {0: ("not matched",), 1: ("matched",)},
    "t2": {0: ("not matched",), 1: ("matched",)},
    "t3": {0: ("No",), 1: ("Yes",)},
    "t4": {0: ("No",), 1: ("Yes",)},
    "t5": {0: ("No",), 1: ("Yes",)},
}

_BUILTIN_NAMES = CLASSIFICATION_TEMPLATES + ("t6_pos", "t6_neg", "t7_pos", "t7_neg")


@lru_cache(maxsize=None)
def builtin_template(name: str) -> Template:
    """Load a shipped template by name (t1..t5, t6_pos/neg, t7_pos/neg)."""
    if name not in _BUILTIN_NAMES:
        raise UnknownSlot(
            f"no built-in template {name!r}; choose from {', '.join(_BUILTIN_NAMES)}"
        )
    source = (
        resources.files("kpmatch")
        .joinpath(f"templates/{name}.txt")
        .read_text("utf-8")
        .rstrip("\n")
    )
    return parse_template(source, name=name)


# --- answer mapping ---------------------------------------------------------

def _stable_sigmoid_of_negative(d: float) -> float:
    """1 / (1 + exp(d)) without overflow for large |d|."""
    if d <= 0:
        return 1.0 / (1.0 + math.exp(d))
    e = math.exp(-d)
    return e / (1.0 + e)


def verbalize(
    word_scores: dict[str, float],
    label_words: dict[int, tuple[str, ...]],
) -> tuple[int, float]:
    """Map per-word scores to (label, match probability).

    Each label's score is the max over its candidate words; the match
    probability is the two-way softmax of (score0, score1). An exact tie
    yields probability 0.5 and label 0, the majority class.
    """
    scores: dict[int, float] = {}
    for label in (0, 1):
        words = label_words.get(label, ())
        if not words:
            raise MissingWordScore(f"label {label} has no candidate words")
        per_word = []
        for word in words:
            if word not in word_scores:
                raise MissingWordScore(f"no score for answer word {word!r}")
            per_word.append(word_scores[word])
        scores[label] = max(per_word)
    p1 = _stable_sigmoid_of_negative(scores[0] - scores[1])
    return (1 if p1 > 0.5 else 0), p1
