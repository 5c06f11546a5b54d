from __future__ import annotations

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kpmatch import prompts
from kpmatch.errors import (
    DanglingShareId,
    DuplicateAnswerSlot,
    MissingAnswerSlot,
    MissingBinding,
    MissingWordScore,
    UnexpectedBinding,
    UnknownSlot,
)
from kpmatch.prompts import (
    AnswerSlot,
    InputSlot,
    SoftToken,
    TextPart,
    builtin_template,
    parse_template,
    render,
    serialize,
    split_at_answer,
    verbalize,
)


class TestParse:
    def test_parts(self):
        t = parse_template("say {X1} then {Z}.")
        assert t.parts == (
            TextPart("say "), InputSlot("X1"), TextPart(" then "),
            AnswerSlot("Z"), TextPart("."),
        )

    def test_brace_escapes(self):
        t = parse_template("a {{literal}} brace {Z}")
        assert t.parts[0] == TextPart("a {literal} brace ")

    def test_soft_tokens(self):
        t = parse_template("{soft:once} {soft:shared#3} {soft:#3} {Z}")
        softs = [p for p in t.parts if isinstance(p, SoftToken)]
        assert softs[0] == SoftToken("once", None)
        assert softs[1] == SoftToken("shared", 3)
        assert softs[2] == SoftToken(None, 3)

    @pytest.mark.parametrize("source,exc", [
        ("no answer {X1}", MissingAnswerSlot),
        ("{Z} and {Z1}", DuplicateAnswerSlot),
        ("{X9} {Z}", UnknownSlot),
        ("open brace { {Z}", UnknownSlot),
        ("{Z} dangling }", UnknownSlot),
        ("{soft:} {Z}", UnknownSlot),
        ("{soft:#9} {Z}", DanglingShareId),
    ])
    def test_errors(self, source, exc):
        with pytest.raises(exc):
            parse_template(source)

    def test_style(self):
        assert parse_template("{X1} {Z}").style == prompts.PREFIX
        assert parse_template("{X1} {Z}  ").style == prompts.PREFIX
        assert parse_template("{X1} {Z}.").style == prompts.CLOZE
        assert parse_template("{Z} {X1}").style == prompts.CLOZE


class TestRoundTrip:
    @given(st.sampled_from(prompts._BUILTIN_NAMES))
    def test_builtin_serialize_parse(self, name):
        t = builtin_template(name)
        # display notation survives a reparse of the raw source
        raw = parse_template(serialize_to_source(t), name=name)
        assert raw.parts == t.parts


def serialize_to_source(template) -> str:
    """Rebuild brace notation (serialize() emits display notation)."""
    out = []
    for p in template.parts:
        if isinstance(p, TextPart):
            out.append(p.text.replace("{", "{{").replace("}", "}}"))
        elif isinstance(p, (InputSlot, AnswerSlot)):
            out.append("{" + p.name + "}")
        else:
            body = "soft:" + (p.init_text or "")
            if p.soft_id is not None:
                body += f"#{p.soft_id}"
            out.append("{" + body + "}")
    return "".join(out)


GOLDEN = {
    "t1": "The argument: ARG and the keypoint KP are <mask>.",
    "t2": "The argument: ARG is <mask> with the keypoint: KP",
    "t3": "Does the argument: ARG comprise the fact that KP? <mask>",
    "t4": "A keypoint is a summarization of the corresponding argument. "
          "In other words, an argument comprises a keypoint. "
          "Does the argument: ARG, comprise the keypoint KP? <mask>",
    "t5": "Argument: ARG Keypoint: KP Does the argument matches the keypoint? <mask>",
}

GOLDEN_GENERATION = {
    "t6_pos": "ARG This means KP.",
    "t6_neg": "ARG This does not mean KP",
    "t7_pos": 'The correct keypoint for the argument: "ARG" is KP',
    "t7_neg": 'The wrong keypoint for the argument: "ARG" is KP',
}


class TestRenderGolden:
    @pytest.mark.parametrize("name,want", sorted(GOLDEN.items()))
    def test_classification_templates(self, name, want):
        got = render(builtin_template(name), {"X1": "ARG", "X2": "KP"})
        assert got == want

    @pytest.mark.parametrize("name,want", sorted(GOLDEN_GENERATION.items()))
    def test_generation_templates(self, name, want):
        got = render(builtin_template(name), {"X1": "ARG"}, answer_text="KP")
        assert got == want

    def test_answer_text_replaces_mask(self):
        got = render(builtin_template("t1"), {"X1": "a", "X2": "k"},
                     answer_text="matched")
        assert got == "The argument: a and the keypoint k are matched."

    def test_custom_mask_marker(self):
        got = render(builtin_template("t3"), {"X1": "a", "X2": "k"},
                     mask_marker="<extra_id_0>")
        assert got.endswith("? <extra_id_0>")

    def test_binding_errors(self):
        t = builtin_template("t1")
        with pytest.raises(MissingBinding):
            render(t, {"X1": "a"})
        with pytest.raises(UnexpectedBinding):
            render(t, {"X1": "a", "X2": "k", "X3": "x"})

    def test_split_at_answer(self):
        before, after = split_at_answer(builtin_template("t2"),
                                        {"X1": "ARG", "X2": "KP"})
        assert before == "The argument: ARG is "
        assert after == " with the keypoint: KP"

    def test_unknown_builtin(self):
        with pytest.raises(UnknownSlot):
            builtin_template("t99")


class TestBuiltinCatalog:
    def test_names(self):
        assert prompts.CLASSIFICATION_TEMPLATES == ("t1", "t2", "t3", "t4", "t5")
        assert set(prompts.GENERATION_TEMPLATE_PAIRS) == {"t6", "t7"}

    def test_answer_words_cover_all_templates(self):
        for name in prompts.CLASSIFICATION_TEMPLATES:
            words = prompts.BUILTIN_ANSWER_WORDS[name]
            assert set(words) == {0, 1}
            assert all(w for ws in words.values() for w in ws)

    def test_soft_template_flags(self):
        assert builtin_template("t5").has_soft_tokens
        assert not builtin_template("t1").has_soft_tokens


YESNO = {0: ("no",), 1: ("yes",)}


class TestVerbalize:
    def test_positive(self):
        label, p = verbalize({"yes": 2.0, "no": 0.0}, YESNO)
        assert label == 1
        assert p == pytest.approx(0.8807970779778823, abs=1e-15)

    def test_negative(self):
        label, p = verbalize({"yes": 0.0, "no": 4.0}, YESNO)
        assert label == 0
        assert p == pytest.approx(0.017986209962091555, abs=1e-15)

    def test_tie_is_majority_class(self):
        assert verbalize({"yes": 1.0, "no": 1.0}, YESNO) == (0, 0.5)

    def test_multi_word_takes_max(self):
        words = {0: ("no", "never"), 1: ("yes",)}
        _, p_single = verbalize({"yes": 1.0, "no": 0.0, "never": -9.0}, words)
        _, p_strong = verbalize({"yes": 1.0, "no": 0.0, "never": 3.0}, words)
        assert p_strong < p_single

    def test_missing_word(self):
        with pytest.raises(MissingWordScore):
            verbalize({"yes": 1.0}, YESNO)
        with pytest.raises(MissingWordScore):
            verbalize({"yes": 1.0, "no": 0.0}, {0: (), 1: ("yes",)})

    def test_extreme_scores_do_not_overflow(self):
        _, p_hi = verbalize({"yes": 1000.0, "no": -1000.0}, YESNO)
        _, p_lo = verbalize({"yes": -1000.0, "no": 1000.0}, YESNO)
        assert p_hi == pytest.approx(1.0)
        assert p_lo == pytest.approx(0.0)

    @given(
        s0=st.floats(min_value=-50, max_value=50),
        s1=st.floats(min_value=-50, max_value=50),
        shift=st.floats(min_value=-30, max_value=30),
    )
    def test_shift_invariance_and_sign(self, s0, s1, shift):
        label, p = verbalize({"no": s0, "yes": s1}, YESNO)
        _, p_shifted = verbalize({"no": s0 + shift, "yes": s1 + shift}, YESNO)
        assert p == pytest.approx(p_shifted, abs=1e-9)
        if s1 - s0 > 1e-9:
            assert p > 0.5 and label == 1
        elif s0 - s1 > 1e-9:
            assert p < 0.5 and label == 0
        assert math.isfinite(p) and 0.0 <= p <= 1.0
