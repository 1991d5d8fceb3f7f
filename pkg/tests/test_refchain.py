from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tgs.core import FrameRef, ReferenceSample, Split
from tgs.refchain import (
    ChainParseError,
    DuplicateTag,
    EmptyAnswerSection,
    MissingTag,
    PromptTemplate,
    TagOrderViolation,
    TemplateError,
    TuningRecord,
    TuningRejection,
    build_tuning_record,
    chain,
    count_words,
    default_transform_prompt,
    default_user_prompt,
    null_chain,
    parse_chain,
    render_user_prompt,
    serialize_chain,
    validate_chain,
)

EXAMPLE_OUTPUT = '''<think>
The referential expression is: "a person holding a guitar". The video shows a person actively playing a guitar, moving slightly across frames. The audio contains clear guitar strumming sounds. The referential expression primarily relates to the visual and auditory presence of the person and the guitar.
</think>
<answer>
   <f_object>
      a person holding a guitar, shifting position from left to right
   </f_object>
   <s_object>
      person
   </s_object>
</answer>
'''

NULL_OUTPUT = """<think>
The referential expression is: "the violin". The video shows a kitchen scene. The audio contains running water. The reference related to an object that is absent.
</think>
<answer>
<f_object>
null
</f_object>
<s_object>
null
</s_object>
</answer>
"""


# strategy: words that cannot collide with tags or the null marker
_word = st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=2, max_size=8).filter(
    lambda w: w != "null")


@st.composite
def valid_chains(draw):
    if draw(st.booleans()):
        f = " ".join(draw(st.lists(_word, min_size=1, max_size=12)))
        s = " ".join(draw(st.lists(_word, min_size=1, max_size=3)))
    else:
        f = s = None
    think_lines = draw(st.lists(
        st.lists(_word, min_size=1, max_size=10).map(" ".join), min_size=0, max_size=4))
    think = "\n".join(think_lines) if think_lines else None
    return chain(f, s, think)


class TestParseStrict:
    def test_example_output(self):
        c = parse_chain(EXAMPLE_OUTPUT, strict=True)
        assert c.f_object == "a person holding a guitar, shifting position from left to right"
        assert c.s_object == "person"
        assert c.think is not None
        assert c.think.reference_echo == "a person holding a guitar"

    def test_null_output(self):
        c = parse_chain(NULL_OUTPUT, strict=True)
        assert c.f_object is None and c.s_object is None
        assert c.is_null

    def test_missing_tag(self):
        with pytest.raises(MissingTag) as exc:
            parse_chain(EXAMPLE_OUTPUT.replace("<answer>\n", ""), strict=True)
        assert exc.value.tag == "<answer>"
        assert exc.value.span is not None

    def test_duplicate_tag(self):
        dup = EXAMPLE_OUTPUT + "\n<answer>\n"
        with pytest.raises((DuplicateTag, ChainParseError)):
            parse_chain(dup, strict=True)

    def test_reordered_tags(self):
        swapped = EXAMPLE_OUTPUT.replace("<f_object>", "<x>").replace(
            "</f_object>", "</x>").replace("<s_object>", "<f_object>").replace(
            "</s_object>", "</f_object>").replace("<x>", "<s_object>").replace(
            "</x>", "</s_object>")
        with pytest.raises(ChainParseError):
            parse_chain(swapped, strict=True)

    def test_merged_tags_rejected(self):
        merged = NULL_OUTPUT.replace("<f_object>\nnull\n</f_object>",
                                     "<f_object> null </f_object>")
        with pytest.raises(TagOrderViolation) as exc:
            parse_chain(merged, strict=True)
        assert "own line" in str(exc.value)

    def test_empty_answer_section(self):
        empty = NULL_OUTPUT.replace("<f_object>\nnull\n", "<f_object>\n\n")
        with pytest.raises(EmptyAnswerSection):
            parse_chain(empty, strict=True)

    def test_uppercase_tags_rejected(self):
        with pytest.raises(ChainParseError):
            parse_chain(EXAMPLE_OUTPUT.replace("<think>", "<THINK>"), strict=True)

    def test_stray_content_rejected(self):
        with pytest.raises(ChainParseError):
            parse_chain("Sure, here you go:\n" + EXAMPLE_OUTPUT, strict=True)

    def test_extra_blank_lines_tolerated(self):
        padded = EXAMPLE_OUTPUT.replace("<answer>", "\n<answer>\n")
        c = parse_chain(padded, strict=True)
        assert c.s_object == "person"


class TestParseLenient:
    def test_merged_tags_accepted(self):
        raw = ("<think>thinking</think><answer><f_object>a red car parked"
               "</f_object><s_object>car</s_object></answer>")
        c = parse_chain(raw, strict=False)
        assert c.s_object == "car"
        assert "tags_inline" in c.flags

    def test_case_insensitive(self):
        raw = "<Answer><F_OBJECT>a dog</F_OBJECT><S_Object>dog</S_Object></Answer>"
        c = parse_chain(raw, strict=False)
        assert c.f_object == "a dog"
        assert "tag_case_mismatch" in c.flags

    def test_answer_only_flagged(self):
        raw = "<answer>\n<f_object>\na cat\n</f_object>\n<s_object>\ncat\n</s_object>\n</answer>"
        c = parse_chain(raw, strict=False)
        assert c.think is None
        assert "answer_only" in c.flags

    def test_missing_objects_still_error(self):
        with pytest.raises(MissingTag):
            parse_chain("<think>something</think>", strict=False)

    def test_surrounding_prose_tolerated(self):
        raw = "Here is my analysis. " + EXAMPLE_OUTPUT + "\nHope that helps!"
        c = parse_chain(raw, strict=False)
        assert c.s_object == "person"


class TestRoundTrip:
    @settings(max_examples=150, deadline=None)
    @given(valid_chains())
    def test_parse_serialize_identity(self, c):
        assert parse_chain(serialize_chain(c), strict=True) == c

    @settings(max_examples=100, deadline=None)
    @given(valid_chains())
    def test_lenient_agrees_on_canonical(self, c):
        assert parse_chain(serialize_chain(c), strict=False) == c

    def test_normalization_idempotent(self):
        for raw in (EXAMPLE_OUTPUT, NULL_OUTPUT):
            once = serialize_chain(parse_chain(raw, strict=True))
            twice = serialize_chain(parse_chain(once, strict=True))
            assert once == twice

    def test_serialized_null_contains_literal_bodies(self):
        text = serialize_chain(null_chain("The referential expression is: \"x\"."))
        assert "      null" in text

    def test_serialize_one_tag_per_line(self):
        text = serialize_chain(chain("guitar on the right side here", "guitar"))
        lines = text.splitlines()
        assert "   <s_object>" in lines
        assert "      guitar" in lines


class TestChainFactory:
    def test_null_coupling_enforced(self):
        with pytest.raises(ValueError):
            chain("a thing", None)
        with pytest.raises(ValueError):
            chain(None, "thing")

    def test_literal_null_body_reserved(self):
        with pytest.raises(ValueError):
            chain("null", "null")

    def test_tag_in_body_rejected(self):
        with pytest.raises(ValueError):
            chain("a </think> in body", "thing")

    def test_whitespace_normalized(self):
        c = chain("a   dog\truns", "dog")
        assert c.f_object == "a dog runs"


class TestValidate:
    def test_long_f_object_hard(self):
        c = chain(" ".join(["word"] * 25), "thing")
        violations = validate_chain(c)
        assert any(v.code == "f_word_count_hard" and v.is_hard for v in violations)

    def test_clean_s_object_no_violations(self):
        c = chain("a guitar being played on the right", "guitar",
                  'The referential expression is: "x". ok.')
        assert validate_chain(c) == []

    def test_null_mismatch_reported(self):
        from tgs.refchain import ReasoningChain

        bad = ReasoningChain(think=None, f_object=None, s_object="guitar")
        codes = {v.code for v in validate_chain(bad)}
        assert "null_mismatch" in codes

    def test_soft_band(self):
        c = chain("tiny", "thing", 'The referential expression is: "x".')
        codes = {v.code: v.severity for v in validate_chain(c)}
        assert codes.get("f_word_count_soft") == "warn"

    def test_s_object_word_cap(self):
        c = chain("a very big red drum set", "big red drum set thing",
                  'The referential expression is: "x".')
        assert any(v.code == "s_word_count" for v in validate_chain(c))

    def test_missing_echo(self):
        c = chain("a guitar being played right now", "guitar", "no echo here.")
        assert any(v.code == "missing_reference_echo" for v in validate_chain(c))

    def test_count_words_strips_punctuation(self):
        assert count_words("a man, playing; the - guitar!") == 5


class TestPromptTemplate:
    def test_default_template_renders(self):
        text = render_user_prompt(default_user_prompt(), "The piano left of the guitar")
        assert "The piano left of the guitar" in text
        assert "<audio_start><audio><audio_end>" in text
        assert "<video_start><video><video_end>" in text

    def test_empty_reference_rejected(self):
        with pytest.raises(ValueError):
            render_user_prompt(default_user_prompt(), "   ")

    def test_missing_video_span_rejected(self):
        t = PromptTemplate("bad", "no spans at all {{reference}}")
        with pytest.raises(TemplateError):
            render_user_prompt(t, "the dog")

    def test_unbound_placeholder_rejected(self):
        t = PromptTemplate("t", "{{a}} and {{b}}")
        with pytest.raises(TemplateError):
            t.render(a="x")

    def test_duplicate_placeholder_rejected(self):
        t = PromptTemplate("t", "{{a}} {{a}}")
        with pytest.raises(TemplateError):
            t.render(a="x")

    def test_transform_template_bindings(self):
        text = default_transform_prompt().render(uid="u1", target_object="hair-dryer")
        assert "u1" in text and "hair-dryer" in text


def _sample(uid="u1"):
    return ReferenceSample(uid=uid, frames=(FrameRef.synthetic("f0", 8, 8),),
                           reference="the piano left of the guitar", split=Split.SEEN)


class TestBuildTuningRecord:
    def test_well_formed_accepted(self):
        rec = build_tuning_record(_sample(), EXAMPLE_OUTPUT)
        assert isinstance(rec, TuningRecord)
        assert rec.target == serialize_chain(parse_chain(EXAMPLE_OUTPUT, strict=True))
        assert "the piano left of the guitar" in rec.user_prompt

    def test_merged_tags_rejected(self):
        merged = NULL_OUTPUT.replace("<f_object>\nnull\n</f_object>",
                                     "<f_object> null </f_object>")
        rec = build_tuning_record(_sample(), merged)
        assert isinstance(rec, TuningRejection)
        assert any("own line" in r for r in rec.reasons)

    def test_over_cap_rejected(self):
        long_f = EXAMPLE_OUTPUT.replace(
            "a person holding a guitar, shifting position from left to right",
            " ".join(["w"] * 30))
        rec = build_tuning_record(_sample(), long_f)
        assert isinstance(rec, TuningRejection)

    def test_arbitrary_garbage_never_raises(self):
        rec = build_tuning_record(_sample(), "complete nonsense, no tags")
        assert isinstance(rec, TuningRejection)


class TestFuzz:
    @settings(max_examples=300, deadline=None)
    @given(st.binary(max_size=400))
    def test_bytes_never_crash(self, data):
        for strict in (True, False):
            try:
                parse_chain(data, strict=strict)
            except ChainParseError:
                pass

    @settings(max_examples=300, deadline=None)
    @given(st.text(max_size=400))
    def test_text_never_crashes(self, text):
        for strict in (True, False):
            try:
                parse_chain(text, strict=strict)
            except ChainParseError:
                pass
