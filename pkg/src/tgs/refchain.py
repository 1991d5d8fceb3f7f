"""Object-aware reasoning-chain grammar: parser, serializer, validator.

The chain format is a tagged block::

    <think>
       ...multimodal analysis...
    </think>
    <answer>
       <f_object>
          fine-grained description, or the literal body "null"
       </f_object>
       <s_object>
          category-only description, or "null"
       </s_object>
    </answer>

Two parsing modes exist. Strict mode (dataset construction) enforces one tag
per line and the exact tag order. Lenient mode (runtime model output) accepts
tags sharing lines, case-insensitive tag names, and answer-only outputs;
deviations are reported in ``ReasoningChain.flags``.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

if TYPE_CHECKING:
    from .core import ReferenceSample

NULL_MARKER = "null"
REFERENCE_ECHO = "The referential expression is"

_TAG_NAMES = ("think", "answer", "f_object", "s_object")
_CANONICAL_ORDER = (
    "<think>", "</think>", "<answer>",
    "<f_object>", "</f_object>", "<s_object>", "</s_object>", "</answer>",
)
_TAG_RE = re.compile(r"</?(?:think|answer|f_object|s_object)>", re.IGNORECASE)
_TAG_LINE_RE = re.compile(r"^\s*(</?(?:think|answer|f_object|s_object)>)\s*$", re.IGNORECASE)

_ECHO_RE = re.compile(r'The referential expression is:?\s*["“]([^"”]*)["”]')
_VIDEO_RE = re.compile(r"The video shows\s+([^.]+)")
_AUDIO_RE = re.compile(r"The audio (?:contains|is)\s+([^.]+)")
_MODALITY_RE = re.compile(r"The reference(?:\s+is)?\s+relate[sd]?\s+to\s+([^.]+)")


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class ChainParseError(ValueError):
    """Base for all chain-grammar failures.

    ``tag`` names the offending tag and ``span`` is the (start, end) byte
    range in the UTF-8 encoding of the input.
    """

    def __init__(self, message: str, *, tag: str | None = None,
                 span: tuple[int, int] | None = None):
        super().__init__(message)
        self.tag = tag
        self.span = span


class MissingTag(ChainParseError):
    pass


class TagOrderViolation(ChainParseError):
    pass


class DuplicateTag(ChainParseError):
    pass


class EmptyAnswerSection(ChainParseError):
    pass


class TemplateError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Chain data model
# ---------------------------------------------------------------------------


def _normalize_block(text: str) -> str:
    """Strip trailing whitespace per line, outer blank lines, common indent."""
    lines = [ln.rstrip() for ln in text.splitlines()]
    while lines and not lines[0]:
        lines.pop(0)
    while lines and not lines[-1]:
        lines.pop()
    if not lines:
        return ""
    indents = [len(ln) - len(ln.lstrip()) for ln in lines if ln]
    cut = min(indents) if indents else 0
    return "\n".join(ln[cut:] if ln else "" for ln in lines)


def _normalize_inline(text: str) -> str:
    """Collapse all whitespace runs to single spaces and trim."""
    return " ".join(text.split())


@dataclass(frozen=True)
class ThinkBlock:
    """The think section; structured views are derived best-effort from text."""

    text: str

    @property
    def reference_echo(self) -> str | None:
        m = _ECHO_RE.search(self.text)
        return m.group(1).strip() if m else None

    @property
    def video_analysis(self) -> str | None:
        m = _VIDEO_RE.search(self.text)
        return m.group(1).strip() if m else None

    @property
    def audio_analysis(self) -> str | None:
        m = _AUDIO_RE.search(self.text)
        return m.group(1).strip() if m else None

    @property
    def modality_analysis(self) -> str | None:
        m = _MODALITY_RE.search(self.text)
        return m.group(1).strip() if m else None

    @property
    def is_structured(self) -> bool:
        return all(x is not None for x in (
            self.reference_echo, self.video_analysis,
            self.audio_analysis, self.modality_analysis))


@dataclass(frozen=True)
class ReasoningChain:
    """Parsed chain. ``f_object``/``s_object`` of None represent the null marker.

    The frozen dataclass itself admits a null-marker mismatch (parsers must be
    able to represent malformed model output so validators can report it); the
    :func:`chain` factory used everywhere else enforces the coupling.
    """

    think: ThinkBlock | None
    f_object: str | None
    s_object: str | None
    flags: tuple[str, ...] = field(default=(), compare=False)

    @property
    def is_null(self) -> bool:
        return self.f_object is None and self.s_object is None


def _check_body(name: str, text: str) -> str:
    if _TAG_RE.search(text):
        raise ValueError(f"{name} body may not contain chain tags: {text!r}")
    return text


def chain(f_object: str | None, s_object: str | None,
          think: ThinkBlock | str | None = None) -> ReasoningChain:
    """Checked constructor: normalizes bodies and enforces null coupling."""
    if (f_object is None) != (s_object is None):
        raise ValueError("f_object and s_object must be both null or both non-null")
    think_text = _normalize_block(think.text if isinstance(think, ThinkBlock) else (think or ""))
    think = ThinkBlock(_check_body("think", think_text)) if think_text else None
    if f_object is not None:
        f_object = _normalize_inline(_check_body("f_object", f_object))
        s_object = _normalize_inline(_check_body("s_object", s_object))
        if not s_object:
            raise ValueError("s_object must be non-empty after trimming")
        if not f_object:
            raise ValueError("f_object must be non-empty after trimming")
        if f_object == NULL_MARKER or s_object == NULL_MARKER:
            raise ValueError("the literal body 'null' is reserved as the null marker; "
                             "pass None instead")
    return ReasoningChain(think=think, f_object=f_object, s_object=s_object)


def null_chain(think: ThinkBlock | str | None = None) -> ReasoningChain:
    return chain(None, None, think)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _byte_offsets(raw: str) -> list[int]:
    """Byte offset of each line start in the UTF-8 encoding of raw."""
    offsets = [0]
    for ln in raw.splitlines(keepends=True):
        offsets.append(offsets[-1] + len(ln.encode("utf-8")))
    return offsets


def _object_body(name: str, body: str, span: tuple[int, int]) -> str | None:
    text = _normalize_inline(body)
    if not text:
        raise EmptyAnswerSection(f"<{name}> body is empty", tag=name, span=span)
    if text == NULL_MARKER:
        return None
    return text


def _parse_strict(raw: str) -> ReasoningChain:
    lines = raw.splitlines()
    offsets = _byte_offsets(raw)

    tokens: list[tuple[str, tuple[int, int], int]] = []  # (tag, byte span, line index)
    content: list[tuple[int, str]] = []  # (line index, text)
    for i, line in enumerate(lines):
        span = (offsets[i], offsets[i] + len(line.encode("utf-8")))
        m = _TAG_LINE_RE.match(line)
        if m:
            tag = m.group(1)
            if tag != tag.lower():
                raise TagOrderViolation(
                    f"tag {tag} is not in canonical lowercase form", tag=tag, span=span)
            tokens.append((tag, span, i))
        elif _TAG_RE.search(line):
            tag = _TAG_RE.search(line).group(0)
            raise TagOrderViolation(
                f"tag {tag} must appear on its own line", tag=tag, span=span)
        else:
            content.append((i, line))

    seen: set[str] = set()
    expected = list(_CANONICAL_ORDER)
    bounds: dict[str, int] = {}
    for tag, span, i in tokens:
        if not expected:
            raise DuplicateTag(f"unexpected extra tag {tag}", tag=tag, span=span)
        if tag == expected[0]:
            seen.add(tag)
            expected.pop(0)
            bounds[tag] = i
        elif tag in seen:
            raise DuplicateTag(f"tag {tag} appears more than once", tag=tag, span=span)
        elif tag in expected:
            missing = expected[0]
            raise MissingTag(f"expected {missing} before {tag}", tag=missing, span=span)
        else:
            raise TagOrderViolation(f"tag {tag} out of order", tag=tag, span=span)
    if expected:
        end = offsets[-1]
        raise MissingTag(f"missing tag {expected[0]}", tag=expected[0], span=(end, end))

    def region(open_tag: str, close_tag: str) -> str:
        rows = [text for i, text in content if bounds[open_tag] < i < bounds[close_tag]]
        return "\n".join(rows)

    for i, text in content:
        if text.strip() and not (bounds["<think>"] < i < bounds["</think>"]
                                 or bounds["<f_object>"] < i < bounds["</f_object>"]
                                 or bounds["<s_object>"] < i < bounds["</s_object>"]):
            span = (offsets[i], offsets[i] + len(text.encode("utf-8")))
            raise TagOrderViolation(
                f"unexpected content outside tagged sections: {text.strip()[:40]!r}",
                tag=None, span=span)

    think_text = _normalize_block(region("<think>", "</think>"))
    f_span = (offsets[bounds["<f_object>"]], offsets[bounds["</f_object>"]])
    s_span = (offsets[bounds["<s_object>"]], offsets[bounds["</s_object>"]])
    f_obj = _object_body("f_object", region("<f_object>", "</f_object>"), f_span)
    s_obj = _object_body("s_object", region("<s_object>", "</s_object>"), s_span)
    return ReasoningChain(
        think=ThinkBlock(think_text) if think_text else None,
        f_object=f_obj, s_object=s_obj)


def _lenient_section(raw: str, name: str) -> tuple[str, tuple[int, int]] | None:
    m = re.search(rf"<{name}>(.*?)</{name}>", raw, re.IGNORECASE | re.DOTALL)
    if m is None:
        return None
    start = len(raw[: m.start(1)].encode("utf-8"))
    end = len(raw[: m.end(1)].encode("utf-8"))
    return m.group(1), (start, end)


def _parse_lenient(raw: str) -> ReasoningChain:
    flags: list[str] = []
    if any(_TAG_RE.search(ln) and not _TAG_LINE_RE.match(ln) for ln in raw.splitlines()):
        flags.append("tags_inline")
    if any(m.group(0) != m.group(0).lower() for m in _TAG_RE.finditer(raw)):
        flags.append("tag_case_mismatch")

    think = _lenient_section(raw, "think")
    f_sec = _lenient_section(raw, "f_object")
    s_sec = _lenient_section(raw, "s_object")
    if f_sec is None:
        end = len(raw.encode("utf-8"))
        raise MissingTag("missing tag <f_object>", tag="<f_object>", span=(end, end))
    if s_sec is None:
        end = len(raw.encode("utf-8"))
        raise MissingTag("missing tag <s_object>", tag="<s_object>", span=(end, end))
    if think is None:
        flags.append("answer_only")

    f_obj = _object_body("f_object", f_sec[0], f_sec[1])
    s_obj = _object_body("s_object", s_sec[0], s_sec[1])
    think_text = _normalize_block(think[0]) if think else ""
    return ReasoningChain(
        think=ThinkBlock(think_text) if think_text else None,
        f_object=f_obj, s_object=s_obj,
        flags=tuple(dict.fromkeys(flags)))


def parse_chain(raw: str | bytes, *, strict: bool = True) -> ReasoningChain:
    """Parse raw model output into a chain.

    Any input yields either a chain or a :class:`ChainParseError`; the parser
    never raises anything else, regardless of input bytes.
    """
    if isinstance(raw, bytes):
        raw = raw.decode("utf-8", errors="replace")
    if strict:
        return _parse_strict(raw)
    return _parse_lenient(raw)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def serialize_chain(c: ReasoningChain) -> str:
    """Canonical form: one tag per line, 3-space body indentation."""
    lines = ["<think>"]
    if c.think is not None:
        for ln in c.think.text.splitlines():
            lines.append(f"   {ln}" if ln else "")
    lines.append("</think>")
    lines.append("<answer>")
    for name, body in (("f_object", c.f_object), ("s_object", c.s_object)):
        lines.append(f"   <{name}>")
        lines.append(f"      {body if body is not None else NULL_MARKER}")
        lines.append(f"   </{name}>")
    lines.append("</answer>")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChainPolicy:
    """Bounds for chain validation; defaults follow the training-set guidelines."""

    f_soft_min: int = 6
    f_soft_max: int = 10
    f_hard_max: int = 20
    s_max_words: int = 3
    require_reference_echo: bool = True


@dataclass(frozen=True)
class ChainViolation:
    code: str
    severity: str  # "warn" | "hard"
    message: str

    @property
    def is_hard(self) -> bool:
        return self.severity == "hard"


def count_words(text: str) -> int:
    """Whitespace tokens that are non-empty after stripping punctuation."""
    return sum(1 for tok in text.split() if tok.strip(string.punctuation))


def validate_chain(c: ReasoningChain, policy: ChainPolicy = ChainPolicy()) -> list[ChainViolation]:
    """Policy checks; violations are data, not failures."""
    out: list[ChainViolation] = []
    if (c.f_object is None) != (c.s_object is None):
        out.append(ChainViolation(
            "null_mismatch", "hard",
            "f_object and s_object must be both null or both non-null"))
    if c.f_object is not None:
        n = count_words(c.f_object)
        if n > policy.f_hard_max:
            out.append(ChainViolation(
                "f_word_count_hard", "hard",
                f"f_object has {n} words, above the hard cap {policy.f_hard_max}"))
        elif not (policy.f_soft_min <= n <= policy.f_soft_max):
            out.append(ChainViolation(
                "f_word_count_soft", "warn",
                f"f_object has {n} words, outside the preferred "
                f"{policy.f_soft_min}-{policy.f_soft_max} band"))
    if c.s_object is not None:
        n = count_words(c.s_object)
        if n > policy.s_max_words:
            out.append(ChainViolation(
                "s_word_count", "warn",
                f"s_object has {n} words, above the category cap {policy.s_max_words}"))
    if policy.require_reference_echo:
        if c.think is None or REFERENCE_ECHO not in c.think.text:
            out.append(ChainViolation(
                "missing_reference_echo", "warn",
                f'think section does not echo the reference ("{REFERENCE_ECHO} ...")'))
    return out


# ---------------------------------------------------------------------------
# Prompt templates
# ---------------------------------------------------------------------------

VIDEO_SPAN = "<video_start><video><video_end>"
AUDIO_SPAN = "<audio_start><audio><audio_end>"
_PLACEHOLDER_RE = re.compile(r"\{\{(\w+)\}\}")


@dataclass(frozen=True)
class PromptTemplate:
    """Plain-text template with ``{{name}}`` substitution markers."""

    template_id: str
    text: str

    def placeholders(self) -> list[str]:
        return _PLACEHOLDER_RE.findall(self.text)

    def render(self, **bindings: str) -> str:
        names = self.placeholders()
        for name in bindings:
            if names.count(name) != 1:
                raise TemplateError(
                    f"template {self.template_id!r}: placeholder {{{{{name}}}}} must "
                    f"appear exactly once, found {names.count(name)}")
        unbound = [n for n in names if n not in bindings]
        if unbound:
            raise TemplateError(
                f"template {self.template_id!r}: unbound placeholders {unbound}")
        out = self.text
        for name, value in bindings.items():
            out = out.replace(f"{{{{{name}}}}}", value)
        return out

    @classmethod
    def from_file(cls, path: str | Path, template_id: str | None = None) -> "PromptTemplate":
        path = Path(path)
        return cls(template_id=template_id or path.stem,
                   text=path.read_text(encoding="utf-8"))


def _builtin_template(name: str) -> PromptTemplate:
    text = resources.files("tgs.templates").joinpath(f"{name}.txt").read_text("utf-8")
    return PromptTemplate(template_id=name, text=text)


def default_user_prompt() -> PromptTemplate:
    return _builtin_template("user_prompt")


def default_transform_prompt() -> PromptTemplate:
    return _builtin_template("transform_prompt")


def default_teacher_prompt() -> PromptTemplate:
    return _builtin_template("teacher_prompt")


def render_user_prompt(template: PromptTemplate, reference: str) -> str:
    """Fill the reference slot; modality placeholder spans stay intact for the
    downstream tool to substitute embeddings into."""
    if not reference or not reference.strip():
        raise ValueError("reference must be non-empty")
    for span, label in ((VIDEO_SPAN, "<video>"), (AUDIO_SPAN, "<audio>")):
        if template.text.count(span) != 1:
            raise TemplateError(
                f"template {template.template_id!r} must contain the {label} "
                f"placeholder span {span} exactly once")
    return template.render(reference=reference.strip())


# ---------------------------------------------------------------------------
# Instruction-tuning records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TuningRecord:
    uid: str
    user_prompt: str
    target: str

    def to_json(self) -> dict:
        return {"uid": self.uid, "user_prompt": self.user_prompt, "target": self.target}


@dataclass(frozen=True)
class TuningRejection:
    uid: str
    reasons: tuple[str, ...]


def build_tuning_record(
    sample: "ReferenceSample",
    teacher_output: str,
    *,
    template: PromptTemplate | None = None,
    policy: ChainPolicy = ChainPolicy(),
) -> TuningRecord | TuningRejection:
    """Turn one teacher response into a tuning record, or reject it.

    Strict parsing plus hard policy violations produce rejections with reasons
    suitable for driving re-generation; malformed teacher text never raises.
    """
    template = template or default_user_prompt()
    try:
        parsed = parse_chain(teacher_output, strict=True)
    except ChainParseError as e:
        return TuningRejection(uid=sample.uid, reasons=(f"{type(e).__name__}: {e}",))
    hard = [v for v in validate_chain(parsed, policy) if v.is_hard]
    if hard:
        return TuningRejection(uid=sample.uid, reasons=tuple(v.message for v in hard))
    return TuningRecord(
        uid=sample.uid,
        user_prompt=render_user_prompt(template, sample.reference),
        target=serialize_chain(parsed))


def write_tuning_records(records: Iterable[TuningRecord], path: str | Path) -> int:
    """JSON-lines export; returns the number of rows written."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), ensure_ascii=False) + "\n")
            n += 1
    return n
