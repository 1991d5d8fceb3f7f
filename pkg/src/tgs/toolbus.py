"""Tool invocation layer for the four external capabilities.

Think, Ground, and Segment drive the per-sample workflow; Generate serves the
benchmark-construction path. Every capability is reachable through either a
deterministic in-process scripted mock or a remote HTTP adapter speaking the
JSON wire protocol (endpoints /v1/think, /v1/ground, /v1/segment,
/v1/generate). The two are behaviorally interchangeable: transport-layer
validation here guarantees downstream code never observes an
invariant-violating box or mask, whichever backend produced it.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol

from .core import (
    FrameMask,
    FrameRef,
    GroundedBox,
    MaskCodecError,
    mask_from_box,
    rle_decode,
    rle_encode,
)

DEFAULT_TIMEOUT_S = 60.0
DEFAULT_RETRIES = 1

ENV_URLS = {
    "think": "TGS_THINK_URL",
    "ground": "TGS_GROUND_URL",
    "segment": "TGS_SEGMENT_URL",
    "generate": "TGS_GENERATE_URL",
}


# ---------------------------------------------------------------------------
# Error taxonomy
# ---------------------------------------------------------------------------


class ToolBusError(Exception):
    """Base for all tool-invocation failures."""

    def __init__(self, message: str, *, capability: str | None = None):
        super().__init__(message)
        self.capability = capability


class BackendUnavailableError(ToolBusError):
    pass


class ToolTimeoutError(ToolBusError):
    pass


class TransportFormatError(ToolBusError):
    """Response could not be decoded against the wire schema."""


class ResponseValidationError(ToolBusError):
    """Decoded response violates a domain invariant (bad box, wrong mask dims)."""


class MockSpecError(ToolBusError):
    """A scripted mock was asked for something its spec does not declare."""


# ---------------------------------------------------------------------------
# Requests / responses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThinkRequest:
    uid: str
    rendered_prompt: str
    frame_refs: tuple[FrameRef, ...]
    audio_ref: str | None = None


@dataclass(frozen=True)
class ThinkResponse:
    raw_text: str


@dataclass(frozen=True)
class GroundRequest:
    frame_ref: FrameRef
    query_text: str


@dataclass(frozen=True)
class GroundResponse:
    candidates: tuple[GroundedBox, ...]


@dataclass(frozen=True)
class SegmentRequest:
    frame_ref: FrameRef
    box: tuple[int, int, int, int]


@dataclass(frozen=True)
class SegmentResponse:
    mask: FrameMask


@dataclass(frozen=True)
class GenerateRequest:
    uid: str
    prompt: str


@dataclass(frozen=True)
class GenerateResponse:
    text: str


class ThinkBackend(Protocol):
    tool_id: str

    def think(self, request: ThinkRequest) -> ThinkResponse: ...


class GroundBackend(Protocol):
    tool_id: str

    def ground(self, request: GroundRequest) -> GroundResponse: ...


class SegmentBackend(Protocol):
    tool_id: str

    def segment(self, request: SegmentRequest) -> SegmentResponse: ...


class GenerateBackend(Protocol):
    tool_id: str

    def generate(self, request: GenerateRequest) -> GenerateResponse: ...


# ---------------------------------------------------------------------------
# Scripted mocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScriptedMockSpec:
    """Canned responses keyed by request identity.

    ``think``: uid -> raw chain text.
    ``ground``: frame_id -> query text -> candidate boxes.
    ``segment_rule``: "box_interior" (mask = box interior at frame size) or
    "cases" with ``segment_cases``: frame_id -> "x1,y1,x2,y2" -> mask.
    ``generate``: uid -> generated text.

    Lookups are total over the declared corpus; anything undeclared raises
    :class:`MockSpecError` instead of fabricating data.
    """

    think: Mapping[str, str] = field(default_factory=dict)
    ground: Mapping[str, Mapping[str, tuple[GroundedBox, ...]]] = field(default_factory=dict)
    segment_rule: str = "box_interior"
    segment_cases: Mapping[str, Mapping[str, FrameMask]] = field(default_factory=dict)
    generate: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.segment_rule not in ("box_interior", "cases"):
            raise ValueError(f"unknown segment rule {self.segment_rule!r}")
        object.__setattr__(self, "think", dict(self.think))
        object.__setattr__(
            self, "ground",
            {f: {q: tuple(c) for q, c in m.items()} for f, m in self.ground.items()})
        object.__setattr__(
            self, "segment_cases",
            {f: dict(m) for f, m in self.segment_cases.items()})
        object.__setattr__(self, "generate", dict(self.generate))

    def to_json(self) -> dict:
        return {
            "think": dict(self.think),
            "ground": {
                f: {q: [b.to_json() for b in cands] for q, cands in byq.items()}
                for f, byq in self.ground.items()
            },
            "segment": (
                {"rule": "box_interior"} if self.segment_rule == "box_interior"
                else {"rule": "cases", "cases": {
                    f: {k: rle_encode(m) for k, m in byb.items()}
                    for f, byb in self.segment_cases.items()
                }}
            ),
            "generate": dict(self.generate),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ScriptedMockSpec":
        seg = obj.get("segment", {"rule": "box_interior"})
        rule = seg.get("rule", "box_interior")
        cases = {}
        if rule == "cases":
            cases = {
                f: {k: rle_decode(payload) for k, payload in byb.items()}
                for f, byb in seg.get("cases", {}).items()
            }
        return cls(
            think=dict(obj.get("think", {})),
            ground={
                f: {q: tuple(GroundedBox.from_json(b) for b in cands)
                    for q, cands in byq.items()}
                for f, byq in obj.get("ground", {}).items()
            },
            segment_rule=rule,
            segment_cases=cases,
            generate=dict(obj.get("generate", {})),
        )

    @classmethod
    def load(cls, path: str | Path) -> "ScriptedMockSpec":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _box_key(box: tuple[int, int, int, int]) -> str:
    return ",".join(str(int(v)) for v in box)


@dataclass(frozen=True)
class MockThinkBackend:
    spec: ScriptedMockSpec
    tool_id: str = "mock:think"

    def think(self, request: ThinkRequest) -> ThinkResponse:
        try:
            return ThinkResponse(raw_text=self.spec.think[request.uid])
        except KeyError:
            raise MockSpecError(
                f"mock spec declares no think text for uid {request.uid!r}",
                capability="think") from None


@dataclass(frozen=True)
class MockGroundBackend:
    spec: ScriptedMockSpec
    tool_id: str = "mock:ground"

    def ground(self, request: GroundRequest) -> GroundResponse:
        by_query = self.spec.ground.get(request.frame_ref.frame_id)
        if by_query is None or request.query_text not in by_query:
            raise MockSpecError(
                f"mock spec declares no candidates for frame "
                f"{request.frame_ref.frame_id!r} query {request.query_text!r}",
                capability="ground")
        return GroundResponse(candidates=by_query[request.query_text])


@dataclass(frozen=True)
class MockSegmentBackend:
    spec: ScriptedMockSpec
    tool_id: str = "mock:segment"

    def segment(self, request: SegmentRequest) -> SegmentResponse:
        if self.spec.segment_rule == "box_interior":
            w, h = request.frame_ref.size()
            return SegmentResponse(mask=mask_from_box(w, h, request.box))
        by_box = self.spec.segment_cases.get(request.frame_ref.frame_id, {})
        key = _box_key(request.box)
        if key not in by_box:
            raise MockSpecError(
                f"mock spec declares no mask for frame {request.frame_ref.frame_id!r} "
                f"box {key}", capability="segment")
        return SegmentResponse(mask=by_box[key])


@dataclass(frozen=True)
class MockGenerateBackend:
    spec: ScriptedMockSpec
    tool_id: str = "mock:generate"

    def generate(self, request: GenerateRequest) -> GenerateResponse:
        try:
            return GenerateResponse(text=self.spec.generate[request.uid])
        except KeyError:
            raise MockSpecError(
                f"mock spec declares no generation for uid {request.uid!r}",
                capability="generate") from None


# ---------------------------------------------------------------------------
# Remote HTTP backends
# ---------------------------------------------------------------------------


def _http_post(url: str, payload: dict, *, capability: str,
               timeout_s: float, retries: int) -> dict:
    import requests

    last: Exception | None = None
    for _ in range(retries + 1):
        try:
            resp = requests.post(url, json=payload, timeout=timeout_s)
        except requests.Timeout as e:
            last = ToolTimeoutError(f"{capability} call timed out after {timeout_s}s",
                                    capability=capability)
            last.__cause__ = e
            continue
        except requests.ConnectionError as e:
            last = BackendUnavailableError(f"{capability} backend unreachable at {url}: {e}",
                                           capability=capability)
            last.__cause__ = e
            continue
        return _decode_response(resp, capability=capability)
    assert last is not None
    raise last


def _decode_response(resp, *, capability: str) -> dict:
    try:
        body = resp.json()
    except ValueError:
        raise TransportFormatError(
            f"{capability} backend returned non-JSON body (HTTP {resp.status_code})",
            capability=capability) from None
    if resp.status_code >= 400 or "error" in body:
        err = body.get("error") if isinstance(body, dict) else None
        code = (err or {}).get("code", f"http_{resp.status_code}")
        message = (err or {}).get("message", resp.text[:200])
        if code == "undeclared_lookup":
            raise MockSpecError(f"{capability}: {message}", capability=capability)
        if code == "unavailable" or resp.status_code == 503:
            raise BackendUnavailableError(f"{capability}: {message}", capability=capability)
        raise TransportFormatError(
            f"{capability} backend error [{code}]: {message}", capability=capability)
    if not isinstance(body, dict):
        raise TransportFormatError(
            f"{capability} backend returned a non-object body", capability=capability)
    return body


@dataclass(frozen=True)
class RemoteCapability:
    """One remote endpoint plus its transport policy."""

    base_url: str
    capability: str
    frame_mode: str = "ref"  # "ref" or "b64"
    timeout_s: float = DEFAULT_TIMEOUT_S
    retries: int = DEFAULT_RETRIES

    @property
    def tool_id(self) -> str:
        return f"remote:{self.base_url.rstrip('/')}/v1/{self.capability}"

    def post(self, payload: dict) -> dict:
        url = f"{self.base_url.rstrip('/')}/v1/{self.capability}"
        return _http_post(url, payload, capability=self.capability,
                          timeout_s=self.timeout_s, retries=self.retries)


@dataclass(frozen=True)
class RemoteThinkBackend(RemoteCapability):
    capability: str = "think"

    def think(self, request: ThinkRequest) -> ThinkResponse:
        body = self.post({
            "uid": request.uid,
            "rendered_prompt": request.rendered_prompt,
            "frame_refs": [f.to_payload(self.frame_mode) for f in request.frame_refs],
            "audio_ref": request.audio_ref,
        })
        if "raw_text" not in body or not isinstance(body["raw_text"], str):
            raise TransportFormatError("think response missing raw_text",
                                       capability="think")
        return ThinkResponse(raw_text=body["raw_text"])


@dataclass(frozen=True)
class RemoteGroundBackend(RemoteCapability):
    capability: str = "ground"

    def ground(self, request: GroundRequest) -> GroundResponse:
        body = self.post({
            "frame": request.frame_ref.to_payload(self.frame_mode),
            "query_text": request.query_text,
        })
        if "candidates" not in body or not isinstance(body["candidates"], list):
            raise TransportFormatError("ground response missing candidates list",
                                       capability="ground")
        try:
            cands = tuple(GroundedBox.from_json(c) for c in body["candidates"])
        except (ValueError, TypeError) as e:
            raise ResponseValidationError(f"ground candidate rejected: {e}",
                                          capability="ground") from e
        return GroundResponse(candidates=cands)


@dataclass(frozen=True)
class RemoteSegmentBackend(RemoteCapability):
    capability: str = "segment"

    def segment(self, request: SegmentRequest) -> SegmentResponse:
        x1, y1, x2, y2 = request.box
        body = self.post({
            "frame": request.frame_ref.to_payload(self.frame_mode),
            "box": {"x1": x1, "y1": y1, "x2": x2, "y2": y2},
        })
        if "mask" not in body or not isinstance(body["mask"], dict):
            raise TransportFormatError("segment response missing mask",
                                       capability="segment")
        try:
            mask = rle_decode(body["mask"])
        except MaskCodecError as e:
            raise TransportFormatError(f"segment mask undecodable: {e}",
                                       capability="segment") from e
        return SegmentResponse(mask=mask)


@dataclass(frozen=True)
class RemoteGenerateBackend(RemoteCapability):
    capability: str = "generate"

    def generate(self, request: GenerateRequest) -> GenerateResponse:
        body = self.post({"uid": request.uid, "prompt": request.prompt})
        if "text" not in body or not isinstance(body["text"], str):
            raise TransportFormatError("generate response missing text",
                                       capability="generate")
        return GenerateResponse(text=body["text"])


# ---------------------------------------------------------------------------
# Invocation wrappers (precondition + response validation)
# ---------------------------------------------------------------------------


def invoke_think(backend: ThinkBackend, request: ThinkRequest) -> ThinkResponse:
    """Transport only; parsing the returned text is the caller's concern."""
    if not request.rendered_prompt.strip():
        raise ValueError("rendered_prompt must be non-empty")
    return backend.think(request)


def invoke_ground(backend: GroundBackend, request: GroundRequest) -> GroundResponse:
    if not request.query_text.strip():
        raise ValueError("query_text must be non-empty")
    response = backend.ground(request)
    w, h = (request.frame_ref.width, request.frame_ref.height)
    if w is not None and h is not None:
        for c in response.candidates:
            if not c.fits(w, h):
                raise ResponseValidationError(
                    f"candidate box {c.coords} exceeds {w}x{h} frame "
                    f"{request.frame_ref.frame_id!r}", capability="ground")
    return response


def invoke_segment(backend: SegmentBackend, request: SegmentRequest) -> SegmentResponse:
    x1, y1, x2, y2 = request.box
    w, h = request.frame_ref.size()
    if not (0 <= x1 < x2 <= w and 0 <= y1 < y2 <= h):
        raise ValueError(
            f"box {request.box} violates coordinate invariants for {w}x{h} frame")
    response = backend.segment(request)
    if (response.mask.width, response.mask.height) != (w, h):
        raise ResponseValidationError(
            f"segment mask is {response.mask.width}x{response.mask.height}, "
            f"frame {request.frame_ref.frame_id!r} is {w}x{h}", capability="segment")
    return response


def invoke_generate(backend: GenerateBackend, request: GenerateRequest) -> GenerateResponse:
    if not request.prompt.strip():
        raise ValueError("prompt must be non-empty")
    return backend.generate(request)


# ---------------------------------------------------------------------------
# Backend bundles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ToolBindings:
    """Live backend handles for a pipeline run."""

    think: ThinkBackend
    ground: GroundBackend
    segment: SegmentBackend
    generate: GenerateBackend | None = None

    @property
    def tool_ids(self) -> dict[str, str]:
        ids = {"think": self.think.tool_id, "ground": self.ground.tool_id,
               "segment": self.segment.tool_id}
        if self.generate is not None:
            ids["generate"] = self.generate.tool_id
        return ids


def mock_bindings(spec: ScriptedMockSpec) -> ToolBindings:
    return ToolBindings(
        think=MockThinkBackend(spec),
        ground=MockGroundBackend(spec),
        segment=MockSegmentBackend(spec),
        generate=MockGenerateBackend(spec),
    )


def remote_bindings(urls: Mapping[str, str], *, frame_mode: str = "ref",
                    timeout_s: float = DEFAULT_TIMEOUT_S,
                    retries: int = DEFAULT_RETRIES) -> ToolBindings:
    """Bind each capability to a base URL. Missing entries fall back to the
    TGS_*_URL environment variables."""

    def url_for(cap: str) -> str | None:
        return urls.get(cap) or os.environ.get(ENV_URLS[cap])

    missing = [cap for cap in ("think", "ground", "segment") if not url_for(cap)]
    if missing:
        raise ValueError(
            f"no endpoint configured for {missing}; set URLs in the config or the "
            f"{[ENV_URLS[c] for c in missing]} environment variables")
    kwargs = dict(frame_mode=frame_mode, timeout_s=timeout_s, retries=retries)
    gen_url = url_for("generate")
    return ToolBindings(
        think=RemoteThinkBackend(base_url=url_for("think"), **kwargs),
        ground=RemoteGroundBackend(base_url=url_for("ground"), **kwargs),
        segment=RemoteSegmentBackend(base_url=url_for("segment"), **kwargs),
        generate=RemoteGenerateBackend(base_url=gen_url, **kwargs) if gen_url else None,
    )
