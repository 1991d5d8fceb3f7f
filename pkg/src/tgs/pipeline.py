"""Think-Ground-Segment orchestration.

Per sample: render the user prompt, call the think tool, parse the chain
leniently, pick the grounding query (fine-grained / simplified description or
the raw reference), then per frame: ground, threshold-filter, select one box,
and segment it. A null chain, an empty candidate list, or a filtered-out
frame all fall back to the all-background mask. Tool failures downgrade the
sample to a failure status with all-background masks; a batch never aborts on
a single sample.
"""

from __future__ import annotations

import enum
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import (
    FrameMask,
    GroundedBox,
    PipelineTrace,
    PromptType,
    ReferenceSample,
    all_background,
)
from .refchain import (
    ChainParseError,
    PromptTemplate,
    ReasoningChain,
    default_user_prompt,
    parse_chain,
    render_user_prompt,
)
from .toolbus import (
    GroundRequest,
    ScriptedMockSpec,
    SegmentRequest,
    ThinkRequest,
    ToolBindings,
    ToolBusError,
    invoke_ground,
    invoke_segment,
    invoke_think,
    mock_bindings,
    remote_bindings,
)


class BoxSelection(enum.Enum):
    HIGHEST_BOX_SCORE = "box_score"
    HIGHEST_PRODUCT = "product"

    @classmethod
    def parse(cls, value: str) -> "BoxSelection":
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(
                f"unknown box selection {value!r} (expected box_score/product)") from None


class SampleStatus(enum.Enum):
    OK = "ok"
    THINK_FAILED = "think_failed"
    PARSE_FAILED = "parse_failed"
    TOOL_ERROR = "tool_error"


class NullObjectType:
    """Sentinel: the chain says the referred object is absent."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NULL_OBJECT"


NULL_OBJECT = NullObjectType()


@dataclass(frozen=True)
class BackendSpec:
    """Declarative backend binding, mirrored in the JSON config file."""

    kind: str = "mock"  # "mock" | "remote"
    mock_spec_path: str | None = None
    urls: Mapping[str, str] = field(default_factory=dict)
    frame_mode: str = "ref"
    timeout_s: float = 60.0
    retries: int = 1

    def __post_init__(self):
        if self.kind not in ("mock", "remote"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        object.__setattr__(self, "urls", dict(self.urls))


@dataclass(frozen=True)
class PipelineConfig:
    """Run parameters. Threshold defaults follow the reference operating point
    (box 0.1, text 0.25); comparisons are inclusive."""

    tau_bbox: float = 0.1
    tau_text: float = 0.25
    prompt_type: PromptType = PromptType.S_OBJECT
    box_selection: BoxSelection = BoxSelection.HIGHEST_BOX_SCORE
    backends: BackendSpec = field(default_factory=BackendSpec)
    workers: int = 1

    def __post_init__(self):
        for name in ("tau_bbox", "tau_text"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")

    def to_json(self) -> dict:
        return {
            "tau_bbox": self.tau_bbox,
            "tau_text": self.tau_text,
            "prompt_type": self.prompt_type.value,
            "box_selection": self.box_selection.value,
            "workers": self.workers,
            "backends": {
                "kind": self.backends.kind,
                "mock_spec": self.backends.mock_spec_path,
                "urls": dict(self.backends.urls),
                "frame_mode": self.backends.frame_mode,
                "timeout_s": self.backends.timeout_s,
                "retries": self.backends.retries,
            },
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "PipelineConfig":
        b = obj.get("backends", {})
        return cls(
            tau_bbox=obj.get("tau_bbox", 0.1),
            tau_text=obj.get("tau_text", 0.25),
            prompt_type=PromptType.parse(obj.get("prompt_type", "s")),
            box_selection=BoxSelection.parse(obj.get("box_selection", "box_score")),
            workers=obj.get("workers", 1),
            backends=BackendSpec(
                kind=b.get("kind", "mock"),
                mock_spec_path=b.get("mock_spec"),
                urls=b.get("urls", {}),
                frame_mode=b.get("frame_mode", "ref"),
                timeout_s=b.get("timeout_s", 60.0),
                retries=b.get("retries", 1),
            ),
        )

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def build_bindings(cfg: PipelineConfig, base_dir: str | Path | None = None) -> ToolBindings:
    spec = cfg.backends
    if spec.kind == "mock":
        if not spec.mock_spec_path:
            raise ValueError("mock backends need backends.mock_spec in the config")
        path = Path(spec.mock_spec_path)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return mock_bindings(ScriptedMockSpec.load(path))
    return remote_bindings(spec.urls, frame_mode=spec.frame_mode,
                           timeout_s=spec.timeout_s, retries=spec.retries)


@dataclass(frozen=True)
class SampleResult:
    uid: str
    masks: tuple[FrameMask, ...]
    trace: PipelineTrace
    status: SampleStatus
    failed_stage: str | None = None
    error: str | None = None

    def to_trace_json(self) -> dict:
        row = self.trace.to_json()
        row["status"] = self.status.value
        row["failed_stage"] = self.failed_stage
        row["error"] = self.error
        return row


def result_fingerprint(result: SampleResult) -> tuple:
    """Deterministic identity of a result: everything except wall-clock
    timings and backend identifiers. Used by scheduling-determinism and wire
    conformance checks."""
    return (
        result.uid,
        result.status.value,
        result.failed_stage,
        result.trace.reasoning,
        None if result.trace.parsed is None else (
            result.trace.parsed.f_object, result.trace.parsed.s_object),
        result.trace.prompt_used.value,
        result.trace.flags,
        tuple(None if b is None else (b.coords, b.box_score, b.text_score)
              for b in result.trace.boxes),
        tuple((m.width, m.height, m.bits.tobytes()) for m in result.masks),
    )


# ---------------------------------------------------------------------------
# Stage logic
# ---------------------------------------------------------------------------


def filter_and_select(candidates: Sequence[GroundedBox],
                      cfg: PipelineConfig) -> GroundedBox | None:
    """Drop candidates below either threshold (inclusive comparisons keep
    exact-threshold scores), then pick the best survivor; ties break toward
    the lexicographically smallest coordinates."""
    survivors = [c for c in candidates
                 if c.box_score >= cfg.tau_bbox and c.text_score >= cfg.tau_text]
    if not survivors:
        return None
    if cfg.box_selection is BoxSelection.HIGHEST_PRODUCT:
        def key(c: GroundedBox) -> float:
            return c.box_score * c.text_score
    else:
        def key(c: GroundedBox) -> float:
            return c.box_score
    return min(survivors, key=lambda c: (-key(c), c.x1, c.y1, c.x2, c.y2))


def select_prompt_text(chain: ReasoningChain, cfg: PipelineConfig,
                       reference: str) -> str | NullObjectType:
    """The grounding query per config, or NULL_OBJECT for null-marker chains
    (regardless of prompt type: an absent object is absent in every mode)."""
    if chain.is_null:
        return NULL_OBJECT
    if cfg.prompt_type is PromptType.RAW_REFERENCE:
        return reference
    text = chain.f_object if cfg.prompt_type is PromptType.F_OBJECT else chain.s_object
    if text is None:
        # one-sided null from drifted model output: treat as absent
        return NULL_OBJECT
    return text


def _background_masks(sizes: Sequence[tuple[int, int]]) -> tuple[FrameMask, ...]:
    return tuple(all_background(w, h) for w, h in sizes)


def run_sample(sample: ReferenceSample, cfg: PipelineConfig, bus: ToolBindings,
               *, template: PromptTemplate | None = None) -> SampleResult:
    """Execute think -> ground -> segment for one sample.

    Frame dimensions must be resolvable (synthetic dims or readable files);
    that is an input-validation failure and raises. Tool failures are caught
    and downgraded to a failure status with all-background masks.
    """
    frames = tuple(f.resolved() for f in sample.frames)
    sizes = [f.size() for f in frames]
    n = len(frames)
    timings: dict[str, float] = {}
    template = template or default_user_prompt()

    def failed(status: SampleStatus, stage: str, error: str, *, reasoning: str = "",
               parsed: ReasoningChain | None = None,
               boxes: tuple[GroundedBox | None, ...] | None = None) -> SampleResult:
        trace = PipelineTrace(
            uid=sample.uid, reasoning=reasoning, parsed=parsed,
            prompt_used=cfg.prompt_type,
            boxes=boxes if boxes is not None else (None,) * n,
            timings=timings, tool_ids=bus.tool_ids,
            flags=() if parsed is None else parsed.flags)
        return SampleResult(uid=sample.uid, masks=_background_masks(sizes), trace=trace,
                            status=status, failed_stage=stage, error=error)

    prompt = render_user_prompt(template, sample.reference)
    t0 = time.perf_counter()
    try:
        think_resp = invoke_think(bus.think, ThinkRequest(
            uid=sample.uid, rendered_prompt=prompt, frame_refs=frames,
            audio_ref=sample.audio))
    except ToolBusError as e:
        timings["think"] = time.perf_counter() - t0
        return failed(SampleStatus.THINK_FAILED, "think", f"{type(e).__name__}: {e}")
    timings["think"] = time.perf_counter() - t0

    raw = think_resp.raw_text
    try:
        parsed = parse_chain(raw, strict=False)
    except ChainParseError as e:
        return failed(SampleStatus.PARSE_FAILED, "parse", f"{type(e).__name__}: {e}",
                      reasoning=raw)

    query = select_prompt_text(parsed, cfg, sample.reference)
    boxes: list[GroundedBox | None] = []
    masks: list[FrameMask] = []
    if isinstance(query, NullObjectType):
        boxes = [None] * n
        masks = list(_background_masks(sizes))
        timings["ground"] = 0.0
        timings["segment"] = 0.0
    else:
        t_ground = 0.0
        t_segment = 0.0
        for frame, (w, h) in zip(frames, sizes):
            t0 = time.perf_counter()
            try:
                ground_resp = invoke_ground(bus.ground,
                                            GroundRequest(frame_ref=frame, query_text=query))
            except ToolBusError as e:
                timings["ground"] = t_ground + (time.perf_counter() - t0)
                timings["segment"] = t_segment
                return failed(SampleStatus.TOOL_ERROR, "ground",
                              f"{type(e).__name__}: {e}", reasoning=raw, parsed=parsed)
            t_ground += time.perf_counter() - t0

            box = filter_and_select(ground_resp.candidates, cfg)
            boxes.append(box)
            if box is None:
                masks.append(all_background(w, h))
                continue
            t0 = time.perf_counter()
            try:
                seg_resp = invoke_segment(bus.segment,
                                          SegmentRequest(frame_ref=frame, box=box.coords))
            except ToolBusError as e:
                timings["ground"] = t_ground
                timings["segment"] = t_segment + (time.perf_counter() - t0)
                return failed(SampleStatus.TOOL_ERROR, "segment",
                              f"{type(e).__name__}: {e}", reasoning=raw, parsed=parsed)
            t_segment += time.perf_counter() - t0
            masks.append(seg_resp.mask)
        timings["ground"] = t_ground
        timings["segment"] = t_segment

    trace = PipelineTrace(
        uid=sample.uid, reasoning=raw, parsed=parsed, prompt_used=cfg.prompt_type,
        boxes=tuple(boxes), timings=timings, tool_ids=bus.tool_ids, flags=parsed.flags)
    return SampleResult(uid=sample.uid, masks=tuple(masks), trace=trace,
                        status=SampleStatus.OK)


@dataclass(frozen=True)
class BatchSummary:
    total: int
    by_status: dict[str, int]

    def to_json(self) -> dict:
        return {"total": self.total, "by_status": dict(sorted(self.by_status.items()))}


def run_batch(samples: Sequence[ReferenceSample], cfg: PipelineConfig,
              bus: ToolBindings | None = None,
              *, template: PromptTemplate | None = None,
              config_dir: str | Path | None = None) -> tuple[list[SampleResult], BatchSummary]:
    """Run every sample; output order always matches input order.

    Frame sizes are resolved up front so malformed inputs fail fast; after
    that, any per-sample exception downgrades that sample instead of aborting
    the batch.
    """
    if bus is None:
        bus = build_bindings(cfg, base_dir=config_dir)
    resolved = [replace(s, frames=tuple(f.resolved() for f in s.frames)) for s in samples]

    def run_one(sample: ReferenceSample) -> SampleResult:
        try:
            return run_sample(sample, cfg, bus, template=template)
        except Exception as e:  # defensive: keep the batch alive
            sizes = [f.size() for f in sample.frames]
            trace = PipelineTrace(
                uid=sample.uid, reasoning="", parsed=None, prompt_used=cfg.prompt_type,
                boxes=(None,) * len(sample.frames), timings={}, tool_ids=bus.tool_ids)
            return SampleResult(
                uid=sample.uid, masks=_background_masks(sizes), trace=trace,
                status=SampleStatus.TOOL_ERROR, failed_stage="internal",
                error=f"{type(e).__name__}: {e}")

    if cfg.workers == 1 or len(resolved) <= 1:
        results = [run_one(s) for s in resolved]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_one, resolved))
    counts: dict[str, int] = {}
    for r in results:
        counts[r.status.value] = counts.get(r.status.value, 0) + 1
    return results, BatchSummary(total=len(results), by_status=counts)


# ---------------------------------------------------------------------------
# On-disk outputs
# ---------------------------------------------------------------------------


def write_masks(result: SampleResult, out_dir: str | Path) -> list[Path]:
    """Per-uid directory of frame-indexed portable bitmaps."""
    from .core import save_mask

    target = Path(out_dir) / result.uid
    target.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, mask in enumerate(result.masks):
        p = target / f"frame_{i:05d}.png"
        save_mask(mask, p)
        paths.append(p)
    return paths


def write_traces(results: Iterable[SampleResult], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_trace_json(), ensure_ascii=False) + "\n")
            n += 1
    return n
