"""Think-Ground-Segment toolkit for referring audio-visual segmentation."""

from .core import (
    FrameMask,
    FrameRef,
    GroundedBox,
    MaskFormat,
    PipelineTrace,
    PromptType,
    ReferenceSample,
    Split,
    all_background,
    decode_mask,
    encode_mask,
    mask_area,
)
from .metrics import EvalUnit, aggregate, boundary_f, jaccard, match_category, null_s
from .pipeline import (
    BoxSelection,
    PipelineConfig,
    SampleResult,
    SampleStatus,
    filter_and_select,
    run_batch,
    run_sample,
    select_prompt_text,
)
from .refchain import (
    ChainPolicy,
    PromptTemplate,
    ReasoningChain,
    build_tuning_record,
    chain,
    parse_chain,
    render_user_prompt,
    serialize_chain,
    validate_chain,
)
from .toolbus import ScriptedMockSpec, ToolBindings, mock_bindings, remote_bindings

__version__ = "0.1.0"

__all__ = [
    "FrameMask", "FrameRef", "GroundedBox", "MaskFormat", "PipelineTrace",
    "PromptType", "ReferenceSample", "Split", "all_background", "decode_mask",
    "encode_mask", "mask_area",
    "EvalUnit", "aggregate", "boundary_f", "jaccard", "match_category", "null_s",
    "BoxSelection", "PipelineConfig", "SampleResult", "SampleStatus",
    "filter_and_select", "run_batch", "run_sample", "select_prompt_text",
    "ChainPolicy", "PromptTemplate", "ReasoningChain", "build_tuning_record",
    "chain", "parse_chain", "render_user_prompt", "serialize_chain", "validate_chain",
    "ScriptedMockSpec", "ToolBindings", "mock_bindings", "remote_bindings",
]
