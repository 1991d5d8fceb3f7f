"""FastAPI app exposing /v1/think, /v1/ground, /v1/segment, /v1/generate.

Each capability is bound to a handler: scripted mock rules (conformance
testing without weights), an import-string callable, or the optional real
model wrappers from .real. Every response is validated against the wire
schemas before it is sent, and segment masks are cross-checked against the
request's frame dimensions, so an invariant-violating message cannot leave
the server. Threshold filtering never happens here: box/text thresholds are
client policy.
"""

from __future__ import annotations

import importlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .mockspec import MockSpec, UndeclaredLookup
from .schemas import (
    GenerateRequest,
    GenerateResponse,
    GroundRequest,
    GroundResponse,
    SegmentRequest,
    SegmentResponse,
    ThinkRequest,
    ThinkResponse,
)

log = logging.getLogger("tgs_adapters")

CAPABILITIES = ("think", "ground", "segment", "generate")


class AdapterError(Exception):
    def __init__(self, code: str, message: str, status: int = 400):
        super().__init__(message)
        self.code = code
        self.status = status


@dataclass(frozen=True)
class CapabilityBinding:
    kind: str  # "mock" | "import" | "gdino" | "sam"
    target: str | None = None  # import string or model id

    def __post_init__(self):
        if self.kind not in ("mock", "import", "gdino", "sam"):
            raise ValueError(f"unknown binding kind {self.kind!r}")
        if self.kind in ("import", "gdino", "sam") and not self.target:
            raise ValueError(f"binding kind {self.kind!r} needs a target")


@dataclass(frozen=True)
class AdapterConfig:
    mock_spec_path: str | None = None
    media_root: str | None = None
    device: str = "cpu"
    host: str = "127.0.0.1"
    port: int = 8077
    bindings: dict[str, CapabilityBinding] = field(
        default_factory=lambda: {c: CapabilityBinding("mock") for c in CAPABILITIES})

    @classmethod
    def from_json(cls, obj: dict) -> "AdapterConfig":
        bindings = {c: CapabilityBinding("mock") for c in CAPABILITIES}
        for cap, raw in obj.get("bindings", {}).items():
            bindings[cap] = CapabilityBinding(kind=raw.get("kind", "mock"),
                                              target=raw.get("target"))
        return cls(
            mock_spec_path=obj.get("mock_spec"),
            media_root=obj.get("media_root"),
            device=obj.get("device", "cpu"),
            host=obj.get("host", "127.0.0.1"),
            port=obj.get("port", 8077),
            bindings=bindings,
        )

    @classmethod
    def load(cls, path: str | Path) -> "AdapterConfig":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _load_import_target(target: str) -> Callable:
    module_name, _, attr = target.partition(":")
    if not attr:
        raise ValueError(f"import target {target!r} must look like pkg.mod:callable")
    return getattr(importlib.import_module(module_name), attr)


def _resolve_handlers(config: AdapterConfig) -> dict[str, Callable]:
    spec: MockSpec | None = None
    if any(b.kind == "mock" for b in config.bindings.values()):
        if not config.mock_spec_path:
            raise ValueError("mock bindings need mock_spec in the adapter config")
        spec = MockSpec.load(config.mock_spec_path)
    media_root = Path(config.media_root) if config.media_root else None

    handlers: dict[str, Callable] = {}
    for cap in CAPABILITIES:
        binding = config.bindings.get(cap, CapabilityBinding("mock"))
        if binding.kind == "import":
            handlers[cap] = _load_import_target(binding.target)
        elif binding.kind in ("gdino", "sam"):
            from . import real

            if binding.kind == "gdino":
                handlers[cap] = real.GroundingDetector(binding.target, config.device,
                                                       media_root)
            else:
                handlers[cap] = real.BoxSegmenter(binding.target, config.device,
                                                  media_root)
        else:
            handlers[cap] = _mock_handler(cap, spec, media_root)
    return handlers


def _mock_handler(cap: str, spec: MockSpec, media_root: Path | None) -> Callable:
    if cap == "think":
        return lambda req: ThinkResponse(raw_text=spec.think_text(req.uid))
    if cap == "ground":
        return lambda req: GroundResponse(
            candidates=spec.candidates(req.frame.frame, req.query_text))
    if cap == "segment":
        return lambda req: SegmentResponse(
            mask=spec.mask(req.frame.frame, req.box.as_tuple(),
                           req.frame.dims(media_root)))
    return lambda req: GenerateResponse(text=spec.generated(req.uid))


def build_app(config: AdapterConfig) -> FastAPI:
    handlers = _resolve_handlers(config)
    media_root = Path(config.media_root) if config.media_root else None
    app = FastAPI(title="tgs-adapter", docs_url=None, redoc_url=None)

    @app.exception_handler(AdapterError)
    async def _adapter_error(request: Request, exc: AdapterError):
        return JSONResponse(status_code=exc.status,
                            content={"error": {"code": exc.code, "message": str(exc)}})

    def _run(cap: str, request, response_type):
        try:
            response = handlers[cap](request)
        except UndeclaredLookup as e:
            raise AdapterError("undeclared_lookup", str(e), status=404) from e
        except AdapterError:
            raise
        except Exception as e:
            log.exception("%s handler failed", cap)
            raise AdapterError("handler_failure", f"{type(e).__name__}: {e}",
                               status=500) from e
        try:
            # egress gate: revalidate even when the handler built typed models
            validated = response_type.model_validate(response.model_dump())
        except Exception as e:
            raise AdapterError("egress_validation", str(e), status=500) from e
        return validated

    @app.post("/v1/think", response_model=ThinkResponse)
    def think(request: ThinkRequest):
        return _run("think", request, ThinkResponse)

    @app.post("/v1/ground", response_model=GroundResponse)
    def ground(request: GroundRequest):
        response = _run("ground", request, GroundResponse)
        dims = request.frame.dims(media_root)
        if dims is not None:
            w, h = dims
            for c in response.candidates:
                if c.x2 > w or c.y2 > h:
                    raise AdapterError(
                        "egress_validation",
                        f"candidate ({c.x1},{c.y1},{c.x2},{c.y2}) exceeds {w}x{h} frame",
                        status=500)
        return response

    @app.post("/v1/segment", response_model=SegmentResponse)
    def segment(request: SegmentRequest):
        response = _run("segment", request, SegmentResponse)
        dims = request.frame.dims(media_root)
        if dims is not None and (response.mask.w, response.mask.h) != dims:
            raise AdapterError(
                "egress_validation",
                f"mask {response.mask.w}x{response.mask.h} does not match frame "
                f"{dims[0]}x{dims[1]}", status=500)
        return response

    @app.post("/v1/generate", response_model=GenerateResponse)
    def generate(request: GenerateRequest):
        return _run("generate", request, GenerateResponse)

    return app


def serve(config: AdapterConfig) -> None:
    import uvicorn

    uvicorn.run(build_app(config), host=config.host, port=config.port,
                log_level="warning")
