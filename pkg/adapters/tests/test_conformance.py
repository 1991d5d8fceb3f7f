"""Wire conformance: the primary pipeline must not be able to tell the mock
server from its in-process mocks.

The fixture corpus runs twice, once over each transport, and the results are
compared by their deterministic fingerprints (masks, boxes, statuses, parsed
objects; wall-clock timings and backend ids excluded by construction).
"""

from __future__ import annotations

import json
from pathlib import Path

import pytest
import requests

from tgs.benchkit import load_manifest, manifest_samples
from tgs.pipeline import PipelineConfig, result_fingerprint, run_batch
from tgs.toolbus import ScriptedMockSpec, mock_bindings, remote_bindings
from tgs_adapters.schemas import GroundResponse, SegmentResponse, ThinkResponse

FIXTURES = Path(__file__).resolve().parents[2] / "fixtures"


@pytest.fixture(scope="module")
def corpus():
    manifest_path = FIXTURES / "manifest.json"
    manifest = load_manifest(manifest_path)
    return manifest_samples(manifest, manifest_path)


def _remote_bus(base_url: str, frame_mode: str = "ref"):
    urls = {cap: base_url for cap in ("think", "ground", "segment", "generate")}
    return remote_bindings(urls, frame_mode=frame_mode, timeout_s=10, retries=0)


class TestWireConformance:
    def test_results_bit_identical_to_in_process_mocks(self, wire_server, corpus):
        cfg = PipelineConfig()
        in_process = mock_bindings(ScriptedMockSpec.load(FIXTURES / "mockspec.json"))
        local_results, local_summary = run_batch(corpus, cfg, in_process)
        wire_results, wire_summary = run_batch(corpus, cfg, _remote_bus(wire_server))

        assert local_summary.by_status == wire_summary.by_status == {"ok": 6}
        assert ([result_fingerprint(r) for r in local_results]
                == [result_fingerprint(r) for r in wire_results])

    def test_b64_frame_mode_equivalent(self, wire_server, corpus):
        cfg = PipelineConfig()
        ref_results, _ = run_batch(corpus, cfg, _remote_bus(wire_server, "ref"))
        b64_results, _ = run_batch(corpus, cfg, _remote_bus(wire_server, "b64"))
        assert ([result_fingerprint(r) for r in ref_results]
                == [result_fingerprint(r) for r in b64_results])

    def test_every_egress_message_schema_validates(self, wire_server):
        frame = {"mode": "ref", "frame": "frames/s2_0.png", "width": 8, "height": 8}
        think = requests.post(f"{wire_server}/v1/think",
                              json={"uid": "s2", "rendered_prompt": "p"}, timeout=10)
        ThinkResponse.model_validate(think.json())
        ground = requests.post(f"{wire_server}/v1/ground",
                               json={"frame": frame, "query_text": "piano"}, timeout=10)
        GroundResponse.model_validate(ground.json())
        segment = requests.post(
            f"{wire_server}/v1/segment",
            json={"frame": frame, "box": {"x1": 2, "y1": 2, "x2": 6, "y2": 6}},
            timeout=10)
        SegmentResponse.model_validate(segment.json())

    def test_undeclared_uid_fails_identically(self, wire_server, corpus):
        # drop one think script locally; the wire spec is complete, so instead
        # query a uid neither side declares and compare the failure statuses
        from dataclasses import replace

        cfg = PipelineConfig()
        ghost = [replace(corpus[0], uid="ghost")]
        local, _ = run_batch(ghost, cfg, mock_bindings(
            ScriptedMockSpec.load(FIXTURES / "mockspec.json")))
        wire, _ = run_batch(ghost, cfg, _remote_bus(wire_server))
        assert local[0].status == wire[0].status
        assert local[0].failed_stage == wire[0].failed_stage == "think"
