from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from tgs.core import FrameRef, GroundedBox, all_background, mask_area, mask_from_box
from tgs.toolbus import (
    BackendUnavailableError,
    GenerateRequest,
    GroundRequest,
    MockSpecError,
    RemoteGroundBackend,
    RemoteSegmentBackend,
    RemoteThinkBackend,
    ResponseValidationError,
    ScriptedMockSpec,
    SegmentRequest,
    ThinkRequest,
    ToolTimeoutError,
    TransportFormatError,
    invoke_generate,
    invoke_ground,
    invoke_segment,
    invoke_think,
    mock_bindings,
)


def spec_fixture() -> ScriptedMockSpec:
    return ScriptedMockSpec(
        think={"u1": "<answer><f_object>a piano</f_object><s_object>piano</s_object></answer>"},
        ground={"f3": {"guitar": (GroundedBox(10, 20, 110, 220, box_score=0.9,
                                              text_score=0.8),)}},
        generate={"u1": '{"complex_ref": "the resonant thing"}'},
    )


class TestMocks:
    def test_think_echoes_script(self):
        bus = mock_bindings(spec_fixture())
        resp = invoke_think(bus.think, ThinkRequest(
            uid="u1", rendered_prompt="p", frame_refs=()))
        assert "piano" in resp.raw_text

    def test_think_undeclared_uid(self):
        bus = mock_bindings(spec_fixture())
        with pytest.raises(MockSpecError):
            invoke_think(bus.think, ThinkRequest(uid="nope", rendered_prompt="p",
                                                 frame_refs=()))

    def test_ground_scripted_candidate(self):
        bus = mock_bindings(spec_fixture())
        frame = FrameRef.synthetic("f3", 224, 224)
        resp = invoke_ground(bus.ground, GroundRequest(frame_ref=frame, query_text="guitar"))
        assert resp.candidates[0].coords == (10, 20, 110, 220)

    def test_ground_empty_query_rejected(self):
        bus = mock_bindings(spec_fixture())
        frame = FrameRef.synthetic("f3", 224, 224)
        with pytest.raises(ValueError):
            invoke_ground(bus.ground, GroundRequest(frame_ref=frame, query_text="  "))

    def test_ground_candidate_exceeding_frame_rejected(self):
        bus = mock_bindings(spec_fixture())
        frame = FrameRef.synthetic("f3", 100, 100)  # box x2=110 exceeds
        with pytest.raises(ResponseValidationError):
            invoke_ground(bus.ground, GroundRequest(frame_ref=frame, query_text="guitar"))

    def test_segment_box_interior_area(self):
        bus = mock_bindings(spec_fixture())
        frame = FrameRef.synthetic("f3", 224, 224)
        resp = invoke_segment(bus.segment, SegmentRequest(frame_ref=frame,
                                                          box=(10, 20, 110, 220)))
        assert mask_area(resp.mask) == (110 - 10) * (220 - 20)

    def test_segment_degenerate_box_never_sent(self):
        calls = []

        class Recorder:
            tool_id = "recorder"

            def segment(self, request):
                calls.append(request)

        frame = FrameRef.synthetic("f3", 224, 224)
        with pytest.raises(ValueError):
            invoke_segment(Recorder(), SegmentRequest(frame_ref=frame, box=(10, 20, 10, 220)))
        assert calls == []

    def test_segment_dim_mismatch_rejected(self):
        from tgs.toolbus import SegmentResponse

        class WrongDims:
            tool_id = "bad"

            def segment(self, request):
                return SegmentResponse(mask=all_background(2, 2))

        frame = FrameRef.synthetic("f3", 224, 224)
        with pytest.raises(ResponseValidationError):
            invoke_segment(WrongDims(), SegmentRequest(frame_ref=frame, box=(0, 0, 4, 4)))

    def test_segment_cases_rule(self):
        m = mask_from_box(8, 8, (1, 1, 3, 3))
        spec = ScriptedMockSpec(segment_rule="cases",
                                segment_cases={"f0": {"1,1,3,3": m}})
        bus = mock_bindings(spec)
        frame = FrameRef.synthetic("f0", 8, 8)
        assert invoke_segment(bus.segment,
                              SegmentRequest(frame_ref=frame, box=(1, 1, 3, 3))).mask == m
        with pytest.raises(MockSpecError):
            invoke_segment(bus.segment, SegmentRequest(frame_ref=frame, box=(0, 0, 2, 2)))

    def test_generate_scripted(self):
        bus = mock_bindings(spec_fixture())
        resp = invoke_generate(bus.generate, GenerateRequest(uid="u1", prompt="go"))
        assert "resonant" in resp.text

    def test_replay_determinism(self):
        bus = mock_bindings(spec_fixture())
        frame = FrameRef.synthetic("f3", 224, 224)
        req = GroundRequest(frame_ref=frame, query_text="guitar")
        assert invoke_ground(bus.ground, req) == invoke_ground(bus.ground, req)

    def test_spec_json_round_trip(self, tmp_path):
        spec = spec_fixture()
        path = tmp_path / "spec.json"
        spec.save(path)
        again = ScriptedMockSpec.load(path)
        assert again.think == spec.think
        assert again.ground == spec.ground
        assert again.generate == spec.generate

    def test_spec_cases_json_round_trip(self, tmp_path):
        m = mask_from_box(8, 8, (1, 1, 3, 3))
        spec = ScriptedMockSpec(segment_rule="cases", segment_cases={"f0": {"1,1,3,3": m}})
        path = tmp_path / "spec.json"
        spec.save(path)
        assert ScriptedMockSpec.load(path).segment_cases["f0"]["1,1,3,3"] == m


# ---------------------------------------------------------------------------
# Remote client behavior against a canned HTTP stub
# ---------------------------------------------------------------------------


class _StubHandler(BaseHTTPRequestHandler):
    responses: dict[str, tuple[int, dict | str]] = {}

    def do_POST(self):
        self.rfile.read(int(self.headers.get("Content-Length", 0)))
        status, body = self.responses.get(self.path, (404, {"error": {
            "code": "not_found", "message": self.path}}))
        if isinstance(body, dict):
            payload = json.dumps(body).encode()
            ctype = "application/json"
        else:
            payload = body.encode()
            ctype = "text/plain"
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}", _StubHandler
    server.shutdown()


class TestRemoteClient:
    def test_think_happy_path(self, stub_server):
        url, handler = stub_server
        handler.responses = {"/v1/think": (200, {"raw_text": "chain text"})}
        backend = RemoteThinkBackend(base_url=url)
        resp = invoke_think(backend, ThinkRequest(uid="u", rendered_prompt="p",
                                                  frame_refs=()))
        assert resp.raw_text == "chain text"

    def test_ground_parses_candidates(self, stub_server):
        url, handler = stub_server
        handler.responses = {"/v1/ground": (200, {"candidates": [
            {"x1": 1, "y1": 2, "x2": 5, "y2": 6, "box_score": 0.5, "text_score": 0.5}]})}
        backend = RemoteGroundBackend(base_url=url)
        frame = FrameRef.synthetic("f", 10, 10)
        resp = invoke_ground(backend, GroundRequest(frame_ref=frame, query_text="dog"))
        assert resp.candidates[0].coords == (1, 2, 5, 6)

    def test_ground_invalid_box_is_validation_error(self, stub_server):
        url, handler = stub_server
        handler.responses = {"/v1/ground": (200, {"candidates": [
            {"x1": 5, "y1": 2, "x2": 5, "y2": 6, "box_score": 0.5, "text_score": 0.5}]})}
        backend = RemoteGroundBackend(base_url=url)
        frame = FrameRef.synthetic("f", 10, 10)
        with pytest.raises(ResponseValidationError):
            invoke_ground(backend, GroundRequest(frame_ref=frame, query_text="dog"))

    def test_segment_decodes_rle(self, stub_server):
        url, handler = stub_server
        handler.responses = {"/v1/segment": (200, {"mask": {"w": 4, "h": 4,
                                                            "runs": [5, 2, 9]}})}
        backend = RemoteSegmentBackend(base_url=url)
        frame = FrameRef.synthetic("f", 4, 4)
        resp = invoke_segment(backend, SegmentRequest(frame_ref=frame, box=(0, 0, 2, 2)))
        assert mask_area(resp.mask) == 2

    def test_non_json_is_transport_error(self, stub_server):
        url, handler = stub_server
        handler.responses = {"/v1/think": (200, "plain text, not json")}
        backend = RemoteThinkBackend(base_url=url)
        with pytest.raises(TransportFormatError):
            backend.think(ThinkRequest(uid="u", rendered_prompt="p", frame_refs=()))

    def test_missing_field_is_transport_error(self, stub_server):
        url, handler = stub_server
        handler.responses = {"/v1/think": (200, {"something_else": 1})}
        backend = RemoteThinkBackend(base_url=url)
        with pytest.raises(TransportFormatError):
            backend.think(ThinkRequest(uid="u", rendered_prompt="p", frame_refs=()))

    def test_undeclared_lookup_maps_to_mock_spec_error(self, stub_server):
        url, handler = stub_server
        handler.responses = {"/v1/think": (404, {"error": {
            "code": "undeclared_lookup", "message": "no uid"}})}
        backend = RemoteThinkBackend(base_url=url)
        with pytest.raises(MockSpecError):
            backend.think(ThinkRequest(uid="u", rendered_prompt="p", frame_refs=()))

    def test_connection_refused_is_unavailable(self):
        backend = RemoteThinkBackend(base_url="http://127.0.0.1:1", retries=0,
                                     timeout_s=0.5)
        with pytest.raises(BackendUnavailableError):
            backend.think(ThinkRequest(uid="u", rendered_prompt="p", frame_refs=()))

    def test_errors_are_distinguishable(self):
        kinds = {BackendUnavailableError, ToolTimeoutError, TransportFormatError}
        # distinct classes under a common base, so callers can branch
        from tgs.toolbus import ToolBusError

        assert all(issubclass(k, ToolBusError) for k in kinds)
        assert len(kinds) == 3
