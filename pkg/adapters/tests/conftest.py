from __future__ import annotations

import threading
import time
from pathlib import Path

import pytest
import uvicorn

from tgs_adapters import AdapterConfig, build_app

REPO_ROOT = Path(__file__).resolve().parents[2]
FIXTURES = REPO_ROOT / "fixtures"


@pytest.fixture(scope="session")
def wire_server():
    """The mock adapter served over a real socket on an ephemeral port."""
    config = AdapterConfig(mock_spec_path=str(FIXTURES / "mockspec.json"),
                           media_root=str(FIXTURES))
    app = build_app(config)
    uv_config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="warning")
    server = uvicorn.Server(uv_config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("adapter server failed to start")
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)
