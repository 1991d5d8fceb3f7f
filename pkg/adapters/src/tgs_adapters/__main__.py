"""CLI entry point: serve the adapter.

Mock mode needs just a spec file:

    tgs-adapter --mock-spec fixtures/mockspec.json --port 8077

Full configs (real model bindings, media root) come from --config JSON.
"""

from __future__ import annotations

import argparse
import sys

from .server import AdapterConfig, serve


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="tgs-adapter")
    parser.add_argument("--config", help="adapter config JSON")
    parser.add_argument("--mock-spec", dest="mock_spec",
                        help="scripted mock spec (shorthand for all-mock bindings)")
    parser.add_argument("--media-root", dest="media_root",
                        help="directory for resolving ref-mode frame paths")
    parser.add_argument("--host", default=None)
    parser.add_argument("--port", type=int, default=None)
    args = parser.parse_args(argv)

    if args.config:
        config = AdapterConfig.load(args.config)
    elif args.mock_spec:
        config = AdapterConfig(mock_spec_path=args.mock_spec)
    else:
        parser.error("need --config or --mock-spec")
    if args.media_root:
        config = AdapterConfig(**{**config.__dict__, "media_root": args.media_root})
    if args.host:
        config = AdapterConfig(**{**config.__dict__, "host": args.host})
    if args.port is not None:
        config = AdapterConfig(**{**config.__dict__, "port": args.port})
    serve(config)
    return 0


if __name__ == "__main__":
    sys.exit(main())
