"""Reference inference servers for the think/ground/segment/generate protocol."""

from .mockspec import MockSpec, UndeclaredLookup, box_interior_rle
from .server import AdapterConfig, CapabilityBinding, build_app, serve

__version__ = "0.1.0"

__all__ = ["AdapterConfig", "CapabilityBinding", "MockSpec", "UndeclaredLookup",
           "box_interior_rle", "build_app", "serve"]
