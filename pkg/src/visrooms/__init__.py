"""visrooms: server-authoritative collaborative node-link diagramming for
mixed flat-2D and spatial-3D clients."""

__version__ = "0.1.0"
