"""Feature-free turning process planning on voxel models."""

__version__ = "0.1.0"
