"""Speaker-side multimodal feature extraction and dual-target regression."""

__version__ = "0.1.0"
