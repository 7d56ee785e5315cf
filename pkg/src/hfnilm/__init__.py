"""Neural non-intrusive load monitoring with high-frequency waveform channels."""

__version__ = "0.1.0"
