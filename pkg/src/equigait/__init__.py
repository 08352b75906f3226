"""Stride-level lameness detection from a single girth-mounted IMU."""

from .data import ChannelManifest, Gait, Label, SensorSession, Split, SplitAssignment, Stride

__version__ = "0.1.0"

__all__ = ["ChannelManifest", "Gait", "Label", "SensorSession", "Split", "SplitAssignment", "Stride"]
