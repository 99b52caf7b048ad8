"""Transfer benchmarking with environment monitoring and degradation attribution."""

from xferbench.model import ScoreLevel, SegmentRole, TimeWindow, TransferRecord, window_contains, worst_of

__version__ = "0.1.0"

__all__ = ["ScoreLevel", "SegmentRole", "TimeWindow", "TransferRecord", "window_contains", "worst_of"]
