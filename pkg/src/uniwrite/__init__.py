"""Slot-memory recurrent networks with uniform and cached-uniform write scheduling."""

__version__ = "0.1.0"

from .estimator import MemorySeq2Seq

__all__ = ["MemorySeq2Seq", "__version__"]
