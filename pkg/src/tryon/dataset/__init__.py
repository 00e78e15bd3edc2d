"""Quadruplet data model, synthetic generator and on-disk storage."""

from .quadruplet import Batch, Quadruplet, check_invariants
from .synth import SynthConfig, generate
from .storage import load, load_report, save

__all__ = ["Batch", "Quadruplet", "check_invariants", "SynthConfig", "generate", "load", "load_report", "save"]
