"""
dualpath-aec

Streaming joint acoustic echo cancellation and noise suppression: a
frequency-domain Kalman echo canceller feeding an online dual-path network
with optional time, frequency or dual-path compression and a light
post-processing network, plus an analytic complexity profiler.
"""

__version__ = "0.1.0"

from .config import PRESETS, RunConfig, preset
from .engine import Enhancer, EnhancerStream, enhance
from .formats import HTMLComplexityReport, PDFComplexityReport
from .profiler import ComplexityReport, count
from .weights import WeightContainer, init_weights

__all__ = [
    "PRESETS",
    "RunConfig",
    "preset",
    "Enhancer",
    "EnhancerStream",
    "enhance",
    "HTMLComplexityReport",
    "PDFComplexityReport",
    "ComplexityReport",
    "count",
    "WeightContainer",
    "init_weights",
]
