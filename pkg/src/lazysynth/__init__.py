"""Lock-based concurrent code from sequential data-structure knowledge.

The usual entry points are :func:`parse_spec` to read a spec file and
:func:`synthesize` to run every reasoning task and assemble code.
"""

from .kb import DataStructureSpec, parse_spec
from .synthesizer import ConcurrentCode, RcuRecommendation, SynthesisResult, render, synthesize
from .verifier import verify

__version__ = "0.1.0"

__all__ = [
    "ConcurrentCode",
    "DataStructureSpec",
    "RcuRecommendation",
    "SynthesisResult",
    "parse_spec",
    "render",
    "synthesize",
    "verify",
]
