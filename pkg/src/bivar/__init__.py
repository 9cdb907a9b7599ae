"""Exact evaluators and numerical experiments for the variation of bilinear averages."""
from .signal import DiscreteSignal, DyadicInterval, StepFunction, lp_norm
from .variation import VariationResult, variation_norm

__all__ = ["DiscreteSignal", "DyadicInterval", "StepFunction", "lp_norm", "VariationResult", "variation_norm"]
__version__ = "0.1.0"
