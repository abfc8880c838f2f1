"""Numerical laboratory for auto-bidding formats (mCPA vs tCPA) and
reserve-price commitment, plus a discrete multi-bidder auction simulator."""

from .errors import (
    AutobidError,
    ClaimViolation,
    NoConvergence,
    NumericError,
    ValidationError,
    ViolationFound,
)
from .landscape import PriceLandscape, make_landscape
from .valuation import ValuationDist, make_valuation

__all__ = [
    "AutobidError",
    "ClaimViolation",
    "NoConvergence",
    "NumericError",
    "PriceLandscape",
    "ValidationError",
    "ValuationDist",
    "ViolationFound",
    "make_landscape",
    "make_valuation",
]

__version__ = "0.1.0"
