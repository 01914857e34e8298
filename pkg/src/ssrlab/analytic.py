"""Closed-form companions of the threshold-rule simulations."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError
from .statdist import chisq_sf

__all__ = ["InflationInputs", "approx_type1_eq1", "prob_stage2_threshold"]


@dataclass(frozen=True)
class InflationInputs:
    r: float
    sigma: float = 1.0
    alpha: float = 0.05

    def __post_init__(self):
        if not (self.r > 0 and self.sigma > 0 and 0 < self.alpha < 1):
            raise DomainError(f"invalid inflation inputs {self}")


def approx_type1_eq1(inp: InflationInputs) -> float:
    """Approximate null rejection probability for n1 = 2, one extra observation.

    alpha * (1 + r^2 / (2 sigma^2) - sqrt(3) r^3 / (2 sqrt(pi) sigma^3)).  The
    cubic term overstates the cone/cylinder overlap, so this is a rough
    upper-side guide rather than an estimate.
    """
    r, s = inp.r, inp.sigma
    return inp.alpha * (1 + r * r / (2 * s * s) - math.sqrt(3) * r**3 / (2 * math.sqrt(math.pi) * s**3))


def prob_stage2_threshold(r_squared: float, n1: int, sigma: float = 1.0) -> float:
    """P(sum of n1 squared N(0, sigma^2) draws > r^2)."""
    if r_squared < 0 or sigma <= 0 or n1 < 1:
        raise DomainError("invalid threshold inputs")
    if r_squared == 0:
        return 1.0
    return float(chisq_sf(r_squared / sigma**2, n1))
