"""Blinded variance statistics and sample-size re-estimation rules.

Rules only ever see a :class:`BlindedVariance`, never group means, so every
decision is blinded by construction.  Each rule has a vectorized ``n2_from``
used by the Monte Carlo engine; the scalar ``apply_*`` functions go through
the same code.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import DomainError, UnsupportedDesignError
from .statdist import std_normal_quantile
from .trial import DesignKind, StageData, TrialData

__all__ = [
    "BlindedVariance",
    "ThresholdRule",
    "FixedRule",
    "KieserFriedeRule",
    "NonInferiorityRule",
    "SSRRule",
    "SSRDecision",
    "blinded_variance",
    "blinded_from_summaries",
    "apply_threshold_rule",
    "apply_kf_rule",
    "apply_noninferiority_rule",
    "apply_rule",
    "variance_identity_check",
]

# relative slack so that e.g. 31.999999999999996 still rounds up to 32, not 33
_CEIL_EPS = 1e-9


@dataclass(frozen=True)
class BlindedVariance:
    """Label-free stage-1 variability.

    one-sample: ``total_sum_squares`` = sum x^2, ``total_variance`` = that / n1.
    two-sample: ``total_sum_squares`` = sum (x - grand mean)^2 over both groups,
    ``total_variance`` = that / (2 n1 - 1).
    """

    total_sum_squares: float
    total_variance: float
    n_basis: int


@dataclass(frozen=True)
class ThresholdRule:
    """Take ``n2_add`` more observations iff the stage-1 sum of squares exceeds ``r_squared``."""

    r_squared: float
    n2_add: int

    def __post_init__(self):
        if not self.r_squared > 0 or self.n2_add < 1:
            raise DomainError(f"invalid threshold rule {self}")

    def n2_from(self, tss, tvar, n1, design=None):
        tss = np.asarray(tss)
        return np.where(tss <= self.r_squared, 0, self.n2_add).astype(np.int64)


@dataclass(frozen=True)
class FixedRule:
    """No re-estimation: stage 2 always has ``n2`` observations (per group)."""

    n2: int

    def __post_init__(self):
        if self.n2 < 0:
            raise DomainError("n2 must be >= 0")

    def n2_from(self, tss, tvar, n1, design=None):
        return np.full(np.shape(tss), self.n2, dtype=np.int64)


def _ceil(raw):
    return np.ceil(np.asarray(raw) * (1.0 - _CEIL_EPS)).astype(np.int64)


def _finish(n2, n1, n2_cap, n2_min):
    cap = 10 * n1 if n2_cap is None else n2_cap
    n2 = np.clip(n2, 0, cap)
    if n2_min:
        n2 = np.where((n2 > 0) & (n2 < n2_min), min(n2_min, cap), n2)
    return n2.astype(np.int64)


@dataclass(frozen=True)
class KieserFriedeRule:
    """Sample size from the blinded total variance and an assumed effect.

    Required size per unit is ``ceil(f * (u_{1-a} + u_{1-b})^2 * var / delta^2)``
    with f = 1 for one-sample observations and f = 2 per group in the
    two-sample design; stage 2 supplies whatever stage 1 did not.  Setting
    ``multiplier`` overrides f for both designs.
    """

    delta_assumed: float
    alpha_plan: float = 0.025
    beta_plan: float = 0.10
    n2_cap: Optional[int] = None
    n2_min: int = 0
    multiplier: Optional[float] = None

    def __post_init__(self):
        if self.delta_assumed == 0:
            raise DomainError("assumed effect must be nonzero")
        if self.n2_cap is not None and self.n2_cap < 0:
            raise DomainError("n2_cap must be >= 0")
        if self.multiplier is not None and not self.multiplier > 0:
            raise DomainError("multiplier must be > 0")

    @property
    def planning_constant(self) -> float:
        return (std_normal_quantile(1 - self.alpha_plan) + std_normal_quantile(1 - self.beta_plan)) ** 2

    def factor(self, design: DesignKind = DesignKind.ONE_SAMPLE) -> float:
        if self.multiplier is not None:
            return self.multiplier
        return 1.0 if design is DesignKind.ONE_SAMPLE else 2.0

    def required_raw(self, tvar, design: DesignKind = DesignKind.ONE_SAMPLE):
        return self.factor(design) * self.planning_constant * np.asarray(tvar) / self.delta_assumed**2

    def n2_from(self, tss, tvar, n1, design: DesignKind = DesignKind.ONE_SAMPLE):
        n_req = _ceil(self.required_raw(tvar, design))
        return _finish(n_req - n1, n1, self.n2_cap, self.n2_min)


@dataclass(frozen=True)
class NonInferiorityRule:
    """Stage-2 size ``4 (u_{1-a} + u_{1-b})^2 / (theta - margin)^2 * total variance``.

    ``convention='per_group_stage2'`` reads that value as the per-group stage-2
    size; ``'total_required'`` reads it as the total over both groups and
    stages and subtracts what stage 1 already supplied.
    """

    theta: float
    margin: float
    alpha_plan: float = 0.025
    beta_plan: float = 0.10
    n2_cap: Optional[int] = None
    n2_min: int = 0
    convention: str = "per_group_stage2"

    def __post_init__(self):
        if self.theta == self.margin:
            raise DomainError("theta must differ from the margin")
        if self.convention not in ("per_group_stage2", "total_required"):
            raise DomainError(f"unknown convention {self.convention!r}")
        if self.n2_cap is not None and self.n2_cap < 0:
            raise DomainError("n2_cap must be >= 0")

    @property
    def planning_constant(self) -> float:
        return (std_normal_quantile(1 - self.alpha_plan) + std_normal_quantile(1 - self.beta_plan)) ** 2

    def required_raw(self, tvar):
        return 4.0 * self.planning_constant / (self.theta - self.margin) ** 2 * np.asarray(tvar)

    def n2_from(self, tss, tvar, n1, design=None):
        raw = self.required_raw(tvar)
        if self.convention == "per_group_stage2":
            n2 = _ceil(raw)
        else:
            n2 = _ceil(raw / 2.0) - n1
        return _finish(n2, n1, self.n2_cap, self.n2_min)


SSRRule = Union[ThresholdRule, KieserFriedeRule, NonInferiorityRule, FixedRule]


@dataclass(frozen=True)
class SSRDecision:
    n2: int
    blinded_stat: BlindedVariance
    rule: SSRRule


def blinded_from_summaries(design: DesignKind, n1, sums, within_ss):
    """(total sum of squares, total variance) from stage-1 summaries.

    ``sums`` holds per-group sums (last axis = group), ``within_ss`` the pooled
    within-group sum of squares.
    """
    sums = np.asarray(sums, dtype=np.float64)
    if design is DesignKind.ONE_SAMPLE:
        s = sums[..., 0]
        tss = within_ss + s * s / n1
        return tss, tss / n1
    grand = (sums[..., 0] + sums[..., 1]) / (2 * n1)
    between = n1 * ((sums[..., 0] / n1 - grand) ** 2 + (sums[..., 1] / n1 - grand) ** 2)
    tss = within_ss + between
    return tss, tss / (2 * n1 - 1)


def blinded_variance(stage1: StageData) -> BlindedVariance:
    """Blinded statistic of stage 1, computed with group labels ignored."""
    x = stage1.pooled()
    if x.size < 2:
        raise DomainError("need at least 2 stage-1 observations")
    if len(stage1.groups) == 1:
        tss = float(np.dot(x, x))
        return BlindedVariance(tss, tss / x.size, x.size)
    d = x - x.mean()
    tss = float(np.dot(d, d))
    return BlindedVariance(tss, tss / (x.size - 1), x.size)


def _decide(bv: BlindedVariance, rule, n1: int) -> SSRDecision:
    # two-sample stage 1 pools 2 n1 observations
    design = DesignKind.ONE_SAMPLE if bv.n_basis == n1 else DesignKind.TWO_SAMPLE_BALANCED
    n2 = int(rule.n2_from(bv.total_sum_squares, bv.total_variance, n1, design))
    return SSRDecision(n2, bv, rule)


def apply_threshold_rule(bv: BlindedVariance, rule: ThresholdRule) -> SSRDecision:
    return _decide(bv, rule, bv.n_basis)


def apply_kf_rule(bv: BlindedVariance, rule: KieserFriedeRule, n1: int) -> SSRDecision:
    return _decide(bv, rule, n1)


def apply_noninferiority_rule(bv: BlindedVariance, rule: NonInferiorityRule, n1: Optional[int] = None) -> SSRDecision:
    # n1 is per group; n_basis counts both groups
    return _decide(bv, rule, bv.n_basis // 2 if n1 is None else n1)


def apply_rule(bv: BlindedVariance, rule: SSRRule, n1: int) -> SSRDecision:
    return _decide(bv, rule, n1)


def _two_sample_total_variance(groups) -> float:
    x = np.concatenate(groups)
    d = x - x.mean()
    return float(np.dot(d, d)) / (x.size - 1)


def variance_identity_check(data: TrialData, margin: float):
    """Compare the raw-data total variance with the shifted-data one.

    Returns ``(sigma_tilde_sq, sigma_hat_sq, residual)`` where the residual is
    sigma_tilde^2 minus its expression through sigma_hat^2, the margin and the
    stage-1 group mean difference.  It should vanish up to rounding.
    """
    if data.design is not DesignKind.TWO_SAMPLE_BALANCED:
        raise UnsupportedDesignError("variance identity is a two-sample statement")
    a, b = data.stage1.groups
    n1 = a.size
    sigma_tilde_sq = _two_sample_total_variance((a, b))
    sigma_hat_sq = _two_sample_total_variance((a - margin, b))
    diff = a.mean() - b.mean()
    predicted = (
        sigma_hat_sq
        - n1 * margin**2 / (2.0 * (2 * n1 - 1))
        + n1 * margin * diff / (2 * n1 - 1)
    )
    return sigma_tilde_sq, sigma_hat_sq, sigma_tilde_sq - predicted
