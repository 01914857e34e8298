"""Conditional law of the blinded stage-2 variance component.

Per-group stage sizes ``n1``, ``n2``; ``D1`` is the standardized stage-1 mean
difference, ``Delta`` the standardized true effect, so that
``D1 ~ N(sqrt(n1/2) Delta, 1)``.  Given (V1, D1), the pair of standardized
between-stage group differences (D*_1, D*_2) is bivariate normal, and

    V2* = chi2(2 n2 - 2) + D*_1^2 + D*_2^2
        =_d chi2(2 n2 - 1) + n1/(n1+n2) * chi2(1; (n2/n1) (D1 - sqrt(n1/2) Delta)^2),

which is *not* chi2(2 n2) unless D1 sits at its mean.  Both representations
are sampled here so they can be checked against each other.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .statdist import NoncentralChisqParams, RngStream, sample_noncentral_chisq

__all__ = [
    "CondParams",
    "BivariateNormalSpec",
    "cond_bivariate_params",
    "eigen_reduce",
    "sample_v2star_mixture",
    "oracle_sample_v2star",
    "expected_quadform_mean",
    "chisq_2n2_sample",
]


@dataclass(frozen=True)
class CondParams:
    n1: int
    n2: int
    D1: float
    Delta: float = 0.0

    def __post_init__(self):
        if self.n1 < 1 or self.n2 < 1:
            raise DomainError(f"stage sizes must be >= 1, got {self.n1}, {self.n2}")

    @property
    def centered_d1(self) -> float:
        """D1 - sqrt(n1/2) Delta."""
        return self.D1 - math.sqrt(self.n1 / 2.0) * self.Delta

    @property
    def shrink(self) -> float:
        """n1 / (n1 + n2), the second eigenvalue."""
        return self.n1 / (self.n1 + self.n2)

    @property
    def ncp(self) -> float:
        return self.n2 / self.n1 * self.centered_d1**2


@dataclass(frozen=True)
class BivariateNormalSpec:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(2)
        cov = np.asarray(self.cov, dtype=np.float64).reshape(2, 2)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


def cond_bivariate_params(p: CondParams) -> BivariateNormalSpec:
    """Mean and covariance of (D*_1, D*_2) given (V1, D1)."""
    tot = p.n1 + p.n2
    m = math.sqrt(p.n2 / (2.0 * tot)) * p.centered_d1
    var = (2 * p.n1 + p.n2) / (2.0 * tot)
    cov = p.n2 / (2.0 * tot)
    return BivariateNormalSpec(np.array([m, -m]), np.array([[var, cov], [cov, var]]))


_EIGVECS = np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2.0)


def eigen_reduce(spec: BivariateNormalSpec):
    """Eigenvalues and unit eigenvectors of the covariance.

    The covariance has equal diagonals, so its eigenvectors are always
    (1, 1)/sqrt2 and (1, -1)/sqrt2 with eigenvalues var +- cov.  Returns
    ``((lam_plus, lam_minus), (v_plus, v_minus))``.
    """
    c = spec.cov
    if abs(c[0, 1] - c[1, 0]) > 1e-12 * max(1.0, abs(c[0, 1])):
        raise DomainError("covariance matrix is not symmetric")
    if abs(c[0, 0] - c[1, 1]) > 1e-12 * max(1.0, abs(c[0, 0])):
        raise DomainError("covariance is not of the conditional (equal-variance) form")
    lam = (c[0, 0] + c[0, 1], c[0, 0] - c[0, 1])
    return lam, (_EIGVECS[0].copy(), _EIGVECS[1].copy())


def _sqrt_cov(spec: BivariateNormalSpec) -> np.ndarray:
    (lp, lm), (vp, vm) = eigen_reduce(spec)
    return math.sqrt(lp) * np.outer(vp, vp) + math.sqrt(lm) * np.outer(vm, vm)


def sample_v2star_mixture(p: CondParams, rng: RngStream, size=None):
    """chi2(2 n2 - 1) plus the rescaled noncentral chi2(1) term."""
    z2sq = sample_noncentral_chisq(NoncentralChisqParams(1, p.ncp, p.shrink), rng, size)
    return rng.chisquare(2 * p.n2 - 1, size) + z2sq


def oracle_sample_v2star(p: CondParams, rng: RngStream, size=None, return_pair: bool = False):
    """Direct route: chi2(2 n2 - 2) + |D*|^2 with D* drawn from the conditional bivariate normal."""
    if p.n2 < 2:
        raise DomainError("direct sampling needs n2 >= 2")
    spec = cond_bivariate_params(p)
    n = 1 if size is None else int(size)
    z = rng.normal((n, 2))
    d = spec.mean + z @ _sqrt_cov(spec)
    v = rng.chisquare(2 * p.n2 - 2, n) + (d * d).sum(axis=1)
    if size is None:
        v, d = float(v[0]), d[0]
    return (v, d) if return_pair else v


def chisq_2n2_sample(p: CondParams, rng: RngStream, size=None):
    """Draws from the naive chi2(2 n2) approximation."""
    return rng.chisquare(2 * p.n2, size)


def expected_quadform_mean(p: CondParams) -> float:
    """E(D*_1^2 + D*_2^2 | V1, D1) = 1 + n1/(n1+n2) + n2/(n1+n2) (D1 - sqrt(n1/2) Delta)^2."""
    tot = p.n1 + p.n2
    return 1.0 + p.n1 / tot + p.n2 / tot * p.centered_d1**2
