"""Final analyses on the pooled two-stage data.

Parametric tests are computed from per-stage sufficient statistics (group
sums and the pooled within-group sum of squares), which lets the Monte Carlo
engine evaluate them for a million replicates at once.  The resampling tests
work on the raw observations.
"""
from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import helmert

from .errors import BudgetError, DegenerateDataError, DomainError, NoSecondStageError, UnsupportedDesignError
from .statdist import (
    RngStream,
    chisq_quantile,
    chisq_sf,
    student_t_quantile,
    student_t_sf,
)
from .trial import DesignKind, StageData, TrialData

__all__ = [
    "Sidedness",
    "TestKind",
    "TestOutcome",
    "FULL",
    "t_statistic",
    "unmodified_t_test",
    "permutation_test",
    "rotation_test",
    "haar_orthogonal",
    "fisher_combination",
    "fisher_test",
    "stage_p_values",
    "t_comb_statistic",
    "t_comb_test",
]

FULL = "full"
ENUMERATION_CAP = 1 << 20
MIN_ROTATIONS = 100


class Sidedness(enum.Enum):
    ONE_SIDED_UPPER = "one_sided"
    TWO_SIDED = "two_sided"


class TestKind(enum.Enum):
    UNMODIFIED_T = "unmodified_t"
    PERMUTATION = "permutation"
    ROTATION = "rotation"
    FISHER = "fisher"
    TCOMB = "tcomb"
    STAGE1_T = "stage1_t"

    __test__ = False


@dataclass(frozen=True)
class TestOutcome:
    statistic: float
    df: Optional[int]
    p_value: float
    reject: bool
    critical_value: float
    test_kind: TestKind

    __test__ = False


# ---------------------------------------------------------------------------
# sufficient-statistic kernels (vectorized)


@dataclass
class StageSummary:
    """Per-group size ``n``, per-group ``sums`` (last axis = group), pooled within SS."""

    n: np.ndarray
    sums: np.ndarray
    wss: np.ndarray


def summarize(stage: StageData) -> StageSummary:
    sums = np.array([g.sum() for g in stage.groups])
    wss = sum(float(((g - g.mean()) ** 2).sum()) for g in stage.groups if g.size)
    return StageSummary(np.asarray(stage.n), sums, np.asarray(wss))


def _ratio(num, den):
    """num / den with zero denominators mapped to 0 (num == 0) or +-inf."""
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = num / den
    return np.where(den > 0, out, np.where(num == 0, 0.0, np.copysign(np.inf, num)))


def stage_t_vec(design: DesignKind, s: StageSummary):
    """Stage-wise t statistic and df; requires n >= 2 per group."""
    n = np.asarray(s.n, dtype=np.float64)
    if design is DesignKind.ONE_SAMPLE:
        df = n - 1
        with np.errstate(divide="ignore", invalid="ignore"):
            mean = s.sums[..., 0] / n
            var = s.wss / df
        return _ratio(np.sqrt(n) * mean, np.sqrt(var)), df
    df = 2 * n - 2
    with np.errstate(divide="ignore", invalid="ignore"):
        diff = (s.sums[..., 0] - s.sums[..., 1]) / n
        var = s.wss / df
    return _ratio(diff, np.sqrt(var * 2.0 / n)), df


def combined_t_vec(design: DesignKind, s1: StageSummary, s2: StageSummary):
    """t statistic of all n1 + n2 observations, ignoring the staging."""
    n1 = np.asarray(s1.n, dtype=np.float64)
    n2 = np.asarray(s2.n, dtype=np.float64)
    big_n = n1 + n2
    has2 = n2 > 0
    n2s = np.where(has2, n2, 1.0)
    w = n1 * n2 / big_n
    ss = s1.wss + s2.wss
    if design is DesignKind.ONE_SAMPLE:
        gap = s1.sums[..., 0] / n1 - s2.sums[..., 0] / n2s
        ss = ss + np.where(has2, w * gap * gap, 0.0)
        df = big_n - 1
        mean = (s1.sums[..., 0] + s2.sums[..., 0]) / big_n
        return _ratio(np.sqrt(big_n) * mean, np.sqrt(ss / df)), df
    for j in (0, 1):
        gap = s1.sums[..., j] / n1 - s2.sums[..., j] / n2s
        ss = ss + np.where(has2, w * gap * gap, 0.0)
    df = 2 * big_n - 2
    diff = (s1.sums[..., 0] + s2.sums[..., 0] - s1.sums[..., 1] - s2.sums[..., 1]) / big_n
    return _ratio(diff, np.sqrt(ss / df * 2.0 / big_n)), df


def t_critical(alpha, df, side: Sidedness):
    level = 1 - alpha if side is Sidedness.ONE_SIDED_UPPER else 1 - alpha / 2
    return student_t_quantile(level, df)


def t_reject(t, crit, side: Sidedness):
    return t > crit if side is Sidedness.ONE_SIDED_UPPER else np.abs(t) > crit


def t_pvalue(t, df, side: Sidedness):
    if side is Sidedness.ONE_SIDED_UPPER:
        return student_t_sf(t, df)
    return 2.0 * student_t_sf(np.abs(t), df)


# ---------------------------------------------------------------------------
# parametric tests


def _pooled_stage(data):
    if isinstance(data, TrialData):
        return data
    if isinstance(data, StageData):
        empty = StageData(2, tuple(np.empty(0) for _ in data.groups))
        return _AdHoc(data, empty)
    raise TypeError(f"expected TrialData or StageData, got {type(data).__name__}")


@dataclass
class _AdHoc:
    stage1: StageData
    stage2: StageData

    @property
    def design(self):
        return DesignKind.ONE_SAMPLE if len(self.stage1.groups) == 1 else DesignKind.TWO_SAMPLE_BALANCED


def t_statistic(data) -> tuple[float, int]:
    """Pooled t statistic over both stages: one-sample sqrt(n) xbar / s, or two-sample pooled t.

    Raises :class:`DegenerateDataError` when the variance estimate is zero.
    """
    data = _pooled_stage(data)
    groups = [np.concatenate([data.stage1.groups[j], data.stage2.groups[j]]) for j in range(len(data.stage1.groups))]
    if groups[0].size < 2:
        raise DomainError("need at least 2 observations (per group) for a t statistic")
    if sum(float(((g - g.mean()) ** 2).sum()) for g in groups) == 0.0:
        raise DegenerateDataError("zero variance estimate")
    t, df = combined_t_vec(data.design, summarize(data.stage1), summarize(data.stage2))
    return float(t), int(df)


def unmodified_t_test(data, alpha: float, side: Sidedness) -> TestOutcome:
    """The ordinary t-test on all observations, as if the sample size had been fixed."""
    t, df = t_statistic(data)
    crit = t_critical(alpha, df, side)
    return TestOutcome(t, df, float(t_pvalue(t, df, side)), bool(t_reject(t, crit, side)), float(crit), TestKind.UNMODIFIED_T)


def _stage1_only(data, alpha, side) -> TestOutcome:
    s1 = summarize(data.stage1)
    t, df = stage_t_vec(data.design, s1)
    if not np.isfinite(t):
        raise DegenerateDataError("zero stage-1 variance")
    t, df = float(t), int(df)
    crit = t_critical(alpha, df, side)
    return TestOutcome(t, df, float(t_pvalue(t, df, side)), bool(t_reject(t, crit, side)), float(crit), TestKind.STAGE1_T)


def stage_p_values(data: TrialData) -> tuple[float, float]:
    """One-sided upper p-values of the stage-1-only and stage-2-only t statistics."""
    if data.stage2.n < 2:
        raise NoSecondStageError(f"stage 2 has {data.stage2.n} observations per group")
    if data.stage1.n < 2:
        raise DomainError("stage 1 needs at least 2 observations per group")
    out = []
    for st in (data.stage1, data.stage2):
        t, df = stage_t_vec(data.design, summarize(st))
        if not np.isfinite(t):
            raise DegenerateDataError(f"zero variance in stage {st.stage}")
        out.append(float(student_t_sf(t, df)))
    return out[0], out[1]


def fisher_statistic(p1, p2):
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return -2.0 * (np.log(p1) + np.log(p2))


def fisher_combination(p1: float, p2: float, alpha: float) -> TestOutcome:
    """Fisher's product test: reject when -2 log(p1 p2) exceeds the chi2(4) (1 - alpha)-quantile.

    A zero p-value saturates the statistic at +inf (always reject).
    """
    for p in (p1, p2):
        if not 0 <= p <= 1:
            raise DomainError(f"p-value out of range: {p}")
    stat = float(fisher_statistic(p1, p2))
    crit = chisq_quantile(1 - alpha, 4)
    p_value = 0.0 if math.isinf(stat) else float(chisq_sf(stat, 4))
    return TestOutcome(stat, 4, p_value, stat > crit, crit, TestKind.FISHER)


def fisher_test(data: TrialData, alpha: float) -> TestOutcome:
    """Fisher combination on one-sided stage p-values; stage-1 t-test alone when n2 < 2."""
    if data.stage2.n < 2:
        return _stage1_only(data, alpha, Sidedness.ONE_SIDED_UPPER)
    return fisher_combination(*stage_p_values(data), alpha)


def t_comb_statistic(t1, t2, n1, n2):
    """sqrt(n1/(n1+n2)) t1 + sqrt(n2/(n1+n2)) t2."""
    n1 = np.asarray(n1, dtype=np.float64)
    n2 = np.asarray(n2, dtype=np.float64)
    tot = n1 + n2
    return _scalar(np.sqrt(n1 / tot) * t1 + np.sqrt(n2 / tot) * t2)


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def t_comb_test(data: TrialData, alpha: float, side: Sidedness, critval: Optional[Callable] = None) -> TestOutcome:
    """Weighted t combination against the null quantile of w1 T1 + w2 T2.

    ``critval(n1, n2, alpha, side)`` defaults to the shared critical-value table.
    """
    if data.design is not DesignKind.ONE_SAMPLE:
        raise UnsupportedDesignError("t_comb critical values are tabulated for the one-sample design")
    if data.stage2.n < 2:
        return _stage1_only(data, alpha, side)
    if critval is None:
        from .critvals import default_table

        critval = default_table().lookup
    t1, _ = stage_t_vec(data.design, summarize(data.stage1))
    t2, _ = stage_t_vec(data.design, summarize(data.stage2))
    if not (np.isfinite(t1) and np.isfinite(t2)):
        raise DegenerateDataError("zero stage variance")
    n1, n2 = data.stage1.n, data.stage2.n
    stat = float(t_comb_statistic(t1, t2, n1, n2))
    crit = float(critval(n1, n2, alpha, side))
    reject = stat > crit if side is Sidedness.ONE_SIDED_UPPER else abs(stat) > crit
    # no closed-form p-value; report the decision-equivalent indicator
    return TestOutcome(stat, None, float("nan"), bool(reject), crit, TestKind.TCOMB)


# ---------------------------------------------------------------------------
# resampling tests


def _rows_t(design: DesignKind, groups):
    """t statistic per row; ``groups`` is one (B, N) array per group."""
    if design is DesignKind.ONE_SAMPLE:
        x = groups[0]
        n = x.shape[-1]
        mean = x.mean(axis=-1)
        var = ((x - mean[..., None]) ** 2).sum(axis=-1) / (n - 1)
        return _ratio(np.sqrt(n) * mean, np.sqrt(var))
    a, b = groups
    n = a.shape[-1]
    ma, mb = a.mean(axis=-1), b.mean(axis=-1)
    ss = ((a - ma[..., None]) ** 2).sum(axis=-1) + ((b - mb[..., None]) ** 2).sum(axis=-1)
    return _ratio(ma - mb, np.sqrt(ss / (2 * n - 2) * 2.0 / n))


def _resampling_p(observed, resampled, side: Sidedness, include_identity: bool):
    if side is Sidedness.TWO_SIDED:
        observed, resampled = abs(observed), np.abs(resampled)
    tol = 1e-10 * max(1.0, abs(observed)) if np.isfinite(observed) else 0.0
    hits = int(np.count_nonzero(resampled >= observed - tol))
    total = resampled.size
    if include_identity:
        hits, total = hits + 1, total + 1
    return hits / total


def _resampling_outcome(observed, resampled, alpha, side, include_identity, kind, df):
    p = _resampling_p(observed, resampled, side, include_identity)
    return TestOutcome(float(observed), df, p, p <= alpha, float("nan"), kind)


def _observed_rows_t(data):
    groups = [data.group(j)[None, :] for j in range(data.design.n_groups)]
    return float(_rows_t(data.design, groups)[0])


def _full_df(data):
    n = data.stage1.n + data.stage2.n
    return n - 1 if data.design is DesignKind.ONE_SAMPLE else 2 * n - 2


def _sign_patterns(n):
    idx = np.arange(1 << n, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n)[None, :]) & 1
    return 1.0 - 2.0 * bits


def _label_masks(n_per_group):
    """Boolean (C, 2n) masks choosing which units form group 1."""
    m = 2 * n_per_group
    combos = list(itertools.combinations(range(m), n_per_group))
    mask = np.zeros((len(combos), m), dtype=bool)
    for i, c in enumerate(combos):
        mask[i, list(c)] = True
    return mask


def _apply_masks(y, masks):
    """Split pooled stage vector ``y`` into (group1, group2) rows per mask."""
    n = masks.shape[1] // 2
    yb = np.broadcast_to(y, masks.shape)
    return yb[masks].reshape(-1, n), yb[~masks].reshape(-1, n)


def permutation_test(data: TrialData, alpha: float, side: Sidedness, budget: Union[int, str], rng: Optional[RngStream] = None) -> TestOutcome:
    """Sign-flip (one-sample) or stage-stratified label-permutation (two-sample) test.

    ``budget`` is a number of random resamples (the observed arrangement is
    added to numerator and denominator) or ``FULL`` for exhaustive enumeration.
    """
    observed = _observed_rows_t(data)
    df = _full_df(data)
    full = budget == FULL
    if not full and (not isinstance(budget, (int, np.integer)) or budget < 1):
        raise DomainError(f"invalid resampling budget {budget!r}")
    if data.design is DesignKind.ONE_SAMPLE:
        x = data.group(0)
        if full:
            if x.size > 20:
                raise BudgetError(f"full sign enumeration of {x.size} observations exceeds the cap")
            signs = _sign_patterns(x.size)
        else:
            signs = np.where(rng.uniform((budget, x.size)) < 0.5, -1.0, 1.0)
        stats = _rows_t(data.design, [signs * x])
        return _resampling_outcome(observed, stats, alpha, side, not full, TestKind.PERMUTATION, df)

    stages = [s for s in (data.stage1, data.stage2) if s.n > 0]
    if full:
        count = math.prod(math.comb(2 * s.n, s.n) for s in stages)
        if count > ENUMERATION_CAP:
            raise BudgetError(f"{count} label arrangements exceed the cap {ENUMERATION_CAP}")
        parts = [_apply_masks(s.pooled(), _label_masks(s.n)) for s in stages]
        # cartesian product over stages
        a, b = parts[0]
        for a2, b2 in parts[1:]:
            k1, k2 = a.shape[0], a2.shape[0]
            a = np.concatenate([np.repeat(a, k2, axis=0), np.tile(a2, (k1, 1))], axis=1)
            b = np.concatenate([np.repeat(b, k2, axis=0), np.tile(b2, (k1, 1))], axis=1)
        stats = _rows_t(data.design, [a, b])
        return _resampling_outcome(observed, stats, alpha, side, False, TestKind.PERMUTATION, df)

    ga, gb = [], []
    for s in stages:
        y = s.pooled()
        order = np.argsort(rng.uniform((budget, y.size)), axis=1)
        py = y[order]
        ga.append(py[:, : s.n])
        gb.append(py[:, s.n :])
    stats = _rows_t(data.design, [np.concatenate(ga, axis=1), np.concatenate(gb, axis=1)])
    return _resampling_outcome(observed, stats, alpha, side, True, TestKind.PERMUTATION, df)


def haar_orthogonal(n: int, rng: RngStream, size: Optional[int] = None) -> np.ndarray:
    """Haar-distributed orthogonal matrices: QR of a Gaussian array with sign-fixed R diagonal."""
    shape = (n, n) if size is None else (size, n, n)
    z = rng.normal(shape)
    q, r = np.linalg.qr(z)
    d = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    d = np.where(d == 0, 1.0, d)
    return q * d[..., None, :]


def _rotate_block(coords, budget, rng, method):
    """Random orthogonal images of ``coords`` (length k), shape (budget, k)."""
    k = coords.size
    if k < 2:
        return np.broadcast_to(coords, (budget, k)).copy()
    if method == "orbit":
        # the image of a fixed vector under a Haar rotation is uniform on its sphere
        g = rng.normal((budget, k))
        return np.linalg.norm(coords) * g / np.linalg.norm(g, axis=1, keepdims=True)
    if method == "matrix":
        q = haar_orthogonal(k, rng, size=budget)
        return q @ coords
    raise DomainError(f"unknown rotation method {method!r}")


def rotation_test(data: TrialData, alpha: float, side: Sidedness, budget: int, rng: RngStream, method: str = "orbit") -> TestOutcome:
    """Stage-wise random-rotation test.

    One-sample: each stage vector is rotated by the full orthogonal group.
    Two-sample: each stage is rotated within the orthocomplement of the
    all-ones direction, which keeps its grand mean and centered total
    variance.  ``method='matrix'`` multiplies explicit Haar matrices,
    ``'orbit'`` samples the (identically distributed) image directly.
    """
    if budget < MIN_ROTATIONS:
        raise DomainError(f"rotation budget must be >= {MIN_ROTATIONS}")
    observed = _observed_rows_t(data)
    df = _full_df(data)
    if data.design is DesignKind.ONE_SAMPLE:
        pieces = [_rotate_block(s.groups[0], budget, rng, method) for s in (data.stage1, data.stage2) if s.n > 0]
        stats = _rows_t(data.design, [np.concatenate(pieces, axis=1)])
        return _resampling_outcome(observed, stats, alpha, side, True, TestKind.ROTATION, df)
    ga, gb = [], []
    for s in (data.stage1, data.stage2):
        if s.n == 0:
            continue
        y = s.pooled()
        if s.n < 2:
            rotated = np.broadcast_to(y, (budget, y.size))
        else:
            h = helmert(y.size)  # (2n-1, 2n), rows orthonormal and orthogonal to ones
            rotated = y.mean() + _rotate_block(h @ y, budget, rng, method) @ h
        ga.append(rotated[:, : s.n])
        gb.append(rotated[:, s.n :])
    stats = _rows_t(data.design, [np.concatenate(ga, axis=1), np.concatenate(gb, axis=1)])
    return _resampling_outcome(observed, stats, alpha, side, True, TestKind.ROTATION, df)
