"""Two-stage normal trial data: one-sample and balanced two-sample designs."""
from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, UnsupportedDesignError
from .statdist import RngStream, counter_normal

__all__ = [
    "DesignKind",
    "TrialParams",
    "StageData",
    "TrialData",
    "stage_counter_base",
    "gen_stage",
    "gen_trial",
    "shift_noninferiority",
    "to_csv",
]


class DesignKind(enum.Enum):
    ONE_SAMPLE = "one_sample"
    TWO_SAMPLE_BALANCED = "two_sample"

    @property
    def n_groups(self) -> int:
        return 1 if self is DesignKind.ONE_SAMPLE else 2


@dataclass(frozen=True)
class TrialParams:
    """``mu`` is the true mean (one-sample) or the true difference mu_1 - mu_2."""

    design: DesignKind
    mu: float = 0.0
    sigma: float = 1.0
    n1: int = 2

    def __post_init__(self):
        if self.sigma <= 0:
            raise DomainError("sigma must be positive")
        if self.n1 < 1 or (self.design is DesignKind.ONE_SAMPLE and self.n1 < 2):
            raise DomainError(f"stage-1 size too small: {self.n1}")

    def group_means(self) -> tuple[float, ...]:
        if self.design is DesignKind.ONE_SAMPLE:
            return (self.mu,)
        return (self.mu / 2.0, -self.mu / 2.0)


@dataclass(frozen=True)
class StageData:
    """Observations of one stage; ``groups`` has one array per treatment group."""

    stage: int
    groups: tuple

    def __post_init__(self):
        if self.stage not in (1, 2):
            raise DomainError(f"stage must be 1 or 2, got {self.stage}")
        groups = tuple(np.asarray(g, dtype=np.float64) for g in self.groups)
        if len(groups) == 2 and groups[0].shape != groups[1].shape:
            raise DomainError("two-sample groups must have equal size")
        object.__setattr__(self, "groups", groups)

    @property
    def n(self) -> int:
        """Per-group size."""
        return int(self.groups[0].size)

    def pooled(self) -> np.ndarray:
        return np.concatenate(self.groups)


@dataclass(frozen=True)
class TrialData:
    stage1: StageData
    stage2: StageData
    params: TrialParams

    def __post_init__(self):
        if self.stage1.stage != 1 or self.stage2.stage != 2:
            raise DomainError("stage tags out of order")
        ng = self.params.design.n_groups
        if len(self.stage1.groups) != ng or len(self.stage2.groups) != ng:
            raise DomainError("group count does not match design")

    @property
    def design(self) -> DesignKind:
        return self.params.design

    @property
    def n1(self) -> int:
        return self.stage1.n

    @property
    def n2(self) -> int:
        return self.stage2.n

    def group(self, j: int) -> np.ndarray:
        """All observations of group ``j`` across both stages."""
        return np.concatenate([self.stage1.groups[j], self.stage2.groups[j]])


def stage_counter_base(stage: int) -> int:
    return stage << 32


def stage_observations(params: TrialParams, n, stage: int, seed: int, streams):
    """Vectorized stage draws, one row per stream; shape (len(streams), n_groups, n).

    Observation ``k`` of group ``j`` sits at counter ``base + n_groups*k + j``
    so a stream's draws do not depend on how many observations are requested.
    """
    ng = params.design.n_groups
    streams = np.atleast_1d(np.asarray(streams, dtype=np.uint64))
    k = np.arange(n, dtype=np.uint64)
    j = np.arange(ng, dtype=np.uint64)
    ctr = np.uint64(stage_counter_base(stage)) + np.uint64(ng) * k[None, :] + j[:, None]
    z = counter_normal(seed, streams[:, None, None], ctr[None, :, :])
    means = np.asarray(params.group_means())[None, :, None]
    return means + params.sigma * z


def gen_stage(params: TrialParams, n: int, stage: int, rng: RngStream) -> StageData:
    """Draw ``n`` observations per group for one stage from ``rng``'s stream."""
    if n < 0:
        raise DomainError("stage size must be nonnegative")
    x = stage_observations(params, n, stage, rng.seed, [rng.stream_id])[0]
    return StageData(stage, tuple(x))


def gen_trial(params: TrialParams, n2: int, rng: RngStream) -> TrialData:
    return TrialData(gen_stage(params, params.n1, 1, rng), gen_stage(params, n2, 2, rng), params)


def _shift_stage(stage: StageData, margin: float) -> StageData:
    return StageData(stage.stage, (stage.groups[0] - margin, stage.groups[1].copy()))


def shift_noninferiority(data: TrialData, margin: float) -> TrialData:
    """Subtract the margin from every group-1 observation (both stages)."""
    if data.design is not DesignKind.TWO_SAMPLE_BALANCED:
        raise UnsupportedDesignError("non-inferiority shift needs a two-sample design")
    return replace(data, stage1=_shift_stage(data.stage1, margin), stage2=_shift_stage(data.stage2, margin))


def to_csv(data: TrialData) -> str:
    """Debug dump with columns stage, group, value."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stage", "group", "value"])
    for st in (data.stage1, data.stage2):
        for j, g in enumerate(st.groups, start=1):
            for v in g:
                w.writerow([st.stage, j, f"{v:.10g}"])
    return buf.getvalue()
