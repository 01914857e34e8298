"""Monte Carlo engine for two-stage designs with blinded re-estimation.

A replicate runs: stage 1 -> blinded statistic -> SSR rule -> stage 2 ->
(non-inferiority shift) -> final test(s).  Replicate ``k`` draws only from
the counter-based stream ``(seed, k)``, and replicates are processed in
fixed-size blocks whose integer tallies are summed, so results are
bit-identical for any number of workers.

Parametric final tests run on per-stage sufficient statistics drawn
directly (normal stage sums, chi-squared within-stage sums of squares),
which is exact in law and independent of the stage sizes.  Resampling tests
need the observations themselves; the engine switches to drawing every
observation when one of them is requested (or ``observations=True``).
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .critvals import CritTable
from .errors import ConfigError, DomainError
from .finaltests import (
    Sidedness,
    StageSummary,
    TestKind,
    combined_t_vec,
    fisher_statistic,
    permutation_test,
    rotation_test,
    stage_t_vec,
    t_comb_statistic,
    t_critical,
    t_reject,
)
from .ssr import FixedRule, KieserFriedeRule, NonInferiorityRule, SSRRule, ThresholdRule, blinded_from_summaries
from .statdist import RngStream, chisq_quantile, counter_chisquare, counter_normal, student_t_sf
from .trial import DesignKind, StageData, TrialData, TrialParams, stage_observations

__all__ = [
    "ScenarioConfig",
    "MCEstimate",
    "Tally",
    "run_replicate",
    "run_scenario",
    "run_scenario_multi",
    "power_curve",
    "simulate_block",
    "EquivalencePair",
    "equivalence_check_one_vs_two_sample",
]

BLOCK_SIZE = 1 << 16
RESAMPLE_BASE = 3 << 32
_SUMMARY_OFFSET = 1 << 31
_RESAMPLING = (TestKind.PERMUTATION, TestKind.ROTATION)


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulated design.

    ``mu_true`` is the true mean (one-sample) or true difference mu_1 - mu_2
    (two-sample), in data units; with ``sigma=1`` it is the standardized
    effect.  ``margin`` is the non-inferiority margin; when nonzero the
    final test runs on the shifted data.
    """

    design: DesignKind
    n1: int
    rule: SSRRule
    mu_true: float = 0.0
    sigma: float = 1.0
    margin: float = 0.0
    final_test: TestKind = TestKind.UNMODIFIED_T
    budget: int = 1000
    alpha: float = 0.05
    side: Sidedness = Sidedness.TWO_SIDED
    reps: int = 1_000_000
    seed: int = 42
    scenario_id: str = "custom"
    critval_method: str = "quadrature"
    critval_draws: int = 1_000_000

    def __post_init__(self):
        def bad(name, msg):
            raise ConfigError(f"{name}: {msg}", field=name)

        if self.n1 < 2:
            bad("n1", "must be >= 2")
        if self.sigma <= 0:
            bad("sigma", "must be > 0")
        if not 0 < self.alpha < 1:
            bad("alpha", "must lie in (0, 1)")
        if self.reps < 1:
            bad("reps", "must be >= 1")
        if self.seed < 0:
            bad("seed", "must be >= 0")
        if isinstance(self.rule, NonInferiorityRule) and self.design is not DesignKind.TWO_SAMPLE_BALANCED:
            bad("rule", "noninferiority rule requires design = two_sample")
        if self.margin != 0 and self.design is not DesignKind.TWO_SAMPLE_BALANCED:
            bad("margin", "a non-inferiority margin requires design = two_sample")
        if self.final_test is TestKind.TCOMB and self.design is not DesignKind.ONE_SAMPLE:
            bad("final_test", "tcomb is available for design = one_sample only")
        if self.final_test is TestKind.FISHER and self.side is not Sidedness.ONE_SIDED_UPPER:
            bad("side", "fisher combination needs side = one_sided")
        if self.final_test in _RESAMPLING and self.budget < (100 if self.final_test is TestKind.ROTATION else 1):
            bad("budget", "too small for a resampling test")
        if self.critval_method not in ("mc", "quadrature"):
            bad("critval_method", "must be mc or quadrature")
        if self.final_test is TestKind.STAGE1_T:
            bad("final_test", "stage1_t is a fallback, not a configurable final test")

    @property
    def trial_params(self) -> TrialParams:
        return TrialParams(self.design, self.mu_true, self.sigma, self.n1)

    def rule_name(self) -> str:
        return {ThresholdRule: "threshold", KieserFriedeRule: "kf", NonInferiorityRule: "noninferiority", FixedRule: "fixed"}[type(self.rule)]


@dataclass
class Tally:
    """Integer counts for one final test; sums of tallies are exact."""

    valid: int = 0
    reject: int = 0
    stage2: int = 0
    reject_stage2: int = 0
    n2_sum: int = 0
    degenerate: int = 0

    def __add__(self, other: "Tally") -> "Tally":
        return Tally(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(Tally)))


@dataclass(frozen=True)
class MCEstimate:
    reject_rate: float
    se: float
    p_stage2: float
    reject_given_stage2: float
    reject_given_stage1_only: float
    mean_n2: float
    reps: int
    degenerate_count: int

    @classmethod
    def from_tally(cls, t: Tally) -> "MCEstimate":
        n = t.valid
        rate = t.reject / n if n else float("nan")
        stage1 = n - t.stage2
        return cls(
            reject_rate=rate,
            se=math.sqrt(rate * (1 - rate) / n) if n else float("nan"),
            p_stage2=t.stage2 / n if n else float("nan"),
            reject_given_stage2=t.reject_stage2 / t.stage2 if t.stage2 else float("nan"),
            reject_given_stage1_only=(t.reject - t.reject_stage2) / stage1 if stage1 else float("nan"),
            mean_n2=t.n2_sum / n if n else float("nan"),
            reps=n,
            degenerate_count=t.degenerate,
        )

    def mixture_residual(self) -> float:
        """reject_rate minus its decomposition over the stage-2 event (should be ~0)."""
        p = self.p_stage2
        r2 = self.reject_given_stage2 if p > 0 else 0.0
        r1 = self.reject_given_stage1_only if p < 1 else 0.0
        return self.reject_rate - (p * r2 + (1 - p) * r1)


# ---------------------------------------------------------------------------
# data generation


def _summary_counter(stage: int, k: int) -> int:
    return (stage << 32) + _SUMMARY_OFFSET + k


def _draw_summaries(cfg: ScenarioConfig, reps, stage: int, n) -> StageSummary:
    """Sufficient statistics of one stage for every replicate in ``reps``."""
    n = np.broadcast_to(np.asarray(n, dtype=np.int64), reps.shape)
    nf = n.astype(np.float64)
    means = cfg.trial_params.group_means()
    root = cfg.sigma * np.sqrt(nf)
    sums = []
    for j, m in enumerate(means):
        z = counter_normal(cfg.seed, reps, _summary_counter(stage, j))
        sums.append(nf * m + root * z)
    ng = len(means)
    df = n - 1 if ng == 1 else 2 * n - 2
    w = counter_chisquare(cfg.seed, reps, _summary_counter(stage, ng), df)
    return StageSummary(n, np.stack(sums, axis=-1), cfg.sigma**2 * w)


def _summaries_from_obs(obs, n=None) -> StageSummary:
    """obs: (reps, groups, width); entries at index >= n are ignored."""
    width = obs.shape[-1]
    if n is None:
        n = np.full(obs.shape[0], width, dtype=np.int64)
    mask = np.arange(width)[None, None, :] < n[:, None, None]
    x = np.where(mask, obs, 0.0)
    sums = x.sum(axis=-1)
    nf = np.where(n > 0, n, 1).astype(np.float64)
    dev = np.where(mask, obs - (sums / nf[:, None])[..., None], 0.0)
    return StageSummary(n, sums, (dev * dev).sum(axis=(-1, -2)))


@dataclass
class _Block:
    reps: np.ndarray
    n2: np.ndarray
    s1: StageSummary
    s2: StageSummary
    obs1: Optional[np.ndarray] = None
    obs2: Optional[np.ndarray] = None


def _generate(cfg: ScenarioConfig, reps: np.ndarray, observations: bool) -> _Block:
    params = cfg.trial_params
    if observations:
        obs1 = stage_observations(params, cfg.n1, 1, cfg.seed, reps)
        s1 = _summaries_from_obs(obs1)
    else:
        obs1 = None
        s1 = _draw_summaries(cfg, reps, 1, cfg.n1)
    tss, tvar = blinded_from_summaries(cfg.design, cfg.n1, s1.sums, s1.wss)
    n2 = np.asarray(cfg.rule.n2_from(tss, tvar, cfg.n1, cfg.design), dtype=np.int64)
    if observations:
        obs2 = stage_observations(params, int(n2.max(initial=0)), 2, cfg.seed, reps)
        s2 = _summaries_from_obs(obs2, n2)
    else:
        obs2 = None
        s2 = _draw_summaries(cfg, reps, 2, n2)
    if cfg.margin != 0:
        s1.sums[..., 0] -= cfg.n1 * cfg.margin
        s2.sums[..., 0] -= n2 * cfg.margin
        if observations:
            obs1 = obs1.copy()
            obs1[:, 0, :] -= cfg.margin
            obs2 = obs2.copy()
            obs2[:, 0, :] -= cfg.margin
    return _Block(reps, n2, s1, s2, obs1, obs2)


# ---------------------------------------------------------------------------
# final tests, vectorized over a block


def _per_df(func, df):
    """Evaluate ``func`` once per distinct df value."""
    uniq, inv = np.unique(np.asarray(df), return_inverse=True)
    return np.asarray(func(uniq))[inv.reshape(np.shape(df))]


_tables: dict = {}


def _critval_table(cfg: ScenarioConfig) -> CritTable:
    key = (cfg.critval_method, cfg.critval_draws)
    if key not in _tables:
        _tables[key] = CritTable(cfg.critval_method, draws=cfg.critval_draws)
    return _tables[key]


def _stage1_alone(cfg, blk, side):
    t1, df1 = stage_t_vec(cfg.design, blk.s1)
    crit = _per_df(lambda d: t_critical(cfg.alpha, d, side), df1)
    return t_reject(t1, crit, side), t1


def _sub_summary(s: StageSummary, idx) -> StageSummary:
    return StageSummary(np.asarray(s.n)[idx], s.sums[idx], s.wss[idx])


def _apply_test(cfg: ScenarioConfig, kind: TestKind, blk: _Block):
    """(reject, statistic, degenerate) arrays for one final test."""
    m = blk.reps.size
    if kind is TestKind.UNMODIFIED_T:
        t, df = combined_t_vec(cfg.design, blk.s1, blk.s2)
        crit = _per_df(lambda d: t_critical(cfg.alpha, d, cfg.side), df)
        degenerate = ~np.isfinite(t)
        return t_reject(t, crit, cfg.side) & ~degenerate, t, degenerate

    if kind in (TestKind.FISHER, TestKind.TCOMB):
        reject, stat = _stage1_alone(cfg, blk, cfg.side)
        stat = stat.astype(np.float64).copy()
        has2 = blk.n2 >= 2
        if has2.any():
            s1 = _sub_summary(blk.s1, has2)
            s2 = _sub_summary(blk.s2, has2)
            t1, df1 = stage_t_vec(cfg.design, s1)
            t2, df2 = stage_t_vec(cfg.design, s2)
            if kind is TestKind.FISHER:
                st = fisher_statistic(student_t_sf(t1, df1), student_t_sf(t2, df2))
                rj = st > chisq_quantile(1 - cfg.alpha, 4)
            else:
                n2 = blk.n2[has2]
                st = t_comb_statistic(t1, t2, cfg.n1, n2)
                table = _critval_table(cfg).lookup_many(cfg.n1, n2, cfg.alpha, cfg.side)
                crit = _per_df(lambda v: [table[int(x)] for x in v], n2)
                rj = st > crit if cfg.side is Sidedness.ONE_SIDED_UPPER else np.abs(st) > crit
            reject = reject.copy()
            reject[has2] = rj
            stat[has2] = st
        degenerate = np.isnan(stat)
        return reject & ~degenerate, stat, degenerate

    if kind in _RESAMPLING:
        reject = np.zeros(m, dtype=bool)
        stat = np.zeros(m)
        for i in range(m):
            n2 = int(blk.n2[i])
            data = TrialData(
                StageData(1, tuple(blk.obs1[i])),
                StageData(2, tuple(blk.obs2[i, :, :n2])),
                cfg.trial_params,
            )
            rng = RngStream(cfg.seed, int(blk.reps[i])).at(RESAMPLE_BASE)
            if kind is TestKind.PERMUTATION:
                out = permutation_test(data, cfg.alpha, cfg.side, cfg.budget, rng)
            else:
                out = rotation_test(data, cfg.alpha, cfg.side, cfg.budget, rng)
            reject[i] = out.reject
            stat[i] = out.statistic
        return reject, stat, np.zeros(m, dtype=bool)
    raise DomainError(f"unsupported final test {kind}")


def simulate_block(cfg: ScenarioConfig, reps, tests: Sequence[TestKind] = None, observations: bool = False):
    """Run replicates ``reps`` through the pipeline.

    Returns ``(n2, {test: (reject, statistic, degenerate)})`` with one entry
    per replicate; all tests see the same simulated trials.
    """
    tests = tuple(tests or (cfg.final_test,))
    reps = np.asarray(reps, dtype=np.uint64)
    observations = observations or any(t in _RESAMPLING for t in tests)
    blk = _generate(cfg, reps, observations)
    return blk.n2, {kind: _apply_test(cfg, kind, blk) for kind in tests}


def _tally_range(args):
    cfg, start, stop, tests, observations = args
    n2, results = simulate_block(cfg, np.arange(start, stop, dtype=np.uint64), tests, observations)
    took2 = n2 > 0
    out = {}
    for kind, (reject, _, degenerate) in results.items():
        ok = ~degenerate
        out[kind] = Tally(
            valid=int(ok.sum()),
            reject=int((reject & ok).sum()),
            stage2=int((took2 & ok).sum()),
            reject_stage2=int((reject & took2 & ok).sum()),
            n2_sum=int(n2[ok].sum()),
            degenerate=int(degenerate.sum()),
        )
    return out


def _ranges(reps: int, block_size: int):
    return [(s, min(s + block_size, reps)) for s in range(0, reps, block_size)]


def run_scenario_multi(cfg: ScenarioConfig, tests: Sequence[TestKind], workers: int = 1,
                       block_size: int = BLOCK_SIZE, observations: bool = False) -> dict:
    """MCEstimate per final test, all evaluated on common simulated trials."""
    tests = tuple(tests)
    jobs = [(cfg, a, b, tests, observations) for a, b in _ranges(cfg.reps, block_size)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_tally_range, jobs))
    else:
        parts = [_tally_range(j) for j in jobs]
    totals = {kind: Tally() for kind in tests}
    for part in parts:
        for kind in tests:
            totals[kind] = totals[kind] + part[kind]
    return {kind: MCEstimate.from_tally(totals[kind]) for kind in tests}


def run_scenario(cfg: ScenarioConfig, workers: int = 1, block_size: int = BLOCK_SIZE, observations: bool = False) -> MCEstimate:
    return run_scenario_multi(cfg, (cfg.final_test,), workers, block_size, observations)[cfg.final_test]


def run_replicate(cfg: ScenarioConfig, rep_index: int) -> tuple[bool, int, bool]:
    """(rejected, n2, stage2_taken) for a single replicate."""
    n2, results = simulate_block(cfg, [rep_index])
    reject = results[cfg.final_test][0]
    return bool(reject[0]), int(n2[0]), bool(n2[0] > 0)


def power_curve(cfg: ScenarioConfig, delta_grid: Sequence[float],
                tests: Sequence[TestKind] = (TestKind.UNMODIFIED_T, TestKind.TCOMB, TestKind.FISHER),
                workers: int = 1) -> list:
    """Rows ``(delta_assumed, test, MCEstimate)`` over a grid of assumed effects."""
    if not isinstance(cfg.rule, KieserFriedeRule):
        raise ConfigError("power curves need a kf rule", field="rule")
    if not len(delta_grid):
        raise DomainError("empty delta grid")
    rows = []
    for delta in delta_grid:
        c = replace(cfg, rule=replace(cfg.rule, delta_assumed=float(delta)))
        est = run_scenario_multi(c, tests, workers)
        rows.extend((float(delta), kind, est[kind]) for kind in tests)
    return rows


# ---------------------------------------------------------------------------
# one-sample vs two-sample equivalence


@dataclass(frozen=True)
class EquivalencePair:
    """One-sample stage sizes and two-sample per-group stage sizes to compare.

    ``matched(m1, m2)`` builds the degrees-of-freedom-matched pair: a
    two-sample stage of m per group carries one direction for the group
    difference and 2m - 2 within-group directions (plus a nuisance grand
    mean), which lines up with a one-sample stage 1 of 2 m1 - 1
    observations and a stage 2 of 2 m2.
    """

    one_sample: tuple
    two_sample: tuple

    @classmethod
    def matched(cls, m1: int, m2: int) -> "EquivalencePair":
        return cls((2 * m1 - 1, 2 * m2), (m1, m2))


def ks_bound(n_a: int, n_b: int, level: float = 0.01) -> float:
    c = {0.01: 1.63, 0.05: 1.36, 0.10: 1.22}[level]
    return c * math.sqrt((n_a + n_b) / (n_a * n_b))


def equivalence_check_one_vs_two_sample(pairs: Sequence[EquivalencePair], reps: int, seed: int,
                                        r_squared: Optional[float] = None) -> list:
    """KS distance between final t statistics of paired one- and two-sample designs.

    Without ``r_squared`` stage 2 is always taken (fixed n); with it, both
    designs use the threshold rule on their own blinded sum of squares.
    Returns dicts with keys pair, ks, bound, within_bound.
    """
    rows = []
    for pair in pairs:
        stats_ = []
        for design, (a, b) in ((DesignKind.ONE_SAMPLE, pair.one_sample), (DesignKind.TWO_SAMPLE_BALANCED, pair.two_sample)):
            rule = FixedRule(b) if r_squared is None else ThresholdRule(r_squared, b)
            cfg = ScenarioConfig(design, a, rule, reps=reps, seed=seed if design is DesignKind.ONE_SAMPLE else seed + 1)
            chunks = []
            for lo, hi in _ranges(reps, BLOCK_SIZE):
                _, res = simulate_block(cfg, np.arange(lo, hi, dtype=np.uint64))
                chunks.append(res[TestKind.UNMODIFIED_T][1])
            stats_.append(np.concatenate(chunks))
        ks = float(stats.ks_2samp(stats_[0], stats_[1]).statistic)
        bound = ks_bound(reps, reps)
        rows.append({"pair": pair, "ks": ks, "bound": bound, "within_bound": ks <= bound})
    return rows
