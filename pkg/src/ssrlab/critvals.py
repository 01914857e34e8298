"""Critical values of the weighted t combination.

Under the null the stage-wise t statistics are independent t(n1-1) and
t(n2-1) variables given the blinded interim statistic, so the critical value
of ``w1 T1 + w2 T2`` depends on (n1, n2) only.  Two independent routes:

* ``mc`` -- empirical quantile of ``draws`` simulated pairs (fixed seed);
* ``quadrature`` -- Gauss-Legendre integration of the convolution in the
  probability scale of T1, solved for the quantile by Newton iteration.
  Vectorized over n2, so whole tables cost about as much as one key.
"""
from __future__ import annotations

import math
import os
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import special

from .errors import DomainError
from .finaltests import Sidedness
from .statdist import RngStream, std_normal_quantile

__all__ = [
    "CritKey",
    "CritTable",
    "critval_tcomb",
    "tcomb_cdf",
    "default_table",
    "CACHE_ENV",
    "MC_SEED",
]

CACHE_ENV = "SSRLAB_CRITVAL_CACHE"
MC_SEED = 20_100_517
TABLE_VERSION = "ssrlab-critvals v1"
QUAD_TOL = 1e-6
_GL_NODES = 512


@dataclass(frozen=True)
class CritKey:
    n1: int
    n2: int
    alpha: float
    side: Sidedness = Sidedness.ONE_SIDED_UPPER

    def __post_init__(self):
        if self.n1 < 2 or self.n2 < 2:
            raise DomainError(f"t_comb needs n1, n2 >= 2, got {self.n1}, {self.n2}")
        if not 0 < self.alpha < 1:
            raise DomainError(f"alpha out of range: {self.alpha}")

    @property
    def upper_level(self) -> float:
        """Probability below the critical value (two-sided splits alpha)."""
        return 1 - self.alpha if self.side is Sidedness.ONE_SIDED_UPPER else 1 - self.alpha / 2


def _weights(n1, n2):
    n1 = np.asarray(n1, dtype=np.float64)
    n2 = np.asarray(n2, dtype=np.float64)
    return np.sqrt(n1 / (n1 + n2)), np.sqrt(n2 / (n1 + n2))


_gl_cache = {}


def _gl(n):
    if n not in _gl_cache:
        x, w = np.polynomial.legendre.leggauss(n)
        _gl_cache[n] = ((x + 1) / 2, w / 2)
    return _gl_cache[n]


class _Convolution:
    """Quadrature setup for w1 T1 + w2 T2, reused across Newton iterations."""

    def __init__(self, n1, n2, nodes=_GL_NODES):
        u, self.wq = _gl(nodes)
        n1, n2 = np.broadcast_arrays(np.asarray(n1, dtype=np.float64), np.asarray(n2, dtype=np.float64))
        # the sum is symmetric in (n1, n2); integrate over the heavier-tailed term
        n1, n2 = np.minimum(n1, n2), np.maximum(n1, n2)
        self.shape = n1.shape
        w1, w2 = _weights(n1, n2)
        df1, inv = np.unique(n1 - 1, return_inverse=True)
        q1 = special.stdtrit(df1[:, None], u)[inv.reshape(n1.shape)]
        self.shift = w1[..., None] * q1
        self.w2 = w2[..., None]
        self.df2 = (n2 - 1)[..., None]
        d2 = self.df2
        self.log_norm = special.gammaln((d2 + 1) / 2) - special.gammaln(d2 / 2) - 0.5 * np.log(d2 * np.pi)

    def __call__(self, c):
        arg = (np.asarray(c, dtype=np.float64)[..., None] - self.shift) / self.w2
        cdf = (special.stdtr(self.df2, arg) * self.wq).sum(axis=-1)
        dens = np.exp(self.log_norm - (self.df2 + 1) / 2 * np.log1p(arg * arg / self.df2))
        pdf = (dens * self.wq).sum(axis=-1) / self.w2[..., 0]
        return cdf, pdf


def tcomb_cdf(c, n1, n2, nodes=_GL_NODES):
    """P(w1 T1 + w2 T2 <= c) by quadrature."""
    return _Convolution(n1, n2, nodes)(c)[0]


def _quadrature_quantile(level, n1, n2):
    conv = _Convolution(n1, n2)
    c = np.full(conv.shape, std_normal_quantile(level))
    for _ in range(60):
        cdf, pdf = conv(c)
        step = np.clip((cdf - level) / pdf, -1.0, 1.0)
        c = c - step
        if np.all(np.abs(step) < 1e-11):
            break
    return c


def _mc_quantile(level, n1, n2, draws, seed):
    rng = RngStream(seed, (int(n1) << 24) + int(n2)).bulk()
    w1, w2 = _weights(n1, n2)
    x = w1 * rng.standard_t(n1 - 1, draws) + w2 * rng.standard_t(n2 - 1, draws)
    k = int(math.ceil(level * draws)) - 1
    return float(np.partition(x, k)[k])


def critval_tcomb(key: CritKey, method: str = "mc", draws: int = 1_000_000, seed: int = MC_SEED) -> float:
    """Critical value c with P(w1 T1 + w2 T2 > c) = alpha (one-sided) or alpha/2 per tail."""
    if method == "mc":
        return _mc_quantile(key.upper_level, key.n1, key.n2, draws, seed)
    if method == "quadrature":
        return float(_quadrature_quantile(key.upper_level, key.n1, key.n2))
    raise DomainError(f"unknown critical-value method {method!r}")


def _side_token(side: Sidedness) -> str:
    return side.value


class CritTable:
    """Cache of t_comb critical values keyed by (CritKey, provenance).

    Reads are lock-free dictionary lookups; new values are computed outside the
    lock and published whole.  ``save`` writes the plain-text table.
    """

    def __init__(self, method: str = "mc", draws: int = 1_000_000, seed: int = MC_SEED, path: Optional[os.PathLike] = None):
        if method not in ("mc", "quadrature"):
            raise DomainError(f"unknown critical-value method {method!r}")
        self.method = method
        self.draws = draws
        self.seed = seed
        self.path = Path(path) if path else None
        self._values: dict = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self.load(self.path)

    @property
    def provenance(self) -> str:
        if self.method == "mc":
            return f"mc(draws={self.draws};seed={self.seed})"
        return f"quadrature(tol={QUAD_TOL:g})"

    def _key(self, n1, n2, alpha, side):
        return (int(n1), int(n2), float(alpha), side, self.provenance)

    def lookup(self, n1: int, n2: int, alpha: float, side: Sidedness = Sidedness.ONE_SIDED_UPPER) -> float:
        k = self._key(n1, n2, alpha, side)
        v = self._values.get(k)
        if v is None:
            v = critval_tcomb(CritKey(int(n1), int(n2), alpha, side), self.method, self.draws, self.seed)
            with self._lock:
                self._values[k] = v
        return v

    def lookup_many(self, n1: int, n2s, alpha: float, side: Sidedness = Sidedness.ONE_SIDED_UPPER) -> dict:
        """Critical values for every distinct n2 in ``n2s``; returns {n2: value}."""
        wanted = sorted({int(v) for v in np.asarray(n2s).ravel() if v >= 2})
        missing = [v for v in wanted if self._key(n1, v, alpha, side) not in self._values]
        if missing and self.method == "quadrature":
            level = CritKey(int(n1), missing[0], alpha, side).upper_level
            vals = _quadrature_quantile(level, np.full(len(missing), n1), np.asarray(missing))
            with self._lock:
                for v, c in zip(missing, vals):
                    self._values[self._key(n1, v, alpha, side)] = float(c)
        return {v: self.lookup(n1, v, alpha, side) for v in wanted}

    def records(self):
        for (n1, n2, alpha, side, prov), value in sorted(self._values.items(), key=lambda kv: (kv[0][4], kv[0][0], kv[0][1], kv[0][2], kv[0][3].value)):
            yield n1, n2, alpha, side, prov, value

    def format_records(self, only_current: bool = False) -> str:
        lines = []
        for n1, n2, alpha, side, prov, value in self.records():
            if only_current and prov != self.provenance:
                continue
            lines.append(f"{n1},{n2},{alpha:.10g},{_side_token(side)},{prov},{value:.10g}")
        return "\n".join(lines) + ("\n" if lines else "")

    def save(self, path: Optional[os.PathLike] = None) -> Path:
        path = Path(path) if path else self.path
        if path is None:
            raise DomainError("no table path given")
        path.write_text(f"# {TABLE_VERSION}\n" + self.format_records(), encoding="utf-8")
        return path

    def load(self, path: os.PathLike) -> None:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or lines[0].strip() != f"# {TABLE_VERSION}":
            raise DomainError(f"{path}: not a {TABLE_VERSION} table")
        with self._lock:
            for ln, line in enumerate(lines[1:], start=2):
                if not line.strip():
                    continue
                fields = line.split(",")
                if len(fields) != 6:
                    raise DomainError(f"{path}:{ln}: expected 6 fields")
                n1, n2, alpha, side, prov, value = fields
                self._values[(int(n1), int(n2), float(alpha), Sidedness(side), prov)] = float(value)


_default: Optional[CritTable] = None


def default_table() -> CritTable:
    """Process-wide table (MC method), backed by the file named in ``$SSRLAB_CRITVAL_CACHE``."""
    global _default
    if _default is None:
        _default = CritTable("mc", path=os.environ.get(CACHE_ENV) or None)
    return _default
