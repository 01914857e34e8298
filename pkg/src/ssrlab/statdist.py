"""Distribution primitives and the counter-based random stream.

Every random draw in the package is a pure function of
``(seed, stream_id, counter)``: a SplitMix64-style mixer turns the triple
into 64 random bits, which are mapped to a uniform on the open unit
interval and then through an inverse CDF.  Replicate ``k`` of a simulation
uses ``stream_id = k``, so results never depend on how replicates are
distributed over workers.

CDFs and quantiles are thin, validated wrappers around ``scipy.special``
(regularized incomplete beta/gamma underneath).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

__all__ = [
    "RngStream",
    "NoncentralChisqParams",
    "counter_uniform",
    "counter_normal",
    "counter_chisquare",
    "std_normal_cdf",
    "std_normal_quantile",
    "student_t_cdf",
    "student_t_sf",
    "student_t_quantile",
    "chisq_cdf",
    "chisq_sf",
    "chisq_quantile",
    "sample_std_normal",
    "sample_noncentral_chisq",
]

_M64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_STREAM_SALT = np.uint64(0xD1B54A32D192ED03)
_TWO_M53 = 2.0**-53


def _mix(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _stream_key(seed, stream):
    seed_key = _mix(np.uint64(int(seed) & _M64) + _GOLDEN)
    with np.errstate(over="ignore"):
        return _mix(seed_key ^ _mix(np.asarray(stream, dtype=np.uint64) * _STREAM_SALT + _GOLDEN))


def counter_uniform(seed, stream, counter):
    """Uniform draws on (0, 1) addressed by (seed, stream, counter).

    ``stream`` and ``counter`` broadcast against each other.
    """
    key = _stream_key(seed, stream)
    with np.errstate(over="ignore"):
        bits = _mix(key + (np.asarray(counter, dtype=np.uint64) + np.uint64(1)) * _GOLDEN)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def counter_normal(seed, stream, counter):
    return special.ndtri(counter_uniform(seed, stream, counter))


def counter_chisquare(seed, stream, counter, df):
    """Chi-squared draws by inversion; ``df <= 0`` yields exactly 0."""
    u = counter_uniform(seed, stream, counter)
    df = np.asarray(df, dtype=np.float64)
    df, u = np.broadcast_arrays(df, u)
    out = np.zeros(u.shape)
    # upper-tail inversion; closed forms for df 1 and 2, incomplete gamma otherwise
    one = df == 1
    two = df == 2
    rest = (df > 0) & ~one & ~two
    out[one] = special.ndtri(u[one] / 2.0) ** 2
    out[two] = -2.0 * np.log(u[two])
    out[rest] = special.chdtri(df[rest], u[rest])
    return out


class RngStream:
    """Independent random stream identified by ``(seed, stream_id)``.

    The stream keeps a counter that advances with every draw.  ``at`` returns
    a copy positioned at an absolute counter, which is how callers carve the
    counter space into non-overlapping regions (stage 1, stage 2,
    resampling, ...).
    """

    def __init__(self, seed: int, stream_id: int = 0, counter: int = 0):
        if seed < 0 or stream_id < 0:
            raise DomainError("seed and stream_id must be unsigned")
        self.seed = int(seed) & _M64
        self.stream_id = int(stream_id) & _M64
        self.counter = int(counter)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"

    def at(self, counter: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id, counter)

    def _take(self, size):
        n = int(np.prod(size)) if size is not None else 1
        ctr = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        self.counter += n
        return ctr if size is None else ctr.reshape(size)

    def uniform(self, size=None):
        u = counter_uniform(self.seed, self.stream_id, self._take(size))
        return float(u[0]) if size is None else u

    def normal(self, size=None):
        z = counter_normal(self.seed, self.stream_id, self._take(size))
        return float(z[0]) if size is None else z

    def chisquare(self, df, size=None):
        if np.any(np.asarray(df) < 1):
            raise DomainError(f"chi-squared df must be >= 1, got {df}")
        x = counter_chisquare(self.seed, self.stream_id, self._take(size), df)
        return float(x[0]) if size is None else x

    def bulk(self) -> np.random.Generator:
        """Fast numpy generator for large i.i.d. batches (Philox, keyed by this stream)."""
        key = int(_stream_key(self.seed, self.stream_id + self.counter))
        return np.random.Generator(np.random.Philox(key=[key, self.stream_id]))


@dataclass(frozen=True)
class NoncentralChisqParams:
    df: int = 1
    ncp: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.df < 1 or self.ncp < 0 or self.scale <= 0:
            raise DomainError(f"invalid noncentral chi-squared parameters {self}")


def _check_prob(p, open_interval=True):
    p = np.asarray(p, dtype=np.float64)
    bad = (p <= 0) | (p >= 1) if open_interval else (p < 0) | (p > 1)
    if np.any(bad) or np.any(np.isnan(p)):
        raise DomainError(f"probability out of range: {p}")
    return p


def _check_df(df):
    df = np.asarray(df, dtype=np.float64)
    if np.any(df < 1):
        raise DomainError(f"degrees of freedom must be >= 1, got {df}")
    return df


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def std_normal_cdf(x):
    return _scalar(special.ndtr(x))


def std_normal_quantile(p):
    return _scalar(special.ndtri(_check_prob(p)))


def student_t_cdf(t, df):
    return _scalar(special.stdtr(_check_df(df), t))


def student_t_sf(t, df):
    """Upper tail P(T > t), accurate far into the tail."""
    return _scalar(special.stdtr(_check_df(df), -np.asarray(t, dtype=np.float64)))


def student_t_quantile(p, df):
    return _scalar(special.stdtrit(_check_df(df), _check_prob(p)))


def chisq_cdf(x, df):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise DomainError(f"chi-squared argument must be >= 0, got {x}")
    return _scalar(special.chdtr(_check_df(df), x))


def chisq_sf(x, df):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise DomainError(f"chi-squared argument must be >= 0, got {x}")
    return _scalar(special.chdtrc(_check_df(df), x))


def chisq_quantile(p, df):
    p = _check_prob(p, open_interval=False)
    if np.any(p >= 1):
        raise DomainError("chi-squared quantile at p=1 is infinite")
    return _scalar(2.0 * special.gammaincinv(_check_df(df) / 2.0, p))


def sample_std_normal(rng: RngStream, size=None):
    return rng.normal(size)


def sample_noncentral_chisq(params: NoncentralChisqParams, rng: RngStream, size=None):
    """scale * chi2(df; ncp), with the noncentral part as a shifted-normal square."""
    z = rng.normal(size)
    out = (np.asarray(z) + np.sqrt(params.ncp)) ** 2
    if params.df > 1:
        out = out + rng.chisquare(params.df - 1, size)
    out = params.scale * out
    return float(out) if size is None else out
