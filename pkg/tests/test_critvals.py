import math
import threading

import numpy as np
import pytest
from scipy import integrate, stats

from ssrlab.critvals import CACHE_ENV, CritKey, CritTable, critval_tcomb, tcomb_cdf
from ssrlab.errors import DomainError
from ssrlab.finaltests import Sidedness
from ssrlab.statdist import std_normal_quantile

UP = Sidedness.ONE_SIDED_UPPER


def _quad_cdf(c, n1, n2):
    # oracle: adaptive integration of the convolution over the T1 density
    w1, w2 = math.sqrt(n1 / (n1 + n2)), math.sqrt(n2 / (n1 + n2))
    f = lambda t: stats.t.pdf(t, n1 - 1) * stats.t.cdf((c - w1 * t) / w2, n2 - 1)  # noqa: E731
    return integrate.quad(f, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12, limit=500)[0]


@pytest.mark.parametrize("n1,n2,c", [(5, 5, 2.0), (2, 50, 1.0), (50, 2, 3.0), (3, 7, -0.5), (30, 400, 1.9)])
def test_cdf_against_adaptive_quadrature(n1, n2, c):
    assert abs(tcomb_cdf(c, n1, n2) - _quad_cdf(c, n1, n2)) < 1e-7


def test_key_validation():
    with pytest.raises(DomainError):
        CritKey(1, 5, 0.05)
    with pytest.raises(DomainError):
        CritKey(5, 5, 1.5)
    with pytest.raises(DomainError):
        critval_tcomb(CritKey(5, 5, 0.05), method="bogus")


def test_normal_limit():
    c = critval_tcomb(CritKey(500, 500, 0.025), "quadrature")
    assert abs(c - 1.95996) < 0.01


def test_symmetric_median():
    assert abs(critval_tcomb(CritKey(6, 6, 0.5), "quadrature")) < 1e-9
    assert abs(critval_tcomb(CritKey(6, 6, 0.5), "mc")) < 0.01


def test_quadrature_vs_mc_1e7():
    q = critval_tcomb(CritKey(5, 5, 0.025), "quadrature")
    m = critval_tcomb(CritKey(5, 5, 0.025), "mc", draws=10_000_000)
    assert abs(q - m) < 0.005
    assert abs(tcomb_cdf(q, 5, 5) - 0.975) < 1e-6


def test_two_sided_uses_half_alpha():
    a = critval_tcomb(CritKey(5, 8, 0.05, Sidedness.TWO_SIDED), "quadrature")
    b = critval_tcomb(CritKey(5, 8, 0.025), "quadrature")
    assert a == pytest.approx(b, abs=1e-10)


def test_monotone_and_continuous_in_alpha():
    alphas = np.linspace(0.005, 0.2, 40)
    cs = np.array([critval_tcomb(CritKey(4, 9, a), "quadrature") for a in alphas])
    assert np.all(np.diff(cs) < 0)
    for a in (0.01, 0.05, 0.1):
        lo = critval_tcomb(CritKey(4, 9, a), "quadrature")
        hi = critval_tcomb(CritKey(4, 9, a + 1e-5), "quadrature")
        assert 0 < lo - hi < 0.01


def test_not_symmetric_in_sizes():
    a = critval_tcomb(CritKey(2, 30, 0.025), "quadrature")
    b = critval_tcomb(CritKey(30, 2, 0.025), "quadrature")
    c = critval_tcomb(CritKey(3, 3, 0.025), "quadrature")
    assert abs(a - b) > 0.01 or c > std_normal_quantile(0.975)


def test_mc_deterministic():
    k = CritKey(3, 4, 0.05)
    assert critval_tcomb(k, "mc", draws=100_000) == critval_tcomb(k, "mc", draws=100_000)
    assert critval_tcomb(k, "mc", draws=100_000) != critval_tcomb(k, "mc", draws=100_000, seed=1)


def test_table_batch_matches_single():
    t = CritTable("quadrature")
    many = t.lookup_many(7, [2, 3, 10, 10, 80], 0.025)
    for n2, v in many.items():
        assert v == pytest.approx(critval_tcomb(CritKey(7, n2, 0.025), "quadrature"), abs=1e-9)


def test_table_file_round_trip(tmp_path):
    path = tmp_path / "cv.txt"
    t = CritTable("mc", draws=50_000, path=path)
    t.lookup(5, 5, 0.025)
    t.lookup(5, 6, 0.025, Sidedness.TWO_SIDED)
    t.save()
    lines = path.read_text().splitlines()
    assert lines[0] == "# ssrlab-critvals v1"
    assert all(len(ln.split(",")) == 6 for ln in lines[1:])
    assert lines[1].startswith("5,5,0.025,one_sided,mc(draws=50000;seed=")
    again = CritTable("mc", draws=50_000, path=path)
    assert again.lookup(5, 5, 0.025) == float(lines[1].split(",")[-1])
    # another provenance does not reuse the cached value
    other = CritTable("quadrature", path=path)
    assert other.lookup(5, 5, 0.025) != again.lookup(5, 5, 0.025)


def test_table_rejects_foreign_file(tmp_path):
    bad = tmp_path / "x.txt"
    bad.write_text("hello\n")
    with pytest.raises(DomainError):
        CritTable("mc", path=bad)


def test_env_var_name():
    assert CACHE_ENV == "SSRLAB_CRITVAL_CACHE"


def test_concurrent_lookups_agree():
    t = CritTable("quadrature")
    out = []

    def work():
        out.append(t.lookup(4, 12, 0.025))

    threads = [threading.Thread(target=work) for _ in range(8)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    assert len(set(out)) == 1
