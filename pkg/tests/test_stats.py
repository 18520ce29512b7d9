import json
from collections import Counter

import numpy as np
import pytest

from vrjplab.stats import (
    TestReport,
    chi2_homogeneity,
    estimate,
    ks_1samp,
    ks_2samp,
    replicate_map,
    substream,
)


def test_estimate():
    est = estimate([1.0, 2.0, 3.0, 4.0])
    assert est.mean == 2.5 and est.n == 4
    assert est.stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
    assert est.within(2.6, 1) and not est.within(5.0, 3)
    with pytest.raises(ValueError):
        estimate([1.0])


def test_report_json_round_trip():
    r = TestReport("x", np.float64(0.25), 1e-3, True, 7, {"n": np.int64(3)}, {"v": np.array([1.0, np.inf])})
    back = json.loads(r.to_json())
    assert back["statistic"] == 0.25 and back["params"]["n"] == 3 and back["details"]["v"] == [1.0, "inf"]
    assert r.line().startswith("[PASS] x")


def test_ks_wrappers(rng):
    x = rng.standard_normal(2000)
    assert ks_1samp(x, "norm", "n").passed
    assert not ks_1samp(x + 1, "norm", "n").passed
    assert ks_2samp(x, rng.standard_normal(2000), "two").passed


def test_chi2_pools_sparse_cells():
    a = Counter({"a": 500, "b": 500, "c": 1})
    b = Counter({"a": 510, "b": 490, "d": 2})
    rep = chi2_homogeneity(a, b, "t")
    assert rep.passed and rep.details["cells"] == 3


def test_chi2_detects_difference():
    assert not chi2_homogeneity({"a": 700, "b": 300}, {"a": 300, "b": 700}, "t").passed


def test_chi2_single_outcome():
    assert chi2_homogeneity({"a": 10}, {"a": 20}, "t").passed


def test_substreams_are_keyed():
    a = substream(1, "x", 0).random(3)
    assert np.array_equal(a, substream(1, "x", 0).random(3))
    assert not np.array_equal(a, substream(1, "x", 1).random(3))
    assert not np.array_equal(a, substream(2, "x", 0).random(3))


@pytest.mark.parametrize("threads", [2, 4])
def test_replicate_map_thread_independent(threads):
    def fn(r, m):
        return r.standard_normal(m)

    one = np.concatenate(replicate_map(fn, 10_000, 5, "k", threads=1, chunk=1000))
    many = np.concatenate(replicate_map(fn, 10_000, 5, "k", threads=threads, chunk=1000))
    np.testing.assert_array_equal(one, many)
    assert one.size == 10_000


def test_replicate_map_rejects_zero():
    with pytest.raises(ValueError):
        replicate_map(lambda r, m: m, 0, 1, "k")
