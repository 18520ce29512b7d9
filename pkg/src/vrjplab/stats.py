"""Monte-Carlo estimates, test reports and goodness-of-fit helpers."""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Mapping

import numpy as np
from scipy import stats

__all__ = [
    "McEstimate",
    "TestReport",
    "KS_ALPHA",
    "estimate",
    "ks_1samp",
    "ks_2samp",
    "chi2_homogeneity",
    "substream",
    "replicate_map",
    "fmt_float",
    "jsonable",
]

KS_ALPHA = 1e-3
DEFAULT_CHUNK = 4096


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("an estimate needs at least two samples")

    def within(self, target: float, k: float) -> bool:
        return abs(self.mean - target) <= k * self.stderr

    def __str__(self):
        return f"{self.mean:.6g} ± {self.stderr:.2g} (n={self.n})"


def estimate(samples) -> McEstimate:
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise ValueError("an estimate needs at least two samples")
    return McEstimate(float(x.mean()), float(x.std(ddof=1) / math.sqrt(n)), n)


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def jsonable(v: Any) -> Any:
    if isinstance(v, (np.floating, float)):
        f = float(v)
        return float(fmt_float(f)) if math.isfinite(f) else str(f)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.ndarray):
        return [jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [jsonable(x) for x in v]
    if isinstance(v, Mapping):
        return {str(k): jsonable(x) for k, x in v.items()}
    return v


@dataclass
class TestReport:
    """Pass/fail record of one invariant or distributional check.

    ``statistic`` and ``threshold`` are reported as-is; how they compare is
    decided by whoever builds the report (p-value above alpha, error below a
    tolerance, ...), and ``passed`` records the verdict.
    """

    __test__ = False  # keep pytest from collecting this class

    name: str
    statistic: float
    threshold: float
    passed: bool
    seed: int | None = None
    params: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(jsonable(asdict(self)), sort_keys=False)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.name}: statistic={self.statistic:.6g} threshold={self.threshold:.6g}"


def ks_1samp(samples, cdf: Callable, name: str, alpha: float = KS_ALPHA, **params) -> TestReport:
    res = stats.kstest(np.asarray(samples, dtype=float).ravel(), cdf)
    return TestReport(
        name, float(res.pvalue), alpha, bool(res.pvalue > alpha),
        params=params, details={"ks_statistic": float(res.statistic), "n": int(np.size(samples))},
    )


def ks_2samp(a, b, name: str, alpha: float = KS_ALPHA, **params) -> TestReport:
    res = stats.ks_2samp(np.asarray(a, float).ravel(), np.asarray(b, float).ravel())
    return TestReport(
        name, float(res.pvalue), alpha, bool(res.pvalue > alpha),
        params=params, details={"ks_statistic": float(res.statistic)},
    )


def chi2_homogeneity(counts_a: Mapping, counts_b: Mapping, name: str,
                     alpha: float = KS_ALPHA, min_expected: float = 5.0, **params) -> TestReport:
    """Two-sample chi-square test on categorical counts.

    Cells whose expected count falls below ``min_expected`` in either sample
    are pooled into one residual cell before testing.
    """
    keys = sorted(set(counts_a) | set(counts_b))
    table = np.array([[counts_a.get(k, 0) for k in keys],
                      [counts_b.get(k, 0) for k in keys]], dtype=float)
    totals = table.sum(axis=1, keepdims=True)
    expected = totals * table.sum(axis=0, keepdims=True) / totals.sum()
    small = (expected < min_expected).any(axis=0)
    pooled = table[:, ~small]
    if small.any():
        pooled = np.column_stack([pooled, table[:, small].sum(axis=1)])
    pooled = pooled[:, pooled.sum(axis=0) > 0]
    if pooled.shape[1] < 2:
        # one outcome only: the two laws trivially agree
        return TestReport(name, 1.0, alpha, True, params=params, details={"cells": int(pooled.shape[1])})
    chi2, p, dof, _ = stats.chi2_contingency(pooled, correction=False)
    return TestReport(
        name, float(p), alpha, bool(p > alpha), params=params,
        details={"chi2": float(chi2), "dof": int(dof), "cells": int(pooled.shape[1])},
    )


def _key_int(key: str | int) -> int:
    if isinstance(key, int):
        return key
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")


def substream(seed: int, *keys: str | int) -> np.random.Generator:
    """Generator for the stream ``(seed, *keys)``; independent of call order."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_int(k) for k in keys))
    return np.random.default_rng(ss)


def replicate_map(fn: Callable[[np.random.Generator, int], Any], n: int, seed: int,
                  key: str, threads: int = 1, chunk: int = DEFAULT_CHUNK) -> list:
    """Run ``fn(rng, m)`` over fixed-size chunks of ``n`` replicates.

    Chunk ``i`` always gets ``substream(seed, key, i)`` and results come back
    in chunk order, so the output does not depend on ``threads``.
    """
    if n < 1:
        raise ValueError("need at least one replicate")
    sizes = [min(chunk, n - s) for s in range(0, n, chunk)]
    jobs = [(substream(seed, key, i), m) for i, m in enumerate(sizes)]
    if threads <= 1 or len(jobs) == 1:
        return [fn(r, m) for r, m in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
