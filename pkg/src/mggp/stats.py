"""Rank-based comparison machinery: Mann-Whitney U test (exact enumeration
for small samples, tie/continuity-corrected normal approximation otherwise),
Bonferroni adjustment and per-configuration result summaries."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ComparisonResult:
    u_statistic: float
    p_two_sided: float
    verdict: str  # "better" | "worse" | "indifferent"


@dataclass(frozen=True)
class Summary:
    train_median: float
    train_max: float
    train_min: float
    test_median: float
    test_max: float
    test_min: float
    mean_lcf_ratio: float
    mean_depth: float
    runs: int


def _midranks(values: np.ndarray) -> np.ndarray:
    """Fractional ranks (ties get the mean of their rank positions)."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _exact_p(ranks: np.ndarray, n: int, u_obs: float) -> float:
    """Two-sided exact p by enumerating all assignments of n of the pooled
    ranks to the first sample: the fraction of assignments whose U deviates
    from the mean at least as much as the observed U."""
    total_n = len(ranks)
    mean_u = n * (total_n - n) / 2.0
    dev_obs = abs(u_obs - mean_u)
    offset = n * (n + 1) / 2.0
    count = 0
    total = 0
    for combo in itertools.combinations(range(total_n), n):
        u = sum(ranks[i] for i in combo) - offset
        # ranks are multiples of 0.5, so these floats compare exactly
        if abs(u - mean_u) >= dev_obs:
            count += 1
        total += 1
    return count / total


def _normal_p(ranks: np.ndarray, n: int, m: int, u_obs: float) -> float:
    """Two-sided normal approximation with tie and continuity correction."""
    total_n = n + m
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(tie_counts**3 - tie_counts))
    var = n * m / 12.0 * ((total_n + 1) - tie_term / (total_n * (total_n - 1)))
    if var <= 0.0:
        return 1.0
    z = (abs(u_obs - n * m / 2.0) - 0.5) / math.sqrt(var)
    z = max(z, 0.0)
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


def mann_whitney_u(a, b, alpha: float = 0.05, method: str = "auto") -> ComparisonResult:
    """Two-sided Mann-Whitney rank test of samples ``a`` vs ``b``.

    Uses exact enumeration when the pooled size is below 20 and the
    corrected normal approximation otherwise (``method`` can force either).
    The reported U statistic belongs to ``a``; the verdict compares medians
    once ``p <= alpha``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = len(a), len(b)
    if n < 1 or m < 1:
        raise ValueError("both samples must be non-empty")
    if method not in ("auto", "exact", "normal"):
        raise ValueError(f"unknown method {method!r}")
    ranks = _midranks(np.concatenate([a, b]))
    u_a = float(ranks[:n].sum()) - n * (n + 1) / 2.0
    if method == "exact" or (method == "auto" and n + m < 20):
        p = _exact_p(ranks, n, u_a)
    else:
        p = _normal_p(ranks, n, m, u_a)
    if p <= alpha:
        med_a, med_b = float(np.median(a)), float(np.median(b))
        if med_a > med_b:
            verdict = "better"
        elif med_a < med_b:
            verdict = "worse"
        else:
            verdict = "indifferent"
    else:
        verdict = "indifferent"
    return ComparisonResult(u_statistic=u_a, p_two_sided=p, verdict=verdict)


def bonferroni(alpha: float = 0.05, m: int = 1) -> float:
    """Family-wise adjusted significance threshold, ``alpha / m``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return alpha / m


def compare_vs_baseline(cfg_runs, base_runs, alpha: float = 0.05, m: int = 1) -> ComparisonResult:
    """Compare one configuration's scores against the baseline's at the
    Bonferroni-adjusted level ``alpha / m``."""
    return mann_whitney_u(cfg_runs, base_runs, alpha=bonferroni(alpha, m))


def summarize(runs) -> Summary:
    """Aggregate run results (objects with train_r2 / test_r2 / lcf_ratio /
    mean_depth attributes) into the per-configuration table row."""
    runs = list(runs)
    if not runs:
        raise ValueError("need at least one run")
    train = np.array([r.train_r2 for r in runs], dtype=float)
    test = np.array([r.test_r2 for r in runs], dtype=float)
    return Summary(
        train_median=float(np.median(train)),
        train_max=float(train.max()),
        train_min=float(train.min()),
        test_median=float(np.median(test)),
        test_max=float(test.max()),
        test_min=float(test.min()),
        mean_lcf_ratio=float(np.mean([r.lcf_ratio for r in runs])),
        mean_depth=float(np.mean([r.mean_depth for r in runs])),
        runs=len(runs),
    )
