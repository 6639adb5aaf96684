"""Paired t-test and Mann-Whitney U with an exact small-sample path."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betainc, ndtr
from scipy.stats import rankdata

from .errors import EmptySample, ZeroVariance

EXACT_MAX_PRODUCT = 400


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: int


def student_t_sf2(t: float, df: int) -> float:
    """Two-sided tail P(|T| >= |t|) via the regularised incomplete beta."""
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def paired_t_test(a, b=None) -> TTestResult:
    """Two-sided paired t-test.  ``b=None`` treats ``a`` as the differences."""
    d = np.asarray(a, dtype=np.float64)
    if b is not None:
        d = d - np.asarray(b, dtype=np.float64)
    n = len(d)
    if n < 2:
        raise ValueError("paired t-test needs at least 2 pairs")
    if np.all(d == d[0]):
        if d[0] == 0:
            return TTestResult(0.0, 1.0, n - 1)
        raise ZeroVariance("all paired differences are equal; t is undefined")
    t = d.mean() / (d.std(ddof=1) / math.sqrt(n))
    return TTestResult(float(t), student_t_sf2(float(t), n - 1), n - 1)


@dataclass(frozen=True)
class MWUResult:
    u: float
    p: float
    exact: bool


def _rank_sum_distribution(doubled_ranks: np.ndarray, k: int) -> dict[int, float]:
    """Probability of each (doubled) rank sum when k of the ranks are drawn
    uniformly without replacement.  Counting DP over items x picks."""
    # ways[j] maps doubled sum -> number of j-subsets
    ways = [dict() for _ in range(k + 1)]
    ways[0][0] = 1
    for r in doubled_ranks:
        r = int(r)
        for j in range(min(k, len(doubled_ranks)), 0, -1):
            prev = ways[j - 1]
            if not prev:
                continue
            cur = ways[j]
            for s, c in prev.items():
                cur[s + r] = cur.get(s + r, 0) + c
    total = math.comb(len(doubled_ranks), k)
    return {s: c / total for s, c in ways[k].items()}


def mann_whitney_u(sample_a, sample_b, exact: bool | None = None) -> MWUResult:
    """U statistic of ``sample_a`` and a two-sided p-value.

    Exact (the permutation distribution of the midrank sum, ties included)
    when ``len(a) * len(b) <= 400`` unless overridden, otherwise the normal
    approximation with tie and continuity corrections.  The exact two-sided
    p is P(|R - E R| >= |r_obs - E R|).
    """
    x = np.asarray(sample_a, dtype=np.float64)
    y = np.asarray(sample_b, dtype=np.float64)
    na, nb = len(x), len(y)
    if na == 0 or nb == 0:
        raise EmptySample("Mann-Whitney U needs two non-empty samples")
    ranks = rankdata(np.concatenate([x, y]))
    r_a = ranks[:na].sum()
    u = r_a - na * (na + 1) / 2.0
    if exact is None:
        exact = na * nb <= EXACT_MAX_PRODUCT
    n = na + nb
    if exact:
        doubled = np.rint(2 * ranks).astype(np.int64)
        dist = _rank_sum_distribution(doubled, na)
        centre2 = na * (n + 1)  # 2 * E[R]
        obs = abs(int(round(2 * r_a)) - centre2)
        p = sum(pr for s, pr in dist.items() if abs(s - centre2) >= obs)
        return MWUResult(float(u), min(1.0, float(p)), True)
    _, counts = np.unique(ranks, return_counts=True)
    tie = (counts ** 3 - counts).sum() / (n * (n - 1)) if n > 1 else 0.0
    var = na * nb / 12.0 * ((n + 1) - tie)
    if var <= 0:
        return MWUResult(float(u), 1.0, False)
    mu = na * nb / 2.0
    z = max(abs(u - mu) - 0.5, 0.0) / math.sqrt(var)
    return MWUResult(float(u), float(min(1.0, 2.0 * ndtr(-z))), False)
