from __future__ import annotations

from math import sqrt
from typing import Dict, List, Sequence

import numpy as np
from scipy.stats import binom, chisquare

from app.engine.core.constants import WILSON_Z
from app.engine.core.models import Params


def wilson_interval(successes: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    """Wilson score interval; (0, 1) when there are no trials."""
    if n <= 0:
        return 0.0, 1.0
    p = successes / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def rate_summary(successes: int, n: int) -> Dict[str, float]:
    lo, hi = wilson_interval(successes, n)
    return {
        "count": successes,
        "n": n,
        "rate": successes / n if n else 0.0,
        "ci_low": lo,
        "ci_high": hi,
    }


def interval_coverage(p: float, n: int, z: float = WILSON_Z) -> float:
    """Exact probability that the Wilson interval of a Binomial(n, p) count contains p."""
    counts = np.arange(n + 1)
    inside = np.array([lo <= p <= hi for lo, hi in (wilson_interval(int(c), n, z) for c in counts)])
    return float(binom.pmf(counts, n, p)[inside].sum())


def binomial_cdf(u: int, r: int, p: float) -> float:
    """P[Binomial(r, p) <= u]"""
    return float(binom.cdf(u, r, p))


def honest_accept_probability(params: Params) -> float:
    return binomial_cdf(params.u, params.r, params.eps.value)


def coin_accept_probability(params: Params) -> float:
    return binomial_cdf(params.u, params.r, 0.5)


def flipped_check_accept_probability(params: Params) -> float:
    """Every check inverted: a round fails unless the noise bit fired."""
    return binomial_cdf(params.u, params.r, 1.0 - params.eps.value)


def sigma(p: float, n: int) -> float:
    return sqrt(p * (1 - p) / n) if n else 0.0


def binomial_likelihood(successes: int, n: int, p: float) -> float:
    return float(binom.pmf(successes, n, p))


def binomial_gof(counts: Sequence[int], r: int, p: float, min_expected: float = 5.0) -> Dict[str, float]:
    """
    Chi-square goodness of fit of a wrong_count histogram against Binomial(r, p).

    Bins whose expected count falls below ``min_expected`` are pooled into
    their neighbours, tails first.
    """
    observed = np.zeros(r + 1, dtype=float)
    for c in counts:
        observed[int(c)] += 1
    n = observed.sum()
    expected = binom.pmf(np.arange(r + 1), r, p) * n

    obs_bins: List[float] = []
    exp_bins: List[float] = []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_bins.append(acc_o)
            exp_bins.append(acc_e)
            acc_o = acc_e = 0.0
    if obs_bins:
        obs_bins[-1] += acc_o
        exp_bins[-1] += acc_e
    if len(obs_bins) < 2:
        return {"statistic": 0.0, "p_value": 1.0, "bins": len(obs_bins)}
    # keep totals equal after pooling
    exp_arr = np.array(exp_bins) * (sum(obs_bins) / sum(exp_bins))
    stat, p_value = chisquare(np.array(obs_bins), exp_arr)
    return {"statistic": float(stat), "p_value": float(p_value), "bins": len(obs_bins)}


def histogram(counts: Sequence[int], r: int) -> List[int]:
    return np.bincount(np.asarray(counts, dtype=int), minlength=r + 1).tolist()
